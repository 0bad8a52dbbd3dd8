//! Loads and stores at concrete indices agree with a flat byte array.

use proptest::prelude::*;
use wasmct_core::symexpr::{Evaluator, ExprPool, RelExpr};
use wasmct_core::symmemory::{mem_load, mem_store, MemLayout, SymMemory};
use wasmct_core::wat::Classification;

#[derive(Clone, Debug)]
enum Op {
    Store { addr: u64, bytes: u32, value: Value },
    Load { addr: u64, bytes: u32, signed: bool },
}

#[derive(Clone, Copy, Debug)]
enum Value {
    Const(u32),
    Var(usize),
}

fn op() -> impl Strategy<Value = Op> {
    let bytes = prop::sample::select(vec![1u32, 2, 4]);
    let value = prop_oneof![any::<u32>().prop_map(Value::Const), (0usize..3).prop_map(Value::Var)];
    prop_oneof![
        (0u64..12, bytes.clone(), value).prop_map(|(addr, bytes, value)| Op::Store { addr, bytes, value }),
        (0u64..12, bytes, any::<bool>()).prop_map(|(addr, bytes, signed)| Op::Load { addr, bytes, signed }),
    ]
}

fn initial_byte(addr: u64) -> u8 {
    (addr * 37 + 11) as u8
}

proptest! {
    #[test]
    fn concrete_programs_match_flat_memory(ops in prop::collection::vec(op(), 1..24), vars in any::<[u32; 3]>()) {
        let mut p = ExprPool::new();
        let layout = MemLayout { size: 65536, secret: vec![(6, 9)] };
        let syms: Vec<RelExpr> = (0..3)
            .map(|k| p.arg_symbol(&format!("l{k}"), 32, Classification::Public))
            .collect();
        let mut mem = SymMemory::initial(&mut p, &layout);
        let mut flat: Vec<u8> = (0..16).map(initial_byte).collect();
        let mut checks = Vec::new();
        for o in &ops {
            match *o {
                Op::Store { addr, bytes, value } => {
                    let idx = p.rel_const(32, addr);
                    let (v, conc) = match value {
                        Value::Const(c) => (p.rel_const(32, c as u64), c),
                        Value::Var(k) => (syms[k], vars[k]),
                    };
                    mem = mem_store(&mut p, mem, idx, v, bytes);
                    for k in 0..bytes as u64 {
                        flat[(addr + k) as usize] = (conc >> (8 * k)) as u8;
                    }
                }
                Op::Load { addr, bytes, signed } => {
                    let idx = p.rel_const(32, addr);
                    let v = mem_load(&mut p, &layout, mem, idx, bytes, signed, 32);
                    let mut raw = 0u64;
                    for k in (0..bytes as u64).rev() {
                        raw = (raw << 8) | flat[(addr + k) as usize] as u64;
                    }
                    let bits = 8 * bytes;
                    let expected = if signed && bits < 32 {
                        (((raw << (64 - bits)) as i64 >> (64 - bits)) as u64) & 0xffff_ffff
                    } else {
                        raw
                    };
                    checks.push((v, expected));
                }
            }
        }
        // The same valuation on both sides: projections must agree too.
        let env = |s| {
            let name = &p.sym_info(s).name;
            if let Some(k) = name.strip_prefix('l') {
                return vars[k.parse::<usize>().unwrap()] as u64;
            }
            let addr: u64 = name.trim_start_matches("m.0.").trim_end_matches("_L").trim_end_matches("_R").parse().unwrap();
            initial_byte(addr) as u64
        };
        let mut ev = Evaluator::new(&p, &env, &|_, _| unreachable!("no symbolic index"));
        for (v, expected) in checks {
            prop_assert_eq!(ev.eval(v.l), Some(expected));
            prop_assert_eq!(ev.eval(v.r), Some(expected));
        }
    }
}
