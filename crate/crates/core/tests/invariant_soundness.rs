//! Generated loop invariants checked against every concrete execution of
//! small loops over one secret byte and a 3-bit public trip count.

use std::collections::{BTreeMap, HashMap};

use wasmct_core::engine::{explore, EngineConfig, Exploration, Slot, Valuation};
use wasmct_core::invariants::LoopInvariant;
use wasmct_core::report::{HeaderVisit, Machine, Trace, DEFAULT_FUEL};
use wasmct_core::solver::SolverConfig;
use wasmct_core::wat::{parse_module, resolve_entry, ModuleAst, SiteId};

const SECRET: u64 = 16;
const PUBLIC: u64 = 32;

/// Loop bodies; `$i` counts up to `$n = p & 7`.
const LOOPS: &[(&str, &str)] = &[
    ("sum", "(local.set $acc (i32.add (local.get $acc) (local.get $s)))"),
    ("public_index", "(drop (i32.load8_u offset=64 (local.get $i)))"),
    ("masked_flag", "(local.set $x (i32.and (local.get $x) (local.get $s)))"),
    ("late_write", "(if (i32.eq (local.get $i) (i32.const 3)) (then (local.set $x (local.get $s))))"),
    ("late_public_write", "(if (i32.eq (local.get $i) (i32.const 2)) (then (local.set $x (i32.const 9))))"),
    ("shift_in_secret", "(local.set $x (local.get $acc)) (local.set $acc (i32.xor (local.get $s) (local.get $i)))"),
    ("byte_store", "(i32.store8 (i32.const 80) (local.get $i))"),
    ("secret_byte_store", "(i32.store8 (i32.const 81) (i32.add (i32.load8_u (i32.const 81)) (local.get $s)))"),
    ("indexed_store", "(i32.store8 offset=96 (local.get $i) (local.get $i))"),
    ("secret_branch", "(if (i32.and (local.get $s) (i32.const 1)) (then (local.set $acc (i32.const 1))))"),
    ("global_counter", "(global.set $g (i32.add (global.get $g) (i32.const 1)))"),
    ("global_secret", "(global.set $g (i32.xor (global.get $g) (local.get $s)))"),
];

fn program(body: &str) -> String {
    format!(
        r#"(module (memory 1)
  (secret (i32.const {SECRET}) (i32.const {SECRET}))
  (public (i32.const {PUBLIC}) (i32.const {PUBLIC}))
  (global $g (mut i32) (i32.const 0))
  (func $f (export "f")
    (local $s i32) (local $n i32) (local $i i32) (local $acc i32) (local $x i32)
    (i32.store (i32.const 80) (i32.const 0))
    (local.set $s (i32.load8_u (i32.const {SECRET})))
    (local.set $n (i32.and (i32.load8_u (i32.const {PUBLIC})) (i32.const 7)))
    (block $done
      (loop $next
        (br_if $done (i32.ge_u (local.get $i) (local.get $n)))
        {body}
        (local.set $i (i32.add (local.get $i) (i32.const 1)))
        (br $next)))))
(symb_exec "f")
"#
    )
}

fn explore_inv(ast: &ModuleAst) -> Exploration {
    let cfg = EngineConfig {
        invariants_enabled: true,
        ..EngineConfig::default()
    };
    explore(ast, &cfg, SolverConfig::builtin_only()).unwrap()
}

fn bytes_of(inv: &LoopInvariant) -> Vec<u64> {
    inv.modified
        .iter()
        .chain(inv.const_bindings.keys())
        .filter_map(|s| match s {
            Slot::Byte(a) => Some(*a),
            _ => None,
        })
        .collect()
}

fn value(v: &HeaderVisit, bytes: &[u64], slot: Slot) -> u64 {
    match slot {
        Slot::Local(i) => v.locals[i as usize],
        Slot::Global(i) => v.globals[i as usize],
        Slot::Byte(a) => v.bytes[bytes.iter().position(|&b| b == a).unwrap()] as u64,
    }
}

/// One trace per (public, secret) input.
fn traces(ast: &ModuleAst, bytes: &[u64]) -> HashMap<(u8, u8), Trace> {
    let (func, _, _) = resolve_entry(ast).unwrap();
    let mut out = HashMap::new();
    for p in 0..8u8 {
        for s in 0..=255u8 {
            let input = Valuation {
                args: vec![],
                memory: BTreeMap::from([(SECRET, s), (PUBLIC, p)]),
                injections: vec![],
            };
            let t = Machine::new(ast, &input, false, DEFAULT_FUEL)
                .record_all()
                .record_headers(bytes.to_vec())
                .run(func, &[]);
            assert!(t.result.is_ok());
            out.insert((p, s), t);
        }
    }
    out
}

fn visits(t: &Trace, site: SiteId) -> impl Iterator<Item = &HeaderVisit> {
    t.headers.iter().filter(move |h| h.site == site)
}

#[test]
fn verified_invariants_hold_on_every_concrete_pair() {
    let mut verified = 0;
    for (name, body) in LOOPS {
        let src = program(body);
        let ast = parse_module(&src).unwrap();
        let ex = explore_inv(&ast);
        let [inv] = ex.invariants.as_slice() else {
            panic!("{name}: {} invariants", ex.invariants.len());
        };
        if !inv.holds() {
            continue;
        }
        verified += 1;
        let bytes = bytes_of(inv);
        let all = traces(&ast, &bytes);
        for p in 0..8u8 {
            for s1 in 0..=255u8 {
                // Pairs whose control flow diverges are outside the relation
                // the invariant describes.
                let a = &all[&(p, s1)];
                for s2 in s1.saturating_add(1)..=255u8 {
                    let b = &all[&(p, s2)];
                    if a.events != b.events {
                        continue;
                    }
                    for (va, vb) in visits(a, inv.loc.id()).zip(visits(b, inv.loc.id())) {
                        for &slot in &inv.public_subset {
                            assert_eq!(
                                value(va, &bytes, slot),
                                value(vb, &bytes, slot),
                                "{name}: {slot} differs for p={p} s={s1}/{s2}"
                            );
                        }
                    }
                }
            }
        }
    }
    assert!(verified >= 8, "only {verified} loops verified");
}

#[test]
fn havoced_state_covers_every_unrolling() {
    // Slots outside the modified set never change at the header, and
    // constant bindings hold at every visit.
    for (name, body) in LOOPS {
        let src = program(body);
        let ast = parse_module(&src).unwrap();
        let ex = explore_inv(&ast);
        let inv = &ex.invariants[0];
        let bytes = bytes_of(inv);
        for t in traces(&ast, &bytes).values() {
            let hs: Vec<_> = visits(t, inv.loc.id()).collect();
            let first = hs[0];
            for h in &hs {
                for i in 0..h.locals.len() as u32 {
                    if !inv.modified.contains(&Slot::Local(i)) {
                        assert_eq!(h.locals[i as usize], first.locals[i as usize], "{name}: lv{i} changed");
                    }
                }
                for i in 0..h.globals.len() as u32 {
                    if !inv.modified.contains(&Slot::Global(i)) {
                        assert_eq!(h.globals[i as usize], first.globals[i as usize], "{name}: gv{i} changed");
                    }
                }
                for (&slot, &c) in inv.const_bindings.iter().filter(|_| inv.holds()) {
                    assert_eq!(value(h, &bytes, slot), c, "{name}: {slot} != {c}");
                }
            }
        }
        if !inv.whole_memory {
            // Every byte the loop can write is in the modified set.
            for t in traces(&ast, &[80, 81, 96, 97, 98, 99, 100, 101, 102, 103]).values() {
                let hs: Vec<_> = visits(t, inv.loc.id()).collect();
                for h in &hs {
                    for (k, &a) in [80u64, 81, 96, 97, 98, 99, 100, 101, 102, 103].iter().enumerate() {
                        if !inv.modified.contains(&Slot::Byte(a)) {
                            assert_eq!(h.bytes[k], hs[0].bytes[k], "{name}: mem[{a}] changed");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn expected_shapes() {
    let inv_of = |name: &str| {
        let body = LOOPS.iter().find(|l| l.0 == name).unwrap().1;
        let ast = parse_module(&program(body)).unwrap();
        let ex = explore_inv(&ast);
        (ex.invariants[0].clone(), ex)
    };
    let (sum, ex) = inv_of("sum");
    assert_eq!(sum.formula(), "{lv2_l = lv2_r}");
    assert!(sum.holds() && ex.completion.is_complete());

    let (flag, _) = inv_of("masked_flag");
    assert_eq!(flag.const_bindings.get(&Slot::Local(4)), Some(&0));

    let (late, _) = inv_of("late_write");
    assert!(late.modified.contains(&Slot::Local(4)), "widening adds the late write");
    assert!(!late.public_subset.contains(&Slot::Local(4)));
    assert!(late.holds());

    let (shift, ex) = inv_of("shift_in_secret");
    assert!(!shift.holds());
    assert_eq!(shift.failed, ["lv4"]);
    assert!(!ex.completion.is_complete());

    let (indexed, _) = inv_of("indexed_store");
    assert!(indexed.whole_memory);

    let (store, _) = inv_of("byte_store");
    assert!(store.public_subset.contains(&Slot::Byte(80)));

    let (branch, ex) = inv_of("secret_branch");
    assert_eq!(ex.violations().count(), 1);
    assert!(branch.holds());
}
