//! Every rewrite must preserve values. Random width-8 trees over two symbols
//! are evaluated by a standalone reference evaluator for all 65536
//! valuations and compared with the simplified DAG.

use proptest::prelude::*;
use wasmct_core::symexpr::{simplify, ExprCache, ExprId, ExprPool, Evaluator, Node, RelExpr, UnOp};
use wasmct_core::wat::{BinOp, Classification, CmpOp};

#[derive(Clone, Debug)]
enum T {
    X,
    Y,
    C(u8),
    Bin(BinOp, Box<T>, Box<T>),
    Cmp(CmpOp, Box<T>, Box<T>),
    Un(UnOp, Box<T>),
    Ite(Box<T>, Box<T>, Box<T>),
    /// High byte of the 16-bit sign extension.
    SextHi(Box<T>),
    /// Bits 11..4 of `a:b`.
    ConcatMid(Box<T>, Box<T>),
    /// Low byte of a 16-bit zero extension.
    ZextLo(Box<T>),
}

fn sx(v: u8) -> i8 {
    v as i8
}

/// Reference semantics, written independently of the library.
fn reference(t: &T, x: u8, y: u8) -> Option<u8> {
    Some(match t {
        T::X => x,
        T::Y => y,
        T::C(c) => *c,
        T::Bin(op, a, b) => {
            let (a, b) = (reference(a, x, y)?, reference(b, x, y)?);
            let s = (b % 8) as u32;
            match op {
                BinOp::Add => a.wrapping_add(b),
                BinOp::Sub => a.wrapping_sub(b),
                BinOp::Mul => a.wrapping_mul(b),
                BinOp::DivU => a.checked_div(b)?,
                BinOp::RemU => a.checked_rem(b)?,
                BinOp::DivS => {
                    if b == 0 || (a == 0x80 && b == 0xff) {
                        return None;
                    }
                    (sx(a) / sx(b)) as u8
                }
                BinOp::RemS => {
                    if b == 0 {
                        return None;
                    }
                    sx(a).wrapping_rem(sx(b)) as u8
                }
                BinOp::And => a & b,
                BinOp::Or => a | b,
                BinOp::Xor => a ^ b,
                BinOp::Shl => a.wrapping_shl(s),
                BinOp::ShrU => a.wrapping_shr(s),
                BinOp::ShrS => (sx(a) >> s) as u8,
                BinOp::Rotl => a.rotate_left(s),
                BinOp::Rotr => a.rotate_right(s),
            }
        }
        T::Cmp(op, a, b) => {
            let (a, b) = (reference(a, x, y)?, reference(b, x, y)?);
            (match op {
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::LtU => a < b,
                CmpOp::LeU => a <= b,
                CmpOp::GtU => a > b,
                CmpOp::GeU => a >= b,
                CmpOp::LtS => sx(a) < sx(b),
                CmpOp::LeS => sx(a) <= sx(b),
                CmpOp::GtS => sx(a) > sx(b),
                CmpOp::GeS => sx(a) >= sx(b),
            }) as u8
        }
        T::Un(op, a) => {
            let a = reference(a, x, y)?;
            match op {
                UnOp::Clz => a.leading_zeros() as u8,
                UnOp::Ctz => a.trailing_zeros() as u8,
                UnOp::Popcnt => a.count_ones() as u8,
            }
        }
        T::Ite(c, a, b) => {
            if reference(c, x, y)? != 0 {
                reference(a, x, y)?
            } else {
                reference(b, x, y)?
            }
        }
        T::SextHi(a) => {
            if reference(a, x, y)? & 0x80 != 0 {
                0xff
            } else {
                0
            }
        }
        T::ConcatMid(a, b) => {
            let v = ((reference(a, x, y)? as u16) << 8) | reference(b, x, y)? as u16;
            (v >> 4) as u8
        }
        T::ZextLo(a) => reference(a, x, y)?,
    })
}

/// Builds the tree in the pool without any rewriting.
fn build(p: &mut ExprPool, t: &T, x: ExprId, y: ExprId) -> ExprId {
    match t {
        T::X => x,
        T::Y => y,
        T::C(c) => p.constant(8, *c as u64),
        T::Bin(op, a, b) => {
            let (a, b) = (build(p, a, x, y), build(p, b, x, y));
            p.raw(Node::Bin { op: *op, a, b })
        }
        T::Cmp(op, a, b) => {
            let (a, b) = (build(p, a, x, y), build(p, b, x, y));
            let c = p.raw(Node::Cmp { op: *op, a, b });
            p.raw(Node::Extract { hi: 7, lo: 0, a: c })
        }
        T::Un(op, a) => {
            let a = build(p, a, x, y);
            p.raw(Node::Un { op: *op, a })
        }
        T::Ite(c, a, b) => {
            let (c, a, b) = (build(p, c, x, y), build(p, a, x, y), build(p, b, x, y));
            p.raw(Node::Ite { c, t: a, e: b })
        }
        T::SextHi(a) => {
            let a = build(p, a, x, y);
            let s = p.raw(Node::SExt { width: 16, a });
            p.raw(Node::Extract { hi: 15, lo: 8, a: s })
        }
        T::ConcatMid(a, b) => {
            let (a, b) = (build(p, a, x, y), build(p, b, x, y));
            let c = p.raw(Node::Concat { hi: a, lo: b });
            p.raw(Node::Extract { hi: 11, lo: 4, a: c })
        }
        T::ZextLo(a) => {
            let a = build(p, a, x, y);
            let z = p.raw(Node::ZExt { width: 16, a });
            p.raw(Node::Extract { hi: 7, lo: 0, a: z })
        }
    }
}

fn tree() -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        3 => Just(T::X),
        3 => Just(T::Y),
        2 => prop_oneof![Just(0u8), Just(1), Just(3), Just(0x7f), Just(0x80), Just(0xff), any::<u8>()].prop_map(T::C),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        let bin = prop::sample::select(vec![
            BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::DivS, BinOp::DivU, BinOp::RemS, BinOp::RemU,
            BinOp::And, BinOp::Or, BinOp::Xor, BinOp::Shl, BinOp::ShrS, BinOp::ShrU, BinOp::Rotl, BinOp::Rotr,
        ]);
        let cmp = prop::sample::select(vec![
            CmpOp::Eq, CmpOp::Ne, CmpOp::LtS, CmpOp::LtU, CmpOp::GtS, CmpOp::GtU,
            CmpOp::LeS, CmpOp::LeU, CmpOp::GeS, CmpOp::GeU,
        ]);
        let un = prop::sample::select(vec![UnOp::Clz, UnOp::Ctz, UnOp::Popcnt]);
        prop_oneof![
            6 => (bin, inner.clone(), inner.clone()).prop_map(|(o, a, b)| T::Bin(o, Box::new(a), Box::new(b))),
            2 => (cmp, inner.clone(), inner.clone()).prop_map(|(o, a, b)| T::Cmp(o, Box::new(a), Box::new(b))),
            1 => (un, inner.clone()).prop_map(|(o, a)| T::Un(o, Box::new(a))),
            1 => (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(c, a, b)| T::Ite(Box::new(c), Box::new(a), Box::new(b))),
            1 => inner.clone().prop_map(|a| T::SextHi(Box::new(a))),
            1 => (inner.clone(), inner.clone()).prop_map(|(a, b)| T::ConcatMid(Box::new(a), Box::new(b))),
            1 => inner.clone().prop_map(|a| T::ZextLo(Box::new(a))),
        ]
    })
}

fn symbols(p: &mut ExprPool) -> (ExprId, ExprId) {
    let x = p.arg_symbol("l1", 8, Classification::Public).l;
    let y = p.arg_symbol("l2", 8, Classification::Public).l;
    (x, y)
}

fn check_exhaustive(t: &T) -> Result<(), TestCaseError> {
    let mut p = ExprPool::new();
    let (x, y) = symbols(&mut p);
    let raw = build(&mut p, t, x, y);
    let simp = simplify(&mut p, &mut ExprCache::new(), raw);
    let xs = p.sym_by_name("l1").unwrap();
    for xv in 0..=255u8 {
        for yv in 0..=255u8 {
            let Some(expected) = reference(t, xv, yv) else { continue };
            let env = move |s| if s == xs { xv as u64 } else { yv as u64 };
            let mut ev = Evaluator::new(&p, &env, &|_, _| 0);
            prop_assert_eq!(
                ev.eval(simp),
                Some(expected as u64),
                "x={} y={} tree={:?} simplified={}",
                xv,
                yv,
                t,
                p.display(simp)
            );
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn rewrites_preserve_value_at_width_8(t in tree()) {
        check_exhaustive(&t)?;
    }

    #[test]
    fn simplify_is_idempotent(t in tree()) {
        let mut p = ExprPool::new();
        let (x, y) = symbols(&mut p);
        let raw = build(&mut p, &t, x, y);
        let once = simplify(&mut p, &mut ExprCache::new(), raw);
        let twice = simplify(&mut p, &mut ExprCache::new(), once);
        prop_assert_eq!(once, twice);
        let cold = simplify(&mut p, &mut ExprCache::disabled(), raw);
        prop_assert_eq!(once, cold);
    }

    #[test]
    fn shared_leaves_stay_shared(t in tree()) {
        // Building the same tree twice over shared leaves must yield one node.
        let mut p = ExprPool::new();
        let (x, y) = symbols(&mut p);
        let l = build(&mut p, &t, x, y);
        let r = build(&mut p, &t, x, y);
        let mut cache = ExprCache::new();
        let e = RelExpr::pair(simplify(&mut p, &mut cache, l), simplify(&mut p, &mut cache, r));
        prop_assert!(e.is_shared());
    }
}

#[test]
fn add_then_subtract_constant_is_identity_at_width_8() {
    let t = T::Bin(BinOp::Sub, Box::new(T::Bin(BinOp::Add, Box::new(T::X), Box::new(T::C(3)))), Box::new(T::C(3)));
    check_exhaustive(&t).unwrap();
    let mut p = ExprPool::new();
    let (x, y) = symbols(&mut p);
    let raw = build(&mut p, &t, x, y);
    assert_eq!(simplify(&mut p, &mut ExprCache::new(), raw), x);
}

#[test]
fn padding_expression_at_width_8() {
    // 2112 + (1 - h) reduced modulo 2^8 is 64 + (1 - h) = 65 - h.
    let t = T::Bin(
        BinOp::Add,
        Box::new(T::C((2112u32 % 256) as u8)),
        Box::new(T::Bin(BinOp::Sub, Box::new(T::C(1)), Box::new(T::X))),
    );
    check_exhaustive(&t).unwrap();
    let mut p = ExprPool::new();
    let (x, y) = symbols(&mut p);
    let raw = build(&mut p, &t, x, y);
    let s = simplify(&mut p, &mut ExprCache::new(), raw);
    assert_eq!(p.display(s), "(65 - l1)");
}
