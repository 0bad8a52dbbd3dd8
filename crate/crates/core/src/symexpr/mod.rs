//! Relational symbolic expressions over a hash-consed DAG.

pub mod ops;
mod eval;
mod pool;
mod rel;
mod simplify;

pub use eval::Evaluator;
pub use pool::{ExprId, ExprPool, MemId, MemNode, Node, Side, SymId, SymInfo, SymOrigin};
pub use rel::{
    count_exprs, count_nodes, mk_binop, mk_cmp, mk_extract, mk_ite, mk_sext, mk_unop, mk_zext, RelExpr,
    SymError,
};
pub use simplify::{simplify, ExprCache};

/// Bit-counting operators. Sign-extension instructions are expressed with
/// [`Node::Extract`] and [`Node::SExt`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Clz,
    Ctz,
    Popcnt,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wat::{BinOp, Classification, CmpOp};

    fn secret(pool: &mut ExprPool, label: &str) -> RelExpr {
        pool.arg_symbol(label, 32, Classification::Secret)
    }

    #[test]
    fn padding_index_folds_constants() {
        let mut p = ExprPool::new();
        let h = secret(&mut p, "h1");
        let c2112 = p.rel_const(32, 2112);
        let c1 = p.rel_const(32, 1);
        let inner = mk_binop(&mut p, BinOp::Sub, c1, h).unwrap();
        let e = mk_binop(&mut p, BinOp::Add, c2112, inner).unwrap();
        assert!(!e.is_shared());
        assert_eq!(p.display(e.l), "(2113 - h1_L)");
        assert_eq!(p.display(e.r), "(2113 - h1_R)");
        assert_eq!(count_exprs(&p, e), 5);
    }

    #[test]
    fn secret_minus_itself_is_shared_zero() {
        let mut p = ExprPool::new();
        let h = secret(&mut p, "h1");
        let e = mk_binop(&mut p, BinOp::Sub, h, h).unwrap();
        assert!(e.is_shared());
        assert_eq!(p.as_const(e.l), Some(0));
    }

    #[test]
    fn identities() {
        let mut p = ExprPool::new();
        let x = p.arg_symbol("l1", 32, Classification::Public);
        let zero = p.rel_const(32, 0);
        assert_eq!(mk_binop(&mut p, BinOp::Add, zero, x).unwrap(), x);
        assert_eq!(mk_binop(&mut p, BinOp::Xor, x, x).unwrap(), zero);
        let three = p.rel_const(32, 3);
        let plus = mk_binop(&mut p, BinOp::Add, x, three).unwrap();
        assert_eq!(mk_binop(&mut p, BinOp::Sub, plus, three).unwrap(), x);
        let and0 = mk_binop(&mut p, BinOp::And, x, zero).unwrap();
        assert_eq!(and0, zero);
        let five = p.rel_const(32, 5);
        assert_eq!(count_exprs(&p, five), 1);
    }

    #[test]
    fn width_mismatch() {
        let mut p = ExprPool::new();
        let a = p.rel_const(32, 1);
        let b = p.rel_const(64, 1);
        assert_eq!(
            mk_binop(&mut p, BinOp::Add, a, b),
            Err(SymError::WidthMismatch { left: 32, right: 64 })
        );
    }

    #[test]
    fn eqz_of_comparison_negates() {
        let mut p = ExprPool::new();
        let x = p.arg_symbol("l1", 32, Classification::Public).l;
        let five = p.constant(32, 5);
        let lt = p.cmp(CmpOp::LtS, x, five);
        let z = p.falsy(lt);
        assert_eq!(p.node(z), Node::Cmp { op: CmpOp::GeS, a: x, b: five });
    }

    #[test]
    fn byte_split_and_rejoin() {
        let mut p = ExprPool::new();
        let x = p.arg_symbol("l1", 32, Classification::Public).l;
        let bytes: Vec<ExprId> = (0..4).map(|i| p.extract(8 * i + 7, 8 * i, x)).collect();
        let lo = p.concat(bytes[1], bytes[0]);
        let mid = p.concat(bytes[2], lo);
        let all = p.concat(bytes[3], mid);
        assert_eq!(all, x);
    }

    #[test]
    fn simplify_is_idempotent_and_cache_transparent() {
        let mut p = ExprPool::new();
        let h = secret(&mut p, "h1").l;
        let c = p.constant(32, 7);
        let raw_sub = p.raw(Node::Bin { op: BinOp::Sub, a: h, b: c });
        let raw = p.raw(Node::Bin { op: BinOp::Add, a: raw_sub, b: c });
        let mut warm = ExprCache::new();
        let once = simplify(&mut p, &mut warm, raw);
        assert_eq!(once, h);
        assert_eq!(simplify(&mut p, &mut warm, once), once);
        assert!(warm.hits > 0 || warm.misses > 0);
        let mut cold = ExprCache::disabled();
        assert_eq!(simplify(&mut p, &mut cold, raw), once);
    }
}
