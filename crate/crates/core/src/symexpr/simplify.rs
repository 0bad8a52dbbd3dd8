//! Rewriting constructors and the memoized `simplify` pass.
//!
//! Every node built through [`ExprPool::mk`] is already in normal form, so
//! `simplify` only does work on nodes interned with [`ExprPool::raw`].

use std::collections::HashMap;

use crate::wat::{BinOp, CmpOp};

use super::ops::{eval_bin, eval_cmp, eval_un, mask, negate_cmp, sign_extend};
use super::pool::{ExprId, ExprPool, MemId, Node};
use super::UnOp;

/// Add/sub chains with more terms than this are left as built.
const LINEAR_TERM_LIMIT: usize = 64;

struct Linear {
    terms: Vec<(ExprId, u64)>,
    constant: u64,
}

impl ExprPool {
    /// Interns `node` after applying the rewrite rules.
    pub fn mk(&mut self, node: Node) -> ExprId {
        match node {
            Node::Const { .. } | Node::Sym(_) | Node::Load { .. } => self.raw(node),
            Node::Bin { op, a, b } => self.bin(op, a, b),
            Node::Un { op, a } => self.un(op, a),
            Node::Cmp { op, a, b } => self.cmp(op, a, b),
            Node::Extract { hi, lo, a } => self.extract(hi as u32, lo as u32, a),
            Node::Concat { hi, lo } => self.concat(hi, lo),
            Node::ZExt { width, a } => self.zext(width as u32, a),
            Node::SExt { width, a } => self.sext(width as u32, a),
            Node::Ite { c, t, e } => self.ite(c, t, e),
        }
    }

    pub fn load(&mut self, mem: MemId, index: ExprId) -> ExprId {
        self.raw(Node::Load { mem, index })
    }

    pub fn bin(&mut self, op: BinOp, a: ExprId, b: ExprId) -> ExprId {
        debug_assert_eq!(self.width(a), self.width(b));
        let w = self.width(a);
        let ones = mask(w);
        let (ca, cb) = (self.as_const(a), self.as_const(b));
        if let (Some(x), Some(y)) = (ca, cb) {
            if let Some(v) = eval_bin(op, w, x, y) {
                return self.constant(w, v);
            }
        }
        // Commutative operators keep a constant on the right and otherwise
        // order operands by id.
        let (a, b, ca, cb) = match op {
            BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor
                if (ca.is_some() && cb.is_none()) || (ca.is_none() == cb.is_none() && a > b) =>
            {
                (b, a, cb, ca)
            }
            _ => (a, b, ca, cb),
        };
        match op {
            BinOp::Add | BinOp::Sub => {
                if let Some(e) = self.linear_normalize(op, a, b) {
                    return e;
                }
            }
            BinOp::Mul => match cb {
                Some(0) => return self.constant(w, 0),
                Some(1) => return a,
                _ => {}
            },
            BinOp::And => {
                if cb == Some(0) {
                    return self.constant(w, 0);
                }
                if cb == Some(ones) || a == b {
                    return a;
                }
            }
            BinOp::Or => {
                if cb == Some(ones) {
                    return self.constant(w, ones);
                }
                if cb == Some(0) || a == b {
                    return a;
                }
            }
            BinOp::Xor => {
                if a == b {
                    return self.constant(w, 0);
                }
                if cb == Some(0) {
                    return a;
                }
            }
            BinOp::Shl | BinOp::ShrS | BinOp::ShrU | BinOp::Rotl | BinOp::Rotr => {
                if cb.map(|s| s % w as u64) == Some(0) {
                    return a;
                }
                if ca == Some(0) && op != BinOp::ShrS {
                    return a;
                }
            }
            BinOp::DivU | BinOp::DivS => {
                if cb == Some(1) {
                    return a;
                }
            }
            BinOp::RemU | BinOp::RemS => {
                if cb == Some(1) {
                    return self.constant(w, 0);
                }
            }
        }
        self.raw(Node::Bin { op, a, b })
    }

    /// Collects `coeff * e` into `acc` as a sum of atoms plus a constant.
    fn linearize(&self, e: ExprId, coeff: u64, w: u32, acc: &mut Linear) -> bool {
        if acc.terms.len() > LINEAR_TERM_LIMIT {
            return false;
        }
        let m = mask(w);
        match self.node(e) {
            Node::Const { value, .. } => {
                acc.constant = acc.constant.wrapping_add(coeff.wrapping_mul(value)) & m;
                true
            }
            Node::Bin { op: BinOp::Add, a, b } => {
                self.linearize(a, coeff, w, acc) && self.linearize(b, coeff, w, acc)
            }
            Node::Bin { op: BinOp::Sub, a, b } => {
                self.linearize(a, coeff, w, acc) && self.linearize(b, coeff.wrapping_neg() & m, w, acc)
            }
            Node::Bin { op: BinOp::Mul, a, b } if self.as_const(b).is_some() => {
                let k = self.as_const(b).unwrap_or(1);
                self.linearize(a, coeff.wrapping_mul(k) & m, w, acc)
            }
            _ => {
                acc.terms.push((e, coeff & m));
                true
            }
        }
    }

    fn linear_of(&self, op: BinOp, a: ExprId, b: ExprId) -> Option<Linear> {
        let w = self.width(a);
        let m = mask(w);
        let mut lin = Linear {
            terms: Vec::new(),
            constant: 0,
        };
        let neg = if op == BinOp::Sub { m } else { 1 };
        if !(self.linearize(a, 1, w, &mut lin) && self.linearize(b, neg, w, &mut lin)) {
            return None;
        }
        lin.terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(ExprId, u64)> = Vec::with_capacity(lin.terms.len());
        for (e, c) in lin.terms {
            match merged.last_mut() {
                Some((last, lc)) if *last == e => *lc = lc.wrapping_add(c) & m,
                _ => merged.push((e, c)),
            }
        }
        merged.retain(|t| t.1 != 0);
        lin.terms = merged;
        Some(lin)
    }

    /// Rebuilds an add/sub chain as `t1 + t2 + ... + c - u1 - u2 - ...`.
    fn linear_normalize(&mut self, op: BinOp, a: ExprId, b: ExprId) -> Option<ExprId> {
        let w = self.width(a);
        let m = mask(w);
        let half = 1u64 << (w - 1);
        let lin = self.linear_of(op, a, b)?;
        let term = |pool: &mut Self, e: ExprId, k: u64| {
            if k == 1 {
                e
            } else {
                let kc = pool.constant(w, k);
                pool.raw(Node::Bin { op: BinOp::Mul, a: e, b: kc })
            }
        };
        let mut acc: Option<ExprId> = None;
        let mut negs = Vec::new();
        for &(e, k) in &lin.terms {
            if k < half {
                let t = term(self, e, k);
                acc = Some(match acc {
                    None => t,
                    Some(x) => self.raw(Node::Bin { op: BinOp::Add, a: x, b: t }),
                });
            } else {
                negs.push((e, k.wrapping_neg() & m));
            }
        }
        if lin.constant != 0 || (acc.is_none() && !negs.is_empty()) || (acc.is_none() && negs.is_empty()) {
            let c = self.constant(w, lin.constant);
            acc = Some(match acc {
                None => c,
                Some(x) if lin.constant != 0 => self.raw(Node::Bin { op: BinOp::Add, a: x, b: c }),
                Some(x) => x,
            });
        }
        let mut acc = acc.unwrap_or_else(|| self.constant(w, 0));
        for (e, k) in negs {
            let t = term(self, e, k);
            acc = self.raw(Node::Bin { op: BinOp::Sub, a: acc, b: t });
        }
        Some(acc)
    }

    pub fn un(&mut self, op: UnOp, a: ExprId) -> ExprId {
        let w = self.width(a);
        if let Some(x) = self.as_const(a) {
            return self.constant(w, eval_un(op, w, x));
        }
        self.raw(Node::Un { op, a })
    }

    pub fn cmp(&mut self, op: CmpOp, a: ExprId, b: ExprId) -> ExprId {
        debug_assert_eq!(self.width(a), self.width(b));
        let w = self.width(a);
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            return self.constant(32, eval_cmp(op, w, x, y) as u64);
        }
        if a == b {
            let v = matches!(op, CmpOp::Eq | CmpOp::LeS | CmpOp::LeU | CmpOp::GeS | CmpOp::GeU);
            return self.constant(32, v as u64);
        }
        if matches!(op, CmpOp::Eq | CmpOp::Ne) {
            // A difference that folds to a constant decides equality.
            if let Some(lin) = self.linear_of(BinOp::Sub, a, b) {
                if lin.terms.is_empty() {
                    let eq = lin.constant == 0;
                    return self.constant(32, (eq == (op == CmpOp::Eq)) as u64);
                }
            }
            let (x, k) = match (self.as_const(a), self.as_const(b)) {
                (Some(k), None) => (b, k),
                (None, Some(k)) => (a, k),
                _ => (a, u64::MAX),
            };
            // (cmp == 0) is the negated comparison, (cmp != 0) the comparison.
            if k == 0 {
                if let Node::Cmp { op: inner, a: ia, b: ib } = self.node(x) {
                    let inner = if op == CmpOp::Eq { negate_cmp(inner) } else { inner };
                    return self.raw(Node::Cmp { op: inner, a: ia, b: ib });
                }
            }
            let (a, b) = if self.as_const(a).is_some() || (self.as_const(b).is_none() && a > b) {
                (b, a)
            } else {
                (a, b)
            };
            return self.raw(Node::Cmp { op, a, b });
        }
        self.raw(Node::Cmp { op, a, b })
    }

    pub fn extract(&mut self, hi: u32, lo: u32, a: ExprId) -> ExprId {
        let w = self.width(a);
        debug_assert!(lo <= hi && hi < w);
        let out_w = hi - lo + 1;
        if lo == 0 && hi == w - 1 {
            return a;
        }
        match self.node(a) {
            Node::Const { value, .. } => return self.constant(out_w, value >> lo),
            Node::Extract { lo: l2, a: inner, .. } => {
                let l2 = l2 as u32;
                return self.extract(hi + l2, lo + l2, inner);
            }
            Node::Concat { hi: x, lo: y } => {
                let wy = self.width(y);
                if hi < wy {
                    return self.extract(hi, lo, y);
                }
                if lo >= wy {
                    return self.extract(hi - wy, lo - wy, x);
                }
            }
            Node::ZExt { a: inner, .. } => {
                let wi = self.width(inner);
                if hi < wi {
                    return self.extract(hi, lo, inner);
                }
                if lo >= wi {
                    return self.constant(out_w, 0);
                }
            }
            Node::SExt { a: inner, .. } => {
                let wi = self.width(inner);
                if hi < wi {
                    return self.extract(hi, lo, inner);
                }
            }
            _ => {}
        }
        self.raw(Node::Extract {
            hi: hi as u8,
            lo: lo as u8,
            a,
        })
    }

    pub fn concat(&mut self, hi: ExprId, lo: ExprId) -> ExprId {
        let (wh, wl) = (self.width(hi), self.width(lo));
        let total = wh + wl;
        debug_assert!(total <= 64);
        match (self.node(hi), self.node(lo)) {
            (Node::Const { value: x, .. }, Node::Const { value: y, .. }) => {
                return self.constant(total, (x << wl) | y);
            }
            (Node::Const { value: 0, .. }, _) => return self.zext(total, lo),
            (Node::Extract { hi: h1, lo: l1, a: x }, Node::Extract { hi: h2, lo: l2, a: y })
                if x == y && l1 as u32 == h2 as u32 + 1 =>
            {
                return self.extract(h1 as u32, l2 as u32, x);
            }
            (Node::Extract { hi: h1, lo: l1, a: x }, Node::Concat { hi: mid, lo: rest }) => {
                if let Node::Extract { hi: h2, lo: l2, a: y } = self.node(mid) {
                    if x == y && l1 as u32 == h2 as u32 + 1 {
                        let merged = self.extract(h1 as u32, l2 as u32, x);
                        return self.concat(merged, rest);
                    }
                }
            }
            _ => {}
        }
        self.raw(Node::Concat { hi, lo })
    }

    pub fn zext(&mut self, width: u32, a: ExprId) -> ExprId {
        let wa = self.width(a);
        if width == wa {
            return a;
        }
        match self.node(a) {
            Node::Const { value, .. } => self.constant(width, value),
            Node::ZExt { a: inner, .. } => self.zext(width, inner),
            _ => self.raw(Node::ZExt {
                width: width as u8,
                a,
            }),
        }
    }

    pub fn sext(&mut self, width: u32, a: ExprId) -> ExprId {
        let wa = self.width(a);
        if width == wa {
            return a;
        }
        match self.node(a) {
            Node::Const { value, .. } => self.constant(width, sign_extend(value, wa, width)),
            Node::SExt { a: inner, .. } => self.sext(width, inner),
            Node::ZExt { a: inner, .. } => {
                // A strictly wider zero-extension has a clear sign bit.
                let inner_w = self.width(inner);
                if inner_w < wa {
                    self.zext(width, inner)
                } else {
                    self.raw(Node::SExt {
                        width: width as u8,
                        a,
                    })
                }
            }
            _ => self.raw(Node::SExt {
                width: width as u8,
                a,
            }),
        }
    }

    pub fn ite(&mut self, c: ExprId, t: ExprId, e: ExprId) -> ExprId {
        if let Some(v) = self.as_const(c) {
            return if v != 0 { t } else { e };
        }
        if t == e {
            return t;
        }
        self.raw(Node::Ite { c, t, e })
    }

    /// Boolean conjunction of two 0/1 i32 values.
    pub fn and_bool(&mut self, a: ExprId, b: ExprId) -> ExprId {
        match (self.as_const(a), self.as_const(b)) {
            (Some(0), _) | (_, Some(0)) => self.constant(32, 0),
            (Some(_), _) => b,
            (_, Some(_)) => a,
            _ => self.bin(BinOp::And, a, b),
        }
    }

    /// `e != 0` as a 0/1 i32 value.
    pub fn truthy(&mut self, e: ExprId) -> ExprId {
        if matches!(self.node(e), Node::Cmp { .. }) {
            return e;
        }
        let z = self.constant(self.width(e), 0);
        self.cmp(CmpOp::Ne, e, z)
    }

    /// `e == 0` as a 0/1 i32 value.
    pub fn falsy(&mut self, e: ExprId) -> ExprId {
        let z = self.constant(self.width(e), 0);
        self.cmp(CmpOp::Eq, e, z)
    }
}

/// Memo table for [`simplify`], keyed on expression id.
#[derive(Debug, Default)]
pub struct ExprCache {
    memo: HashMap<ExprId, ExprId>,
    pub hits: u64,
    pub misses: u64,
    disabled: bool,
}

impl ExprCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// A cache that never stores results.
    pub fn disabled() -> Self {
        ExprCache {
            disabled: true,
            ..Self::default()
        }
    }
}

/// Rebuilds `e` bottom-up through the rewriting constructors until every
/// node is in normal form.
pub fn simplify(pool: &mut ExprPool, cache: &mut ExprCache, e: ExprId) -> ExprId {
    if let Some(&r) = cache.memo.get(&e) {
        cache.hits += 1;
        return r;
    }
    cache.misses += 1;
    let node = pool.node(e);
    let mut s = |x: ExprId| simplify(pool, cache, x);
    let rebuilt = match node {
        Node::Const { .. } | Node::Sym(_) => e,
        Node::Bin { op, a, b } => {
            let (a, b) = (s(a), s(b));
            pool.bin(op, a, b)
        }
        Node::Un { op, a } => {
            let a = s(a);
            pool.un(op, a)
        }
        Node::Cmp { op, a, b } => {
            let (a, b) = (s(a), s(b));
            pool.cmp(op, a, b)
        }
        Node::Extract { hi, lo, a } => {
            let a = s(a);
            pool.extract(hi as u32, lo as u32, a)
        }
        Node::Concat { hi, lo } => {
            let (hi, lo) = (s(hi), s(lo));
            pool.concat(hi, lo)
        }
        Node::ZExt { width, a } => {
            let a = s(a);
            pool.zext(width as u32, a)
        }
        Node::SExt { width, a } => {
            let a = s(a);
            pool.sext(width as u32, a)
        }
        Node::Ite { c, t, e: f } => {
            let (c, t, f) = (s(c), s(t), s(f));
            pool.ite(c, t, f)
        }
        Node::Load { mem, index } => {
            let index = s(index);
            pool.load(mem, index)
        }
    };
    // Normal forms are fixed points; a second pass catches rewrites that
    // only become applicable after the parent was rebuilt.
    let result = if rebuilt != e { simplify(pool, cache, rebuilt) } else { rebuilt };
    if !cache.disabled {
        cache.memo.insert(e, result);
    }
    result
}
