//! Translation of relational expressions into SMT terms.
//!
//! Both projections live in one expression pool with disjoint symbol names
//! (`_L`/`_R` suffixes for per-execution symbols), so a single memoized
//! walk produces the left and right terms and shares every common subterm.

use std::collections::{BTreeSet, HashMap};

use crate::symexpr::{ExprId, ExprPool, MemId, MemNode, Node, Side, SymId, SymOrigin, UnOp};
use crate::symmemory::MemLayout;
use crate::wat::{BinOp, Classification, CmpOp};

use super::term::{BaseRead, BvOp, BvPred, Query, QueryKind, Term, TermId};

pub struct Translator<'a> {
    pool: &'a ExprPool,
    layout: &'a MemLayout,
    q: Query,
    memo: HashMap<ExprId, TermId>,
    reads: HashMap<(MemId, TermId), TermId>,
    syms: BTreeSet<SymId>,
    bases_read: BTreeSet<u32>,
}

fn public_array(base: u32) -> String {
    format!("pub.{base}")
}

fn secret_array(base: u32, side: Side) -> String {
    match side {
        Side::Right => format!("sec.{base}_R"),
        _ => format!("sec.{base}_L"),
    }
}

impl<'a> Translator<'a> {
    pub fn new(pool: &'a ExprPool, layout: &'a MemLayout, kind: QueryKind) -> Self {
        Translator {
            pool,
            layout,
            q: Query::new(kind),
            memo: HashMap::new(),
            reads: HashMap::new(),
            syms: BTreeSet::new(),
            bases_read: BTreeSet::new(),
        }
    }

    pub fn query(&mut self) -> &mut Query {
        &mut self.q
    }

    /// Bitvector term for `e`.
    pub fn bv(&mut self, e: ExprId) -> TermId {
        if let Some(&t) = self.memo.get(&e) {
            return t;
        }
        let pool = self.pool;
        let w = pool.width(e);
        let t = match pool.node(e) {
            Node::Const { value, .. } => self.q.bv(w, value),
            Node::Sym(s) => {
                self.syms.insert(s);
                let info = pool.sym_info(s);
                self.q.var(&info.name, info.width)
            }
            Node::Bin { op, a, b } => {
                let (a, b) = (self.bv(a), self.bv(b));
                self.binop(op, w, a, b)
            }
            Node::Un { op, a } => {
                let a = self.bv(a);
                self.unop(op, w, a)
            }
            Node::Cmp { .. } => {
                let c = self.truthy(e);
                let (one, zero) = (self.q.bv(32, 1), self.q.bv(32, 0));
                self.q.ite(c, one, zero)
            }
            Node::Extract { hi, lo, a } => {
                let a = self.bv(a);
                self.q.extract(hi as u32, lo as u32, a)
            }
            Node::Concat { hi, lo } => {
                let (hi, lo) = (self.bv(hi), self.bv(lo));
                self.q.mk(Term::Concat(hi, lo))
            }
            Node::ZExt { width, a } => {
                let extra = width as u32 - pool.width(a);
                let a = self.bv(a);
                self.q.mk(Term::ZeroExt { extra, a })
            }
            Node::SExt { width, a } => {
                let extra = width as u32 - pool.width(a);
                let a = self.bv(a);
                self.q.mk(Term::SignExt { extra, a })
            }
            Node::Ite { c, t, e: f } => {
                let c = self.truthy(c);
                let (t, f) = (self.bv(t), self.bv(f));
                self.q.ite(c, t, f)
            }
            Node::Load { mem, index } => {
                let i = self.bv(index);
                self.read(mem, i)
            }
        };
        self.memo.insert(e, t);
        t
    }

    /// Boolean term for `e != 0`.
    pub fn truthy(&mut self, e: ExprId) -> TermId {
        match self.pool.node(e) {
            Node::Const { value, .. } => self.q.bool(value != 0),
            Node::Cmp { op, a, b } => {
                let (x, y) = (self.bv(a), self.bv(b));
                self.cmp(op, x, y)
            }
            Node::Bin { op: BinOp::And, a, b } if self.is_boolean(a) && self.is_boolean(b) => {
                let (x, y) = (self.truthy(a), self.truthy(b));
                self.q.and(vec![x, y])
            }
            _ => {
                let x = self.bv(e);
                let z = self.q.bv(self.pool.width(e), 0);
                let eq = self.q.eq(x, z);
                self.q.not(eq)
            }
        }
    }

    fn is_boolean(&self, e: ExprId) -> bool {
        match self.pool.node(e) {
            Node::Cmp { .. } => true,
            Node::Const { value, .. } => value <= 1,
            Node::Bin { op: BinOp::And, a, b } => self.is_boolean(a) && self.is_boolean(b),
            _ => false,
        }
    }

    pub fn assert_truthy(&mut self, e: ExprId) {
        let t = self.truthy(e);
        self.q.assert(t);
    }

    fn cmp(&mut self, op: CmpOp, a: TermId, b: TermId) -> TermId {
        let q = &mut self.q;
        match op {
            CmpOp::Eq => q.eq(a, b),
            CmpOp::Ne => {
                let e = q.eq(a, b);
                q.not(e)
            }
            CmpOp::LtU => q.pred(BvPred::Ult, a, b),
            CmpOp::LeU => q.pred(BvPred::Ule, a, b),
            CmpOp::GtU => q.pred(BvPred::Ult, b, a),
            CmpOp::GeU => q.pred(BvPred::Ule, b, a),
            CmpOp::LtS => q.pred(BvPred::Slt, a, b),
            CmpOp::LeS => q.pred(BvPred::Sle, a, b),
            CmpOp::GtS => q.pred(BvPred::Slt, b, a),
            CmpOp::GeS => q.pred(BvPred::Sle, b, a),
        }
    }

    fn binop(&mut self, op: BinOp, w: u32, a: TermId, b: TermId) -> TermId {
        let q = &mut self.q;
        let shift_mask = |q: &mut Query, b: TermId| {
            let m = q.bv(w, (w - 1) as u64);
            q.bin(BvOp::And, b, m)
        };
        match op {
            BinOp::Add => q.bin(BvOp::Add, a, b),
            BinOp::Sub => q.bin(BvOp::Sub, a, b),
            BinOp::Mul => q.bin(BvOp::Mul, a, b),
            BinOp::DivU => q.bin(BvOp::UDiv, a, b),
            BinOp::RemU => q.bin(BvOp::URem, a, b),
            BinOp::DivS => q.bin(BvOp::SDiv, a, b),
            BinOp::RemS => q.bin(BvOp::SRem, a, b),
            BinOp::And => q.bin(BvOp::And, a, b),
            BinOp::Or => q.bin(BvOp::Or, a, b),
            BinOp::Xor => q.bin(BvOp::Xor, a, b),
            BinOp::Shl | BinOp::ShrU | BinOp::ShrS => {
                let s = shift_mask(q, b);
                let o = match op {
                    BinOp::Shl => BvOp::Shl,
                    BinOp::ShrU => BvOp::LShr,
                    _ => BvOp::AShr,
                };
                q.bin(o, a, s)
            }
            BinOp::Rotl | BinOp::Rotr => {
                // With s masked to [0, w), a shift by w - s of w yields 0.
                let s = shift_mask(q, b);
                let wc = q.bv(w, w as u64);
                let back = q.bin(BvOp::Sub, wc, s);
                let (first, second) = if op == BinOp::Rotl {
                    (BvOp::Shl, BvOp::LShr)
                } else {
                    (BvOp::LShr, BvOp::Shl)
                };
                let x = q.bin(first, a, s);
                let y = q.bin(second, a, back);
                q.bin(BvOp::Or, x, y)
            }
        }
    }

    fn unop(&mut self, op: UnOp, w: u32, a: TermId) -> TermId {
        let q = &mut self.q;
        let bit = |q: &mut Query, i: u32| {
            let b = q.extract(i, i, a);
            let one = q.bv(1, 1);
            q.eq(b, one)
        };
        match op {
            UnOp::Popcnt => {
                let mut acc = q.bv(w, 0);
                for i in 0..w {
                    let b = q.extract(i, i, a);
                    let ext = q.mk(Term::ZeroExt { extra: w - 1, a: b });
                    acc = q.bin(BvOp::Add, acc, ext);
                }
                acc
            }
            UnOp::Clz => {
                let mut acc = q.bv(w, w as u64);
                for i in 0..w {
                    let c = bit(q, i);
                    let v = q.bv(w, (w - 1 - i) as u64);
                    acc = q.ite(c, v, acc);
                }
                acc
            }
            UnOp::Ctz => {
                let mut acc = q.bv(w, w as u64);
                for i in (0..w).rev() {
                    let c = bit(q, i);
                    let v = q.bv(w, i as u64);
                    acc = q.ite(c, v, acc);
                }
                acc
            }
        }
    }

    fn in_secret(&mut self, index: TermId) -> TermId {
        let ranges = self.layout.secret.clone();
        let mut any = Vec::new();
        for (lo, hi) in ranges {
            let (l, h) = (self.q.bv(32, lo), self.q.bv(32, hi));
            let ge = self.q.pred(BvPred::Ule, l, index);
            let le = self.q.pred(BvPred::Ule, index, h);
            any.push(self.q.and(vec![ge, le]));
        }
        self.q.or(any)
    }

    /// Read-over-write expansion of a byte read through a store chain.
    fn read(&mut self, mem: MemId, index: TermId) -> TermId {
        if let Some(&t) = self.reads.get(&(mem, index)) {
            return t;
        }
        let t = match self.pool.mem(mem) {
            MemNode::Store { prev, index: si, value } => {
                let si = self.bv(si);
                let v = self.bv(value);
                let rest = self.read(prev, index);
                let hit = self.q.eq(si, index);
                self.q.ite(hit, v, rest)
            }
            MemNode::Base { base, side } => self.base_read(base, side, index),
        };
        self.reads.insert((mem, index), t);
        t
    }

    fn base_read(&mut self, base: u32, side: Side, index: TermId) -> TermId {
        self.bases_read.insert(base);
        let n = self.q.reads.len();
        let index_var = format!("rd.{n}.i");
        let value_var = format!("rd.{n}.v");
        let pub_arr = self.q.declare_array(&public_array(base), 32, 8);
        let from_pub = self.q.select(pub_arr, index);
        let value = if side != Side::Both && self.layout.has_secrets() {
            let sec = self.q.declare_array(&secret_array(base, side), 32, 8);
            let from_sec = self.q.select(sec, index);
            let c = self.in_secret(index);
            self.q.ite(c, from_sec, from_pub)
        } else {
            from_pub
        };
        let iv = self.q.var(&index_var, 32);
        let vv = self.q.var(&value_var, 8);
        let e1 = self.q.eq(iv, index);
        let e2 = self.q.eq(vv, value);
        self.q.assert(e1);
        self.q.assert(e2);
        self.q.reads.push(BaseRead {
            base,
            side,
            index_var,
            value_var,
        });
        vv
    }

    /// Links the concrete-address byte symbols of every base that was also
    /// read at a symbolic index to the corresponding array cells.
    pub fn finish(mut self, expr_count: usize) -> Query {
        if !self.bases_read.is_empty() {
            let syms: Vec<SymId> = self.syms.iter().copied().collect();
            for s in syms {
                let info = self.pool.sym_info(s);
                let SymOrigin::MemByte { base, addr } = info.origin else {
                    continue;
                };
                if !self.bases_read.contains(&base) {
                    continue;
                }
                let arr_name = if info.class == Classification::Secret {
                    secret_array(base, info.side)
                } else {
                    public_array(base)
                };
                let (name, width) = (info.name.clone(), info.width);
                let arr = self.q.declare_array(&arr_name, 32, 8);
                let a = self.q.bv(32, addr);
                let cell = self.q.select(arr, a);
                let v = self.q.var(&name, width);
                let e = self.q.eq(v, cell);
                self.q.assert(e);
            }
        }
        self.q.expr_count = expr_count;
        self.q
    }
}
