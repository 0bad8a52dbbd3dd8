//! Hash-consed SMT term graph for one query.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sort {
    Bool,
    Bv(u32),
}

impl Sort {
    pub fn bv_width(self) -> u32 {
        match self {
            Sort::Bv(w) => w,
            Sort::Bool => panic!("expected a bitvector sort"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BvOp {
    Add,
    Sub,
    Mul,
    UDiv,
    URem,
    SDiv,
    SRem,
    And,
    Or,
    Xor,
    Shl,
    LShr,
    AShr,
}

impl BvOp {
    pub fn smt_name(self) -> &'static str {
        match self {
            BvOp::Add => "bvadd",
            BvOp::Sub => "bvsub",
            BvOp::Mul => "bvmul",
            BvOp::UDiv => "bvudiv",
            BvOp::URem => "bvurem",
            BvOp::SDiv => "bvsdiv",
            BvOp::SRem => "bvsrem",
            BvOp::And => "bvand",
            BvOp::Or => "bvor",
            BvOp::Xor => "bvxor",
            BvOp::Shl => "bvshl",
            BvOp::LShr => "bvlshr",
            BvOp::AShr => "bvashr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BvPred {
    Ult,
    Ule,
    Slt,
    Sle,
}

impl BvPred {
    pub fn smt_name(self) -> &'static str {
        match self {
            BvPred::Ult => "bvult",
            BvPred::Ule => "bvule",
            BvPred::Slt => "bvslt",
            BvPred::Sle => "bvsle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArrayId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    BoolConst(bool),
    Not(TermId),
    And(Vec<TermId>),
    Or(Vec<TermId>),
    /// Equality over two terms of the same sort.
    Eq(TermId, TermId),
    Pred(BvPred, TermId, TermId),
    BvConst { width: u32, value: u64 },
    Var(VarId),
    Select { array: ArrayId, index: TermId },
    Bin(BvOp, TermId, TermId),
    BvNot(TermId),
    Extract { hi: u32, lo: u32, a: TermId },
    Concat(TermId, TermId),
    ZeroExt { extra: u32, a: TermId },
    SignExt { extra: u32, a: TermId },
    Ite(TermId, TermId, TermId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    pub index_width: u32,
    pub elem_width: u32,
}

/// What a query asks, for statistics and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    MemIndexDivergence,
    BranchDivergence,
    PolicyProbe,
    InvariantAssert,
    Feasibility,
}

/// A symbolic-index read from an initial memory, named so a model pins down
/// the byte it observed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseRead {
    pub base: u32,
    pub side: crate::symexpr::Side,
    pub index_var: String,
    pub value_var: String,
}

#[derive(Clone, Debug)]
pub struct Query {
    terms: Vec<(Term, Sort)>,
    index: HashMap<Term, TermId>,
    pub vars: Vec<VarDecl>,
    var_index: HashMap<String, VarId>,
    pub arrays: Vec<ArrayDecl>,
    array_index: HashMap<String, ArrayId>,
    pub assertions: Vec<TermId>,
    pub reads: Vec<BaseRead>,
    pub kind: QueryKind,
    pub expr_count: usize,
}

impl Query {
    pub fn new(kind: QueryKind) -> Self {
        Query {
            terms: Vec::new(),
            index: HashMap::new(),
            vars: Vec::new(),
            var_index: HashMap::new(),
            arrays: Vec::new(),
            array_index: HashMap::new(),
            assertions: Vec::new(),
            reads: Vec::new(),
            kind,
            expr_count: 0,
        }
    }

    pub fn term(&self, t: TermId) -> &Term {
        &self.terms[t.0 as usize].0
    }

    pub fn sort(&self, t: TermId) -> Sort {
        self.terms[t.0 as usize].1
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn var_decl(&self, v: VarId) -> &VarDecl {
        &self.vars[v.0 as usize]
    }

    pub fn array_decl(&self, a: ArrayId) -> &ArrayDecl {
        &self.arrays[a.0 as usize]
    }

    pub fn lookup_var(&self, name: &str) -> Option<VarId> {
        self.var_index.get(name).copied()
    }

    pub fn lookup_array(&self, name: &str) -> Option<ArrayId> {
        self.array_index.get(name).copied()
    }

    pub fn declare_var(&mut self, name: &str, sort: Sort) -> VarId {
        if let Some(&v) = self.var_index.get(name) {
            return v;
        }
        let v = VarId(self.vars.len() as u32);
        self.vars.push(VarDecl {
            name: name.to_string(),
            sort,
        });
        self.var_index.insert(name.to_string(), v);
        v
    }

    pub fn declare_array(&mut self, name: &str, index_width: u32, elem_width: u32) -> ArrayId {
        if let Some(&a) = self.array_index.get(name) {
            return a;
        }
        let a = ArrayId(self.arrays.len() as u32);
        self.arrays.push(ArrayDecl {
            name: name.to_string(),
            index_width,
            elem_width,
        });
        self.array_index.insert(name.to_string(), a);
        a
    }

    pub fn var(&mut self, name: &str, width: u32) -> TermId {
        let v = self.declare_var(name, Sort::Bv(width));
        self.mk(Term::Var(v))
    }

    pub fn bv(&mut self, width: u32, value: u64) -> TermId {
        self.mk(Term::BvConst {
            width,
            value: value & crate::symexpr::ops::mask(width),
        })
    }

    pub fn bool(&mut self, b: bool) -> TermId {
        self.mk(Term::BoolConst(b))
    }

    fn infer(&self, t: &Term) -> Sort {
        match t {
            Term::BoolConst(_)
            | Term::Not(_)
            | Term::And(_)
            | Term::Or(_)
            | Term::Eq(..)
            | Term::Pred(..) => Sort::Bool,
            Term::BvConst { width, .. } => Sort::Bv(*width),
            Term::Var(v) => self.var_decl(*v).sort,
            Term::Select { array, .. } => Sort::Bv(self.array_decl(*array).elem_width),
            Term::Bin(_, a, _) | Term::BvNot(a) => self.sort(*a),
            Term::Extract { hi, lo, .. } => Sort::Bv(hi - lo + 1),
            Term::Concat(a, b) => Sort::Bv(self.sort(*a).bv_width() + self.sort(*b).bv_width()),
            Term::ZeroExt { extra, a } | Term::SignExt { extra, a } => Sort::Bv(self.sort(*a).bv_width() + extra),
            Term::Ite(_, t, _) => self.sort(*t),
        }
    }

    pub fn mk(&mut self, t: Term) -> TermId {
        if let Some(&id) = self.index.get(&t) {
            return id;
        }
        let sort = self.infer(&t);
        let id = TermId(self.terms.len() as u32);
        self.terms.push((t.clone(), sort));
        self.index.insert(t, id);
        id
    }

    pub fn not(&mut self, a: TermId) -> TermId {
        match *self.term(a) {
            Term::BoolConst(b) => self.bool(!b),
            Term::Not(x) => x,
            _ => self.mk(Term::Not(a)),
        }
    }

    pub fn and(&mut self, items: Vec<TermId>) -> TermId {
        let mut out = Vec::with_capacity(items.len());
        for t in items {
            match self.term(t) {
                Term::BoolConst(true) => {}
                Term::BoolConst(false) => return self.bool(false),
                _ => out.push(t),
            }
        }
        match out.len() {
            0 => self.bool(true),
            1 => out[0],
            _ => self.mk(Term::And(out)),
        }
    }

    pub fn or(&mut self, items: Vec<TermId>) -> TermId {
        let mut out = Vec::with_capacity(items.len());
        for t in items {
            match self.term(t) {
                Term::BoolConst(false) => {}
                Term::BoolConst(true) => return self.bool(true),
                _ => out.push(t),
            }
        }
        match out.len() {
            0 => self.bool(false),
            1 => out[0],
            _ => self.mk(Term::Or(out)),
        }
    }

    pub fn eq(&mut self, a: TermId, b: TermId) -> TermId {
        if a == b {
            return self.bool(true);
        }
        self.mk(Term::Eq(a, b))
    }

    pub fn bin(&mut self, op: BvOp, a: TermId, b: TermId) -> TermId {
        self.mk(Term::Bin(op, a, b))
    }

    pub fn pred(&mut self, p: BvPred, a: TermId, b: TermId) -> TermId {
        self.mk(Term::Pred(p, a, b))
    }

    pub fn ite(&mut self, c: TermId, t: TermId, e: TermId) -> TermId {
        match self.term(c) {
            Term::BoolConst(true) => return t,
            Term::BoolConst(false) => return e,
            _ => {}
        }
        if t == e {
            return t;
        }
        self.mk(Term::Ite(c, t, e))
    }

    pub fn extract(&mut self, hi: u32, lo: u32, a: TermId) -> TermId {
        if lo == 0 && hi + 1 == self.sort(a).bv_width() {
            return a;
        }
        self.mk(Term::Extract { hi, lo, a })
    }

    pub fn select(&mut self, array: ArrayId, index: TermId) -> TermId {
        self.mk(Term::Select { array, index })
    }

    pub fn assert(&mut self, t: TermId) {
        debug_assert_eq!(self.sort(t), Sort::Bool);
        self.assertions.push(t);
    }
}
