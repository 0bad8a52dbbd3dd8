//! Concrete evaluation of expressions under a valuation.

use std::collections::HashMap;

use super::ops::{eval_bin, eval_cmp, eval_un, mask, sign_extend};
use super::pool::{ExprId, ExprPool, MemId, MemNode, Node, SymId};

/// Evaluates expressions with symbol values from `env` and base-memory bytes
/// from `base_byte(base_node, addr)`. Results are memoized per evaluator.
pub struct Evaluator<'a> {
    pool: &'a ExprPool,
    env: &'a dyn Fn(SymId) -> u64,
    base_byte: &'a dyn Fn(MemId, u64) -> u64,
    memo: HashMap<ExprId, Option<u64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        pool: &'a ExprPool,
        env: &'a dyn Fn(SymId) -> u64,
        base_byte: &'a dyn Fn(MemId, u64) -> u64,
    ) -> Self {
        Evaluator {
            pool,
            env,
            base_byte,
            memo: HashMap::new(),
        }
    }

    /// `None` when evaluation hits a trapping division.
    pub fn eval(&mut self, e: ExprId) -> Option<u64> {
        if let Some(v) = self.memo.get(&e) {
            return *v;
        }
        let pool = self.pool;
        let w = pool.width(e);
        let v = match pool.node(e) {
            Node::Const { value, .. } => Some(value),
            Node::Sym(s) => Some((self.env)(s) & mask(w)),
            Node::Bin { op, a, b } => {
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                eval_bin(op, w, x, y)
            }
            Node::Un { op, a } => Some(eval_un(op, w, self.eval(a)?)),
            Node::Cmp { op, a, b } => {
                let wa = pool.width(a);
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                Some(eval_cmp(op, wa, x, y) as u64)
            }
            Node::Extract { lo, a, .. } => Some((self.eval(a)? >> lo) & mask(w)),
            Node::Concat { hi, lo } => {
                let wl = pool.width(lo);
                Some((self.eval(hi)? << wl) | self.eval(lo)?)
            }
            Node::ZExt { a, .. } => self.eval(a),
            Node::SExt { a, .. } => Some(sign_extend(self.eval(a)?, pool.width(a), w)),
            Node::Ite { c, t, e: f } => {
                if self.eval(c)? != 0 {
                    self.eval(t)
                } else {
                    self.eval(f)
                }
            }
            Node::Load { mem, index } => {
                let addr = self.eval(index)?;
                self.read(mem, addr)
            }
        };
        self.memo.insert(e, v);
        v
    }

    pub fn read(&mut self, mut mem: MemId, addr: u64) -> Option<u64> {
        loop {
            match self.pool.mem(mem) {
                MemNode::Base { .. } => return Some((self.base_byte)(mem, addr) & 0xff),
                MemNode::Store { prev, index, value } => {
                    if self.eval(index)? == addr {
                        return self.eval(value);
                    }
                    mem = prev;
                }
            }
        }
    }
}
