//! Relational values: one expression per modeled execution.

use std::collections::HashSet;

use thiserror::Error;

use crate::wat::{BinOp, Classification, CmpOp};

use super::pool::{ExprId, ExprPool, MemId, MemNode, Side, SymInfo, SymOrigin};
use super::UnOp;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymError {
    #[error("operand widths differ: {left} vs {right}")]
    WidthMismatch { left: u32, right: u32 },
}

/// A pair of expressions, left and right projection. Equal ids mean the value
/// is identical in both executions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RelExpr {
    pub l: ExprId,
    pub r: ExprId,
}

impl RelExpr {
    pub fn shared(e: ExprId) -> Self {
        RelExpr { l: e, r: e }
    }

    pub fn pair(l: ExprId, r: ExprId) -> Self {
        RelExpr { l, r }
    }

    pub fn is_shared(self) -> bool {
        self.l == self.r
    }

    pub fn map(self, mut f: impl FnMut(ExprId) -> ExprId) -> Self {
        if self.is_shared() {
            RelExpr::shared(f(self.l))
        } else {
            RelExpr::pair(f(self.l), f(self.r))
        }
    }

    pub fn zip(self, other: RelExpr, mut f: impl FnMut(ExprId, ExprId) -> ExprId) -> Self {
        if self.is_shared() && other.is_shared() {
            RelExpr::shared(f(self.l, other.l))
        } else {
            RelExpr::pair(f(self.l, other.l), f(self.r, other.r))
        }
    }
}

impl ExprPool {
    pub fn rel_const(&mut self, width: u32, value: u64) -> RelExpr {
        RelExpr::shared(self.constant(width, value))
    }

    pub fn rel_width(&self, e: RelExpr) -> u32 {
        self.width(e.l)
    }

    /// Shared constant if both projections are the same constant.
    pub fn rel_as_const(&self, e: RelExpr) -> Option<u64> {
        if e.is_shared() {
            self.as_const(e.l)
        } else {
            None
        }
    }

    /// Binds an entry-argument symbol: public labels give one shared symbol,
    /// secret labels a `_L`/`_R` pair.
    pub fn arg_symbol(&mut self, label: &str, width: u32, class: Classification) -> RelExpr {
        let origin = SymOrigin::Arg { label: label.to_string() };
        match class {
            Classification::Public => RelExpr::shared(self.sym(SymInfo {
                name: label.to_string(),
                width,
                class,
                side: Side::Both,
                origin,
            })),
            Classification::Secret => {
                let mut side = |side: Side, suffix: &str| {
                    self.sym(SymInfo {
                        name: format!("{label}{suffix}"),
                        width,
                        class,
                        side,
                        origin: origin.clone(),
                    })
                };
                let l = side(Side::Left, "_L");
                let r = side(Side::Right, "_R");
                RelExpr::pair(l, r)
            }
        }
    }

    pub fn display_rel(&self, e: RelExpr) -> String {
        if e.is_shared() {
            self.display(e.l)
        } else {
            format!("⟨{}, {}⟩", self.display(e.l), self.display(e.r))
        }
    }
}

fn same_width(pool: &ExprPool, a: RelExpr, b: RelExpr) -> Result<(), SymError> {
    let (left, right) = (pool.rel_width(a), pool.rel_width(b));
    if left != right {
        return Err(SymError::WidthMismatch { left, right });
    }
    Ok(())
}

/// Applies a binary operator componentwise; Shared operands give a Shared result.
pub fn mk_binop(pool: &mut ExprPool, op: BinOp, a: RelExpr, b: RelExpr) -> Result<RelExpr, SymError> {
    same_width(pool, a, b)?;
    Ok(a.zip(b, |x, y| pool.bin(op, x, y)))
}

pub fn mk_cmp(pool: &mut ExprPool, op: CmpOp, a: RelExpr, b: RelExpr) -> Result<RelExpr, SymError> {
    same_width(pool, a, b)?;
    Ok(a.zip(b, |x, y| pool.cmp(op, x, y)))
}

pub fn mk_unop(pool: &mut ExprPool, op: UnOp, a: RelExpr) -> RelExpr {
    a.map(|x| pool.un(op, x))
}

pub fn mk_extract(pool: &mut ExprPool, hi: u32, lo: u32, a: RelExpr) -> RelExpr {
    a.map(|x| pool.extract(hi, lo, x))
}

pub fn mk_zext(pool: &mut ExprPool, width: u32, a: RelExpr) -> RelExpr {
    a.map(|x| pool.zext(width, x))
}

pub fn mk_sext(pool: &mut ExprPool, width: u32, a: RelExpr) -> RelExpr {
    a.map(|x| pool.sext(width, x))
}

pub fn mk_ite(pool: &mut ExprPool, c: RelExpr, t: RelExpr, e: RelExpr) -> Result<RelExpr, SymError> {
    same_width(pool, t, e)?;
    if c.is_shared() && t.is_shared() && e.is_shared() {
        return Ok(RelExpr::shared(pool.ite(c.l, t.l, e.l)));
    }
    Ok(RelExpr::pair(pool.ite(c.l, t.l, e.l), pool.ite(c.r, t.r, e.r)))
}

/// Number of distinct nodes reachable from the given roots, counting both
/// expression nodes and the store-chain nodes that loads depend on.
pub fn count_nodes(pool: &ExprPool, roots: &[ExprId]) -> usize {
    let mut seen: HashSet<ExprId> = HashSet::new();
    let mut seen_mem: HashSet<MemId> = HashSet::new();
    let mut stack: Vec<ExprId> = roots.to_vec();
    let mut mem_stack: Vec<MemId> = Vec::new();
    loop {
        if let Some(e) = stack.pop() {
            if !seen.insert(e) {
                continue;
            }
            let node = pool.node(e);
            if let super::Node::Load { mem, .. } = node {
                mem_stack.push(mem);
            }
            stack.extend(node.children());
        } else if let Some(m) = mem_stack.pop() {
            if !seen_mem.insert(m) {
                continue;
            }
            if let MemNode::Store { prev, index, value } = pool.mem(m) {
                mem_stack.push(prev);
                stack.push(index);
                stack.push(value);
            }
        } else {
            return seen.len() + seen_mem.len();
        }
    }
}

/// Distinct DAG nodes reachable from both projections of `e`.
pub fn count_exprs(pool: &ExprPool, e: RelExpr) -> usize {
    count_nodes(pool, &[e.l, e.r])
}
