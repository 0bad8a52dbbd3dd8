//! Symbolic machine state. Everything a fork must copy is either small or a
//! persistent structure.

use std::rc::Rc;

use crate::symexpr::{ExprId, RelExpr};
use crate::symmemory::SymMemory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    Block,
    Loop,
    Func,
}

#[derive(Clone, Debug)]
pub struct Label {
    pub kind: LabelKind,
    /// Op index to continue at: the `End` of a block, the first body op of a loop.
    pub target: usize,
    /// Values a branch to this label carries.
    pub arity: usize,
    pub height: usize,
    /// Back edges taken so far (loops only).
    pub iters: u32,
    /// Set while a loop is under invariant analysis.
    pub analysis: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub func: u32,
    pub ip: usize,
    pub locals: Vec<RelExpr>,
    pub labels: Vec<Label>,
}

/// Conjunction of 0/1 conditions, shared between forked states.
#[derive(Clone, Debug, Default)]
pub struct PathCond {
    head: Option<Rc<PcNode>>,
    len: usize,
}

#[derive(Debug)]
struct PcNode {
    cond: ExprId,
    next: Option<Rc<PcNode>>,
}

impl PathCond {
    pub fn push(&mut self, cond: ExprId) {
        self.head = Some(Rc::new(PcNode {
            cond,
            next: self.head.take(),
        }));
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Conjuncts, oldest first.
    pub fn conjuncts(&self) -> Vec<ExprId> {
        let mut out = Vec::with_capacity(self.len);
        let mut n = self.head.as_deref();
        while let Some(node) = n {
            out.push(node.cond);
            n = node.next.as_deref();
        }
        out.reverse();
        out
    }
}

#[derive(Clone, Debug)]
pub struct SymState {
    pub frames: Vec<Frame>,
    pub stack: Vec<RelExpr>,
    pub mem: SymMemory,
    pub globals: Vec<RelExpr>,
    pub pc: PathCond,
    /// Loop entries so far on this path; numbers havoc points for replay.
    pub loop_entries: u32,
    /// Analysis id of a loop whose back edge this state just took.
    pub back_edge: Option<u32>,
    pub steps: u64,
}

impl SymState {
    pub fn frame(&self) -> &Frame {
        self.frames.last().expect("active frame")
    }

    pub fn frame_mut(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("active frame")
    }

    pub fn pop(&mut self) -> RelExpr {
        self.stack.pop().expect("operand stack underflow after validation")
    }

    pub fn push(&mut self, v: RelExpr) {
        self.stack.push(v);
    }

}
