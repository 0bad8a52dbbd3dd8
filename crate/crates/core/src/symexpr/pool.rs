//! Hash-consed expression arena.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::wat::{BinOp, Classification, CmpOp};

use super::UnOp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemId(pub u32);

/// Which of the two modeled executions a symbol or memory base belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Both,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SymOrigin {
    /// Symbolic entry argument.
    Arg { label: String },
    /// Initial content of byte `addr` of memory base `base`.
    MemByte { base: u32, addr: u64 },
    /// Fresh value introduced by loop havoc.
    Havoc { tag: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymInfo {
    /// Name used in solver queries and models.
    pub name: String,
    pub width: u32,
    pub class: Classification,
    pub side: Side,
    pub origin: SymOrigin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const { width: u8, value: u64 },
    Sym(SymId),
    Bin { op: BinOp, a: ExprId, b: ExprId },
    Un { op: UnOp, a: ExprId },
    /// Comparison producing an i32 0 or 1.
    Cmp { op: CmpOp, a: ExprId, b: ExprId },
    Extract { hi: u8, lo: u8, a: ExprId },
    Concat { hi: ExprId, lo: ExprId },
    ZExt { width: u8, a: ExprId },
    SExt { width: u8, a: ExprId },
    /// `c != 0 ? t : e`.
    Ite { c: ExprId, t: ExprId, e: ExprId },
    /// One byte read from a memory chain.
    Load { mem: MemId, index: ExprId },
}

impl Node {
    pub fn children(&self) -> impl Iterator<Item = ExprId> {
        let (a, b, c) = match *self {
            Node::Const { .. } | Node::Sym(_) => (None, None, None),
            Node::Bin { a, b, .. } | Node::Cmp { a, b, .. } => (Some(a), Some(b), None),
            Node::Concat { hi, lo } => (Some(hi), Some(lo), None),
            Node::Un { a, .. } | Node::Extract { a, .. } | Node::ZExt { a, .. } | Node::SExt { a, .. } => {
                (Some(a), None, None)
            }
            Node::Ite { c, t, e } => (Some(c), Some(t), Some(e)),
            Node::Load { index, .. } => (Some(index), None, None),
        };
        a.into_iter().chain(b).chain(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MemNode {
    Base { base: u32, side: Side },
    /// Single-byte store.
    Store { prev: MemId, index: ExprId, value: ExprId },
}

#[derive(Default)]
pub struct ExprPool {
    nodes: Vec<(Node, u8)>,
    index: HashMap<Node, ExprId>,
    syms: Vec<SymInfo>,
    sym_names: HashMap<String, SymId>,
    mems: Vec<MemNode>,
    mem_index: HashMap<MemNode, MemId>,
    mem_depth: Vec<u32>,
    fresh: u32,
    bases: u32,
}

impl ExprPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, e: ExprId) -> Node {
        self.nodes[e.0 as usize].0
    }

    pub fn width(&self, e: ExprId) -> u32 {
        self.nodes[e.0 as usize].1 as u32
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn as_const(&self, e: ExprId) -> Option<u64> {
        match self.node(e) {
            Node::Const { value, .. } => Some(value),
            _ => None,
        }
    }

    /// Interns `node` without any rewriting.
    pub fn raw(&mut self, node: Node) -> ExprId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let width = self.node_width(&node);
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push((node, width as u8));
        self.index.insert(node, id);
        id
    }

    fn node_width(&self, node: &Node) -> u32 {
        match *node {
            Node::Const { width, .. } | Node::ZExt { width, .. } | Node::SExt { width, .. } => width as u32,
            Node::Sym(s) => self.syms[s.0 as usize].width,
            Node::Bin { a, .. } | Node::Un { a, .. } => self.width(a),
            Node::Cmp { .. } => 32,
            Node::Extract { hi, lo, .. } => (hi - lo + 1) as u32,
            Node::Concat { hi, lo } => self.width(hi) + self.width(lo),
            Node::Ite { t, .. } => self.width(t),
            Node::Load { .. } => 8,
        }
    }

    pub fn constant(&mut self, width: u32, value: u64) -> ExprId {
        self.raw(Node::Const {
            width: width as u8,
            value: value & super::ops::mask(width),
        })
    }

    pub fn sym_info(&self, s: SymId) -> &SymInfo {
        &self.syms[s.0 as usize]
    }

    pub fn symbols(&self) -> impl Iterator<Item = (SymId, &SymInfo)> {
        self.syms.iter().enumerate().map(|(i, s)| (SymId(i as u32), s))
    }

    pub fn sym_by_name(&self, name: &str) -> Option<SymId> {
        self.sym_names.get(name).copied()
    }

    /// Declares a symbol, or returns the existing one with the same name.
    pub fn declare(&mut self, info: SymInfo) -> SymId {
        if let Some(&id) = self.sym_names.get(&info.name) {
            return id;
        }
        let id = SymId(self.syms.len() as u32);
        self.sym_names.insert(info.name.clone(), id);
        self.syms.push(info);
        id
    }

    pub fn sym(&mut self, info: SymInfo) -> ExprId {
        let s = self.declare(info);
        self.raw(Node::Sym(s))
    }

    /// A fresh public symbol shared by both executions.
    pub fn fresh_public(&mut self, width: u32, tag: &str) -> ExprId {
        let n = self.bump_fresh();
        self.sym(SymInfo {
            name: format!("{tag}.{n}"),
            width,
            class: Classification::Public,
            side: Side::Both,
            origin: SymOrigin::Havoc { tag: tag.to_string() },
        })
    }

    /// Two distinct fresh symbols, one per execution.
    pub fn fresh_pair(&mut self, width: u32, tag: &str) -> (ExprId, ExprId) {
        let n = self.bump_fresh();
        let mut mk = |side: Side, suffix: &str| {
            self.sym(SymInfo {
                name: format!("{tag}.{n}{suffix}"),
                width,
                class: Classification::Secret,
                side,
                origin: SymOrigin::Havoc { tag: tag.to_string() },
            })
        };
        let l = mk(Side::Left, "_L");
        let r = mk(Side::Right, "_R");
        (l, r)
    }

    pub fn bump_fresh(&mut self) -> u32 {
        self.fresh += 1;
        self.fresh
    }

    /// Allocates the number of a new memory base (0 is the initial memory).
    pub fn fresh_base(&mut self) -> u32 {
        self.bases += 1;
        self.bases
    }

    pub fn mem(&self, m: MemId) -> MemNode {
        self.mems[m.0 as usize]
    }

    /// Number of stores between `m` and its base.
    pub fn mem_depth(&self, m: MemId) -> u32 {
        self.mem_depth[m.0 as usize]
    }

    pub fn mem_node(&mut self, node: MemNode) -> MemId {
        if let Some(&id) = self.mem_index.get(&node) {
            return id;
        }
        let depth = match node {
            MemNode::Base { .. } => 0,
            MemNode::Store { prev, .. } => self.mem_depth(prev) + 1,
        };
        let id = MemId(self.mems.len() as u32);
        self.mems.push(node);
        self.mem_depth.push(depth);
        self.mem_index.insert(node, id);
        id
    }

    /// The base node at the root of a store chain.
    pub fn mem_base(&self, mut m: MemId) -> (u32, Side) {
        loop {
            match self.mem(m) {
                MemNode::Base { base, side } => return (base, side),
                MemNode::Store { prev, .. } => m = prev,
            }
        }
    }

    /// Renders an expression in a compact infix form for reports and logs.
    pub fn display(&self, e: ExprId) -> String {
        let mut out = String::new();
        self.fmt_into(e, &mut out, 0);
        out
    }

    fn fmt_into(&self, e: ExprId, out: &mut String, depth: usize) {
        use std::fmt::Write;
        if depth > 24 || out.len() > 400 {
            out.push('…');
            return;
        }
        match self.node(e) {
            Node::Const { value, .. } => {
                let _ = write!(out, "{value}");
            }
            Node::Sym(s) => out.push_str(&self.sym_info(s).name),
            Node::Bin { op, a, b } => {
                out.push('(');
                self.fmt_into(a, out, depth + 1);
                let _ = write!(out, " {} ", bin_symbol(op));
                self.fmt_into(b, out, depth + 1);
                out.push(')');
            }
            Node::Cmp { op, a, b } => {
                out.push('(');
                self.fmt_into(a, out, depth + 1);
                let _ = write!(out, " {} ", cmp_symbol(op));
                self.fmt_into(b, out, depth + 1);
                out.push(')');
            }
            Node::Un { op, a } => {
                let _ = write!(out, "{op:?}(");
                self.fmt_into(a, out, depth + 1);
                out.push(')');
            }
            Node::Extract { hi, lo, a } => {
                self.fmt_into(a, out, depth + 1);
                let _ = write!(out, "[{hi}:{lo}]");
            }
            Node::Concat { hi, lo } => {
                out.push_str("concat(");
                self.fmt_into(hi, out, depth + 1);
                out.push_str(", ");
                self.fmt_into(lo, out, depth + 1);
                out.push(')');
            }
            Node::ZExt { width, a } => {
                let _ = write!(out, "zext{width}(");
                self.fmt_into(a, out, depth + 1);
                out.push(')');
            }
            Node::SExt { width, a } => {
                let _ = write!(out, "sext{width}(");
                self.fmt_into(a, out, depth + 1);
                out.push(')');
            }
            Node::Ite { c, t, e } => {
                out.push_str("ite(");
                self.fmt_into(c, out, depth + 1);
                out.push_str(", ");
                self.fmt_into(t, out, depth + 1);
                out.push_str(", ");
                self.fmt_into(e, out, depth + 1);
                out.push(')');
            }
            Node::Load { mem, index } => {
                let (base, _) = self.mem_base(mem);
                let _ = write!(out, "load(m{base}+{}, ", self.mem_depth(mem));
                self.fmt_into(index, out, depth + 1);
                out.push(')');
            }
        }
    }
}

fn bin_symbol(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::DivS => "/s",
        BinOp::DivU => "/u",
        BinOp::RemS => "%s",
        BinOp::RemU => "%u",
        BinOp::And => "&",
        BinOp::Or => "|",
        BinOp::Xor => "^",
        BinOp::Shl => "<<",
        BinOp::ShrS => ">>s",
        BinOp::ShrU => ">>u",
        BinOp::Rotl => "rotl",
        BinOp::Rotr => "rotr",
    }
}

fn cmp_symbol(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "==",
        CmpOp::Ne => "!=",
        CmpOp::LtS => "<s",
        CmpOp::LtU => "<u",
        CmpOp::GtS => ">s",
        CmpOp::GtU => ">u",
        CmpOp::LeS => "<=s",
        CmpOp::LeU => "<=u",
        CmpOp::GeS => ">=s",
        CmpOp::GeU => ">=u",
    }
}
