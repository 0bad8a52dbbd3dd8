//! Relational linear memory: one persistent byte-store chain per execution.

use crate::symexpr::{ExprId, ExprPool, MemId, MemNode, Node, RelExpr, Side, SymInfo, SymOrigin};
use crate::wat::{BinOp, Classification, CmpOp, ModuleAst};

/// Memory size and secret byte ranges, fixed for a whole analysis.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemLayout {
    pub size: u64,
    /// Inclusive secret byte ranges.
    pub secret: Vec<(u64, u64)>,
}

impl MemLayout {
    pub fn from_module(ast: &ModuleAst) -> Self {
        MemLayout {
            size: ast.memory_size(),
            secret: ast.secret_ranges().map(|(a, b)| (a as u64, b as u64)).collect(),
        }
    }

    pub fn is_secret(&self, addr: u64) -> bool {
        self.secret.iter().any(|&(a, b)| addr >= a && addr <= b)
    }

    pub fn has_secrets(&self) -> bool {
        !self.secret.is_empty()
    }

    pub fn in_bounds(&self, addr: u64, bytes: u32) -> bool {
        addr.checked_add(bytes as u64).is_some_and(|end| end <= self.size)
    }
}

/// Name of the initial-content symbol of byte `addr` of base `base`.
pub fn byte_symbol_name(base: u32, addr: u64, side: Side) -> String {
    match side {
        Side::Both => format!("m.{base}.{addr}"),
        Side::Left => format!("m.{base}.{addr}_L"),
        Side::Right => format!("m.{base}.{addr}_R"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SymMemory {
    pub l: MemId,
    pub r: MemId,
}

impl SymMemory {
    /// A memory whose every byte is an unconstrained symbol: public bytes
    /// shared between the executions, secret bytes distinct per execution.
    pub fn fresh(pool: &mut ExprPool, layout: &MemLayout, base: u32) -> Self {
        if layout.has_secrets() {
            SymMemory {
                l: pool.mem_node(MemNode::Base { base, side: Side::Left }),
                r: pool.mem_node(MemNode::Base { base, side: Side::Right }),
            }
        } else {
            let m = pool.mem_node(MemNode::Base { base, side: Side::Both });
            SymMemory { l: m, r: m }
        }
    }

    pub fn initial(pool: &mut ExprPool, layout: &MemLayout) -> Self {
        Self::fresh(pool, layout, 0)
    }

    pub fn is_shared(self) -> bool {
        self.l == self.r
    }

    pub fn depth(self, pool: &ExprPool) -> u32 {
        pool.mem_depth(self.l).max(pool.mem_depth(self.r))
    }
}

/// Initial content of byte `addr` in base node `base_node`.
pub fn base_byte(pool: &mut ExprPool, layout: &MemLayout, base_node: MemId, addr: u64) -> ExprId {
    let MemNode::Base { base, side } = pool.mem(base_node) else {
        unreachable!("base_byte on a store node")
    };
    let (side, class) = if layout.is_secret(addr) {
        (side, Classification::Secret)
    } else {
        (Side::Both, Classification::Public)
    };
    pool.sym(SymInfo {
        name: byte_symbol_name(base, addr, side),
        width: 8,
        class,
        side,
        origin: SymOrigin::MemByte { base, addr },
    })
}

/// Resolves a byte read by walking the chain newest-first. Stores whose index
/// provably differs from `index` are skipped; the walk stops at the first
/// store that cannot be decided without a solver.
pub fn read_byte(pool: &mut ExprPool, layout: &MemLayout, chain: MemId, index: ExprId) -> ExprId {
    let mut node = chain;
    loop {
        match pool.mem(node) {
            MemNode::Store { prev, index: si, value } => {
                if si == index {
                    return value;
                }
                let eq = pool.cmp(CmpOp::Eq, si, index);
                match pool.as_const(eq) {
                    Some(0) => node = prev,
                    Some(_) => return value,
                    None => return pool.load(node, index),
                }
            }
            MemNode::Base { .. } => {
                return match pool.as_const(index) {
                    Some(addr) => base_byte(pool, layout, node, addr),
                    None => pool.load(node, index),
                };
            }
        }
    }
}

fn offset(pool: &mut ExprPool, index: ExprId, k: u32) -> ExprId {
    if k == 0 {
        return index;
    }
    let c = pool.constant(32, k as u64);
    pool.bin(BinOp::Add, index, c)
}

/// Stores the low `bytes` bytes of `value` little-endian at `index`.
pub fn mem_store(pool: &mut ExprPool, m: SymMemory, index: RelExpr, value: RelExpr, bytes: u32) -> SymMemory {
    let side = |pool: &mut ExprPool, mut chain: MemId, idx: ExprId, val: ExprId| {
        for k in 0..bytes {
            let i = offset(pool, idx, k);
            let v = pool.extract(8 * k + 7, 8 * k, val);
            chain = pool.mem_node(MemNode::Store { prev: chain, index: i, value: v });
        }
        chain
    };
    let l = side(pool, m.l, index.l, value.l);
    if m.is_shared() && index.is_shared() && value.is_shared() {
        return SymMemory { l, r: l };
    }
    let r = side(pool, m.r, index.r, value.r);
    SymMemory { l, r }
}

/// Reads `bytes` bytes little-endian at `index` and extends them to
/// `target_width` bits.
pub fn mem_load(
    pool: &mut ExprPool,
    layout: &MemLayout,
    m: SymMemory,
    index: RelExpr,
    bytes: u32,
    signed: bool,
    target_width: u32,
) -> RelExpr {
    let side = |pool: &mut ExprPool, chain: MemId, idx: ExprId| {
        let mut acc = None;
        for k in 0..bytes {
            let i = offset(pool, idx, k);
            let b = read_byte(pool, layout, chain, i);
            acc = Some(match acc {
                None => b,
                Some(lower) => pool.concat(b, lower),
            });
        }
        let v = acc.expect("load of at least one byte");
        if signed {
            pool.sext(target_width, v)
        } else {
            pool.zext(target_width, v)
        }
    };
    let l = side(pool, m.l, index.l);
    if m.is_shared() && index.is_shared() {
        return RelExpr::shared(l);
    }
    let r = side(pool, m.r, index.r);
    RelExpr::pair(l, r)
}

/// True if `e` contains a load from a memory chain.
pub fn has_symbolic_load(pool: &ExprPool, e: ExprId) -> bool {
    let mut stack = vec![e];
    let mut seen = std::collections::HashSet::new();
    while let Some(x) = stack.pop() {
        if !seen.insert(x) {
            continue;
        }
        let n = pool.node(x);
        if matches!(n, Node::Load { .. }) {
            return true;
        }
        stack.extend(n.children());
    }
    false
}
