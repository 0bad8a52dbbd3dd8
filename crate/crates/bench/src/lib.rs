//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use wasmct_core::engine::{explore, EngineConfig, Exploration};
use wasmct_core::solver::{BvOp, Query, QueryKind, SolverConfig};
use wasmct_core::symexpr::{ExprId, ExprPool, Node};
use wasmct_core::wat::{parse_module, BinOp, ModuleAst};

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

pub fn load(name: &str) -> ModuleAst {
    let src = std::fs::read_to_string(corpus_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    parse_module(&src).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Explores with the in-process solver only, so timings exclude process spawns.
pub fn run(ast: &ModuleAst, invariants: bool) -> Exploration {
    let cfg = EngineConfig {
        invariants_enabled: invariants,
        ..EngineConfig::default()
    };
    explore(ast, &cfg, SolverConfig::builtin_only()).expect("exploration")
}

/// `((x + 1) + 2) + ... + depth` built without folding, so the simplifier
/// has the whole chain to collapse.
pub fn add_chain(pool: &mut ExprPool, depth: u64) -> ExprId {
    let mut e = pool.fresh_public(32, "x");
    for k in 1..=depth {
        let c = pool.constant(32, k);
        e = pool.raw(Node::Bin { op: BinOp::Add, a: e, b: c });
    }
    e
}

/// Asks for two secrets whose product under `width` bits differs while the
/// inputs satisfy `a * 3 = b * 5`, which keeps the multiplier circuits busy.
pub fn product_query(width: u32) -> Query {
    let mut q = Query::new(QueryKind::BranchDivergence);
    let (al, ar) = (q.var("a_L", width), q.var("a_R", width));
    let (bl, br) = (q.var("b_L", width), q.var("b_R", width));
    let (three, five) = (q.bv(width, 3), q.bv(width, 5));
    for (a, b) in [(al, bl), (ar, br)] {
        let lhs = q.bin(BvOp::Mul, a, three);
        let rhs = q.bin(BvOp::Mul, b, five);
        let eq = q.eq(lhs, rhs);
        q.assert(eq);
    }
    let pl = q.bin(BvOp::Mul, al, bl);
    let pr = q.bin(BvOp::Mul, ar, br);
    let same = q.eq(pl, pr);
    let differ = q.not(same);
    q.assert(differ);
    q
}
