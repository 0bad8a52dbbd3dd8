//! SMT queries over bitvectors and byte arrays, and the backends that decide
//! them.

mod backend;
mod bitblast;
mod config;
mod model;
mod smtlib;
mod term;
mod translate;

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::Serialize;

pub use backend::{Backend, BuiltinBackend, Portfolio, ProcessBackend};
pub use bitblast::solve as solve_builtin;
pub use config::{
    find_on_path, sibling_binary, BackendSpec, ConfigError, SolverConfig, CONFIG_ENV, DEFAULT_QUERY_TIMEOUT,
    DEFAULT_THRESHOLD,
};
pub use model::{parse_answer, parse_model, MalformedModel, Model, SolverAnswer, Status};
pub use smtlib::{parse_bv_literal, parse_script, print_query, read_sexprs, Script, SmtParseError, Sx};
pub use term::{ArrayDecl, ArrayId, BaseRead, BvOp, BvPred, Query, QueryKind, Sort, Term, TermId, VarDecl, VarId};
pub use translate::Translator;

fn instantiate(spec: &BackendSpec) -> Arc<dyn Backend> {
    match spec {
        BackendSpec::Builtin => Arc::new(BuiltinBackend),
        BackendSpec::Command { name, argv } => Arc::new(ProcessBackend::new(name.clone(), argv.clone())),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct SolverStats {
    pub queries: usize,
    pub small: usize,
    pub portfolio: usize,
    pub sat: usize,
    pub unsat: usize,
    pub timeout: usize,
    pub unknown: usize,
    pub error: usize,
    /// Total wall-clock seconds spent waiting on solvers.
    pub time: f64,
}

/// Routes each query by expression count: small ones to one backend, large
/// ones to the racing portfolio.
pub struct Solver {
    pub config: SolverConfig,
    small: Arc<dyn Backend>,
    portfolio: Portfolio,
    pub stats: SolverStats,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Self {
        let small = instantiate(&config.small_backend);
        let portfolio = Portfolio {
            members: config.portfolio.iter().map(instantiate).collect(),
        };
        Solver {
            config,
            small,
            portfolio,
            stats: SolverStats::default(),
        }
    }

    pub fn uses_portfolio(&self, q: &Query) -> bool {
        q.expr_count > self.config.threshold
    }

    pub fn dispatch(&mut self, q: Query) -> SolverAnswer {
        let q = Arc::new(q);
        let timeout = self.config.per_query_timeout;
        let answer = if self.uses_portfolio(&q) {
            self.stats.portfolio += 1;
            self.portfolio.solve(&q, timeout)
        } else {
            self.stats.small += 1;
            self.small.solve(&q, timeout, &Arc::new(AtomicBool::new(false)))
        };
        self.stats.queries += 1;
        self.stats.time += answer.elapsed;
        match answer.status {
            Status::Sat => self.stats.sat += 1,
            Status::Unsat => self.stats.unsat += 1,
            Status::Timeout => self.stats.timeout += 1,
            Status::Unknown => self.stats.unknown += 1,
            Status::Error => self.stats.error += 1,
        }
        log::debug!(
            "{:?} query ({} exprs) -> {:?} by {} in {:.3}s",
            q.kind,
            q.expr_count,
            answer.status,
            answer.responder,
            answer.elapsed
        );
        answer
    }
}
