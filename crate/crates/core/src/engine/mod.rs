//! Relational symbolic execution: depth-first exploration of two paired
//! executions with constant-time checks at every memory access and every
//! control-flow decision.

mod checks;
mod code;
mod exec;
mod state;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::invariants::LoopInvariant;
use crate::solver::{Solver, SolverConfig, SolverStats};
use crate::symexpr::{ExprCache, ExprPool, RelExpr, SymId};
use crate::symmemory::{MemLayout, SymMemory};
use crate::wat::{self, ArgSpec, FrontendError, ModuleAst, SiteId};

pub use code::{Code, Op};
pub use state::{Frame, Label, LabelKind, PathCond, SymState};

pub(crate) use exec::Succ;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityPolicy {
    /// Query the solver before following a fork with a symbolic condition.
    AtBranch,
    /// Follow every fork whose condition is not a constant.
    Never,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Back edges allowed per loop per path; also the recursion depth cap.
    pub unroll_limit: u32,
    pub path_limit: u64,
    pub time_budget: Duration,
    pub select_unsafe: bool,
    pub invariants_enabled: bool,
    pub portfolio_threshold: usize,
    pub feasibility: FeasibilityPolicy,
    /// Memoize simplification results across checks.
    pub memoize: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            unroll_limit: 512,
            path_limit: 1_000_000,
            time_budget: Duration::from_secs(5400),
            select_unsafe: false,
            invariants_enabled: false,
            portfolio_threshold: crate::solver::DEFAULT_THRESHOLD,
            feasibility: FeasibilityPolicy::AtBranch,
            memoize: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.unroll_limit < 1 {
            return Err(EngineError::Config("unroll limit must be at least 1".into()));
        }
        if self.portfolio_threshold < 1 {
            return Err(EngineError::Config("portfolio threshold must be at least 1".into()));
        }
        if self.path_limit < 1 {
            return Err(EngineError::Config("path limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("policy error: {0}")]
    Policy(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CheckKind {
    MemoryIndex,
    Branch,
    BrTable,
    CallIndirect,
    Select,
}

/// Ordered by severity, so aggregation keeps the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerdictKind {
    Safe,
    PathInfeasible,
    Unknown,
    Trap,
    Violation,
}

/// An instruction occurrence with its source location.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub func: u32,
    pub instr: u32,
    pub function: String,
    pub op: String,
    pub line: u32,
    pub col: u32,
}

impl Site {
    pub fn id(&self) -> SiteId {
        SiteId {
            func: self.func,
            instr: self.instr,
        }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {} in {}", self.line, self.col, self.op, self.function)
    }
}

/// A state slot: local of the loop's frame, global, or memory byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Slot {
    Local(u32),
    Global(u32),
    Byte(u64),
}

impl std::fmt::Display for Slot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Slot::Local(i) => write!(f, "lv{i}"),
            Slot::Global(i) => write!(f, "gv{i}"),
            Slot::Byte(a) => write!(f, "mem[{a}]"),
        }
    }
}

impl std::str::FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad slot `{s}`");
        if let Some(i) = s.strip_prefix("lv") {
            i.parse().map(Slot::Local).map_err(|_| bad())
        } else if let Some(i) = s.strip_prefix("gv") {
            i.parse().map(Slot::Global).map_err(|_| bad())
        } else {
            let a = s.strip_prefix("mem[").and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
            a.parse().map(Slot::Byte).map_err(|_| bad())
        }
    }
}

impl From<Slot> for String {
    fn from(s: Slot) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Slot {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

/// Symbol values of a satisfying assignment, split per execution and keyed
/// by symbol name without the `_L`/`_R` suffix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualModel {
    pub left: BTreeMap<String, u64>,
    pub right: BTreeMap<String, u64>,
}

/// A value forced into a slot when the `ordinal`-th loop entry of a run is
/// reached; reproduces a havoced loop-header state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub ordinal: u32,
    pub slot: Slot,
    pub value: u64,
}

/// Concrete inputs for one execution.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Valuation {
    pub args: Vec<u64>,
    pub memory: BTreeMap<u64, u8>,
    pub injections: Vec<Injection>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub left: Valuation,
    pub right: Valuation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// `None` for traps not tied to a check.
    pub check_kind: Option<CheckKind>,
    pub site: Site,
    pub model: Option<DualModel>,
    pub witness: Option<Witness>,
    /// Times the site was checked.
    pub occurrences: u32,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    /// Formulas entering simplification (#FS).
    pub formulas_simplified: u64,
    /// Formulas dispatched to a solver backend (#SS).
    pub solver_queries: u64,
    pub paths_explored: u64,
    /// Distinct instructions executed.
    pub loc_visited: u64,
    pub instructions: u64,
    pub infeasible_pruned: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncompleteReason {
    TimeBudget,
    PathLimit,
    UnrollLimit,
    SolverUnknown,
    InvariantAssertFailure,
}

impl IncompleteReason {
    pub fn as_str(self) -> &'static str {
        match self {
            IncompleteReason::TimeBudget => "time_budget",
            IncompleteReason::PathLimit => "path_limit",
            IncompleteReason::UnrollLimit => "unroll_limit",
            IncompleteReason::SolverUnknown => "solver_unknown",
            IncompleteReason::InvariantAssertFailure => "invariant_assert_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Completion {
    Complete,
    Incomplete {
        /// The first limit hit.
        reason: IncompleteReason,
        reasons: Vec<IncompleteReason>,
        details: Vec<String>,
    },
}

impl Completion {
    pub fn is_complete(&self) -> bool {
        matches!(self, Completion::Complete)
    }
}

/// Everything one exploration produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub entry: String,
    pub verdicts: Vec<Verdict>,
    pub counters: Counters,
    pub completion: Completion,
    pub invariants: Vec<LoopInvariant>,
    pub solver: SolverStats,
}

impl Exploration {
    pub fn violations(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.kind == VerdictKind::Violation)
    }

    pub fn violation_sites(&self) -> BTreeSet<SiteId> {
        self.violations().map(|v| v.site.id()).collect()
    }
}

/// Writes observed while a loop is under analysis.
#[derive(Clone, Debug, Default)]
pub(crate) struct WriteLog {
    pub frame: usize,
    pub slots: BTreeSet<Slot>,
    pub whole_memory: bool,
}

pub(crate) struct Watch {
    pub id: u32,
    pub frame: usize,
    pub label: usize,
}

#[derive(Default)]
pub(crate) struct RunOut {
    pub back_edges: Vec<SymState>,
    pub exits: Vec<SymState>,
}

pub struct Engine<'a> {
    pub(crate) ast: &'a ModuleAst,
    pub(crate) codes: Rc<Vec<Code>>,
    pub(crate) layout: MemLayout,
    pub(crate) cfg: EngineConfig,
    pub(crate) pool: ExprPool,
    pub(crate) cache: ExprCache,
    pub(crate) solver: Solver,
    query_timeout: Duration,
    pub(crate) counters: Counters,
    verdicts: BTreeMap<(SiteId, Option<CheckKind>), Verdict>,
    reasons: Vec<IncompleteReason>,
    details: Vec<String>,
    /// False while a loop pre-pass runs: checks are skipped.
    pub(crate) checking: bool,
    stopped: bool,
    start: Instant,
    entry_name: String,
    args: Vec<(ArgSpec, RelExpr)>,
    pub(crate) havoc_syms: HashMap<SymId, (u32, Slot)>,
    pub(crate) havoc_bases: HashMap<u32, u32>,
    pub(crate) logs: Vec<WriteLog>,
    pub(crate) next_analysis: u32,
    pub(crate) invariants: Vec<LoopInvariant>,
    locs: HashSet<SiteId>,
}

/// Runs the analysis from the module's entry directive.
pub fn explore(ast: &ModuleAst, cfg: &EngineConfig, solver: SolverConfig) -> Result<Exploration, EngineError> {
    let mut engine = Engine::new(ast, cfg.clone(), solver)?;
    let init = engine.init_state()?;
    engine.run(vec![init], None);
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    pub fn new(ast: &'a ModuleAst, cfg: EngineConfig, mut solver: SolverConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        solver.threshold = cfg.portfolio_threshold;
        let query_timeout = solver.per_query_timeout;
        let codes = ast
            .functions
            .iter()
            .enumerate()
            .map(|(i, f)| Code::compile(i as u32, f))
            .collect();
        Ok(Engine {
            ast,
            codes: Rc::new(codes),
            layout: MemLayout::from_module(ast),
            cache: if cfg.memoize { ExprCache::new() } else { ExprCache::disabled() },
            cfg,
            pool: ExprPool::new(),
            solver: Solver::new(solver),
            query_timeout,
            counters: Counters::default(),
            verdicts: BTreeMap::new(),
            reasons: Vec::new(),
            details: Vec::new(),
            checking: true,
            stopped: false,
            start: Instant::now(),
            entry_name: String::new(),
            args: Vec::new(),
            havoc_syms: HashMap::new(),
            havoc_bases: HashMap::new(),
            logs: Vec::new(),
            next_analysis: 0,
            invariants: Vec::new(),
            locs: HashSet::new(),
        })
    }

    /// Binds the entry arguments and builds the initial state.
    pub fn init_state(&mut self) -> Result<SymState, EngineError> {
        let (func, def, entry) = wat::resolve_entry(self.ast)?;
        let mut labels = HashSet::new();
        let mut locals = Vec::new();
        for (spec, ty) in entry.args.iter().zip(&def.params) {
            let v = match spec {
                ArgSpec::Concrete { value, .. } => self.pool.rel_const(ty.bits(), *value),
                ArgSpec::Symbolic { label, class, .. } => {
                    if !labels.insert(label.clone()) {
                        return Err(EngineError::Policy(format!("entry symbol `{label}` is bound twice")));
                    }
                    self.pool.arg_symbol(label, ty.bits(), *class)
                }
            };
            self.args.push((spec.clone(), v));
            locals.push(v);
        }
        for ty in &def.locals {
            locals.push(self.pool.rel_const(ty.bits(), 0));
        }
        self.entry_name = entry.function.clone();
        let globals = self
            .ast
            .globals
            .iter()
            .map(|g| self.pool.rel_const(g.ty.bits(), g.init))
            .collect();
        let end = self.codes[func as usize].ops.len();
        Ok(SymState {
            frames: vec![Frame {
                func,
                ip: 0,
                locals,
                labels: vec![Label {
                    kind: LabelKind::Func,
                    target: end,
                    arity: def.results.len(),
                    height: 0,
                    iters: 0,
                    analysis: None,
                }],
            }],
            stack: Vec::new(),
            mem: SymMemory::initial(&mut self.pool, &self.layout),
            globals,
            pc: PathCond::default(),
            loop_entries: 0,
            back_edge: None,
            steps: 0,
        })
    }

    /// Depth-first exploration from `init`. With a watch, states taking the
    /// watched loop's back edge or leaving the loop are returned instead of
    /// being followed.
    pub(crate) fn run(&mut self, init: Vec<SymState>, watch: Option<&Watch>) -> RunOut {
        let mut out = RunOut::default();
        let mut work: Vec<Succ> = init.into_iter().rev().map(Succ::Go).collect();
        while let Some(item) = work.pop() {
            if self.stopped {
                break;
            }
            let mut s = match item {
                Succ::Done => {
                    self.path_done();
                    continue;
                }
                Succ::Many(v) => {
                    work.extend(v.into_iter().rev());
                    continue;
                }
                Succ::Go(s) => s,
            };
            loop {
                if let Some(w) = watch {
                    if s.back_edge == Some(w.id) {
                        s.back_edge = None;
                        out.back_edges.push(s);
                        break;
                    }
                    if s.frames.len() <= w.frame || s.frames[w.frame].labels.len() <= w.label {
                        out.exits.push(s);
                        break;
                    }
                }
                self.counters.instructions += 1;
                if self.counters.instructions.is_multiple_of(256) && self.over_budget() {
                    break;
                }
                match self.step(s) {
                    Succ::Go(n) => s = n,
                    other => {
                        work.push(other);
                        break;
                    }
                }
            }
        }
        out
    }

    fn path_done(&mut self) {
        self.counters.paths_explored += 1;
        if self.counters.paths_explored >= self.cfg.path_limit {
            self.stop(IncompleteReason::PathLimit, format!("{} paths", self.counters.paths_explored));
        }
    }

    pub(crate) fn over_budget(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        if self.start.elapsed() >= self.cfg.time_budget {
            self.stop(
                IncompleteReason::TimeBudget,
                format!("time budget of {:?} exhausted", self.cfg.time_budget),
            );
        }
        self.stopped
    }

    pub(crate) fn remaining(&self) -> Duration {
        self.cfg.time_budget.saturating_sub(self.start.elapsed())
    }

    fn stop(&mut self, reason: IncompleteReason, detail: String) {
        self.stopped = true;
        self.incomplete(reason, detail);
    }

    pub(crate) fn incomplete(&mut self, reason: IncompleteReason, detail: String) {
        if !self.reasons.contains(&reason) {
            self.reasons.push(reason);
        }
        if !self.details.contains(&detail) {
            self.details.push(detail);
        }
    }

    pub(crate) fn site(&self, id: SiteId) -> Site {
        let f = &self.ast.functions[id.func as usize];
        let (op, pos) = match wat::find_instr(&f.body, id.instr) {
            Some(i) => (wat::op_name(&i.kind), i.pos),
            None => ("?".to_string(), f.pos),
        };
        Site {
            func: id.func,
            instr: id.instr,
            function: f.display_name(id.func as usize),
            op,
            line: pos.line,
            col: pos.col,
        }
    }

    pub(crate) fn record(
        &mut self,
        id: SiteId,
        check: Option<CheckKind>,
        kind: VerdictKind,
        model: Option<(DualModel, Witness)>,
        detail: Option<String>,
    ) {
        if !self.checking {
            return;
        }
        if kind == VerdictKind::Unknown {
            self.incomplete(IncompleteReason::SolverUnknown, format!("solver gave no answer at {}", self.site(id)));
        }
        let (model, witness) = match model {
            Some((m, w)) => (Some(m), Some(w)),
            None => (None, None),
        };
        match self.verdicts.get_mut(&(id, check)) {
            Some(v) => {
                v.occurrences += 1;
                if kind > v.kind {
                    v.kind = kind;
                    v.model = model;
                    v.witness = witness;
                    v.detail = detail;
                }
            }
            None => {
                let site = self.site(id);
                self.verdicts.insert(
                    (id, check),
                    Verdict {
                        kind,
                        check_kind: check,
                        site,
                        model,
                        witness,
                        occurrences: 1,
                        detail,
                    },
                );
            }
        }
    }

    pub(crate) fn visit(&mut self, id: SiteId) {
        self.locs.insert(id);
    }

    pub(crate) fn args(&self) -> &[(ArgSpec, RelExpr)] {
        &self.args
    }

    pub(crate) fn query_timeout(&self) -> Duration {
        self.query_timeout.min(self.remaining()).max(Duration::from_millis(1))
    }

    pub fn finish(mut self) -> Exploration {
        self.counters.wall_time = self.start.elapsed().as_secs_f64();
        self.counters.loc_visited = self.locs.len() as u64;
        self.counters.cache_hits = self.cache.hits;
        self.counters.cache_misses = self.cache.misses;
        let completion = match self.reasons.first() {
            None => Completion::Complete,
            Some(&reason) => Completion::Incomplete {
                reason,
                reasons: self.reasons.clone(),
                details: self.details.clone(),
            },
        };
        Exploration {
            entry: self.entry_name,
            verdicts: self.verdicts.into_values().collect(),
            counters: self.counters,
            completion,
            invariants: self.invariants,
            solver: self.solver.stats.clone(),
        }
    }
}
