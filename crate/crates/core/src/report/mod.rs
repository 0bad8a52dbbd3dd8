//! Analysis reports: aggregation, counterexample replay and rendering.

pub mod replay;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{
    CheckKind, Completion, Counters, EngineConfig, Exploration, Site, Valuation, Verdict, VerdictKind, Witness,
};
use crate::invariants::LoopInvariant;
use crate::solver::SolverStats;
use crate::wat::ModuleAst;

pub use replay::{HeaderVisit, Machine, Stop, Trace, DEFAULT_FUEL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ReplayOutcome {
    Confirmed {
        /// Values the two executions produced at the site.
        left: u64,
        right: u64,
        /// Which visit of the site diverged, from 0.
        visit: usize,
        /// Whether loop-havoc values had to be injected.
        injected: bool,
    },
    Refuted {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub site: Site,
    pub check_kind: Option<CheckKind>,
    pub outcome: ReplayOutcome,
}

impl ReplayResult {
    pub fn confirmed(&self) -> bool {
        matches!(self.outcome, ReplayOutcome::Confirmed { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub unroll_limit: u32,
    pub invariants: bool,
    pub select_unsafe: bool,
    pub portfolio_threshold: usize,
    pub time_budget: f64,
}

impl From<&EngineConfig> for RunConfig {
    fn from(c: &EngineConfig) -> Self {
        RunConfig {
            unroll_limit: c.unroll_limit,
            invariants: c.invariants_enabled,
            select_unsafe: c.select_unsafe,
            portfolio_threshold: c.portfolio_threshold,
            time_budget: c.time_budget.as_secs_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub inputs: Vec<String>,
    pub entry: String,
    pub config: RunConfig,
    pub completion: Completion,
    pub counters: Counters,
    pub solver: SolverStats,
    pub violations: Vec<Verdict>,
    pub unknowns: Vec<Verdict>,
    pub traps: Vec<Verdict>,
    /// Checks proven free of divergence.
    pub safe_checks: usize,
    /// One entry per violation, in the same order.
    pub replay_results: Vec<ReplayResult>,
    pub invariants: Vec<LoopInvariant>,
}

impl AnalysisReport {
    /// Aggregates an exploration and replays every violation.
    pub fn build(ast: &ModuleAst, inputs: Vec<String>, cfg: &EngineConfig, ex: Exploration) -> Self {
        let func = ast.find_function(&ex.entry);
        let mut violations = Vec::new();
        let mut unknowns = Vec::new();
        let mut traps = Vec::new();
        let mut safe_checks = 0;
        for v in ex.verdicts {
            match v.kind {
                VerdictKind::Violation => violations.push(v),
                VerdictKind::Unknown => unknowns.push(v),
                VerdictKind::Trap => traps.push(v),
                VerdictKind::Safe | VerdictKind::PathInfeasible => safe_checks += 1,
            }
        }
        let replay_results = violations
            .iter()
            .map(|v| ReplayResult {
                site: v.site.clone(),
                check_kind: v.check_kind,
                outcome: match (func, &v.witness) {
                    (Some(f), Some(w)) => replay(ast, f, w, v),
                    _ => ReplayOutcome::Refuted {
                        reason: "no witness".into(),
                    },
                },
            })
            .collect();
        AnalysisReport {
            inputs,
            entry: ex.entry,
            config: RunConfig::from(cfg),
            completion: ex.completion,
            counters: ex.counters,
            solver: ex.solver,
            violations,
            unknowns,
            traps,
            safe_checks,
            replay_results,
            invariants: ex.invariants,
        }
    }

    /// 0 verified, 1 violations, 2 incomplete or undecided.
    pub fn exit_code(&self) -> i32 {
        if !self.violations.is_empty() {
            1
        } else if !self.completion.is_complete() || !self.unknowns.is_empty() {
            2
        } else {
            0
        }
    }

    pub fn render(&self, format: Format, stats: bool) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Text => self.render_text(stats),
        }
    }

    fn render_text(&self, stats: bool) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "entry: {} ({})", self.entry, self.inputs.join(", "));
        for (i, (v, r)) in self.violations.iter().zip(&self.replay_results).enumerate() {
            let kind = v.check_kind.map_or("trap".to_string(), |k| format!("{k:?}"));
            let _ = writeln!(w, "violation {}: {} at {}", i + 1, kind, v.site);
            if let Some(m) = &v.model {
                let _ = writeln!(w, "  left:  {}", excerpt(&m.left));
                let _ = writeln!(w, "  right: {}", excerpt(&m.right));
            }
            match &r.outcome {
                ReplayOutcome::Confirmed {
                    left,
                    right,
                    injected,
                    ..
                } => {
                    let how = if *injected { ", with loop havoc values" } else { "" };
                    let _ = writeln!(w, "  replay: confirmed ({left} vs {right}{how})");
                }
                ReplayOutcome::Refuted { reason } => {
                    let _ = writeln!(w, "  replay: refuted ({reason})");
                }
            }
        }
        for v in &self.unknowns {
            let kind = v.check_kind.map_or("?".to_string(), |k| format!("{k:?}"));
            let _ = writeln!(w, "unknown: {} at {}", kind, v.site);
        }
        for v in &self.traps {
            let why = v.detail.as_deref().unwrap_or("trap");
            let _ = writeln!(w, "trap: {} at {}", why, v.site);
        }
        for inv in &self.invariants {
            let status = if inv.holds() {
                "holds".to_string()
            } else {
                format!("assertion failed for {}", inv.failed.join(", "))
            };
            let _ = writeln!(w, "loop at {}: invariant {} ({status})", inv.loc, inv.formula());
        }
        match &self.completion {
            Completion::Complete if self.violations.is_empty() && self.unknowns.is_empty() => {
                let _ = writeln!(w, "Verify CT ✓");
            }
            Completion::Complete => {}
            Completion::Incomplete { reasons, details, .. } => {
                let names: Vec<&str> = reasons.iter().map(|r| r.as_str()).collect();
                let _ = writeln!(w, "incomplete: {}", names.join(", "));
                for d in details {
                    let _ = writeln!(w, "  {d}");
                }
            }
        }
        if !self.violations.is_empty() {
            let _ = writeln!(w, "Verify CT ✗ ({} violation(s))", self.violations.len());
        } else if !self.completion.is_complete() || !self.unknowns.is_empty() {
            let _ = writeln!(w, "Verify CT ? (analysis incomplete)");
        }
        let c = &self.counters;
        let _ = writeln!(
            w,
            "#FS {}  #SS {}  paths {}  LoC {}  time {:.3}s",
            c.formulas_simplified, c.solver_queries, c.paths_explored, c.loc_visited, c.wall_time
        );
        if stats {
            let s = &self.solver;
            let _ = writeln!(
                w,
                "solver: {} queries ({} small, {} portfolio), sat {} unsat {} timeout {} unknown {} error {}, {:.3}s",
                s.queries, s.small, s.portfolio, s.sat, s.unsat, s.timeout, s.unknown, s.error, s.time
            );
            let _ = writeln!(
                w,
                "engine: {} instructions, {} infeasible forks, simplifier cache {} hits / {} misses",
                c.instructions, c.infeasible_pruned, c.cache_hits, c.cache_misses
            );
        }
        out
    }
}

fn excerpt(m: &std::collections::BTreeMap<String, u64>) -> String {
    const SHOWN: usize = 8;
    let mut parts: Vec<String> = m.iter().take(SHOWN).map(|(k, v)| format!("{k}={v}")).collect();
    if m.len() > SHOWN {
        parts.push(format!("… ({} more)", m.len() - SHOWN));
    }
    parts.join(" ")
}

/// Replays both executions of a violation concretely: first from the
/// inputs alone, then with loop-havoc values injected.
pub fn replay(ast: &ModuleAst, func: u32, w: &Witness, v: &Verdict) -> ReplayOutcome {
    let site = v.site.id();
    let attempts: &[bool] = if w.left.injections.is_empty() && w.right.injections.is_empty() {
        &[false]
    } else {
        &[false, true]
    };
    let mut reason = String::new();
    for &inject in attempts {
        let run = |val: &Valuation| Machine::new(ast, val, inject, DEFAULT_FUEL).watch(site).run(func, &val.args);
        let (l, r) = (run(&w.left), run(&w.right));
        if let Some((visit, (&a, &b))) = l.observed.iter().zip(&r.observed).enumerate().find(|(_, (a, b))| a != b) {
            return ReplayOutcome::Confirmed {
                left: a,
                right: b,
                visit,
                injected: inject,
            };
        }
        reason = match (&l.result, &r.result) {
            (Err(e), _) => format!("left execution stopped: {}", describe(e)),
            (_, Err(e)) => format!("right execution stopped: {}", describe(e)),
            _ if l.observed.is_empty() || r.observed.is_empty() => "site not reached".into(),
            _ => "no divergence at the site".into(),
        };
    }
    ReplayOutcome::Refuted { reason }
}

fn describe(s: &Stop) -> String {
    match s {
        Stop::Trap(t) => format!("trap ({t})"),
        Stop::OutOfFuel => "out of fuel".into(),
    }
}
