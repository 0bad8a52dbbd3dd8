//! Shared helpers for the CLI and acceptance tests: corpus paths, engine
//! runs and the exhaustive concrete oracle.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use wasmct_core::engine::{explore, EngineConfig, Exploration, Valuation, VerdictKind};
use wasmct_core::report::{AnalysisReport, Machine, DEFAULT_FUEL};
use wasmct_core::solver::SolverConfig;
use wasmct_core::wat::{parse_module, resolve_entry, Classification, ModuleAst, SiteId};

pub const CT_CORPUS: [&str; 5] = [
    "ct_select_mask.wat",
    "ct_select_xor.wat",
    "ct_cswap_mem.wat",
    "ct_sort4_network.wat",
    "ct_lookup_scan.wat",
];
pub const LEAKY_CORPUS: [&str; 3] = ["naive_select.wat", "leaky_table_lookup.wat", "leaky_memcmp.wat"];

pub fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

pub fn micro_programs() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(corpus("micro"))
        .expect("corpus/micro exists")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "wat"))
        .collect();
    v.sort();
    v
}

pub fn load(path: &PathBuf) -> ModuleAst {
    let src = std::fs::read_to_string(path).unwrap();
    parse_module(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn wasmct(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_wasmct"))
        .args(args)
        .env_remove("WASMCT_SOLVER_CONFIG")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn config(invariants: bool, budget: Duration) -> EngineConfig {
    EngineConfig {
        invariants_enabled: invariants,
        time_budget: budget,
        ..EngineConfig::default()
    }
}

pub fn run(ast: &ModuleAst, cfg: &EngineConfig) -> Exploration {
    explore(ast, cfg, SolverConfig::builtin_only()).expect("engine runs")
}

pub fn report(path: &PathBuf, cfg: &EngineConfig) -> AnalysisReport {
    let ast = load(path);
    let ex = run(&ast, cfg);
    AnalysisReport::build(&ast, vec![path.display().to_string()], cfg, ex)
}

pub fn violation_sites(ex: &Exploration) -> BTreeSet<SiteId> {
    ex.violation_sites()
}

/// Result of running every input combination concretely.
pub struct Exhaustive {
    /// Sites where some pair of runs with equal public bytes first diverges.
    pub violations: BTreeSet<SiteId>,
    /// Every site observed by any run.
    pub observed: BTreeSet<SiteId>,
    pub runs: usize,
}

/// Enumerates every value of the module's annotated memory bytes. Runs
/// are grouped by their public bytes; within a group every pair of event
/// traces is compared and the first differing event names a violation.
pub fn exhaustive(ast: &ModuleAst) -> Exhaustive {
    let (func, _, entry) = resolve_entry(ast).expect("entry");
    assert!(entry.args.is_empty(), "micro programs read their inputs from memory");
    let mut secret = Vec::new();
    let mut public = Vec::new();
    for a in 0..ast.memory_size() {
        match ast.classify(a) {
            Some(Classification::Secret) => secret.push(a),
            Some(Classification::Public) => public.push(a),
            None => {}
        }
    }
    assert!(secret.len() <= 2 && public.len() <= 1, "too many input bytes");
    assert!(secret.len() + public.len() <= 2, "enumeration limited to 16 bits");

    let mut violations = BTreeSet::new();
    let mut observed = BTreeSet::new();
    let mut runs = 0;
    for pv in 0..1u32 << (8 * public.len()) {
        let mut traces: HashSet<Vec<(SiteId, u64)>> = HashSet::new();
        for sv in 0..1u32 << (8 * secret.len()) {
            let mut memory = BTreeMap::new();
            for (i, &a) in public.iter().enumerate() {
                memory.insert(a, (pv >> (8 * i)) as u8);
            }
            for (i, &a) in secret.iter().enumerate() {
                memory.insert(a, (sv >> (8 * i)) as u8);
            }
            let input = Valuation {
                args: Vec::new(),
                memory,
                injections: Vec::new(),
            };
            let t = Machine::new(ast, &input, false, DEFAULT_FUEL).record_all().run(func, &[]);
            assert!(t.result.is_ok(), "micro programs must not trap: {:?}", t.result);
            runs += 1;
            traces.insert(t.events);
        }
        let traces: Vec<_> = traces.into_iter().collect();
        for t in &traces {
            observed.extend(t.iter().map(|e| e.0));
        }
        for (i, a) in traces.iter().enumerate() {
            for b in &traces[i + 1..] {
                if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x != y) {
                    assert_eq!(x.0, y.0, "equal prefixes reach the same site");
                    violations.insert(x.0);
                }
            }
        }
    }
    Exhaustive {
        violations,
        observed,
        runs,
    }
}

/// Compares the engine's per-site verdicts against the exhaustive oracle.
pub fn agree_with_oracle(ex: &Exploration, oracle: &Exhaustive) -> Result<(), String> {
    if !ex.completion.is_complete() {
        return Err(format!("engine incomplete: {:?}", ex.completion));
    }
    let engine = violation_sites(ex);
    if engine != oracle.violations {
        return Err(format!("engine flags {engine:?}, oracle {:?}", oracle.violations));
    }
    let decided: BTreeSet<SiteId> = ex
        .verdicts
        .iter()
        .filter(|v| matches!(v.kind, VerdictKind::Safe | VerdictKind::Violation))
        .map(|v| v.site.id())
        .collect();
    if let Some(s) = oracle.observed.iter().find(|s| !decided.contains(s)) {
        return Err(format!("site {s:?} observed concretely but not decided by the engine"));
    }
    if let Some(v) = ex
        .verdicts
        .iter()
        .find(|v| matches!(v.kind, VerdictKind::Unknown | VerdictKind::Trap))
    {
        return Err(format!("unexpected {:?} at {}", v.kind, v.site));
    }
    Ok(())
}
