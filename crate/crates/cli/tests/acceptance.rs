//! Acceptance run: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::os::unix::fs::PermissionsExt;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use wasmct_core::engine::{Exploration, IncompleteReason, Slot};
use wasmct_core::report::AnalysisReport;
use wasmct_core::solver::{Query, QueryKind, Solver, SolverConfig, Status};

/// Unroll-mode budget for the Lucky-13 replica, which does not finish.
const LUCKY_UNROLL_BUDGET: Duration = Duration::from_secs(10);
const GENEROUS: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;

struct Runs {
    lucky_unroll: Exploration,
    lucky_inv: Exploration,
    reports: Vec<(String, AnalysisReport)>,
}

fn main() -> ExitCode {
    let runs = corpus_runs();
    let criteria: [(&str, &dyn Fn() -> Outcome); 9] = [
        ("1 select/sort corpus", &select_sort_corpus),
        ("2 lucky-13 replica", &|| lucky13(&runs)),
        ("3 simplifier short-circuit", &short_circuit),
        ("4 invariant worked example", &|| invariant_example(&runs)),
        ("5 counterexample replay", &|| replay_all(&runs)),
        ("6 width-8 exhaustive soundness", &exhaustive_soundness),
        ("7 dispatch threshold", &dispatch_threshold),
        ("8 #SS <= #FS", &|| counters(&runs)),
        ("9 invariant-assert failure", &invariant_failure),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {name}: {detail} ({:.2}s)", start.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn corpus_runs() -> Runs {
    let lucky = load(&corpus("lucky13.wat"));
    let lucky_unroll = run(&lucky, &config(false, LUCKY_UNROLL_BUDGET));
    let lucky_inv = run(&lucky, &config(true, GENEROUS));
    let mut reports = Vec::new();
    let mut add = |name: String, ex: Exploration, inv: bool| {
        let path = corpus(&name);
        let ast = load(&path);
        let cfg = config(inv, if inv { GENEROUS } else { LUCKY_UNROLL_BUDGET });
        reports.push((format!("{name}{}", if inv { " (invariants)" } else { "" }), AnalysisReport::build(&ast, vec![name], &cfg, ex)));
    };
    add("lucky13.wat".into(), lucky_unroll.clone(), false);
    add("lucky13.wat".into(), lucky_inv.clone(), true);
    let mut files: Vec<String> = CT_CORPUS.iter().chain(&LEAKY_CORPUS).map(|s| s.to_string()).collect();
    files.push("lucky13_o0.wat".into());
    files.push("invariant_leak.wat".into());
    for p in micro_programs() {
        files.push(format!("micro/{}", p.file_name().unwrap().to_string_lossy()));
    }
    for f in files {
        let ast = load(&corpus(&f));
        for inv in [false, true] {
            // Unbounded public loops only finish under invariants.
            if !inv && matches!(f.as_str(), "lucky13_o0.wat" | "invariant_leak.wat") {
                continue;
            }
            let ex = run(&ast, &config(inv, GENEROUS));
            add(f.clone(), ex, inv);
        }
    }
    Runs {
        lucky_unroll,
        lucky_inv,
        reports,
    }
}

fn select_sort_corpus() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();
    for f in CT_CORPUS {
        let (code, out, err) = wasmct(&[corpus(f).to_str().unwrap()]);
        if code != 0 {
            problems.push(format!("{f}: exit {code} {out}{err}"));
        }
    }
    for f in LEAKY_CORPUS {
        let (code, out, err) = wasmct(&[corpus(f).to_str().unwrap()]);
        if code != 1 || !out.contains("violation 1:") {
            problems.push(format!("{f}: exit {code} {out}{err}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(10) {
        problems.push(format!("took {elapsed:?}"));
    }
    if problems.is_empty() {
        Ok(format!("5/5 verified, 3/3 flagged in {:.2}s", elapsed.as_secs_f64()))
    } else {
        Err(problems.join("; "))
    }
}

fn lucky13(runs: &Runs) -> Outcome {
    let (u, i) = (&runs.lucky_unroll, &runs.lucky_inv);
    let (su, si) = (violation_sites(u), violation_sites(i));
    let ratio = u.counters.formulas_simplified as f64 / i.counters.formulas_simplified.max(1) as f64;
    let detail = format!(
        "unroll {} sites #FS {} ({}), invariants {} sites #FS {} ({}), ratio {ratio:.1}",
        su.len(),
        u.counters.formulas_simplified,
        if u.completion.is_complete() { "complete" } else { "incomplete" },
        si.len(),
        i.counters.formulas_simplified,
        if i.completion.is_complete() { "complete" } else { "incomplete" },
    );
    let kinds: std::collections::BTreeSet<_> = i.violations().filter_map(|v| v.check_kind).collect();
    if su == si && su.len() >= 2 && kinds.len() >= 2 && ratio >= 5.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; unroll {su:?} invariants {si:?} kinds {kinds:?}"))
    }
}

fn short_circuit() -> Outcome {
    let src = r#"
        (module (memory 1)
          (func $f (export "f") (param i32)
            (if (i32.sub (local.get 0) (local.get 0)) (then nop))))
        (symb_exec "f" (i32.sconst h1))"#;
    let ast = wasmct_core::wat::parse_module(src).map_err(|e| e.to_string())?;
    let ex = run(&ast, &config(false, GENEROUS));
    let c = &ex.counters;
    let detail = format!("#FS {} #SS {}", c.formulas_simplified, c.solver_queries);
    if c.formulas_simplified == 1 && c.solver_queries == 0 && ex.verdicts.iter().all(|v| v.check_kind.is_none() || v.kind == wasmct_core::engine::VerdictKind::Safe) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn invariant_example(runs: &Runs) -> Outcome {
    let [inv] = runs.lucky_inv.invariants.as_slice() else {
        return Err(format!("{} loop invariants", runs.lucky_inv.invariants.len()));
    };
    let formula = inv.formula();
    let lv1 = Slot::Local(1);
    if formula == "{lv4_l = lv4_r}" && inv.modified.contains(&lv1) && !inv.public_subset.contains(&lv1) && inv.holds() {
        Ok(format!("{formula}, modified {:?}", inv.modified.iter().map(Slot::to_string).collect::<Vec<_>>()))
    } else {
        Err(format!("{inv:?}"))
    }
}

fn replay_all(runs: &Runs) -> Outcome {
    let mut total = 0;
    let mut bad = Vec::new();
    for (name, r) in &runs.reports {
        if r.replay_results.len() != r.violations.len() {
            bad.push(format!("{name}: {} results for {} violations", r.replay_results.len(), r.violations.len()));
        }
        for res in &r.replay_results {
            total += 1;
            if !res.confirmed() {
                bad.push(format!("{name} {}: {:?}", res.site, res.outcome));
            }
        }
    }
    if bad.is_empty() && total > 0 {
        Ok(format!("{total}/{total} confirmed over {} runs", runs.reports.len()))
    } else {
        Err(bad.join("; "))
    }
}

fn exhaustive_soundness() -> Outcome {
    let start = Instant::now();
    let programs = micro_programs();
    let mut bad = Vec::new();
    let mut runs = 0;
    let mut flagged = 0;
    for p in &programs {
        let ast = load(p);
        let oracle = exhaustive(&ast);
        runs += oracle.runs;
        flagged += oracle.violations.len();
        let ex = run(&ast, &config(false, GENEROUS));
        if let Err(e) = agree_with_oracle(&ex, &oracle) {
            bad.push(format!("{}: {e}", p.display()));
        }
    }
    let elapsed = start.elapsed();
    if programs.len() < 20 {
        bad.push(format!("only {} programs", programs.len()));
    }
    if elapsed >= Duration::from_secs(60) {
        bad.push(format!("took {elapsed:?}"));
    }
    if bad.is_empty() {
        Ok(format!("{} programs, {runs} concrete runs, {flagged} leaking sites, all agree", programs.len()))
    } else {
        Err(bad.join("; "))
    }
}

fn stub(dir: &std::path::Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\ncat > /dev/null\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path.display().to_string()
}

fn sized_query(expr_count: usize) -> Query {
    let mut q = Query::new(QueryKind::BranchDivergence);
    let (l, r) = (q.var("h1_L", 32), q.var("h1_R", 32));
    let eq = q.eq(l, r);
    let ne = q.not(eq);
    q.assert(ne);
    q.expr_count = expr_count;
    q
}

fn dispatch_threshold() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let small = stub(dir.path(), "small.sh", "echo unsat");
    let slow = stub(dir.path(), "slow.sh", "sleep 10; echo unsat");
    let fast = stub(dir.path(), "fast.sh", "sleep 0.01; echo sat; echo '()'");
    let cfg = SolverConfig::parse(&format!("small: {small}\nslow: {slow}\nfast: {fast}\n")).map_err(|e| e.to_string())?;
    let mut s = Solver::new(cfg);
    let below = s.dispatch(sized_query(1499));
    let start = Instant::now();
    let above = s.dispatch(sized_query(1501));
    let race = start.elapsed();
    let detail = format!(
        "1499 -> {} ({:?}), 1501 -> {} ({:?}) in {:.3}s",
        below.responder,
        below.status,
        above.responder,
        above.status,
        race.as_secs_f64()
    );
    if below.responder == "small" && above.responder == "fast" && above.status == Status::Sat && race < Duration::from_secs(1) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn counters(runs: &Runs) -> Outcome {
    let bad: Vec<String> = runs
        .reports
        .iter()
        .filter(|(_, r)| r.counters.solver_queries > r.counters.formulas_simplified)
        .map(|(n, r)| format!("{n}: #SS {} > #FS {}", r.counters.solver_queries, r.counters.formulas_simplified))
        .collect();
    if bad.is_empty() {
        Ok(format!("held on {} runs", runs.reports.len()))
    } else {
        Err(bad.join("; "))
    }
}

fn invariant_failure() -> Outcome {
    let (code, out, err) = wasmct(&["--invariants", "--format", "json", corpus("invariant_leak.wat").to_str().unwrap()]);
    let report: AnalysisReport = serde_json::from_str(&out).map_err(|e| format!("exit {code}: {e}: {err}"))?;
    let reasons = match &report.completion {
        wasmct_core::engine::Completion::Incomplete { reasons, .. } => reasons.clone(),
        wasmct_core::engine::Completion::Complete => Vec::new(),
    };
    let failed: Vec<&String> = report.invariants.iter().flat_map(|i| &i.failed).collect();
    let detail = format!("exit {code}, reasons {reasons:?}, failed slots {failed:?}");
    if code == 2 && reasons.contains(&IncompleteReason::InvariantAssertFailure) && report.violations.is_empty() {
        Ok(detail)
    } else {
        Err(detail)
    }
}
