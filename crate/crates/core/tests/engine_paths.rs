use std::time::Duration;

use wasmct_core::engine::{explore, Completion, EngineConfig, Exploration, FeasibilityPolicy, VerdictKind};
use wasmct_core::solver::SolverConfig;
use wasmct_core::wat::parse_module;

fn run_src(src: &str, cfg: &EngineConfig) -> Exploration {
    let ast = parse_module(src).unwrap();
    explore(&ast, cfg, SolverConfig::builtin_only()).unwrap()
}

fn reasons(ex: &Exploration) -> Vec<&'static str> {
    match &ex.completion {
        Completion::Complete => Vec::new(),
        Completion::Incomplete { reasons, .. } => reasons.iter().map(|r| r.as_str()).collect(),
    }
}

fn corpus(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn independent_branches(k: usize) -> String {
    let params = "i32 ".repeat(k);
    let body: String = (0..k).map(|i| format!("(if (local.get {i}) (then nop))\n")).collect();
    let args: String = (0..k).map(|i| format!("(i32.sconst l{i}) ")).collect();
    format!("(module (memory 1) (func $f (export \"f\") (param {params}) {body}))\n(symb_exec \"f\" {args})")
}

#[test]
fn k_public_branches_give_two_to_the_k_paths() {
    for k in 0..=6 {
        let ex = run_src(&independent_branches(k), &EngineConfig::default());
        assert_eq!(ex.counters.paths_explored, 1 << k, "k = {k}");
        assert!(ex.completion.is_complete());
        assert_eq!(ex.violations().count(), 0);
    }
}

#[test]
fn repeated_condition_prunes_infeasible_paths() {
    let src = r#"
        (module (memory 1)
          (func $f (export "f") (param i32)
            (if (i32.lt_u (local.get 0) (i32.const 10)) (then nop))
            (if (i32.lt_u (local.get 0) (i32.const 5)) (then nop))))
        (symb_exec "f" (i32.sconst l1))"#;
    let ex = run_src(src, &EngineConfig::default());
    // x < 10 false and x < 5 true cannot both hold.
    assert_eq!(ex.counters.paths_explored, 3);
    assert_eq!(ex.counters.infeasible_pruned, 1);

    let never = EngineConfig {
        feasibility: FeasibilityPolicy::Never,
        ..EngineConfig::default()
    };
    assert_eq!(run_src(src, &never).counters.paths_explored, 4);
}

#[test]
fn secret_minus_secret_is_decided_without_a_solver() {
    let src = r#"
        (module (memory 1)
          (func $f (export "f") (param i32)
            (if (i32.sub (local.get 0) (local.get 0)) (then nop))))
        (symb_exec "f" (i32.sconst h1))"#;
    let ex = run_src(src, &EngineConfig::default());
    assert_eq!((ex.counters.formulas_simplified, ex.counters.solver_queries), (1, 0));
    assert_eq!(ex.counters.paths_explored, 1);
    assert!(ex.verdicts.iter().all(|v| v.kind == VerdictKind::Safe));
}

#[test]
fn violations_continue_with_both_executions_agreeing() {
    // The branch is flagged once; the load inside it sees an
    // index fixed by the condition and stays safe.
    let src = r#"
        (module (memory 1)
          (func $f (export "f") (param i32) (result i32)
            (if (result i32) (i32.and (local.get 0) (i32.const 1))
              (then (i32.load8_u (i32.and (local.get 0) (i32.const 1))))
              (else (i32.const 0)))))
        (symb_exec "f" (i32.sconst h1))"#;
    let ex = run_src(src, &EngineConfig::default());
    assert_eq!(ex.counters.paths_explored, 2);
    let v: Vec<_> = ex.violations().collect();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].occurrences, 1);
    assert_eq!(v[0].site.op, "if");
}

#[test]
fn runs_are_deterministic() {
    for (file, inv) in [("lucky13.wat", true), ("leaky_memcmp.wat", false), ("ct_sort4_network.wat", false)] {
        let cfg = EngineConfig {
            invariants_enabled: inv,
            ..EngineConfig::default()
        };
        let src = corpus(file);
        let a = run_src(&src, &cfg);
        let b = run_src(&src, &cfg);
        assert_eq!(a.verdicts, b.verdicts, "{file}");
        assert_eq!(a.invariants, b.invariants, "{file}");
        let strip = |e: &Exploration| {
            let mut c = e.counters.clone();
            c.wall_time = 0.0;
            c
        };
        assert_eq!(strip(&a), strip(&b), "{file}");
    }
}

#[test]
fn memoization_is_transparent_on_the_corpus() {
    for (file, inv) in [
        ("lucky13.wat", true),
        ("lucky13_o0.wat", true),
        ("leaky_memcmp.wat", false),
        ("ct_lookup_scan.wat", false),
        ("ct_sort4_network.wat", false),
        ("invariant_leak.wat", true),
    ] {
        let on = EngineConfig {
            invariants_enabled: inv,
            ..EngineConfig::default()
        };
        let off = EngineConfig { memoize: false, ..on.clone() };
        let src = corpus(file);
        let (a, b) = (run_src(&src, &on), run_src(&src, &off));
        assert_eq!(a.verdicts, b.verdicts, "{file}");
        assert_eq!(a.counters.formulas_simplified, b.counters.formulas_simplified, "{file}");
        assert_eq!(a.counters.solver_queries, b.counters.solver_queries, "{file}");
        assert_eq!(b.counters.cache_hits, 0);
    }
}

#[test]
fn limits_make_the_run_incomplete() {
    let cfg = EngineConfig {
        unroll_limit: 3,
        ..EngineConfig::default()
    };
    let ex = run_src(&corpus("invariant_leak.wat"), &cfg);
    assert!(!ex.completion.is_complete());
    assert!(reasons(&ex).contains(&"unroll_limit"));

    let cfg = EngineConfig {
        path_limit: 5,
        ..EngineConfig::default()
    };
    let ex = run_src(&independent_branches(4), &cfg);
    assert_eq!(ex.counters.paths_explored, 5);
    assert!(reasons(&ex).contains(&"path_limit"));

    let cfg = EngineConfig {
        time_budget: Duration::from_millis(200),
        ..EngineConfig::default()
    };
    let ex = run_src(&corpus("lucky13.wat"), &cfg);
    assert!(reasons(&ex).contains(&"time_budget"));
    assert!(ex.counters.wall_time < 5.0, "{}", ex.counters.wall_time);
}

#[test]
fn traps_are_reported_per_site() {
    let src = r#"
        (module (memory 1)
          (func $f (export "f") (param i32) (result i32)
            (if (i32.eq (local.get 0) (i32.const 7)) (then unreachable))
            (i32.div_u (i32.const 10) (i32.const 0))))
        (symb_exec "f" (i32.sconst l1))"#;
    let ex = run_src(src, &EngineConfig::default());
    let traps: Vec<_> = ex.verdicts.iter().filter(|v| v.kind == VerdictKind::Trap).map(|v| v.site.op.as_str()).collect();
    assert_eq!(traps, ["unreachable", "i32.div_u"]);
}
