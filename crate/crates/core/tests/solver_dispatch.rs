//! Routing by expression count and first-wins portfolio racing, using shell
//! stubs in place of real solvers.

use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::time::{Duration, Instant};

use wasmct_core::solver::*;

fn stub(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, format!("#!/bin/sh\ncat > /dev/null\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path.display().to_string()
}

fn tiny_query(expr_count: usize) -> Query {
    let mut q = Query::new(QueryKind::BranchDivergence);
    let (l, r) = (q.var("h1_L", 32), q.var("h1_R", 32));
    let eq = q.eq(l, r);
    let ne = q.not(eq);
    q.assert(ne);
    q.expr_count = expr_count;
    q
}

#[test]
fn threshold_routes_small_and_large_queries() {
    let dir = tempfile::tempdir().unwrap();
    let small = stub(dir.path(), "small.sh", "echo unsat");
    let big = stub(dir.path(), "big.sh", "echo sat; echo '((define-fun h1_L () (_ BitVec 32) #x00000001))'");
    let cfg = SolverConfig::parse(&format!("small: {small}\nbig: {big}\n")).unwrap();
    assert_eq!(cfg.threshold, 1500);
    let mut s = Solver::new(cfg);

    let a = s.dispatch(tiny_query(5));
    assert_eq!((a.status, a.responder.as_str()), (Status::Unsat, "small"));
    assert!(a.model.is_none());

    let a = s.dispatch(tiny_query(3000));
    assert_eq!((a.status, a.responder.as_str()), (Status::Sat, "big"));
    let m = a.model.unwrap();
    assert_eq!((m.get("h1_L"), m.get("h1_R")), (1, 0));

    assert_eq!((s.stats.small, s.stats.portfolio, s.stats.queries), (1, 1, 2));
}

#[test]
fn portfolio_first_definitive_answer_wins() {
    let dir = tempfile::tempdir().unwrap();
    let slow = stub(dir.path(), "slow.sh", "sleep 10; echo unsat");
    let broken = stub(dir.path(), "broken.sh", "echo nonsense");
    let fast = stub(dir.path(), "fast.sh", "sleep 0.01; echo sat; echo '()'");
    let cfg = SolverConfig::parse(&format!("small: builtin\nslow: {slow}\nbroken: {broken}\nfast: {fast}\n")).unwrap();
    let mut s = Solver::new(SolverConfig { threshold: 0, ..cfg });
    let start = Instant::now();
    let a = s.dispatch(tiny_query(10));
    assert_eq!(a.status, Status::Sat);
    assert_eq!(a.responder, "fast");
    assert!(start.elapsed() < Duration::from_secs(3), "took {:?}", start.elapsed());
    // Cancellation must leave later queries unaffected.
    let a = s.dispatch(tiny_query(10));
    assert_eq!(a.responder, "fast");
}

#[test]
fn all_timeouts_report_timeout_and_all_errors_report_error() {
    let dir = tempfile::tempdir().unwrap();
    let slow = stub(dir.path(), "slow.sh", "sleep 10; echo unsat");
    let cfg = SolverConfig::parse(&format!("small: builtin\nslow: {slow}\nslow2: {slow}\n")).unwrap();
    let mut s = Solver::new(SolverConfig {
        threshold: 0,
        per_query_timeout: Duration::from_millis(200),
        ..cfg
    });
    let start = Instant::now();
    assert_eq!(s.dispatch(tiny_query(10)).status, Status::Timeout);
    assert!(start.elapsed() < Duration::from_secs(3));

    let cfg = SolverConfig::parse("small: builtin\nnone: /nonexistent/solver\nbad: /bin/false\n").unwrap();
    let mut s = Solver::new(SolverConfig { threshold: 0, ..cfg });
    let a = s.dispatch(tiny_query(10));
    assert_eq!(a.status, Status::Error);
    assert!(a.model.is_none());
}

#[test]
fn builtin_small_backend_and_z3_portfolio_agree() {
    let Some(z3) = find_on_path("z3") else {
        eprintln!("z3 not on PATH; skipping");
        return;
    };
    let cfg = SolverConfig::parse(&format!("small: builtin\nz3: {} -in\n", z3.display())).unwrap();
    let mut s = Solver::new(cfg);
    for big in [5, 3000] {
        let a = s.dispatch(tiny_query(big));
        assert_eq!(a.status, Status::Sat);
        let m = a.model.unwrap();
        assert_ne!(m.get("h1_L"), m.get("h1_R"));
    }
}
