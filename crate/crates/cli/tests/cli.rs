mod common;

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use common::*;
use serde_json::Value;
use wasmct_core::report::AnalysisReport;

fn path(name: &str) -> String {
    corpus(name).display().to_string()
}

fn builtin_config(dir: &tempfile::TempDir) -> String {
    let p = dir.path().join("solvers.conf");
    std::fs::write(&p, "# everything in-process\nsmall: builtin\n").unwrap();
    p.display().to_string()
}

#[test]
fn exit_codes_follow_the_verdict() {
    assert_eq!(wasmct(&[&path("ct_select_mask.wat")]).0, 0);
    let (code, out, _) = wasmct(&[&path("naive_select.wat")]);
    assert_eq!(code, 1);
    assert!(out.contains("violation 1: Branch at 5:5: if in select"), "{out}");
    assert!(out.contains("replay: confirmed"), "{out}");
    assert!(!out.contains("violation 2"), "{out}");
}

#[test]
fn tiny_budget_on_unoptimized_lucky13_is_incomplete() {
    let (code, out, _) = wasmct(&["--timeout", "0.0001", &path("lucky13_o0.wat")]);
    // A violation found before the deadline still takes precedence.
    let expected = if out.contains("violation 1:") { 1 } else { 2 };
    assert_eq!(code, expected, "{out}");
    assert!(out.contains("incomplete: "), "{out}");
    assert!(out.contains("time_budget"), "{out}");
}

#[test]
fn usage_and_parse_errors_exit_3() {
    assert_eq!(wasmct(&[]).0, 3);
    assert_eq!(wasmct(&["--unroll-limit", "0", &path("naive_select.wat")]).0, 3);
    assert_eq!(wasmct(&["--timeout", "-1", &path("naive_select.wat")]).0, 3);
    assert_eq!(wasmct(&["--format", "yaml", &path("naive_select.wat")]).0, 3);
    assert_eq!(wasmct(&["/nonexistent.wat"]).0, 3);
    assert_eq!(wasmct(&["--entry", "nope", &path("naive_select.wat")]).0, 3);

    let dir = tempfile::tempdir().unwrap();
    for (i, src) in ["(module", "(module (func (i32.add)))", "(module (func $f)) (symb_exec \"g\")", "\u{0}\u{ff}"]
        .iter()
        .enumerate()
    {
        let p = dir.path().join(format!("bad{i}.wat"));
        std::fs::write(&p, src).unwrap();
        let (code, _, err) = wasmct(&[p.to_str().unwrap()]);
        assert_eq!(code, 3, "{src}: {err}");
        assert!(err.starts_with("error: "), "{err}");
        assert!(!err.contains("panicked"), "{err}");
    }
}

#[test]
fn help_exits_0() {
    let (code, out, _) = wasmct(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("--invariants"));
}

#[test]
fn entry_override_makes_every_parameter_public() {
    // With all parameters public the naive select has nothing to leak.
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(corpus("naive_select.wat")).unwrap();
    let stripped: String = src.lines().filter(|l| !l.starts_with("(symb_exec")).collect::<Vec<_>>().join("\n");
    let p = dir.path().join("plain.wat");
    std::fs::write(&p, stripped).unwrap();
    assert_eq!(wasmct(&[p.to_str().unwrap()]).0, 3);
    assert_eq!(wasmct(&["--entry", "select", p.to_str().unwrap()]).0, 0);
    // The directive wins when it names the same function.
    assert_eq!(wasmct(&["--entry", "select", &path("naive_select.wat")]).0, 1);
}

#[test]
fn json_report_round_trips_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let conf = builtin_config(&dir);
    let args = ["--format", "json", "--solver-config", &conf, "--invariants", &path("lucky13.wat")];
    let (code, a, _) = wasmct(&args);
    assert_eq!(code, 1);
    let report: AnalysisReport = serde_json::from_str(&a).unwrap();
    assert_eq!(report.violations.len(), 3);
    assert_eq!(report.replay_results.len(), 3);
    assert_eq!(serde_json::to_value(&report).unwrap(), serde_json::from_str::<Value>(&a).unwrap());

    let (_, b, _) = wasmct(&args);
    let strip = |s: &str| {
        let mut v: Value = serde_json::from_str(s).unwrap();
        drop_timing(&mut v);
        v
    };
    assert_eq!(strip(&a), strip(&b));
}

fn drop_timing(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_time");
            m.remove("time");
            m.values_mut().for_each(drop_timing);
        }
        Value::Array(a) => a.iter_mut().for_each(drop_timing),
        _ => {}
    }
}

#[test]
fn solver_config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "fast: builtin\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wasmct"))
        .arg(path("naive_select.wat"))
        .env("WASMCT_SOLVER_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("small"));

    let good = builtin_config(&dir);
    let out = Command::new(env!("CARGO_BIN_EXE_wasmct"))
        .arg(path("naive_select.wat"))
        .env("WASMCT_SOLVER_CONFIG", &good)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_flag_adds_solver_lines() {
    let (_, out, _) = wasmct(&["--stats", &path("naive_select.wat")]);
    assert!(out.contains("solver: 3 queries"), "{out}");
    let (_, out, _) = wasmct(&[&path("naive_select.wat")]);
    assert!(!out.contains("solver:"), "{out}");
}

#[test]
fn select_unsafe_flags_secret_select() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sel.wat");
    std::fs::write(
        &p,
        r#"(module (memory 1)
             (func $f (export "f") (param i32 i32 i32) (result i32)
               (select (local.get 1) (local.get 2) (local.get 0))))
           (symb_exec "f" (i32.sconst h1) (i32.sconst l1) (i32.sconst l2))"#,
    )
    .unwrap();
    assert_eq!(wasmct(&[p.to_str().unwrap()]).0, 0);
    let (code, out, _) = wasmct(&["--select-unsafe", p.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.contains("Select at"), "{out}");
}

#[test]
fn modules_split_across_files() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.wat");
    let main = dir.path().join("main.wat");
    std::fs::write(
        &env,
        "(module $env (memory (;0;) $memory (export \"_memory\") 1) (secret (i32.const 0) (i32.const 3)))",
    )
    .unwrap();
    std::fs::write(
        &main,
        r#"(module (import "env" "_memory" (memory 1))
             (func $f (export "f") (result i32) (i32.load8_u (i32.load (i32.const 0)))))
           (symb_exec "f")"#,
    )
    .unwrap();
    let (code, out, err) = wasmct(&[env.to_str().unwrap(), main.to_str().unwrap()]);
    assert_eq!(code, 1, "{out}{err}");
    assert!(out.contains("MemoryIndex"), "{out}");
}

#[test]
fn invariants_never_unflag_a_site() {
    let mut files: Vec<String> = CT_CORPUS.iter().chain(&LEAKY_CORPUS).map(|s| s.to_string()).collect();
    files.extend(micro_programs().iter().map(|p| format!("micro/{}", p.file_name().unwrap().to_string_lossy())));
    for f in files {
        let ast = load(&corpus(&f));
        let unroll = run(&ast, &config(false, Duration::from_secs(60)));
        let inv = run(&ast, &config(true, Duration::from_secs(60)));
        let (u, i) = (violation_sites(&unroll), violation_sites(&inv));
        assert!(u.is_subset(&i), "{f}: unroll {u:?} invariants {i:?}");
    }
}

#[test]
fn smt_binary_answers_scripts() {
    let run_smt = |script: &str| {
        let mut child = Command::new(env!("CARGO_BIN_EXE_wasmct-smt"))
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
        let out = child.wait_with_output().unwrap();
        String::from_utf8(out.stdout).unwrap()
    };
    let sat = run_smt(
        "(set-logic QF_ABV)\n(declare-const x (_ BitVec 8))\n(assert (= (bvmul x #x03) #x0f))\n(check-sat)\n(get-model)\n",
    );
    let (status, model) = wasmct_core::solver::parse_answer(&sat).unwrap();
    assert_eq!(status, wasmct_core::solver::Status::Sat);
    assert_eq!(model.unwrap().get("x").wrapping_mul(3) & 0xff, 0x0f);

    let unsat = run_smt("(declare-const x (_ BitVec 8))\n(assert (bvult x #x00))\n(check-sat)\n");
    assert_eq!(unsat.trim(), "unsat");
    assert!(run_smt("(assert (= x").starts_with("(error"));
}
