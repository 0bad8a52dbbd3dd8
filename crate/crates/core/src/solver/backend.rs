//! Solver backends: the in-process bit-blaster and external SMT-LIB processes.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::bitblast;
use super::model::{parse_answer, SolverAnswer, Status};
use super::smtlib::print_query;
use super::term::Query;

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Decides `q` within `timeout`. Implementations poll `cancel` and give
    /// up early once it is set.
    fn solve(&self, q: &Arc<Query>, timeout: Duration, cancel: &Arc<AtomicBool>) -> SolverAnswer;
}

/// Bit-blasts to CNF and runs varisat on a worker thread. A worker that
/// overruns its timeout is detached and left to finish on its own.
#[derive(Clone, Debug, Default)]
pub struct BuiltinBackend;

impl Backend for BuiltinBackend {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&self, q: &Arc<Query>, timeout: Duration, cancel: &Arc<AtomicBool>) -> SolverAnswer {
        let start = Instant::now();
        let (tx, rx) = mpsc::channel();
        let q = Arc::clone(q);
        let spawned = thread::Builder::new()
            .name("wasmct-builtin".into())
            .stack_size(64 << 20)
            .spawn(move || {
                let _ = tx.send(bitblast::solve(&q));
            });
        if spawned.is_err() {
            return SolverAnswer::new(Status::Error, None, self.name(), 0.0);
        }
        let deadline = start + timeout;
        loop {
            let now = Instant::now();
            if now >= deadline || cancel.load(Ordering::Relaxed) {
                return SolverAnswer::new(Status::Timeout, None, self.name(), start.elapsed().as_secs_f64());
            }
            let slice = (deadline - now).min(Duration::from_millis(20));
            match rx.recv_timeout(slice) {
                Ok((status, model)) => {
                    return SolverAnswer::new(status, model, self.name(), start.elapsed().as_secs_f64())
                }
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    return SolverAnswer::new(Status::Error, None, self.name(), start.elapsed().as_secs_f64())
                }
            }
        }
    }
}

/// Runs an external solver that reads SMT-LIB 2 on stdin. Each query gets a
/// fresh process in its own process group so cancellation also reaps any
/// helpers it forked.
#[derive(Clone, Debug)]
pub struct ProcessBackend {
    pub name: String,
    pub argv: Vec<String>,
}

impl ProcessBackend {
    pub fn new(name: impl Into<String>, argv: Vec<String>) -> Self {
        ProcessBackend { name: name.into(), argv }
    }
}

#[cfg(unix)]
fn own_process_group(cmd: &mut Command) {
    use std::os::unix::process::CommandExt;
    cmd.process_group(0);
}

#[cfg(not(unix))]
fn own_process_group(_: &mut Command) {}

#[cfg(unix)]
fn kill_group(child: &mut std::process::Child) {
    // SAFETY: kill(2) with a negative pid only sends a signal.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

#[cfg(not(unix))]
fn kill_group(child: &mut std::process::Child) {
    let _ = child.kill();
    let _ = child.wait();
}

impl Backend for ProcessBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn solve(&self, q: &Arc<Query>, timeout: Duration, cancel: &Arc<AtomicBool>) -> SolverAnswer {
        let start = Instant::now();
        let elapsed = || start.elapsed().as_secs_f64();
        let Some((prog, args)) = self.argv.split_first() else {
            return SolverAnswer::new(Status::Error, None, &self.name, 0.0);
        };
        let mut cmd = Command::new(prog);
        cmd.args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        own_process_group(&mut cmd);
        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => {
                log::warn!("cannot start solver `{}`: {e}", self.name);
                return SolverAnswer::new(Status::Error, None, &self.name, elapsed());
            }
        };
        let script = print_query(q);
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(script.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut out = String::new();
            let _ = stdout.read_to_string(&mut out);
            let _ = tx.send(out);
        });
        let deadline = start + timeout;
        let output = loop {
            if cancel.load(Ordering::Relaxed) || Instant::now() >= deadline {
                kill_group(&mut child);
                let _ = writer.join();
                return SolverAnswer::new(Status::Timeout, None, &self.name, elapsed());
            }
            match rx.recv_timeout(Duration::from_millis(5)) {
                Ok(out) => break out,
                Err(mpsc::RecvTimeoutError::Timeout) => continue,
                Err(mpsc::RecvTimeoutError::Disconnected) => break String::new(),
            }
        };
        let _ = writer.join();
        let _ = child.wait();
        match parse_answer(&output) {
            Ok((status, model)) => SolverAnswer::new(status, model, &self.name, elapsed()),
            Err(e) => {
                log::warn!("solver `{}`: {e}", self.name);
                SolverAnswer::new(Status::Error, None, &self.name, elapsed())
            }
        }
    }
}

/// Races every member on the same query; the first sat/unsat answer wins and
/// the others are cancelled.
pub struct Portfolio {
    pub members: Vec<Arc<dyn Backend>>,
}

impl Portfolio {
    pub fn solve(&self, q: &Arc<Query>, timeout: Duration) -> SolverAnswer {
        let start = Instant::now();
        let cancel = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        for m in &self.members {
            let m = Arc::clone(m);
            let q = Arc::clone(q);
            let cancel = Arc::clone(&cancel);
            let tx = tx.clone();
            thread::spawn(move || {
                let _ = tx.send(m.solve(&q, timeout, &cancel));
            });
        }
        drop(tx);
        let mut answers = Vec::new();
        while let Ok(a) = rx.recv() {
            if a.status.is_definitive() {
                cancel.store(true, Ordering::Relaxed);
                return SolverAnswer {
                    elapsed: start.elapsed().as_secs_f64(),
                    ..a
                };
            }
            answers.push(a);
        }
        let status = if answers.iter().any(|a| a.status == Status::Timeout) {
            Status::Timeout
        } else if answers.iter().any(|a| a.status == Status::Unknown) {
            Status::Unknown
        } else {
            Status::Error
        };
        SolverAnswer::new(status, None, "portfolio", start.elapsed().as_secs_f64())
    }
}
