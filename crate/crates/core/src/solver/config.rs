//! Solver configuration: which backend takes small queries, which ones race
//! on large ones, and the limits that govern them.

use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_THRESHOLD: usize = 1500;
pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(10);
/// Environment variable naming a config file to use instead of the default.
pub const CONFIG_ENV: &str = "WASMCT_SOLVER_CONFIG";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Builtin,
    Command { name: String, argv: Vec<String> },
}

impl BackendSpec {
    pub fn name(&self) -> &str {
        match self {
            BackendSpec::Builtin => "builtin",
            BackendSpec::Command { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub small_backend: BackendSpec,
    pub portfolio: Vec<BackendSpec>,
    pub per_query_timeout: Duration,
    /// Queries with more expressions than this go to the portfolio.
    pub threshold: usize,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("no `small:` backend line")]
    MissingSmall,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let mut portfolio = Vec::new();
        if let Some(smt) = sibling_binary("wasmct-smt") {
            portfolio.push(BackendSpec::Command {
                name: "wasmct-smt".into(),
                argv: vec![smt.display().to_string()],
            });
        }
        if let Some(z3) = find_on_path("z3") {
            portfolio.push(BackendSpec::Command {
                name: "z3".into(),
                argv: vec![z3.display().to_string(), "-in".into()],
            });
        }
        if portfolio.is_empty() {
            portfolio.push(BackendSpec::Builtin);
        }
        SolverConfig {
            small_backend: BackendSpec::Builtin,
            portfolio,
            per_query_timeout: DEFAULT_QUERY_TIMEOUT,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl SolverConfig {
    /// Everything on the in-process backend; no external processes.
    pub fn builtin_only() -> Self {
        SolverConfig {
            small_backend: BackendSpec::Builtin,
            portfolio: vec![BackendSpec::Builtin],
            per_query_timeout: DEFAULT_QUERY_TIMEOUT,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Parses the `name: argv...` format. The first entry must be named
    /// `small`; every later entry joins the portfolio. `builtin` as the
    /// argv selects the in-process solver. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut small = None;
        let mut portfolio = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |msg: &str| ConfigError::Syntax {
                line: i + 1,
                msg: msg.into(),
            };
            let (name, rest) = line.split_once(':').ok_or_else(|| syntax("expected `name: command`"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(syntax("empty backend name"));
            }
            let argv = shlex::split(rest.trim()).ok_or_else(|| syntax("unbalanced quotes"))?;
            if argv.is_empty() {
                return Err(syntax("empty command"));
            }
            let spec = if argv.len() == 1 && argv[0] == "builtin" {
                BackendSpec::Builtin
            } else {
                BackendSpec::Command {
                    name: name.to_string(),
                    argv,
                }
            };
            if small.is_none() {
                if name != "small" {
                    return Err(syntax("first backend must be tagged `small:`"));
                }
                small = Some(spec);
            } else {
                portfolio.push(spec);
            }
        }
        let small_backend = small.ok_or(ConfigError::MissingSmall)?;
        if portfolio.is_empty() {
            portfolio.push(small_backend.clone());
        }
        Ok(SolverConfig {
            small_backend,
            portfolio,
            per_query_timeout: DEFAULT_QUERY_TIMEOUT,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Looks for `name` next to the running executable (and one level up, which
/// covers test binaries under `target/*/deps`).
pub fn sibling_binary(name: &str) -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?;
    let file = format!("{name}{}", std::env::consts::EXE_SUFFIX);
    let found = [Some(dir), dir.parent()]
        .into_iter()
        .flatten()
        .map(|d| d.join(&file))
        .find(|p| p.is_file());
    found
}

pub fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_small_and_portfolio() {
        let cfg = SolverConfig::parse(
            "# solvers\nsmall: builtin\nz3: z3 -in -T:20\nquoted: /opt/my\\ solver 'a b'\n",
        )
        .unwrap();
        assert_eq!(cfg.small_backend, BackendSpec::Builtin);
        assert_eq!(cfg.portfolio.len(), 2);
        assert_eq!(
            cfg.portfolio[1],
            BackendSpec::Command {
                name: "quoted".into(),
                argv: vec!["/opt/my solver".into(), "a b".into()]
            }
        );
    }

    #[test]
    fn small_must_come_first() {
        assert!(matches!(
            SolverConfig::parse("z3: z3 -in\nsmall: builtin"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(SolverConfig::parse("# nothing"), Err(ConfigError::MissingSmall)));
        assert!(matches!(SolverConfig::parse("small z3"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn lone_small_also_forms_the_portfolio() {
        let cfg = SolverConfig::parse("small: z3 -in").unwrap();
        assert_eq!(cfg.portfolio, vec![cfg.small_backend.clone()]);
    }
}
