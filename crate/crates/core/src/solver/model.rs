//! Solver answers and model parsing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::smtlib::{parse_bv_literal, read_sexprs, Sx};

/// Values of bitvector constants. Symbols the solver left out are
/// don't-cares and read as 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Model {
    pub values: BTreeMap<String, u64>,
}

impl Model {
    pub fn get(&self, name: &str) -> u64 {
        self.values.get(name).copied().unwrap_or(0)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: u64) {
        self.values.insert(name.into(), value);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Sat,
    Unsat,
    Unknown,
    Timeout,
    Error,
}

impl Status {
    pub fn is_definitive(self) -> bool {
        matches!(self, Status::Sat | Status::Unsat)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverAnswer {
    pub status: Status,
    pub model: Option<Model>,
    /// Name of the backend that produced the answer.
    pub responder: String,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

impl SolverAnswer {
    pub fn new(status: Status, model: Option<Model>, responder: &str, elapsed: f64) -> Self {
        SolverAnswer {
            status,
            model,
            responder: responder.to_string(),
            elapsed,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed model: {0}")]
pub struct MalformedModel(pub String);

/// Parses `(get-model)` output: a list of `define-fun` entries, optionally
/// wrapped in `(model ...)`. Array-valued, function and non-literal entries
/// are skipped.
pub fn parse_model(raw: &str) -> Result<Model, MalformedModel> {
    let forms = read_sexprs(raw).map_err(|e| MalformedModel(e.to_string()))?;
    let mut model = Model::default();
    let mut entries: Vec<&Sx> = Vec::new();
    for f in &forms {
        match f {
            Sx::List(items) => {
                let head = items.first().and_then(|h| match h {
                    Sx::Atom(a) => Some(a.as_str()),
                    _ => None,
                });
                match head {
                    Some("define-fun") => entries.push(f),
                    Some("model") => entries.extend(&items[1..]),
                    _ => entries.extend(items.iter()),
                }
            }
            Sx::Atom(a) if a == "sat" => {}
            Sx::Atom(a) => return Err(MalformedModel(format!("unexpected `{a}`"))),
        }
    }
    for e in entries {
        let Sx::List(items) = e else {
            return Err(MalformedModel("expected a define-fun entry".into()));
        };
        match items.as_slice() {
            [Sx::Atom(d), Sx::Atom(name), Sx::List(params), sort, value] if d == "define-fun" => {
                if !params.is_empty() || !is_bitvec_sort(sort) {
                    continue;
                }
                // Some solvers echo the script's own definitions with their
                // bodies; only literal values are assignments.
                if let Some((_, v)) = parse_bv_literal(value) {
                    model.insert(name.clone(), v);
                }
            }
            _ => return Err(MalformedModel("expected a define-fun entry".into())),
        }
    }
    Ok(model)
}

fn is_bitvec_sort(s: &Sx) -> bool {
    matches!(s, Sx::List(items) if matches!(items.as_slice(), [Sx::Atom(u), Sx::Atom(b), _] if u == "_" && b == "BitVec"))
}

/// Splits raw solver output into its status line and the remaining text.
pub fn parse_answer(raw: &str) -> Result<(Status, Option<Model>), MalformedModel> {
    let trimmed = raw.trim_start();
    let (first, rest) = trimmed.split_once('\n').unwrap_or((trimmed, ""));
    match first.trim() {
        "sat" => Ok((Status::Sat, Some(parse_model(rest)?))),
        "unsat" => Ok((Status::Unsat, None)),
        "unknown" | "timeout" => Ok((Status::Unknown, None)),
        other => Err(MalformedModel(format!("unexpected status line `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn define_fun_blocks() {
        let m = parse_model(
            "(\n  (define-fun h1_L () (_ BitVec 32) #x00000000)\n  (define-fun h1_R () (_ BitVec 32) #x00000007)\n  (define-fun b () (_ BitVec 3) #b101)\n  (define-fun c () (_ BitVec 16) (_ bv300 16))\n  (define-fun pub.0 () (Array (_ BitVec 32) (_ BitVec 8)) ((as const (Array (_ BitVec 32) (_ BitVec 8))) #x00))\n)",
        )
        .unwrap();
        assert_eq!(m.get("h1_L"), 0);
        assert_eq!(m.get("h1_R"), 7);
        assert_eq!(m.get("b"), 5);
        assert_eq!(m.get("c"), 300);
        assert!(!m.values.contains_key("pub.0"));
    }

    #[test]
    fn missing_symbol_defaults_to_zero() {
        let m = parse_model("((define-fun l1 () (_ BitVec 32) #x00000001))").unwrap();
        assert_eq!(m.get("l2"), 0);
    }

    #[test]
    fn truncated_output_is_malformed() {
        assert!(parse_model("((define-fun h1_L () (_ BitVec 32) #x0000").is_err());
        assert!(parse_model("((define-fun h1_L () (_ BitVec 32)").is_err());
    }

    #[test]
    fn status_lines() {
        let (s, m) = parse_answer("sat\n((define-fun x () (_ BitVec 8) #x2a))\n").unwrap();
        assert_eq!(s, Status::Sat);
        assert_eq!(m.unwrap().get("x"), 42);
        assert_eq!(parse_answer("unsat\n").unwrap().0, Status::Unsat);
        assert!(parse_answer("garbage").is_err());
    }
}
