//! WebAssembly-text frontend: s-expression reader, module parser with the
//! `public`/`secret`/`symb_exec` annotations, validator and printer.

pub mod ast;
mod parser;
mod printer;
pub mod sexpr;
mod validate;

use thiserror::Error;

pub use ast::*;
pub use parser::{parse_module, parse_sources};
pub use printer::print_module;
pub(crate) use printer::op_name;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: validation error: {msg}")]
    Validation { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: unsupported: {what}")]
    Unsupported { line: u32, col: u32, what: String },
    #[error("{line}:{col}: policy error: {msg}")]
    Policy { line: u32, col: u32, msg: String },
    #[error("no entry point: add a `(symb_exec \"name\" ...)` directive or pass an entry override")]
    MissingEntry,
    #[error("entry function `{0}` not found")]
    UnknownFunction(String),
    #[error("entry `{function}` takes {expected} argument(s) but {found} were given")]
    ArityMismatch { function: String, expected: usize, found: usize },
    #[error("entry `{function}` argument {index}: expected {expected}, found {found}")]
    ArgTypeMismatch { function: String, index: usize, expected: &'static str, found: &'static str },
}

/// Looks up the entry function named by the module's `symb_exec` directive
/// and checks the argument list against its signature.
pub fn resolve_entry(ast: &ModuleAst) -> Result<(u32, &FuncDef, &EntrySpec), FrontendError> {
    let entry = ast.entry.as_ref().ok_or(FrontendError::MissingEntry)?;
    let idx = ast
        .find_function(&entry.function)
        .ok_or_else(|| FrontendError::UnknownFunction(entry.function.clone()))?;
    let func = &ast.functions[idx as usize];
    if func.params.len() != entry.args.len() {
        return Err(FrontendError::ArityMismatch {
            function: entry.function.clone(),
            expected: func.params.len(),
            found: entry.args.len(),
        });
    }
    for (index, (p, a)) in func.params.iter().zip(&entry.args).enumerate() {
        if *p != a.ty() {
            return Err(FrontendError::ArgTypeMismatch {
                function: entry.function.clone(),
                index,
                expected: p.name(),
                found: a.ty().name(),
            });
        }
    }
    Ok((idx, func, entry))
}

/// Builds an entry directive for an unannotated module: every parameter
/// becomes a public symbol `l<i>`.
pub fn default_entry(ast: &ModuleAst, function: &str) -> Result<EntrySpec, FrontendError> {
    let idx = ast
        .find_function(function)
        .ok_or_else(|| FrontendError::UnknownFunction(function.to_string()))?;
    let func = &ast.functions[idx as usize];
    Ok(EntrySpec {
        function: function.to_string(),
        args: func
            .params
            .iter()
            .enumerate()
            .map(|(i, t)| ArgSpec::Symbolic {
                ty: *t,
                label: format!("l{i}"),
                class: Classification::Public,
            })
            .collect(),
        pos: Pos::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_PARAMS: &str = r#"
        (module (memory 1)
          (func $f (export "f") (param i32 i32 i32 i32) (result i32) (i32.const 0)))"#;

    #[test]
    fn resolves_exported_entry() {
        let src = format!("{FOUR_PARAMS}\n(symb_exec \"f\" (i32.sconst 1) (i32.sconst 2) (i32.sconst l1) (i32.sconst h1))");
        let ast = parse_module(&src).unwrap();
        let (idx, func, entry) = resolve_entry(&ast).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(func.params.len(), 4);
        assert_eq!(entry.args.len(), 4);
    }

    #[test]
    fn unknown_function() {
        let src = format!("{FOUR_PARAMS}\n(symb_exec \"g\")");
        let ast = parse_module(&src).unwrap();
        assert_eq!(resolve_entry(&ast).unwrap_err(), FrontendError::UnknownFunction("g".into()));
    }

    #[test]
    fn arity_mismatch() {
        let src = format!("{FOUR_PARAMS}\n(symb_exec \"f\" (i32.sconst 1) (i32.sconst 2) (i32.sconst 3))");
        let ast = parse_module(&src).unwrap();
        assert!(matches!(
            resolve_entry(&ast),
            Err(FrontendError::ArityMismatch { expected: 4, found: 3, .. })
        ));
    }

    #[test]
    fn missing_entry() {
        let ast = parse_module(FOUR_PARAMS).unwrap();
        assert_eq!(resolve_entry(&ast).unwrap_err(), FrontendError::MissingEntry);
    }

    #[test]
    fn label_prefix_decides_classification() {
        let src = format!("{FOUR_PARAMS}\n(symb_exec \"f\" (i32.sconst x1) (i32.sconst 2) (i32.sconst 3) (i32.sconst 4))");
        assert!(matches!(parse_module(&src), Err(FrontendError::Policy { .. })));
    }
}
