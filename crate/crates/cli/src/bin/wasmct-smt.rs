//! Standalone QF_ABV solver: reads an SMT-LIB script on stdin and answers
//! with the in-process bit-blasting backend. Usable as a portfolio member.

use std::io::Read;
use std::process::ExitCode;

use wasmct_core::solver::{parse_script, solve_builtin, Sort, Status};

fn main() -> ExitCode {
    let mut src = String::new();
    if let Err(e) = std::io::stdin().read_to_string(&mut src) {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    let script = match parse_script(&src) {
        Ok(s) => s,
        Err(e) => {
            println!("(error \"{}\")", e.to_string().replace('"', "'"));
            return ExitCode::from(1);
        }
    };
    if !script.check_sat {
        return ExitCode::SUCCESS;
    }
    let (status, model) = solve_builtin(&script.query);
    match status {
        Status::Sat => {
            println!("sat");
            if script.get_model {
                let model = model.unwrap_or_default();
                println!("(");
                for v in &script.query.vars {
                    if let Sort::Bv(w) = v.sort {
                        let value = model.get(&v.name);
                        println!("  (define-fun {} () (_ BitVec {w}) (_ bv{value} {w}))", v.name);
                    }
                }
                println!(")");
            }
        }
        Status::Unsat => println!("unsat"),
        _ => println!("unknown"),
    }
    ExitCode::SUCCESS
}
