//! One line per acceptance criterion, run against the shipped fixtures.
//! Built without the libtest harness so the lines are never captured.

use std::path::Path;
use std::process::ExitCode;

use meso_core::suite::{Suite, CRITERIA};

fn main() -> ExitCode {
    let suite = match Suite::open(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("fixtures unavailable: {e}");
            return ExitCode::FAILURE;
        }
    };
    let mut failed = Vec::new();
    for id in 1..=CRITERIA {
        let r = suite.run(id);
        println!("{} [{:.1} s]", r.line(), r.seconds);
        for d in &r.details {
            println!("    {d}");
        }
        if !r.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: {CRITERIA}/{CRITERIA} criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
