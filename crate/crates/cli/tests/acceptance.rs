//! Acceptance gate: prints one line per primary criterion and exits nonzero
//! if any fails. Runs without the libtest harness so the lines are always
//! shown.

use std::process::ExitCode;

use cascade_cli::verify::{run_checks, VerifyOptions};

fn main() -> ExitCode {
    let results = match run_checks(&VerifyOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL acceptance suite did not run: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("acceptance: {} primary criteria", results.len());
    for r in &results {
        println!(
            "{} {:<12} {:>7.2}s  {}\n    {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.criterion,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 && results.len() == 8 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
