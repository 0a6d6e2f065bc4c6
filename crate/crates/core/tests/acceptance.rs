//! Acceptance battery: one PASS/FAIL line per criterion. Criteria listed in
//! `KNOWN_UNATTAINABLE` are reported as failing but do not fail the target.

use std::process::ExitCode;

use kslab::acceptance::{evaluate_all, CRITERIA};

fn main() -> ExitCode {
    let ids: Vec<u8> = (1..=CRITERIA).collect();
    println!("\nrunning {} acceptance criteria", ids.len());
    let results = evaluate_all(&ids);
    for r in &results {
        println!("{}", r.line());
    }
    let passed = results.iter().filter(|r| r.pass).count();
    let known = results.iter().filter(|r| !r.pass && r.known_unattainable()).count();
    let unexpected = results.len() - passed - known;
    println!("\nacceptance: {passed} passed; {known} failed (known unattainable); {unexpected} failed\n");
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
