//! One PASS/FAIL line per acceptance criterion.

use std::process::ExitCode;

use qcprop_cli::validate::{criterion, CRITERIA};

fn main() -> ExitCode {
    let mut failed = 0;
    for (n, title) in (1u8..).zip(CRITERIA) {
        let checks = criterion(n);
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        let summary: Vec<String> = checks
            .iter()
            .map(|c| {
                let mark = if c.passed { "" } else { " [failed]" };
                let detail = if c.detail.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", c.detail)
                };
                format!(
                    "{} = {:.3e} vs {:.1e}{mark}{detail}",
                    c.name, c.measured, c.threshold
                )
            })
            .collect();
        println!(
            "criterion {n}: {} {title}: {}",
            if passed { "PASS" } else { "FAIL" },
            summary.join("; ")
        );
        if !passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
