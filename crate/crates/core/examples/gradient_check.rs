//! Compares analytic and finite-difference gradients for every layer and
//! classifier stack.

use tpnkit::experiment::{gradient_check_suite, GRAD_CHECK_TOLERANCE};

fn main() -> tpnkit::Result<()> {
    for (name, report) in gradient_check_suite(0)? {
        let ok = report.max_relative_error < GRAD_CHECK_TOLERANCE;
        println!(
            "{name:<32} {:>6} params  max rel err {:.2e}  {}",
            report.checked,
            report.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
