//! Randomized check of the weighting-sequence lemma, plus one instance in detail.

use brsgd::analysis::{verify_lemma1, Lemma1Instance};

fn main() -> brsgd::Result<()> {
    let report = verify_lemma1(5000, 1)?;
    println!(
        "{} trials, {} accepted, {} inequalities, {} violations, max relative excess {:.3e}, min slack ratio {:.3e}",
        report.trials,
        report.accepted,
        report.checks,
        report.violations,
        report.max_relative_violation,
        report.min_slack_ratio
    );

    let inst = Lemma1Instance {
        a: vec![0.5, 0.5, 0.4, 0.35, 0.3, 0.28],
        d: vec![4.0, 3.0, 2.5, 2.0, 1.8, 1.7],
        l: 1.0,
        big_a: 0.5,
        c: 0.2,
    };
    for (k, (lhs, rhs)) in inst.sides().into_iter().enumerate() {
        println!("K = {}: min r = {lhs:.4} <= {rhs:.4}", k + 1);
    }
    Ok(())
}
