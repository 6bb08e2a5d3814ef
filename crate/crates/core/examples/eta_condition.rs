//! The noise condition for Krum: eta(m, q) and where it holds along a ray.

use brsgd::aggregators::eta;
use brsgd::analysis::check_eta_condition;
use brsgd::problems::{GradientOracle, NoiseModel, Problem};

fn main() -> brsgd::Result<()> {
    for m in [7, 11, 21, 51] {
        let row: Vec<String> = (0..)
            .take_while(|q| m > 2 * q + 2)
            .step_by(2)
            .map(|q| format!("q={q}: {:.2}", eta(m, q).unwrap()))
            .collect();
        println!("m = {m:>2}  {}", row.join("  "));
    }

    let (m, q) = (11, 2);
    let problem = Problem::identity_quadratic(2, m)?;
    let oracle = GradientOracle::new(&problem, NoiseModel::AdditiveGaussian { sigma: 0.1 }, 0)?;
    let probes: Vec<Vec<f64>> = [0.1, 0.5, 1.0, 5.0, 20.0].iter().map(|&r| vec![r, 0.0]).collect();
    let report = check_eta_condition(&oracle, &probes, m, q, 0.5)?;
    println!("eta({m}, {q}) = {:.4}, sin(alpha) = 0.5", report.eta);
    for p in &report.per_probe {
        println!(
            "|grad F| = {:>6.2}  eta * sd = {:.4}  sin * |grad F| = {:.4}  holds = {}",
            p.grad_norm, p.lhs, p.rhs, p.holds
        );
    }
    Ok(())
}
