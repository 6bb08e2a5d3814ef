//! Measured prefix-minimum gradient norm against the theoretical complexity bound,
//! with fitted rate exponents.

use brsgd::aggregators::{AggregatorSpec, Rule};
use brsgd::analysis::{bound_curve, fit_rate_exponent, verify_corollary2_on_run, BoundInputs};
use brsgd::problems::{NoiseModel, ProblemSpec, Provenance, SmoothnessConstants};
use brsgd::simulator::{self, estimate_expected_grad_curve, SimulationConfig};

fn main() -> brsgd::Result<()> {
    let sigma = 0.5;
    // identity quadratic in one dimension: L = 1, B = 1, C = sigma^2
    let constants = SmoothnessConstants {
        l: 1.0,
        f_low: 0.0,
        a: 0.0,
        b: 1.0,
        c: sigma * sigma,
        lipschitz_source: Provenance::Analytic,
        moment_source: Provenance::Analytic,
    };
    let horizon = 5000;
    let inputs = BoundInputs::from_constants(2.0, &constants, 1.0, 0.0, 0.6, horizon);
    let cfg = SimulationConfig::new(
        ProblemSpec::identity_quadratic(1).with_w0(vec![2.0]),
        NoiseModel::AdditiveGaussian { sigma },
        AggregatorSpec::new(Rule::Mean, 0),
        inputs.schedule.clone(),
        5,
        horizon,
    )
    .with_replications(20)
    .with_seed(2);
    let res = simulator::run(&cfg)?;

    let report = verify_corollary2_on_run(&res, &inputs, None)?;
    for row in &report.rows {
        println!(
            "K = {:>5}  measured {:.4e}  bound {:.4e}  margin {:.4e}",
            row.k, row.measured, row.bound, row.margin
        );
    }

    let k_min = horizon / 10;
    let ks: Vec<usize> = (k_min..=horizon).collect();
    let bound: Vec<(f64, f64)> = bound_curve(&inputs, &ks)?
        .into_iter()
        .map(|(k, b)| (k as f64, b))
        .collect();
    let curve = estimate_expected_grad_curve(&res);
    let b = fit_rate_exponent(&bound, k_min as f64)?;
    let m = fit_rate_exponent(&curve.prefix_min_series(), k_min as f64)?;
    println!("bound slope {:.4}, measured slope {:.4} +- {:.4}", b.slope, m.slope, m.stderr);
    Ok(())
}
