//! Monte Carlo estimates of the resilience angle and moment inflation of a rule
//! under attack, probe by probe.

use brsgd::adversaries::{AttackKind, AttackSpec};
use brsgd::aggregators::{certify_resilience, AggregatorSpec, Rule};
use brsgd::problems::{random_probes, GradientOracle, NoiseModel, Problem};

fn main() -> brsgd::Result<()> {
    let m = 11;
    let problem = Problem::identity_quadratic(2, m)?;
    let oracle = GradientOracle::new(&problem, NoiseModel::AdditiveGaussian { sigma: 0.2 }, 3)?;
    let probes = random_probes(&[3.0, -3.0], 1.0, 5, 4);
    let attack = AttackSpec::new(AttackKind::SignFlip, 2, 10.0);

    for rule in [Rule::Mean, Rule::Krum, Rule::MarginalMedian, Rule::GeometricMedian] {
        let cert = certify_resilience(&AggregatorSpec::new(rule, 2), &oracle, &attack, &probes, 2000, 11)?;
        println!(
            "{:<18} certified = {:<5} sin(alpha) = {:.4}  E = {:.4}",
            rule.name(),
            cert.certified,
            cert.sin_alpha,
            cert.e
        );
        for p in &cert.per_probe {
            println!(
                "    probe {}: {:<22} <Agg, grad> = {:.4e} +- {:.1e}",
                p.probe,
                p.status.name(),
                p.inner_product,
                p.inner_product_stderr
            );
        }
    }
    Ok(())
}
