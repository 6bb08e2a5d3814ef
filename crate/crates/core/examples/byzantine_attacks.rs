//! Each attack against the plain mean and against Krum on a noisy quadratic.

use brsgd::adversaries::{AttackKind, AttackSpec};
use brsgd::aggregators::{AggregatorSpec, Rule};
use brsgd::problems::{NoiseModel, ProblemSpec};
use brsgd::schedules::Schedule;
use brsgd::simulator::{self, SimulationConfig};

fn main() -> brsgd::Result<()> {
    let (m, q) = (9, 2);
    println!("{:<22}{:>16}{:>16}", "attack", "mean", "krum");
    for kind in AttackKind::ALL {
        let mut cells = Vec::new();
        for rule in [Rule::Mean, Rule::Krum] {
            let cfg = SimulationConfig::new(
                ProblemSpec::identity_quadratic(3).with_w0(vec![1.0, -2.0, 0.5]),
                NoiseModel::AdditiveGaussian { sigma: 0.1 },
                AggregatorSpec::new(rule, q),
                Schedule::power_law_for(1.0, 1.0, 0.0, 0.6),
                m,
                3000,
            )
            .with_attack(AttackSpec::new(kind, q, 10.0))
            .with_replications(3)
            .with_cadence(3000)
            .with_seed(7);
            let res = simulator::run(&cfg)?;
            let diverged = res.replications.iter().filter(|r| r.diverged()).count();
            cells.push(if diverged > 0 {
                format!("diverged {diverged}/3")
            } else {
                let mean = res.replications.iter().map(|r| r.final_grad_norm).sum::<f64>() / 3.0;
                format!("{mean:.3e}")
            });
        }
        println!("{:<22}{:>16}{:>16}", kind.name(), cells[0], cells[1]);
    }
    Ok(())
}
