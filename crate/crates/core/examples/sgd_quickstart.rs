//! Plain distributed SGD on a least-squares problem: mean aggregation, no attack.

use brsgd::aggregators::{AggregatorSpec, Rule};
use brsgd::problems::{NoiseModel, ObjectiveKind, ProblemSpec};
use brsgd::schedules::Schedule;
use brsgd::simulator::{self, SimulationConfig};

fn main() -> brsgd::Result<()> {
    let cfg = SimulationConfig::new(
        ProblemSpec::new(ObjectiveKind::Quadratic, 4),
        NoiseModel::Subsampling { batch: 8 },
        AggregatorSpec::new(Rule::Mean, 0),
        Schedule::PowerLaw { c: 0.2, p: 0.6 },
        8,
        2000,
    )
    .with_replications(4)
    .with_cadence(250)
    .with_seed(1);

    let res = simulator::run(&cfg)?;
    println!("F(w0) - F* = {:.4e}", res.delta0);
    for rec in &res.replications[0].records {
        println!("k = {:>5}  |grad F| = {:.4e}  gap = {:.4e}", rec.k, rec.grad_norm, rec.obj_gap);
    }
    for rep in &res.replications {
        println!("replication {}: final |grad F| = {:.4e}", rep.replication, rep.final_grad_norm);
    }
    Ok(())
}
