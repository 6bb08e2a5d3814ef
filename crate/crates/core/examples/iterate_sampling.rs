//! The weighting sequence behind the randomly sampled output iterate, and draws
//! from it.

use brsgd::rng::{self, Purpose};
use brsgd::schedules::{validate_schedule, IterateSampler, Schedule, WeightingSequence};

fn main() -> brsgd::Result<()> {
    let schedule = Schedule::PowerLaw { c: 0.5, p: 0.7 };
    let horizon = 20;
    println!("{}", validate_schedule(&schedule, horizon, 1.0, 2.0, 0.0).summary());

    let ws = WeightingSequence::new(&schedule, 1.0, 2.0, horizon)?;
    let probs = ws.iterate_distribution(horizon);
    let sampler = IterateSampler::new(&ws, horizon)?;
    let mut rng = rng::stream(0, Purpose::Sampler, 0, 0);
    let draws = 100_000;
    let mut counts = vec![0usize; horizon];
    for _ in 0..draws {
        counts[sampler.sample(&mut rng)] += 1;
    }
    println!("{:>3} {:>10} {:>10} {:>10} {:>10}", "k", "alpha_k", "W_k", "P(R=k)", "empirical");
    for k in 0..horizon {
        println!(
            "{k:>3} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            ws.alpha(k),
            ws.w(k as i64),
            probs[k],
            counts[k] as f64 / draws as f64
        );
    }
    Ok(())
}
