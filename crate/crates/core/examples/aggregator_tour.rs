//! Every aggregation rule on the same honest cloud plus two outliers.

use brsgd::aggregators::{aggregate, AggregatorSpec, Rule};
use brsgd::linalg;

fn main() -> brsgd::Result<()> {
    let mut vectors = vec![
        vec![1.0, 0.9],
        vec![1.1, 1.0],
        vec![0.9, 1.1],
        vec![1.0, 1.0],
        vec![1.2, 0.8],
        vec![0.8, 1.2],
        vec![1.05, 0.95],
        vec![0.95, 1.05],
        vec![1.0, 1.1],
    ];
    vectors.push(vec![-50.0, 40.0]);
    vectors.push(vec![60.0, -70.0]);
    let q = 2;

    for rule in Rule::ALL {
        let spec = AggregatorSpec::new(rule, q);
        match aggregate(&spec, &vectors) {
            Ok(v) => println!(
                "{:<20} [{:>8.4}, {:>8.4}]  distance to (1, 1): {:.4}",
                rule.name(),
                v[0],
                v[1],
                linalg::dist(&v, &[1.0, 1.0])
            ),
            Err(e) => println!("{:<20} {e}", rule.name()),
        }
    }
    Ok(())
}
