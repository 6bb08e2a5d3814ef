//! Gradient aggregation rules `Agg: (R^d)^m -> R^d`, the `eta(m, q)` constant, and
//! Monte-Carlo resilience certification.

mod certify;
pub mod rules;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use certify::{certify_resilience, CertificateStatus, ProbeCertificate, ResilienceCertificate};
pub use rules::{bulyan, geometric_median, krum, krum_index, marginal_median, mean_around_median, KRUM_TIE_RTOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Mean,
    Krum,
    MarginalMedian,
    GeometricMedian,
    MeanAroundMedian,
    Bulyan,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Mean => "mean",
            Rule::Krum => "krum",
            Rule::MarginalMedian => "marginal-median",
            Rule::GeometricMedian => "geometric-median",
            Rule::MeanAroundMedian => "mean-around-median",
            Rule::Bulyan => "bulyan",
        }
    }

    pub const ALL: [Rule; 6] = [
        Rule::Mean,
        Rule::Krum,
        Rule::MarginalMedian,
        Rule::GeometricMedian,
        Rule::MeanAroundMedian,
        Rule::Bulyan,
    ];
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown aggregation rule `{s}`")))
    }
}

/// Which rule to apply and with which parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorSpec {
    pub rule: Rule,
    /// Declared adversary budget.
    #[serde(default)]
    pub q: usize,
    /// Krum neighbour count; defaults to `m - q - 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighbors: Option<usize>,
    #[serde(default = "default_base_rule")]
    pub base_rule: Rule,
    #[serde(default = "default_tol")]
    pub weiszfeld_tol: f64,
    #[serde(default = "default_max_iter")]
    pub weiszfeld_max_iter: usize,
}

fn default_base_rule() -> Rule {
    Rule::Krum
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    100_000
}

impl AggregatorSpec {
    pub fn new(rule: Rule, q: usize) -> Self {
        AggregatorSpec {
            rule,
            q,
            neighbors: None,
            base_rule: default_base_rule(),
            weiszfeld_tol: default_tol(),
            weiszfeld_max_iter: default_max_iter(),
        }
    }

    pub fn with_base_rule(mut self, base: Rule) -> Self {
        self.base_rule = base;
        self
    }

    /// Checks the rule's `(m, q)` constraints.
    pub fn validate(&self, m: usize) -> Result<()> {
        let q = self.q;
        if m == 0 {
            return Err(Error::Constraint("aggregation needs m >= 1".into()));
        }
        if !(self.weiszfeld_tol > 0.0) || self.weiszfeld_max_iter == 0 {
            return Err(Error::Config(
                "weiszfeld_tol must be > 0 and weiszfeld_max_iter >= 1".into(),
            ));
        }
        match self.rule {
            Rule::Mean | Rule::MarginalMedian | Rule::GeometricMedian => Ok(()),
            Rule::Krum => {
                let nb = self.krum_neighbors(m);
                if nb < 1 || nb as usize > m.saturating_sub(1) {
                    Err(Error::Constraint(format!(
                        "krum needs 1 <= neighbours <= m - 1 (m = {m}, q = {q}, neighbours = {nb})"
                    )))
                } else {
                    Ok(())
                }
            }
            Rule::MeanAroundMedian => {
                if m <= q {
                    Err(Error::Constraint(format!(
                        "mean-around-median needs m - q >= 1 (m = {m}, q = {q})"
                    )))
                } else {
                    Ok(())
                }
            }
            Rule::Bulyan => {
                if self.base_rule == Rule::Bulyan {
                    return Err(Error::Config("bulyan cannot use itself as base rule".into()));
                }
                if m < 4 * q + 3 {
                    Err(Error::Constraint(format!(
                        "bulyan needs m >= 4q + 3 (m = {m}, q = {q})"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn krum_neighbors(&self, m: usize) -> isize {
        self.neighbors
            .map(|n| n as isize)
            .unwrap_or(m as isize - self.q as isize - 2)
    }
}

/// `A_k = Agg(vectors)` under `spec`.
pub fn aggregate<V: AsRef<[f64]>>(spec: &AggregatorSpec, vectors: &[V]) -> Result<Vec<f64>> {
    let m = vectors.len();
    if m == 0 {
        return Err(Error::InvalidSize("no vectors to aggregate".into()));
    }
    let d = vectors[0].as_ref().len();
    if let Some(bad) = vectors.iter().find(|v| v.as_ref().len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.as_ref().len(),
        });
    }
    spec.validate(m)?;
    Ok(match spec.rule {
        Rule::Mean => linalg::mean(vectors),
        Rule::Krum => {
            let nb = spec.krum_neighbors(m) as usize;
            vectors[krum_index(vectors, nb)].as_ref().to_vec()
        }
        Rule::MarginalMedian => marginal_median(vectors),
        Rule::GeometricMedian => {
            geometric_median(vectors, spec.weiszfeld_tol, spec.weiszfeld_max_iter)
        }
        Rule::MeanAroundMedian => mean_around_median(vectors, spec.q),
        Rule::Bulyan => bulyan(
            vectors,
            spec.q,
            spec.base_rule,
            spec.weiszfeld_tol,
            spec.weiszfeld_max_iter,
        ),
    })
}

/// `eta(m, q) = sqrt(2 (m - q + (q (m - q - 2) + q^2 (m - q - 1)) / (m - 2q - 2)))`,
/// defined for `m > 2q + 2`.
pub fn eta(m: usize, q: usize) -> Result<f64> {
    if m <= 2 * q + 2 {
        return Err(Error::Domain(format!("eta needs m > 2q + 2 (m = {m}, q = {q})")));
    }
    let (m, q) = (m as f64, q as f64);
    let inner = m - q + (q * (m - q - 2.0) + q * q * (m - q - 1.0)) / (m - 2.0 * q - 2.0);
    Ok((2.0 * inner).sqrt())
}
