//! Byzantine gradient generators.
//!
//! An attack replaces the entries of `q` nodes with crafted vectors `(B_i)_k`, which
//! may depend on every honest gradient, the current iterate, the step size and the
//! iteration counter. Honest entries are passed through bit for bit.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    /// Byzantine nodes send zero (drop-out).
    Zero,
    /// Own honest gradient plus `N(0, magnitude^2 I)` noise.
    GaussianBlast,
    /// `-magnitude * mean(honest)`.
    SignFlip,
    /// Vectors chosen so the plain mean equals `-magnitude * mean(non-Byzantine)`.
    OmniscientOpposite,
    /// All adversaries send `mu - magnitude * s`, with `mu`, `s` the coordinatewise
    /// mean and standard deviation of the non-Byzantine gradients.
    ColludingClone,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Zero => "zero",
            AttackKind::GaussianBlast => "gaussian-blast",
            AttackKind::SignFlip => "sign-flip",
            AttackKind::OmniscientOpposite => "omniscient-opposite",
            AttackKind::ColludingClone => "colluding-clone",
        }
    }

    pub const ALL: [AttackKind; 6] = [
        AttackKind::None,
        AttackKind::Zero,
        AttackKind::GaussianBlast,
        AttackKind::SignFlip,
        AttackKind::OmniscientOpposite,
        AttackKind::ColludingClone,
    ];
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Nodes `0..q`.
    #[default]
    Fixed,
    /// A fresh uniformly random `q`-subset every iteration.
    Resampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Number of Byzantine nodes actually present.
    #[serde(default)]
    pub q: usize,
    #[serde(default)]
    pub placement: Placement,
    /// Attack strength; its meaning depends on `kind`.
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
}

fn default_magnitude() -> f64 {
    1.0
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec::none()
    }
}

/// Iteration context visible to the adversary.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub w: &'a [f64],
    pub alpha_k: f64,
    pub k: u64,
}

/// The vectors the server receives, plus the Byzantine index set (sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    pub vectors: Vec<Vec<f64>>,
    pub byzantine: Vec<usize>,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            q: 0,
            placement: Placement::Fixed,
            magnitude: default_magnitude(),
        }
    }

    pub fn new(kind: AttackKind, q: usize, magnitude: f64) -> Self {
        AttackSpec {
            kind,
            q,
            placement: Placement::Fixed,
            magnitude,
        }
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    /// Number of entries actually replaced.
    pub fn effective_q(&self) -> usize {
        if self.kind == AttackKind::None {
            0
        } else {
            self.q
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.q >= m {
            return Err(Error::Constraint(format!(
                "adversary count q = {} must be below m = {m}",
                self.q
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Config("attack magnitude must be finite".into()));
        }
        Ok(())
    }

    /// Byzantine index set at iteration `k`.
    pub fn byzantine_indices(&self, m: usize, k: u64, seed: u64) -> Vec<usize> {
        let q = self.effective_q();
        match self.placement {
            Placement::Fixed => (0..q).collect(),
            Placement::Resampled => {
                let mut rng = rng::stream(seed, Purpose::Placement, k, 0);
                let mut idx = rand::seq::index::sample(&mut rng, m, q).into_vec();
                idx.sort_unstable();
                idx
            }
        }
    }

    /// Replaces the Byzantine entries of `honest`.
    pub fn corrupt(&self, honest: &[Vec<f64>], ctx: &AttackContext<'_>, seed: u64) -> Result<Corrupted> {
        let m = honest.len();
        self.validate(m)?;
        let byzantine = self.byzantine_indices(m, ctx.k, seed);
        let mut vectors = honest.to_vec();
        if byzantine.is_empty() {
            return Ok(Corrupted { vectors, byzantine });
        }
        let d = honest[0].len();
        let c = self.magnitude;
        let is_byz = |i: usize| byzantine.binary_search(&i).is_ok();
        let good: Vec<&Vec<f64>> = (0..m).filter(|&i| !is_byz(i)).map(|i| &honest[i]).collect();
        let good_mean = linalg::mean(&good);

        match self.kind {
            AttackKind::None => unreachable!("effective_q is zero"),
            AttackKind::Zero => {
                for &i in &byzantine {
                    vectors[i] = vec![0.0; d];
                }
            }
            AttackKind::GaussianBlast => {
                let mut rng = rng::stream(seed, Purpose::Attack, ctx.k, 0);
                for &i in &byzantine {
                    for x in &mut vectors[i] {
                        *x += c * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            AttackKind::SignFlip => {
                let b = linalg::scale(&linalg::mean(honest), -c);
                for &i in &byzantine {
                    vectors[i] = b.clone();
                }
            }
            AttackKind::OmniscientOpposite => {
                // m * target = sum(good) + q * b
                let q = byzantine.len() as f64;
                let mut b = linalg::scale(&good_mean, -c * m as f64);
                for g in &good {
                    linalg::axpy(&mut b, -1.0, g);
                }
                let b = linalg::scale(&b, 1.0 / q);
                for &i in &byzantine {
                    vectors[i] = b.clone();
                }
            }
            AttackKind::ColludingClone => {
                let n = good.len() as f64;
                let b: Vec<f64> = (0..d)
                    .map(|j| {
                        let var = good.iter().map(|g| (g[j] - good_mean[j]).powi(2)).sum::<f64>() / n;
                        good_mean[j] - c * var.sqrt()
                    })
                    .collect();
                for &i in &byzantine {
                    vectors[i] = b.clone();
                }
            }
        }
        Ok(Corrupted { vectors, byzantine })
    }
}
