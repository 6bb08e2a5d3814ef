//! Monte-Carlo certification of the resilience conditions
//! `<E[A], grad F> >= (1 - sin a) ||grad F||^2` and `E||A||^2 <= E * E||G||^2`.
//!
//! The certificate is empirical: at each probe it estimates both sides with
//! standard errors and reports the smallest `sin a` and `E` consistent with every
//! probe. A probe whose inner product is negative beyond two standard errors is a
//! failure, never a certificate.

use serde::Serialize;

use super::{aggregate, AggregatorSpec};
use crate::adversaries::{AttackContext, AttackSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, RunningStats};
use crate::problems::GradientOracle;
use crate::rng::{self, Purpose};

/// Step size handed to the adversary during certification.
const CERTIFY_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    Certified,
    /// Inner product negative beyond two standard errors.
    NegativeInnerProduct,
    /// Inner product not positive, but within error bars of zero.
    Inconclusive,
    /// `grad F = 0` at the probe; skipped.
    Degenerate,
}

impl CertificateStatus {
    pub fn name(self) -> &'static str {
        match self {
            CertificateStatus::Certified => "certified",
            CertificateStatus::NegativeInnerProduct => "negative-inner-product",
            CertificateStatus::Inconclusive => "inconclusive",
            CertificateStatus::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeCertificate {
    pub probe: usize,
    pub status: CertificateStatus,
    pub grad_norm_sq: f64,
    /// `<E^[A], grad F>` and its standard error.
    pub inner_product: f64,
    pub inner_product_stderr: f64,
    /// `1 - <E^[A], grad F> / ||grad F||^2`, clamped below at zero.
    pub sin_alpha_hat: f64,
    pub sin_alpha_stderr: f64,
    pub agg_second_moment: f64,
    pub grad_second_moment: f64,
    /// `E^||A||^2 / E^||G||^2`.
    pub e_hat: f64,
    pub e_stderr: f64,
    /// Monte-Carlo `E||G - grad F||^2`, used to size statistical slack.
    pub noise_variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResilienceCertificate {
    pub certified: bool,
    /// Smallest `sin a` making the inner-product condition hold at every probe.
    pub sin_alpha: f64,
    pub alpha: f64,
    /// Smallest `E` making the second-moment condition hold at every probe.
    pub e: f64,
    pub probes_used: usize,
    pub probes_skipped: usize,
    pub draws: usize,
    pub note: String,
    pub per_probe: Vec<ProbeCertificate>,
}

/// Estimates `(sin a, E)` for `spec` under `attack` at each probe from `draws`
/// rounds of honest sampling, corruption and aggregation.
pub fn certify_resilience(
    spec: &AggregatorSpec,
    oracle: &GradientOracle<'_>,
    attack: &AttackSpec,
    probe_points: &[Vec<f64>],
    draws: usize,
    seed: u64,
) -> Result<ResilienceCertificate> {
    let problem = oracle.problem();
    let m = problem.nodes();
    if draws < 100 {
        return Err(Error::InvalidSize(format!("certification needs draws >= 100, got {draws}")));
    }
    if probe_points.is_empty() {
        return Err(Error::Degenerate("no probe points".into()));
    }
    spec.validate(m)?;
    attack.validate(m)?;

    let mut per_probe = Vec::with_capacity(probe_points.len());
    for (pi, w) in probe_points.iter().enumerate() {
        let grad = problem.full_gradient(w)?;
        let g2 = linalg::norm_sq(&grad);
        let probe_oracle = oracle.reseeded(rng::derive_seed(seed, Purpose::Certify, pi as u64, 0));
        let attack_seed = rng::derive_seed(seed, Purpose::Certify, pi as u64, 1);

        if g2 == 0.0 {
            per_probe.push(ProbeCertificate {
                probe: pi,
                status: CertificateStatus::Degenerate,
                grad_norm_sq: 0.0,
                inner_product: 0.0,
                inner_product_stderr: 0.0,
                sin_alpha_hat: f64::NAN,
                sin_alpha_stderr: f64::NAN,
                agg_second_moment: f64::NAN,
                grad_second_moment: f64::NAN,
                e_hat: f64::NAN,
                e_stderr: f64::NAN,
                noise_variance: f64::NAN,
            });
            continue;
        }

        let mut inner = RunningStats::default();
        let mut agg_sq = RunningStats::default();
        let mut grad_sq = RunningStats::default();
        let mut noise = RunningStats::default();
        for t in 0..draws {
            let honest: Vec<Vec<f64>> = (0..m)
                .map(|i| probe_oracle.sample_gradient(w, i, t as u64))
                .collect::<Result<_>>()?;
            for g in &honest {
                grad_sq.push(linalg::norm_sq(g));
                noise.push(linalg::dist_sq(g, &grad));
            }
            let ctx = AttackContext {
                w,
                alpha_k: CERTIFY_ALPHA,
                k: t as u64,
            };
            let received = attack.corrupt(&honest, &ctx, attack_seed)?;
            let a = aggregate(spec, &received.vectors)?;
            inner.push(linalg::dot(&a, &grad));
            agg_sq.push(linalg::norm_sq(&a));
        }

        let ip = inner.mean();
        let ip_se = inner.stderr();
        let status = if ip + 2.0 * ip_se < 0.0 {
            CertificateStatus::NegativeInnerProduct
        } else if ip <= 0.0 {
            CertificateStatus::Inconclusive
        } else {
            CertificateStatus::Certified
        };
        let (ma, mg) = (agg_sq.mean(), grad_sq.mean());
        let e_hat = if mg > 0.0 { ma / mg } else if ma == 0.0 { 1.0 } else { f64::INFINITY };
        let rel = |se: f64, mean: f64| if mean > 0.0 { se / mean } else { 0.0 };
        let e_stderr = e_hat * rel(agg_sq.stderr(), ma).hypot(rel(grad_sq.stderr(), mg));
        per_probe.push(ProbeCertificate {
            probe: pi,
            status,
            grad_norm_sq: g2,
            inner_product: ip,
            inner_product_stderr: ip_se,
            sin_alpha_hat: (1.0 - ip / g2).max(0.0),
            sin_alpha_stderr: ip_se / g2,
            agg_second_moment: ma,
            grad_second_moment: mg,
            e_hat,
            e_stderr,
            noise_variance: noise.mean(),
        });
    }

    let used: Vec<&ProbeCertificate> = per_probe
        .iter()
        .filter(|p| p.status != CertificateStatus::Degenerate)
        .collect();
    if used.is_empty() {
        return Err(Error::Degenerate("grad F vanishes at every probe".into()));
    }
    let skipped = per_probe.len() - used.len();
    let failures = used
        .iter()
        .filter(|p| p.status != CertificateStatus::Certified)
        .count();
    let certified = failures == 0;
    let sin_alpha = used.iter().map(|p| p.sin_alpha_hat).fold(0.0, f64::max);
    let e = used.iter().map(|p| p.e_hat).fold(0.0, f64::max);
    let mut note = format!(
        "empirical estimate from {draws} draws at {} probes; bars are one standard error",
        used.len()
    );
    if skipped > 0 {
        note.push_str(&format!("; {skipped} probe(s) with zero gradient skipped"));
    }
    if !certified {
        note.push_str(&format!("; {failures} probe(s) violate the inner-product condition"));
    }
    Ok(ResilienceCertificate {
        certified,
        sin_alpha,
        alpha: if certified { sin_alpha.min(1.0).asin() } else { f64::NAN },
        e,
        probes_used: used.len(),
        probes_skipped: skipped,
        draws,
        note,
        per_probe,
    })
}
