//! Checks of the convergence theory against simulation output: the weighting-sequence
//! lemma, the finite-`K` complexity bound, rate exponents and the `eta` condition.

use rand::Rng;
use serde::Serialize;

use crate::aggregators::eta;
use crate::error::{Error, Result};
use crate::linalg;
use crate::problems::{GradientOracle, SmoothnessConstants};
use crate::rng::{self, Purpose};
use crate::schedules::Schedule;
use crate::simulator::{estimate_expected_grad_curve, RunResult};

/// Relative tolerance used when matching a run's schedule to the bound's.
const SCHEDULE_RTOL: f64 = 1e-12;

/// Inputs of the finite-`K` bound. `A' = A E`, `B' = B E`, `C' = C E`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `F(w_0) - F_low`.
    pub delta0: f64,
    pub l: f64,
    pub a_prime: f64,
    pub b_prime: f64,
    pub c_prime: f64,
    pub sin_alpha: f64,
    pub schedule: Schedule,
    pub horizon: usize,
}

impl BoundInputs {
    /// Scales `A, B, C` by `e` and pairs them with the matching power-law schedule.
    pub fn from_constants(
        delta0: f64,
        constants: &SmoothnessConstants,
        e: f64,
        sin_alpha: f64,
        p: f64,
        horizon: usize,
    ) -> Self {
        let b_prime = constants.b * e;
        BoundInputs {
            delta0,
            l: constants.l,
            a_prime: constants.a * e,
            b_prime,
            c_prime: constants.c * e,
            sin_alpha,
            schedule: Schedule::power_law_for(constants.l, b_prime, sin_alpha, p),
            horizon,
        }
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        BoundInputs {
            horizon,
            ..self.clone()
        }
    }

    /// The power-law exponent when the schedule is the one the bound assumes.
    pub fn matching_exponent(&self) -> Option<f64> {
        match self.schedule {
            Schedule::PowerLaw { c, p } => {
                let want = (1.0 - self.sin_alpha) / (self.l * self.b_prime);
                let close = (c - want).abs() <= SCHEDULE_RTOL * want.abs();
                (close && p > 0.5 && p < 1.0).then_some(p)
            }
            _ => None,
        }
    }
}

fn bound_from_parts(inputs: &BoundInputs, q: f64, k: usize) -> f64 {
    let num = (inputs.l * inputs.a_prime * q).exp() * (2.0 * inputs.delta0 + inputs.l * inputs.c_prime * q);
    let den = (1.0 - inputs.sin_alpha) * k as f64 * inputs.schedule.alpha(k as i64 - 1);
    (num / den).sqrt()
}

fn check_bound_inputs(inputs: &BoundInputs) -> Result<()> {
    if inputs.horizon == 0 {
        return Err(Error::InvalidSize("bound needs K >= 1".into()));
    }
    if !(0.0..1.0).contains(&inputs.sin_alpha) {
        return Err(Error::Domain(format!(
            "sin(alpha) must lie in [0, 1), got {}",
            inputs.sin_alpha
        )));
    }
    Ok(())
}

/// `sqrt(e^{L A' Q_K} (2 delta0 + L C' Q_K) / ((1 - sin a) K alpha_{K-1}))`, with
/// `Q_K` summed exactly.
pub fn evaluate_corollary2_bound(inputs: &BoundInputs) -> Result<f64> {
    check_bound_inputs(inputs)?;
    let q = inputs.schedule.sum_squares(inputs.horizon);
    Ok(bound_from_parts(inputs, q, inputs.horizon))
}

/// The bound at several horizons in one pass; `ks` need not be sorted.
pub fn bound_curve(inputs: &BoundInputs, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut order: Vec<usize> = ks.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.first() == Some(&0) {
        return Err(Error::InvalidSize("bound needs K >= 1".into()));
    }
    check_bound_inputs(&inputs.with_horizon(1))?;
    let mut out = Vec::with_capacity(order.len());
    let mut q = 0.0;
    let mut done = 0usize;
    for k in order {
        while done < k {
            q += inputs.schedule.alpha(done as i64).powi(2);
            done += 1;
        }
        out.push((k, bound_from_parts(inputs, q, k)));
    }
    Ok(out)
}

/// `Q_K` by direct summation.
pub fn q_k(schedule: &Schedule, horizon: usize) -> f64 {
    schedule.sum_squares(horizon)
}

/// Integral upper estimate for the power law `c (k+1)^{-p}`:
/// `Q_K <= c^2 + int_0^{K-1} c^2 (x+1)^{-2p} dx = c^2 (2p - K^{1-2p}) / (2p - 1)`.
pub fn q_k_integral_bound(c: f64, p: f64, horizon: usize) -> Result<f64> {
    if !(p > 0.5) {
        return Err(Error::Domain(format!("integral estimate needs p > 1/2, got {p}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidSize("Q_K needs K >= 1".into()));
    }
    let k = horizon as f64;
    Ok(c * c * (2.0 * p - k.powf(1.0 - 2.0 * p)) / (2.0 * p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares slope of `log value` against `log K` over points with `K >= k_min`.
pub fn fit_rate_exponent(curve: &[(f64, f64)], k_min: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = curve.iter().copied().filter(|&(k, _)| k >= k_min).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidSize(format!(
            "rate fit needs at least 2 points with K >= {k_min}, got {}",
            pts.len()
        )));
    }
    if let Some(&(k, v)) = pts.iter().find(|&&(k, v)| !(k > 0.0 && v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "rate fit needs positive finite values; got {v} at K = {k}"
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("rate fit needs at least two distinct K".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if pts.len() > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        stderr,
        intercept,
        points: pts.len(),
    })
}

/// Largest relative excess of the lemma's left side over its right side.
#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub trials: usize,
    pub accepted: usize,
    pub discarded: usize,
    /// Number of `(trial, K)` inequalities evaluated.
    pub checks: usize,
    pub violations: usize,
    pub max_relative_violation: f64,
    /// Smallest `rhs / lhs` seen; above 1 means slack everywhere.
    pub min_slack_ratio: f64,
}

/// One instance of the weighting-sequence lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Instance {
    /// `a_{-1}, a_0, ..., a_{K-1}`.
    pub a: Vec<f64>,
    /// `d_0, ..., d_K`.
    pub d: Vec<f64>,
    pub l: f64,
    pub big_a: f64,
    pub c: f64,
}

impl Lemma1Instance {
    pub fn horizon(&self) -> usize {
        self.a.len() - 1
    }

    fn a_k(&self, k: i64) -> f64 {
        self.a[(k + 1) as usize]
    }

    /// `r_k` meeting the hypothesis with equality.
    pub fn r(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|k| {
                let a = self.a_k(k as i64);
                let (dk, dk1) = (self.d[k], self.d[k + 1]);
                (2.0 / a) * ((1.0 + a * a * self.l * self.big_a) * dk - dk1 + self.l * self.c * a * a / 2.0)
            })
            .collect()
    }

    /// `W_0, ..., W_{K-1}` by the recurrence from `W_{-1} = 1`.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.horizon());
        let mut prev = 1.0;
        for k in 0..self.horizon() as i64 {
            let a = self.a_k(k);
            prev *= a / (self.a_k(k - 1) * (1.0 + self.l * self.big_a * a * a));
            out.push(prev);
        }
        out
    }

    /// `(min_{k<K} r_k, rhs)` for `K = 1..=horizon`.
    pub fn sides(&self) -> Vec<(f64, f64)> {
        let r = self.r();
        let w = self.weights();
        let mut out = Vec::with_capacity(r.len());
        let mut min_r = f64::INFINITY;
        let mut weighted = 0.0;
        for k in 0..r.len() {
            min_r = min_r.min(r[k]);
            weighted += self.a_k(k as i64) * w[k];
            let kk = (k + 1) as f64;
            let rhs = 2.0 * self.d[0] / (self.a[0] * kk * w[k]) + self.l * self.c / (kk * w[k]) * weighted;
            out.push((min_r, rhs));
        }
        out
    }
}

fn random_lemma_instance<R: Rng>(rng: &mut R) -> Lemma1Instance {
    let horizon = rng.random_range(1..=60usize);
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
    let mut a = vec![log_uniform(rng, 1e-2, 2.0)];
    for _ in 0..horizon {
        let last = *a.last().expect("non-empty");
        let factor = if rng.random_bool(0.3) { 1.0 } else { rng.random_range(0.5..1.0) };
        a.push(last * factor);
    }
    let mut d = vec![log_uniform(rng, 1e-3, 1e3)];
    for _ in 0..horizon {
        let last = *d.last().expect("non-empty");
        d.push(last * rng.random_range(0.2..1.05));
    }
    Lemma1Instance {
        a,
        d,
        l: log_uniform(rng, 0.1, 10.0),
        big_a: if rng.random_bool(0.2) { 0.0 } else { log_uniform(rng, 1e-3, 2.0) },
        c: if rng.random_bool(0.2) { 0.0 } else { log_uniform(rng, 1e-3, 2.0) },
    }
}

/// Checks the lemma's conclusion on `trials` random instances at every `K` up to each
/// instance's horizon. Instances with some `r_k <= 0` are discarded.
pub fn verify_lemma1(trials: usize, seed: u64) -> Result<Lemma1Report> {
    if trials == 0 {
        return Err(Error::InvalidSize("verify_lemma1 needs trials >= 1".into()));
    }
    let mut report = Lemma1Report {
        trials,
        accepted: 0,
        discarded: 0,
        checks: 0,
        violations: 0,
        max_relative_violation: 0.0,
        min_slack_ratio: f64::INFINITY,
    };
    for t in 0..trials {
        let mut rng = rng::stream(seed, Purpose::Lemma, t as u64, 0);
        let inst = random_lemma_instance(&mut rng);
        if inst.r().iter().any(|&r| !(r > 0.0)) {
            report.discarded += 1;
            continue;
        }
        report.accepted += 1;
        for (lhs, rhs) in inst.sides() {
            report.checks += 1;
            let rel = (lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE);
            if rel > 1e-10 {
                report.violations += 1;
            }
            report.max_relative_violation = report.max_relative_violation.max(rel);
            report.min_slack_ratio = report.min_slack_ratio.min(rhs / lhs);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct EtaProbe {
    pub probe: usize,
    pub grad_norm: f64,
    /// `sqrt(E||G - grad F||^2)`.
    pub noise_sd: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `eta * noise_sd / ||grad F||`; infinite at probes with zero gradient and noise.
    pub min_sin_alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EtaReport {
    pub m: usize,
    pub q: usize,
    pub eta: f64,
    pub sin_alpha: f64,
    pub holds_everywhere: bool,
    /// Smallest `sin a` for which the condition holds at every probe.
    pub min_sin_alpha: f64,
    pub per_probe: Vec<EtaProbe>,
}

/// Evaluates `eta(m, q) sqrt(E||G - grad F||^2) <= sin(a) ||grad F||` at each probe,
/// with the noise variance in closed form.
pub fn check_eta_condition(
    oracle: &GradientOracle<'_>,
    probes: &[Vec<f64>],
    m: usize,
    q: usize,
    sin_alpha: f64,
) -> Result<EtaReport> {
    let eta = eta(m, q)?;
    let problem = oracle.problem();
    let mut per_probe = Vec::with_capacity(probes.len());
    for (i, w) in probes.iter().enumerate() {
        let g = linalg::norm(&problem.full_gradient(w)?);
        let sd = oracle.noise_variance(w)?.max(0.0).sqrt();
        let lhs = eta * sd;
        let rhs = sin_alpha * g;
        let min_sin = if lhs == 0.0 {
            0.0
        } else if g > 0.0 {
            lhs / g
        } else {
            f64::INFINITY
        };
        per_probe.push(EtaProbe {
            probe: i,
            grad_norm: g,
            noise_sd: sd,
            lhs,
            rhs,
            holds: lhs <= rhs,
            min_sin_alpha: min_sin,
        });
    }
    Ok(EtaReport {
        m,
        q,
        eta,
        sin_alpha,
        holds_everywhere: per_probe.iter().all(|p| p.holds),
        min_sin_alpha: per_probe.iter().map(|p| p.min_sin_alpha).fold(0.0, f64::max),
        per_probe,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub k: usize,
    /// Prefix-min of the replication-mean gradient norm over `k < K`.
    pub measured: f64,
    pub stderr: Option<f64>,
    pub bound: f64,
    /// `bound - measured`.
    pub margin: f64,
    /// `margin >= -2 stderr`.
    pub within_error: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Corollary2Report {
    pub rows: Vec<BoundRow>,
    pub all_within_error: bool,
}

/// `{10, 100, ...} ∪ {K}`, capped at `K`.
pub fn decade_grid(horizon: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = std::iter::successors(Some(10usize), |k| k.checked_mul(10))
        .take_while(|&k| k < horizon)
        .collect();
    ks.push(horizon);
    ks
}

/// Compares the measured prefix-min curve of `result` with the bound at each `K` in
/// `ks` (default: [`decade_grid`]). The run must use the bound's power-law schedule.
pub fn verify_corollary2_on_run(
    result: &RunResult,
    inputs: &BoundInputs,
    ks: Option<&[usize]>,
) -> Result<Corollary2Report> {
    if inputs.matching_exponent().is_none() {
        return Err(Error::ScheduleMismatch(format!(
            "bound needs a power law with c = (1 - sin a)/(L B') and p in (1/2, 1); got {:?}",
            inputs.schedule
        )));
    }
    if result.config.schedule != inputs.schedule {
        return Err(Error::ScheduleMismatch(format!(
            "run used {:?}, bound assumes {:?}",
            result.config.schedule, inputs.schedule
        )));
    }
    let horizon = result.config.iterations;
    let grid = ks.map(<[usize]>::to_vec).unwrap_or_else(|| decade_grid(horizon));
    let grid: Vec<usize> = grid.into_iter().filter(|&k| k >= 1 && k <= horizon).collect();
    let curve = estimate_expected_grad_curve(result);
    let bounds = bound_curve(inputs, &grid)?;
    let rows: Vec<BoundRow> = bounds
        .into_iter()
        .filter_map(|(k, bound)| {
            curve.prefix_min_at(k).map(|(measured, stderr)| {
                let margin = bound - measured;
                BoundRow {
                    k,
                    measured,
                    stderr,
                    bound,
                    margin,
                    within_error: margin >= -2.0 * stderr.unwrap_or(0.0),
                }
            })
        })
        .collect();
    Ok(Corollary2Report {
        all_within_error: rows.iter().all(|r| r.within_error),
        rows,
    })
}
