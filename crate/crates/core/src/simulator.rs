//! Replicated runs of the Byzantine-resilient SGD loop.
//!
//! Each iteration: every node draws an honest stochastic gradient from its own
//! `(node, k)` stream, the adversary replaces `q` of them, the server aggregates and
//! steps `w_{k+1} = w_k - alpha_k A_k`. Replications run in parallel but only ever
//! read their own pre-assigned streams, so results do not depend on scheduling.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversaries::{AttackContext, AttackSpec};
use crate::aggregators::{aggregate, AggregatorSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, RunningStats};
use crate::problems::{GradientOracle, NoiseModel, Problem, ProblemSpec, SmoothnessConstants};
use crate::rng::{self, Purpose};
use crate::schedules::{IterateSampler, Schedule, ScheduleReport, WeightingSequence};

/// Iterates with a larger norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Constants of the weighting sequence used to draw `R_K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingParams {
    pub l: f64,
    pub a_prime: f64,
}

impl Default for WeightingParams {
    /// `L A' = 0`: `W_k` proportional to `alpha_k`.
    fn default() -> Self {
        WeightingParams { l: 1.0, a_prime: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub problem: ProblemSpec,
    pub oracle: NoiseModel,
    pub aggregator: AggregatorSpec,
    pub attack: AttackSpec,
    pub schedule: Schedule,
    /// Node count `m`.
    pub nodes: usize,
    /// Iteration budget `K`.
    pub iterations: usize,
    pub replications: usize,
    pub seed: u64,
    /// Record every `cadence`-th iteration.
    pub cadence: usize,
    #[serde(default)]
    pub iterate_weighting: WeightingParams,
}

impl SimulationConfig {
    pub fn new(
        problem: ProblemSpec,
        oracle: NoiseModel,
        aggregator: AggregatorSpec,
        schedule: Schedule,
        nodes: usize,
        iterations: usize,
    ) -> Self {
        SimulationConfig {
            problem,
            oracle,
            aggregator,
            attack: AttackSpec::none(),
            schedule,
            nodes,
            iterations,
            replications: 1,
            seed: 0,
            cadence: 1,
            iterate_weighting: WeightingParams::default(),
        }
    }

    pub fn with_attack(mut self, attack: AttackSpec) -> Self {
        self.attack = attack;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_cadence(mut self, cadence: usize) -> Self {
        self.cadence = cadence;
        self
    }

    /// Cross-module constraint checks; run before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.iterations == 0 || self.replications == 0 || self.cadence == 0 {
            return Err(Error::Config(
                "nodes, iterations, replications and cadence must all be >= 1".into(),
            ));
        }
        self.attack.validate(self.nodes)?;
        self.aggregator.validate(self.nodes)?;
        self.schedule.validate_params()?;
        self.problem.initial_point()?;
        let wp = self.iterate_weighting;
        if !(wp.l > 0.0) || !(wp.a_prime >= 0.0) {
            return Err(Error::Config("iterate weighting needs L > 0, A' >= 0".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        rng::derive_seed(self.seed, Purpose::Data, 0, 0)
    }

    pub fn replication_seed(&self, r: usize) -> u64 {
        rng::derive_seed(self.seed, Purpose::Replication, r as u64, 0)
    }

    pub fn build_problem(&self) -> Result<Problem> {
        Problem::from_spec(&self.problem, self.nodes, self.data_seed())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `||grad F(w_k)||`, exact.
    pub grad_norm: f64,
    /// `F(w_k) - F_low`.
    pub obj_gap: f64,
    pub agg_norm: f64,
    pub alpha: f64,
    pub corrupted: Vec<usize>,
    /// The step taken here produced a non-finite or exploding iterate.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationTrace {
    pub replication: usize,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub diverged_at: Option<usize>,
    pub final_w: Vec<f64>,
    /// `||grad F(w_K)||`; infinite for diverged replications.
    pub final_grad_norm: f64,
    pub final_obj_gap: f64,
    pub sampled_index: usize,
    /// `||grad F(w_{R_K})||`.
    pub sampled_grad_norm: f64,
}

impl ReplicationTrace {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: SimulationConfig,
    pub f_low: f64,
    pub w0: Vec<f64>,
    /// `F(w_0) - F_low`.
    pub delta0: f64,
    pub replications: Vec<ReplicationTrace>,
    pub wall_time_secs: f64,
}

/// Everything a single iteration needs.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub problem: &'a Problem,
    pub oracle: GradientOracle<'a>,
    pub aggregator: &'a AggregatorSpec,
    pub attack: &'a AttackSpec,
    pub schedule: &'a Schedule,
    pub attack_seed: u64,
}

/// One iteration from `w = w_k`. The record describes `w_k` and the step taken.
pub fn step(w: &[f64], k: usize, ctx: &StepContext<'_>) -> Result<(Vec<f64>, IterationRecord)> {
    let m = ctx.problem.nodes();
    let grad = ctx.problem.full_gradient(w)?;
    let obj_gap = ctx.problem.objective(w)? - ctx.problem.f_low();
    let honest: Vec<Vec<f64>> = (0..m)
        .map(|i| ctx.oracle.sample_gradient(w, i, k as u64))
        .collect::<Result<_>>()?;
    let alpha = ctx.schedule.alpha(k as i64);
    let attack_ctx = AttackContext {
        w,
        alpha_k: alpha,
        k: k as u64,
    };
    let received = ctx.attack.corrupt(&honest, &attack_ctx, ctx.attack_seed)?;
    let agg = aggregate(ctx.aggregator, &received.vectors)?;
    let mut next = w.to_vec();
    linalg::axpy(&mut next, -alpha, &agg);
    let record = IterationRecord {
        k,
        grad_norm: linalg::norm(&grad),
        obj_gap,
        agg_norm: linalg::norm(&agg),
        alpha,
        corrupted: received.byzantine,
        diverged: false,
    };
    Ok((next, record))
}

fn is_divergent(w: &[f64]) -> bool {
    !linalg::is_finite(w) || linalg::norm(w) > DIVERGENCE_NORM
}

fn run_replication(
    config: &SimulationConfig,
    problem: &Problem,
    sampler: &IterateSampler,
    w0: &[f64],
    r: usize,
) -> Result<ReplicationTrace> {
    let seed = config.replication_seed(r);
    let ctx = StepContext {
        problem,
        oracle: GradientOracle::new(problem, config.oracle, rng::derive_seed(seed, Purpose::Oracle, 0, 0))?,
        aggregator: &config.aggregator,
        attack: &config.attack,
        schedule: &config.schedule,
        attack_seed: rng::derive_seed(seed, Purpose::Attack, 0, 0),
    };
    let sampled_index = sampler.sample(&mut rng::stream(seed, Purpose::Sampler, 0, 0));
    let mut sampled_grad_norm = f64::INFINITY;
    let mut records = Vec::with_capacity(config.iterations / config.cadence + 1);
    let mut diverged_at = None;
    let mut w = w0.to_vec();
    for k in 0..config.iterations {
        let (next, mut rec) = step(&w, k, &ctx)?;
        if k == sampled_index {
            sampled_grad_norm = rec.grad_norm;
        }
        if is_divergent(&next) {
            rec.diverged = true;
            records.push(rec);
            diverged_at = Some(k);
            w = next;
            break;
        }
        if k % config.cadence == 0 {
            records.push(rec);
        }
        w = next;
    }
    let (final_grad_norm, final_obj_gap) = if diverged_at.is_some() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (
            linalg::norm(&problem.full_gradient(&w)?),
            problem.objective(&w)? - problem.f_low(),
        )
    };
    Ok(ReplicationTrace {
        replication: r,
        seed,
        records,
        diverged_at,
        final_w: w,
        final_grad_norm,
        final_obj_gap,
        sampled_index,
        sampled_grad_norm,
    })
}

/// Runs `config.replications` independent replications.
pub fn run(config: &SimulationConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let problem = config.build_problem()?;
    let w0 = config.problem.initial_point()?;
    if w0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: w0.len(),
        });
    }
    // surfaces oracle configuration errors before any replication starts
    GradientOracle::new(&problem, config.oracle, 0)?;
    let wp = config.iterate_weighting;
    let ws = WeightingSequence::new(&config.schedule, wp.l, wp.a_prime, config.iterations)?;
    let sampler = IterateSampler::new(&ws, config.iterations)?;

    let replications = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, &problem, &sampler, &w0, r))
        .collect::<Result<Vec<_>>>()?;

    Ok(RunResult {
        config: config.clone(),
        f_low: problem.f_low(),
        delta0: problem.objective(&w0)? - problem.f_low(),
        w0,
        replications,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    /// Replication mean of `||grad F(w_k)||`; infinite if any replication diverged
    /// before `k`.
    pub mean: f64,
    pub stderr: Option<f64>,
    /// `min_{j <= k} mean_j` over recorded iterations.
    pub prefix_min: f64,
    pub prefix_min_stderr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCurve {
    pub replications: usize,
    pub points: Vec<CurvePoint>,
}

impl GradCurve {
    /// Prefix-min estimate of `min_{k<K} E||grad F(w_k)||` with its standard error.
    pub fn prefix_min_at(&self, horizon: usize) -> Option<(f64, Option<f64>)> {
        self.points
            .iter()
            .take_while(|p| p.k < horizon)
            .last()
            .map(|p| (p.prefix_min, p.prefix_min_stderr))
    }

    /// `(K, prefix-min)` pairs with `K = k + 1`.
    pub fn prefix_min_series(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| ((p.k + 1) as f64, p.prefix_min))
            .collect()
    }
}

/// Per recorded `k`: replication mean and standard error of `||grad F(w_k)||`, plus
/// the running prefix minimum of the mean.
pub fn estimate_expected_grad_curve(result: &RunResult) -> GradCurve {
    let reps = &result.replications;
    let longest = reps.iter().max_by_key(|r| r.records.len());
    let ks: Vec<usize> = longest
        .map(|r| r.records.iter().filter(|rec| !rec.diverged).map(|rec| rec.k).collect())
        .unwrap_or_default();
    let mut cursors = vec![0usize; reps.len()];
    let mut points = Vec::with_capacity(ks.len());
    let mut best: Option<(f64, Option<f64>)> = None;
    for k in ks {
        let mut stats = RunningStats::default();
        let mut missing = false;
        for (rep, cur) in reps.iter().zip(cursors.iter_mut()) {
            while *cur < rep.records.len() && rep.records[*cur].k < k {
                *cur += 1;
            }
            match rep.records.get(*cur) {
                Some(rec) if rec.k == k && !rec.diverged => stats.push(rec.grad_norm),
                _ => missing = true,
            }
        }
        let (mean, stderr) = if missing {
            (f64::INFINITY, None)
        } else {
            let se = (stats.count() >= 2).then(|| stats.stderr());
            (stats.mean(), se)
        };
        if best.is_none_or(|(b, _)| mean < b) {
            best = Some((mean, stderr));
        }
        let (prefix_min, prefix_min_stderr) = best.expect("set above");
        points.push(CurvePoint {
            k,
            mean,
            stderr,
            prefix_min,
            prefix_min_stderr,
        });
    }
    GradCurve {
        replications: reps.len(),
        points,
    }
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub const TRACE_HEADER: [&str; 8] = [
    "replication",
    "k",
    "grad_norm",
    "obj_gap",
    "agg_norm",
    "alpha_k",
    "corrupted_indices",
    "diverged",
];

pub fn trace_row(replication: usize, rec: &IterationRecord) -> Vec<String> {
    vec![
        replication.to_string(),
        rec.k.to_string(),
        fmt_f64(rec.grad_norm),
        fmt_f64(rec.obj_gap),
        fmt_f64(rec.agg_norm),
        fmt_f64(rec.alpha),
        rec.corrupted
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        u8::from(rec.diverged).to_string(),
    ]
}

impl RunResult {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(TRACE_HEADER)?;
        for rep in &self.replications {
            for rec in &rep.records {
                wtr.write_record(trace_row(rep.replication, rec))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Per replication: the sampled `R_K` and the gradient norm there.
    pub fn write_iterates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "replication",
            "sampled_k",
            "sampled_grad_norm",
            "final_grad_norm",
            "final_obj_gap",
            "diverged",
        ])?;
        for rep in &self.replications {
            wtr.write_record([
                rep.replication.to_string(),
                rep.sampled_index.to_string(),
                fmt_f64(rep.sampled_grad_norm),
                fmt_f64(rep.final_grad_norm),
                fmt_f64(rep.final_obj_gap),
                u8::from(rep.diverged()).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config.hash(),
            config: self.config.clone(),
            master_seed: self.config.seed,
            data_seed: self.config.data_seed(),
            replication_seeds: self.replications.iter().map(|r| r.seed).collect(),
            f_low: self.f_low,
            delta0: self.delta0,
            w0: self.w0.clone(),
            diverged_replications: self
                .replications
                .iter()
                .filter(|r| r.diverged())
                .map(|r| r.replication)
                .collect(),
            constants: None,
            schedule_report: None,
            notes: vec![
                "expectations are estimated over replications, including the attack's own randomness"
                    .into(),
            ],
            wall_time_secs: self.wall_time_secs,
        }
    }
}

/// Run metadata; enough to re-execute the run without the original config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub config: SimulationConfig,
    pub master_seed: u64,
    pub data_seed: u64,
    pub replication_seeds: Vec<u64>,
    pub f_low: f64,
    pub delta0: f64,
    pub w0: Vec<f64>,
    pub diverged_replications: Vec<usize>,
    #[serde(default)]
    pub constants: Option<SmoothnessConstants>,
    #[serde(default, skip_deserializing)]
    pub schedule_report: Option<ScheduleReport>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub wall_time_secs: f64,
}

/// Rebuilds a [`RunResult`] from a manifest and its trace CSV. Final-iterate and
/// `R_K` fields are not stored in the trace and come back empty.
pub fn load_run<R: Read>(manifest: &RunManifest, trace: R) -> Result<RunResult> {
    let mut rdr = csv::Reader::from_reader(trace);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(TRACE_HEADER) {
        return Err(Error::Config(format!("unexpected trace header: {headers:?}")));
    }
    let parse_f = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Config(format!("bad number `{s}` in trace: {e}")))
    };
    let parse_u = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|e| Error::Config(format!("bad integer `{s}` in trace: {e}")))
    };
    let mut reps: Vec<ReplicationTrace> = manifest
        .replication_seeds
        .iter()
        .enumerate()
        .map(|(r, &seed)| ReplicationTrace {
            replication: r,
            seed,
            records: Vec::new(),
            diverged_at: None,
            final_w: Vec::new(),
            final_grad_norm: f64::NAN,
            final_obj_gap: f64::NAN,
            sampled_index: 0,
            sampled_grad_norm: f64::NAN,
        })
        .collect();
    for row in rdr.records() {
        let row = row?;
        let r = parse_u(&row[0])?;
        let rec = IterationRecord {
            k: parse_u(&row[1])?,
            grad_norm: parse_f(&row[2])?,
            obj_gap: parse_f(&row[3])?,
            agg_norm: parse_f(&row[4])?,
            alpha: parse_f(&row[5])?,
            corrupted: if row[6].is_empty() {
                Vec::new()
            } else {
                row[6].split(';').map(parse_u).collect::<Result<_>>()?
            },
            diverged: &row[7] == "1",
        };
        let rep = reps
            .get_mut(r)
            .ok_or_else(|| Error::Config(format!("trace mentions unknown replication {r}")))?;
        if rec.diverged {
            rep.diverged_at = Some(rec.k);
        }
        rep.records.push(rec);
    }
    Ok(RunResult {
        config: manifest.config.clone(),
        f_low: manifest.f_low,
        w0: manifest.w0.clone(),
        delta0: manifest.delta0,
        replications: reps,
        wall_time_secs: manifest.wall_time_secs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversaries::AttackKind;
    use crate::aggregators::Rule;

    fn halving_config(alpha: f64) -> SimulationConfig {
        SimulationConfig::new(
            ProblemSpec::identity_quadratic(1).with_w0(vec![2.0]),
            NoiseModel::Exact,
            AggregatorSpec::new(Rule::Mean, 0),
            Schedule::Constant { c: alpha },
            1,
            3,
        )
    }

    #[test]
    fn exact_gradient_descent_halves() {
        let res = run(&halving_config(0.5)).unwrap();
        let rep = &res.replications[0];
        assert_eq!(rep.final_w, vec![0.25]);
        let norms: Vec<f64> = rep.records.iter().map(|r| r.grad_norm).collect();
        assert_eq!(norms, vec![2.0, 1.0, 0.5]);
    }

    #[test]
    fn unit_step_lands_on_minimizer() {
        let res = run(&halving_config(1.0)).unwrap();
        assert_eq!(res.replications[0].records[1].grad_norm, 0.0);
    }

    #[test]
    fn step_reduces_to_gradient_descent() {
        let problem = Problem::identity_quadratic(2, 3).unwrap();
        let spec = AggregatorSpec::new(Rule::Mean, 0);
        let attack = AttackSpec::none();
        let schedule = Schedule::Constant { c: 0.1 };
        let ctx = StepContext {
            problem: &problem,
            oracle: GradientOracle::new(&problem, NoiseModel::Exact, 0).unwrap(),
            aggregator: &spec,
            attack: &attack,
            schedule: &schedule,
            attack_seed: 0,
        };
        let (next, rec) = step(&[1.0, -2.0], 0, &ctx).unwrap();
        assert_eq!(next, vec![0.9, -1.8]);
        assert!(rec.corrupted.is_empty());
    }

    #[test]
    fn records_carry_the_corrupted_set() {
        let cfg = SimulationConfig::new(
            ProblemSpec::identity_quadratic(2),
            NoiseModel::AdditiveGaussian { sigma: 0.1 },
            AggregatorSpec::new(Rule::Krum, 2),
            Schedule::Constant { c: 0.1 },
            7,
            5,
        )
        .with_attack(AttackSpec::new(AttackKind::Zero, 2, 1.0));
        let res = run(&cfg).unwrap();
        assert!(res.replications[0].records.iter().all(|r| r.corrupted == vec![0, 1]));
    }

    #[test]
    fn invalid_krum_rejected_before_running() {
        let mut cfg = halving_config(0.5);
        cfg.nodes = 4;
        cfg.aggregator = AggregatorSpec::new(Rule::Krum, 3);
        cfg.attack = AttackSpec::new(AttackKind::Zero, 3, 1.0);
        assert!(matches!(run(&cfg), Err(Error::Constraint(_))));
    }

    #[test]
    fn curve_statistics() {
        let det = run(&halving_config(0.5).with_replications(3)).unwrap();
        let curve = estimate_expected_grad_curve(&det);
        assert!(curve.points.iter().all(|p| p.stderr == Some(0.0)));
        let single = run(&halving_config(0.5)).unwrap();
        let curve = estimate_expected_grad_curve(&single);
        assert!(curve.points.iter().all(|p| p.stderr.is_none()));
        for pair in curve.points.windows(2) {
            assert!(pair[1].prefix_min <= pair[0].prefix_min);
        }
    }

    #[test]
    fn divergence_is_recorded() {
        let cfg = SimulationConfig::new(
            ProblemSpec::identity_quadratic(1),
            NoiseModel::Exact,
            AggregatorSpec::new(Rule::Mean, 0),
            Schedule::Constant { c: 3.0 },
            1,
            200,
        );
        let res = run(&cfg).unwrap();
        let rep = &res.replications[0];
        assert!(rep.diverged());
        assert!(rep.records.last().unwrap().diverged);
        assert_eq!(rep.final_grad_norm, f64::INFINITY);
    }

    #[test]
    fn trace_round_trips_through_csv() {
        let cfg = SimulationConfig::new(
            ProblemSpec::identity_quadratic(2),
            NoiseModel::AdditiveGaussian { sigma: 0.3 },
            AggregatorSpec::new(Rule::Krum, 1),
            Schedule::PowerLaw { c: 0.5, p: 0.6 },
            5,
            20,
        )
        .with_attack(AttackSpec::new(AttackKind::SignFlip, 1, 3.0))
        .with_replications(2);
        let res = run(&cfg).unwrap();
        let mut buf = Vec::new();
        res.write_trace_csv(&mut buf).unwrap();
        let back = load_run(&res.manifest(), buf.as_slice()).unwrap();
        for (a, b) in res.replications.iter().zip(&back.replications) {
            assert_eq!(a.records, b.records);
        }
    }
}
