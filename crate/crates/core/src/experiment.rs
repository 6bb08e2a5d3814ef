//! Declarative experiments: a TOML document describing one run, certification,
//! verification or sweep, and the four commands that execute them and write CSV
//! artifacts.
//!
//! ```toml
//! seed = 7
//!
//! [problem]
//! kind = "quadratic"
//! dim = 1
//! design = "identity"
//! w0 = [2.0]
//!
//! [oracle]
//! noise = "additive-gaussian"
//! sigma = 0.1
//!
//! [aggregator]
//! rule = "mean"
//!
//! [attack]
//! kind = "none"
//!
//! [schedule]
//! form = "power-law"
//! c = 1.0
//! p = 0.6
//!
//! [simulation]
//! nodes = 5
//! iterations = 1000
//! replications = 8
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::{AttackKind, AttackSpec};
use crate::aggregators::{certify_resilience, AggregatorSpec, ResilienceCertificate, Rule};
use crate::analysis::{
    self, check_eta_condition, fit_rate_exponent, verify_corollary2_on_run, verify_lemma1, BoundInputs,
};
use crate::error::{Error, Result};
use crate::problems::{
    estimate_smoothness_constants, random_probes, GradientOracle, MomentSource, NoiseModel, Problem,
    ProblemSpec, SmoothnessConstants,
};
use crate::rng::{self, Purpose};
use crate::schedules::{validate_schedule, Schedule};
use crate::simulator::{self, fmt_f64, RunManifest, RunResult, SimulationConfig, WeightingParams};

/// Environment variable overriding the output directory (below `--out`).
pub const OUT_DIR_ENV: &str = "BRSGD_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub nodes: usize,
    pub iterations: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default = "one")]
    pub cadence: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate_weighting: Option<WeightingParams>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    /// Explicit probe points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Vec<f64>>>,
    /// Number of random probes drawn around `w_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_probes: Option<usize>,
    #[serde(default = "unit")]
    pub probe_radius: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// `sin a` used for the `eta` diagnostic.
    #[serde(default = "default_eta_sin")]
    pub eta_sin_alpha: f64,
}

fn unit() -> f64 {
    1.0
}
fn default_draws() -> usize {
    10_000
}
fn default_eta_sin() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub sin_alpha: f64,
    /// Second-moment ratio `E` of the aggregator.
    #[serde(default = "unit")]
    pub e: f64,
    /// Standard error of a certified `E`; adds bound columns at `E +- 2 se`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_stderr: Option<f64>,
    #[serde(default = "default_lemma_trials")]
    pub lemma_trials: usize,
    #[serde(default)]
    pub lemma_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// Start of the rate-fit window; defaults to `K / 10`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_k_min: Option<usize>,
    /// Directory holding `manifest.json` and `trace.csv` of a stored run. Without it
    /// the run is executed afresh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
}

fn default_lemma_trials() -> usize {
    10_000
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            sin_alpha: 0.0,
            e: 1.0,
            e_stderr: None,
            lemma_trials: default_lemma_trials(),
            lemma_only: false,
            k_grid: None,
            rate_k_min: None,
            run_dir: None,
        }
    }
}

/// Sweep axes; the Cartesian product of all present axes is run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Applied to both the declared budget and the number of attackers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<Vec<Rule>>,
    /// Power-law exponent, keeping the configured `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<Vec<AttackKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub oracle: NoiseModel,
    pub aggregator: AggregatorSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    pub schedule: Schedule,
    pub simulation: SimulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            problem: self.problem.clone(),
            oracle: self.oracle,
            aggregator: self.aggregator.clone(),
            attack: self.attack.clone(),
            schedule: self.schedule.clone(),
            nodes: self.simulation.nodes,
            iterations: self.simulation.iterations,
            replications: self.simulation.replications,
            seed: self.seed,
            cadence: self.simulation.cadence,
            iterate_weighting: self.simulation.iterate_weighting.unwrap_or_default(),
        }
    }

    pub fn analysis(&self) -> AnalysisSection {
        self.analysis.clone().unwrap_or_default()
    }
}

/// Command-line overrides, applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> PathBuf {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Certify,
    Verify,
    Sweep,
}

/// Loads `config_path`, applies overrides and executes `command` on a pool of
/// `jobs` threads. Returns the output directory.
pub fn execute(command: Command, config_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    let out = overrides.apply(&mut cfg);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = overrides.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Run => cmd_run(&cfg, &out).map(drop),
        Command::Certify => cmd_certify(&cfg, &out).map(drop),
        Command::Verify => cmd_verify(&cfg, &out).map(drop),
        Command::Sweep => cmd_sweep(&cfg, &out).map(drop),
    })?;
    Ok(out)
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Analytic constants when available, otherwise fitted at random probes around `w_0`.
fn constants_for(problem: &Problem, oracle: &GradientOracle<'_>, w0: &[f64], seed: u64) -> Result<SmoothnessConstants> {
    let radius = crate::linalg::norm(w0).max(1.0);
    let probes = random_probes(w0, radius, 8, rng::derive_seed(seed, Purpose::Probe, 1, 0));
    estimate_smoothness_constants(problem, oracle, &probes, MomentSource::Exact)
}

fn full_manifest(result: &RunResult, sin_alpha: f64) -> Result<RunManifest> {
    let mut manifest = result.manifest();
    let problem = result.config.build_problem()?;
    let oracle = GradientOracle::new(&problem, result.config.oracle, 0)?;
    match constants_for(&problem, &oracle, &result.w0, result.config.seed) {
        Ok(c) => {
            manifest.schedule_report = Some(validate_schedule(
                &result.config.schedule,
                result.config.iterations,
                c.l,
                c.b,
                sin_alpha,
            ));
            manifest.constants = Some(c);
        }
        Err(e) => manifest.notes.push(format!("constants unavailable: {e}")),
    }
    Ok(manifest)
}

fn write_run(result: &RunResult, dir: &Path, sin_alpha: f64) -> Result<()> {
    let mut trace = Vec::new();
    result.write_trace_csv(&mut trace)?;
    write_atomic(&dir.join("trace.csv"), &trace)?;
    let mut iterates = Vec::new();
    result.write_iterates_csv(&mut iterates)?;
    write_atomic(&dir.join("iterates.csv"), &iterates)?;
    let manifest = full_manifest(result, sin_alpha)?;
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

/// Executes the configured run; writes `trace.csv`, `iterates.csv`, `manifest.json`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunResult> {
    let sim = cfg.simulation();
    let result = simulator::run(&sim)?;
    write_run(&result, out, cfg.analysis().sin_alpha)?;
    Ok(result)
}

fn certify_probes(cfg: &ExperimentConfig, section: &CertifySection) -> Result<Vec<Vec<f64>>> {
    match (&section.probes, section.random_probes) {
        (Some(p), _) if !p.is_empty() => Ok(p.clone()),
        (_, Some(n)) if n > 0 => {
            let w0 = cfg.problem.initial_point()?;
            Ok(random_probes(
                &w0,
                section.probe_radius,
                n,
                rng::derive_seed(cfg.seed, Purpose::Probe, 0, 0),
            ))
        }
        _ => Err(Error::Config(
            "[certify] needs a non-empty `probes` list or `random_probes` > 0".into(),
        )),
    }
}

const CERTIFICATE_HEADER: [&str; 12] = [
    "probe",
    "status",
    "grad_norm_sq",
    "inner_product",
    "inner_product_stderr",
    "sin_alpha_hat",
    "sin_alpha_stderr",
    "agg_second_moment",
    "grad_second_moment",
    "e_hat",
    "e_stderr",
    "noise_variance",
];

/// Certifies the configured aggregator and attack at the `[certify]` probes; writes
/// `certificate.csv`, `certificate.json` and, when `m > 2q + 2`, `eta.csv`.
pub fn cmd_certify(cfg: &ExperimentConfig, out: &Path) -> Result<ResilienceCertificate> {
    let section = cfg
        .certify
        .as_ref()
        .ok_or_else(|| Error::Config("certify needs a [certify] section".into()))?;
    let probes = certify_probes(cfg, section)?;
    let sim = cfg.simulation();
    sim.validate()?;
    let problem = sim.build_problem()?;
    let oracle = GradientOracle::new(&problem, cfg.oracle, 0)?;
    let cert = certify_resilience(
        &cfg.aggregator,
        &oracle,
        &cfg.attack,
        &probes,
        section.draws,
        rng::derive_seed(cfg.seed, Purpose::Certify, u64::MAX, 0),
    )?;
    let rows = cert.per_probe.iter().map(|p| {
        vec![
            p.probe.to_string(),
            p.status.name().to_string(),
            fmt_f64(p.grad_norm_sq),
            fmt_f64(p.inner_product),
            fmt_f64(p.inner_product_stderr),
            fmt_f64(p.sin_alpha_hat),
            fmt_f64(p.sin_alpha_stderr),
            fmt_f64(p.agg_second_moment),
            fmt_f64(p.grad_second_moment),
            fmt_f64(p.e_hat),
            fmt_f64(p.e_stderr),
            fmt_f64(p.noise_variance),
        ]
    });
    write_atomic(&out.join("certificate.csv"), &csv_bytes(&CERTIFICATE_HEADER, rows)?)?;
    write_atomic(&out.join("certificate.json"), serde_json::to_string_pretty(&cert)?.as_bytes())?;

    let q = cfg.aggregator.q;
    if sim.nodes > 2 * q + 2 {
        let eta = check_eta_condition(&oracle, &probes, sim.nodes, q, section.eta_sin_alpha)?;
        let rows = eta.per_probe.iter().map(|p| {
            vec![
                p.probe.to_string(),
                fmt_f64(p.grad_norm),
                fmt_f64(p.noise_sd),
                fmt_f64(p.lhs),
                fmt_f64(p.rhs),
                u8::from(p.holds).to_string(),
                fmt_f64(p.min_sin_alpha),
            ]
        });
        let header = ["probe", "grad_norm", "noise_sd", "lhs", "rhs", "holds", "min_sin_alpha"];
        write_atomic(&out.join("eta.csv"), &csv_bytes(&header, rows)?)?;
    }
    Ok(cert)
}

/// Outcome of [`cmd_verify`].
#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutcome {
    pub lemma: analysis::Lemma1Report,
    pub corollary2: Option<analysis::Corollary2Report>,
    pub measured_rate: Option<analysis::RateFit>,
    pub bound_rate: Option<analysis::RateFit>,
}

fn load_stored_run(dir: &Path) -> Result<RunResult> {
    let manifest: RunManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let trace = fs::File::open(dir.join("trace.csv"))?;
    simulator::load_run(&manifest, trace)
}

/// Lemma check, then (unless `lemma_only`) the bound comparison and rate fits for a
/// stored or fresh run. Writes `lemma.csv`, `corollary2.csv`, `rate.csv` and
/// `summary.txt`.
pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> Result<VerifyOutcome> {
    let an = cfg.analysis();
    let lemma = verify_lemma1(an.lemma_trials, rng::derive_seed(cfg.seed, Purpose::Lemma, 0, 0))?;
    let lemma_row = vec![
        lemma.trials.to_string(),
        lemma.accepted.to_string(),
        lemma.discarded.to_string(),
        lemma.checks.to_string(),
        lemma.violations.to_string(),
        fmt_f64(lemma.max_relative_violation),
        fmt_f64(lemma.min_slack_ratio),
    ];
    let header = [
        "trials",
        "accepted",
        "discarded",
        "checks",
        "violations",
        "max_relative_violation",
        "min_slack_ratio",
    ];
    write_atomic(&out.join("lemma.csv"), &csv_bytes(&header, [lemma_row])?)?;
    let mut summary = format!(
        "lemma: {} violations over {} accepted trials ({} inequalities), max relative excess {}\n",
        lemma.violations,
        lemma.accepted,
        lemma.checks,
        fmt_f64(lemma.max_relative_violation)
    );

    if an.lemma_only {
        write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
        return Ok(VerifyOutcome {
            lemma,
            corollary2: None,
            measured_rate: None,
            bound_rate: None,
        });
    }

    let result = match &an.run_dir {
        Some(dir) => load_stored_run(dir)?,
        None => simulator::run(&cfg.simulation())?,
    };
    let run_cfg = &result.config;
    let problem = run_cfg.build_problem()?;
    let oracle = GradientOracle::new(&problem, run_cfg.oracle, 0)?;
    let constants = constants_for(&problem, &oracle, &result.w0, run_cfg.seed)?;
    let p = match run_cfg.schedule {
        Schedule::PowerLaw { p, .. } => p,
        ref other => {
            return Err(Error::ScheduleMismatch(format!(
                "bound needs a power-law schedule, run used {other:?}"
            )))
        }
    };
    let horizon = run_cfg.iterations;
    let inputs = BoundInputs::from_constants(result.delta0, &constants, an.e, an.sin_alpha, p, horizon);
    let report = verify_corollary2_on_run(&result, &inputs, an.k_grid.as_deref())?;

    let band = an.e_stderr.map(|se| {
        let at = |e: f64| BoundInputs {
            a_prime: constants.a * e,
            c_prime: constants.c * e,
            ..inputs.clone()
        };
        (at((an.e - 2.0 * se).max(0.0)), at(an.e + 2.0 * se))
    });
    let mut header = vec!["k", "measured", "stderr", "bound", "margin", "within_error"];
    if band.is_some() {
        header.extend(["bound_e_low", "bound_e_high"]);
    }
    let mut rows = Vec::with_capacity(report.rows.len());
    for r in &report.rows {
        let mut row = vec![
            r.k.to_string(),
            fmt_f64(r.measured),
            opt(r.stderr),
            fmt_f64(r.bound),
            fmt_f64(r.margin),
            u8::from(r.within_error).to_string(),
        ];
        if let Some((lo, hi)) = &band {
            row.push(fmt_f64(analysis::evaluate_corollary2_bound(&lo.with_horizon(r.k))?));
            row.push(fmt_f64(analysis::evaluate_corollary2_bound(&hi.with_horizon(r.k))?));
        }
        rows.push(row);
    }
    write_atomic(&out.join("corollary2.csv"), &csv_bytes(&header, rows)?)?;

    let k_min = an.rate_k_min.unwrap_or((horizon / 10).max(1)) as f64;
    let curve = simulator::estimate_expected_grad_curve(&result);
    let measured_series = curve.prefix_min_series();
    let measured_rate = fit_rate_exponent(&measured_series, k_min).ok();
    let ks: Vec<usize> = measured_series.iter().map(|&(k, _)| k as usize).collect();
    let bound_series: Vec<(f64, f64)> = analysis::bound_curve(&inputs, &ks)?
        .into_iter()
        .map(|(k, b)| (k as f64, b))
        .collect();
    let bound_rate = fit_rate_exponent(&bound_series, k_min).ok();
    let rate_rows = [("measured", measured_rate), ("bound", bound_rate)].map(|(name, fit)| {
        vec![
            name.to_string(),
            fmt_f64(k_min),
            fit.map(|f| fmt_f64(f.slope)).unwrap_or_default(),
            fit.map(|f| fmt_f64(f.stderr)).unwrap_or_default(),
            fit.map(|f| f.points.to_string()).unwrap_or_default(),
            fmt_f64(-(1.0 - p) / 2.0),
        ]
    });
    let header = ["curve", "k_min", "slope", "stderr", "points", "reference_slope"];
    write_atomic(&out.join("rate.csv"), &csv_bytes(&header, rate_rows)?)?;

    summary.push_str(&format!(
        "bound: {} of {} grid points within two standard errors\n",
        report.rows.iter().filter(|r| r.within_error).count(),
        report.rows.len()
    ));
    for (name, fit) in [("measured", measured_rate), ("bound", bound_rate)] {
        match fit {
            Some(f) => summary.push_str(&format!(
                "rate ({name}): slope {} +- {} over K >= {}\n",
                fmt_f64(f.slope),
                fmt_f64(f.stderr),
                fmt_f64(k_min)
            )),
            None => summary.push_str(&format!("rate ({name}): not fittable over K >= {}\n", fmt_f64(k_min))),
        }
    }
    write_atomic(&out.join("summary.txt"), summary.as_bytes())?;
    Ok(VerifyOutcome {
        lemma,
        corollary2: Some(report),
        measured_rate,
        bound_rate,
    })
}

/// One point of a sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub rule: Rule,
    pub q: usize,
    pub p: Option<f64>,
    pub attack: AttackKind,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    SkippedInvalid,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutcome {
    pub cells: Vec<(SweepCell, CellStatus, String)>,
    pub rows: usize,
}

fn axis<T: Clone>(name: &str, values: &Option<Vec<T>>, default: T) -> Result<Vec<T>> {
    match values {
        Some(v) if v.is_empty() => Err(Error::Config(format!("sweep axis `{name}` is empty"))),
        Some(v) => Ok(v.clone()),
        None => Ok(vec![default]),
    }
}

/// Enumerates the sweep grid in row-major order (`rule`, `q`, `p`, `attack`, `nodes`).
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    if sw.q.is_none() && sw.rule.is_none() && sw.p.is_none() && sw.attack.is_none() && sw.nodes.is_none() {
        return Err(Error::Config("[sweep] declares no axis".into()));
    }
    let base_p = match cfg.schedule {
        Schedule::PowerLaw { p, .. } => Some(p),
        _ => None,
    };
    if sw.p.is_some() && base_p.is_none() {
        return Err(Error::Config("sweeping `p` needs a power-law schedule".into()));
    }
    let rules = axis("rule", &sw.rule, cfg.aggregator.rule)?;
    let qs = axis("q", &sw.q, cfg.aggregator.q)?;
    let ps: Vec<Option<f64>> = axis("p", &sw.p.as_ref().map(|v| v.iter().map(|&p| Some(p)).collect()), base_p)?;
    let attacks = axis("attack", &sw.attack, cfg.attack.kind)?;
    let nodes = axis("nodes", &sw.nodes, cfg.simulation.nodes)?;
    let mut cells = Vec::new();
    for &rule in &rules {
        for &q in &qs {
            for &p in &ps {
                for &attack in &attacks {
                    for &m in &nodes {
                        cells.push(SweepCell {
                            index: cells.len(),
                            rule,
                            q,
                            p,
                            attack,
                            nodes: m,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

fn cell_config(cfg: &ExperimentConfig, cell: &SweepCell) -> SimulationConfig {
    let mut sim = cfg.simulation();
    sim.aggregator.rule = cell.rule;
    sim.aggregator.q = cell.q;
    sim.attack.kind = cell.attack;
    sim.attack.q = cell.q;
    sim.nodes = cell.nodes;
    if let (Schedule::PowerLaw { c, .. }, Some(p)) = (&sim.schedule, cell.p) {
        sim.schedule = Schedule::PowerLaw { c: *c, p };
    }
    sim.seed = rng::derive_seed(cfg.seed, Purpose::Sweep, cell.index as u64, 0);
    sim
}

const SWEEP_KEYS: [&str; 6] = ["cell", "rule", "q", "p", "attack", "nodes"];

fn cell_keys(cell: &SweepCell) -> Vec<String> {
    vec![
        cell.index.to_string(),
        cell.rule.name().to_string(),
        cell.q.to_string(),
        opt(cell.p),
        cell.attack.name().to_string(),
        cell.nodes.to_string(),
    ]
}

/// Runs every valid cell of the grid in parallel. Invalid cells are recorded as
/// skipped. Writes `cells/<index>/{trace.csv, manifest.json}`, `sweep.csv` (all
/// traces keyed by coordinates) and `sweep_cells.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepOutcome> {
    let cells = sweep_cells(cfg)?;
    let sin_alpha = cfg.analysis().sin_alpha;
    let results: Vec<(SweepCell, std::result::Result<RunResult, String>)> = cells
        .into_par_iter()
        .map(|cell| {
            let sim = cell_config(cfg, &cell);
            let res = match sim.validate() {
                Err(e @ (Error::Constraint(_) | Error::Config(_) | Error::Domain(_))) => Err(e.to_string()),
                Err(e) => return Err(e),
                Ok(()) => {
                    let r = simulator::run(&sim)?;
                    write_run(&r, &out.join("cells").join(cell.index.to_string()), sin_alpha)?;
                    Ok(r)
                }
            };
            Ok((cell, res))
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<&str> = SWEEP_KEYS.to_vec();
    header.extend(&simulator::TRACE_HEADER);
    let mut rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut cells = Vec::new();
    for (cell, res) in &results {
        let keys = cell_keys(cell);
        match res {
            Ok(r) => {
                for rep in &r.replications {
                    for rec in &rep.records {
                        let mut row = keys.clone();
                        row.extend(simulator::trace_row(rep.replication, rec));
                        rows.push(row);
                    }
                }
                let finals: Vec<f64> = r.replications.iter().map(|t| t.final_grad_norm).collect();
                let mean = finals.iter().sum::<f64>() / finals.len() as f64;
                let mut row = keys;
                row.extend(["ok".to_string(), String::new(), fmt_f64(mean)]);
                summary_rows.push(row);
                cells.push((cell.clone(), CellStatus::Ok, String::new()));
            }
            Err(reason) => {
                let mut row = keys;
                row.extend(["skipped-invalid".to_string(), reason.clone(), String::new()]);
                summary_rows.push(row);
                cells.push((cell.clone(), CellStatus::SkippedInvalid, reason.clone()));
            }
        }
    }
    let n_rows = rows.len();
    write_atomic(&out.join("sweep.csv"), &csv_bytes(&header, rows)?)?;
    let mut header: Vec<&str> = SWEEP_KEYS.to_vec();
    header.extend(["status", "reason", "mean_final_grad_norm"]);
    write_atomic(&out.join("sweep_cells.csv"), &csv_bytes(&header, summary_rows)?)?;
    Ok(SweepOutcome { cells, rows: n_rows })
}
