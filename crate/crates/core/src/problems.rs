//! Test objectives `F = (1/m) sum_i F_i` over synthetic per-node datasets, their
//! stochastic gradient oracles, and the smoothness constants `(L, F_low, A, B, C)`.
//!
//! Three objectives are provided, ordered from fully analytic to realistic:
//!
//! - quadratic: either the identity form `F(w) = ||w||^2 / 2` or least-squares
//!   regression on synthetic data; Hessian, minimizer and `L` are exact.
//! - logistic regression: `L = lambda_max(S) / 4` with `S` the weighted second-moment
//!   matrix of the features; `F_low = 0`.
//! - two-layer tanh network with squared loss: constants are estimated.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Quadratic,
    #[serde(alias = "logistic-regression")]
    Logistic,
    #[serde(alias = "two-layer-mlp")]
    Mlp,
}

/// How a quadratic objective is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadraticDesign {
    /// `F(w) = ||w||^2 / 2`, no data.
    Identity,
    /// Least squares `(1/2)(x^T w - y)^2` on synthetic regression data.
    #[default]
    Regression,
}

/// Declarative problem description, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ObjectiveKind,
    /// Feature dimension (equal to the parameter dimension except for the MLP).
    pub dim: usize,
    #[serde(default)]
    pub design: QuadraticDesign,
    #[serde(default = "default_n_per_node")]
    pub n_per_node: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Explicit starting point; defaults to `w0_scale * (1, ..., 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
    #[serde(default = "default_w0_scale")]
    pub w0_scale: f64,
}

fn default_n_per_node() -> usize {
    32
}
fn default_hidden() -> usize {
    4
}
fn default_w0_scale() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn new(kind: ObjectiveKind, dim: usize) -> Self {
        ProblemSpec {
            kind,
            dim,
            design: QuadraticDesign::default(),
            n_per_node: default_n_per_node(),
            hidden: default_hidden(),
            w0: None,
            w0_scale: default_w0_scale(),
        }
    }

    pub fn identity_quadratic(dim: usize) -> Self {
        ProblemSpec {
            design: QuadraticDesign::Identity,
            ..Self::new(ObjectiveKind::Quadratic, dim)
        }
    }

    pub fn with_w0(mut self, w0: Vec<f64>) -> Self {
        self.w0 = Some(w0);
        self
    }

    pub fn parameter_dim(&self) -> usize {
        match self.kind {
            ObjectiveKind::Mlp => self.hidden * (self.dim + 1),
            _ => self.dim,
        }
    }

    /// Starting point `w_0` of every replication.
    pub fn initial_point(&self) -> Result<Vec<f64>> {
        let d = self.parameter_dim();
        match &self.w0 {
            Some(w0) if w0.len() != d => Err(Error::DimensionMismatch {
                expected: d,
                got: w0.len(),
            }),
            Some(w0) => Ok(w0.clone()),
            None => Ok(vec![self.w0_scale; d]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl NodeData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-node samples, all drawn from one generating distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: ObjectiveKind,
    pub dim: usize,
    pub nodes: Vec<NodeData>,
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.nodes.iter().map(NodeData::len).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draws `m` node partitions of `n_per_node` samples each. Every node uses its own
/// stream of the data seed, but the generating distribution (including the
/// ground-truth parameter) is shared.
pub fn generate_dataset(
    kind: ObjectiveKind,
    m: usize,
    n_per_node: usize,
    d: usize,
    seed: u64,
) -> Result<Dataset> {
    if m == 0 || n_per_node == 0 || d == 0 {
        return Err(Error::InvalidSize(format!(
            "dataset needs m, n_per_node, d >= 1 (got {m}, {n_per_node}, {d})"
        )));
    }
    let truth = normal_vec(&mut rng::stream(seed, Purpose::Data, u64::MAX, 0), d);
    let nodes = (0..m)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Data, i as u64, 0);
            let mut features = Vec::with_capacity(n_per_node);
            let mut labels = Vec::with_capacity(n_per_node);
            for _ in 0..n_per_node {
                let x = normal_vec(&mut rng, d);
                let z = linalg::dot(&x, &truth);
                let y = match kind {
                    ObjectiveKind::Quadratic => z + 0.5 * rng.sample::<f64, _>(StandardNormal),
                    ObjectiveKind::Logistic => {
                        if rng.random::<f64>() < sigmoid(z) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ObjectiveKind::Mlp => z.tanh() + 0.1 * rng.sample::<f64, _>(StandardNormal),
                };
                features.push(x);
                labels.push(y);
            }
            NodeData { features, labels }
        })
        .collect();
    Ok(Dataset {
        kind,
        dim: d,
        nodes,
    })
}

/// `F(w) = (1/2)(w - w*)^T H (w - w*) + F*`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub minimizer: Vec<f64>,
    pub min_value: f64,
}

impl QuadraticForm {
    fn value(&self, w: &[f64]) -> f64 {
        let diff = DVector::from_iterator(w.len(), w.iter().zip(&self.minimizer).map(|(a, b)| a - b));
        0.5 * diff.dot(&(&self.hessian * &diff)) + self.min_value
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let diff = DVector::from_iterator(w.len(), w.iter().zip(&self.minimizer).map(|(a, b)| a - b));
        (&self.hessian * diff).iter().copied().collect()
    }
}

/// Node-weighted feature second moments `(1/m) sum_i (1/n_i) sum_j x x^T` and the
/// matching `x y` and `y^2 / 2` averages.
fn weighted_moments(data: &Dataset) -> (DMatrix<f64>, DVector<f64>, f64) {
    let d = data.dim;
    let m = data.m() as f64;
    let mut s = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    let mut c = 0.0;
    for node in &data.nodes {
        let w = 1.0 / (m * node.len() as f64);
        for (x, &y) in node.features.iter().zip(&node.labels) {
            let xv = DVector::from_column_slice(x);
            s += (&xv * xv.transpose()) * w;
            b += &xv * (y * w);
            c += 0.5 * y * y * w;
        }
    }
    (s, b, c)
}

fn lambda_max(s: &DMatrix<f64>) -> f64 {
    s.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// An objective `F = (1/m) sum_i F_i`.
#[derive(Debug, Clone)]
pub struct Problem {
    kind: ObjectiveKind,
    dim: usize,
    nodes: usize,
    hidden: usize,
    dataset: Option<Dataset>,
    quadratic: Option<QuadraticForm>,
    lipschitz: Option<f64>,
    f_low: f64,
}

impl Problem {
    /// `F(w) = ||w||^2 / 2` replicated on `m` nodes (no data).
    pub fn identity_quadratic(dim: usize, m: usize) -> Result<Self> {
        if dim == 0 || m == 0 {
            return Err(Error::InvalidSize("identity quadratic needs dim, m >= 1".into()));
        }
        Ok(Problem {
            kind: ObjectiveKind::Quadratic,
            dim,
            nodes: m,
            hidden: 0,
            dataset: None,
            quadratic: Some(QuadraticForm {
                hessian: DMatrix::identity(dim, dim),
                minimizer: vec![0.0; dim],
                min_value: 0.0,
            }),
            lipschitz: Some(1.0),
            f_low: 0.0,
        })
    }

    /// Least-squares regression; `H`, `w*` and `F*` are solved directly from the data.
    pub fn least_squares(dataset: Dataset) -> Result<Self> {
        let (s, b, c) = weighted_moments(&dataset);
        let w_star = match s.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => s
                .clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Degenerate(e.to_string()))?
                * &b,
        };
        let min_value = c - 0.5 * b.dot(&w_star);
        let l = lambda_max(&s);
        Ok(Problem {
            kind: ObjectiveKind::Quadratic,
            dim: dataset.dim,
            nodes: dataset.m(),
            hidden: 0,
            quadratic: Some(QuadraticForm {
                hessian: s,
                minimizer: w_star.iter().copied().collect(),
                min_value,
            }),
            dataset: Some(dataset),
            lipschitz: Some(l),
            f_low: min_value,
        })
    }

    pub fn logistic(dataset: Dataset) -> Result<Self> {
        let (s, _, _) = weighted_moments(&dataset);
        let l = lambda_max(&s) / 4.0;
        Ok(Problem {
            kind: ObjectiveKind::Logistic,
            dim: dataset.dim,
            nodes: dataset.m(),
            hidden: 0,
            dataset: Some(dataset),
            quadratic: None,
            lipschitz: Some(l),
            f_low: 0.0,
        })
    }

    pub fn mlp(dataset: Dataset, hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidSize("mlp needs hidden >= 1".into()));
        }
        Ok(Problem {
            kind: ObjectiveKind::Mlp,
            dim: hidden * (dataset.dim + 1),
            nodes: dataset.m(),
            hidden,
            dataset: Some(dataset),
            quadratic: None,
            lipschitz: None,
            f_low: 0.0,
        })
    }

    /// Builds the problem described by `spec` on `m` nodes; data is regenerated from
    /// `data_seed`.
    pub fn from_spec(spec: &ProblemSpec, m: usize, data_seed: u64) -> Result<Self> {
        match (spec.kind, spec.design) {
            (ObjectiveKind::Quadratic, QuadraticDesign::Identity) => {
                Self::identity_quadratic(spec.dim, m)
            }
            (kind, _) => {
                let data = generate_dataset(kind, m, spec.n_per_node, spec.dim, data_seed)?;
                match kind {
                    ObjectiveKind::Quadratic => Self::least_squares(data),
                    ObjectiveKind::Logistic => Self::logistic(data),
                    ObjectiveKind::Mlp => Self::mlp(data, spec.hidden),
                }
            }
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dataset(&self) -> Option<&Dataset> {
        self.dataset.as_ref()
    }

    pub fn quadratic(&self) -> Option<&QuadraticForm> {
        self.quadratic.as_ref()
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.quadratic.as_ref().map(|q| q.minimizer.as_slice())
    }

    /// Analytic Lipschitz constant of the gradient, when one is known.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn f_low(&self) -> f64 {
        self.f_low
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        Ok(())
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.nodes {
            return Err(Error::UnknownNode {
                node,
                m: self.nodes,
            });
        }
        Ok(())
    }

    fn sample_loss(&self, x: &[f64], y: f64, w: &[f64]) -> f64 {
        match self.kind {
            ObjectiveKind::Quadratic => {
                let r = linalg::dot(x, w) - y;
                0.5 * r * r
            }
            ObjectiveKind::Logistic => {
                let z = linalg::dot(x, w);
                softplus(z) - y * z
            }
            ObjectiveKind::Mlp => {
                let r = self.mlp_output(x, w) - y;
                0.5 * r * r
            }
        }
    }

    fn mlp_output(&self, x: &[f64], w: &[f64]) -> f64 {
        let din = x.len();
        let (u, v) = w.split_at(self.hidden * din);
        u.chunks(din)
            .zip(v)
            .map(|(uh, vh)| vh * linalg::dot(uh, x).tanh())
            .sum()
    }

    /// Gradient of one sample's loss, accumulated as `out += scale * grad`.
    fn add_sample_gradient(&self, x: &[f64], y: f64, w: &[f64], scale: f64, out: &mut [f64]) {
        match self.kind {
            ObjectiveKind::Quadratic => {
                let r = linalg::dot(x, w) - y;
                linalg::axpy(out, scale * r, x);
            }
            ObjectiveKind::Logistic => {
                let r = sigmoid(linalg::dot(x, w)) - y;
                linalg::axpy(out, scale * r, x);
            }
            ObjectiveKind::Mlp => {
                let din = x.len();
                let split = self.hidden * din;
                let (u, v) = w.split_at(split);
                let acts: Vec<f64> = u.chunks(din).map(|uh| linalg::dot(uh, x).tanh()).collect();
                let r = acts.iter().zip(v).map(|(a, vh)| a * vh).sum::<f64>() - y;
                let (gu, gv) = out.split_at_mut(split);
                for h in 0..self.hidden {
                    gv[h] += scale * r * acts[h];
                    let coef = scale * r * v[h] * (1.0 - acts[h] * acts[h]);
                    linalg::axpy(&mut gu[h * din..(h + 1) * din], coef, x);
                }
            }
        }
    }

    /// Per-sample gradient of sample `j` on `node`.
    pub fn sample_gradient_at(&self, node: usize, j: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        self.check_node(node)?;
        let data = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("problem has no per-sample data".into()))?;
        let nd = &data.nodes[node];
        let mut g = vec![0.0; self.dim];
        self.add_sample_gradient(&nd.features[j], nd.labels[j], w, 1.0, &mut g);
        Ok(g)
    }

    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        if let Some(q) = &self.quadratic {
            return Ok(q.value(w));
        }
        let data = self.dataset.as_ref().expect("non-quadratic problems carry data");
        let m = data.m() as f64;
        Ok(data
            .nodes
            .iter()
            .map(|nd| {
                let s: f64 = nd
                    .features
                    .iter()
                    .zip(&nd.labels)
                    .map(|(x, &y)| self.sample_loss(x, y, w))
                    .sum();
                s / (nd.len() as f64 * m)
            })
            .sum())
    }

    /// Exact `grad F(w)`.
    pub fn full_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        if let Some(q) = &self.quadratic {
            return Ok(q.gradient(w));
        }
        let data = self.dataset.as_ref().expect("non-quadratic problems carry data");
        let m = data.m() as f64;
        let mut g = vec![0.0; self.dim];
        for nd in &data.nodes {
            let scale = 1.0 / (nd.len() as f64 * m);
            for (x, &y) in nd.features.iter().zip(&nd.labels) {
                self.add_sample_gradient(x, y, w, scale, &mut g);
            }
        }
        Ok(g)
    }

    /// Exact `grad F_i(w)`. Without data every node sees `grad F`.
    pub fn node_gradient(&self, node: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        self.check_node(node)?;
        match &self.dataset {
            None => self.full_gradient(w),
            Some(data) => {
                let nd = &data.nodes[node];
                let scale = 1.0 / nd.len() as f64;
                let mut g = vec![0.0; self.dim];
                for (x, &y) in nd.features.iter().zip(&nd.labels) {
                    self.add_sample_gradient(x, y, w, scale, &mut g);
                }
                Ok(g)
            }
        }
    }
}

/// Noise model of the stochastic gradient `G(w, zeta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "noise", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseModel {
    /// `G = grad F` (no noise).
    Exact,
    /// Node-local minibatch of `batch` samples drawn without replacement.
    Subsampling { batch: usize },
    /// `G = grad F + sigma * xi`, `xi ~ N(0, I)`.
    AdditiveGaussian { sigma: f64 },
}

/// Stochastic gradient oracle. Node `i` at iteration `k` draws from its own
/// counter-based stream `(seed, i, k)`.
///
/// With subsampling, node `i` is unbiased for `grad F_i`; the oracle as a whole
/// (node chosen uniformly) is unbiased for `grad F`. Moments reported here are those
/// of that node mixture.
#[derive(Debug, Clone, Copy)]
pub struct GradientOracle<'p> {
    problem: &'p Problem,
    noise: NoiseModel,
    seed: u64,
}

impl<'p> GradientOracle<'p> {
    pub fn new(problem: &'p Problem, noise: NoiseModel, seed: u64) -> Result<Self> {
        match noise {
            NoiseModel::Exact => {}
            NoiseModel::AdditiveGaussian { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("sigma must be finite and >= 0, got {sigma}")));
                }
            }
            NoiseModel::Subsampling { batch } => {
                let data = problem.dataset().ok_or_else(|| {
                    Error::Config("subsampling oracle needs a data-backed problem".into())
                })?;
                let min_n = data.nodes.iter().map(NodeData::len).min().unwrap_or(0);
                if batch == 0 || batch > min_n {
                    return Err(Error::Config(format!(
                        "minibatch size {batch} must lie in [1, {min_n}]"
                    )));
                }
            }
        }
        Ok(GradientOracle {
            problem,
            noise,
            seed,
        })
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same oracle on a different master stream.
    pub fn reseeded(&self, seed: u64) -> Self {
        GradientOracle { seed, ..*self }
    }

    /// One draw of `G(w, (zeta_k)_node)`.
    pub fn sample_gradient(&self, w: &[f64], node: usize, k: u64) -> Result<Vec<f64>> {
        self.problem.check_node(node)?;
        match self.noise {
            NoiseModel::Exact => self.problem.full_gradient(w),
            NoiseModel::AdditiveGaussian { sigma } => {
                let mut g = self.problem.full_gradient(w)?;
                let mut rng = rng::stream(self.seed, Purpose::Oracle, node as u64, k);
                for gi in &mut g {
                    *gi += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                Ok(g)
            }
            NoiseModel::Subsampling { batch } => {
                self.problem.check_dim(w)?;
                let data = self.problem.dataset().expect("validated in new()");
                let nd = &data.nodes[node];
                let mut rng = rng::stream(self.seed, Purpose::Oracle, node as u64, k);
                let idx = rand::seq::index::sample(&mut rng, nd.len(), batch);
                let mut g = vec![0.0; self.problem.dim()];
                let scale = 1.0 / batch as f64;
                for j in idx.iter() {
                    self.problem
                        .add_sample_gradient(&nd.features[j], nd.labels[j], w, scale, &mut g);
                }
                Ok(g)
            }
        }
    }

    /// Exact gradient-noise second moment `E||G(w) - grad F(w)||^2`.
    pub fn noise_variance(&self, w: &[f64]) -> Result<f64> {
        match self.noise {
            NoiseModel::Exact => {
                self.problem.check_dim(w)?;
                Ok(0.0)
            }
            NoiseModel::AdditiveGaussian { sigma } => {
                self.problem.check_dim(w)?;
                Ok(sigma * sigma * self.problem.dim() as f64)
            }
            NoiseModel::Subsampling { batch } => {
                let full = self.problem.full_gradient(w)?;
                let data = self.problem.dataset().expect("validated in new()");
                let mut total = 0.0;
                for (i, nd) in data.nodes.iter().enumerate() {
                    let n = nd.len();
                    let grads: Vec<Vec<f64>> = (0..n)
                        .map(|j| self.problem.sample_gradient_at(i, j, w))
                        .collect::<Result<_>>()?;
                    let node_mean = linalg::mean(&grads);
                    let pop_var =
                        grads.iter().map(|g| linalg::dist_sq(g, &node_mean)).sum::<f64>() / n as f64;
                    // variance of a without-replacement sample mean
                    let batch_var = if n > 1 {
                        pop_var / batch as f64 * (n - batch) as f64 / (n - 1) as f64
                    } else {
                        0.0
                    };
                    total += linalg::dist_sq(&node_mean, &full) + batch_var;
                }
                Ok(total / data.m() as f64)
            }
        }
    }

    /// Exact `E||G(w)||^2`.
    pub fn second_moment(&self, w: &[f64]) -> Result<f64> {
        let g = self.problem.full_gradient(w)?;
        Ok(linalg::norm_sq(&g) + self.noise_variance(w)?)
    }

    /// Monte-Carlo `E||G(w)||^2` over `draws` draws cycling through the nodes.
    /// Returns `(mean, stderr)`.
    pub fn monte_carlo_second_moment(&self, w: &[f64], draws: usize) -> Result<(f64, f64)> {
        let m = self.problem.nodes();
        let mut stats = linalg::RunningStats::default();
        for t in 0..draws {
            let g = self.sample_gradient(w, t % m, (t / m) as u64)?;
            stats.push(linalg::norm_sq(&g));
        }
        Ok((stats.mean(), stats.stderr()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    Estimated,
}

/// `L`, `F_low` and the expected-smoothness constants `A, B, C` of
/// `E||G||^2 <= 2A(F - F_low) + B||grad F||^2 + C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l: f64,
    pub f_low: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lipschitz_source: Provenance,
    pub moment_source: Provenance,
}

impl SmoothnessConstants {
    /// Right-hand side of the expected-smoothness bound.
    pub fn moment_bound(&self, objective_gap: f64, grad_norm_sq: f64) -> f64 {
        2.0 * self.a * objective_gap + self.b * grad_norm_sq + self.c
    }
}

/// How second moments are obtained at probe points when a fit is needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentSource {
    Exact,
    MonteCarlo { draws: usize },
}

/// Returns the analytic constants when they exist; otherwise fits `A, B, C >= 0` to
/// second moments at the probes by non-negative least squares and lifts `C` so the
/// bound holds at every probe. `L` is estimated from gradient differences between
/// probes when no analytic value is known.
pub fn estimate_smoothness_constants(
    problem: &Problem,
    oracle: &GradientOracle<'_>,
    probes: &[Vec<f64>],
    moments: MomentSource,
) -> Result<SmoothnessConstants> {
    if probes.len() < 2 {
        return Err(Error::Degenerate("need at least two probe points".into()));
    }
    for p in probes {
        problem.check_dim(p)?;
    }
    if probes.iter().all(|p| p == &probes[0]) {
        return Err(Error::Degenerate("all probe points are identical".into()));
    }
    if let MomentSource::MonteCarlo { draws: 0 } = moments {
        return Err(Error::InvalidSize("draws must be >= 1".into()));
    }

    let grads: Vec<Vec<f64>> = probes
        .iter()
        .map(|p| problem.full_gradient(p))
        .collect::<Result<_>>()?;

    let (l, lipschitz_source) = match problem.lipschitz() {
        Some(l) => (l, Provenance::Analytic),
        None => {
            let mut best = 0.0f64;
            for i in 0..probes.len() {
                for j in i + 1..probes.len() {
                    let dx = linalg::dist(&probes[i], &probes[j]);
                    if dx > 0.0 {
                        best = best.max(linalg::dist(&grads[i], &grads[j]) / dx);
                    }
                }
            }
            (best, Provenance::Estimated)
        }
    };
    let f_low = problem.f_low();

    let (a, b, c, moment_source) = match oracle.noise() {
        NoiseModel::Exact => (0.0, 1.0, 0.0, Provenance::Analytic),
        NoiseModel::AdditiveGaussian { sigma } => {
            (0.0, 1.0, sigma * sigma * problem.dim() as f64, Provenance::Analytic)
        }
        NoiseModel::Subsampling { .. } => {
            let mut rows = Vec::with_capacity(probes.len());
            let mut targets = Vec::with_capacity(probes.len());
            for (p, g) in probes.iter().zip(&grads) {
                let gap = problem.objective(p)? - f_low;
                rows.push([2.0 * gap, linalg::norm_sq(g), 1.0]);
                targets.push(match moments {
                    MomentSource::Exact => oracle.second_moment(p)?,
                    MomentSource::MonteCarlo { draws } => oracle.monte_carlo_second_moment(p, draws)?.0,
                });
            }
            let [a, b, mut c] = nonnegative_least_squares(&rows, &targets);
            let shortfall = rows
                .iter()
                .zip(&targets)
                .map(|(r, y)| y - (r[0] * a + r[1] * b + r[2] * c))
                .fold(0.0, f64::max);
            let scale = targets.iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
            c += shortfall + 1e-12 * scale;
            (a, b, c, Provenance::Estimated)
        }
    };
    Ok(SmoothnessConstants {
        l,
        f_low,
        a,
        b,
        c,
        lipschitz_source,
        moment_source,
    })
}

/// Three-variable NNLS by enumerating active sets.
fn nonnegative_least_squares(rows: &[[f64; 3]], targets: &[f64]) -> [f64; 3] {
    let mut best = ([0.0; 3], targets.iter().map(|y| y * y).sum::<f64>());
    for mask in 1u8..8 {
        let cols: Vec<usize> = (0..3).filter(|j| mask & (1 << j) != 0).collect();
        let a = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]]);
        let y = DVector::from_column_slice(targets);
        let Ok(sol) = a.clone().svd(true, true).solve(&y, 1e-12) else {
            continue;
        };
        if sol.iter().any(|&v| v < -1e-12 || !v.is_finite()) {
            continue;
        }
        let mut x = [0.0; 3];
        for (k, &j) in cols.iter().enumerate() {
            x[j] = sol[k].max(0.0);
        }
        let resid: f64 = rows
            .iter()
            .zip(targets)
            .map(|(r, t)| {
                let e = t - (r[0] * x[0] + r[1] * x[1] + r[2] * x[2]);
                e * e
            })
            .sum();
        if resid < best.1 - 1e-15 * best.1.abs() {
            best = (x, resid);
        }
    }
    best.0
}

/// `count` points `center + radius * N(0, I)`.
pub fn random_probes(center: &[f64], radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Probe, i as u64, 0);
            center
                .iter()
                .map(|c| c + radius * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}
