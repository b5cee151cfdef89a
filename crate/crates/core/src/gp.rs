//! Gaussian-process interpolation of latent ODE coefficients.
//!
//! Each coefficient `(j, k)` gets its own zero-mean GP with an isotropic RBF
//! kernel `gamma * exp(-|x - x'|^2 / (2 lambda^2))`. Inputs are standardized
//! per dimension and targets per model before fitting; the observation noise
//! is a fixed jitter, raised tenfold on Cholesky failure up to `MAX_JITTER`.
//!
//! Hyperparameters `(log gamma, log lambda)` are found by multi-start
//! gradient descent on the negative log marginal likelihood with a
//! backtracking line search and analytic gradients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive_seed, SeededRng};
use crate::sindy::CoefficientTensor;

pub const BASE_JITTER: f64 = 1e-10;
pub const MAX_JITTER: f64 = 1e-6;

const LOG_GAMMA_BOUNDS: (f64, f64) = (-9.210_340_371_976_182, 9.210_340_371_976_182); // 1e-4 .. 1e4
const LOG_LAMBDA_BOUNDS: (f64, f64) = (-4.605_170_185_988_091, 4.605_170_185_988_091); // 1e-2 .. 1e2

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub gamma: f64,
    pub lambda: f64,
    pub sigma2: f64,
}

impl GpHyperparams {
    pub fn new(gamma: f64, lambda: f64, sigma2: f64) -> Self {
        GpHyperparams { gamma, lambda, sigma2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub iterations: usize,
    /// Range (standardized units) for the log-uniform initial length scale.
    pub initial_lambda: (f64, f64),
}

impl Default for GpFitOptions {
    fn default() -> Self {
        GpFitOptions {
            restarts: 5,
            iterations: 200,
            initial_lambda: (0.1, 10.0),
        }
    }
}

/// `gamma * exp(-|x_p - x'_q|^2 / (2 lambda^2))` for every row pair.
pub fn rbf_kernel(x1: ArrayView2<f64>, x2: ArrayView2<f64>, hyp: &GpHyperparams) -> Array2<f64> {
    let inv = 1.0 / (2.0 * hyp.lambda * hyp.lambda);
    Array2::from_shape_fn((x1.nrows(), x2.nrows()), |(p, q)| {
        hyp.gamma * (-sq_dist(x1.row(p).iter(), x2.row(q).iter()) * inv).exp()
    })
}

fn sq_dist<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn pairwise_sq_dist(x: ArrayView2<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |p, q| sq_dist(x.row(p).iter(), x.row(q).iter()))
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    /// Noise-free kernel matrix.
    kernel: DMatrix<f64>,
    sigma2: f64,
}

/// Factorizes `K + sigma2 I`, escalating `sigma2` tenfold until it succeeds or exceeds `MAX_JITTER`.
fn factorize(d2: &DMatrix<f64>, gamma: f64, lambda: f64, sigma2: f64) -> Result<Factor> {
    let n = d2.nrows();
    let inv = 1.0 / (2.0 * lambda * lambda);
    let kernel = d2.map(|d| gamma * (-d * inv).exp());
    let mut jitter = sigma2;
    loop {
        let mut k = kernel.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok(Factor {
                chol,
                kernel,
                sigma2: jitter,
            });
        }
        let next = if jitter > 0.0 { jitter * 10.0 } else { BASE_JITTER };
        if next > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::IllConditionedKernel { jitter });
        }
        jitter = next;
    }
}

fn nlml_from_factor(f: &Factor, y: &DVector<f64>) -> f64 {
    let alpha = f.chol.solve(y);
    let log_det: f64 = 2.0 * f.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * y.dot(&alpha) + 0.5 * log_det + 0.5 * y.len() as f64 * std::f64::consts::TAU.ln()
}

/// Negative log marginal likelihood of `y` under the kernel at `hyp` (in the given coordinates).
pub fn nlml(x: ArrayView2<f64>, y: &[f64], hyp: &GpHyperparams) -> Result<f64> {
    if x.nrows() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!("{} inputs vs {} targets", x.nrows(), y.len())));
    }
    let d2 = pairwise_sq_dist(x);
    let f = factorize(&d2, hyp.gamma, hyp.lambda, hyp.sigma2)?;
    Ok(nlml_from_factor(&f, &DVector::from_column_slice(y)))
}

/// NLML and its gradient in `(log gamma, log lambda)`.
fn nlml_and_grad(d2: &DMatrix<f64>, y: &DVector<f64>, log_gamma: f64, log_lambda: f64) -> Result<(f64, [f64; 2])> {
    let lambda = log_lambda.exp();
    let f = factorize(d2, log_gamma.exp(), lambda, BASE_JITTER)?;
    let value = nlml_from_factor(&f, y);
    let alpha = f.chol.solve(y);
    let k_inv = f.chol.inverse();
    let n = y.len();
    let inv_l2 = 1.0 / (lambda * lambda);
    let (mut g_gamma, mut g_lambda) = (0.0, 0.0);
    for p in 0..n {
        for q in 0..n {
            let w = alpha[p] * alpha[q] - k_inv[(p, q)];
            let k = f.kernel[(p, q)];
            g_gamma += w * k;
            g_lambda += w * k * d2[(p, q)] * inv_l2;
        }
    }
    Ok((value, [-0.5 * g_gamma, -0.5 * g_lambda]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(x.raw_dim(), |(i, d)| (x[[i, d]] - self.mean[d]) / self.scale[d])
    }

    fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// A fitted single-output GP.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Array2<f64>,
    targets: Vec<f64>,
    input_scaler: Standardizer,
    target_mean: f64,
    target_scale: f64,
    constant: bool,
    hyperparams: GpHyperparams,
    standardized: Array2<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
}

/// Everything needed to rebuild a [`GpModel`] bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModelState {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
    pub constant: bool,
    pub hyperparams: GpHyperparams,
}

fn target_stats(y: &[f64]) -> (f64, f64, bool) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let constant = !(std > 1e-12 * mean.abs().max(1.0));
    (mean, if constant { 1.0 } else { std }, constant)
}

fn check_inputs(x: ArrayView2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} inputs vs {} targets", x.nrows(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Shape("non-finite GP training data".into()));
    }
    Ok(())
}

impl GpModel {
    /// Fits hyperparameters by multi-start descent on the NLML.
    pub fn fit(x: ArrayView2<f64>, y: &[f64], opts: &GpFitOptions, seed: u64) -> Result<Self> {
        check_inputs(x, y)?;
        let input_scaler = Standardizer::fit(x);
        let standardized = input_scaler.apply(x);
        let (target_mean, target_scale, constant) = target_stats(y);
        if constant {
            return Ok(GpModel {
                inputs: x.to_owned(),
                targets: y.to_vec(),
                input_scaler,
                target_mean,
                target_scale,
                constant,
                hyperparams: GpHyperparams::new(1.0, 1.0, BASE_JITTER),
                standardized,
                chol: None,
                weights: DVector::zeros(y.len()),
            });
        }
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - target_mean) / target_scale));
        let d2 = pairwise_sq_dist(standardized.view());

        let mut rng = SeededRng::new(seed);
        let mut best: Option<(f64, [f64; 2])> = None;
        let mut last_err = None;
        // log var of the standardized targets is 0
        let log_gamma0 = 0.0;
        let (lo, hi) = (opts.initial_lambda.0.ln(), opts.initial_lambda.1.ln());
        for _ in 0..opts.restarts.max(1) {
            let log_lambda0 = rng.uniform_range(lo, hi);
            match descend(&d2, &ys, [log_gamma0, log_lambda0], opts.iterations) {
                Ok((value, theta)) => {
                    if best.is_none_or(|(b, _)| value < b) {
                        best = Some((value, theta));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        let (_, theta) = match best {
            Some(b) => b,
            None => return Err(last_err.unwrap_or(Error::IllConditionedKernel { jitter: MAX_JITTER })),
        };
        let factor = factorize(&d2, theta[0].exp(), theta[1].exp(), BASE_JITTER)?;
        let hyperparams = GpHyperparams::new(theta[0].exp(), theta[1].exp(), factor.sigma2);
        let weights = factor.chol.solve(&ys);
        Ok(GpModel {
            inputs: x.to_owned(),
            targets: y.to_vec(),
            input_scaler,
            target_mean,
            target_scale,
            constant,
            hyperparams,
            standardized,
            chol: Some(factor.chol),
            weights,
        })
    }

    /// Builds a model with fixed hyperparameters (standardized coordinates), skipping the search.
    pub fn with_hyperparams(x: ArrayView2<f64>, y: &[f64], hyp: GpHyperparams) -> Result<Self> {
        check_inputs(x, y)?;
        let input_scaler = Standardizer::fit(x);
        let (target_mean, target_scale, constant) = target_stats(y);
        Self::assemble(x, y, input_scaler, target_mean, target_scale, constant, hyp)
    }

    fn assemble(
        x: ArrayView2<f64>,
        y: &[f64],
        input_scaler: Standardizer,
        target_mean: f64,
        target_scale: f64,
        constant: bool,
        hyp: GpHyperparams,
    ) -> Result<Self> {
        let standardized = input_scaler.apply(x);
        let (chol, weights, hyperparams) = if constant {
            (None, DVector::zeros(y.len()), hyp)
        } else {
            let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - target_mean) / target_scale));
            let d2 = pairwise_sq_dist(standardized.view());
            let f = factorize(&d2, hyp.gamma, hyp.lambda, hyp.sigma2)?;
            let w = f.chol.solve(&ys);
            (Some(f.chol), w, GpHyperparams { sigma2: f.sigma2, ..hyp })
        };
        Ok(GpModel {
            inputs: x.to_owned(),
            targets: y.to_vec(),
            input_scaler,
            target_mean,
            target_scale,
            constant,
            hyperparams,
            standardized,
            chol,
            weights,
        })
    }

    pub fn state(&self) -> GpModelState {
        GpModelState {
            inputs: self.inputs.rows().into_iter().map(|r| r.to_vec()).collect(),
            targets: self.targets.clone(),
            input_mean: self.input_scaler.mean.clone(),
            input_scale: self.input_scaler.scale.clone(),
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            constant: self.constant,
            hyperparams: self.hyperparams,
        }
    }

    pub fn from_state(state: &GpModelState) -> Result<Self> {
        let n = state.inputs.len();
        let d = state.inputs.first().map_or(0, Vec::len);
        let flat: Vec<f64> = state.inputs.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::Checkpoint(format!("GP inputs: {e}")))?;
        check_inputs(x.view(), &state.targets)?;
        if state.input_mean.len() != d || state.input_scale.len() != d {
            return Err(Error::Checkpoint("GP standardization has wrong dimension".into()));
        }
        let scaler = Standardizer {
            mean: state.input_mean.clone(),
            scale: state.input_scale.clone(),
        };
        Self::assemble(
            x.view(),
            &state.targets,
            scaler,
            state.target_mean,
            state.target_scale,
            state.constant,
            state.hyperparams,
        )
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    /// Standardized inputs and targets, as used internally.
    pub fn standardized_data(&self) -> (Array2<f64>, Vec<f64>) {
        let ys = self.targets.iter().map(|v| (v - self.target_mean) / self.target_scale).collect();
        (self.standardized.clone(), ys)
    }

    /// Standardizes a raw query point.
    pub fn standardize_point(&self, x: &[f64]) -> Vec<f64> {
        self.input_scaler.apply_point(x)
    }

    /// Predictive mean and standard deviation in target units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_raw_variance(x);
        (m, v.max(0.0).sqrt())
    }

    /// Predictive mean and the unclamped variance.
    pub fn predict_raw_variance(&self, x: &[f64]) -> (f64, f64) {
        let chol = match &self.chol {
            Some(c) if !self.constant => c,
            _ => return (self.target_mean, 0.0),
        };
        let xs = self.input_scaler.apply_point(x);
        let hyp = &self.hyperparams;
        let inv = 1.0 / (2.0 * hyp.lambda * hyp.lambda);
        let kstar = DVector::from_iterator(
            self.standardized.nrows(),
            self.standardized
                .rows()
                .into_iter()
                .map(|r| hyp.gamma * (-sq_dist(r.iter(), xs.iter()) * inv).exp()),
        );
        let mean = kstar.dot(&self.weights);
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .expect("Cholesky factor has a positive diagonal");
        let var = hyp.gamma - v.dot(&v);
        (
            self.target_mean + self.target_scale * mean,
            var * self.target_scale * self.target_scale,
        )
    }
}

/// Projected gradient descent with backtracking; returns the final `(nlml, theta)`.
fn descend(d2: &DMatrix<f64>, y: &DVector<f64>, start: [f64; 2], iterations: usize) -> Result<(f64, [f64; 2])> {
    let clamp = |t: [f64; 2]| {
        [
            t[0].clamp(LOG_GAMMA_BOUNDS.0, LOG_GAMMA_BOUNDS.1),
            t[1].clamp(LOG_LAMBDA_BOUNDS.0, LOG_LAMBDA_BOUNDS.1),
        ]
    };
    let mut theta = clamp(start);
    let (mut value, mut grad) = nlml_and_grad(d2, y, theta[0], theta[1])?;
    let mut step = 1.0;
    for _ in 0..iterations {
        let gnorm2 = grad[0] * grad[0] + grad[1] * grad[1];
        if gnorm2.sqrt() < 1e-8 {
            break;
        }
        let mut accepted = None;
        for _ in 0..40 {
            let trial = clamp([theta[0] - step * grad[0], theta[1] - step * grad[1]]);
            let moved = [theta[0] - trial[0], theta[1] - trial[1]];
            let decrease = grad[0] * moved[0] + grad[1] * moved[1];
            if decrease <= 0.0 {
                break;
            }
            if let Ok((v, g)) = nlml_and_grad(d2, y, trial[0], trial[1]) {
                if v <= value - 1e-4 * decrease {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, v, g)) = accepted else { break };
        let improvement = value - v;
        theta = trial;
        value = v;
        grad = g;
        step = (step * 2.0).min(1e3);
        if improvement < 1e-12 * value.abs().max(1.0) {
            break;
        }
    }
    Ok((value, theta))
}

/// The `N_z x N_l` grid of independent GPs, row-major in `(j, k)`.
#[derive(Debug, Clone)]
pub struct GpCoefficientField {
    pub rows: usize,
    pub cols: usize,
    pub models: Vec<GpModel>,
}

impl GpCoefficientField {
    pub fn model(&self, j: usize, k: usize) -> &GpModel {
        &self.models[j * self.cols + k]
    }

    /// Predictive mean and standard deviation matrices at `mu`.
    pub fn predict(&self, mu: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let mut mean = Array2::zeros((self.rows, self.cols));
        let mut std = Array2::zeros((self.rows, self.cols));
        for j in 0..self.rows {
            for k in 0..self.cols {
                let (m, s) = self.model(j, k).predict(mu);
                mean[[j, k]] = m;
                std[[j, k]] = s;
            }
        }
        (mean, std)
    }

    pub fn states(&self) -> Vec<GpModelState> {
        self.models.iter().map(GpModel::state).collect()
    }

    pub fn from_states(rows: usize, cols: usize, states: &[GpModelState]) -> Result<Self> {
        if states.len() != rows * cols {
            return Err(Error::Checkpoint(format!(
                "expected {} GP models, found {}",
                rows * cols,
                states.len()
            )));
        }
        let models = states.iter().map(GpModel::from_state).collect::<Result<Vec<_>>>()?;
        Ok(GpCoefficientField { rows, cols, models })
    }
}

/// Fits one GP per coefficient entry over the training parameters (rows of `params`).
pub fn fit_field(
    params: ArrayView2<f64>,
    coeffs: &CoefficientTensor,
    opts: &GpFitOptions,
    seed: u64,
) -> Result<GpCoefficientField> {
    let first = coeffs
        .matrices
        .first()
        .ok_or_else(|| Error::Shape("no coefficient matrices to interpolate".into()))?;
    if coeffs.len() != params.nrows() {
        return Err(Error::Shape(format!(
            "{} parameters vs {} coefficient matrices",
            params.nrows(),
            coeffs.len()
        )));
    }
    let (rows, cols) = first.dim();
    if coeffs.matrices.iter().any(|m| m.dim() != (rows, cols)) {
        return Err(Error::Shape("coefficient matrices differ in shape".into()));
    }
    let fitted = par::map_range(rows * cols, |idx| {
        let (j, k) = (idx / cols, idx % cols);
        let y = coeffs.entry_series(j, k);
        GpModel::fit(params, &y, opts, derive_seed(seed, idx as u64)).map_err(|e| Error::CoefficientFit {
            row: j,
            col: k,
            source: Box::new(e),
        })
    });
    let models = fitted.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GpCoefficientField { rows, cols, models })
}
