//! Latent dynamics identification: dictionary, finite-difference derivatives,
//! and the joint autoencoder + dictionary-regression training loss.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderGrads, AutoencoderModel};
use crate::error::{Error, Result};
use crate::par;

/// Candidate terms: an optional constant column followed by the latent variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    pub include_constant: bool,
    pub include_linear: bool,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        DictionarySpec {
            include_constant: true,
            include_linear: true,
        }
    }
}

impl DictionarySpec {
    pub fn n_terms(&self, latent_dim: usize) -> usize {
        usize::from(self.include_constant) + if self.include_linear { latent_dim } else { 0 }
    }

    fn linear_offset(&self) -> usize {
        usize::from(self.include_constant)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.include_constant || self.include_linear) {
            return Err(Error::Config("dictionary has no terms".into()));
        }
        Ok(())
    }
}

/// One `N_z x N_l` coefficient matrix per training parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientTensor {
    pub matrices: Vec<Array2<f64>>,
}

impl CoefficientTensor {
    pub fn zeros(n_params: usize, latent_dim: usize, n_terms: usize) -> Self {
        CoefficientTensor {
            matrices: (0..n_params).map(|_| Array2::zeros((latent_dim, n_terms))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn push_zeros(&mut self, latent_dim: usize, n_terms: usize) {
        self.matrices.push(Array2::zeros((latent_dim, n_terms)));
    }

    /// Sum of squares of every entry across all parameters.
    pub fn squared_norm(&self) -> f64 {
        self.matrices.iter().flat_map(|m| m.iter()).map(|v| v * v).sum()
    }

    /// Values of entry `(j, k)` across parameters, in parameter order.
    pub fn entry_series(&self, j: usize, k: usize) -> Vec<f64> {
        self.matrices.iter().map(|m| m[[j, k]]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta1: 1.0,
            beta2: 0.1,
            beta3: 1e-6,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0) || !(self.beta2 >= 0.0) || !(self.beta3 >= 0.0) {
            return Err(Error::Config(
                "loss weights need beta1 > 0 and beta2, beta3 >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Individual loss terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub sindy: f64,
    pub coefficient_norm: f64,
    pub weights: LossWeights,
}

/// Builds `Theta(Z)`; row `n` is `(1, z_n)` under the default spec.
pub fn dictionary(z: ArrayView2<f64>, spec: &DictionarySpec) -> Result<Array2<f64>> {
    spec.validate()?;
    if z.nrows() == 0 {
        return Err(Error::Shape("empty latent trajectory".into()));
    }
    let nz = z.ncols();
    let mut theta = Array2::zeros((z.nrows(), spec.n_terms(nz)));
    if spec.include_constant {
        theta.column_mut(0).fill(1.0);
    }
    if spec.include_linear {
        let off = spec.linear_offset();
        theta.slice_mut(s![.., off..off + nz]).assign(&z);
    }
    Ok(theta)
}

/// Forward differences, with a backward difference on the final row.
pub fn time_derivative(z: ArrayView2<f64>, dt: f64) -> Result<Array2<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let t = z.nrows();
    if t < 2 {
        return Err(Error::Shape("need at least two time levels to differentiate".into()));
    }
    let mut out = Array2::zeros(z.raw_dim());
    for n in 0..t - 1 {
        let mut row = out.row_mut(n);
        row.assign(&z.row(n + 1));
        row -= &z.row(n);
        row /= dt;
    }
    let mut last = out.row_mut(t - 1);
    last.assign(&z.row(t - 1));
    last -= &z.row(t - 2);
    last /= dt;
    Ok(out)
}

/// Transpose of the [`time_derivative`] operator applied to `g`.
fn time_derivative_adjoint(g: ArrayView2<f64>, dt: f64) -> Array2<f64> {
    let t = g.nrows();
    let mut out = Array2::<f64>::zeros(g.raw_dim());
    for n in 0..t - 1 {
        for j in 0..g.ncols() {
            out[[n + 1, j]] += g[[n, j]] / dt;
            out[[n, j]] -= g[[n, j]] / dt;
        }
    }
    for j in 0..g.ncols() {
        out[[t - 1, j]] += g[[t - 1, j]] / dt;
        out[[t - 2, j]] -= g[[t - 1, j]] / dt;
    }
    out
}

fn check_coefficients(z: ArrayView2<f64>, xi: &Array2<f64>, spec: &DictionarySpec) -> Result<()> {
    let expected = (z.ncols(), spec.n_terms(z.ncols()));
    if xi.dim() != expected {
        return Err(Error::Shape(format!(
            "coefficient matrix is {:?}, expected {expected:?}",
            xi.dim()
        )));
    }
    Ok(())
}

/// `Zdot - Theta(Z) Xi^T` for one trajectory.
fn sindy_residual(z: ArrayView2<f64>, xi: &Array2<f64>, spec: &DictionarySpec, dt: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    check_coefficients(z, xi, spec)?;
    let zdot = time_derivative(z, dt)?;
    let theta = dictionary(z, spec)?;
    let residual = zdot - theta.dot(&xi.t());
    Ok((residual, theta))
}

/// Mean over parameters and latent indices of the time-averaged squared residual.
pub fn sindy_loss(
    latents: &[Array2<f64>],
    coeffs: &CoefficientTensor,
    spec: &DictionarySpec,
    dt: f64,
) -> Result<f64> {
    if latents.len() != coeffs.len() || latents.is_empty() {
        return Err(Error::Shape(format!(
            "{} latent trajectories vs {} coefficient matrices",
            latents.len(),
            coeffs.len()
        )));
    }
    let mut total = 0.0;
    for (z, xi) in latents.iter().zip(&coeffs.matrices) {
        let (r, _) = sindy_residual(z.view(), xi, spec, dt)?;
        total += r.iter().map(|v| v * v).sum::<f64>() / (z.ncols() * z.nrows()) as f64;
    }
    Ok(total / latents.len() as f64)
}

/// Gradient of the joint loss with respect to every trainable quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct LasdiGrads {
    pub model: AutoencoderGrads,
    pub coefficients: Vec<Array2<f64>>,
}

struct TrajectoryTerms {
    reconstruction: f64,
    sindy: f64,
    model: AutoencoderGrads,
    coefficient: Array2<f64>,
}

fn validate_batch(
    snapshots: &[Array2<f64>],
    model: &AutoencoderModel,
    coeffs: &CoefficientTensor,
) -> Result<()> {
    if snapshots.is_empty() || snapshots.len() != coeffs.len() {
        return Err(Error::Shape(format!(
            "{} trajectories vs {} coefficient matrices",
            snapshots.len(),
            coeffs.len()
        )));
    }
    if let Some(u) = snapshots.iter().find(|u| u.ncols() != model.field_dim()) {
        return Err(Error::Shape(format!(
            "snapshot width {} does not match network input {}",
            u.ncols(),
            model.field_dim()
        )));
    }
    Ok(())
}

/// Weighted joint loss without gradients.
pub fn lasdi_loss(
    snapshots: &[Array2<f64>],
    model: &AutoencoderModel,
    coeffs: &CoefficientTensor,
    weights: &LossWeights,
    spec: &DictionarySpec,
    dt: f64,
) -> Result<LossBreakdown> {
    validate_batch(snapshots, model, coeffs)?;
    let per: Vec<Result<(f64, f64)>> = par::map_range(snapshots.len(), |i| {
        let u = &snapshots[i];
        let z = model.encode_batch(u.view())?;
        let recon = model.decode_batch(z.view())?;
        let ae = u.iter().zip(recon.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / u.nrows() as f64;
        let (r, _) = sindy_residual(z.view(), &coeffs.matrices[i], spec, dt)?;
        let sindy = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        Ok((ae, sindy))
    });
    let mut ae = 0.0;
    let mut sindy = 0.0;
    for p in per {
        let (a, s) = p?;
        ae += a;
        sindy += s;
    }
    let n = snapshots.len() as f64;
    Ok(breakdown(ae / n, sindy / n, coeffs.squared_norm(), *weights))
}

fn breakdown(reconstruction: f64, sindy: f64, coefficient_norm: f64, weights: LossWeights) -> LossBreakdown {
    LossBreakdown {
        total: weights.beta1 * reconstruction + weights.beta2 * sindy + weights.beta3 * coefficient_norm,
        reconstruction,
        sindy,
        coefficient_norm,
        weights,
    }
}

/// Joint loss and its exact gradient.
///
/// Each trajectory is differentiated independently (in parallel when enabled);
/// contributions are then summed in trajectory order so the result does not
/// depend on the thread count.
pub fn lasdi_loss_and_grad(
    snapshots: &[Array2<f64>],
    model: &AutoencoderModel,
    coeffs: &CoefficientTensor,
    weights: &LossWeights,
    spec: &DictionarySpec,
    dt: f64,
) -> Result<(LossBreakdown, LasdiGrads)> {
    validate_batch(snapshots, model, coeffs)?;
    let n_mu = snapshots.len() as f64;
    let per: Vec<Result<TrajectoryTerms>> = par::map_range(snapshots.len(), |i| {
        trajectory_terms(&snapshots[i], &coeffs.matrices[i], model, weights, spec, dt, n_mu)
    });

    let mut grads = LasdiGrads {
        model: model.zero_grads(),
        coefficients: Vec::with_capacity(snapshots.len()),
    };
    let mut ae = 0.0;
    let mut sindy = 0.0;
    for (term, xi) in per.into_iter().zip(&coeffs.matrices) {
        let term = term?;
        ae += term.reconstruction;
        sindy += term.sindy;
        grads.model.add_assign(&term.model);
        grads.coefficients.push(term.coefficient + &(xi * (2.0 * weights.beta3)));
    }
    Ok((breakdown(ae / n_mu, sindy / n_mu, coeffs.squared_norm(), *weights), grads))
}

fn trajectory_terms(
    u: &Array2<f64>,
    xi: &Array2<f64>,
    model: &AutoencoderModel,
    weights: &LossWeights,
    spec: &DictionarySpec,
    dt: f64,
    n_mu: f64,
) -> Result<TrajectoryTerms> {
    let t = u.nrows() as f64;
    let (z, enc_cache) = model.encoder.forward_cached(u.view())?;
    let (recon, dec_cache) = model.decoder.forward_cached(z.view())?;

    let diff = &recon - u;
    let reconstruction = diff.iter().map(|v| v * v).sum::<f64>() / t;
    let d_recon = diff * (2.0 * weights.beta1 / (n_mu * t));
    let (dec_grads, mut d_latent) = model.decoder.backward(&dec_cache, d_recon);

    let (residual, theta) = sindy_residual(z.view(), xi, spec, dt)?;
    let nz = z.ncols() as f64;
    let sindy = residual.iter().map(|v| v * v).sum::<f64>() / (nz * t);
    // dL/dR; the residual is Zdot - Theta Xi^T
    let g = residual * (2.0 * weights.beta2 / (n_mu * nz * t));
    let coefficient = -g.t().dot(&theta);
    let d_theta = -g.dot(xi);
    if spec.include_linear {
        let off = spec.linear_offset();
        d_latent += &d_theta.slice(s![.., off..off + z.ncols()]);
    }
    d_latent += &time_derivative_adjoint(g.view(), dt);

    let (enc_grads, _) = model.encoder.backward(&enc_cache, d_latent);
    Ok(TrajectoryTerms {
        reconstruction,
        sindy,
        model: AutoencoderGrads {
            encoder: enc_grads,
            decoder: dec_grads,
        },
        coefficient,
    })
}

/// Latent trajectories of every snapshot matrix.
pub fn encode_all(model: &AutoencoderModel, snapshots: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
    par::map_slice(snapshots, |u| model.encode_batch(u.view()))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{Activation, MlpSpec};
    use crate::rng::SeededRng;
    use ndarray::array;

    #[test]
    fn dictionary_layout() {
        let spec = DictionarySpec::default();
        assert_eq!(spec.n_terms(5), 6);
        let z = array![[0.5, -1.0], [2.0, 3.0]];
        let theta = dictionary(z.view(), &spec).unwrap();
        assert_eq!(theta, array![[1.0, 0.5, -1.0], [1.0, 2.0, 3.0]]);
        let zero = Array2::zeros((3, 4));
        let theta = dictionary(zero.view(), &spec).unwrap();
        for row in theta.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        }
        assert!(dictionary(Array2::<f64>::zeros((0, 2)).view(), &spec).is_err());
    }

    #[test]
    fn derivative_cases() {
        let c = Array2::from_elem((5, 2), 3.0);
        assert!(time_derivative(c.view(), 0.1).unwrap().iter().all(|&v| v == 0.0));

        let dt = 0.1;
        let affine = Array2::from_shape_fn((6, 1), |(n, _)| 2.5 * n as f64 * dt);
        for v in time_derivative(affine.view(), dt).unwrap().iter() {
            assert!((v - 2.5).abs() < 1e-12);
        }

        // z_n = (n dt)^2: forward quotient is ((n+1)^2 - n^2) dt^2 / dt = (2n+1) dt
        let quad = Array2::from_shape_fn((6, 1), |(n, _)| (n as f64 * dt).powi(2));
        let d = time_derivative(quad.view(), dt).unwrap();
        for n in 0..5 {
            assert!((d[[n, 0]] - (2 * n + 1) as f64 * dt).abs() < 1e-12);
        }
        // last row repeats the final backward quotient
        assert!((d[[5, 0]] - 9.0 * dt).abs() < 1e-12);

        assert!(time_derivative(quad.view(), 0.0).is_err());
        assert!(time_derivative(quad.slice(s![0..1, ..]), dt).is_err());
    }

    #[test]
    fn derivative_adjoint_is_transpose() {
        let mut rng = SeededRng::new(4);
        let a = Array2::from_shape_simple_fn((7, 3), || rng.standard_normal());
        let b = Array2::from_shape_simple_fn((7, 3), || rng.standard_normal());
        let lhs: f64 = (time_derivative(a.view(), 0.3).unwrap() * &b).sum();
        let rhs: f64 = (&a * &time_derivative_adjoint(b.view(), 0.3)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sindy_loss_zero_for_exact_dynamics() {
        // z = z0 + b t is reproduced exactly by forward differences.
        let dt = 0.05;
        let b = [0.7, -1.2];
        let z = Array2::from_shape_fn((8, 2), |(n, j)| 0.3 + b[j] * n as f64 * dt);
        let xi = array![[0.7, 0.0, 0.0], [-1.2, 0.0, 0.0]];
        let coeffs = CoefficientTensor { matrices: vec![xi] };
        let loss = sindy_loss(&[z], &coeffs, &DictionarySpec::default(), dt).unwrap();
        assert!(loss < 1e-24);
    }

    #[test]
    fn sindy_loss_zero_coefficients_is_mean_squared_derivative() {
        let dt = 0.1;
        let z = array![[0.0, 1.0], [0.5, 0.0], [0.2, 2.0]];
        let zdot = time_derivative(z.view(), dt).unwrap();
        let expected = zdot.iter().map(|v| v * v).sum::<f64>() / 6.0;
        let coeffs = CoefficientTensor::zeros(1, 2, 3);
        let loss = sindy_loss(&[z], &coeffs, &DictionarySpec::default(), dt).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn sindy_loss_matches_dense_hand_evaluation() {
        // Three time levels, two latent variables, two parameters.
        let dt = 0.5;
        let z1 = array![[1.0, 0.0], [0.5, 1.0], [0.0, 3.0]];
        let z2 = array![[0.0, 0.0], [1.0, -1.0], [1.0, 0.0]];
        let xi1 = array![[0.1, -1.0, 0.0], [0.0, 0.5, 1.0]];
        let xi2 = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let mut expected = 0.0;
        for (z, xi) in [(&z1, &xi1), (&z2, &xi2)] {
            let mut s = 0.0;
            for n in 0..3 {
                let (a, b) = if n < 2 { (n + 1, n) } else { (2, 1) };
                for j in 0..2 {
                    let d: f64 = (z[[a, j]] - z[[b, j]]) / dt;
                    let pred = xi[[j, 0]] + xi[[j, 1]] * z[[n, 0]] + xi[[j, 2]] * z[[n, 1]];
                    s += (d - pred).powi(2);
                }
            }
            expected += s / (2.0 * 3.0);
        }
        expected /= 2.0;
        let coeffs = CoefficientTensor {
            matrices: vec![xi1, xi2],
        };
        let loss = sindy_loss(&[z1, z2], &coeffs, &DictionarySpec::default(), dt).unwrap();
        assert!((loss - expected).abs() < 1e-12);
    }

    fn toy_problem() -> (Vec<Array2<f64>>, AutoencoderModel, CoefficientTensor) {
        let spec = MlpSpec::new(vec![7, 4, 2], Activation::Sigmoid);
        let model = AutoencoderModel::new(spec, 21).unwrap();
        let mut rng = SeededRng::new(8);
        let snaps = (0..3)
            .map(|_| Array2::from_shape_simple_fn((6, 7), || rng.uniform()))
            .collect();
        let coeffs = CoefficientTensor {
            matrices: (0..3)
                .map(|_| Array2::from_shape_simple_fn((2, 3), || 0.5 * rng.standard_normal()))
                .collect(),
        };
        (snaps, model, coeffs)
    }

    #[test]
    fn lasdi_reduces_to_weighted_reconstruction() {
        let (snaps, model, coeffs) = toy_problem();
        let w = LossWeights {
            beta1: 2.0,
            beta2: 0.0,
            beta3: 0.0,
        };
        let b = lasdi_loss(&snaps, &model, &coeffs, &w, &DictionarySpec::default(), 0.1).unwrap();
        let recon: Vec<_> = snaps
            .iter()
            .map(|u| model.decode_batch(model.encode_batch(u.view()).unwrap().view()).unwrap())
            .collect();
        let ae = crate::autoencoder::reconstruction_loss(&snaps, &recon).unwrap();
        assert!((b.total - 2.0 * ae).abs() < 1e-12);
    }

    #[test]
    fn lasdi_breakdown_and_linearity() {
        let (snaps, model, coeffs) = toy_problem();
        let dict = DictionarySpec::default();
        let w = LossWeights::default();
        let b = lasdi_loss(&snaps, &model, &coeffs, &w, &dict, 0.1).unwrap();
        assert_eq!(b.weights, LossWeights { beta1: 1.0, beta2: 0.1, beta3: 1e-6 });
        let w2 = LossWeights { beta3: 2e-6, ..w };
        let b2 = lasdi_loss(&snaps, &model, &coeffs, &w2, &dict, 0.1).unwrap();
        assert!((b2.total - b.total - 1e-6 * coeffs.squared_norm()).abs() < 1e-14);
        let (b3, _) = lasdi_loss_and_grad(&snaps, &model, &coeffs, &w, &dict, 0.1).unwrap();
        assert!((b3.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_is_two_beta3_xi() {
        let (snaps, model, coeffs) = toy_problem();
        let dict = DictionarySpec::default();
        let base = LossWeights { beta1: 1.0, beta2: 0.3, beta3: 0.0 };
        let pen = LossWeights { beta3: 0.25, ..base };
        let (_, g0) = lasdi_loss_and_grad(&snaps, &model, &coeffs, &base, &dict, 0.1).unwrap();
        let (_, g1) = lasdi_loss_and_grad(&snaps, &model, &coeffs, &pen, &dict, 0.1).unwrap();
        for ((a, b), xi) in g1.coefficients.iter().zip(&g0.coefficients).zip(&coeffs.matrices) {
            let d = a - b;
            for (x, y) in d.iter().zip(xi.iter()) {
                assert!((x - 0.5 * y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn perfect_reconstruction_has_zero_reconstruction_gradient() {
        // Linear identity autoencoder reproduces any input exactly.
        let spec = MlpSpec::new(vec![3, 3], Activation::Sigmoid);
        let mut model = AutoencoderModel::new(spec, 0).unwrap();
        model.encoder.layers[0].weight = Array2::eye(3);
        model.decoder.layers[0].weight = Array2::eye(3);
        let u = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        let coeffs = CoefficientTensor::zeros(1, 3, 4);
        let w = LossWeights { beta1: 1.0, beta2: 0.0, beta3: 0.0 };
        let (b, g) = lasdi_loss_and_grad(&[u], &model, &coeffs, &w, &DictionarySpec::default(), 0.1).unwrap();
        assert_eq!(b.reconstruction, 0.0);
        for s in g.model.slices() {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shape_errors() {
        let (snaps, model, mut coeffs) = toy_problem();
        coeffs.matrices.pop();
        let r = lasdi_loss(&snaps, &model, &coeffs, &LossWeights::default(), &DictionarySpec::default(), 0.1);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
