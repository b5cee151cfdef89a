//! Reduced-order prediction with uncertainty.
//!
//! For a query parameter the GP field yields a mean and standard deviation per
//! ODE coefficient. Sampled coefficient sets are integrated in latent space
//! with RK4, decoded, and aggregated into a per-entry mean and population
//! variance.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::autoencoder::AutoencoderModel;
use crate::error::{Error, Result};
use crate::gp::GpCoefficientField;
use crate::par;
use crate::rng::SeededRng;
use crate::sindy::DictionarySpec;

/// `dz/dt = A z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentOde {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
}

impl LatentOde {
    /// Splits a coefficient matrix: the constant column becomes `b`, the linear block `A`.
    pub fn from_coefficients(xi: ArrayView2<f64>, dict: &DictionarySpec) -> Result<Self> {
        let nz = xi.nrows();
        if xi.ncols() != dict.n_terms(nz) {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} columns, dictionary has {} terms",
                xi.ncols(),
                dict.n_terms(nz)
            )));
        }
        let b = if dict.include_constant {
            xi.column(0).to_owned()
        } else {
            Array1::zeros(nz)
        };
        let off = usize::from(dict.include_constant);
        let a = if dict.include_linear {
            xi.slice(s![.., off..off + nz]).to_owned()
        } else {
            Array2::zeros((nz, nz))
        };
        Ok(LatentOde { a, b })
    }

    fn rhs(&self, z: &Array1<f64>) -> Array1<f64> {
        self.a.dot(z) + &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }
}

/// Classical RK4 for `n_steps` steps of size `dt`; row 0 is `z0`.
pub fn integrate_latent(ode: &LatentOde, z0: ArrayView1<f64>, dt: f64, n_steps: usize) -> Result<Array2<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    if z0.len() != ode.dim() {
        return Err(Error::Shape(format!(
            "initial latent state has {} entries, system has {}",
            z0.len(),
            ode.dim()
        )));
    }
    let mut out = Array2::zeros((n_steps + 1, z0.len()));
    let mut z = z0.to_owned();
    out.row_mut(0).assign(&z);
    for n in 1..=n_steps {
        let k1 = ode.rhs(&z);
        let k2 = ode.rhs(&(&z + &(&k1 * (0.5 * dt))));
        let k3 = ode.rhs(&(&z + &(&k2 * (0.5 * dt))));
        let k4 = ode.rhs(&(&z + &(&k3 * dt)));
        z = &z + &((k1 + &(k2 * 2.0) + &(k3 * 2.0) + &k4) * (dt / 6.0));
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::LatentDivergence { step: n });
        }
        out.row_mut(n).assign(&z);
    }
    Ok(out)
}

/// Draws `n_samples` coefficient matrices, entry `(j, k)` from `N(m_jk, s_jk^2)`.
pub fn sample_coefficients(
    field: &GpCoefficientField,
    mu: &[f64],
    n_samples: usize,
    rng: &mut SeededRng,
) -> Vec<Array2<f64>> {
    let (mean, std) = field.predict(mu);
    draw_samples(&mean, &std, n_samples, rng)
}

fn draw_samples(mean: &Array2<f64>, std: &Array2<f64>, n_samples: usize, rng: &mut SeededRng) -> Vec<Array2<f64>> {
    (0..n_samples)
        .map(|_| {
            let mut c = mean.clone();
            for (v, s) in c.iter_mut().zip(std.iter()) {
                *v = rng.normal(*v, *s);
            }
            c
        })
        .collect()
}

/// Trained network, coefficient field, and the time grid the ODEs run on.
#[derive(Debug, Clone)]
pub struct RomBundle {
    pub model: AutoencoderModel,
    pub field: GpCoefficientField,
    pub dictionary: DictionarySpec,
    pub dt: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone)]
pub struct RomPrediction {
    pub mean: Array2<f64>,
    pub variance: Array2<f64>,
    /// Latent trajectories of the retained samples.
    pub latents: Vec<Array2<f64>>,
    /// Coefficient matrices of the retained samples.
    pub coefficients: Vec<Array2<f64>>,
    pub diverged: usize,
}

impl RomPrediction {
    pub fn std(&self) -> Array2<f64> {
        self.variance.mapv(f64::sqrt)
    }

    /// `max_{(t,x)} V^{1/2}`.
    pub fn max_std(&self) -> f64 {
        self.variance.iter().fold(0.0f64, |m, &v| m.max(v)).sqrt()
    }
}

impl RomBundle {
    fn check_ic(&self, ic: &[f64]) -> Result<()> {
        if ic.len() != self.model.field_dim() {
            return Err(Error::Shape(format!(
                "initial condition has {} entries, network expects {}",
                ic.len(),
                self.model.field_dim()
            )));
        }
        Ok(())
    }

    fn rollout(&self, xi: ArrayView2<f64>, z0: ArrayView1<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let ode = LatentOde::from_coefficients(xi, &self.dictionary)?;
        let z = integrate_latent(&ode, z0, self.dt, self.n_steps)?;
        let u = self.model.decode_batch(z.view())?;
        Ok((z, u))
    }

    /// Sample-based prediction with mean and population variance fields.
    pub fn predict(&self, mu: &[f64], ic: &[f64], n_samples: usize, rng: &mut SeededRng) -> Result<RomPrediction> {
        if n_samples == 0 {
            return Err(Error::Config("need at least one coefficient sample".into()));
        }
        self.check_ic(ic)?;
        let z0 = Array1::from(self.model.encode(ic)?);
        let samples = sample_coefficients(&self.field, mu, n_samples, rng);
        let runs = par::map_slice(&samples, |xi| self.rollout(xi.view(), z0.view()));

        let mut decoded = Vec::with_capacity(n_samples);
        let mut latents = Vec::with_capacity(n_samples);
        let mut coefficients = Vec::with_capacity(n_samples);
        let mut diverged = 0;
        for (run, xi) in runs.into_iter().zip(samples) {
            match run {
                Ok((z, u)) if u.iter().all(|v| v.is_finite()) => {
                    latents.push(z);
                    decoded.push(u);
                    coefficients.push(xi);
                }
                Ok(_) | Err(Error::LatentDivergence { .. }) => diverged += 1,
                Err(e) => return Err(e),
            }
        }
        if diverged * 2 > n_samples {
            return Err(Error::TooManyDivergedSamples {
                diverged,
                total: n_samples,
            });
        }
        if diverged > 0 {
            log::warn!("{diverged} of {n_samples} coefficient samples diverged at mu = {mu:?}");
        }
        let (mean, variance) = mean_and_variance(&decoded);
        Ok(RomPrediction {
            mean,
            variance,
            latents,
            coefficients,
            diverged,
        })
    }

    /// Single rollout with the GP mean coefficients.
    pub fn predict_mean_only(&self, mu: &[f64], ic: &[f64]) -> Result<Array2<f64>> {
        self.check_ic(ic)?;
        let z0 = Array1::from(self.model.encode(ic)?);
        let (mean, _) = self.field.predict(mu);
        Ok(self.rollout(mean.view(), z0.view())?.1)
    }
}

/// Per-entry mean and `1/N` variance, accumulated in slice order.
pub fn mean_and_variance(fields: &[Array2<f64>]) -> (Array2<f64>, Array2<f64>) {
    let n = fields.len() as f64;
    let mut mean = Array2::zeros(fields[0].raw_dim());
    for f in fields {
        mean += f;
    }
    mean /= n;
    let mut var = Array2::<f64>::zeros(mean.raw_dim());
    for f in fields {
        ndarray::Zip::from(&mut var)
            .and(f)
            .and(&mean)
            .for_each(|v, &x, &m| *v += (x - m) * (x - m));
    }
    var /= n;
    (mean, var)
}

/// `max_n |u~_n - u_n|_2 / |u_n|_2`.
pub fn max_relative_error(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", pred.dim(), truth.dim())));
    }
    let mut worst = 0.0f64;
    for (n, (p, u)) in pred.rows().into_iter().zip(truth.rows()).enumerate() {
        let denom = u.dot(&u).sqrt();
        if denom == 0.0 {
            return Err(Error::ZeroNormSnapshot(n));
        }
        let num = p.iter().zip(u.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst = worst.max(num / denom);
    }
    Ok(worst)
}
