//! Joint training with variance-driven greedy acquisition of new FOM runs.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AdamState, AutoencoderModel, MlpSpec};
use crate::error::{Error, Result};
use crate::fom::{self, BurgersConfig, ParamVector};
use crate::gp::{fit_field, GpCoefficientField, GpFitOptions};
use crate::par;
use crate::rng::{derive_seed, SeededRng};
use crate::rom::RomBundle;
use crate::sindy::{lasdi_loss_and_grad, CoefficientTensor, DictionarySpec, LossBreakdown, LossWeights};

// Seed tags for the independent random streams of a run.
const TAG_NETWORK: u64 = 1;
const TAG_GP: u64 = 2;
const TAG_SCAN: u64 = 3;
const TAG_SUBSET: u64 = 4;

/// Evenly spaced values `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + i as f64 * step })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub a: AxisSpec,
    pub w: AxisSpec,
    /// Linear indices of the starting parameters; the four corners when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<usize>>,
}

/// The discretized parameter space; linear index `ia * n_w + iw`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    a: Vec<f64>,
    w: Vec<f64>,
    sampled: BTreeSet<usize>,
}

impl ParamGrid {
    pub fn new(a: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        for (name, v) in [("a", &a), ("w", &w)] {
            if v.is_empty() {
                return Err(Error::Config(format!("grid axis {name} is empty")));
            }
            if v.windows(2).any(|p| !(p[0] < p[1])) || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("grid axis {name} must be strictly increasing")));
            }
        }
        Ok(ParamGrid {
            a,
            w,
            sampled: BTreeSet::new(),
        })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::new(spec.a.values(), spec.w.values())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.a.len(), self.w.len())
    }

    pub fn len(&self) -> usize {
        self.a.len() * self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn a_values(&self) -> &[f64] {
        &self.a
    }

    pub fn w_values(&self) -> &[f64] {
        &self.w
    }

    pub fn index(&self, ia: usize, iw: usize) -> usize {
        ia * self.w.len() + iw
    }

    pub fn param(&self, idx: usize) -> ParamVector {
        ParamVector::new(self.a[idx / self.w.len()], self.w[idx % self.w.len()])
    }

    /// Corners in the order (min,min), (max,min), (min,max), (max,max).
    pub fn corners(&self) -> Vec<usize> {
        let (na, nw) = self.shape();
        let mut out = Vec::new();
        for idx in [self.index(0, 0), self.index(na - 1, 0), self.index(0, nw - 1), self.index(na - 1, nw - 1)] {
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        out
    }

    pub fn is_sampled(&self, idx: usize) -> bool {
        self.sampled.contains(&idx)
    }

    pub fn mark_sampled(&mut self, idx: usize) -> Result<()> {
        if idx >= self.len() {
            return Err(Error::Config(format!("grid index {idx} out of range")));
        }
        if !self.sampled.insert(idx) {
            return Err(Error::Config(format!("grid index {idx} already sampled")));
        }
        Ok(())
    }

    pub fn unsampled(&self) -> Vec<usize> {
        (0..self.len()).filter(|i| !self.sampled.contains(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Every unsampled grid point.
    #[default]
    Full,
    /// A random subset of unsampled points each cycle.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub mode: ScanMode,
    #[serde(default = "default_random_points")]
    pub random_points: usize,
}

fn default_random_points() -> usize {
    20
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            mode: ScanMode::Full,
            random_points: default_random_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub n_epoch: usize,
    pub n_up: usize,
    pub n_samples: usize,
    pub learning_rate: f64,
    /// Starting value of the coefficient matrix of a newly acquired parameter.
    #[serde(default)]
    pub xi_init: XiInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum XiInit {
    Zeros,
    /// GP mean at the new parameter from the fit used for selection.
    #[default]
    GpMean,
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub fom: BurgersConfig,
    pub network: MlpSpec,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    pub loss: LossWeights,
    pub training: Schedule,
    pub grid: GridSpec,
    #[serde(default)]
    pub gp: GpFitOptions,
    #[serde(default)]
    pub scan: ScanConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        self.network.validate()?;
        self.dictionary.validate()?;
        self.loss.validate()?;
        if self.network.input_dim() != self.fom.n_nodes() {
            return Err(Error::Config(format!(
                "network input width {} must equal the FOM node count {}",
                self.network.input_dim(),
                self.fom.n_nodes()
            )));
        }
        let s = &self.training;
        if s.n_up == 0 || s.n_samples == 0 {
            return Err(Error::Config("n_up and n_samples must be positive".into()));
        }
        if !(s.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.gp.restarts == 0 || !(self.gp.initial_lambda.0 > 0.0 && self.gp.initial_lambda.0 <= self.gp.initial_lambda.1) {
            return Err(Error::Config("gp needs restarts >= 1 and 0 < initial_lambda.0 <= initial_lambda.1".into()));
        }
        let grid = ParamGrid::from_spec(&self.grid)?;
        let initial = self.initial_indices(&grid);
        if initial.is_empty() {
            return Err(Error::Config("no initial parameters".into()));
        }
        let distinct: BTreeSet<_> = initial.iter().collect();
        if distinct.len() != initial.len() || initial.iter().any(|&i| i >= grid.len()) {
            return Err(Error::Config("initial indices must be distinct grid indices".into()));
        }
        if self.fom.n_steps() < 1 {
            return Err(Error::Config("need at least one time step".into()));
        }
        Ok(())
    }

    pub fn initial_indices(&self, grid: &ParamGrid) -> Vec<usize> {
        self.grid.initial.clone().unwrap_or_else(|| grid.corners())
    }

    /// Desk-scale Burgers setup: 121 nodes, 121-40-4 network, 11 x 11 grid.
    pub fn desk_scale() -> Self {
        TrainConfig {
            seed: 0,
            fom: BurgersConfig::desk_scale(),
            network: MlpSpec::new(vec![121, 40, 4], Default::default()),
            dictionary: DictionarySpec::default(),
            loss: LossWeights::default(),
            training: Schedule {
                n_epoch: 6000,
                n_up: 1000,
                n_samples: 20,
                learning_rate: 1e-3,
                xi_init: XiInit::GpMean,
            },
            grid: GridSpec {
                a: AxisSpec { min: 0.7, max: 0.9, count: 11 },
                w: AxisSpec { min: 0.9, max: 1.1, count: 11 },
                initial: None,
            },
            gp: GpFitOptions::default(),
            scan: ScanConfig::default(),
        }
    }

    /// Full-size Burgers setup: 1001 nodes, 1001-100-5 network, 21 x 21 grid.
    pub fn full_scale() -> Self {
        TrainConfig {
            fom: BurgersConfig {
                solver: fom::JacobianSolver::Banded,
                ..BurgersConfig::full_scale()
            },
            network: MlpSpec::new(vec![1001, 100, 5], Default::default()),
            training: Schedule {
                n_epoch: 28_000,
                n_up: 2000,
                n_samples: 20,
                learning_rate: 1e-3,
                xi_init: XiInit::GpMean,
            },
            grid: GridSpec {
                a: AxisSpec { min: 0.7, max: 0.9, count: 21 },
                w: AxisSpec { min: 0.9, max: 1.1, count: 21 },
                initial: None,
            },
            ..Self::desk_scale()
        }
    }
}

/// Number of acquisition cycles: epochs `h` in `1..n_epoch` with `h % n_up == 0`.
pub fn planned_acquisitions(n_epoch: usize, n_up: usize) -> usize {
    n_epoch.saturating_sub(1) / n_up
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub best_total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub epoch: usize,
    pub index: usize,
    pub param: ParamVector,
    pub max_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub acquisitions: Vec<Acquisition>,
    /// Epochs at which the GP refit failed and acquisition was skipped.
    pub gp_failures: Vec<usize>,
    pub sampled: Vec<usize>,
}

/// A trained model together with its training set.
#[derive(Debug, Clone)]
pub struct TrainedRom {
    pub config: TrainConfig,
    pub bundle: RomBundle,
    pub coefficients: CoefficientTensor,
    /// Grid indices of the training parameters, in acquisition order.
    pub sampled: Vec<usize>,
    pub params: Vec<ParamVector>,
}

impl TrainedRom {
    pub fn grid(&self) -> Result<ParamGrid> {
        let mut grid = ParamGrid::from_spec(&self.config.grid)?;
        for &i in &self.sampled {
            grid.mark_sampled(i)?;
        }
        Ok(grid)
    }
}

/// `max_{(t,x)} V^{1/2}` of a sampled prediction at every candidate.
///
/// Each candidate uses its own random stream keyed by its grid index, so the
/// score of a point does not depend on which other points are scanned.
/// Prediction failures score `+inf`.
pub fn scan_variance(
    bundle: &RomBundle,
    grid: &ParamGrid,
    candidates: &[usize],
    fom_cfg: &BurgersConfig,
    n_samples: usize,
    seed: u64,
) -> Vec<f64> {
    par::map_slice(candidates, |&idx| {
        let p = grid.param(idx);
        let result = fom::initial_condition(p, fom_cfg).and_then(|ic| {
            let mut rng = SeededRng::with_stream(seed, idx as u64);
            bundle.predict(&p.as_array(), &ic, n_samples, &mut rng)
        });
        match result {
            Ok(pred) => pred.max_std(),
            Err(e) => {
                log::warn!("prediction failed at grid point {idx} ({p:?}): {e}");
                f64::INFINITY
            }
        }
    })
}

/// Argmax of `scores` (indexed by grid position) over unsampled points.
///
/// NaN entries are skipped; ties go to the lowest linear index.
pub fn select_next_parameter(scores: &[f64], grid: &ParamGrid) -> Result<usize> {
    if scores.len() != grid.len() {
        return Err(Error::Shape(format!(
            "{} scores for a grid of {} points",
            scores.len(),
            grid.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, &s) in scores.iter().enumerate() {
        if grid.is_sampled(idx) || s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((idx, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::GridExhausted)
}

/// Called after each acquisition with the model state at that point.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }

    fn on_acquisition(&mut self, _rom: &TrainedRom, _acq: &Acquisition) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

fn params_matrix(params: &[ParamVector]) -> Array2<f64> {
    Array2::from_shape_fn((params.len(), 2), |(i, d)| params[i].as_array()[d])
}

fn solve_all(params: &[ParamVector], cfg: &BurgersConfig) -> Result<Vec<Array2<f64>>> {
    par::map_slice(params, |&p| fom::solve_fom(p, cfg).map(|s| s.values))
        .into_iter()
        .collect()
}

fn candidate_points(grid: &ParamGrid, scan: &ScanConfig, rng: &mut SeededRng) -> Vec<usize> {
    let mut pool = grid.unsampled();
    if scan.mode == ScanMode::Random && scan.random_points < pool.len() {
        // partial Fisher-Yates
        for i in 0..scan.random_points {
            let j = i + (rng.next_u64() % (pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(scan.random_points);
        pool.sort_unstable();
    }
    pool
}

/// Runs the full training loop with greedy sampling.
pub fn train(cfg: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<(TrainedRom, TrainReport)> {
    cfg.validate()?;
    let mut grid = ParamGrid::from_spec(&cfg.grid)?;
    let mut sampled = cfg.initial_indices(&grid);
    for &i in &sampled {
        grid.mark_sampled(i)?;
    }
    let mut params: Vec<ParamVector> = sampled.iter().map(|&i| grid.param(i)).collect();
    let mut snapshots = solve_all(&params, &cfg.fom)?;

    let dt = cfg.fom.dt;
    let n_steps = cfg.fom.n_steps();
    let nz = cfg.network.latent_dim();
    let nl = cfg.dictionary.n_terms(nz);
    let mut model = AutoencoderModel::new(cfg.network.clone(), derive_seed(cfg.seed, TAG_NETWORK))?;
    let mut coeffs = CoefficientTensor::zeros(params.len(), nz, nl);
    let mut slot_sizes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
    slot_sizes.extend(std::iter::repeat_n(nz * nl, params.len()));
    let mut adam = AdamState::new(cfg.training.learning_rate, &slot_sizes);
    let mut subset_rng = SeededRng::new(derive_seed(cfg.seed, TAG_SUBSET));

    let mut report = TrainReport::default();
    let mut best_total = f64::INFINITY;
    let fit_seed = |epoch: usize| derive_seed(derive_seed(cfg.seed, TAG_GP), epoch as u64);

    for epoch in 0..cfg.training.n_epoch {
        let (loss, grads) = lasdi_loss_and_grad(&snapshots, &model, &coeffs, &cfg.loss, &cfg.dictionary, dt)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        {
            let mut slots = model.param_slices_mut();
            slots.extend(coeffs.matrices.iter_mut().map(|m| m.as_slice_mut().expect("standard layout")));
            let mut grad_slots = grads.model.slices();
            grad_slots.extend(grads.coefficients.iter().map(|g| g.as_slice().expect("standard layout")));
            adam.update(&mut slots, &grad_slots)?;
        }
        best_total = best_total.min(loss.total);
        let record = EpochRecord { epoch, loss, best_total };
        observer.on_epoch(&record)?;
        report.history.push(record);

        if epoch == 0 || epoch % cfg.training.n_up != 0 || grid.unsampled().is_empty() {
            continue;
        }
        let field = match fit_field(params_matrix(&params).view(), &coeffs, &cfg.gp, fit_seed(epoch)) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("GP refit failed at epoch {epoch}, skipping acquisition: {e}");
                report.gp_failures.push(epoch);
                continue;
            }
        };
        let bundle = RomBundle {
            model: model.clone(),
            field,
            dictionary: cfg.dictionary,
            dt,
            n_steps,
        };
        let candidates = candidate_points(&grid, &cfg.scan, &mut subset_rng);
        let scan_seed = derive_seed(derive_seed(cfg.seed, TAG_SCAN), epoch as u64);
        let scores = scan_variance(&bundle, &grid, &candidates, &cfg.fom, cfg.training.n_samples, scan_seed);
        let mut full = vec![f64::NAN; grid.len()];
        for (&i, &s) in candidates.iter().zip(&scores) {
            full[i] = s;
        }
        let idx = select_next_parameter(&full, &grid)?;
        let p = grid.param(idx);
        let snap = fom::solve_fom(p, &cfg.fom)?;
        grid.mark_sampled(idx)?;
        sampled.push(idx);
        params.push(p);
        snapshots.push(snap.values);
        match cfg.training.xi_init {
            XiInit::Zeros => coeffs.push_zeros(nz, nl),
            XiInit::GpMean => coeffs.matrices.push(bundle.field.predict(&p.as_array()).0),
        }
        adam.push_slot(nz * nl);
        let acq = Acquisition {
            epoch,
            index: idx,
            param: p,
            max_std: full[idx],
        };
        log::info!("epoch {epoch}: acquired grid point {idx} (a={}, w={}), max std {:.3e}", p.a, p.w, acq.max_std);
        report.acquisitions.push(acq);
        let snapshot_rom = TrainedRom {
            config: cfg.clone(),
            bundle,
            coefficients: coeffs.clone(),
            sampled: sampled.clone(),
            params: params.clone(),
        };
        observer.on_acquisition(&snapshot_rom, &acq)?;
    }

    let field = fit_field(params_matrix(&params).view(), &coeffs, &cfg.gp, fit_seed(cfg.training.n_epoch))?;
    report.sampled = sampled.clone();
    let rom = TrainedRom {
        config: cfg.clone(),
        bundle: RomBundle {
            model,
            field,
            dictionary: cfg.dictionary,
            dt,
            n_steps,
        },
        coefficients: coeffs,
        sampled,
        params,
    };
    Ok((rom, report))
}

/// GP field for an arbitrary set of parameters and coefficients (used by reloading code).
pub fn refit_field(params: &[ParamVector], coeffs: &CoefficientTensor, opts: &GpFitOptions, seed: u64) -> Result<GpCoefficientField> {
    fit_field(params_matrix(params).view(), coeffs, opts, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(na: usize, nw: usize) -> ParamGrid {
        ParamGrid::from_spec(&GridSpec {
            a: AxisSpec { min: 0.7, max: 0.9, count: na },
            w: AxisSpec { min: 0.9, max: 1.1, count: nw },
            initial: None,
        })
        .unwrap()
    }

    #[test]
    fn grid_layout() {
        let g = grid(21, 21);
        assert_eq!(g.len(), 441);
        let c: Vec<_> = g.corners().into_iter().map(|i| g.param(i).as_array()).collect();
        assert_eq!(c, vec![[0.7, 0.9], [0.9, 0.9], [0.7, 1.1], [0.9, 1.1]]);
        let p = g.param(g.index(3, 2));
        assert!((p.a - 0.73).abs() < 1e-12 && (p.w - 0.92).abs() < 1e-12);
        assert!(ParamGrid::new(vec![0.1, 0.1], vec![1.0]).is_err());
    }

    #[test]
    fn acquisition_counts() {
        assert_eq!(planned_acquisitions(28_000, 2000), 13);
        assert_eq!(planned_acquisitions(6000, 1000), 5);
        assert_eq!(planned_acquisitions(500, 1000), 0);
    }

    #[test]
    fn select_single_candidate_and_ties() {
        let mut g = grid(2, 2);
        for i in [0, 1, 3] {
            g.mark_sampled(i).unwrap();
        }
        assert_eq!(select_next_parameter(&[9.0, 9.0, 0.1, 9.0], &g).unwrap(), 2);
        let g = grid(2, 2);
        assert_eq!(select_next_parameter(&[1.0, 3.0, 3.0, 2.0], &g).unwrap(), 1);
        let mut g = grid(1, 2);
        g.mark_sampled(0).unwrap();
        g.mark_sampled(1).unwrap();
        assert!(matches!(select_next_parameter(&[1.0, 2.0], &g), Err(Error::GridExhausted)));
        assert!(g.mark_sampled(1).is_err());
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_monotone_rescaling(
            scores in prop::collection::vec(0.0f64..10.0, 16),
            scale in 0.01f64..100.0,
            shift in -5.0f64..5.0,
        ) {
            let g = grid(4, 4);
            let a = select_next_parameter(&scores, &g).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| (scale * s).ln_1p() + shift).collect();
            prop_assert_eq!(a, select_next_parameter(&mapped, &g).unwrap());
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            seed: 5,
            fom: BurgersConfig {
                n_cells: 30,
                dt: 2e-2,
                t_max: 0.2,
                ..BurgersConfig::desk_scale()
            },
            network: MlpSpec::new(vec![31, 8, 2], Default::default()),
            training: Schedule {
                n_epoch: 30,
                n_up: 10,
                n_samples: 4,
                learning_rate: 1e-3,
                xi_init: XiInit::GpMean,
            },
            grid: GridSpec {
                a: AxisSpec { min: 0.7, max: 0.9, count: 3 },
                w: AxisSpec { min: 0.9, max: 1.1, count: 3 },
                initial: None,
            },
            ..TrainConfig::desk_scale()
        }
    }

    #[test]
    fn tiny_training_run() {
        let cfg = tiny_config();
        let (rom, report) = train(&cfg, &mut ()).unwrap();
        assert_eq!(report.acquisitions.len(), 2);
        assert_eq!(rom.sampled.len(), 6);
        let distinct: BTreeSet<_> = rom.sampled.iter().collect();
        assert_eq!(distinct.len(), rom.sampled.len());
        assert_eq!(report.history.len(), 30);
        assert!(report.history.iter().all(|r| r.loss.total.is_finite()));
        assert!(report.history.windows(2).all(|w| w[1].best_total <= w[0].best_total));
        assert_eq!(rom.coefficients.len(), 6);
        assert_eq!(rom.bundle.field.models.len(), 2 * 3);
    }

    #[test]
    fn no_acquisition_when_n_up_exceeds_n_epoch() {
        let mut cfg = tiny_config();
        cfg.training.n_up = 100;
        let (rom, report) = train(&cfg, &mut ()).unwrap();
        assert!(report.acquisitions.is_empty());
        assert_eq!(rom.sampled, vec![0, 6, 2, 8]);
    }

    #[test]
    fn scan_scores_independent_of_enumeration_order() {
        let cfg = tiny_config();
        let (rom, _) = train(&cfg, &mut ()).unwrap();
        let grid = rom.grid().unwrap();
        let cands = grid.unsampled();
        let fwd = scan_variance(&rom.bundle, &grid, &cands, &cfg.fom, 4, 11);
        let rev: Vec<usize> = cands.iter().rev().copied().collect();
        let back = scan_variance(&rom.bundle, &grid, &rev, &cfg.fom, 4, 11);
        for (i, s) in fwd.iter().enumerate() {
            assert_eq!(s.to_bits(), back[back.len() - 1 - i].to_bits());
        }
        let single = scan_variance(&rom.bundle, &grid, &cands[..1], &cfg.fom, 4, 11);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].to_bits(), fwd[0].to_bits());
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_config();
        cfg.network.layer_widths[0] = 30;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.grid.initial = Some(vec![0, 0]);
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.grid.initial = Some(vec![]);
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::desk_scale().validate().is_ok());
        assert!(TrainConfig::full_scale().validate().is_ok());
    }

    #[test]
    fn random_subset_scan_mode() {
        let g = grid(5, 5);
        let scan = ScanConfig { mode: ScanMode::Random, random_points: 6 };
        let c = candidate_points(&g, &scan, &mut SeededRng::new(1));
        assert_eq!(c.len(), 6);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }
}
