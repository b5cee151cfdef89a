//! The command-line operations, callable as library functions.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{self, BurgersConfig, ParamVector};
use crate::greedy::{self, Acquisition, EpochRecord, GridSpec, ParamGrid, TrainConfig, TrainObserver, TrainReport, TrainedRom};
use crate::io::{self, JsonLines};
use crate::par;
use crate::rng::{derive_seed, SeededRng};
use crate::rom::max_relative_error;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_fom(config: &Path, a: f64, w: f64, out: &Path) -> Result<Array2<f64>> {
    let cfg = io::load_config(config)?;
    let snap = fom::solve_fom(ParamVector::new(a, w), &cfg.fom)?;
    io::write_matrix(out, &snap.values)?;
    Ok(snap.values)
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine<'a> {
    Epoch(&'a EpochRecord),
    Acquisition(&'a Acquisition),
    Summary { sampled: &'a [usize], gp_failures: &'a [usize], acquisitions: usize },
}

struct DirObserver {
    dir: PathBuf,
    report: JsonLines,
    count: usize,
}

impl TrainObserver for DirObserver {
    fn on_epoch(&mut self, record: &EpochRecord) -> Result<()> {
        self.report.write(&ReportLine::Epoch(record))
    }

    fn on_acquisition(&mut self, rom: &TrainedRom, acq: &Acquisition) -> Result<()> {
        self.count += 1;
        self.report.write(&ReportLine::Acquisition(acq))?;
        self.report.flush()?;
        io::save_checkpoint(&self.dir.join(format!("checkpoint_acq{:02}.json", self.count)), rom)
    }
}

/// Trains from an in-memory config, writing `report.jsonl`, per-acquisition
/// checkpoints and the final `checkpoint.json` under `out_dir`.
pub fn train_into(cfg: &TrainConfig, out_dir: &Path) -> Result<(TrainedRom, TrainReport)> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let config_path = out_dir.join("config.toml");
    fs::write(&config_path, io::config_to_toml(cfg)?).map_err(|e| Error::io(&config_path, e))?;
    let mut obs = DirObserver {
        dir: out_dir.to_path_buf(),
        report: JsonLines::create(&out_dir.join("report.jsonl"))?,
        count: 0,
    };
    let (rom, report) = greedy::train(cfg, &mut obs)?;
    obs.report.write(&ReportLine::Summary {
        sampled: &report.sampled,
        gp_failures: &report.gp_failures,
        acquisitions: report.acquisitions.len(),
    })?;
    obs.report.flush()?;
    io::save_checkpoint(&out_dir.join("checkpoint.json"), &rom)?;
    Ok((rom, report))
}

pub fn cmd_train(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<TrainReport> {
    let mut cfg = io::load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    train_into(&cfg, out_dir).map(|(_, report)| report)
}

#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub mean: Array2<f64>,
    pub variance: Array2<f64>,
    /// `samples x time x latent`.
    pub latents: Array3<f64>,
    pub diverged: usize,
}

/// Writes `mean.lsdt`, `variance.lsdt` and `latents.lsdt` into `out_dir`.
pub fn cmd_predict(checkpoint: &Path, a: f64, w: f64, n_samples: usize, seed: u64, out_dir: &Path) -> Result<PredictOutput> {
    let rom = io::load_checkpoint(checkpoint)?;
    let p = ParamVector::new(a, w);
    let ic = fom::initial_condition(p, &rom.config.fom)?;
    let pred = rom.bundle.predict(&p.as_array(), &ic, n_samples, &mut SeededRng::new(seed))?;
    let (nt, nz) = pred.latents[0].dim();
    let mut latents = Array3::zeros((pred.latents.len(), nt, nz));
    for (s, z) in pred.latents.iter().enumerate() {
        latents.index_axis_mut(ndarray::Axis(0), s).assign(z);
    }
    create_dir(out_dir)?;
    io::write_matrix(&out_dir.join("mean.lsdt"), &pred.mean)?;
    io::write_matrix(&out_dir.join("variance.lsdt"), &pred.variance)?;
    io::write_tensor(&out_dir.join("latents.lsdt"), &latents.clone().into_dyn())?;
    Ok(PredictOutput {
        mean: pred.mean,
        variance: pred.variance,
        latents,
        diverged: pred.diverged,
    })
}

fn discretization_hash(cfg: &BurgersConfig) -> u64 {
    let mut h = 0x6c73_6474u64;
    for v in [cfg.x_min, cfg.x_max, cfg.dt, cfg.t_max, cfg.newton_tol] {
        h = derive_seed(h, v.to_bits());
    }
    for v in [cfg.n_cells, cfg.newton_max_iter] {
        h = derive_seed(h, v as u64);
    }
    h
}

/// File holding the FOM solution for `p` under `cfg` inside a cache directory.
pub fn fom_cache_path(dir: &Path, p: ParamVector, cfg: &BurgersConfig) -> PathBuf {
    dir.join(format!(
        "fom_{:016x}_{:016x}_{:016x}.lsdt",
        p.a.to_bits(),
        p.w.to_bits(),
        discretization_hash(cfg)
    ))
}

/// Cached FOM solution; solved and stored when absent unless `no_solve`.
pub fn cached_fom(dir: &Path, p: ParamVector, cfg: &BurgersConfig, no_solve: bool) -> Result<Array2<f64>> {
    let path = fom_cache_path(dir, p, cfg);
    if path.exists() {
        return io::read_matrix(&path);
    }
    if no_solve {
        return Err(Error::Config(format!("no cached FOM solution for a={}, w={}", p.a, p.w)));
    }
    let snap = fom::solve_fom(p, cfg)?;
    create_dir(dir)?;
    // write to a temp name first so a concurrent reader never sees a partial file
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    io::write_matrix(&tmp, &snap.values)?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(snap.values)
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub grid: Option<GridSpec>,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub n_samples: usize,
    pub seed: u64,
    pub no_solve: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub a_values: Vec<f64>,
    pub w_values: Vec<f64>,
    /// Grid indices that were training points.
    pub training_points: Vec<usize>,
    pub worst_error_percent: f64,
    pub worst_index: usize,
    pub median_error_percent: f64,
    pub max_std: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Max relative error in percent, `n_a x n_w`.
    pub error: Array2<f64>,
    /// Max predictive standard deviation, `n_a x n_w`.
    pub std: Array2<f64>,
    pub summary: EvaluateSummary,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Plain-text grid of errors; training points are bracketed.
pub fn render_heatmap(error: &Array2<f64>, grid: &ParamGrid, training: &[usize]) -> String {
    let mut s = String::from("  a \\ w ");
    for w in grid.w_values() {
        s.push_str(&format!("{w:>8.3}"));
    }
    s.push('\n');
    for (ia, a) in grid.a_values().iter().enumerate() {
        s.push_str(&format!("{a:>8.3}"));
        for iw in 0..grid.w_values().len() {
            let v = error[[ia, iw]];
            if training.contains(&grid.index(ia, iw)) {
                s.push_str(&format!(" [{v:>5.2}]"));
            } else {
                s.push_str(&format!("  {v:>5.2} "));
            }
        }
        s.push('\n');
    }
    s
}

/// Error and uncertainty heatmaps against the FOM on every grid point.
pub fn evaluate_rom(rom: &TrainedRom, opts: &EvaluateOptions) -> Result<Evaluation> {
    let grid_spec = opts.grid.clone().unwrap_or_else(|| rom.config.grid.clone());
    let grid = ParamGrid::from_spec(&grid_spec)?;
    create_dir(&opts.cache_dir)?;
    create_dir(&opts.out_dir)?;
    let fom_cfg = &rom.config.fom;
    let results = par::map_range(grid.len(), |idx| -> Result<(f64, f64)> {
        let p = grid.param(idx);
        let truth = cached_fom(&opts.cache_dir, p, fom_cfg, opts.no_solve)?;
        let ic = truth.row(0).to_vec();
        let mut rng = SeededRng::with_stream(opts.seed, idx as u64);
        let pred = rom.bundle.predict(&p.as_array(), &ic, opts.n_samples, &mut rng)?;
        Ok((100.0 * max_relative_error(pred.mean.view(), truth.view())?, pred.max_std()))
    });
    let (na, nw) = grid.shape();
    let mut error = Array2::zeros((na, nw));
    let mut std = Array2::zeros((na, nw));
    for (idx, r) in results.into_iter().enumerate() {
        let (e, s) = r?;
        error[[idx / nw, idx % nw]] = e;
        std[[idx / nw, idx % nw]] = s;
    }

    // training points that lie on the evaluation grid
    let training: Vec<usize> = rom
        .params
        .iter()
        .filter_map(|p| {
            let ia = grid.a_values().iter().position(|&a| a == p.a)?;
            let iw = grid.w_values().iter().position(|&w| w == p.w)?;
            Some(grid.index(ia, iw))
        })
        .collect();
    let (worst_index, worst) = error
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let summary = EvaluateSummary {
        a_values: grid.a_values().to_vec(),
        w_values: grid.w_values().to_vec(),
        training_points: training.clone(),
        worst_error_percent: worst,
        worst_index,
        median_error_percent: median(&mut error.iter().copied().collect::<Vec<_>>()),
        max_std: std.iter().fold(0.0f64, |m, &v| m.max(v)),
    };

    io::write_matrix(&opts.out_dir.join("error.lsdt"), &error)?;
    io::write_matrix(&opts.out_dir.join("std.lsdt"), &std)?;
    let text = render_heatmap(&error, &grid, &training);
    let path = opts.out_dir.join("error.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let path = opts.out_dir.join("summary.json");
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(Evaluation { error, std, summary })
}

pub fn cmd_evaluate(checkpoint: &Path, opts: &EvaluateOptions) -> Result<Evaluation> {
    evaluate_rom(&io::load_checkpoint(checkpoint)?, opts)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BenchReport {
    pub repeats: usize,
    pub fom_seconds: f64,
    pub rom_seconds: f64,
    pub speedup: f64,
}

fn median_seconds(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(median(&mut times))
}

/// Median wall time of a FOM solve and of the mean-coefficient ROM path.
pub fn bench_rom(rom: &TrainedRom, a: f64, w: f64, repeats: usize) -> Result<BenchReport> {
    let repeats = repeats.max(1);
    let p = ParamVector::new(a, w);
    let cfg = &rom.config.fom;
    let fom_seconds = median_seconds(repeats, || fom::solve_fom(p, cfg).map(drop))?;
    let rom_seconds = median_seconds(repeats, || {
        let ic = fom::initial_condition(p, cfg)?;
        rom.bundle.predict_mean_only(&p.as_array(), &ic).map(drop)
    })?;
    Ok(BenchReport {
        repeats,
        fom_seconds,
        rom_seconds,
        speedup: fom_seconds / rom_seconds,
    })
}

pub fn cmd_bench(checkpoint: &Path, a: f64, w: f64, repeats: usize) -> Result<BenchReport> {
    bench_rom(&io::load_checkpoint(checkpoint)?, a, w, repeats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greedy::ParamGrid;

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut [3.0]), 3.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn cache_key_depends_on_discretization() {
        let dir = Path::new("/tmp");
        let p = ParamVector::new(0.8, 1.0);
        let a = BurgersConfig::desk_scale();
        let b = BurgersConfig { n_cells: 240, ..a.clone() };
        assert_ne!(fom_cache_path(dir, p, &a), fom_cache_path(dir, p, &b));
        assert_eq!(fom_cache_path(dir, p, &a), fom_cache_path(dir, p, &a.clone()));
    }

    #[test]
    fn heatmap_marks_training_points() {
        let grid = ParamGrid::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let e = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        let s = render_heatmap(&e, &grid, &[3]);
        assert!(s.contains("[ 4.00]"));
        assert!(s.contains("  1.00 "));
    }
}
