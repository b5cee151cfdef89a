//! Pool-size comparison for the data-parallel stages. Build with
//! `--no-default-features` to time the plain sequential code path instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latent_rom::autoencoder::MlpSpec;
use latent_rom::fom::{self, BurgersConfig};
use latent_rom::greedy::{self, scan_variance, AxisSpec, GridSpec, Schedule, TrainConfig, TrainedRom, XiInit};
use latent_rom::rng::SeededRng;
use latent_rom::sindy::{encode_all, lasdi_loss_and_grad};

fn bench_config() -> TrainConfig {
    TrainConfig {
        fom: BurgersConfig {
            solver: fom::JacobianSolver::Banded,
            ..BurgersConfig::desk_scale()
        },
        network: MlpSpec::new(vec![121, 40, 4], Default::default()),
        training: Schedule {
            n_epoch: 200,
            n_up: 100,
            n_samples: 20,
            learning_rate: 1e-3,
            xi_init: XiInit::GpMean,
        },
        grid: GridSpec {
            a: AxisSpec { min: 0.7, max: 0.9, count: 6 },
            w: AxisSpec { min: 0.9, max: 1.1, count: 6 },
            initial: None,
        },
        ..TrainConfig::desk_scale()
    }
}

#[cfg(feature = "parallel")]
fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let max = std::thread::available_parallelism().map_or(1, |n| n.get()).max(2);
    [1, max]
        .into_iter()
        .map(|n| (format!("{n}_threads"), rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

#[cfg(feature = "parallel")]
fn run_in_pools(c: &mut Criterion, name: &str, f: impl Fn() + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| b.iter(|| pool.install(&f)));
    }
    group.finish();
}

#[cfg(not(feature = "parallel"))]
fn run_in_pools(c: &mut Criterion, name: &str, f: impl Fn() + Sync) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    group.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(&f));
    group.finish();
}

fn trained() -> (TrainConfig, TrainedRom) {
    let cfg = bench_config();
    let (rom, _) = greedy::train(&cfg, &mut ()).expect("training");
    (cfg, rom)
}

fn pipeline(c: &mut Criterion) {
    let (cfg, rom) = trained();
    let grid = rom.grid().unwrap();
    let candidates = grid.unsampled();
    run_in_pools(c, "variance_scan", || {
        scan_variance(&rom.bundle, &grid, &candidates, &cfg.fom, cfg.training.n_samples, 1);
    });

    let p = grid.param(candidates[0]);
    let ic = fom::initial_condition(p, &cfg.fom).unwrap();
    run_in_pools(c, "sampled_prediction", || {
        rom.bundle.predict(&p.as_array(), &ic, 100, &mut SeededRng::new(3)).unwrap();
    });

    let snapshots: Vec<_> = rom.params.iter().map(|&q| fom::solve_fom(q, &cfg.fom).unwrap().values).collect();
    run_in_pools(c, "loss_gradient", || {
        lasdi_loss_and_grad(&snapshots, &rom.bundle.model, &rom.coefficients, &cfg.loss, &cfg.dictionary, cfg.fom.dt).unwrap();
    });
    run_in_pools(c, "encode_snapshots", || {
        encode_all(&rom.bundle.model, &snapshots).unwrap();
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
