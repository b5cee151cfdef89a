#![allow(dead_code)]

use latent_rom::fom::BurgersConfig;
use latent_rom::greedy::{AxisSpec, GridSpec, Schedule, TrainConfig, XiInit};
use latent_rom::autoencoder::MlpSpec;

/// A run small enough to train in well under a second.
pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        seed: 3,
        fom: BurgersConfig {
            n_cells: 30,
            dt: 2e-2,
            t_max: 0.3,
            ..BurgersConfig::desk_scale()
        },
        network: MlpSpec::new(vec![31, 8, 3], Default::default()),
        training: Schedule {
            n_epoch: 40,
            n_up: 15,
            n_samples: 5,
            learning_rate: 1e-3,
            xi_init: XiInit::GpMean,
        },
        grid: GridSpec {
            a: AxisSpec { min: 0.7, max: 0.9, count: 3 },
            w: AxisSpec { min: 0.9, max: 1.1, count: 4 },
            initial: None,
        },
        ..TrainConfig::desk_scale()
    }
}
