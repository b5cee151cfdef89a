//! Results must not depend on the size of the worker pool.
#![cfg(feature = "parallel")]

mod common;

use latent_rom::greedy::{self, scan_variance};

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()
}

#[test]
fn training_and_scan_identical_across_pool_sizes() {
    let cfg = common::tiny_config();
    let (one, rep_one) = pool(1).install(|| greedy::train(&cfg, &mut ()).unwrap());
    let (four, rep_four) = pool(4).install(|| greedy::train(&cfg, &mut ()).unwrap());
    assert_eq!(one.sampled, four.sampled);
    assert_eq!(one.bundle.model, four.bundle.model);
    assert_eq!(one.coefficients, four.coefficients);
    assert_eq!(rep_one.history, rep_four.history);

    let grid = one.grid().unwrap();
    let cands = grid.unsampled();
    let a = pool(1).install(|| scan_variance(&one.bundle, &grid, &cands, &cfg.fom, 5, 2));
    let b = pool(3).install(|| scan_variance(&one.bundle, &grid, &cands, &cfg.fom, 5, 2));
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
