//! Shared fixtures for the benchmarks.

use lottery_core::data::{generate_synthetic, Dataset, SyntheticSpec};

/// Six-feature synthetic dataset with one pairwise interaction.
pub fn fixture(rows: usize) -> Dataset {
    let spec = SyntheticSpec::additive(vec![0.8, -0.5, 0.6, 0.2, 0.1, 0.0], 0.5).with_interaction(0, 1, 1.5);
    generate_synthetic(&spec, rows, 7).expect("valid fixture spec")
}
