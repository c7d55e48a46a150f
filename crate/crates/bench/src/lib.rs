//! Fixtures shared by the benchmarks.

use raman_core::dataset::{self, ForwardModel};
use raman_core::{Dataset, PumpConfig, Scheme};

/// Mid-range pump configuration of a scheme.
pub fn mid_pumps(scheme: Scheme) -> PumpConfig {
    let y: Vec<f64> = scheme.y_min().iter().zip(scheme.y_max()).map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    PumpConfig::from_vector(scheme, &y).expect("scheme vector")
}

pub fn small_dataset(scheme: Scheme, count: usize) -> Dataset {
    dataset::generate(scheme, &scheme.default_grid(), count, 7, &ForwardModel::default()).expect("generation")
}
