//! Fixtures shared by the benchmarks.

use kdd_core::{from_coils, synthetic_coils, CoilProfile, SensitivitySet, SamplingPattern, GridShape, uniform_random};

/// Gaussian coil model on a square grid.
pub fn coil_model(n: usize, coils: usize) -> SensitivitySet {
    let maps = synthetic_coils(&[n, n], coils, CoilProfile::Gaussian, 1).expect("valid fixture");
    from_coils(&maps).expect("valid fixture")
}

/// `count` random samples on an `n × n` grid.
pub fn random_pattern(n: usize, count: usize) -> SamplingPattern {
    let shape = GridShape::new(&[n, n], 1).expect("valid fixture");
    uniform_random(&shape, count, 5)
}
