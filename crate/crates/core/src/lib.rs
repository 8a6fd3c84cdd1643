//! Cartesian k-space sampling design by minimizing `tr((EᴴE)²)`.
//!
//! The second spectral moment of the information matrix of a linear
//! reconstruction is an inner product `⟨w, p⟩` between a weighting function
//! `w`, computed once from the sensitivity model, and the differential
//! distribution `p` of the sampling pattern. Greedy best-candidate
//! insertion on that inner product designs patterns; brute-force dense
//! models, pseudo-replica g-factor maps and kernel power functions check
//! the results.

pub mod design;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod models;
pub mod recon;
pub mod spectral;
pub mod weighting;

pub use num_complex::Complex64;

pub use design::{
    approx_best_candidate, caipi_enumerate, evaluate_periodic, exact_best_candidate, greedy_mse,
    periodic_dd, poisson_disc, uniform_nearest, uniform_pattern, uniform_random, DeltaJMap, Design,
    DesignConfig, PeriodicCell, PoissonTarget, TieBreak,
};
pub use error::{Error, Result};
pub use grid::{
    dd_direct, dd_fft, dd_from_psf, psf, DifferentialDistribution, GridShape, PointSpreadFunction,
    SamplingPattern,
};
pub use kernel::{kernel, power_function, spearman, w_from_kernel, KernelMatrix, PowerFunction};
pub use models::{
    from_coils, from_coils_and_basis, from_support, spline_basis, synthetic_coils, CoilMaps,
    CoilProfile, SensitivitySet, SupportMask, TemporalBasis,
};
pub use recon::{
    apply_e, apply_eh, cg_solve, exact_gfactor, metrics, pseudo_replica_gfactor, CgConfig, CgSolution,
    GFactorConfig, GFactorMap, GStats, Image, KSpaceData,
};
pub use spectral::{build_dense, trace_moment1, trace_moment2, variance_bound, DenseModel, VarianceBound};
pub use weighting::{
    collapse_readout, compute_w, compute_w_separable, threshold_w, Keep, SparseWeight,
    WeightFunction,
};
