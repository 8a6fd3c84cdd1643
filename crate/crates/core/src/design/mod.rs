//! Sampling-pattern generation.

mod baselines;
mod greedy;
mod heap;
mod mse;
mod periodic;

pub use baselines::{
    poisson_disc, uniform_nearest, uniform_pattern, uniform_random, uniform_random_per_frame,
    PoissonDisc, PoissonTarget,
};
pub use greedy::{
    approx_best_candidate, approx_with_rule, exact_best_candidate, exact_with_rule, DeltaJMap,
    DenseRule, Design, DesignConfig, Increment, SparseRule, TieBreak,
};
pub use heap::IndexedHeap;
pub use mse::{greedy_mse, MseDesign, MSE_LIMIT};
pub use periodic::{
    caipi_enumerate, evaluate_periodic, periodic_dd, CaipiParams, PeriodicCell, PeriodicScore,
};
