//! Spectral moments of the Gram matrix `EᴴE`, a dense oracle for small
//! problems, and the eigenvalue-variance lower bound.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{dd_fft, DifferentialDistribution, SamplingPattern};
use crate::models::SensitivitySet;
use crate::weighting::{compute_w, WeightFunction};

/// Largest `N·L` accepted by [`build_dense`].
pub const DENSE_LIMIT: usize = 4096;

/// Explicit encoding matrix. Rows run over `(t, k ascending, repeat, c)`,
/// columns over `(l, r)` as `l * N + r`.
#[derive(Debug, Clone)]
pub struct DenseModel {
    encoding: DMatrix<Complex64>,
    gram: DMatrix<Complex64>,
}

impl DenseModel {
    pub fn encoding(&self) -> &DMatrix<Complex64> {
        &self.encoding
    }

    pub fn gram(&self) -> &DMatrix<Complex64> {
        &self.gram
    }

    pub fn trace(&self) -> f64 {
        self.gram.diagonal().iter().map(|v| v.re).sum()
    }

    /// `tr((EᴴE)²) = ‖EᴴE‖²_F` for Hermitian `EᴴE`.
    pub fn frobenius_sq(&self) -> f64 {
        self.gram.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Largest absolute deviation of the Gram matrix from its adjoint.
    pub fn hermitian_error(&self) -> f64 {
        let g = &self.gram;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                worst = worst.max((g[(i, j)] - g[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of `EᴴE + λI`, ascending.
    pub fn eigenvalues(&self, lambda: f64) -> Vec<f64> {
        let n = self.gram.nrows();
        let shifted = &self.gram + DMatrix::<Complex64>::identity(n, n) * Complex64::new(lambda, 0.0);
        let mut ev: Vec<f64> = shifted.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn check_pattern(sens: &SensitivitySet, pattern: &SamplingPattern) -> Result<()> {
    let grid = sens.grid()?;
    if grid.phase_dims() != pattern.shape().phase_dims() || grid.frames() != pattern.shape().frames()
    {
        return Err(Error::mismatch(
            format!("{:?} x {}", grid.phase_dims(), grid.frames()),
            format!(
                "{:?} x {}",
                pattern.shape().phase_dims(),
                pattern.shape().frames()
            ),
        ));
    }
    Ok(())
}

/// Assembles `E` with a unitary DFT (`1/√N`), so `tr(EᴴE)` and
/// `tr((EᴴE)²)` agree with the closed forms on the same pattern.
pub fn build_dense(sens: &SensitivitySet, pattern: &SamplingPattern) -> Result<DenseModel> {
    check_pattern(sens, pattern)?;
    let shape = pattern.shape();
    let n = shape.len();
    let cols = n * sens.coeffs();
    if cols > DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "dense Gram dimension N·L",
            size: cols,
            limit: DENSE_LIMIT,
        });
    }
    let coils = sens.coils();
    let rows = pattern.total() * coils;
    let (ny, nz) = (shape.ny() as f64, shape.nz() as f64);
    let norm = 1.0 / (n as f64).sqrt();
    let mut e = DMatrix::<Complex64>::zeros(rows, cols);
    let mut row = 0;
    for t in 0..shape.frames() {
        for k in 0..n {
            let (ky, kz) = shape.coords(k);
            let phases: Vec<Complex64> = (0..n)
                .map(|r| {
                    let (ry, rz) = shape.coords(r);
                    let arg = (ky * ry) as f64 / ny + (kz * rz) as f64 / nz;
                    Complex64::from_polar(norm, -2.0 * PI * arg)
                })
                .collect();
            for _ in 0..pattern.count(k, t) {
                for c in 0..coils {
                    for l in 0..sens.coeffs() {
                        let s = sens.map(t, l, c);
                        for r in 0..n {
                            e[(row, l * n + r)] = phases[r] * s[r];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    let gram = e.adjoint() * &e;
    Ok(DenseModel { encoding: e, gram })
}

/// `Σ_k λ_k = Σ_{t} PSF_t(0) Σ_{r,l,c} |S_{t,l,c}(r)|²` with `PSF_t(0) = N_t/N`.
pub fn trace_moment1(sens: &SensitivitySet, pattern: &SamplingPattern) -> Result<f64> {
    check_pattern(sens, pattern)?;
    let n = pattern.shape().len() as f64;
    let mut total = 0.0;
    for t in 0..sens.frames() {
        let mut energy = 0.0;
        for l in 0..sens.coeffs() {
            for c in 0..sens.coils() {
                energy += sens.map(t, l, c).iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
        }
        total += energy * pattern.totals()[t] as f64 / n;
    }
    Ok(total)
}

/// `Σ_k λ_k² = ⟨w, p⟩`.
pub fn trace_moment2(w: &WeightFunction, p: &DifferentialDistribution) -> Result<f64> {
    let grid = w.grid()?;
    if &grid != p.shape() {
        return Err(Error::mismatch(
            format!("{:?} x {}", grid.phase_dims(), grid.frames()),
            format!("{:?} x {}", p.shape().phase_dims(), p.shape().frames()),
        ));
    }
    Ok(w.values().iter().zip(p.values()).map(|(a, b)| a * b).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBound {
    pub moment1: f64,
    pub moment2: f64,
    /// `moment1² / dim`, the value of `moment2` when every eigenvalue on the
    /// encoded subspace is equal.
    pub lower_bound: f64,
    pub gap: f64,
    /// Number of Gram columns that carry any sensitivity.
    pub dim: usize,
}

/// Cauchy–Schwarz bound on `Σ λ²` given `Σ λ`.
///
/// The divisor counts only columns `(r, l)` with nonzero sensitivity
/// energy: the remaining columns of `E` are identically zero, so their
/// eigenvalues are zero for every pattern and cannot be equalized.
pub fn variance_bound(sens: &SensitivitySet, pattern: &SamplingPattern) -> Result<VarianceBound> {
    let moment1 = trace_moment1(sens, pattern)?;
    let moment2 = trace_moment2(&compute_w(sens), &dd_fft(pattern))?;
    let dim = sens.column_energy().iter().filter(|&&e| e > 0.0).count();
    let lower_bound = if dim == 0 { 0.0 } else { moment1 * moment1 / dim as f64 };
    Ok(VarianceBound {
        moment1,
        moment2,
        lower_bound,
        gap: moment2 - lower_bound,
        dim,
    })
}
