//! Forward greedy minimization of `tr((EᴴE + λI)⁻¹)`, used as a comparator.
//!
//! With a fully sampled readout the Gram matrix is block diagonal over
//! readout position, so each candidate is scored per block with a rank-`C`
//! Woodbury update of `M = (G + λI)⁻¹`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::greedy::DesignConfig;
use crate::error::{Error, Result};
use crate::grid::{GridShape, SamplingPattern};
use crate::models::SensitivitySet;

/// Largest phase-encode `N·L` accepted by [`greedy_mse`].
pub const MSE_LIMIT: usize = 2048;

#[derive(Debug, Clone)]
pub struct MseDesign {
    pub pattern: SamplingPattern,
    pub sequence: Vec<(usize, usize)>,
    /// `tr((G + λI)⁻¹)` before any sample and after each one.
    pub trace_history: Vec<f64>,
    pub lambda: f64,
}

/// Index of spatial voxel `r` for each `(readout x, phase-encode rp)`.
fn block_layout(sens: &SensitivitySet) -> (Vec<usize>, usize, Vec<Vec<usize>>) {
    let dims = sens.spatial_dims();
    let phase = sens.phase_dims();
    let np: usize = phase.iter().product();
    let m = sens.readout_axis().map_or(1, |a| dims[a]);
    let mut table = vec![vec![0; np]; m];
    for r in 0..sens.spatial_len() {
        let mut rest = r;
        let mut coords = vec![0; dims.len()];
        for d in (0..dims.len()).rev() {
            coords[d] = rest % dims[d];
            rest /= dims[d];
        }
        let x = sens.readout_axis().map_or(0, |a| coords[a]);
        let mut rp = 0;
        for (d, &c) in coords.iter().enumerate() {
            if Some(d) != sens.readout_axis() {
                rp = rp * dims[d] + c;
            }
        }
        table[x][rp] = r;
    }
    (phase, np, table)
}

/// Greedy sample selection by the largest drop in `tr((G + λI)⁻¹)`.
///
/// `lambda` defaults to `1e-4` times the mean diagonal of the fully sampled
/// Gram matrix. Near-ties (relative `1e-12`) go to the candidate with the
/// lower tie-break rank.
pub fn greedy_mse(sens: &SensitivitySet, config: &DesignConfig, lambda: Option<f64>) -> Result<MseDesign> {
    let (phase, np, table) = block_layout(sens);
    let shape = GridShape::new(&phase, sens.frames())?;
    config.validate(&shape)?;
    let (coeffs, coils) = (sens.coeffs(), sens.coils());
    let n = np * coeffs;
    if n > MSE_LIMIT {
        return Err(Error::TooLarge {
            what: "phase-encode N·L for greedy MSE",
            size: n,
            limit: MSE_LIMIT,
        });
    }
    let energy = sens.column_energy();
    let lambda = match lambda {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(Error::InvalidParameter(format!("lambda {l} must be positive"))),
        None => 1e-4 * energy.iter().sum::<f64>() / energy.len() as f64,
    };
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter("sensitivities are identically zero".into()));
    }

    let blocks = table.len();
    let norm = 1.0 / (np as f64).sqrt();
    let row_block = |k: usize, t: usize, x: usize| -> DMatrix<Complex64> {
        let (ky, kz) = shape.coords(k);
        let mut b = DMatrix::<Complex64>::zeros(coils, n);
        for rp in 0..np {
            let (ry, rz) = shape.coords(rp);
            let arg = (ky * ry) as f64 / shape.ny() as f64 + (kz * rz) as f64 / shape.nz() as f64;
            let e = Complex64::from_polar(norm, -2.0 * PI * arg);
            let r = table[x][rp];
            for l in 0..coeffs {
                for c in 0..coils {
                    b[(c, l * np + rp)] = e * sens.get(r, t, l, c);
                }
            }
        }
        b
    };
    let woodbury = |b: &DMatrix<Complex64>, m: &DMatrix<Complex64>| {
        let u = b * m;
        let v = DMatrix::<Complex64>::identity(coils, coils) + &u * b.adjoint();
        let vinv = v.try_inverse().expect("I + B M Bᴴ is positive definite");
        (u, vinv)
    };

    let mut inverses = vec![DMatrix::<Complex64>::identity(n, n) / Complex64::new(lambda, 0.0); blocks];
    let mut trace = (blocks * n) as f64 / lambda;
    let rank = config.ranks(&shape);
    let cells = shape.cells();
    let mut pattern = SamplingPattern::empty(shape.clone());
    let mut sequence = Vec::with_capacity(config.total);
    let mut trace_history = vec![trace];

    for _ in 0..config.total {
        let active: Vec<usize> = (0..cells)
            .filter(|&cell| config.check_insert(&pattern, cell % np, cell / np).is_ok())
            .collect();
        let gains: Vec<f64> = active
            .par_iter()
            .map(|&cell| {
                let (k, t) = (cell % np, cell / np);
                (0..blocks)
                    .map(|x| {
                        let b = row_block(k, t, x);
                        let (u, vinv) = woodbury(&b, &inverses[x]);
                        (vinv * &u * u.adjoint()).trace().re
                    })
                    .sum()
            })
            .collect();
        let top = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cell = active
            .iter()
            .zip(&gains)
            .filter(|(_, &g)| g >= top - 1e-12 * top.abs())
            .map(|(&c, _)| c)
            .min_by_key(|&c| rank[c])
            .ok_or(Error::Infeasible {
                requested: config.total,
                available: sequence.len(),
            })?;
        let (k, t) = (cell % np, cell / np);
        for (x, m) in inverses.iter_mut().enumerate() {
            let b = row_block(k, t, x);
            let (u, vinv) = woodbury(&b, m);
            *m -= u.adjoint() * vinv * &u;
        }
        pattern.insert(k, t)?;
        sequence.push((k, t));
        trace = inverses.iter().map(|m| m.trace().re).sum();
        trace_history.push(trace);
    }
    Ok(MseDesign {
        pattern,
        sequence,
        trace_history,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{from_coils, from_support, synthetic_coils, CoilProfile, SupportMask};

    #[test]
    fn constant_sensitivity_fills_in_index_order() {
        let s = from_support(&SupportMask::full(&[8]).unwrap()).unwrap();
        let mut cfg = DesignConfig::new(5);
        cfg.allow_repeats = false;
        let d = greedy_mse(&s, &cfg, None).unwrap();
        assert_eq!(d.sequence, (0..5).map(|k| (k, 0)).collect::<Vec<_>>());
    }

    #[test]
    fn trace_never_increases() {
        let coils = synthetic_coils(&[12, 8], 3, CoilProfile::Gaussian, 2).unwrap();
        let s = from_coils(&coils).unwrap().with_readout(Some(1)).unwrap();
        let d = greedy_mse(&s, &DesignConfig::new(8), None).unwrap();
        assert!(d.trace_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert_eq!(d.pattern.shape().phase_dims(), &[12]);
    }

    #[test]
    fn woodbury_matches_direct_inverse() {
        let coils = synthetic_coils(&[6, 4], 2, CoilProfile::Gaussian, 4).unwrap();
        let s = from_coils(&coils).unwrap();
        let cfg = DesignConfig::new(5);
        let d = greedy_mse(&s, &cfg, Some(0.1)).unwrap();
        let dense = crate::spectral::build_dense(&s, &d.pattern).unwrap();
        let want: f64 = dense.eigenvalues(0.1).iter().map(|e| 1.0 / e).sum();
        let got = *d.trace_history.last().unwrap();
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn size_guard() {
        let s = from_support(&SupportMask::full(&[64, 33]).unwrap()).unwrap();
        assert!(matches!(
            greedy_mse(&s, &DesignConfig::new(1), None),
            Err(Error::TooLarge { .. })
        ));
    }
}
