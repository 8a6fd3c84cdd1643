//! Periodic patterns: tiling a small cell, their differential distribution,
//! and exhaustive scoring of 2D-CAIPIRINHA lattices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dd_direct, DifferentialDistribution, GridShape, SamplingPattern};
use crate::spectral::trace_moment2;
use crate::weighting::WeightFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaipiParams {
    pub ry: usize,
    pub rz: usize,
    pub shift: usize,
}

/// A pattern `s₀` on a cell of size `n₀`, repeated over a larger grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicCell {
    pattern: SamplingPattern,
    caipi: Option<CaipiParams>,
}

impl PeriodicCell {
    pub fn new(pattern: SamplingPattern) -> Self {
        PeriodicCell {
            pattern,
            caipi: None,
        }
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn period(&self) -> &[usize] {
        self.pattern.shape().phase_dims()
    }

    pub fn caipi(&self) -> Option<CaipiParams> {
        self.caipi
    }

    fn check(&self, grid: &GridShape) -> Result<()> {
        let cell = self.pattern.shape();
        let fits = cell.ndim() == grid.ndim()
            && cell.frames() == grid.frames()
            && cell
                .phase_dims()
                .iter()
                .zip(grid.phase_dims())
                .all(|(&a, &b)| b % a == 0);
        if !fits {
            return Err(Error::InvalidParameter(format!(
                "period {:?} x {} does not tile grid {:?} x {}",
                cell.phase_dims(),
                cell.frames(),
                grid.phase_dims(),
                grid.frames()
            )));
        }
        Ok(())
    }

    /// The cell repeated over `grid`.
    pub fn tile(&self, grid: &GridShape) -> Result<SamplingPattern> {
        self.check(grid)?;
        let cell = self.pattern.shape();
        let n = grid.len();
        let mut counts = vec![0u32; grid.cells()];
        for t in 0..grid.frames() {
            for k in 0..n {
                let (y, z) = grid.coords(k);
                counts[t * n + k] = self.pattern.count(cell.index(y % cell.ny(), z % cell.nz()), t);
            }
        }
        SamplingPattern::from_counts(grid.clone(), counts)
    }
}

/// `p(Δk) = (N/n₀) · p₀(Δk mod n₀)`, computed from the cell alone.
pub fn periodic_dd(cell: &PeriodicCell, grid: &GridShape) -> Result<DifferentialDistribution> {
    cell.check(grid)?;
    let small = cell.pattern.shape();
    let p0 = dd_direct(&cell.pattern);
    let copies = (grid.len() / small.len()) as f64;
    let n = grid.len();
    let frames = grid.frames();
    let mut values = vec![0.0; n * frames * frames];
    for t in 0..frames {
        for t2 in 0..frames {
            for d in 0..n {
                let (y, z) = grid.coords(d);
                let d0 = small.index(y % small.ny(), z % small.nz());
                values[(t * frames + t2) * n + d] = copies * p0.get(d0, t, t2);
            }
        }
    }
    DifferentialDistribution::from_values(grid.clone(), values)
}

/// Every 2D-CAIPIRINHA lattice of acceleration `r` (one frame), as `r × r`
/// cells: for each factorization `ry · rz = r` and shift `0..ry`, sample
/// `kz ≡ 0 (mod rz)` and `ky ≡ shift·(kz/rz) (mod ry)`. Lattices that
/// coincide are listed once, first occurrence kept.
pub fn caipi_enumerate(r: usize) -> Result<Vec<PeriodicCell>> {
    if r == 0 {
        return Err(Error::InvalidParameter("acceleration must be >= 1".into()));
    }
    let shape = GridShape::new(&[r, r], 1)?;
    let mut cells: Vec<PeriodicCell> = Vec::new();
    for ry in (1..=r).filter(|ry| r % ry == 0) {
        let rz = r / ry;
        for shift in 0..ry {
            let mut counts = vec![0u32; r * r];
            for (k, c) in counts.iter_mut().enumerate() {
                let (ky, kz) = shape.coords(k);
                if kz % rz == 0 && (ky + r * ry - shift * (kz / rz)) % ry == 0 {
                    *c = 1;
                }
            }
            let pattern = SamplingPattern::from_counts(shape.clone(), counts)?;
            if cells.iter().all(|c| c.pattern != pattern) {
                cells.push(PeriodicCell {
                    pattern,
                    caipi: Some(CaipiParams { ry, rz, shift }),
                });
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct PeriodicScore {
    /// Position of the cell in the input list.
    pub index: usize,
    pub cell: PeriodicCell,
    pub objective: f64,
}

/// Scores every cell by `⟨w, p⟩` on `w`'s grid, ascending, ties kept in
/// input order.
pub fn evaluate_periodic(w: &WeightFunction, cells: &[PeriodicCell]) -> Result<Vec<PeriodicScore>> {
    let grid = w.grid()?;
    let mut scores = cells
        .iter()
        .enumerate()
        .map(|(index, cell)| {
            let p = periodic_dd(cell, &grid)?;
            Ok(PeriodicScore {
                index,
                cell: cell.clone(),
                objective: trace_moment2(w, &p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::uniform_pattern;
    use crate::models::{from_support, SupportMask};
    use crate::weighting::compute_w;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn caipi_counts() {
        assert_eq!(caipi_enumerate(1).unwrap().len(), 1);
        assert_eq!(caipi_enumerate(2).unwrap().len(), 3);
        assert_eq!(caipi_enumerate(6).unwrap().len(), 12);
        for cell in caipi_enumerate(6).unwrap() {
            assert_eq!(cell.pattern().total(), 6);
        }
    }

    #[test]
    fn tiled_distribution_matches_direct_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cell_shape = GridShape::new(&[4, 4], 2).unwrap();
        let counts = (0..32).map(|_| rng.random_range(0..2)).collect();
        let cell = PeriodicCell::new(SamplingPattern::from_counts(cell_shape, counts).unwrap());
        let grid = GridShape::new(&[16, 16], 2).unwrap();
        let tiled = cell.tile(&grid).unwrap();
        assert_eq!(periodic_dd(&cell, &grid).unwrap(), dd_direct(&tiled));
    }

    #[test]
    fn comb_cell_matches_uniform() {
        let cell = PeriodicCell::new(
            SamplingPattern::from_samples(GridShape::new(&[2], 1).unwrap(), [(0, 0)]).unwrap(),
        );
        let grid = GridShape::new(&[8], 1).unwrap();
        let uniform = uniform_pattern(&grid, 2, 1, 0).unwrap();
        assert_eq!(periodic_dd(&cell, &grid).unwrap(), dd_direct(&uniform));

        let empty = PeriodicCell::new(SamplingPattern::empty(GridShape::new(&[4], 1).unwrap()));
        assert!(periodic_dd(&empty, &grid).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(periodic_dd(&cell, &GridShape::new(&[7], 1).unwrap()).is_err());
    }

    #[test]
    fn constant_sensitivity_ties_all_cells() {
        let w = compute_w(&from_support(&SupportMask::full(&[12, 12]).unwrap()).unwrap());
        let scores = evaluate_periodic(&w, &caipi_enumerate(6).unwrap()).unwrap();
        let first = scores[0].objective;
        assert!(scores.iter().all(|s| (s.objective - first).abs() < 1e-9));
        assert!(scores.windows(2).all(|p| p[0].objective <= p[1].objective));
    }
}
