//! Reference patterns: Poisson-disc, uniform lattices and uniform random.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, SamplingPattern};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonTarget {
    /// Samples per frame; the radius shrinks until this many fit.
    Count(usize),
    /// Fixed minimum distance; cells are visited in random order and kept
    /// when compatible, giving a saturated pattern.
    Radius(f64),
}

#[derive(Debug, Clone)]
pub struct PoissonDisc {
    pub pattern: SamplingPattern,
    /// Per frame, a distance no two samples fall below.
    pub r_min: Vec<f64>,
}

/// Dart-throwing Poisson-disc sampling on the periodic grid, one independent
/// draw per frame.
///
/// Distances use `sqrt((ay·Δy)² + (az·Δz)²)` with wrap-around, where
/// `anisotropy = [ay, az]`. For a count target the radius starts at the
/// hexagonal packing radius for that density and is multiplied by 0.95
/// after 30 consecutive rejected darts; below one grid step the remaining
/// samples are drawn uniformly among empty cells.
pub fn poisson_disc(
    shape: &GridShape,
    target: PoissonTarget,
    anisotropy: [f64; 2],
    seed: u64,
) -> Result<PoissonDisc> {
    let [ay, az] = anisotropy;
    if !(ay > 0.0 && az > 0.0 && ay.is_finite() && az.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "anisotropy {anisotropy:?} must be positive"
        )));
    }
    let n = shape.len();
    let mut counts = vec![0u32; shape.cells()];
    let mut r_min = Vec::with_capacity(shape.frames());
    for t in 0..shape.frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut occupied = vec![false; n];
        let r = match target {
            PoissonTarget::Count(m) => {
                if m > n {
                    return Err(Error::Infeasible {
                        requested: m,
                        available: n,
                    });
                }
                throw_to_count(shape, &mut occupied, m, [ay, az], &mut rng)
            }
            PoissonTarget::Radius(r) => {
                if !(r >= 0.0) {
                    return Err(Error::InvalidParameter(format!("radius {r} must be >= 0")));
                }
                saturate(shape, &mut occupied, r, [ay, az], &mut rng);
                r
            }
        };
        for (k, &o) in occupied.iter().enumerate() {
            counts[t * n + k] = u32::from(o);
        }
        r_min.push(r);
    }
    Ok(PoissonDisc {
        pattern: SamplingPattern::from_counts(shape.clone(), counts)?,
        r_min,
    })
}

fn wrapped(a: usize, b: usize, n: usize) -> f64 {
    let d = a.abs_diff(b);
    d.min(n - d) as f64
}

fn compatible(shape: &GridShape, occupied: &[bool], k: usize, r: f64, scale: [f64; 2]) -> bool {
    if occupied[k] {
        return false;
    }
    if r <= 0.0 {
        return true;
    }
    let (ny, nz) = (shape.ny(), shape.nz());
    let (y, z) = shape.coords(k);
    let reach_y = ((r / scale[0]).ceil() as usize).min(ny / 2);
    let reach_z = ((r / scale[1]).ceil() as usize).min(nz / 2);
    let r2 = r * r;
    for dy in 0..=2 * reach_y {
        let yy = (y + ny + dy - reach_y) % ny;
        let fy = scale[0] * wrapped(y, yy, ny);
        for dz in 0..=2 * reach_z {
            let zz = (z + nz + dz - reach_z) % nz;
            let fz = scale[1] * wrapped(z, zz, nz);
            if fy * fy + fz * fz < r2 && occupied[yy * nz + zz] {
                return false;
            }
        }
    }
    true
}

fn throw_to_count(
    shape: &GridShape,
    occupied: &mut [bool],
    m: usize,
    scale: [f64; 2],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = shape.len();
    let floor = scale[0].min(if shape.ndim() > 1 { scale[1] } else { f64::INFINITY });
    let area = n as f64 * scale[0] * if shape.ndim() > 1 { scale[1] } else { 1.0 };
    let mut r = if m == 0 {
        0.0
    } else if shape.ndim() == 1 {
        area / m as f64
    } else {
        (2.0 * area / (m as f64 * 3f64.sqrt())).sqrt()
    };
    let mut placed = 0;
    let mut failures = 0;
    while placed < m && r >= floor {
        let k = rng.random_range(0..n);
        if compatible(shape, occupied, k, r, scale) {
            occupied[k] = true;
            placed += 1;
            failures = 0;
        } else {
            failures += 1;
            if failures >= 30 {
                r *= 0.95;
                failures = 0;
            }
        }
    }
    if placed < m {
        r = floor;
        let mut empty: Vec<usize> = (0..n).filter(|&k| !occupied[k]).collect();
        empty.shuffle(rng);
        for &k in empty.iter().take(m - placed) {
            occupied[k] = true;
        }
    }
    r
}

fn saturate(shape: &GridShape, occupied: &mut [bool], r: f64, scale: [f64; 2], rng: &mut ChaCha8Rng) {
    let mut order: Vec<usize> = (0..shape.len()).collect();
    order.shuffle(rng);
    for k in order {
        if compatible(shape, occupied, k, r, scale) {
            occupied[k] = true;
        }
    }
}

/// Lattice `kz ≡ 0 (mod rz)`, `ky ≡ shift·(kz/rz) (mod ry)`, repeated in
/// every frame. A shift of zero gives separable `ry × rz` sampling.
pub fn uniform_pattern(shape: &GridShape, ry: usize, rz: usize, shift: usize) -> Result<SamplingPattern> {
    if ry == 0 || rz == 0 {
        return Err(Error::InvalidParameter("reduction factors must be positive".into()));
    }
    if shape.ny() % ry != 0 || shape.nz() % rz != 0 {
        return Err(Error::InvalidParameter(format!(
            "{ry} x {rz} does not divide {:?}",
            shape.phase_dims()
        )));
    }
    let n = shape.len();
    let mut counts = vec![0u32; shape.cells()];
    for k in 0..n {
        let (ky, kz) = shape.coords(k);
        if kz % rz == 0 && (ky + ry * n - (shift * (kz / rz)) % ry) % ry == 0 {
            for t in 0..shape.frames() {
                counts[t * n + k] = 1;
            }
        }
    }
    SamplingPattern::from_counts(shape.clone(), counts)
}

/// Separable pattern with `round(n / r)` lines per axis placed at
/// `floor(i · n / lines)`, for factors that do not divide the grid.
pub fn uniform_nearest(shape: &GridShape, ry: f64, rz: f64) -> Result<SamplingPattern> {
    if !(ry >= 1.0 && rz >= 1.0) {
        return Err(Error::InvalidParameter("reduction factors must be >= 1".into()));
    }
    let lines = |n: usize, r: f64| -> Vec<bool> {
        let m = ((n as f64 / r).round() as usize).clamp(1, n);
        let mut keep = vec![false; n];
        for i in 0..m {
            keep[i * n / m] = true;
        }
        keep
    };
    let ys = lines(shape.ny(), ry);
    let zs = lines(shape.nz(), rz);
    let n = shape.len();
    let mut counts = vec![0u32; shape.cells()];
    for k in 0..n {
        let (ky, kz) = shape.coords(k);
        if ys[ky] && zs[kz] {
            for t in 0..shape.frames() {
                counts[t * n + k] = 1;
            }
        }
    }
    SamplingPattern::from_counts(shape.clone(), counts)
}

/// `count` independent uniform draws over all `(k, t)` cells, with
/// replacement.
pub fn uniform_random(shape: &GridShape, count: usize, seed: u64) -> SamplingPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u32; shape.cells()];
    for _ in 0..count {
        counts[rng.random_range(0..shape.cells())] += 1;
    }
    SamplingPattern::from_counts(shape.clone(), counts).expect("counts sized to the grid")
}

/// `count` independent uniform draws per frame, with replacement.
pub fn uniform_random_per_frame(shape: &GridShape, count: usize, seed: u64) -> SamplingPattern {
    let n = shape.len();
    let mut counts = vec![0u32; shape.cells()];
    for t in 0..shape.frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        for _ in 0..count {
            counts[t * n + rng.random_range(0..n)] += 1;
        }
    }
    SamplingPattern::from_counts(shape.clone(), counts).expect("counts sized to the grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dd_fft;

    #[test]
    fn poisson_respects_its_radius() {
        let shape = GridShape::new(&[32, 24], 2).unwrap();
        let pd = poisson_disc(&shape, PoissonTarget::Count(120), [1.0, 1.0], 5).unwrap();
        assert_eq!(pd.pattern.totals(), &[120, 120]);
        let p = dd_fft(&pd.pattern);
        for t in 0..2 {
            for d in 1..shape.len() {
                let (dy, dz) = shape.signed_offset(d);
                let dist = ((dy * dy + dz * dz) as f64).sqrt();
                if dist < pd.r_min[t] {
                    assert_eq!(p.get(d, t, t), 0.0, "offset {dy},{dz} frame {t}");
                }
            }
        }
    }

    #[test]
    fn poisson_is_seeded() {
        let shape = GridShape::new(&[16, 16], 1).unwrap();
        let a = poisson_disc(&shape, PoissonTarget::Count(40), [1.0, 2.0], 1).unwrap();
        let b = poisson_disc(&shape, PoissonTarget::Count(40), [1.0, 2.0], 1).unwrap();
        assert_eq!(a.pattern, b.pattern);
        let c = poisson_disc(&shape, PoissonTarget::Radius(3.0), [1.0, 1.0], 1).unwrap();
        assert!(c.pattern.total() > 0);
    }

    #[test]
    fn uniform_lattices() {
        let line = GridShape::new(&[8], 1).unwrap();
        let p = uniform_pattern(&line, 2, 1, 0).unwrap();
        assert_eq!(p.counts(), &[1, 0, 1, 0, 1, 0, 1, 0]);

        let sq = GridShape::new(&[4, 4], 1).unwrap();
        let q = uniform_pattern(&sq, 2, 1, 1).unwrap();
        for k in 0..16 {
            let (y, z) = sq.coords(k);
            assert_eq!(q.count(k, 0), u32::from((y + z) % 2 == 0));
        }
        assert!(uniform_pattern(&sq, 3, 1, 0).is_err());

        let g = GridShape::new(&[64, 64], 1).unwrap();
        let u = uniform_nearest(&g, 3.0, 2.0).unwrap();
        assert_eq!(u.total(), 21 * 32);
    }

    #[test]
    fn random_counts() {
        let shape = GridShape::new(&[10], 1).unwrap();
        assert_eq!(uniform_random(&shape, 10, 3).total(), 10);
        let f = GridShape::new(&[10], 3).unwrap();
        assert_eq!(uniform_random_per_frame(&f, 4, 3).totals(), &[4, 4, 4]);
    }
}
