//! Sensitivity functions `S_{t,l,c}(r)` for support-constrained, parallel and
//! temporal-basis reconstructions, plus deterministic synthetic fixtures.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Per-voxel subspace parameterization.
///
/// Values are laid out as `[((t * L + l) * C + c) * Nr + r]` where `r` runs
/// row-major over `spatial_dims`. When `readout_axis` is set, that spatial
/// axis is a fully sampled readout and is not part of the design grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySet {
    spatial_dims: Vec<usize>,
    readout_axis: Option<usize>,
    frames: usize,
    coeffs: usize,
    coils: usize,
    values: Vec<Complex64>,
}

impl SensitivitySet {
    pub fn new(
        spatial_dims: &[usize],
        readout_axis: Option<usize>,
        frames: usize,
        coeffs: usize,
        coils: usize,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if spatial_dims.is_empty() || spatial_dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidShape(format!(
                "bad spatial grid {spatial_dims:?}"
            )));
        }
        if frames == 0 || coeffs == 0 || coils == 0 {
            return Err(Error::InvalidShape(
                "frames, coefficients and coils must be positive".into(),
            ));
        }
        if let Some(axis) = readout_axis {
            if axis >= spatial_dims.len() || spatial_dims.len() < 2 {
                return Err(Error::InvalidShape(format!(
                    "readout axis {axis} invalid for grid {spatial_dims:?}"
                )));
            }
        }
        let phase = spatial_dims.len() - readout_axis.map_or(0, |_| 1);
        if phase > 2 {
            return Err(Error::InvalidShape(format!(
                "at most two phase-encode dimensions are supported, got {phase}"
            )));
        }
        let nr: usize = spatial_dims.iter().product();
        let want = nr * frames * coeffs * coils;
        if values.len() != want {
            return Err(Error::mismatch(want, values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter(
                "sensitivity values must be finite".into(),
            ));
        }
        if coeffs > frames * coils {
            log::warn!(
                "L = {coeffs} exceeds T*C = {}; the per-voxel subspace is degenerate",
                frames * coils
            );
        }
        Ok(SensitivitySet {
            spatial_dims: spatial_dims.to_vec(),
            readout_axis,
            frames,
            coeffs,
            coils,
            values,
        })
    }

    pub fn spatial_dims(&self) -> &[usize] {
        &self.spatial_dims
    }

    pub fn spatial_len(&self) -> usize {
        self.spatial_dims.iter().product()
    }

    pub fn readout_axis(&self) -> Option<usize> {
        self.readout_axis
    }

    /// Spatial dimensions excluding the readout.
    pub fn phase_dims(&self) -> Vec<usize> {
        self.spatial_dims
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.readout_axis)
            .map(|(_, &n)| n)
            .collect()
    }

    /// Design grid for this model; fails when a readout axis is present.
    pub fn grid(&self) -> Result<GridShape> {
        if self.readout_axis.is_some() {
            return Err(Error::InvalidShape(
                "collapse or slice the readout before building a design grid".into(),
            ));
        }
        GridShape::new(&self.spatial_dims, self.frames)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// The map `S_{t,l,c}(·)` over the spatial grid.
    pub fn map(&self, t: usize, l: usize, c: usize) -> &[Complex64] {
        let nr = self.spatial_len();
        let start = ((t * self.coeffs + l) * self.coils + c) * nr;
        &self.values[start..start + nr]
    }

    #[inline]
    pub fn get(&self, r: usize, t: usize, l: usize, c: usize) -> Complex64 {
        let nr = self.spatial_len();
        self.values[((t * self.coeffs + l) * self.coils + c) * nr + r]
    }

    /// Same values, with `axis` marked as readout.
    pub fn with_readout(self, axis: Option<usize>) -> Result<Self> {
        SensitivitySet::new(
            &self.spatial_dims,
            axis,
            self.frames,
            self.coeffs,
            self.coils,
            self.values,
        )
    }

    /// `Σ_{t,c} |S_{t,l,c}(r)|²` for each `(r, l)`, laid out `[l * Nr + r]`.
    pub fn column_energy(&self) -> Vec<f64> {
        let nr = self.spatial_len();
        let mut out = vec![0.0; nr * self.coeffs];
        for t in 0..self.frames {
            for l in 0..self.coeffs {
                for c in 0..self.coils {
                    for (o, v) in out[l * nr..(l + 1) * nr].iter_mut().zip(self.map(t, l, c)) {
                        *o += v.norm_sqr();
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    dims: Vec<usize>,
    values: Vec<bool>,
}

impl SupportMask {
    pub fn new(dims: &[usize], values: Vec<bool>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || n == 0 {
            return Err(Error::InvalidShape(format!("bad mask grid {dims:?}")));
        }
        if values.len() != n {
            return Err(Error::mismatch(n, values.len()));
        }
        Ok(SupportMask {
            dims: dims.to_vec(),
            values,
        })
    }

    pub fn full(dims: &[usize]) -> Result<Self> {
        SupportMask::new(dims, vec![true; dims.iter().product()])
    }

    /// Cross-shaped profile that tiles the plane under the quincunx shift
    /// `(ny/2, nz/2)`: a horizontal band of height `ny/4` through the centre
    /// joined to a central bar of width `nz/2` and height `3ny/4`. Both sizes
    /// must be multiples of 8.
    pub fn tiling_cross(ny: usize, nz: usize) -> Result<Self> {
        if ny % 8 != 0 || nz % 8 != 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidShape(format!(
                "tiling cross needs sizes divisible by 8, got {ny}x{nz}"
            )));
        }
        let (fy, fz) = (ny as f64, nz as f64);
        let values = (0..ny * nz)
            .map(|i| {
                let y = (i / nz) as f64 - fy / 2.0 + 0.5;
                let z = (i % nz) as f64 - fz / 2.0 + 0.5;
                y.abs() < fy / 8.0 || (z.abs() < fz / 4.0 && y.abs() < 3.0 * fy / 8.0)
            })
            .collect();
        SupportMask::new(&[ny, nz], values)
    }

    /// Filled ellipse with semi-axes given as fractions of the grid size,
    /// rotated by `angle` radians about the grid centre.
    pub fn ellipse(ny: usize, nz: usize, semi_y: f64, semi_z: f64, angle: f64) -> Result<Self> {
        let (c, s) = (angle.cos(), angle.sin());
        let values = (0..ny * nz)
            .map(|i| {
                let y = ((i / nz) as f64 + 0.5) / ny as f64 - 0.5;
                let z = ((i % nz) as f64 + 0.5) / nz as f64 - 0.5;
                let u = c * y + s * z;
                let v = -s * y + c * z;
                (u / semi_y).powi(2) + (v / semi_z).powi(2) <= 1.0
            })
            .collect();
        SupportMask::new(&[ny, nz], values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// Temporal basis `β_l(t)`, laid out `[t * L + l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalBasis {
    frames: usize,
    coeffs: usize,
    values: Vec<Complex64>,
}

impl TemporalBasis {
    pub fn new(frames: usize, coeffs: usize, values: Vec<Complex64>) -> Result<Self> {
        if coeffs == 0 || frames < coeffs {
            return Err(Error::InvalidShape(format!(
                "basis needs 1 <= L <= T, got T={frames}, L={coeffs}"
            )));
        }
        if values.len() != frames * coeffs {
            return Err(Error::mismatch(frames * coeffs, values.len()));
        }
        let m = DMatrix::from_row_slice(frames, coeffs, &values);
        let sv = m.singular_values();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        let rank = sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count();
        if rank < coeffs || top == 0.0 {
            return Err(Error::RankDeficient { rank, coeffs });
        }
        Ok(TemporalBasis {
            frames,
            coeffs,
            values,
        })
    }

    pub fn identity(frames: usize) -> Self {
        let mut values = vec![Complex64::default(); frames * frames];
        for t in 0..frames {
            values[t * frames + t] = Complex64::new(1.0, 0.0);
        }
        TemporalBasis {
            frames,
            coeffs: frames,
            values,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, l: usize) -> Complex64 {
        self.values[t * self.coeffs + l]
    }
}

/// Coil sensitivities `C(r, c)`, laid out `[c * Nr + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilMaps {
    dims: Vec<usize>,
    coils: usize,
    values: Vec<Complex64>,
}

impl CoilMaps {
    pub fn new(dims: &[usize], coils: usize, values: Vec<Complex64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || n == 0 || coils == 0 {
            return Err(Error::InvalidShape(format!(
                "bad coil grid {dims:?} with {coils} coils"
            )));
        }
        if values.len() != n * coils {
            return Err(Error::mismatch(n * coils, values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("coil maps must be finite".into()));
        }
        Ok(CoilMaps {
            dims: dims.to_vec(),
            coils,
            values,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn map(&self, c: usize) -> &[Complex64] {
        let n = self.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn sum_of_squares(&self) -> Vec<f64> {
        let n = self.len();
        let mut sos = vec![0.0; n];
        for c in 0..self.coils {
            for (s, v) in sos.iter_mut().zip(self.map(c)) {
                *s += v.norm_sqr();
            }
        }
        sos
    }

    /// Rescales every voxel of `mask` so the coil sum-of-squares is one there.
    pub fn normalize_sos(&mut self, mask: &SupportMask) -> Result<()> {
        if mask.dims() != self.dims.as_slice() {
            return Err(Error::mismatch(
                format!("{:?}", self.dims),
                format!("{:?}", mask.dims()),
            ));
        }
        let n = self.len();
        let sos = self.sum_of_squares();
        for (r, (&inside, &s)) in mask.values().iter().zip(&sos).enumerate() {
            if inside && s > 0.0 {
                let scale = 1.0 / s.sqrt();
                for c in 0..self.coils {
                    self.values[c * n + r] *= scale;
                }
            }
        }
        Ok(())
    }

    /// Restricts the maps to `mask`, zeroing everything outside.
    pub fn masked(&self, mask: &SupportMask) -> Result<CoilMaps> {
        if mask.dims() != self.dims.as_slice() {
            return Err(Error::mismatch(
                format!("{:?}", self.dims),
                format!("{:?}", mask.dims()),
            ));
        }
        let n = self.len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| if mask.values()[i % n] { v } else { Complex64::default() })
            .collect();
        CoilMaps::new(&self.dims, self.coils, values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoilProfile {
    Gaussian,
    BirdcageLike,
}

/// Smooth synthetic receive maps, deterministic in `seed`.
///
/// Gaussian: centres are equally spaced along the border of the first two
/// axes, magnitude `exp(-d²/2σ²)` with `σ` half the largest in-plane size,
/// and each coil carries a random offset plus a linear phase whose slope
/// along each axis is drawn from `[-1, 1]` cycles per field of view. A
/// third axis, when present, adds a shared smooth profile along it. A single
/// coil degenerates to unit magnitude with its linear phase.
///
/// Birdcage-like: coils sit on a circle around the centre with Lorentzian
/// magnitude falloff and the azimuthal phase of a loop element.
pub fn synthetic_coils(
    dims: &[usize],
    coils: usize,
    profile: CoilProfile,
    seed: u64,
) -> Result<CoilMaps> {
    if dims.is_empty() || dims.len() > 3 || dims.iter().any(|&n| n == 0) {
        return Err(Error::InvalidShape(format!(
            "synthetic coils need 1 to 3 dimensions, got {dims:?}"
        )));
    }
    if coils == 0 {
        return Err(Error::InvalidParameter("at least one coil required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ny = dims[0] as f64;
    let nz = dims.get(1).copied().unwrap_or(1) as f64;
    let nx = dims.get(2).copied().unwrap_or(1);
    let plane = dims[0] * dims.get(1).copied().unwrap_or(1);
    let width = ny.max(nz);
    let sigma = width / 2.0;

    let mut values = Vec::with_capacity(plane * nx * coils);
    for c in 0..coils {
        let offset = rng.random_range(-PI..PI);
        let slope_y = rng.random_range(-1.0..1.0) * 2.0 * PI;
        let slope_z = rng.random_range(-1.0..1.0) * 2.0 * PI;
        let (cy, cz) = match (profile, dims.len()) {
            (_, 1) => ((c as f64 + 0.5) * ny / coils as f64, 0.0),
            (CoilProfile::Gaussian, _) => border_point(ny, nz, (c as f64 + 0.5) / coils as f64),
            (CoilProfile::BirdcageLike, _) => {
                let a = 2.0 * PI * c as f64 / coils as f64;
                (ny / 2.0 + 0.75 * ny * a.cos(), nz / 2.0 + 0.75 * nz * a.sin())
            }
        };
        for x in 0..nx {
            let along = if nx > 1 {
                let u = (x as f64 + 0.5) / nx as f64 - 0.5;
                (-u * u / 0.5).exp()
            } else {
                1.0
            };
            for r in 0..plane {
                let (y, z) = if dims.len() == 1 {
                    (r as f64 + 0.5, 0.0)
                } else {
                    let nzi = dims[1];
                    ((r / nzi) as f64 + 0.5, (r % nzi) as f64 + 0.5)
                };
                let ramp = offset
                    + slope_y * (y / ny - 0.5)
                    + if dims.len() > 1 { slope_z * (z / nz - 0.5) } else { 0.0 };
                let (dy, dz) = (y - cy, z - cz);
                let d2 = dy * dy + dz * dz;
                let (mag, phase) = match profile {
                    _ if coils == 1 => (1.0, ramp),
                    CoilProfile::Gaussian => ((-d2 / (2.0 * sigma * sigma)).exp(), ramp),
                    CoilProfile::BirdcageLike => {
                        (1.0 / (1.0 + d2 / (sigma * sigma)), ramp + dz.atan2(dy))
                    }
                };
                values.push(Complex64::from_polar(mag * along, phase));
            }
        }
    }
    // values were generated with x outermost inside each coil; reorder to
    // row-major (y, z, x) when a third axis exists.
    if nx > 1 {
        let mut reordered = vec![Complex64::default(); values.len()];
        let n = plane * nx;
        for c in 0..coils {
            for x in 0..nx {
                for r in 0..plane {
                    reordered[c * n + r * nx + x] = values[c * n + x * plane + r];
                }
            }
        }
        values = reordered;
    }
    CoilMaps::new(dims, coils, values)
}

fn border_point(ny: f64, nz: f64, frac: f64) -> (f64, f64) {
    let perimeter = 2.0 * (ny + nz);
    let s = frac * perimeter;
    if s < nz {
        (0.0, s)
    } else if s < nz + ny {
        (s - nz, nz)
    } else if s < 2.0 * nz + ny {
        (ny, nz - (s - nz - ny))
    } else {
        (ny - (s - 2.0 * nz - ny), 0.0)
    }
}

pub fn from_support(mask: &SupportMask) -> Result<SensitivitySet> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let values = mask
        .values()
        .iter()
        .map(|&v| Complex64::new(if v { 1.0 } else { 0.0 }, 0.0))
        .collect();
    SensitivitySet::new(mask.dims(), None, 1, 1, 1, values)
}

pub fn from_coils(coils: &CoilMaps) -> Result<SensitivitySet> {
    SensitivitySet::new(coils.dims(), None, 1, 1, coils.coils(), coils.values().to_vec())
}

/// Separable model `S_{t,l,c}(r) = C(r, c) β_l(t)`.
pub fn from_coils_and_basis(coils: &CoilMaps, basis: &TemporalBasis) -> Result<SensitivitySet> {
    let (frames, coeffs, nc) = (basis.frames(), basis.coeffs(), coils.coils());
    let mut values = Vec::with_capacity(frames * coeffs * nc * coils.len());
    for t in 0..frames {
        for l in 0..coeffs {
            let b = basis.get(t, l);
            for c in 0..nc {
                values.extend(coils.map(c).iter().map(|&v| v * b));
            }
        }
    }
    SensitivitySet::new(coils.dims(), None, frames, coeffs, nc, values)
}

/// `L` shifted B-splines of degree `order` sampled on `T` frames, each
/// scaled to a peak of one. Shifts are equally spaced; with `periodic` the
/// splines wrap around the time axis.
pub fn spline_basis(frames: usize, coeffs: usize, order: usize, periodic: bool) -> Result<TemporalBasis> {
    if coeffs == 0 || coeffs > frames {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= L <= T, got L={coeffs}, T={frames}"
        )));
    }
    let (spacing, origin) = if periodic {
        (frames as f64 / coeffs as f64, 0.0)
    } else if coeffs == 1 {
        (frames as f64, (frames as f64 - 1.0) / 2.0)
    } else {
        ((frames as f64 - 1.0) / (coeffs as f64 - 1.0), 0.0)
    };
    let half = (order as f64 + 1.0) / 2.0;
    let mut values = vec![Complex64::default(); frames * coeffs];
    for l in 0..coeffs {
        let centre = origin + l as f64 * spacing;
        for t in 0..frames {
            let mut v = 0.0;
            if periodic {
                let reach = (half * spacing / frames as f64).ceil() as i64 + 1;
                for m in -reach..=reach {
                    v += cardinal_bspline(order, (t as f64 - centre + m as f64 * frames as f64) / spacing);
                }
            } else {
                v = cardinal_bspline(order, (t as f64 - centre) / spacing);
            }
            values[t * coeffs + l] = Complex64::new(v, 0.0);
        }
        let peak = (0..frames)
            .map(|t| values[t * coeffs + l].re)
            .fold(0.0, f64::max);
        if peak > 0.0 {
            for t in 0..frames {
                values[t * coeffs + l] /= peak;
            }
        }
    }
    TemporalBasis::new(frames, coeffs, values)
}

/// Centred cardinal B-spline of degree `d`, supported on `[-(d+1)/2, (d+1)/2)`.
fn cardinal_bspline(d: usize, x: f64) -> f64 {
    let half = (d as f64 + 1.0) / 2.0;
    if x < -half || x >= half {
        return 0.0;
    }
    let mut factorial = 1.0;
    for i in 2..=d {
        factorial *= i as f64;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=d + 1 {
        let u = x + half - j as f64;
        if u >= 0.0 {
            let term = if d == 0 { 1.0 } else { u.powi(d as i32) };
            sum += if j % 2 == 0 { binom * term } else { -binom * term };
        }
        binom = binom * (d + 1 - j) as f64 / (j + 1) as f64;
    }
    sum / factorial
}

/// Random complex sensitivities, uniform in the unit square, for oracle
/// fixtures.
pub fn random_sensitivities(
    spatial_dims: &[usize],
    frames: usize,
    coeffs: usize,
    coils: usize,
    rng: &mut impl Rng,
) -> Result<SensitivitySet> {
    let n: usize = spatial_dims.iter().product::<usize>() * frames * coeffs * coils;
    let values = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SensitivitySet::new(spatial_dims, None, frames, coeffs, coils, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_indicator() {
        let full = from_support(&SupportMask::full(&[8]).unwrap()).unwrap();
        assert!(full.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));

        let mut one = vec![false; 8];
        one[3] = true;
        let s = from_support(&SupportMask::new(&[8], one).unwrap()).unwrap();
        assert_eq!(s.values().iter().filter(|v| v.re == 1.0).count(), 1);
        assert_eq!(s.get(3, 0, 0, 0).re, 1.0);

        let empty = SupportMask::new(&[4], vec![false; 4]).unwrap();
        assert!(matches!(from_support(&empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn tiling_cross_is_a_quincunx_tile() {
        for (ny, nz) in [(16, 16), (32, 32), (32, 16), (24, 40)] {
            let m = SupportMask::tiling_cross(ny, nz).unwrap();
            assert_eq!(m.count() * 2, ny * nz);
            for y in 0..ny {
                for z in 0..nz {
                    let a = m.values()[y * nz + z];
                    let b = m.values()[((y + ny / 2) % ny) * nz + (z + nz / 2) % nz];
                    assert!(a ^ b, "({y},{z}) in {ny}x{nz}");
                }
            }
        }
    }

    #[test]
    fn separable_model_reduces_to_coils() {
        let coils = synthetic_coils(&[8, 8], 3, CoilProfile::Gaussian, 1).unwrap();
        let a = from_coils(&coils).unwrap();
        let b = from_coils_and_basis(&coils, &TemporalBasis::identity(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spline_shape() {
        let basis = spline_basis(12, 4, 3, true).unwrap();
        for l in 0..4 {
            let peak = (0..12).map(|t| basis.get(t, l).re).fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-12);
        }
        let coils = synthetic_coils(&[8, 8], 2, CoilProfile::Gaussian, 2).unwrap();
        let s = from_coils_and_basis(&coils, &basis).unwrap();
        assert_eq!((s.frames(), s.coeffs(), s.coils()), (12, 4, 2));
        assert_eq!(s.values().len(), 64 * 12 * 4 * 2);
    }

    #[test]
    fn spline_square_basis_has_full_rank() {
        for order in [1, 2, 3] {
            assert!(spline_basis(6, 6, order, true).is_ok());
        }
        let ind = spline_basis(5, 5, 0, true).unwrap();
        assert_eq!(ind, TemporalBasis::identity(5));
        assert!(spline_basis(4, 5, 3, true).is_err());
    }

    #[test]
    fn rank_check_rejects_dependent_columns() {
        let v = vec![Complex64::new(1.0, 0.0); 6];
        assert!(matches!(
            TemporalBasis::new(3, 2, v),
            Err(Error::RankDeficient { rank: 1, .. })
        ));
    }

    #[test]
    fn bspline_partition_of_unity() {
        for d in 0..5 {
            for i in 0..20 {
                let x = i as f64 / 20.0;
                let s: f64 = (-5..=5).map(|m| cardinal_bspline(d, x + m as f64)).sum();
                assert!((s - 1.0).abs() < 1e-12, "degree {d} at {x}: {s}");
            }
        }
    }

    #[test]
    fn synthetic_coils_are_deterministic_and_cover_the_plane() {
        let a = synthetic_coils(&[64, 64], 8, CoilProfile::Gaussian, 7).unwrap();
        let b = synthetic_coils(&[64, 64], 8, CoilProfile::Gaussian, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.sum_of_squares().iter().cloned().fold(f64::MAX, f64::min) > 0.0);
        let bc = synthetic_coils(&[32, 32], 8, CoilProfile::BirdcageLike, 7).unwrap();
        assert!(bc.sum_of_squares().iter().all(|&s| s > 0.0));

        let single = synthetic_coils(&[16, 16], 1, CoilProfile::Gaussian, 3).unwrap();
        assert!(single.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sos_normalization() {
        let mut coils = synthetic_coils(&[16, 16], 4, CoilProfile::Gaussian, 5).unwrap();
        let mask = SupportMask::ellipse(16, 16, 0.4, 0.3, 0.5).unwrap();
        coils.normalize_sos(&mask).unwrap();
        for (s, &inside) in coils.sum_of_squares().iter().zip(mask.values()) {
            if inside {
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_dimensional_coils_are_row_major() {
        let c = synthetic_coils(&[4, 6, 5], 2, CoilProfile::Gaussian, 1).unwrap();
        let plane = synthetic_coils(&[4, 6], 2, CoilProfile::Gaussian, 1).unwrap();
        // the readout profile is shared, so ratios along x are coil independent
        let r = 2 * 6 + 3;
        let ratio0 = c.map(0)[r * 5 + 1] / c.map(0)[r * 5 + 2];
        let ratio1 = c.map(1)[r * 5 + 1] / c.map(1)[r * 5 + 2];
        assert!((ratio0 - ratio1).norm() < 1e-12);
        let in_plane = c.map(1)[r * 5 + 2] / c.map(1)[(r + 1) * 5 + 2];
        let want = plane.map(1)[r] / plane.map(1)[r + 1];
        assert!((in_plane - want).norm() < 1e-12);
    }
}
