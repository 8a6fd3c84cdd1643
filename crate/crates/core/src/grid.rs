//! Periodic Cartesian grids, sampling patterns, point-spread functions and
//! differential distributions.
//!
//! Phase-encode grids are one- or two-dimensional and flattened row-major:
//! `k = ky * nz + kz`. Every offset is taken modulo the grid size along each
//! axis, so `diff(a, b)` is the flat index of `a - b` on the torus.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftNd;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridShape {
    phase_dims: Vec<usize>,
    frames: usize,
}

impl GridShape {
    pub fn new(phase_dims: &[usize], frames: usize) -> Result<Self> {
        if phase_dims.is_empty() || phase_dims.len() > 2 {
            return Err(Error::InvalidShape(format!(
                "phase-encode grid must have 1 or 2 dimensions, got {}",
                phase_dims.len()
            )));
        }
        if phase_dims.iter().any(|&n| n == 0) || frames == 0 {
            return Err(Error::InvalidShape(format!(
                "grid {phase_dims:?} with {frames} frames has an empty axis"
            )));
        }
        Ok(GridShape {
            phase_dims: phase_dims.to_vec(),
            frames,
        })
    }

    pub fn phase_dims(&self) -> &[usize] {
        &self.phase_dims
    }

    pub fn ndim(&self) -> usize {
        self.phase_dims.len()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn ny(&self) -> usize {
        self.phase_dims[0]
    }

    /// Second phase-encode size, 1 on a line.
    pub fn nz(&self) -> usize {
        self.phase_dims.get(1).copied().unwrap_or(1)
    }

    /// Number of phase-encode locations `N`.
    pub fn len(&self) -> usize {
        self.ny() * self.nz()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of `(k, t)` cells.
    pub fn cells(&self) -> usize {
        self.len() * self.frames
    }

    pub fn with_frames(&self, frames: usize) -> Result<Self> {
        GridShape::new(&self.phase_dims, frames)
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        let nz = self.nz();
        (k / nz, k % nz)
    }

    #[inline]
    pub fn index(&self, ky: usize, kz: usize) -> usize {
        ky * self.nz() + kz
    }

    /// Flat index of `a - b` (per-axis modular).
    #[inline]
    pub fn diff(&self, a: usize, b: usize) -> usize {
        let (ny, nz) = (self.ny(), self.nz());
        let (ay, az) = (a / nz, a % nz);
        let (by, bz) = (b / nz, b % nz);
        ((ay + ny - by) % ny) * nz + (az + nz - bz) % nz
    }

    /// Flat index of `a + d` (per-axis modular).
    #[inline]
    pub fn add(&self, a: usize, d: usize) -> usize {
        let (ny, nz) = (self.ny(), self.nz());
        (((a / nz) + (d / nz)) % ny) * nz + ((a % nz) + (d % nz)) % nz
    }

    /// Flat index of `-d`.
    #[inline]
    pub fn neg(&self, d: usize) -> usize {
        self.diff(0, d)
    }

    /// Signed per-axis representative of an offset, in `(-n/2, n/2]`.
    pub fn signed_offset(&self, d: usize) -> (i64, i64) {
        let (dy, dz) = self.coords(d);
        let wrap = |v: usize, n: usize| {
            let v = v as i64;
            let n = n as i64;
            if v > n / 2 {
                v - n
            } else {
                v
            }
        };
        (wrap(dy, self.ny()), wrap(dz, self.nz()))
    }

    pub(crate) fn fft(&self) -> FftNd {
        FftNd::new(&self.phase_dims)
    }
}

/// Nonnegative sample counts `s(k, t)`, stored densely frame by frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    shape: GridShape,
    counts: Vec<u32>,
    totals: Vec<usize>,
}

impl SamplingPattern {
    pub fn empty(shape: GridShape) -> Self {
        let cells = shape.cells();
        let frames = shape.frames();
        SamplingPattern {
            shape,
            counts: vec![0; cells],
            totals: vec![0; frames],
        }
    }

    /// Builds a pattern from frame-major counts (`counts[t * N + k]`).
    pub fn from_counts(shape: GridShape, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != shape.cells() {
            return Err(Error::mismatch(shape.cells(), counts.len()));
        }
        let n = shape.len();
        let totals = counts
            .chunks(n)
            .map(|frame| frame.iter().map(|&c| c as usize).sum())
            .collect();
        Ok(SamplingPattern {
            shape,
            counts,
            totals,
        })
    }

    /// Builds a pattern by inserting each `(k, t)` once per occurrence.
    pub fn from_samples(
        shape: GridShape,
        samples: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut pattern = SamplingPattern::empty(shape);
        for (k, t) in samples {
            pattern.insert(k, t)?;
        }
        Ok(pattern)
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn frame(&self, t: usize) -> &[u32] {
        let n = self.shape.len();
        &self.counts[t * n..(t + 1) * n]
    }

    #[inline]
    pub fn count(&self, k: usize, t: usize) -> u32 {
        self.counts[t * self.shape.len() + k]
    }

    /// Per-frame totals `N_t`.
    pub fn totals(&self) -> &[usize] {
        &self.totals
    }

    pub fn total(&self) -> usize {
        self.totals.iter().sum()
    }

    /// Acceleration `N·T / Σ N_t` (infinite for an empty pattern).
    pub fn acceleration(&self) -> f64 {
        self.shape.cells() as f64 / self.total() as f64
    }

    pub fn insert(&mut self, k: usize, t: usize) -> Result<()> {
        self.check_cell(k, t)?;
        self.counts[t * self.shape.len() + k] += 1;
        self.totals[t] += 1;
        Ok(())
    }

    pub fn remove(&mut self, k: usize, t: usize) -> Result<()> {
        self.check_cell(k, t)?;
        let idx = t * self.shape.len() + k;
        if self.counts[idx] == 0 {
            return Err(Error::AbsentSample { k, frame: t });
        }
        self.counts[idx] -= 1;
        self.totals[t] -= 1;
        Ok(())
    }

    fn check_cell(&self, k: usize, t: usize) -> Result<()> {
        if k >= self.shape.len() || t >= self.shape.frames() {
            return Err(Error::InvalidParameter(format!(
                "cell ({k}, {t}) outside grid {:?} x {}",
                self.shape.phase_dims(),
                self.shape.frames()
            )));
        }
        Ok(())
    }

    /// Nonzero cells as `(k, t, count)`, frame-major.
    pub fn samples(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        let n = self.shape.len();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(i, &c)| (i % n, i / n, c))
    }

    /// Every frame translated by the same offset `shift`.
    pub fn translated(&self, shift: usize) -> SamplingPattern {
        let n = self.shape.len();
        let mut counts = vec![0; self.counts.len()];
        for (k, t, c) in self.samples() {
            counts[t * n + self.shape.add(k, shift)] = c;
        }
        SamplingPattern {
            shape: self.shape.clone(),
            counts,
            totals: self.totals.clone(),
        }
    }

    /// Lifts a pattern on the phase-encode grid onto a grid with a fully
    /// sampled readout axis inserted at `axis`.
    pub fn with_full_readout(&self, axis: usize, len: usize) -> Result<SamplingPattern> {
        if self.shape.ndim() != 1 || axis > 1 {
            return Err(Error::InvalidShape(
                "a readout can only be added to a one-dimensional phase-encode pattern".into(),
            ));
        }
        let ny = self.shape.ny();
        let dims = if axis == 0 { [len, ny] } else { [ny, len] };
        let shape = GridShape::new(&dims, self.shape.frames())?;
        let mut counts = vec![0; shape.cells()];
        let n = shape.len();
        for (k, t, c) in self.samples() {
            for x in 0..len {
                let flat = if axis == 0 {
                    shape.index(x, k)
                } else {
                    shape.index(k, x)
                };
                counts[t * n + flat] = c;
            }
        }
        SamplingPattern::from_counts(shape, counts)
    }
}

/// `PSF_t(r)`, the inverse DFT of each frame's counts.
#[derive(Debug, Clone)]
pub struct PointSpreadFunction {
    shape: GridShape,
    values: Vec<Complex64>,
}

impl PointSpreadFunction {
    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let n = self.shape.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn get(&self, r: usize, t: usize) -> Complex64 {
        self.values[t * self.shape.len() + r]
    }
}

pub fn psf(pattern: &SamplingPattern) -> PointSpreadFunction {
    let shape = pattern.shape().clone();
    let fft = shape.fft();
    let mut values: Vec<Complex64> = pattern
        .counts()
        .iter()
        .map(|&c| Complex64::new(c as f64, 0.0))
        .collect();
    for frame in values.chunks_mut(shape.len()) {
        fft.inverse(frame);
    }
    PointSpreadFunction { shape, values }
}

/// Histogram `p(Δk, t, t')` of ordered sample differences `k_t - k_t'`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialDistribution {
    shape: GridShape,
    values: Vec<f64>,
}

impl DifferentialDistribution {
    pub fn zeros(shape: GridShape) -> Self {
        let len = shape.len() * shape.frames() * shape.frames();
        DifferentialDistribution {
            shape,
            values: vec![0.0; len],
        }
    }

    /// Wraps raw values laid out as `[(t * T + t') * N + Δk]`.
    pub fn from_values(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        let want = shape.len() * shape.frames() * shape.frames();
        if values.len() != want {
            return Err(Error::mismatch(want, values.len()));
        }
        Ok(DifferentialDistribution { shape, values })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, dk: usize, t: usize, t2: usize) -> f64 {
        let n = self.shape.len();
        let frames = self.shape.frames();
        self.values[(t * frames + t2) * n + dk]
    }

    pub fn block(&self, t: usize, t2: usize) -> &[f64] {
        let n = self.shape.len();
        let start = (t * self.shape.frames() + t2) * n;
        &self.values[start..start + n]
    }

    /// `Σ_Δk p(Δk, t, t')`.
    pub fn mass(&self, t: usize, t2: usize) -> f64 {
        self.block(t, t2).iter().sum()
    }
}

/// Reference O(S²) enumeration of sample pairs.
pub fn dd_direct(pattern: &SamplingPattern) -> DifferentialDistribution {
    let shape = pattern.shape().clone();
    let n = shape.len();
    let frames = shape.frames();
    let samples: Vec<_> = pattern.samples().collect();
    let mut values = vec![0.0; n * frames * frames];
    for &(ka, ta, ca) in &samples {
        for &(kb, tb, cb) in &samples {
            let d = shape.diff(ka, kb);
            values[(ta * frames + tb) * n + d] += (ca as u64 * cb as u64) as f64;
        }
    }
    DifferentialDistribution { shape, values }
}

/// Cross-correlation of the frame patterns through the FFT, rounded to the
/// nearest integer.
pub fn dd_fft(pattern: &SamplingPattern) -> DifferentialDistribution {
    let shape = pattern.shape().clone();
    let n = shape.len();
    let frames = shape.frames();
    let fft = shape.fft();
    let spectra: Vec<Vec<Complex64>> = (0..frames)
        .map(|t| {
            let mut buf: Vec<Complex64> = pattern
                .frame(t)
                .iter()
                .map(|&c| Complex64::new(c as f64, 0.0))
                .collect();
            fft.forward(&mut buf);
            buf
        })
        .collect();
    let mut values = vec![0.0; n * frames * frames];
    let mut buf = vec![Complex64::default(); n];
    for t in 0..frames {
        for t2 in 0..frames {
            if pattern.totals()[t] == 0 || pattern.totals()[t2] == 0 {
                continue;
            }
            for ((b, x), y) in buf.iter_mut().zip(&spectra[t]).zip(&spectra[t2]) {
                *b = x * y.conj();
            }
            fft.inverse(&mut buf);
            let out = &mut values[(t * frames + t2) * n..(t * frames + t2 + 1) * n];
            for (o, b) in out.iter_mut().zip(&buf) {
                *o = b.re.round();
            }
        }
    }
    DifferentialDistribution { shape, values }
}

/// `N · F{PSF_t · conj(PSF_t')}` without rounding.
pub fn dd_from_psf(psf: &PointSpreadFunction) -> DifferentialDistribution {
    let shape = psf.shape().clone();
    let n = shape.len();
    let frames = shape.frames();
    let fft = shape.fft();
    let mut values = vec![0.0; n * frames * frames];
    let mut buf = vec![Complex64::default(); n];
    for t in 0..frames {
        for t2 in 0..frames {
            for ((b, x), y) in buf.iter_mut().zip(psf.frame(t)).zip(psf.frame(t2)) {
                *b = x * y.conj();
            }
            fft.forward(&mut buf);
            let out = &mut values[(t * frames + t2) * n..(t * frames + t2 + 1) * n];
            for (o, b) in out.iter_mut().zip(&buf) {
                *o = n as f64 * b.re;
            }
        }
    }
    DifferentialDistribution { shape, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> GridShape {
        GridShape::new(&[n], 1).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridShape::new(&[], 1).is_err());
        assert!(GridShape::new(&[4, 4, 4], 1).is_err());
        assert!(GridShape::new(&[4, 0], 1).is_err());
        assert!(GridShape::new(&[4], 0).is_err());
    }

    #[test]
    fn modular_offsets() {
        let g = GridShape::new(&[4, 6], 1).unwrap();
        let a = g.index(1, 5);
        let b = g.index(3, 2);
        let d = g.diff(a, b);
        assert_eq!(g.coords(d), (2, 3));
        assert_eq!(g.add(b, d), a);
        assert_eq!(g.add(d, g.neg(d)), 0);
        assert_eq!(g.signed_offset(g.index(3, 5)), (-1, -1));
    }

    #[test]
    fn psf_of_full_frame_is_an_impulse() {
        let p = SamplingPattern::from_counts(line(8), vec![1; 8]).unwrap();
        let h = psf(&p);
        assert!((h.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        for r in 1..8 {
            assert!(h.get(r, 0).norm() < 1e-14);
        }
    }

    #[test]
    fn psf_of_single_sample_is_flat() {
        let p = SamplingPattern::from_samples(line(4), [(0, 0)]).unwrap();
        let h = psf(&p);
        for r in 0..4 {
            assert!((h.get(r, 0) - Complex64::new(0.25, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn psf_of_uniform_comb_aliases() {
        let p = SamplingPattern::from_samples(line(8), [(0, 0), (2, 0), (4, 0), (6, 0)]).unwrap();
        let h = psf(&p);
        for r in 0..8 {
            let want = if r == 0 || r == 4 { 0.5 } else { 0.0 };
            assert!((h.get(r, 0) - Complex64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn differential_distribution_examples() {
        let one = SamplingPattern::from_samples(line(5), [(0, 0)]).unwrap();
        assert_eq!(dd_direct(&one).values(), &[1.0, 0.0, 0.0, 0.0, 0.0]);

        let pair = SamplingPattern::from_samples(line(4), [(0, 0), (2, 0)]).unwrap();
        assert_eq!(dd_direct(&pair).values(), &[2.0, 0.0, 2.0, 0.0]);

        let comb = SamplingPattern::from_samples(line(8), (0..8).step_by(2).map(|k| (k, 0))).unwrap();
        let want = [4.0, 0.0, 4.0, 0.0, 4.0, 0.0, 4.0, 0.0];
        assert_eq!(dd_direct(&comb).values(), &want);
        assert_eq!(dd_fft(&comb).values(), &want);
    }

    #[test]
    fn fft_route_handles_empty_and_full() {
        let empty = SamplingPattern::empty(GridShape::new(&[6], 2).unwrap());
        assert!(dd_fft(&empty).values().iter().all(|&v| v == 0.0));
        let full = SamplingPattern::from_counts(line(8), vec![1; 8]).unwrap();
        assert!(dd_fft(&full).values().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn removing_an_absent_sample_fails() {
        let mut p = SamplingPattern::empty(line(4));
        assert!(matches!(p.remove(1, 0), Err(Error::AbsentSample { .. })));
        p.insert(1, 0).unwrap();
        p.insert(1, 0).unwrap();
        assert_eq!(p.count(1, 0), 2);
        assert_eq!(p.totals(), &[2]);
        p.remove(1, 0).unwrap();
        assert_eq!(p.total(), 1);
    }

    #[test]
    fn full_readout_lift() {
        let p = SamplingPattern::from_samples(line(4), [(1, 0), (3, 0)]).unwrap();
        let lifted = p.with_full_readout(1, 3).unwrap();
        assert_eq!(lifted.shape().phase_dims(), &[4, 3]);
        assert_eq!(lifted.total(), 6);
        assert_eq!(lifted.count(lifted.shape().index(3, 2), 0), 1);
        assert_eq!(lifted.count(lifted.shape().index(2, 2), 0), 0);
    }
}
