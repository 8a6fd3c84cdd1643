//! Matrix-free encoding operator, Tikhonov-regularized conjugate gradient,
//! pseudo-multiple-replica g-factor maps and image metrics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::grid::{psf, GridShape, SamplingPattern};
use crate::models::SensitivitySet;

/// Images over `(r, l)`, laid out `[l * N + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    dims: Vec<usize>,
    coeffs: usize,
    values: Vec<Complex64>,
}

impl Image {
    pub fn new(dims: &[usize], coeffs: usize, values: Vec<Complex64>) -> Result<Self> {
        let n: usize = dims.iter().product::<usize>() * coeffs;
        if values.len() != n {
            return Err(Error::mismatch(n, values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("image values must be finite".into()));
        }
        Ok(Image {
            dims: dims.to_vec(),
            coeffs,
            values,
        })
    }

    pub fn zeros(dims: &[usize], coeffs: usize) -> Self {
        Image {
            dims: dims.to_vec(),
            coeffs,
            values: vec![Complex64::default(); dims.iter().product::<usize>() * coeffs],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn coefficient(&self, l: usize) -> &[Complex64] {
        let n = self.values.len() / self.coeffs;
        &self.values[l * n..(l + 1) * n]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Sampled data with rows ordered `(t, k ascending, repeat, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData {
    shape: GridShape,
    coils: usize,
    values: Vec<Complex64>,
}

impl KSpaceData {
    pub fn new(pattern: &SamplingPattern, coils: usize, values: Vec<Complex64>) -> Result<Self> {
        let rows = pattern.total() * coils;
        if values.len() != rows {
            return Err(Error::mismatch(rows, values.len()));
        }
        Ok(KSpaceData {
            shape: pattern.shape().clone(),
            coils,
            values,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

/// `E = D F S` with a unitary DFT, bound to one model and pattern.
#[derive(Debug, Clone)]
pub struct EncodingOperator<'a> {
    sens: &'a SensitivitySet,
    pattern: &'a SamplingPattern,
    fft: FftNd,
    // (k, t) once per sample, in row order
    rows: Vec<(usize, usize)>,
}

impl<'a> EncodingOperator<'a> {
    pub fn new(sens: &'a SensitivitySet, pattern: &'a SamplingPattern) -> Result<Self> {
        let grid = sens.grid()?;
        if &grid != pattern.shape() {
            return Err(Error::mismatch(
                format!("{:?} x {}", grid.phase_dims(), grid.frames()),
                format!(
                    "{:?} x {}",
                    pattern.shape().phase_dims(),
                    pattern.shape().frames()
                ),
            ));
        }
        let rows = pattern
            .samples()
            .flat_map(|(k, t, c)| std::iter::repeat_n((k, t), c as usize))
            .collect();
        Ok(EncodingOperator {
            sens,
            pattern,
            fft: grid.fft(),
            rows,
        })
    }

    fn n(&self) -> usize {
        self.pattern.shape().len()
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.dims() != self.sens.spatial_dims() || image.coeffs() != self.sens.coeffs() {
            return Err(Error::mismatch(
                format!("{:?} x {}", self.sens.spatial_dims(), self.sens.coeffs()),
                format!("{:?} x {}", image.dims(), image.coeffs()),
            ));
        }
        Ok(())
    }

    /// `Σ_l S_{t,l,c} m_l` transformed to k-space for one `(t, c)`.
    fn coil_spectrum(&self, x: &[Complex64], t: usize, c: usize, buf: &mut [Complex64]) {
        let n = self.n();
        buf.iter_mut().for_each(|b| *b = Complex64::default());
        for l in 0..self.sens.coeffs() {
            for ((b, s), m) in buf.iter_mut().zip(self.sens.map(t, l, c)).zip(&x[l * n..]) {
                *b += s * m;
            }
        }
        self.fft.forward(buf);
    }

    /// Adds `Σ conj(S_{t,l,c}) · Fᴴ buf` into `out`, consuming `buf`.
    fn add_back(&self, buf: &mut [Complex64], t: usize, c: usize, out: &mut [Complex64]) {
        let n = self.n();
        self.fft.inverse_unscaled(buf);
        for l in 0..self.sens.coeffs() {
            for ((o, s), b) in out[l * n..(l + 1) * n]
                .iter_mut()
                .zip(self.sens.map(t, l, c))
                .zip(buf.iter())
            {
                *o += s.conj() * b;
            }
        }
    }

    pub fn forward(&self, image: &Image) -> Result<KSpaceData> {
        self.check_image(image)?;
        let n = self.n();
        let coils = self.sens.coils();
        let scale = 1.0 / (n as f64).sqrt();
        let mut values = vec![Complex64::default(); self.rows.len() * coils];
        let mut buf = vec![Complex64::default(); n];
        for t in 0..self.sens.frames() {
            for c in 0..coils {
                self.coil_spectrum(image.values(), t, c, &mut buf);
                for (row, &(k, rt)) in self.rows.iter().enumerate() {
                    if rt == t {
                        values[row * coils + c] = buf[k] * scale;
                    }
                }
            }
        }
        KSpaceData::new(self.pattern, coils, values)
    }

    pub fn adjoint(&self, data: &KSpaceData) -> Result<Image> {
        if data.shape() != self.pattern.shape() || data.values().len() != self.rows.len() * self.sens.coils() {
            return Err(Error::mismatch(
                self.rows.len() * self.sens.coils(),
                data.values().len(),
            ));
        }
        let n = self.n();
        let coils = self.sens.coils();
        let scale = 1.0 / (n as f64).sqrt();
        let mut out = vec![Complex64::default(); n * self.sens.coeffs()];
        let mut buf = vec![Complex64::default(); n];
        for t in 0..self.sens.frames() {
            for c in 0..coils {
                buf.iter_mut().for_each(|b| *b = Complex64::default());
                for (row, &(k, rt)) in self.rows.iter().enumerate() {
                    if rt == t {
                        buf[k] += data.values()[row * coils + c] * scale;
                    }
                }
                self.add_back(&mut buf, t, c, &mut out);
            }
        }
        Image::new(self.sens.spatial_dims(), self.sens.coeffs(), out)
    }

    /// `(EᴴE + λI) x`, written into `out`.
    pub fn normal(&self, x: &[Complex64], lambda: f64, out: &mut [Complex64]) {
        let n = self.n();
        out.iter_mut().zip(x).for_each(|(o, v)| *o = v * lambda);
        let mut buf = vec![Complex64::default(); n];
        let inv_n = 1.0 / n as f64;
        for t in 0..self.sens.frames() {
            let counts = self.pattern.frame(t);
            if self.pattern.totals()[t] == 0 {
                continue;
            }
            for c in 0..self.sens.coils() {
                self.coil_spectrum(x, t, c, &mut buf);
                for (b, &cnt) in buf.iter_mut().zip(counts) {
                    *b *= cnt as f64 * inv_n;
                }
                self.add_back(&mut buf, t, c, out);
            }
        }
    }
}

pub fn apply_e(sens: &SensitivitySet, pattern: &SamplingPattern, image: &Image) -> Result<KSpaceData> {
    EncodingOperator::new(sens, pattern)?.forward(image)
}

pub fn apply_eh(sens: &SensitivitySet, pattern: &SamplingPattern, data: &KSpaceData) -> Result<Image> {
    EncodingOperator::new(sens, pattern)?.adjoint(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            lambda: 1e-4,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub image: Image,
    pub iterations: usize,
    /// Last relative update `‖x^{k+1} - x^k‖ / ‖x^k‖`.
    pub delta: f64,
    pub converged: bool,
    /// First iteration at which the relative update had grown more than
    /// tenfold over the previous ten.
    pub diverged: Option<usize>,
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Conjugate gradient on `(EᴴE + λI) x = rhs` from `x = 0`.
///
/// Stops once the relative update falls below `tol`. Growth of the
/// relative update by more than tenfold over ten iterations is reported in
/// [`CgSolution::diverged`] and logged; iteration continues. Fails with
/// [`Error::Diverged`] when the iterate stops being finite.
pub fn cg_normal(op: &EncodingOperator, rhs: &Image, config: &CgConfig) -> Result<CgSolution> {
    if !(config.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda {} must be >= 0",
            config.lambda
        )));
    }
    op.check_image(rhs)?;
    let len = rhs.values().len();
    let mut x = vec![Complex64::default(); len];
    let mut r = rhs.values().to_vec();
    let mut p = r.clone();
    let mut ap = vec![Complex64::default(); len];
    let mut rr = dot(&r, &r).re;
    let mut history: Vec<f64> = Vec::new();
    let mut diverged = None;
    let mut delta = f64::INFINITY;
    let mut converged = rr == 0.0;
    let mut iterations = 0;
    while !converged && iterations < config.max_iter {
        op.normal(&p, config.lambda, &mut ap);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        let x_norm = norm(&x);
        let step = alpha * norm(&p);
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= api * alpha;
        }
        iterations += 1;
        let rr_new = dot(&r, &r).re;
        if !step.is_finite() || !rr_new.is_finite() {
            return Err(Error::Diverged {
                iteration: iterations,
                delta: f64::INFINITY,
            });
        }
        if x_norm > 0.0 {
            delta = step / x_norm;
            history.push(delta);
            if diverged.is_none() && history.len() > 10 && delta > 10.0 * history[history.len() - 11] {
                log::warn!("conjugate gradient: relative update grew to {delta:e} at iteration {iterations}");
                diverged = Some(iterations);
            }
            if delta < config.tol {
                converged = true;
            }
        }
        if rr_new == 0.0 {
            converged = true;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
    }
    Ok(CgSolution {
        image: Image::new(rhs.dims(), rhs.coeffs(), x)?,
        iterations,
        delta,
        converged,
        diverged,
    })
}

/// Regularized least-squares reconstruction `(EᴴE + λI)⁻¹ Eᴴ y`.
pub fn cg_solve(
    sens: &SensitivitySet,
    pattern: &SamplingPattern,
    data: &KSpaceData,
    config: &CgConfig,
) -> Result<CgSolution> {
    let op = EncodingOperator::new(sens, pattern)?;
    let rhs = op.adjoint(data)?;
    cg_normal(&op, &rhs, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GFactorConfig {
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub cg: CgConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicas() -> usize {
    100
}

impl Default for GFactorConfig {
    fn default() -> Self {
        GFactorConfig {
            replicas: default_replicas(),
            cg: CgConfig::default(),
            seed: 0,
        }
    }
}

/// Noise amplification `σ_accel / (σ_full √R)` per `(r, l)`.
#[derive(Debug, Clone)]
pub struct GFactorMap {
    dims: Vec<usize>,
    coeffs: usize,
    values: Vec<f64>,
    combined: Vec<f64>,
    mask: Vec<bool>,
    replicas: usize,
    acceleration: f64,
}

impl GFactorMap {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    /// Per-coefficient maps, `[l * N + r]`; zero where no sensitivity.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean of the coefficient maps at each voxel.
    pub fn combined(&self) -> &[f64] {
        &self.combined
    }

    /// Voxels where at least one coefficient carries sensitivity.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    /// Statistics of the combined map over the mask.
    pub fn stats(&self) -> Result<GStats> {
        let vals: Vec<f64> = self
            .combined
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&g, _)| g)
            .collect();
        GStats::from_values(&vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GStats {
    pub max: f64,
    pub median: f64,
    pub mean: f64,
    pub rms: f64,
    pub p95: f64,
}

impl GStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyMask);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        Ok(GStats {
            max: sorted[sorted.len() - 1],
            median: percentile(&sorted, 50.0),
            mean: sorted.iter().sum::<f64>() / n,
            rms: (sorted.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            p95: percentile(&sorted, 95.0),
        })
    }
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn complex_noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Fully sampled noise reconstruction. With every `(k,t)` sampled once,
/// `Fᴴ` of white noise is white, so `Eᴴ n` is drawn directly per voxel and
/// the block-diagonal system is solved exactly per voxel.
fn full_replica(sens: &SensitivitySet, lambda: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let n = sens.spatial_len();
    let (frames, coeffs, coils) = (sens.frames(), sens.coeffs(), sens.coils());
    let noise = complex_noise(rng, frames * coils * n);
    let mut out = vec![Complex64::default(); coeffs * n];
    let mut a = nalgebra::DMatrix::<Complex64>::zeros(coeffs, coeffs);
    let mut b = nalgebra::DVector::<Complex64>::zeros(coeffs);
    for r in 0..n {
        a.fill(Complex64::default());
        b.fill(Complex64::default());
        for t in 0..frames {
            for c in 0..coils {
                let nu = noise[(t * coils + c) * n + r];
                for l in 0..coeffs {
                    let sl = sens.get(r, t, l, c);
                    b[l] += sl.conj() * nu;
                    for l2 in 0..coeffs {
                        a[(l, l2)] += sl.conj() * sens.get(r, t, l2, c);
                    }
                }
            }
        }
        for l in 0..coeffs {
            a[(l, l)] += lambda;
        }
        if let Some(x) = a.clone().lu().solve(&b) {
            for l in 0..coeffs {
                out[l * n + r] = x[l];
            }
        }
    }
    out
}

/// Per-voxel standard deviation (`n - 1` normalization) over replicas,
/// accumulated in replica order.
fn replica_std(samples: &[Vec<Complex64>]) -> Vec<f64> {
    let len = samples[0].len();
    let count = samples.len() as f64;
    let mut mean = vec![Complex64::default(); len];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; len];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(s).zip(&mean) {
            *acc += (v - m).norm_sqr();
        }
    }
    var.iter().map(|v| (v / (count - 1.0)).sqrt()).collect()
}

/// Pseudo-multiple-replica g-factor.
///
/// Each replica reconstructs unit-variance complex white noise with CG for
/// the accelerated pattern and exactly for full sampling, both with the same
/// `λ`. Replica `i` draws from ChaCha stream `2i` (accelerated) and `2i + 1`
/// (full), so results are independent of thread count.
pub fn pseudo_replica_gfactor(
    sens: &SensitivitySet,
    pattern: &SamplingPattern,
    config: &GFactorConfig,
) -> Result<GFactorMap> {
    if config.replicas < 2 {
        return Err(Error::InvalidParameter("at least two replicas are needed".into()));
    }
    let op = EncodingOperator::new(sens, pattern)?;
    let rows = op.rows.len() * sens.coils();
    let coils = sens.coils();
    let results: Vec<Result<(Vec<Complex64>, Vec<Complex64>)>> = (0..config.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(2 * i as u64);
            let data = KSpaceData::new(pattern, coils, complex_noise(&mut rng, rows))?;
            let rhs = op.adjoint(&data)?;
            let accel = cg_normal(&op, &rhs, &config.cg)?.image.into_values();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(2 * i as u64 + 1);
            let full = full_replica(sens, config.cg.lambda, &mut rng);
            Ok((accel, full))
        })
        .collect();
    let mut accel = Vec::with_capacity(config.replicas);
    let mut full = Vec::with_capacity(config.replicas);
    for r in results {
        let (a, f) = r?;
        accel.push(a);
        full.push(f);
    }
    let sa = replica_std(&accel);
    let sf = replica_std(&full);
    Ok(assemble_gfactor(sens, pattern, &sa, &sf, config.replicas))
}

fn assemble_gfactor(
    sens: &SensitivitySet,
    pattern: &SamplingPattern,
    sa: &[f64],
    sf: &[f64],
    replicas: usize,
) -> GFactorMap {
    let dims = sens.spatial_dims().to_vec();
    let acceleration = pattern.acceleration();
    let energy = sens.column_energy();
    let n = sens.spatial_len();
    let coeffs = sens.coeffs();
    let values: Vec<f64> = (0..n * coeffs)
        .map(|i| {
            if energy[i] > 0.0 && sf[i] > 0.0 {
                sa[i] / (sf[i] * acceleration.sqrt())
            } else {
                0.0
            }
        })
        .collect();
    let mask: Vec<bool> = (0..n).map(|r| (0..coeffs).any(|l| energy[l * n + r] > 0.0)).collect();
    let combined = (0..n)
        .map(|r| (0..coeffs).map(|l| values[l * n + r]).sum::<f64>() / coeffs as f64)
        .collect();
    GFactorMap {
        dims,
        coeffs,
        values,
        combined,
        mask,
        replicas,
        acceleration,
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Noise-free g-factor from the regularized noise covariance
/// `(G + λI)⁻¹ G (G + λI)⁻¹`.
///
/// `G` couples voxels only at offsets where some frame's PSF is nonzero, so
/// it is split into connected voxel groups and each group is solved densely.
/// Periodic patterns give small groups; irregular ones give one group of
/// size `N·L`, bounded by [`DENSE_LIMIT`](crate::spectral::DENSE_LIMIT).
/// The pattern must cover the full spatial grid.
pub fn exact_gfactor(sens: &SensitivitySet, pattern: &SamplingPattern, lambda: f64) -> Result<GFactorMap> {
    let shape = pattern.shape();
    if shape.phase_dims() != sens.spatial_dims() || shape.frames() != sens.frames() {
        return Err(Error::mismatch(
            format!("{:?} x {} frames", sens.spatial_dims(), sens.frames()),
            format!("{:?} x {} frames", shape.phase_dims(), shape.frames()),
        ));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be nonnegative")));
    }
    let n = shape.len();
    let (frames, coeffs, coils) = (sens.frames(), sens.coeffs(), sens.coils());
    let h = psf(pattern);
    let peak = h.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidParameter("pattern has no samples".into()));
    }
    let offsets: Vec<usize> = (0..n)
        .filter(|&d| (0..frames).any(|t| h.get(d, t).norm() > 1e-12 * peak))
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for &d in &offsets {
        for r in 0..n {
            let (a, b) = (find(&mut parent, r), find(&mut parent, shape.add(r, d)));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        let root = find(&mut parent, r);
        groups[root].push(r);
    }
    groups.retain(|g| !g.is_empty());
    let largest = groups.iter().map(Vec::len).max().unwrap_or(0) * coeffs;
    if largest > crate::spectral::DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "coupled voxel group for exact g-factor",
            size: largest,
            limit: crate::spectral::DENSE_LIMIT,
        });
    }

    let covariance = |g: &DMatrix<Complex64>| -> Vec<f64> {
        let m = g.nrows();
        let reg = g + DMatrix::<Complex64>::identity(m, m) * Complex64::new(lambda, 0.0);
        match reg.try_inverse() {
            Some(inv) => (&inv * g * &inv).diagonal().iter().map(|v| v.re.max(0.0)).collect(),
            None => vec![0.0; m],
        }
    };
    let blocks: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = groups
        .par_iter()
        .map(|group| {
            let m = group.len() * coeffs;
            let mut g = DMatrix::<Complex64>::zeros(m, m);
            for (i, &r) in group.iter().enumerate() {
                for (j, &r2) in group.iter().enumerate() {
                    let d = shape.diff(r, r2);
                    for t in 0..frames {
                        let p = h.get(d, t);
                        if p.norm() == 0.0 {
                            continue;
                        }
                        for l in 0..coeffs {
                            for l2 in 0..coeffs {
                                let s: Complex64 = (0..coils)
                                    .map(|c| sens.get(r, t, l, c).conj() * sens.get(r2, t, l2, c))
                                    .sum();
                                g[(l * group.len() + i, l2 * group.len() + j)] += s * p;
                            }
                        }
                    }
                }
            }
            let accel = covariance(&g);
            let mut full = vec![0.0; m];
            for (i, &r) in group.iter().enumerate() {
                let mut a = DMatrix::<Complex64>::zeros(coeffs, coeffs);
                for t in 0..frames {
                    for c in 0..coils {
                        for l in 0..coeffs {
                            for l2 in 0..coeffs {
                                a[(l, l2)] += sens.get(r, t, l, c).conj() * sens.get(r, t, l2, c);
                            }
                        }
                    }
                }
                for (l, v) in covariance(&a).into_iter().enumerate() {
                    full[l * group.len() + i] = v;
                }
            }
            (group.clone(), accel, full)
        })
        .collect();
    let mut sa = vec![0.0; n * coeffs];
    let mut sf = vec![0.0; n * coeffs];
    for (group, accel, full) in blocks {
        for (i, &r) in group.iter().enumerate() {
            for l in 0..coeffs {
                sa[l * n + r] = accel[l * group.len() + i].sqrt();
                sf[l * n + r] = full[l * group.len() + i].sqrt();
            }
        }
    }
    Ok(assemble_gfactor(sens, pattern, &sa, &sf, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub g: Option<GStats>,
}

/// `‖test - reference‖ / ‖reference‖`.
pub fn rmse(reference: &Image, test: &Image) -> Result<f64> {
    if reference.dims() != test.dims() || reference.coeffs() != test.coeffs() {
        return Err(Error::mismatch(
            format!("{:?} x {}", reference.dims(), reference.coeffs()),
            format!("{:?} x {}", test.dims(), test.coeffs()),
        ));
    }
    let denom = reference.norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter("reference image is zero".into()));
    }
    let diff: f64 = reference
        .values()
        .iter()
        .zip(test.values())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(diff / denom)
}

/// Image error plus, when a g-factor map is given, its statistics.
pub fn metrics(reference: &Image, test: &Image, g: Option<&GFactorMap>) -> Result<Metrics> {
    Ok(Metrics {
        rmse: rmse(reference, test)?,
        g: g.map(|m| m.stats()).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{from_support, random_sensitivities, SupportMask};
    use crate::spectral::build_dense;
    use rand::Rng;

    fn random_image(dims: &[usize], coeffs: usize, rng: &mut impl Rng) -> Image {
        let n: usize = dims.iter().product::<usize>() * coeffs;
        let v = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        Image::new(dims, coeffs, v).unwrap()
    }

    fn random_pattern(shape: GridShape, rng: &mut impl Rng) -> SamplingPattern {
        let counts = (0..shape.cells()).map(|_| rng.random_range(0..3)).collect();
        SamplingPattern::from_counts(shape, counts).unwrap()
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let s = random_sensitivities(&[4, 5], 2, 2, 3, &mut rng).unwrap();
            let p = random_pattern(s.grid().unwrap(), &mut rng);
            let op = EncodingOperator::new(&s, &p).unwrap();
            let x = random_image(&[4, 5], 2, &mut rng);
            let y: Vec<Complex64> = (0..p.total() * 3)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let y = KSpaceData::new(&p, 3, y).unwrap();
            let lhs = dot(op.forward(&x).unwrap().values(), y.values());
            let rhs = dot(x.values(), op.adjoint(&y).unwrap().values());
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
        }
    }

    #[test]
    fn matrix_free_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_sensitivities(&[6], 2, 2, 2, &mut rng).unwrap();
        let p = random_pattern(s.grid().unwrap(), &mut rng);
        let dense = build_dense(&s, &p).unwrap();
        let x = random_image(&[6], 2, &mut rng);
        let op = EncodingOperator::new(&s, &p).unwrap();
        let y = op.forward(&x).unwrap();
        let want = dense.encoding() * nalgebra::DVector::from_column_slice(x.values());
        for (a, b) in y.values().iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
        let mut g = vec![Complex64::default(); 12];
        op.normal(x.values(), 0.0, &mut g);
        let want = dense.gram() * nalgebra::DVector::from_column_slice(x.values());
        for (a, b) in g.iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn full_sampling_is_unitary_and_cg_is_immediate() {
        let s = from_support(&SupportMask::full(&[8, 4]).unwrap()).unwrap();
        let p = SamplingPattern::from_counts(s.grid().unwrap(), vec![1; 32]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(&[8, 4], 1, &mut rng);
        let y = apply_e(&s, &p, &x).unwrap();
        assert!((norm(y.values()) - x.norm()).abs() < 1e-12);
        let cfg = CgConfig {
            lambda: 0.0,
            tol: 1e-12,
            max_iter: 10,
        };
        let sol = cg_solve(&s, &p, &y, &cfg).unwrap();
        assert!(sol.iterations <= 2);
        assert!(rmse(&x, &sol.image).unwrap() < 1e-8);

        let zero = apply_e(&s, &p, &Image::zeros(&[8, 4], 1)).unwrap();
        assert!(zero.values().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cg_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_sensitivities(&[4, 4], 2, 2, 2, &mut rng).unwrap();
        let p = random_pattern(s.grid().unwrap(), &mut rng);
        let x = random_image(&[4, 4], 2, &mut rng);
        let y = apply_e(&s, &p, &x).unwrap();
        let cfg = CgConfig {
            lambda: 1e-4,
            tol: 1e-12,
            max_iter: 500,
        };
        let sol = cg_solve(&s, &p, &y, &cfg).unwrap();
        let dense = build_dense(&s, &p).unwrap();
        let n = dense.gram().nrows();
        let a = dense.gram() + nalgebra::DMatrix::<Complex64>::identity(n, n) * Complex64::new(1e-4, 0.0);
        let b = dense.encoding().adjoint() * nalgebra::DVector::from_column_slice(y.values());
        let want = a.lu().solve(&b).unwrap();
        let err: f64 = sol
            .image
            .values()
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-6 * want.norm());
    }

    #[test]
    fn gfactor_is_one_for_full_sampling() {
        let s = from_support(&SupportMask::full(&[8, 8]).unwrap()).unwrap();
        let p = SamplingPattern::from_counts(s.grid().unwrap(), vec![1; 64]).unwrap();
        let cfg = GFactorConfig {
            replicas: 200,
            seed: 5,
            ..Default::default()
        };
        let g = pseudo_replica_gfactor(&s, &p, &cfg).unwrap();
        assert!(g.combined().iter().all(|&v| (v - 1.0).abs() < 0.15));
        let again = pseudo_replica_gfactor(&s, &p, &cfg).unwrap();
        assert_eq!(g.values(), again.values());
    }

    #[test]
    fn exact_gfactor_matches_dense_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_sensitivities(&[4, 3], 2, 2, 3, &mut rng).unwrap();
        let p = random_pattern(s.grid().unwrap(), &mut rng);
        let lambda = 1e-3;
        let g = exact_gfactor(&s, &p, lambda).unwrap();
        let dense = build_dense(&s, &p).unwrap();
        let m = dense.gram().nrows();
        let inv = (dense.gram() + DMatrix::<Complex64>::identity(m, m) * Complex64::new(lambda, 0.0))
            .try_inverse()
            .unwrap();
        let cov = &inv * dense.gram() * &inv;
        let full = SamplingPattern::from_counts(s.grid().unwrap(), vec![1; 24]).unwrap();
        let dense_full = build_dense(&s, &full).unwrap();
        let inv_f = (dense_full.gram() + DMatrix::<Complex64>::identity(m, m) * Complex64::new(lambda, 0.0))
            .try_inverse()
            .unwrap();
        let cov_f = &inv_f * dense_full.gram() * &inv_f;
        for i in 0..m {
            let want = (cov[(i, i)].re / cov_f[(i, i)].re).sqrt() / p.acceleration().sqrt();
            assert!((g.values()[i] - want).abs() < 1e-9 * want, "{i}");
        }
    }

    #[test]
    fn exact_gfactor_agrees_with_replicas() {
        let coils = crate::models::synthetic_coils(&[8, 8], 4, crate::models::CoilProfile::Gaussian, 1).unwrap();
        let s = crate::models::from_coils(&coils).unwrap();
        let p = crate::design::uniform_pattern(&s.grid().unwrap(), 2, 1, 0).unwrap();
        let exact = exact_gfactor(&s, &p, 1e-4).unwrap();
        let cfg = GFactorConfig {
            replicas: 400,
            seed: 8,
            ..Default::default()
        };
        let mc = pseudo_replica_gfactor(&s, &p, &cfg).unwrap();
        let (a, b) = (exact.stats().unwrap().median, mc.stats().unwrap().median);
        assert!((a - b).abs() < 0.05 * a, "{a} {b}");
    }

    #[test]
    fn rmse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_image(&[5], 1, &mut rng);
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        let doubled = Image::new(&[5], 1, x.values().iter().map(|v| v * 2.0).collect()).unwrap();
        assert!((rmse(&x, &doubled).unwrap() - 1.0).abs() < 1e-14);
        assert!(rmse(&Image::zeros(&[5], 1), &x).is_err());
    }

    #[test]
    fn percentiles() {
        let s = GStats::from_values(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.max, 5.0);
        assert!((s.p95 - 4.8).abs() < 1e-12);
        assert_eq!(s.mean, 3.0);
    }
}
