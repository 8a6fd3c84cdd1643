//! Reproducing kernel of the encoding model, the power function of kernel
//! interpolation, and rank correlation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridShape, SamplingPattern};
use crate::models::SensitivitySet;
use crate::weighting::WeightFunction;

/// Largest `N · (C·T)²` kernel table built by [`kernel`].
pub const KERNEL_LIMIT: usize = 1 << 22;

/// Largest number of sampled channels accepted by [`power_function`].
pub const POWER_LIMIT: usize = 4096;

/// Relative ridge added to the sampled Gram matrix.
pub const POWER_RIDGE: f64 = 1e-10;

/// `K_{ct,c't'}(Δk) = 1/N Σ_r Σ_l S_{t,l,c}(r) S*_{t',l,c'}(r) e^{-2πiΔk·r/N}`.
///
/// The kernel between `(k, c, t)` and `(k', c', t')` depends only on
/// `k - k'`, so one table over `Δk` per channel pair is stored.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    shape: GridShape,
    coils: usize,
    values: Vec<Complex64>,
}

impl KernelMatrix {
    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    fn channels(&self) -> usize {
        self.coils * self.shape.frames()
    }

    /// `K_{ct,c't'}(Δk)`.
    #[inline]
    pub fn get(&self, c: usize, t: usize, c2: usize, t2: usize, dk: usize) -> Complex64 {
        let frames = self.shape.frames();
        let a = c * frames + t;
        let b = c2 * frames + t2;
        self.values[(a * self.channels() + b) * self.shape.len() + dk]
    }

    /// `K_{ct,c't'}(k, k')`.
    pub fn eval(&self, (k, c, t): (usize, usize, usize), (k2, c2, t2): (usize, usize, usize)) -> Complex64 {
        self.get(c, t, c2, t2, self.shape.diff(k, k2))
    }
}

pub fn kernel(sens: &SensitivitySet) -> Result<KernelMatrix> {
    let shape = sens.grid()?;
    let n = shape.len();
    let (frames, coils) = (sens.frames(), sens.coils());
    let ch = frames * coils;
    let size = n * ch * ch;
    if size > KERNEL_LIMIT {
        return Err(Error::TooLarge {
            what: "kernel table N·(C·T)²",
            size,
            limit: KERNEL_LIMIT,
        });
    }
    let fft = shape.fft();
    let mut values = vec![Complex64::default(); size];
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;
    for c in 0..coils {
        for t in 0..frames {
            for c2 in 0..coils {
                for t2 in 0..frames {
                    buf.iter_mut().for_each(|b| *b = Complex64::default());
                    for l in 0..sens.coeffs() {
                        for ((b, x), y) in buf.iter_mut().zip(sens.map(t, l, c)).zip(sens.map(t2, l, c2)) {
                            *b += x * y.conj();
                        }
                    }
                    fft.forward(&mut buf);
                    let a = c * frames + t;
                    let b = c2 * frames + t2;
                    let out = &mut values[(a * ch + b) * n..(a * ch + b + 1) * n];
                    for (o, v) in out.iter_mut().zip(&buf) {
                        *o = v * scale;
                    }
                }
            }
        }
    }
    Ok(KernelMatrix {
        shape,
        coils,
        values,
    })
}

/// `w(Δk, t, t') = Σ_{c,c'} |K_{ct,c't'}(Δk)|²`.
pub fn w_from_kernel(k: &KernelMatrix) -> WeightFunction {
    let shape = &k.shape;
    let n = shape.len();
    let frames = shape.frames();
    let mut values = vec![0.0; n * frames * frames];
    for t in 0..frames {
        for t2 in 0..frames {
            let out = &mut values[(t * frames + t2) * n..(t * frames + t2 + 1) * n];
            for c in 0..k.coils {
                for c2 in 0..k.coils {
                    for (d, o) in out.iter_mut().enumerate() {
                        *o += k.get(c, t, c2, t2, d).norm_sqr();
                    }
                }
            }
        }
    }
    WeightFunction::from_values(shape.phase_dims(), None, frames, values)
        .expect("kernel magnitudes are finite and nonnegative")
}

/// Squared power function of kernel interpolation from the sampled
/// channels.
#[derive(Debug, Clone)]
pub struct PowerFunction {
    shape: GridShape,
    coils: usize,
    per_coil: Vec<f64>,
    combined: Vec<f64>,
    condition: f64,
}

impl PowerFunction {
    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    /// `P_c²(k, t)` laid out `[(c * T + t) * N + k]`.
    pub fn per_coil(&self) -> &[f64] {
        &self.per_coil
    }

    /// `Σ_c P_c²(k, t)` laid out `[t * N + k]`.
    pub fn combined(&self) -> &[f64] {
        &self.combined
    }

    /// Condition estimate of the ridged sampled Gram matrix from its
    /// Cholesky factor.
    pub fn condition(&self) -> f64 {
        self.condition
    }
}

/// `P_c²(k) = K_{cc}(0) - κᴴ G⁻¹ κ`, where `G` is the kernel restricted to
/// the distinct sampled `(k_n, t_n)` over all coils and `κ` is the kernel
/// column between the samples and `(k, c, t)`. The cardinal weights are
/// `G⁻¹ κ`; a ridge of `1e-10` times the mean diagonal of `G` is added
/// before the Cholesky factorization.
pub fn power_function(sens: &SensitivitySet, pattern: &SamplingPattern) -> Result<PowerFunction> {
    let km = kernel(sens)?;
    let shape = km.shape().clone();
    if pattern.shape() != &shape {
        return Err(Error::mismatch(
            format!("{:?} x {}", shape.phase_dims(), shape.frames()),
            format!(
                "{:?} x {}",
                pattern.shape().phase_dims(),
                pattern.shape().frames()
            ),
        ));
    }
    let coils = km.coils();
    let n = shape.len();
    let frames = shape.frames();
    let sampled: Vec<(usize, usize, usize)> = pattern
        .samples()
        .flat_map(|(k, t, _)| (0..coils).map(move |c| (k, c, t)))
        .collect();
    let m = sampled.len();
    if m > POWER_LIMIT {
        return Err(Error::TooLarge {
            what: "sampled channels for the power function",
            size: m,
            limit: POWER_LIMIT,
        });
    }
    let mut per_coil = vec![0.0; coils * frames * n];
    let mut condition = 1.0;
    if m == 0 {
        for c in 0..coils {
            for t in 0..frames {
                let v = km.get(c, t, c, t, 0).re;
                per_coil[(c * frames + t) * n..(c * frames + t + 1) * n].fill(v);
            }
        }
    } else {
        let mut gram = DMatrix::<Complex64>::from_fn(m, m, |i, j| km.eval(sampled[i], sampled[j]));
        let mean_diag = (0..m).map(|i| gram[(i, i)].re).sum::<f64>() / m as f64;
        let ridge = POWER_RIDGE * mean_diag.max(f64::MIN_POSITIVE);
        for i in 0..m {
            gram[(i, i)] += ridge;
        }
        let chol = gram.cholesky().ok_or(Error::IllConditioned {
            condition: f64::INFINITY,
        })?;
        let diag: Vec<f64> = (0..m).map(|i| chol.l_dirty()[(i, i)].re).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        condition = (hi / lo).powi(2);
        if !condition.is_finite() || condition > 1e15 {
            return Err(Error::IllConditioned { condition });
        }
        let targets: Vec<(usize, usize, usize)> = (0..coils)
            .flat_map(|c| (0..frames).flat_map(move |t| (0..n).map(move |k| (k, c, t))))
            .collect();
        for chunk in targets.chunks(256) {
            let kappa = DMatrix::<Complex64>::from_fn(m, chunk.len(), |i, j| km.eval(sampled[i], chunk[j]));
            let weights = chol.solve(&kappa);
            for (j, &(k, c, t)) in chunk.iter().enumerate() {
                let col = DVector::from_iterator(m, kappa.column(j).iter().cloned());
                let wcol = weights.column(j);
                let explained: Complex64 = col.iter().zip(wcol.iter()).map(|(a, b)| a.conj() * b).sum();
                per_coil[(c * frames + t) * n + k] = km.get(c, t, c, t, 0).re - explained.re;
            }
        }
    }
    let mut combined = vec![0.0; frames * n];
    for c in 0..coils {
        for (o, v) in combined.iter_mut().zip(&per_coil[c * frames * n..(c + 1) * frames * n]) {
            *o += v;
        }
    }
    Ok(PowerFunction {
        shape,
        coils,
        per_coil,
        combined,
        condition,
    })
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &id in &idx[i..=j] {
            ranks[id] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::mismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two values".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
