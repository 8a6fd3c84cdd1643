//! The weighting function `w(Δk, t, t')` and its sparse surrogates.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::grid::GridShape;
use crate::models::{CoilMaps, SensitivitySet, TemporalBasis};

/// Dense weighting function laid out as `[(t * T + t') * Nd + Δk]`, with
/// `Δk` row-major over `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    dims: Vec<usize>,
    readout_axis: Option<usize>,
    frames: usize,
    collapsed: bool,
    values: Vec<f64>,
}

impl WeightFunction {
    pub fn from_values(
        dims: &[usize],
        readout_axis: Option<usize>,
        frames: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || n == 0 || frames == 0 {
            return Err(Error::InvalidShape(format!(
                "bad weight grid {dims:?} with {frames} frames"
            )));
        }
        if readout_axis.is_some_and(|a| a >= dims.len()) {
            return Err(Error::InvalidShape("readout axis out of range".into()));
        }
        if values.len() != n * frames * frames {
            return Err(Error::mismatch(n * frames * frames, values.len()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(WeightFunction {
            dims: dims.to_vec(),
            readout_axis,
            frames,
            collapsed: false,
            values,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn readout_axis(&self) -> Option<usize> {
        self.readout_axis
    }

    /// Whether this function was produced by summing over a readout.
    pub fn is_collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, dk: usize, t: usize, t2: usize) -> f64 {
        self.values[(t * self.frames + t2) * self.len() + dk]
    }

    pub fn block(&self, t: usize, t2: usize) -> &[f64] {
        let n = self.len();
        let start = (t * self.frames + t2) * n;
        &self.values[start..start + n]
    }

    /// The design grid; fails while a readout axis is still present.
    pub fn grid(&self) -> Result<GridShape> {
        if self.readout_axis.is_some() {
            return Err(Error::InvalidShape(
                "collapse the readout before designing".into(),
            ));
        }
        GridShape::new(&self.dims, self.frames)
    }

    /// Largest violation of `w(Δk,t,t') = w(-Δk,t',t)`.
    pub fn symmetry_error(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for t in 0..self.frames {
            for t2 in 0..self.frames {
                for d in 0..n {
                    let a = self.get(d, t, t2);
                    let b = self.get(neg_index(&self.dims, d), t2, t);
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }
}

/// Flat index of `-d` on a row-major periodic grid.
pub(crate) fn neg_index(dims: &[usize], mut d: usize) -> usize {
    let mut out = 0;
    let mut stride = 1;
    for &n in dims.iter().rev() {
        let v = d % n;
        d /= n;
        out += ((n - v) % n) * stride;
        stride *= n;
    }
    out
}

/// `w(Δk,t,t') = 1/N² Σ_{c,c'} |F{Σ_l S*_{t',l,c'} S_{t,l,c}}(Δk)|²`.
///
/// Blocks with `t <= t'` are computed in parallel and mirrored; each block
/// accumulates its coil pairs in a fixed order so the output does not depend
/// on scheduling.
pub fn compute_w(sens: &SensitivitySet) -> WeightFunction {
    let dims = sens.spatial_dims().to_vec();
    let n = sens.spatial_len();
    let (frames, coeffs, coils) = (sens.frames(), sens.coeffs(), sens.coils());
    let fft = FftNd::new(&dims);
    let pairs: Vec<(usize, usize)> = (0..frames)
        .flat_map(|t| (t..frames).map(move |t2| (t, t2)))
        .collect();
    let blocks: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(t, t2)| {
            let mut acc = vec![0.0; n];
            let mut buf = vec![Complex64::default(); n];
            for c in 0..coils {
                for c2 in 0..coils {
                    buf.iter_mut().for_each(|b| *b = Complex64::default());
                    for l in 0..coeffs {
                        let a = sens.map(t, l, c);
                        let b = sens.map(t2, l, c2);
                        for ((o, x), y) in buf.iter_mut().zip(a).zip(b) {
                            *o += y.conj() * x;
                        }
                    }
                    fft.forward(&mut buf);
                    for (o, v) in acc.iter_mut().zip(&buf) {
                        *o += v.norm_sqr();
                    }
                }
            }
            let scale = 1.0 / (n as f64 * n as f64);
            acc.iter_mut().for_each(|v| *v *= scale);
            acc
        })
        .collect();
    assemble(dims, sens.readout_axis(), frames, &pairs, blocks)
}

/// Places upper-triangle blocks and fills the lower triangle by
/// `w(Δk,t',t) = w(-Δk,t,t')`; diagonal blocks are symmetrized in place.
fn assemble(
    dims: Vec<usize>,
    readout_axis: Option<usize>,
    frames: usize,
    pairs: &[(usize, usize)],
    blocks: Vec<Vec<f64>>,
) -> WeightFunction {
    let n: usize = dims.iter().product();
    let mut values = vec![0.0; n * frames * frames];
    for (&(t, t2), block) in pairs.iter().zip(blocks) {
        for d in 0..n {
            let m = neg_index(&dims, d);
            if t == t2 {
                values[(t * frames + t) * n + d] = 0.5 * (block[d] + block[m]);
            } else {
                values[(t * frames + t2) * n + d] = block[d];
                values[(t2 * frames + t) * n + m] = block[d];
            }
        }
    }
    WeightFunction {
        dims,
        readout_axis,
        frames,
        collapsed: false,
        values,
    }
}

/// Separable form for `S_{t,l,c}(r) = C(r,c) β_l(t)`: a temporal factor
/// `|Σ_l β_l(t) β*_l(t')|²` times a coil factor shared by all frame pairs.
pub fn compute_w_separable(coils: &CoilMaps, basis: &TemporalBasis) -> WeightFunction {
    let dims = coils.dims().to_vec();
    let n = coils.len();
    let fft = FftNd::new(&dims);
    let jobs: Vec<usize> = (0..coils.coils()).collect();
    let partial: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&c| {
            let mut acc = vec![0.0; n];
            let mut buf = vec![Complex64::default(); n];
            for c2 in 0..coils.coils() {
                for ((o, x), y) in buf.iter_mut().zip(coils.map(c)).zip(coils.map(c2)) {
                    *o = y.conj() * x;
                }
                fft.forward(&mut buf);
                for (o, v) in acc.iter_mut().zip(&buf) {
                    *o += v.norm_sqr();
                }
            }
            acc
        })
        .collect();
    let scale = 1.0 / (n as f64 * n as f64);
    let mut spatial = vec![0.0; n];
    for block in &partial {
        for (s, v) in spatial.iter_mut().zip(block) {
            *s += v;
        }
    }
    let spatial: Vec<f64> = (0..n)
        .map(|d| 0.5 * scale * (spatial[d] + spatial[neg_index(&dims, d)]))
        .collect();

    let frames = basis.frames();
    let mut values = vec![0.0; n * frames * frames];
    for t in 0..frames {
        for t2 in 0..frames {
            let tau: Complex64 = (0..basis.coeffs())
                .map(|l| basis.get(t, l) * basis.get(t2, l).conj())
                .sum();
            let tau = tau.norm_sqr();
            let out = &mut values[(t * frames + t2) * n..(t * frames + t2 + 1) * n];
            for (o, s) in out.iter_mut().zip(&spatial) {
                *o = tau * s;
            }
        }
    }
    WeightFunction {
        dims,
        readout_axis: None,
        frames,
        collapsed: false,
        values,
    }
}

/// Sums `w` over the readout offset, leaving a function on the
/// phase-encode grid.
pub fn collapse_readout(w: &WeightFunction) -> Result<WeightFunction> {
    let axis = w.readout_axis.ok_or(Error::MissingReadout)?;
    let dims = &w.dims;
    let inner: usize = dims[axis + 1..].iter().product();
    let m = dims[axis];
    let outer: usize = dims[..axis].iter().product();
    let phase: Vec<usize> = dims
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &n)| n)
        .collect();
    let np = outer * inner;
    let frames = w.frames;
    let mut values = vec![0.0; np * frames * frames];
    for b in 0..frames * frames {
        let src = &w.values[b * w.len()..(b + 1) * w.len()];
        let dst = &mut values[b * np..(b + 1) * np];
        for o in 0..outer {
            for x in 0..m {
                let row = &src[(o * m + x) * inner..(o * m + x + 1) * inner];
                for (d, v) in dst[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
    }
    Ok(WeightFunction {
        dims: phase,
        readout_axis: None,
        frames,
        collapsed: true,
        values,
    })
}

/// One retained weight `ŵ(Δk, t, t')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub dk: usize,
    pub t: usize,
    pub t2: usize,
    pub value: f64,
}

/// Retained entries of a thresholded weighting function.
///
/// Entries are sorted by `(t, t', Δk)`. The support is closed under
/// `(Δk,t,t') ↦ (-Δk,t',t)`, which keeps the surrogate objective symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeight {
    shape: GridShape,
    entries: Vec<SparseEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Keep {
    Count(usize),
    Fraction(f64),
}

impl SparseWeight {
    pub fn new(shape: GridShape, mut entries: Vec<SparseEntry>) -> Result<Self> {
        let n = shape.len();
        let frames = shape.frames();
        for e in &entries {
            if e.dk >= n || e.t >= frames || e.t2 >= frames || !e.value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "sparse entry {e:?} outside the grid or not finite"
                )));
            }
        }
        entries.sort_by_key(|e| (e.t, e.t2, e.dk));
        entries.dedup_by_key(|e| (e.t, e.t2, e.dk));
        Ok(SparseWeight { shape, entries })
    }

    /// Every entry of a dense function.
    pub fn from_dense(w: &WeightFunction) -> Result<Self> {
        let shape = w.grid()?;
        let n = shape.len();
        let frames = shape.frames();
        let mut entries = Vec::with_capacity(n * frames * frames);
        for t in 0..frames {
            for t2 in 0..frames {
                for dk in 0..n {
                    entries.push(SparseEntry {
                        dk,
                        t,
                        t2,
                        value: w.get(dk, t, t2),
                    });
                }
            }
        }
        Ok(SparseWeight { shape, entries })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn entries(&self) -> &[SparseEntry] {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> WeightFunction {
        let n = self.shape.len();
        let frames = self.shape.frames();
        let mut values = vec![0.0; n * frames * frames];
        for e in &self.entries {
            values[(e.t * frames + e.t2) * n + e.dk] = e.value;
        }
        WeightFunction {
            dims: self.shape.phase_dims().to_vec(),
            readout_axis: None,
            frames,
            collapsed: false,
            values,
        }
    }
}

/// Keeps every `(0,t,t)` term and then the largest remaining entries,
/// each added together with its mirror `(-Δk,t',t)`, until at least `keep`
/// entries are held. Ties break by ascending flat index. Adding mirrors in
/// pairs means the result can hold one entry more than requested.
pub fn threshold_w(w: &WeightFunction, keep: Keep) -> Result<SparseWeight> {
    let shape = w.grid()?;
    let n = shape.len();
    let frames = shape.frames();
    let total = n * frames * frames;
    let mut keep = match keep {
        Keep::Count(k) => k,
        Keep::Fraction(f) => {
            if !(0.0..=1.0).contains(&f) || f.is_nan() {
                return Err(Error::InvalidParameter(format!(
                    "keep fraction {f} outside [0, 1]"
                )));
            }
            (f * total as f64).ceil() as usize
        }
    };
    if keep < frames {
        return Err(Error::InvalidParameter(format!(
            "keep = {keep} cannot hold the {frames} self terms"
        )));
    }
    if keep > total {
        log::warn!("keep = {keep} exceeds the {total} entries of w; keeping all");
        keep = total;
    }
    let flat = |dk: usize, t: usize, t2: usize| (t * frames + t2) * n + dk;
    let mut chosen = vec![false; total];
    let mut count = 0;
    for t in 0..frames {
        chosen[flat(0, t, t)] = true;
        count += 1;
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| w.values[b].total_cmp(&w.values[a]).then(a.cmp(&b)));
    for i in order {
        if count >= keep {
            break;
        }
        if chosen[i] {
            continue;
        }
        let (block, dk) = (i / n, i % n);
        let (t, t2) = (block / frames, block % frames);
        chosen[i] = true;
        count += 1;
        let mirror = flat(shape.neg(dk), t2, t);
        if !chosen[mirror] {
            chosen[mirror] = true;
            count += 1;
        }
    }
    let entries = chosen
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(i, _)| SparseEntry {
            dk: i % n,
            t: (i / n) / frames,
            t2: (i / n) % frames,
            value: w.values[i],
        })
        .collect();
    Ok(SparseWeight { shape, entries })
}
