//! Pattern comparison tables: image error, second moment and g-factor per
//! pattern.

use std::path::Path;
use std::time::Instant;

use kdd_core::{
    apply_e, cg_solve, collapse_readout, compute_w, dd_fft, exact_gfactor, pseudo_replica_gfactor,
    recon::rmse, trace_moment2, CgConfig, Complex64, GFactorConfig, GStats, Image, KSpaceData,
    SamplingPattern, SensitivitySet, WeightFunction,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::failure::{CliResult, Failure};

/// A sensitivity model prepared for both design-grid and image-space work.
pub struct Model {
    /// Same maps with any readout axis treated as an ordinary spatial axis.
    pub full: SensitivitySet,
    /// Weighting function on the design grid, collapsed over the readout.
    pub w: WeightFunction,
    readout: Option<(usize, usize)>,
}

impl Model {
    pub fn new(sens: &SensitivitySet) -> CliResult<Self> {
        let readout = sens.readout_axis().map(|a| (a, sens.spatial_dims()[a]));
        let mut w = compute_w(sens);
        if readout.is_some() {
            w = collapse_readout(&w)?;
        }
        Ok(Model {
            full: sens.clone().with_readout(None)?,
            w,
            readout,
        })
    }

    /// The pattern on the image grid: a design-grid pattern gains a fully
    /// sampled readout, anything already on the image grid is kept.
    pub fn lift(&self, pattern: &SamplingPattern) -> CliResult<SamplingPattern> {
        match self.readout {
            Some((axis, len)) if pattern.shape().phase_dims() != self.full.spatial_dims() => {
                Ok(pattern.with_full_readout(axis, len)?)
            }
            _ => Ok(pattern.clone()),
        }
    }

    pub fn objective(&self, pattern: &SamplingPattern) -> CliResult<f64> {
        Ok(trace_moment2(&self.w, &dd_fft(pattern))?)
    }
}

/// Piecewise-constant ellipses inside the support of the model, scaled by
/// `1 / (l + 1)` per coefficient.
pub fn phantom(sens: &SensitivitySet) -> CliResult<Image> {
    let dims = sens.spatial_dims().to_vec();
    let nr = sens.spatial_len();
    let energy = sens.column_energy();
    let coeffs = sens.coeffs();
    let mut values = vec![Complex64::default(); nr * coeffs];
    let mut coord = vec![0usize; dims.len()];
    for r in 0..nr {
        let mut rem = r;
        for (i, &n) in dims.iter().enumerate().rev() {
            coord[i] = rem % n;
            rem /= n;
        }
        let u: Vec<f64> = coord
            .iter()
            .zip(&dims)
            .map(|(&c, &n)| (c as f64 - n as f64 / 2.0) / n as f64)
            .collect();
        let outer: f64 = u.iter().map(|x| (x / 0.4).powi(2)).sum();
        let inner: f64 = u.iter().map(|x| ((x - 0.1) / 0.15).powi(2)).sum();
        let base = if outer <= 1.0 { 1.0 } else { 0.2 } + if inner <= 1.0 { 0.5 } else { 0.0 };
        for l in 0..coeffs {
            if energy[l * nr + r] > 0.0 {
                values[l * nr + r] = Complex64::new(base / (l + 1) as f64, 0.0);
            }
        }
    }
    Ok(Image::new(&dims, coeffs, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GMethod {
    Replicas { count: usize, seed: u64 },
    Exact,
}

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    pub lambda: f64,
    pub noise: f64,
    pub seed: u64,
    pub g: GMethod,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub label: String,
    pub samples: usize,
    pub acceleration: f64,
    pub mse: f64,
    pub mse_norm: f64,
    pub tr2: f64,
    pub tr2_norm: f64,
    pub g_max: f64,
    pub g_median: f64,
    pub g_mean: f64,
    /// Time spent generating the pattern, when known.
    pub seconds: Option<f64>,
}

/// Relative squared error of a regularized reconstruction of the phantom
/// from noisy samples. Noise is complex Gaussian with standard deviation
/// `noise` times the largest sample magnitude.
pub fn phantom_mse(
    sens: &SensitivitySet,
    pattern: &SamplingPattern,
    truth: &Image,
    settings: &Settings,
) -> CliResult<f64> {
    let clean = apply_e(sens, pattern, truth)?;
    let peak = clean.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let sigma = settings.noise * peak / std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let noisy: Vec<Complex64> = clean
        .values()
        .iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            v + Complex64::new(re, im) * sigma
        })
        .collect();
    let data = KSpaceData::new(pattern, sens.coils(), noisy)?;
    let cg = CgConfig {
        lambda: settings.lambda,
        ..CgConfig::default()
    };
    let solution = cg_solve(sens, pattern, &data, &cg)?;
    Ok(rmse(truth, &solution.image)?.powi(2))
}

pub fn gfactor_stats(sens: &SensitivitySet, pattern: &SamplingPattern, settings: &Settings) -> CliResult<GStats> {
    let map = match settings.g {
        GMethod::Exact => exact_gfactor(sens, pattern, settings.lambda)?,
        GMethod::Replicas { count, seed } => {
            let config = GFactorConfig {
                replicas: count,
                cg: CgConfig {
                    lambda: settings.lambda,
                    ..CgConfig::default()
                },
                seed,
            };
            pseudo_replica_gfactor(sens, pattern, &config)?
        }
    };
    let stats = map.stats()?;
    if !(stats.max.is_finite() && stats.mean.is_finite()) {
        return Err(Failure::consistency("g-factor map has non-finite values"));
    }
    Ok(stats)
}

/// Evaluates each `(label, design-grid pattern, generation time)`; the
/// normalized columns are filled in by [`normalize`].
pub fn evaluate(
    model: &Model,
    patterns: &[(String, SamplingPattern, Option<f64>)],
    settings: &Settings,
) -> CliResult<Vec<Row>> {
    let truth = phantom(&model.full)?;
    let mut rows = Vec::with_capacity(patterns.len());
    for (label, pattern, seconds) in patterns {
        let start = Instant::now();
        let lifted = model.lift(pattern)?;
        let tr2 = model.objective(pattern)?;
        let mse = phantom_mse(&model.full, &lifted, &truth, settings)
            .map_err(|e| e.context(format!("pattern {label}")))?;
        let g = gfactor_stats(&model.full, &lifted, settings).map_err(|e| e.context(format!("pattern {label}")))?;
        log::info!("{label}: tr2 {tr2:.6e}, mse {mse:.4e}, max g {:.3} ({:.1}s)", g.max, start.elapsed().as_secs_f64());
        rows.push(Row {
            label: label.clone(),
            samples: pattern.total(),
            acceleration: pattern.acceleration(),
            mse,
            mse_norm: f64::NAN,
            tr2,
            tr2_norm: f64::NAN,
            g_max: g.max,
            g_median: g.median,
            g_mean: g.mean,
            seconds: *seconds,
        });
    }
    Ok(rows)
}

/// Divides `mse` and `tr2` by those of the reference row.
pub fn normalize(rows: &mut [Row], reference: &str) -> CliResult<()> {
    let base = rows
        .iter()
        .find(|r| r.label == reference)
        .map(|r| (r.mse, r.tr2))
        .ok_or_else(|| Failure::config(format!("reference pattern {reference:?} is not in the report")))?;
    for row in rows.iter_mut() {
        row.mse_norm = row.mse / base.0;
        row.tr2_norm = row.tr2 / base.1;
    }
    Ok(())
}

pub const COLUMNS: [&str; 11] = [
    "label",
    "samples",
    "acceleration",
    "mse",
    "mse_norm",
    "tr2",
    "tr2_norm",
    "g_max",
    "g_median",
    "g_mean",
    "seconds",
];

pub fn write(path: &Path, rows: &[Row]) -> CliResult<()> {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.samples.to_string(),
                format!("{:.6}", r.acceleration),
                format!("{:.9e}", r.mse),
                format!("{:.6}", r.mse_norm),
                format!("{:.9e}", r.tr2),
                format!("{:.6}", r.tr2_norm),
                format!("{:.6}", r.g_max),
                format!("{:.6}", r.g_median),
                format!("{:.6}", r.g_mean),
                r.seconds.map(|s| format!("{s:.3}")).unwrap_or_default(),
            ]
        })
        .collect();
    kdd_core::io::emit_csv(path, &COLUMNS, &cells)?;
    Ok(())
}
