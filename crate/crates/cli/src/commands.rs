use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kdd_core::io::{self, ArrayData, ArrayHeader, Dtype};
use kdd_core::{
    approx_best_candidate, caipi_enumerate, dd_fft, evaluate_periodic, exact_best_candidate,
    exact_gfactor, greedy_mse, kernel, poisson_disc, power_function, pseudo_replica_gfactor,
    spearman, threshold_w, trace_moment2, uniform_nearest, uniform_random, variance_bound, CgConfig,
    DeltaJMap, Design, DesignConfig, GFactorConfig, GridShape, Keep, PoissonTarget,
    SamplingPattern, SensitivitySet, WeightFunction,
};
use kdd_core::design::DenseRule;
use serde_json::{json, Value};

use crate::config::{Algorithm, Baseline, DesignSpec, ExperimentConfig, ModelSpec, SupportSpec};
use crate::failure::{CliResult, Exit, Failure};
use crate::manifest::{manifest_path, Recorder};
use crate::report::{self, GMethod, Model, Settings};
use crate::{
    CaipiArgs, ComputeWArgs, DesignArgs, EvaluateArgs, GFactorArgs, PowerArgs, ReportArgs, RunArgs,
    Shape, SynthArgs,
};

/// Relative tolerance of internal objective cross-checks.
const CONSISTENCY_TOL: f64 = 1e-8;

fn read_sens(path: &Path) -> CliResult<SensitivitySet> {
    io::read_sensitivities(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn read_w(path: &Path) -> CliResult<WeightFunction> {
    io::read_weight(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn read_pattern(path: &Path) -> CliResult<SamplingPattern> {
    io::read_pattern(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn agrees(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSISTENCY_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn print(results: &Value) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(results)?);
    Ok(())
}

/// Two-dimensional layout of a map over `dims`; one axis becomes a row.
fn plane(dims: &[usize]) -> CliResult<[usize; 2]> {
    match dims {
        [n] => Ok([1, *n]),
        [a, b] => Ok([*a, *b]),
        _ => Err(Failure::new(Exit::Dimension, format!("maps must be 1D or 2D, got {dims:?}"))),
    }
}

fn model_spec(a: &SynthArgs) -> CliResult<ModelSpec> {
    if a.semi.len() != 2 {
        return Err(Failure::usage("--semi takes two values"));
    }
    let support = a.support.map(|s| match s {
        Shape::Full => SupportSpec::Full {},
        Shape::Cross => SupportSpec::Cross {},
        Shape::Ellipse => SupportSpec::Ellipse {
            semi: [a.semi[0], a.semi[1]],
            angle: a.angle,
        },
    });
    let dims = a.dims.clone();
    if a.coils == 0 {
        if a.frames.is_some() || a.readout_axis.is_some() {
            return Err(Failure::usage("the support model takes neither frames nor a readout"));
        }
        return Ok(ModelSpec::Support {
            dims,
            support: support.unwrap_or(SupportSpec::Full {}),
        });
    }
    Ok(match a.frames {
        Some(frames) => {
            if a.readout_axis.is_some() {
                return Err(Failure::usage("a readout axis is not supported with a temporal basis"));
            }
            ModelSpec::CoilsBasis {
                dims,
                coils: a.coils,
                profile: a.profile.into(),
                seed: a.seed,
                support,
                frames,
                coeffs: a.coeffs.unwrap_or(frames),
                order: a.order,
                periodic: a.periodic,
            }
        }
        None => ModelSpec::Coils {
            dims,
            coils: a.coils,
            profile: a.profile.into(),
            seed: a.seed,
            support,
            readout_axis: a.readout_axis,
        },
    })
}

pub fn synth(a: &SynthArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("synth");
    let spec = model_spec(a)?;
    let sens = spec.build()?;
    io::write_sensitivities(&a.out, &sens)?;
    rec.output(&a.out);
    rec.seed(a.seed);
    let results = json!({
        "model": spec,
        "spatial_dims": sens.spatial_dims(),
        "frames": sens.frames(),
        "coeffs": sens.coeffs(),
        "coils": sens.coils(),
        "readout_axis": sens.readout_axis(),
    });
    rec.finish(&manifest_path(manifest, &a.out), results.clone())?;
    print(&results)
}

pub fn compute_w(a: &ComputeWArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("compute-w");
    let sens = read_sens(&a.sens)?;
    rec.input(&a.sens);
    let mut w = kdd_core::compute_w(&sens);
    if sens.readout_axis().is_some() && !a.keep_readout {
        w = kdd_core::collapse_readout(&w)?;
    }
    io::write_weight(&a.out, &w)?;
    rec.output(&a.out);
    let results = json!({
        "dims": w.dims(),
        "frames": w.frames(),
        "collapsed": w.is_collapsed(),
        "symmetry_error": w.symmetry_error(),
    });
    rec.finish(&manifest_path(manifest, &a.out), results.clone())?;
    print(&results)
}

fn parse_quotas(items: &[String], frames: usize) -> CliResult<Option<Vec<usize>>> {
    if items.is_empty() {
        return Ok(None);
    }
    let mut quotas = vec![None; frames];
    for item in items {
        let parsed = item
            .split_once(':')
            .and_then(|(t, n)| Some((t.trim().parse::<usize>().ok()?, n.trim().parse::<usize>().ok()?)));
        let (t, n) = parsed.ok_or_else(|| Failure::usage(format!("quota {item:?} is not t:count")))?;
        if t >= frames {
            return Err(Failure::config(format!("quota frame {t} is outside 0..{frames}")));
        }
        if quotas[t].replace(n).is_some() {
            return Err(Failure::usage(format!("frame {t} has two quotas")));
        }
    }
    quotas
        .into_iter()
        .enumerate()
        .map(|(t, q)| q.ok_or_else(|| Failure::config(format!("frame {t} has no quota"))))
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

/// Runs the greedy design and checks the logged objective against a fresh
/// `⟨w, p⟩`.
fn run_design(w: &WeightFunction, config: &DesignConfig, algorithm: Algorithm, keep: Option<usize>) -> CliResult<(Design, f64)> {
    let design = match algorithm {
        Algorithm::Exact => exact_best_candidate(w, config)?,
        Algorithm::Approx => {
            let keep = keep.map_or(Keep::Fraction(1.0), Keep::Count);
            approx_best_candidate(&threshold_w(w, keep)?, config)?
        }
    };
    let fresh = trace_moment2(w, &dd_fft(&design.pattern))?;
    Ok((design, fresh))
}

fn delta_j_map(delta_j: &DeltaJMap, path: &Path) -> CliResult<Value> {
    let shape = delta_j.shape();
    let [rows, cols] = plane(shape.phase_dims())?;
    let info = io::emit_map(delta_j.values(), &[rows * shape.frames(), cols], None, path)?;
    Ok(serde_json::to_value(info)?)
}

pub fn design(a: &DesignArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("design");
    let w = read_w(&a.w)?;
    rec.input(&a.w);
    rec.seed(a.seed);
    let grid = w.grid()?;
    let config = DesignConfig {
        total: a.n,
        quotas: parse_quotas(&a.quotas, grid.frames())?,
        tie_break: a.tie_break.into(),
        allow_repeats: !a.no_repeats,
        seed: a.seed,
    };
    let algorithm: Algorithm = a.algo.into();
    if a.sparse_keep.is_some() && algorithm == Algorithm::Exact {
        return Err(Failure::usage("--sparse-keep applies to --algo approx only"));
    }
    let (design, fresh) = run_design(&w, &config, algorithm, a.sparse_keep)?;
    io::write_pattern(&a.out, &design.pattern)?;
    rec.output(&a.out);
    let mut results = json!({
        "algorithm": algorithm,
        "samples": design.pattern.total(),
        "acceleration": design.pattern.acceleration(),
        "objective": design.objective,
        "objective_check": fresh,
    });
    if let Some(path) = &a.delta_j {
        results["delta_j_map"] = delta_j_map(&design.delta_j, path)?;
        rec.output(path);
    }
    rec.finish(&manifest_path(manifest, &a.out), results.clone())?;
    print(&results)?;
    if !agrees(design.objective, fresh) {
        return Err(Failure::consistency(format!(
            "design objective {} disagrees with <w, p> = {fresh}",
            design.objective
        )));
    }
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("evaluate");
    let w = read_w(&a.w)?;
    let pattern = read_pattern(&a.pattern)?;
    rec.input(&a.w);
    rec.input(&a.pattern);
    let objective = trace_moment2(&w, &dd_fft(&pattern))?;
    let mut results = json!({
        "samples": pattern.total(),
        "acceleration": pattern.acceleration(),
        "objective": objective,
    });
    if let Some(path) = &a.sens {
        let sens = read_sens(path)?;
        rec.input(path);
        if sens.readout_axis().is_some() {
            return Err(Failure::new(
                Exit::Dimension,
                "the variance bound needs a model without a readout axis",
            ));
        }
        let bound = variance_bound(&sens, &pattern)?;
        results["moment1"] = json!(bound.moment1);
        results["lower_bound"] = json!(bound.lower_bound);
        results["gap"] = json!(bound.gap);
        results["dim"] = json!(bound.dim);
    }
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&results)?)?;
        rec.output(out);
    }
    let primary = a.out.clone().unwrap_or_else(|| a.pattern.clone());
    rec.finish(&manifest_path(manifest, &primary), results.clone())?;
    print(&results)?;
    if let Some(expected) = a.expect {
        if !agrees(objective, expected) {
            return Err(Failure::consistency(format!(
                "objective {objective} differs from the expected {expected}"
            )));
        }
    }
    Ok(())
}

pub fn gfactor(a: &GFactorArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("gfactor");
    let sens = read_sens(&a.sens)?;
    let pattern = read_pattern(&a.pattern)?;
    rec.input(&a.sens);
    rec.input(&a.pattern);
    let model = Model::new(&sens)?;
    let lifted = model.lift(&pattern)?;
    let map = if a.exact {
        exact_gfactor(&model.full, &lifted, a.lambda)?
    } else {
        rec.seed(a.seed);
        let config = GFactorConfig {
            replicas: a.replicas,
            cg: CgConfig {
                lambda: a.lambda,
                ..CgConfig::default()
            },
            seed: a.seed,
        };
        pseudo_replica_gfactor(&model.full, &lifted, &config)?
    };
    let mut dims = vec![map.coeffs()];
    dims.extend(map.dims());
    let mut labels = vec!["l".to_string()];
    labels.extend((0..map.dims().len()).map(|i| format!("r{i}")));
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let header = ArrayHeader::new(&dims, Dtype::Float64, &labels);
    io::write_array(&a.out, &header, &ArrayData::Float64(map.values().to_vec()))?;
    rec.output(&a.out);
    let stats = map.stats()?;
    let mut results = json!({
        "method": if a.exact { "exact" } else { "replicas" },
        "replicas": map.replicas(),
        "lambda": a.lambda,
        "acceleration": map.acceleration(),
        "stats": stats,
    });
    if let Some(path) = &a.pgm {
        let window = match a.window.as_deref() {
            None => None,
            Some(&[lo, hi]) => Some([lo, hi]),
            Some(_) => return Err(Failure::usage("--window takes two values")),
        };
        let info = io::emit_map(map.combined(), &plane(map.dims())?, window, path)?;
        results["map"] = serde_json::to_value(info)?;
        rec.output(path);
    }
    rec.finish(&manifest_path(manifest, &a.out), results.clone())?;
    print(&results)?;
    if !map.values().iter().all(|g| g.is_finite()) {
        return Err(Failure::consistency("g-factor map has non-finite values"));
    }
    Ok(())
}

pub fn caipi(a: &CaipiArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("caipi");
    let w = match (&a.w, &a.sens) {
        (Some(path), _) => {
            rec.input(path);
            read_w(path)?
        }
        (None, Some(path)) => {
            rec.input(path);
            Model::new(&read_sens(path)?)?.w
        }
        (None, None) => return Err(Failure::usage("either --w or --sens is required")),
    };
    let cells = caipi_enumerate(a.r)?;
    let scores = evaluate_periodic(&w, &cells)?;
    let best = scores.first().map(|s| s.objective).unwrap_or(f64::NAN);
    let rows: Vec<Vec<String>> = scores
        .iter()
        .enumerate()
        .map(|(rank, s)| {
            let params = s.cell.caipi();
            let field = |f: fn(&kdd_core::design::CaipiParams) -> usize| {
                params.as_ref().map(|p| f(p).to_string()).unwrap_or_default()
            };
            let period = s.cell.period();
            vec![
                rank.to_string(),
                s.index.to_string(),
                field(|p| p.ry),
                field(|p| p.rz),
                field(|p| p.shift),
                period[0].to_string(),
                period.get(1).copied().unwrap_or(1).to_string(),
                format!("{:.12e}", s.objective),
                format!("{:.9}", s.objective / best),
            ]
        })
        .collect();
    io::emit_csv(
        &a.report,
        &["rank", "index", "ry", "rz", "shift", "period_y", "period_z", "objective", "relative"],
        &rows,
    )?;
    rec.output(&a.report);
    let results = json!({
        "R": a.r,
        "cells": scores.len(),
        "best": scores.first().map(|s| json!({
            "index": s.index,
            "caipi": s.cell.caipi().map(|p| [p.ry, p.rz, p.shift]),
            "objective": s.objective,
        })),
    });
    rec.finish(&manifest_path(manifest, &a.report), results.clone())?;
    print(&results)
}

pub fn power(a: &PowerArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("power");
    let sens = read_sens(&a.sens)?;
    let pattern = read_pattern(&a.pattern)?;
    rec.input(&a.sens);
    rec.input(&a.pattern);
    let model = Model::new(&sens)?;
    let lifted = model.lift(&pattern)?;
    let shape = lifted.shape().clone();
    let p2 = power_function(&model.full, &lifted)?;
    let w_full = kdd_core::compute_w(&model.full);
    let rule = DenseRule::new(&w_full)?;
    let delta_j = DeltaJMap::for_pattern(&rule, &lifted)?;

    let mut dims = vec![shape.frames()];
    dims.extend(shape.phase_dims());
    let header = ArrayHeader::new(&dims, Dtype::Float64, &[]);
    io::write_array(&a.out, &header, &ArrayData::Float64(p2.combined().to_vec()))?;
    rec.output(&a.out);

    let km = kernel(&model.full)?;
    let n = shape.len();
    let k0 = (0..shape.frames())
        .map(|t| (0..km.coils()).map(|c| km.get(c, t, c, t, 0).re).sum::<f64>())
        .fold(0.0, f64::max);
    let mut sampled_max = 0.0f64;
    let (mut dj, mut pw) = (Vec::new(), Vec::new());
    let mut rows = Vec::with_capacity(shape.cells());
    for t in 0..shape.frames() {
        for k in 0..n {
            let v = p2.combined()[t * n + k];
            let d = delta_j.get(k, t);
            let hit = lifted.count(k, t) > 0;
            if hit {
                sampled_max = sampled_max.max(v.abs());
            } else {
                dj.push(d);
                pw.push(v);
            }
            let (ky, kz) = shape.coords(k);
            rows.push(vec![
                ky.to_string(),
                kz.to_string(),
                t.to_string(),
                format!("{d:.12e}"),
                format!("{:.12e}", v.max(0.0)),
                u8::from(hit).to_string(),
            ]);
        }
    }
    if let Some(path) = &a.csv {
        io::emit_csv(path, &["ky", "kz", "t", "delta_j", "p2", "sampled"], &rows)?;
        rec.output(path);
    }
    let rho = spearman(&dj, &pw).ok();
    let results = json!({
        "condition": p2.condition(),
        "p2_max": p2.combined().iter().cloned().fold(0.0, f64::max),
        "p2_sampled_max": sampled_max,
        "kernel_diagonal": k0,
        "spearman_unsampled": rho,
    });
    rec.finish(&manifest_path(manifest, &a.out), results.clone())?;
    print(&results)?;
    if sampled_max > 1e-6 * k0.max(f64::MIN_POSITIVE) {
        return Err(Failure::consistency(format!(
            "power function is {sampled_max:e} at a sampled location"
        )));
    }
    Ok(())
}

fn parse_labelled(items: &[String]) -> CliResult<Vec<(String, PathBuf)>> {
    let mut out: Vec<(String, PathBuf)> = Vec::new();
    for item in items {
        let (label, path) = item
            .split_once('=')
            .filter(|(l, p)| !l.is_empty() && !p.is_empty())
            .ok_or_else(|| Failure::usage(format!("pattern {item:?} is not label=path")))?;
        if out.iter().any(|(l, _)| l == label) {
            return Err(Failure::usage(format!("label {label:?} is used twice")));
        }
        out.push((label.to_string(), PathBuf::from(path)));
    }
    Ok(out)
}

pub fn report(a: &ReportArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("report");
    let sens = read_sens(&a.sens)?;
    rec.input(&a.sens);
    let model = Model::new(&sens)?;
    let mut patterns = Vec::new();
    for (label, path) in parse_labelled(&a.patterns)? {
        patterns.push((label, read_pattern(&path)?, None));
        rec.input(&path);
    }
    let settings = Settings {
        lambda: a.lambda,
        noise: a.noise,
        seed: a.seed,
        g: if a.exact {
            GMethod::Exact
        } else {
            GMethod::Replicas {
                count: a.replicas,
                seed: a.seed,
            }
        },
    };
    rec.seed(a.seed);
    let mut rows = report::evaluate(&model, &patterns, &settings)?;
    let reference = a.reference.clone().unwrap_or_else(|| patterns[0].0.clone());
    report::normalize(&mut rows, &reference)?;
    report::write(&a.out, &rows)?;
    rec.output(&a.out);
    let results = json!({ "reference": reference, "rows": rows });
    rec.finish(&manifest_path(manifest, &a.out), results.clone())?;
    print(&results)
}

/// Integer factor pair of `r` closest to square, or `√r` per axis when `r`
/// is not an integer; the second axis is 1 on a one-dimensional grid.
fn uniform_factors(grid: &GridShape, r: f64) -> [f64; 2] {
    if grid.ndim() == 1 {
        return [r, 1.0];
    }
    let n = r.round() as usize;
    if (r - n as f64).abs() > 1e-9 {
        return [r.sqrt(), r.sqrt()];
    }
    let b = (1..=n).filter(|b| n % b == 0 && b * b <= n).max().unwrap_or(1);
    [(n / b) as f64, b as f64]
}

fn design_config(spec: &DesignSpec, total: usize, frames: usize, even: bool) -> DesignConfig {
    let config = DesignConfig {
        total,
        quotas: None,
        tie_break: spec.tie_break,
        allow_repeats: spec.allow_repeats,
        seed: spec.seed,
    };
    if even {
        config.with_even_quotas(frames)
    } else {
        config
    }
}

pub fn run(a: &RunArgs, manifest: Option<&Path>) -> CliResult<()> {
    let mut rec = Recorder::new("run");
    let config = ExperimentConfig::load(&a.config)?;
    rec.input(&a.config);
    if let ModelSpec::File { path } = &config.model {
        rec.input(path);
    }
    let out = &config.output;
    fs::create_dir_all(out)?;

    let sens = config.model.build()?;
    let sens_path = out.join("sens");
    io::write_sensitivities(&sens_path, &sens)?;
    rec.output(&sens_path);
    let model = Model::new(&sens)?;
    let w_path = out.join("w");
    io::write_weight(&w_path, &model.w)?;
    rec.output(&w_path);

    let grid = model.w.grid()?;
    let total = ((grid.cells() as f64) / config.acceleration).round() as usize;
    let dconfig = design_config(&config.design, total, grid.frames(), config.per_frame_quotas);
    let mut patterns: Vec<(String, SamplingPattern, Option<f64>)> = Vec::new();

    let start = Instant::now();
    let (design, fresh) = run_design(&model.w, &dconfig, config.design.algorithm, config.design.sparse_keep)?;
    let consistent = agrees(design.objective, fresh);
    patterns.push(("min-tr".into(), design.pattern, Some(start.elapsed().as_secs_f64())));
    rec.seed(config.design.seed);
    rec.seed(config.seed);

    for baseline in &config.baselines {
        let start = Instant::now();
        let pattern = match baseline {
            Baseline::Uniform => {
                let [ry, rz] = config.uniform.unwrap_or_else(|| uniform_factors(&grid, config.acceleration));
                uniform_nearest(&grid, ry, rz)?
            }
            Baseline::PoissonDisc => {
                let per_frame = total / grid.frames();
                poisson_disc(&grid, PoissonTarget::Count(per_frame), [1.0, 1.0], config.seed)?.pattern
            }
            Baseline::UniformRandom => uniform_random(&grid, total, config.seed),
            Baseline::GreedyMse => greedy_mse(&sens, &dconfig, Some(config.lambda))?.pattern,
        };
        patterns.push((baseline.label().into(), pattern, Some(start.elapsed().as_secs_f64())));
    }
    for (label, pattern, _) in &patterns {
        let path = out.join(format!("{label}.txt"));
        io::write_pattern(&path, pattern)?;
        rec.output(&path);
    }

    let settings = Settings {
        lambda: config.lambda,
        noise: config.noise,
        seed: config.seed,
        g: GMethod::Replicas {
            count: config.replicas,
            seed: config.seed,
        },
    };
    let mut rows = report::evaluate(&model, &patterns, &settings)?;
    let reference = if config.baselines.contains(&Baseline::Uniform) {
        Baseline::Uniform.label().to_string()
    } else {
        "min-tr".to_string()
    };
    report::normalize(&mut rows, &reference)?;
    let report_path = out.join("report.csv");
    report::write(&report_path, &rows)?;
    rec.output(&report_path);

    let results = json!({
        "total": total,
        "objective": rows[0].tr2,
        "objective_logged": fresh,
        "reference": reference,
        "rows": rows,
    });
    let primary = out.join("manifest.json");
    rec.finish(manifest.unwrap_or(&primary), results.clone())?;
    print(&results)?;
    if !consistent {
        return Err(Failure::consistency("design objective disagrees with <w, p>"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotas_cover_every_frame() {
        let q = parse_quotas(&["1:4".into(), "0:3".into()], 2).unwrap();
        assert_eq!(q, Some(vec![3, 4]));
        assert_eq!(parse_quotas(&[], 2).unwrap(), None);
        assert_eq!(parse_quotas(&["0:3".into()], 2).unwrap_err().exit, Exit::Config);
        assert_eq!(parse_quotas(&["0-3".into()], 2).unwrap_err().exit, Exit::Usage);
        assert_eq!(parse_quotas(&["0:3".into(), "0:1".into()], 1).unwrap_err().exit, Exit::Usage);
    }

    #[test]
    fn uniform_factors_prefer_square_lattices() {
        let g2 = GridShape::new(&[64, 64], 1).unwrap();
        assert_eq!(uniform_factors(&g2, 4.0), [2.0, 2.0]);
        assert_eq!(uniform_factors(&g2, 6.0), [3.0, 2.0]);
        assert_eq!(uniform_factors(&g2, 7.0), [7.0, 1.0]);
        let g1 = GridShape::new(&[64], 1).unwrap();
        assert_eq!(uniform_factors(&g1, 4.0), [4.0, 1.0]);
    }

    #[test]
    fn labelled_patterns_parse() {
        let p = parse_labelled(&["a=x.txt".into(), "b=y=z".into()]).unwrap();
        assert_eq!(p[1], ("b".to_string(), PathBuf::from("y=z")));
        assert!(parse_labelled(&["a".into()]).is_err());
        assert!(parse_labelled(&["a=x".into(), "a=y".into()]).is_err());
    }
}
