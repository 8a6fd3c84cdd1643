//! JSON experiment configuration for `kdd run`.

use std::path::{Path, PathBuf};

use kdd_core::{
    from_coils, from_coils_and_basis, from_support, spline_basis, synthetic_coils, CoilProfile,
    SensitivitySet, SupportMask, TieBreak,
};
use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SupportSpec {
    Full {},
    /// Plane-tiling cross; both sizes must be multiples of 8.
    Cross {},
    Ellipse {
        /// Semi-axes as fractions of the grid size.
        semi: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    File {
        path: PathBuf,
    },
}

impl SupportSpec {
    pub fn build(&self, dims: &[usize]) -> CliResult<SupportMask> {
        let plane = || -> CliResult<(usize, usize)> {
            match dims {
                [ny, nz] => Ok((*ny, *nz)),
                _ => Err(Failure::config(format!("support shape needs a 2D grid, got {dims:?}"))),
            }
        };
        Ok(match self {
            SupportSpec::Full {} => SupportMask::full(dims)?,
            SupportSpec::Cross {} => {
                let (ny, nz) = plane()?;
                SupportMask::tiling_cross(ny, nz)?
            }
            SupportSpec::Ellipse { semi, angle } => {
                let (ny, nz) = plane()?;
                SupportMask::ellipse(ny, nz, semi[0], semi[1], *angle)?
            }
            SupportSpec::File { path } => kdd_core::io::read_mask(path)?,
        })
    }
}

fn default_coils() -> usize {
    8
}

fn default_order() -> usize {
    3
}

/// Where the sensitivity model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Indicator of an object support, one coil.
    Support { dims: Vec<usize>, support: SupportSpec },
    /// Synthetic receive coils, optionally restricted to a support.
    Coils {
        dims: Vec<usize>,
        #[serde(default = "default_coils")]
        coils: usize,
        #[serde(default = "default_profile")]
        profile: CoilProfile,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        support: Option<SupportSpec>,
        #[serde(default)]
        readout_axis: Option<usize>,
    },
    /// Synthetic coils times a B-spline temporal basis.
    #[serde(rename = "coils+basis")]
    CoilsBasis {
        dims: Vec<usize>,
        #[serde(default = "default_coils")]
        coils: usize,
        #[serde(default = "default_profile")]
        profile: CoilProfile,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        support: Option<SupportSpec>,
        frames: usize,
        coeffs: usize,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default)]
        periodic: bool,
    },
    /// A sensitivity container written earlier.
    File { path: PathBuf },
}

fn default_profile() -> CoilProfile {
    CoilProfile::Gaussian
}

impl ModelSpec {
    pub fn build(&self) -> CliResult<SensitivitySet> {
        let coil_maps = |dims: &[usize], coils, profile, seed, support: &Option<SupportSpec>| -> CliResult<_> {
            let maps = synthetic_coils(dims, coils, profile, seed)?;
            Ok(match support {
                Some(s) => maps.masked(&s.build(dims)?)?,
                None => maps,
            })
        };
        Ok(match self {
            ModelSpec::Support { dims, support } => from_support(&support.build(dims)?)?,
            ModelSpec::Coils {
                dims,
                coils,
                profile,
                seed,
                support,
                readout_axis,
            } => {
                let sens = from_coils(&coil_maps(dims, *coils, *profile, *seed, support)?)?;
                sens.with_readout(*readout_axis)?
            }
            ModelSpec::CoilsBasis {
                dims,
                coils,
                profile,
                seed,
                support,
                frames,
                coeffs,
                order,
                periodic,
            } => {
                let basis = spline_basis(*frames, *coeffs, *order, *periodic)?;
                from_coils_and_basis(&coil_maps(dims, *coils, *profile, *seed, support)?, &basis)?
            }
            ModelSpec::File { path } => kdd_core::io::read_sensitivities(path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Exact,
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Entries of `w` kept for the approximate algorithm; all when absent.
    #[serde(default)]
    pub sparse_keep: Option<usize>,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub allow_repeats: bool,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Exact
}

fn default_true() -> bool {
    true
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            algorithm: Algorithm::Exact,
            sparse_keep: None,
            tie_break: TieBreak::Lexicographic,
            seed: 0,
            allow_repeats: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Uniform,
    PoissonDisc,
    UniformRandom,
    GreedyMse,
}

impl Baseline {
    pub fn label(self) -> &'static str {
        match self {
            Baseline::Uniform => "uniform",
            Baseline::PoissonDisc => "poisson-disc",
            Baseline::UniformRandom => "uniform-random",
            Baseline::GreedyMse => "greedy-mse",
        }
    }
}

fn default_lambda() -> f64 {
    1e-4
}

fn default_replicas() -> usize {
    100
}

fn default_noise() -> f64 {
    1e-2
}

fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::Uniform, Baseline::PoissonDisc]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Cells over samples, `N·T / total`.
    pub acceleration: f64,
    /// Split samples evenly over frames.
    #[serde(default)]
    pub per_frame_quotas: bool,
    #[serde(default)]
    pub design: DesignSpec,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
    /// Reduction factors of the uniform baseline; chosen from the
    /// acceleration when absent.
    #[serde(default)]
    pub uniform: Option<[f64; 2]>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// Noise level of the phantom reconstruction, relative to the phantom peak.
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::from(e).context(path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.acceleration >= 1.0) {
            return Err(Failure::config(format!(
                "acceleration {} must be at least 1",
                self.acceleration
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Failure::config(format!("lambda {} must be positive", self.lambda)));
        }
        if self.replicas < 2 {
            return Err(Failure::config("at least two replicas are needed"));
        }
        if !(self.noise >= 0.0) {
            return Err(Failure::config(format!("noise {} must be nonnegative", self.noise)));
        }
        if let Some([ry, rz]) = self.uniform {
            if !(ry >= 1.0 && rz >= 1.0) {
                return Err(Failure::config("uniform reduction factors must be at least 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"model": {"source": "support", "dims": [8, 8], "support": {"shape": "full"}},
                      "acceleration": 2, "output": "x", "colour": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
        let nested = r#"{"model": {"source": "support", "dims": [8, 8], "support": {"shape": "full", "r": 1}},
                        "acceleration": 2, "output": "x"}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(nested).is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let text = r#"{"model": {"source": "coils", "dims": [16, 16]}, "acceleration": 4, "output": "out"}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.lambda, 1e-4);
        assert_eq!(c.replicas, 100);
        assert_eq!(c.design, DesignSpec::default());
        assert_eq!(c.baselines, vec![Baseline::Uniform, Baseline::PoissonDisc]);
        let sens = c.model.build().unwrap();
        assert_eq!(sens.coils(), 8);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = r#"{"model": {"source": "coils", "dims": [16, 16]}, "acceleration": 0.5, "output": "out"}"#;
        let c: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.validate().unwrap_err().exit, crate::failure::Exit::Config);
    }
}
