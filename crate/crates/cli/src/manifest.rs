//! Run manifests: everything needed to repeat a command bit for bit.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::failure::CliResult;

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub threads: usize,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub seeds: Vec<u64>,
    pub wall_time_s: f64,
    pub results: Value,
}

fn digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Array containers are recorded through both of their files.
fn expand(path: &Path) -> Vec<PathBuf> {
    let container = matches!(path.extension().and_then(|e| e.to_str()), Some("json" | "raw"));
    if path.exists() && !container {
        return vec![path.to_path_buf()];
    }
    let (json, raw) = kdd_core::io::container_paths(path);
    [json, raw].into_iter().filter(|p| p.exists()).collect()
}

pub struct Recorder {
    command: String,
    start: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seeds: Vec<u64>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Recorder {
            command: command.to_string(),
            start: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn seed(&mut self, seed: u64) {
        self.seeds.push(seed);
    }

    fn records(paths: &[PathBuf]) -> CliResult<Vec<FileRecord>> {
        let mut out = Vec::new();
        for p in paths.iter().flat_map(|p| expand(p)) {
            out.push(FileRecord {
                path: p.display().to_string(),
                sha256: digest(&p)?,
            });
        }
        Ok(out)
    }

    pub fn finish(self, path: &Path, results: Value) -> CliResult<()> {
        let manifest = Manifest {
            tool: "kdd",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            args: std::env::args().collect(),
            threads: rayon::current_num_threads(),
            inputs: Self::records(&self.inputs)?,
            outputs: Self::records(&self.outputs)?,
            seeds: self.seeds,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            results,
        };
        fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// `<output>.manifest.json` unless a path is given.
pub fn manifest_path(explicit: Option<&Path>, primary: &Path) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = primary.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
    }
}
