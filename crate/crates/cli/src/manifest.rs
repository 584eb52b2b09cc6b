use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// One file read or written by a command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn hash(path: &Path) -> CliResult<Self> {
        let data = std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Ok(Self { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&data)), bytes: data.len() as u64 })
    }
}

/// Record of one command invocation, complete enough to rerun it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub out_dir: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub tool_version: String,
    pub timings_s: BTreeMap<String, f64>,
}

/// Collects artifacts and timings while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, out: &Path, config: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            manifest: RunManifest {
                command: command.into(),
                argv: std::env::args().collect(),
                out_dir: out.display().to_string(),
                config: serde_json::to_value(config)?,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                timings_s: BTreeMap::new(),
            },
            started: Instant::now(),
        })
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.into(), value);
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(Artifact::hash(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.manifest.outputs.push(Artifact::hash(path)?);
        Ok(())
    }

    /// Hash a `.grid` file together with its JSON sidecar.
    pub fn grid_output(&mut self, path: &Path) -> CliResult<()> {
        self.output(path)?;
        self.output(&diffckm::grid::sidecar_path(path))
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.manifest.timings_s.entry(stage.into()).or_default() += t.elapsed().as_secs_f64();
        out
    }

    pub fn finish(mut self, path: &Path) -> CliResult<RunManifest> {
        self.manifest.timings_s.insert("total".into(), self.started.elapsed().as_secs_f64());
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        std::fs::write(path, bytes).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        Ok(self.manifest)
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    Ok(dir.to_path_buf())
}
