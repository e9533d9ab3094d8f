use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use slrl_core::data::{load_dataset, normalize, synth_multiview, MultiViewDataset, SynthSpec};
use slrl_core::train::TrainConfig;

use crate::error::{CliError, CliResult};

pub const FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Dir { path: PathBuf },
    Synth { spec: SynthSpec },
}

impl DataSource {
    /// Loads or generates the views, then min-max normalizes them.
    pub fn load(&self) -> CliResult<MultiViewDataset> {
        let raw = match self {
            DataSource::Dir { path } => load_dataset(path)?,
            DataSource::Synth { spec } => synth_multiview(spec)?,
        };
        Ok(normalize(&raw))
    }
}

/// Everything needed to re-execute a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Train { data: DataSource, config: TrainConfig, repeats: usize },
    Sweep { data: DataSource, config: TrainConfig, repeats: usize, gammas: Vec<f64>, ks: Vec<usize> },
    Ablate { data: DataSource, config: TrainConfig, repeats: usize },
    Gradcheck { data: DataSource, config: TrainConfig },
    Synth { spec: SynthSpec, binary: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub invocation: Invocation,
    pub out: PathBuf,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub exit_code: Option<u8>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(invocation: Invocation, out: &Path) -> Self {
        RunManifest {
            invocation,
            out: out.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
            exit_code: None,
        }
    }

    /// Creates the output directory and writes the manifest into it.
    pub fn write(&self) -> CliResult {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(FILE);
        let json = serde_json::to_string_pretty(self).context("serializing manifest")?;
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn finish(mut self, code: u8) -> CliResult {
        self.finished_at = Some(now());
        self.exit_code = Some(code);
        self.write()
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("bad manifest {}: {e}", path.display())))
    }
}
