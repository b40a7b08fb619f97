//! Run directory bookkeeping: every command writes only below one directory,
//! described by `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Completed,
    Failed,
}

/// The command and its arguments, with config overrides already folded into
/// [`Manifest::config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    Train,
    Eval {
        checkpoint: Option<PathBuf>,
        oracle: bool,
        trials: u32,
        base_seed: u64,
        generalization: bool,
    },
    Sweep {
        arrangements: Vec<String>,
        weights: Vec<f64>,
        seeds: Vec<u64>,
        total_epochs: u32,
        eval_trials: u32,
        eval_base_seed: u64,
    },
    Demo {
        checkpoint: Option<PathBuf>,
        oracle: bool,
        episodes: u32,
        seed: u64,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Train => "train",
            Invocation::Eval { .. } => "eval",
            Invocation::Sweep { .. } => "sweep",
            Invocation::Demo { .. } => "demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub env: u64,
    pub ppo: u64,
    pub eval_base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub invocation: Invocation,
    /// Full resolved config tree, overrides applied.
    pub config: toml::Table,
    /// Overrides as given on the command line, for reference only.
    pub overrides: Vec<String>,
    pub seeds: Seeds,
    pub threads: Option<usize>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: Status,
    pub error: Option<String>,
    /// Artifact name to path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

pub struct RunDir {
    pub path: PathBuf,
    pub manifest: Manifest,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// `runs/<command>-<utc timestamp>` under the working directory.
pub fn default_run_path(command: &str) -> PathBuf {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    PathBuf::from("runs").join(format!("{command}-{stamp}"))
}

impl RunDir {
    /// Create the directory (it must be absent or empty) and write the
    /// initial manifest and config snapshot.
    pub fn create(
        path: &Path,
        invocation: Invocation,
        config: toml::Table,
        overrides: Vec<String>,
        seeds: Seeds,
        threads: Option<usize>,
    ) -> Result<RunDir> {
        if path.exists() {
            let mut entries = std::fs::read_dir(path).with_context(|| format!("reading {}", path.display()))?;
            if entries.next().is_some() {
                bail!("run directory {} is not empty", path.display());
            }
        }
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        let run_id = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let mut run = RunDir {
            path: path.to_path_buf(),
            manifest: Manifest {
                run_id,
                invocation,
                config,
                overrides,
                seeds,
                threads,
                started_at: now(),
                finished_at: None,
                status: Status::Running,
                error: None,
                artifacts: BTreeMap::new(),
            },
        };
        let snapshot = toml::to_string_pretty(&run.manifest.config).context("serializing config")?;
        std::fs::write(run.file("config.toml"), snapshot)?;
        run.add_artifact("config", "config.toml");
        run.save()?;
        Ok(run)
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn add_artifact(&mut self, name: &str, rel: &str) {
        self.manifest.artifacts.insert(name.into(), rel.into());
    }

    pub fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(self.file(MANIFEST_FILE), text + "\n")
            .with_context(|| format!("writing manifest in {}", self.path.display()))
    }

    pub fn finish(&mut self, outcome: &Result<()>) -> Result<()> {
        self.manifest.finished_at = Some(now());
        match outcome {
            Ok(()) => self.manifest.status = Status::Completed,
            Err(e) => {
                self.manifest.status = Status::Failed;
                self.manifest.error = Some(format!("{e:#}"));
            }
        }
        self.save()
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
