//! Pipeline stages behind the `dataprice` command. Every stage writes into
//! its own directory under the configured output directory, next to a
//! manifest recording the config hash, input hashes and versions.

pub mod config;
pub mod manifest;
pub mod stages;

use config::RunConfig;
use manifest::{sha256_file, versions, Manifest};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("missing artifact {artifact}: run `dataprice {command}` first")]
    Missing { artifact: String, command: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    /// Process exit code: 1 for bad configuration or artifacts, 2 for
    /// failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Missing { .. } => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Wrote(usize),
    UpToDate,
}

/// A loaded configuration plus the stage bookkeeping shared by all commands.
pub struct Context {
    pub config: RunConfig,
    pub config_hash: String,
    /// Recompute even when the manifest says the outputs are current.
    pub force: bool,
}

impl Context {
    pub fn new(config: RunConfig, force: bool) -> Self {
        let config_hash = config.hash();
        Self { config, config_hash, force }
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.config.out_dir.join(stage)
    }

    /// Path of an artifact written by `stage`, or an error naming the command
    /// that produces it.
    pub fn require(&self, stage: &str, file: &str) -> Result<PathBuf, CliError> {
        let p = self.stage_dir(stage).join(file);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::Missing { artifact: p.display().to_string(), command: stage.to_string() })
        }
    }

    /// Run `body` unless the stage manifest already matches the current config
    /// and inputs. `body` writes into the (emptied) stage directory and
    /// returns the names of the files it wrote.
    pub fn run_stage(
        &self,
        stage: &str,
        inputs: &[(String, PathBuf)],
        body: impl FnOnce(&Path) -> Result<Vec<String>, CliError>,
    ) -> Result<Outcome, CliError> {
        let dir = self.stage_dir(stage);
        let mut input_hashes = BTreeMap::new();
        for (role, path) in inputs {
            input_hashes.insert(role.clone(), sha256_file(path)?);
        }
        if !self.force {
            if let Some(m) = Manifest::load(&dir) {
                if m.config_hash == self.config_hash
                    && m.inputs == input_hashes
                    && m.versions == versions()
                    && m.outputs_intact(&dir)
                {
                    println!("{stage}: up-to-date ({})", dir.display());
                    return Ok(Outcome::UpToDate);
                }
            }
        }
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        log::info!("{stage}: running");
        let files = body(&dir)?;
        let mut outputs = BTreeMap::new();
        for f in &files {
            outputs.insert(f.clone(), sha256_file(&dir.join(f))?);
        }
        let manifest = Manifest {
            stage: stage.to_string(),
            config_hash: self.config_hash.clone(),
            inputs: input_hashes,
            outputs,
            versions: versions(),
        };
        manifest.save(&dir)?;
        println!("{stage}: wrote {} files to {}", files.len(), dir.display());
        Ok(Outcome::Wrote(files.len()))
    }
}

/// Write `contents` to `dir/name` and return `name`, for stage bodies.
pub fn write_output(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<String, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(name.to_string())
}
