//! Run manifest: everything needed to reproduce a CLI invocation,
//! written atomically next to the outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand plus its arguments, as parsed.
    pub command: String,
    pub config: SolverConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    /// Build identifier (git describe at compile time, or "unknown").
    pub build: String,
    /// Wall-clock seconds per phase.
    pub phases: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: SolverConfig, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            build: option_env!("SEQSR_GIT_DESCRIBE").unwrap_or("unknown").into(),
            phases: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Time a phase and record its wall clock.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.phases
            .push((name.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    /// Record an externally timed phase.
    pub fn record_phase(&mut self, name: &str, start: Instant) {
        self.phases
            .push((name.to_string(), start.elapsed().as_secs_f64()));
    }

    /// Serialize to `manifest.json` in `dir`: write to a temporary file
    /// first, then rename into place.
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf> {
        let target = dir.join("manifest.json");
        let tmp = dir.join(".manifest.json.tmp");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
        std::fs::write(&tmp, text)
            .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        std::fs::rename(&tmp, &target)
            .map_err(|e| Error::io(format!("renaming into {}", target.display()), e))?;
        Ok(target)
    }
}
