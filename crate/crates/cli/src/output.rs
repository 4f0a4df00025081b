use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

/// Files a command writes into its output directory.
pub struct Outputs {
    dir: PathBuf,
    force: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    /// Refuses up front if any planned file exists and `force` is off.
    pub fn new(dir: &Path, planned: &[&str], force: bool) -> Result<Self, CliError> {
        if !force {
            if let Some(p) = planned.iter().map(|n| dir.join(n)).find(|p| p.exists()) {
                return Err(CliError::Exists(p));
            }
        }
        std::fs::create_dir_all(dir).map_err(rbal::Error::from)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            force,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> rbal::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if !self.force && path.exists() {
            return Err(CliError::Exists(path));
        }
        let file = File::create(&path).map_err(|e| rbal::Error::from(e).context(path.display().to_string()))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(rbal::Error::from)?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<PathBuf>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn print(command: &str, config_hash: &str, seed: u64, artifacts: &[PathBuf], started: Instant) {
        let m = RunManifest {
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            artifacts: artifacts.to_vec(),
            duration_s: started.elapsed().as_secs_f64(),
        };
        println!("{}", serde_json::to_string_pretty(&m).expect("manifest serializes"));
    }
}
