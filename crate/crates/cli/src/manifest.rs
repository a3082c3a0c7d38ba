//! Run artefacts: the manifest, the metrics CSV and the final model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedcrypt::fedcore::{write_metrics_csv, RoundRecord};
use fedcrypt::learner::{Architecture, Model};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.cfg";
pub const MODEL_FILE: &str = "model.txt";

/// Fully resolved description of a run. Rendered as a config file with
/// provenance comments, so `fedcrypt run manifest.cfg` repeats the run.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn metrics_path(&self) -> PathBuf {
        self.out_dir.join(METRICS_FILE)
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join(MODEL_FILE)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join(MANIFEST_FILE)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# fedcrypt {VERSION} run manifest");
        let _ = writeln!(s, "# seed: {}", self.config.fed.master_seed);
        let _ = writeln!(s, "# backend: {}", self.config.fed.he_backend);
        let _ = writeln!(s, "# metrics: {}", self.metrics_path().display());
        let _ = writeln!(s, "# model: {}", self.model_path().display());
        s.push_str(&self.config.render());
        s
    }

    pub fn write(&self) -> CliResult<()> {
        let path = self.manifest_path();
        std::fs::write(&path, self.render()).map_err(CliError::io(path))
    }
}

pub fn write_metrics(path: &Path, records: &[RoundRecord]) -> CliResult<()> {
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, records)?;
    std::fs::write(path, buf).map_err(CliError::io(path))
}

/// Text model format: a few `key = value` header lines, a blank line, then
/// one parameter per line.
pub fn render_model(model: &Model) -> String {
    let mut s = String::new();
    match model.arch {
        Architecture::Logistic { features, classes } => {
            let _ = writeln!(s, "model = logistic\nfeatures = {features}\nclasses = {classes}");
        }
        Architecture::Mlp { features, hidden, classes } => {
            let _ = writeln!(s, "model = mlp\nfeatures = {features}\nhidden = {hidden}\nclasses = {classes}");
        }
    }
    let _ = writeln!(s, "params = {}\n", model.params.len());
    for p in model.params.iter() {
        let _ = writeln!(s, "{p}");
    }
    s
}

pub fn write_model(path: &Path, model: &Model) -> CliResult<()> {
    std::fs::write(path, render_model(model)).map_err(CliError::io(path))
}
