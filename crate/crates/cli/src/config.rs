//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown and repeated keys are rejected. Every key except `clients`,
//! `participants` and `rounds` has a default; [`RunConfig::render`] writes
//! all of them back out, so a rendered config reproduces the run exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedcrypt::fedcore::{FedConfig, FederatedData, Pipeline};
use fedcrypt::learner::{load_idx, partition, synth_blobs, Architecture, Dataset};
use fedcrypt::rng::{derive_stream, Purpose};

use crate::error::{CliError, CliResult};

/// Environment variable that replaces `master_seed`.
pub const SEED_ENV: &str = "FEDCRYPT_SEED";

const KEYS: &[&str] = &[
    "clients",
    "participants",
    "rounds",
    "sigma",
    "clip_s",
    "delta",
    "max_moment_order",
    "scale_s",
    "bits_b",
    "guard_bits",
    "noise_bound",
    "local_epochs",
    "learning_rate",
    "batch_size",
    "master_seed",
    "he_backend",
    "key_bits",
    "clip",
    "noise",
    "quantize",
    "modulo",
    "model",
    "hidden",
    "dataset",
    "synth_per_client",
    "synth_classes",
    "synth_features",
    "synth_spread",
    "synth_skew",
    "eval_size",
    "idx_train_images",
    "idx_train_labels",
    "idx_eval_images",
    "idx_eval_labels",
];

const SYNTH_KEYS: &[&str] =
    &["synth_per_client", "synth_classes", "synth_features", "synth_spread", "synth_skew", "eval_size"];
const IDX_KEYS: &[&str] = &["idx_train_images", "idx_train_labels", "idx_eval_images", "idx_eval_labels"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logistic,
    Mlp { hidden: usize },
}

impl ModelKind {
    pub fn architecture(&self, features: usize, classes: usize) -> Architecture {
        match *self {
            ModelKind::Logistic => Architecture::Logistic { features, classes },
            ModelKind::Mlp { hidden } => Architecture::Mlp { features, hidden, classes },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    /// Gaussian blobs; client `k` over-samples class `k mod classes` by `skew`.
    Synth { per_client: usize, classes: usize, features: usize, spread: f64, skew: f64, eval_size: usize },
    /// Training set split evenly across clients, separate evaluation set.
    Idx { train_images: PathBuf, train_labels: PathBuf, eval_images: PathBuf, eval_labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `fed.model` is a placeholder until [`RunConfig::load`] has seen the data.
    pub fed: FedConfig,
    pub model: ModelKind,
    pub data: DataSpec,
}

struct Entries {
    path: PathBuf,
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn err(&self, line: usize, msg: impl Into<String>) -> CliError {
        CliError::Config { path: self.path.clone(), line, msg: msg.into() }
    }

    fn take<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse()
                .map(Some)
                .map_err(|e| self.err(line, format!("invalid value '{raw}' for {key}: {e}"))),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&mut self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?.ok_or_else(|| self.err(0, format!("missing required key '{key}'")))
    }

    fn flag(&mut self, key: &str, default: bool) -> CliResult<bool> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, raw)) => match raw.as_str() {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                _ => Err(self.err(line, format!("invalid value '{raw}' for {key}: expected true or false"))),
            },
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> CliResult<PathBuf> {
        let p: PathBuf = self.required(key)?;
        Ok(if p.is_relative() { base.join(p) } else { p })
    }

    fn reject(&self, keys: &[&str], why: &str) -> CliResult<()> {
        for k in keys {
            if let Some((line, _)) = self.map.get(*k) {
                return Err(self.err(*line, format!("key '{k}' {why}")));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parse config text. `origin` labels error messages; relative IDX paths
    /// resolve against `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> CliResult<Self> {
        let mut e = Entries { path: origin.to_path_buf(), map: BTreeMap::new() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| e.err(line, format!("expected 'key = value', found '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(e.err(line, format!("unknown key '{key}'")));
            }
            if value.is_empty() {
                return Err(e.err(line, format!("empty value for {key}")));
            }
            if let Some((first, _)) = e.map.get(key) {
                return Err(e.err(line, format!("duplicate key '{key}' (first set on line {first})")));
            }
            e.map.insert(key.to_string(), (line, value.to_string()));
        }

        let line_of = |e: &Entries, k: &str| e.map.get(k).map_or(0, |(l, _)| *l);
        let model_line = line_of(&e, "model");
        let model = match e.take_or::<String>("model", "logistic".into())?.as_str() {
            "logistic" => {
                e.reject(&["hidden"], "only applies to model = mlp")?;
                ModelKind::Logistic
            }
            "mlp" => ModelKind::Mlp { hidden: e.take_or("hidden", 32)? },
            other => return Err(e.err(model_line, format!("unknown model '{other}' (expected logistic or mlp)"))),
        };
        let clients: usize = e.required("clients")?;
        let dataset_line = line_of(&e, "dataset");
        let data = match e.take_or::<String>("dataset", "synth".into())?.as_str() {
            "synth" => {
                e.reject(IDX_KEYS, "only applies to dataset = idx")?;
                DataSpec::Synth {
                    per_client: e.take_or("synth_per_client", 60)?,
                    classes: e.take_or("synth_classes", 4)?,
                    features: e.take_or("synth_features", 20)?,
                    spread: e.take_or("synth_spread", 0.15)?,
                    skew: e.take_or("synth_skew", 0.5)?,
                    eval_size: e.take_or("eval_size", 2000)?,
                }
            }
            "idx" => {
                e.reject(SYNTH_KEYS, "only applies to dataset = synth")?;
                DataSpec::Idx {
                    train_images: e.path("idx_train_images", base)?,
                    train_labels: e.path("idx_train_labels", base)?,
                    eval_images: e.path("idx_eval_images", base)?,
                    eval_labels: e.path("idx_eval_labels", base)?,
                }
            }
            other => return Err(e.err(dataset_line, format!("unknown dataset '{other}' (expected synth or idx)"))),
        };

        let placeholder = Architecture::Logistic { features: 1, classes: 2 };
        let mut fed = FedConfig::new(clients, e.required("participants")?, e.required("rounds")?, placeholder);
        fed.sigma = e.take_or("sigma", fed.sigma)?;
        fed.clip_s = e.take_or("clip_s", fed.clip_s)?;
        fed.delta = e.take_or("delta", fed.delta)?;
        fed.max_moment_order = e.take_or("max_moment_order", fed.max_moment_order)?;
        fed.scale_s = e.take_or("scale_s", fed.scale_s)?;
        fed.bits_b = e.take_or("bits_b", fed.bits_b)?;
        fed.guard_bits = e.take_or("guard_bits", fed.guard_bits)?;
        fed.noise_bound = e.take_or("noise_bound", fed.noise_bound)?;
        fed.local_epochs = e.take_or("local_epochs", fed.local_epochs)?;
        fed.learning_rate = e.take_or("learning_rate", fed.learning_rate)?;
        fed.batch_size = e.take_or("batch_size", fed.batch_size)?;
        fed.master_seed = e.take_or("master_seed", fed.master_seed)?;
        fed.he_backend = e.take_or("he_backend", fed.he_backend)?;
        fed.key_bits = e.take_or("key_bits", fed.key_bits)?;
        fed.pipeline = Pipeline {
            clip: e.flag("clip", true)?,
            noise: e.flag("noise", true)?,
            quantize: e.flag("quantize", true)?,
            modulo: e.flag("modulo", true)?,
        };
        debug_assert!(e.map.is_empty(), "unconsumed keys: {:?}", e.map.keys());

        let cfg = RunConfig { fed, model, data };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> CliResult<()> {
        if let DataSpec::Synth { per_client, classes, features, .. } = self.data {
            if per_client == 0 || classes < 2 || features == 0 {
                return Err(CliError::Usage(
                    "synthetic data needs synth_per_client >= 1, synth_classes >= 2, synth_features >= 1".into(),
                ));
            }
        }
        if let ModelKind::Mlp { hidden: 0 } = self.model {
            return Err(CliError::Usage("hidden must be >= 1".into()));
        }
        self.fed.validate()?;
        Ok(())
    }

    /// Apply `FEDCRYPT_SEED` if set.
    pub fn apply_seed_override(&mut self) -> CliResult<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.fed.master_seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned 64-bit integer, got '{raw}'")))?;
        }
        Ok(())
    }

    /// Materialise the client shards and evaluation set, and fix the model
    /// architecture to the data's shape.
    pub fn load(&self) -> CliResult<(FedConfig, FederatedData)> {
        let mut fed = self.fed.clone();
        let mut rng = derive_stream(fed.master_seed, Purpose::Data, 0, 0);
        let data = match &self.data {
            DataSpec::Synth { per_client, classes, features, spread, skew, eval_size } => {
                let (task, shards) =
                    synth_blobs(&mut rng, fed.clients, *per_client, *classes, *features, *spread, *skew)?;
                let eval = task.sample_balanced(&mut rng, *eval_size);
                FederatedData { shards, eval }
            }
            DataSpec::Idx { train_images, train_labels, eval_images, eval_labels } => {
                let train = load_idx(train_images, train_labels)?;
                let eval = load_idx(eval_images, eval_labels)?;
                if train.num_features() != eval.num_features() {
                    return Err(CliError::Usage("training and evaluation images differ in size".into()));
                }
                let classes = train.num_classes().max(eval.num_classes());
                let widen = |d: Dataset| Dataset::new(d.features().to_vec(), d.labels().to_vec(), d.num_features(), classes);
                let train = widen(train)?;
                let eval = widen(eval)?;
                FederatedData { shards: partition(&train, fed.clients, &mut rng)?, eval }
            }
        };
        let shape = &data.eval;
        fed.model = self.model.architecture(shape.num_features(), shape.num_classes());
        fed.validate()?;
        Ok((fed, data))
    }

    /// Every setting, in the config syntax.
    pub fn render(&self) -> String {
        let f = &self.fed;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("clients", &f.clients);
        kv("participants", &f.participants);
        kv("rounds", &f.rounds);
        kv("sigma", &f.sigma);
        kv("clip_s", &f.clip_s);
        kv("delta", &f.delta);
        kv("max_moment_order", &f.max_moment_order);
        kv("scale_s", &f.scale_s);
        kv("bits_b", &f.bits_b);
        kv("guard_bits", &f.guard_bits);
        kv("noise_bound", &f.noise_bound);
        kv("local_epochs", &f.local_epochs);
        kv("learning_rate", &f.learning_rate);
        kv("batch_size", &f.batch_size);
        kv("master_seed", &f.master_seed);
        kv("he_backend", &f.he_backend);
        kv("key_bits", &f.key_bits);
        kv("clip", &f.pipeline.clip);
        kv("noise", &f.pipeline.noise);
        kv("quantize", &f.pipeline.quantize);
        kv("modulo", &f.pipeline.modulo);
        match self.model {
            ModelKind::Logistic => kv("model", &"logistic"),
            ModelKind::Mlp { hidden } => {
                kv("model", &"mlp");
                kv("hidden", &hidden);
            }
        }
        match &self.data {
            DataSpec::Synth { per_client, classes, features, spread, skew, eval_size } => {
                kv("dataset", &"synth");
                kv("synth_per_client", per_client);
                kv("synth_classes", classes);
                kv("synth_features", features);
                kv("synth_spread", spread);
                kv("synth_skew", skew);
                kv("eval_size", eval_size);
            }
            DataSpec::Idx { train_images, train_labels, eval_images, eval_labels } => {
                kv("dataset", &"idx");
                kv("idx_train_images", &train_images.display());
                kv("idx_train_labels", &train_labels.display());
                kv("idx_eval_images", &eval_images.display());
                kv("idx_eval_labels", &eval_labels.display());
            }
        }
        s
    }
}
