use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fedcrypt::accountant::{
    collusion_adjusted_sigma, compose, epsilon_with_order, moment_profile, participant_view_sigma,
    residual_noise_sigma, PrivacyParams,
};
use fedcrypt::fedcore::{run_training_with, RoundContext, TrainingRun};
use fedcrypt::he::paillier::{self, PublicKey, SecretKey};
use fedcrypt::he::serial::{read_public_key, read_secret_key, write_public_key, write_secret_key};
use fedcrypt::he::{Backend, KeyMaterial};
use fedcrypt::rng::{derive_stream, Purpose};
use fedcrypt::sampling::{sampler_bound, SamplerBoundSpec, ZIGGURAT_X_TAIL_ROUNDED};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_metrics, write_model, RunManifest};

pub const PUBLIC_KEY_FILE: &str = "public.key";
pub const SECRET_KEY_FILE: &str = "secret.key";
/// Smallest key accepted without `--insecure-test-mode`.
pub const MIN_SECURE_KEY_BITS: u64 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRow {
    pub view: &'static str,
    pub sigma: f64,
    pub epsilon: f64,
    pub order: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountantQuery {
    pub sigma: f64,
    pub clip_s: f64,
    pub q: f64,
    /// Participants per round, for the participant views.
    pub k: Option<usize>,
    pub rounds: u64,
    pub delta: f64,
    pub chi: Option<f64>,
    pub max_order: u32,
}

impl AccountantQuery {
    /// Resolve `q` from either `--q` or `--K`/`--M`; both must agree if given.
    pub fn resolve_q(q: Option<f64>, k: Option<usize>, m: Option<usize>) -> CliResult<f64> {
        let from_km = match (k, m) {
            (Some(k), Some(m)) if m == 0 || k > m => {
                return Err(CliError::Usage(format!("need 1 <= K <= M, got K={k} M={m}")))
            }
            (Some(k), Some(m)) => Some(k as f64 / m as f64),
            (None, Some(_)) => return Err(CliError::Usage("--M needs --K".into())),
            _ => None,
        };
        match (q, from_km) {
            (Some(q), Some(r)) if (q - r).abs() > 1e-12 => {
                Err(CliError::Usage(format!("--q {q} disagrees with K/M = {r}")))
            }
            (Some(q), _) => Ok(q),
            (None, Some(r)) => Ok(r),
            (None, None) => Err(CliError::Usage("give --q, or --K and --M".into())),
        }
    }

    fn epsilon(&self, sigma: f64) -> CliResult<(f64, u32)> {
        let params = PrivacyParams::new(sigma, self.clip_s, self.q, self.rounds, self.delta)?
            .with_max_order(self.max_order)?;
        let profile = compose(&moment_profile(&params)?, self.rounds)?;
        Ok(epsilon_with_order(&profile, self.delta))
    }

    /// End-user ε, then the participant views when `K ≥ 2` is known, then
    /// the collusion-adjusted ε when `chi` is set.
    pub fn report(&self) -> CliResult<Vec<EpsilonRow>> {
        let mut sigmas = vec![("end_user", self.sigma)];
        if let Some(k) = self.k.filter(|&k| k >= 2) {
            sigmas.push(("participant", residual_noise_sigma(self.sigma, k)?));
            sigmas.push(("participant_conservative", participant_view_sigma(self.sigma, k)?));
        }
        if let Some(chi) = self.chi {
            sigmas.push(("collusion", collusion_adjusted_sigma(self.sigma, chi)?));
        }
        sigmas
            .into_iter()
            .map(|(view, sigma)| {
                let (epsilon, order) = self.epsilon(sigma)?;
                Ok(EpsilonRow { view, sigma, epsilon, order })
            })
            .collect()
    }
}

pub fn accountant(query: &AccountantQuery, csv: bool, out: &mut dyn Write) -> CliResult<()> {
    let rows = query.report()?;
    if csv {
        writeln!(out, "view,sigma,q,rounds,delta,epsilon,order")?;
        for r in &rows {
            writeln!(out, "{},{},{},{},{},{},{}", r.view, r.sigma, query.q, query.rounds, query.delta, r.epsilon, r.order)?;
        }
        return Ok(());
    }
    writeln!(
        out,
        "sigma = {}, S = {}, q = {:.6}, T = {}, delta = {:e}",
        query.sigma, query.clip_s, query.q, query.rounds, query.delta
    )?;
    for r in &rows {
        let label = match r.view {
            "end_user" => "end-user",
            "participant" => "participant",
            "participant_conservative" => "participant (conservative)",
            _ => "collusion-adjusted",
        };
        writeln!(out, "{label:<28} epsilon = {:.4}  (sigma = {:.4}, order {})", r.epsilon, r.sigma, r.order)?;
    }
    if query.k.is_none() {
        writeln!(out, "pass --K to also report the participant view")?;
    }
    Ok(())
}

pub fn bounds(n_bits: u32, x_tail: f64, out: &mut dyn Write) -> CliResult<()> {
    writeln!(out, "algorithm,n_bits,bound")?;
    for spec in [
        SamplerBoundSpec::box_muller_cartesian(n_bits),
        SamplerBoundSpec::box_muller_polar(n_bits),
        SamplerBoundSpec::ziggurat(n_bits, x_tail),
    ] {
        let b = sampler_bound(&spec)?;
        writeln!(out, "{},{n_bits},{b:.6}", spec.algorithm)?;
    }
    Ok(())
}

pub fn default_x_tail() -> f64 {
    ZIGGURAT_X_TAIL_ROUNDED
}

pub fn keygen(
    bits: u64,
    out_dir: &Path,
    seed: Option<u64>,
    insecure: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    if bits < MIN_SECURE_KEY_BITS && !insecure {
        return Err(CliError::Usage(format!(
            "refusing to generate a {bits}-bit key; keys below {MIN_SECURE_KEY_BITS} bits need --insecure-test-mode"
        )));
    }
    let kp = match seed {
        Some(s) => paillier::keygen(bits, &mut derive_stream(s, Purpose::KeyGeneration, 0, 0))?,
        None => paillier::keygen(bits, &mut rand::rng())?,
    };
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let pk_path = out_dir.join(PUBLIC_KEY_FILE);
    let sk_path = out_dir.join(SECRET_KEY_FILE);
    let mut buf = Vec::new();
    write_public_key(&mut buf, &kp.public)?;
    std::fs::write(&pk_path, &buf).map_err(CliError::io(&pk_path))?;
    buf.clear();
    write_secret_key(&mut buf, &kp.secret)?;
    std::fs::write(&sk_path, &buf).map_err(CliError::io(&sk_path))?;
    writeln!(out, "wrote {} and {} ({}-bit modulus)", pk_path.display(), sk_path.display(), kp.public.n().bits())?;
    Ok(())
}

pub fn load_keys(dir: &Path) -> CliResult<(PublicKey, SecretKey)> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(CliError::io(p))
    };
    let pk = read_public_key(&mut read(PUBLIC_KEY_FILE)?.as_slice())?;
    let sk = read_secret_key(&mut read(SECRET_KEY_FILE)?.as_slice())?;
    if sk.public() != &pk {
        return Err(CliError::Usage(format!("key files in {} do not belong together", dir.display())));
    }
    Ok((pk, sk))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub backend: Option<Backend>,
    pub key_dir: Option<PathBuf>,
}

/// Resolve the config, train, and write metrics, model and manifest.
pub fn run(config_path: &Path, opts: &RunOptions, out: &mut dyn Write) -> CliResult<TrainingRun> {
    let mut config = RunConfig::from_file(config_path)?;
    config.apply_seed_override()?;
    let mut keys = None;
    if let Some(dir) = &opts.key_dir {
        let (pk, sk) = load_keys(dir)?;
        config.fed.he_backend = Backend::Paillier;
        config.fed.key_bits = pk.n().bits();
        keys = Some(KeyMaterial { public: Arc::new(pk), secret: Arc::new(sk) });
    } else if let Some(b) = opts.backend {
        config.fed.he_backend = b;
    }
    let out_dir = match &opts.out_dir {
        Some(d) => d.clone(),
        None => {
            let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            PathBuf::from(format!("{stem}-out"))
        }
    };
    let result = train(&config, keys)?;

    std::fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    let manifest = RunManifest { config, out_dir };
    write_metrics(&manifest.metrics_path(), &result.records)?;
    write_model(&manifest.model_path(), &result.final_model)?;
    manifest.write()?;

    match result.records.last() {
        Some(r) => writeln!(
            out,
            "{} rounds: eval accuracy {:.4}, train accuracy {:.4}, epsilon {:.4} at delta {:e}",
            r.round, r.eval_accuracy, r.train_accuracy, r.epsilon, r.delta
        )?,
        None => writeln!(out, "0 rounds run")?,
    }
    writeln!(out, "metrics: {}", manifest.metrics_path().display())?;
    writeln!(out, "model: {}", manifest.model_path().display())?;
    writeln!(out, "manifest: {}", manifest.manifest_path().display())?;
    Ok(result)
}

/// Load data and train; keys come from `keys` or from the master seed.
pub fn train(config: &RunConfig, keys: Option<KeyMaterial>) -> CliResult<TrainingRun> {
    let (fed, data) = config.load()?;
    let ctx = match keys {
        Some(k) if fed.pipeline.encrypted() => RoundContext::with_keys(&fed, Some(k))?,
        _ => RoundContext::new(&fed)?,
    };
    Ok(run_training_with(&ctx, &data)?)
}

/// Inclusive `a..b` range, or a single value.
pub fn parse_range(raw: &str) -> Result<(f64, f64), String> {
    let (a, b) = match raw.split_once("..") {
        Some((a, b)) => (a, b),
        None => (raw, raw),
    };
    let a: f64 = a.trim().parse().map_err(|_| format!("bad range start in '{raw}'"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad range end in '{raw}'"))?;
    if !(a > 0.0 && b >= a && b.is_finite()) {
        return Err(format!("range must satisfy 0 < start <= end, got '{raw}'"));
    }
    Ok((a, b))
}

pub fn sweep_values(range: (f64, f64), step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0) {
        return Err(CliError::Usage("--step must be > 0".into()));
    }
    let n = ((range.1 - range.0) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| range.0 + step * i as f64).collect())
}

/// ε for each σ; with a config, also the final eval accuracy of a run at
/// that σ.
pub fn sweep(
    sigmas: &[f64],
    base: &AccountantQuery,
    config: Option<&RunConfig>,
    out: &mut dyn Write,
) -> CliResult<()> {
    writeln!(out, "sigma,epsilon,eval_accuracy")?;
    for &sigma in sigmas {
        let (epsilon, _) = AccountantQuery { sigma, ..base.clone() }.epsilon(sigma)?;
        let accuracy = match config {
            Some(c) => {
                let mut c = c.clone();
                c.fed.sigma = sigma;
                let run = train(&c, None)?;
                run.records.last().map(|r| r.eval_accuracy.to_string()).unwrap_or_default()
            }
            None => String::new(),
        };
        writeln!(out, "{sigma},{epsilon},{accuracy}")?;
    }
    Ok(())
}
