//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the report is the
//! whole output.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fedcrypt::accountant::{log_moment_directions, PrivacyParams};
use fedcrypt::fedcore::Pipeline;
use fedcrypt::learner::{Architecture, Dataset, Model};
use fedcrypt::quantizer::{mod_reduce, poisson_quantize, wrap_probability_bound, QuantConfig};
use fedcrypt::rng::{derive_stream, uniform01, uniform_open0, Purpose, Stream};
use fedcrypt::sampling::{per_participant_std, DEFAULT_NOISE_BOUND};
use fedcrypt_cli::commands::train;
use fedcrypt_cli::config::RunConfig;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let argv = std::iter::once("fedcrypt").chain(args.iter().copied());
    match fedcrypt_cli::main_with_args(argv, &mut out) {
        0 => Ok(String::from_utf8(out).expect("utf-8 output")),
        code => Err(format!("fedcrypt {} exited with {code}", args.join(" "))),
    }
}

fn within_rel(got: f64, want: f64, tol: f64) -> bool {
    (got / want - 1.0).abs() <= tol
}

fn chi_square_critical(df: usize) -> f64 {
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - 1e-3)
}

fn stream(seed: u64) -> Stream {
    derive_stream(seed, Purpose::Data, 0xACCE, 0)
}

fn privacy_cost() -> Outcome {
    let out = cli(&[
        "accountant", "--sigma", "6", "--S", "1", "--K", "1000", "--M", "3596", "--T", "100", "--delta", "1e-5", "--csv",
    ])?;
    let eps = |view: &str| -> Result<f64, String> {
        out.lines()
            .find(|l| l.starts_with(&format!("{view},")))
            .and_then(|l| l.split(',').nth(5))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("no {view} row in:\n{out}"))
    };
    let (user, participant) = (eps("end_user")?, eps("participant")?);
    let detail = format!("end-user ε = {user:.4} (5.306 ± 2%), participant ε = {participant:.4} (5.313 ± 2%)");
    if within_rel(user, 5.306, 0.02) && within_rel(participant, 5.313, 0.02) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sampler_bounds() -> Outcome {
    let out = cli(&["bounds", "--n-bits", "64"])?;
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, want) in [("box_muller_cartesian", 9.42), ("box_muller_polar", 13.27), ("ziggurat", 15.81)] {
        let got: f64 = out
            .lines()
            .find(|l| l.starts_with(name))
            .and_then(|l| l.rsplit(',').next())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("no {name} row"))?;
        ok &= (got - want).abs() <= 0.01;
        detail.push(format!("{name} {got:.4} ({want} ± 0.01)"));
    }
    if ok {
        Ok(detail.join(", "))
    } else {
        Err(detail.join(", "))
    }
}

/// Mean and variance of `s·Y + μ` against `x` and `s(x − μ)`, 4-SE bands.
fn moments_check(x: f64, scale: f64, offset_steps: i64, n: usize, seed: u64) -> Result<String, String> {
    let cfg = QuantConfig::new(scale, offset_steps, 40).unwrap();
    let mu = cfg.offset();
    let mut rng = stream(seed);
    let v: Vec<f64> = (0..n).map(|_| scale * poisson_quantize(x, &cfg, &mut rng).unwrap() as f64 + mu).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let lambda = (x - mu) / scale;
    let want_var = scale * (x - mu);
    // Poisson fourth central moment λ(1 + 3λ), scaled by s⁴
    let mu4 = scale.powi(4) * lambda * (1.0 + 3.0 * lambda);
    let se_mean = (want_var / n as f64).sqrt();
    let se_var = ((mu4 - want_var * want_var) / n as f64).sqrt();
    let detail = format!("x={x}: mean {mean:.5} (±{:.5}), var {var:.5} vs {want_var:.5} (±{:.5})", 4.0 * se_mean, 4.0 * se_var);
    if (mean - x).abs() <= 4.0 * se_mean && (var - want_var).abs() <= 4.0 * se_var {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn two_sample_chi_square(a: &[u64], b: &[u64]) -> (f64, usize) {
    let max = *a.iter().chain(b).max().unwrap() as usize;
    let (mut ha, mut hb) = (vec![0f64; max + 1], vec![0f64; max + 1]);
    a.iter().for_each(|&v| ha[v as usize] += 1.0);
    b.iter().for_each(|&v| hb[v as usize] += 1.0);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    for (x, y) in ha.iter().zip(&hb) {
        ca += x;
        cb += y;
        if ca + cb >= 10.0 {
            bins.push((ca, cb));
            (ca, cb) = (0.0, 0.0);
        }
    }
    if let Some(last) = bins.last_mut() {
        last.0 += ca;
        last.1 += cb;
    }
    let stat = bins.iter().map(|(x, y)| (x - y).powi(2) / (x + y)).sum();
    (stat, bins.len() - 1)
}

fn commutation_check(xs: &[f64], seed: u64) -> Result<String, String> {
    let single = QuantConfig::new(0.01, -100, 40).unwrap();
    let joint = QuantConfig::new(0.01, -100 * xs.len() as i64, 40).unwrap();
    let total: f64 = xs.iter().sum();
    let n = 1_000_000;
    let mut rng = stream(seed);
    let summed: Vec<u64> =
        (0..n).map(|_| xs.iter().map(|&x| poisson_quantize(x, &single, &mut rng).unwrap()).sum()).collect();
    let direct: Vec<u64> = (0..n).map(|_| poisson_quantize(total, &joint, &mut rng).unwrap()).collect();
    let (stat, df) = two_sample_chi_square(&summed, &direct);
    let crit = chi_square_critical(df);
    let detail = format!("m={}: χ² {stat:.1} < {crit:.1} (df {df})", xs.len());
    if stat < crit {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn poisson_quantisation() -> Outcome {
    let checks = [
        moments_check(1.0, 0.1, 0, 1_000_000, 1),
        moments_check(0.37, 0.01, -100, 1_000_000, 2),
        commutation_check(&[0.3, 0.7], 3),
        commutation_check(&[0.3, 0.7, -0.4, 0.1, 0.55], 4),
    ];
    let ok = checks.iter().all(Result::is_ok);
    let detail = checks.into_iter().map(|c| c.unwrap_or_else(|e| format!("FAILED {e}"))).collect::<Vec<_>>().join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn modulo_post_processing() -> Outcome {
    let n = 7;
    let mut failures = 0;
    let mut checked = 0;
    for a in -10i64..=10 {
        for b in -10i64..=10 {
            for c in -10i64..=10 {
                let each: u64 = mod_reduce(&[a, b, c], n).iter().sum();
                if mod_reduce(&[each as i64], n) != mod_reduce(&[a + b + c], n) {
                    failures += 1;
                }
                checked += 1;
            }
        }
    }
    let detail = format!("{checked} triples, {failures} failures");
    if failures == 0 && checked == 9261 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn drop_wall_ms(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

fn backend_equivalence() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = configs_dir().join("desk_equivalence.cfg");
    let mut outputs = Vec::new();
    for backend in ["mock", "paillier"] {
        let dir = tmp.path().join(backend);
        cli(&["run", cfg.to_str().unwrap(), "--backend", backend, "--out-dir", dir.to_str().unwrap()])?;
        let read = |f: &str| std::fs::read_to_string(dir.join(f)).map_err(|e| e.to_string());
        outputs.push((read("metrics.csv")?, read("model.txt")?));
    }
    let params: usize = outputs[0]
        .1
        .lines()
        .find_map(|l| l.strip_prefix("params = "))
        .and_then(|v| v.parse().ok())
        .ok_or("model file without a parameter count")?;
    let rows = outputs[0].0.lines().count() - 1;
    let same_csv = drop_wall_ms(&outputs[0].0) == drop_wall_ms(&outputs[1].0);
    let same_model = outputs[0].1 == outputs[1].1;
    let detail = format!("d = {params}, {rows} rounds, metrics identical: {same_csv}, final models identical: {same_model}");
    if same_csv && same_model && rows == 20 && (900..=1100).contains(&params) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_training() -> Outcome {
    let base = RunConfig::from_file(&configs_dir().join("desk_synth.cfg")).map_err(|e| e.to_string())?;
    let f = &base.fed;
    if (f.clients, f.participants, f.rounds) != (50, 10, 30) || f.pipeline != Pipeline::PROTECTED {
        return Err("desk_synth.cfg does not describe the M=50, K=10, T=30 protected run".into());
    }
    let accuracy = |pipeline: Pipeline| -> Result<f64, String> {
        let mut c = base.clone();
        c.fed.pipeline = pipeline;
        let run = train(&c, None).map_err(|e| e.to_string())?;
        Ok(run.records.last().ok_or("no rounds")?.eval_accuracy)
    };
    let plain = accuracy(Pipeline::UNPROTECTED)?;
    let clipped_noised = accuracy(Pipeline { quantize: false, modulo: false, ..Pipeline::PROTECTED })?;
    let full = accuracy(Pipeline::PROTECTED)?;
    let drop = 100.0 * (plain - full);
    let quant_delta = 100.0 * (full - clipped_noised).abs();
    let detail = format!(
        "σ = {}: unprotected {:.2}%, clip+noise {:.2}%, full (Paillier) {:.2}%; drop {drop:.2} pts (< 10), \
         quantise+modulo delta {quant_delta:.2} pts (< 1)",
        base.fed.sigma,
        100.0 * plain,
        100.0 * clipped_noised,
        100.0 * full
    );
    if drop < 10.0 && quant_delta < 1.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn overflow_bound() -> Outcome {
    let (s_clip, sigma, k) = (1.0, 6.0, 1000);
    let noise_max = DEFAULT_NOISE_BOUND * per_participant_std(sigma, k);
    let cfg = QuantConfig::for_bounds(s_clip, noise_max, 1e-4, 26).map_err(|e| e.to_string())?;
    let bound = wrap_probability_bound(s_clip, &cfg, k);
    let detail = format!("μ = {:.4}, bound {bound:.3e} (< 1e-4)", cfg.offset());
    if bound < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Box–Muller from the project's uniform streams.
fn box_muller(rng: &mut Stream) -> f64 {
    let r = (-2.0 * uniform_open0(rng).ln()).sqrt();
    r * (2.0 * std::f64::consts::PI * uniform01(rng)).cos()
}

fn mc_moment(l: u32, sigma: f64, q: f64, samples: usize, seed: u64) -> [(f64, f64); 2] {
    let mut rng = stream(seed);
    let lf = f64::from(l);
    let shift = 2.0;
    let mut acc = [(0.0f64, 0.0f64); 2];
    for _ in 0..samples {
        let x = sigma * box_muller(&mut rng) + if uniform01(&mut rng) < q { shift } else { 0.0 };
        let ratio = (1.0 - q) + q * ((2.0 * x * shift - shift * shift) / (2.0 * sigma * sigma)).exp();
        for (slot, v) in acc.iter_mut().zip([ratio.powf(-lf), ratio.powf(lf)]) {
            slot.0 += v;
            slot.1 += v * v;
        }
    }
    let n = samples as f64;
    acc.map(|(s, s2)| {
        let mean = s / n;
        (mean, ((s2 / n - mean * mean).max(0.0) / n).sqrt())
    })
}

fn gradient_error(arch: Architecture, seed: u64) -> f64 {
    let mut rng = stream(seed);
    let (features, classes) = (arch.features(), arch.classes());
    let xs: Vec<f64> = (0..5 * features).map(|_| uniform01(&mut rng)).collect();
    let labels: Vec<u32> = (0..5).map(|i| (i % classes) as u32).collect();
    let data = Dataset::new(xs, labels, features, classes).unwrap();
    let params: Vec<f64> = (0..arch.num_params()).map(|_| uniform01(&mut rng) - 0.5).collect();
    let model = Model::new(arch, params.into()).unwrap();
    let idx: Vec<usize> = (0..5).collect();
    let (_, grad) = model.loss_and_gradient(&data, &idx);
    let h = 1e-6;
    let fd: Vec<f64> = (0..grad.len())
        .map(|i| {
            let mut plus = model.clone();
            plus.params[i] += h;
            let mut minus = model.clone();
            minus.params[i] -= h;
            (plus.loss_and_gradient(&data, &idx).0 - minus.loss_and_gradient(&data, &idx).0) / (2.0 * h)
        })
        .collect();
    let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    diff / norm
}

fn numerical_oracles() -> Outcome {
    let points: [(u32, f64, f64); 10] = [
        (2, 4.0, 0.01),
        (1, 2.0, 0.1),
        (3, 3.0, 0.05),
        (4, 4.0, 0.2),
        (5, 6.0, 1000.0 / 3596.0),
        (3, 6.0, 0.5),
        (2, 3.0, 0.3),
        (6, 8.0, 0.1),
        (2, 1.5, 0.05),
        (4, 5.0, 1.0),
    ];
    let mut worst_z = 0f64;
    for (i, &(l, sigma, q)) in points.iter().enumerate() {
        let params = PrivacyParams::new(sigma, 1.0, q, 1, 1e-5).map_err(|e| e.to_string())?;
        let (ln_a, ln_t) = log_moment_directions(l, &params).map_err(|e| e.to_string())?;
        let mc = mc_moment(l, sigma, q, 10_000_000, 100 + i as u64);
        for (quad, (mean, se)) in [ln_a.exp(), ln_t.exp()].into_iter().zip(mc) {
            worst_z = worst_z.max((quad - mean).abs() / se.max(f64::MIN_POSITIVE));
        }
    }
    let logistic = gradient_error(Architecture::Logistic { features: 4, classes: 3 }, 7);
    let mlp = gradient_error(Architecture::Mlp { features: 4, hidden: 6, classes: 3 }, 8);
    let detail = format!(
        "{} accountant points, worst |quadrature − MC| = {worst_z:.2} SE (≤ 3); gradient rel. error \
         logistic {logistic:.1e}, mlp {mlp:.1e} (< 1e-5)",
        points.len()
    );
    if worst_z <= 3.0 && logistic < 1e-5 && mlp < 1e-5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("privacy-cost reproduction", privacy_cost, Duration::from_secs(10)),
        ("sampler-bound reproduction", sampler_bounds, Duration::from_secs(1)),
        ("Poisson-quantisation suite", poisson_quantisation, Duration::from_secs(60)),
        ("modulo post-processing", modulo_post_processing, Duration::from_secs(1)),
        ("backend equivalence", backend_equivalence, Duration::from_secs(300)),
        ("end-to-end DP training at desk scale", desk_training, Duration::from_secs(900)),
        ("overflow-bound sanity", overflow_bound, Duration::from_secs(1)),
        ("numerical-oracle suite", numerical_oracles, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let (verdict, detail) = match outcome {
            Ok(d) if took <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {} {name}: {verdict} ({:.1} s) {detail}", i + 1, took.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
