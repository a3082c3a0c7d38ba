use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedcrypt_cli::commands::{load_keys, PUBLIC_KEY_FILE, SECRET_KEY_FILE};
use tempfile::TempDir;

const SMALL: &str = "\
clients = 12
participants = 4
rounds = 3
sigma = 1.5
clip_s = 1
delta = 1e-5
local_epochs = 1
learning_rate = 0.3
batch_size = 8
master_seed = 7
he_backend = mock
key_bits = 512
synth_per_client = 20
synth_classes = 3
synth_features = 5
eval_size = 200
";

fn fedcrypt(args: &[&str]) -> Output {
    fedcrypt_env(args, None)
}

fn fedcrypt_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedcrypt"));
    cmd.args(args).env_remove("FEDCRYPT_SEED");
    if let Some(s) = seed {
        cmd.env("FEDCRYPT_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_into(cfg: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    stdout(&fedcrypt(&args));
    std::fs::read_to_string(out.join("metrics.csv")).unwrap()
}

fn without_timing(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn exit_codes_separate_usage_from_success() {
    let ok = fedcrypt(&["accountant", "--sigma", "6", "--S", "1", "--q", "0.1", "--T", "10", "--delta", "1e-5"]);
    assert_eq!(ok.status.code(), Some(0));

    // neither q nor K/M
    let missing = fedcrypt(&["accountant", "--sigma", "6", "--S", "1", "--T", "10", "--delta", "1e-5"]);
    assert_eq!(missing.status.code(), Some(2));

    let negative = fedcrypt(&["accountant", "--sigma", "-1", "--S", "1", "--q", "0.1", "--T", "10", "--delta", "1e-5"]);
    assert_eq!(negative.status.code(), Some(2));

    assert_eq!(fedcrypt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fedcrypt(&["--help"]).status.code(), Some(0));
    assert_eq!(fedcrypt(&["run", "/nonexistent/run.cfg"]).status.code(), Some(1));
}

#[test]
fn zero_participation_costs_only_the_gaussian_tail() {
    let out = stdout(&fedcrypt(&[
        "accountant", "--sigma", "6", "--S", "1", "--q", "0", "--T", "100", "--delta", "1e-5", "--csv",
    ]));
    let row = out.lines().nth(1).unwrap();
    let eps: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
    // zero moments leave ε = min_l ln(1/δ)/l at the largest order
    assert!((eps - (1e5f64).ln() / 20.0).abs() < 1e-12, "{row}");
}

#[test]
fn keygen_refuses_short_keys_unless_asked() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let refused = fedcrypt(&["keygen", "--bits", "64", "--out-dir", dir]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(!tmp.path().join(PUBLIC_KEY_FILE).exists());

    stdout(&fedcrypt(&["keygen", "--bits", "64", "--out-dir", dir, "--seed", "1", "--insecure-test-mode"]));
    let (pk, sk) = load_keys(tmp.path()).unwrap();
    assert_eq!(sk.public(), &pk);
}

#[test]
fn seeded_keygen_is_reproducible_and_mismatched_pairs_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let gen = |name: &str, seed: &str| {
        let d = tmp.path().join(name);
        stdout(&fedcrypt(&[
            "keygen", "--bits", "256", "--out-dir", d.to_str().unwrap(), "--seed", seed, "--insecure-test-mode",
        ]));
        d
    };
    let (a, b, c) = (gen("a", "11"), gen("b", "11"), gen("c", "12"));
    for f in [PUBLIC_KEY_FILE, SECRET_KEY_FILE] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    assert_ne!(std::fs::read(a.join(PUBLIC_KEY_FILE)).unwrap(), std::fs::read(c.join(PUBLIC_KEY_FILE)).unwrap());

    std::fs::copy(c.join(SECRET_KEY_FILE), a.join(SECRET_KEY_FILE)).unwrap();
    assert!(load_keys(&a).is_err());
}

#[test]
fn external_keys_give_the_same_run_as_the_mock_backend() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let keys = tmp.path().join("keys");
    stdout(&fedcrypt(&[
        "keygen", "--bits", "256", "--out-dir", keys.to_str().unwrap(), "--seed", "3", "--insecure-test-mode",
    ]));
    let mock = run_into(&cfg, &tmp.path().join("mock"), &[]);
    let paillier = run_into(&cfg, &tmp.path().join("paillier"), &["--key-dir", keys.to_str().unwrap()]);
    assert_eq!(without_timing(&mock), without_timing(&paillier));
    let manifest = std::fs::read_to_string(tmp.path().join("paillier/manifest.cfg")).unwrap();
    assert!(manifest.contains("he_backend = paillier"), "{manifest}");
}

#[test]
fn zero_rounds_write_a_header_only_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "zero.cfg", &SMALL.replace("rounds = 3", "rounds = 0"));
    let csv = run_into(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("round_index,"));
}

#[test]
fn manifest_reruns_reproduce_the_metrics() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let first = run_into(&cfg, &tmp.path().join("first"), &[]);
    let again = run_into(&tmp.path().join("first/manifest.cfg"), &tmp.path().join("second"), &[]);
    assert_eq!(without_timing(&first), without_timing(&again));
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("first/model.txt")).unwrap(),
        std::fs::read_to_string(tmp.path().join("second/model.txt")).unwrap()
    );
}

#[test]
fn reported_epsilon_matches_the_accountant() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let csv = run_into(&cfg, &tmp.path().join("out"), &[]);
    let eps = column(&csv, "epsilon");
    assert_eq!(eps.len(), 3);
    assert!(eps.windows(2).all(|w| w[0] < w[1]), "{eps:?}");

    let report = stdout(&fedcrypt(&[
        "accountant", "--sigma", "1.5", "--S", "1", "--K", "4", "--M", "12", "--T", "3", "--delta", "1e-5", "--csv",
    ]));
    let expected: f64 = report.lines().nth(1).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!((eps[2] - expected).abs() <= 1e-9 * expected, "{} vs {expected}", eps[2]);
}

#[test]
fn backend_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let out = tmp.path().join("out");
    run_into(&cfg, &out, &["--backend", "paillier"]);
    let manifest = std::fs::read_to_string(out.join("manifest.cfg")).unwrap();
    assert!(manifest.contains("he_backend = paillier"), "{manifest}");

    let bad = fedcrypt(&["run", cfg.to_str().unwrap(), "--backend", "bfv"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn seed_environment_variable_overrides_the_config_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let reseeded = write_config(tmp.path(), "seed5.cfg", &SMALL.replace("master_seed = 7", "master_seed = 5"));

    let run = |cfg: &Path, out: &str, seed: Option<&str>| {
        let out = tmp.path().join(out);
        stdout(&fedcrypt_env(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()], seed));
        std::fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let from_env = run(&cfg, "env", Some("5"));
    let from_file = run(&reseeded, "file", None);
    let original = run(&cfg, "orig", None);
    assert_eq!(without_timing(&from_env), without_timing(&from_file));
    assert_ne!(without_timing(&from_env), without_timing(&original));
    let manifest = std::fs::read_to_string(tmp.path().join("env/manifest.cfg")).unwrap();
    assert!(manifest.contains("master_seed = 5"));

    let bad = fedcrypt_env(&["run", cfg.to_str().unwrap()], Some("minus-one"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_name_the_line() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (format!("{SMALL}colour = blue\n"), 17),
        (SMALL.replace("sigma = 1.5", "sigma = lots"), 4),
        (format!("{SMALL}clients = 13\n"), 17),
        (format!("{SMALL}hidden = 8\n"), 17),
    ];
    for (i, (text, line)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.cfg"), text);
        let o = fedcrypt(&["run", cfg.to_str().unwrap(), "--out-dir", tmp.path().join("x").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "case {i}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(&format!(":{line}")), "case {i}: {err}");
    }
}

#[test]
fn sweep_epsilon_falls_as_sigma_grows() {
    let out = stdout(&fedcrypt(&["sweep", "--sigma", "2..8", "--step", "1.5"]));
    let sigma = column(&out, "sigma");
    let eps = column(&out, "epsilon");
    assert_eq!(sigma, vec![2.0, 3.5, 5.0, 6.5, 8.0]);
    assert!(eps.windows(2).all(|w| w[1] < w[0]), "{eps:?}");
}

#[test]
fn sweep_with_a_config_trains_at_each_sigma() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "small.cfg", SMALL);
    let out = stdout(&fedcrypt(&["sweep", "--sigma", "1..2", "--config", cfg.to_str().unwrap()]));
    let acc = column(&out, "eval_accuracy");
    assert_eq!(acc.len(), 2);
    assert!(acc.iter().all(|a| (0.0..=1.0).contains(a)));
}

#[test]
fn bounds_csv_lists_all_three_samplers() {
    let out = stdout(&fedcrypt(&["bounds", "--n-bits", "32"]));
    let rows: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["box_muller_cartesian", "box_muller_polar", "ziggurat"]);
    // fewer bits, smaller tail
    let b32 = column(&out, "bound");
    let b64 = column(&stdout(&fedcrypt(&["bounds"])), "bound");
    assert!(b32.iter().zip(&b64).all(|(a, b)| a < b));
}
