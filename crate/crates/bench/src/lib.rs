//! Shared inputs for the benchmarks.

use fedcrypt::accountant::PrivacyParams;
use fedcrypt::quantizer::QuantConfig;
use fedcrypt::rng::{derive_stream, Purpose};

/// σ = 6, S = 1, K/M = 1000/3596, T = 100, δ = 1e-5.
pub fn reference_privacy() -> PrivacyParams {
    PrivacyParams::new(6.0, 1.0, 1000.0 / 3596.0, 100, 1e-5).expect("valid parameters")
}

/// `d` counts below `2^bits`, as a quantised update would produce.
pub fn random_counts(d: usize, bits: u32, seed: u64) -> Vec<u64> {
    let cfg = QuantConfig::new(1e-4, -40_000, bits).expect("valid quantiser");
    let mut rng = derive_stream(seed, Purpose::Data, 0, 0);
    let xs: Vec<f64> = (0..d).map(|i| ((i % 200) as f64 - 100.0) / 100.0).collect();
    fedcrypt::quantizer::quantize_vector(&xs, &cfg, true, &mut rng).expect("values above the offset")
}
