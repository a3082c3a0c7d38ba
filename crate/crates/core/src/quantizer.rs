//! Poisson stochastic quantisation.
//!
//! `Q_{s,μ}(x) = s·Y + μ` with `Y ~ Poisson((x − μ)/s)`. The map is unbiased,
//! and a sum of quantised values has the same law as the quantisation of the
//! sum (with offset `m·μ`), so quantising noised updates client-side is
//! equivalent to quantising the aggregate. Counts travel without the offset
//! and reduced modulo `N = 2^b`; the offset comes back in
//! [`dequantize_aggregate`].

use rand::RngCore;
use statrs::function::gamma::ln_gamma;

use crate::rng::uniform01;
use crate::{Error, ModelVector, Result};

/// Below this mean the sampler inverts the CDF by sequential search.
const INVERSION_CUTOFF: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    scale: f64,
    /// Offset expressed in grid steps: `μ = offset_steps · s`.
    offset_steps: i64,
    bits: u32,
}

impl QuantConfig {
    pub const DEFAULT_SCALE: f64 = 1e-4;
    pub const DEFAULT_BITS: u32 = 26;

    pub fn new(scale: f64, offset_steps: i64, bits: u32) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("quantisation scale must be > 0, got {scale}")));
        }
        if !(1..=62).contains(&bits) {
            return Err(Error::invalid(format!("plaintext bits must be in 1..=62, got {bits}")));
        }
        Ok(Self { scale, offset_steps, bits })
    }

    /// Configuration whose offset lies on the grid at or below the lowest
    /// value a clipped and noised coordinate can take.
    pub fn for_bounds(clip_s: f64, noise_max_abs: f64, scale: f64, bits: u32) -> Result<Self> {
        if !(clip_s > 0.0) || !(noise_max_abs >= 0.0) {
            return Err(Error::invalid("clip bound must be > 0 and noise bound >= 0"));
        }
        let steps = offset_steps(clip_s + noise_max_abs, scale)?;
        Self::new(scale, steps, bits)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> f64 {
        self.offset_steps as f64 * self.scale
    }

    pub fn offset_steps(&self) -> i64 {
        self.offset_steps
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn modulus(&self) -> u64 {
        1u64 << self.bits
    }
}

/// Offsetless Poisson counts reduced into `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedVector {
    pub counts: Vec<u64>,
}

/// Draw from `Poisson(lambda)`.
pub fn poisson_sample<R: RngCore + ?Sized>(rng: &mut R, lambda: f64) -> Result<u64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("Poisson mean must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    Ok(if lambda < INVERSION_CUTOFF {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    })
}

fn poisson_inversion<R: RngCore + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let p0 = (-lambda).exp();
    'draw: loop {
        let u = uniform01(rng);
        let mut k = 0u64;
        let mut p = p0;
        let mut cdf = p0;
        while u >= cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            // cdf stalls just below 1 in floating point; redraw
            if p == 0.0 && u >= cdf {
                continue 'draw;
            }
        }
        return k;
    }
}

/// Transformed rejection with squeeze (Hörmann's PTRS).
fn poisson_ptrs<R: RngCore + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.024_83 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = uniform01(rng) - 0.5;
        let v = uniform01(rng);
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Offsetless Poisson quantisation of one value: returns `Y` such that
/// `s·Y + μ` is the quantised value.
pub fn poisson_quantize<R: RngCore + ?Sized>(x: f64, cfg: &QuantConfig, rng: &mut R) -> Result<u64> {
    let mu = cfg.offset();
    if !(x > mu) {
        return Err(Error::BelowOffset { x, offset: mu });
    }
    poisson_sample(rng, (x - mu) / cfg.scale)
}

/// Componentwise [`poisson_quantize`], reduced modulo `2^b` when `reduce`
/// is set.
pub fn quantize_vector<R: RngCore + ?Sized>(
    xs: &[f64],
    cfg: &QuantConfig,
    reduce: bool,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let n = cfg.modulus();
    xs.iter()
        .map(|&x| {
            let y = poisson_quantize(x, cfg, rng)?;
            Ok(if reduce { y % n } else { y })
        })
        .collect()
}

fn offset_steps(lower_bound_magnitude: f64, scale: f64) -> Result<i64> {
    if !(scale > 0.0) {
        return Err(Error::invalid("quantisation scale must be > 0"));
    }
    let steps = (lower_bound_magnitude / scale).ceil();
    if steps.abs() > i64::MAX as f64 / 2.0 {
        return Err(Error::invalid("offset does not fit the integer grid"));
    }
    Ok(-(steps as i64))
}

/// Largest multiple of `s` at or below `−(S + B·σ_individual)`.
pub fn offset_grid(clip_s: f64, sigma_individual: f64, bound_b: f64, scale: f64) -> f64 {
    let steps = offset_steps(clip_s + bound_b * sigma_individual, scale)
        .expect("offset_grid arguments must be positive");
    steps as f64 * scale
}

/// Nonnegative remainder of each entry modulo `n`.
pub fn mod_reduce(v: &[i64], n: u64) -> Vec<u64> {
    assert!(n >= 1, "modulus must be >= 1");
    let n = i128::from(n);
    v.iter().map(|&x| i128::from(x).rem_euclid(n) as u64).collect()
}

/// Average of `k` quantised updates from the sum of their offsetless counts:
/// `s·count / k + μ` per coordinate.
pub fn dequantize_aggregate(sum_counts: &[u64], cfg: &QuantConfig, k: usize) -> ModelVector {
    assert!(k >= 1);
    let mu = cfg.offset();
    let k = k as f64;
    sum_counts
        .iter()
        .map(|&c| cfg.scale * c as f64 / k + mu)
        .collect::<Vec<_>>()
        .into()
}

/// Chebyshev bound on `P(ΣY ≥ N)` for `k` counts whose coordinate value is at
/// most `x_max`: `Var/(N − E)^2` with `E = Var = k(x_max − μ)/s`.
pub fn wrap_probability_bound(x_max: f64, cfg: &QuantConfig, k: usize) -> f64 {
    let mean = k as f64 * (x_max - cfg.offset()) / cfg.scale;
    let n = cfg.modulus() as f64;
    if mean >= n {
        return 1.0;
    }
    (mean / ((n - mean) * (n - mean))).min(1.0)
}
