//! Bounded Gaussian sampling.
//!
//! Samplers built on a finite uniform source can only reach a bounded range.
//! [`sampler_bound`] gives that range for the three usual algorithms, and
//! [`gaussian_sample`] is a 256-layer ziggurat (255 rectangles plus the base
//! strip) whose tail fallback draws from the 64-bit source, so its outputs
//! never exceed [`ZIGGURAT_BOUND`] standard deviations.

use std::sync::LazyLock;

use rand::RngCore;

use crate::rng::{uniform01, uniform_open0};
use crate::{Error, Result};

/// Right edge of the last ziggurat rectangle for 255 rectangles.
pub const ZIGGURAT_X_TAIL: f64 = 3.654_152_885_361_008_8;

/// Rounded tail abscissa commonly quoted for the 255-rectangle ziggurat.
pub const ZIGGURAT_X_TAIL_ROUNDED: f64 = 3.65;

/// Area of each ziggurat layer under `exp(-x^2 / 2)`.
const ZIGGURAT_LAYER_AREA: f64 = 0.004_928_673_233_99;

/// Default noise bound (in standard deviations) used for offset computation.
pub const DEFAULT_NOISE_BOUND: f64 = 15.81;

/// Largest magnitude [`gaussian_sample`] can return for unit variance.
pub static ZIGGURAT_BOUND: LazyLock<f64> = LazyLock::new(|| {
    sampler_bound(&SamplerBoundSpec::ziggurat(64, ZIGGURAT_X_TAIL)).expect("valid spec")
});

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerAlgorithm {
    BoxMullerCartesian,
    BoxMullerPolar,
    Ziggurat,
}

impl std::str::FromStr for SamplerAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box_muller_cartesian" | "cartesian" => Ok(Self::BoxMullerCartesian),
            "box_muller_polar" | "polar" => Ok(Self::BoxMullerPolar),
            "ziggurat" => Ok(Self::Ziggurat),
            other => Err(Error::invalid(format!("unknown sampler algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for SamplerAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BoxMullerCartesian => "box_muller_cartesian",
            Self::BoxMullerPolar => "box_muller_polar",
            Self::Ziggurat => "ziggurat",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerBoundSpec {
    pub algorithm: SamplerAlgorithm,
    /// Width of the uniform integer source.
    pub n_bits: u32,
    /// Tail rectangle abscissa, ziggurat only.
    pub x_tail: Option<f64>,
}

impl SamplerBoundSpec {
    pub fn box_muller_cartesian(n_bits: u32) -> Self {
        Self { algorithm: SamplerAlgorithm::BoxMullerCartesian, n_bits, x_tail: None }
    }

    pub fn box_muller_polar(n_bits: u32) -> Self {
        Self { algorithm: SamplerAlgorithm::BoxMullerPolar, n_bits, x_tail: None }
    }

    pub fn ziggurat(n_bits: u32, x_tail: f64) -> Self {
        Self { algorithm: SamplerAlgorithm::Ziggurat, n_bits, x_tail: Some(x_tail) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bits < 8 {
            return Err(Error::invalid(format!("n_bits must be >= 8, got {}", self.n_bits)));
        }
        match (self.algorithm, self.x_tail) {
            (SamplerAlgorithm::Ziggurat, None) => {
                Err(Error::invalid("ziggurat bound requires x_tail"))
            }
            (SamplerAlgorithm::Ziggurat, Some(x)) if !(x > 0.0 && x.is_finite()) => {
                Err(Error::invalid(format!("x_tail must be positive, got {x}")))
            }
            (SamplerAlgorithm::Ziggurat, Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::invalid("x_tail only applies to the ziggurat")),
            (_, None) => Ok(()),
        }
    }
}

/// Largest absolute value, in standard deviations, the algorithm can output
/// when its smallest nonzero uniform is `2^-n_bits`.
pub fn sampler_bound(spec: &SamplerBoundSpec) -> Result<f64> {
    spec.validate()?;
    // -ln(2^-n)
    let neg_log_min = f64::from(spec.n_bits) * std::f64::consts::LN_2;
    Ok(match spec.algorithm {
        SamplerAlgorithm::BoxMullerCartesian => (2.0 * neg_log_min).sqrt(),
        // s_min = 2 * 2^(-2n) = 2^(-2n+1)
        SamplerAlgorithm::BoxMullerPolar => {
            let neg_log_smin = f64::from(2 * spec.n_bits - 1) * std::f64::consts::LN_2;
            (2.0 * neg_log_smin).sqrt()
        }
        SamplerAlgorithm::Ziggurat => {
            let x_tail = spec.x_tail.expect("validated");
            neg_log_min / x_tail + x_tail
        }
    })
}

struct ZigguratTables {
    /// Layer right edges, `x[0]` is the pseudo-width of the base strip and
    /// `x[256] = 0`.
    x: [f64; 257],
    /// `x[i + 1] / x[i]`: fraction of layer `i` lying fully under the curve.
    ratio: [f64; 256],
}

static TABLES: LazyLock<ZigguratTables> = LazyLock::new(|| {
    let f = |x: f64| (-0.5 * x * x).exp();
    let mut x = [0.0; 257];
    x[0] = ZIGGURAT_LAYER_AREA / f(ZIGGURAT_X_TAIL);
    x[1] = ZIGGURAT_X_TAIL;
    for i in 1..256 {
        let y = ZIGGURAT_LAYER_AREA / x[i] + f(x[i]);
        x[i + 1] = if y >= 1.0 { 0.0 } else { (-2.0 * y.ln()).sqrt() };
    }
    x[256] = 0.0;
    let mut ratio = [0.0; 256];
    for i in 0..256 {
        ratio[i] = x[i + 1] / x[i];
    }
    ZigguratTables { x, ratio }
});

/// Tail fallback: returns a value in `[x_tail, x_tail + 64 ln 2 / x_tail]`.
fn ziggurat_tail<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x = -uniform_open0(rng).ln() / ZIGGURAT_X_TAIL;
        let y = -uniform_open0(rng).ln();
        if 2.0 * y > x * x {
            return x + ZIGGURAT_X_TAIL;
        }
    }
}

/// Standard normal draw from the 255-rectangle ziggurat.
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let t = &*TABLES;
    loop {
        let bits = rng.next_u64();
        let layer = (bits & 0xff) as usize;
        // 53 high bits -> u in (-1, 1)
        let u = 2.0 * ((bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) - 1.0;
        if u.abs() < t.ratio[layer] {
            return u * t.x[layer];
        }
        if layer == 0 {
            let tail = ziggurat_tail(rng);
            return if u < 0.0 { -tail } else { tail };
        }
        let x = u * t.x[layer];
        let f0 = (-0.5 * (t.x[layer] * t.x[layer] - x * x)).exp();
        let f1 = (-0.5 * (t.x[layer + 1] * t.x[layer + 1] - x * x)).exp();
        if f1 + uniform01(rng) * (f0 - f1) < 1.0 {
            return x;
        }
    }
}

/// Draw from `N(mean, std^2)`; `|x - mean| <= ZIGGURAT_BOUND * std` always.
pub fn gaussian_sample<R: RngCore + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    debug_assert!(std >= 0.0);
    mean + std * standard_normal(rng)
}

/// Standard deviation of each participant's noise share so that `k` shares
/// sum to a noise of standard deviation `sigma_total`.
pub fn per_participant_std(sigma_total: f64, k: usize) -> f64 {
    assert!(k >= 1, "need at least one participant");
    sigma_total / (k as f64).sqrt()
}

/// Distributed noise configuration for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_total: f64,
    pub participants: usize,
    pub sigma_individual: f64,
    /// Bound on emitted samples, in units of `sigma_individual`.
    pub bound_std_units: f64,
}

impl NoiseSpec {
    pub fn new(sigma_total: f64, participants: usize, bound_std_units: f64) -> Result<Self> {
        if !(sigma_total > 0.0 && sigma_total.is_finite()) {
            return Err(Error::invalid(format!("sigma_total must be > 0, got {sigma_total}")));
        }
        if participants == 0 {
            return Err(Error::invalid("participants must be >= 1"));
        }
        if bound_std_units < *ZIGGURAT_BOUND {
            return Err(Error::invalid(format!(
                "noise bound {bound_std_units} is below the sampler's reach {}",
                *ZIGGURAT_BOUND
            )));
        }
        Ok(Self {
            sigma_total,
            participants,
            sigma_individual: per_participant_std(sigma_total, participants),
            bound_std_units,
        })
    }

    /// Largest absolute noise value any participant can add.
    pub fn max_abs(&self) -> f64 {
        self.bound_std_units * self.sigma_individual
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        gaussian_sample(rng, 0.0, self.sigma_individual)
    }
}
