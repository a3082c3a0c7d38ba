//! Moments accountant for the subsampled Gaussian mechanism.
//!
//! With total noise `σ`, clipping bound `S` and participation ratio `q`, a
//! round is compared on two adjacent databases whose output densities are
//!
//! * `f1 = N(0, σ²)` (target client absent),
//! * `f2 = (1 − q)·N(0, σ²) + q·N(2S, σ²)` (target client possibly present).
//!
//! The log-moment of order `l` is `ln max(∫ (f1/f2)^l f2, ∫ (f2/f1)^l f2)`.
//! Moments add up over rounds and the tail bound turns them into `(ε, δ)`.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Default moment orders `1..=20`.
pub const DEFAULT_MAX_ORDER: u32 = 20;

const QUAD_REL_TOL: f64 = 1e-9;
const QUAD_MAX_INTERVALS: usize = 20_000;
const QUAD_INITIAL_PANELS: usize = 64;
/// Half-width of the integration window, in units of `σ`.
const WINDOW_SIGMAS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyParams {
    /// Standard deviation of the aggregated noise.
    pub sigma: f64,
    /// L2 clipping bound.
    pub clip_s: f64,
    /// Per-round participation ratio `K/M`.
    pub q: f64,
    pub rounds: u64,
    pub delta: f64,
    pub moment_orders: Vec<u32>,
}

impl PrivacyParams {
    pub fn new(sigma: f64, clip_s: f64, q: f64, rounds: u64, delta: f64) -> Result<Self> {
        let p = Self {
            sigma,
            clip_s,
            q,
            rounds,
            delta,
            moment_orders: (1..=DEFAULT_MAX_ORDER).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_max_order(mut self, max_order: u32) -> Result<Self> {
        self.moment_orders = (1..=max_order).collect();
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        let p = Self { sigma, ..self.clone() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.clip_s > 0.0 && self.clip_s.is_finite()) {
            return Err(Error::invalid(format!("clip bound must be > 0, got {}", self.clip_s)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::invalid(format!("q must be in [0, 1], got {}", self.q)));
        }
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.moment_orders.is_empty() || self.moment_orders[0] == 0 {
            return Err(Error::invalid("moment orders must be nonempty and positive"));
        }
        if self.moment_orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("moment orders must be strictly increasing"));
        }
        Ok(())
    }

    /// ε after all configured rounds at the configured δ.
    pub fn epsilon(&self) -> Result<f64> {
        let per_round = moment_profile(self)?;
        Ok(epsilon_for_delta(&compose(&per_round, self.rounds)?, self.delta))
    }
}

/// Log-moments per order, for one or several composed rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProfile {
    pub per_order: BTreeMap<u32, f64>,
    pub rounds_composed: u64,
}

impl MomentProfile {
    pub fn zero(orders: impl IntoIterator<Item = u32>, rounds_composed: u64) -> Self {
        Self {
            per_order: orders.into_iter().map(|l| (l, 0.0)).collect(),
            rounds_composed,
        }
    }

    /// Per-order sum of two profiles over the same orders.
    pub fn combine(&self, other: &MomentProfile) -> Result<MomentProfile> {
        if self.per_order.keys().ne(other.per_order.keys()) {
            return Err(Error::invalid("profiles cover different moment orders"));
        }
        Ok(MomentProfile {
            per_order: self
                .per_order
                .iter()
                .zip(other.per_order.values())
                .map(|((&l, a), b)| (l, a + b))
                .collect(),
            rounds_composed: self.rounds_composed + other.rounds_composed,
        })
    }
}

/// Density ratio terms for one parameter set, evaluated in the log domain.
struct Mixture {
    inv_two_var: f64,
    shift: f64,
    ln_keep: f64,
    ln_q: f64,
    ln_norm: f64,
}

impl Mixture {
    fn new(sigma: f64, clip_s: f64, q: f64) -> Self {
        Self {
            inv_two_var: 1.0 / (2.0 * sigma * sigma),
            shift: 2.0 * clip_s,
            ln_keep: (1.0 - q).ln(),
            ln_q: q.ln(),
            ln_norm: -(sigma * (2.0 * std::f64::consts::PI).sqrt()).ln(),
        }
    }

    fn ln_f1(&self, x: f64) -> f64 {
        self.ln_norm - x * x * self.inv_two_var
    }

    /// `ln f2(x) − ln f1(x)`.
    fn ln_ratio(&self, x: f64) -> f64 {
        // exponent of N(2S)/N(0)
        let t = (x * x - (x - self.shift) * (x - self.shift)) * self.inv_two_var;
        log_add_exp(self.ln_keep, self.ln_q + t)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln ∫ (f1/f2)^l f2` and `ln ∫ (f2/f1)^l f2`.
pub fn log_moment_directions(l: u32, params: &PrivacyParams) -> Result<(f64, f64)> {
    params.validate()?;
    if l == 0 {
        return Err(Error::invalid("moment order must be >= 1"));
    }
    if params.q == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mix = Mixture::new(params.sigma, params.clip_s, params.q);
    let lf = f64::from(l);
    // The (f2/f1)^l f2 integrand peaks near 2S(l + 1); widen the window so
    // that both tails stay beyond WINDOW_SIGMAS standard deviations.
    let drift = 2.0 * params.clip_s * lf;
    let lo = -WINDOW_SIGMAS * params.sigma - drift;
    let hi = 2.0 * params.clip_s + WINDOW_SIGMAS * params.sigma + drift;

    let against = ln_integrate(|x| mix.ln_f1(x) + (1.0 - lf) * mix.ln_ratio(x), lo, hi)?;
    let towards = ln_integrate(|x| mix.ln_f1(x) + (1.0 + lf) * mix.ln_ratio(x), lo, hi)?;
    Ok((against, towards))
}

/// `ln ∫ exp(g)` with the integrand rescaled by its peak on a coarse grid,
/// so that large orders and small σ do not overflow.
fn ln_integrate(g: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    const GRID: usize = 4096;
    let peak = (0..=GRID)
        .map(|i| g(a + (b - a) * i as f64 / GRID as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::Quadrature(format!("non-finite log-integrand on [{a}, {b}]")));
    }
    Ok(integrate(|x| (g(x) - peak).exp(), a, b)?.ln() + peak)
}

/// Per-round log-moment `α(l)`.
pub fn log_moment(l: u32, params: &PrivacyParams) -> Result<f64> {
    let (a, b) = log_moment_directions(l, params)?;
    // both integrals are >= 1 by Jensen; clamp quadrature round-off
    Ok(a.max(b).max(0.0))
}

/// One-round profile over the configured moment orders.
pub fn moment_profile(params: &PrivacyParams) -> Result<MomentProfile> {
    params.validate()?;
    let per_order = params
        .moment_orders
        .iter()
        .map(|&l| Ok((l, log_moment(l, params)?)))
        .collect::<Result<_>>()?;
    Ok(MomentProfile { per_order, rounds_composed: 1 })
}

/// Compose a single-round profile over `rounds` adaptive rounds.
pub fn compose(per_round: &MomentProfile, rounds: u64) -> Result<MomentProfile> {
    if per_round.rounds_composed != 1 {
        return Err(Error::invalid(format!(
            "compose expects a single-round profile, got {} rounds",
            per_round.rounds_composed
        )));
    }
    let t = rounds as f64;
    Ok(MomentProfile {
        per_order: per_round.per_order.iter().map(|(&l, &a)| (l, a * t)).collect(),
        rounds_composed: rounds,
    })
}

/// Smallest `ε = (α(l) + ln(1/δ)) / l` over the profile's orders.
pub fn epsilon_for_delta(profile: &MomentProfile, delta: f64) -> f64 {
    epsilon_with_order(profile, delta).0
}

/// Like [`epsilon_for_delta`], also returning the minimising order.
pub fn epsilon_with_order(profile: &MomentProfile, delta: f64) -> (f64, u32) {
    let ln_inv_delta = -delta.ln();
    profile
        .per_order
        .iter()
        .map(|(&l, &a)| ((a + ln_inv_delta) / f64::from(l), l))
        .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
}

/// `min_l exp(α(l) − l·ε)`, clamped to `(0, 1]`.
pub fn delta_for_epsilon(profile: &MomentProfile, epsilon: f64) -> f64 {
    let ln_delta = profile
        .per_order
        .iter()
        .map(|(&l, &a)| a - f64::from(l) * epsilon)
        .fold(f64::INFINITY, f64::min);
    ln_delta.exp().clamp(f64::MIN_POSITIVE, 1.0)
}

/// Noise seen by a participant, which knows its own share:
/// `σ·(√K − 1)/√K`.
pub fn participant_view_sigma(sigma: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("participant view needs at least two participants"));
    }
    let sk = (k as f64).sqrt();
    Ok(sigma * (sk - 1.0) / sk)
}

/// Standard deviation of the sum of the other `K − 1` noise shares:
/// `σ·√((K − 1)/K)`.
pub fn residual_noise_sigma(sigma: f64, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("participant view needs at least two participants"));
    }
    Ok(sigma * ((k - 1) as f64 / k as f64).sqrt())
}

/// Noise left when a fraction `chi` of participants share their noise.
pub fn collusion_adjusted_sigma(sigma: f64, chi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&chi) {
        return Err(Error::invalid(format!("colluding ratio must be in [0, 1), got {chi}")));
    }
    Ok((1.0 - chi) * sigma)
}

// 15-point Gauss–Kronrod abscissae (nonnegative half) and weights, with the
// embedded 7-point Gauss weights for the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and |Kronrod − Gauss| on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod integration to relative tolerance
/// `QUAD_REL_TOL`.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    struct Panel {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }
    let width = (b - a) / QUAD_INITIAL_PANELS as f64;
    let mut panels: Vec<Panel> = (0..QUAD_INITIAL_PANELS)
        .map(|i| {
            let pa = a + width * i as f64;
            let pb = if i + 1 == QUAD_INITIAL_PANELS { b } else { pa + width };
            let (value, error) = gk15(&f, pa, pb);
            Panel { a: pa, b: pb, value, error }
        })
        .collect();

    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !total.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature(format!("non-finite estimate on [{a}, {b}]")));
        }
        if error <= QUAD_REL_TOL * total.abs() || error == 0.0 {
            return Ok(total);
        }
        if panels.len() >= QUAD_MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "estimate {total} with error {error} after {} panels",
                panels.len()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("nonempty");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature("panel width underflow".into()));
        }
        for (pa, pb) in [(p.a, mid), (mid, p.b)] {
            let (value, error) = gk15(&f, pa, pb);
            panels.push(Panel { a: pa, b: pb, value, error });
        }
    }
}
