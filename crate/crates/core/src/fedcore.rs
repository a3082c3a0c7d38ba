//! Round orchestration.
//!
//! Each round the participants train locally, then clip, noise, quantise,
//! reduce, pack and encrypt their update. The server multiplies ciphertexts
//! together and broadcasts the aggregate; every client decrypts it, restores
//! the offset, divides by `K` and applies the averaged update, so all model
//! copies stay identical. The server only ever sees public key material and
//! ciphertexts.
//!
//! Individual stages can be switched off through [`Pipeline`] to measure
//! their effect on accuracy. Runs without quantisation or without modulo
//! reduction cannot be encrypted and are aggregated in the clear; they exist
//! for ablation only.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::RngCore;
use rayon::prelude::*;

use crate::accountant::{compose, epsilon_for_delta, moment_profile, MomentProfile, PrivacyParams};
use crate::he::{self, Backend, CiphertextBundle, EncryptionKey, KeyMaterial, SlotLayout};
use crate::learner::{evaluate, sgd_local, Architecture, Dataset, Model, SgdOptions};
use crate::quantizer::{dequantize_aggregate, mod_reduce, quantize_vector, QuantConfig};
use crate::rng::{derive_stream, uniform01, Purpose};
use crate::sampling::{NoiseSpec, DEFAULT_NOISE_BOUND};
use crate::{Error, ModelVector, Result};

/// Half-width of the shared uniform initialisation.
pub const INIT_RANGE: f64 = 0.05;

/// Which protection stages run on the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pipeline {
    pub clip: bool,
    pub noise: bool,
    pub quantize: bool,
    pub modulo: bool,
}

impl Pipeline {
    /// Clip, noise, quantise, reduce and encrypt.
    pub const PROTECTED: Pipeline = Pipeline { clip: true, noise: true, quantize: true, modulo: true };
    /// Plain federated averaging with uniform `1/K` weights.
    pub const UNPROTECTED: Pipeline = Pipeline { clip: false, noise: false, quantize: false, modulo: false };

    /// Encryption needs integer plaintexts that fit the slot modulus.
    pub fn encrypted(&self) -> bool {
        self.quantize && self.modulo
    }
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline::PROTECTED
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    /// Total clients `M`.
    pub clients: usize,
    /// Participants per round `K`.
    pub participants: usize,
    /// Rounds `T`.
    pub rounds: usize,
    /// Standard deviation of the aggregated noise.
    pub sigma: f64,
    pub clip_s: f64,
    pub delta: f64,
    pub max_moment_order: u32,
    pub scale_s: f64,
    pub bits_b: u32,
    pub guard_bits: u32,
    /// Noise bound in units of the per-participant std, used for the offset.
    pub noise_bound: f64,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub master_seed: u64,
    pub he_backend: Backend,
    pub key_bits: u64,
    pub model: Architecture,
    pub pipeline: Pipeline,
}

impl FedConfig {
    /// Defaults for everything but the population and model.
    pub fn new(clients: usize, participants: usize, rounds: usize, model: Architecture) -> Self {
        Self {
            clients,
            participants,
            rounds,
            sigma: 6.0,
            clip_s: 1.0,
            delta: 1e-5,
            max_moment_order: crate::accountant::DEFAULT_MAX_ORDER,
            scale_s: QuantConfig::DEFAULT_SCALE,
            bits_b: QuantConfig::DEFAULT_BITS,
            guard_bits: he::DEFAULT_GUARD_BITS,
            noise_bound: DEFAULT_NOISE_BOUND,
            local_epochs: 1,
            learning_rate: 0.1,
            batch_size: 32,
            master_seed: 0,
            he_backend: Backend::Paillier,
            key_bits: he::DEFAULT_KEY_BITS,
            model,
            pipeline: Pipeline::PROTECTED,
        }
    }

    /// Participation ratio `K/M`.
    pub fn q(&self) -> f64 {
        self.participants as f64 / self.clients as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.participants == 0 || self.participants > self.clients {
            return Err(Error::invalid(format!(
                "participants must satisfy 1 <= K <= M, got K={} M={}",
                self.participants, self.clients
            )));
        }
        if !(self.clip_s > 0.0) && (self.pipeline.clip || self.pipeline.quantize) {
            return Err(Error::invalid("clip bound must be > 0"));
        }
        if self.pipeline.noise && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be > 0 when noise is enabled"));
        }
        if self.pipeline.quantize && !self.pipeline.clip {
            return Err(Error::invalid("quantisation needs clipping to bound the offset"));
        }
        if self.pipeline.modulo && !self.pipeline.quantize {
            return Err(Error::invalid("modulo reduction needs quantised counts"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.max_moment_order == 0 {
            return Err(Error::invalid("max moment order must be >= 1"));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("local epochs and batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if self.pipeline.quantize {
            QuantConfig::new(self.scale_s, 0, self.bits_b)?;
        }
        if self.pipeline.encrypted() {
            let needed = SlotLayout::required_guard_bits(self.participants);
            if self.guard_bits < needed {
                return Err(Error::InsufficientGuardBits {
                    guard_bits: self.guard_bits,
                    k_max: self.participants,
                    needed,
                });
            }
            if self.bits_b + self.guard_bits > 64 {
                return Err(Error::invalid("slot plus guard bits must not exceed 64"));
            }
            if self.key_bits < crate::he::paillier::MIN_KEY_BITS || self.key_bits % 2 != 0 {
                return Err(Error::invalid("key size must be even and >= 64 bits"));
            }
            self.layout()?;
        }
        if self.pipeline.noise {
            NoiseSpec::new(self.sigma, self.participants, self.noise_bound)?;
        }
        Ok(())
    }

    pub fn sgd_options(&self) -> SgdOptions {
        SgdOptions { epochs: self.local_epochs, learning_rate: self.learning_rate, batch_size: self.batch_size }
    }

    /// Accountant parameters for this run (noise must be enabled).
    pub fn privacy_params(&self) -> Result<PrivacyParams> {
        PrivacyParams::new(self.sigma, self.clip_s, self.q(), self.rounds.max(1) as u64, self.delta)?
            .with_max_order(self.max_moment_order)
    }

    pub fn noise_spec(&self) -> Result<Option<NoiseSpec>> {
        if !self.pipeline.noise {
            return Ok(None);
        }
        NoiseSpec::new(self.sigma, self.participants, self.noise_bound).map(Some)
    }

    /// Offset on the grid below every clipped, noised coordinate. Without
    /// noise one grid step of headroom keeps `−S` strictly above the offset.
    pub fn quant_config(&self) -> Result<QuantConfig> {
        let noise = match self.noise_spec()? {
            Some(spec) => spec.max_abs(),
            None => self.scale_s,
        };
        QuantConfig::for_bounds(self.clip_s, noise, self.scale_s, self.bits_b)
    }

    /// Slot layout for the configured key size; identical across backends.
    pub fn layout(&self) -> Result<SlotLayout> {
        SlotLayout::new(self.bits_b, self.guard_bits, self.key_bits - 1)
    }
}

/// Client shards plus a held-out evaluation set.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub shards: Vec<Dataset>,
    pub eval: Dataset,
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub shard: Arc<Dataset>,
    pub model: Model,
}

/// What the server holds during a round. There is deliberately no field for
/// plaintext updates, plaintext models or secret keys.
#[derive(Debug)]
pub struct ServerState {
    public: Arc<dyn EncryptionKey>,
    received: Vec<CiphertextBundle>,
}

impl ServerState {
    pub fn new(public: Arc<dyn EncryptionKey>) -> Self {
        Self { public, received: Vec::new() }
    }

    pub fn receive(&mut self, bundle: CiphertextBundle) {
        self.received.push(bundle);
    }

    pub fn pending(&self) -> usize {
        self.received.len()
    }

    /// Homomorphic sum of the received bundles; clears the round.
    pub fn aggregate(&mut self) -> Result<CiphertextBundle> {
        let bundles = std::mem::take(&mut self.received);
        server_aggregate(&*self.public, &bundles)
    }
}

/// What a participant sends for one round.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Encrypted(CiphertextBundle),
    /// Quantised counts without modulo reduction (ablation).
    Counts(Vec<u64>),
    /// Real-valued update (ablation).
    Real(Vec<f64>),
}

/// Round-invariant material shared by all clients.
#[derive(Debug, Clone)]
pub struct RoundContext {
    pub cfg: FedConfig,
    pub noise: Option<NoiseSpec>,
    pub quant: Option<QuantConfig>,
    pub layout: Option<SlotLayout>,
    pub keys: Option<KeyMaterial>,
}

impl RoundContext {
    /// Validate `cfg` and derive keys from the master seed when encryption
    /// is enabled.
    pub fn new(cfg: &FedConfig) -> Result<Self> {
        let keys = if cfg.pipeline.encrypted() {
            let mut rng = derive_stream(cfg.master_seed, Purpose::KeyGeneration, 0, 0);
            Some(he::generate_keys(cfg.he_backend, cfg.key_bits, &mut rng)?)
        } else {
            None
        };
        Self::with_keys(cfg, keys)
    }

    pub fn with_keys(cfg: &FedConfig, keys: Option<KeyMaterial>) -> Result<Self> {
        cfg.validate()?;
        let layout = if cfg.pipeline.encrypted() {
            let layout = cfg.layout()?;
            let keys = keys.as_ref().ok_or_else(|| Error::invalid("encrypted pipeline needs keys"))?;
            if layout.capacity_bits() > keys.public.capacity_bits() {
                return Err(Error::invalid("key is too small for the configured slot layout"));
            }
            Some(layout)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            noise: cfg.noise_spec()?,
            quant: if cfg.pipeline.quantize { Some(cfg.quant_config()?) } else { None },
            layout,
            keys: if cfg.pipeline.encrypted() { keys } else { None },
        })
    }
}

/// `K` distinct clients out of `M`, uniformly, in ascending order.
pub fn select_participants<R: RngCore + ?Sized>(rng: &mut R, clients: usize, k: usize) -> Result<Vec<usize>> {
    if k > clients {
        return Err(Error::invalid(format!("cannot select {k} of {clients} clients")));
    }
    let mut chosen = index::sample(rng, clients, k).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Participants of `round` for a given master seed.
pub fn round_participants(master_seed: u64, round: usize, clients: usize, k: usize) -> Result<Vec<usize>> {
    let mut rng = derive_stream(master_seed, Purpose::Selection, round as u64, 0);
    select_participants(&mut rng, clients, k)
}

/// Scale `u` into the L2 ball of radius `s`.
pub fn clip_update(u: &ModelVector, s: f64) -> ModelVector {
    let norm = u.l2_norm();
    if norm <= s || norm == 0.0 {
        return u.clone();
    }
    let factor = s / norm;
    u.iter().map(|v| v * factor).collect::<Vec<_>>().into()
}

/// Shared initial weights, uniform in `[−INIT_RANGE, INIT_RANGE]`.
pub fn initial_model(cfg: &FedConfig) -> Model {
    let mut rng = derive_stream(cfg.master_seed, Purpose::Initialization, 0, 0);
    let params: Vec<f64> = (0..cfg.model.num_params())
        .map(|_| INIT_RANGE * (2.0 * uniform01(&mut rng) - 1.0))
        .collect();
    Model::new(cfg.model, params.into()).expect("sized by the architecture")
}

/// Apply the protection stages to a local update.
pub fn protect_update(update: ModelVector, ctx: &RoundContext, client: usize, round: usize) -> Result<ClientMessage> {
    let cfg = &ctx.cfg;
    let (c, r) = (client as u64, round as u64);
    let mut x = if cfg.pipeline.clip { clip_update(&update, cfg.clip_s) } else { update };
    if let Some(noise) = &ctx.noise {
        let mut rng = derive_stream(cfg.master_seed, Purpose::Noise, c, r);
        for v in x.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let Some(quant) = &ctx.quant else {
        return Ok(ClientMessage::Real(x.into_inner()));
    };
    let mut rng = derive_stream(cfg.master_seed, Purpose::Quantization, c, r);
    let counts = quantize_vector(&x, quant, cfg.pipeline.modulo, &mut rng)?;
    if !cfg.pipeline.modulo {
        return Ok(ClientMessage::Counts(counts));
    }
    let keys = ctx.keys.as_ref().expect("encrypted pipeline has keys");
    let layout = ctx.layout.as_ref().expect("encrypted pipeline has a layout");
    let mut rng = derive_stream(cfg.master_seed, Purpose::Encryption, c, r);
    he::encrypt_counts(&*keys.public, &counts, layout, cfg.participants, &mut rng).map(ClientMessage::Encrypted)
}

/// Local training followed by [`protect_update`].
pub fn client_round(client: &ClientState, ctx: &RoundContext, round: usize) -> Result<ClientMessage> {
    let mut rng = derive_stream(ctx.cfg.master_seed, Purpose::Training, client.id as u64, round as u64);
    let update = sgd_local(&client.model, &client.shard, &ctx.cfg.sgd_options(), &mut rng)?;
    protect_update(update, ctx, client.id, round)
}

/// Homomorphic sum of the participants' bundles.
pub fn server_aggregate(pk: &dyn EncryptionKey, bundles: &[CiphertextBundle]) -> Result<CiphertextBundle> {
    he::aggregate(pk, bundles)
}

/// Round aggregate as broadcast to clients.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    Encrypted(CiphertextBundle),
    Counts(Vec<u64>),
    Real(Vec<f64>),
}

/// Sum the round's messages. Encrypted messages go through [`ServerState`];
/// the plaintext variants are the ablation paths.
pub fn aggregate_messages(ctx: &RoundContext, messages: Vec<ClientMessage>) -> Result<Aggregate> {
    let dim = ctx.cfg.model.num_params();
    if messages.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    match &messages[0] {
        ClientMessage::Encrypted(_) => {
            let keys = ctx.keys.as_ref().ok_or_else(|| Error::invalid("no public key"))?;
            let mut server = ServerState::new(keys.public.clone());
            for m in messages {
                match m {
                    ClientMessage::Encrypted(b) => server.receive(b),
                    _ => return Err(Error::LayoutMismatch),
                }
            }
            server.aggregate().map(Aggregate::Encrypted)
        }
        ClientMessage::Counts(_) => {
            let mut sum = vec![0u64; dim];
            for m in messages {
                let ClientMessage::Counts(c) = m else { return Err(Error::LayoutMismatch) };
                sum.iter_mut().zip(&c).for_each(|(s, v)| *s += v);
            }
            Ok(Aggregate::Counts(sum))
        }
        ClientMessage::Real(_) => {
            let mut sum = vec![0.0; dim];
            for m in messages {
                let ClientMessage::Real(v) = m else { return Err(Error::LayoutMismatch) };
                sum.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
            }
            Ok(Aggregate::Real(sum))
        }
    }
}

/// Turn a round aggregate into the averaged update. For encrypted
/// aggregates this is the client-side decrypt, slot reduction modulo `2^b`,
/// offset restoration and division by `K`.
pub fn decode_aggregate(ctx: &RoundContext, aggregate: &Aggregate) -> Result<ModelVector> {
    let k = ctx.cfg.participants;
    match aggregate {
        Aggregate::Encrypted(bundle) => {
            let keys = ctx.keys.as_ref().ok_or_else(|| Error::invalid("no secret key"))?;
            let quant = ctx.quant.as_ref().expect("encrypted pipeline quantises");
            let slots = he::decrypt_bundle(&*keys.secret, bundle)?;
            let signed: Vec<i64> = slots.iter().map(|&v| v as i64).collect();
            let reduced = mod_reduce(&signed, quant.modulus());
            Ok(dequantize_aggregate(&reduced, quant, k))
        }
        Aggregate::Counts(sum) => {
            let quant = ctx.quant.as_ref().expect("count pipeline quantises");
            Ok(dequantize_aggregate(sum, quant, k))
        }
        Aggregate::Real(sum) => Ok(sum.iter().map(|v| v / k as f64).collect::<Vec<_>>().into()),
    }
}

/// Every client applies the broadcast aggregate to its own model copy.
///
/// All clients hold the same secret key and decryption is deterministic, so
/// the simulation decrypts once per round and hands each client the same
/// averaged update.
pub fn apply_round(clients: &mut [ClientState], aggregate: &Aggregate, ctx: &RoundContext) -> Result<()> {
    let update = decode_aggregate(ctx, aggregate)?;
    for client in clients.iter_mut() {
        client.model.params.add_assign(&update);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
    pub loss: f64,
    /// `+∞` when noise is disabled.
    pub epsilon: f64,
    pub delta: f64,
    pub wall_ms: f64,
    pub moments: Option<MomentProfile>,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub records: Vec<RoundRecord>,
    pub final_model: Model,
}

/// Build client states with the shared initial model.
pub fn init_clients(cfg: &FedConfig, data: &FederatedData) -> Result<Vec<ClientState>> {
    if data.shards.len() != cfg.clients {
        return Err(Error::invalid(format!(
            "{} shards for {} clients",
            data.shards.len(),
            cfg.clients
        )));
    }
    for shard in data.shards.iter().chain(std::iter::once(&data.eval)) {
        if shard.num_features() != cfg.model.features() || shard.num_classes() != cfg.model.classes() {
            return Err(Error::invalid("dataset shape does not match the model"));
        }
    }
    let init = initial_model(cfg);
    Ok(data
        .shards
        .iter()
        .enumerate()
        .map(|(id, shard)| ClientState { id, shard: Arc::new(shard.clone()), model: init.clone() })
        .collect())
}

/// Execute `cfg.rounds` rounds and record metrics after each.
pub fn run_training(cfg: &FedConfig, data: &FederatedData) -> Result<TrainingRun> {
    let ctx = RoundContext::new(cfg)?;
    run_training_with(&ctx, data)
}

pub fn run_training_with(ctx: &RoundContext, data: &FederatedData) -> Result<TrainingRun> {
    let cfg = &ctx.cfg;
    let mut clients = init_clients(cfg, data)?;
    if data.eval.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let train = Dataset::concat(&data.shards)?;
    let per_round = if cfg.pipeline.noise { Some(moment_profile(&cfg.privacy_params()?)?) } else { None };

    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let start = Instant::now();
        let participants = round_participants(cfg.master_seed, round, cfg.clients, cfg.participants)?;
        let messages = participants
            .par_iter()
            .map(|&id| client_round(&clients[id], ctx, round))
            .collect::<Result<Vec<_>>>()?;
        let aggregate = aggregate_messages(ctx, messages)?;
        apply_round(&mut clients, &aggregate, ctx)?;
        debug_assert!(clients.windows(2).all(|w| w[0].model == w[1].model));
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let model = &clients[0].model;
        let (moments, epsilon) = match &per_round {
            Some(p) => {
                let composed = compose(p, round as u64)?;
                let eps = epsilon_for_delta(&composed, cfg.delta);
                (Some(composed), eps)
            }
            None => (None, f64::INFINITY),
        };
        records.push(RoundRecord {
            round,
            train_accuracy: evaluate(model, &train)?,
            eval_accuracy: evaluate(model, &data.eval)?,
            loss: model.loss(&train),
            epsilon,
            delta: cfg.delta,
            wall_ms,
            moments,
        });
    }
    let final_model = clients.swap_remove(0).model;
    Ok(TrainingRun { records, final_model })
}

pub const METRICS_HEADER: &str = "round_index,train_accuracy,eval_accuracy,loss,epsilon,delta,wall_ms";

/// One CSV row per round, header first, LF line endings.
pub fn write_metrics_csv<W: Write>(w: &mut W, records: &[RoundRecord]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{:.3}",
            r.round, r.train_accuracy, r.eval_accuracy, r.loss, r.epsilon, r.delta, r.wall_ms
        )?;
    }
    Ok(())
}
