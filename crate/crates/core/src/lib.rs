//! Privacy-preserving federated averaging.
//!
//! Clients clip their local updates, add a share of a distributed Gaussian
//! noise, Poisson-quantise the result onto an integer grid and encrypt the
//! counts under an additively homomorphic scheme. The server only ever sums
//! ciphertexts. A subsampled-Gaussian moments accountant tracks the
//! resulting `(ε, δ)` guarantee across rounds.
//!
//! Module map:
//!
//! * [`accountant`]: log-moments by quadrature, composition, tail bound.
//! * [`sampling`]: bounded ziggurat Gaussian sampler and sampler range bounds.
//! * [`quantizer`]: Poisson sampling, Poisson quantisation, offset grid, modulo.
//! * [`he`]: slot packing, Paillier and plaintext mock backends, serialisation.
//! * [`learner`]: small models, SGD, synthetic blobs and IDX ingestion.
//! * [`fedcore`]: round orchestration and metrics.

pub mod accountant;
pub mod error;
pub mod fedcore;
pub mod he;
pub mod learner;
pub mod quantizer;
pub mod rng;
pub mod sampling;

mod model_vector;

pub use crate::error::{Error, Result};
pub use crate::model_vector::ModelVector;
