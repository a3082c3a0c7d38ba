//! Local training: small classifiers, SGD, and data sources.

mod dataset;
mod idx;
mod model;
mod synth;

pub use self::dataset::Dataset;
pub use self::idx::{load_idx, load_idx_images, load_idx_labels, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC};
pub use self::model::{evaluate, sgd_local, Architecture, Model, SgdOptions};
pub use self::synth::{partition, synth_blobs, BlobTask};
