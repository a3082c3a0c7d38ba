//! Gaussian class blobs with a tunable non-IID client partition.

use rand::seq::SliceRandom;
use rand::RngCore;

use super::Dataset;
use crate::rng::uniform01;
use crate::sampling::standard_normal;
use crate::{Error, Result};

/// Class centres in `[0.2, 0.8]^f`; samples are centre plus isotropic noise
/// of std `spread`, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobTask {
    centers: Vec<Vec<f64>>,
    spread: f64,
}

impl BlobTask {
    pub fn new<R: RngCore + ?Sized>(rng: &mut R, classes: usize, features: usize, spread: f64) -> Result<Self> {
        if classes == 0 || features == 0 {
            return Err(Error::invalid("blob task needs at least one class and one feature"));
        }
        if !(spread >= 0.0) {
            return Err(Error::invalid("spread must be >= 0"));
        }
        let centers = (0..classes)
            .map(|_| (0..features).map(|_| 0.2 + 0.6 * uniform01(rng)).collect())
            .collect();
        Ok(Self { centers, spread })
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    pub fn features(&self) -> usize {
        self.centers[0].len()
    }

    /// `n` samples whose labels follow `class_weights` (normalised here).
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize, class_weights: &[f64]) -> Dataset {
        let total: f64 = class_weights.iter().sum();
        let f = self.features();
        let mut features = Vec::with_capacity(n * f);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut u = uniform01(rng) * total;
            let mut class = class_weights.len() - 1;
            for (c, &w) in class_weights.iter().enumerate() {
                if u < w {
                    class = c;
                    break;
                }
                u -= w;
            }
            labels.push(class as u32);
            features.extend(
                self.centers[class]
                    .iter()
                    .map(|&m| (m + self.spread * standard_normal(rng)).clamp(0.0, 1.0)),
            );
        }
        Dataset::new(features, labels, f, self.classes()).expect("well-formed by construction")
    }

    /// Balanced sample, e.g. for evaluation.
    pub fn sample_balanced<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize) -> Dataset {
        self.sample(rng, n, &vec![1.0; self.classes()])
    }
}

/// Per-client shards of a fresh blob task. Client `k` draws its labels from
/// `(1 − skew)·uniform + skew·δ_{k mod C}`, so `skew = 0` is IID.
pub fn synth_blobs<R: RngCore + ?Sized>(
    rng: &mut R,
    clients: usize,
    per_client: usize,
    classes: usize,
    features: usize,
    spread: f64,
    skew: f64,
) -> Result<(BlobTask, Vec<Dataset>)> {
    if clients == 0 || per_client == 0 {
        return Err(Error::invalid("need at least one client and one sample per client"));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(Error::invalid(format!("skew must be in [0, 1], got {skew}")));
    }
    let task = BlobTask::new(rng, classes, features, spread)?;
    let shards = (0..clients)
        .map(|k| {
            let mut weights = vec![(1.0 - skew) / classes as f64; classes];
            weights[k % classes] += skew;
            task.sample(rng, per_client, &weights)
        })
        .collect();
    Ok((task, shards))
}

/// Shuffle and split a dataset into `clients` near-equal shards.
pub fn partition<R: RngCore + ?Sized>(data: &Dataset, clients: usize, rng: &mut R) -> Result<Vec<Dataset>> {
    if clients == 0 || data.len() < clients {
        return Err(Error::invalid(format!("cannot split {} samples over {clients} clients", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let base = data.len() / clients;
    let extra = data.len() % clients;
    let mut start = 0;
    Ok((0..clients)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let shard = data.subset(&order[start..start + len]);
            start += len;
            shard
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{evaluate, sgd_local, Architecture, Model, SgdOptions};
    use crate::rng::{derive_stream, Purpose};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn deterministic_given_seed() {
        let make = || {
            let mut rng = derive_stream(1, Purpose::Data, 0, 0);
            synth_blobs(&mut rng, 5, 20, 3, 4, 0.1, 0.5).unwrap().1
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn tight_blobs_are_learned_quickly() {
        let mut rng = derive_stream(2, Purpose::Data, 0, 0);
        let (task, shards) = synth_blobs(&mut rng, 1, 400, 4, 6, 0.01, 0.0).unwrap();
        let arch = Architecture::Logistic { features: 6, classes: 4 };
        let mut model = Model::zeros(arch);
        let opts = SgdOptions { epochs: 10, learning_rate: 1.0, batch_size: 16 };
        let u = sgd_local(&model, &shards[0], &opts, &mut rng).unwrap();
        model.params.add_assign(&u);
        let test = task.sample_balanced(&mut rng, 1000);
        assert!(evaluate(&model, &test).unwrap() >= 0.99);
        assert_eq!(evaluate(&model, &shards[0]).unwrap(), 1.0);
    }

    #[test]
    fn iid_clients_have_homogeneous_histograms() {
        let mut rng = derive_stream(3, Purpose::Data, 0, 0);
        let (_, shards) = synth_blobs(&mut rng, 20, 500, 4, 3, 0.1, 0.0).unwrap();
        let hists: Vec<Vec<usize>> = shards.iter().map(|s| s.class_histogram()).collect();
        let col: Vec<f64> = (0..4).map(|c| hists.iter().map(|h| h[c] as f64).sum()).collect();
        let total: f64 = col.iter().sum();
        let mut stat = 0.0;
        for h in &hists {
            let row: f64 = h.iter().sum::<usize>() as f64;
            for c in 0..4 {
                let e = row * col[c] / total;
                stat += (h[c] as f64 - e).powi(2) / e;
            }
        }
        let dof = (20.0 - 1.0) * (4.0 - 1.0);
        let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(stat);
        assert!(p > 1e-3, "homogeneity p = {p}");

        let mut rng = derive_stream(4, Purpose::Data, 0, 0);
        let (_, skewed) = synth_blobs(&mut rng, 4, 500, 4, 3, 0.1, 0.9).unwrap();
        for (k, s) in skewed.iter().enumerate() {
            let h = s.class_histogram();
            assert!(h[k] > 400, "client {k}: {h:?}");
        }
    }

    #[test]
    fn partition_covers_everything() {
        let mut rng = derive_stream(5, Purpose::Data, 0, 0);
        let task = BlobTask::new(&mut rng, 3, 2, 0.1).unwrap();
        let data = task.sample_balanced(&mut rng, 103);
        let parts = partition(&data, 10, &mut rng).unwrap();
        assert_eq!(parts.iter().map(Dataset::len).sum::<usize>(), 103);
        assert!(parts.iter().all(|p| p.len() == 10 || p.len() == 11));
        assert!(partition(&data, 200, &mut rng).is_err());
    }
}
