use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedcrypt::he::{self, Backend, SlotLayout};
use fedcrypt::rng::{derive_stream, Purpose};
use fedcrypt_bench::random_counts;

const DIM: usize = 10_000;
const KEY_BITS: u64 = 2048;
const K: usize = 10;

/// Encrypt a d = 10⁴ update, and aggregate K of them, on both backends.
fn bench(c: &mut Criterion) {
    let layout = SlotLayout::new(26, 10, KEY_BITS - 1).unwrap();
    let counts = random_counts(DIM, 26, 1);
    let mut g = c.benchmark_group("he d=1e4");
    g.sample_size(10);
    for backend in [Backend::Mock, Backend::Paillier] {
        let mut rng = derive_stream(2, Purpose::KeyGeneration, 0, 0);
        let keys = he::generate_keys(backend, KEY_BITS, &mut rng).unwrap();
        g.bench_with_input(BenchmarkId::new("encrypt", backend), &counts, |b, counts| {
            let mut rng = derive_stream(3, Purpose::Encryption, 0, 0);
            b.iter(|| he::encrypt_counts(&*keys.public, counts, &layout, K, &mut rng).unwrap())
        });
        let mut rng = derive_stream(4, Purpose::Encryption, 0, 0);
        let bundles: Vec<_> = (0..K)
            .map(|_| he::encrypt_counts(&*keys.public, &counts, &layout, K, &mut rng).unwrap())
            .collect();
        g.bench_with_input(BenchmarkId::new("aggregate K=10", backend), &bundles, |b, bundles| {
            b.iter(|| he::aggregate(&*keys.public, bundles).unwrap())
        });
        let agg = he::aggregate(&*keys.public, &bundles).unwrap();
        g.bench_with_input(BenchmarkId::new("decrypt", backend), &agg, |b, agg| {
            b.iter(|| he::decrypt_bundle(&*keys.secret, agg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
