//! Scratch probe: recall of the graph search vs brute force across settings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use repodoc::embed::{normalize, EmbeddingVector};
use repodoc::hnsw::{brute_force_knn, HnswIndex, HnswParams};
use std::collections::HashSet;
use std::time::Instant;

fn random_unit(rng: &mut ChaCha12Rng, dim: usize) -> EmbeddingVector {
    let mut values = Vec::with_capacity(dim);
    while values.len() < dim {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        values.push((r * (std::f64::consts::TAU * u2).cos()) as f32);
        if values.len() < dim {
            values.push((r * (std::f64::consts::TAU * u2).sin()) as f32);
        }
    }
    normalize(&EmbeddingVector::new(values).unwrap()).unwrap()
}

fn main() {
    let dim = 768;
    let n = 2000;
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let vectors: Vec<EmbeddingVector> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
    let queries: Vec<EmbeddingVector> = (0..100).map(|_| random_unit(&mut rng, dim)).collect();

    let with_m = |m: usize| HnswParams {
        m,
        m0: 2 * m,
        level_norm: 1.0 / (m as f64).ln(),
        ..HnswParams::default()
    };
    for (label, params, ef) in [
        ("m=16 ef=64", with_m(16), 64usize),
        ("m=32 ef=64", with_m(32), 64),
        ("m=40 ef=64", with_m(40), 64),
        ("m=48 ef=64", with_m(48), 64),
        (
            "m=48 ef=64 s7",
            HnswParams {
                seed: 7,
                ..with_m(48)
            },
            64,
        ),
        (
            "m=40 efc=300",
            HnswParams {
                ef_construction: 300,
                ..with_m(40)
            },
            64,
        ),
    ] {
        let started = Instant::now();
        let mut index = HnswIndex::new(dim, params).unwrap();
        for (i, v) in vectors.iter().enumerate() {
            index.insert(v, i as u64).unwrap();
        }
        let build = started.elapsed();
        let started = Instant::now();
        let mut found = 0usize;
        let mut wanted = 0usize;
        for q in &queries {
            let approx = index.search(q, 4, ef).unwrap();
            let exact: HashSet<u64> = brute_force_knn(&vectors, q, 4)
                .iter()
                .map(|h| h.chunk_id)
                .collect();
            found += approx
                .iter()
                .filter(|h| exact.contains(&h.chunk_id))
                .count();
            wanted += exact.len();
        }
        println!(
            "{label:16} recall@4 = {:.4}  build {build:.2?}  query {:.2?}",
            found as f64 / wanted as f64,
            started.elapsed()
        );
    }
}
