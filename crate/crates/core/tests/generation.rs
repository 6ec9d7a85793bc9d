//! Uniformity of the hypergraph sampler against exhaustive enumeration of
//! the labelled set `G(d, w)`.

use std::collections::HashMap;

use ctmc_fluid::hypergraph::{generate_with_rng, FrequencyVectors, HypergraphInstance, DEFAULT_RETRY_CAP};
use ctmc_fluid::rng::replica_rng;
use ctmc_fluid::stats::chi_square_uniform;

/// Vertex-by-edge incidence matrix packed into bits.
fn incidence_mask(h: &HypergraphInstance) -> u32 {
    let nv = h.num_vertices();
    let mut mask = 0;
    for e in 0..h.num_edges() {
        for &v in h.edge(e) {
            mask |= 1 << (e * nv + v);
        }
    }
    mask
}

/// All 0/1 `n × n` matrices with every row and column summing to `d`.
fn enumerate_regular(n: usize, d: usize) -> Vec<u32> {
    (0u32..1 << (n * n))
        .filter(|&m| {
            (0..n).all(|e| (0..n).filter(|&v| m >> (e * n + v) & 1 == 1).count() == d)
                && (0..n).all(|v| (0..n).filter(|&e| m >> (e * n + v) & 1 == 1).count() == d)
        })
        .collect()
}

fn uniformity(n: usize, d: usize, samples: u64, expected_classes: usize) {
    let mut p = vec![0.0; d + 1];
    p[d] = 1.0;
    let f = FrequencyVectors::from_dense(p.clone(), p).unwrap();
    let all = enumerate_regular(n, d);
    assert_eq!(all.len(), expected_classes);
    let index: HashMap<u32, usize> = all.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut counts = vec![0u64; all.len()];
    let mut rng = replica_rng(2024, n as u64);
    for _ in 0..samples {
        let g = generate_with_rng(&f, n, &mut rng, DEFAULT_RETRY_CAP).unwrap();
        let mask = incidence_mask(&g.instance);
        counts[*index.get(&mask).expect("sample outside G(d, w)")] += 1;
    }
    let chi = chi_square_uniform(&counts).unwrap();
    assert!(chi.passes(1e-3), "n = {n}: {chi:?}");
}

#[test]
fn three_by_three_is_uniform() {
    uniformity(3, 2, 100_000, 6);
}

#[test]
fn four_by_four_is_uniform() {
    uniformity(4, 2, 100_000, 90);
}

#[test]
fn retries_are_counted() {
    // Degree 2 vertices in weight 2 edges at N = 2: both edges are {0, 1},
    // and a pairing fails exactly when some edge doubles a vertex.
    let f = FrequencyVectors::from_dense(vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]).unwrap();
    let mut rng = replica_rng(3, 0);
    let (mut retries, mut total) = (0, 0);
    for _ in 0..3000 {
        let g = generate_with_rng(&f, 2, &mut rng, DEFAULT_RETRY_CAP).unwrap();
        assert_eq!(g.instance.edges(), &[vec![0, 1], vec![0, 1]]);
        retries += g.retries;
        total += g.retries + 1;
    }
    // Acceptance probability is 4/6 for the shuffled half-incidences 0 0 1 1.
    let rate = 3000.0 / total as f64;
    assert!((rate - 2.0 / 3.0).abs() < 0.03, "acceptance {rate} after {retries} retries");
}
