#![allow(dead_code)]

use jod_core::rng::stream_rng;
use jod_core::synth::{random_ordered_dag, sample_weights, simulate};
use jod_core::{Dag, Dataset, Ordering, WeightedDag};
use proptest::prelude::*;

pub fn ordering(p: usize) -> impl Strategy<Value = Ordering> {
    Just((0..p).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|v| Ordering::new(v).unwrap())
}

pub fn ordering_in(lo: usize, hi: usize) -> impl Strategy<Value = Ordering> {
    (lo..=hi).prop_flat_map(ordering)
}

/// A DAG on `lo..=hi` nodes consistent with a random ordering.
pub fn dag_in(lo: usize, hi: usize) -> impl Strategy<Value = Dag> {
    ordering_in(lo, hi).prop_flat_map(|sigma| {
        let p = sigma.len();
        proptest::collection::vec(any::<bool>(), p * (p - 1) / 2).prop_map(move |bits| {
            let mut edges = Vec::new();
            let mut t = 0;
            for a in 0..p {
                for b in a + 1..p {
                    if bits[t] {
                        edges.push((sigma.at(a), sigma.at(b)));
                    }
                    t += 1;
                }
            }
            Dag::from_edges(p, edges).unwrap()
        })
    })
}

/// A random SCM and `n` samples from it, all drawn from `seed`.
pub fn instance(p: usize, p_edge: f64, n: usize, seed: u64) -> (Ordering, WeightedDag, Dataset) {
    let mut rng = stream_rng(seed, 0);
    let sigma = Ordering::random(p, &mut rng);
    let g = random_ordered_dag(p, p_edge, &sigma, &mut rng).unwrap();
    let scm = sample_weights(&g, 0.5, 1.0, &mut rng).unwrap();
    let ds = simulate(&scm, n, &mut rng).unwrap();
    (sigma, scm, ds)
}
