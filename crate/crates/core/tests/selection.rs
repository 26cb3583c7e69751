mod common;

use common::instance;
use jod_core::rng::stream_rng;
use jod_core::selection::{forward_backward, select_parents};
use jod_core::{Dag, ScoreParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn output_respects_the_in_degree_cap(p in 3usize..9, seed in any::<u64>(), d in 1usize..4) {
        let (sigma, _, ds) = instance(p, 0.6, 300, seed);
        let params = ScoreParams { max_in_degree: Some(d), ..ScoreParams::default() };
        let g = forward_backward(&ds, &sigma, &params).unwrap();
        prop_assert!(g.max_in_degree() <= d);
        prop_assert!(g.is_consistent(&sigma));
    }

    #[test]
    fn selected_graph_beats_the_empty_graph(p in 2usize..9, seed in any::<u64>()) {
        let (sigma, _, ds) = instance(p, 0.4, 200, seed);
        let params = ScoreParams::default();
        let g = forward_backward(&ds, &sigma, &params).unwrap();
        let empty = Dag::empty(p);
        prop_assert!(ds.graph_score(&g, &params).unwrap() >= ds.graph_score(&empty, &params).unwrap());
    }

    #[test]
    fn no_remaining_parent_is_worth_removing(p in 3usize..9, seed in any::<u64>()) {
        let (sigma, _, ds) = instance(p, 0.5, 150, seed);
        let params = ScoreParams::default();
        let g = forward_backward(&ds, &sigma, &params).unwrap();
        for j in 0..p {
            let parents = g.parent_vec(j);
            let here = ds.node_score(j, &parents, &params).unwrap();
            for &l in &parents {
                let fewer: Vec<usize> = parents.iter().copied().filter(|&v| v != l).collect();
                prop_assert!(ds.node_score(j, &fewer, &params).unwrap() <= here);
            }
        }
    }

    #[test]
    fn node_processing_order_is_irrelevant(p in 2usize..9, seed in any::<u64>()) {
        let (sigma, _, ds) = instance(p, 0.5, 200, seed);
        let params = ScoreParams::default();
        let reference = forward_backward(&ds, &sigma, &params).unwrap();
        let mut nodes: Vec<usize> = (0..p).collect();
        nodes.shuffle(&mut stream_rng(seed, 1));
        let mut parent_sets = vec![Vec::new(); p];
        for j in nodes {
            let preds = sigma.predecessors(j).unwrap();
            parent_sets[j] = select_parents(&ds, j, &preds, &params).unwrap().0;
        }
        prop_assert_eq!(Dag::from_parent_sets(&parent_sets).unwrap(), reference);
    }
}
