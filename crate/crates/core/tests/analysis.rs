use std::sync::Arc;

use jod_core::analysis::{delta_binary, edge_inclusion, gelman_rubin, tau_star};
use jod_core::rng::stream_rng;
use jod_core::sampler::{run_ensemble, ChainConfig, ChainTrace, EvalMode, JointModel, Sample};
use jod_core::synth::{random_ordered_dag, sample_weights, simulate};
use jod_core::{kendall_tau, Dag, Ordering, ScoreParams};

fn ensemble() -> Vec<ChainTrace> {
    let mut rng = stream_rng(61, 0);
    let sigma = Ordering::identity(6);
    let data = (0..2)
        .map(|_| {
            let g = random_ordered_dag(6, 0.4, &sigma, &mut rng).unwrap();
            simulate(
                &sample_weights(&g, 0.5, 1.0, &mut rng).unwrap(),
                200,
                &mut rng,
            )
            .unwrap()
        })
        .collect();
    let model = JointModel::new(data, ScoreParams::default(), EvalMode::Incremental).unwrap();
    let configs: Vec<_> = (0..4).map(|c| ChainConfig::new(400, 70 + c)).collect();
    run_ensemble(&model, &configs)
        .into_iter()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn inclusion_probabilities_are_valid() {
    for trace in ensemble() {
        for k in 0..2 {
            let gamma = edge_inclusion(&trace, k).unwrap();
            for (i, row) in gamma.iter().enumerate() {
                assert_eq!(row[i], 0.0);
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}

#[test]
fn gelman_rubin_ignores_chain_order() {
    let mut traces = ensemble();
    let a = gelman_rubin(&traces).unwrap();
    traces.reverse();
    traces.swap(0, 2);
    assert_eq!(a, gelman_rubin(&traces).unwrap());
}

#[test]
fn binary_delta_is_the_mean_hamming_distance() {
    let mut rng = stream_rng(62, 0);
    let sigma = Ordering::identity(7);
    let truth: Vec<Dag> = (0..5)
        .map(|_| random_ordered_dag(7, 0.3, &sigma, &mut rng).unwrap())
        .collect();
    let est: Vec<Dag> = (0..5)
        .map(|_| random_ordered_dag(7, 0.3, &sigma, &mut rng).unwrap())
        .collect();
    let mean = truth
        .iter()
        .zip(&est)
        .map(|(a, b)| a.hamming(b).unwrap() as f64)
        .sum::<f64>()
        / 5.0;
    assert!((delta_binary(&truth, &est).unwrap() - mean).abs() < 1e-12);
}

#[test]
fn tau_star_of_a_constant_trace_is_kendall_tau() {
    let sigma = Ordering::from_one_based(&[2, 4, 1, 3, 5]).unwrap();
    let star = Ordering::identity(5);
    let graphs = Arc::new(vec![Dag::empty(5)]);
    let samples = (1..=10)
        .map(|iter| Sample {
            iter,
            ordering: sigma.clone(),
            log_post: 0.0,
            graphs: graphs.clone(),
        })
        .collect();
    let trace = ChainTrace {
        config: ChainConfig::new(20, 0),
        initial: sigma.clone(),
        initial_log_post: 0.0,
        samples,
        log_post_path: vec![0.0; 20],
        accepted: vec![false; 20],
        acceptances: 0,
    };
    assert_eq!(
        tau_star(&trace, &star).unwrap(),
        kendall_tau(&star, &sigma).unwrap()
    );
}
