use jod_core::rng::stream_rng;
use jod_core::sampler::{
    adj_equivalent_iterations, mh_step, run_chain, ChainConfig, OrderingTarget, State, TableTarget,
};
use jod_core::{Neighborhood, Ordering};

fn start<T: OrderingTarget>(target: &T, sigma: Ordering) -> State<T::Payload> {
    let (log_post, payload) = target.evaluate(&sigma).unwrap();
    State {
        sigma,
        log_post,
        payload,
        generation: 0,
    }
}

/// Log densities a million apart: uphill moves are always taken, downhill
/// moves never, and nothing overflows.
#[test]
fn extreme_log_differences_are_handled() {
    let top = Ordering::identity(2);
    let target = TableTarget::new(2, |o| if *o == top { 1e6 } else { -1e6 }).unwrap();
    let mut rng = stream_rng(3, 0);
    let mut state = start(&target, top.reversed());
    assert!(mh_step(&target, Neighborhood::R2R, &mut state, &mut rng));
    assert_eq!(state.sigma, top);
    for _ in 0..1000 {
        assert!(!mh_step(&target, Neighborhood::R2R, &mut state, &mut rng));
    }
    assert_eq!(state.log_post, 1e6);
}

#[test]
fn adjacent_swaps_mix_on_a_table_target() {
    let target = TableTarget::new(4, |o| -(o.at(0) as f64)).unwrap();
    let exact = target.probabilities();
    let mut config = ChainConfig::new(200_000, 5);
    config.neighborhood = Neighborhood::Adj;
    config.burn_in = Some(1000);
    let trace = run_chain(&target, &config).unwrap();
    let mut freq = std::collections::HashMap::new();
    for s in &trace.samples {
        *freq.entry(s.ordering.clone()).or_insert(0.0) += 1.0 / trace.samples.len() as f64;
    }
    let tv: f64 = 0.5
        * exact
            .iter()
            .map(|(o, p)| (freq.get(o).unwrap_or(&0.0) - p).abs())
            .sum::<f64>();
    assert!(tv < 0.03, "tv = {tv}");
}

#[test]
fn adj_budget_matches_the_published_run_length() {
    assert_eq!(
        adj_equivalent_iterations(ChainConfig::default_iterations(40), 40),
        213_333
    );
}
