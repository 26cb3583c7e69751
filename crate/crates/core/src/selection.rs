//! MAP parent-set selection given an ordering: greedy forward-backward search
//! and an exhaustive small-scale oracle.

use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

use crate::dag::Dag;
use crate::error::{Error, Result};
use crate::permutations::Ordering;
use crate::scoring::{Dataset, ScoreParams};

/// Largest `p` for which [`exhaustive_map`] accepts an unbounded in-degree.
pub const EXHAUSTIVE_MAX_P_UNBOUNDED: usize = 8;
/// Largest `p` for which [`exhaustive_map`] accepts a small in-degree cap.
pub const EXHAUSTIVE_MAX_P_CAPPED: usize = 12;
/// In-degree cap required above [`EXHAUSTIVE_MAX_P_UNBOUNDED`].
pub const EXHAUSTIVE_MAX_D_CAPPED: usize = 4;

static CAP_WARNED: AtomicBool = AtomicBool::new(false);

/// Score of `j` with the sorted parent list `parents`, or `None` when the
/// design is singular or the residual variance degenerates.
fn try_score(
    ds: &Dataset,
    j: usize,
    parents: &[usize],
    params: &ScoreParams,
) -> Result<Option<f64>> {
    match ds.node_score_sorted(j, parents, params) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Inserts `x` into the sorted vector `v`.
fn sorted_with(v: &[usize], x: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let at = v.partition_point(|&y| y < x);
    out.extend_from_slice(&v[..at]);
    out.push(x);
    out.extend_from_slice(&v[at..]);
    out
}

/// Forward-backward selection of the parents of `j` among `candidates`.
///
/// Returns the sorted parent list and its node score. Fails only when the
/// empty parent set itself cannot be scored.
pub fn select_parents(
    ds: &Dataset,
    j: usize,
    candidates: &[usize],
    params: &ScoreParams,
) -> Result<(Vec<usize>, f64)> {
    let mut cand = candidates.to_vec();
    cand.sort_unstable();
    let cap = params.degree_cap(ds.p());

    let mut current = Vec::new();
    let mut score = ds.node_score_sorted(j, &current, params)?;

    // Forward phase.
    loop {
        let mut best: Option<(usize, f64, f64, Vec<usize>)> = None;
        for &i in &cand {
            if current.binary_search(&i).is_ok() {
                continue;
            }
            let trial = sorted_with(&current, i);
            if let Some(s) = try_score(ds, j, &trial, params)? {
                let gain = s - score;
                if best.as_ref().is_none_or(|b| gain > b.1) {
                    best = Some((i, gain, s, trial));
                }
            }
        }
        match best {
            Some((i, gain, s, trial)) if gain > 0.0 => {
                if current.len() >= cap {
                    if !CAP_WARNED.swap(true, AtomicOrdering::Relaxed) {
                        log::warn!(
                            "in-degree cap {cap} reached for node {} with positive-gain candidate {}; \
                             further hits are not reported",
                            j + 1,
                            i + 1
                        );
                    }
                    break;
                }
                score = s;
                current = trial;
            }
            _ => break,
        }
    }

    // Backward phase.
    while !current.is_empty() {
        let mut best: Option<(usize, f64, f64)> = None;
        for idx in 0..current.len() {
            let mut trial = current.clone();
            trial.remove(idx);
            if let Some(s) = try_score(ds, j, &trial, params)? {
                let gain = s - score;
                if best.is_none_or(|b| gain > b.1) {
                    best = Some((idx, gain, s));
                }
            }
        }
        match best {
            Some((idx, gain, s)) if gain > 0.0 => {
                current.remove(idx);
                score = s;
            }
            _ => break,
        }
    }
    Ok((current, score))
}

/// Forward-backward MAP estimate of the DAG consistent with `sigma`.
pub fn forward_backward(ds: &Dataset, sigma: &Ordering, params: &ScoreParams) -> Result<Dag> {
    check_inputs(ds, sigma, params)?;
    let p = ds.p();
    let mut sets = Vec::with_capacity(p);
    for j in 0..p {
        let (pa, _) = select_parents(ds, j, sigma.predecessor_slice(j), params)?;
        sets.push(pa);
    }
    Ok(Dag::from_parent_sets_unchecked(
        p,
        sets.iter().enumerate().map(|(j, s)| (j, s.as_slice())),
    ))
}

/// Best parent set of `j` over all subsets of `candidates` with at most `cap`
/// elements. Ties go to the smaller set, then the lexicographically smallest
/// sorted label list.
pub fn exhaustive_parents(
    ds: &Dataset,
    j: usize,
    candidates: &[usize],
    cap: usize,
    params: &ScoreParams,
) -> Result<(Vec<usize>, f64)> {
    let mut cand = candidates.to_vec();
    cand.sort_unstable();
    let m = cand.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    // Sizes ascending, combinations in lexicographic order, strict improvement
    // only: the first maximizer met is the tie-break winner.
    for size in 0..=cap.min(m) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let subset: Vec<usize> = idx.iter().map(|&k| cand[k]).collect();
            if let Some(s) = try_score(ds, j, &subset, params)? {
                if best.as_ref().is_none_or(|b| s > b.1) {
                    best = Some((subset, s));
                }
            }
            // Next combination.
            let mut k = size;
            while k > 0 && idx[k - 1] == m - size + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for t in k..size {
                idx[t] = idx[t - 1] + 1;
            }
        }
    }
    best.ok_or(Error::DegenerateVariance { node: j })
}

/// Exhaustive MAP estimate consistent with `sigma`. Limited to `p <= 8`, or
/// `p <= 12` with an in-degree cap of at most 4.
pub fn exhaustive_map(ds: &Dataset, sigma: &Ordering, params: &ScoreParams) -> Result<Dag> {
    check_inputs(ds, sigma, params)?;
    let p = ds.p();
    let cap = params.degree_cap(p);
    let allowed = p <= EXHAUSTIVE_MAX_P_UNBOUNDED
        || (p <= EXHAUSTIVE_MAX_P_CAPPED && cap <= EXHAUSTIVE_MAX_D_CAPPED);
    if !allowed {
        return Err(Error::LimitExceeded(format!(
            "exhaustive MAP supports p <= {EXHAUSTIVE_MAX_P_UNBOUNDED}, or p <= \
             {EXHAUSTIVE_MAX_P_CAPPED} with d <= {EXHAUSTIVE_MAX_D_CAPPED}; got p = {p}, d = {cap}"
        )));
    }
    let mut sets = Vec::with_capacity(p);
    for j in 0..p {
        let (pa, _) = exhaustive_parents(ds, j, sigma.predecessor_slice(j), cap, params)?;
        sets.push(pa);
    }
    Ok(Dag::from_parent_sets_unchecked(
        p,
        sets.iter().enumerate().map(|(j, s)| (j, s.as_slice())),
    ))
}

fn check_inputs(ds: &Dataset, sigma: &Ordering, params: &ScoreParams) -> Result<()> {
    params.validate()?;
    if sigma.len() != ds.p() {
        return Err(Error::DimensionMismatch {
            expected: ds.p(),
            got: sigma.len(),
        });
    }
    Ok(())
}
