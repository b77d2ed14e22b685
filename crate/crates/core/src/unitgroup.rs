//! End-to-end unit-group computation: sampling, filtering, dual recovery and reconstruction.

use crate::error::{Error, Result};
use crate::ideals::{principal_cycle, ExperimentParams, UnitFunction};
use crate::lattice::{
    primal_from_dual, recover_basis, reduce_mod, refine_least_squares, residual_inf, RealLattice,
    RecoveryParams,
};
use crate::numfield::{FieldElement, QuadraticField};
use crate::oracle::MIN_TRANSLATES;
use crate::qsim::{
    accept, accept_half, collapse_label, dual_candidate, is_valid_state, window_spectrum, HidingFunction,
    SpectrumDistribution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
}

impl RunConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        RunConfig {
            trials,
            seed,
            workers: 1,
        }
    }
}

/// Independent stream for one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs `op` on a pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    Ok(pool.install(op))
}

/// Per-label data shared by every trial that collapses onto the label.
#[derive(Debug, Clone)]
pub struct LabelData {
    pub valid: bool,
    /// Measured radius in logarithmic units.
    pub beta: f64,
    pub size: usize,
    /// Exact probabilities of the accepted box.
    pub window: Option<SpectrumDistribution<f64>>,
}

pub fn label_data<F: HidingFunction>(f: &F, params: &ExperimentParams, label: F::Label) -> LabelData {
    let state = collapse_label(f, params, label);
    let valid = is_valid_state(&state);
    let beta = state.beta();
    let window = valid.then(|| {
        let half = accept_half(params, beta);
        window_spectrum::<f64>(&state.points, state.dim, params.q, params.k, half)
    });
    LabelData {
        valid,
        beta,
        size: state.size(),
        window,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub restart: bool,
    /// Accepted outcome c, centered mod qk.
    pub outcome: Option<Vec<i64>>,
}

/// Outcomes of all trials, in trial order.
#[derive(Debug, Clone)]
pub struct SamplingRun {
    pub records: Vec<TrialRecord>,
    pub max_beta: f64,
}

impl SamplingRun {
    pub fn restarts(&self) -> usize {
        self.records.iter().filter(|r| r.restart || r.outcome.is_none()).count()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.records.iter().filter_map(|r| r.outcome.as_ref())
    }
}

/// Simulates `trials` independent runs of measurement, transform and filtered sampling.
pub fn sample_trials<F: HidingFunction>(f: &F, params: &ExperimentParams, config: &RunConfig) -> SamplingRun {
    let dim = f.dim();
    let draws: Vec<(F::Label, ChaCha8Rng)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.seed, t);
            let w: Vec<i64> = (0..dim).map(|_| rng.gen_range(0..params.q as i64)).collect();
            (f.label(&w), rng)
        })
        .collect();
    let mut labels: Vec<F::Label> = draws.iter().map(|(l, _)| l.clone()).collect();
    labels.sort();
    labels.dedup();
    let cache: BTreeMap<F::Label, LabelData> = labels
        .par_iter()
        .map(|l| (l.clone(), label_data(f, params, l.clone())))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let records = draws
        .into_par_iter()
        .map(|(label, mut rng)| {
            let data = &cache[&label];
            match &data.window {
                None => TrialRecord {
                    restart: true,
                    outcome: None,
                },
                Some(w) => {
                    let outcome = w.sample(&mut rng).filter(|c| accept(c, params, data.beta));
                    TrialRecord {
                        restart: false,
                        outcome,
                    }
                }
            }
        })
        .collect();
    let max_beta = cache.values().filter(|d| d.valid).map(|d| d.beta).fold(0.0, f64::max);
    SamplingRun { records, max_beta }
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.abs()))
}

const POOL: usize = 14;
const INLIER_SHARE: f64 = 0.85;
const COARSE_SLACK: f64 = 0.9;
const CHANCE_LIMIT: f64 = 0.5;

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Least-squares fit, tightening the inlier tolerance from 10η down to η.
/// Refits at shrinking tolerances; a refit that loses inliers at 10η is discarded.
fn tighten(l: &RealLattice<f64>, samples: &[Vec<f64>], nonzero: &[&Vec<f64>], eta: f64) -> RealLattice<f64> {
    let inliers = |m: &RealLattice<f64>| nonzero.iter().filter(|s| residual_inf(m, s) <= 10.0 * eta).count();
    let mut cur = l.clone();
    let mut kept = inliers(&cur);
    for factor in [10.0, 5.0, 3.0, 2.0, 1.0] {
        let (fit, used) = refine_least_squares(&cur, samples, factor * eta);
        if used >= cur.rank() && inliers(&fit) >= kept {
            kept = inliers(&fit);
            cur = fit;
        }
    }
    cur
}

/// Robust recovery from candidates that may contain a few non-lattice outliers.
///
/// Candidate lattices come from small subsets of the shortest nonzero samples (plus `fixed`
/// exact generators, which every candidate must keep). Among those explaining at least 85% as many
/// samples as the best, the coarsest is kept, with near-equal determinants settled by fit quality.
pub fn consensus_recover(candidates: &[Vec<f64>], fixed: &[Vec<f64>], eta: f64, rank: usize) -> Result<RealLattice<f64>> {
    consensus_recover_share(candidates, fixed, eta, rank, INLIER_SHARE)
}

/// As [`consensus_recover`] with an explicit inlier share in (0, 1].
pub fn consensus_recover_share(
    candidates: &[Vec<f64>],
    fixed: &[Vec<f64>],
    eta: f64,
    rank: usize,
    share: f64,
) -> Result<RealLattice<f64>> {
    let tol = 10.0 * eta;
    let mut nonzero: Vec<&Vec<f64>> = candidates.iter().filter(|s| norm_inf(s) > tol).collect();
    nonzero.sort_by(|a, b| {
        let (na, nb): (f64, f64) = (a.iter().map(|x| x * x).sum(), b.iter().map(|x| x * x).sum());
        na.partial_cmp(&nb).unwrap().then_with(|| a.partial_cmp(b).unwrap())
    });
    // Peak centres repeat; the most frequent distinct samples come first, shorter ones on ties.
    let mut distinct: Vec<(usize, &Vec<f64>)> = Vec::new();
    for s in &nonzero {
        match distinct.iter_mut().find(|(_, d)| d == s) {
            Some(entry) => entry.0 += 1,
            None => distinct.push((1, s)),
        }
    }
    distinct.sort_by_key(|d| std::cmp::Reverse(d.0));
    let pool: Vec<Vec<f64>> = distinct.iter().take(POOL).map(|(_, s)| (*s).clone()).collect();
    // Exact generators weigh as much as all samples together in the fits.
    let weighted: Vec<Vec<f64>> = candidates
        .iter()
        .cloned()
        .chain(fixed.iter().flat_map(|f| std::iter::repeat_n(f.clone(), candidates.len().max(1))))
        .collect();
    let params = RecoveryParams {
        noise: eta,
        rank,
        bound: None,
        precision: 96,
    };
    let need = rank.saturating_sub(fixed.len()).max(1);
    let mut scored: Vec<(usize, f64, f64, RealLattice<f64>)> = Vec::new();
    for size in need..=need + 1 {
        for idx in subsets(pool.len(), size) {
            let mut gen: Vec<Vec<f64>> = fixed.to_vec();
            gen.extend(idx.iter().map(|&i| pool[i].clone()));
            let Ok(l) = recover_basis(&gen, &params) else {
                continue;
            };
            let (fit, _) = refine_least_squares(&l, &weighted, tol);
            if fixed.iter().any(|f| residual_inf(&fit, f) > tol) {
                continue;
            }
            // Share of uniform random points that fall within tol of the lattice.
            let chance = (2.0 * tol).powi(rank as i32) / fit.det().abs();
            if chance > CHANCE_LIMIT {
                continue;
            }
            let inliers: Vec<f64> = nonzero.iter().map(|s| residual_inf(&fit, s)).filter(|&e| e <= tol).collect();
            let spread = inliers.iter().sum::<f64>() / inliers.len().max(1) as f64;
            scored.push((inliers.len(), fit.det().abs(), spread, fit));
        }
    }
    let best = scored.iter().map(|s| s.0).max().ok_or(Error::RankDeficient(rank))?;
    let floor = (share * best as f64).ceil() as usize;
    scored.retain(|s| s.0 >= floor);
    let coarsest = scored.iter().map(|s| s.1).fold(0.0, f64::max);
    // Fits of one lattice differ in det by the sample noise only; the tightest of them wins.
    let chosen = scored
        .into_iter()
        .filter(|s| s.1 >= COARSE_SLACK * coarsest)
        .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(b.0.cmp(&a.0)))
        .map(|s| s.3)
        .ok_or(Error::RankDeficient(rank))?;
    Ok(tighten(&chosen, &weighted, &nonzero, eta))
}

/// First accepted-sample index after which recover_basis stayed unchanged for `2r` additions.
pub fn stabilization_point(candidates: &[Vec<f64>], eta: f64, rank: usize) -> Option<usize> {
    let tol = 10.0 * eta;
    let params = RecoveryParams {
        noise: eta,
        rank,
        bound: None,
        precision: 96,
    };
    let mut current: Option<RealLattice<f64>> = None;
    let mut run = 0;
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for (i, s) in candidates.iter().enumerate() {
        if norm_inf(s) <= tol {
            continue;
        }
        seen.push(s.clone());
        match &current {
            Some(l) if residual_inf(l, s) <= tol => {
                run += 1;
                if run >= 2 * rank {
                    return Some(i);
                }
            }
            _ => {
                current = recover_basis(&seen, &params).ok();
                run = 0;
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitGroupStats {
    pub trials: usize,
    pub restarts: usize,
    pub accepted: usize,
    pub nonzero: usize,
    /// Accepted samples within η of the recovered dual lattice.
    pub good: usize,
    pub success_rate: f64,
    pub stabilized_at: Option<usize>,
    pub max_beta: f64,
}

#[derive(Debug, Clone)]
pub struct UnitGroupResult {
    /// Approximation of (NΛ)*.
    pub dual: RealLattice<f64>,
    /// Approximation of Λ.
    pub lattice: RealLattice<f64>,
    pub regulator: Option<f64>,
    pub fundamental_unit: Option<FieldElement>,
    pub stats: UnitGroupStats,
    /// q^r / det(NΛ) below the guard ratio.
    pub ill_conditioned: bool,
}

/// Algorithm core shared by number-field and synthetic instances.
pub fn run_unit_group<F: HidingFunction>(f: &F, params: &ExperimentParams, config: &RunConfig) -> Result<UnitGroupResult> {
    let run = with_workers(config.workers, || sample_trials(f, params, config))?;
    let eta = params.eta();
    let outcomes: Vec<&Vec<i64>> = run.accepted().collect();
    let candidates: Vec<Vec<f64>> = outcomes.iter().map(|c| dual_candidate(c, params)).collect();
    let nonzero = candidates.iter().filter(|s| norm_inf(s) > 10.0 * eta).count();
    if nonzero == 0 {
        return Err(Error::Inconclusive(format!(
            "no nonzero accepted samples in {} trials",
            config.trials
        )));
    }
    let stabilized_at = stabilization_point(&candidates, eta, f.dim());
    if stabilized_at.is_none() {
        return Err(Error::Inconclusive(format!(
            "recovered basis did not stabilize within {} trials",
            config.trials
        )));
    }
    let dual = match consensus_recover(&candidates, &[], eta, f.dim()) {
        Err(Error::RankDeficient(_)) => {
            return Err(Error::Inconclusive("no lattice of full rank explains the samples".into()));
        }
        other => other?,
    };
    let lattice = primal_from_dual(&dual, params.n)?;
    let good = candidates.iter().filter(|s| residual_inf(&dual, s) <= eta).count();
    let scaled_det = 1.0 / dual.det().abs();
    let ill_conditioned = (params.q as f64).powi(f.dim() as i32) / scaled_det < MIN_TRANSLATES;
    Ok(UnitGroupResult {
        dual,
        lattice,
        regulator: None,
        fundamental_unit: None,
        stats: UnitGroupStats {
            trials: config.trials,
            restarts: run.restarts(),
            accepted: candidates.len(),
            nonzero,
            good,
            success_rate: good as f64 / config.trials as f64,
            stabilized_at,
            max_beta: run.max_beta,
        },
        ill_conditioned,
    })
}

/// Regulator and fundamental unit of ℤ[√D] through f_N.
pub fn run_unit_group_field(field: &QuadraticField, params: &ExperimentParams, config: &RunConfig) -> Result<UnitGroupResult> {
    if params.r != 1 {
        return Err(Error::InvalidParams("real quadratic fields have rank 1".into()));
    }
    let f = UnitFunction::new(principal_cycle(field, params.precision)?, params.n);
    let mut result = run_unit_group(&f, params, config)?;
    let r = result.lattice.column(0)[0].abs();
    let Some(unit) = field.unit_from_log(r) else {
        return Err(Error::Inconclusive(format!("exp({r:.6}) does not round to a unit")));
    };
    result.regulator = Some(r);
    result.fundamental_unit = Some(unit);
    Ok(result)
}

/// Σ P(c) over accepted c within 1/(2qk) of the dual lattice, from exact spectra.
pub fn empirical_success<F: HidingFunction>(f: &F, params: &ExperimentParams, dual: &RealLattice<f64>) -> Result<f64> {
    let dim = f.dim();
    let bits = dim as f64 * (params.qk() as f64).log2();
    if bits > 24.0 {
        return Err(Error::DomainTooLarge(bits.ceil() as u32));
    }
    let eta = params.eta();
    let domain = (params.q as f64).powi(dim as i32);
    let labels = f.labels();
    let parts: Vec<f64> = labels
        .par_iter()
        .map(|l| {
            let data = label_data(f, params, l.clone());
            let Some(w) = &data.window else {
                return 0.0;
            };
            let good: f64 = (0..w.len())
                .filter(|&i| accept(w.outcome(i), params, data.beta))
                .filter(|&i| {
                    let x = dual_candidate(w.outcome(i), params);
                    let res = reduce_mod(dual, &x).map(|r| norm_inf(&r)).unwrap_or(f64::INFINITY);
                    res <= eta * (1.0 + 1e-9)
                })
                .map(|i| w.probs[i])
                .sum();
            good * data.size as f64 / domain
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Lemma-style lower bound (100·(3r)^(2r)·5^r)⁻¹.
pub fn success_bound(r: usize) -> f64 {
    let r = r as i32;
    1.0 / (100.0 * (3.0 * r as f64).powi(2 * r) * 5f64.powi(r))
}
