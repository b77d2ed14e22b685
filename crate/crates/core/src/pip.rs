//! Principal ideal testing: recover the period lattice of g_N and read off a generator's distance.

use crate::error::{Error, Result};
use crate::ideals::{principal_cycle, verify_generator, ExperimentParams, IdealPowerFunction, ReducedIdeal};
use crate::lattice::{dual_basis, RealLattice};
use crate::numfield::{working_precision, QuadraticField};
use crate::qsim::dual_candidate;
use crate::unitgroup::{consensus_recover_share, run_unit_group_field, sample_trials, with_workers, RunConfig};
use rug::Float;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct PipInstance {
    pub field: QuadraticField,
    pub ideal: ReducedIdeal,
    /// Distance of the ideal on the principal cycle; used only by tests.
    pub theta: Option<f64>,
    /// Parameters of g_N on ℤ^2.
    pub params: ExperimentParams,
    /// Parameters of the preliminary unit-group run.
    pub unit_params: ExperimentParams,
    pub unit_trials: usize,
}

impl PipInstance {
    pub fn new(field: QuadraticField, ideal: ReducedIdeal, params: ExperimentParams, unit_params: ExperimentParams) -> Result<Self> {
        if params.r != 2 {
            return Err(Error::InvalidParams("g_N acts on ℤ^2".into()));
        }
        let ideal = ReducedIdeal::new(&field, ideal.p, ideal.q)?;
        let cycle = principal_cycle(&field, params.precision)?;
        let theta = cycle.position(&ideal).map(|i| cycle.distance(i).to_f64());
        Ok(PipInstance {
            field,
            ideal,
            theta,
            params,
            unit_params,
            unit_trials: 200,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "theta")]
pub enum Verdict {
    Principal(f64),
    NotPrincipal,
}

#[derive(Debug, Clone)]
pub struct PipResult {
    pub verdict: Verdict,
    /// Accepted samples.
    pub samples: usize,
    pub coprime_attempts: usize,
    /// Recovered period lattice Λ̄, when the samples determined one.
    pub period_lattice: Option<RealLattice<f64>>,
    /// Regulator estimate used for the final reduction.
    pub regulator: Option<f64>,
    pub trials: usize,
    pub restarts: usize,
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// x·(c, f₁) + y·(d, f₂) with xc + yd = 1.
pub fn combine_coprime(cvec: (i64, f64), dvec: (i64, f64)) -> Result<(i64, f64)> {
    let (c, f1) = cvec;
    let (d, f2) = dvec;
    if c == 1 {
        return Ok((1, f1));
    }
    if d == 1 {
        return Ok((1, f2));
    }
    let (g, x, y) = ext_gcd(c, d);
    if g != 1 {
        return Err(Error::NotCoprime(c, d));
    }
    Ok((x * c + y * d, x as f64 * f1 + y as f64 * f2))
}

fn gcd(a: i64, b: i64) -> i64 {
    ext_gcd(a, b).0
}

/// Short vectors of Λ̄ with integral first coordinate, basis columns first.
fn generators(l: &RealLattice<f64>) -> Result<Vec<(i64, f64)>> {
    let mut out = Vec::new();
    for (i, j) in [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)] {
        let v = l.combine(&[i as f64, j as f64]);
        let b = v[0].round();
        if (v[0] - b).abs() > 0.05 {
            return Err(Error::Inconclusive(format!(
                "first coordinate {:.4} of a recovered period is not integral",
                v[0]
            )));
        }
        out.push((b as i64, v[1]));
    }
    Ok(out)
}

pub fn run_pip(instance: &PipInstance, config: &RunConfig) -> Result<PipResult> {
    let field = &instance.field;
    let params = &instance.params;
    let n = params.n as f64;
    let cycle = principal_cycle(field, params.precision)?;
    let unit_cfg = RunConfig {
        trials: instance.unit_trials,
        ..*config
    };
    let regulator = match run_unit_group_field(field, &instance.unit_params, &unit_cfg) {
        Ok(r) => r.regulator,
        Err(Error::Inconclusive(_)) => None,
        Err(e) => return Err(e),
    };
    let g = IdealPowerFunction::new(field, &instance.ideal, params.n, params.precision)?;
    let run = with_workers(config.workers, || sample_trials(&g, params, config))?;
    let eta = params.eta();
    let mut candidates: Vec<Vec<f64>> = run.accepted().map(|c| dual_candidate(c, params)).collect();
    let samples = candidates.len();
    if let Some(r) = regulator {
        candidates = candidates.into_iter().filter_map(|c| snap_to_period(c, n * r, eta)).collect();
    }
    let finish = |verdict, lattice, attempts| PipResult {
        verdict,
        samples,
        coprime_attempts: attempts,
        period_lattice: lattice,
        regulator,
        trials: config.trials,
        restarts: run.restarts(),
    };
    let (u, step, lattice, mut attempts) = match consensus_recover_share(&candidates, &[vec![1.0, 0.0]], eta, 2, INLIER_SHARE) {
        Ok(dual) => {
            let dual = match regulator {
                Some(r) => snap_basis(&dual, n * r)?,
                None => dual,
            };
            let lat = dual_basis(&dual)?;
            let gens = generators(&lat)?;
            let common = gens.iter().fold(0, |acc, &(b, _)| gcd(acc, b));
            if common != 1 {
                return Ok(finish(Verdict::NotPrincipal, Some(lat), 0));
            }
            let mut attempts = 0;
            let mut found = None;
            'outer: for i in 0..gens.len() {
                for j in i + 1..gens.len() {
                    attempts += 1;
                    if gcd(gens[i].0, gens[j].0) == 1 {
                        found = Some(combine_coprime(gens[i], gens[j])?);
                        break 'outer;
                    }
                }
            }
            let Some((_, u)) = found else {
                return Err(Error::Inconclusive("no coprime pair among recovered periods".into()));
            };
            // Generator (0, s) of the recovered periods with first coordinate zero.
            let (b1, b2) = (gens[0].0, gens[1].0);
            let step = (b2 as f64 * gens[0].1 - b1 as f64 * gens[1].1).abs() / gcd(b1, b2).max(1) as f64;
            (u, Some(step), Some(lat), attempts)
        }
        // Only the known period direction was observed: Λ̄* ⊂ ℤ × ℝ forces (1, 0) ∈ Λ̄.
        Err(Error::RankDeficient(_)) => (0.0, None, None, 0),
        Err(e) => return Err(e),
    };
    let wp = working_precision(params.precision);
    let canonical = |t: f64| match regulator {
        Some(r) => t - r * (t / r).floor(),
        None => t,
    };
    // The window may only expose a sublattice of Λ̄*, so the recovered periods can be a
    // superlattice of Λ̄ of index NR/s; every coset with first coordinate one is a candidate.
    let (cosets, step) = match (regulator, step) {
        (Some(r), Some(s)) if s > 0.0 => {
            let ratio = n * r / s;
            if (ratio - ratio.round()).abs() < 0.05 && ratio.round() >= 1.0 {
                let count = (ratio.round() as usize).min(MAX_COSETS);
                (count, n * r / ratio.round())
            } else {
                (1, 0.0)
            }
        }
        _ => (1, 0.0),
    };
    for t in 0..cosets {
        attempts += 1;
        let theta = canonical((u + t as f64 * step) / n);
        if verify_generator(&Float::with_val(wp, theta), &instance.ideal, &cycle) {
            return Ok(finish(Verdict::Principal(theta), lattice, attempts));
        }
    }
    Ok(finish(Verdict::NotPrincipal, lattice, attempts))
}

/// Leakage from the truncated window is a larger share of g_N samples than of f_N samples.
pub const INLIER_SHARE: f64 = 0.6;

/// Coset candidates tried before declaring the ideal non-principal.
pub const MAX_COSETS: usize = 64;

/// (0, NR) ∈ Λ̄ puts every dual second coordinate on (1/NR)ℤ.
fn snap_basis(dual: &RealLattice<f64>, nr: f64) -> Result<RealLattice<f64>> {
    let cols: Vec<Vec<f64>> = dual
        .columns()
        .iter()
        .map(|c| vec![c[0], (c[1] * nr).round() / nr])
        .collect();
    RealLattice::new(cols, dual.precision())
}

/// Keeps dual samples whose second coordinate is within 0.3 of a multiple of 1/(NR), snapped onto it.
/// Samples on the line y = 0 are only periods of ℤ × ℝ and carry no information.
fn snap_to_period(c: Vec<f64>, nr: f64, eta: f64) -> Option<Vec<f64>> {
    let j = c[1] * nr;
    let jr = j.round();
    if (j - jr).abs() > 0.3 {
        return None;
    }
    if jr == 0.0 && c[0].abs() > 10.0 * eta {
        return None;
    }
    Some(vec![c[0], jr / nr])
}

/// Default desk-scale parameters: g_N with N = 64, q = 2^10, k = 1 and the unit-group run with
/// N = 64, q = 2^16, k = 3.
/// Trials for the default instance; at least 64·ln q.
pub const DEFAULT_PIP_TRIALS: usize = 500;

pub fn default_instance(field: QuadraticField, ideal: ReducedIdeal, precision: u32) -> Result<PipInstance> {
    let params = ExperimentParams::new(2, 64, 1 << 10, 1, precision)?;
    let unit_params = ExperimentParams::new(1, 64, 1 << 16, 3, precision)?;
    PipInstance::new(field, ideal, params, unit_params)
}
