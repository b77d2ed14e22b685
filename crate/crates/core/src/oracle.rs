//! Brute-force ground truth: continued-fraction regulators, exhaustive preimages, centres,
//! reduced-ideal enumeration and synthetic hidden-lattice instances.

use crate::error::{Error, Result};
use crate::ideals::{is_invertible, is_reduced, principal_cycle, ReducedIdeal};
use crate::lattice::RealLattice;
use crate::numfield::{is_squarefree, make_field, working_precision, QuadraticField};
use crate::qsim::{build_state, HidingFunction, PreimageState};
use rug::{Float, Integer};
use std::collections::BTreeMap;

/// Fundamental unit x + y√D of ℤ[√D] from one period of the continued fraction of √D.
pub fn fundamental_unit(d: u64) -> Result<(Integer, Integer)> {
    if d < 2 {
        return Err(Error::InvalidDiscriminant(d));
    }
    if !is_squarefree(d) {
        return Err(Error::NotSquarefree(d));
    }
    let s = d.isqrt() as i128;
    let di = d as i128;
    let (mut m, mut den, mut a) = (0i128, 1i128, s);
    let (mut h_prev, mut h) = (Integer::from(1), Integer::from(a));
    let (mut k_prev, mut k) = (Integer::new(), Integer::from(1));
    loop {
        // h/k is the convergent ending at the current partial quotient.
        let norm = Integer::from(h.square_ref()) - Integer::from(k.square_ref()) * d;
        if norm == 1 || norm == -1 {
            return Ok((h, k));
        }
        m = den * a - m;
        den = (di - m * m) / den;
        a = (s + m) / den;
        let h_next = Integer::from(&h * a) + &h_prev;
        let k_next = Integer::from(&k * a) + &k_prev;
        h_prev = std::mem::replace(&mut h, h_next);
        k_prev = std::mem::replace(&mut k, k_next);
    }
}

/// ln(x + y√D) for the fundamental unit, at p bits plus guard.
pub fn cf_regulator(d: u64, p: u32) -> Result<Float> {
    let (x, y) = fundamental_unit(d)?;
    let norm = Integer::from(x.square_ref()) - Integer::from(y.square_ref()) * d;
    assert!(norm == 1 || norm == -1, "Pell self-check failed for D = {d}");
    let wp = working_precision(p) + x.significant_bits();
    let root = Float::with_val(wp, d).sqrt();
    let eps = Float::with_val(wp, &x) + Float::with_val(wp, &y) * root;
    Ok(Float::with_val(working_precision(p), eps.ln()))
}

/// Preimage of `label` by evaluating f on all of [0, q)^dim.
pub fn exhaustive_preimage<F: HidingFunction>(f: &F, q: u64, label: &F::Label) -> Result<PreimageState<F::Label>> {
    let dim = f.dim();
    let bits = dim as u32 * q.trailing_zeros();
    if bits > 20 {
        return Err(Error::DomainTooLarge(bits));
    }
    let mut pts = Vec::new();
    let size = (q as usize).pow(dim as u32);
    let mut v = vec![0i64; dim];
    for idx in 0..size {
        let mut rem = idx;
        for a in (0..dim).rev() {
            v[a] = (rem % q as usize) as i64;
            rem /= q as usize;
        }
        if f.label(&v) == *label {
            pts.extend_from_slice(&v);
        }
    }
    Ok(build_state(f, label.clone(), pts, q))
}

/// Point minimizing the sum of Euclidean distances to the set; ties go to the lexicographically least.
pub fn centre(points: &[Vec<i64>]) -> Result<Vec<i64>> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    let cost = |p: &Vec<i64>| -> f64 {
        points
            .iter()
            .map(|x| {
                x.iter()
                    .zip(p)
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    };
    let mut best: Option<(f64, &Vec<i64>)> = None;
    for p in points {
        let c = cost(p);
        best = match best {
            None => Some((c, p)),
            Some((bc, bp)) => {
                let tie = (c - bc).abs() <= 1e-9 * bc.max(1.0);
                if (tie && p < bp) || (!tie && c < bc) {
                    Some((c, p))
                } else {
                    Some((bc, bp))
                }
            }
        };
    }
    Ok(best.unwrap().1.clone())
}

/// All invertible reduced ideals (P, Q) of ℤ[√D], sorted by label.
pub fn all_reduced_ideals(field: &QuadraticField) -> Vec<ReducedIdeal> {
    let s = field.isqrt();
    let mut out = Vec::new();
    for q in 1..=2 * s + 1 {
        for p in (s - q + 1).max(-s)..=s {
            if is_reduced(field.d(), p, q) && is_invertible(field.d(), p, q) {
                out.push(ReducedIdeal { p, q });
            }
        }
    }
    out.sort();
    out
}

/// Least reduced ideal off the principal cycle, if any.
pub fn nonprincipal_ideal(d: u64, p: u32) -> Result<Option<ReducedIdeal>> {
    let field = make_field(d)?;
    let cycle = principal_cycle(&field, p)?;
    Ok(all_reduced_ideals(&field)
        .into_iter()
        .find(|i| cycle.position(i).is_none()))
}

/// Hidden-lattice instance v ↦ (displacement bucket of v from the nearest point of NΛ).
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    lattice: RealLattice<f64>,
    scaled: RealLattice<f64>,
    inverse: Vec<Vec<f64>>,
    n: u64,
    bucket: u64,
    q: u64,
    preimages: BTreeMap<Vec<i64>, Vec<i64>>,
}

/// Smallest allowed q^r / det(NΛ).
pub const MIN_TRANSLATES: f64 = 8.0;

pub fn make_synthetic(lattice: &RealLattice<f64>, n: u64, bucket: u64, q: u64) -> Result<SyntheticOracle> {
    if bucket == 0 {
        return Err(Error::InvalidParams("bucket width must be at least 1".into()));
    }
    if !lattice.is_well_conditioned(1e3) {
        return Err(Error::IllConditioned(format!(
            "condition number {:.3e}",
            lattice.condition_number()
        )));
    }
    let r = lattice.rank();
    let scaled = lattice.scaled(n as f64)?;
    let translates = (q as f64).powi(r as i32) / scaled.det().abs();
    if translates < MIN_TRANSLATES {
        return Err(Error::IllConditioned(format!(
            "only {translates:.2} translates of NΛ fit in the domain"
        )));
    }
    let bits = r as u32 * q.trailing_zeros();
    if bits > 20 {
        return Err(Error::DomainTooLarge(bits));
    }
    let inverse = scaled.inverse_rows()?;
    let mut oracle = SyntheticOracle {
        lattice: lattice.clone(),
        scaled,
        inverse,
        n,
        bucket,
        q,
        preimages: BTreeMap::new(),
    };
    let size = (q as usize).pow(r as u32);
    let mut v = vec![0i64; r];
    let mut pre: BTreeMap<Vec<i64>, Vec<i64>> = BTreeMap::new();
    for idx in 0..size {
        let mut rem = idx;
        for a in (0..r).rev() {
            v[a] = (rem % q as usize) as i64;
            rem /= q as usize;
        }
        pre.entry(oracle.eval(&v)).or_default().extend_from_slice(&v);
    }
    oracle.preimages = pre;
    Ok(oracle)
}

impl SyntheticOracle {
    pub fn lattice(&self) -> &RealLattice<f64> {
        &self.lattice
    }

    /// NΛ.
    pub fn scaled_lattice(&self) -> &RealLattice<f64> {
        &self.scaled
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    fn nearest(&self, v: &[i64]) -> Vec<i64> {
        self.inverse
            .iter()
            .map(|row| {
                let y: f64 = row.iter().zip(v).map(|(a, &b)| a * b as f64).sum();
                y.round() as i64
            })
            .collect()
    }

    pub fn eval(&self, v: &[i64]) -> Vec<i64> {
        let id = self.nearest(v);
        let y: Vec<f64> = id.iter().map(|&x| x as f64).collect();
        let p = self.scaled.combine(&y);
        let b = self.bucket as f64;
        v.iter()
            .zip(&p)
            .map(|(&x, &l)| ((x as f64 - l + b / 2.0) / b).floor() as i64)
            .collect()
    }
}

impl HidingFunction for SyntheticOracle {
    type Label = Vec<i64>;

    fn dim(&self) -> usize {
        self.lattice.rank()
    }

    fn grid_scale(&self) -> f64 {
        self.n as f64
    }

    fn label(&self, v: &[i64]) -> Vec<i64> {
        self.eval(v)
    }

    fn translate_id(&self, v: &[i64], _label: &Vec<i64>) -> Vec<i64> {
        self.nearest(v)
    }

    fn period_basis(&self) -> Vec<Vec<f64>> {
        self.scaled.columns().to_vec()
    }

    fn labels(&self) -> Vec<Vec<i64>> {
        self.preimages.keys().cloned().collect()
    }

    fn preimage(&self, label: &Vec<i64>, q: u64) -> Vec<i64> {
        assert_eq!(q, self.q, "synthetic oracle built for q = {}", self.q);
        self.preimages.get(label).cloned().unwrap_or_default()
    }
}
