//! Classical simulation of the measurement, zero-filled transform and outcome sampling.

use crate::error::{Error, Result};
use crate::ideals::ExperimentParams;
use crate::oracle::centre;
use num_complex::Complex;
use num_traits::{Float, FloatConst, NumCast};
use rand::Rng;
use rayon::prelude::*;
use rustfft::{FftNum, FftPlanner};
use std::collections::BTreeMap;
use std::fmt::Debug;
use std::hash::Hash;

/// A many-to-one function on ℤ^dim hiding a period lattice.
pub trait HidingFunction: Sync {
    type Label: Clone + Eq + Ord + Hash + Debug + Send + Sync;

    fn dim(&self) -> usize;

    /// Grid refinement N; measured widths divide by it to give logarithmic units.
    fn grid_scale(&self) -> f64;

    fn label(&self, v: &[i64]) -> Self::Label;

    /// Integer coordinates of the lattice translate containing v, relative to `period_basis`.
    fn translate_id(&self, v: &[i64], label: &Self::Label) -> Vec<i64>;

    /// Columns of the hidden period lattice in grid units. Diagnostics only.
    fn period_basis(&self) -> Vec<Vec<f64>>;

    /// Every label the function takes, sorted.
    fn labels(&self) -> Vec<Self::Label>;

    /// Flat, lexicographically sorted preimage of `label` inside [0, q)^dim.
    fn preimage(&self, label: &Self::Label, q: u64) -> Vec<i64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslateGroup {
    pub id: Vec<i64>,
    pub count: usize,
    pub min: Vec<i64>,
    pub max: Vec<i64>,
    /// Half of the extent along each axis, in grid units.
    pub half_width: Vec<f64>,
    pub centre: Vec<i64>,
    /// Centre displacement from the reference translate minus the lattice translation, up to a
    /// common shift chosen to centre the range over complete translates.
    pub offset: Vec<f64>,
    /// False when the group touches the domain boundary.
    pub complete: bool,
}

/// Support of the first register after the second register is measured.
#[derive(Debug, Clone)]
pub struct PreimageState<L> {
    pub label: L,
    pub dim: usize,
    pub q: u64,
    pub scale: f64,
    /// Flat list of support points.
    pub points: Vec<i64>,
    pub translates: Vec<TranslateGroup>,
}

impl<L> PreimageState<L> {
    pub fn size(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn interior(&self) -> impl Iterator<Item = &TranslateGroup> {
        self.translates.iter().filter(|t| t.complete)
    }

    pub fn complete_translates(&self) -> usize {
        self.interior().count()
    }

    /// Largest per-axis half-width over all translates, in grid units.
    pub fn beta_grid(&self) -> f64 {
        self.translates
            .iter()
            .flat_map(|t| t.half_width.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Largest half-width in logarithmic units, the radius passed to `accept`.
    pub fn beta(&self) -> f64 {
        self.beta_grid() / self.scale
    }

    /// max over interior translates n, n' of ‖β(n) − β(n')‖∞.
    pub fn half_width_variation(&self) -> f64 {
        let mut worst = 0f64;
        for axis in 0..self.dim {
            let vals: Vec<f64> = self.interior().map(|t| t.half_width[axis]).collect();
            if let (Some(lo), Some(hi)) = (
                vals.iter().copied().reduce(f64::min),
                vals.iter().copied().reduce(f64::max),
            ) {
                worst = worst.max(hi - lo);
            }
        }
        worst
    }

    /// max over interior translates of ‖ρ‖∞.
    pub fn max_offset(&self) -> f64 {
        self.interior()
            .flat_map(|t| t.offset.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }
}

/// Groups a preimage into translates and measures their geometry.
pub fn build_state<F: HidingFunction>(f: &F, label: F::Label, points: Vec<i64>, q: u64) -> PreimageState<F::Label> {
    let dim = f.dim();
    let mut groups: BTreeMap<Vec<i64>, Vec<i64>> = BTreeMap::new();
    for p in points.chunks(dim) {
        groups
            .entry(f.translate_id(p, &label))
            .or_default()
            .extend_from_slice(p);
    }
    let basis = f.period_basis();
    let mut translates: Vec<TranslateGroup> = groups
        .into_iter()
        .map(|(id, pts)| {
            let count = pts.len() / dim;
            let min: Vec<i64> = (0..dim)
                .map(|a| pts.iter().skip(a).step_by(dim).copied().min().unwrap())
                .collect();
            let max: Vec<i64> = (0..dim)
                .map(|a| pts.iter().skip(a).step_by(dim).copied().max().unwrap())
                .collect();
            let half_width = min.iter().zip(&max).map(|(a, b)| (b - a) as f64 / 2.0).collect();
            let complete = min.iter().all(|&x| x > 0) && max.iter().all(|&x| x < q as i64 - 1);
            let vecs: Vec<Vec<i64>> = pts.chunks(dim).map(|c| c.to_vec()).collect();
            TranslateGroup {
                id,
                count,
                min,
                max,
                half_width,
                centre: centre(&vecs).expect("nonempty group"),
                offset: vec![0.0; dim],
                complete,
            }
        })
        .collect();
    let reference = translates
        .iter()
        .position(|t| t.complete)
        .unwrap_or(0);
    if !translates.is_empty() {
        let (rc, rid) = (translates[reference].centre.clone(), translates[reference].id.clone());
        for t in &mut translates {
            for axis in 0..dim {
                let shift: f64 = (0..basis.len())
                    .map(|b| basis[b][axis] * (t.id[b] - rid[b]) as f64)
                    .sum();
                t.offset[axis] = (t.centre[axis] - rc[axis]) as f64 - shift;
            }
        }
        // Offsets are defined up to a common real shift; remove the one centring their range.
        for axis in 0..dim {
            let vals = translates.iter().filter(|t| t.complete).map(|t| t.offset[axis]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            if lo.is_finite() {
                let mid = (lo + hi) / 2.0;
                for t in &mut translates {
                    t.offset[axis] -= mid;
                }
            }
        }
    }
    PreimageState {
        label,
        dim,
        q,
        scale: f.grid_scale(),
        points,
        translates,
    }
}

/// Periodicity test: at least two complete translates whose half-widths differ by at most 2.
pub fn is_valid_state<L>(state: &PreimageState<L>) -> bool {
    state.complete_translates() >= 2 && state.half_width_variation() <= 2.0
}

/// Draws w uniformly from ℤ_q^dim and returns the preimage of f(w).
pub fn collapse<F: HidingFunction, R: Rng>(
    f: &F,
    params: &ExperimentParams,
    rng: &mut R,
) -> Result<PreimageState<F::Label>> {
    let w: Vec<i64> = (0..f.dim()).map(|_| rng.gen_range(0..params.q as i64)).collect();
    let label = f.label(&w);
    let state = collapse_label(f, params, label);
    if is_valid_state(&state) {
        Ok(state)
    } else {
        Err(Error::RestartRequired)
    }
}

pub fn collapse_label<F: HidingFunction>(f: &F, params: &ExperimentParams, label: F::Label) -> PreimageState<F::Label> {
    let points = f.preimage(&label, params.q);
    build_state(f, label, points, params.q)
}

/// Outcome probabilities over ℤ_{qk}^dim, stored for an explicit list of outcomes.
#[derive(Debug, Clone)]
pub struct SpectrumDistribution<T> {
    pub dim: usize,
    pub q: u64,
    pub k: u64,
    /// Flat centered residues of each listed outcome.
    pub coords: Vec<i64>,
    pub probs: Vec<T>,
    /// Probability of all listed outcomes; 1 for a full spectrum, less for a window.
    pub mass: f64,
    cumulative: Vec<f64>,
}

/// Residue of c mod m in [−m/2, m/2).
pub fn centered(c: i64, m: u64) -> i64 {
    let m = m as i64;
    let r = c.rem_euclid(m);
    if r >= m / 2 {
        r - m
    } else {
        r
    }
}

impl<T: Float> SpectrumDistribution<T> {
    fn from_parts(dim: usize, q: u64, k: u64, coords: Vec<i64>, probs: Vec<T>) -> Self {
        let mut acc = 0f64;
        let cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p.to_f64().unwrap();
                acc
            })
            .collect();
        SpectrumDistribution {
            dim,
            q,
            k,
            coords,
            probs,
            mass: acc,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn outcome(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total(&self) -> T {
        self.probs.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Probability of the outcome c (any representative mod qk); zero if not listed.
    pub fn prob(&self, c: &[i64]) -> T {
        let m = self.q * self.k;
        let want: Vec<i64> = c.iter().map(|&x| centered(x, m)).collect();
        (0..self.len())
            .find(|&i| self.outcome(i) == want.as_slice())
            .map(|i| self.probs[i])
            .unwrap_or_else(T::zero)
    }

    /// Samples an outcome; None with probability 1 − mass (the unlisted remainder).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<Vec<i64>> {
        let u: f64 = rng.gen();
        if u >= self.mass {
            return None;
        }
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1);
        Some(self.outcome(i).to_vec())
    }

    /// Rows "c,probability" for every nonzero outcome; multi-axis outcomes joined with ':'.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,probability\n");
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| self.probs[i] > T::zero()).collect();
        order.sort_by(|&a, &b| self.outcome(a).cmp(self.outcome(b)));
        for i in order {
            let c: Vec<String> = self.outcome(i).iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("{},{:.16e}\n", c.join(":"), self.probs[i].to_f64().unwrap()));
        }
        out
    }
}

/// Samples c from a full spectrum.
pub fn sample_outcome<T: Float, R: Rng>(dist: &SpectrumDistribution<T>, rng: &mut R) -> Vec<i64> {
    let u: f64 = rng.gen::<f64>() * dist.mass;
    let i = dist.cumulative.partition_point(|&c| c <= u).min(dist.len() - 1);
    dist.outcome(i).to_vec()
}

fn twiddles<T: Float + FloatConst>(m: u64) -> Vec<Complex<T>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    (0..m)
        .map(|j| {
            let (s, c) = (two_pi * j as f64 / m as f64).sin_cos();
            Complex::new(T::from(c).unwrap(), T::from(s).unwrap())
        })
        .collect()
}

fn norm_factor<T: Float>(dim: usize, m: u64, t: usize) -> T {
    T::one() / (T::from(m).unwrap().powi(dim as i32) * T::from(t).unwrap())
}

/// Dense path: indicator of the support zero-padded to ℤ_{qk}^dim, transformed axis by axis.
pub fn qft_spectrum_dense<T: FftNum + Float + FloatConst>(
    points: &[i64],
    dim: usize,
    q: u64,
    k: u64,
) -> Result<SpectrumDistribution<T>> {
    let m = (q * k) as usize;
    let size = m.checked_pow(dim as u32).filter(|&s| s <= 1 << 24);
    let Some(size) = size else {
        return Err(Error::DomainTooLarge((dim as u32) * (m as f64).log2().ceil() as u32));
    };
    let t = points.len() / dim;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); size];
    for p in points.chunks(dim) {
        let idx = p.iter().fold(0usize, |acc, &x| acc * m + x.rem_euclid(m as i64) as usize);
        buf[idx] = buf[idx] + Complex::new(T::one(), T::zero());
    }
    let fft = FftPlanner::<T>::new().plan_fft_inverse(m);
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    // Axis `a` has stride m^(dim−1−a).
    for axis in 0..dim {
        let stride = m.pow((dim - 1 - axis) as u32);
        let mut line = vec![Complex::new(T::zero(), T::zero()); m];
        for start in 0..size {
            if !(start / stride).is_multiple_of(m) {
                continue;
            }
            for (j, x) in line.iter_mut().enumerate() {
                *x = buf[start + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, x) in line.iter().enumerate() {
                buf[start + j * stride] = *x;
            }
        }
    }
    let scale = norm_factor::<T>(dim, m as u64, t);
    let mut coords = Vec::with_capacity(size * dim);
    let mut probs = Vec::with_capacity(size);
    for (idx, x) in buf.iter().enumerate() {
        let mut rem = idx;
        let mut c = vec![0i64; dim];
        for a in (0..dim).rev() {
            c[a] = centered((rem % m) as i64, m as u64);
            rem /= m;
        }
        coords.extend(c);
        probs.push(x.norm_sqr() * scale);
    }
    Ok(SpectrumDistribution::from_parts(dim, q, k, coords, probs))
}

/// Sparse path: direct summation of the support phases at each requested outcome.
pub fn qft_spectrum_sparse<T: Float + FloatConst + Send + Sync>(
    points: &[i64],
    dim: usize,
    q: u64,
    k: u64,
    outcomes: &[i64],
) -> SpectrumDistribution<T> {
    let m = q * k;
    let tw = twiddles::<T>(m);
    let t = points.len() / dim;
    let scale = norm_factor::<T>(dim, m, t);
    let coords: Vec<i64> = outcomes.chunks(dim).flat_map(|c| c.iter().map(|&x| centered(x, m))).collect();
    let probs: Vec<T> = coords
        .par_chunks(dim)
        .map(|c| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for p in points.chunks(dim) {
                let ph = p.iter().zip(c).fold(0i64, |s, (&w, &x)| (s + (w * x).rem_euclid(m as i64)) % m as i64);
                acc = acc + tw[ph as usize];
            }
            acc.norm_sqr() * scale
        })
        .collect();
    SpectrumDistribution::from_parts(dim, q, k, coords, probs)
}

/// Every outcome of ℤ_{qk}^dim in index order.
pub fn all_outcomes(dim: usize, m: u64) -> Vec<i64> {
    let size = (m as usize).pow(dim as u32);
    let mut out = Vec::with_capacity(size * dim);
    for idx in 0..size {
        let mut rem = idx;
        let mut c = vec![0i64; dim];
        for a in (0..dim).rev() {
            c[a] = (rem % m as usize) as i64;
            rem /= m as usize;
        }
        out.extend(c);
    }
    out
}

/// Full spectrum, choosing the dense path when (qk)^dim ≤ 2^24.
pub fn qft_spectrum<T: FftNum + Float + FloatConst>(
    state: &PreimageState<impl Sized>,
    params: &ExperimentParams,
) -> Result<SpectrumDistribution<T>> {
    qft_spectrum_dense(&state.points, state.dim, params.q, params.k)
}

/// Outcomes with ‖c‖∞ ≤ half (centered), in lexicographic order.
pub fn window_outcomes(dim: usize, half: i64) -> Vec<i64> {
    let side = (2 * half + 1) as usize;
    let mut out = Vec::with_capacity(side.pow(dim as u32) * dim);
    for idx in 0..side.pow(dim as u32) {
        let mut rem = idx;
        let mut c = vec![0i64; dim];
        for a in (0..dim).rev() {
            c[a] = (rem % side) as i64 - half;
            rem /= side;
        }
        out.extend(c);
    }
    out
}

/// Exact probabilities of the outcomes in the box ‖c‖∞ ≤ half; `mass` is the box probability.
pub fn window_spectrum<T: FftNum + Float + FloatConst>(
    points: &[i64],
    dim: usize,
    q: u64,
    k: u64,
    half: i64,
) -> SpectrumDistribution<T> {
    let m = q * k;
    let half = half.min(m as i64 / 2 - 1).max(0);
    let side = (2 * half + 1) as f64;
    let t = (points.len() / dim) as f64;
    let dense_cost = (m as f64).powi(dim as i32) * ((m as f64).log2() + 4.0) * dim as f64;
    let direct_cost = if dim == 2 {
        t * side + (q as f64) * side * side
    } else {
        t * side.powi(dim as i32)
    };
    let dense_ok = (m as f64).powi(dim as i32) <= (1u64 << 22) as f64;
    if dense_ok && dense_cost < direct_cost {
        let full = qft_spectrum_dense::<T>(points, dim, q, k).expect("dense size checked");
        return restrict(&full, half);
    }
    if dim == 2 {
        separable_window(points, q, k, half)
    } else {
        qft_spectrum_sparse(points, dim, q, k, &window_outcomes(dim, half))
    }
}

fn restrict<T: Float>(full: &SpectrumDistribution<T>, half: i64) -> SpectrumDistribution<T> {
    let mut idx: Vec<usize> = (0..full.len())
        .filter(|&i| full.outcome(i).iter().all(|x| x.abs() <= half))
        .collect();
    idx.sort_by(|&a, &b| full.outcome(a).cmp(full.outcome(b)));
    let coords = idx.iter().flat_map(|&i| full.outcome(i).to_vec()).collect();
    let probs = idx.iter().map(|&i| full.probs[i]).collect();
    SpectrumDistribution::from_parts(full.dim, full.q, full.k, coords, probs)
}

/// Two-axis window: sum rows first, then combine rows.
fn separable_window<T: Float + FloatConst + Send + Sync>(
    points: &[i64],
    q: u64,
    k: u64,
    half: i64,
) -> SpectrumDistribution<T> {
    let m = q * k;
    let mi = m as i64;
    let tw = twiddles::<T>(m);
    let t = points.len() / 2;
    let side = (2 * half + 1) as usize;
    let zero = Complex::new(T::zero(), T::zero());
    let mut rows: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for p in points.chunks(2) {
        rows.entry(p[0]).or_default().push(p[1]);
    }
    let row_keys: Vec<i64> = rows.keys().copied().collect();
    let row_sums: Vec<Vec<Complex<T>>> = rows
        .par_iter()
        .map(|(_, vs)| {
            (0..side)
                .map(|j| {
                    let c2 = j as i64 - half;
                    vs.iter()
                        .fold(zero, |acc, &v| acc + tw[(v * c2).rem_euclid(mi) as usize])
                })
                .collect()
        })
        .collect();
    let scale = norm_factor::<T>(2, m, t);
    let probs: Vec<T> = (0..side * side)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / side, idx % side);
            let c1 = i as i64 - half;
            let mut acc = zero;
            for (a, g) in row_keys.iter().zip(&row_sums) {
                acc = acc + tw[(a * c1).rem_euclid(mi) as usize] * g[j];
            }
            acc.norm_sqr() * scale
        })
        .collect();
    SpectrumDistribution::from_parts(2, q, k, window_outcomes(2, half), probs)
}

/// Largest |c| accepted for radius β: the strict bound ‖c‖∞ < q/(5(β+1)).
pub fn accept_bound(q: u64, beta: f64) -> f64 {
    q as f64 / (5.0 * (beta + 1.0))
}

pub fn accept(c: &[i64], params: &ExperimentParams, beta: f64) -> bool {
    let bound = accept_bound(params.q, beta);
    c.iter()
        .all(|&x| (centered(x, params.qk()).abs() as f64) < bound)
}

/// Half-width of the integer box containing every accepted outcome.
pub fn accept_half(params: &ExperimentParams, beta: f64) -> i64 {
    let b = accept_bound(params.q, beta);
    let h = b.ceil() as i64 - 1;
    h.max(0)
}

pub fn dual_candidate(c: &[i64], params: &ExperimentParams) -> Vec<f64> {
    let m = params.qk();
    c.iter().map(|&x| centered(x, m) as f64 / m as f64).collect()
}

pub fn cast<T: NumCast>(x: f64) -> T {
    T::from(x).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coset(q: i64, step: i64, offsets: &[i64]) -> Vec<i64> {
        let mut v: Vec<i64> = (0..q)
            .filter(|x| offsets.iter().any(|o| (x - o).rem_euclid(step) == 0))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn full_coset_spectrum() {
        let pts = coset(64, 8, &[0]);
        let s = qft_spectrum_dense::<f64>(&pts, 1, 64, 1).unwrap();
        for c in 0..64 {
            let want = if c % 8 == 0 { 0.125 } else { 0.0 };
            assert_abs_diff_eq!(s.prob(&[c]), want, epsilon = 1e-15);
        }
    }

    #[test]
    fn bucket_spectrum() {
        let pts = coset(64, 8, &[-1, 0, 1]);
        assert_eq!(pts.len(), 24);
        let s = qft_spectrum_dense::<f64>(&pts, 1, 64, 1).unwrap();
        assert_abs_diff_eq!(s.prob(&[0]), 0.375, epsilon = 1e-14);
        assert_abs_diff_eq!(s.prob(&[8]), 0.2428, epsilon = 1e-4);
        assert_abs_diff_eq!(s.total(), 1.0, epsilon = 1e-14);
        for c in 0..64 {
            if c % 8 != 0 {
                assert!(s.prob(&[c]) < 1e-15);
            }
        }
    }

    #[test]
    fn singleton_is_uniform() {
        let s = qft_spectrum_dense::<f64>(&[5, 9], 2, 8, 2).unwrap();
        for i in 0..s.len() {
            assert_abs_diff_eq!(s.probs[i], 1.0 / 256.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn sparse_matches_dense() {
        let pts = vec![0, 1, 0, 2, 3, 1, 7, 7, 5, 2];
        let d = qft_spectrum_dense::<f64>(&pts, 2, 8, 3).unwrap();
        let s = qft_spectrum_sparse::<f64>(&pts, 2, 8, 3, &all_outcomes(2, 24));
        for i in 0..d.len() {
            let c = d.outcome(i);
            assert_abs_diff_eq!(d.probs[i], s.prob(c), epsilon = 1e-12);
        }
    }

    #[test]
    fn window_paths_agree() {
        let pts: Vec<i64> = (0..40).flat_map(|a| [a % 16, (a * 7) % 16]).collect();
        let mut sorted: Vec<(i64, i64)> = pts.chunks(2).map(|c| (c[0], c[1])).collect();
        sorted.sort();
        sorted.dedup();
        let pts: Vec<i64> = sorted.iter().flat_map(|&(a, b)| [a, b]).collect();
        let w = separable_window::<f64>(&pts, 16, 2, 5);
        let d = qft_spectrum_dense::<f64>(&pts, 2, 16, 2).unwrap();
        for i in 0..w.len() {
            assert_abs_diff_eq!(w.probs[i], d.prob(w.outcome(i)), epsilon = 1e-12);
        }
    }

    #[test]
    fn sampling_point_mass_and_two_atoms() {
        let s = SpectrumDistribution::from_parts(1, 8, 1, vec![3], vec![1.0f64]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_outcome(&s, &mut rng), vec![3]);
        let s = SpectrumDistribution::from_parts(1, 8, 1, vec![1, 2], vec![0.5f64, 0.5]);
        let n = 10_000;
        let ones = (0..n).filter(|_| sample_outcome(&s, &mut rng) == vec![1]).count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(((ones as f64) - n as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn window_sampling_returns_none_outside() {
        let s = SpectrumDistribution::from_parts(1, 8, 1, vec![0], vec![0.25f64]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let inside = (0..n).filter(|_| s.sample(&mut rng).is_some()).count();
        assert!(((inside as f64) / n as f64 - 0.25).abs() < 0.03);
    }

    #[test]
    fn accept_examples() {
        let p = ExperimentParams::new(1, 64, 1 << 16, 3, 96).unwrap();
        assert!(accept(&[0], &p, 15.0));
        assert!(!accept(&[900], &p, 15.0));
        assert!(accept(&[819], &p, 15.0));
        assert!(!accept(&[-820], &p, 15.0));
        // 5·(2.2 + 1) rounds to exactly 16, so the bound is exactly 4096.
        assert_eq!(accept_bound(1 << 16, 2.2), 4096.0);
        assert!(!accept(&[4096], &p, 2.2));
        assert!(accept(&[4095], &p, 2.2));
        assert_eq!(accept_half(&p, 2.2), 4095);
    }

    #[test]
    fn dual_candidate_examples() {
        let p = ExperimentParams::new(1, 1, 64, 3, 96).unwrap();
        assert_eq!(dual_candidate(&[0], &p), vec![0.0]);
        assert_eq!(dual_candidate(&[24], &p), vec![0.125]);
        assert_eq!(dual_candidate(&[192 - 24], &p), vec![-0.125]);
    }

    #[test]
    fn centered_residues() {
        assert_eq!(centered(0, 10), 0);
        assert_eq!(centered(4, 10), 4);
        assert_eq!(centered(5, 10), -5);
        assert_eq!(centered(-1, 10), -1);
        assert_eq!(centered(23, 10), 3);
    }
}
