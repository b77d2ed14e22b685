//! Real lattices of rank ≤ 3: dualization, recovery from noisy samples, reduction modulo a basis.

use crate::error::{Error, Result};
use num_traits::Float;

/// Basis with columns as lattice vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RealLattice<T> {
    columns: Vec<Vec<T>>,
    precision: u32,
}

fn c<T: Float>(x: f64) -> T {
    T::from(x).unwrap()
}

/// Row-major inverse by Gauss–Jordan with partial pivoting; None when a pivot vanishes.
fn invert<T: Float>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { T::one() } else { T::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())?;
        if m[piv][col] == T::zero() {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        for x in m[col].iter_mut() {
            *x = *x / p;
        }
        for row in 0..n {
            if row != col {
                let f = m[row][col];
                if f != T::zero() {
                    for j in 0..2 * n {
                        let v = m[col][j];
                        m[row][j] = m[row][j] - f * v;
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

fn determinant<T: Float>(a: &[Vec<T>]) -> T {
    let n = a.len();
    let mut m = a.to_vec();
    let mut det = T::one();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        if m[piv][col] == T::zero() {
            return T::zero();
        }
        if piv != col {
            m.swap(col, piv);
            det = -det;
        }
        det = det * m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for j in col..n {
                let v = m[col][j];
                m[row][j] = m[row][j] - f * v;
            }
        }
    }
    det
}

fn dot<T: Float>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |a, (&u, &v)| a + u * v)
}

fn norm_inf<T: Float>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |a, &v| a.max(v.abs()))
}

/// Nearest integer with ties rounded up, so that residues land in [−½, ½).
fn round_half_up<T: Float>(x: T) -> T {
    (x + c(0.5)).floor()
}

impl<T: Float> RealLattice<T> {
    pub fn new(columns: Vec<Vec<T>>, precision: u32) -> Result<Self> {
        let r = columns.len();
        if r == 0 || columns.iter().any(|col| col.len() != r) {
            return Err(Error::InvalidParams("basis must be square and nonempty".into()));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite basis entry".into()));
        }
        let l = RealLattice { columns, precision };
        if l.det().abs() < l.singular_threshold() {
            return Err(Error::Singular);
        }
        Ok(l)
    }

    pub fn from_rows(rows: &[Vec<T>], precision: u32) -> Result<Self> {
        let r = rows.len();
        let columns = (0..r).map(|j| rows.iter().map(|row| row[j]).collect()).collect();
        Self::new(columns, precision)
    }

    /// 2^(−p/2).
    fn singular_threshold(&self) -> T {
        c::<T>(2.0).powf(c(-(self.precision as f64) / 2.0))
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn column(&self, i: usize) -> &[T] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<T>] {
        &self.columns
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        let r = self.rank();
        (0..r).map(|i| (0..r).map(|j| self.columns[j][i]).collect()).collect()
    }

    pub fn det(&self) -> T {
        determinant(&self.rows())
    }

    pub fn inverse_rows(&self) -> Result<Vec<Vec<T>>> {
        invert(&self.rows()).ok_or(Error::Singular)
    }

    /// Coefficients y with B·y = u.
    pub fn coefficients(&self, u: &[T]) -> Result<Vec<T>> {
        Ok(self.inverse_rows()?.iter().map(|row| dot(row, u)).collect())
    }

    /// B·y.
    pub fn combine(&self, y: &[T]) -> Vec<T> {
        let r = self.rank();
        (0..r)
            .map(|i| (0..r).fold(T::zero(), |a, j| a + self.columns[j][i] * y[j]))
            .collect()
    }

    /// Frobenius-norm condition number ‖B‖·‖B⁻¹‖.
    pub fn condition_number(&self) -> T {
        let fro = |m: &[Vec<T>]| m.iter().flatten().fold(T::zero(), |a, &x| a + x * x).sqrt();
        match self.inverse_rows() {
            Ok(inv) => fro(&self.rows()) * fro(&inv),
            Err(_) => T::infinity(),
        }
    }

    pub fn is_well_conditioned(&self, bound: T) -> bool {
        self.condition_number() <= bound
    }

    pub fn scaled(&self, s: T) -> Result<Self> {
        let cols = self
            .columns
            .iter()
            .map(|col| col.iter().map(|&x| x * s).collect())
            .collect();
        Self::new(cols, self.precision)
    }

    /// Largest deviation of B⁻¹u from the nearest integer vector.
    pub fn membership_defect(&self, u: &[T]) -> Result<T> {
        let y = self.coefficients(u)?;
        Ok(y.iter().fold(T::zero(), |a, &v| a.max((v - v.round()).abs())))
    }

    /// Whether u is within `tol` (coefficient units) of a lattice point.
    pub fn contains(&self, u: &[T], tol: T) -> bool {
        self.membership_defect(u).map(|d| d <= tol).unwrap_or(false)
    }

    pub fn to_f64(&self) -> RealLattice<f64> {
        RealLattice {
            columns: self
                .columns
                .iter()
                .map(|col| col.iter().map(|x| x.to_f64().unwrap()).collect())
                .collect(),
            precision: self.precision,
        }
    }
}

pub fn dual_basis<T: Float>(l: &RealLattice<T>) -> Result<RealLattice<T>> {
    if l.det().abs() < l.singular_threshold() {
        return Err(Error::Singular);
    }
    // Columns of (B⁻¹)ᵀ are the rows of B⁻¹.
    let inv = l.inverse_rows()?;
    RealLattice::new(inv, l.precision)
}

/// u − B·round(B⁻¹u), with coefficient residues in [−½, ½); already-reduced input is returned unchanged.
pub fn reduce_mod<T: Float>(l: &RealLattice<T>, u: &[T]) -> Result<Vec<T>> {
    let y = l.coefficients(u)?;
    let n: Vec<T> = y.iter().map(|&v| round_half_up(v)).collect();
    if n.iter().all(|&x| x == T::zero()) {
        return Ok(u.to_vec());
    }
    let shift = l.combine(&n);
    Ok(u.iter().zip(&shift).map(|(&a, &b)| a - b).collect())
}

pub fn primal_from_dual<T: Float>(dual: &RealLattice<T>, n: u64) -> Result<RealLattice<T>> {
    dual_basis(dual)?.scaled(T::one() / c(n as f64))
}

/// Lattices equal up to unimodular transform: mutual membership within `tol` and matching |det|.
pub fn same_lattice<T: Float>(a: &RealLattice<T>, b: &RealLattice<T>, tol: T) -> bool {
    let rel = (a.det().abs() - b.det().abs()).abs() / a.det().abs();
    rel <= tol
        && a.columns.iter().all(|col| b.contains(col, tol))
        && b.columns.iter().all(|col| a.contains(col, tol))
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
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

/// Column Hermite form of an r × n integer matrix of rank r: returns r independent columns.
fn integer_column_basis(cols: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let r = cols[0].len();
    let mut m = cols.to_vec();
    for row in 0..r {
        for j in row + 1..m.len() {
            let (x, y) = (m[row][row], m[j][row]);
            if y == 0 {
                continue;
            }
            let (g, s, t) = ext_gcd(x, y);
            let (cx, cy) = (m[row].clone(), m[j].clone());
            for i in 0..r {
                m[row][i] = s * cx[i] + t * cy[i];
                m[j][i] = (x / g) * cy[i] - (y / g) * cx[i];
            }
        }
    }
    m.truncate(r);
    m
}

/// LLL with δ = 3/4 on the columns; tiny rank so Gram–Schmidt is recomputed each step.
pub fn lll_reduce<T: Float>(cols: &mut [Vec<T>]) {
    let r = cols.len();
    if r < 2 {
        return;
    }
    let delta: T = c(0.75);
    let mut k = 1;
    let mut guard = 0;
    while k < r && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (gs, _) = gram_schmidt(cols);
            let mu = dot(&cols[k], &gs[j]) / dot(&gs[j], &gs[j]);
            let q = mu.round();
            if q != T::zero() {
                let bj = cols[j].clone();
                for (x, y) in cols[k].iter_mut().zip(&bj) {
                    *x = *x - q * *y;
                }
            }
        }
        let (gs, _) = gram_schmidt(cols);
        let mu = dot(&cols[k], &gs[k - 1]) / dot(&gs[k - 1], &gs[k - 1]);
        let lhs = dot(&gs[k], &gs[k]);
        let rhs = (delta - mu * mu) * dot(&gs[k - 1], &gs[k - 1]);
        if lhs >= rhs {
            k += 1;
        } else {
            cols.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
}

fn gram_schmidt<T: Float>(cols: &[Vec<T>]) -> (Vec<Vec<T>>, Vec<T>) {
    let mut gs: Vec<Vec<T>> = Vec::with_capacity(cols.len());
    for v in cols {
        let mut w = v.clone();
        for g in &gs {
            let gg = dot(g, g);
            if gg > T::zero() {
                let mu = dot(v, g) / gg;
                for (x, y) in w.iter_mut().zip(g) {
                    *x = *x - mu * *y;
                }
            }
        }
        gs.push(w);
    }
    let norms = gs.iter().map(|g| dot(g, g).sqrt()).collect();
    (gs, norms)
}

/// Component of v orthogonal to span(cols), Euclidean norm.
fn residual<T: Float>(v: &[T], cols: &[Vec<T>]) -> T {
    let mut all = cols.to_vec();
    all.push(v.to_vec());
    let (_, norms) = gram_schmidt(&all);
    *norms.last().unwrap()
}

#[derive(Debug, Clone, Copy)]
pub struct RecoveryParams<T> {
    /// Per-coordinate noise η of the samples.
    pub noise: T,
    pub rank: usize,
    /// Samples with ‖s‖∞ ≥ bound are ignored.
    pub bound: Option<T>,
    pub precision: u32,
}

const MAX_DENOMINATOR: i128 = 64;

/// Zero threshold 10·η.
fn zero_tol<T: Float>(p: &RecoveryParams<T>) -> T {
    p.noise * c(10.0)
}

/// Coefficient-space tolerance for membership of a sample with noise η.
fn coef_tol<T: Float>(l: &RealLattice<T>, noise: T) -> T {
    let inv = l.inverse_rows().unwrap_or_default();
    let row_norm = inv
        .iter()
        .map(|row| row.iter().fold(T::zero(), |a, &x| a + x.abs()))
        .fold(T::zero(), T::max);
    noise * c(10.0) * row_norm
}

/// Adds `s` to the lattice generated by `basis`; returns false if no small-denominator relation explains it.
fn absorb<T: Float>(basis: &mut RealLattice<T>, s: &[T], noise: T) -> bool {
    let Ok(y) = basis.coefficients(s) else {
        return false;
    };
    let tol = coef_tol(basis, noise);
    let dev = |m: T| y.iter().fold(T::zero(), |a, &v| a.max((m * v - (m * v).round()).abs()));
    if dev(T::one()) <= tol {
        return true;
    }
    for m in 2..=MAX_DENOMINATOR {
        let mt: T = c(m as f64);
        if dev(mt) <= mt * tol {
            let r = basis.rank();
            let mut cols: Vec<Vec<i128>> = (0..r)
                .map(|i| (0..r).map(|j| if i == j { m } else { 0 }).collect())
                .collect();
            cols.push(y.iter().map(|&v| (mt * v).round().to_i64().unwrap() as i128).collect());
            let h = integer_column_basis(&cols);
            let new_cols: Vec<Vec<T>> = h
                .iter()
                .map(|hc| {
                    let coef: Vec<T> = hc.iter().map(|&x| c::<T>(x as f64) / mt).collect();
                    basis.combine(&coef)
                })
                .collect();
            let mut new_cols = new_cols;
            lll_reduce(&mut new_cols);
            match RealLattice::new(new_cols, basis.precision) {
                Ok(l) => {
                    *basis = l;
                    return true;
                }
                Err(_) => return false,
            }
        }
    }
    false
}

/// Basis of the lattice generated by noisy samples of an unknown rank-r lattice.
///
/// Samples whose coefficients admit no relation with denominator ≤ 64 are ignored.
pub fn recover_basis<T: Float>(samples: &[Vec<T>], params: &RecoveryParams<T>) -> Result<RealLattice<T>> {
    let r = params.rank;
    let zt = zero_tol(params);
    let mut vs: Vec<&Vec<T>> = samples
        .iter()
        .filter(|s| s.len() == r && norm_inf(s) > zt)
        .filter(|s| params.bound.map(|b| norm_inf(s) < b).unwrap_or(true))
        .collect();
    vs.sort_by(|a, b| dot(a, a).partial_cmp(&dot(b, b)).unwrap());
    let mut indep: Vec<Vec<T>> = Vec::new();
    let rt: T = c((r as f64).sqrt());
    for s in &vs {
        if indep.len() == r {
            break;
        }
        if residual(s, &indep) > zt * rt {
            indep.push((*s).clone());
        }
    }
    if indep.len() < r {
        return Err(Error::RankDeficient(r));
    }
    lll_reduce(&mut indep);
    let mut basis = RealLattice::new(indep, params.precision)?;
    for s in &vs {
        absorb(&mut basis, s, params.noise);
    }
    let mut cols = basis.columns.clone();
    lll_reduce(&mut cols);
    RealLattice::new(cols, params.precision)
}

/// ‖u − B·round(B⁻¹u)‖∞, the distance to the Babai lattice point.
pub fn residual_inf<T: Float>(l: &RealLattice<T>, u: &[T]) -> T {
    match l.coefficients(u) {
        Ok(y) => {
            let j: Vec<T> = y.iter().map(|v| v.round()).collect();
            let p = l.combine(&j);
            u.iter().zip(&p).fold(T::zero(), |a, (&x, &z)| a.max((x - z).abs()))
        }
        Err(_) => T::infinity(),
    }
}

/// Least-squares fit of the basis to the samples within `tol` (∞-norm) of a lattice point.
/// Returns the refitted basis and the number of samples used.
pub fn refine_least_squares<T: Float>(l: &RealLattice<T>, samples: &[Vec<T>], tol: T) -> (RealLattice<T>, usize) {
    let r = l.rank();
    let Ok(inv) = l.inverse_rows() else {
        return (l.clone(), 0);
    };
    let mut sj = vec![vec![T::zero(); r]; r];
    let mut jj = vec![vec![T::zero(); r]; r];
    let mut used = 0;
    for s in samples {
        let y: Vec<T> = inv.iter().map(|row| dot(row, s)).collect();
        let j: Vec<T> = y.iter().map(|v| v.round()).collect();
        let p = l.combine(&j);
        if s.iter().zip(&p).any(|(a, b)| (*a - *b).abs() > tol) {
            continue;
        }
        used += 1;
        for a in 0..r {
            for b in 0..r {
                sj[a][b] = sj[a][b] + s[a] * j[b];
                jj[a][b] = jj[a][b] + j[a] * j[b];
            }
        }
    }
    let Some(jj_inv) = invert(&jj) else {
        return (l.clone(), used);
    };
    // Rows of B = SJ·(JJ)⁻¹.
    let rows: Vec<Vec<T>> = (0..r)
        .map(|a| (0..r).map(|b| (0..r).fold(T::zero(), |acc, k| acc + sj[a][k] * jj_inv[k][b])).collect())
        .collect();
    match RealLattice::from_rows(&rows, l.precision) {
        Ok(fit) => (fit, used),
        Err(_) => (l.clone(), used),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat(cols: Vec<Vec<f64>>) -> RealLattice<f64> {
        RealLattice::new(cols, 96).unwrap()
    }

    fn params(noise: f64, rank: usize) -> RecoveryParams<f64> {
        RecoveryParams {
            noise,
            rank,
            bound: None,
            precision: 96,
        }
    }

    #[test]
    fn dual_examples() {
        assert_eq!(dual_basis(&lat(vec![vec![2.0]])).unwrap().column(0), &[0.5]);
        let d = dual_basis(&lat(vec![vec![2.0, 0.0], vec![0.0, 4.0]])).unwrap();
        assert_eq!(d.columns(), &[vec![0.5, 0.0], vec![0.0, 0.25]]);
        let d = dual_basis(&lat(vec![vec![1.0, 0.0], vec![1.0, 1.0]])).unwrap();
        assert_eq!(d.columns(), &[vec![1.0, -1.0], vec![0.0, 1.0]]);
        assert_eq!(
            RealLattice::new(vec![vec![1.0, 2.0], vec![2.0, 4.0]], 96),
            Err(Error::Singular)
        );
    }

    #[test]
    fn recover_examples() {
        let g = 0.37;
        let l = recover_basis(&[vec![2.0 * g], vec![3.0 * g], vec![5.0 * g]], &params(1e-9, 1)).unwrap();
        assert_abs_diff_eq!(l.column(0)[0].abs(), g, epsilon = 1e-9);
        let samples = vec![vec![3.0, 1.0], vec![2.0, 1.0], vec![5.0, -7.0], vec![1.0, 4.0]];
        let l = recover_basis(&samples, &params(1e-9, 2)).unwrap();
        assert_abs_diff_eq!(l.det().abs(), 1.0, epsilon = 1e-9);
        assert!(l.contains(&[1.0, 0.0], 1e-9) && l.contains(&[0.0, 1.0], 1e-9));
        assert_eq!(
            recover_basis(&[vec![1.0, 1.0], vec![2.0, 2.0]], &params(1e-9, 2)),
            Err(Error::RankDeficient(2))
        );
    }

    #[test]
    fn recover_noisy_gcd() {
        let (q, k) = (1u64 << 16, 3u64);
        let noise = 0.5 / (q * k) as f64;
        let g = 0.0177;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let j = rng.gen_range(-6i64..=6) as f64;
                vec![j * g + rng.gen_range(-noise..noise)]
            })
            .collect();
        let l = recover_basis(&samples, &params(noise, 1)).unwrap();
        let (fit, _) = refine_least_squares(&l, &samples, 10.0 * noise);
        assert!((fit.column(0)[0].abs() - g).abs() <= 3.0 * noise);
    }

    #[test]
    fn reduce_mod_examples() {
        let r = 0.881374;
        let l = lat(vec![vec![r]]);
        assert_eq!(reduce_mod(&l, &[0.0]).unwrap(), vec![0.0]);
        assert_abs_diff_eq!(reduce_mod(&l, &[r]).unwrap()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(reduce_mod(&l, &[0.3 + 3.0 * r]).unwrap()[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn primal_from_dual_examples() {
        let (n, r) = (64u64, 0.881374);
        let d = lat(vec![vec![1.0 / (n as f64 * r)]]);
        assert_abs_diff_eq!(primal_from_dual(&d, n).unwrap().column(0)[0], r, epsilon = 1e-12);
        let id = lat(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(primal_from_dual(&id, 1).unwrap(), id);
    }

    #[test]
    fn hnf_of_redundant_columns() {
        let h = integer_column_basis(&[vec![2, 0], vec![0, 2], vec![1, 1]]);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        assert_eq!(det.abs(), 2);
    }

    fn arb_basis() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2)
            .prop_filter("well conditioned", |cols| {
                let d = cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0];
                d.abs() > 0.5
            })
    }

    proptest! {
        #[test]
        fn dual_is_involution(cols in arb_basis()) {
            let l = lat(cols);
            let dd = dual_basis(&dual_basis(&l).unwrap()).unwrap();
            for (a, b) in l.columns().iter().flatten().zip(dd.columns().iter().flatten()) {
                prop_assert!((a - b).abs() <= 4.0 * 2f64.powi(-48));
            }
            let prod = l.det() * dual_basis(&l).unwrap().det();
            prop_assert!((prod - 1.0).abs() <= 4.0 * 2f64.powi(-48));
        }

        #[test]
        fn dual_pairs_to_identity(cols in arb_basis()) {
            let l = lat(cols);
            let d = dual_basis(&l).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(d.column(i), l.column(j)) - want).abs() <= 2f64.powi(-48));
                }
            }
        }

        #[test]
        fn reduce_mod_is_idempotent(cols in arb_basis(), u in prop::collection::vec(-50.0f64..50.0, 2)) {
            let l = lat(cols);
            let once = reduce_mod(&l, &u).unwrap();
            let twice = reduce_mod(&l, &once).unwrap();
            prop_assert_eq!(&once, &twice);
            for y in l.coefficients(&once).unwrap() {
                prop_assert!((-0.5 - 1e-9..0.5 + 1e-9).contains(&y));
            }
        }

        #[test]
        fn recovered_basis_generates_samples(cols in arb_basis(), seed in 0u64..1000) {
            let l = lat(cols);
            let noise = 1e-7;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<Vec<f64>> = (0..12)
                .map(|_| {
                    let y = [rng.gen_range(-4i64..=4) as f64, rng.gen_range(-4i64..=4) as f64];
                    l.combine(&y).iter().map(|x| x + rng.gen_range(-noise..noise)).collect()
                })
                .collect();
            if let Ok(rec) = recover_basis(&samples, &params(noise, 2)) {
                for s in &samples {
                    prop_assert!(rec.membership_defect(s).unwrap() <= 10.0 * noise * 100.0);
                }
                prop_assert!(rec.det().abs() >= l.det().abs() * (1.0 - 1e-3));
            }
        }
    }
}
