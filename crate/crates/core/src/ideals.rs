//! Reduced ideals of ℤ[√D], their cycles with distances, and the hiding functions built on them.

use crate::error::{Error, Result};
use crate::numfield::{working_precision, QuadraticField};
use crate::qsim::HidingFunction;
use rug::Float;
use serde::Serialize;
use std::fmt;

/// The ideal ℤ·Q + ℤ·(P + √D), ordered lexicographically by (P, Q).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ReducedIdeal {
    pub p: i64,
    pub q: i64,
}

impl fmt::Display for ReducedIdeal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

impl ReducedIdeal {
    /// The reduced representative of the order itself.
    pub fn unit_ideal(field: &QuadraticField) -> Self {
        ReducedIdeal {
            p: field.isqrt(),
            q: 1,
        }
    }

    pub fn new(field: &QuadraticField, p: i64, q: i64) -> Result<Self> {
        if is_reduced(field.d(), p, q) {
            Ok(ReducedIdeal { p, q })
        } else {
            Err(Error::NotReduced { p, q })
        }
    }
}

/// Ideal property plus 0 < √D − P < Q < √D + P, decided with exact integer comparisons.
pub fn is_reduced(d: u64, p: i64, q: i64) -> bool {
    let d = d as i128;
    let (p, q) = (p as i128, q as i128);
    if q <= 0 || (d - p * p) % q != 0 {
        return false;
    }
    let below_root = p < 0 || p * p < d;
    let lower = p + q > 0 && (p + q) * (p + q) > d;
    let upper = q - p < 0 || (q - p) * (q - p) < d;
    below_root && lower && upper
}

/// Invertible in ℤ[√D]: the form (Q, 2P, (P² − D)/Q) is primitive.
pub fn is_invertible(d: u64, p: i64, q: i64) -> bool {
    fn gcd(a: i128, b: i128) -> i128 {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    let (p, q) = (p as i128, q as i128);
    let c = (p * p - d as i128) / q;
    gcd(gcd(q, 2 * p), c) == 1
}

fn is_ideal(d: u64, p: i64, q: i64) -> bool {
    q > 0 && ((d as i128) - (p as i128) * (p as i128)) % (q as i128) == 0
}

/// One continued-fraction step on (P + √D)/Q with Q > 0: returns (P', Q') with Q' possibly negative.
fn cf_step(d: u64, s: i64, p: i64, q: i64) -> (i64, i64) {
    let a = (p + s).div_euclid(q);
    let p1 = a * q - p;
    let q1 = ((d as i128 - (p1 as i128) * (p1 as i128)) / q as i128) as i64;
    (p1, q1)
}

/// ln|(P + √D)/Q| at working precision `wp`.
fn step_log(sqrt_d: &Float, p: i64, q: i64, wp: u32) -> Float {
    let num = Float::with_val(wp, sqrt_d + p);
    (num / q).abs().ln()
}

pub fn rho_step(field: &QuadraticField, ideal: &ReducedIdeal, p: u32) -> Result<(ReducedIdeal, Float)> {
    if !is_reduced(field.d(), ideal.p, ideal.q) {
        return Err(Error::NotReduced {
            p: ideal.p,
            q: ideal.q,
        });
    }
    let wp = working_precision(p);
    let (p1, q1) = cf_step(field.d(), field.isqrt(), ideal.p, ideal.q);
    let dist = step_log(&field.sqrt_d(wp), p1, q1, wp);
    debug_assert!(is_reduced(field.d(), p1, q1));
    Ok((ReducedIdeal { p: p1, q: q1 }, dist))
}

/// A cycle of reduced ideals with cumulative distances measured from its first entry.
#[derive(Debug, Clone)]
pub struct Cycle {
    field: QuadraticField,
    entries: Vec<(ReducedIdeal, Float)>,
    regulator: Float,
    precision: u32,
    error_bound: f64,
}

const MAX_CYCLE_LENGTH: usize = 1 << 22;

/// The rho-orbit of `start`, closed when it returns to `start`.
pub fn cycle_from(field: &QuadraticField, start: ReducedIdeal, p: u32) -> Result<Cycle> {
    let wp = working_precision(p);
    let sqrt_d = field.sqrt_d(wp);
    if !is_reduced(field.d(), start.p, start.q) {
        return Err(Error::NotReduced {
            p: start.p,
            q: start.q,
        });
    }
    let mut entries = vec![(start, Float::with_val(wp, 0))];
    let mut total = Float::with_val(wp, 0);
    let mut err = 0f64;
    let unit_err = (-(wp as f64)).exp2();
    let mut cur = start;
    loop {
        let (p1, q1) = cf_step(field.d(), field.isqrt(), cur.p, cur.q);
        let step = step_log(&sqrt_d, p1, q1, wp);
        // ln is correctly rounded; the running sum adds one more rounding per step.
        err += unit_err * (step.to_f64().abs() + total.to_f64().abs() + 1.0);
        total += &step;
        cur = ReducedIdeal { p: p1, q: q1 };
        if cur == start {
            break;
        }
        if entries.len() >= MAX_CYCLE_LENGTH {
            return Err(Error::InvalidParams(format!(
                "cycle of D = {} longer than {MAX_CYCLE_LENGTH}",
                field.d()
            )));
        }
        entries.push((cur, total.clone()));
    }
    if err > (-(p as f64) / 2.0).exp2() {
        return Err(Error::PrecisionExhausted(err));
    }
    Ok(Cycle {
        field: *field,
        entries,
        regulator: total,
        precision: p,
        error_bound: err,
    })
}

pub fn principal_cycle(field: &QuadraticField, p: u32) -> Result<Cycle> {
    cycle_from(field, ReducedIdeal::unit_ideal(field), p)
}

impl Cycle {
    pub fn field(&self) -> &QuadraticField {
        &self.field
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(ReducedIdeal, Float)] {
        &self.entries
    }

    pub fn ideal(&self, i: usize) -> ReducedIdeal {
        self.entries[i].0
    }

    pub fn distance(&self, i: usize) -> &Float {
        &self.entries[i].1
    }

    /// Sum of all step distances; the regulator for the principal cycle.
    pub fn regulator(&self) -> &Float {
        &self.regulator
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn error_bound(&self) -> f64 {
        self.error_bound
    }

    pub fn position(&self, ideal: &ReducedIdeal) -> Option<usize> {
        self.entries.iter().position(|(j, _)| j == ideal)
    }

    /// x reduced into [0, R).
    pub fn reduce(&self, x: &Float) -> Float {
        let wp = working_precision(self.precision).max(x.prec());
        let ratio = Float::with_val(wp, x / &self.regulator).floor();
        let mut y = Float::with_val(wp, x - ratio * &self.regulator);
        if y < 0 {
            y += &self.regulator;
        }
        if y >= self.regulator {
            y -= &self.regulator;
        }
        y
    }

    /// Distance from entry i to the next entry (wrapping to R).
    pub fn gap_after(&self, i: usize) -> Float {
        let wp = working_precision(self.precision);
        let next = if i + 1 < self.len() {
            self.entries[i + 1].1.clone()
        } else {
            Float::with_val(wp, &self.regulator + &self.entries[0].1)
        };
        Float::with_val(wp, &next - &self.entries[i].1)
    }

    pub fn gap_before(&self, i: usize) -> Float {
        self.gap_after(if i == 0 { self.len() - 1 } else { i - 1 })
    }

    /// Index of the entry nearest to x modulo R.
    pub fn closest_index(&self, x: &Float) -> usize {
        let y = self.reduce(x);
        let n = self.len();
        // Largest i with δ_i ≤ y; δ_0 = 0 ≤ y always.
        let i = self.entries.partition_point(|(_, d)| *d <= y) - 1;
        let j = (i + 1) % n;
        if i == j {
            return i;
        }
        let wp = y.prec();
        let lo = Float::with_val(wp, &y - &self.entries[i].1);
        let next = if i + 1 < n {
            self.entries[i + 1].1.clone()
        } else {
            self.regulator.clone()
        };
        let hi = Float::with_val(wp, &next - &y);
        let tie = Float::with_val(wp, Float::i_exp(1, -(self.precision as i32)));
        let diff = Float::with_val(wp, &lo - &hi);
        if diff.clone().abs() <= tie {
            if self.entries[i].0 <= self.entries[j].0 {
                i
            } else {
                j
            }
        } else if diff < 0 {
            i
        } else {
            j
        }
    }

    pub fn closest_ideal(&self, x: &Float) -> ReducedIdeal {
        self.entries[self.closest_index(x)].0
    }

    /// Distance mod R between x and entry i, in [0, R/2].
    pub fn circular_distance(&self, x: &Float, i: usize) -> Float {
        let wp = working_precision(self.precision);
        let y = self.reduce(&Float::with_val(wp, x - &self.entries[i].1));
        let other = Float::with_val(wp, &self.regulator - &y);
        if y < other {
            y
        } else {
            other
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,q_coeff,delta\n");
        for (ideal, d) in &self.entries {
            out.push_str(&format!("{},{},{}\n", ideal.p, ideal.q, fmt_float(d, 30)));
        }
        out
    }
}

fn fmt_float(x: &Float, digits: usize) -> String {
    x.to_string_radix(10, Some(digits))
}

/// Parameters of the hiding function and of the simulated transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExperimentParams {
    pub r: usize,
    pub n: u64,
    pub q: u64,
    pub k: u64,
    pub precision: u32,
}

impl ExperimentParams {
    pub fn new(r: usize, n: u64, q: u64, k: u64, precision: u32) -> Result<Self> {
        if r == 0 || r > 3 {
            return Err(Error::InvalidParams(format!("rank {r} outside 1..=3")));
        }
        if !n.is_power_of_two() {
            return Err(Error::InvalidParams(format!("N = {n} is not a power of two")));
        }
        if !q.is_power_of_two() || q < 2 {
            return Err(Error::InvalidParams(format!("q = {q} is not a power of two")));
        }
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        if precision < 32 {
            return Err(Error::InvalidParams(format!("precision {precision} below 32 bits")));
        }
        Ok(ExperimentParams {
            r,
            n,
            q,
            k,
            precision,
        })
    }

    /// Defaults to k = 3r.
    pub fn with_default_k(r: usize, n: u64, q: u64, precision: u32) -> Result<Self> {
        Self::new(r, n, q, 3 * r as u64, precision)
    }

    pub fn qk(&self) -> u64 {
        self.q * self.k
    }

    /// Per-coordinate error of a dual candidate, 1/(2qk).
    pub fn eta(&self) -> f64 {
        0.5 / self.qk() as f64
    }
}

/// v/N as an exact binary float.
fn scaled_point(v: i64, n: u64, wp: u32) -> Float {
    Float::with_val(wp, v) / n
}

/// f_N for r = 1: v ↦ closest_ideal(v/N).
#[derive(Debug, Clone)]
pub struct UnitFunction {
    cycle: Cycle,
    n: u64,
}

impl UnitFunction {
    pub fn new(cycle: Cycle, n: u64) -> Self {
        UnitFunction { cycle, n }
    }

    pub fn cycle(&self) -> &Cycle {
        &self.cycle
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn point(&self, v: i64) -> Float {
        scaled_point(v, self.n, working_precision(self.cycle.precision))
    }

    pub fn eval(&self, v: i64) -> ReducedIdeal {
        self.cycle.closest_ideal(&self.point(v))
    }

    fn translate_of(&self, v: i64, i: usize) -> i64 {
        let x = Float::with_val(self.point(v).prec(), self.point(v) - self.cycle.distance(i));
        let t = x / self.cycle.regulator();
        t.round().to_f64() as i64
    }
}

pub fn f_n(params: &ExperimentParams, v: &[i64], cycle: &Cycle) -> ReducedIdeal {
    let wp = working_precision(params.precision);
    cycle.closest_ideal(&scaled_point(v[0], params.n, wp))
}

/// Integer interval [lo, hi] of one preimage translate, widened or narrowed until exact.
fn settle_interval(lo: i64, hi: i64, limit: i64, inside: impl Fn(i64) -> bool) -> Option<(i64, i64)> {
    let (mut lo, mut hi) = (lo.max(0), hi.min(limit - 1));
    while lo <= hi && !inside(lo) {
        lo += 1;
    }
    while hi >= lo && !inside(hi) {
        hi -= 1;
    }
    if lo > hi {
        return None;
    }
    while lo > 0 && inside(lo - 1) {
        lo -= 1;
    }
    while hi + 1 < limit && inside(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

/// Interval endpoints (in grid units) of the translates of cell [centre − left, centre + right] + ℤ·R.
fn cell_translates(
    centre: &Float,
    left: &Float,
    right: &Float,
    period: &Float,
    n: u64,
    q: u64,
) -> Vec<(i64, i64, i64)> {
    let wp = centre.prec();
    let nf = Float::with_val(wp, n);
    let np = Float::with_val(wp, period * &nf);
    let a = Float::with_val(wp, centre - left) * &nf;
    let b = Float::with_val(wp, centre + right) * &nf;
    // Translates t with [a + t·NR, b + t·NR] meeting [0, q).
    let t_min = (Float::with_val(wp, -&b) / &np).floor().to_f64() as i64 - 1;
    let t_max = Float::with_val(wp, (Float::with_val(wp, q) - &a) / &np).ceil().to_f64() as i64 + 1;
    (t_min..=t_max)
        .map(|t| {
            let off = Float::with_val(wp, &np * t);
            let lo = Float::with_val(wp, &a + &off).floor().to_f64() as i64;
            let hi = Float::with_val(wp, &b + &off).ceil().to_f64() as i64;
            (t, lo, hi)
        })
        .filter(|&(_, lo, hi)| hi >= 0 && lo < q as i64)
        .collect()
}

impl HidingFunction for UnitFunction {
    type Label = ReducedIdeal;

    fn dim(&self) -> usize {
        1
    }

    fn grid_scale(&self) -> f64 {
        self.n as f64
    }

    fn label(&self, v: &[i64]) -> ReducedIdeal {
        self.eval(v[0])
    }

    fn translate_id(&self, v: &[i64], label: &ReducedIdeal) -> Vec<i64> {
        let i = self.cycle.position(label).expect("label on cycle");
        vec![self.translate_of(v[0], i)]
    }

    fn period_basis(&self) -> Vec<Vec<f64>> {
        vec![vec![self.cycle.regulator().to_f64() * self.n as f64]]
    }

    fn labels(&self) -> Vec<ReducedIdeal> {
        let mut l: Vec<_> = self.cycle.entries().iter().map(|(j, _)| *j).collect();
        l.sort();
        l
    }

    fn preimage(&self, label: &ReducedIdeal, q: u64) -> Vec<i64> {
        let Some(i) = self.cycle.position(label) else {
            return Vec::new();
        };
        let wp = working_precision(self.cycle.precision);
        let half = |g: Float| Float::with_val(wp, g / 2u32);
        let left = half(self.cycle.gap_before(i));
        let right = half(self.cycle.gap_after(i));
        let mut out = Vec::new();
        for (t, lo, hi) in cell_translates(
            self.cycle.distance(i),
            &left,
            &right,
            self.cycle.regulator(),
            self.n,
            q,
        ) {
            let inside = |v: i64| self.eval(v) == *label && self.translate_of(v, i) == t;
            if let Some((lo, hi)) = settle_interval(lo - 2, hi + 2, q as i64, inside) {
                out.extend(lo..=hi);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Normalized ideal (1/Q)(ℤQ + ℤ(P + √D)) in the ideal-class bookkeeping below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NormIdeal {
    p: i64,
    q: i64,
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

/// Product of two normalized ideals: returns the normalized product and ln of the scale factor
/// relating it to the literal product.
fn multiply(d: u64, x: NormIdeal, y: NormIdeal, wp: u32) -> (NormIdeal, Float) {
    let d = d as i128;
    let (p1, q1, p2, q2) = (x.p as i128, x.q as i128, y.p as i128, y.q as i128);
    // Generators in the basis (1, √D).
    let mut gens = [
        (q1 * q2, 0i128),
        (q1 * p2, q1),
        (q2 * p1, q2),
        (p1 * p2 + d, p1 + p2),
    ];
    // Column-style echelon form: gens[0] carries the √D coefficient gcd, others are rational.
    for i in 1..gens.len() {
        let (x0, y0) = gens[0];
        let (xi, yi) = gens[i];
        if yi == 0 {
            continue;
        }
        let (g, s, t) = ext_gcd(y0, yi);
        gens[0] = (s * x0 + t * xi, g);
        gens[i] = ((yi / g) * x0 - (y0 / g) * xi, 0);
    }
    let (mut b, g) = gens[0];
    let a = gens[1..].iter().fold(0i128, |acc, &(x, _)| ext_gcd(acc, x).0);
    let (g, a) = (g.abs(), a.abs());
    debug_assert!(a % g == 0);
    b = b.rem_euclid(a);
    debug_assert!(b % g == 0);
    let q = a / g;
    let p = b / g;
    let scale = Float::with_val(wp, q1 * q2) / Float::with_val(wp, g * q);
    (
        NormIdeal {
            p: p as i64,
            q: q as i64,
        },
        scale.ln(),
    )
}

/// Reduced ideal equivalent to `x` and the distance from x to it.
fn reduce(field: &QuadraticField, x: NormIdeal, wp: u32) -> Result<(ReducedIdeal, Float)> {
    let d = field.d();
    let s = field.isqrt();
    let sqrt_d = field.sqrt_d(wp);
    let (mut p, mut q) = (x.p, x.q.abs());
    let mut dist = Float::with_val(wp, 0);
    for _ in 0..10_000 {
        debug_assert!(is_ideal(d, p, q));
        p = s - (s - p).rem_euclid(q);
        if is_reduced(d, p, q) {
            return Ok((ReducedIdeal { p, q }, dist));
        }
        let (p1, q1) = cf_step(d, s, p, q);
        dist += step_log(&sqrt_d, p1, q1, wp);
        p = p1;
        q = q1.abs();
    }
    Err(Error::NotReduced { p, q })
}

/// Cycles of the classes of I^0, …, I^(m−1) for the class order m of I.
#[derive(Debug, Clone)]
pub struct ClassCycles {
    /// Class order m: least m ≥ 1 with I^m principal.
    pub order: usize,
    /// Position of I relative to O, determined modulo R/m.
    pub theta: Float,
    /// cycles[j] starts at the reduced representative of I^j; cycles[0] is principal.
    pub cycles: Vec<Cycle>,
    /// Position of cycles[j]'s first entry minus j·θ.
    pub offsets: Vec<Float>,
}

pub fn class_cycles(
    field: &QuadraticField,
    ideal: &ReducedIdeal,
    max_order: usize,
    p: u32,
) -> Result<ClassCycles> {
    let wp = working_precision(p);
    let principal = principal_cycle(field, p)?;
    if !is_reduced(field.d(), ideal.p, ideal.q) {
        return Err(Error::NotReduced {
            p: ideal.p,
            q: ideal.q,
        });
    }
    let base = NormIdeal {
        p: ideal.p,
        q: ideal.q,
    };
    let mut cycles = vec![principal.clone()];
    let mut offsets = vec![Float::with_val(wp, 0)];
    let mut cur = ReducedIdeal::unit_ideal(field);
    for m in 1..=max_order {
        let (prod, scale) = multiply(field.d(), NormIdeal { p: cur.p, q: cur.q }, base, wp);
        let (red, e) = reduce(field, prod, wp)?;
        let rho = Float::with_val(wp, &offsets[m - 1] + &scale) + &e;
        if let Some(i) = principal.position(&red) {
            let num = Float::with_val(wp, principal.distance(i) - &rho);
            let phi = principal.reduce(&num);
            let theta = phi / m as u32;
            return Ok(ClassCycles {
                order: m,
                theta,
                cycles,
                offsets,
            });
        }
        cycles.push(cycle_from(field, red, p)?);
        offsets.push(rho);
        cur = red;
    }
    Err(Error::Inconclusive(format!(
        "class order of {ideal} exceeds {max_order}"
    )))
}

impl ClassCycles {
    pub fn regulator(&self) -> &Float {
        self.cycles[0].regulator()
    }

    pub fn principal(&self) -> &Cycle {
        &self.cycles[0]
    }

    pub fn is_principal(&self) -> bool {
        self.order == 1
    }
}

/// g_N(a, v) = I_{aθ − v/N}, evaluated through the class cycles of I.
#[derive(Debug, Clone)]
pub struct IdealPowerFunction {
    classes: ClassCycles,
    n: u64,
    precision: u32,
}

/// Label of g_N: class index j = a mod m and an ideal on the class-j cycle.
pub type ClassLabel = (usize, ReducedIdeal);

impl IdealPowerFunction {
    pub fn new(field: &QuadraticField, ideal: &ReducedIdeal, n: u64, p: u32) -> Result<Self> {
        let classes = class_cycles(field, ideal, 64, p)?;
        Ok(IdealPowerFunction {
            classes,
            n,
            precision: p,
        })
    }

    pub fn classes(&self) -> &ClassCycles {
        &self.classes
    }

    /// Point aθ − v/N − jθ − ρ_j relative to the start of the class-j cycle.
    fn relative(&self, a: i64, v: i64) -> (usize, Float) {
        let wp = working_precision(self.precision);
        let m = self.classes.order as i64;
        let j = a.rem_euclid(m);
        let x = Float::with_val(wp, &self.classes.theta * (a - j)) - scaled_point(v, self.n, wp);
        (j as usize, x - &self.classes.offsets[j as usize])
    }

    pub fn eval(&self, a: i64, v: i64) -> ClassLabel {
        let (j, x) = self.relative(a, v);
        (j, self.classes.cycles[j].closest_ideal(&x))
    }

    fn translate_of(&self, a: i64, v: i64, j: usize, i: usize) -> Vec<i64> {
        let (_, x) = self.relative(a, v);
        let cyc = &self.classes.cycles[j];
        let y = Float::with_val(x.prec(), cyc.distance(i) - &x) / cyc.regulator();
        let m = self.classes.order as i64;
        vec![(a - j as i64) / m, y.round().to_f64() as i64]
    }
}

pub fn g_n(params: &ExperimentParams, a: i64, v: &[i64], theta: &Float, cycle: &Cycle) -> ReducedIdeal {
    let wp = working_precision(params.precision);
    let x = Float::with_val(wp, theta * a) - scaled_point(v[0], params.n, wp);
    cycle.closest_ideal(&x)
}

impl HidingFunction for IdealPowerFunction {
    type Label = ClassLabel;

    fn dim(&self) -> usize {
        2
    }

    fn grid_scale(&self) -> f64 {
        self.n as f64
    }

    fn label(&self, v: &[i64]) -> ClassLabel {
        self.eval(v[0], v[1])
    }

    fn translate_id(&self, v: &[i64], label: &ClassLabel) -> Vec<i64> {
        let i = self.classes.cycles[label.0]
            .position(&label.1)
            .expect("label on class cycle");
        self.translate_of(v[0], v[1], label.0, i)
    }

    fn period_basis(&self) -> Vec<Vec<f64>> {
        let m = self.classes.order as f64;
        let n = self.n as f64;
        let r = self.classes.regulator().to_f64();
        vec![
            vec![m, n * m * self.classes.theta.to_f64()],
            vec![0.0, n * r],
        ]
    }

    fn labels(&self) -> Vec<ClassLabel> {
        let mut l: Vec<_> = self
            .classes
            .cycles
            .iter()
            .enumerate()
            .flat_map(|(j, c)| c.entries().iter().map(move |(i, _)| (j, *i)))
            .collect();
        l.sort();
        l
    }

    fn preimage(&self, label: &ClassLabel, q: u64) -> Vec<i64> {
        let (j, ideal) = *label;
        let cyc = &self.classes.cycles[j];
        let Some(i) = cyc.position(&ideal) else {
            return Vec::new();
        };
        let wp = working_precision(self.precision);
        let left = Float::with_val(wp, cyc.gap_after(i) / 2u32);
        let right = Float::with_val(wp, cyc.gap_before(i) / 2u32);
        let m = self.classes.order as i64;
        let mut out = Vec::new();
        let mut a = j as i64;
        while a < q as i64 {
            // aθ − v/N − jθ − ρ_j ∈ δ_i + cell  ⇔  v/N ∈ (a−j)θ − ρ_j − δ_i − cell.
            let centre = Float::with_val(wp, &self.classes.theta * (a - j as i64))
                - &self.classes.offsets[j]
                - cyc.distance(i);
            let mut row = Vec::new();
            for (t, lo, hi) in cell_translates(&centre, &left, &right, cyc.regulator(), self.n, q) {
                let want = vec![(a - j as i64) / m, t];
                let inside = |v: i64| self.eval(a, v) == *label && self.translate_of(a, v, j, i) == want;
                if let Some((lo, hi)) = settle_interval(lo - 2, hi + 2, q as i64, inside) {
                    row.extend(lo..=hi);
                }
            }
            row.sort_unstable();
            row.dedup();
            for v in row {
                out.push(a);
                out.push(v);
            }
            a += m;
        }
        out
    }
}

/// True iff θ' lands on I and within 10⁻³·max(1, R) of its cycle distance.
pub fn verify_generator(theta: &Float, ideal: &ReducedIdeal, cycle: &Cycle) -> bool {
    let i = cycle.closest_index(theta);
    if cycle.ideal(i) != *ideal {
        return false;
    }
    let tol = 1e-3 * cycle.regulator().to_f64().max(1.0);
    cycle.circular_distance(theta, i).to_f64() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numfield::make_field;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn fl(x: f64) -> Float {
        Float::with_val(128, x)
    }

    #[test]
    fn rho_step_examples() {
        let k = make_field(2).unwrap();
        let (j, d) = rho_step(&k, &ReducedIdeal { p: 1, q: 1 }, 96).unwrap();
        assert_eq!(j, ReducedIdeal { p: 1, q: 1 });
        assert_abs_diff_eq!(d.to_f64(), 0.881374, epsilon = 1e-6);
        let k = make_field(13).unwrap();
        let (j, _) = rho_step(&k, &ReducedIdeal { p: 3, q: 4 }, 96).unwrap();
        assert_eq!(j, ReducedIdeal { p: 1, q: 3 });
        assert_eq!(
            rho_step(&k, &ReducedIdeal { p: 0, q: 1 }, 96),
            Err(Error::NotReduced { p: 0, q: 1 })
        );
    }

    #[test]
    fn principal_cycle_examples() {
        let c = principal_cycle(&make_field(2).unwrap(), 96).unwrap();
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c.regulator().to_f64(), 0.881374, epsilon = 1e-6);
        let c = principal_cycle(&make_field(13).unwrap(), 96).unwrap();
        assert_eq!(c.len(), 5);
        assert_abs_diff_eq!(c.regulator().to_f64(), (18.0 + 5.0 * 13f64.sqrt()).ln(), epsilon = 1e-12);
        let labels: Vec<_> = c.entries().iter().map(|(j, _)| (j.p, j.q)).collect();
        assert_eq!(labels, vec![(3, 1), (3, 4), (1, 3), (2, 3), (1, 4)]);
        let c = principal_cycle(&make_field(3).unwrap(), 96).unwrap();
        assert_eq!(c.len(), 2);
        assert_abs_diff_eq!(c.regulator().to_f64(), 1.316958, epsilon = 1e-6);
    }

    #[test]
    fn closest_ideal_examples() {
        let k = make_field(13).unwrap();
        let c = principal_cycle(&k, 96).unwrap();
        let o = ReducedIdeal::unit_ideal(&k);
        assert_eq!(c.closest_ideal(&fl(0.0)), o);
        assert_eq!(c.closest_ideal(c.regulator()), o);
        let x = Float::with_val(128, c.distance(2) + 0.01);
        assert_eq!(c.closest_ideal(&x), c.ideal(2));
        let x = Float::with_val(128, c.distance(2)) - Float::with_val(128, c.regulator() * 3u32);
        assert_eq!(c.closest_ideal(&x), c.ideal(2));
    }

    #[test]
    fn closest_ideal_tie_takes_smaller_label() {
        let k = make_field(13).unwrap();
        let c = principal_cycle(&k, 96).unwrap();
        // Midpoint between (3,4) at index 1 and (1,3) at index 2.
        let mid = Float::with_val(160, c.distance(1) + c.distance(2)) / 2u32;
        assert_eq!(c.closest_ideal(&mid), ReducedIdeal { p: 1, q: 3 });
    }

    #[test]
    fn f_n_examples() {
        let k = make_field(13).unwrap();
        let c = principal_cycle(&k, 96).unwrap();
        let params = ExperimentParams::new(1, 64, 1 << 16, 3, 96).unwrap();
        let o = ReducedIdeal::unit_ideal(&k);
        assert_eq!(f_n(&params, &[0], &c), o);
        let nr = (64.0 * c.regulator().to_f64()).round() as i64;
        assert_eq!(f_n(&params, &[nr], &c), o);
        let v = (64.0 * c.distance(2).to_f64()).round() as i64;
        assert_eq!(f_n(&params, &[v], &c), c.ideal(2));
    }

    #[test]
    fn g_n_examples() {
        let k = make_field(13).unwrap();
        let c = principal_cycle(&k, 96).unwrap();
        let params = ExperimentParams::new(2, 64, 1 << 10, 2, 96).unwrap();
        let theta = c.distance(2).clone();
        assert_eq!(g_n(&params, 0, &[0], &theta, &c), ReducedIdeal::unit_ideal(&k));
        assert_eq!(g_n(&params, 1, &[0], &theta, &c), c.ideal(2));
        let v = (64.0 * theta.to_f64()).round() as i64;
        assert_eq!(g_n(&params, 1, &[v], &theta, &c), ReducedIdeal::unit_ideal(&k));
    }

    #[test]
    fn unit_function_preimage_matches_exhaustive() {
        let k = make_field(13).unwrap();
        let f = UnitFunction::new(principal_cycle(&k, 96).unwrap(), 64);
        let q = 1 << 12;
        for label in f.labels() {
            let fast = f.preimage(&label, q);
            let slow: Vec<i64> = (0..q as i64).filter(|&v| f.eval(v) == label).collect();
            assert_eq!(fast, slow, "label {label}");
        }
    }

    #[test]
    fn class_cycles_of_principal_ideal() {
        let k = make_field(13).unwrap();
        let c = principal_cycle(&k, 96).unwrap();
        for i in 0..c.len() {
            let cc = class_cycles(&k, &c.ideal(i), 8, 96).unwrap();
            assert_eq!(cc.order, 1);
            assert!(cc.circ_close(&cc.theta, c.distance(i)));
        }
    }

    #[test]
    fn class_cycles_of_nonprincipal_ideal() {
        let k = make_field(10).unwrap();
        let cc = class_cycles(&k, &ReducedIdeal { p: 1, q: 3 }, 8, 96).unwrap();
        assert_eq!(cc.order, 2);
        assert_eq!(cc.cycles[1].len(), 3);
        assert!(cc.cycles[1].position(&ReducedIdeal { p: 1, q: 3 }).is_some());
    }

    #[test]
    fn ideal_power_function_is_periodic() {
        for (d, ideal) in [(10u64, ReducedIdeal { p: 1, q: 3 }), (13, ReducedIdeal { p: 2, q: 3 })] {
            let k = make_field(d).unwrap();
            let g = IdealPowerFunction::new(&k, &ideal, 64, 96).unwrap();
            let basis = g.period_basis();
            let (da, dv) = (basis[0][0] as i64, basis[0][1].round() as i64);
            let mut checked = 0;
            for a in 0..40i64 {
                for v in (0..3000i64).step_by(7) {
                    let here = g.eval(a, v);
                    if g.eval(a, v - 1) != here || g.eval(a, v + 1) != here {
                        continue;
                    }
                    assert_eq!(g.eval(a + da, v + dv), here, "D={d} a={a} v={v}");
                    checked += 1;
                }
            }
            assert!(checked > 10_000);
        }
    }

    #[test]
    fn ideal_power_function_preimage_matches_exhaustive() {
        for (d, ideal) in [(13u64, ReducedIdeal { p: 1, q: 3 }), (10, ReducedIdeal { p: 1, q: 3 })] {
            let k = make_field(d).unwrap();
            let g = IdealPowerFunction::new(&k, &ideal, 8, 96).unwrap();
            let q = 64u64;
            for label in g.labels() {
                let fast = g.preimage(&label, q);
                let mut slow = Vec::new();
                for a in 0..q as i64 {
                    for v in 0..q as i64 {
                        if g.eval(a, v) == label {
                            slow.push(a);
                            slow.push(v);
                        }
                    }
                }
                assert_eq!(fast, slow, "D={d} label {label:?}");
            }
        }
    }

    #[test]
    fn verify_generator_examples() {
        let k = make_field(13).unwrap();
        let c = principal_cycle(&k, 96).unwrap();
        assert!(verify_generator(&fl(0.0), &ReducedIdeal::unit_ideal(&k), &c));
        let i = ReducedIdeal { p: 1, q: 3 };
        assert!(verify_generator(c.distance(2), &i, &c));
        let off = Float::with_val(160, c.regulator() / 2u32) + c.distance(2);
        assert!(!verify_generator(&off, &i, &c));
    }

    #[test]
    fn cycle_csv_header() {
        let c = principal_cycle(&make_field(3).unwrap(), 96).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("p,q_coeff,delta\n1,1,0"));
        assert_eq!(csv.lines().count(), 3);
    }

    impl ClassCycles {
        fn circ_close(&self, x: &Float, y: &Float) -> bool {
            let d = Float::with_val(160, x - y);
            let r = self.principal().reduce(&d).to_f64();
            r < 1e-20 || self.regulator().to_f64() - r < 1e-20
        }
    }

    proptest! {
        #[test]
        fn f_n_is_periodic(d in prop::sample::select(vec![3u64, 7, 13, 19]), v in 0i64..40_000, j in 1i64..5) {
            let k = make_field(d).unwrap();
            let c = principal_cycle(&k, 96).unwrap();
            let params = ExperimentParams::new(1, 64, 1 << 16, 3, 96).unwrap();
            let shift = (64.0 * j as f64 * c.regulator().to_f64()).round() as i64;
            let f = UnitFunction::new(c.clone(), 64);
            let here = f.eval(v);
            // Allow disagreement only within distance 1 of a label boundary.
            let near_boundary = f.eval(v - 1) != here || f.eval(v + 1) != here;
            prop_assert!(f_n(&params, &[v + shift], &c) == here || near_boundary);
        }

        #[test]
        fn reduction_lands_in_class(d in prop::sample::select(vec![10u64, 13, 15, 34, 79]), e in 1usize..5) {
            let k = make_field(d).unwrap();
            let wp = working_precision(96);
            let reduced: Vec<_> = crate::oracle::all_reduced_ideals(&k);
            let x = reduced[e % reduced.len()];
            let (prod, _) = multiply(d, NormIdeal { p: x.p, q: x.q }, NormIdeal { p: x.p, q: x.q }, wp);
            let (red, dist) = reduce(&k, prod, wp).unwrap();
            prop_assert!(is_reduced(d, red.p, red.q));
            prop_assert!(dist >= 0);
        }
    }

    #[test]
    fn cycle_closure_small_d() {
        for d in [2u64, 3, 5, 6, 7, 13, 19, 46, 94] {
            let k = make_field(d).unwrap();
            let c = principal_cycle(&k, 96).unwrap();
            let e = k.unit_from_log(c.regulator().to_f64());
            if c.regulator().to_f64() < 30.0 {
                assert!(e.is_some(), "D={d}");
            }
            let (last, _) = rho_step(&k, &c.ideal(c.len() - 1), 96).unwrap();
            assert_eq!(last, c.ideal(0));
        }
    }
}
