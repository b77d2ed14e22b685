//! Arithmetic in the order ℤ[√D] of a real quadratic field.

use crate::error::{Error, Result};
use rug::{Float, Integer, Rational};
use std::fmt;

/// Extra working bits carried beyond the requested precision.
pub const GUARD_BITS: u32 = 32;

pub const DEFAULT_PRECISION: u32 = 96;

pub fn working_precision(p: u32) -> u32 {
    p + GUARD_BITS
}

pub fn is_squarefree(d: u64) -> bool {
    let mut p = 2u64;
    while p * p <= d {
        if d.is_multiple_of(p * p) {
            return false;
        }
        p += 1;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadraticField {
    d: u64,
}

pub fn make_field(d: u64) -> Result<QuadraticField> {
    if d < 2 {
        return Err(Error::InvalidDiscriminant(d));
    }
    // Bounds every intermediate P², Q·Q' used by the ideal arithmetic within i64.
    if d >= 1 << 40 {
        return Err(Error::InvalidParams(format!("D = {d} exceeds 2^40")));
    }
    if !is_squarefree(d) {
        return Err(Error::NotSquarefree(d));
    }
    Ok(QuadraticField { d })
}

impl QuadraticField {
    pub fn d(&self) -> u64 {
        self.d
    }

    /// Δ of the order ℤ[√D].
    pub fn discriminant(&self) -> u64 {
        4 * self.d
    }

    pub fn degree(&self) -> usize {
        2
    }

    pub fn signature(&self) -> (usize, usize) {
        (2, 0)
    }

    pub fn rank(&self) -> usize {
        let (s, t) = self.signature();
        s + t - 1
    }

    /// ⌊√D⌋.
    pub fn isqrt(&self) -> i64 {
        self.d.isqrt() as i64
    }

    pub fn sqrt_d(&self, prec: u32) -> Float {
        Float::with_val(prec, self.d).sqrt()
    }

    pub fn log_discriminant(&self, prec: u32) -> Float {
        Float::with_val(prec, self.discriminant()).ln()
    }

    pub fn element(&self, a: i64, b: i64, c: i64) -> Result<FieldElement> {
        FieldElement::new(Integer::from(a), Integer::from(b), Integer::from(c))
    }

    pub fn mul(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        let a = Integer::from(&x.a * &y.a) + Integer::from(&x.b * &y.b) * self.d;
        let b = Integer::from(&x.a * &y.b) + Integer::from(&x.b * &y.a);
        let c = Integer::from(&x.c * &y.c);
        FieldElement::new(a, b, c).expect("product of nonzero denominators")
    }

    pub fn conjugate(&self, x: &FieldElement) -> FieldElement {
        FieldElement {
            a: x.a.clone(),
            b: Integer::from(-&x.b),
            c: x.c.clone(),
        }
    }

    /// (a² − D b²)/c² in lowest terms.
    pub fn norm(&self, x: &FieldElement) -> Rational {
        let num = Integer::from(x.a.square_ref()) - Integer::from(x.b.square_ref()) * self.d;
        let den = Integer::from(x.c.square_ref());
        Rational::from((num, den))
    }

    pub fn is_unit(&self, x: &FieldElement) -> bool {
        if x.c != 1 {
            return false;
        }
        let n = self.norm(x);
        n == 1 || n == -1
    }

    pub fn torsion_units(&self) -> Vec<FieldElement> {
        vec![FieldElement::from_int(1), FieldElement::from_int(-1)]
    }

    /// Logarithms of both real absolute values of `x`, each within 2^-p.
    pub fn log_embed(&self, x: &FieldElement, p: u32) -> Result<LogVector> {
        if x.is_zero() {
            return Err(Error::ZeroElement);
        }
        let wp = working_precision(p);
        let sqrt_d = self.sqrt_d(wp);
        let a = Float::with_val(wp, &x.a);
        let bs = Float::with_val(wp, &x.b) * &sqrt_d;
        let c = Float::with_val(wp, &x.c);
        let plus = Float::with_val(wp, &a + &bs);
        let minus = Float::with_val(wp, &a - &bs);
        // The conjugate of smaller magnitude is recovered from the exact norm to avoid cancellation.
        let num_norm = Integer::from(x.a.square_ref()) - Integer::from(x.b.square_ref()) * self.d;
        let (plus, minus) = if num_norm == 0 {
            (plus, minus)
        } else if plus.clone().abs() >= minus.clone().abs() {
            let m = Float::with_val(wp, &num_norm) / &plus;
            (plus, m)
        } else {
            let pl = Float::with_val(wp, &num_norm) / &minus;
            (pl, minus)
        };
        let l1 = (plus.abs() / &c).ln();
        let l2 = (minus.abs() / &c).ln();
        Ok(LogVector::new(vec![l1, l2], p))
    }

    /// Units ±(x + y√D) whose first logarithm is `log_value`, if one exists.
    pub fn unit_from_log(&self, log_value: f64) -> Option<FieldElement> {
        if !log_value.is_finite() || log_value <= 0.0 || log_value > 600.0 {
            return None;
        }
        let bits = (log_value * std::f64::consts::LOG2_E) as u32 + 128;
        let eps = Float::with_val(bits, log_value).exp();
        let sqrt_d = self.sqrt_d(bits);
        for sign in [1i32, -1] {
            let inv = Float::with_val(bits, 1) / &eps * sign;
            let xf: Float = Float::with_val(bits, &eps + &inv) / 2u32;
            let yf: Float = Float::with_val(bits, &eps - &inv) / 2u32 / &sqrt_d;
            let x = xf.round().to_integer()?;
            let y = yf.round().to_integer()?;
            let e = FieldElement::new(x, y, Integer::from(1)).ok()?;
            if self.is_unit(&e) && e.b > 0 && e.a > 0 {
                return Some(e);
            }
        }
        None
    }
}

/// (a + b√D)/c in canonical form: c > 0 and gcd(a, b, c) = 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldElement {
    pub a: Integer,
    pub b: Integer,
    pub c: Integer,
}

impl FieldElement {
    pub fn new(a: Integer, b: Integer, c: Integer) -> Result<Self> {
        if c == 0 {
            return Err(Error::ZeroDenominator);
        }
        let mut g = Integer::from(a.gcd_ref(&b));
        g.gcd_mut(&c);
        let (mut a, mut b, mut c) = (a, b, c);
        if g > 1 {
            a /= &g;
            b /= &g;
            c /= &g;
        }
        if c < 0 {
            a = -a;
            b = -b;
            c = -c;
        }
        Ok(FieldElement { a, b, c })
    }

    pub fn from_int(n: i64) -> Self {
        FieldElement {
            a: Integer::from(n),
            b: Integer::new(),
            c: Integer::from(1),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0 && self.b == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c == 1 {
            write!(f, "{} + {}·√D", self.a, self.b)
        } else {
            write!(f, "({} + {}·√D)/{}", self.a, self.b, self.c)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogVector {
    pub components: Vec<Float>,
    pub precision: u32,
}

impl LogVector {
    pub fn new(components: Vec<Float>, precision: u32) -> Self {
        LogVector {
            components,
            precision,
        }
    }

    pub fn sum(&self) -> Float {
        let wp = working_precision(self.precision);
        self.components
            .iter()
            .fold(Float::with_val(wp, 0), |acc, x| acc + x)
    }

    pub fn add(&self, other: &LogVector) -> LogVector {
        let precision = self.precision.min(other.precision);
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(x, y)| Float::with_val(working_precision(precision), x + y))
            .collect();
        LogVector::new(components, precision)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.components.iter().map(|x| x.to_f64()).collect()
    }
}
