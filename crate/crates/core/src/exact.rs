//! Exact scalar arithmetic over the field Q(sqrt 3).
//!
//! Branch structure is defined by equality constraints, so every preset
//! computation runs on exact scalars: rationals for the interval systems,
//! and `a + b*sqrt(3)` with rational `a`, `b` for the gasket, whose vertex
//! coordinates involve sqrt(3). Comparisons, equality and linear solves are
//! all exact; `to_f64` is the only lossy operation.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Element of Q(sqrt 3): `rational + sqrt3_coeff * sqrt(3)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exact {
    pub rational: BigRational,
    pub sqrt3_coeff: BigRational,
}

pub fn big_rat(num: i64, den: i64) -> BigRational {
    assert!(den != 0, "zero denominator");
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl Exact {
    pub fn zero() -> Self {
        Exact { rational: BigRational::zero(), sqrt3_coeff: BigRational::zero() }
    }

    pub fn one() -> Self {
        Exact { rational: BigRational::one(), sqrt3_coeff: BigRational::zero() }
    }

    pub fn from_int(n: i64) -> Self {
        Exact::from_big_rational(BigRational::from_integer(BigInt::from(n)))
    }

    /// `num/den` as an exact rational.
    pub fn rat(num: i64, den: i64) -> Self {
        Exact::from_big_rational(big_rat(num, den))
    }

    /// `(num/den) * sqrt(3)`.
    pub fn sqrt3(num: i64, den: i64) -> Self {
        Exact { rational: BigRational::zero(), sqrt3_coeff: big_rat(num, den) }
    }

    pub fn from_big_rational(r: BigRational) -> Self {
        Exact { rational: r, sqrt3_coeff: BigRational::zero() }
    }

    /// Exact conversion of a finite float (every finite f64 is rational).
    pub fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Exact::from_big_rational)
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.sqrt3_coeff.is_zero()
    }

    pub fn is_rational(&self) -> bool {
        self.sqrt3_coeff.is_zero()
    }

    /// Exact sign: -1, 0 or +1.
    pub fn signum(&self) -> i32 {
        let (a, b) = (&self.rational, &self.sqrt3_coeff);
        if b.is_zero() {
            return rat_sign(a);
        }
        if a.is_zero() {
            return rat_sign(b);
        }
        match (a.is_positive(), b.is_positive()) {
            (true, true) => 1,
            (false, false) => -1,
            (true, false) => {
                // a > 0 > b*sqrt(3): sign decided by a^2 - 3 b^2
                rat_sign(&(a * a - three() * b * b))
            }
            (false, true) => -rat_sign(&(a * a - three() * b * b)),
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() < 0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.rational.to_f64().unwrap_or(f64::NAN)
            + self.sqrt3_coeff.to_f64().unwrap_or(f64::NAN) * 3.0_f64.sqrt()
    }

    /// Multiplicative inverse; panics on zero (callers check determinants first).
    pub fn inv(&self) -> Self {
        assert!(!self.is_zero(), "division by zero exact scalar");
        // 1/(a + b sqrt3) = (a - b sqrt3)/(a^2 - 3 b^2)
        let denom = &self.rational * &self.rational
            - three() * &self.sqrt3_coeff * &self.sqrt3_coeff;
        assert!(!denom.is_zero(), "norm of nonzero element of Q(sqrt3) cannot vanish");
        Exact {
            rational: &self.rational / &denom,
            sqrt3_coeff: -&self.sqrt3_coeff / &denom,
        }
    }
}

fn three() -> BigRational {
    BigRational::from_integer(BigInt::from(3))
}

fn rat_sign(r: &BigRational) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

impl PartialOrd for Exact {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Exact {
    fn cmp(&self, other: &Self) -> Ordering {
        let diff = self.clone() - other.clone();
        match diff.signum() {
            1 => Ordering::Greater,
            -1 => Ordering::Less,
            _ => Ordering::Equal,
        }
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, rhs: Exact) -> Exact {
        Exact {
            rational: self.rational + rhs.rational,
            sqrt3_coeff: self.sqrt3_coeff + rhs.sqrt3_coeff,
        }
    }
}

impl AddAssign for Exact {
    fn add_assign(&mut self, rhs: Exact) {
        self.rational += rhs.rational;
        self.sqrt3_coeff += rhs.sqrt3_coeff;
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        Exact {
            rational: self.rational - rhs.rational,
            sqrt3_coeff: self.sqrt3_coeff - rhs.sqrt3_coeff,
        }
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact { rational: -self.rational, sqrt3_coeff: -self.sqrt3_coeff }
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, rhs: Exact) -> Exact {
        // (a + b s)(c + d s) = (ac + 3bd) + (ad + bc) s,  s = sqrt 3
        let a = &self.rational;
        let b = &self.sqrt3_coeff;
        let c = &rhs.rational;
        let d = &rhs.sqrt3_coeff;
        Exact {
            rational: a * c + three() * b * d,
            sqrt3_coeff: a * d + b * c,
        }
    }
}

impl Div for Exact {
    type Output = Exact;
    fn div(self, rhs: Exact) -> Exact {
        self * rhs.inv()
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sqrt3_coeff.is_zero() {
            write!(f, "{}", self.rational)
        } else if self.rational.is_zero() {
            write!(f, "{}*sqrt3", self.sqrt3_coeff)
        } else {
            write!(f, "{}+{}*sqrt3", self.rational, self.sqrt3_coeff)
        }
    }
}

/// A point with exact coordinates; orderable so it can key dedup maps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExactPoint(pub Vec<Exact>);

impl ExactPoint {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(Exact::to_f64).collect()
    }

    pub fn from_rationals(coords: &[(i64, i64)]) -> Self {
        ExactPoint(coords.iter().map(|&(p, q)| Exact::rat(p, q)).collect())
    }
}

impl fmt::Display for ExactPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Solves `m x = rhs` by exact Gaussian elimination. `None` when singular.
pub fn solve_linear(m: &[Vec<Exact>], rhs: &[Exact]) -> Option<Vec<Exact>> {
    let n = m.len();
    assert!(m.iter().all(|row| row.len() == n) && rhs.len() == n);
    let mut a: Vec<Vec<Exact>> = m.to_vec();
    let mut b: Vec<Exact> = rhs.to_vec();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].inv();
        for c in col..n {
            a[col][c] = a[col][c].clone() * inv.clone();
        }
        b[col] = b[col].clone() * inv.clone();
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..n {
                    a[r][c] = a[r][c].clone() - factor.clone() * a[col][c].clone();
                }
                b[r] = b[r].clone() - factor * b[col].clone();
            }
        }
    }
    Some(b)
}

/// Exact determinant by elimination (small dimensions).
pub fn determinant(m: &[Vec<Exact>]) -> Exact {
    let n = m.len();
    let mut a: Vec<Vec<Exact>> = m.to_vec();
    let mut det = Exact::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Exact::zero();
        };
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det = det * a[col][col].clone();
        let inv = a[col][col].inv();
        for r in col + 1..n {
            if !a[r][col].is_zero() {
                let factor = a[r][col].clone() * inv.clone();
                for c in col..n {
                    a[r][c] = a[r][c].clone() - factor.clone() * a[col][c].clone();
                }
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_of_mixed_terms() {
        // 2 - sqrt(3) > 0, 5 - 3*sqrt(3) < 0
        let x = Exact::from_int(2) - Exact::sqrt3(1, 1);
        assert_eq!(x.signum(), 1);
        let y = Exact::from_int(5) - Exact::sqrt3(3, 1);
        assert_eq!(y.signum(), -1);
    }

    #[test]
    fn field_inverse_round_trip() {
        let x = Exact::rat(3, 7) + Exact::sqrt3(-2, 5);
        let prod = x.clone() * x.inv();
        assert_eq!(prod, Exact::one());
    }

    #[test]
    fn exact_f64_conversion() {
        let x = Exact::from_f64(0.375).unwrap();
        assert_eq!(x, Exact::rat(3, 8));
        assert_eq!(x.to_f64(), 0.375);
    }

    #[test]
    fn solves_two_by_two() {
        // [[1, 1], [1, -1]] x = (3, 1)  =>  x = (2, 1)
        let m = vec![
            vec![Exact::one(), Exact::one()],
            vec![Exact::one(), Exact::from_int(-1)],
        ];
        let rhs = vec![Exact::from_int(3), Exact::one()];
        let x = solve_linear(&m, &rhs).unwrap();
        assert_eq!(x, vec![Exact::from_int(2), Exact::one()]);
    }

    #[test]
    fn singular_solve_is_none() {
        let m = vec![
            vec![Exact::one(), Exact::one()],
            vec![Exact::one(), Exact::one()],
        ];
        let rhs = vec![Exact::zero(), Exact::one()];
        assert!(solve_linear(&m, &rhs).is_none());
        assert!(determinant(&m).is_zero());
    }

    #[test]
    fn ordering_is_total_on_mixed_values() {
        let vals = [
            Exact::rat(-1, 2),
            Exact::zero(),
            Exact::sqrt3(1, 3),
            Exact::one(),
            Exact::sqrt3(1, 1),
            Exact::from_int(2),
        ];
        for w in vals.windows(2) {
            assert!(w[0] < w[1], "{} !< {}", w[0], w[1]);
        }
    }
}
