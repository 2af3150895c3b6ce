//! Exact piecewise polynomials on [0,1] over rational coefficients.
//!
//! The 1-d test functions (polynomials, hat functions, their products) live
//! in this class, and the class is closed under the pullback sum
//! `f -> sum_j f(map_j(y))` for affine self-maps of the interval: breakpoints
//! pull back through the expanding inverse branches and get clipped to [0,1],
//! so the piece count stays bounded while degrees are preserved. That closure
//! is what makes deep orbit-series sums computable exactly without
//! enumerating the words.

use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

pub type Coeffs = Vec<BigRational>;

fn rat(n: i64, d: i64) -> BigRational {
    crate::exact::big_rat(n, d)
}

pub fn poly_eval(coeffs: &[BigRational], x: &BigRational) -> BigRational {
    let mut acc = BigRational::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub fn poly_add(a: &[BigRational], b: &[BigRational]) -> Coeffs {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let x = a.get(i).cloned().unwrap_or_else(BigRational::zero);
            let y = b.get(i).cloned().unwrap_or_else(BigRational::zero);
            x + y
        })
        .collect()
}

pub fn poly_scale(a: &[BigRational], s: &BigRational) -> Coeffs {
    a.iter().map(|c| c * s).collect()
}

pub fn poly_mul(a: &[BigRational], b: &[BigRational]) -> Coeffs {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `p(alpha x + beta)` (Horner in polynomial arithmetic).
pub fn poly_compose_affine(p: &[BigRational], alpha: &BigRational, beta: &BigRational) -> Coeffs {
    let inner = vec![beta.clone(), alpha.clone()];
    let mut acc: Coeffs = vec![BigRational::zero()];
    for c in p.iter().rev() {
        acc = poly_mul(&acc, &inner);
        if acc.is_empty() {
            acc = vec![BigRational::zero()];
        }
        acc[0] += c;
    }
    acc
}

fn trim(mut c: Coeffs) -> Coeffs {
    while c.len() > 1 && c.last().map(|x| x.is_zero()).unwrap_or(false) {
        c.pop();
    }
    if c.is_empty() {
        c.push(BigRational::zero());
    }
    c
}

/// Piecewise polynomial on [0,1]: `pieces[i]` applies on `[breaks[i], breaks[i+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwPoly {
    breaks: Vec<BigRational>,
    pieces: Vec<Coeffs>,
    breaks_f64: Vec<f64>,
    pieces_f64: Vec<Vec<f64>>,
}

impl PwPoly {
    pub fn new(breaks: Vec<BigRational>, pieces: Vec<Coeffs>) -> Self {
        assert!(breaks.len() >= 2 && pieces.len() + 1 == breaks.len());
        assert!(breaks.windows(2).all(|w| w[0] < w[1]), "breakpoints must increase");
        assert!(breaks[0] == BigRational::zero() && *breaks.last().unwrap() == BigRational::one());
        let pieces: Vec<Coeffs> = pieces.into_iter().map(trim).collect();
        let breaks_f64 = breaks.iter().map(|b| b.to_f64().unwrap()).collect();
        let pieces_f64 = pieces
            .iter()
            .map(|p| p.iter().map(|c| c.to_f64().unwrap()).collect())
            .collect();
        PwPoly { breaks, pieces, breaks_f64, pieces_f64 }
    }

    pub fn constant(c: BigRational) -> Self {
        PwPoly::new(vec![BigRational::zero(), BigRational::one()], vec![vec![c]])
    }

    /// A single global polynomial on [0,1].
    pub fn from_coeffs(coeffs: Coeffs) -> Self {
        PwPoly::new(vec![BigRational::zero(), BigRational::one()], vec![coeffs])
    }

    /// Piecewise-linear interpolant through `(x_i, v_i)`; nodes must start at
    /// 0 and end at 1 with increasing x.
    pub fn piecewise_linear(nodes: &[(BigRational, BigRational)]) -> Self {
        assert!(nodes.len() >= 2);
        let breaks: Vec<BigRational> = nodes.iter().map(|(x, _)| x.clone()).collect();
        let pieces: Vec<Coeffs> = nodes
            .windows(2)
            .map(|w| {
                let (x0, v0) = &w[0];
                let (x1, v1) = &w[1];
                let slope = (v1 - v0) / (x1 - x0);
                vec![v0 - &slope * x0, slope]
            })
            .collect();
        PwPoly::new(breaks, pieces)
    }

    /// Hat of height 1 at `center` with half-width `w`, clipped to [0,1].
    pub fn hat(center: BigRational, w: BigRational) -> Self {
        let zero = BigRational::zero();
        let one = BigRational::one();
        let lo = (&center - &w).max(zero.clone());
        let hi = (&center + &w).min(one.clone());
        let mut nodes: Vec<(BigRational, BigRational)> = Vec::new();
        if lo > zero {
            nodes.push((zero.clone(), zero.clone()));
        }
        nodes.push((lo.clone(), value_of_hat(&lo, &center, &w)));
        if center > lo && center < hi {
            nodes.push((center.clone(), one.clone()));
        }
        nodes.push((hi.clone(), value_of_hat(&hi, &center, &w)));
        if hi < one {
            nodes.push((one.clone(), zero.clone()));
        }
        nodes.dedup_by(|a, b| a.0 == b.0);
        PwPoly::piecewise_linear(&nodes)
    }

    pub fn breaks(&self) -> &[BigRational] {
        &self.breaks
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0)
    }

    fn piece_index_exact(&self, x: &BigRational) -> usize {
        // rightmost piece whose left endpoint is <= x
        let idx = self.breaks.partition_point(|b| b <= x);
        idx.saturating_sub(1).min(self.pieces.len() - 1)
    }

    pub fn eval_exact(&self, x: &BigRational) -> BigRational {
        poly_eval(&self.pieces[self.piece_index_exact(x)], x)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let idx = self.breaks_f64.partition_point(|&b| b <= x);
        let idx = idx.saturating_sub(1).min(self.pieces_f64.len() - 1);
        let mut acc = 0.0;
        for c in self.pieces_f64[idx].iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    fn merged_breaks(&self, other: &PwPoly) -> Vec<BigRational> {
        let mut all: Vec<BigRational> =
            self.breaks.iter().chain(other.breaks.iter()).cloned().collect();
        all.sort();
        all.dedup();
        all
    }

    pub fn add(&self, other: &PwPoly) -> PwPoly {
        let breaks = self.merged_breaks(other);
        let pieces = breaks
            .windows(2)
            .map(|w| {
                let mid = (&w[0] + &w[1]) / rat(2, 1);
                poly_add(
                    &self.pieces[self.piece_index_exact(&mid)],
                    &other.pieces[other.piece_index_exact(&mid)],
                )
            })
            .collect();
        PwPoly::new(breaks, pieces)
    }

    pub fn mul(&self, other: &PwPoly) -> PwPoly {
        let breaks = self.merged_breaks(other);
        let pieces = breaks
            .windows(2)
            .map(|w| {
                let mid = (&w[0] + &w[1]) / rat(2, 1);
                poly_mul(
                    &self.pieces[self.piece_index_exact(&mid)],
                    &other.pieces[other.piece_index_exact(&mid)],
                )
            })
            .collect();
        PwPoly::new(breaks, pieces)
    }

    pub fn scale(&self, s: &BigRational) -> PwPoly {
        PwPoly::new(
            self.breaks.clone(),
            self.pieces.iter().map(|p| poly_scale(p, s)).collect(),
        )
    }

    /// `y -> f(alpha y + beta)` on [0,1]; requires the affine image of [0,1]
    /// to stay inside [0,1].
    pub fn compose_affine(&self, alpha: &BigRational, beta: &BigRational) -> PwPoly {
        assert!(!alpha.is_zero());
        let zero = BigRational::zero();
        let one = BigRational::one();
        let at0 = beta.clone();
        let at1 = alpha + beta;
        assert!(
            at0 >= zero && at0 <= one && at1 >= zero && at1 <= one,
            "affine map must send [0,1] into itself"
        );
        // pull interior breakpoints back through the inverse, clip to [0,1]
        let mut new_breaks: Vec<BigRational> = vec![zero.clone(), one.clone()];
        for b in &self.breaks {
            let y = (b - beta) / alpha;
            if y > zero && y < one {
                new_breaks.push(y);
            }
        }
        new_breaks.sort();
        new_breaks.dedup();
        let pieces = new_breaks
            .windows(2)
            .map(|w| {
                let mid = (&w[0] + &w[1]) / rat(2, 1);
                let x = alpha * &mid + beta;
                poly_compose_affine(&self.pieces[self.piece_index_exact(&x)], alpha, beta)
            })
            .collect();
        PwPoly::new(new_breaks, pieces)
    }

    /// Pullback sum `y -> sum_j f(alpha_j y + beta_j)` over affine self-maps.
    pub fn pullback_sum(&self, maps: &[(BigRational, BigRational)]) -> PwPoly {
        let mut acc: Option<PwPoly> = None;
        for (alpha, beta) in maps {
            let term = self.compose_affine(alpha, beta);
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term),
            });
        }
        acc.expect("at least one map")
    }

    /// Largest |value| over a uniform grid (lower bound of the sup-norm).
    pub fn sup_abs_on_grid(&self, n: usize) -> f64 {
        (0..=n)
            .map(|i| self.eval_f64(i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }
}

fn value_of_hat(x: &BigRational, center: &BigRational, w: &BigRational) -> BigRational {
    let dist = (x - center).abs();
    if dist >= *w {
        BigRational::zero()
    } else {
        BigRational::one() - dist / w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        rat(n, d)
    }

    #[test]
    fn poly_composition_matches_pointwise() {
        // p(x) = 1 + 2x + 3x^2 composed with x -> x/2 + 1/4
        let p = vec![r(1, 1), r(2, 1), r(3, 1)];
        let q = poly_compose_affine(&p, &r(1, 2), &r(1, 4));
        for k in 0..=8 {
            let y = r(k, 8);
            let x = &r(1, 2) * &y + r(1, 4);
            assert_eq!(poly_eval(&q, &y), poly_eval(&p, &x));
        }
    }

    #[test]
    fn hat_evaluates_like_the_formula() {
        let h = PwPoly::hat(r(1, 2), r(1, 4));
        assert_eq!(h.eval_exact(&r(1, 2)), r(1, 1));
        assert_eq!(h.eval_exact(&r(3, 8)), r(1, 2));
        assert_eq!(h.eval_exact(&r(1, 4)), r(0, 1));
        assert_eq!(h.eval_exact(&r(0, 1)), r(0, 1));
        assert_eq!(h.eval_exact(&r(7, 8)), r(0, 1));
    }

    #[test]
    fn add_and_mul_agree_with_pointwise() {
        let a = PwPoly::hat(r(1, 3), r(1, 3));
        let b = PwPoly::from_coeffs(vec![r(1, 2), r(0, 1), r(1, 1)]); // 1/2 + x^2
        let sum = a.add(&b);
        let prod = a.mul(&b);
        for k in 0..=24 {
            let x = r(k, 24);
            assert_eq!(sum.eval_exact(&x), a.eval_exact(&x) + b.eval_exact(&x));
            assert_eq!(prod.eval_exact(&x), a.eval_exact(&x) * b.eval_exact(&x));
        }
    }

    /// Oracle: the pullback-sum recursion must equal brute-force word
    /// enumeration, exactly.
    #[test]
    fn pullback_sum_iterates_match_word_enumeration() {
        // tent maps y/2 and 1 - y/2
        let maps = vec![(r(1, 2), r(0, 1)), (r(-1, 2), r(1, 1))];
        let a = PwPoly::hat(r(1, 4), r(1, 4))
            .add(&PwPoly::from_coeffs(vec![r(0, 1), r(1, 1), r(2, 1)]));
        let y0 = r(1, 2);

        let mut level_points = vec![y0.clone()];
        let mut f = a.clone();
        for n in 1..=8u32 {
            let mut next = Vec::with_capacity(level_points.len() * 2);
            for p in &level_points {
                for (al, be) in &maps {
                    next.push(al * p + be);
                }
            }
            level_points = next;
            f = f.pullback_sum(&maps);
            let brute: BigRational = level_points.iter().map(|p| a.eval_exact(p)).sum();
            assert_eq!(f.eval_exact(&y0), brute, "level {n}");
        }
    }

    #[test]
    fn pullback_keeps_piece_count_bounded() {
        let maps = vec![(r(1, 2), r(0, 1)), (r(-1, 2), r(1, 1))];
        let mut f = PwPoly::hat(r(1, 3), r(1, 5));
        let start = f.piece_count();
        for _ in 0..40 {
            f = f.pullback_sum(&maps);
        }
        assert!(f.piece_count() <= start + 4, "pieces grew to {}", f.piece_count());
    }
}
