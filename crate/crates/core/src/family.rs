//! The deterministic + seeded test-function family quantifying over the
//! algebra in the residual checks.
//!
//! Interval members are exact piecewise polynomials, so the same member can
//! be integrated in floats against atom lists and exactly through the
//! pullback-sum recursion. Gasket members are callables whose
//! vanishing-on-branch-points factors are evaluated in factored form, which
//! makes the zero at each branch point exact even in floats. Members are
//! normalized by powers of two (exactness-preserving) to keep sup and
//! Lipschitz size near one.

use crate::bimodule::AlgebraElement;
use crate::branching::BranchReport;
use crate::error::{Error, Result};
use crate::exact::ExactPoint;
use crate::ifs::{dist, IfsSystem};
use crate::pwpoly::{poly_mul, PwPoly};
use num::rational::BigRational;
use num::{One, Zero};
use rand::{Rng, SeedableRng};
use std::sync::Arc;

type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One member of the family.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    /// member evaluates to exactly zero at every branched point
    pub vanishes_on_branch_points: bool,
    /// member is nonnegative on K
    pub positive: bool,
    pub kind: FnKind,
    /// grid estimate of sup|f| after normalization
    pub sup_abs: f64,
}

#[derive(Clone)]
pub enum FnKind {
    /// exact 1-d piecewise polynomial on [0,1]
    Interval(PwPoly),
    /// float-only evaluation (2-d members)
    Callable(RealFn),
}

impl TestFunction {
    pub fn at(&self, p: &[f64]) -> f64 {
        match &self.kind {
            FnKind::Interval(f) => f.eval_f64(p[0]),
            FnKind::Callable(f) => f(p),
        }
    }

    pub fn pwpoly(&self) -> Option<&PwPoly> {
        match &self.kind {
            FnKind::Interval(f) => Some(f),
            FnKind::Callable(_) => None,
        }
    }

    pub fn as_algebra_element(&self) -> AlgebraElement {
        match &self.kind {
            FnKind::Interval(f) => {
                let f = f.clone();
                AlgebraElement {
                    eval: Arc::new(move |p: &[f64]| f.eval_f64(p[0])),
                    name: self.name.clone(),
                }
            }
            FnKind::Callable(f) => {
                AlgebraElement { eval: f.clone(), name: self.name.clone() }
            }
        }
    }
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "TestFunction({}{}{})",
            self.name,
            if self.vanishes_on_branch_points { ", vanishing" } else { "" },
            if self.positive { ", positive" } else { "" }
        )
    }
}

/// The family plus the grid it was validated on.
#[derive(Debug, Clone)]
pub struct TestFunctionFamily {
    pub members: Vec<TestFunction>,
    pub grid: Vec<Vec<f64>>,
}

impl TestFunctionFamily {
    pub fn vanishing(&self) -> impl Iterator<Item = &TestFunction> {
        self.members.iter().filter(|m| m.vanishes_on_branch_points)
    }

    pub fn positive(&self) -> impl Iterator<Item = &TestFunction> {
        self.members.iter().filter(|m| m.positive)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Verification grid: uniform with 4097 points in 1-d (the right endpoint is
/// the tent branched value); attractor points plus the special points in 2-d.
pub fn standard_grid(sys: &IfsSystem, branch: &BranchReport) -> Vec<Vec<f64>> {
    if sys.dim() == 1 {
        let (lo, hi) = (sys.ambient_box.lo[0], sys.ambient_box.hi[0]);
        return (0..=4096)
            .map(|k| vec![lo + (hi - lo) * k as f64 / 4096.0])
            .collect();
    }
    let seed: Vec<f64> = (0..sys.dim())
        .map(|i| 0.5 * (sys.ambient_box.lo[i] + sys.ambient_box.hi[i]))
        .collect();
    let mut pts = crate::ifs::attractor_approx(sys, 6, &seed)
        .map(|c| c.points)
        .unwrap_or_default();
    for p in branch.branch_values.iter().chain(branch.branch_points.iter()) {
        pts.push(p.to_f64());
    }
    pts
}

fn rat(n: i64, d: i64) -> BigRational {
    crate::exact::big_rat(n, d)
}

/// Exact power-of-two normalization: smallest 2^k >= scale.
fn pow2_at_least(scale: f64) -> i64 {
    let mut k: i64 = 0;
    let mut v = 1.0;
    while v < scale && k < 60 {
        v *= 2.0;
        k += 1;
    }
    1_i64 << k
}

struct RawMember {
    name: String,
    vanishing: bool,
    positive: bool,
    kind: FnKind,
}

/// Builds the standard family: at least 60 deterministic members plus 8
/// seeded Lipschitz members, each tagged and normalized.
pub fn standard_family(
    sys: &IfsSystem,
    branch: &BranchReport,
    seed: u64,
) -> Result<TestFunctionFamily> {
    let grid = standard_grid(sys, branch);
    let raw = match sys.dim() {
        1 => interval_members(branch, seed)?,
        2 => plane_members(sys, branch, seed),
        d => return Err(Error::Domain(format!("family generator supports d <= 2, got {d}"))),
    };
    let branch_pts: Vec<Vec<f64>> = branch.branch_points.iter().map(ExactPoint::to_f64).collect();
    let mut members = Vec::with_capacity(raw.len());
    for m in raw {
        // normalize by a power of two against grid sup and a Lipschitz probe
        let evaluate = |p: &[f64]| match &m.kind {
            FnKind::Interval(f) => f.eval_f64(p[0]),
            FnKind::Callable(f) => f(p),
        };
        let sup = grid.iter().map(|p| evaluate(p).abs()).fold(0.0, f64::max);
        let lip = grid
            .windows(2)
            .map(|w| {
                let d = dist(&w[0], &w[1]);
                if d > 1e-12 { (evaluate(&w[0]) - evaluate(&w[1])).abs() / d } else { 0.0 }
            })
            .fold(0.0, f64::max);
        let denom = pow2_at_least(sup.max(lip).max(1.0));
        let kind = match m.kind {
            FnKind::Interval(f) => FnKind::Interval(f.scale(&rat(1, denom))),
            FnKind::Callable(f) => {
                let s = 1.0 / denom as f64;
                let g: RealFn = Arc::new(move |p: &[f64]| f(p) * s);
                FnKind::Callable(g)
            }
        };
        let member = TestFunction {
            name: m.name,
            vanishes_on_branch_points: m.vanishing,
            positive: m.positive,
            sup_abs: sup / denom as f64,
            kind,
        };
        // tag verification: exact zeros at branch points, nonnegativity on grid
        if member.vanishes_on_branch_points {
            for b in &branch_pts {
                let v = member.at(b);
                if v != 0.0 {
                    return Err(Error::Precondition(format!(
                        "member {} tagged vanishing evaluates to {v} at a branch point",
                        member.name
                    )));
                }
            }
        }
        if member.positive {
            for p in grid.iter() {
                if member.at(p) < -1e-15 {
                    return Err(Error::Precondition(format!(
                        "member {} tagged positive dips to {} on the grid",
                        member.name,
                        member.at(p)
                    )));
                }
            }
        }
        members.push(member);
    }
    Ok(TestFunctionFamily { members, grid })
}

fn interval_members(branch: &BranchReport, seed: u64) -> Result<Vec<RawMember>> {
    let mut out: Vec<RawMember> = Vec::new();
    let push = |out: &mut Vec<RawMember>, name: String, vanishing, positive, f: PwPoly| {
        out.push(RawMember { name, vanishing, positive, kind: FnKind::Interval(f) });
    };

    // 7 monomials y^k
    for k in 0..=6usize {
        let mut coeffs = vec![BigRational::zero(); k + 1];
        coeffs[k] = BigRational::one();
        push(&mut out, format!("monomial_{k}"), false, true, PwPoly::from_coeffs(coeffs));
    }
    // 6 shifted powers (2y-1)^k
    let shifted = vec![rat(-1, 1), rat(2, 1)];
    let mut pw = shifted.clone();
    for k in 1..=6usize {
        push(
            &mut out,
            format!("shifted_pow_{k}"),
            false,
            k % 2 == 0,
            PwPoly::from_coeffs(pw.clone()),
        );
        pw = poly_mul(&pw, &shifted);
    }
    // 6 Chebyshev polynomials T_k(2y-1)
    let mut t_prev = vec![BigRational::one()];
    let mut t_cur = shifted.clone();
    for k in 1..=6usize {
        push(&mut out, format!("chebyshev_{k}"), false, false, PwPoly::from_coeffs(t_cur.clone()));
        let two_x_t = poly_mul(&poly_mul(&vec![rat(2, 1)], &shifted), &t_cur);
        let next: Vec<BigRational> = (0..two_x_t.len())
            .map(|i| {
                let a = two_x_t[i].clone();
                let b = t_prev.get(i).cloned().unwrap_or_else(BigRational::zero);
                a - b
            })
            .collect();
        t_prev = t_cur;
        t_cur = next;
    }
    // 7 Bernstein polynomials of degree 6
    for k in 0..=6usize {
        let mut f = vec![rat(binom(6, k), 1)];
        for _ in 0..k {
            f = poly_mul(&f, &vec![rat(0, 1), rat(1, 1)]);
        }
        for _ in 0..(6 - k) {
            f = poly_mul(&f, &vec![rat(1, 1), rat(-1, 1)]);
        }
        push(&mut out, format!("bernstein_{k}_6"), false, true, PwPoly::from_coeffs(f));
    }
    // 9 narrow + 9 wide hats
    for j in 0..=8i64 {
        push(
            &mut out,
            format!("hat_{j}_8_narrow"),
            false,
            true,
            PwPoly::hat(rat(j, 8), rat(1, 8)),
        );
    }
    for j in 0..=8i64 {
        push(&mut out, format!("hat_{j}_8_wide"), false, true, PwPoly::hat(rat(j, 8), rat(1, 4)));
    }

    // vanishing factor: product of (y - b)^2 over branch points, and the
    // distance profile min |y - b| (piecewise linear, exact)
    let bpoints: Vec<BigRational> = branch
        .branch_points
        .iter()
        .map(|b| {
            b.0[0]
                .is_rational()
                .then(|| b.0[0].rational.clone())
                .ok_or_else(|| Error::Precondition("interval branch points must be rational".into()))
        })
        .collect::<Result<_>>()?;
    if !bpoints.is_empty() {
        let mut q = vec![BigRational::one()];
        for b in &bpoints {
            let factor = vec![b * b, rat(-2, 1) * b, BigRational::one()];
            q = poly_mul(&q, &factor);
        }
        let q = PwPoly::from_coeffs(q);
        // q * y^k
        for k in 0..=3usize {
            let mut coeffs = vec![BigRational::zero(); k + 1];
            coeffs[k] = BigRational::one();
            push(
                &mut out,
                format!("vanish_sq_times_monomial_{k}"),
                true,
                true,
                q.mul(&PwPoly::from_coeffs(coeffs)),
            );
        }
        // q^2 and q * hats
        push(&mut out, "vanish_sq_squared".into(), true, true, q.mul(&q));
        push(&mut out, "vanish_sq_hat_left".into(), true, true, q.mul(&PwPoly::hat(rat(1, 4), rat(1, 4))));
        push(&mut out, "vanish_sq_hat_right".into(), true, true, q.mul(&PwPoly::hat(rat(3, 4), rat(1, 4))));
        // |y - b| profile (single-branch-point systems keep this exact)
        if bpoints.len() == 1 {
            let b = &bpoints[0];
            let dist_profile = PwPoly::piecewise_linear(&[
                (BigRational::zero(), b.clone()),
                (b.clone(), BigRational::zero()),
                (BigRational::one(), BigRational::one() - b),
            ]);
            for k in 0..=2usize {
                let mut coeffs = vec![BigRational::zero(); k + 1];
                coeffs[k] = BigRational::one();
                push(
                    &mut out,
                    format!("vanish_dist_times_monomial_{k}"),
                    true,
                    true,
                    dist_profile.mul(&PwPoly::from_coeffs(coeffs)),
                );
            }
        }
    } else {
        // branch-free systems: everything trivially vanishes on the empty set
        for k in 0..=6usize {
            let mut coeffs = vec![BigRational::zero(); k + 1];
            coeffs[k] = BigRational::one();
            push(
                &mut out,
                format!("vanish_trivial_monomial_{k}"),
                true,
                true,
                PwPoly::from_coeffs(coeffs),
            );
        }
        push(&mut out, "vanish_trivial_hat".into(), true, true, PwPoly::hat(rat(1, 2), rat(1, 2)));
        let w = PwPoly::hat(rat(1, 2), rat(1, 2)).mul(&PwPoly::from_coeffs(vec![rat(0, 1), rat(1, 1)]));
        push(&mut out, "vanish_trivial_product".into(), true, true, w);
        push(
            &mut out,
            "vanish_trivial_shifted".into(),
            true,
            true,
            PwPoly::from_coeffs(poly_mul(&shifted, &shifted)),
        );
    }

    // 8 seeded Lipschitz walks: piecewise linear through 17 nodes with
    // rational increments no larger than the node spacing
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for r in 0..8 {
        let mut nodes: Vec<(BigRational, BigRational)> = Vec::with_capacity(17);
        let mut v = rat(rng.random_range(0..=256), 256);
        for i in 0..=16i64 {
            nodes.push((rat(i, 16), v.clone()));
            let step = rat(rng.random_range(-16..=16), 256);
            v = (v + step).max(rat(0, 1)).min(rat(1, 1));
        }
        push(&mut out, format!("lipschitz_walk_{r}"), false, true, PwPoly::piecewise_linear(&nodes));
    }
    Ok(out)
}

fn binom(n: u64, k: usize) -> i64 {
    let mut acc = 1i64;
    for i in 0..k as u64 {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

fn plane_members(sys: &IfsSystem, branch: &BranchReport, seed: u64) -> Vec<RawMember> {
    let mut out: Vec<RawMember> = Vec::new();
    let bpts: Vec<Vec<f64>> = branch.branch_points.iter().map(ExactPoint::to_f64).collect();
    let specials: Vec<Vec<f64>> = branch
        .branch_points
        .iter()
        .chain(branch.branch_values.iter())
        .map(ExactPoint::to_f64)
        .collect();

    // 15 monomials x^i y^j with i + j <= 4
    for i in 0..=4u32 {
        for j in 0..=(4 - i) {
            let f: RealFn = Arc::new(move |p: &[f64]| p[0].powi(i as i32) * p[1].powi(j as i32));
            out.push(RawMember {
                name: format!("monomial_{i}_{j}"),
                vanishing: false,
                positive: true, // the gasket sits in the first quadrant
                kind: FnKind::Callable(f),
            });
        }
    }
    // squared distances to the six special points
    for (idx, c) in specials.iter().cloned().enumerate() {
        let f: RealFn = Arc::new(move |p: &[f64]| {
            (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
        });
        out.push(RawMember {
            name: format!("dist_sq_special_{idx}"),
            vanishing: false,
            positive: true,
            kind: FnKind::Callable(f),
        });
    }
    // quadratic bumps at the special points, two radii each
    for (idx, c) in specials.iter().cloned().enumerate() {
        for (ri, r) in [0.3f64, 0.6].into_iter().enumerate() {
            let c = c.clone();
            let f: RealFn = Arc::new(move |p: &[f64]| {
                let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                (1.0 - d2 / (r * r)).max(0.0)
            });
            out.push(RawMember {
                name: format!("bump_special_{idx}_{ri}"),
                vanishing: false,
                positive: true,
                kind: FnKind::Callable(f),
            });
        }
    }
    // factored vanishing products: prod_b |p - b|^2 times simple factors
    let vanishing_factor = {
        let bpts = bpts.clone();
        move |p: &[f64]| -> f64 {
            bpts.iter()
                .map(|b| (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2))
                .product()
        }
    };
    let extras: Vec<(String, RealFn)> = vec![
        ("one".into(), Arc::new(|_: &[f64]| 1.0)),
        ("x".into(), Arc::new(|p: &[f64]| p[0])),
        ("y".into(), Arc::new(|p: &[f64]| p[1])),
        ("xy".into(), Arc::new(|p: &[f64]| p[0] * p[1])),
        ("xx".into(), Arc::new(|p: &[f64]| p[0] * p[0])),
        ("yy".into(), Arc::new(|p: &[f64]| p[1] * p[1])),
        ("sum".into(), Arc::new(|p: &[f64]| p[0] + p[1])),
        ("xpy2".into(), Arc::new(|p: &[f64]| (p[0] + p[1]).powi(2))),
    ];
    for (name, extra) in extras {
        let v = vanishing_factor.clone();
        let f: RealFn = Arc::new(move |p: &[f64]| v(p) * extra(p));
        out.push(RawMember {
            name: format!("vanish_prod_{name}"),
            vanishing: true,
            positive: true,
            kind: FnKind::Callable(f),
        });
    }
    // vanishing bumps: factored square distance to one branch point only
    for (idx, b) in bpts.iter().cloned().enumerate() {
        let f: RealFn = Arc::new(move |p: &[f64]| {
            let d2 = (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2);
            d2 * (1.0 - d2).max(0.0)
        });
        out.push(RawMember {
            name: format!("vanish_local_{idx}"),
            vanishing: bpts.len() == 1,
            positive: true,
            kind: FnKind::Callable(f),
        });
    }
    // those are only zero at their own center; build the true product tags
    for (idx, _) in bpts.iter().enumerate() {
        let bpts = bpts.clone();
        let f: RealFn = Arc::new(move |p: &[f64]| {
            bpts.iter()
                .map(|b| ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt())
                .product::<f64>()
                * (idx as f64 + 1.0)
        });
        out.push(RawMember {
            name: format!("vanish_dist_prod_scale_{idx}"),
            vanishing: true,
            positive: true,
            kind: FnKind::Callable(f),
        });
    }
    // degree-5 diagonal monomials
    for k in 1..=5u32 {
        let f: RealFn = Arc::new(move |p: &[f64]| (p[0] * p[1]).powi(k as i32) * p[0]);
        out.push(RawMember {
            name: format!("diag_monomial_{k}"),
            vanishing: false,
            positive: true,
            kind: FnKind::Callable(f),
        });
    }
    // affine-in-position members (not positive)
    let center: Vec<f64> = (0..2)
        .map(|i| 0.5 * (sys.ambient_box.lo[i] + sys.ambient_box.hi[i]))
        .collect();
    for (k, dir) in [(0usize, [1.0, 0.0]), (1, [0.0, 1.0]), (2, [1.0, 1.0]), (3, [1.0, -1.0])] {
        let c = center.clone();
        let f: RealFn =
            Arc::new(move |p: &[f64]| dir[0] * (p[0] - c[0]) + dir[1] * (p[1] - c[1]));
        out.push(RawMember {
            name: format!("affine_{k}"),
            vanishing: false,
            positive: false,
            kind: FnKind::Callable(f),
        });
    }
    // 8 seeded Lipschitz cones
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for r in 0..8 {
        let cx = rng.random_range(0.0..1.0);
        let cy = rng.random_range(0.0..0.87);
        let rad = rng.random_range(0.2..0.8);
        let f: RealFn = Arc::new(move |p: &[f64]| {
            let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            (1.0 - d / rad).max(0.0)
        });
        out.push(RawMember {
            name: format!("lipschitz_cone_{r}"),
            vanishing: false,
            positive: true,
            kind: FnKind::Callable(f),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn tent_family_size_and_tags() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 0xFA717E).unwrap();
        assert!(fam.len() >= 60, "family has {} members", fam.len());
        assert!(fam.vanishing().count() >= 7);
        assert!(fam.positive().count() >= 30);
        // all interval members carry exact forms
        assert!(fam.members.iter().all(|m| m.pwpoly().is_some()));
        // vanishing members are exactly zero at the branch point 1/2
        for m in fam.vanishing() {
            assert_eq!(m.at(&[0.5]), 0.0, "{}", m.name);
        }
        // normalization keeps members order-one
        for m in &fam.members {
            assert!(m.sup_abs <= 1.0 + 1e-12, "{} has sup {}", m.name, m.sup_abs);
        }
    }

    #[test]
    fn gasket_family_vanishing_members_are_exact_zeros() {
        let p = presets::sierpinski().unwrap();
        let fam = standard_family(&p.system, &p.branch, 7).unwrap();
        assert!(fam.len() >= 60, "family has {} members", fam.len());
        for m in fam.vanishing() {
            for b in &p.branch.branch_points {
                assert_eq!(m.at(&b.to_f64()), 0.0, "{}", m.name);
            }
        }
    }

    #[test]
    fn family_generation_is_deterministic() {
        let p = presets::tent().unwrap();
        let a = standard_family(&p.system, &p.branch, 99).unwrap();
        let b = standard_family(&p.system, &p.branch, 99).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.members.iter().zip(&b.members) {
            assert_eq!(x.name, y.name);
            for k in 0..=32 {
                let t = [k as f64 / 32.0];
                assert_eq!(x.at(&t), y.at(&t));
            }
        }
    }
}
