//! Elements of the function bimodule attached to a contraction system.
//!
//! An element is a list of N scalar functions on K, component j standing for
//! the restriction of a function on the coincidence graph
//! `{(map_j(y), y) | y in K}` to the j-th sheet. Components must agree
//! wherever two maps coincide (checked at construction at the finitely many
//! branched values). The inner product sums conjugated component products,
//! and the two algebra actions multiply by `a(map_j(y))` on the left and
//! `a(y)` on the right.

use crate::branching::BranchReport;
use crate::error::{Error, Result};
use crate::exact::ExactPoint;
use crate::ifs::IfsSystem;
use num_complex::Complex64;
use std::collections::BTreeSet;
use std::sync::Arc;

pub type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ComplexFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Scalar continuous function on K (real-valued; the trace checks integrate
/// self-adjoint elements).
#[derive(Clone)]
pub struct AlgebraElement {
    pub eval: RealFn,
    pub name: String,
}

impl AlgebraElement {
    pub fn new(name: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        AlgebraElement { eval: Arc::new(f), name: name.to_string() }
    }

    pub fn constant(c: f64) -> Self {
        AlgebraElement::new(&format!("const({c})"), move |_| c)
    }

    pub fn at(&self, y: &[f64]) -> f64 {
        (self.eval)(y)
    }
}

impl std::fmt::Debug for AlgebraElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AlgebraElement({})", self.name)
    }
}

/// Complex-valued function on K, the result type of inner products.
#[derive(Clone)]
pub struct ComplexField {
    pub eval: ComplexFn,
}

impl ComplexField {
    pub fn at(&self, y: &[f64]) -> Complex64 {
        (self.eval)(y)
    }

    pub fn re(&self) -> AlgebraElement {
        let f = self.eval.clone();
        AlgebraElement { eval: Arc::new(move |y| f(y).re), name: "re(inner)".into() }
    }
}

/// Bimodule element as N component functions `f_j(y) = f(map_j(y), y)`.
#[derive(Clone)]
pub struct BimoduleElement {
    pub sys: IfsSystem,
    pub components: Vec<ComplexFn>,
}

const COMPAT_TOL: f64 = 1e-12;

impl BimoduleElement {
    /// Builds an element, enforcing branch compatibility: at each branched
    /// value the coinciding components must agree (error, not warning).
    pub fn new(
        sys: &IfsSystem,
        branch: &BranchReport,
        components: Vec<ComplexFn>,
    ) -> Result<Self> {
        if components.len() != sys.len() {
            return Err(Error::Shape { expected: sys.len(), got: components.len() });
        }
        let scale = 1.0 + sys.ambient_box.diameter();
        for (idx, co) in branch.coincidences.iter().enumerate() {
            let y = co.value.to_f64();
            let vals: Vec<Complex64> =
                co.maps.iter().map(|&j| components[j - 1](&y)).collect();
            for pair in vals.windows(2) {
                if (pair[0] - pair[1]).norm() > COMPAT_TOL * scale {
                    return Err(Error::BranchCompatibility {
                        value_index: idx,
                        detail: format!(
                            "components {:?} evaluate to {:?} at the branched value",
                            co.maps, vals
                        ),
                    });
                }
            }
        }
        Ok(BimoduleElement { sys: sys.clone(), components })
    }

    /// All components equal to the same function of y.
    pub fn diagonal(
        sys: &IfsSystem,
        branch: &BranchReport,
        f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let shared: ComplexFn = Arc::new(f);
        let components = vec![shared; sys.len()];
        BimoduleElement::new(sys, branch, components)
    }

    pub fn constant(sys: &IfsSystem, branch: &BranchReport, c: f64) -> Result<Self> {
        BimoduleElement::diagonal(sys, branch, move |_| Complex64::new(c, 0.0))
    }

    /// Component value `f(map_j(y), y)` for 1-based `j`.
    pub fn component(&self, j: usize, y: &[f64]) -> Complex64 {
        self.components[j - 1](y)
    }

    /// Linear interpolation through sampled 1-d component values.
    pub fn from_samples(
        sys: &IfsSystem,
        branch: &BranchReport,
        grid: Vec<f64>,
        values: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        if values.len() != sys.len() {
            return Err(Error::Shape { expected: sys.len(), got: values.len() });
        }
        if sys.dim() != 1 {
            return Err(Error::Precondition("sampled elements are 1-d".into()));
        }
        let grid = Arc::new(grid);
        let components: Vec<ComplexFn> = values
            .into_iter()
            .map(|vals| {
                let grid = grid.clone();
                let f: ComplexFn = Arc::new(move |y: &[f64]| {
                    let x = y[0];
                    let idx = grid.partition_point(|&g| g <= x);
                    if idx == 0 {
                        return vals[0];
                    }
                    if idx >= grid.len() {
                        return vals[vals.len() - 1];
                    }
                    let (x0, x1) = (grid[idx - 1], grid[idx]);
                    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
                    vals[idx - 1] * (1.0 - t) + vals[idx] * t
                });
                f
            })
            .collect();
        BimoduleElement::new(sys, branch, components)
    }
}

impl std::fmt::Debug for BimoduleElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BimoduleElement({} components)", self.components.len())
    }
}

/// `(f|g)(y) = sum_j conj(f_j(y)) g_j(y)`.
pub fn inner_product(f: &BimoduleElement, g: &BimoduleElement) -> Result<ComplexField> {
    if f.components.len() != g.components.len() {
        return Err(Error::Shape { expected: f.components.len(), got: g.components.len() });
    }
    let fc = f.components.clone();
    let gc = g.components.clone();
    Ok(ComplexField {
        eval: Arc::new(move |y| {
            fc.iter()
                .zip(&gc)
                .map(|(a, b)| a(y).conj() * b(y))
                .sum()
        }),
    })
}

/// Left action: component j becomes `a(map_j(y)) f_j(y)`.
pub fn left_act(a: &AlgebraElement, f: &BimoduleElement) -> BimoduleElement {
    let sys = f.sys.clone();
    let components: Vec<ComplexFn> = f
        .components
        .iter()
        .enumerate()
        .map(|(idx, comp)| {
            let comp = comp.clone();
            let a = a.eval.clone();
            let sys = sys.clone();
            let f: ComplexFn = Arc::new(move |y| {
                let img = sys.apply_f64(idx + 1, y).expect("valid label");
                comp(y) * a(&img)
            });
            f
        })
        .collect();
    BimoduleElement { sys: f.sys.clone(), components }
}

/// Right action: component j becomes `f_j(y) a(y)`.
pub fn right_act(f: &BimoduleElement, a: &AlgebraElement) -> BimoduleElement {
    let components: Vec<ComplexFn> = f
        .components
        .iter()
        .map(|comp| {
            let comp = comp.clone();
            let a = a.eval.clone();
            let g: ComplexFn = Arc::new(move |y| comp(y) * a(y));
            g
        })
        .collect();
    BimoduleElement { sys: f.sys.clone(), components }
}

/// Grid maximum of `sqrt(sum_j |f_j(y)|^2)`, a lower bound of the module
/// norm; accuracy is limited by the grid resolution.
pub fn norm2(f: &BimoduleElement, grid: &[Vec<f64>]) -> f64 {
    if grid.is_empty() {
        return 0.0;
    }
    let vals = crate::par::map_slice(grid, |y| {
        f.components
            .iter()
            .map(|c| c(y).norm_sqr())
            .sum::<f64>()
            .sqrt()
    });
    crate::par::slice_max(&vals)
}

/// The pullback sum `y -> sum over distinct image points x of a(x)`: at a
/// branched value coinciding images are counted once, so the function is
/// discontinuous there whenever `a` does not vanish on the branch points.
#[derive(Clone)]
pub struct TildeFunction {
    pub base: AlgebraElement,
    sys: IfsSystem,
    /// branched values with their distinct image lists, in f64
    collapsed: Vec<(Vec<f64>, Vec<Vec<f64>>)>,
    tol: f64,
}

impl std::fmt::Debug for TildeFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TildeFunction({})", self.base.name)
    }
}

/// Builds the pullback-sum function for `a` with branch collapsing taken
/// from the report.
pub fn tilde(a: &AlgebraElement, sys: &IfsSystem, branch: &BranchReport) -> TildeFunction {
    let collapsed = branch
        .branch_values
        .iter()
        .map(|c| {
            let images: BTreeSet<ExactPoint> = (1..=sys.len())
                .map(|j| sys.apply_exact(j, c).expect("affine"))
                .collect();
            (c.to_f64(), images.iter().map(ExactPoint::to_f64).collect())
        })
        .collect();
    TildeFunction {
        base: a.clone(),
        sys: sys.clone(),
        collapsed,
        tol: 1e-12 * (1.0 + sys.ambient_box.diameter()),
    }
}

impl TildeFunction {
    pub fn at(&self, y: &[f64]) -> f64 {
        for (c, images) in &self.collapsed {
            if crate::ifs::dist(y, c) <= self.tol {
                return images.iter().map(|x| self.base.at(x)).sum();
            }
        }
        (1..=self.sys.len())
            .map(|j| self.base.at(&self.sys.apply_f64(j, y).expect("valid label")))
            .sum()
    }

    pub fn as_algebra_element(&self) -> AlgebraElement {
        let me = self.clone();
        AlgebraElement {
            eval: Arc::new(move |y| me.at(y)),
            name: format!("pullback_sum({})", self.base.name),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_inner_product_counts_maps() {
        let p = presets::tent().unwrap();
        let one = BimoduleElement::constant(&p.system, &p.branch, 1.0).unwrap();
        let ip = inner_product(&one, &one).unwrap();
        assert_eq!(ip.at(&[0.3]), c(2.0));
        assert_eq!(ip.at(&[1.0]), c(2.0));
    }

    #[test]
    fn incompatible_components_rejected() {
        let p = presets::tent().unwrap();
        let comps: Vec<ComplexFn> = vec![
            Arc::new(|_: &[f64]| Complex64::new(1.0, 0.0)),
            Arc::new(|_: &[f64]| Complex64::new(0.0, 0.0)),
        ];
        let err = BimoduleElement::new(&p.system, &p.branch, comps);
        assert!(matches!(err, Err(Error::BranchCompatibility { .. })));
    }

    #[test]
    fn diagonal_identity_inner_product() {
        let p = presets::tent().unwrap();
        let f = BimoduleElement::diagonal(&p.system, &p.branch, |y| {
            Complex64::new(y[0], 0.0)
        })
        .unwrap();
        let ip = inner_product(&f, &f).unwrap();
        for y in [0.0, 0.25, 0.5, 1.0] {
            assert!((ip.at(&[y]).re - 2.0 * y * y).abs() < 1e-15);
        }
    }

    #[test]
    fn actions_match_formulas_and_commute() {
        let p = presets::tent().unwrap();
        let one = BimoduleElement::constant(&p.system, &p.branch, 1.0).unwrap();
        let a = AlgebraElement::new("id", |y| y[0]);
        let la = left_act(&a, &one);
        // components are map_1(y) = y/2 and map_2(y) = 1 - y/2
        for y in [0.0, 0.5, 1.0] {
            assert!((la.component(1, &[y]).re - y / 2.0).abs() < 1e-15);
            assert!((la.component(2, &[y]).re - (1.0 - y / 2.0)).abs() < 1e-15);
        }
        let ra = right_act(&one, &a);
        for y in [0.0, 0.5, 1.0] {
            assert_eq!(ra.component(1, &[y]).re, y);
            assert_eq!(ra.component(2, &[y]).re, y);
        }
        // identity action leaves the element unchanged
        let id = AlgebraElement::constant(1.0);
        let same = left_act(&id, &one);
        assert_eq!(same.component(1, &[0.3]), c(1.0));
        // left and right actions commute
        let b = AlgebraElement::new("b", |y| 1.0 + y[0]);
        let lr = left_act(&a, &right_act(&one, &b));
        let rl = right_act(&left_act(&a, &one), &b);
        for y in [0.1, 0.6, 0.9] {
            for j in 1..=2 {
                assert!((lr.component(j, &[y]) - rl.component(j, &[y])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn norm2_of_constants_and_zero() {
        let p = presets::tent().unwrap();
        let grid: Vec<Vec<f64>> = (0..=16).map(|k| vec![k as f64 / 16.0]).collect();
        let one = BimoduleElement::constant(&p.system, &p.branch, 1.0).unwrap();
        assert!((norm2(&one, &grid) - 2.0_f64.sqrt()).abs() < 1e-15);
        let zero = BimoduleElement::constant(&p.system, &p.branch, 0.0).unwrap();
        assert_eq!(norm2(&zero, &grid), 0.0);
        let idd = BimoduleElement::diagonal(&p.system, &p.branch, |y| c(y[0])).unwrap();
        let small: Vec<Vec<f64>> = vec![vec![0.0], vec![0.5], vec![1.0]];
        assert!((norm2(&idd, &small) - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pullback_sum_collapses_at_branch_value() {
        let p = presets::tent().unwrap();
        // arbitrary a: both maps send 1 to 1/2, counted once
        let a = AlgebraElement::new("quad", |y| 1.0 + y[0] * y[0]);
        let t = tilde(&a, &p.system, &p.branch);
        assert_eq!(t.at(&[1.0]), a.at(&[0.5]));
        // constant 1: value 2 away from the branched value, 1 at it
        let onef = AlgebraElement::constant(1.0);
        let t1 = tilde(&onef, &p.system, &p.branch);
        assert_eq!(t1.at(&[0.3]), 2.0);
        assert_eq!(t1.at(&[1.0]), 1.0);
        // one-sided limit differs from the collapsed value by (e-1)*a(b)
        let near = t1.at(&[1.0 - 1e-6]);
        assert!((near - 2.0).abs() < 1e-12);
        assert!((near - t1.at(&[1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pullback_sum_without_branches_is_plain() {
        let p = presets::doubling().unwrap();
        let one = AlgebraElement::constant(1.0);
        let t = tilde(&one, &p.system, &p.branch);
        for y in [0.0, 0.37, 1.0] {
            assert_eq!(t.at(&[y]), 2.0);
        }
    }

    #[test]
    fn vanishing_on_branch_points_means_no_collapse_difference() {
        let p = presets::tent().unwrap();
        // a vanishes at the branch point 1/2
        let a = AlgebraElement::new("vanish", |y| (y[0] - 0.5) * (y[0] - 0.5));
        let t = tilde(&a, &p.system, &p.branch);
        for y in [0.0, 0.25, 0.77, 1.0] {
            let plain: f64 = (1..=2)
                .map(|j| a.at(&p.system.apply_f64(j, &[y]).unwrap()))
                .sum();
            assert!((t.at(&[y]) - plain).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_element_round_trip() {
        let p = presets::tent().unwrap();
        let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let values: Vec<Vec<Complex64>> = (0..2)
            .map(|_| grid.iter().map(|&x| c(x * x)).collect())
            .collect();
        let f =
            BimoduleElement::from_samples(&p.system, &p.branch, grid.clone(), values).unwrap();
        for &x in &grid {
            assert!((f.component(1, &[x]).re - x * x).abs() < 1e-15);
        }
        // linear interpolation between nodes
        let mid = f.component(1, &[1.0 / 16.0]).re;
        assert!((mid - (0.0 + (1.0 / 64.0)) / 2.0).abs() < 1e-15);
    }
}
