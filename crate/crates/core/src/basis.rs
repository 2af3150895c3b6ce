//! The explicit countable basis of the bimodule: ramp profiles, the local
//! roots-of-unity family around one coincidence point, and the patched
//! global family glued with a partition of unity.
//!
//! The middle branch of the ramp is `(2i/P) x - 1`, which is the unique
//! linear interpolant matching the stated endpoints `r_i(P/(2i)) = 0` and
//! `r_i(P/i) = 1`; endpoint values are returned through the range guards, so
//! they are exact in floats. Around a coincidence point where n maps agree,
//! element k >= 2 carries the weight `v_i(d(y, c))` (with v_i^2 telescoping
//! to r_i) and a root-of-unity phase per sheet, so every element vanishes at
//! the coincidence point itself and sheet sums cancel elsewhere.

use crate::bimodule::{AlgebraElement, BimoduleElement, TildeFunction};
use crate::branching::BranchReport;
use crate::error::{Error, Result};
use crate::exact::ExactPoint;
use crate::ifs::{dist, IfsSystem};
use crate::par;
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Nondecreasing piecewise-linear profiles `r_i` with scale `P`.
#[derive(Debug, Clone, Copy)]
pub struct RampFamily {
    pub p: f64,
}

impl RampFamily {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::Domain(format!("ramp scale must be positive, got {p}")));
        }
        Ok(RampFamily { p })
    }

    /// `r_i(x)`: 0 up to P/(2i), 1 from P/i on, linear in between.
    pub fn r(&self, i: u32, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("ramp argument must be >= 0, got {x}")));
        }
        Ok(self.r_unchecked(i, x))
    }

    fn r_unchecked(&self, i: u32, x: f64) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let i = i as f64;
        if x >= self.p / i {
            1.0
        } else if x <= self.p / (2.0 * i) {
            0.0
        } else {
            (2.0 * i / self.p) * x - 1.0
        }
    }

    /// `v_i(x)^2 = r_i(x) - r_{i-1}(x)`, clamped against float undershoot.
    pub fn v_sq(&self, i: u32, x: f64) -> f64 {
        debug_assert!(i >= 1);
        (self.r_unchecked(i, x) - self.r_unchecked(i - 1, x)).max(0.0)
    }

    pub fn v(&self, i: u32, x: f64) -> f64 {
        self.v_sq(i, x).sqrt()
    }

    /// Smallest index with `r_i(x) = 1` (all later v vanish): `ceil(P/x)`.
    pub fn saturation_index(&self, x: f64) -> u32 {
        if x <= 0.0 {
            return u32::MAX;
        }
        (self.p / x).ceil() as u32
    }
}

/// `exp(2 pi I m / n)` with the half/quarter turns exact.
pub fn root_of_unity(n: usize, m: usize) -> Complex64 {
    let m = m % n;
    if m == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if 2 * m == n {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * m == n {
        return Complex64::new(0.0, 1.0);
    }
    if 4 * m == 3 * n {
        return Complex64::new(0.0, -1.0);
    }
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / n as f64)
}

/// The local basis where `n` sheets meet at one coincidence point.
///
/// Index layout: element 1 is the constant `1/sqrt(n)`; element
/// `1 + (n-1)(i-1) + l` (with ramp index `i >= 1` and phase `1 <= l <= n-1`)
/// has sheet-j value `(1/sqrt(n)) * omega^{l j} * v_i(d(y, c))`.
#[derive(Debug, Clone)]
pub struct NBranchBasis {
    pub n: usize,
    pub center: Vec<f64>,
    pub ramps: RampFamily,
}

impl NBranchBasis {
    pub fn new(n: usize, center: Vec<f64>, p: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain("branch class needs n >= 1".into()));
        }
        Ok(NBranchBasis { n, center, ramps: RampFamily::new(p)? })
    }

    /// Number of elements: 1 for the trivial class, countable otherwise.
    pub fn is_finite(&self) -> bool {
        self.n == 1
    }

    /// Ramp/phase split of the element index: `k = 1 + (n-1)(i-1) + l`.
    pub fn ramp_phase(&self, k: usize) -> Option<(u32, usize)> {
        if k < 2 || self.n < 2 {
            return None;
        }
        let t = k - 2; // (n-1)(i-1) + (l-1)
        let i = t / (self.n - 1) + 1;
        let l = t % (self.n - 1) + 1;
        Some((i as u32, l))
    }

    /// Sheet value of element k (sheet j is 1-based local).
    pub fn value(&self, k: usize, j: usize, y: &[f64]) -> Complex64 {
        let scale = 1.0 / (self.n as f64).sqrt();
        if k == 1 {
            return Complex64::new(scale, 0.0);
        }
        match self.ramp_phase(k) {
            None => Complex64::new(0.0, 0.0),
            Some((i, l)) => {
                let v = self.ramps.v(i, dist(y, &self.center));
                root_of_unity(self.n, (l * j) % self.n) * (scale * v)
            }
        }
    }

    /// `|u_k|^2` on any sheet (phases have unit modulus).
    pub fn weight_sq(&self, k: usize, y: &[f64]) -> f64 {
        if k == 1 {
            return 1.0 / self.n as f64;
        }
        match self.ramp_phase(k) {
            None => 0.0,
            Some((i, _)) => self.ramps.v_sq(i, dist(y, &self.center)) / self.n as f64,
        }
    }
}

/// One sub-module of a patch: the sheets landing on a common image point.
#[derive(Debug, Clone)]
pub struct SubModule {
    /// 1-based labels of the maps whose sheets this sub-module collects
    pub maps: Vec<usize>,
    /// their common image of the patch center (f64 view), if any
    pub image: Option<Vec<f64>>,
    pub local: NBranchBasis,
}

/// One patch of the covering: a ball around a branched value, or the
/// complement patch.
#[derive(Debug, Clone)]
pub struct Patch {
    /// center and radius for ball patches; None for the complement patch
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    pub submodules: Vec<SubModule>,
}

/// Identifies one basis element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementId {
    pub patch: usize,
    pub sub: usize,
    pub k: usize,
}

/// Enumeration order of the countable index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumOrder {
    /// rounds over k; within a round patches ascending, sub-modules ascending
    Standard,
    /// same rounds, reversed within each round
    ReversedWithinLevel,
}

/// Parameters of the patched construction.
#[derive(Debug, Clone)]
pub struct BasisParams {
    /// ball radius per branched value; None picks the default
    /// min(separation/3, diameter/4)
    pub radii: Option<Vec<f64>>,
    /// ramp scale as a fraction of the patch radius (supports stay inside)
    pub ramp_scale_ratio: f64,
}

impl Default for BasisParams {
    fn default() -> Self {
        BasisParams { radii: None, ramp_scale_ratio: 0.5 }
    }
}

/// The glued global family: ball patches around every branched value plus
/// one complement patch, with piecewise-linear radial bumps as the partition
/// of unity.
#[derive(Debug, Clone)]
pub struct PatchedBasis {
    pub sys: IfsSystem,
    pub patches: Vec<Patch>,
    pub params: BasisParams,
}

pub fn build_patched_basis(
    sys: &IfsSystem,
    branch: &BranchReport,
    params: BasisParams,
) -> Result<PatchedBasis> {
    if !branch.finite_branch {
        return Err(Error::Precondition("patched basis needs the finite branch condition".into()));
    }
    let centers: Vec<Vec<f64>> = branch.branch_values.iter().map(ExactPoint::to_f64).collect();
    let m = centers.len();
    let radii: Vec<f64> = match &params.radii {
        Some(r) => {
            if r.len() != m {
                return Err(Error::Shape { expected: m, got: r.len() });
            }
            r.clone()
        }
        None => {
            let diam = sys.ambient_box.diameter();
            let sep = (0..m)
                .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| dist(&centers[i], &centers[j]))
                .fold(f64::INFINITY, f64::min);
            let r = (diam / 4.0).min(sep / 3.0);
            vec![r; m]
        }
    };
    // validation: closed balls pairwise disjoint and meeting the branched
    // values only at their own center
    for i in 0..m {
        if !(radii[i] > 0.0) {
            return Err(Error::Geometry(format!("radius {} must be positive", i + 1)));
        }
        for j in 0..m {
            if i == j {
                continue;
            }
            let d = dist(&centers[i], &centers[j]);
            if d <= radii[i] + radii[j] {
                return Err(Error::Geometry(format!(
                    "closed balls around branched values {} and {} intersect (distance {d})",
                    i + 1,
                    j + 1
                )));
            }
            if d <= radii[i] {
                return Err(Error::Geometry(format!(
                    "ball around branched value {} contains branched value {}",
                    i + 1,
                    j + 1
                )));
            }
        }
    }

    let mut patches = Vec::with_capacity(m + 1);
    for (idx, c_exact) in branch.branch_values.iter().enumerate() {
        // group map labels by their exact image of the center
        let mut groups: BTreeMap<ExactPoint, Vec<usize>> = BTreeMap::new();
        for j in 1..=sys.len() {
            let img = sys.apply_exact(j, c_exact)?;
            groups.entry(img).or_default().push(j);
        }
        let p_scale = radii[idx] * params.ramp_scale_ratio;
        let submodules = groups
            .into_iter()
            .map(|(img, maps)| {
                let n = maps.len();
                Ok(SubModule {
                    maps,
                    image: Some(img.to_f64()),
                    local: NBranchBasis::new(n, centers[idx].clone(), p_scale)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        patches.push(Patch { center: Some(centers[idx].clone()), radius: radii[idx], submodules });
    }
    // complement patch: one trivial sub-module per sheet
    let complement_subs = (1..=sys.len())
        .map(|j| {
            Ok(SubModule {
                maps: vec![j],
                image: None,
                local: NBranchBasis::new(1, vec![0.0; sys.dim()], 1.0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    patches.push(Patch { center: None, radius: 0.0, submodules: complement_subs });

    Ok(PatchedBasis { sys: sys.clone(), patches, params })
}

impl PatchedBasis {
    /// Bump of patch `idx` at `y`: 1 inside half the radius, 0 outside the
    /// ball, linear in between; the complement bump is one minus the rest.
    pub fn psi(&self, idx: usize, y: &[f64]) -> f64 {
        match &self.patches[idx].center {
            Some(c) => {
                let d = dist(y, c);
                let r = self.patches[idx].radius;
                if d <= r / 2.0 {
                    1.0
                } else if d >= r {
                    0.0
                } else {
                    2.0 - 2.0 * d / r
                }
            }
            None => {
                let mut s = 1.0;
                for (i, p) in self.patches.iter().enumerate() {
                    if p.center.is_some() {
                        s -= self.psi(i, y);
                    }
                }
                s
            }
        }
    }

    /// Value of element `id` on sheet `j_global` at `y`, including the
    /// square root of the bump.
    pub fn eval(&self, id: ElementId, j_global: usize, y: &[f64]) -> Complex64 {
        let patch = &self.patches[id.patch];
        let sub = &patch.submodules[id.sub];
        let Some(pos) = sub.maps.iter().position(|&m| m == j_global) else {
            return Complex64::new(0.0, 0.0);
        };
        let bump = self.psi(id.patch, y);
        if bump == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        sub.local.value(id.k, pos + 1, y) * bump.sqrt()
    }

    /// `|element|^2` on sheet `j_global` at `y` (no complex round-off).
    pub fn eval_weight_sq(&self, id: ElementId, j_global: usize, y: &[f64]) -> f64 {
        let patch = &self.patches[id.patch];
        let sub = &patch.submodules[id.sub];
        if !sub.maps.contains(&j_global) {
            return 0.0;
        }
        let bump = self.psi(id.patch, y);
        if bump == 0.0 {
            return 0.0;
        }
        sub.local.weight_sq(id.k, y) * bump
    }

    /// First `count` elements in the given order. Rounds run over k; within
    /// a round the finite sub-modules only contribute while they still have
    /// elements.
    pub fn elements(&self, count: usize, order: EnumOrder) -> Vec<ElementId> {
        let mut out = Vec::with_capacity(count);
        let mut k = 1usize;
        while out.len() < count {
            let mut round: Vec<ElementId> = Vec::new();
            for (pi, patch) in self.patches.iter().enumerate() {
                for (si, sub) in patch.submodules.iter().enumerate() {
                    let exists = if sub.local.n == 1 { k == 1 } else { true };
                    if exists {
                        round.push(ElementId { patch: pi, sub: si, k });
                    }
                }
            }
            if round.is_empty() {
                break;
            }
            if order == EnumOrder::ReversedWithinLevel {
                round.reverse();
            }
            for id in round {
                if out.len() < count {
                    out.push(id);
                }
            }
            k += 1;
        }
        out
    }

    /// Largest element count <= `count` made of whole rounds (useful for
    /// comparing enumeration orders over identical element sets).
    pub fn level_complete_count(&self, count: usize) -> usize {
        let ids = self.elements(count, EnumOrder::Standard);
        if ids.is_empty() {
            return 0;
        }
        let last_k = ids.last().unwrap().k;
        let full: usize = ids.iter().filter(|id| id.k < last_k).count();
        let last_round: usize = self
            .patches
            .iter()
            .flat_map(|p| &p.submodules)
            .filter(|s| s.local.n > 1 || last_k == 1)
            .count();
        if full + last_round <= count {
            full + last_round
        } else {
            full
        }
    }
}

/// Sup-error profile of the reconstruction `sum_k u_k (u_k|f)` against `f`.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    /// (terms, sup over grid and sheets of |partial - f|)
    pub profile: Vec<(usize, f64)>,
    pub final_error: f64,
    pub terms: usize,
}

/// Evaluates the reconstruction error of `f` over a grid, recording the
/// sup-error at each checkpoint term count.
pub fn verify_reconstruction(
    basis: &PatchedBasis,
    f: &BimoduleElement,
    terms: usize,
    grid: &[Vec<f64>],
    order: EnumOrder,
    checkpoints: &[usize],
) -> Result<ReconstructionReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty verification grid".into()));
    }
    let ids = basis.elements(terms, order);
    let n = basis.sys.len();
    let mut marks: Vec<usize> = checkpoints
        .iter()
        .cloned()
        .filter(|&c| c <= ids.len())
        .collect();
    if marks.last() != Some(&ids.len()) {
        marks.push(ids.len());
    }
    // per grid point: errors at each checkpoint
    let per_point: Vec<Vec<f64>> = par::map_slice(grid, |y| {
        let fv: Vec<Complex64> = (1..=n).map(|j| f.component(j, y)).collect();
        let mut partial = vec![Complex64::new(0.0, 0.0); n];
        let mut errs = Vec::with_capacity(marks.len());
        let mut next_mark = 0usize;
        for (done, id) in ids.iter().enumerate() {
            let uvals: Vec<Complex64> = (1..=n).map(|j| basis.eval(*id, j, y)).collect();
            let inner: Complex64 =
                uvals.iter().zip(&fv).map(|(u, fj)| u.conj() * fj).sum();
            for (pj, u) in partial.iter_mut().zip(&uvals) {
                *pj += u * inner;
            }
            while next_mark < marks.len() && done + 1 == marks[next_mark] {
                let err = partial
                    .iter()
                    .zip(&fv)
                    .map(|(p, fj)| (p - fj).norm())
                    .fold(0.0, f64::max);
                errs.push(err);
                next_mark += 1;
            }
        }
        errs
    });
    let profile: Vec<(usize, f64)> = marks
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            (m, per_point.iter().map(|e| e[mi]).fold(0.0, f64::max))
        })
        .collect();
    let final_error = profile.last().map(|(_, e)| *e).unwrap_or(0.0);
    Ok(ReconstructionReport { profile, final_error, terms: ids.len() })
}

/// Residuals of `sum_k (u_k | a u_k)(y) = pullback_sum(a)(y)` over a grid.
#[derive(Debug, Clone)]
pub struct SumIdentityReport {
    pub grid: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// residuals at the branched values (exact zeros expected)
    pub at_branch_values: Vec<f64>,
}

pub fn verify_sum_identity(
    basis: &PatchedBasis,
    a: &AlgebraElement,
    tilde_a: &TildeFunction,
    k_trunc: usize,
    grid: &[Vec<f64>],
    branch: &BranchReport,
) -> Result<SumIdentityReport> {
    let ids = basis.elements(k_trunc, EnumOrder::Standard);
    let n = basis.sys.len();
    let residuals: Vec<f64> = par::map_slice(grid, |y| {
        let mut sum = 0.0;
        for id in &ids {
            for j in 1..=n {
                let w = basis.eval_weight_sq(*id, j, y);
                if w != 0.0 {
                    let img = basis.sys.apply_f64(j, y).expect("valid label");
                    sum += w * a.at(&img);
                }
            }
        }
        (sum - tilde_a.at(y)).abs()
    });
    let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
    let at_branch_values = branch
        .branch_values
        .iter()
        .map(|c| {
            let y = c.to_f64();
            let mut sum = 0.0;
            for id in &ids {
                for j in 1..=n {
                    let w = basis.eval_weight_sq(*id, j, &y);
                    if w != 0.0 {
                        let img = basis.sys.apply_f64(j, &y).expect("valid label");
                        sum += w * a.at(&img);
                    }
                }
            }
            (sum - tilde_a.at(&y)).abs()
        })
        .collect();
    Ok(SumIdentityReport { grid: grid.to_vec(), residuals, max_residual, at_branch_values })
}

/// Truncated basis-side sum `sum_{k<=K} (u_k | a u_k)(y)` at a single point.
pub fn basis_side_sum(basis: &PatchedBasis, a: &AlgebraElement, k_trunc: usize, y: &[f64]) -> f64 {
    let ids = basis.elements(k_trunc, EnumOrder::Standard);
    let n = basis.sys.len();
    let mut sum = 0.0;
    for id in &ids {
        for j in 1..=n {
            let w = basis.eval_weight_sq(*id, j, y);
            if w != 0.0 {
                let img = basis.sys.apply_f64(j, y).expect("valid label");
                sum += w * a.at(&img);
            }
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimodule::tilde;
    use crate::presets;

    #[test]
    fn ramp_endpoints_and_midpoint() {
        let fam = RampFamily::new(0.25).unwrap();
        let p = fam.p;
        assert_eq!(fam.r(1, p).unwrap(), 1.0);
        assert_eq!(fam.r(2, p / 4.0).unwrap(), 0.0);
        assert!((fam.r(2, 3.0 * p / 8.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(fam.r(0, 0.7).unwrap(), 0.0);
        assert_eq!(fam.r(3, 0.0).unwrap(), 0.0);
        assert!(fam.r(1, -0.1).is_err());
    }

    #[test]
    fn ramp_monotonicity_in_both_arguments() {
        let fam = RampFamily::new(0.125).unwrap();
        for i in 0..16u32 {
            let mut prev = -1.0;
            for k in 0..=64 {
                let x = k as f64 / 64.0;
                let v = fam.r_unchecked(i, x);
                assert!(v >= prev - 1e-15);
                assert!(v <= fam.r_unchecked(i + 1, x) + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn telescoping_is_tight_to_four_ulp() {
        let fam = RampFamily::new(1.0 / 8.0).unwrap();
        for k in 0..=257 {
            let x = k as f64 / 257.0;
            for i in [1u32, 2, 7, 33, 64] {
                let sum: f64 = (1..=i).map(|t| fam.v_sq(t, x)).sum();
                let target = fam.r_unchecked(i, x);
                let ulp = target.max(1.0) * f64::EPSILON;
                assert!((sum - target).abs() <= 4.0 * ulp, "i={i} x={x}: {sum} vs {target}");
            }
        }
    }

    #[test]
    fn saturated_ramps_make_unit_weight() {
        let fam = RampFamily::new(0.0625).unwrap();
        let x = 0.03;
        let i_sat = fam.saturation_index(x);
        let sum: f64 = (1..=i_sat).map(|t| fam.v_sq(t, x)).sum();
        assert!((sum - 1.0).abs() < 1e-13);
        assert_eq!(fam.v_sq(i_sat + 1, x), 0.0);
    }

    #[test]
    fn roots_of_unity_orthogonality() {
        for n in 1..=12usize {
            for p in 0..n {
                let sum: Complex64 = (1..=n).map(|j| root_of_unity(n, (p * j) % n)).sum();
                let expect = if p == 0 { n as f64 } else { 0.0 };
                assert!(
                    (sum - Complex64::new(expect, 0.0)).norm() <= 1e-12,
                    "n={n} p={p}: {sum}"
                );
            }
        }
    }

    #[test]
    fn local_basis_index_layout() {
        let b = NBranchBasis::new(2, vec![1.0], 0.125).unwrap();
        // element 1 is the constant 1/sqrt(2) on both sheets
        let v = b.value(1, 1, &[0.3]);
        assert!((v.re - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15 && v.im == 0.0);
        // element 2 = (i=1, l=1): sheet phases (-1)^j
        assert_eq!(b.ramp_phase(2), Some((1, 1)));
        let d = 0.2; // saturated: v_1 = 1
        let u1 = b.value(2, 1, &[1.0 - d]);
        let u2 = b.value(2, 2, &[1.0 - d]);
        assert!((u1.re + 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((u2.re - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
        // every element beyond the constant vanishes at the center
        for k in 2..12 {
            assert_eq!(b.value(k, 1, &[1.0]), Complex64::new(0.0, 0.0));
        }
        // trivial class: a single constant element
        let t = NBranchBasis::new(1, vec![0.0], 1.0).unwrap();
        assert!(t.is_finite());
        assert_eq!(t.value(1, 1, &[0.5]), Complex64::new(1.0, 0.0));
        assert!(NBranchBasis::new(0, vec![0.0], 1.0).is_err());
    }

    #[test]
    fn tent_patch_structure() {
        let p = presets::tent().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        assert_eq!(basis.patches.len(), 2);
        // ball patch around 1 with a single 2-sheet sub-module
        assert_eq!(basis.patches[0].submodules.len(), 1);
        assert_eq!(basis.patches[0].submodules[0].local.n, 2);
        assert_eq!(basis.patches[0].submodules[0].maps, vec![1, 2]);
        // complement patch with two trivial sub-modules
        assert_eq!(basis.patches[1].submodules.len(), 2);
        assert!(basis.patches[1].submodules.iter().all(|s| s.local.n == 1));
    }

    #[test]
    fn gasket_patches_split_into_two_and_one() {
        let p = presets::sierpinski().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        assert_eq!(basis.patches.len(), 4);
        for patch in &basis.patches[..3] {
            let mut ns: Vec<usize> =
                patch.submodules.iter().map(|s| s.local.n).collect();
            ns.sort();
            assert_eq!(ns, vec![1, 2]);
        }
    }

    #[test]
    fn partition_of_unity_sums_to_one_exactly() {
        let p = presets::sierpinski().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        let cloud = crate::ifs::attractor_approx(&p.system, 5, &[0.4, 0.3]).unwrap();
        for y in cloud.points.iter().take(100) {
            let total: f64 = (0..basis.patches.len()).map(|i| basis.psi(i, y)).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn overlapping_radii_are_rejected() {
        let p = presets::sierpinski().unwrap();
        let params = BasisParams { radii: Some(vec![0.6, 0.6, 0.6]), ramp_scale_ratio: 0.5 };
        assert!(matches!(
            build_patched_basis(&p.system, &p.branch, params),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn doubling_reconstruction_is_exact_at_two_terms() {
        let p = presets::doubling().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        assert_eq!(basis.patches.len(), 1);
        let f = BimoduleElement::diagonal(&p.system, &p.branch, |y| {
            Complex64::new(y[0] * y[0] + 0.25, 0.0)
        })
        .unwrap();
        let grid: Vec<Vec<f64>> = (0..=64).map(|k| vec![k as f64 / 64.0]).collect();
        let rep =
            verify_reconstruction(&basis, &f, 2, &grid, EnumOrder::Standard, &[2]).unwrap();
        assert_eq!(rep.final_error, 0.0);
    }

    #[test]
    fn zero_element_reconstructs_to_zero() {
        let p = presets::tent().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        let f = BimoduleElement::constant(&p.system, &p.branch, 0.0).unwrap();
        let grid: Vec<Vec<f64>> = (0..=32).map(|k| vec![k as f64 / 32.0]).collect();
        let rep =
            verify_reconstruction(&basis, &f, 40, &grid, EnumOrder::Standard, &[10, 40]).unwrap();
        for (_, e) in rep.profile {
            assert_eq!(e, 0.0);
        }
    }

    #[test]
    fn tent_reconstruction_error_decays() {
        let p = presets::tent().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        let f = BimoduleElement::constant(&p.system, &p.branch, 1.0).unwrap();
        let grid: Vec<Vec<f64>> = (0..=512).map(|k| vec![k as f64 / 512.0]).collect();
        let rep = verify_reconstruction(
            &basis,
            &f,
            200,
            &grid,
            EnumOrder::Standard,
            &[10, 50, 100, 200],
        )
        .unwrap();
        assert!(rep.final_error < 1e-2, "final error {}", rep.final_error);
        // monotone nonincreasing past the early rounds
        let tail: Vec<f64> =
            rep.profile.iter().filter(|(m, _)| *m >= 10).map(|(_, e)| *e).collect();
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn enumeration_orders_cover_identical_level_sets() {
        let p = presets::tent().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        let m = basis.level_complete_count(57);
        let mut a = basis.elements(m, EnumOrder::Standard);
        let mut b = basis.elements(m, EnumOrder::ReversedWithinLevel);
        a.sort_by_key(|id| (id.patch, id.sub, id.k));
        b.sort_by_key(|id| (id.patch, id.sub, id.k));
        assert_eq!(a, b);
    }

    #[test]
    fn sum_identity_zero_at_branch_value_for_every_truncation() {
        let p = presets::tent().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        let a = AlgebraElement::new("poly", |y| 0.3 + y[0] * (1.0 - y[0]) + y[0].powi(3));
        let ta = tilde(&a, &p.system, &p.branch);
        for k_trunc in [1usize, 2, 5, 20, 100] {
            let s = basis_side_sum(&basis, &a, k_trunc, &[1.0]);
            assert_eq!(s, ta.at(&[1.0]), "truncation {k_trunc}");
        }
    }

    #[test]
    fn sum_identity_converges_on_grid() {
        let p = presets::tent().unwrap();
        let basis = build_patched_basis(&p.system, &p.branch, BasisParams::default()).unwrap();
        let a = AlgebraElement::constant(1.0);
        let ta = tilde(&a, &p.system, &p.branch);
        // grid away from the ramp tail near the branched value
        let grid: Vec<Vec<f64>> = (0..=100).map(|k| vec![k as f64 * 0.0099]).collect();
        let rep = verify_sum_identity(&basis, &a, &ta, 400, &grid, &p.branch).unwrap();
        assert!(rep.max_residual < 1e-12, "max residual {}", rep.max_residual);
        for r in rep.at_branch_values {
            assert_eq!(r, 0.0);
        }
    }
}
