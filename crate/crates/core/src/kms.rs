//! Residual verification of the eigenmeasure conditions and classification
//! of the KMS simplex at a given inverse temperature.
//!
//! Condition (3) is the eigen-equation `sum_j tau(a ∘ map_j) = lambda tau(a)`
//! over functions vanishing on the branch points; condition (4) is the
//! domination `tau(pullback_sum(a)) <= lambda tau(a)` over nonnegative
//! functions. Verdicts are "consistent with the conditions at tolerance",
//! never proofs: the quantifier over the full algebra is replaced by the
//! finite test family, and every gate widens by the measure defect.
//!
//! For a truncated branch-orbit series the sharp identity is
//! `lambda tau(a) = tau(pullback_sum(a)) + (lambda - N) a(anchor)`
//! up to the exact tail term; with `a = 1` it reduces to
//! `lambda = N + (lambda - N)`, which pins the constant in front of
//! `a(anchor)`. The truncation residual is exactly
//! `((lambda-N)/lambda) lambda^{-D} S_{D+1}(a)`, bounded by
//! `lambda (N/lambda)^{D+1} sup|a|`.

use crate::basis::{basis_side_sum, PatchedBasis};
use crate::bimodule::{tilde, AlgebraElement};
use crate::branching::BranchReport;
use crate::error::{Error, Result};
use crate::exact::ExactPoint;
use crate::family::TestFunctionFamily;
use crate::ifs::IfsSystem;
use crate::measure::{
    hutchinson_iterate, DiscreteMeasure, ExactMeasure, OrbitSeries,
};
use crate::par;
use num::rational::BigRational;
use num::{BigInt, One, Signed, ToPrimitive, Zero};

/// Float-mode residual tolerance before defect widening.
pub const TOL_FLOAT: f64 = 1e-7;

/// Per-member residual of condition (3).
#[derive(Debug, Clone)]
pub struct MemberResidual {
    pub name: String,
    pub residual: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Condition3Report {
    pub lambda: f64,
    pub members: Vec<MemberResidual>,
    pub max_residual: f64,
    pub worst_member: String,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Condition4Report {
    pub lambda: f64,
    pub members: Vec<MemberResidual>,
    /// smallest margin `lambda tau(a) - tau(pullback_sum(a))`
    pub min_margin: f64,
    pub worst_member: String,
    pub pass: bool,
}

fn gate(defect: f64, lambda: f64, sup_abs: f64) -> f64 {
    TOL_FLOAT + 10.0 * defect + lambda * defect * sup_abs
}

/// Checks the eigen-equation residual over the family members vanishing on
/// the branch points (or over the whole family when `full_family` is set,
/// the regime of the unique eigenvalue lambda = N).
pub fn check_condition3(
    measure: &DiscreteMeasure,
    sys: &IfsSystem,
    lambda: f64,
    family: &TestFunctionFamily,
    full_family: bool,
) -> Result<Condition3Report> {
    let members: Vec<&crate::family::TestFunction> = if full_family {
        family.members.iter().collect()
    } else {
        family.vanishing().collect()
    };
    if members.is_empty() {
        return Err(Error::Config("condition (3) needs a nonempty test family".into()));
    }
    let results: Vec<MemberResidual> = par::map_slice(&members, |m| {
        let vals: Vec<f64> = measure
            .atoms
            .iter()
            .map(|(p, w)| {
                let pulled: f64 =
                    (1..=sys.len()).map(|j| m.at(&sys.apply_f64(j, p).expect("label"))).sum();
                w * (pulled - lambda * m.at(p))
            })
            .collect();
        let residual = par::tree_sum(&vals).abs();
        // the pullback side also rides on the defect, hence the extra N term
        let bound = gate(measure.defect, lambda + sys.len() as f64, m.sup_abs);
        MemberResidual { name: m.name.clone(), residual, bound, pass: residual <= bound }
    });
    let (mut max_residual, mut worst) = (0.0, String::new());
    for r in &results {
        if r.residual >= max_residual {
            max_residual = r.residual;
            worst = r.name.clone();
        }
    }
    let pass = results.iter().all(|r| r.pass);
    Ok(Condition3Report { lambda, members: results, max_residual, worst_member: worst, pass })
}

/// Checks the domination inequality over the nonnegative family members.
pub fn check_condition4(
    measure: &DiscreteMeasure,
    sys: &IfsSystem,
    branch: &BranchReport,
    lambda: f64,
    family: &TestFunctionFamily,
) -> Result<Condition4Report> {
    let members: Vec<&crate::family::TestFunction> = family.positive().collect();
    if members.is_empty() {
        return Err(Error::Config("condition (4) needs nonnegative members".into()));
    }
    let results: Vec<MemberResidual> = par::map_slice(&members, |m| {
        let a = m.as_algebra_element();
        let ta = tilde(&a, sys, branch);
        let (tau_a, _) = measure.integrate(&|p: &[f64]| a.at(p));
        let (tau_ta, _) = measure.integrate(&|p: &[f64]| ta.at(p));
        let margin = lambda * tau_a - tau_ta;
        let bound = gate(measure.defect, lambda + sys.len() as f64, m.sup_abs);
        MemberResidual { name: m.name.clone(), residual: margin, bound, pass: margin >= -bound }
    });
    let (mut min_margin, mut worst) = (f64::INFINITY, String::new());
    for r in &results {
        if r.residual <= min_margin {
            min_margin = r.residual;
            worst = r.name.clone();
        }
    }
    let pass = results.iter().all(|r| r.pass);
    Ok(Condition4Report { lambda, members: results, min_margin, worst_member: worst, pass })
}

/// Exact residual of the truncated orbit identity for one member.
#[derive(Debug, Clone)]
pub struct OrbitIdentityResidual {
    pub name: String,
    pub residual: f64,
    pub bound: f64,
    pub exact: bool,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct OrbitIdentityReport {
    pub members: Vec<OrbitIdentityResidual>,
    pub max_residual: f64,
    pub pass: bool,
}

/// Verifies `lambda tau(a) = tau(pullback_sum(a)) + (lambda - N) a(anchor)`
/// member by member against the truncated series. Interval members go
/// through the exact pullback recursion; the residual comparison with the
/// tail bound is then a rational comparison.
pub fn check_orbit_identity(
    series: &OrbitSeries,
    family: &TestFunctionFamily,
) -> Result<OrbitIdentityReport> {
    let n_rat = BigRational::from_integer(BigInt::from(series.sys.len()));
    let bound_rat = &series.lambda * series.tail_defect();
    let anchor_f64 = series.anchor.to_f64();
    let members: Vec<OrbitIdentityResidual> = family
        .members
        .iter()
        .map(|m| -> Result<OrbitIdentityResidual> {
            let Some(pw) = m.pwpoly() else {
                return Err(Error::Precondition(format!(
                    "orbit identity needs exact interval members, {} is not one",
                    m.name
                )));
            };
            // S_0..S_{D+1} of the member; both traces assemble from them
            let sums = series.level_sums(pw, series.depth + 1)?;
            let tau_a = series.weighted_series(&sums[..=series.depth as usize]);
            let tau_tilde = {
                // pullback trace rides one level deeper
                let shifted: Vec<BigRational> = sums[1..].to_vec();
                series.weighted_series(&shifted)
            };
            let anchor_val = pw.eval_exact(&series.anchor.0[0].rational);
            let lhs = &series.lambda * &tau_a;
            let rhs = &tau_tilde + (&series.lambda - &n_rat) * &anchor_val;
            let residual_rat = (lhs - rhs).abs();
            // sup|a| <= 1 after normalization, so the tail bound stands alone
            let pass = residual_rat <= bound_rat;
            Ok(OrbitIdentityResidual {
                name: m.name.clone(),
                residual: residual_rat.to_f64().unwrap_or(f64::NAN),
                bound: bound_rat.to_f64().unwrap_or(f64::NAN),
                exact: true,
                pass,
            })
        })
        .collect::<Result<_>>()?;
    let _ = anchor_f64;
    let max_residual = members.iter().map(|m| m.residual).fold(0.0, f64::max);
    let pass = members.iter().all(|m| m.pass);
    Ok(OrbitIdentityReport { members, max_residual, pass })
}

/// Basis-route check: partial sums of `tau((u_k | a u_k))` against
/// `lambda tau(a)`, with the saturation deficit integrated into the gate.
#[derive(Debug, Clone)]
pub struct BasisConditionReport {
    pub k_trunc: usize,
    pub equality_members: Vec<MemberResidual>,
    pub inequality_members: Vec<MemberResidual>,
    pub pass: bool,
}

pub fn check_basis_conditions(
    measure: &DiscreteMeasure,
    sys: &IfsSystem,
    branch: &BranchReport,
    basis: &PatchedBasis,
    lambda: f64,
    family: &TestFunctionFamily,
    k_trunc: usize,
) -> Result<BasisConditionReport> {
    // coverage deficit: how much of pullback_sum(1) the first K elements
    // still miss, integrated against the measure
    let one = AlgebraElement::constant(1.0);
    let tilde_one = tilde(&one, sys, branch);
    let (deficit, _) = measure.integrate(&|p: &[f64]| {
        (tilde_one.at(p) - basis_side_sum(basis, &one, k_trunc, p)).max(0.0)
    });

    let eq_members: Vec<&crate::family::TestFunction> = family.vanishing().collect();
    let equality_members: Vec<MemberResidual> = par::map_slice(&eq_members, |m| {
        let a = m.as_algebra_element();
        let (basis_sum, _) =
            measure.integrate(&|p: &[f64]| basis_side_sum(basis, &a, k_trunc, p));
        let (tau_a, _) = measure.integrate(&|p: &[f64]| a.at(p));
        let residual = (basis_sum - lambda * tau_a).abs();
        let bound = gate(measure.defect, lambda + sys.len() as f64, m.sup_abs)
            + deficit * m.sup_abs;
        MemberResidual { name: m.name.clone(), residual, bound, pass: residual <= bound }
    });

    let pos_members: Vec<&crate::family::TestFunction> = family.positive().collect();
    let inequality_members: Vec<MemberResidual> = par::map_slice(&pos_members, |m| {
        let a = m.as_algebra_element();
        let (basis_sum, _) =
            measure.integrate(&|p: &[f64]| basis_side_sum(basis, &a, k_trunc, p));
        let (tau_a, _) = measure.integrate(&|p: &[f64]| a.at(p));
        let margin = lambda * tau_a - basis_sum;
        let bound = gate(measure.defect, lambda + sys.len() as f64, m.sup_abs);
        MemberResidual { name: m.name.clone(), residual: margin, bound, pass: margin >= -bound }
    });

    let pass = equality_members.iter().all(|r| r.pass)
        && inequality_members.iter().all(|r| r.pass);
    Ok(BasisConditionReport { k_trunc, equality_members, inequality_members, pass })
}

/// What a candidate measure is.
#[derive(Debug, Clone)]
pub enum CandidateKind {
    Hutchinson { steps: u32 },
    BranchOrbit { anchor: ExactPoint, depth: u32 },
    Mixture { weights: Vec<(ExactPoint, BigRational)>, depth: u32 },
}

/// A measure proposed as (the restriction of) a KMS equilibrium.
#[derive(Debug, Clone)]
pub struct KmsCandidate {
    pub lambda: f64,
    pub lambda_exact: Option<BigRational>,
    pub beta: f64,
    pub kind: CandidateKind,
    pub measure: DiscreteMeasure,
    pub exact: Option<ExactMeasure>,
    pub series: Option<OrbitSeries>,
    /// truncation depth of the materialized atoms (the lazy series may be
    /// deeper)
    pub materialized_depth: u32,
}

impl KmsCandidate {
    pub fn name(&self) -> String {
        match &self.kind {
            CandidateKind::Hutchinson { .. } => "hutchinson".into(),
            CandidateKind::BranchOrbit { anchor, .. } => {
                format!("orbit({})", anchor)
            }
            CandidateKind::Mixture { weights, .. } => format!("mixture({} parts)", weights.len()),
        }
    }
}

/// Cap on exact materialized atoms per orbit vertex.
const MATERIALIZE_ATOM_CAP: u64 = 1 << 17;

fn materializable_depth(n_maps: usize, target: u32, cap: u64) -> u32 {
    let mut depth = 0u32;
    let mut total: u128 = 1;
    let mut level: u128 = 1;
    while depth < target {
        level *= n_maps as u128;
        if total + level > cap as u128 {
            break;
        }
        total += level;
        depth += 1;
    }
    depth
}

/// Builds the branch-orbit candidate at `lambda` truncated so the tail is
/// below `target_defect` (laziness keeps deep truncations cheap; the
/// materialized float view may stop earlier, with its own recorded defect).
pub fn orbit_candidate(
    sys: &IfsSystem,
    branch: &BranchReport,
    anchor: &ExactPoint,
    lambda: BigRational,
    target_defect: f64,
) -> Result<KmsCandidate> {
    if !branch.is_branch_point(anchor) {
        return Err(Error::Precondition(format!(
            "{anchor} is not a branch point; orbit candidates anchor there"
        )));
    }
    let lambda_f = lambda.to_f64().unwrap();
    let n = sys.len() as f64;
    let depth = ((target_defect.ln() / (n / lambda_f).ln()).ceil() as u32).max(6) - 1;
    let series = OrbitSeries::new(sys, anchor.clone(), lambda.clone(), depth)?;
    let mat_depth = materializable_depth(sys.len(), depth, MATERIALIZE_ATOM_CAP);
    let shallow = OrbitSeries::new(sys, anchor.clone(), lambda.clone(), mat_depth)?;
    let exact = shallow.materialize()?;
    let measure = exact.to_float();
    Ok(KmsCandidate {
        lambda: lambda_f,
        lambda_exact: Some(lambda),
        beta: lambda_f.ln(),
        kind: CandidateKind::BranchOrbit { anchor: anchor.clone(), depth },
        measure,
        exact: Some(exact),
        series: Some(series),
        materialized_depth: mat_depth,
    })
}

/// Convex combination of branch-orbit vertices, exact in the weights.
pub fn mixture_candidate(
    sys: &IfsSystem,
    branch: &BranchReport,
    weights: &[(ExactPoint, BigRational)],
    lambda: BigRational,
    depth: u32,
) -> Result<KmsCandidate> {
    let sum: BigRational =
        weights.iter().fold(BigRational::zero(), |acc, (_, w)| acc + w);
    if (sum - BigRational::one()).abs() > crate::exact::big_rat(1, 1_000_000_000_000) {
        return Err(Error::Precondition("mixture weights must sum to one".into()));
    }
    if weights.iter().any(|(_, w)| w.is_negative()) {
        return Err(Error::Precondition("mixture weights must be nonnegative".into()));
    }
    let mut combined = ExactMeasure::new();
    for (anchor, w) in weights {
        if !branch.is_branch_point(anchor) {
            return Err(Error::Precondition(format!("{anchor} is not a branch point")));
        }
        let series = OrbitSeries::new(sys, anchor.clone(), lambda.clone(), depth)?;
        combined.add_scaled(&series.materialize()?, w);
    }
    let lambda_f = lambda.to_f64().unwrap();
    Ok(KmsCandidate {
        lambda: lambda_f,
        lambda_exact: Some(lambda),
        beta: lambda_f.ln(),
        kind: CandidateKind::Mixture { weights: weights.to_vec(), depth },
        measure: combined.to_float(),
        exact: Some(combined),
        series: None,
        materialized_depth: depth,
    })
}

/// Builds the fixed-point iteration candidate at `lambda = N`.
pub fn hutchinson_candidate(sys: &IfsSystem, steps: u32, merge_resolution: f64) -> Result<KmsCandidate> {
    let init = DiscreteMeasure::dirac(
        (0..sys.dim())
            .map(|i| 0.5 * (sys.ambient_box.lo[i] + sys.ambient_box.hi[i]))
            .collect(),
    );
    let run = hutchinson_iterate(sys, init, steps, merge_resolution)?;
    let n = sys.len() as f64;
    Ok(KmsCandidate {
        lambda: n,
        lambda_exact: Some(BigRational::from_integer(BigInt::from(sys.len()))),
        beta: n.ln(),
        kind: CandidateKind::Hutchinson { steps },
        measure: run.measure,
        exact: None,
        series: None,
        materialized_depth: steps,
    })
}

/// Whether the classification theorems cover the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemClass {
    /// interval system with the open set condition
    IntervalOsc,
    Gasket,
    /// anything else: classification is emitted but flagged unverified
    Custom,
}

#[derive(Debug, Clone)]
pub enum Regime {
    Empty { reason: String },
    UniqueHutchinson(Box<KmsCandidate>),
    Simplex(Vec<KmsCandidate>),
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub beta: f64,
    pub lambda: f64,
    pub regime: Regime,
    /// true when the system class carries the proved classification
    pub verified_class: bool,
    /// per-candidate verification results (name, condition 3, condition 4)
    pub checks: Vec<(String, Condition3Report, Condition4Report)>,
}

#[derive(Debug, Clone)]
pub struct ClassifyParams {
    pub hutchinson_steps: u32,
    pub merge_resolution: f64,
    pub target_defect: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams { hutchinson_steps: 14, merge_resolution: 0.0, target_defect: 1e-9 }
    }
}

/// Classifies the candidate simplex at inverse temperature `beta`:
/// empty below log N, the fixed-point measure at log N, and the branch-orbit
/// vertices above. Every emitted candidate is verified against conditions
/// (3) and (4) before emission.
pub fn classify(
    sys: &IfsSystem,
    branch: &BranchReport,
    beta: f64,
    lambda_exact: Option<BigRational>,
    class: SystemClass,
    family: &TestFunctionFamily,
    params: &ClassifyParams,
) -> Result<Classification> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("inverse temperature must be positive, got {beta}")));
    }
    let n = sys.len();
    let n_rat = BigRational::from_integer(BigInt::from(n));
    let lambda_f = lambda_exact
        .as_ref()
        .map(|l| l.to_f64().unwrap())
        .unwrap_or_else(|| beta.exp());
    // exact comparison when available, snapped float comparison otherwise
    let cmp = match &lambda_exact {
        Some(l) => l.cmp(&n_rat),
        None => {
            if (lambda_f - n as f64).abs() <= 1e-12 * n as f64 {
                std::cmp::Ordering::Equal
            } else {
                lambda_f.partial_cmp(&(n as f64)).unwrap()
            }
        }
    };
    let verified_class = class != SystemClass::Custom;
    let mut checks = Vec::new();
    let regime = match cmp {
        std::cmp::Ordering::Less => Regime::Empty {
            reason: format!(
                "no candidates: lambda = e^beta = {lambda_f:.6} is below N = {n}, \
                 and the eigen-equation forces lambda >= N"
            ),
        },
        std::cmp::Ordering::Equal => {
            let cand =
                hutchinson_candidate(sys, params.hutchinson_steps, params.merge_resolution)?;
            let c3 = check_condition3(&cand.measure, sys, cand.lambda, family, true)?;
            let c4 = check_condition4(&cand.measure, sys, branch, cand.lambda, family)?;
            checks.push((cand.name(), c3, c4));
            Regime::UniqueHutchinson(Box::new(cand))
        }
        std::cmp::Ordering::Greater => {
            if branch.branch_points.is_empty() {
                Regime::Empty {
                    reason: format!(
                        "no candidates: lambda = {lambda_f:.6} exceeds N = {n} but the system \
                         has no branch points, and point masses can only sit on branch orbits"
                    ),
                }
            } else {
                let lam = lambda_exact.clone().unwrap_or_else(|| {
                    BigRational::from_float(lambda_f).expect("finite lambda")
                });
                let mut vertices = Vec::new();
                for anchor in &branch.branch_points {
                    let cand =
                        orbit_candidate(sys, branch, anchor, lam.clone(), params.target_defect)?;
                    let c3 =
                        check_condition3(&cand.measure, sys, cand.lambda, family, false)?;
                    let c4 =
                        check_condition4(&cand.measure, sys, branch, cand.lambda, family)?;
                    if !(c3.pass && c4.pass) {
                        return Err(Error::Precondition(format!(
                            "candidate {} failed verification before emission \
                             (max residual {}, min margin {})",
                            cand.name(),
                            c3.max_residual,
                            c4.min_margin
                        )));
                    }
                    checks.push((cand.name(), c3, c4));
                    vertices.push(cand);
                }
                Regime::Simplex(vertices)
            }
        }
    };
    Ok(Classification { beta, lambda: lambda_f, regime, verified_class, checks })
}

/// Decomposition of an exact measure into branch-orbit vertices.
#[derive(Debug, Clone)]
pub struct DecomposeReport {
    /// recovered weight per branch point: `(lambda/(lambda-N)) * point_mass`
    pub weights: Vec<(ExactPoint, BigRational)>,
    /// exact total-variation mass of the residual signed measure
    pub residual_tv: BigRational,
    /// `sum point masses - (lambda-N)/lambda`, zero for exact mixtures
    pub mass_identity_error: BigRational,
    pub pass: bool,
}

/// Recovers vertex weights from the point masses at the branch points and
/// reports the total-variation residual after subtracting the recovered
/// combination (vertices rebuilt at `depth`).
pub fn decompose(
    candidate: &KmsCandidate,
    sys: &IfsSystem,
    branch: &BranchReport,
    family: &TestFunctionFamily,
    depth: u32,
) -> Result<DecomposeReport> {
    let lambda = candidate
        .lambda_exact
        .clone()
        .ok_or_else(|| Error::Precondition("decomposition needs an exact lambda".into()))?;
    let n_rat = BigRational::from_integer(BigInt::from(sys.len()));
    if lambda <= n_rat {
        return Err(Error::Domain("decomposition needs lambda > N".into()));
    }
    let exact = candidate
        .exact
        .as_ref()
        .ok_or_else(|| Error::Precondition("decomposition needs exact atoms".into()))?;
    // precondition: the candidate must look like an eigenmeasure at lambda
    let c3 = check_condition3(&candidate.measure, sys, candidate.lambda, family, false)?;
    if !c3.pass {
        return Err(Error::Precondition(format!(
            "measure fails the eigen-equation at lambda = {} (max residual {:.3e}); \
             decomposition into branch-orbit vertices is not meaningful",
            candidate.lambda, c3.max_residual
        )));
    }

    let scale = &lambda / (&lambda - &n_rat);
    let mut weights = Vec::new();
    let mut mass_sum = BigRational::zero();
    for b in &branch.branch_points {
        let c_mu = exact.point_mass(b);
        mass_sum += &c_mu;
        weights.push((b.clone(), &scale * &c_mu));
    }
    let head = (&lambda - &n_rat) / &lambda;
    // only exact when the measure is a genuine mixture of full vertices
    let mass_identity_error = mass_sum - head;

    let mut parts: Vec<(ExactMeasure, BigRational)> = Vec::new();
    for (anchor, w) in &weights {
        let series = OrbitSeries::new(sys, anchor.clone(), lambda.clone(), depth)?;
        parts.push((series.materialize()?, w.clone()));
    }
    let borrowed: Vec<(&ExactMeasure, BigRational)> =
        parts.iter().map(|(m, w)| (m, w.clone())).collect();
    let residual_tv = exact.tv_residual(&borrowed);
    // tolerance: three truncation tails (the construct/decompose defects)
    let tol = crate::exact::big_rat(3, 1)
        * (&exact.defect + parts.iter().fold(BigRational::zero(), |a, (m, w)| a + &m.defect * w));
    let pass = residual_tv <= tol && mass_identity_error.abs() <= crate::exact::big_rat(1, 1_000_000_000);
    Ok(DecomposeReport { weights, residual_tv, mass_identity_error, pass })
}

/// The smallest admissible inverse temperature, `log N`, which also equals
/// the topological entropy of the expansive inverse map.
pub fn min_beta(sys: &IfsSystem) -> f64 {
    (sys.len() as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Exact;
    use crate::family::standard_family;
    use crate::presets;

    fn rat(n: i64, d: i64) -> BigRational {
        crate::exact::big_rat(n, d)
    }

    fn half() -> ExactPoint {
        ExactPoint(vec![Exact::rat(1, 2)])
    }

    #[test]
    fn hutchinson_passes_full_family_at_n() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let cand = hutchinson_candidate(&p.system, 14, 0.0).unwrap();
        let c3 = check_condition3(&cand.measure, &p.system, 2.0, &fam, true).unwrap();
        assert!(c3.pass, "max residual {} by {}", c3.max_residual, c3.worst_member);
        assert!(c3.max_residual <= 1e-4);
        let c4 = check_condition4(&cand.measure, &p.system, &p.branch, 2.0, &fam).unwrap();
        assert!(c4.pass, "min margin {}", c4.min_margin);
    }

    #[test]
    fn hutchinson_fails_at_wrong_lambda() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let cand = hutchinson_candidate(&p.system, 12, 0.0).unwrap();
        let c3 = check_condition3(&cand.measure, &p.system, 3.0, &fam, true).unwrap();
        assert!(!c3.pass);
        // residual for a = 1 is exactly |lambda - N|
        assert!(c3.max_residual >= 0.2);
    }

    #[test]
    fn orbit_identity_exact_for_three_lambdas() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        for lam in [3i64, 4, 10] {
            let series = OrbitSeries::new(&p.system, half(), rat(lam, 1), 30).unwrap();
            let rep = check_orbit_identity(&series, &fam).unwrap();
            assert!(rep.pass, "lambda = {lam}: max residual {}", rep.max_residual);
        }
    }

    #[test]
    fn orbit_identity_wrong_constant_fails() {
        // using the uncorrected constant ((lambda-N)/lambda) a(anchor) in the
        // identity leaves an order-one residual for a = 1
        let p = presets::tent().unwrap();
        let series = OrbitSeries::new(&p.system, half(), rat(4, 1), 20).unwrap();
        let one = crate::pwpoly::PwPoly::constant(BigRational::one());
        let sums = series.level_sums(&one, 21).unwrap();
        let tau_a = series.weighted_series(&sums[..=20]);
        let tau_tilde = series.weighted_series(&sums[1..]);
        let lhs = rat(4, 1) * &tau_a;
        let wrong = &tau_tilde + rat(2, 4); // ((lambda-N)/lambda) * 1
        let right = &tau_tilde + rat(2, 1); // (lambda-N) * 1
        assert!((lhs.clone() - wrong).abs() > rat(1, 1));
        assert!((lhs - right).abs() <= rat(4, 1) * series.tail_defect());
    }

    #[test]
    fn orbit_candidate_checks_pass() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let cand = orbit_candidate(&p.system, &p.branch, &half(), rat(4, 1), 1e-9).unwrap();
        let c3 = check_condition3(&cand.measure, &p.system, 4.0, &fam, false).unwrap();
        assert!(c3.pass, "max residual {} by {}", c3.max_residual, c3.worst_member);
        let c4 = check_condition4(&cand.measure, &p.system, &p.branch, 4.0, &fam).unwrap();
        assert!(c4.pass, "min margin {}", c4.min_margin);
    }

    #[test]
    fn classify_tent_regimes() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let params = ClassifyParams::default();

        let low = classify(&p.system, &p.branch, 0.1, None, SystemClass::IntervalOsc, &fam, &params)
            .unwrap();
        assert!(matches!(low.regime, Regime::Empty { .. }));

        let at = classify(
            &p.system,
            &p.branch,
            2.0_f64.ln(),
            Some(rat(2, 1)),
            SystemClass::IntervalOsc,
            &fam,
            &params,
        )
        .unwrap();
        assert!(matches!(at.regime, Regime::UniqueHutchinson(_)));
        assert!(at.checks.iter().all(|(_, c3, c4)| c3.pass && c4.pass));

        let above = classify(
            &p.system,
            &p.branch,
            4.0_f64.ln(),
            Some(rat(4, 1)),
            SystemClass::IntervalOsc,
            &fam,
            &params,
        )
        .unwrap();
        match &above.regime {
            Regime::Simplex(v) => assert_eq!(v.len(), 1),
            other => panic!("expected a single vertex, got {other:?}"),
        }
    }

    #[test]
    fn classify_doubling_above_log_n_is_empty() {
        let p = presets::doubling().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let c = classify(
            &p.system,
            &p.branch,
            3.0_f64.ln(),
            Some(rat(3, 1)),
            SystemClass::IntervalOsc,
            &fam,
            &ClassifyParams::default(),
        )
        .unwrap();
        assert!(matches!(c.regime, Regime::Empty { .. }));
    }

    #[test]
    fn decompose_recovers_orbit_vertex() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let cand = orbit_candidate(&p.system, &p.branch, &half(), rat(4, 1), 1e-6).unwrap();
        let rep =
            decompose(&cand, &p.system, &p.branch, &fam, cand.materialized_depth).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.weights.len(), 1);
        // the single weight is exactly one
        assert_eq!(rep.weights[0].1, BigRational::one());
        assert!(rep.residual_tv.is_zero());
    }

    #[test]
    fn decompose_rejects_hutchinson_at_wrong_lambda() {
        let p = presets::tent().unwrap();
        let fam = standard_family(&p.system, &p.branch, 1).unwrap();
        let mut cand = hutchinson_candidate(&p.system, 12, 0.0).unwrap();
        // claim lambda = N + 1: the eigen-equation residual is order one
        cand.lambda = 3.0;
        cand.lambda_exact = Some(rat(3, 1));
        cand.exact = Some(ExactMeasure::new());
        cand.materialized_depth = 0;
        let err = decompose(&cand, &p.system, &p.branch, &fam, 8);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn min_beta_is_log_of_map_count() {
        let tent = presets::tent().unwrap().system;
        let gasket = presets::sierpinski().unwrap().system;
        assert_eq!(min_beta(&tent), 2.0_f64.ln());
        assert_eq!(min_beta(&gasket), 3.0_f64.ln());
    }
}
