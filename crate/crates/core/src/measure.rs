//! Discrete-measure arithmetic: pushforwards, Hutchinson fixed-point
//! iteration, chaos-game sampling, truncated branch-orbit series, integration,
//! point masses, and Wasserstein-1 distances.
//!
//! Two atom representations coexist. Float measures carry a certified defect
//! (truncation tail plus spatial resolution) and back all numeric residual
//! checks. Exact measures keep rational weights on exact points so point-mass
//! queries and decompositions come out exactly; the deep orbit series is
//! never materialized at all, its integrals are computed by the pullback-sum
//! recursion level by level.

use crate::error::{Error, Result};
use crate::exact::ExactPoint;
use crate::ifs::{dist, IfsSystem, MemberVerdict};
use crate::par;
use crate::pwpoly::PwPoly;
use num::rational::BigRational;
use num::{BigInt, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

/// Weighted atom list in float arithmetic with a certified defect bound.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub atoms: Vec<(Vec<f64>, f64)>,
    /// certified bound: truncation tail mass plus spatial resolution error
    /// (heuristic for chaos-game output, flagged by `certified`)
    pub defect: f64,
    pub certified: bool,
}

impl DiscreteMeasure {
    pub fn dirac(p: Vec<f64>) -> Self {
        DiscreteMeasure { atoms: vec![(p, 1.0)], defect: 0.0, certified: true }
    }

    pub fn total(&self) -> f64 {
        par::tree_sum(&self.atoms.iter().map(|(_, w)| *w).collect::<Vec<_>>())
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map(|(p, _)| p.len()).unwrap_or(0)
    }

    pub fn max_weight(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| *w).fold(0.0, f64::max)
    }

    /// Pushforward through map `label`; weights and defect unchanged.
    pub fn pushforward(&self, sys: &IfsSystem, label: usize) -> Result<DiscreteMeasure> {
        let atoms = self
            .atoms
            .iter()
            .map(|(p, w)| Ok((sys.apply_f64(label, p)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteMeasure { atoms, ..self.clone() })
    }

    /// `sum_atoms w * f(p)` with error bar `defect * sup|f|` (sup sampled on
    /// the atoms).
    pub fn integrate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> (f64, f64) {
        let vals = par::map_slice(&self.atoms, |(p, w)| w * f(p));
        let value = par::tree_sum(&vals);
        let sup = self
            .atoms
            .iter()
            .map(|(p, _)| f(p).abs())
            .fold(0.0, f64::max);
        (value, self.defect * sup)
    }

    /// Total weight within `radius` of `x` (tolerance point mass).
    pub fn point_mass_within(&self, x: &[f64], radius: f64) -> f64 {
        let w: Vec<f64> = self
            .atoms
            .iter()
            .filter(|(p, _)| dist(p, x) <= radius)
            .map(|(_, w)| *w)
            .collect();
        par::tree_sum(&w)
    }

    /// Merges atoms on a grid of the given resolution (weighted means).
    pub fn merged(&self, resolution: f64) -> DiscreteMeasure {
        if resolution <= 0.0 {
            // exact-collision merge only
            let mut cells: BTreeMap<Vec<u64>, (f64, Vec<f64>)> = BTreeMap::new();
            for (p, w) in &self.atoms {
                let key: Vec<u64> = p.iter().map(|&x| x.to_bits()).collect();
                let entry = cells.entry(key).or_insert_with(|| (0.0, p.clone()));
                entry.0 += w;
            }
            let atoms: Vec<(Vec<f64>, f64)> =
                cells.into_values().map(|(w, p)| (p, w)).collect();
            return DiscreteMeasure { atoms, ..self.clone() };
        }
        let mut cells: BTreeMap<Vec<i64>, (f64, Vec<f64>)> = BTreeMap::new();
        for (p, w) in &self.atoms {
            let key: Vec<i64> = p.iter().map(|&x| (x / resolution).round() as i64).collect();
            let entry = cells.entry(key).or_insert_with(|| (0.0, vec![0.0; p.len()]));
            entry.0 += w;
            for (acc, &x) in entry.1.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        let atoms: Vec<(Vec<f64>, f64)> = cells
            .into_values()
            .map(|(w, sum)| (sum.into_iter().map(|s| s / w).collect(), w))
            .collect();
        DiscreteMeasure { atoms, defect: self.defect + resolution, certified: self.certified }
    }
}

/// Exact measure: rational weights on exact points, exact tail defect.
#[derive(Debug, Clone)]
pub struct ExactMeasure {
    pub atoms: BTreeMap<ExactPoint, BigRational>,
    pub defect: BigRational,
}

impl ExactMeasure {
    pub fn new() -> Self {
        ExactMeasure { atoms: BTreeMap::new(), defect: BigRational::zero() }
    }

    pub fn dirac(p: ExactPoint) -> Self {
        let mut atoms = BTreeMap::new();
        atoms.insert(p, BigRational::one());
        ExactMeasure { atoms, defect: BigRational::zero() }
    }

    pub fn total(&self) -> BigRational {
        self.atoms.values().fold(BigRational::zero(), |a, w| a + w)
    }

    pub fn point_mass(&self, x: &ExactPoint) -> BigRational {
        self.atoms.get(x).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn pushforward(&self, sys: &IfsSystem, label: usize) -> Result<ExactMeasure> {
        let mut atoms: BTreeMap<ExactPoint, BigRational> = BTreeMap::new();
        for (p, w) in &self.atoms {
            let img = sys.apply_exact(label, p)?;
            *atoms.entry(img).or_insert_with(BigRational::zero) += w;
        }
        Ok(ExactMeasure { atoms, defect: self.defect.clone() })
    }

    /// `self += weight * other`, atomwise exact.
    pub fn add_scaled(&mut self, other: &ExactMeasure, weight: &BigRational) {
        for (p, w) in &other.atoms {
            *self.atoms.entry(p.clone()).or_insert_with(BigRational::zero) += w * weight;
        }
        self.defect += &other.defect * weight.abs();
    }

    /// Total-variation mass of `self - sum_i weight_i * part_i`.
    pub fn tv_residual(&self, parts: &[(&ExactMeasure, BigRational)]) -> BigRational {
        let mut net: BTreeMap<ExactPoint, BigRational> = self.atoms.clone();
        for (m, w) in parts {
            for (p, v) in &m.atoms {
                *net.entry(p.clone()).or_insert_with(BigRational::zero) -= v * w;
            }
        }
        net.values().fold(BigRational::zero(), |a, w| a + w.abs())
    }

    pub fn to_float(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|(p, w)| (p.to_f64(), w.to_f64().unwrap()))
                .collect(),
            defect: self.defect.to_f64().unwrap(),
            certified: true,
        }
    }

    /// Exact integral of a 1-d piecewise polynomial against the atoms.
    pub fn integrate_pwpoly(&self, f: &PwPoly) -> BigRational {
        let mut acc = BigRational::zero();
        for (p, w) in &self.atoms {
            debug_assert!(p.0[0].is_rational());
            acc += w * f.eval_exact(&p.0[0].rational);
        }
        acc
    }
}

impl Default for ExactMeasure {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of a Hutchinson fixed-point iteration, with the geometric
/// convergence certificate.
#[derive(Debug, Clone)]
pub struct HutchinsonRun {
    pub measure: DiscreteMeasure,
    /// W1 distances between consecutive iterates
    pub step_distances: Vec<f64>,
    pub steps: u32,
    pub merge_resolution: f64,
}

/// Iterates `m <- (1/N) sum_j map_j # m`, merging at `merge_resolution`.
/// The final defect is `w1_last * c2 / (1 - c2) + merge_resolution`.
pub fn hutchinson_iterate(
    sys: &IfsSystem,
    init: DiscreteMeasure,
    steps: u32,
    merge_resolution: f64,
) -> Result<HutchinsonRun> {
    if steps < 1 {
        return Err(Error::Domain("need at least one iteration step".into()));
    }
    let total = init.total();
    if (total - 1.0).abs() > 1e-9 + init.defect {
        return Err(Error::Normalization { lhs: total, rhs: 1.0 });
    }
    let n = sys.len();
    let mut current = init;
    let mut step_distances = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        if (current.atoms.len() as u128) * (n as u128) > sys.word_budget as u128 {
            return Err(Error::BudgetExceeded {
                requested: current.atoms.len() as u128 * n as u128,
                budget: sys.word_budget,
                hint: "raise merge_resolution or use chaos_game",
            });
        }
        let mut next_atoms: Vec<(Vec<f64>, f64)> =
            Vec::with_capacity(current.atoms.len() * n);
        for j in 1..=n {
            for (p, w) in &current.atoms {
                next_atoms.push((sys.apply_f64(j, p)?, w / n as f64));
            }
        }
        let next = DiscreteMeasure {
            atoms: next_atoms,
            defect: current.defect,
            certified: current.certified,
        }
        .merged(merge_resolution);
        step_distances.push(w1_distance(&current, &next)?.0);
        current = next;
    }
    let c2 = sys.ratio_upper_max();
    let tail = step_distances.last().copied().unwrap_or(0.0) * c2 / (1.0 - c2);
    current.defect = tail + merge_resolution;
    Ok(HutchinsonRun { measure: current, step_distances, steps, merge_resolution })
}

/// Empirical measure of a seeded random orbit with uniform map choice.
/// Deterministic for a fixed seed; the defect is a statistical estimate,
/// not a certificate (flagged `certified = false`).
pub fn chaos_game(sys: &IfsSystem, steps: u64, burn_in: u64, rng_seed: u64) -> Result<DiscreteMeasure> {
    if steps <= burn_in {
        return Err(Error::Domain("steps must exceed burn_in".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let d = sys.dim();
    let mut x: Vec<f64> = (0..d)
        .map(|i| 0.5 * (sys.ambient_box.lo[i] + sys.ambient_box.hi[i]))
        .collect();
    let kept = (steps - burn_in) as f64;
    let w = 1.0 / kept;
    let mut cells: BTreeMap<Vec<u64>, (f64, Vec<f64>)> = BTreeMap::new();
    for step in 0..steps {
        let j = rng.random_range(1..=sys.len());
        x = sys.apply_f64(j, &x)?;
        if step >= burn_in {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            let entry = cells.entry(key).or_insert_with(|| (0.0, x.clone()));
            entry.0 += w;
        }
    }
    let atoms: Vec<(Vec<f64>, f64)> = cells.into_values().map(|(w, p)| (p, w)).collect();
    Ok(DiscreteMeasure {
        atoms,
        defect: 3.0 * sys.ambient_box.diameter() / kept.sqrt(),
        certified: false,
    })
}

/// The truncated branch-orbit series
/// `((lambda-N)/lambda) * sum_{n<=depth} sum_{|w|=n} lambda^{-n} delta_{w(y)}`,
/// kept lazy: totals, point masses, and 1-d integrals are computed without
/// enumerating the words.
#[derive(Debug, Clone)]
pub struct OrbitSeries {
    pub sys: IfsSystem,
    pub anchor: ExactPoint,
    pub lambda: BigRational,
    pub depth: u32,
}

impl OrbitSeries {
    pub fn new(sys: &IfsSystem, anchor: ExactPoint, lambda: BigRational, depth: u32) -> Result<Self> {
        let n = BigRational::from_integer(BigInt::from(sys.len()));
        if lambda <= n {
            return Err(Error::Domain(format!(
                "orbit series needs lambda > N = {}: the series mass is unbounded otherwise (got lambda = {})",
                sys.len(),
                lambda
            )));
        }
        if !sys.is_affine() || !sys.exact_inputs {
            return Err(Error::Precondition("orbit series requires an exact affine system".into()));
        }
        Ok(OrbitSeries { sys: sys.clone(), anchor, lambda, depth })
    }

    fn n_rat(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.sys.len()))
    }

    /// `(lambda - N)/lambda`, the head normalization.
    pub fn head_factor(&self) -> BigRational {
        (&self.lambda - self.n_rat()) / &self.lambda
    }

    /// Exact truncation tail `(N/lambda)^(depth+1)`.
    pub fn tail_defect(&self) -> BigRational {
        let ratio = self.n_rat() / &self.lambda;
        num::pow::pow(ratio, self.depth as usize + 1)
    }

    /// Exact total mass `1 - (N/lambda)^(depth+1)`.
    pub fn total(&self) -> BigRational {
        BigRational::one() - self.tail_defect()
    }

    /// Exact point mass by reverse word counting: walk preimages of `x`
    /// level by level and count arrivals at the anchor.
    pub fn point_mass(&self, x: &ExactPoint) -> BigRational {
        let mut frontier: BTreeMap<ExactPoint, BigInt> = BTreeMap::new();
        frontier.insert(x.clone(), BigInt::one());
        let mut mass = BigRational::zero();
        let lam_inv = BigRational::one() / &self.lambda;
        let mut lam_pow = BigRational::one();
        for _level in 0..=self.depth {
            if let Some(count) = frontier.get(&self.anchor) {
                mass += BigRational::from_integer(count.clone()) * &lam_pow;
            }
            if frontier.is_empty() {
                break;
            }
            let mut next: BTreeMap<ExactPoint, BigInt> = BTreeMap::new();
            for (p, count) in &frontier {
                for j in 0..self.sys.len() {
                    let pre = self.sys.affine(j).expect("affine").apply_inverse_exact(p);
                    if self.sys.member_exact(&pre) != MemberVerdict::Out {
                        *next.entry(pre).or_insert_with(BigInt::zero) += count;
                    }
                }
            }
            frontier = next;
            lam_pow *= &lam_inv;
        }
        mass * self.head_factor()
    }

    /// 1-d affine maps as exact `(alpha, beta)` pairs; requires rational
    /// entries (the unit-interval domain of the pw-poly class).
    pub fn maps_1d(&self) -> Result<Vec<(BigRational, BigRational)>> {
        if self.sys.dim() != 1 {
            return Err(Error::Precondition("pw-poly integration is 1-d only".into()));
        }
        (0..self.sys.len())
            .map(|j| {
                let a = self.sys.affine(j)?;
                let (al, be) = (&a.matrix[0][0], &a.translation[0]);
                if !al.is_rational() || !be.is_rational() {
                    return Err(Error::Precondition("map entries must be rational".into()));
                }
                Ok((al.rational.clone(), be.rational.clone()))
            })
            .collect()
    }

    /// Values `(L^n f)(anchor)` for `n = 0..=levels`, where
    /// `(L f)(y) = sum_j f(map_j(y))`. Level n equals the sum of f over all
    /// words of length n applied to the anchor.
    pub fn level_sums(&self, f: &PwPoly, levels: u32) -> Result<Vec<BigRational>> {
        let maps = self.maps_1d()?;
        let anchor = self.anchor.0[0].rational.clone();
        let mut out = Vec::with_capacity(levels as usize + 1);
        let mut g = f.clone();
        out.push(g.eval_exact(&anchor));
        for _ in 1..=levels {
            g = g.pullback_sum(&maps);
            out.push(g.eval_exact(&anchor));
        }
        Ok(out)
    }

    /// Exact integral of a piecewise polynomial against the truncated series.
    pub fn integrate_pwpoly(&self, f: &PwPoly) -> Result<BigRational> {
        let sums = self.level_sums(f, self.depth)?;
        Ok(self.weighted_series(&sums))
    }

    /// `((lambda-N)/lambda) * sum_n lambda^{-n} sums[n]`.
    pub fn weighted_series(&self, sums: &[BigRational]) -> BigRational {
        let lam_inv = BigRational::one() / &self.lambda;
        let mut lam_pow = BigRational::one();
        let mut acc = BigRational::zero();
        for s in sums {
            acc += s * &lam_pow;
            lam_pow *= &lam_inv;
        }
        acc * self.head_factor()
    }

    /// Materializes the atoms up to the series depth (budget-checked).
    pub fn materialize(&self) -> Result<ExactMeasure> {
        let n = self.sys.len();
        let total: u128 = (0..=self.depth).map(|k| (n as u128).pow(k)).sum();
        if total > self.sys.word_budget as u128 {
            return Err(Error::BudgetExceeded {
                requested: total,
                budget: self.sys.word_budget,
                hint: "materialize a shallower truncation; deep integrals stay lazy",
            });
        }
        let head = self.head_factor();
        let lam_inv = BigRational::one() / &self.lambda;
        let mut atoms: BTreeMap<ExactPoint, BigRational> = BTreeMap::new();
        let mut level = vec![self.anchor.clone()];
        let mut weight = head.clone();
        *atoms.entry(self.anchor.clone()).or_insert_with(BigRational::zero) += &weight;
        for _ in 1..=self.depth {
            weight *= &lam_inv;
            let next: Vec<ExactPoint> = par::map_range(n * level.len(), |i| {
                let (j, idx) = (i / level.len(), i % level.len());
                self.sys.affine(j).expect("affine").apply_exact(&level[idx])
            });
            for p in &next {
                *atoms.entry(p.clone()).or_insert_with(BigRational::zero) += &weight;
            }
            level = next;
        }
        Ok(ExactMeasure { atoms, defect: self.tail_defect() })
    }
}

/// W1 distance between probability measures; exact CDF formula in 1-d,
/// sliced estimate (mean over 64 fixed directions, with spread) in 2-d.
pub fn w1_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<(f64, f64)> {
    let (ta, tb) = (a.total(), b.total());
    if (ta - tb).abs() > 1e-9 + a.defect + b.defect {
        return Err(Error::Normalization { lhs: ta, rhs: tb });
    }
    match a.dim().max(b.dim()) {
        0 | 1 => Ok((
            w1_1d(
                &a.atoms.iter().map(|(p, w)| (p[0], *w)).collect::<Vec<_>>(),
                &b.atoms.iter().map(|(p, w)| (p[0], *w)).collect::<Vec<_>>(),
            ),
            0.0,
        )),
        2 => {
            let dirs = 64;
            let vals: Vec<f64> = par::map_range(dirs, |k| {
                let theta = std::f64::consts::PI * (k as f64 + 0.5) / dirs as f64;
                let (c, s) = (theta.cos(), theta.sin());
                let pa: Vec<(f64, f64)> =
                    a.atoms.iter().map(|(p, w)| (c * p[0] + s * p[1], *w)).collect();
                let pb: Vec<(f64, f64)> =
                    b.atoms.iter().map(|(p, w)| (c * p[0] + s * p[1], *w)).collect();
                w1_1d(&pa, &pb)
            });
            let mean = par::tree_sum(&vals) / dirs as f64;
            let spread = vals.iter().cloned().fold(0.0, f64::max)
                - vals.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok((mean, spread))
        }
        d => Err(Error::Domain(format!("W1 implemented for dimensions 1 and 2, got {d}"))),
    }
}

/// Sorted-CDF formula for W1 on the line.
pub fn w1_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut av = a.to_vec();
    let mut bv = b.to_vec();
    av.sort_by(|x, y| x.0.total_cmp(&y.0));
    bv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut xs: Vec<f64> = av.iter().chain(bv.iter()).map(|(x, _)| *x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut acc = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    for win in xs.windows(2) {
        while ia < av.len() && av[ia].0 <= win[0] {
            fa += av[ia].1;
            ia += 1;
        }
        while ib < bv.len() && bv[ib].0 <= win[0] {
            fb += bv[ib].1;
            ib += 1;
        }
        acc += (fa - fb).abs() * (win[1] - win[0]);
    }
    acc
}

/// W1 between a discrete measure on [0,1] and the uniform measure:
/// integral of |F_m(x) - x|, piecewise in closed form.
pub fn w1_to_uniform01(m: &DiscreteMeasure) -> f64 {
    let mut atoms: Vec<(f64, f64)> = m.atoms.iter().map(|(p, w)| (p[0], *w)).collect();
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut xs: Vec<f64> = vec![0.0];
    xs.extend(atoms.iter().map(|(x, _)| *x));
    xs.push(1.0);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut acc = 0.0;
    let mut idx = 0usize;
    let mut cdf = 0.0f64;
    for win in xs.windows(2) {
        while idx < atoms.len() && atoms[idx].0 <= win[0] {
            cdf += atoms[idx].1;
            idx += 1;
        }
        let (lo, hi) = (win[0], win[1]);
        acc += if cdf <= lo {
            ((lo - cdf) + (hi - cdf)) * (hi - lo) / 2.0
        } else if cdf >= hi {
            ((cdf - lo) + (cdf - hi)) * (hi - lo) / 2.0
        } else {
            ((cdf - lo).powi(2) + (hi - cdf).powi(2)) / 2.0
        };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Exact;
    use crate::presets;

    fn rat(n: i64, d: i64) -> BigRational {
        crate::exact::big_rat(n, d)
    }

    #[test]
    fn pushforward_of_diracs() {
        let tent = presets::tent().unwrap().system;
        let d0 = DiscreteMeasure::dirac(vec![0.0]);
        assert_eq!(d0.pushforward(&tent, 1).unwrap().atoms, vec![(vec![0.0], 1.0)]);
        let d1 = DiscreteMeasure::dirac(vec![1.0]);
        assert_eq!(d1.pushforward(&tent, 2).unwrap().atoms, vec![(vec![0.5], 1.0)]);
        let two = DiscreteMeasure {
            atoms: vec![(vec![0.0], 0.5), (vec![1.0], 0.5)],
            defect: 0.0,
            certified: true,
        };
        let pushed = two.pushforward(&tent, 1).unwrap();
        assert_eq!(pushed.atoms, vec![(vec![0.0], 0.5), (vec![0.5], 0.5)]);
        assert_eq!(pushed.total(), 1.0);
    }

    #[test]
    fn w1_basics() {
        let d0 = DiscreteMeasure::dirac(vec![0.0]);
        let d1 = DiscreteMeasure::dirac(vec![1.0]);
        assert_eq!(w1_distance(&d0, &d0).unwrap().0, 0.0);
        assert!((w1_distance(&d0, &d1).unwrap().0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn w1_quarter_grid_vs_uniform_is_eighth() {
        let m = DiscreteMeasure {
            atoms: (0..4).map(|k| (vec![k as f64 / 4.0], 0.25)).collect(),
            defect: 0.0,
            certified: true,
        };
        assert!((w1_to_uniform01(&m) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn hutchinson_tent_converges_to_uniform() {
        let tent = presets::tent().unwrap().system;
        let run =
            hutchinson_iterate(&tent, DiscreteMeasure::dirac(vec![0.0]), 14, 0.0).unwrap();
        let w1 = w1_to_uniform01(&run.measure);
        assert!(w1 <= 2.0_f64.powi(-14) + 1e-12, "w1 = {w1}");
        // consecutive distances decay geometrically with ratio <= c2 = 1/2
        for w in run.step_distances.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-12, "{} then {}", w[0], w[1]);
        }
        // one-step invariance of the (approximate) fixed point
        let once = hutchinson_iterate(&tent, run.measure.clone(), 1, 0.0).unwrap();
        let d = w1_distance(&run.measure, &once.measure).unwrap().0;
        assert!(d <= 2.0_f64.powi(-14));
    }

    #[test]
    fn chaos_game_is_deterministic_and_near_uniform() {
        let tent = presets::tent().unwrap().system;
        let a = chaos_game(&tent, 100_000, 1_000, 42).unwrap();
        let b = chaos_game(&tent, 100_000, 1_000, 42).unwrap();
        assert_eq!(a.atoms, b.atoms);
        assert!((a.total() - 1.0).abs() < 1e-9);
        assert!(w1_to_uniform01(&a) < 5e-3);
        // boundary case: a single kept step is a single atom
        let single = chaos_game(&tent, 1_001, 1_000, 7).unwrap();
        assert_eq!(single.atoms.len(), 1);
        assert!((single.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orbit_series_exact_bookkeeping() {
        let tent = presets::tent().unwrap().system;
        let half = ExactPoint(vec![Exact::rat(1, 2)]);
        let s = OrbitSeries::new(&tent, half.clone(), rat(4, 1), 30).unwrap();
        // total and defect are exact geometric identities
        assert_eq!(s.total() + s.tail_defect(), BigRational::one());
        assert_eq!(s.tail_defect(), num::pow::pow(rat(1, 2), 31));
        // point mass at the anchor is exactly (lambda - N)/lambda
        assert_eq!(s.point_mass(&half), rat(1, 2));
        // and exactly lambda^{-2} of that on a depth-2 orbit point
        let p = ExactPoint(vec![Exact::rat(3, 8)]); // word (1,2) applied to 1/2
        assert_eq!(s.point_mass(&p), rat(1, 2) * rat(1, 16));
        // endpoints never acquire mass
        assert_eq!(s.point_mass(&ExactPoint(vec![Exact::zero()])), rat(0, 1));
        assert_eq!(s.point_mass(&ExactPoint(vec![Exact::one()])), rat(0, 1));
    }

    #[test]
    fn orbit_series_rejects_small_lambda() {
        let tent = presets::tent().unwrap().system;
        let half = ExactPoint(vec![Exact::rat(1, 2)]);
        assert!(OrbitSeries::new(&tent, half.clone(), rat(2, 1), 5).is_err());
        assert!(OrbitSeries::new(&tent, half, rat(3, 2), 5).is_err());
    }

    /// Dual route: lazy integrals against materialized atom sums, exact.
    #[test]
    fn orbit_series_lazy_matches_materialized() {
        let tent = presets::tent().unwrap().system;
        let half = ExactPoint(vec![Exact::rat(1, 2)]);
        let s = OrbitSeries::new(&tent, half, rat(3, 1), 10).unwrap();
        let m = s.materialize().unwrap();
        assert_eq!(m.total(), s.total());
        let f = PwPoly::from_coeffs(vec![rat(1, 3), rat(-2, 1), rat(0, 1), rat(5, 1)]);
        assert_eq!(s.integrate_pwpoly(&f).unwrap(), m.integrate_pwpoly(&f));
        let g = PwPoly::hat(rat(1, 2), rat(1, 5));
        assert_eq!(s.integrate_pwpoly(&g).unwrap(), m.integrate_pwpoly(&g));
        // point masses agree with the atom map
        for (p, w) in m.atoms.iter().take(20) {
            assert_eq!(&s.point_mass(p), w);
        }
    }

    #[test]
    fn orbit_materialize_respects_budget() {
        let mut tent = presets::tent().unwrap().system;
        tent.word_budget = 100;
        let half = ExactPoint(vec![Exact::rat(1, 2)]);
        let s = OrbitSeries::new(&tent, half, rat(4, 1), 20).unwrap();
        assert!(matches!(s.materialize(), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn integrate_against_uniform_approximant() {
        let tent = presets::tent().unwrap().system;
        let run =
            hutchinson_iterate(&tent, DiscreteMeasure::dirac(vec![0.0]), 14, 0.0).unwrap();
        let (v, err) = run.measure.integrate(&|p: &[f64]| p[0]);
        assert!((v - 0.5).abs() < 1e-3, "integral {v} err {err}");
    }

    #[test]
    fn mass_mismatch_is_an_error() {
        let d0 = DiscreteMeasure::dirac(vec![0.0]);
        let half = DiscreteMeasure {
            atoms: vec![(vec![0.0], 0.5)],
            defect: 0.0,
            certified: true,
        };
        assert!(matches!(w1_distance(&d0, &half), Err(Error::Normalization { .. })));
    }
}
