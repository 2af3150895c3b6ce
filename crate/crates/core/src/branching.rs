//! Branch values, branch points, branch indices, inverse images, and orbit
//! enumeration with exact deduplication.
//!
//! Coincidences `map_j(y) = map_j'(y)` are equality constraints, so the whole
//! module runs on exact scalars for affine systems: a reported coincidence
//! re-evaluates to the zero vector exactly. Callable systems only get a
//! flagged heuristic search over an attractor cloud.

use crate::error::{Error, Result};
use crate::exact::{solve_linear, Exact, ExactPoint};
use crate::ifs::{IfsSystem, MemberVerdict, Word};
use crate::par;
use std::collections::{BTreeMap, BTreeSet};

/// One coincidence: all maps in `maps` send `value` to `image`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coincidence {
    /// branched value y
    pub value: ExactPoint,
    /// branched point x = map_j(y) for every j in `maps`
    pub image: ExactPoint,
    /// 1-based labels of the coinciding maps; at least two
    pub maps: Vec<usize>,
}

impl Coincidence {
    pub fn branch_index(&self) -> usize {
        self.maps.len()
    }
}

/// Full branch structure of a system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchReport {
    /// the set of branched values (where two maps agree), sorted
    pub branch_values: Vec<ExactPoint>,
    /// the set of branched points (common images), sorted
    pub branch_points: Vec<ExactPoint>,
    /// all preimages of branch points that lie in K, sorted
    pub preimages_of_branch_points: Vec<ExactPoint>,
    pub coincidences: Vec<Coincidence>,
    pub finite_branch: bool,
    /// set when produced by the cloud heuristic rather than exact solving
    pub heuristic: bool,
}

impl BranchReport {
    pub fn empty() -> Self {
        BranchReport {
            branch_values: Vec::new(),
            branch_points: Vec::new(),
            preimages_of_branch_points: Vec::new(),
            coincidences: Vec::new(),
            finite_branch: true,
            heuristic: false,
        }
    }

    pub fn is_branch_point(&self, x: &ExactPoint) -> bool {
        self.branch_points.binary_search(x).is_ok()
    }

    pub fn is_branch_value(&self, y: &ExactPoint) -> bool {
        self.branch_values.binary_search(y).is_ok()
    }
}

/// Solves every pair coincidence `map_j(y) = map_j'(y)` exactly and keeps
/// solutions lying in K.
pub fn branch_values(sys: &IfsSystem) -> Result<BranchReport> {
    if !sys.is_affine() {
        return branch_values_heuristic(sys);
    }
    let n = sys.len();
    let d = sys.dim();
    // (value, image) -> coinciding labels
    let mut groups: BTreeMap<(ExactPoint, ExactPoint), BTreeSet<usize>> = BTreeMap::new();
    for j in 0..n {
        for jp in j + 1..n {
            let a = sys.affine(j)?;
            let b = sys.affine(jp)?;
            let m: Vec<Vec<Exact>> = (0..d)
                .map(|r| {
                    (0..d)
                        .map(|c| a.matrix[r][c].clone() - b.matrix[r][c].clone())
                        .collect()
                })
                .collect();
            let rhs: Vec<Exact> = (0..d)
                .map(|r| b.translation[r].clone() - a.translation[r].clone())
                .collect();
            match solve_linear(&m, &rhs) {
                Some(y) => {
                    let y = ExactPoint(y);
                    if sys.member_exact(&y) == MemberVerdict::Out {
                        continue;
                    }
                    let x = a.apply_exact(&y);
                    let entry = groups.entry((y.clone(), x)).or_default();
                    entry.insert(j + 1);
                    entry.insert(jp + 1);
                }
                None => {
                    // singular difference: identical maps are degenerate; a
                    // consistent singular system would mean a coincidence
                    // continuum, which violates the finite branch condition
                    if rhs.iter().all(Exact::is_zero) && m.iter().flatten().all(Exact::is_zero) {
                        return Err(Error::DegenerateSystem { first: j + 1, second: jp + 1 });
                    }
                    if singular_consistent(&m, &rhs) {
                        return Ok(BranchReport {
                            finite_branch: false,
                            ..BranchReport::empty()
                        });
                    }
                }
            }
        }
    }
    let mut coincidences: Vec<Coincidence> = groups
        .into_iter()
        .map(|((value, image), maps)| Coincidence { value, image, maps: maps.into_iter().collect() })
        .collect();
    // re-derive the full index set per coincidence to catch triples
    for c in &mut coincidences {
        let mut maps = Vec::new();
        for j in 1..=n {
            if sys.apply_exact(j, &c.value)? == c.image {
                maps.push(j);
            }
        }
        c.maps = maps;
    }
    let branch_values: Vec<ExactPoint> = dedup_sorted(coincidences.iter().map(|c| c.value.clone()));
    let branch_points: Vec<ExactPoint> = dedup_sorted(coincidences.iter().map(|c| c.image.clone()));
    let mut pre: Vec<ExactPoint> = Vec::new();
    for x in &branch_points {
        for j in 0..n {
            let y = sys.affine(j)?.apply_inverse_exact(x);
            if sys.member_exact(&y) != MemberVerdict::Out {
                pre.push(y);
            }
        }
    }
    Ok(BranchReport {
        branch_values,
        branch_points,
        preimages_of_branch_points: dedup_sorted(pre.into_iter()),
        coincidences,
        finite_branch: true,
        heuristic: false,
    })
}

fn dedup_sorted(items: impl Iterator<Item = ExactPoint>) -> Vec<ExactPoint> {
    let set: BTreeSet<ExactPoint> = items.collect();
    set.into_iter().collect()
}

/// Rank test: does the singular system `m y = rhs` admit any solution?
fn singular_consistent(m: &[Vec<Exact>], rhs: &[Exact]) -> bool {
    let d = m.len();
    let mut a: Vec<Vec<Exact>> = m.to_vec();
    let mut b: Vec<Exact> = rhs.to_vec();
    let mut row = 0usize;
    for col in 0..d {
        let Some(p) = (row..d).find(|&r| !a[r][col].is_zero()) else { continue };
        a.swap(row, p);
        b.swap(row, p);
        let inv = a[row][col].inv();
        for r in 0..d {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone() * inv.clone();
                for c in 0..d {
                    a[r][c] = a[r][c].clone() - f.clone() * a[row][c].clone();
                }
                b[r] = b[r].clone() - f * b[row].clone();
            }
        }
        row += 1;
    }
    // consistent iff no zero row with nonzero rhs
    (0..d).all(|r| a[r].iter().any(|x| !x.is_zero()) || b[r].is_zero())
}

/// Cloud search for coincidences of callable systems; flagged heuristic.
fn branch_values_heuristic(sys: &IfsSystem) -> Result<BranchReport> {
    let cloud = sys
        .attractor
        .as_ref()
        .ok_or_else(|| Error::Precondition("callable branch search needs an attractor cloud".into()))?;
    let tol = 1e-9 * sys.ambient_box.diameter();
    let mut coincidences = Vec::new();
    for p in &cloud.points {
        for j in 1..=sys.len() {
            for jp in j + 1..=sys.len() {
                let a = sys.apply_f64(j, p)?;
                let b = sys.apply_f64(jp, p)?;
                if crate::ifs::dist(&a, &b) < tol {
                    let value = ExactPoint(
                        p.iter().map(|&x| Exact::from_f64(x).unwrap()).collect(),
                    );
                    let image =
                        ExactPoint(a.iter().map(|&x| Exact::from_f64(x).unwrap()).collect());
                    coincidences.push(Coincidence { value, image, maps: vec![j, jp] });
                }
            }
        }
    }
    let branch_values = dedup_sorted(coincidences.iter().map(|c| c.value.clone()));
    let branch_points = dedup_sorted(coincidences.iter().map(|c| c.image.clone()));
    Ok(BranchReport {
        branch_values,
        branch_points,
        preimages_of_branch_points: Vec::new(),
        coincidences,
        finite_branch: true,
        heuristic: true,
    })
}

/// Number of maps sending `y` to `x`; error if none does.
pub fn branch_index(sys: &IfsSystem, x: &ExactPoint, y: &ExactPoint) -> Result<usize> {
    let mut count = 0;
    for j in 1..=sys.len() {
        if sys.apply_exact(j, y)? == *x {
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NotAnImage);
    }
    Ok(count)
}

/// All `(label, preimage)` pairs with `map_label(preimage) = x` and the
/// preimage in K.
pub fn inverse_images(sys: &IfsSystem, x: &ExactPoint) -> Result<Vec<(usize, ExactPoint)>> {
    let mut out = Vec::new();
    for j in 0..sys.len() {
        let y = sys.affine(j)?.apply_inverse_exact(x);
        if sys.member_exact(&y) != MemberVerdict::Out {
            out.push((j + 1, y));
        }
    }
    Ok(out)
}

/// Deduplicated orbit node.
#[derive(Debug, Clone)]
pub struct OrbitNode {
    pub point: ExactPoint,
    /// number of words of length <= depth reaching this point
    pub multiplicity: u64,
    /// lexicographically first word reaching it
    pub first_word: Word,
    /// word length at first reach
    pub level: u32,
}

/// Orbit of a point to a fixed word depth, deduplicated exactly.
#[derive(Debug, Clone)]
pub struct OrbitTree {
    pub root: ExactPoint,
    pub depth: u32,
    pub nodes: Vec<OrbitNode>,
    /// pairs of words mapping to the same point (capped)
    pub collisions: Vec<(Word, Word)>,
}

impl OrbitTree {
    pub fn point_set(&self) -> BTreeSet<ExactPoint> {
        self.nodes.iter().map(|n| n.point.clone()).collect()
    }

    pub fn contains(&self, p: &ExactPoint) -> bool {
        self.nodes.binary_search_by(|n| n.point.cmp(p)).is_ok()
    }
}

const COLLISION_CAP: usize = 128;

/// Enumerates all words up to `depth` applied to `y`, composing new letters
/// on the outside, with exact dedup and a collision list.
pub fn orbit(sys: &IfsSystem, y: &ExactPoint, depth: u32) -> Result<OrbitTree> {
    let n = sys.len();
    let total: u128 = (0..=depth).map(|k| (n as u128).pow(k)).sum();
    if total > sys.word_budget as u128 {
        return Err(Error::BudgetExceeded {
            requested: total,
            budget: sys.word_budget,
            hint: "lower the orbit depth or raise the word budget",
        });
    }
    let mut seen: BTreeMap<ExactPoint, (u64, Word, u32)> = BTreeMap::new();
    let mut collisions = Vec::new();
    seen.insert(y.clone(), (1, Word::empty(), 0));
    // distinct points of the previous level with their multiplicities
    let mut level: Vec<(ExactPoint, u64, Word)> = vec![(y.clone(), 1, Word::empty())];
    for lev in 1..=depth {
        let children: Vec<(ExactPoint, u64, Word)> = par::map_range(n * level.len(), |i| {
            let (j, idx) = (i / level.len(), i % level.len());
            let (p, mult, w) = &level[idx];
            let child = sys.affine(j).expect("affine").apply_exact(p);
            let mut v = Vec::with_capacity(w.0.len() + 1);
            v.push((j + 1) as u8);
            v.extend_from_slice(&w.0);
            (child, *mult, Word(v))
        });
        let mut next: BTreeMap<ExactPoint, (u64, Word)> = BTreeMap::new();
        for (p, mult, w) in children {
            match next.get_mut(&p) {
                Some((m, first)) => {
                    *m += mult;
                    if collisions.len() < COLLISION_CAP {
                        collisions.push((first.clone(), w));
                    }
                }
                None => {
                    next.insert(p, (mult, w));
                }
            }
        }
        level = next
            .iter()
            .map(|(p, (m, w))| (p.clone(), *m, w.clone()))
            .collect();
        for (p, (m, w)) in next {
            match seen.get_mut(&p) {
                Some((mult, first, _)) => {
                    *mult += m;
                    if collisions.len() < COLLISION_CAP {
                        collisions.push((first.clone(), w));
                    }
                }
                None => {
                    seen.insert(p, (m, w, lev));
                }
            }
        }
    }
    let nodes: Vec<OrbitNode> = seen
        .into_iter()
        .map(|(point, (multiplicity, first_word, level))| OrbitNode {
            point,
            multiplicity,
            first_word,
            level,
        })
        .collect();
    Ok(OrbitTree { root: y.clone(), depth, nodes, collisions })
}

/// Verdict of the orbit-disjointness checks for branch points.
#[derive(Debug, Clone)]
pub struct OrbitLemmaReport {
    pub pass: bool,
    /// orbit point that equals a branched value
    pub hits_branch_value: Option<(ExactPoint, ExactPoint)>,
    /// two branch points whose orbits share a point
    pub orbit_intersection: Option<(ExactPoint, ExactPoint, ExactPoint)>,
    /// a collision inside a single orbit (two words, same point)
    pub within_orbit_collision: Option<(ExactPoint, Word, Word)>,
    pub depth: u32,
}

/// Checks, to the given depth, that orbits of branch points avoid the set of
/// branched values, are pairwise disjoint, and are word-injective.
pub fn check_orbit_lemmas(sys: &IfsSystem, report: &BranchReport, depth: u32) -> Result<OrbitLemmaReport> {
    let mut out = OrbitLemmaReport {
        pass: true,
        hits_branch_value: None,
        orbit_intersection: None,
        within_orbit_collision: None,
        depth,
    };
    let trees: Vec<OrbitTree> = report
        .branch_points
        .iter()
        .map(|b| orbit(sys, b, depth))
        .collect::<Result<_>>()?;
    for tree in &trees {
        if let Some((w1, w2)) = tree.collisions.first() {
            out.pass = false;
            out.within_orbit_collision = Some((tree.root.clone(), w1.clone(), w2.clone()));
        }
        for c in &report.branch_values {
            if tree.contains(c) {
                out.pass = false;
                out.hits_branch_value = Some((tree.root.clone(), c.clone()));
            }
        }
    }
    for i in 0..trees.len() {
        let set_i = trees[i].point_set();
        for j in i + 1..trees.len() {
            if let Some(p) = trees[j].nodes.iter().find(|n| set_i.contains(&n.point)) {
                out.pass = false;
                out.orbit_intersection =
                    Some((trees[i].root.clone(), trees[j].root.clone(), p.point.clone()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Exact;
    use crate::ifs::{AffineMap, BoundingBox, Membership};

    fn tent_exact() -> IfsSystem {
        let m1 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()]).unwrap();
        let m2 = AffineMap::new(vec![vec![Exact::rat(-1, 2)]], vec![Exact::one()]).unwrap();
        IfsSystem::from_affine(
            vec![m1, m2],
            BoundingBox::new(vec![0.0], vec![1.0]),
            Membership::Interval { lo: Exact::zero(), hi: Exact::one() },
            true,
            "tent",
        )
        .unwrap()
    }

    fn pt(p: i64, q: i64) -> ExactPoint {
        ExactPoint(vec![Exact::rat(p, q)])
    }

    #[test]
    fn tent_branch_structure() {
        let rep = branch_values(&tent_exact()).unwrap();
        assert_eq!(rep.branch_values, vec![pt(1, 1)]);
        assert_eq!(rep.branch_points, vec![pt(1, 2)]);
        assert_eq!(rep.preimages_of_branch_points, vec![pt(1, 1)]);
        assert_eq!(rep.coincidences.len(), 1);
        assert_eq!(rep.coincidences[0].maps, vec![1, 2]);
        assert!(rep.finite_branch && !rep.heuristic);
        // exactness: re-evaluating the coincidence gives equality
        let sys = tent_exact();
        let c = &rep.coincidences[0];
        assert_eq!(sys.apply_exact(1, &c.value).unwrap(), sys.apply_exact(2, &c.value).unwrap());
    }

    #[test]
    fn doubling_has_no_branches() {
        let m1 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()]).unwrap();
        let m2 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::rat(1, 2)]).unwrap();
        let sys = IfsSystem::from_affine(
            vec![m1, m2],
            BoundingBox::new(vec![0.0], vec![1.0]),
            Membership::Interval { lo: Exact::zero(), hi: Exact::one() },
            true,
            "doubling",
        )
        .unwrap();
        let rep = branch_values(&sys).unwrap();
        assert!(rep.branch_values.is_empty());
        assert!(rep.branch_points.is_empty());
        assert!(rep.finite_branch);
    }

    #[test]
    fn identical_maps_are_degenerate() {
        let m1 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()]).unwrap();
        let m2 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()]).unwrap();
        let sys = IfsSystem::from_affine(
            vec![m1, m2],
            BoundingBox::new(vec![0.0], vec![1.0]),
            Membership::Interval { lo: Exact::zero(), hi: Exact::one() },
            true,
            "degenerate",
        )
        .unwrap();
        assert!(matches!(branch_values(&sys), Err(Error::DegenerateSystem { .. })));
    }

    #[test]
    fn tent_branch_indices() {
        let sys = tent_exact();
        assert_eq!(branch_index(&sys, &pt(1, 2), &pt(1, 1)).unwrap(), 2);
        assert_eq!(branch_index(&sys, &pt(1, 4), &pt(1, 2)).unwrap(), 1);
        assert!(matches!(branch_index(&sys, &pt(3, 4), &pt(1, 1)), Err(Error::NotAnImage)));
    }

    #[test]
    fn tent_inverse_images() {
        let sys = tent_exact();
        // preimages of 0: only map 1 gives 0; map 2 would need y = 2
        let inv = inverse_images(&sys, &pt(0, 1)).unwrap();
        assert_eq!(inv, vec![(1, pt(0, 1))]);
        // preimages of 1/2: both maps, from y = 1
        let inv = inverse_images(&sys, &pt(1, 2)).unwrap();
        assert_eq!(inv, vec![(1, pt(1, 1)), (2, pt(1, 1))]);
    }

    #[test]
    fn tent_orbit_depth_two() {
        let sys = tent_exact();
        let tree = orbit(&sys, &pt(1, 2), 2).unwrap();
        let expect: BTreeSet<ExactPoint> = [
            pt(1, 2),
            pt(1, 4),
            pt(3, 4),
            pt(1, 8),
            pt(7, 8),
            pt(3, 8),
            pt(5, 8),
        ]
        .into_iter()
        .collect();
        assert_eq!(tree.point_set(), expect);
        assert!(tree.collisions.is_empty());
    }

    #[test]
    fn orbit_depth_zero_is_root() {
        let sys = tent_exact();
        let tree = orbit(&sys, &pt(1, 3), 0).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.nodes[0].point, pt(1, 3));
    }

    #[test]
    fn orbit_prefix_property() {
        let sys = tent_exact();
        let t4 = orbit(&sys, &pt(1, 2), 4).unwrap();
        let t5 = orbit(&sys, &pt(1, 2), 5).unwrap();
        let s4 = t4.point_set();
        for n in &t5.nodes {
            if n.level <= 4 {
                assert!(s4.contains(&n.point));
            }
        }
    }

    #[test]
    fn tent_orbit_lemmas_pass() {
        let sys = tent_exact();
        let rep = branch_values(&sys).unwrap();
        let verdict = check_orbit_lemmas(&sys, &rep, 12).unwrap();
        assert!(verdict.pass);
    }

    #[test]
    fn colliding_orbit_is_detected() {
        // two maps sharing the fixed point 0 collide at depth 1 already
        let m1 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()]).unwrap();
        let m2 = AffineMap::new(vec![vec![Exact::rat(1, 4)]], vec![Exact::zero()]).unwrap();
        let sys = IfsSystem::from_affine(
            vec![m1, m2],
            BoundingBox::new(vec![0.0], vec![1.0]),
            Membership::Interval { lo: Exact::zero(), hi: Exact::one() },
            true,
            "shared-fixed-point",
        )
        .unwrap();
        let fake = BranchReport {
            branch_points: vec![pt(0, 1)],
            ..BranchReport::empty()
        };
        let verdict = check_orbit_lemmas(&sys, &fake, 3).unwrap();
        assert!(!verdict.pass);
        assert!(verdict.within_orbit_collision.is_some());
    }
}
