//! Exact constructors for the three reference systems, each self-verified at
//! load time against its analytically known branch data.
//!
//! The gasket maps are pinned by the vertex correspondences they must satisfy
//! (which vertex goes to which midpoint, and the three single-point inverse
//! images); the constructor re-derives every one of those facts in exact
//! arithmetic and refuses to load on any mismatch.

use crate::branching::{branch_index, branch_values, inverse_images, BranchReport};
use crate::error::{Error, Result};
use crate::exact::{Exact, ExactPoint};
use crate::ifs::{AffineMap, BoundingBox, IfsSystem, Membership, OpenSet};

/// A reference system plus its expected branch structure and open set.
#[derive(Debug, Clone)]
pub struct Preset {
    pub system: IfsSystem,
    /// hand-stated branched values (sorted)
    pub expected_branch_values: Vec<ExactPoint>,
    /// hand-stated branched points (sorted)
    pub expected_branch_points: Vec<ExactPoint>,
    /// a verified branch report (matches the hand-stated sets exactly)
    pub branch: BranchReport,
    pub open_set: OpenSet,
}

impl Preset {
    pub fn name(&self) -> &str {
        &self.system.name
    }
}

/// Looks a preset up by name: `tent`, `doubling`, or `sierpinski`.
pub fn by_name(name: &str) -> Result<Preset> {
    match name {
        "tent" => tent(),
        "doubling" => doubling(),
        "sierpinski" | "gasket" => sierpinski(),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (expected tent, doubling, or sierpinski)"
        ))),
    }
}

fn pt1(p: i64, q: i64) -> ExactPoint {
    ExactPoint(vec![Exact::rat(p, q)])
}

/// `y/2` and `1 - y/2` on [0,1]: one branched value at 1, image 1/2.
pub fn tent() -> Result<Preset> {
    let m1 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()])?;
    let m2 = AffineMap::new(vec![vec![Exact::rat(-1, 2)]], vec![Exact::one()])?;
    let system = IfsSystem::from_affine(
        vec![m1, m2],
        BoundingBox::new(vec![0.0], vec![1.0]),
        Membership::Interval { lo: Exact::zero(), hi: Exact::one() },
        true,
        "tent",
    )?;
    let expected_values = vec![pt1(1, 1)];
    let expected_points = vec![pt1(1, 2)];
    let branch = verify_branch(&system, &expected_values, &expected_points)?;
    if branch_index(&system, &pt1(1, 2), &pt1(1, 1))? != 2 {
        return Err(Error::PresetIntegrity("tent: branch index at (1/2, 1) is not 2".into()));
    }
    Ok(Preset {
        system,
        expected_branch_values: expected_values,
        expected_branch_points: expected_points,
        branch,
        open_set: OpenSet::IntervalOpen { lo: Exact::zero(), hi: Exact::one() },
    })
}

/// `y/2` and `(y+1)/2` on [0,1]: branch-free binary subdivision.
pub fn doubling() -> Result<Preset> {
    let m1 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::zero()])?;
    let m2 = AffineMap::new(vec![vec![Exact::rat(1, 2)]], vec![Exact::rat(1, 2)])?;
    let system = IfsSystem::from_affine(
        vec![m1, m2],
        BoundingBox::new(vec![0.0], vec![1.0]),
        Membership::Interval { lo: Exact::zero(), hi: Exact::one() },
        true,
        "doubling",
    )?;
    let branch = verify_branch(&system, &[], &[])?;
    Ok(Preset {
        system,
        expected_branch_values: Vec::new(),
        expected_branch_points: Vec::new(),
        branch,
        open_set: OpenSet::IntervalOpen { lo: Exact::zero(), hi: Exact::one() },
    })
}

/// Triangle vertices of the gasket.
pub fn gasket_vertices() -> [ExactPoint; 3] {
    [
        ExactPoint(vec![Exact::rat(1, 2), Exact::sqrt3(1, 2)]), // top
        ExactPoint(vec![Exact::zero(), Exact::zero()]),         // bottom-left
        ExactPoint(vec![Exact::one(), Exact::zero()]),          // bottom-right
    ]
}

/// Barycenter of the gasket triangle; the canonical interior seed point
/// (word images of an interior point never collide).
pub fn gasket_centroid() -> ExactPoint {
    ExactPoint(vec![Exact::rat(1, 2), Exact::sqrt3(1, 6)])
}

/// Edge midpoints of the gasket (the branched points).
pub fn gasket_midpoints() -> [ExactPoint; 3] {
    [
        ExactPoint(vec![Exact::rat(1, 4), Exact::sqrt3(1, 4)]), // mid of top/left
        ExactPoint(vec![Exact::rat(3, 4), Exact::sqrt3(1, 4)]), // mid of top/right
        ExactPoint(vec![Exact::rat(1, 2), Exact::zero()]),      // mid of bottom
    ]
}

/// Sierpinski gasket with rotated pieces: scaling 1/2 composed with
/// rotations by 0, -120 and +120 degrees. Every analytic fact is verified
/// exactly at load time.
pub fn sierpinski() -> Result<Preset> {
    let half = Exact::rat(1, 2);
    // (1/2) * rotation(-120deg) = [[-1/4, s/4], [-s/4, -1/4]], s = sqrt 3
    let rot_neg = vec![
        vec![Exact::rat(-1, 4), Exact::sqrt3(1, 4)],
        vec![Exact::sqrt3(-1, 4), Exact::rat(-1, 4)],
    ];
    // (1/2) * rotation(+120deg)
    let rot_pos = vec![
        vec![Exact::rat(-1, 4), Exact::sqrt3(-1, 4)],
        vec![Exact::sqrt3(1, 4), Exact::rat(-1, 4)],
    ];
    let m1 = AffineMap::new(
        vec![vec![half.clone(), Exact::zero()], vec![Exact::zero(), half.clone()]],
        vec![Exact::rat(1, 4), Exact::sqrt3(1, 4)],
    )?;
    let m2 = AffineMap::new(rot_neg, vec![Exact::rat(1, 4), Exact::sqrt3(1, 4)])?;
    let m3 = AffineMap::new(rot_pos, vec![Exact::one(), Exact::zero()])?;

    let [c1, c2, c3] = gasket_vertices();
    let hull = vec![c2.clone(), c3.clone(), c1.clone()]; // CCW
    let system = IfsSystem::from_affine(
        vec![m1, m2, m3],
        BoundingBox::new(vec![0.0, 0.0], vec![1.0, 3.0_f64.sqrt() / 2.0]),
        Membership::HullDescent { hull, max_depth: 40 },
        true,
        "sierpinski",
    )?;

    let [b1, b2, b3] = gasket_midpoints();
    // vertex correspondences that pin the maps
    let facts: [(usize, &ExactPoint, &ExactPoint); 8] = [
        (1, &c2, &b1),
        (2, &c2, &b1),
        (1, &c3, &b2),
        (3, &c3, &b2),
        (2, &c1, &b3),
        (3, &c1, &b3),
        (1, &c1, &c1),
        (3, &c2, &c3),
    ];
    for (label, y, x) in facts {
        if system.apply_exact(label, y)? != *x {
            return Err(Error::PresetIntegrity(format!(
                "gasket: map {label} sends {y} to {}, expected {x}",
                system.apply_exact(label, y)?
            )));
        }
    }
    // single-point inverse images of the three vertices
    let inv_facts: [(&ExactPoint, &ExactPoint); 3] = [(&c1, &c1), (&c2, &c3), (&c3, &c2)];
    for (x, y) in inv_facts {
        let inv = inverse_images(&system, x)?;
        let points: Vec<&ExactPoint> = inv.iter().map(|(_, p)| p).collect();
        if points.len() != 1 || points[0] != y {
            return Err(Error::PresetIntegrity(format!(
                "gasket: inverse image of {x} is {:?}, expected exactly {{{y}}}",
                inv
            )));
        }
    }

    let mut expected_values = vec![c1.clone(), c2.clone(), c3.clone()];
    expected_values.sort();
    let mut expected_points = vec![b1.clone(), b2.clone(), b3.clone()];
    expected_points.sort();
    let branch = verify_branch(&system, &expected_values, &expected_points)?;
    for c in &branch.coincidences {
        if c.branch_index() != 2 {
            return Err(Error::PresetIntegrity(format!(
                "gasket: coincidence at {} has branch index {}, expected 2",
                c.value,
                c.branch_index()
            )));
        }
    }
    // branched values and their preimage set must agree for the gasket
    if branch.preimages_of_branch_points != branch.branch_values {
        return Err(Error::PresetIntegrity(
            "gasket: preimages of branch points differ from branched values".into(),
        ));
    }

    Ok(Preset {
        system,
        expected_branch_values: expected_values,
        expected_branch_points: expected_points,
        branch,
        open_set: OpenSet::AttractorMinus { excluded: vec![c1, c2, c3] },
    })
}

fn verify_branch(
    sys: &IfsSystem,
    expected_values: &[ExactPoint],
    expected_points: &[ExactPoint],
) -> Result<BranchReport> {
    let report = branch_values(sys)?;
    if report.branch_values != expected_values {
        return Err(Error::PresetIntegrity(format!(
            "{}: computed branched values {:?} differ from expected {:?}",
            sys.name, report.branch_values, expected_values
        )));
    }
    if report.branch_points != expected_points {
        return Err(Error::PresetIntegrity(format!(
            "{}: computed branched points {:?} differ from expected {:?}",
            sys.name, report.branch_points, expected_points
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::orbit;
    use crate::ifs::{apply_word_exact, attractor_approx_exact, Word};
    use std::collections::BTreeSet;

    #[test]
    fn all_presets_load() {
        tent().unwrap();
        doubling().unwrap();
        sierpinski().unwrap();
    }

    #[test]
    fn gasket_word_2_sends_c3_to_c2() {
        let p = sierpinski().unwrap();
        let [_, c2, c3] = gasket_vertices();
        let img = apply_word_exact(&p.system, &Word(vec![2]), &c3).unwrap();
        assert_eq!(img, c2);
    }

    #[test]
    fn gasket_branch_index_two_at_bottom_midpoint() {
        let p = sierpinski().unwrap();
        let [c1, _, _] = gasket_vertices();
        let [_, _, b3] = gasket_midpoints();
        assert_eq!(branch_index(&p.system, &b3, &c1).unwrap(), 2);
    }

    #[test]
    fn gasket_attractor_has_no_premature_collisions() {
        let p = sierpinski().unwrap();
        for depth in 1..=6u32 {
            let cloud = attractor_approx_exact(&p.system, depth, &gasket_centroid()).unwrap();
            let distinct: BTreeSet<_> = cloud.exact.as_ref().unwrap().iter().cloned().collect();
            assert_eq!(distinct.len(), 3usize.pow(depth));
        }
    }

    #[test]
    fn tent_and_doubling_attractors_tile_the_same_dyadics() {
        // depth-(n+1) tent cloud is the full grid {k/2^n}; the doubling cloud
        // at depth n is the same grid without the right endpoint
        let t = tent().unwrap();
        let d = doubling().unwrap();
        let zero = ExactPoint(vec![Exact::zero()]);
        for depth in 1..=8u32 {
            let ct: BTreeSet<_> = attractor_approx_exact(&t.system, depth + 1, &zero)
                .unwrap()
                .exact
                .unwrap()
                .into_iter()
                .collect();
            let cd: BTreeSet<_> = attractor_approx_exact(&d.system, depth, &zero)
                .unwrap()
                .exact
                .unwrap()
                .into_iter()
                .collect();
            let grid: BTreeSet<_> = (0..=(1 << depth))
                .map(|k| ExactPoint(vec![Exact::rat(k, 1 << depth)]))
                .collect();
            assert_eq!(ct, grid);
            let mut without_end = grid.clone();
            without_end.remove(&ExactPoint(vec![Exact::one()]));
            assert_eq!(cd, without_end);
        }
    }

    #[test]
    fn doubling_depth_three_is_the_eighths_grid() {
        let d = doubling().unwrap();
        let zero = ExactPoint(vec![Exact::zero()]);
        let cloud = attractor_approx_exact(&d.system, 3, &zero).unwrap();
        let got: BTreeSet<_> = cloud.exact.unwrap().into_iter().collect();
        let want: BTreeSet<_> = (0..8).map(|k| ExactPoint(vec![Exact::rat(k, 8)])).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn gasket_orbit_of_midpoint_avoids_vertices() {
        let p = sierpinski().unwrap();
        let [b1, _, _] = gasket_midpoints();
        let tree = orbit(&p.system, &b1, 1).unwrap();
        assert_eq!(tree.nodes.len(), 4); // root + 3 distinct images
        for v in gasket_vertices() {
            assert!(!tree.contains(&v));
        }
    }

    #[test]
    fn gasket_orbit_lemmas_hold_to_depth_six() {
        let p = sierpinski().unwrap();
        let verdict = crate::branching::check_orbit_lemmas(&p.system, &p.branch, 6).unwrap();
        assert!(verdict.pass);
    }

    #[test]
    fn gasket_open_set_condition_passes() {
        let p = sierpinski().unwrap();
        let rep =
            crate::ifs::check_open_set_condition(&p.system, &p.open_set, 300, 13).unwrap();
        assert!(rep.pass, "witness: {:?} {:?}", rep.escape_witness, rep.overlap_witness);
    }
}
