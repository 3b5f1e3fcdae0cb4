//! Rigid-body geometry on N×3 coordinate sets: centering, Kabsch
//! superposition, RMSD and proper rigid transforms.

use std::ops::Index;

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance;

pub type Point = [f64; 3];

#[inline]
pub(crate) fn sub3(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot3(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: &Point) -> f64 {
    dot3(a, a).sqrt()
}

/// Atom coordinates in Å, one row per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    coords: Vec<Point>,
}

impl PointSet {
    /// Builds a point set, rejecting empty input and non-finite coordinates.
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("point set must hold at least one atom".into()));
        }
        if let Some(i) = coords.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite(format!("coordinate of atom {i}")));
        }
        Ok(Self { coords })
    }

    pub fn zeros(n_atoms: usize) -> Self {
        assert!(n_atoms >= 1, "point set must hold at least one atom");
        Self {
            coords: vec![[0.0; 3]; n_atoms],
        }
    }

    /// Fills an `n_atoms`×3 set from a generator called as `f(atom, axis)`.
    pub fn from_fn(n_atoms: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n_atoms >= 1, "point set must hold at least one atom");
        let coords = (0..n_atoms)
            .map(|i| [f(i, 0), f(i, 1), f(i, 2)])
            .collect();
        Self { coords }
    }

    /// Standard-normal draw of the given shape.
    pub fn standard_normal<R: Rng + ?Sized>(n_atoms: usize, rng: &mut R) -> Self {
        Self::from_fn(n_atoms, |_, _| rng.sample(StandardNormal))
    }

    pub fn n_atoms(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [Point] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<Point> {
        self.coords
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.coords.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().flatten().all(|c| c.is_finite())
    }

    pub fn centroid(&self) -> Point {
        let n = self.coords.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.coords {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    /// Translates the set so its centroid sits at the origin.
    pub fn center(&self) -> PointSet {
        let c = self.centroid();
        PointSet {
            coords: self.coords.iter().map(|p| sub3(p, &c)).collect(),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        norm3(&sub3(&self.coords[i], &self.coords[j]))
    }

    pub fn check_same_shape(&self, other: &PointSet) -> Result<()> {
        if self.n_atoms() != other.n_atoms() {
            return Err(Error::ShapeMismatch {
                expected: self.n_atoms(),
                got: other.n_atoms(),
            });
        }
        Ok(())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &PointSet) -> Result<()> {
        self.check_same_shape(other)?;
        for (p, q) in self.coords.iter_mut().zip(&other.coords) {
            for k in 0..3 {
                p[k] += a * q[k];
            }
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> PointSet {
        PointSet {
            coords: self.coords.iter().map(|p| p.map(|v| a * v)).collect(),
        }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &PointSet) -> Result<PointSet> {
        self.check_same_shape(other)?;
        Ok(PointSet {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(p, q)| sub3(p, q))
                .collect(),
        })
    }

    /// `Σ cᵢ·Pᵢ` over equally shaped sets.
    pub fn linear_combination(terms: &[(f64, &PointSet)]) -> Result<PointSet> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?;
        let mut out = PointSet::zeros(first.n_atoms());
        for (c, p) in terms {
            out.axpy(*c, p)?;
        }
        Ok(out)
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &PointSet) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).abs()))
            .fold(0.0, f64::max)
    }

    /// Mean per-atom Euclidean norm, treating rows as 3-vectors.
    pub fn mean_row_norm(&self) -> f64 {
        self.coords.iter().map(norm3).sum::<f64>() / self.coords.len() as f64
    }

    /// Returns a new set keeping only atoms where `mask` is true.
    pub fn select(&self, mask: &[bool]) -> Result<PointSet> {
        if mask.len() != self.n_atoms() {
            return Err(Error::ShapeMismatch {
                expected: self.n_atoms(),
                got: mask.len(),
            });
        }
        PointSet::new(
            self.coords
                .iter()
                .zip(mask)
                .filter(|(_, keep)| **keep)
                .map(|(p, _)| *p)
                .collect(),
        )
    }
}

impl Index<usize> for PointSet {
    type Output = Point;

    fn index(&self, i: usize) -> &Point {
        &self.coords[i]
    }
}

/// A proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let xf = Self {
            rotation,
            translation,
        };
        if !xf.is_proper(tolerance::ROTATION) {
            return Err(Error::InvalidInput("rotation is not a proper orthonormal matrix".into()));
        }
        Ok(xf)
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Uniformly distributed rotation on SO(3) (normalized Gaussian quaternion)
    /// with the given translation.
    pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, translation: Vector3<f64>) -> Self {
        let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q));
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        ortho <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        let v = self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
        [v.x, v.y, v.z]
    }

    /// Rotates a displacement-like set (velocities): no translation.
    pub fn rotate(&self, p: &PointSet) -> PointSet {
        let coords = p
            .iter()
            .map(|q| {
                let v = self.rotation * Vector3::new(q[0], q[1], q[2]);
                [v.x, v.y, v.z]
            })
            .collect();
        PointSet { coords }
    }

    pub fn apply(&self, p: &PointSet) -> PointSet {
        PointSet {
            coords: p.iter().map(|q| self.apply_point(q)).collect(),
        }
    }
}

/// Outcome of a Kabsch superposition of `mobile` onto `reference`.
#[derive(Debug, Clone)]
pub struct KabschResult {
    pub aligned: PointSet,
    pub transform: RigidTransform,
    pub rmsd: f64,
    /// The cross-covariance was rank-deficient (collinear or coincident
    /// points), so the returned rotation is one of several optimal ones.
    pub degenerate: bool,
}

/// Root-mean-square deviation without any alignment.
pub fn rmsd(a: &PointSet, b: &PointSet) -> Result<f64> {
    a.check_same_shape(b)?;
    let sq: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(p, q)| {
            let d = sub3(p, q);
            dot3(&d, &d)
        })
        .sum();
    Ok((sq / a.n_atoms() as f64).sqrt())
}

/// Optimal proper rigid superposition of `mobile` onto `reference`.
///
/// The rotation comes from the SVD of the cross-covariance `H = Σ pᵢ qᵢᵀ`
/// of the centered sets: `R = V·D·Uᵀ`, where `D` flips the axis of the
/// smallest singular value when `det(V·Uᵀ) < 0` so reflections are never
/// returned.
pub fn kabsch_align(mobile: &PointSet, reference: &PointSet) -> Result<KabschResult> {
    reference.check_same_shape(mobile)?;
    let cm = mobile.centroid();
    let cr = reference.centroid();

    let mut h = Matrix3::<f64>::zeros();
    for (p, q) in mobile.iter().zip(reference.iter()) {
        let p = Vector3::new(p[0] - cm[0], p[1] - cm[1], p[2] - cm[2]);
        let q = Vector3::new(q[0] - cr[0], q[1] - cr[1], q[2] - cr[2]);
        h += p * q.transpose();
    }

    let svd = h.svd(true, true);
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (s_max, s_mid) = (s[order[0]], s[order[1]]);
    let degenerate = s_max <= tolerance::DEGENERATE_ABSOLUTE
        || s_mid <= tolerance::DEGENERATE_RELATIVE * s_max;

    let rotation = if s_max <= tolerance::DEGENERATE_ABSOLUTE {
        Matrix3::identity()
    } else {
        let u = svd.u.expect("svd computed with u");
        let v = svd.v_t.expect("svd computed with v_t").transpose();
        let mut d = Matrix3::identity();
        if (v * u.transpose()).determinant() < 0.0 {
            d[(order[2], order[2])] = -1.0;
        }
        v * d * u.transpose()
    };

    let cm_v = Vector3::new(cm[0], cm[1], cm[2]);
    let cr_v = Vector3::new(cr[0], cr[1], cr[2]);
    let transform = RigidTransform {
        rotation,
        translation: cr_v - rotation * cm_v,
    };
    let aligned = transform.apply(mobile);
    let rmsd = rmsd(&aligned, reference)?;
    Ok(KabschResult {
        aligned,
        transform,
        rmsd,
        degenerate,
    })
}

/// Kabsch-aligned RMSD between two conformers.
pub fn aligned_rmsd(mobile: &PointSet, reference: &PointSet) -> Result<f64> {
    Ok(kabsch_align(mobile, reference)?.rmsd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_set(n: usize, rng: &mut ChaCha8Rng) -> PointSet {
        PointSet::standard_normal(n, rng).scaled(2.0)
    }

    fn pairwise(p: &PointSet) -> Vec<f64> {
        let n = p.n_atoms();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push(p.distance(i, j));
            }
        }
        out
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointSet::new(vec![]).is_err());
        assert!(PointSet::new(vec![[0.0, f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn center_single_point() {
        let p = PointSet::new(vec![[5.0, 5.0, 5.0]]).unwrap();
        assert_eq!(p.center().coords(), &[[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn center_is_idempotent_on_centered_input() {
        let p = PointSet::new(vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p.center(), p);
    }

    #[test]
    fn center_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_set(3, &mut rng);
        let c = p.center();
        let cn = norm3(&c.centroid());
        assert!(cn < tolerance::CENTROID, "{cn}");
        for (a, b) in pairwise(&p).iter().zip(pairwise(&c)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rmsd_examples() {
        let a = PointSet::new(vec![[0.0, 0.0, 0.0]]).unwrap();
        let b = PointSet::new(vec![[3.0, 4.0, 0.0]]).unwrap();
        assert_eq!(rmsd(&a, &b).unwrap(), 5.0);
        assert_eq!(rmsd(&b, &b).unwrap(), 0.0);
        assert!(matches!(
            rmsd(&a, &PointSet::zeros(2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rmsd_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_set(7, &mut rng);
        let b = random_set(7, &mut rng);
        let mut acc = 0.0;
        for i in 0..7 {
            for k in 0..3 {
                acc += (a[i][k] - b[i][k]).powi(2);
            }
        }
        let expected = (acc / 7.0).sqrt();
        assert!((rmsd(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert_eq!(rmsd(&a, &b).unwrap(), rmsd(&b, &a).unwrap());
    }

    #[test]
    fn apply_examples() {
        let p = PointSet::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(RigidTransform::identity().apply(&p), p);
        let half_turn = RigidTransform::from_axis_angle(Vector3::z(), PI, Vector3::zeros());
        let q = half_turn.apply(&p);
        assert!(q.max_abs_diff(&PointSet::new(vec![[-1.0, 0.0, 0.0]]).unwrap()) < 1e-15);
    }

    #[test]
    fn apply_composition_and_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_set(6, &mut rng);
        let g1 = RigidTransform::random_rotation(&mut rng, Vector3::new(1.0, -2.0, 0.5));
        let g2 = RigidTransform::random_rotation(&mut rng, Vector3::new(-3.0, 0.0, 2.0));
        let two_step = g2.apply(&g1.apply(&p));
        let composed = g2.compose(&g1).apply(&p);
        assert!(two_step.max_abs_diff(&composed) < 1e-12);
        for (a, b) in pairwise(&p).iter().zip(pairwise(&composed)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_rotation_is_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g = RigidTransform::random_rotation(&mut rng, Vector3::zeros());
            assert!(g.is_proper(tolerance::ROTATION));
        }
        let mut bad = Matrix3::identity();
        bad[(2, 2)] = -1.0;
        assert!(RigidTransform::new(bad, Vector3::zeros()).is_err());
    }

    #[test]
    fn kabsch_identity_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_set(5, &mut rng);
        let res = kabsch_align(&p, &p).unwrap();
        assert!(res.rmsd < 1e-12);
        assert!((res.transform.rotation - Matrix3::identity()).amax() < 1e-10);
        assert!(res.transform.translation.amax() < 1e-10);
        assert!(!res.degenerate);
    }

    #[test]
    fn kabsch_recovers_rigid_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reference = random_set(8, &mut rng);
        let g = RigidTransform::from_axis_angle(Vector3::z(), PI / 2.0, Vector3::new(1.0, 2.0, 3.0));
        let mobile = g.apply(&reference);
        let res = kabsch_align(&mobile, &reference).unwrap();
        assert!(res.rmsd < 1e-10, "{}", res.rmsd);
        assert!(res.transform.is_proper(tolerance::ROTATION));
    }

    #[test]
    fn kabsch_dimension_mismatch() {
        assert!(kabsch_align(&PointSet::zeros(3), &PointSet::zeros(4)).is_err());
    }

    #[test]
    fn kabsch_degenerate_inputs_flagged() {
        let line = PointSet::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let other = PointSet::new(vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        let res = kabsch_align(&line, &other).unwrap();
        assert!(res.degenerate);
        assert!(res.transform.is_proper(tolerance::ROTATION));
        assert!(res.rmsd < 1e-10);

        let single = PointSet::new(vec![[1.0, 1.0, 1.0]]).unwrap();
        let target = PointSet::new(vec![[4.0, 0.0, 0.0]]).unwrap();
        let res = kabsch_align(&single, &target).unwrap();
        assert!(res.degenerate);
        assert!(res.rmsd < 1e-12);
    }

    #[test]
    fn kabsch_excludes_reflections() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = random_set(6, &mut rng);
            let mirror = PointSet::from_fn(6, |i, k| if k == 0 { -p[i][0] } else { p[i][k] });
            let res = kabsch_align(&mirror, &p).unwrap();
            assert!((res.transform.rotation.determinant() - 1.0).abs() < 1e-10);
            assert!(res.rmsd > 1e-3);
        }
    }

    #[test]
    fn kabsch_is_invariant_to_mobile_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_set(9, &mut rng);
        let b = random_set(9, &mut rng);
        let g = RigidTransform::random_rotation(&mut rng, Vector3::new(4.0, -1.0, 7.0));
        let r1 = kabsch_align(&a, &b).unwrap().rmsd;
        let r2 = kabsch_align(&g.apply(&a), &b).unwrap().rmsd;
        assert!((r1 - r2).abs() < 1e-10);
        assert!(r1 <= rmsd(&a, &b).unwrap());
    }
}
