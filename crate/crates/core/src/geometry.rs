//! Planar and spherical sites, and the space operators used by the
//! recursions: translations of the plane and rotations of the sphere.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Tolerance on `‖v‖ = 1` for sphere sites and rotation axes.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// A point of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarSite {
    pub x1: f64,
    pub x2: f64,
}

impl PlanarSite {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        if !(x1.is_finite() && x2.is_finite()) {
            return Err(Error::validation(
                "planar site",
                format!("coordinates must be finite, got ({x1}, {x2})"),
            ));
        }
        Ok(PlanarSite { x1, x2 })
    }

    /// `self − lag·τ`.
    #[inline]
    pub fn translate(self, lag: f64, tau: [f64; 2]) -> PlanarSite {
        translate(self, lag, tau)
    }

    #[inline]
    pub fn diff(self, other: PlanarSite) -> [f64; 2] {
        [self.x1 - other.x1, self.x2 - other.x2]
    }
}

/// Returns `x − lag·τ`.
#[inline]
pub fn translate(x: PlanarSite, lag: f64, tau: [f64; 2]) -> PlanarSite {
    PlanarSite {
        x1: x.x1 - lag * tau[0],
        x2: x.x2 - lag * tau[1],
    }
}

/// A point of the unit sphere of ℝ³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereSite {
    v: [f64; 3],
}

impl SphereSite {
    /// Accepts `v` only if it already has unit norm; see [`SphereSite::normalized`]
    /// for the explicit renormalizing constructor.
    pub fn new(v: [f64; 3]) -> Result<Self> {
        check_unit("sphere site", v)?;
        Ok(SphereSite { v })
    }

    /// Projects a non-zero finite vector onto the sphere.
    pub fn normalized(v: [f64; 3]) -> Result<Self> {
        let n = norm3(v);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::validation(
                "sphere site",
                format!("cannot normalize {v:?}"),
            ));
        }
        Ok(SphereSite {
            v: [v[0] / n, v[1] / n, v[2] / n],
        })
    }

    /// From colatitude and longitude in radians.
    pub fn from_angles(colatitude: f64, longitude: f64) -> Result<Self> {
        let (st, ct) = colatitude.sin_cos();
        let (sp, cp) = longitude.sin_cos();
        Self::normalized([st * cp, st * sp, ct])
    }

    #[inline]
    pub fn vector(&self) -> [f64; 3] {
        self.v
    }

    #[inline]
    pub fn dot(&self, other: &SphereSite) -> f64 {
        self.v[0] * other.v[0] + self.v[1] * other.v[1] + self.v[2] * other.v[2]
    }

    /// Great-circle angle to `other`, in radians.
    pub fn angle_to(&self, other: &SphereSite) -> f64 {
        // atan2 form keeps precision for nearly (anti)parallel pairs.
        let a = Vector3::from(self.v);
        let b = Vector3::from(other.v);
        a.cross(&b).norm().atan2(a.dot(&b))
    }

    /// Applies an orthogonal matrix. The result inherits the unit norm up
    /// to round-off, so no check is repeated.
    pub fn rotate(&self, m: &Matrix3<f64>) -> SphereSite {
        let r = m * Vector3::from(self.v);
        SphereSite { v: [r[0], r[1], r[2]] }
    }
}

/// Rotation by `angle` radians per unit time step about the unit `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSpec {
    angle: f64,
    axis: [f64; 3],
}

impl RotationSpec {
    pub fn new(angle: f64, axis: [f64; 3]) -> Result<Self> {
        if !angle.is_finite() {
            return Err(Error::validation("rotation angle", format!("{angle}")));
        }
        check_unit("rotation axis", axis)?;
        Ok(RotationSpec { angle, axis })
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }
}

/// `R = cos φ I₃ + sin φ [u]ₓ + (1 − cos φ) u uᵀ` with `φ = angle · steps`.
pub fn rotation_matrix(spec: &RotationSpec, steps: f64) -> Matrix3<f64> {
    let phi = spec.angle * steps;
    let (s, c) = phi.sin_cos();
    let u = Vector3::from(spec.axis);
    let cross = Matrix3::new(0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0);
    Matrix3::identity() * c + cross * s + (u * u.transpose()) * (1.0 - c)
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn check_unit(what: &'static str, v: [f64; 3]) -> Result<()> {
    let n = norm3(v);
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::validation(
            what,
            format!("expected a unit vector, got {v:?} with norm {n}"),
        ));
    }
    Ok(())
}

/// Sites that the simulators can deduplicate and carry through a recursion.
pub trait Site: Copy + Send + Sync + std::fmt::Debug {
    /// Bit pattern identifying the site exactly.
    fn key(&self) -> [u64; 3];
}

impl Site for PlanarSite {
    fn key(&self) -> [u64; 3] {
        // +0.0 and -0.0 are the same point
        [(self.x1 + 0.0).to_bits(), (self.x2 + 0.0).to_bits(), 0]
    }
}

impl Site for SphereSite {
    fn key(&self) -> [u64; 3] {
        [
            (self.v[0] + 0.0).to_bits(),
            (self.v[1] + 0.0).to_bits(),
            (self.v[2] + 0.0).to_bits(),
        ]
    }
}

/// Space operator applied `steps` times: the site read at the previous date.
pub trait SiteShift<S>: Send + Sync {
    fn shift(&self, site: &S, steps: i64) -> S;
}

/// Planar drift vector τ; `shift(x, k) = x − kτ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Translation(pub [f64; 2]);

impl SiteShift<PlanarSite> for Translation {
    fn shift(&self, site: &PlanarSite, steps: i64) -> PlanarSite {
        translate(*site, steps as f64, self.0)
    }
}

impl SiteShift<SphereSite> for RotationSpec {
    fn shift(&self, site: &SphereSite, steps: i64) -> SphereSite {
        if steps == 0 {
            return *site;
        }
        site.rotate(&rotation_matrix(self, steps as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn zero_steps_is_identity() {
        let spec = RotationSpec::new(1.234, [0.0, 0.6, 0.8]).unwrap();
        assert!(max_abs_diff(&rotation_matrix(&spec, 0.0), &Matrix3::identity()) < 1e-15);
    }

    #[test]
    fn quarter_turn_about_z() {
        let spec = RotationSpec::new(PI / 2.0, [0.0, 0.0, 1.0]).unwrap();
        let x = SphereSite::new([1.0, 0.0, 0.0]).unwrap();
        let y = x.rotate(&rotation_matrix(&spec, 1.0)).vector();
        assert!((y[0]).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15 && y[2].abs() < 1e-15);
    }

    #[test]
    fn two_steps_equal_double_angle() {
        let a = RotationSpec::new(0.3, [0.0, 0.0, 1.0]).unwrap();
        let b = RotationSpec::new(0.6, [0.0, 0.0, 1.0]).unwrap();
        let composed = rotation_matrix(&a, 1.0) * rotation_matrix(&a, 1.0);
        assert!(max_abs_diff(&composed, &rotation_matrix(&a, 2.0)) < 1e-15);
        assert!(max_abs_diff(&rotation_matrix(&a, 2.0), &rotation_matrix(&b, 1.0)) < 1e-15);
    }

    #[test]
    fn full_turn_returns_identity() {
        for k in 1..=12 {
            let spec = RotationSpec::new(2.0 * PI / k as f64, [0.48, 0.6, 0.64]).unwrap();
            let step = rotation_matrix(&spec, 1.0);
            let mut acc = Matrix3::identity();
            for _ in 0..k {
                acc = step * acc;
            }
            assert!(max_abs_diff(&acc, &Matrix3::identity()) < 1e-10, "k={k}");
        }
    }

    #[test]
    fn non_unit_axis_rejected() {
        assert!(RotationSpec::new(0.1, [1.0, 1.0, 0.0]).is_err());
        assert!(RotationSpec::new(0.1, [1.0 + 1e-9, 0.0, 0.0]).is_err());
        assert!(SphereSite::new([0.0, 0.0, 2.0]).is_err());
        assert!(SphereSite::normalized([0.0, 0.0, 2.0]).is_ok());
        assert!(SphereSite::normalized([0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn translate_examples() {
        let o = PlanarSite::new(0.0, 0.0).unwrap();
        assert_eq!(translate(o, 1.0, [-1.0, -1.0]), PlanarSite { x1: 1.0, x2: 1.0 });
        let p = PlanarSite::new(2.0, 3.0).unwrap();
        assert_eq!(translate(p, 0.0, [0.7, -4.0]), p);
        let q = PlanarSite::new(5.0, 5.0).unwrap();
        assert_eq!(translate(q, 3.0, [-1.0, -1.0]), PlanarSite { x1: 8.0, x2: 8.0 });
    }

    #[test]
    fn planar_site_rejects_nan() {
        assert!(PlanarSite::new(f64::NAN, 0.0).is_err());
        assert!(PlanarSite::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn angle_between_sites() {
        let a = SphereSite::new([1.0, 0.0, 0.0]).unwrap();
        let b = SphereSite::new([-1.0, 0.0, 0.0]).unwrap();
        let c = SphereSite::new([0.0, 1.0, 0.0]).unwrap();
        assert!((a.angle_to(&b) - PI).abs() < 1e-15);
        assert!((a.angle_to(&c) - PI / 2.0).abs() < 1e-15);
        assert_eq!(a.angle_to(&a), 0.0);
    }

    fn unit_axis() -> impl Strategy<Value = [f64; 3]> {
        (0.0..PI, -PI..PI).prop_map(|(t, p)| SphereSite::from_angles(t, p).unwrap().vector())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotation_is_orthogonal(theta in -10.0..10.0f64, axis in unit_axis(), steps in -20.0..20.0f64) {
            let spec = RotationSpec::new(theta, axis).unwrap();
            let r = rotation_matrix(&spec, steps);
            prop_assert!(max_abs_diff(&(r.transpose() * r), &Matrix3::identity()) < 1e-10);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-10);
            let inv = rotation_matrix(&spec, -steps);
            prop_assert!(max_abs_diff(&(r * inv), &Matrix3::identity()) < 1e-10);
        }

        #[test]
        fn rotation_keeps_sites_on_sphere(theta in -10.0..10.0f64, axis in unit_axis(), v in unit_axis(), steps in -20i64..20) {
            let spec = RotationSpec::new(theta, axis).unwrap();
            let x = SphereSite::new(v).unwrap();
            let y = spec.shift(&x, steps).vector();
            prop_assert!((norm3(y) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn translate_is_group_action(x1 in -100.0..100.0f64, x2 in -100.0..100.0f64,
                                     l1 in -10.0..10.0f64, l2 in -10.0..10.0f64,
                                     t1 in -3.0..3.0f64, t2 in -3.0..3.0f64) {
            let x = PlanarSite::new(x1, x2).unwrap();
            let tau = [t1, t2];
            let once = translate(x, l1 + l2, tau);
            let twice = translate(translate(x, l1, tau), l2, tau);
            prop_assert!((once.x1 - twice.x1).abs() < 1e-9 && (once.x2 - twice.x2).abs() < 1e-9);
            let back = translate(translate(x, l1, tau), -l1, tau);
            prop_assert!((back.x1 - x.x1).abs() < 1e-12 && (back.x2 - x.x2).abs() < 1e-12);
        }
    }
}
