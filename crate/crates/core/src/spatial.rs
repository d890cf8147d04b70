//! Spatial (6-D Plücker) vector algebra.
//!
//! Every 6-vector is ordered angular-first: motions are `[ω; v]` and forces
//! are `[τ; f]`. A [`PluckerTransform`] stores the rotation `E` and the
//! translation `r` of the target origin expressed in source coordinates, and
//! acts on motions as
//!
//! ```text
//! [ E       0 ]
//! [ -E r×   E ]
//! ```
//!
//! i.e. the origin is shifted first and the result is then re-expressed in the
//! rotated basis.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};

/// Default tolerance for `R Rᵀ = 1` and `det R = 1`.
pub const ORTHONORMAL_TOL: f64 = 1e-12;
/// Default tolerance for symmetry checks on inertia matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
#[inline]
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Spatial velocity (or acceleration) `[ω; v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialMotion {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

/// Spatial force `[τ; f]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialForce {
    pub moment: Vector3<f64>,
    pub force: Vector3<f64>,
}

impl SpatialMotion {
    #[inline]
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::default()
    }

    #[inline]
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            angular: v.fixed_rows::<3>(0).into_owned(),
            linear: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    #[inline]
    pub fn to_vector(&self) -> Vector6<f64> {
        let (w, v) = (&self.angular, &self.linear);
        Vector6::new(w.x, w.y, w.z, v.x, v.y, v.z)
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.angular * s, self.linear * s)
    }

    /// Motion cross product `self × m`.
    #[inline]
    pub fn cross_motion(&self, m: &SpatialMotion) -> SpatialMotion {
        SpatialMotion {
            angular: self.angular.cross(&m.angular),
            linear: self.angular.cross(&m.linear) + self.linear.cross(&m.angular),
        }
    }

    /// Force cross product `self ×* f`.
    #[inline]
    pub fn cross_force(&self, f: &SpatialForce) -> SpatialForce {
        SpatialForce {
            moment: self.angular.cross(&f.moment) + self.linear.cross(&f.force),
            force: self.angular.cross(&f.force),
        }
    }

    /// Power pairing `fᵀ v`.
    #[inline]
    pub fn dot(&self, f: &SpatialForce) -> f64 {
        self.angular.dot(&f.moment) + self.linear.dot(&f.force)
    }

    pub fn is_finite(&self) -> bool {
        self.angular.iter().chain(self.linear.iter()).all(|x| x.is_finite())
    }
}

impl std::ops::Add for SpatialMotion {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl std::ops::Sub for SpatialMotion {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl SpatialForce {
    #[inline]
    pub fn new(moment: Vector3<f64>, force: Vector3<f64>) -> Self {
        Self { moment, force }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::default()
    }

    #[inline]
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            moment: v.fixed_rows::<3>(0).into_owned(),
            force: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    #[inline]
    pub fn to_vector(&self) -> Vector6<f64> {
        let (n, f) = (&self.moment, &self.force);
        Vector6::new(n.x, n.y, n.z, f.x, f.y, f.z)
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.moment * s, self.force * s)
    }

    pub fn is_finite(&self) -> bool {
        self.moment.iter().chain(self.force.iter()).all(|x| x.is_finite())
    }
}

impl std::ops::Add for SpatialForce {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.moment + rhs.moment, self.force + rhs.force)
    }
}

impl std::ops::Sub for SpatialForce {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.moment - rhs.moment, self.force - rhs.force)
    }
}

/// Coordinate transform for spatial vectors: translate by `translation`, then
/// rotate by `rotation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PluckerTransform {
    /// Builds a transform, checking that `rotation` is a proper rotation
    /// within [`ORTHONORMAL_TOL`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        Self::with_tolerance(rotation, translation, ORTHONORMAL_TOL)
    }

    pub fn with_tolerance(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        tol: f64,
    ) -> Result<Self> {
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("translation must be finite".into()));
        }
        let ortho_err = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if !(ortho_err <= tol) {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (max |R Rᵀ - 1| = {ortho_err:.3e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= tol) {
            return Err(Error::InvalidInput(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn translation_only(r: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), r)
    }

    pub fn rotation_only(rotation: Matrix3<f64>) -> Result<Self> {
        Self::new(rotation, Vector3::zeros())
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `[E ω; E (v - r × ω)]`
    #[inline]
    pub fn apply_motion(&self, m: &SpatialMotion) -> SpatialMotion {
        let e = &self.rotation;
        SpatialMotion {
            angular: e * m.angular,
            linear: e * (m.linear - self.translation.cross(&m.angular)),
        }
    }

    /// `[E (τ - r × f); E f]`
    #[inline]
    pub fn apply_force(&self, f: &SpatialForce) -> SpatialForce {
        let e = &self.rotation;
        SpatialForce {
            moment: e * (f.moment - self.translation.cross(&f.force)),
            force: e * f.force,
        }
    }

    /// Applies `Xᵀ` to a force, which maps forces from the target frame back
    /// to the source frame.
    #[inline]
    pub fn apply_transpose_force(&self, f: &SpatialForce) -> SpatialForce {
        let et = self.rotation.transpose();
        let force = et * f.force;
        SpatialForce {
            moment: et * f.moment + self.translation.cross(&force),
            force,
        }
    }

    /// Applies `X⁻¹` to a motion.
    #[inline]
    pub fn apply_inverse_motion(&self, m: &SpatialMotion) -> SpatialMotion {
        let et = self.rotation.transpose();
        let angular = et * m.angular;
        SpatialMotion {
            angular,
            linear: et * m.linear + self.translation.cross(&angular),
        }
    }

    /// `compose(a, b)` applies `b` first, then `a`.
    pub fn compose(&self, first: &PluckerTransform) -> PluckerTransform {
        PluckerTransform {
            rotation: self.rotation * first.rotation,
            translation: first.translation + first.rotation.transpose() * self.translation,
        }
    }

    pub fn inverse(&self) -> PluckerTransform {
        PluckerTransform {
            rotation: self.rotation.transpose(),
            translation: -(self.rotation * self.translation),
        }
    }

    /// Dense 6×6 motion-transform matrix.
    pub fn motion_matrix(&self) -> Matrix6<f64> {
        let e = self.rotation;
        let lower = -(e * skew(&self.translation));
        let mut x = Matrix6::zeros();
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 0).copy_from(&lower);
        x
    }

    /// Dense 6×6 force-transform matrix.
    pub fn force_matrix(&self) -> Matrix6<f64> {
        let e = self.rotation;
        let upper = -(e * skew(&self.translation));
        let mut x = Matrix6::zeros();
        x.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
        x.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
        x.fixed_view_mut::<3, 3>(0, 3).copy_from(&upper);
        x
    }
}

/// Free-function forms matching the operation names used across the crate.
pub fn motion_transform(x: &PluckerTransform, v: &SpatialMotion) -> SpatialMotion {
    x.apply_motion(v)
}

pub fn force_transform(x: &PluckerTransform, f: &SpatialForce) -> SpatialForce {
    x.apply_force(f)
}

pub fn compose(x1: &PluckerTransform, x2: &PluckerTransform) -> PluckerTransform {
    x1.compose(x2)
}

/// Symmetric 6×6 spatial inertia about a body-fixed origin.
///
/// Layout is `[Ī + m c× c×ᵀ, m c×; m c×ᵀ, m 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialInertia {
    matrix: Matrix6<f64>,
}

impl SpatialInertia {
    /// Inertia from mass `m`, centre of mass `c` and rotational inertia
    /// `ic` about the centre of mass.
    pub fn from_params(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Result<Self> {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::InvalidInput(format!("mass must be >= 0, got {m}")));
        }
        check_symmetric3(ic, SYMMETRY_TOL)?;
        let cx = skew(c);
        let upper_left = ic + m * cx * cx.transpose();
        let mut matrix = Matrix6::zeros();
        matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&upper_left);
        matrix.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
        matrix
            .fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(m * cx.transpose()));
        matrix
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(m * Matrix3::identity()));
        Ok(Self { matrix })
    }

    /// Wraps a 6×6 matrix after checking the block structure.
    pub fn try_from_matrix(matrix: Matrix6<f64>) -> Result<Self> {
        let tol = SYMMETRY_TOL;
        let asym = (matrix - matrix.transpose()).amax();
        if !(asym <= tol) {
            return Err(Error::InvalidInput(format!(
                "spatial inertia is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let m = matrix[(3, 3)];
        let lower_right = matrix.fixed_view::<3, 3>(3, 3) - m * Matrix3::identity();
        if lower_right.amax() > tol {
            return Err(Error::InvalidInput(
                "lower-right block must be m times identity".into(),
            ));
        }
        let coupling = matrix.fixed_view::<3, 3>(0, 3).into_owned();
        if (coupling + coupling.transpose()).amax() > tol {
            return Err(Error::InvalidInput(
                "coupling block must be skew-symmetric".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: Matrix6<f64>) -> Self {
        Self { matrix }
    }

    pub fn zero() -> Self {
        Self {
            matrix: Matrix6::zeros(),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.matrix
    }

    pub fn mass(&self) -> f64 {
        self.matrix[(3, 3)]
    }

    /// First moment `m c`, read from the coupling block.
    pub fn first_moment(&self) -> Vector3<f64> {
        let k = &self.matrix;
        Vector3::new(k[(2, 4)], k[(0, 5)], k[(1, 3)])
    }

    /// `I v`
    #[inline]
    pub fn mul_motion(&self, v: &SpatialMotion) -> SpatialForce {
        SpatialForce::from_vector(&(self.matrix * v.to_vector()))
    }

    /// Re-expresses the inertia in the coordinates reached by `x`:
    /// `X⁻ᵀ I X⁻¹`.
    pub fn transform(&self, x: &PluckerTransform) -> SpatialInertia {
        let xf = x.force_matrix();
        let xinv = x.inverse().motion_matrix();
        let m = xf * self.matrix * xinv;
        SpatialInertia {
            matrix: 0.5 * (m + m.transpose()),
        }
    }
}

impl std::ops::Add for SpatialInertia {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            matrix: self.matrix + rhs.matrix,
        }
    }
}

pub fn spatial_inertia_from_params(
    m: f64,
    c: &Vector3<f64>,
    ic: &Matrix3<f64>,
) -> Result<SpatialInertia> {
    SpatialInertia::from_params(m, c, ic)
}

/// Spatial momentum `ĥ = I v̂`.
pub fn momentum(inertia: &SpatialInertia, v: &SpatialMotion) -> SpatialForce {
    inertia.mul_motion(v)
}

/// Kinetic energy `½ v̂ᵀ I v̂`.
pub fn kinetic_energy(inertia: &SpatialInertia, v: &SpatialMotion) -> f64 {
    let vv = v.to_vector();
    0.5 * vv.dot(&(inertia.matrix * vv))
}

pub(crate) fn check_symmetric3(m: &Matrix3<f64>, tol: f64) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if m.iter().all(|x| x.is_finite()) && asym <= tol {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "matrix is not symmetric (max asymmetry {asym:.3e})"
        )))
    }
}
