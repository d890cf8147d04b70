//! Serial revolute chains: known geometry plus ten inertial parameters per link.
//!
//! Parameter layout per link (`theta[0..10]`, i.e. θ₁…θ₁₀):
//!
//! ```text
//! [ θ1   θ2   θ3   0   -θ4   θ5 ]
//! [ θ2   θ6   θ7   θ4   0   -θ8 ]
//! [ θ3   θ7   θ9  -θ5   θ8   0  ]
//! [ 0    θ4  -θ5   θ10  0    0  ]
//! [-θ4   0    θ8   0    θ10  0  ]
//! [ θ5  -θ8   0    0    0    θ10]
//! ```
//!
//! so θ₄ = m c_z, θ₅ = m c_y, θ₈ = m c_x, θ₁₀ = m, and the remaining six
//! entries are the rotational inertia about the joint origin.

use nalgebra::{DVector, Matrix3, Matrix6, Rotation3, SVector, Unit, Vector3};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::spatial::{check_symmetric3, skew, PluckerTransform, SpatialInertia, SYMMETRY_TOL};

/// Parameters per link.
pub const PARAMS_PER_LINK: usize = 10;

const UNIT_AXIS_TOL: f64 = 1e-9;

/// Geometry of one revolute joint and the link it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    name: String,
    joint_axis: Vector3<f64>,
    offset: Vector3<f64>,
}

impl LinkSpec {
    /// `axis` is the joint axis in the parent joint frame and must be unit
    /// length; `offset` locates this joint's origin in the parent joint frame.
    pub fn new(name: impl Into<String>, axis: Vector3<f64>, offset: Vector3<f64>) -> Result<Self> {
        let name = name.into();
        let norm = axis.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_AXIS_TOL {
            return Err(Error::Semantic {
                path: format!("link '{name}'.axis"),
                message: format!("joint axis must be a unit vector (|axis| = {norm})"),
            });
        }
        if !offset.iter().all(|x| x.is_finite()) {
            return Err(Error::Semantic {
                path: format!("link '{name}'.offset"),
                message: "offset must be finite".into(),
            });
        }
        Ok(Self {
            name,
            joint_axis: axis,
            offset,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_axis(&self) -> &Vector3<f64> {
        &self.joint_axis
    }

    pub fn offset(&self) -> &Vector3<f64> {
        &self.offset
    }
}

/// Ten inertial parameters of one link, expressed about its joint origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub theta: SVector<f64, PARAMS_PER_LINK>,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self::zero()
    }
}

impl LinkParams {
    pub fn new(theta: SVector<f64, PARAMS_PER_LINK>) -> Self {
        Self { theta }
    }

    pub fn zero() -> Self {
        Self {
            theta: SVector::zeros(),
        }
    }

    /// Indicator vector with `theta[j] = 1`.
    pub fn unit(j: usize) -> Self {
        let mut p = Self::zero();
        p.theta[j] = 1.0;
        p
    }

    /// Parameters of a link with mass `m`, centre of mass `c` and rotational
    /// inertia `ic` about the centre of mass.
    pub fn from_physical(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Result<Self> {
        if !m.is_finite() || m < 0.0 {
            return Err(Error::InvalidInput(format!("mass must be >= 0, got {m}")));
        }
        check_symmetric3(ic, SYMMETRY_TOL)?;
        let cx = skew(c);
        let rot = ic + m * cx * cx.transpose();
        let mc = m * c;
        let mut t = SVector::<f64, PARAMS_PER_LINK>::zeros();
        t[0] = rot[(0, 0)];
        t[1] = 0.5 * (rot[(0, 1)] + rot[(1, 0)]);
        t[2] = 0.5 * (rot[(0, 2)] + rot[(2, 0)]);
        t[3] = mc.z;
        t[4] = mc.y;
        t[5] = rot[(1, 1)];
        t[6] = 0.5 * (rot[(1, 2)] + rot[(2, 1)]);
        t[7] = mc.x;
        t[8] = rot[(2, 2)];
        t[9] = m;
        Ok(Self { theta: t })
    }

    pub fn mass(&self) -> f64 {
        self.theta[9]
    }

    /// `m c`
    pub fn first_moment(&self) -> Vector3<f64> {
        Vector3::new(self.theta[7], self.theta[4], self.theta[3])
    }

    /// Rotational inertia about the joint origin, `Ī + m c× c×ᵀ`.
    pub fn rotational_inertia(&self) -> Matrix3<f64> {
        let t = &self.theta;
        Matrix3::new(t[0], t[1], t[2], t[1], t[5], t[6], t[2], t[6], t[8])
    }

    /// Spatial inertia tensor with the fixed parameter placement.
    pub fn to_tensor(&self) -> SpatialInertia {
        let t = &self.theta;
        #[rustfmt::skip]
        let m = Matrix6::new(
            t[0],  t[1],  t[2],  0.0,  -t[3],  t[4],
            t[1],  t[5],  t[6],  t[3],  0.0,  -t[7],
            t[2],  t[6],  t[8], -t[4],  t[7],  0.0,
            0.0,   t[3], -t[4],  t[9],  0.0,   0.0,
           -t[3],  0.0,   t[7],  0.0,   t[9],  0.0,
            t[4], -t[7],  0.0,   0.0,   0.0,   t[9],
        );
        SpatialInertia::from_matrix_unchecked(m)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }
}

pub fn params_to_tensor(p: &LinkParams) -> SpatialInertia {
    p.to_tensor()
}

pub fn params_from_physical(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Result<LinkParams> {
    LinkParams::from_physical(m, c, ic)
}

/// Stacked parameters of a `b`-link chain, link-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    values: DVector<f64>,
}

impl ThetaVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(PARAMS_PER_LINK) {
            return Err(Error::InvalidInput(format!(
                "parameter vector length {} is not a positive multiple of {PARAMS_PER_LINK}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(links: usize) -> Self {
        Self {
            values: DVector::zeros(links * PARAMS_PER_LINK),
        }
    }

    pub fn from_links(links: &[LinkParams]) -> Self {
        let values = DVector::from_iterator(
            links.len() * PARAMS_PER_LINK,
            links.iter().flat_map(|p| p.theta.iter().copied()),
        );
        Self { values }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_links(&self) -> usize {
        self.values.len() / PARAMS_PER_LINK
    }

    pub fn link(&self, i: usize) -> LinkParams {
        LinkParams::new(
            self.values
                .fixed_rows::<PARAMS_PER_LINK>(i * PARAMS_PER_LINK)
                .into_owned(),
        )
    }

    pub fn links(&self) -> Vec<LinkParams> {
        (0..self.num_links()).map(|i| self.link(i)).collect()
    }
}

/// Column index of parameter `param` (0-based θ index) of link `link`.
pub fn column_index(link: usize, param: usize) -> usize {
    link * PARAMS_PER_LINK + param
}

/// Fixed-base serial revolute chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    gravity: Vector3<f64>,
    vertical: Vector3<f64>,
    links: Vec<LinkSpec>,
    params: Vec<LinkParams>,
}

impl ChainModel {
    /// Builds a chain. `gravity` must be zero or point along `-vertical`.
    pub fn new(
        gravity: Vector3<f64>,
        vertical: Vector3<f64>,
        links: Vec<LinkSpec>,
        params: Vec<LinkParams>,
    ) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::Semantic {
                path: "links".into(),
                message: "a chain needs at least one link".into(),
            });
        }
        if links.len() != params.len() {
            return Err(Error::Semantic {
                path: "params".into(),
                message: format!(
                    "{} links but {} parameter sets",
                    links.len(),
                    params.len()
                ),
            });
        }
        let vnorm = vertical.norm();
        if !vnorm.is_finite() || (vnorm - 1.0).abs() > UNIT_AXIS_TOL {
            return Err(Error::Semantic {
                path: "vertical".into(),
                message: format!("vertical axis must be a unit vector (|v| = {vnorm})"),
            });
        }
        if !gravity.iter().all(|x| x.is_finite()) {
            return Err(Error::Semantic {
                path: "gravity".into(),
                message: "gravity must be finite".into(),
            });
        }
        let g = gravity.norm();
        if g > 0.0 && (gravity + g * vertical).norm() > 1e-9 * g.max(1.0) {
            return Err(Error::Semantic {
                path: "gravity".into(),
                message: "gravity must point along the negative vertical axis".into(),
            });
        }
        for (spec, p) in links.iter().zip(&params) {
            if !p.is_finite() {
                return Err(Error::Semantic {
                    path: format!("link '{}'.theta", spec.name()),
                    message: "parameters must be finite".into(),
                });
            }
        }
        Ok(Self {
            gravity,
            vertical,
            links,
            params,
        })
    }

    pub fn gravity(&self) -> &Vector3<f64> {
        &self.gravity
    }

    pub fn vertical(&self) -> &Vector3<f64> {
        &self.vertical
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn params(&self) -> &[LinkParams] {
        &self.params
    }

    /// Number of joints (= number of links).
    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn num_params(&self) -> usize {
        self.links.len() * PARAMS_PER_LINK
    }

    pub fn theta(&self) -> ThetaVector {
        ThetaVector::from_links(&self.params)
    }

    /// Same geometry, different inertial parameters.
    pub fn with_theta(&self, theta: &ThetaVector) -> Result<Self> {
        check_len("parameter vector", self.num_params(), theta.len())?;
        Ok(Self {
            params: theta.links(),
            ..self.clone()
        })
    }

    pub fn with_params(&self, params: Vec<LinkParams>) -> Result<Self> {
        Self::new(self.gravity, self.vertical, self.links.clone(), params)
    }

    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Result<Self> {
        Self::new(gravity, self.vertical, self.links.clone(), self.params.clone())
    }
}

/// Rotation by `q` about a unit `axis`.
pub(crate) fn axis_rotation(axis: &Vector3<f64>, q: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(*axis), q).into_inner()
}

/// Transform from the parent joint frame to this joint's frame at angle `q`:
/// shift to the joint origin, then rotate by `q` about the joint axis.
pub fn joint_transform(spec: &LinkSpec, q: f64) -> PluckerTransform {
    let r = axis_rotation(&spec.joint_axis, q);
    PluckerTransform::from_parts_unchecked(r.transpose(), spec.offset)
}

/// Physically consistent random parameters: mass in `[0.5, 3]` kg, centre of
/// mass within 0.2 m of the joint origin, principal inertias satisfying the
/// triangle inequality in a random orientation.
pub fn random_physical_params<R: Rng + ?Sized>(rng: &mut R) -> LinkParams {
    let m = rng.random_range(0.5..3.0);
    let c = Vector3::from_fn(|_, _| rng.random_range(-0.2..0.2));
    let a: f64 = rng.random_range(0.01..0.1);
    let b: f64 = rng.random_range(0.01..0.1);
    let cc: f64 = rng.random_range((a - b).abs() + 0.005..a + b);
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let rot = if axis.norm() > 1e-6 {
        axis_rotation(&axis.normalize(), rng.random_range(-3.0..3.0))
    } else {
        Matrix3::identity()
    };
    let ic = rot * Matrix3::from_diagonal(&Vector3::new(a, b, cc)) * rot.transpose();
    let ic = 0.5 * (ic + ic.transpose());
    LinkParams::from_physical(m, &c, &ic).expect("generated parameters are valid")
}

/// Random spatial chain with `n` links, unit axes in random directions and
/// offsets within 0.5 m per component. Gravity is `-9.81 z`.
pub fn random_chain<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ChainModel {
    let mut links = Vec::with_capacity(n);
    let mut params = Vec::with_capacity(n);
    for i in 0..n {
        let axis = loop {
            let a = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            if a.norm() > 0.2 {
                break a.normalize();
            }
        };
        let offset = if i == 0 {
            Vector3::zeros()
        } else {
            Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5))
        };
        links.push(LinkSpec::new(format!("l{}", i + 1), axis, offset).expect("unit axis"));
        params.push(random_physical_params(rng));
    }
    ChainModel::new(Vector3::new(0.0, 0.0, -9.81), Vector3::z(), links, params)
        .expect("generated chain is valid")
}
