//! Joint-space dynamics `D(q) q̈ + C(q, q̇) q̇ + G(q) = u` of a [`ChainModel`].
//!
//! `D` is assembled from per-link body Jacobians and spatial inertias, `C` from
//! Christoffel symbols of `D` (central differences in each joint coordinate),
//! and `G` from the gradient of the potential energy. Inverse dynamics runs a
//! spatial Newton-Euler recursion whose backward pass is linear in the
//! inertial parameters; the regressor reuses that split.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{check_len, Error, Result};
use crate::model::{axis_rotation, joint_transform, ChainModel};
use crate::spatial::{PluckerTransform, SpatialForce, SpatialMotion};

/// Central-difference step for the Christoffel symbols, in radians.
pub const DEFAULT_FD_STEP: f64 = 1e-3;
/// Largest mass-matrix condition number accepted by [`forward_dynamics`].
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

/// Joint positions, velocities and accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub ddq: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, dq: DVector<f64>, ddq: DVector<f64>) -> Result<Self> {
        check_len("joint velocity", q.len(), dq.len())?;
        check_len("joint acceleration", q.len(), ddq.len())?;
        if !q.iter().chain(dq.iter()).chain(ddq.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("joint state must be finite".into()));
        }
        Ok(Self { q, dq, ddq })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            dq: DVector::zeros(n),
            ddq: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// `D`, `C` and `G` evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DVector<f64>,
}

/// Pose of a joint frame in base coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPose {
    /// Orientation of the link frame (link → base).
    pub rotation: Matrix3<f64>,
    /// Joint origin.
    pub origin: Vector3<f64>,
    /// Joint axis in base coordinates.
    pub axis: Vector3<f64>,
}

pub fn forward_kinematics(model: &ChainModel, q: &DVector<f64>) -> Result<Vec<LinkPose>> {
    check_len("joint position", model.dof(), q.len())?;
    let mut rot = Matrix3::identity();
    let mut origin = Vector3::zeros();
    let mut poses = Vec::with_capacity(model.dof());
    for (spec, &qi) in model.links().iter().zip(q.iter()) {
        origin += rot * spec.offset();
        let axis = rot * spec.joint_axis();
        rot *= axis_rotation(spec.joint_axis(), qi);
        poses.push(LinkPose {
            rotation: rot,
            origin,
            axis,
        });
    }
    Ok(poses)
}

/// Motion subspace of a revolute joint, in its own frame.
#[inline]
pub(crate) fn joint_subspace(axis: &Vector3<f64>) -> SpatialMotion {
    SpatialMotion::new(*axis, Vector3::zeros())
}

/// One link of the parameter-independent forward sweep: its transform from
/// the parent, velocity and acceleration (with gravity folded in as a base
/// acceleration).
#[derive(Clone, Copy)]
pub(crate) struct SweepLink {
    pub xform: PluckerTransform,
    pub vel: SpatialMotion,
    pub acc: SpatialMotion,
}

pub(crate) fn forward_sweep(
    model: &ChainModel,
    state: &JointState,
    gravity: bool,
) -> Vec<SweepLink> {
    let mut sweep = Vec::with_capacity(model.dof());
    let mut v = SpatialMotion::zero();
    let mut a = if gravity {
        SpatialMotion::new(Vector3::zeros(), -model.gravity())
    } else {
        SpatialMotion::zero()
    };
    for (i, spec) in model.links().iter().enumerate() {
        let x = joint_transform(spec, state.q[i]);
        let s = joint_subspace(spec.joint_axis());
        let vj = s.scale(state.dq[i]);
        v = x.apply_motion(&v) + vj;
        a = x.apply_motion(&a) + s.scale(state.ddq[i]) + v.cross_motion(&vj);
        sweep.push(SweepLink {
            xform: x,
            vel: v,
            acc: a,
        });
    }
    sweep
}

/// Inverse dynamics `K(q, q̇, q̈) = D q̈ + C q̇ + G`, the joint torque required
/// to produce `state.ddq`.
pub fn inverse_dynamics(model: &ChainModel, state: &JointState) -> Result<DVector<f64>> {
    check_len("joint state", model.dof(), state.dof())?;
    Ok(inverse_dynamics_unchecked(model, state, true))
}

pub(crate) fn inverse_dynamics_unchecked(
    model: &ChainModel,
    state: &JointState,
    gravity: bool,
) -> DVector<f64> {
    let n = model.dof();
    let sweep = forward_sweep(model, state, gravity);
    let mut forces: Vec<SpatialForce> = model
        .params()
        .iter()
        .zip(&sweep)
        .map(|(p, l)| {
            let inertia = p.to_tensor();
            inertia.mul_motion(&l.acc) + l.vel.cross_force(&inertia.mul_motion(&l.vel))
        })
        .collect();
    let mut tau = DVector::zeros(n);
    for i in (0..n).rev() {
        tau[i] = joint_subspace(model.links()[i].joint_axis()).dot(&forces[i]);
        if i > 0 {
            let back = sweep[i].xform.apply_transpose_force(&forces[i]);
            forces[i - 1] = forces[i - 1] + back;
        }
    }
    tau
}

/// Body Jacobian of link `i` (0-based): `v̂_{O_i} = J_i q̇`, expressed in the
/// link frame. Columns after `i` are zero.
pub fn body_jacobian(model: &ChainModel, q: &DVector<f64>, i: usize) -> Result<DMatrix<f64>> {
    check_len("joint position", model.dof(), q.len())?;
    if i >= model.dof() {
        return Err(Error::IndexOutOfRange {
            index: i,
            links: model.dof(),
        });
    }
    let xforms: Vec<_> = model
        .links()
        .iter()
        .zip(q.iter())
        .map(|(s, &qi)| joint_transform(s, qi))
        .collect();
    Ok(jacobian_from_xforms(model, &xforms, i))
}

fn jacobian_from_xforms(model: &ChainModel, xforms: &[PluckerTransform], i: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(6, model.dof());
    // to_link maps motions from frame j into frame i.
    let mut to_link = PluckerTransform::identity();
    for j in (0..=i).rev() {
        let col = to_link
            .apply_motion(&joint_subspace(model.links()[j].joint_axis()))
            .to_vector();
        jac.column_mut(j).copy_from(&col);
        to_link = to_link.compose(&xforms[j]);
    }
    jac
}

/// Joint-space inertia `D(q) = Σ J_iᵀ I_{O_i} J_i`.
pub fn mass_matrix(model: &ChainModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_len("joint position", model.dof(), q.len())?;
    Ok(mass_matrix_unchecked(model, q))
}

fn mass_matrix_unchecked(model: &ChainModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = model.dof();
    let xforms: Vec<_> = model
        .links()
        .iter()
        .zip(q.iter())
        .map(|(s, &qi)| joint_transform(s, qi))
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for (i, p) in model.params().iter().enumerate() {
        let jac = jacobian_from_xforms(model, &xforms, i);
        let cols = jac.columns(0, i + 1);
        let inertia = DMatrix::from_column_slice(6, 6, p.to_tensor().matrix().as_slice());
        let block = cols.transpose() * inertia * cols;
        let mut view = d.view_mut((0, 0), (i + 1, i + 1));
        view += block;
    }
    0.5 * (&d + d.transpose())
}

/// Coriolis/centrifugal matrix from Christoffel symbols of `D`, using the
/// default finite-difference step.
pub fn coriolis_matrix(
    model: &ChainModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    coriolis_matrix_with_step(model, q, dq, DEFAULT_FD_STEP)
}

/// `C_ij = Σ_k Γ_ijk q̇_k`, `Γ_ijk = ½(∂D_ij/∂q_k + ∂D_ik/∂q_j − ∂D_kj/∂q_i)`.
pub fn coriolis_matrix_with_step(
    model: &ChainModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = model.dof();
    check_len("joint position", n, q.len())?;
    check_len("joint velocity", n, dq.len())?;
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let grads = mass_matrix_gradient(model, q, step);
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                let gamma = 0.5 * (grads[k][(i, j)] + grads[j][(i, k)] - grads[i][(k, j)]);
                acc += gamma * dq[k];
            }
            c[(i, j)] = acc;
        }
    }
    Ok(c)
}

/// `∂D/∂q_k` by fourth-order central differences, one matrix per coordinate.
pub fn mass_matrix_gradient(model: &ChainModel, q: &DVector<f64>, step: f64) -> Vec<DMatrix<f64>> {
    let at = |k: usize, s: f64| {
        let mut x = q.clone();
        x[k] += s;
        mass_matrix_unchecked(model, &x)
    };
    (0..model.dof())
        .map(|k| {
            let near = at(k, step) - at(k, -step);
            let far = at(k, 2.0 * step) - at(k, -2.0 * step);
            (near * 8.0 - far) / (12.0 * step)
        })
        .collect()
}

/// `G(q) = ∂V/∂q`, from the chain geometry. Linear in link masses and first
/// moments.
pub fn gravity_vector(model: &ChainModel, q: &DVector<f64>) -> Result<DVector<f64>> {
    let poses = forward_kinematics(model, q)?;
    let n = model.dof();
    let g = model.gravity();
    let mut g_vec = DVector::zeros(n);
    // Suffix sums of m_i p_i + R_i (m c)_i and of m_i.
    let mut moment = Vector3::zeros();
    let mut mass = 0.0;
    for j in (0..n).rev() {
        let p = &model.params()[j];
        let pose = &poses[j];
        moment += p.mass() * pose.origin + pose.rotation * p.first_moment();
        mass += p.mass();
        let lever = moment - mass * pose.origin;
        g_vec[j] = -g.dot(&pose.axis.cross(&lever));
    }
    Ok(g_vec)
}

pub fn dynamics_terms(
    model: &ChainModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
) -> Result<DynamicsTerms> {
    Ok(DynamicsTerms {
        d: mass_matrix(model, q)?,
        c: coriolis_matrix(model, q, dq)?,
        g: gravity_vector(model, q)?,
    })
}

/// `q̈ = D⁻¹ (u − C q̇ − G)`.
pub fn forward_dynamics(
    model: &ChainModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    forward_dynamics_with_bound(model, q, dq, u, DEFAULT_MAX_CONDITION)
}

pub fn forward_dynamics_with_bound(
    model: &ChainModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    u: &DVector<f64>,
    max_condition: f64,
) -> Result<DVector<f64>> {
    let n = model.dof();
    check_len("joint position", n, q.len())?;
    check_len("joint velocity", n, dq.len())?;
    check_len("joint torque", n, u.len())?;
    let d = mass_matrix_unchecked(model, q);
    let sv = d.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::SingularMassMatrix { condition });
    }
    let bias = inverse_dynamics_unchecked(
        model,
        &JointState {
            q: q.clone(),
            dq: dq.clone(),
            ddq: DVector::zeros(n),
        },
        true,
    );
    let rhs = u - bias;
    d.lu()
        .solve(&rhs)
        .ok_or(Error::SingularMassMatrix { condition })
}

/// Kinetic energy `Σ ½ v̂_iᵀ I_{O_i} v̂_i`.
pub fn kinetic_energy(model: &ChainModel, q: &DVector<f64>, dq: &DVector<f64>) -> Result<f64> {
    let n = model.dof();
    check_len("joint position", n, q.len())?;
    check_len("joint velocity", n, dq.len())?;
    let state = JointState {
        q: q.clone(),
        dq: dq.clone(),
        ddq: DVector::zeros(n),
    };
    let sweep = forward_sweep(model, &state, false);
    Ok(model
        .params()
        .iter()
        .zip(&sweep)
        .map(|(p, l)| crate::spatial::kinetic_energy(&p.to_tensor(), &l.vel))
        .sum())
}

/// `V = Σ m_i g h_i(q)` with heights measured along the model's vertical axis.
pub fn potential_energy(model: &ChainModel, q: &DVector<f64>) -> Result<f64> {
    let poses = forward_kinematics(model, q)?;
    let g = model.gravity().norm();
    let up = model.vertical();
    Ok(model
        .params()
        .iter()
        .zip(&poses)
        .map(|(p, pose)| {
            g * up.dot(&(p.mass() * pose.origin + pose.rotation * p.first_moment()))
        })
        .sum())
}

pub fn total_energy(model: &ChainModel, q: &DVector<f64>, dq: &DVector<f64>) -> Result<f64> {
    Ok(kinetic_energy(model, q, dq)? + potential_energy(model, q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_chain, LinkParams, LinkSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> JointState {
        let mut v = || DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        JointState::new(v(), v(), v()).unwrap()
    }

    fn pendulum(l: f64, m: f64) -> ChainModel {
        let link = LinkSpec::new("p", Vector3::z(), Vector3::zeros()).unwrap();
        let p = LinkParams::from_physical(m, &Vector3::new(0.0, -l, 0.0), &Matrix3::zeros()).unwrap();
        ChainModel::new(Vector3::new(0.0, -9.81, 0.0), Vector3::y(), vec![link], vec![p]).unwrap()
    }

    #[test]
    fn single_link_jacobian_is_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_chain(&mut rng, 1);
        let j = body_jacobian(&model, &DVector::from_element(1, 0.8), 0).unwrap();
        let axis = model.links()[0].joint_axis();
        assert!((j.column(0).rows(0, 3) - axis).norm() < 1e-15);
        assert!(j.column(0).rows(3, 3).norm() < 1e-15);
        assert!(matches!(
            body_jacobian(&model, &DVector::zeros(1), 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn pendulum_gravity_torque() {
        let (l, m) = (0.4, 1.3);
        let model = pendulum(l, m);
        for q in [-1.0, 0.0, 0.3, 2.0] {
            let g = gravity_vector(&model, &DVector::from_element(1, q)).unwrap();
            assert!((g[0] - m * 9.81 * l * f64::sin(q)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gravity_and_horizontal_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_chain(&mut rng, 3).with_gravity(Vector3::zeros()).unwrap();
        let q = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        assert_eq!(gravity_vector(&model, &q).unwrap(), DVector::zeros(3));

        // Joints about z with gravity along -z: motion stays horizontal.
        let links = (0..3)
            .map(|i| LinkSpec::new(format!("l{i}"), Vector3::z(), Vector3::new(0.3, 0.0, 0.0)).unwrap())
            .collect();
        let params = (0..3).map(|_| crate::model::random_physical_params(&mut rng)).collect();
        let flat = ChainModel::new(Vector3::new(0.0, 0.0, -9.81), Vector3::z(), links, params).unwrap();
        for _ in 0..10 {
            let q = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            assert!(gravity_vector(&flat, &q).unwrap().amax() < 1e-12);
        }
    }

    #[test]
    fn gravity_matches_newton_euler_static_torque() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..6 {
            let model = random_chain(&mut rng, n);
            let q = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let g = gravity_vector(&model, &q).unwrap();
            let k = inverse_dynamics(&model, &JointState::at_rest(q)).unwrap();
            assert!((g - k).amax() < 1e-10);
        }
    }

    #[test]
    fn mass_matrix_energy_cross_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..6 {
            let model = random_chain(&mut rng, n);
            let s = random_state(&mut rng, n);
            let d = mass_matrix(&model, &s.q).unwrap();
            let t = kinetic_energy(&model, &s.q, &s.dq).unwrap();
            assert!((0.5 * s.dq.dot(&(&d * &s.dq)) - t).abs() < 1e-10);
            assert!((&d - d.transpose()).amax() < 1e-12);
            assert!(d.symmetric_eigenvalues().min() > -1e-9);
        }
        let zero = random_chain(&mut rng, 2).with_params(vec![LinkParams::zero(); 2]).unwrap();
        assert_eq!(mass_matrix(&zero, &DVector::zeros(2)).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn coriolis_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..5 {
            let model = random_chain(&mut rng, n);
            let s = random_state(&mut rng, n);
            let c = coriolis_matrix(&model, &s.q, &s.dq).unwrap();
            let g = gravity_vector(&model, &s.q).unwrap();
            let k0 = inverse_dynamics(&model, &JointState::new(s.q.clone(), s.dq.clone(), DVector::zeros(n)).unwrap()).unwrap();
            assert!((&c * &s.dq + &g - k0).amax() < 1e-6);
            let c0 = coriolis_matrix(&model, &s.q, &DVector::zeros(n)).unwrap();
            assert_eq!(c0 * DVector::<f64>::zeros(n), DVector::zeros(n));
        }
    }

    #[test]
    fn forward_inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..6 {
            let model = random_chain(&mut rng, n);
            let s = random_state(&mut rng, n);
            let u = inverse_dynamics(&model, &s).unwrap();
            let ddq = forward_dynamics(&model, &s.q, &s.dq, &u).unwrap();
            assert!((ddq - &s.ddq).amax() < 1e-8);
            let g = gravity_vector(&model, &s.q).unwrap();
            let rest = forward_dynamics(&model, &s.q, &DVector::zeros(n), &g).unwrap();
            assert!(rest.amax() < 1e-9);
        }
    }

    #[test]
    fn zero_params_are_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let model = random_chain(&mut rng, 2).with_params(vec![LinkParams::zero(); 2]).unwrap();
        let err = forward_dynamics(&model, &DVector::zeros(2), &DVector::zeros(2), &DVector::zeros(2));
        assert!(matches!(err, Err(Error::SingularMassMatrix { .. })));
    }

    #[test]
    fn energy_is_linear_in_mass_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let model = random_chain(&mut rng, 3);
        let s = random_state(&mut rng, 3);
        let doubled = model.with_theta(&crate::model::ThetaVector::new(model.theta().values() * 2.0).unwrap()).unwrap();
        let e1 = total_energy(&model, &s.q, &s.dq).unwrap();
        let e2 = total_energy(&doubled, &s.q, &s.dq).unwrap();
        assert!((e2 - 2.0 * e1).abs() < 1e-10 * e1.abs().max(1.0));
        let v = potential_energy(&model, &s.q).unwrap();
        assert!((total_energy(&model, &s.q, &DVector::zeros(3)).unwrap() - v).abs() < 1e-15);
    }
}
