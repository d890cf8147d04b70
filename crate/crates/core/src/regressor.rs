//! Parameter-linear regressor `Y(q, q̇, q̈)` with `Y Θ = K(q, q̇, q̈)`.
//!
//! Columns are built by toggling one inertial parameter at a time: with
//! `θ_{i,j} = 1` and every other parameter zero, the inverse dynamics of the
//! chain is exactly column `10 i + j` of `Y`. Only link `i` carries inertia
//! in that evaluation, so the Newton-Euler backward pass starts at link `i`
//! and each column costs `O(n)` on top of one shared `O(n)` forward sweep,
//! which makes the whole matrix `O(n²)`. The toggled link's own force is
//! linear in its parameters and is evaluated in closed form for all ten
//! columns at once.
//!
//! Column order is link-major, parameter-minor (see [`crate::model::column_index`]).

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::dynamics::{
    coriolis_matrix, forward_sweep, gravity_vector, joint_subspace, mass_matrix, JointState,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::singular_values;
use crate::model::{ChainModel, LinkParams, ThetaVector, PARAMS_PER_LINK};
use crate::spatial::{SpatialForce, SpatialInertia, SpatialMotion};

/// Default relative singular-value threshold for identifiability.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub matrix: DMatrix<f64>,
    pub state: JointState,
}

impl Regressor {
    /// `Y Θ`
    pub fn torque(&self, theta: &ThetaVector) -> Result<DVector<f64>> {
        check_len("parameter vector", self.matrix.ncols(), theta.len())?;
        Ok(&self.matrix * theta.values())
    }
}

/// Maps toggled parameters to a tensor. Swappable so that verification can
/// run against a deliberately corrupted assignment.
pub(crate) type TensorAssignment = fn(&LinkParams) -> SpatialInertia;

pub(crate) fn standard_assignment(p: &LinkParams) -> SpatialInertia {
    p.to_tensor()
}

/// Per-link spatial forces `I_j a + v ×* (I_j v)` for the ten unit tensors
/// `I_j`, i.e. the link's own Newton-Euler force for each toggled parameter.
type BodyColumns = [SpatialForce; PARAMS_PER_LINK];

/// Closed form of the body columns for the standard parameter assignment.
/// With `I = [Ī, h×; -h×, m]`, `Ī` the rotational inertia, `h = m c` and
/// `m` the mass, the link force is `(Ī α + ω × Ī ω + h × a_l + ω × (h × v_l)
/// + v_l × (ω × h), α × h + ω × (ω × h) + m (a_l + ω × v_l))`.
fn standard_body_columns(v: &SpatialMotion, a: &SpatialMotion) -> BodyColumns {
    let (w, vl) = (&v.angular, &v.linear);
    let (alpha, al) = (&a.angular, &a.linear);
    // Unit symmetric inertia with ones at (p, q) and (q, p).
    let rot = |p: usize, q: usize| {
        let mut ea = Vector3::zeros();
        let mut ew = Vector3::zeros();
        ea[p] = alpha[q];
        ew[p] = w[q];
        if p != q {
            ea[q] = alpha[p];
            ew[q] = w[p];
        }
        SpatialForce::new(ea + w.cross(&ew), Vector3::zeros())
    };
    let first_moment = |k: usize| {
        let e = Vector3::ith(k, 1.0);
        SpatialForce::new(
            e.cross(al) + w.cross(&e.cross(vl)) + vl.cross(&w.cross(&e)),
            alpha.cross(&e) + w.cross(&w.cross(&e)),
        )
    };
    let mass = SpatialForce::new(Vector3::zeros(), al + w.cross(vl));
    [
        rot(0, 0),
        rot(0, 1),
        rot(0, 2),
        first_moment(2),
        first_moment(1),
        rot(1, 1),
        rot(1, 2),
        first_moment(0),
        rot(2, 2),
        mass,
    ]
}

/// Body columns from an arbitrary tensor assignment, by toggling each
/// parameter and applying the resulting tensor.
fn assigned_body_columns(
    assign: TensorAssignment,
) -> impl Fn(&SpatialMotion, &SpatialMotion) -> BodyColumns {
    let mut scratch = LinkParams::zero();
    let units: [SpatialInertia; PARAMS_PER_LINK] = std::array::from_fn(|j| {
        scratch.theta[j] = 1.0;
        let inertia = assign(&scratch);
        scratch.theta[j] = 0.0;
        inertia
    });
    move |v, a| {
        std::array::from_fn(|j| units[j].mul_motion(a) + v.cross_force(&units[j].mul_motion(v)))
    }
}

pub fn compute_regressor(model: &ChainModel, state: &JointState) -> Result<Regressor> {
    regressor_from_columns(model, state, standard_body_columns)
}

pub(crate) fn compute_regressor_with(
    model: &ChainModel,
    state: &JointState,
    assign: TensorAssignment,
) -> Result<Regressor> {
    regressor_from_columns(model, state, assigned_body_columns(assign))
}

fn regressor_from_columns(
    model: &ChainModel,
    state: &JointState,
    body: impl Fn(&SpatialMotion, &SpatialMotion) -> BodyColumns,
) -> Result<Regressor> {
    let n = model.dof();
    check_len("joint state", n, state.dof())?;
    let sweep = forward_sweep(model, state, true);
    let links = model.links();
    let mut y = DMatrix::zeros(n, n * PARAMS_PER_LINK);
    for i in 0..n {
        let columns = body(&sweep[i].vel, &sweep[i].acc);
        for (j, column) in columns.iter().enumerate() {
            let mut f = *column;
            let col = i * PARAMS_PER_LINK + j;
            for k in (0..=i).rev() {
                y[(k, col)] = joint_subspace(links[k].joint_axis()).dot(&f);
                if k > 0 {
                    f = sweep[k].xform.apply_transpose_force(&f);
                }
            }
        }
    }
    Ok(Regressor {
        matrix: y,
        state: state.clone(),
    })
}

/// Literal toggling loop: every column is `D q̈ + C q̇ + G` of a chain whose
/// only nonzero parameter is the toggled one, with `C` from finite-difference
/// Christoffel symbols. Much slower than [`compute_regressor`]; kept as an
/// independent reference for differential testing.
pub fn compute_regressor_reference(model: &ChainModel, state: &JointState) -> Result<Regressor> {
    let n = model.dof();
    check_len("joint state", n, state.dof())?;
    let mut params = vec![LinkParams::zero(); n];
    let mut y = DMatrix::zeros(n, n * PARAMS_PER_LINK);
    for i in 0..n {
        for j in 0..PARAMS_PER_LINK {
            params[i].theta[j] = 1.0;
            let toggled = model.with_params(params.clone())?;
            let d = mass_matrix(&toggled, &state.q)?;
            let c = coriolis_matrix(&toggled, &state.q, &state.dq)?;
            let g = gravity_vector(&toggled, &state.q)?;
            let col = d * &state.ddq + c * &state.dq + g;
            y.column_mut(i * PARAMS_PER_LINK + j).copy_from(&col);
            params[i].theta[j] = 0.0;
        }
    }
    Ok(Regressor {
        matrix: y,
        state: state.clone(),
    })
}

/// Stacks per-state regressors row-block by row-block.
pub(crate) fn stacked_regressor(model: &ChainModel, states: &[JointState]) -> Result<DMatrix<f64>> {
    let n = model.dof();
    let mut y = DMatrix::zeros(states.len() * n, model.num_params());
    for (s, state) in states.iter().enumerate() {
        let r = compute_regressor(model, state)?;
        y.view_mut((s * n, 0), (n, model.num_params()))
            .copy_from(&r.matrix);
    }
    Ok(y)
}

/// Columns of the stacked regressor that carry independent information.
///
/// Columns are visited in link-major order and a column is kept when adding it
/// raises the numerical rank (singular values above `rel_tol · σ_max` of the
/// full stacked matrix). Columns that vanish or are combinations of earlier
/// columns are left out; the complement are parameters that can be fixed at
/// zero without changing any predicted torque.
pub fn identifiable_columns(
    model: &ChainModel,
    states: &[JointState],
    rel_tol: f64,
) -> Result<BTreeSet<usize>> {
    if states.is_empty() {
        return Err(Error::InvalidInput(
            "identifiable_columns needs at least one state".into(),
        ));
    }
    let y = stacked_regressor(model, states)?;
    Ok(independent_columns(&y, rel_tol))
}

/// Greedy rank-revealing column selection on `y`.
pub fn independent_columns(y: &DMatrix<f64>, rel_tol: f64) -> BTreeSet<usize> {
    let cols = y.ncols();
    // Columns subsets of Y and of R (Y = QR) share singular values.
    let r = if y.nrows() > cols {
        y.clone().qr().r()
    } else {
        y.clone()
    };
    let sigma_max = singular_values(&r).map_or(0.0, |s| s.max());
    let mut chosen = BTreeSet::new();
    if !(sigma_max > 0.0) {
        return chosen;
    }
    let threshold = rel_tol * sigma_max;
    let mut rank = 0;
    let mut selected: Vec<usize> = Vec::new();
    for c in 0..cols {
        selected.push(c);
        let sub = r.select_columns(selected.iter());
        let new_rank = singular_values(&sub)
            .unwrap_or_else(|_| DVector::zeros(0))
            .iter()
            .filter(|&&s| s > threshold)
            .count();
        if new_rank > rank {
            rank = new_rank;
            chosen.insert(c);
        } else {
            selected.pop();
        }
    }
    chosen
}
