//! Randomized structural checks over random chains.

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{
    coriolis_matrix, forward_dynamics, inverse_dynamics, kinetic_energy, mass_matrix,
    potential_energy, total_energy, JointState,
};
use crate::error::{Error, Result};
use crate::model::{random_chain, ChainModel, LinkParams};
use crate::regressor::{compute_regressor_with, standard_assignment, TensorAssignment};
use crate::sim::{step, Integrator};
use crate::spatial::{PluckerTransform, SpatialForce, SpatialInertia, SpatialMotion};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const SYMMETRY_TOL: f64 = 1e-9;
pub const SKEW_TOL: f64 = 1e-5;
pub const ENERGY_DRIFT_TOL: f64 = 1e-6;
pub const POWER_TOL: f64 = 1e-10;
pub const ROUND_TRIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub trials: usize,
    pub seed: u64,
    pub max_links: usize,
    /// Links used for the energy check, which integrates 10 s per trial
    /// from `|q| ≤ 1` rad, `|q̇| ≤ 0.5` rad/s.
    pub energy_max_links: usize,
    pub energy_duration: f64,
    pub dt: f64,
    /// Check this model instead of random chains.
    pub model: Option<ChainModel>,
    /// Swap two first-moment entries in the regressor's tensor assignment.
    /// Exists to show that the identity check catches such a fault.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            max_links: 6,
            energy_max_links: 3,
            energy_duration: 10.0,
            dt: 1e-3,
            model: None,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub tolerance: f64,
    pub max_error: f64,
    pub failures: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub format_version: u32,
    pub trials: usize,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }
}

struct Tracker {
    name: &'static str,
    tol: f64,
    max: f64,
    failures: usize,
}

impl Tracker {
    fn new(name: &'static str, tol: f64) -> Self {
        Self {
            name,
            tol,
            max: 0.0,
            failures: 0,
        }
    }

    fn observe(&mut self, err: f64) {
        // NaN counts as a failure.
        if !(err < self.tol) {
            self.failures += 1;
        }
        if err.is_nan() {
            self.max = f64::NAN;
        } else if !self.max.is_nan() {
            self.max = self.max.max(err);
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.to_string(),
            tolerance: self.tol,
            max_error: self.max,
            failures: self.failures,
            passed: self.failures == 0,
        }
    }
}

fn corrupted_assignment(p: &LinkParams) -> SpatialInertia {
    let mut swapped = *p;
    swapped.theta.swap((3, 0), (4, 0));
    swapped.to_tensor()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-r..r))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis.normalize() };
    nalgebra::Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(axis),
        rng.random_range(-3.0..3.0),
    )
    .into_inner()
}

/// Runs every property `cfg.trials` times.
pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if cfg.max_links == 0 || cfg.energy_max_links == 0 {
        return Err(Error::InvalidInput("link counts must be at least 1".into()));
    }
    let assign: TensorAssignment = if cfg.inject_fault {
        corrupted_assignment
    } else {
        standard_assignment
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut identity = Tracker::new("regressor_identity", IDENTITY_TOL);
    let mut symmetry = Tracker::new("mass_matrix_symmetry", SYMMETRY_TOL);
    let mut skew = Tracker::new("skew_symmetry", SKEW_TOL);
    let mut energy = Tracker::new("energy_drift", ENERGY_DRIFT_TOL);
    let mut power = Tracker::new("power_invariance", POWER_TOL);
    let mut round_trip = Tracker::new("dynamics_round_trip", ROUND_TRIP_TOL);

    for _ in 0..cfg.trials {
        let model = match &cfg.model {
            Some(m) => m.clone(),
            None => {
                let n = rng.random_range(1..=cfg.max_links);
                random_chain(&mut rng, n)
            }
        };
        let n = model.dof();
        let state = JointState::new(
            random_vec(&mut rng, n, 3.0),
            random_vec(&mut rng, n, 2.0),
            random_vec(&mut rng, n, 2.0),
        )?;

        let y = compute_regressor_with(&model, &state, assign)?;
        let k = inverse_dynamics(&model, &state)?;
        let scale = k.amax().max(1.0);
        identity.observe((y.torque(&model.theta())? - &k).amax() / scale);

        let d = mass_matrix(&model, &state.q)?;
        symmetry.observe((&d - d.transpose()).amax());

        // Ḋ along q̇ by central differences, independent of the Christoffel form.
        let h = 1e-6;
        let d_dot = (mass_matrix(&model, &(&state.q + &state.dq * h))?
            - mass_matrix(&model, &(&state.q - &state.dq * h))?)
            / (2.0 * h);
        let c = coriolis_matrix(&model, &state.q, &state.dq)?;
        let nmat = d_dot - c * 2.0;
        skew.observe((&nmat + nmat.transpose()).amax());

        let u = inverse_dynamics(&model, &state)?;
        let ddq = forward_dynamics(&model, &state.q, &state.dq, &u)?;
        round_trip.observe((ddq - &state.ddq).amax() / state.ddq.amax().max(1.0));

        let x = PluckerTransform::new(random_rotation(&mut rng), random_vec3(&mut rng))?;
        let v = SpatialMotion::new(random_vec3(&mut rng), random_vec3(&mut rng));
        let f = SpatialForce::new(random_vec3(&mut rng), random_vec3(&mut rng));
        let lhs = x.apply_motion(&v).dot(&x.apply_force(&f));
        let mag = v.to_vector().norm() * f.to_vector().norm();
        power.observe((lhs - v.dot(&f)).abs() / mag.max(1.0));

        let emodel = match &cfg.model {
            Some(m) => m.clone(),
            None => {
                let ne = rng.random_range(1..=cfg.energy_max_links);
                random_chain(&mut rng, ne)
            }
        };
        let ne = emodel.dof();
        energy.observe(energy_drift(
            &emodel,
            random_vec(&mut rng, ne, 1.0),
            random_vec(&mut rng, ne, 0.5),
            cfg.energy_duration,
            cfg.dt,
        )?);
    }

    Ok(VerifyReport {
        format_version: 1,
        trials: cfg.trials,
        seed: cfg.seed,
        properties: vec![
            identity.finish(),
            symmetry.finish(),
            skew.finish(),
            energy.finish(),
            power.finish(),
            round_trip.finish(),
        ],
    })
}

fn random_vec3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

/// `|E(T) − E(0)| / (T(0) + |V(0)|)` for an unforced RK4 run.
pub fn energy_drift(
    model: &ChainModel,
    q0: DVector<f64>,
    dq0: DVector<f64>,
    duration: f64,
    dt: f64,
) -> Result<f64> {
    let n = model.dof();
    let u = DVector::zeros(n);
    let e0 = total_energy(model, &q0, &dq0)?;
    let scale = kinetic_energy(model, &q0, &dq0)? + potential_energy(model, &q0)?.abs();
    let steps = (duration / dt).round() as usize;
    let (mut q, mut dq) = (q0, dq0);
    for _ in 0..steps {
        let (q1, dq1) = step(model, &q, &dq, &u, dt, Integrator::Rk4)?;
        q = q1;
        dq = dq1;
    }
    let e1 = total_energy(model, &q, &dq)?;
    Ok((e1 - e0).abs() / scale.max(f64::MIN_POSITIVE))
}
