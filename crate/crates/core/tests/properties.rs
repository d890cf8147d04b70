//! Randomized invariants. Chains and states are drawn from a seeded RNG so
//! that proptest shrinks over the seed and the link count.

mod common;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use svaid::dynamics::{
    coriolis_matrix, gravity_vector, inverse_dynamics, mass_matrix, JointState,
};
use svaid::identify::{fit, r_squared, stack, Sample, StackedSystem};
use svaid::io::{parse_model, serialize_model};
use svaid::model::{
    params_from_physical, params_to_tensor, random_chain, random_physical_params, LinkParams,
    ThetaVector,
};
use svaid::regressor::{compute_regressor, compute_regressor_reference};
use svaid::sim::{ticktock_trajectory, TickTock};
use svaid::spatial::{
    kinetic_energy, spatial_inertia_from_params, PluckerTransform, SpatialMotion,
};

use common::{random_state, random_vec, rng};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn random_theta(r: &mut ChaCha8Rng, links: usize) -> ThetaVector {
    ThetaVector::new(random_vec(r, 10 * links, 2.0)).unwrap()
}

fn random_rotation(r: &mut ChaCha8Rng) -> Matrix3<f64> {
    let axis = nalgebra::Unit::new_normalize(Vector3::new(
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0) + 1e-3,
    ));
    nalgebra::Rotation3::from_axis_angle(&axis, r.random_range(-3.0..3.0)).into_inner()
}

fn random_transform(r: &mut ChaCha8Rng) -> PluckerTransform {
    let t = Vector3::new(
        r.random_range(-2.0..2.0),
        r.random_range(-2.0..2.0),
        r.random_range(-2.0..2.0),
    );
    PluckerTransform::new(random_rotation(r), t).unwrap()
}

fn random_motion(r: &mut ChaCha8Rng) -> SpatialMotion {
    let v = random_vec(r, 6, 2.0);
    SpatialMotion::new(
        Vector3::new(v[0], v[1], v[2]),
        Vector3::new(v[3], v[4], v[5]),
    )
}

/// Physically valid mass, COM and COM inertia.
fn random_body(r: &mut ChaCha8Rng) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let m = r.random_range(0.1..5.0);
    let c = Vector3::new(
        r.random_range(-0.5..0.5),
        r.random_range(-0.5..0.5),
        r.random_range(-0.5..0.5),
    );
    let rot = random_rotation(r);
    let a: f64 = r.random_range(0.01..1.0);
    let b: f64 = r.random_range(0.01..1.0);
    let principal = Vector3::new(a, b, r.random_range((a - b).abs() + 1e-3..a + b));
    let ic = rot * Matrix3::from_diagonal(&principal) * rot.transpose();
    (m, c, 0.5 * (ic + ic.transpose()))
}

/// Noiseless samples of a random chain at random states with torque from the
/// chain's own parameters.
fn random_system(r: &mut ChaCha8Rng, links: usize, samples: usize) -> StackedSystem {
    let model = random_chain(r, links);
    let data: Vec<Sample> = (0..samples)
        .map(|k| {
            let s = random_state(r, links);
            let u = inverse_dynamics(&model, &s).unwrap();
            Sample::new(k as f64 * 1e-3, s, u).unwrap()
        })
        .collect();
    stack(&model, &data).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn inverse_dynamics_is_linear_in_theta(seed: u64, n in 1usize..=6, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let state = random_state(&mut r, n);
        let t1 = random_theta(&mut r, n);
        let t2 = random_theta(&mut r, n);
        let mix = ThetaVector::new(t1.values() * a + t2.values() * b).unwrap();
        let k = |t: &ThetaVector| inverse_dynamics(&model.with_theta(t).unwrap(), &state).unwrap();
        let lhs = k(&mix);
        let rhs = k(&t1) * a + k(&t2) * b;
        prop_assert!((&lhs - &rhs).amax() <= 1e-9 * lhs.amax().max(1.0));
    }

    #[test]
    fn regressor_ignores_stored_parameters(seed: u64, n in 1usize..=6) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let state = random_state(&mut r, n);
        let other = model.with_theta(&random_theta(&mut r, n)).unwrap();
        let a = compute_regressor(&model, &state).unwrap().matrix;
        let b = compute_regressor(&other, &state).unwrap().matrix;
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn fast_regressor_matches_reference(seed: u64, n in 1usize..=5) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let state = random_state(&mut r, n);
        let fast = compute_regressor(&model, &state).unwrap().matrix;
        let reference = compute_regressor_reference(&model, &state).unwrap().matrix;
        prop_assert!((&fast - &reference).amax() <= 1e-6 * fast.amax().max(1.0));
    }

    #[test]
    fn static_regressor_has_no_rotational_columns(seed: u64, n in 1usize..=6) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let q = random_vec(&mut r, n, std::f64::consts::PI);
        let y = compute_regressor(&model, &JointState::at_rest(q)).unwrap().matrix;
        for link in 0..n {
            for j in [0usize, 1, 2, 5, 6, 8] {
                prop_assert!(y.column(10 * link + j).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn velocity_and_gravity_terms_match_inverse_dynamics(seed: u64, n in 1usize..=6) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let s = random_state(&mut r, n);
        let c = coriolis_matrix(&model, &s.q, &s.dq).unwrap();
        let g = gravity_vector(&model, &s.q).unwrap();
        let zero = JointState::new(s.q.clone(), s.dq.clone(), DVector::zeros(n)).unwrap();
        let k = inverse_dynamics(&model, &zero).unwrap();
        let err = (c * &s.dq + g - &k).amax();
        prop_assert!(err < 1e-8, "err {err:e}, |k| {:e}", k.amax());
    }

    #[test]
    fn mass_matrix_is_positive_semidefinite(seed: u64, n in 1usize..=6) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let q = random_vec(&mut r, n, std::f64::consts::PI);
        let d = mass_matrix(&model, &q).unwrap();
        let eig = SymmetricEigen::new(0.5 * (&d + d.transpose())).eigenvalues;
        prop_assert!(eig.min() >= -1e-9);
    }

    #[test]
    fn tensor_from_params_matches_direct_construction(seed: u64) {
        let mut r = rng(seed);
        let (m, c, ic) = random_body(&mut r);
        let a = params_to_tensor(&params_from_physical(m, &c, &ic).unwrap());
        let b = spatial_inertia_from_params(m, &c, &ic).unwrap();
        prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn tensor_is_linear_in_parameters(seed: u64, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let mut r = rng(seed);
        let p1 = LinkParams::new(random_vec(&mut r, 10, 2.0).fixed_rows::<10>(0).into_owned());
        let p2 = LinkParams::new(random_vec(&mut r, 10, 2.0).fixed_rows::<10>(0).into_owned());
        let mix = LinkParams::new(p1.theta * a + p2.theta * b);
        let lhs = params_to_tensor(&mix).matrix().clone_owned();
        let rhs = params_to_tensor(&p1).matrix() * a + params_to_tensor(&p2).matrix() * b;
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn inertia_is_positive_semidefinite(seed: u64) {
        let mut r = rng(seed);
        let (m, c, ic) = random_body(&mut r);
        let i = spatial_inertia_from_params(m, &c, &ic).unwrap();
        prop_assert!(SymmetricEigen::new(*i.matrix()).eigenvalues.min() >= -1e-12);
        let p = random_physical_params(&mut r);
        prop_assert!(SymmetricEigen::new(*p.to_tensor().matrix()).eigenvalues.min() >= -1e-12);
    }

    #[test]
    fn kinetic_energy_is_coordinate_independent(seed: u64) {
        let mut r = rng(seed);
        let (m, c, ic) = random_body(&mut r);
        let inertia = spatial_inertia_from_params(m, &c, &ic).unwrap();
        let x = random_transform(&mut r);
        let v = random_motion(&mut r);
        let a = kinetic_energy(&inertia, &v);
        let b = kinetic_energy(&inertia.transform(&x), &x.apply_motion(&v));
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn compose_is_associative(seed: u64) {
        let mut r = rng(seed);
        let (a, b, c) = (random_transform(&mut r), random_transform(&mut r), random_transform(&mut r));
        let left = a.compose(&b).compose(&c).motion_matrix();
        let right = a.compose(&b.compose(&c)).motion_matrix();
        prop_assert!((left - right).amax() <= 1e-12);
    }

    #[test]
    fn inverse_round_trips(seed: u64) {
        let mut r = rng(seed);
        let x = random_transform(&mut r);
        let v = random_motion(&mut r);
        let back = x.inverse().apply_motion(&x.apply_motion(&v));
        prop_assert!((back.to_vector() - v.to_vector()).amax() <= 1e-12);
        let id = x.compose(&x.inverse()).motion_matrix() - nalgebra::Matrix6::identity();
        prop_assert!(id.amax() <= 1e-12);
    }

    #[test]
    fn model_file_round_trips(seed: u64, n in 1usize..=6) {
        let mut r = rng(seed);
        let model = random_chain(&mut r, n);
        let text = serialize_model(&model);
        let parsed = parse_model(&text).unwrap();
        prop_assert_eq!(&parsed, &model);
        prop_assert_eq!(serialize_model(&parsed), text);
    }

    #[test]
    fn r_squared_is_at_most_one(u in prop::collection::vec(-10.0..10.0f64, 1..40), scale in prop_oneof![Just(0.0), 1e-3..2.0f64]) {
        let u = DVector::from_vec(u);
        let e = u.map(|x| x.sin() * scale);
        let r2 = r_squared(&u, &e);
        prop_assert!(r2 <= 1.0);
        prop_assert_eq!(r2 == 1.0, e.norm_squared() == 0.0);
        prop_assert_eq!(r_squared(&u, &DVector::zeros(u.len())), 1.0);
    }

    #[test]
    fn fit_is_a_minimizer(seed: u64, n in 1usize..=3) {
        let mut r = rng(seed);
        let mut sys = random_system(&mut r, n, 8 * n);
        // Perturb the torques so the residual is not zero.
        let noise = random_vec(&mut r, sys.u.len(), 0.5);
        sys.u += noise;
        let f = fit(&sys).unwrap();
        let base = (&sys.u - &sys.y * f.theta_hat.values()).norm();
        for _ in 0..100 {
            let delta = random_vec(&mut r, f.theta_hat.len(), 1e-3);
            let other = (&sys.u - &sys.y * (f.theta_hat.values() + delta)).norm();
            prop_assert!(other >= base - 1e-9, "{other} vs {base}");
        }
    }

    #[test]
    fn minimizers_agree_on_predicted_torque(seed: u64, n in 1usize..=3) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 8 * n);
        let a = fit(&sys).unwrap();
        // A second minimizer: the same rows in reverse order.
        let rows = sys.y.nrows();
        let y_rev = DMatrix::from_fn(rows, sys.y.ncols(), |i, j| sys.y[(rows - 1 - i, j)]);
        let u_rev = DVector::from_fn(rows, |i, _| sys.u[rows - 1 - i]);
        let b = fit(&StackedSystem::new(y_rev, u_rev, sys.dof).unwrap()).unwrap();
        let diff = &sys.y * a.theta_hat.values() - &sys.y * b.theta_hat.values();
        prop_assert!(diff.amax() <= 1e-8, "{:e} rank {} {}", diff.amax(), a.rank, b.rank);
    }

    #[test]
    fn ticktock_acceleration_is_continuous_at_segment_boundaries(
        seed: u64, n in 1usize..=4, k in 1usize..8
    ) {
        let mut r = rng(seed);
        let a = random_vec(&mut r, n, 1.0);
        let b = random_vec(&mut r, n, 1.0);
        let period = DVector::from_fn(n, |_, _| r.random_range(0.5..4.0));
        let tt = TickTock::new(a, b, period.clone()).unwrap();
        for i in 0..n {
            let t = k as f64 * 0.5 * period[i];
            let eps = 1e-13;
            let before = ticktock_trajectory(&tt, t - eps).ddq[i];
            let after = ticktock_trajectory(&tt, t + eps).ddq[i];
            prop_assert!((before - after).abs() <= 1e-9, "{before} vs {after}");
            prop_assert!(ticktock_trajectory(&tt, t).ddq[i].abs() <= 1e-9);
        }
    }
}
