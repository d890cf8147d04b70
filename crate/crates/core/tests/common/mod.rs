//! Shared helpers for integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svaid::dynamics::JointState;
use svaid::model::{ChainModel, LinkParams, LinkSpec};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-r..r))
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> JointState {
    JointState::new(
        random_vec(rng, n, std::f64::consts::PI),
        random_vec(rng, n, 3.0),
        random_vec(rng, n, 3.0),
    )
    .unwrap()
}

/// Planar two-link pendulum in the x-y plane, joints about `z`, gravity
/// `-g y`, links hanging along `-y` at `q = 0`. Each link's centre of mass
/// lies on the link line at distance `lc` from its joint, and `inertia` is the
/// moment of inertia about `z` through the centre of mass.
#[derive(Debug, Clone, Copy)]
pub struct PlanarPendulum {
    pub l1: f64,
    pub m: [f64; 2],
    pub lc: [f64; 2],
    pub inertia: [f64; 2],
    pub g: f64,
}

impl PlanarPendulum {
    /// Matches `data/double_pendulum.model`.
    pub fn shipped() -> Self {
        Self {
            l1: 0.3,
            m: [1.0, 0.8],
            lc: [0.15, 0.125],
            inertia: [0.0075, 0.0041666666666667],
            g: 9.81,
        }
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            l1: rng.random_range(0.1..1.0),
            m: [rng.random_range(0.2..5.0), rng.random_range(0.2..5.0)],
            lc: [rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)],
            inertia: [rng.random_range(0.001..0.1), rng.random_range(0.001..0.1)],
            g: 9.81,
        }
    }

    /// Same system as a [`ChainModel`]. The off-plane inertias are arbitrary
    /// and do not affect planar motion.
    pub fn to_model(self) -> ChainModel {
        let link = |name: &str, offset: f64, i: usize| {
            let spec = LinkSpec::new(name, Vector3::z(), Vector3::new(0.0, -offset, 0.0)).unwrap();
            let ic = Matrix3::from_diagonal(&Vector3::new(
                self.inertia[i],
                0.3 * self.inertia[i],
                self.inertia[i],
            ));
            let p = LinkParams::from_physical(self.m[i], &Vector3::new(0.0, -self.lc[i], 0.0), &ic)
                .unwrap();
            (spec, p)
        };
        let (s1, p1) = link("upper", 0.0, 0);
        let (s2, p2) = link("lower", self.l1, 1);
        ChainModel::new(
            Vector3::new(0.0, -self.g, 0.0),
            Vector3::y(),
            vec![s1, s2],
            vec![p1, p2],
        )
        .unwrap()
    }

    /// Textbook Lagrangian mass matrix.
    pub fn mass_matrix(&self, q: &[f64]) -> Matrix2<f64> {
        let [m1, m2] = self.m;
        let [c1, c2] = self.lc;
        let [i1, i2] = self.inertia;
        let c = q[1].cos();
        let d11 = i1 + i2 + m1 * c1 * c1 + m2 * (self.l1 * self.l1 + c2 * c2 + 2.0 * self.l1 * c2 * c);
        let d12 = i2 + m2 * (c2 * c2 + self.l1 * c2 * c);
        let d22 = i2 + m2 * c2 * c2;
        Matrix2::new(d11, d12, d12, d22)
    }

    /// `C(q, q̇) q̇`.
    pub fn coriolis_times_dq(&self, q: &[f64], dq: &[f64]) -> Vector2<f64> {
        let h = -self.m[1] * self.l1 * self.lc[1] * q[1].sin();
        Vector2::new(
            h * dq[1] * dq[1] + 2.0 * h * dq[0] * dq[1],
            -h * dq[0] * dq[0],
        )
    }

    /// `∂V/∂q` with `V = -g (m1 c1 cos q1 + m2 (l1 cos q1 + c2 cos(q1+q2)))`.
    pub fn gravity(&self, q: &[f64]) -> Vector2<f64> {
        let [m1, m2] = self.m;
        let [c1, c2] = self.lc;
        let s12 = (q[0] + q[1]).sin();
        Vector2::new(
            self.g * (m1 * c1 * q[0].sin() + m2 * (self.l1 * q[0].sin() + c2 * s12)),
            self.g * m2 * c2 * s12,
        )
    }

    pub fn torque(&self, q: &[f64], dq: &[f64], ddq: &[f64]) -> Vector2<f64> {
        self.mass_matrix(q) * Vector2::new(ddq[0], ddq[1])
            + self.coriolis_times_dq(q, dq)
            + self.gravity(q)
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
