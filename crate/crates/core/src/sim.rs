//! Fixed-step simulation of a ground-truth plant under computed-torque
//! control, with optional online identification in the loop.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::control::{
    computed_torque, gated_controller_step, pd_acceleration, ControllerConfig, ModelUsed,
    SwitchEvent, SwitchLog, TrajectoryPoint,
};
use crate::dynamics::{forward_dynamics, JointState};
use crate::error::{check_len, Error, Result};
use crate::identify::{
    fit, stack, AccelerationFilter, EstimatorConfig, OnlineEstimator, Sample, Snapshot,
};
use crate::model::{ChainModel, ThetaVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    SemiImplicitEuler,
}

/// Standard deviations of additive Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    pub q: f64,
    pub dq: f64,
    pub ddq: f64,
    pub u: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.q == 0.0 && self.dq == 0.0 && self.ddq == 0.0 && self.u == 0.0
    }
}

/// Where logged accelerations come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AccelerationSource {
    /// The plant's acceleration at the tick (plus `noise.ddq`).
    Exact,
    /// EMA filter over differenced measured velocities.
    Ema { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub integrator: Integrator,
    pub noise: NoiseConfig,
    pub seed: u64,
    pub acceleration: AccelerationSource,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 10.0,
            integrator: Integrator::Rk4,
            noise: NoiseConfig::default(),
            seed: 0,
            acceleration: AccelerationSource::Exact,
        }
    }
}

/// One integrator step of `q̈ = forward_dynamics(q, q̇, u)` with `u` held.
pub fn step(
    model: &ChainModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    integrator: Integrator,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let acc = |q: &DVector<f64>, dq: &DVector<f64>| forward_dynamics(model, q, dq, u);
    match integrator {
        Integrator::SemiImplicitEuler => {
            let dq1 = dq + acc(q, dq)? * dt;
            let q1 = q + &dq1 * dt;
            Ok((q1, dq1))
        }
        Integrator::Rk4 => {
            let h = 0.5 * dt;
            let k1q = dq.clone();
            let k1v = acc(q, dq)?;
            let k2q = dq + &k1v * h;
            let k2v = acc(&(q + &k1q * h), &k2q)?;
            let k3q = dq + &k2v * h;
            let k3v = acc(&(q + &k2q * h), &k3q)?;
            let k4q = dq + &k3v * dt;
            let k4v = acc(&(q + &k3q * dt), &k4q)?;
            let q1 = q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
            let dq1 = dq + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
            Ok((q1, dq1))
        }
    }
}

/// `q = A ∘ sin(2π f t + φ) + offset` per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinusoid {
    pub amplitude: DVector<f64>,
    pub frequency: DVector<f64>,
    pub phase: DVector<f64>,
    pub offset: DVector<f64>,
}

impl Sinusoid {
    pub fn new(
        amplitude: DVector<f64>,
        frequency: DVector<f64>,
        phase: DVector<f64>,
        offset: DVector<f64>,
    ) -> Result<Self> {
        let n = amplitude.len();
        check_len("frequency", n, frequency.len())?;
        check_len("phase", n, phase.len())?;
        check_len("offset", n, offset.len())?;
        Ok(Self {
            amplitude,
            frequency,
            phase,
            offset,
        })
    }
}

pub fn sinusoid_trajectory(s: &Sinusoid, t: f64) -> TrajectoryPoint {
    let n = s.amplitude.len();
    let mut p = TrajectoryPoint {
        q: DVector::zeros(n),
        dq: DVector::zeros(n),
        ddq: DVector::zeros(n),
    };
    for i in 0..n {
        let w = 2.0 * std::f64::consts::PI * s.frequency[i];
        let arg = w * t + s.phase[i];
        let a = s.amplitude[i];
        p.q[i] = a * arg.sin() + s.offset[i];
        p.dq[i] = a * w * arg.cos();
        p.ddq[i] = -a * w * w * arg.sin();
    }
    p
}

/// Back-and-forth motion between two poses with minimum-jerk segments of
/// half a period each; at rest at both ends. Each joint has its own period,
/// so unequal periods take the chain off the straight line between the poses.
#[derive(Debug, Clone, PartialEq)]
pub struct TickTock {
    pub pose_a: DVector<f64>,
    pub pose_b: DVector<f64>,
    pub period: DVector<f64>,
}

impl TickTock {
    pub fn new(pose_a: DVector<f64>, pose_b: DVector<f64>, period: DVector<f64>) -> Result<Self> {
        check_len("pose_b", pose_a.len(), pose_b.len())?;
        check_len("period", pose_a.len(), period.len())?;
        if period.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput(
                "tick-tock periods must be positive".into(),
            ));
        }
        Ok(Self {
            pose_a,
            pose_b,
            period,
        })
    }

    /// Same period on every joint.
    pub fn uniform(pose_a: DVector<f64>, pose_b: DVector<f64>, period: f64) -> Result<Self> {
        let n = pose_a.len();
        Self::new(pose_a, pose_b, DVector::from_element(n, period))
    }
}

pub fn ticktock_trajectory(tt: &TickTock, t: f64) -> TrajectoryPoint {
    let n = tt.pose_a.len();
    let mut p = TrajectoryPoint {
        q: DVector::zeros(n),
        dq: DVector::zeros(n),
        ddq: DVector::zeros(n),
    };
    for i in 0..n {
        let half = 0.5 * tt.period[i];
        let seg = (t / half).floor();
        let tau = ((t - seg * half) / half).clamp(0.0, 1.0);
        let (from, to) = if (seg as i64).rem_euclid(2) == 0 {
            (tt.pose_a[i], tt.pose_b[i])
        } else {
            (tt.pose_b[i], tt.pose_a[i])
        };
        // s(τ) = 10τ³ − 15τ⁴ + 6τ⁵
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
        let ds = 30.0 * t2 * (1.0 - tau) * (1.0 - tau) / half;
        let dds = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau) / (half * half);
        let delta = to - from;
        p.q[i] = from + delta * s;
        p.dq[i] = delta * ds;
        p.ddq[i] = delta * dds;
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Sinusoid(Sinusoid),
    TickTock(TickTock),
}

impl Trajectory {
    pub fn at(&self, t: f64) -> TrajectoryPoint {
        match self {
            Trajectory::Sinusoid(s) => sinusoid_trajectory(s, t),
            Trajectory::TickTock(tt) => ticktock_trajectory(tt, t),
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            Trajectory::Sinusoid(s) => s.amplitude.len(),
            Trajectory::TickTock(tt) => tt.pose_a.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    DoublePendulumOffline,
    LegOfflineGrowing,
    ArmOnlineGated,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::DoublePendulumOffline => "double_pendulum_offline",
            ScenarioKind::LegOfflineGrowing => "leg_offline_growing",
            ScenarioKind::ArmOnlineGated => "arm_online_gated",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double_pendulum_offline" => Ok(Self::DoublePendulumOffline),
            "leg_offline_growing" => Ok(Self::LegOfflineGrowing),
            "arm_online_gated" => Ok(Self::ArmOnlineGated),
            other => Err(Error::InvalidInput(format!("unknown scenario '{other}'"))),
        }
    }
}

/// A closed-loop experiment on a plant with true parameters `plant.theta()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub plant: ChainModel,
    /// Parameters the controller uses before (or without) identification.
    pub nominal: ThetaVector,
    pub trajectory: Trajectory,
    pub controller: ControllerConfig,
    pub estimator: Option<EstimatorConfig>,
    /// Switch to the identified model once the estimator reports it valid.
    pub gated: bool,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.plant.dof();
        check_len("trajectory joints", n, self.trajectory.dof())?;
        check_len("controller joints", n, self.controller.dof())?;
        check_len("nominal parameters", self.plant.num_params(), self.nominal.len())?;
        if self.gated && self.estimator.is_none() {
            return Err(Error::InvalidInput(
                "a gated scenario needs an estimator".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the controller log.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    pub t: f64,
    pub model_used: ModelUsed,
    pub q_des: DVector<f64>,
    pub q: DVector<f64>,
    pub u_cmd: DVector<f64>,
    pub saturated: bool,
    /// Plant acceleration at this tick (not part of the CSV log).
    pub ddq_true: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRecord {
    pub t: f64,
    pub r_squared: f64,
    pub buffer_len: usize,
    pub model_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Metrics {
    pub format_version: u32,
    pub scenario: String,
    pub ticks: usize,
    pub saturated_ticks: usize,
    /// Offline pseudoinverse fit over every unsaturated logged sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offline_r_squared: Option<f64>,
    pub offline_per_joint_r_squared: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offline_max_abs_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_r_squared: Option<f64>,
    pub final_per_joint_r_squared: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_full_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_valid_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared_at_switch: Option<f64>,
    pub switch_count: usize,
    /// Mean of `q_des − q` per joint before the first switch (whole run when
    /// there is none) and after it.
    pub error_bias_before: Vec<f64>,
    pub error_bias_after: Vec<f64>,
    pub max_abs_tracking_error: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub samples: Vec<Sample>,
    pub control_log: Vec<ControlRecord>,
    pub snapshots: Vec<SnapshotRecord>,
    pub switch_events: Vec<SwitchEvent>,
    pub metrics: Metrics,
}

fn noisy(
    v: &DVector<f64>,
    std: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    if std == 0.0 {
        return Ok(v.clone());
    }
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::InvalidInput(format!("noise std {std}: {e}")))?;
    Ok(v.map(|x| x + normal.sample(rng)))
}

/// Runs the closed loop for `cfg.duration` seconds.
pub fn run_scenario(scn: &Scenario, cfg: &SimConfig) -> Result<ScenarioOutput> {
    scn.validate()?;
    if !(cfg.dt > 0.0) || !(cfg.duration >= 0.0) {
        return Err(Error::InvalidInput(
            "dt must be > 0 and duration >= 0".into(),
        ));
    }
    let n = scn.plant.dof();
    let ticks = (cfg.duration / cfg.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut estimator = match &scn.estimator {
        Some(ec) => Some(OnlineEstimator::new(
            scn.plant.clone(),
            scn.nominal.clone(),
            ec.clone(),
        )?),
        None => None,
    };
    let mut filter = match cfg.acceleration {
        AccelerationSource::Ema { lambda } => Some(AccelerationFilter::new(lambda)?),
        AccelerationSource::Exact => None,
    };
    // The filter starts from zero; hold samples back until it has settled.
    let warmup_ticks = match cfg.acceleration {
        AccelerationSource::Ema { lambda } => (10.0 / lambda).ceil() as usize,
        AccelerationSource::Exact => 0,
    };

    let start = scn.trajectory.at(0.0);
    let (mut q, mut dq) = (start.q, start.dq);
    let mut samples = Vec::with_capacity(ticks);
    let mut control_log = Vec::with_capacity(ticks);
    let mut snapshots = Vec::new();
    let mut switches = SwitchLog::default();
    let mut latest: Option<std::sync::Arc<Snapshot>> = None;
    let mut buffer_full_time = None;
    let mut first_valid_time = None;
    let mut r2_at_switch = None;

    for k in 0..ticks {
        let t = k as f64 * cfg.dt;
        let wrap = |e: Error| Error::Simulation {
            tick: k,
            source: Box::new(e),
        };
        let q_meas = noisy(&q, cfg.noise.q, &mut rng)?;
        let dq_meas = noisy(&dq, cfg.noise.dq, &mut rng)?;
        let reference = scn.trajectory.at(t);

        let (command, model_used) = if scn.gated {
            let out = gated_controller_step(
                &scn.controller,
                &scn.plant,
                &scn.nominal,
                latest.as_deref(),
                &reference,
                &q_meas,
                &dq_meas,
            )
            .map_err(wrap)?;
            (out.command, out.model_used)
        } else {
            let ddq_cmd =
                pd_acceleration(&scn.controller, &reference, &q_meas, &dq_meas).map_err(wrap)?;
            let cmd = computed_torque(
                &scn.plant,
                &scn.nominal,
                &q_meas,
                &dq_meas,
                &ddq_cmd,
                Some(&scn.controller.torque_limits),
            )
            .map_err(wrap)?;
            (cmd, ModelUsed::Nominal)
        };
        let u = command.u;

        let ddq_true = forward_dynamics(&scn.plant, &q, &dq, &u).map_err(wrap)?;
        let ddq_meas = match filter.as_mut() {
            Some(f) => f.update(&dq_meas, cfg.dt).map_err(wrap)?,
            None => noisy(&ddq_true, cfg.noise.ddq, &mut rng)?,
        };
        let u_meas = noisy(&u, cfg.noise.u, &mut rng)?;
        let sample = Sample::new(t, JointState::new(q_meas, dq_meas, ddq_meas)?, u_meas)?;

        if let Some(est) = estimator.as_mut() {
            // Saturated ticks violate u = K(q, q̇, q̈) for the commanded torque.
            if !command.saturated && k >= warmup_ticks {
                if let Some(snap) = est.update(&sample).map_err(wrap)? {
                    if snap.buffer_full && buffer_full_time.is_none() {
                        buffer_full_time = Some(snap.t);
                    }
                    if snap.model_valid && first_valid_time.is_none() {
                        first_valid_time = Some(snap.t);
                    }
                    snapshots.push(SnapshotRecord {
                        t: snap.t,
                        r_squared: snap.fit.r_squared,
                        buffer_len: snap.buffer_len,
                        model_valid: snap.model_valid,
                    });
                    latest = Some(snap);
                }
            }
        }

        if model_used == ModelUsed::Identified && r2_at_switch.is_none() {
            r2_at_switch = latest.as_ref().map(|s| s.fit.r_squared);
        }
        switches.record(k, t, model_used);
        control_log.push(ControlRecord {
            t,
            model_used,
            q_des: reference.q,
            q: q.clone(),
            u_cmd: u.clone(),
            saturated: command.saturated,
            ddq_true,
        });
        samples.push(sample);

        let (q1, dq1) = step(&scn.plant, &q, &dq, &u, cfg.dt, cfg.integrator).map_err(wrap)?;
        q = q1;
        dq = dq1;
    }

    let metrics = compute_metrics(
        scn,
        &samples,
        &control_log,
        &switches.events,
        latest.as_deref(),
        buffer_full_time,
        first_valid_time,
        r2_at_switch,
        n,
    );
    Ok(ScenarioOutput {
        samples,
        control_log,
        snapshots,
        switch_events: switches.events,
        metrics,
    })
}

#[allow(clippy::too_many_arguments)]
fn compute_metrics(
    scn: &Scenario,
    samples: &[Sample],
    log: &[ControlRecord],
    events: &[SwitchEvent],
    latest: Option<&Snapshot>,
    buffer_full_time: Option<f64>,
    first_valid_time: Option<f64>,
    r2_at_switch: Option<f64>,
    n: usize,
) -> Metrics {
    let mut m = Metrics {
        format_version: 1,
        scenario: scn.kind.as_str().to_string(),
        ticks: log.len(),
        saturated_ticks: log.iter().filter(|r| r.saturated).count(),
        buffer_full_time,
        first_valid_time,
        switch_count: events.len(),
        ..Default::default()
    };

    let usable: Vec<Sample> = samples
        .iter()
        .zip(log)
        .filter(|(_, r)| !r.saturated)
        .map(|(s, _)| s.clone())
        .collect();
    if let Ok(f) = stack(&scn.plant, &usable).and_then(|sys| fit(&sys).map(|f| (f, sys))) {
        let (f, sys) = f;
        let resid = &sys.u - &sys.y * f.theta_hat.values();
        m.offline_r_squared = Some(f.r_squared);
        m.offline_per_joint_r_squared = f.per_joint_r_squared.clone();
        m.offline_max_abs_residual = Some(resid.amax());
    }
    if let Some(s) = latest {
        m.final_r_squared = Some(s.fit.r_squared);
        m.final_per_joint_r_squared = s.fit.per_joint_r_squared.clone();
    }

    let switch = events
        .iter()
        .find(|e| e.to == ModelUsed::Identified)
        .map(|e| e.tick);
    if let Some(tick) = switch {
        m.switch_time = Some(log[tick].t);
        m.r_squared_at_switch = r2_at_switch;
    }
    let mean_err = |rows: &[ControlRecord]| -> Vec<f64> {
        if rows.is_empty() {
            return Vec::new();
        }
        let mut acc = DVector::zeros(n);
        for r in rows {
            acc += &r.q_des - &r.q;
        }
        (acc / rows.len() as f64).iter().copied().collect()
    };
    match switch {
        Some(tick) => {
            m.error_bias_before = mean_err(&log[..tick]);
            m.error_bias_after = mean_err(&log[tick..]);
        }
        None => m.error_bias_before = mean_err(log),
    }
    m.max_abs_tracking_error = log
        .iter()
        .map(|r| (&r.q_des - &r.q).amax())
        .fold(0.0, f64::max);
    m
}
