//! Computed-torque control on top of the regressor.
//!
//! The inner loop is `u = Y(q, q̇, q̈_cmd) Θ̂`; the outer loop produces
//! `q̈_cmd` from a PD law with acceleration feed-forward. The gated variant
//! picks between a nominal parameter vector and the online estimate depending
//! on the estimator's validity flag.

use nalgebra::DVector;

use crate::dynamics::JointState;
use crate::error::{check_len, Error, Result};
use crate::identify::Snapshot;
use crate::model::{ChainModel, ThetaVector};
use crate::regressor::compute_regressor;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub kp: DVector<f64>,
    pub kd: DVector<f64>,
    pub r2_threshold: f64,
    pub torque_limits: DVector<f64>,
}

impl ControllerConfig {
    pub fn new(
        kp: DVector<f64>,
        kd: DVector<f64>,
        r2_threshold: f64,
        torque_limits: DVector<f64>,
    ) -> Result<Self> {
        check_len("kd", kp.len(), kd.len())?;
        check_len("torque limits", kp.len(), torque_limits.len())?;
        if kp.iter().chain(kd.iter()).any(|&k| !(k >= 0.0) || !k.is_finite()) {
            return Err(Error::InvalidInput("gains must be finite and >= 0".into()));
        }
        if torque_limits.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("torque limits must be > 0".into()));
        }
        Ok(Self {
            kp,
            kd,
            r2_threshold,
            torque_limits,
        })
    }

    /// Same gains on every joint; the defaults are `kp = 100`, `kd = 20`.
    pub fn uniform(n: usize, kp: f64, kd: f64, limit: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(n, kp),
            DVector::from_element(n, kd),
            0.95,
            DVector::from_element(n, limit),
        )
    }

    pub fn dof(&self) -> usize {
        self.kp.len()
    }
}

/// Desired joint trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub ddq: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorqueCommand {
    pub u: DVector<f64>,
    /// At least one joint hit its limit.
    pub saturated: bool,
}

/// `U_cmd = Y(q, q̇, q̈_cmd) Θ̂`, clamped to `limits` when given.
pub fn computed_torque(
    model: &ChainModel,
    theta_hat: &ThetaVector,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    ddq_cmd: &DVector<f64>,
    limits: Option<&DVector<f64>>,
) -> Result<TorqueCommand> {
    let state = JointState::new(q.clone(), dq.clone(), ddq_cmd.clone())?;
    let mut u = compute_regressor(model, &state)?.torque(theta_hat)?;
    let mut saturated = false;
    if let Some(lim) = limits {
        check_len("torque limits", u.len(), lim.len())?;
        for (ui, &l) in u.iter_mut().zip(lim.iter()) {
            if ui.abs() > l {
                *ui = ui.clamp(-l, l);
                saturated = true;
            }
        }
    }
    Ok(TorqueCommand { u, saturated })
}

/// `q̈_cmd = q̈_des + kd ∘ (q̇_des − q̇) + kp ∘ (q_des − q)`
pub fn pd_acceleration(
    cfg: &ControllerConfig,
    reference: &TrajectoryPoint,
    q: &DVector<f64>,
    dq: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = cfg.dof();
    for (what, len) in [
        ("q", q.len()),
        ("dq", dq.len()),
        ("q_des", reference.q.len()),
        ("dq_des", reference.dq.len()),
        ("ddq_des", reference.ddq.len()),
    ] {
        check_len(what, n, len)?;
    }
    Ok(&reference.ddq
        + cfg.kd.component_mul(&(&reference.dq - dq))
        + cfg.kp.component_mul(&(&reference.q - q)))
}

/// Which parameter vector drove a control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelUsed {
    Nominal,
    Identified,
}

impl ModelUsed {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelUsed::Nominal => "nominal",
            ModelUsed::Identified => "identified",
        }
    }
}

impl std::str::FromStr for ModelUsed {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(ModelUsed::Nominal),
            "identified" => Ok(ModelUsed::Identified),
            other => Err(Error::InvalidInput(format!("unknown model tag '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub command: TorqueCommand,
    pub ddq_cmd: DVector<f64>,
    pub model_used: ModelUsed,
}

/// One computed-torque step using the estimate only when the snapshot is
/// valid (buffer full and `R² ≥ cfg.r2_threshold`).
pub fn gated_controller_step(
    cfg: &ControllerConfig,
    model: &ChainModel,
    nominal_theta: &ThetaVector,
    snapshot: Option<&Snapshot>,
    reference: &TrajectoryPoint,
    q: &DVector<f64>,
    dq: &DVector<f64>,
) -> Result<ControlOutput> {
    let (theta, model_used) = match snapshot {
        Some(s) if s.buffer_full && s.fit.r_squared >= cfg.r2_threshold => {
            (&s.fit.theta_hat, ModelUsed::Identified)
        }
        _ => (nominal_theta, ModelUsed::Nominal),
    };
    let ddq_cmd = pd_acceleration(cfg, reference, q, dq)?;
    let command = computed_torque(model, theta, q, dq, &ddq_cmd, Some(&cfg.torque_limits))?;
    Ok(ControlOutput {
        command,
        ddq_cmd,
        model_used,
    })
}

/// A change of [`ModelUsed`] between consecutive ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchEvent {
    pub tick: usize,
    pub t: f64,
    pub from: ModelUsed,
    pub to: ModelUsed,
}

/// Records switch events across a run.
#[derive(Debug, Default, Clone)]
pub struct SwitchLog {
    last: Option<ModelUsed>,
    pub events: Vec<SwitchEvent>,
}

impl SwitchLog {
    pub fn record(&mut self, tick: usize, t: f64, used: ModelUsed) {
        if let Some(prev) = self.last {
            if prev != used {
                self.events.push(SwitchEvent {
                    tick,
                    t,
                    from: prev,
                    to: used,
                });
            }
        }
        self.last = Some(used);
    }
}
