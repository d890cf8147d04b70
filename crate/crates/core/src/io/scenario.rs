//! Scenario description files (TOML).
//!
//! Model paths are resolved relative to the scenario file.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::identify::{BufferMode, EstimatorConfig, InformationGate, DEFAULT_EMA_LAMBDA};
use crate::io::model_file::load_model;
use crate::model::ThetaVector;
use crate::sim::{
    AccelerationSource, Integrator, NoiseConfig, Scenario, ScenarioKind, SimConfig, Sinusoid,
    TickTock, Trajectory,
};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub name: String,
    pub model: String,
    #[serde(default)]
    pub nominal_model: Option<String>,
    /// Multiplies every nominal parameter (after `nominal_model`, if any).
    #[serde(default)]
    pub nominal_scale: Option<f64>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub trajectory: TrajectorySection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub estimator: Option<EstimatorSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    pub integrator: String,
    pub seed: u64,
    /// `exact` or `ema`.
    pub acceleration: String,
    pub ema_lambda: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            duration: 10.0,
            integrator: "rk4".into(),
            seed: 0,
            acceleration: "exact".into(),
            ema_lambda: DEFAULT_EMA_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub q: f64,
    pub dq: f64,
    pub ddq: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySection {
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        #[serde(default)]
        phase: Option<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    Ticktock {
        pose_a: Vec<f64>,
        pose_b: Vec<f64>,
        period: Period,
    },
}

/// One period for every joint, or one per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Period {
    Uniform(f64),
    PerJoint(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub torque_limit: Vec<f64>,
    #[serde(default = "default_r2")]
    pub r2_threshold: f64,
}

fn default_r2() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// `ring` or `growing`.
    pub buffer: String,
    #[serde(default)]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub min_samples: Option<usize>,
    #[serde(default = "default_rate")]
    pub update_rate_hz: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_r2")]
    pub r2_threshold: f64,
    #[serde(default)]
    pub gated: bool,
    #[serde(default)]
    pub gate_error_threshold: Option<f64>,
}

fn default_rate() -> f64 {
    3.0
}

fn default_alpha() -> f64 {
    0.99
}

fn semantic(path: &str, message: impl Into<String>) -> Error {
    Error::Semantic {
        path: path.into(),
        message: message.into(),
    }
}

fn vector(path: &str, v: &[f64], n: usize) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(semantic(
            path,
            format!("expected {n} values for a {n}-joint model, found {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(semantic(path, "values must be finite"));
    }
    Ok(DVector::from_column_slice(v))
}

pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
            .unwrap_or(0);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    if file.format_version != SCENARIO_FORMAT_VERSION {
        return Err(semantic(
            "format_version",
            format!("unsupported format_version {}", file.format_version),
        ));
    }
    Ok(file)
}

/// Resolved scenario plus its simulation settings.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub sim: SimConfig,
    pub model_path: PathBuf,
}

pub fn resolve_scenario(file: &ScenarioFile, base_dir: &Path) -> Result<LoadedScenario> {
    let kind: ScenarioKind = file
        .name
        .parse()
        .map_err(|e: Error| semantic("name", e.to_string()))?;
    let model_path = base_dir.join(&file.model);
    let plant = load_model(&model_path)?;
    let n = plant.dof();

    let mut nominal = match &file.nominal_model {
        Some(p) => {
            let m = load_model(&base_dir.join(p))?;
            if m.dof() != n {
                return Err(semantic("nominal_model", "joint count differs from model"));
            }
            m.theta()
        }
        None => plant.theta(),
    };
    if let Some(s) = file.nominal_scale {
        if !s.is_finite() {
            return Err(semantic("nominal_scale", "must be finite"));
        }
        nominal = ThetaVector::new(nominal.values() * s)?;
    }

    let trajectory = match &file.trajectory {
        TrajectorySection::Sinusoid {
            amplitude,
            frequency,
            phase,
            offset,
        } => {
            let zeros = vec![0.0; n];
            Trajectory::Sinusoid(Sinusoid::new(
                vector("trajectory.amplitude", amplitude, n)?,
                vector("trajectory.frequency", frequency, n)?,
                vector("trajectory.phase", phase.as_ref().unwrap_or(&zeros), n)?,
                vector("trajectory.offset", offset.as_ref().unwrap_or(&zeros), n)?,
            )?)
        }
        TrajectorySection::Ticktock {
            pose_a,
            pose_b,
            period,
        } => {
            let period = match period {
                Period::Uniform(p) => DVector::from_element(n, *p),
                Period::PerJoint(v) => vector("trajectory.period", v, n)?,
            };
            Trajectory::TickTock(
                TickTock::new(
                    vector("trajectory.pose_a", pose_a, n)?,
                    vector("trajectory.pose_b", pose_b, n)?,
                    period,
                )
                .map_err(|e| semantic("trajectory.period", e.to_string()))?,
            )
        }
    };

    let c = &file.controller;
    let controller = ControllerConfig::new(
        vector("controller.kp", &c.kp, n)?,
        vector("controller.kd", &c.kd, n)?,
        c.r2_threshold,
        vector("controller.torque_limit", &c.torque_limit, n)?,
    )
    .map_err(|e| semantic("controller", e.to_string()))?;

    let (estimator, gated) = match &file.estimator {
        None => (None, false),
        Some(e) => {
            let buffer = match e.buffer.as_str() {
                "ring" => BufferMode::Ring {
                    capacity: e.capacity.unwrap_or(50),
                },
                "growing" => BufferMode::Growing {
                    min_samples: e.min_samples.unwrap_or(50),
                },
                other => {
                    return Err(semantic(
                        "estimator.buffer",
                        format!("expected 'ring' or 'growing', found '{other}'"),
                    ))
                }
            };
            if !(e.update_rate_hz > 0.0) {
                return Err(semantic("estimator.update_rate_hz", "must be > 0"));
            }
            (
                Some(EstimatorConfig {
                    buffer,
                    update_period: 1.0 / e.update_rate_hz,
                    alpha: e.alpha,
                    r2_threshold: e.r2_threshold,
                    gate: e
                        .gate_error_threshold
                        .map(|error_threshold| InformationGate { error_threshold }),
                }),
                e.gated,
            )
        }
    };

    let s = &file.sim;
    let integrator = match s.integrator.as_str() {
        "rk4" => Integrator::Rk4,
        "semi_implicit_euler" => Integrator::SemiImplicitEuler,
        other => {
            return Err(semantic(
                "sim.integrator",
                format!("expected 'rk4' or 'semi_implicit_euler', found '{other}'"),
            ))
        }
    };
    let acceleration = match s.acceleration.as_str() {
        "exact" => AccelerationSource::Exact,
        "ema" => AccelerationSource::Ema {
            lambda: s.ema_lambda,
        },
        other => {
            return Err(semantic(
                "sim.acceleration",
                format!("expected 'exact' or 'ema', found '{other}'"),
            ))
        }
    };
    if !(s.dt > 0.0) || !(s.duration >= 0.0) {
        return Err(semantic("sim", "dt must be > 0 and duration >= 0"));
    }
    let nz = &file.noise;
    for (name, v) in [("noise.q", nz.q), ("noise.dq", nz.dq), ("noise.ddq", nz.ddq), ("noise.u", nz.u)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(semantic(name, "noise std must be finite and >= 0"));
        }
    }
    let sim = SimConfig {
        dt: s.dt,
        duration: s.duration,
        integrator,
        noise: NoiseConfig {
            q: nz.q,
            dq: nz.dq,
            ddq: nz.ddq,
            u: nz.u,
        },
        seed: s.seed,
        acceleration,
    };

    let scenario = Scenario {
        kind,
        plant,
        nominal,
        trajectory,
        controller,
        estimator,
        gated,
    };
    scenario.validate()?;
    Ok(LoadedScenario {
        scenario,
        sim,
        model_path,
    })
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path)?;
    let file = parse_scenario_file(&text)?;
    resolve_scenario(&file, path.parent().unwrap_or(Path::new(".")))
}
