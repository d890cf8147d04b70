//! Least-squares identification of the stacked inertial parameters.
//!
//! Offline fits use the Moore-Penrose pseudoinverse of the stacked regressor
//! (minimum-norm minimiser). A nominal parameter vector can be blended in by
//! solving the augmented system `[α Y; (1−α) 1] Θ ≈ [α U; (1−α) Θ₀]`. The
//! online estimator keeps a decimated sample buffer, refits on every admitted
//! sample and publishes immutable snapshots that readers on other threads can
//! pick up without blocking ingestion.

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::JointState;
use crate::error::{check_len, Error, Result};
use crate::linalg::{singular_values, thin_svd};
use crate::model::{ChainModel, ThetaVector};
use crate::regressor::compute_regressor;

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_REL_CUTOFF: f64 = 1e-10;

/// One control tick of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: JointState,
    pub u: DVector<f64>,
}

impl Sample {
    pub fn new(t: f64, state: JointState, u: DVector<f64>) -> Result<Self> {
        check_len("joint torque", state.dof(), u.len())?;
        if !t.is_finite() || !u.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("sample must be finite".into()));
        }
        Ok(Self { t, state, u })
    }
}

/// `Y_C` and `U_C` for `s` samples of an `n`-joint chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub y: DMatrix<f64>,
    pub u: DVector<f64>,
    pub dof: usize,
}

impl StackedSystem {
    pub fn new(y: DMatrix<f64>, u: DVector<f64>, dof: usize) -> Result<Self> {
        check_len("torque stack", y.nrows(), u.len())?;
        if dof == 0 || !y.nrows().is_multiple_of(dof) {
            return Err(Error::InvalidInput(format!(
                "row count {} is not a multiple of {dof} joints",
                y.nrows()
            )));
        }
        Ok(Self { y, u, dof })
    }

    pub fn num_samples(&self) -> usize {
        self.y.nrows() / self.dof
    }
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: ThetaVector,
    /// `1 − eᵀe / U_Cᵀ U_C`
    pub r_squared: f64,
    /// Same ratio restricted to each joint's rows.
    pub per_joint_r_squared: Vec<f64>,
    pub residual_norm: f64,
    /// Singular values of `Y_C`, descending.
    pub singular_values: DVector<f64>,
    /// Singular values of `Y_C` above the pseudoinverse cutoff.
    pub rank: usize,
}

pub fn stack(model: &ChainModel, samples: &[Sample]) -> Result<StackedSystem> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("cannot stack an empty sample list".into()));
    }
    let n = model.dof();
    let p = model.num_params();
    let mut y = DMatrix::zeros(samples.len() * n, p);
    let mut u = DVector::zeros(samples.len() * n);
    for (s, sample) in samples.iter().enumerate() {
        check_len("sample torque", n, sample.u.len())?;
        let r = compute_regressor(model, &sample.state)?;
        y.view_mut((s * n, 0), (n, p)).copy_from(&r.matrix);
        u.rows_mut(s * n, n).copy_from(&sample.u);
    }
    StackedSystem::new(y, u, n)
}

/// `R² = 1 − eᵀe / uᵀu`; a zero torque vector scores 1 only when the residual
/// is also zero.
pub fn r_squared(u: &DVector<f64>, residual: &DVector<f64>) -> f64 {
    ratio_r2(residual.norm_squared(), u.norm_squared())
}

fn ratio_r2(ee: f64, uu: f64) -> f64 {
    if uu > 0.0 {
        1.0 - ee / uu
    } else if ee == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

fn per_joint_r2(u: &DVector<f64>, residual: &DVector<f64>, dof: usize) -> Vec<f64> {
    (0..dof)
        .map(|j| {
            let (mut ee, mut uu) = (0.0, 0.0);
            for r in (j..u.len()).step_by(dof) {
                ee += residual[r] * residual[r];
                uu += u[r] * u[r];
            }
            ratio_r2(ee, uu)
        })
        .collect()
}

/// Minimum-norm least-squares solution of `a x ≈ b` through the SVD, with
/// singular values below `rel_cutoff · σ_max` dropped. Returns the solution,
/// the singular values (descending) and the retained rank.
pub fn pinv_solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rel_cutoff: f64,
) -> Result<(DVector<f64>, DVector<f64>, usize)> {
    check_len("right-hand side", a.nrows(), b.len())?;
    let svd = thin_svd(a)?;
    let sigma = &svd.sigma;
    let smax = sigma.max();
    let cutoff = rel_cutoff * smax;
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    for k in 0..sigma.len() {
        if sigma[k] > cutoff && sigma[k] > 0.0 {
            rank += 1;
            let coeff = svd.u.column(k).dot(b) / sigma[k];
            x += svd.v.column(k) * coeff;
        }
    }
    Ok((x, svd.sigma, rank))
}

fn finish(sys: &StackedSystem, theta: DVector<f64>, sv: DVector<f64>) -> Result<FitResult> {
    let residual = &sys.u - &sys.y * &theta;
    let cutoff = PINV_REL_CUTOFF * sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    Ok(FitResult {
        r_squared: r_squared(&sys.u, &residual),
        per_joint_r_squared: per_joint_r2(&sys.u, &residual, sys.dof),
        residual_norm: residual.norm(),
        theta_hat: ThetaVector::new(theta)?,
        singular_values: sv,
        rank,
    })
}

/// `Θ̂ = pinv(Y_C) U_C`.
pub fn fit(sys: &StackedSystem) -> Result<FitResult> {
    if sys.y.is_empty() {
        return Err(Error::Degenerate("empty stacked system".into()));
    }
    if sys.y.amax() == 0.0 {
        return Err(Error::Degenerate("stacked regressor is identically zero".into()));
    }
    let (theta, sv, _) = pinv_solve(&sys.y, &sys.u, PINV_REL_CUTOFF)?;
    finish(sys, theta, sv)
}

/// Least squares blended with a nominal parameter vector, `0 < alpha < 1`.
pub fn fit_with_prior(sys: &StackedSystem, theta_0: &ThetaVector, alpha: f64) -> Result<FitResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let p = sys.y.ncols();
    check_len("nominal parameter vector", p, theta_0.len())?;
    let rows = sys.y.nrows();
    let mut y_aug = DMatrix::zeros(rows + p, p);
    y_aug.view_mut((0, 0), (rows, p)).copy_from(&(&sys.y * alpha));
    y_aug
        .view_mut((rows, 0), (p, p))
        .fill_diagonal(1.0 - alpha);
    let mut u_aug = DVector::zeros(rows + p);
    u_aug.rows_mut(0, rows).copy_from(&(&sys.u * alpha));
    u_aug
        .rows_mut(rows, p)
        .copy_from(&(theta_0.values() * (1.0 - alpha)));
    let (theta, _, _) = pinv_solve(&y_aug, &u_aug, PINV_REL_CUTOFF)?;
    finish(sys, theta, singular_values(&sys.y)?)
}

/// `Û_C = Y_C Θ̂`.
pub fn predict_torque(
    model: &ChainModel,
    theta_hat: &ThetaVector,
    samples: &[Sample],
) -> Result<DVector<f64>> {
    check_len("parameter vector", model.num_params(), theta_hat.len())?;
    let n = model.dof();
    let mut out = DVector::zeros(samples.len() * n);
    for (s, sample) in samples.iter().enumerate() {
        let r = compute_regressor(model, &sample.state)?;
        out.rows_mut(s * n, n).copy_from(&(&r.matrix * theta_hat.values()));
    }
    Ok(out)
}

/// Exponential moving average of finite-differenced joint velocities.
#[derive(Debug, Clone)]
pub struct AccelerationFilter {
    lambda: f64,
    prev_dq: Option<DVector<f64>>,
    estimate: Option<DVector<f64>>,
}

/// Default EMA smoothing factor.
pub const DEFAULT_EMA_LAMBDA: f64 = 0.2;

impl AccelerationFilter {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "smoothing factor must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            prev_dq: None,
            estimate: None,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Feeds one velocity measurement taken `dt` after the previous one. The
    /// first call has no history and returns zeros.
    pub fn update(&mut self, dq: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let n = dq.len();
        let est = match self.prev_dq.as_ref() {
            None => DVector::zeros(n),
            Some(prev) => {
                check_len("joint velocity", prev.len(), n)?;
                let raw = (dq - prev) / dt;
                let old = self.estimate.clone().unwrap_or_else(|| DVector::zeros(n));
                raw * self.lambda + old * (1.0 - self.lambda)
            }
        };
        self.prev_dq = Some(dq.clone());
        self.estimate = Some(est.clone());
        Ok(est)
    }
}

pub fn estimate_acceleration(
    filter: &mut AccelerationFilter,
    dq: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    filter.update(dq, dt)
}

/// Sample buffer policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BufferMode {
    /// Fixed-size ring; the model counts as valid only once it is full.
    Ring { capacity: usize },
    /// Unbounded; counts as full once `min_samples` have been admitted.
    Growing { min_samples: usize },
}

/// Optional admission filter: a sample enters the buffer only if it adds
/// information (raises the numerical rank or the smallest retained singular
/// value of the buffered regressor) or the current snapshot mispredicts its
/// torque by more than `error_threshold` (max-norm, N·m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationGate {
    pub error_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub buffer: BufferMode,
    /// Seconds between admitted samples (and refits).
    pub update_period: f64,
    pub alpha: f64,
    pub r2_threshold: f64,
    pub gate: Option<InformationGate>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            buffer: BufferMode::Ring { capacity: 50 },
            update_period: 1.0 / 3.0,
            alpha: 0.99,
            r2_threshold: 0.95,
            gate: None,
        }
    }
}

/// Published estimator state. Never mutated after publication.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Timestamp of the newest sample in the fit.
    pub t: f64,
    pub sequence: u64,
    pub fit: FitResult,
    pub buffer_len: usize,
    pub buffer_full: bool,
    /// Buffer full and `R² ≥ r2_threshold`.
    pub model_valid: bool,
}

type Slot = Arc<RwLock<Option<Arc<Snapshot>>>>;

/// Cloneable read handle onto the latest published snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotReader {
    slot: Slot,
}

impl SnapshotReader {
    pub fn latest(&self) -> Option<Arc<Snapshot>> {
        self.slot
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

struct Buffered {
    t: f64,
    y: DMatrix<f64>,
    u: DVector<f64>,
}

/// Decimated online least-squares estimator.
pub struct OnlineEstimator {
    model: ChainModel,
    theta_0: ThetaVector,
    config: EstimatorConfig,
    buffer: VecDeque<Buffered>,
    grid_origin: Option<f64>,
    admitted_ticks: u64,
    sequence: u64,
    slot: Slot,
}

impl OnlineEstimator {
    pub fn new(model: ChainModel, theta_0: ThetaVector, config: EstimatorConfig) -> Result<Self> {
        check_len("nominal parameter vector", model.num_params(), theta_0.len())?;
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0, 1), got {}",
                config.alpha
            )));
        }
        if !(config.update_period >= 0.0) {
            return Err(Error::InvalidInput("update period must be >= 0".into()));
        }
        match config.buffer {
            BufferMode::Ring { capacity: 0 } => {
                return Err(Error::InvalidInput("buffer capacity must be positive".into()))
            }
            BufferMode::Growing { min_samples: 0 } => {
                return Err(Error::InvalidInput("min_samples must be positive".into()))
            }
            _ => {}
        }
        Ok(Self {
            model,
            theta_0,
            config,
            buffer: VecDeque::new(),
            grid_origin: None,
            admitted_ticks: 0,
            sequence: 0,
            slot: Arc::new(RwLock::new(None)),
        })
    }

    pub fn model(&self) -> &ChainModel {
        &self.model
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn reader(&self) -> SnapshotReader {
        SnapshotReader {
            slot: Arc::clone(&self.slot),
        }
    }

    pub fn latest(&self) -> Option<Arc<Snapshot>> {
        self.reader().latest()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_full(&self) -> bool {
        match self.config.buffer {
            BufferMode::Ring { capacity } => self.buffer.len() >= capacity,
            BufferMode::Growing { min_samples } => self.buffer.len() >= min_samples,
        }
    }

    fn due(&self, t: f64) -> bool {
        match self.grid_origin {
            None => true,
            Some(t0) => {
                let next = t0 + self.admitted_ticks as f64 * self.config.update_period;
                t >= next - 1e-9
            }
        }
    }

    /// Offers one sample. Samples arriving between decimation instants are
    /// dropped; an admitted sample triggers a refit and returns the newly
    /// published snapshot.
    pub fn update(&mut self, sample: &Sample) -> Result<Option<Arc<Snapshot>>> {
        check_len("sample joints", self.model.dof(), sample.u.len())?;
        if !self.due(sample.t) {
            return Ok(None);
        }
        if self.grid_origin.is_none() {
            self.grid_origin = Some(sample.t);
        }
        // Consume every grid slot up to this sample.
        let t0 = self.grid_origin.unwrap_or(sample.t);
        while self.config.update_period > 0.0
            && t0 + self.admitted_ticks as f64 * self.config.update_period <= sample.t + 1e-9
        {
            self.admitted_ticks += 1;
        }

        let r = compute_regressor(&self.model, &sample.state)?;
        let entry = Buffered {
            t: sample.t,
            y: r.matrix,
            u: sample.u.clone(),
        };
        if let Some(gate) = self.config.gate {
            if !self.gate_admits(&gate, &entry) {
                return Ok(None);
            }
        }
        if let BufferMode::Ring { capacity } = self.config.buffer {
            while self.buffer.len() >= capacity {
                self.buffer.pop_front();
            }
        }
        self.buffer.push_back(entry);
        self.refit().map(Some)
    }

    fn stacked(&self, extra: Option<&Buffered>, skip_front: usize) -> Result<StackedSystem> {
        let n = self.model.dof();
        let p = self.model.num_params();
        let rows: Vec<&Buffered> = self
            .buffer
            .iter()
            .skip(skip_front)
            .chain(extra)
            .collect();
        let mut y = DMatrix::zeros(rows.len() * n, p);
        let mut u = DVector::zeros(rows.len() * n);
        for (s, b) in rows.iter().enumerate() {
            y.view_mut((s * n, 0), (n, p)).copy_from(&b.y);
            u.rows_mut(s * n, n).copy_from(&b.u);
        }
        StackedSystem::new(y, u, n)
    }

    fn gate_admits(&self, gate: &InformationGate, entry: &Buffered) -> bool {
        if self.buffer.is_empty() {
            return true;
        }
        let retained = |sys: &StackedSystem| {
            let sv = singular_values(&sys.y).unwrap_or_else(|_| DVector::zeros(0));
            let cutoff = PINV_REL_CUTOFF * sv.max();
            let kept: Vec<f64> = sv.iter().copied().filter(|&s| s > cutoff && s > 0.0).collect();
            (kept.len(), kept.last().copied().unwrap_or(0.0))
        };
        let evict = match self.config.buffer {
            BufferMode::Ring { capacity } if self.buffer.len() >= capacity => 1,
            _ => 0,
        };
        let (Ok(current), Ok(candidate)) = (self.stacked(None, 0), self.stacked(Some(entry), evict))
        else {
            return true;
        };
        let (r0, s0) = retained(&current);
        let (r1, s1) = retained(&candidate);
        if r1 > r0 || (r1 == r0 && s1 > s0) {
            return true;
        }
        match self.latest() {
            Some(snap) => {
                let pred = &entry.y * snap.fit.theta_hat.values();
                (&entry.u - pred).amax() > gate.error_threshold
            }
            None => true,
        }
    }

    fn refit(&mut self) -> Result<Arc<Snapshot>> {
        let sys = self.stacked(None, 0)?;
        let fit = fit_with_prior(&sys, &self.theta_0, self.config.alpha)?;
        let buffer_full = self.is_full();
        self.sequence += 1;
        let snapshot = Arc::new(Snapshot {
            t: self.buffer.back().map(|b| b.t).unwrap_or(0.0),
            sequence: self.sequence,
            model_valid: buffer_full && fit.r_squared >= self.config.r2_threshold,
            buffer_full,
            buffer_len: self.buffer.len(),
            fit,
        });
        *self.slot.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::clone(&snapshot));
        Ok(snapshot)
    }
}

/// Free-function form of [`OnlineEstimator::update`].
pub fn online_update(est: &mut OnlineEstimator, sample: &Sample) -> Result<Option<Arc<Snapshot>>> {
    est.update(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(rows: &[f64], cols: usize, u: &[f64]) -> StackedSystem {
        let y = DMatrix::from_row_slice(u.len(), cols, rows);
        StackedSystem::new(y, DVector::from_row_slice(u), 1).unwrap()
    }

    #[test]
    fn zero_torque_gives_zero_theta() {
        let sys = StackedSystem::new(
            DMatrix::from_fn(20, 10, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0),
            DVector::zeros(20),
            2,
        )
        .unwrap();
        let f = fit(&sys).unwrap();
        assert_eq!(f.theta_hat.values().amax(), 0.0);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn rank_one_system_gets_minimum_norm_solution() {
        // Every row is a multiple of (1, 1, 0, ..., 0); u = 2·row·(1,1,...)
        let mut rows = vec![0.0; 30];
        for r in 0..3 {
            rows[r * 10] = (r + 1) as f64;
            rows[r * 10 + 1] = (r + 1) as f64;
        }
        let sys = system(&rows, 10, &[2.0, 4.0, 6.0]);
        let f = fit(&sys).unwrap();
        let th = f.theta_hat.values();
        assert!((th[0] - 1.0).abs() < 1e-12 && (th[1] - 1.0).abs() < 1e-12);
        assert!(th.rows(2, 8).amax() < 1e-12);
        assert!(f.residual_norm < 1e-12);
        assert_eq!(f.rank, 1);
    }

    #[test]
    fn degenerate_and_alpha_errors() {
        let sys = system(&[0.0; 20], 10, &[1.0, 2.0]);
        assert!(matches!(fit(&sys), Err(Error::Degenerate(_))));
        let th0 = ThetaVector::new(DVector::from_fn(10, |i, _| i as f64)).unwrap();
        for alpha in [0.0, 1.0, -0.5, 1.5] {
            assert!(fit_with_prior(&sys, &th0, alpha).is_err());
        }
        let f = fit_with_prior(&sys, &th0, 0.5).unwrap();
        assert!((f.theta_hat.values() - th0.values()).amax() < 1e-12);
    }

    #[test]
    fn r_squared_edge_cases() {
        let u = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(r_squared(&u, &DVector::zeros(2)), 1.0);
        assert_eq!(r_squared(&DVector::zeros(2), &DVector::zeros(2)), 1.0);
        assert_eq!(r_squared(&DVector::zeros(2), &u), f64::NEG_INFINITY);
        assert!((r_squared(&u, &DVector::from_vec(vec![1.0, 0.0])) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ema_filter_behaviour() {
        let dt = 1e-3;
        let mut f = AccelerationFilter::new(0.2).unwrap();
        let c = DVector::from_vec(vec![0.4, -1.0]);
        for _ in 0..200 {
            assert_eq!(f.update(&c, dt).unwrap(), DVector::zeros(2));
        }
        let a = 3.0;
        let mut f = AccelerationFilter::new(0.2).unwrap();
        let mut last = DVector::zeros(1);
        for k in 0..=(5.0_f64 / 0.2) as usize + 1 {
            last = f.update(&DVector::from_element(1, a * k as f64 * dt), dt).unwrap();
        }
        assert!((last[0] - a).abs() < 0.01 * a, "{last}");

        let mut raw = AccelerationFilter::new(1.0).unwrap();
        raw.update(&DVector::from_element(1, 1.0), 0.5).unwrap();
        let d = raw.update(&DVector::from_element(1, 2.0), 0.5).unwrap();
        assert_eq!(d[0], 2.0);
        assert!(raw.update(&DVector::from_element(1, 2.0), 0.0).is_err());
        assert!(AccelerationFilter::new(0.0).is_err());
    }
}
