//! Regressor timing versus chain length.

use std::hint::black_box;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::JointState;
use crate::error::{Error, Result};
use crate::model::random_chain;
use crate::regressor::compute_regressor;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub mean_us: f64,
    pub std_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub min_links: usize,
    pub max_links: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            min_links: 2,
            max_links: 32,
            repeats: 20,
            seed: 0,
        }
    }
}

/// Times one regressor evaluation for every chain length in
/// `min_links..=max_links`. Each repeat is a batch of evaluations sized so
/// that the batch takes well above the timer resolution, and each round of
/// repeats visits every size.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.min_links == 0 || cfg.max_links < cfg.min_links {
        return Err(Error::InvalidInput(format!(
            "need 1 <= min_links <= max_links, got {}..={}",
            cfg.min_links, cfg.max_links
        )));
    }
    if cfg.repeats < 2 {
        return Err(Error::InvalidInput("repeats must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::new();
    for n in cfg.min_links..=cfg.max_links {
        let model = random_chain(&mut rng, n);
        let mut v = || DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let state = JointState::new(v(), v(), v())?;

        // Calibrate the batch size to roughly 2 ms, after one warm-up batch.
        let mut batch = 1;
        for _ in 0..2 {
            let t0 = Instant::now();
            for _ in 0..batch {
                black_box(compute_regressor(&model, &state)?);
            }
            let single = (t0.elapsed().as_secs_f64() / batch as f64).max(1e-7);
            batch = ((2e-3 / single).ceil() as usize).clamp(1, 100_000);
        }
        cases.push((model, state, batch, Vec::with_capacity(cfg.repeats)));
    }

    // Repeats sweep all sizes in turn, so slow drift in machine state (clock
    // scaling, background load) affects every size alike.
    for _ in 0..cfg.repeats {
        for (model, state, batch, samples) in &mut cases {
            let t = Instant::now();
            for _ in 0..*batch {
                black_box(compute_regressor(black_box(&*model), black_box(&*state))?);
            }
            samples.push(t.elapsed().as_secs_f64() * 1e6 / *batch as f64);
        }
    }

    let mut rows = Vec::with_capacity(cases.len());
    for (model, _, _, samples) in &cases {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
            / (samples.len() - 1) as f64;
        rows.push(BenchRow {
            n: model.dof(),
            mean_us: mean,
            std_us: var.sqrt(),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln(mean_us)` against `ln(n)`.
pub fn loglog_slope(rows: &[BenchRow]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.n > 0 && r.mean_us > 0.0)
        .map(|r| ((r.n as f64).ln(), r.mean_us.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate("need at least two timing rows".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all rows have the same n".into()));
    }
    Ok(sxy / sxx)
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,mean_us,std_us\n");
    for r in rows {
        out += &format!("{},{:.6},{:.6}\n", r.n, r.mean_us, r.std_us);
    }
    out
}
