use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::alphabet::frame_alphabets;
use crate::error::Result;
use crate::numerics::Vector;
use crate::quantizer::{check_stability, ffsd_run_with, StabilityCheck};

#[derive(Clone, Debug, Serialize)]
pub struct TrialsReport {
    pub trials: usize,
    pub n_values: Vec<usize>,
    pub order: usize,
    pub sigma: u64,
    pub delta: f64,
    pub alpha: f64,
    /// Largest `max_n ‖v_n‖` over every trial and `N`.
    pub max_state_norm: f64,
    pub bound: f64,
    pub violations: usize,
    /// Trials where some `‖y_n‖` exceeded `δ`.
    pub not_applicable: usize,
    pub passed: bool,
}

/// Uniform sample from the closed ball of radius `radius` in `R^d`.
pub fn sample_ball(rng: &mut impl Rng, d: usize, radius: f64) -> Vector {
    loop {
        let g = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            let u: f64 = rng.random();
            return g * (radius * u.powf(1.0 / d as f64) / norm);
        }
    }
}

/// Runs the quantizer on `trials` random signals in the `δ`-ball for every
/// `N` in the grid and compares the worst state norm with the bound.
pub fn stability_trials(trials: usize, cfg: &ExperimentConfig) -> Result<TrialsReport> {
    let resolved = cfg.resolve()?;
    let params = &resolved.stability;
    let d = cfg.signal.len();
    let mut n_values = cfg.n_grid.clone();
    n_values.sort_unstable();
    n_values.dedup();

    let mut max_state_norm = 0.0_f64;
    let mut violations = 0;
    let mut not_applicable = 0;
    for &n in &n_values {
        let frame = cfg.frame_for(n)?;
        let alphabets = frame_alphabets(&frame);
        let outcomes = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                let x = sample_ball(&mut rng, d, params.delta);
                let y = frame.analysis(&x)?;
                let run = ffsd_run_with(&frame, &alphabets, &resolved.filter, &y)?;
                Ok((run.max_state_norm, check_stability(&y, &run, params)))
            })
            .collect::<Result<Vec<_>>>()?;
        for (norm, check) in outcomes {
            max_state_norm = max_state_norm.max(norm);
            match check {
                StabilityCheck::Within => {}
                StabilityCheck::Violation => violations += 1,
                StabilityCheck::NotApplicable => not_applicable += 1,
            }
        }
    }
    Ok(TrialsReport {
        trials,
        n_values,
        order: resolved.filter.order(),
        sigma: resolved.filter.sigma(),
        delta: params.delta,
        alpha: params.alpha,
        max_state_norm,
        bound: params.c_bound,
        violations,
        not_applicable,
        passed: violations == 0,
    })
}
