//! Recursive integral estimate `v_{t+1} = v_t + γ_t(mean_i h(x_i) w_i − v_t)`,
//! the fixed-proposal baseline and the replication harness behind the
//! mean-squared-error tables.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{draw_batch, ProposalFamily, TargetDensity, WeightedSample};
use crate::engine::GainSchedule;
use crate::error::{Error, Result};

/// One recursion step: `v + γ (mean of h(x_i) w_i − v)`.
pub fn integral_update(
    v: f64,
    batch: &[WeightedSample],
    gamma: f64,
    integrand: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    Ok(v + gamma * (batch_mean(batch, integrand)? - v))
}

fn batch_mean(batch: &[WeightedSample], integrand: &dyn Fn(f64) -> f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(batch.iter().map(|s| integrand(s.x) * s.w).sum::<f64>() / batch.len() as f64)
}

/// Running estimate of `∫ h π`. The first absorbed batch initializes `v`
/// to its mean; later batches use [`integral_update`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntegralEstimate {
    v: Option<f64>,
    t: usize,
}

impl IntegralEstimate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn absorb(
        &mut self,
        batch: &[WeightedSample],
        gamma: f64,
        integrand: &dyn Fn(f64) -> f64,
    ) -> Result<f64> {
        let v = match self.v {
            None => batch_mean(batch, integrand)?,
            Some(v) => integral_update(v, batch, gamma, integrand)?,
        };
        self.v = Some(v);
        self.t += 1;
        Ok(v)
    }

    pub fn value(&self) -> Option<f64> {
        self.v
    }

    pub fn iterations(&self) -> usize {
        self.t
    }
}

/// The same recursion as the adaptive sampler, with `θ` frozen.
pub fn fixed_proposal_estimate(
    target: &TargetDensity,
    proposal: &dyn ProposalFamily,
    theta_fixed: &[f64],
    schedule: &GainSchedule,
    iterations: usize,
    batch_size: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::Config("at least one iteration is required".into()));
    }
    schedule.validate()?;
    let unit = |_: f64| 1.0;
    let mut estimate = IntegralEstimate::new();
    for t in 0..iterations {
        let batch = draw_batch(proposal, theta_fixed, target, batch_size, rng)?;
        estimate.absorb(&batch, schedule.gain(t), &unit)?;
    }
    Ok(estimate.value().expect("at least one batch"))
}

/// Summary of one arm over `R` replications against a known truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub mse: f64,
    /// Monte Carlo standard error of `mse`.
    pub se: f64,
    pub mean_estimate: f64,
    /// Standard error of `mean_estimate`.
    pub mean_estimate_se: f64,
    pub replications: usize,
    pub diverged: usize,
}

/// Largest tolerated fraction of diverged replications per arm.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;

/// Aggregates per-replication final estimates. Summation runs in index
/// order so the result does not depend on scheduling.
pub fn summarize_arm(arm: &str, estimates: &[f64], truth: f64, diverged: usize) -> ArmSummary {
    let r = estimates.len() as f64;
    let sq: Vec<f64> = estimates.iter().map(|v| (v - truth).powi(2)).collect();
    let mse = sq.iter().sum::<f64>() / r;
    let mean = estimates.iter().sum::<f64>() / r;
    let (var_sq, var_v) = if estimates.len() > 1 {
        (
            sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (r - 1.0),
            estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0),
        )
    } else {
        (0.0, 0.0)
    };
    ArmSummary {
        arm: arm.to_string(),
        mse,
        se: (var_sq / r).sqrt(),
        mean_estimate: mean,
        mean_estimate_se: (var_v / r).sqrt(),
        replications: estimates.len(),
        diverged,
    }
}

/// Runs `replications` independent calls of `run_one(index)` in parallel and
/// summarizes them. Replications that fail with
/// [`Error::IterationDiverged`] are counted and excluded; more than 1% of
/// them is an error, as is any other failure.
pub fn replicate_arm<F>(arm: &str, replications: usize, truth: f64, run_one: F) -> Result<ArmSummary>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    if replications < 2 {
        return Err(Error::Config("at least two replications are required".into()));
    }
    let outcomes: Vec<Result<f64>> = (0..replications).into_par_iter().map(&run_one).collect();
    let mut estimates = Vec::with_capacity(replications);
    let mut diverged = 0;
    for outcome in outcomes {
        match outcome {
            Ok(v) => estimates.push(v),
            Err(Error::IterationDiverged { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if diverged as f64 > MAX_DIVERGED_FRACTION * replications as f64 {
        return Err(Error::TooManyDivergent { failed: diverged, total: replications });
    }
    Ok(summarize_arm(arm, &estimates, truth, diverged))
}

/// Mean-squared-error report for one experiment, one entry per arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub example: String,
    pub arms: Vec<ArmSummary>,
    pub replications: usize,
    pub config_digest: String,
}

impl MseReport {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == name)
    }
}

/// Runs every arm of `config` for `replications` seeded replications.
pub fn replicate_mse(
    config: &crate::experiment::ExperimentConfig,
    replications: usize,
    master_seed: u64,
) -> Result<MseReport> {
    let config = crate::experiment::ExperimentConfig {
        replications,
        seed: master_seed,
        ..config.clone()
    };
    crate::experiment::mse_report(&config)
}
