//! Kullback divergence, finite-difference and minorization checks, and the
//! effective sample size.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::adapters::Minorizer;
use crate::density::{ProposalFamily, TargetDensity, WeightedSample};
use crate::error::{Error, Result};
use crate::quadrature::simpson;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum KlMethod {
    /// Composite Simpson on `[lo, hi]`.
    Quadrature { lo: f64, hi: f64, panels: usize },
    /// Average of `log π/f` over exact draws from the target.
    MonteCarlo { samples: usize },
}

impl Default for KlMethod {
    fn default() -> Self {
        KlMethod::Quadrature { lo: -30.0, hi: 30.0, panels: 100_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlWarning {
    /// The integrand is still non-negligible at the grid edge, which happens
    /// when the proposal's tails are lighter than the target's.
    UnboundedDivergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: KlMethod,
    pub warning: Option<KlWarning>,
}

const EDGE_TOLERANCE: f64 = 1e-10;

/// `∫ π log(π / f(·|θ))`.
pub fn kl_divergence(
    target: &TargetDensity,
    proposal: &dyn ProposalFamily,
    theta: &[f64],
    method: KlMethod,
    rng: Option<&mut dyn RngCore>,
) -> Result<KlEstimate> {
    proposal.check_theta(theta)?;
    let integrand = |x: f64| -> f64 {
        let lp = target.ln_density(x);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        let lf = proposal.ln_density(theta, x).unwrap_or(f64::NEG_INFINITY);
        lp.exp() * (lp - lf)
    };
    match method {
        KlMethod::Quadrature { lo, hi, panels } => {
            if !(lo < hi) || panels == 0 {
                return Err(Error::Config(format!("bad quadrature grid [{lo}, {hi}] / {panels}")));
            }
            let value = simpson(integrand, lo, hi, panels);
            let edge = integrand(lo).abs().max(integrand(hi).abs());
            let warning = (!value.is_finite() || !(edge <= EDGE_TOLERANCE))
                .then_some(KlWarning::UnboundedDivergence);
            Ok(KlEstimate { value, std_error: 0.0, method, warning })
        }
        KlMethod::MonteCarlo { samples } => {
            let rng = rng.ok_or_else(|| Error::Config("Monte Carlo KL needs an rng".into()))?;
            if samples < 2 {
                return Err(Error::InsufficientBatch { need: 2, got: samples });
            }
            let mut terms = Vec::with_capacity(samples);
            for _ in 0..samples {
                let x = target.sample(rng)?;
                terms.push(target.ln_density(x) - proposal.ln_density(theta, x)?);
            }
            let n = samples as f64;
            let value = terms.iter().sum::<f64>() / n;
            let var = terms.iter().map(|t| (t - value).powi(2)).sum::<f64>() / (n - 1.0);
            let warning = (!value.is_finite()).then_some(KlWarning::UnboundedDivergence);
            Ok(KlEstimate { value, std_error: (var / n).sqrt(), method, warning })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdCheck {
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// Compares an analytic derivative with the central difference
/// `(f(θ+h) − f(θ−h)) / 2h`.
pub fn fd_check<F>(function: F, analytic: f64, point: f64, step: f64) -> FdCheck
where
    F: Fn(f64) -> f64,
{
    let numeric = (function(point + step) - function(point - step)) / (2.0 * step);
    let scale = analytic.abs().max(numeric.abs());
    let relative_error = if scale == 0.0 { 0.0 } else { (analytic - numeric).abs() / scale };
    FdCheck { analytic, numeric, relative_error }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinorizationReport {
    pub passed: bool,
    /// `|Q(θ_t) − a(θ_t)|`.
    pub tangency_error: f64,
    /// Largest `Q(θ) − a(θ)` over the grid, or 0 if none is positive.
    pub worst_violation: f64,
    pub worst_point: Option<f64>,
}

pub const MINORIZATION_TOL: f64 = 1e-10;

/// Checks `Q(θ_t|θ_t) = a(θ_t)` and `Q(θ|θ_t) ≤ a(θ)` on `grid`, both to
/// within [`MINORIZATION_TOL`].
pub fn minorization_check<F>(minorizer: &dyn Minorizer, objective: F, grid: &[f64]) -> MinorizationReport
where
    F: Fn(f64) -> f64,
{
    let anchor = minorizer.anchor();
    let tangency_error = (minorizer.value(anchor) - objective(anchor)).abs();
    let mut worst_violation = 0.0;
    let mut worst_point = None;
    for &g in grid {
        let gap = minorizer.value(g) - objective(g);
        if gap > worst_violation || gap.is_nan() {
            worst_violation = if gap.is_nan() { f64::INFINITY } else { gap };
            worst_point = Some(g);
        }
    }
    let tangency_ok = tangency_error <= MINORIZATION_TOL;
    if !tangency_ok && worst_point.is_none() {
        worst_point = Some(anchor);
    }
    MinorizationReport {
        passed: tangency_ok && worst_violation <= MINORIZATION_TOL,
        tangency_error,
        worst_violation,
        worst_point,
    }
}

/// `(Σw)² / Σw²`.
pub fn effective_sample_size(batch: &[WeightedSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (s1, s2) = batch.iter().fold((0.0, 0.0), |(a, b), s| (a + s.w, b + s.w * s.w));
    if !(s1 > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(s1 * s1 / s2)
}
