//! Stochastic-approximation driver.
//!
//! Each iteration draws a weighted batch from `f(·|θ_t)`, maps it to a
//! target parameter `θ̃ = M(θ_t)` with an [`AdaptationMap`], and moves
//! `θ_{t+1} = Π_W(θ_t + γ_t(θ̃ − θ_t))` where `Π_W` is projection onto the
//! parameter box. The integral estimate `v` is updated from the same batch
//! with the same gain.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::adapters::AdaptationMap;
use crate::density::{draw_batch, ProposalFamily, TargetDensity, WeightedSample};
use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};
use crate::estimator::IntegralEstimate;

/// Gain sequence `γ_t = c / (t + t0 + 1)`, `t = 0, 1, …`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSchedule {
    pub c: f64,
    pub t0: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        Self { c: 1.0, t0: 0.0 }
    }
}

impl GainSchedule {
    /// Requires `c > 0`, `t0 ≥ 0` and `γ_0 = c/(t0+1) ≤ 1`.
    pub fn new(c: f64, t0: f64) -> Result<Self> {
        let schedule = Self { c, t0 };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidGain(format!("scale c = {} must be positive", self.c)));
        }
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidGain(format!("offset t0 = {} must be nonnegative", self.t0)));
        }
        if self.c > self.t0 + 1.0 {
            return Err(Error::InvalidGain(format!(
                "first gain c/(t0+1) = {} exceeds 1",
                self.c / (self.t0 + 1.0)
            )));
        }
        Ok(())
    }

    pub fn gain(&self, t: usize) -> f64 {
        self.c / (t as f64 + self.t0 + 1.0)
    }
}

/// Coordinatewise closed intervals `[lo_d, hi_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidBox(format!(
                "{} lower and {} upper bounds",
                lo.len(),
                hi.len()
            )));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidBox(format!("[{l}, {h}] is not a finite interval")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(t, (l, h))| l <= t && t <= h)
    }

    /// Coordinatewise clamping.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| t.clamp(*l, *h))
            .collect()
    }
}

/// One SA update, `Π_W(θ + γ(θ̃ − θ))`.
pub fn sa_step(theta: &[f64], m_tilde: &[f64], gamma: f64, bounds: &ParameterBox) -> Result<Vec<f64>> {
    if m_tilde.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonfiniteParameter { theta: m_tilde.to_vec() });
    }
    if theta.len() != m_tilde.len() || theta.len() != bounds.dim() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: m_tilde.len() });
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidGain(format!("step gain {gamma} outside (0, 1]")));
    }
    let moved: Vec<f64> = theta.iter().zip(m_tilde).map(|(t, m)| t + gamma * (m - t)).collect();
    Ok(bounds.project(&moved))
}

/// Row `t` of a trace. For `t < T` it holds the parameter used to draw batch
/// `t`, that batch's mean weight and ESS, the gain `γ_t`, and the integral
/// estimate after absorbing the batch. The final row `t = T` holds only the
/// final parameter and estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub theta: Vec<f64>,
    pub v: f64,
    pub mean_w: Option<f64>,
    pub gamma: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationTrace {
    pub seed: u64,
    pub stream: u64,
    pub records: Vec<TraceRecord>,
}

impl AdaptationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_theta(&self) -> &[f64] {
        &self.records.last().expect("trace has a final row").theta
    }

    pub fn final_estimate(&self) -> f64 {
        self.records.last().expect("trace has a final row").v
    }

    /// Parameter in force at the start of iteration `t` (`t = T` is the final one).
    pub fn theta_at(&self, t: usize) -> Option<&[f64]> {
        self.records.get(t).map(|r| r.theta.as_slice())
    }
}

/// An adaptive importance sampler: target, proposal family, adaptation map,
/// gain schedule, parameter box and batch size.
#[derive(Clone, Copy, Debug)]
pub struct AdaptiveSampler<'a> {
    pub target: &'a TargetDensity,
    pub family: &'a dyn ProposalFamily,
    pub adapter: &'a dyn AdaptationMap,
    pub schedule: GainSchedule,
    pub bounds: &'a ParameterBox,
    pub batch_size: usize,
}

impl<'a> AdaptiveSampler<'a> {
    fn validate(&self, theta0: &[f64], iterations: usize) -> Result<()> {
        if iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::EmptyBatch);
        }
        if !self.adapter.supports(self.family) {
            return Err(Error::IncompatibleAdapter {
                adapter: self.adapter.name().to_string(),
                family: self.family.name().to_string(),
            });
        }
        if self.bounds.dim() != self.family.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.family.dim(),
                got: self.bounds.dim(),
            });
        }
        self.schedule.validate()?;
        self.family.check_theta(theta0)?;
        if !self.bounds.contains(theta0) {
            return Err(Error::InvalidBox(format!("initial parameter {theta0:?} lies outside the box")));
        }
        Ok(())
    }

    /// Runs `iterations` adaptation steps from `theta0`. `seed` and `stream`
    /// are recorded in the trace only; randomness comes from `rng`.
    pub fn run(
        &self,
        theta0: &[f64],
        iterations: usize,
        rng: &mut dyn RngCore,
        seed: u64,
        stream: u64,
    ) -> Result<AdaptationTrace> {
        self.validate(theta0, iterations)?;
        let unit = |_: f64| 1.0;
        let mut theta = theta0.to_vec();
        let mut estimate = IntegralEstimate::new();
        let mut records = Vec::with_capacity(iterations + 1);
        for t in 0..iterations {
            let gamma = self.schedule.gain(t);
            let batch = draw_batch(self.family, &theta, self.target, self.batch_size, rng)?;
            let mean_w = batch.iter().map(|s| s.w).sum::<f64>() / batch.len() as f64;
            let v = estimate.absorb(&batch, gamma, &unit)?;
            if !v.is_finite() {
                return Err(Error::IterationDiverged { t, theta });
            }
            let m_tilde = self.adapter.apply(&theta, &batch)?;
            let next = match sa_step(&theta, &m_tilde, gamma, self.bounds) {
                Ok(next) => self.family.project(&next, self.bounds),
                Err(Error::NonfiniteParameter { .. }) => {
                    return Err(Error::IterationDiverged { t, theta: m_tilde })
                }
                Err(e) => return Err(e),
            };
            records.push(TraceRecord {
                t,
                theta: std::mem::replace(&mut theta, next),
                v,
                mean_w: Some(mean_w),
                gamma: Some(gamma),
                ess: effective_sample_size(&batch).ok(),
            });
        }
        records.push(TraceRecord {
            t: iterations,
            theta,
            v: estimate.value().expect("at least one batch absorbed"),
            mean_w: None,
            gamma: None,
            ess: None,
        });
        Ok(AdaptationTrace { seed, stream, records })
    }
}

/// Result of the ascent diagnostic at one parameter value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AscentPoint {
    pub theta: Vec<f64>,
    /// Importance-sampling estimate of `E_π ∂_θ log f(X|θ)`.
    pub gradient: Vec<f64>,
    /// Estimate of the mean-field displacement `M̄(θ) − θ`.
    pub direction: Vec<f64>,
    pub inner_product: f64,
    /// Jackknife standard error of `inner_product`.
    pub std_error: f64,
}

const JACKKNIFE_GROUPS: usize = 20;

fn gradient_and_direction(
    family: &dyn ProposalFamily,
    adapter: &dyn AdaptationMap,
    theta: &[f64],
    batch: &[WeightedSample],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gradient = vec![0.0; theta.len()];
    for s in batch {
        for (g, d) in gradient.iter_mut().zip(family.score(theta, s.x)?) {
            *g += s.w * d;
        }
    }
    gradient.iter_mut().for_each(|g| *g /= batch.len() as f64);
    let m = adapter.apply(theta, batch)?;
    let direction = m.iter().zip(theta).map(|(m, t)| m - t).collect();
    Ok((gradient, direction))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Estimates `⟨E_π ∂_θ log f(X|θ), M̄(θ) − θ⟩` at each grid point from
/// `n_mc` weighted draws of `f(·|θ)`.
///
/// Positive values mean the mean-field step points uphill on `E_π log f`.
/// The sign is reported, not enforced.
pub fn ascent_check(
    target: &TargetDensity,
    family: &dyn ProposalFamily,
    adapter: &dyn AdaptationMap,
    theta_grid: &[Vec<f64>],
    n_mc: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<AscentPoint>> {
    if n_mc < JACKKNIFE_GROUPS {
        return Err(Error::InsufficientBatch { need: JACKKNIFE_GROUPS, got: n_mc });
    }
    theta_grid
        .iter()
        .map(|theta| {
            let batch = draw_batch(family, theta, target, n_mc, rng)?;
            let (gradient, direction) = gradient_and_direction(family, adapter, theta, &batch)?;
            let inner_product = dot(&gradient, &direction);
            let group = n_mc / JACKKNIFE_GROUPS;
            let mut leave_out = Vec::with_capacity(JACKKNIFE_GROUPS);
            for k in 0..JACKKNIFE_GROUPS {
                let rest: Vec<_> = batch[..k * group]
                    .iter()
                    .chain(&batch[(k + 1) * group..])
                    .copied()
                    .collect();
                let (g, d) = gradient_and_direction(family, adapter, theta, &rest)?;
                leave_out.push(dot(&g, &d));
            }
            let k = JACKKNIFE_GROUPS as f64;
            let mean = leave_out.iter().sum::<f64>() / k;
            let var = (k - 1.0) / k * leave_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            Ok(AscentPoint {
                theta: theta.clone(),
                gradient,
                direction,
                inner_product,
                std_error: var.sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::{ExpFamilyMap, MixtureRbMap};
    use crate::density::{importance_weight, Component, FixedComponentMixture, NormalMean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gain_values() {
        let unit = GainSchedule::default();
        assert_eq!(unit.gain(0), 1.0);
        assert_eq!(unit.gain(1), 0.5);
        let g = GainSchedule::new(2.0, 3.0).unwrap();
        assert!((g.gain(6) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gain_rejects_bad_parameters() {
        assert!(GainSchedule::new(0.0, 0.0).is_err());
        assert!(GainSchedule::new(1.0, -1.0).is_err());
        assert!(GainSchedule::new(2.0, 0.0).is_err());
        assert!(GainSchedule::new(2.0, 1.0).is_ok());
    }

    #[test]
    fn gain_sums_diverge_and_squares_converge() {
        let g = GainSchedule::default();
        let (mut s1, mut s2) = (0.0, 0.0);
        for t in 0..1_000_000 {
            s1 += g.gain(t);
            s2 += g.gain(t).powi(2);
        }
        assert!(s1 > 10.0);
        // Σ 1/n² = π²/6
        assert!(s2 < std::f64::consts::PI.powi(2) / 6.0);
    }

    #[test]
    fn sa_step_examples() {
        let b = ParameterBox::new(vec![-10.0], vec![10.0]).unwrap();
        assert_eq!(sa_step(&[1.0], &[3.0], 0.5, &b).unwrap(), vec![2.0]);
        assert_eq!(sa_step(&[1.0], &[3.0], 1.0, &b).unwrap(), vec![3.0]);
        let tiny = sa_step(&[1.0], &[3.0], 1e-300, &b).unwrap();
        assert!((tiny[0] - 1.0).abs() < 1e-15);
        assert_eq!(sa_step(&[1.0], &[30.0], 1.0, &b).unwrap(), vec![10.0]);
        assert!(matches!(
            sa_step(&[1.0], &[f64::NAN], 0.5, &b),
            Err(Error::NonfiniteParameter { .. })
        ));
        assert!(matches!(
            sa_step(&[1.0], &[f64::INFINITY], 0.5, &b),
            Err(Error::NonfiniteParameter { .. })
        ));
        assert!(sa_step(&[1.0], &[2.0], 1.5, &b).is_err());
    }

    #[test]
    fn box_validation_and_projection() {
        assert!(ParameterBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(ParameterBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
        let b = ParameterBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let p = b.project(&[2.0, -3.0]);
        assert_eq!(p, vec![1.0, -1.0]);
        assert_eq!(b.project(&p), p);
        assert!(b.contains(&p));
    }

    #[test]
    fn single_iteration_full_gain_is_clamped_weighted_draw() {
        let target = TargetDensity::standard_normal();
        let family = NormalMean::unit();
        let bounds = ParameterBox::new(vec![-0.5], vec![0.5]).unwrap();
        let sampler = AdaptiveSampler {
            target: &target,
            family: &family,
            adapter: &ExpFamilyMap,
            schedule: GainSchedule::default(),
            bounds: &bounds,
            batch_size: 1,
        };
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trace = sampler.run(&[0.3], 1, &mut rng, seed, 0).unwrap();
            let mut replay = ChaCha8Rng::seed_from_u64(seed);
            let draw = family.sample(&[0.3], &mut replay).unwrap();
            let w = importance_weight(&target, &family, &[0.3], draw.x).unwrap();
            assert_eq!(trace.records.len(), 2);
            // θ + 1·(m − θ) equals m up to one rounding
            assert!((trace.final_theta()[0] - (w * draw.x).clamp(-0.5, 0.5)).abs() < 1e-15);
            assert_eq!(trace.final_estimate(), w);
        }
    }

    #[test]
    fn trace_stays_in_box_and_is_deterministic() {
        let target = TargetDensity::mixture(&[
            (1.0 / 3.0, Component::normal(-1.0, 1.0)),
            (2.0 / 3.0, Component::normal(2.0, 1.0)),
        ])
        .unwrap();
        let family =
            FixedComponentMixture::new(vec![Component::normal(-1.0, 1.0), Component::normal(2.0, 1.0)])
                .unwrap();
        let adapter = MixtureRbMap::new(family.components().to_vec());
        let bounds = family.default_box();
        let sampler = AdaptiveSampler {
            target: &target,
            family: &family,
            adapter: &adapter,
            schedule: GainSchedule::default(),
            bounds: &bounds,
            batch_size: 1,
        };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sampler.run(&[0.5], 300, &mut rng, seed, 0).unwrap()
        };
        let a = run(9);
        assert_eq!(a, run(9));
        assert_eq!(a.records.len(), 301);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!(r.t, i);
            assert!(bounds.contains(&r.theta));
        }
    }

    #[test]
    fn adapt_rejects_incompatible_setup() {
        let target = TargetDensity::standard_normal();
        let family = NormalMean::unit();
        let mix_adapter = MixtureRbMap::new(vec![Component::normal(0.0, 1.0); 2]);
        let bounds = family.default_box();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sampler = AdaptiveSampler {
            target: &target,
            family: &family,
            adapter: &mix_adapter,
            schedule: GainSchedule::default(),
            bounds: &bounds,
            batch_size: 1,
        };
        assert!(matches!(
            sampler.run(&[0.0], 5, &mut rng, 0, 0),
            Err(Error::IncompatibleAdapter { .. })
        ));
        sampler.adapter = &ExpFamilyMap;
        assert!(sampler.run(&[0.0], 0, &mut rng, 0, 0).is_err());
        assert!(sampler.run(&[25.0], 5, &mut rng, 0, 0).is_err());
    }

    #[test]
    fn mean_squared_error_shrinks_with_iterations() {
        let target = TargetDensity::standard_normal();
        let family = NormalMean::unit();
        let bounds = family.default_box();
        let sampler = AdaptiveSampler {
            target: &target,
            family: &family,
            adapter: &ExpFamilyMap,
            schedule: GainSchedule::default(),
            bounds: &bounds,
            batch_size: 1,
        };
        let msd = |iters: usize| {
            let sq: Vec<f64> = (0..200u64)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let trace = sampler.run(&[1.0], iters, &mut rng, seed, 0).unwrap();
                    trace.final_theta()[0].powi(2)
                })
                .collect();
            let mean = sq.iter().sum::<f64>() / sq.len() as f64;
            let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sq.len() - 1) as f64;
            (mean, (var / sq.len() as f64).sqrt())
        };
        let (short, se_short) = msd(50);
        let (long, se_long) = msd(500);
        assert!(short - long > 3.0 * (se_short.powi(2) + se_long.powi(2)).sqrt(), "{short} {long}");
    }
}
