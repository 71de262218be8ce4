//! Target and proposal densities, the built-in proposal families and
//! importance-weight computation.
//!
//! All densities live on the real line. Weights are formed in log space,
//! `w = exp(ln π(x) − ln f(x|θ))`, so that far-tail draws underflow to a
//! zero weight instead of producing `0/0`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::ParameterBox;
use crate::error::{Error, Result};
use crate::quadrature::{log_sum_exp, simpson};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Range and resolution used to verify that a custom target is normalized.
pub const NORMALIZATION_RANGE: (f64, f64) = (-30.0, 30.0);
pub const NORMALIZATION_PANELS: usize = 100_000;
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// A fixed univariate density used as a target or as a mixture component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Component {
    Normal { mean: f64, sd: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl Component {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Component::Normal { mean, sd }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Component::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z
            }
            Component::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                -(PI * scale).ln() - (1.0 + z * z).ln()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Component::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Component::Cauchy { location, scale } => {
                let z = Cauchy::new(0.0, 1.0).expect("unit Cauchy").sample(rng);
                location + scale * z
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Component::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Component::Cauchy { location, scale } => {
                location.is_finite() && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid component {self:?}")))
        }
    }
}

type LogDensityFn = dyn Fn(f64) -> f64 + Send + Sync;
type SamplerFn = dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync;

/// The normalized density π whose integral is being estimated.
#[derive(Clone)]
pub struct TargetDensity {
    name: String,
    ln_density: Arc<LogDensityFn>,
    oracle_sampler: Option<Arc<SamplerFn>>,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetDensity")
            .field("name", &self.name)
            .field("has_sampler", &self.oracle_sampler.is_some())
            .finish()
    }
}

impl TargetDensity {
    /// Wraps a log density, rejecting it unless it integrates to one over
    /// [`NORMALIZATION_RANGE`].
    pub fn from_log_density<F>(name: impl Into<String>, ln_density: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let (lo, hi) = NORMALIZATION_RANGE;
        let integral = simpson(|x| ln_density(x).exp(), lo, hi, NORMALIZATION_PANELS);
        if !((integral - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(Error::UnnormalizedTarget { integral });
        }
        Ok(Self {
            name: name.into(),
            ln_density: Arc::new(ln_density),
            oracle_sampler: None,
        })
    }

    /// Attaches an exact sampler, used only by diagnostics.
    pub fn with_sampler<S>(mut self, sampler: S) -> Self
    where
        S: Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        self.oracle_sampler = Some(Arc::new(sampler));
        self
    }

    pub fn standard_normal() -> Self {
        Self::mixture(&[(1.0, Component::normal(0.0, 1.0))]).expect("standard normal")
    }

    /// Finite mixture `Σ p_k c_k(x)` with weights summing to one. Comes with
    /// an exact sampler.
    pub fn mixture(parts: &[(f64, Component)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Config("target mixture has no components".into()));
        }
        for (p, c) in parts {
            c.validate()?;
            if !(*p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("target weight {p} must be positive")));
            }
        }
        let total: f64 = parts.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::UnnormalizedTarget { integral: total });
        }
        let name = parts
            .iter()
            .map(|(p, c)| format!("{p}*{c:?}"))
            .collect::<Vec<_>>()
            .join(" + ");
        let parts: Arc<[(f64, Component)]> = parts.to_vec().into();
        let ln_parts = Arc::clone(&parts);
        let ln_density = move |x: f64| {
            let terms: Vec<f64> = ln_parts.iter().map(|(p, c)| p.ln() + c.ln_pdf(x)).collect();
            log_sum_exp(&terms)
        };
        let sampler = move |rng: &mut dyn RngCore| {
            let mut u: f64 = rng.random();
            for (p, c) in parts.iter() {
                if u < *p {
                    return c.sample(rng);
                }
                u -= p;
            }
            parts[parts.len() - 1].1.sample(rng)
        };
        Ok(Self {
            name,
            ln_density: Arc::new(ln_density),
            oracle_sampler: Some(Arc::new(sampler)),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Support of every built-in target: the whole real line.
    pub fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        (self.ln_density)(x)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    pub fn has_sampler(&self) -> bool {
        self.oracle_sampler.is_some()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Result<f64> {
        let sampler = self.oracle_sampler.as_ref().ok_or(Error::MissingOracleSampler)?;
        Ok(sampler(rng))
    }
}

/// One draw from a proposal, with the generating component for mixtures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub x: f64,
    pub component: Option<usize>,
}

/// A draw paired with its importance weight `π(x)/f(x|θ)`.
///
/// `component` is the zero-based index of the mixture component that
/// generated `x`; it is `None` for non-mixture proposals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedSample {
    pub x: f64,
    pub w: f64,
    pub component: Option<usize>,
}

impl WeightedSample {
    pub fn new(x: f64, w: f64) -> Self {
        Self { x, w, component: None }
    }

    pub fn with_component(x: f64, w: f64, component: usize) -> Self {
        Self { x, w, component: Some(component) }
    }
}

/// One-dimensional exponential family in mean parameterization,
/// `f(x|μ) = exp(η(μ)x − φ(μ)) · base(x)`.
pub trait ExponentialFamily {
    fn natural_parameter(&self, mean: f64) -> f64;
    fn log_partition(&self, mean: f64) -> f64;
    fn ln_base_measure(&self, x: f64) -> f64;
}

/// A parametric proposal family `f(·|θ)`, `θ ∈ R^D`.
pub trait ProposalFamily: Send + Sync + fmt::Debug {
    /// Family tag used to match adapters ("normal-mean", "cauchy-scale", "mixture").
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    /// Fails if `theta` is outside the family's parameter space.
    fn check_theta(&self, theta: &[f64]) -> Result<()>;
    fn ln_density(&self, theta: &[f64], x: f64) -> Result<f64>;
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Draw>;
    /// Gradient of `ln f(x|θ)` with respect to `θ`.
    fn score(&self, theta: &[f64], x: f64) -> Result<Vec<f64>>;
    fn default_box(&self) -> ParameterBox;

    /// Maps `theta` into the feasible part of `bounds`.
    fn project(&self, theta: &[f64], bounds: &ParameterBox) -> Vec<f64> {
        bounds.project(theta)
    }

    fn exponential_family(&self) -> Option<&dyn ExponentialFamily> {
        None
    }

    fn density(&self, theta: &[f64], x: f64) -> Result<f64> {
        Ok(self.ln_density(theta, x)?.exp())
    }
}

fn check_dim(expected: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: theta.len() });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonfiniteParameter { theta: theta.to_vec() });
    }
    Ok(())
}

/// Normal proposals `N(θ, sd²)` with adaptable mean and fixed spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalMean {
    sd: f64,
}

impl NormalMean {
    pub fn new(sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::NonpositiveScale(sd));
        }
        Ok(Self { sd })
    }

    /// Unit-variance family.
    pub fn unit() -> Self {
        Self { sd: 1.0 }
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }
}

impl ProposalFamily for NormalMean {
    fn name(&self) -> &'static str {
        "normal-mean"
    }

    fn dim(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(1, theta)
    }

    fn ln_density(&self, theta: &[f64], x: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(Component::normal(theta[0], self.sd).ln_pdf(x))
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Draw> {
        self.check_theta(theta)?;
        let x = Component::normal(theta[0], self.sd).sample(rng);
        Ok(Draw { x, component: None })
    }

    fn score(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(vec![(x - theta[0]) / (self.sd * self.sd)])
    }

    fn default_box(&self) -> ParameterBox {
        ParameterBox::new(vec![-20.0], vec![20.0]).expect("valid box")
    }

    fn exponential_family(&self) -> Option<&dyn ExponentialFamily> {
        Some(self)
    }
}

impl ExponentialFamily for NormalMean {
    fn natural_parameter(&self, mean: f64) -> f64 {
        mean / (self.sd * self.sd)
    }

    fn log_partition(&self, mean: f64) -> f64 {
        mean * mean / (2.0 * self.sd * self.sd)
    }

    fn ln_base_measure(&self, x: f64) -> f64 {
        Component::normal(0.0, self.sd).ln_pdf(x)
    }
}

/// Centred Cauchy proposals `f(x|σ) = σ / (π(σ² + x²))`, parameterized by
/// `θ = σ²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CauchyScale;

impl CauchyScale {
    fn scale_sq(theta: &[f64]) -> Result<f64> {
        check_dim(1, theta)?;
        let s = theta[0];
        if s <= 0.0 {
            return Err(Error::NonpositiveScale(s));
        }
        Ok(s)
    }
}

impl ProposalFamily for CauchyScale {
    fn name(&self) -> &'static str {
        "cauchy-scale"
    }

    fn dim(&self) -> usize {
        1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        Self::scale_sq(theta).map(|_| ())
    }

    fn ln_density(&self, theta: &[f64], x: f64) -> Result<f64> {
        let s = Self::scale_sq(theta)?;
        Ok(0.5 * s.ln() - PI.ln() - (s + x * x).ln())
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Draw> {
        let s = Self::scale_sq(theta)?;
        let x = Component::Cauchy { location: 0.0, scale: s.sqrt() }.sample(rng);
        Ok(Draw { x, component: None })
    }

    fn score(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        let s = Self::scale_sq(theta)?;
        Ok(vec![0.5 / s - 1.0 / (s + x * x)])
    }

    fn default_box(&self) -> ParameterBox {
        ParameterBox::new(vec![0.01], vec![100.0]).expect("valid box")
    }
}

/// Mixtures `Σ_d α_d p_d(x)` of fixed components with adaptable weights.
///
/// `θ = (α_1, …, α_{D−1})`; the last weight is implied as `1 − Σ θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedComponentMixture {
    components: Vec<Component>,
}

impl FixedComponentMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Config("a mixture needs at least two components".into()));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Reconstitutes the full weight vector `(α_1, …, α_D)` from the free
    /// coordinates.
    pub fn full_weights(&self, theta: &[f64]) -> Result<Vec<f64>> {
        full_weights(self.components.len(), theta)
    }
}

pub(crate) fn full_weights(components: usize, theta: &[f64]) -> Result<Vec<f64>> {
    check_dim(components - 1, theta)?;
    let free: f64 = theta.iter().sum();
    if theta.iter().any(|&a| a <= 0.0) || free >= 1.0 {
        return Err(Error::InvalidMixtureWeights { weights: theta.to_vec() });
    }
    let mut full = theta.to_vec();
    full.push(1.0 - free);
    Ok(full)
}

impl ProposalFamily for FixedComponentMixture {
    fn name(&self) -> &'static str {
        "mixture"
    }

    fn dim(&self) -> usize {
        self.components.len() - 1
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.full_weights(theta).map(|_| ())
    }

    fn ln_density(&self, theta: &[f64], x: f64) -> Result<f64> {
        let alpha = self.full_weights(theta)?;
        let terms: Vec<f64> = alpha
            .iter()
            .zip(&self.components)
            .map(|(a, c)| a.ln() + c.ln_pdf(x))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Result<Draw> {
        let alpha = self.full_weights(theta)?;
        let mut u: f64 = rng.random();
        let mut chosen = alpha.len() - 1;
        for (d, a) in alpha.iter().enumerate() {
            if u < *a {
                chosen = d;
                break;
            }
            u -= a;
        }
        let x = self.components[chosen].sample(rng);
        Ok(Draw { x, component: Some(chosen) })
    }

    fn score(&self, theta: &[f64], x: f64) -> Result<Vec<f64>> {
        let ln_f = self.ln_density(theta, x)?;
        let last = self.components[self.components.len() - 1].ln_pdf(x);
        Ok(self.components[..self.dim()]
            .iter()
            .map(|c| (c.ln_pdf(x) - ln_f).exp() - (last - ln_f).exp())
            .collect())
    }

    fn default_box(&self) -> ParameterBox {
        let d = self.dim();
        ParameterBox::new(vec![0.001; d], vec![0.999; d]).expect("valid box")
    }

    /// Clamps each free weight into the box, then if the implied last weight
    /// falls below the smallest lower bound, projects the free weights onto
    /// `{α_d ≥ lo_d, Σ α_d = 1 − min lo}`.
    fn project(&self, theta: &[f64], bounds: &ParameterBox) -> Vec<f64> {
        let clamped = bounds.project(theta);
        let floor = bounds.lower().iter().copied().fold(f64::INFINITY, f64::min);
        let budget = 1.0 - floor;
        if clamped.iter().sum::<f64>() <= budget {
            return clamped;
        }
        let spare = budget - bounds.lower().iter().sum::<f64>();
        let shifted: Vec<f64> = clamped.iter().zip(bounds.lower()).map(|(a, lo)| a - lo).collect();
        project_to_simplex(&shifted, spare)
            .into_iter()
            .zip(bounds.lower())
            .map(|(y, lo)| y + lo)
            .collect()
    }
}

/// Euclidean projection of `v` onto `{y ≥ 0, Σ y = radius}`.
fn project_to_simplex(v: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (k, u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (k + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// `π(x) / f(x|θ)`, computed in log space.
pub fn importance_weight(
    target: &TargetDensity,
    proposal: &dyn ProposalFamily,
    theta: &[f64],
    x: f64,
) -> Result<f64> {
    let ln_target = target.ln_density(x);
    let ln_proposal = proposal.ln_density(theta, x)?;
    if ln_proposal == f64::NEG_INFINITY {
        if ln_target == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        return Err(Error::ProposalZeroAtSample { x });
    }
    let w = (ln_target - ln_proposal).exp();
    if !w.is_finite() {
        return Err(Error::NonfiniteWeight { x });
    }
    Ok(w)
}

/// Draws `n` independent samples from `f(·|θ)` and weights them against the
/// target.
pub fn draw_batch(
    proposal: &dyn ProposalFamily,
    theta: &[f64],
    target: &TargetDensity,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<WeightedSample>> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    proposal.check_theta(theta)?;
    (0..n)
        .map(|_| {
            let draw = proposal.sample(theta, rng)?;
            let w = importance_weight(target, proposal, theta, draw.x)?;
            Ok(WeightedSample { x: draw.x, w, component: draw.component })
        })
        .collect()
}
