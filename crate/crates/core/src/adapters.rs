//! Adaptation maps `θ̃ = M(θ; {x_i, w_i})` and the quadratic minorizer
//! behind the Cauchy-scale update.
//!
//! Every map here is a batch average divided by `N`, the batch length. None
//! of them renormalizes by `Σ w_i`, so in finite samples the mixture outputs
//! are generally off the simplex; projection in the SA step restores
//! feasibility.

use serde::{Deserialize, Serialize};

use crate::density::{full_weights, Component, ProposalFamily, WeightedSample};
use crate::error::{Error, Result};
use crate::quadrature::log_sum_exp;

/// A mapping from the current parameter and a weighted batch to a new
/// parameter of the same dimension.
pub trait AdaptationMap: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn supports(&self, family: &dyn ProposalFamily) -> bool;
    fn apply(&self, theta: &[f64], batch: &[WeightedSample]) -> Result<Vec<f64>>;
}

fn nonempty(batch: &[WeightedSample]) -> Result<f64> {
    if batch.is_empty() {
        Err(Error::EmptyBatch)
    } else {
        Ok(batch.len() as f64)
    }
}

/// Weighted sample mean `(1/N) Σ w_i x_i`, the moment map for mean-parameterized
/// exponential families.
pub fn exp_family_map(batch: &[WeightedSample]) -> Result<f64> {
    let n = nonempty(batch)?;
    Ok(batch.iter().map(|s| s.w * s.x).sum::<f64>() / n)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExpFamilyMap;

impl AdaptationMap for ExpFamilyMap {
    fn name(&self) -> &'static str {
        "exp-family"
    }

    fn supports(&self, family: &dyn ProposalFamily) -> bool {
        family.exponential_family().is_some() && family.dim() == 1
    }

    fn apply(&self, _theta: &[f64], batch: &[WeightedSample]) -> Result<Vec<f64>> {
        Ok(vec![exp_family_map(batch)?])
    }
}

fn positive_scale(sigma_sq: f64) -> Result<()> {
    if sigma_sq > 0.0 && sigma_sq.is_finite() {
        Ok(())
    } else {
        Err(Error::NonpositiveScale(sigma_sq))
    }
}

/// Weighted Cauchy log-likelihood `a(σ²) = Σ w_i log f(x_i|σ)` with
/// `f(x|σ) = σ / (π(σ² + x²))`.
pub fn cauchy_log_likelihood(sigma_sq: f64, batch: &[WeightedSample]) -> Result<f64> {
    positive_scale(sigma_sq)?;
    let ln_pi = std::f64::consts::PI.ln();
    Ok(batch
        .iter()
        .map(|s| s.w * (0.5 * sigma_sq.ln() - ln_pi - (sigma_sq + s.x * s.x).ln()))
        .sum())
}

/// `a′(σ²) = Σ w_i [1/(2σ²) − 1/(σ² + x_i²)]`.
pub fn cauchy_score(sigma_sq: f64, batch: &[WeightedSample]) -> Result<f64> {
    positive_scale(sigma_sq)?;
    Ok(batch.iter().map(|s| s.w * (0.5 / sigma_sq - 1.0 / (sigma_sq + s.x * s.x))).sum())
}

/// Second derivative of `a` and its data-free lower bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureBound {
    pub second_derivative: f64,
    pub lower_bound: f64,
}

/// `a″(σ²) = Σ w_i [−1/(2σ⁴) + 1/(σ² + x_i²)²]`, bounded below by
/// `−Σ w_i / (2σ⁴)` since every dropped term is nonnegative.
pub fn cauchy_curvature_bound(sigma_sq: f64, batch: &[WeightedSample]) -> Result<CurvatureBound> {
    positive_scale(sigma_sq)?;
    let s4 = sigma_sq * sigma_sq;
    let total_w: f64 = batch.iter().map(|s| s.w).sum();
    let lower_bound = -total_w / (2.0 * s4);
    let excess: f64 = batch.iter().map(|s| s.w / (sigma_sq + s.x * s.x).powi(2)).sum();
    Ok(CurvatureBound { second_derivative: lower_bound + excess, lower_bound })
}

/// Maximizer of the quadratic minorizer with curvature `C < 0`,
/// `σ² − a′(σ²)/C`, floored at `floor`.
pub fn cauchy_mm_map(sigma_sq: f64, batch: &[WeightedSample], curvature: f64, floor: f64) -> Result<f64> {
    if !(curvature < 0.0) {
        return Err(Error::NonnegativeCurvature(curvature));
    }
    let score = cauchy_score(sigma_sq, batch)?;
    Ok((sigma_sq - score / curvature).max(floor))
}

/// How the Cauchy MM map picks its curvature constant `C`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureMode {
    /// `C = −Σw / (2 σ²_min²)`: the bound at the box floor, valid over the
    /// whole box, so the quadratic is a global minorizer there.
    #[default]
    BoxFloor,
    /// `C = −Σw / (2 σ_t⁴)`: the bound at the current iterate. The quadratic
    /// minorizes `a` for every `σ² ≥ σ_t²`.
    Anchored,
    /// `C⁻¹` folded into the gain: the map returns `σ² + a′(σ²)`.
    Absorbed,
}

/// The Cauchy-scale MM adapter. Requires batches of at least two draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyMmMap {
    pub mode: CurvatureMode,
    /// Box floor `σ²_min`.
    pub floor: f64,
}

impl CauchyMmMap {
    pub const MIN_BATCH: usize = 2;

    pub fn new(mode: CurvatureMode, floor: f64) -> Result<Self> {
        positive_scale(floor)?;
        Ok(Self { mode, floor })
    }

    /// Curvature constant for this batch, or `None` when every weight is zero
    /// (then `a′ = 0` and the map is stationary).
    pub fn curvature(&self, sigma_sq: f64, batch: &[WeightedSample]) -> Option<f64> {
        let total_w: f64 = batch.iter().map(|s| s.w).sum();
        if total_w <= 0.0 {
            return None;
        }
        match self.mode {
            CurvatureMode::BoxFloor => Some(-total_w / (2.0 * self.floor * self.floor)),
            CurvatureMode::Anchored => Some(-total_w / (2.0 * sigma_sq * sigma_sq)),
            CurvatureMode::Absorbed => Some(-1.0),
        }
    }

    pub fn minorizer(&self, sigma_sq: f64, batch: &[WeightedSample]) -> Result<QuadraticMinorizer> {
        let curvature = self.curvature(sigma_sq, batch).ok_or(Error::ZeroWeights)?;
        cauchy_minorizer(sigma_sq, batch, curvature)
    }

    pub fn map(&self, sigma_sq: f64, batch: &[WeightedSample]) -> Result<f64> {
        if batch.len() < Self::MIN_BATCH {
            return Err(Error::InsufficientBatch { need: Self::MIN_BATCH, got: batch.len() });
        }
        match self.curvature(sigma_sq, batch) {
            None => {
                positive_scale(sigma_sq)?;
                Ok(sigma_sq)
            }
            Some(_) if self.mode == CurvatureMode::Absorbed => {
                Ok(sigma_sq + cauchy_score(sigma_sq, batch)?)
            }
            Some(c) => cauchy_mm_map(sigma_sq, batch, c, self.floor),
        }
    }
}

impl AdaptationMap for CauchyMmMap {
    fn name(&self) -> &'static str {
        "cauchy-mm"
    }

    fn supports(&self, family: &dyn ProposalFamily) -> bool {
        family.name() == "cauchy-scale"
    }

    fn apply(&self, theta: &[f64], batch: &[WeightedSample]) -> Result<Vec<f64>> {
        if theta.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: theta.len() });
        }
        Ok(vec![self.map(theta[0], batch)?])
    }
}

/// A surrogate `Q(·|θ_t)` with `Q(θ_t|θ_t) = a(θ_t)` and `Q ≤ a`.
pub trait Minorizer {
    fn anchor(&self) -> f64;
    fn value(&self, theta: f64) -> f64;
    fn maximizer(&self) -> f64;
}

/// `Q(θ) = a(θ_t) + (θ − θ_t) a′(θ_t) + ½ (θ − θ_t)² C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticMinorizer {
    pub anchor: f64,
    pub value_at_anchor: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl Minorizer for QuadraticMinorizer {
    fn anchor(&self) -> f64 {
        self.anchor
    }

    fn value(&self, theta: f64) -> f64 {
        let d = theta - self.anchor;
        self.value_at_anchor + d * self.slope + 0.5 * d * d * self.curvature
    }

    fn maximizer(&self) -> f64 {
        self.anchor - self.slope / self.curvature
    }
}

pub fn cauchy_minorizer(
    sigma_sq: f64,
    batch: &[WeightedSample],
    curvature: f64,
) -> Result<QuadraticMinorizer> {
    if !(curvature < 0.0) {
        return Err(Error::NonnegativeCurvature(curvature));
    }
    Ok(QuadraticMinorizer {
        anchor: sigma_sq,
        value_at_anchor: cauchy_log_likelihood(sigma_sq, batch)?,
        slope: cauchy_score(sigma_sq, batch)?,
        curvature,
    })
}

/// Responsibilities `α_d p_d(x) / Σ_d' α_d' p_d'(x)`, computed in log space.
fn responsibilities(components: &[Component], alpha: &[f64], x: f64, out: &mut [f64]) {
    for ((o, a), c) in out.iter_mut().zip(alpha).zip(components) {
        *o = a.ln() + c.ln_pdf(x);
    }
    let norm = log_sum_exp(out);
    for o in out.iter_mut() {
        *o = if norm.is_finite() { (*o - norm).exp() } else { 0.0 };
    }
}

/// Rao-Blackwellized mixture-weight update: for each free coordinate,
/// `Σ_i w_i α_d p_d(x_i) / Σ_d' α_d' p_d'(x_i) / N`.
pub fn mixture_rb_map(
    components: &[Component],
    alpha: &[f64],
    batch: &[WeightedSample],
) -> Result<Vec<f64>> {
    let n = nonempty(batch)?;
    let full = full_weights(components.len(), alpha)?;
    let mut resp = vec![0.0; full.len()];
    let mut acc = vec![0.0; alpha.len()];
    for s in batch {
        responsibilities(components, &full, s.x, &mut resp);
        for (a, r) in acc.iter_mut().zip(&resp) {
            *a += s.w * r;
        }
    }
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Indicator mixture-weight update: `Σ_i w_i 1{Z_i = d} / N` for each free
/// coordinate `d`.
pub fn mixture_indicator_map(alpha: &[f64], batch: &[WeightedSample]) -> Result<Vec<f64>> {
    let n = nonempty(batch)?;
    let mut acc = vec![0.0; alpha.len()];
    for (index, s) in batch.iter().enumerate() {
        let z = s.component.ok_or(Error::MissingComponentIndex { index })?;
        if let Some(a) = acc.get_mut(z) {
            *a += s.w;
        }
    }
    Ok(acc.into_iter().map(|a| a / n).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureRbMap {
    components: Vec<Component>,
}

impl MixtureRbMap {
    pub fn new(components: Vec<Component>) -> Self {
        Self { components }
    }
}

impl AdaptationMap for MixtureRbMap {
    fn name(&self) -> &'static str {
        "mixture-rb"
    }

    fn supports(&self, family: &dyn ProposalFamily) -> bool {
        family.name() == "mixture" && family.dim() + 1 == self.components.len()
    }

    fn apply(&self, theta: &[f64], batch: &[WeightedSample]) -> Result<Vec<f64>> {
        mixture_rb_map(&self.components, theta, batch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureIndicatorMap {
    components: usize,
}

impl MixtureIndicatorMap {
    pub fn new(components: usize) -> Self {
        Self { components }
    }
}

impl AdaptationMap for MixtureIndicatorMap {
    fn name(&self) -> &'static str {
        "mixture-indicator"
    }

    fn supports(&self, family: &dyn ProposalFamily) -> bool {
        family.name() == "mixture" && family.dim() + 1 == self.components
    }

    fn apply(&self, theta: &[f64], batch: &[WeightedSample]) -> Result<Vec<f64>> {
        full_weights(self.components, theta)?;
        mixture_indicator_map(theta, batch)
    }
}
