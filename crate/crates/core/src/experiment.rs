//! Experiment configuration, the three built-in presets, seeding, and the
//! `run` / `table1` / `density-curve` / `check` drivers behind the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::{
    cauchy_curvature_bound, cauchy_log_likelihood, cauchy_score, AdaptationMap, CauchyMmMap,
    CurvatureMode, ExpFamilyMap, MixtureIndicatorMap, MixtureRbMap,
};
use crate::density::{
    CauchyScale, Component, FixedComponentMixture, NormalMean, ProposalFamily, TargetDensity,
    WeightedSample,
};
use crate::diagnostics::{
    effective_sample_size, fd_check, kl_divergence, minorization_check, KlMethod,
};
use crate::engine::{AdaptationTrace, AdaptiveSampler, GainSchedule, ParameterBox};
use crate::error::{Error, Result};
use crate::estimator::{fixed_proposal_estimate, replicate_arm, IntegralEstimate, MseReport};

/// True value of `∫ π`, the quantity every experiment estimates.
pub const TRUTH: f64 = 1.0;
pub const DEFAULT_REPLICATIONS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    NormalMean,
    CauchyScale,
    MixtureWeights,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::NormalMean, Preset::CauchyScale, Preset::MixtureWeights];

    pub fn name(self) -> &'static str {
        match self {
            Preset::NormalMean => "normal-mean",
            Preset::CauchyScale => "cauchy-scale",
            Preset::MixtureWeights => "mixture-weights",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{name}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPart {
    pub weight: f64,
    pub component: Component,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProposalSpec {
    NormalMean { sd: f64 },
    CauchyScale,
    Mixture { components: Vec<Component> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum AdapterSpec {
    ExpFamily,
    CauchyMm {
        #[serde(default)]
        curvature: CurvatureMode,
    },
    MixtureRb,
    MixtureIndicator,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub target: Vec<TargetPart>,
    pub proposal: ProposalSpec,
    pub theta0: Vec<f64>,
    pub adapter: AdapterSpec,
    pub iterations: usize,
    pub batch: usize,
    pub gain: GainSchedule,
    #[serde(rename = "box")]
    pub bounds: ParameterBox,
    pub fixed_arms: Vec<Vec<f64>>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub diagnostics: bool,
}

fn example3_parts() -> Vec<TargetPart> {
    vec![
        TargetPart { weight: 1.0 / 3.0, component: Component::normal(-1.0, 1.0) },
        TargetPart { weight: 2.0 / 3.0, component: Component::normal(2.0, 1.0) },
    ]
}

/// Gain used by every preset.
pub const PRESET_GAIN: GainSchedule = GainSchedule { c: 2.0, t0: 10.0 };

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let standard_normal = vec![TargetPart { weight: 1.0, component: Component::normal(0.0, 1.0) }];
        let (target, proposal, theta0, adapter, iterations, batch, bounds, fixed_arms) = match preset {
            Preset::NormalMean => (
                standard_normal,
                ProposalSpec::NormalMean { sd: 1.0 },
                vec![1.0],
                AdapterSpec::ExpFamily,
                500,
                1,
                NormalMean::unit().default_box(),
                vec![vec![1.0], vec![0.1]],
            ),
            Preset::CauchyScale => (
                standard_normal,
                ProposalSpec::CauchyScale,
                vec![4.0],
                AdapterSpec::CauchyMm { curvature: CurvatureMode::Anchored },
                250,
                2,
                CauchyScale.default_box(),
                vec![vec![4.0], vec![1.1 * 1.1]],
            ),
            Preset::MixtureWeights => (
                example3_parts(),
                ProposalSpec::Mixture {
                    components: vec![Component::normal(-1.0, 1.0), Component::normal(2.0, 1.0)],
                },
                vec![0.5],
                AdapterSpec::MixtureRb,
                500,
                1,
                ParameterBox::new(vec![0.001], vec![0.999]).expect("valid box"),
                vec![vec![0.5], vec![0.35]],
            ),
        };
        Self {
            experiment: preset.name().to_string(),
            target,
            proposal,
            theta0,
            adapter,
            iterations,
            batch,
            gain: PRESET_GAIN,
            bounds,
            fixed_arms,
            replications: DEFAULT_REPLICATIONS,
            seed: DEFAULT_SEED,
            out: None,
            format: OutputFormat::Csv,
            diagnostics: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        Experiment::build(self).map(|_| ())
    }

    pub fn arm_labels(&self) -> Vec<String> {
        std::iter::once("adaptive".to_string())
            .chain((1..=self.fixed_arms.len()).map(|k| format!("fixed-{k}")))
            .collect()
    }
}

/// Independent stream for `(master seed, arm, replication)`.
pub fn replication_rng(master_seed: u64, arm: usize, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(arm, replication));
    rng
}

pub fn stream_id(arm: usize, replication: usize) -> u64 {
    ((arm as u64) << 32) | replication as u64
}

/// Keeps `θ̃ = θ`; drives the fixed-proposal arms through the same loop.
#[derive(Clone, Copy, Debug)]
struct FrozenMap;

impl AdaptationMap for FrozenMap {
    fn name(&self) -> &'static str {
        "frozen"
    }

    fn supports(&self, _family: &dyn ProposalFamily) -> bool {
        true
    }

    fn apply(&self, theta: &[f64], _batch: &[WeightedSample]) -> Result<Vec<f64>> {
        Ok(theta.to_vec())
    }
}

/// A validated configuration with its densities and adapter built.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub target: TargetDensity,
    pub family: Box<dyn ProposalFamily>,
    pub adapter: Box<dyn AdaptationMap>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let parts: Vec<(f64, Component)> = config.target.iter().map(|p| (p.weight, p.component)).collect();
        let target = TargetDensity::mixture(&parts)?;
        let family: Box<dyn ProposalFamily> = match &config.proposal {
            ProposalSpec::NormalMean { sd } => Box::new(NormalMean::new(*sd)?),
            ProposalSpec::CauchyScale => Box::new(CauchyScale),
            ProposalSpec::Mixture { components } => Box::new(FixedComponentMixture::new(components.clone())?),
        };
        let bounds = ParameterBox::new(config.bounds.lower().to_vec(), config.bounds.upper().to_vec())?;
        let adapter: Box<dyn AdaptationMap> = match (&config.adapter, &config.proposal) {
            (AdapterSpec::ExpFamily, _) => Box::new(ExpFamilyMap),
            (AdapterSpec::CauchyMm { curvature }, _) => {
                if config.batch < CauchyMmMap::MIN_BATCH {
                    return Err(Error::Config("the cauchy-mm adapter needs a batch of at least 2".into()));
                }
                Box::new(CauchyMmMap::new(*curvature, bounds.lower()[0])?)
            }
            (AdapterSpec::MixtureRb, ProposalSpec::Mixture { components }) => {
                Box::new(MixtureRbMap::new(components.clone()))
            }
            (AdapterSpec::MixtureIndicator, ProposalSpec::Mixture { components }) => {
                Box::new(MixtureIndicatorMap::new(components.len()))
            }
            (spec, _) => {
                return Err(Error::IncompatibleAdapter {
                    adapter: format!("{spec:?}"),
                    family: family.name().to_string(),
                })
            }
        };
        if !adapter.supports(family.as_ref()) {
            return Err(Error::IncompatibleAdapter {
                adapter: adapter.name().to_string(),
                family: family.name().to_string(),
            });
        }
        if bounds.dim() != family.dim() {
            return Err(Error::DimensionMismatch { expected: family.dim(), got: bounds.dim() });
        }
        config.gain.validate()?;
        if config.iterations == 0 || config.batch == 0 {
            return Err(Error::Config("iterations and batch must be positive".into()));
        }
        if config.replications < 2 {
            return Err(Error::Config("at least two replications are required".into()));
        }
        for theta in std::iter::once(&config.theta0).chain(&config.fixed_arms) {
            family.check_theta(theta)?;
            if !bounds.contains(theta) {
                return Err(Error::InvalidBox(format!("parameter {theta:?} lies outside the box")));
            }
        }
        Ok(Self { config: config.clone(), target, family, adapter })
    }

    fn sampler<'a>(&'a self, adapter: &'a dyn AdaptationMap) -> AdaptiveSampler<'a> {
        AdaptiveSampler {
            target: &self.target,
            family: self.family.as_ref(),
            adapter,
            schedule: self.config.gain,
            bounds: &self.config.bounds,
            batch_size: self.config.batch,
        }
    }

    /// Trace of replication `rep` for arm `arm` (0 adaptive, k ≥ 1 the k-th
    /// fixed proposal).
    pub fn trace(&self, arm: usize, rep: usize, iterations: usize) -> Result<AdaptationTrace> {
        let mut rng = replication_rng(self.config.seed, arm, rep);
        let stream = stream_id(arm, rep);
        if arm == 0 {
            self.sampler(self.adapter.as_ref())
                .run(&self.config.theta0, iterations, &mut rng, self.config.seed, stream)
        } else {
            let theta = self.fixed_theta(arm)?;
            self.sampler(&FrozenMap).run(theta, iterations, &mut rng, self.config.seed, stream)
        }
    }

    fn fixed_theta(&self, arm: usize) -> Result<&[f64]> {
        self.config
            .fixed_arms
            .get(arm - 1)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("no fixed arm {arm}")))
    }

    /// Final estimate `v_T` of one replication.
    pub fn replicate_once(&self, arm: usize, rep: usize) -> Result<f64> {
        if arm == 0 {
            return Ok(self.trace(0, rep, self.config.iterations)?.final_estimate());
        }
        let mut rng = replication_rng(self.config.seed, arm, rep);
        fixed_proposal_estimate(
            &self.target,
            self.family.as_ref(),
            self.fixed_theta(arm)?,
            &self.config.gain,
            self.config.iterations,
            self.config.batch,
            &mut rng,
        )
    }

    pub fn mse_report(&self) -> Result<MseReport> {
        let arms = self
            .config
            .arm_labels()
            .iter()
            .enumerate()
            .map(|(arm, label)| {
                replicate_arm(label, self.config.replications, TRUTH, |rep| self.replicate_once(arm, rep))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MseReport {
            example: self.config.experiment.clone(),
            arms,
            replications: self.config.replications,
            config_digest: self.config.digest(),
        })
    }

    /// Quadrature KL of the target against `f(·|θ)` on the default grid.
    pub fn kl(&self, theta: &[f64]) -> Result<f64> {
        Ok(kl_divergence(&self.target, self.family.as_ref(), theta, KlMethod::default(), None)?.value)
    }
}

pub fn mse_report(config: &ExperimentConfig) -> Result<MseReport> {
    Experiment::build(config)?.mse_report()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trace as CSV: `t,theta_1..theta_D,v,mean_w,gamma[,ess,kl]`.
pub fn trace_csv(trace: &AdaptationTrace, kl: Option<&[f64]>) -> String {
    let dim = trace.records.first().map_or(0, |r| r.theta.len());
    let mut out = String::from("t");
    for d in 1..=dim {
        write!(out, ",theta_{d}").unwrap();
    }
    out.push_str(",v,mean_w,gamma");
    if kl.is_some() {
        out.push_str(",ess,kl");
    }
    out.push('\n');
    for (i, r) in trace.records.iter().enumerate() {
        write!(out, "{}", r.t).unwrap();
        for th in &r.theta {
            write!(out, ",{th}").unwrap();
        }
        write!(out, ",{},{},{}", r.v, fmt_opt(r.mean_w), fmt_opt(r.gamma)).unwrap();
        if let Some(kl) = kl {
            write!(out, ",{},{}", fmt_opt(r.ess), kl[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct TraceJson<'a> {
    experiment: &'a str,
    arm: &'a str,
    #[serde(flatten)]
    trace: &'a AdaptationTrace,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl: Option<&'a [f64]>,
}

/// MSE table rows: `example,arm,mse,se,replications`.
pub fn mse_csv(reports: &[MseReport]) -> String {
    let mut out = String::from("example,arm,mse,se,replications\n");
    for report in reports {
        for arm in &report.arms {
            writeln!(out, "{},{},{},{},{}", report.example, arm.arm, arm.mse, arm.se, arm.replications)
                .unwrap();
        }
    }
    out
}

/// Files written by [`run`].
#[derive(Debug)]
pub struct RunOutput {
    pub report: MseReport,
    pub traces: Vec<(String, AdaptationTrace)>,
    pub files: Vec<PathBuf>,
}

fn write_file(path: PathBuf, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Runs every arm: one representative trace (replication 0) per arm and the
/// MSE report over all replications. Writes them under `config.out` when set.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let experiment = Experiment::build(config)?;
    let labels = config.arm_labels();
    let traces = labels
        .iter()
        .enumerate()
        .map(|(arm, label)| Ok((label.clone(), experiment.trace(arm, 0, config.iterations)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = experiment.mse_report()?;
    let mut files = Vec::new();
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)?;
        let name = &config.experiment;
        for (label, trace) in &traces {
            let kl = if config.diagnostics { Some(trace_kl(&experiment, trace)?) } else { None };
            match config.format {
                OutputFormat::Csv => write_file(
                    dir.join(format!("{name}_{label}_trace.csv")),
                    &trace_csv(trace, kl.as_deref()),
                    &mut files,
                )?,
                OutputFormat::Json => {
                    let doc = TraceJson { experiment: name, arm: label, trace, kl: kl.as_deref() };
                    write_file(
                        dir.join(format!("{name}_{label}_trace.json")),
                        &serde_json::to_string_pretty(&doc)?,
                        &mut files,
                    )?
                }
            }
        }
        match config.format {
            OutputFormat::Csv => {
                write_file(dir.join(format!("{name}_mse.csv")), &mse_csv(std::slice::from_ref(&report)), &mut files)?
            }
            OutputFormat::Json => write_file(
                dir.join(format!("{name}_mse.json")),
                &serde_json::to_string_pretty(&report)?,
                &mut files,
            )?,
        }
    }
    Ok(RunOutput { report, traces, files })
}

fn trace_kl(experiment: &Experiment, trace: &AdaptationTrace) -> Result<Vec<f64>> {
    let mut cache: Option<(Vec<f64>, f64)> = None;
    trace
        .records
        .iter()
        .map(|r| {
            if let Some((theta, kl)) = &cache {
                if *theta == r.theta {
                    return Ok(*kl);
                }
            }
            let kl = experiment.kl(&r.theta)?;
            cache = Some((r.theta.clone(), kl));
            Ok(kl)
        })
        .collect()
}

/// The three-example MSE table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table1 {
    pub seed: u64,
    pub replications: usize,
    pub reports: Vec<MseReport>,
}

impl Table1 {
    pub fn report(&self, preset: Preset) -> Option<&MseReport> {
        self.reports.iter().find(|r| r.example == preset.name())
    }

    /// Fixed-width text layout, arms as rows and examples as columns, each
    /// cell `mse (se)`.
    pub fn render(&self) -> String {
        let mut out = format!(
            "Mean squared errors of v_T against 1 ({} replications, seed {})\n",
            self.replications, self.seed
        );
        write!(out, "{:<12}", "arm").unwrap();
        for r in &self.reports {
            write!(out, "  {:<24}", r.example).unwrap();
        }
        out.push('\n');
        let labels: Vec<String> = self.reports.first().map(|r| r.arms.iter().map(|a| a.arm.clone()).collect()).unwrap_or_default();
        for label in labels {
            write!(out, "{label:<12}").unwrap();
            for r in &self.reports {
                let cell = r
                    .arm(&label)
                    .map(|a| format!("{:.3e} ({:.1e})", a.mse, a.se))
                    .unwrap_or_default();
                write!(out, "  {cell:<24}").unwrap();
            }
            out.push('\n');
        }
        out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
    }

    pub fn csv(&self) -> String {
        mse_csv(&self.reports)
    }
}

/// Runs all three presets at `replications` with the given master seed.
pub fn table1(seed: u64, replications: usize) -> Result<Table1> {
    let reports = Preset::ALL
        .into_iter()
        .map(|p| {
            let config = ExperimentConfig { seed, replications, ..ExperimentConfig::preset(p) };
            mse_report(&config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1 { seed, replications, reports })
}

/// Evaluation grid `lo, lo + step, …, hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(lo < hi && step > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config(format!("bad grid ({lo}, {hi}, {step})")));
        }
        Ok(Self { lo, hi, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize + 1;
        (0..n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

impl std::str::FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| Error::Config(format!("grid `{s}`: {e}"))))
            .collect::<Result<_>>()?;
        match parts.as_slice() {
            [lo, hi, step] => Grid::new(*lo, *hi, *step),
            _ => Err(Error::Config(format!("grid `{s}` must be lo,hi,step"))),
        }
    }
}

/// Target density and proposal densities at selected iterations over a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityCurve {
    pub iterations: Vec<usize>,
    pub thetas: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub target: Vec<f64>,
    /// `proposal[k][i]` is `f(x_i | θ_{iterations[k]})`.
    pub proposal: Vec<Vec<f64>>,
}

impl DensityCurve {
    pub fn csv(&self) -> String {
        let mut out = String::from("x,target");
        for t in &self.iterations {
            write!(out, ",f_t{t}").unwrap();
        }
        out.push('\n');
        for (i, x) in self.x.iter().enumerate() {
            write!(out, "{x},{}", self.target[i]).unwrap();
            for col in &self.proposal {
                write!(out, ",{}", col[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Adapts replication `rep` of `config` and tabulates `π` and `f(·|θ_t)` at
/// each requested `t` over `grid`.
pub fn density_curve(config: &ExperimentConfig, iterations: &[usize], grid: Grid, rep: usize) -> Result<DensityCurve> {
    let experiment = Experiment::build(config)?;
    if iterations.is_empty() {
        return Err(Error::Config("no iterations requested".into()));
    }
    let longest = iterations.iter().copied().max().unwrap_or(0);
    let thetas: Vec<Vec<f64>> = if longest == 0 {
        vec![config.theta0.clone(); iterations.len()]
    } else {
        let trace = experiment.trace(0, rep, longest)?;
        iterations.iter().map(|&t| trace.theta_at(t).expect("t within trace").to_vec()).collect()
    };
    let x = grid.points();
    let target = x.iter().map(|&x| experiment.target.density(x)).collect();
    let proposal = thetas
        .iter()
        .map(|theta| x.iter().map(|&x| experiment.family.density(theta, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityCurve { iterations: iterations.to_vec(), thetas, x, target, proposal })
}

/// One line of the `check` diagnostics suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_cauchy_batch(rng: &mut impl Rng, n: usize) -> Vec<WeightedSample> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            WeightedSample::new(2.0 * z, rng.random_range(0.0..3.0))
        })
        .collect()
}

/// Numerical self-checks of the Cauchy MM machinery, the estimator recursion
/// and the divergence quadrature.
pub fn check(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = rng.random_range(0.1..10.0);
        let n = rng.random_range(2..8);
        let batch = random_cauchy_batch(&mut rng, n);
        let r = fd_check(|t| cauchy_log_likelihood(t, &batch).unwrap_or(f64::NAN), cauchy_score(s, &batch)?, s, 1e-5);
        worst = worst.max(r.relative_error);
    }
    results.push(CheckResult {
        name: "cauchy score vs finite differences",
        passed: worst < 1e-6,
        detail: format!("worst relative error {worst:.2e} over 100 configurations"),
    });

    let mut violations = 0;
    for _ in 0..10_000 {
        let s = rng.random_range(0.01..100.0);
        let n = rng.random_range(1..6);
        let cb = cauchy_curvature_bound(s, &random_cauchy_batch(&mut rng, n))?;
        if cb.second_derivative < cb.lower_bound {
            violations += 1;
        }
    }
    results.push(CheckResult {
        name: "cauchy curvature lower bound",
        passed: violations == 0,
        detail: format!("{violations} violations in 10000 configurations"),
    });

    let adapter = CauchyMmMap::new(CurvatureMode::BoxFloor, 0.01)?;
    let grid: Vec<f64> = (0..200).map(|k| 0.01 + (100.0 - 0.01) * k as f64 / 199.0).collect();
    let mut failed = 0;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let s = rng.random_range(0.01..100.0);
        let n = rng.random_range(2..6);
        let batch = random_cauchy_batch(&mut rng, n);
        let q = adapter.minorizer(s, &batch)?;
        let r = minorization_check(&q, |t| cauchy_log_likelihood(t, &batch).unwrap_or(f64::NAN), &grid);
        worst = worst.max(r.worst_violation).max(r.tangency_error);
        failed += usize::from(!r.passed);
    }
    results.push(CheckResult {
        name: "cauchy quadratic minorizer",
        passed: failed == 0,
        detail: format!("{failed} of 50 batches failed, worst violation {worst:.2e}"),
    });

    let unit = GainSchedule::default();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..200);
        let means: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..4.0)).collect();
        let mut est = IntegralEstimate::new();
        for (t, m) in means.iter().enumerate() {
            est.absorb(&[WeightedSample::new(0.0, *m)], unit.gain(t), &|_| 1.0)?;
        }
        let brute = means.iter().sum::<f64>() / len as f64;
        worst = worst.max((est.value().unwrap_or(f64::NAN) - brute).abs());
    }
    results.push(CheckResult {
        name: "integral recursion equals running mean",
        passed: worst <= 1e-12,
        detail: format!("worst absolute gap {worst:.2e} over 1000 sequences"),
    });

    let target = TargetDensity::standard_normal();
    let self_kl = kl_divergence(&target, &NormalMean::unit(), &[0.0], KlMethod::default(), None)?.value;
    let shift_kl = kl_divergence(&target, &NormalMean::unit(), &[1.0], KlMethod::default(), None)?.value;
    results.push(CheckResult {
        name: "quadrature divergence",
        passed: self_kl.abs() < 1e-8 && (shift_kl - 0.5).abs() < 1e-6,
        detail: format!("KL(N(0,1), N(0,1)) = {self_kl:.2e}, KL(N(0,1), N(1,1)) = {shift_kl:.8}"),
    });

    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let batch: Vec<_> = (0..n).map(|_| WeightedSample::new(0.0, rng.random_range(0.0..5.0))).collect();
        if let Ok(ess) = effective_sample_size(&batch) {
            if !(ess >= 1.0 - 1e-12 && ess <= n as f64 + 1e-9) {
                bad += 1;
            }
        }
    }
    results.push(CheckResult {
        name: "effective sample size bounds",
        passed: bad == 0,
        detail: format!("{bad} of 1000 batches outside [1, N]"),
    });
    Ok(results)
}
