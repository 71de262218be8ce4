//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::f64::consts::PI;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sais::adapters::{
    cauchy_curvature_bound, cauchy_score, mixture_indicator_map, mixture_rb_map, CauchyMmMap,
    CurvatureMode, Minorizer,
};
use sais::density::{draw_batch, Component, FixedComponentMixture, TargetDensity, WeightedSample};
use sais::engine::GainSchedule;
use sais::estimator::IntegralEstimate;
use sais::experiment::{table1, Experiment, ExperimentConfig, Preset, Table1};

const SEED: u64 = 2024;
const REPLICATIONS: usize = 1000;

/// Reference MSE cells: (adaptive, fixed-1, fixed-2) per example.
const REFERENCE: [(Preset, [f64; 3]); 3] = [
    (Preset::NormalMean, [8.8e-6, 3.543e-4, 9.9e-6]),
    (Preset::CauchyScale, [3.6e-4, 1.12e-3, 5.6e-4]),
    (Preset::MixtureWeights, [3.2e-6, 8.46e-5, 3.8e-6]),
];
const ARMS: [&str; 3] = ["adaptive", "fixed-1", "fixed-2"];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

// ---- independent oracles -------------------------------------------------

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let h = (hi - lo) / panels as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..panels {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn normal_pdf(x: f64, mean: f64) -> f64 {
    (-(x - mean).powi(2) / 2.0).exp() / (2.0 * PI).sqrt()
}

fn cauchy_pdf(x: f64, sigma_sq: f64) -> f64 {
    sigma_sq.sqrt() / (PI * (sigma_sq + x * x))
}

fn mixture_pdf(x: f64, alpha: f64) -> f64 {
    alpha * normal_pdf(x, -1.0) + (1.0 - alpha) * normal_pdf(x, 2.0)
}

fn target_pdf(preset: Preset, x: f64) -> f64 {
    match preset {
        Preset::MixtureWeights => mixture_pdf(x, 1.0 / 3.0),
        _ => normal_pdf(x, 0.0),
    }
}

fn proposal_pdf(preset: Preset, theta: f64, x: f64) -> f64 {
    match preset {
        Preset::NormalMean => normal_pdf(x, theta),
        Preset::CauchyScale => cauchy_pdf(x, theta),
        Preset::MixtureWeights => mixture_pdf(x, theta),
    }
}

fn kl(preset: Preset, theta: f64) -> f64 {
    simpson(
        |x| {
            let p = target_pdf(preset, x);
            if p == 0.0 {
                0.0
            } else {
                p * (p / proposal_pdf(preset, theta, x)).ln()
            }
        },
        -30.0,
        30.0,
        100_000,
    )
}

fn ell(s: f64, batch: &[(f64, f64)]) -> f64 {
    batch.iter().map(|(x, w)| w * (0.5 * s.ln() - PI.ln() - (s + x * x).ln())).sum()
}

/// Central difference extrapolated from steps `h` and `h/2`.
fn richardson_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let central = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * central(h / 2.0) - central(h)) / 3.0
}

fn ell_second(s: f64, batch: &[(f64, f64)]) -> f64 {
    batch.iter().map(|(x, w)| w * (-0.5 / (s * s) + 1.0 / (s + x * x).powi(2))).sum()
}

fn random_batch(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<(f64, f64)> {
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| {
            let x = rng.random_range(-6.0..6.0);
            let w = rng.random_range(0.0..3.0);
            (x, w)
        })
        .collect()
}

fn weighted(batch: &[(f64, f64)]) -> Vec<WeightedSample> {
    batch.iter().map(|&(x, w)| WeightedSample::new(x, w)).collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn preset_experiment(preset: Preset) -> Experiment {
    let config = ExperimentConfig { seed: SEED, replications: REPLICATIONS, ..ExperimentConfig::preset(preset) };
    Experiment::build(&config).expect("preset builds")
}

// ---- criteria --------------------------------------------------------------

fn table1_reproduction(table: &Table1) -> Outcome {
    let mut misses = Vec::new();
    let mut cells = Vec::new();
    for (preset, reference) in REFERENCE {
        let report = table.report(preset).expect("preset in table");
        for (arm, expected) in ARMS.iter().zip(reference) {
            let a = report.arm(arm).expect("arm in report");
            let ratio = a.mse / expected;
            let within_factor = (0.5..=2.0).contains(&ratio);
            let within_se = (a.mse - expected).abs() <= 4.0 * a.se;
            cells.push(format!("{}/{arm} {:.3e}±{:.1e} vs {expected:.3e}", preset.name(), a.mse, a.se));
            if !(within_factor && within_se) {
                misses.push(format!("{}/{arm}", preset.name()));
            }
        }
    }
    outcome(
        misses.is_empty(),
        format!("{} of 9 cells outside tolerance [{}]; cells: {}", misses.len(), misses.join(", "), cells.join("; ")),
    )
}

fn improvement_ratios(table: &Table1) -> Outcome {
    let required = [(Preset::NormalMean, 10.0), (Preset::CauchyScale, 2.0), (Preset::MixtureWeights, 10.0)];
    let mut passed = true;
    let mut parts = Vec::new();
    for (preset, min_ratio) in required {
        let report = table.report(preset).unwrap();
        let ratio = report.arm("fixed-1").unwrap().mse / report.arm("adaptive").unwrap().mse;
        passed &= ratio >= min_ratio;
        parts.push(format!("{} {ratio:.1} (need {min_ratio})", preset.name()));
    }
    outcome(passed, parts.join(", "))
}

fn parameter_convergence() -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (preset, optimum, tol) in [(Preset::NormalMean, 0.0, 0.1), (Preset::MixtureWeights, 1.0 / 3.0, 0.05)] {
        let e = preset_experiment(preset);
        let errors: Vec<f64> = (0..100)
            .map(|rep| (e.trace(0, rep, 500).unwrap().final_theta()[0] - optimum).abs())
            .collect();
        let mean = errors.iter().sum::<f64>() / 100.0;
        passed &= mean < tol;
        parts.push(format!("{} mean |θ_500 − θ*| = {mean:.4} (< {tol})", preset.name()));
    }
    outcome(passed, parts.join(", "))
}

fn unbiasedness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for preset in Preset::ALL {
        let e = preset_experiment(preset);
        for (arm, _) in ARMS.iter().enumerate() {
            let estimates: Vec<f64> = (0..REPLICATIONS).map(|rep| e.replicate_once(arm, rep).unwrap()).collect();
            let (mean, se) = mean_and_se(&estimates);
            let z = (mean - 1.0).abs() / se;
            worst = worst.max(z);
            passed &= z <= 4.0;
        }
    }
    outcome(passed, format!("largest |mean v_T − 1| over 9 arms is {worst:.2} SE (limit 4)"))
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = rng.random_range(0.1..10.0);
        let batch = random_batch(&mut rng, 8);
        let numeric = richardson_derivative(|t| ell(t, &batch), s, 1e-3 * s);
        let analytic = cauchy_score(s, &weighted(&batch)).unwrap();
        let rel = (analytic - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(rel);
    }
    outcome(worst <= 1e-6, format!("worst relative error {worst:.2e} over 100 configurations (limit 1e-6)"))
}

fn curvature_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut violations = 0;
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let s = 10f64.powf(rng.random_range(-2.0..2.0));
        let batch = random_batch(&mut rng, 6);
        let total_w: f64 = batch.iter().map(|b| b.1).sum();
        let second = ell_second(s, &batch);
        let lower = -total_w / (2.0 * s * s);
        if second < lower {
            violations += 1;
        }
        let lib = cauchy_curvature_bound(s, &weighted(&batch)).unwrap();
        let scale = second.abs().max(lower.abs()).max(1e-300);
        if (lib.second_derivative - second).abs() > 1e-10 * scale || (lib.lower_bound - lower).abs() > 1e-12 * scale {
            mismatches += 1;
        }
    }
    outcome(
        violations == 0 && mismatches == 0,
        format!("{violations} bound violations, {mismatches} disagreements with the oracle over 10000 configurations"),
    )
}

fn minorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let (floor, ceiling) = (0.01, 100.0);
    let map = CauchyMmMap::new(CurvatureMode::BoxFloor, floor).unwrap();
    let grid: Vec<f64> = (0..200).map(|k| floor + (ceiling - floor) * k as f64 / 199.0).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let s = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut batch = random_batch(&mut rng, 6);
        if batch.len() < 2 {
            batch.push((rng.random_range(-6.0..6.0), 1.0));
        }
        let q = map.minorizer(s, &weighted(&batch)).unwrap();
        worst = worst.max((q.value(s) - ell(s, &batch)).abs());
        for &t in &grid {
            worst = worst.max(q.value(t) - ell(t, &batch));
        }
    }
    outcome(worst <= 1e-10, format!("worst tangency/domination violation {worst:.2e} over 50 × 200 points (limit 1e-10)"))
}

fn running_mean_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let schedule = GainSchedule::new(1.0, 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.random_range(1..500);
        let batches: Vec<Vec<WeightedSample>> = (0..len)
            .map(|_| {
                let n = rng.random_range(1..4);
                (0..n).map(|_| WeightedSample::new(0.0, rng.random_range(0.0..5.0))).collect()
            })
            .collect();
        let mut est = IntegralEstimate::new();
        for (t, b) in batches.iter().enumerate() {
            est.absorb(b, schedule.gain(t), &|_| 1.0).unwrap();
        }
        let brute = batches
            .iter()
            .map(|b| b.iter().map(|s| s.w).sum::<f64>() / b.len() as f64)
            .sum::<f64>()
            / len as f64;
        worst = worst.max((est.value().unwrap() - brute).abs());
    }
    outcome(worst <= 1e-12, format!("worst gap {worst:.2e} over 1000 sequences (limit 1e-12)"))
}

fn rb_indicator_agreement() -> Outcome {
    let components = vec![Component::normal(-1.0, 1.0), Component::normal(2.0, 1.0)];
    let family = FixedComponentMixture::new(components.clone()).unwrap();
    let target = TargetDensity::mixture(&[(1.0 / 3.0, components[0]), (2.0 / 3.0, components[1])]).unwrap();
    let mut worst: f64 = 0.0;
    for (k, alpha) in [0.5, 0.35, 0.2].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9 + k as u64);
        let batch = draw_batch(&family, &[alpha], &target, 1_000_000, &mut rng).unwrap();
        let rb = mixture_rb_map(&components, &[alpha], &batch).unwrap()[0];
        let ind = mixture_indicator_map(&[alpha], &batch).unwrap()[0];
        let diffs: Vec<f64> = batch
            .iter()
            .map(|s| {
                let a = alpha * normal_pdf(s.x, -1.0);
                let r = a / (a + (1.0 - alpha) * normal_pdf(s.x, 2.0));
                s.w * (r - if s.component == Some(0) { 1.0 } else { 0.0 })
            })
            .collect();
        let (_, se) = mean_and_se(&diffs);
        worst = worst.max((rb - ind).abs() / se);
    }
    outcome(worst <= 3.0, format!("largest |RB − indicator| over α ∈ {{0.5, 0.35, 0.2}} is {worst:.2} paired SE (limit 3)"))
}

fn kl_improvement() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for preset in Preset::ALL {
        let e = preset_experiment(preset);
        let theta0 = e.config.theta0[0];
        let finals: Vec<f64> = (0..100)
            .map(|rep| e.trace(0, rep, e.config.iterations).unwrap().final_theta()[0])
            .collect();
        let mean_final = finals.iter().map(|&t| kl(preset, t)).sum::<f64>() / 100.0;
        let initial = kl(preset, theta0);
        passed &= mean_final < initial;
        parts.push(format!("{} {initial:.4} → {mean_final:.5}", preset.name()));
        if preset == Preset::MixtureWeights {
            let grid_min = (1..300).map(|k| kl(preset, k as f64 / 300.0)).fold(f64::INFINITY, f64::min);
            let gap = mean_final - grid_min;
            passed &= gap < 0.01;
            parts.push(format!("gap to grid minimum {gap:.2e} (< 0.01)"));
        }
    }
    outcome(passed, parts.join(", "))
}

fn determinism(first: &Table1) -> Outcome {
    let second = table1(SEED, REPLICATIONS).unwrap();
    let same = first.render() == second.render() && first.csv() == second.csv();
    outcome(same, format!("two table1 runs with seed {SEED} are {}", if same { "byte-identical" } else { "different" }))
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() -> ExitCode {
    let table = table1(SEED, REPLICATIONS).expect("table1 runs");
    print!("{}", table.render());
    let criteria: Vec<Criterion> = vec![
        ("1 table reproduction", Box::new(|| table1_reproduction(&table))),
        ("2 improvement ratios", Box::new(|| improvement_ratios(&table))),
        ("3 parameter convergence", Box::new(parameter_convergence)),
        ("4 unbiasedness", Box::new(unbiasedness)),
        ("5 gradient oracle", Box::new(gradient_oracle)),
        ("6 curvature bound", Box::new(curvature_bound)),
        ("7 minorization", Box::new(minorization)),
        ("8 running-mean identity", Box::new(running_mean_identity)),
        ("9 RB/indicator agreement", Box::new(rb_indicator_agreement)),
        ("10 KL improvement", Box::new(kl_improvement)),
        ("11 determinism", Box::new(|| determinism(&table))),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
