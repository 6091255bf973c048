//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runtime limits are part of each criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use intkrige::cv::{run_cv, CvConfig, Predictor};
use intkrige::intervals::{kernel_to_a, rho2_sq, rho_k_sq, AMatrix, Interval, Kernel2};
use intkrige::kriging::{
    full_prediction_variance, nearest_indices, prediction_variance_vario, solve, IntervalSample,
    KrigingProblem, Models, RadiusTargetTerm,
};
use intkrige::optimizer::{Mode, PenaltyState, PenaltyVariant, SolverConfig};
use intkrige::simulate::{simulate_field, ElevationTrend, FieldParams, Rect};
use intkrige::snowload::{
    colorado_f1, idaho_load, sturm_load, utah_load, ClimateClass, SturmParams, TrendModel,
    UTAH_ALPINE_ELEVATION,
};
use intkrige::variogram::{
    fit_wls, initial_guess, Channel, EmpiricalVariogram, Location, VariogramModel,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn metric_fidelity() -> Outcome {
    let mut rng = common::rng(1);
    let a = kernel_to_a(&Kernel2::scaled_identity(0.5).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let mut draw = || {
            let c = rng.random_range(-1.0..1.0);
            let r = rng.random_range(0.0..1.0);
            Interval::from_center_radius(c, r).unwrap()
        };
        let (x, y) = (draw(), draw());
        worst = worst.max((rho_k_sq(&x, &y, &a) - rho2_sq(&x, &y)).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max |rho_k^2 - rho_2^2| = {worst:.2e} over 10000 pairs"),
    )
}

fn derivatives() -> Outcome {
    let variants = [
        (Mode::Simple, PenaltyVariant::Original),
        (Mode::Simple, PenaltyVariant::Adjusted),
        (Mode::Ordinary, PenaltyVariant::Original),
        (Mode::Ordinary, PenaltyVariant::Adjusted),
    ];
    let mut rng = common::rng(2);
    let (mut worst_g, mut worst_h): (f64, f64) = (0.0, 0.0);
    for (mode, variant) in variants {
        for _ in 0..100 {
            let n = rng.random_range(2..8);
            let cross = rng.random_bool(0.5);
            let sys = common::random_problem(&mut rng, n, mode, cross)
                .system()
                .unwrap();
            let c = 10f64.powf(rng.random_range(-2.0..0.5));
            let state = PenaltyState::new(c, mode, variant, 1e-3).unwrap();
            let w = common::feasible_point(&mut rng, n, mode);
            let anchor: Vec<f64> = w.iter().map(|x| x * rng.random_range(0.7..1.3)).collect();
            let (g, h) = common::derivative_errors(&sys, &state, &w, &anchor);
            worst_g = worst_g.max(g);
            worst_h = worst_h.max(h);
        }
    }
    outcome(
        worst_g < 1e-5 && worst_h < 1e-4,
        format!("max rel. error gradient {worst_g:.2e}, Hessian {worst_h:.2e} (4 variants x 100 points)"),
    )
}

fn grid_oracle() -> Outcome {
    let mut rng = common::rng(3);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let n = 2 + k % 3;
        let mode = if k % 2 == 0 {
            Mode::Simple
        } else {
            Mode::Ordinary
        };
        let p = common::random_problem(&mut rng, n, mode, k % 4 == 1);
        let sys = p.system().unwrap();
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        let best = common::face_oracle(&sys, mode, 1e-3);
        worst = worst.max((sys.variance(&sol.weights) - best).abs());
    }
    outcome(
        worst <= 1e-3,
        format!("max |SUMT - grid| = {worst:.2e} over 50 instances, n <= 4"),
    )
}

fn constraints() -> Outcome {
    let mut rng = common::rng(4);
    let config = SolverConfig::default();
    let (mut sk, mut ok, mut ok_min) = (0.0f64, 0.0f64, f64::INFINITY);
    for k in 0..200 {
        let n = rng.random_range(2..=50);
        let mode = if k % 2 == 0 {
            Mode::Simple
        } else {
            Mode::Ordinary
        };
        let cross = rng.random_bool(0.3);
        let p = common::random_problem(&mut rng, n, mode, cross);
        let w = match solve(&p, &config) {
            Ok(sol) => sol.weights,
            Err(e) => return outcome(false, format!("instance {k} (n = {n}, {mode:?}): {e}")),
        };
        match mode {
            Mode::Simple => sk = sk.max((w.iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs()),
            Mode::Ordinary => {
                ok = ok.max((w.iter().sum::<f64>() - 1.0).abs());
                ok_min = ok_min.min(w.iter().cloned().fold(f64::INFINITY, f64::min));
            }
        }
    }
    outcome(
        sk <= 1e-4 && ok <= 1e-4 && ok_min >= -1e-3,
        format!("SK |sum|w| - 1| {sk:.1e}, OK |sum w - 1| {ok:.1e}, OK min weight {ok_min:.1e}"),
    )
}

/// Radii all zero and only the center term weighted: interval SK weights must
/// be classical kriging weights on their face of the constraint set.
fn degenerate_reduction() -> Outcome {
    let mut rng = common::rng(5);
    let samples: Vec<IntervalSample> = common::random_samples(&mut rng, 60, 10.0)
        .into_iter()
        .map(|s| IntervalSample::new(s.loc, Interval::point(s.value.center()).unwrap()))
        .collect();
    let models = Models::new(
        VariogramModel::spherical(0.0, 1.0, 6.0).unwrap(),
        VariogramModel::exponential(0.0, 0.4, 3.0).unwrap(),
        AMatrix::new(1.0, 0.0, 0.0).unwrap(),
    );
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t = Location::planar(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)).unwrap();
        let local: Vec<IntervalSample> = nearest_indices(&samples, &t, 20)
            .into_iter()
            .map(|i| samples[i])
            .collect();
        let p = KrigingProblem::new(local.clone(), t, models, Mode::Simple)
            .unwrap()
            .with_known_mean(Interval::point(0.0).unwrap())
            .unwrap();
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        if sol.prediction.radius() != 0.0 {
            return outcome(
                false,
                format!("nonzero predicted radius {}", sol.prediction.radius()),
            );
        }
        let sys = p.system().unwrap();
        let support: Vec<usize> = (0..local.len())
            .filter(|&i| sol.weights[i].abs() > 1e-6)
            .collect();
        let signs: Vec<f64> = support.iter().map(|&i| sol.weights[i].signum()).collect();
        let w = common::bordered_kriging(&sys.cc, &sys.cc_t, &support, &signs);
        let oracle: f64 = w
            .iter()
            .zip(&local)
            .map(|(w, s)| w * s.value.center())
            .sum();
        worst = worst.max((oracle - sol.prediction.center()).abs());
    }
    outcome(
        worst <= 1e-4,
        format!("max |center - oracle| = {worst:.2e} at 100 targets (60 samples, nearest 20)"),
    )
}

fn exact_interpolation() -> Outcome {
    let mut rng = common::rng(6);
    let samples = common::random_samples(&mut rng, 12, 10.0);
    let models = Models::new(
        VariogramModel::spherical(0.0, 1.0, 6.0).unwrap(),
        VariogramModel::exponential(0.0, 0.4, 3.0).unwrap(),
        AMatrix::identity(),
    );
    let (mut dev, mut var): (f64, f64) = (0.0, 0.0);
    for mode in [Mode::Simple, Mode::Ordinary] {
        for s in samples.iter().step_by(2) {
            let p = KrigingProblem::new(samples.clone(), s.loc, models, mode).unwrap();
            let sol = solve(&p, &SolverConfig::default()).unwrap();
            dev = dev.max((sol.prediction.lower() - s.value.lower()).abs());
            dev = dev.max((sol.prediction.upper() - s.value.upper()).abs());
            var = var.max(full_prediction_variance(&sol.weights, &p).unwrap());
        }
    }
    outcome(
        dev <= 1e-6 && var <= 1e-6,
        format!("max endpoint deviation {dev:.2e}, max full variance {var:.2e} (SK and OK, 6 samples each)"),
    )
}

fn variogram_round_trip() -> Outcome {
    let truth = VariogramModel::spherical(0.08, 0.2, 194.0).unwrap();
    let bins = 20;
    let centers: Vec<f64> = (0..bins)
        .map(|k| 400.0 * (k as f64 + 0.5) / bins as f64)
        .collect();
    let g: Vec<Option<f64>> = centers.iter().map(|&h| Some(truth.gamma(h))).collect();
    let emp = EmpiricalVariogram {
        bin_centers: centers,
        gamma_c: g.clone(),
        gamma_r: g,
        gamma_cr: vec![None; bins],
        pair_counts: vec![100; bins],
    };
    let init = initial_guess(&emp, Channel::Center, truth.family);
    let fit = match fit_wls(&emp, Channel::Center, truth.family, &init) {
        Ok(f) => f.model,
        Err(e) => return outcome(false, e.to_string()),
    };
    let rel = [
        (fit.nugget - truth.nugget).abs() / truth.nugget,
        (fit.partial_sill - truth.partial_sill).abs() / truth.partial_sill,
        (fit.range - truth.range).abs() / truth.range,
    ];
    let worst = rel.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst <= 0.01,
        format!("fitted {fit}, max relative error {worst:.2e}"),
    )
}

fn conversions() -> Outcome {
    let taiga = SturmParams::for_class(ClimateClass::Taiga);
    // tolerances are half a unit in the last stated digit
    let checks = [
        ("idaho(10)", idaho_load(10.0).unwrap(), 0.17, 5e-3),
        ("idaho(100)", idaho_load(100.0).unwrap(), 2.9226, 5e-5),
        ("colorado f1(2.54)", colorado_f1(2.54), 0.01336, 5e-6),
        (
            "sturm taiga(100)",
            sturm_load(100.0, 60, &taiga).unwrap(),
            2.1288,
            5e-5,
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, got, want, tol) in checks {
        pass &= (got - want).abs() <= tol;
        parts.push(format!("{name} = {got:.6}"));
    }
    let (h, d) = (150.0, 75);
    let below = utah_load(h, d, UTAH_ALPINE_ELEVATION - 1e-9).unwrap();
    let at = utah_load(h, d, UTAH_ALPINE_ELEVATION).unwrap();
    let prairie = sturm_load(h, d, &SturmParams::utah_prairie()).unwrap();
    let alpine = sturm_load(h, d, &SturmParams::utah_alpine()).unwrap();
    let switch = below == prairie && at == alpine && prairie != alpine;
    pass &= switch;
    parts.push(format!(
        "utah switch at {UTAH_ALPINE_ELEVATION} m: {switch}"
    ));
    outcome(pass, parts.join(", "))
}

fn variance_forms() -> Outcome {
    let mut rng = common::rng(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..12);
        let p = common::random_problem(&mut rng, n, Mode::Ordinary, false);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let cov = full_prediction_variance(&w, &p).unwrap();
        let vario = prediction_variance_vario(&w, &p, RadiusTargetTerm::Radius, 1e-12).unwrap();
        worst = worst.max((cov - vario).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("max |cov form + constant - variogram form| = {worst:.2e}"),
    )
}

fn cross_validation() -> Outcome {
    let mut params = FieldParams::independent(Rect::square(10.0).unwrap(), 1.0 / 3.0, 1.0).unwrap();
    params.elevation = Some(ElevationTrend {
        min: 1500.0,
        max: 3000.0,
        trend: TrendModel {
            beta0: 0.5,
            beta1: 0.0005,
        },
    });
    let field = simulate_field(300, &params, 2024).unwrap();
    let config = CvConfig {
        folds: 10,
        seed: 7,
        predictors: vec![Predictor::IntervalSk, Predictor::Lm, Predictor::GlobalMean],
        ..CvConfig::default()
    };
    let report = match run_cv(&field, &config) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let rmse = |p| report.get(p).unwrap().overall.rmse;
    let (isk, lm, mean) = (
        rmse(Predictor::IntervalSk),
        rmse(Predictor::Lm),
        rmse(Predictor::GlobalMean),
    );
    outcome(
        isk < lm && isk <= 0.8 * mean,
        format!(
            "RMSE isk {isk:.4}, lm {lm:.4}, global mean {mean:.4} (isk/mean = {:.3})",
            isk / mean
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (
            "metric fidelity",
            Some(Duration::from_secs(1)),
            metric_fidelity,
        ),
        (
            "penalty derivatives",
            Some(Duration::from_secs(10)),
            derivatives,
        ),
        (
            "constrained optimum vs grid",
            Some(Duration::from_secs(120)),
            grid_oracle,
        ),
        (
            "constraint satisfaction",
            Some(Duration::from_secs(60)),
            constraints,
        ),
        (
            "degenerate reduction",
            Some(Duration::from_secs(30)),
            degenerate_reduction,
        ),
        ("exact interpolation", None, exact_interpolation),
        (
            "variogram round trip",
            Some(Duration::from_secs(5)),
            variogram_round_trip,
        ),
        (
            "conversion formulas",
            Some(Duration::from_secs(1)),
            conversions,
        ),
        (
            "variance forms agree",
            Some(Duration::from_secs(5)),
            variance_forms,
        ),
        (
            "cross-validation",
            Some(Duration::from_secs(300)),
            cross_validation,
        ),
    ];
    let mut failures = 0;
    for (k, (name, limit, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = out.pass && in_time;
        if !pass {
            failures += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" / {:.0} s", l.as_secs_f64()));
        let late = if in_time { "" } else { " OVER TIME LIMIT" };
        println!(
            "criterion {:>2}: {} {name}: {} [{:.2} s{budget}]{late}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64()
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
