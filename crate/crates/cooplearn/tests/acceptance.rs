//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fail.
//!
//! `COOPLEARN_FULL_SCALE=1` runs the method-comparison benchmarks with 500 features per view.

use std::process::ExitCode;
use std::time::Instant;

use cooplearn::parallel::RayonExecutor;
use cooplearn_core::augmented::{agreement, build_augmented, coop_objective, FeaturePair, PairSpec};
use cooplearn_core::compare::{run_benchmark_with, BenchmarkConfig, Method};
use cooplearn_core::coop::{
    coop_direct_fit, coop_direct_fit_at, coop_iterative_fit, coop_lambda_grid, CoopConfig, IterativeOptions,
    LassoFitter,
};
use cooplearn_core::data::{Family, MultiViewDataset};
use cooplearn_core::glm::{fit_coop_logistic, fit_logistic_views, logistic_lambda_max, logistic_nll, LogisticOptions};
use cooplearn_core::sim::{sparsity_study_with, SparsityConfig};
use cooplearn_core::solver::{soft_threshold, PenaltySpec, SolverOptions};
use cooplearn_core::theory::{
    asymptotic_derivative, asymptotic_ratio, check_derivative, draw_features, random_params, run_theory_checks,
    LatentModelParams, TheoryCheckConfig,
};
use cooplearn_core::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-13,
        max_sweeps: 1_000_000,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
    Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

fn two_view_dataset(seed: u64, n: usize, p: usize) -> MultiViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gaussian(&mut rng, n, p);
    let z = gaussian(&mut rng, n, p);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            x[(i, 0)] + 0.5 * x[(i, 1)] - z[(i, 0)] + 0.8 * z[(i, 2)] + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    MultiViewDataset::from_matrices(vec![x, z], &y, Family::Gaussian).unwrap()
}

/// Accelerated proximal gradient for `½‖y − Xβ‖² + λ‖β‖₁`.
fn fista_lasso(x: &Matrix, y: &Vector, lambda: f64, start: &Vector) -> Vector {
    let l = x.tr_mul(x).symmetric_eigenvalues().max();
    let step = 1.0 / l;
    let xty = x.tr_mul(y);
    let gram = x.tr_mul(x);
    let mut beta = start.clone();
    let mut v = beta.clone();
    let mut t: f64 = 1.0;
    for _ in 0..20_000 {
        let g = &gram * &v - &xty;
        let next = (&v - g * step).map(|c| soft_threshold(c, step * lambda));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        // Restart when the step goes against the momentum.
        if (&v - &next).dot(&(&next - &beta)) > 0.0 {
            v = next.clone();
            t = 1.0;
        } else {
            v = &next + (&next - &beta) * mom;
            t = t_next;
        }
        beta = next;
    }
    beta
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let ds = two_view_dataset(100 + seed, 50, 20);
        let config = CoopConfig {
            solver: tight(),
            ..CoopConfig::default()
        };
        let grid = coop_lambda_grid(&ds, &config, 20, 0.01).unwrap();
        let path = coop_direct_fit(&ds, 0.0, &grid, &config).unwrap();
        let x = ds.concatenated();
        let y = &ds.response().values;
        let mut start = Vector::zeros(x.ncols());
        for (lambda, fit) in grid.iter().zip(&path.fits) {
            let oracle = fista_lasso(&x, y, *lambda, &start);
            let coop: Vec<f64> = fit.views.iter().flat_map(|v| v.coefficients.clone()).collect();
            let diff = (Vector::from_vec(coop) - &oracle).amax();
            worst = worst.max(diff);
            start = oracle;
        }
    }
    outcome(
        worst < 1e-6,
        format!("early-fusion limit: max |coop(rho=0) - lasso| = {worst:.2e} over 20 instances x 20 lambdas (< 1e-6)"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let n = 60;
        let center = |m: Matrix| {
            let mut m = m;
            for mut c in m.column_iter_mut() {
                let mean = c.mean();
                c.add_scalar_mut(-mean);
            }
            m
        };
        let x = center(gaussian(&mut rng, n, 5));
        let z0 = center(gaussian(&mut rng, n, 5));
        let proj = &x * x.clone().svd(true, true).solve(&z0, 1e-12).unwrap();
        let z = z0 - proj;
        let y: Vec<f64> = (0..n)
            .map(|i| x[(i, 0)] - 2.0 * z[(i, 1)] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ds = MultiViewDataset::from_matrices(vec![x, z], &y, Family::Gaussian).unwrap();
        let config = CoopConfig {
            solver: tight(),
            ..CoopConfig::default()
        };
        let fit = coop_direct_fit_at(&ds, 1.0, 0.0, &config).unwrap();
        let yc = &ds.response().values;
        for (m, view) in ds.view_matrices().iter().enumerate() {
            let ols = (*view).clone().svd(true, true).solve(yc, 1e-14).unwrap();
            let theta = Vector::from_column_slice(&fit.views[m].coefficients);
            worst = worst.max((theta - ols / 2.0).amax());
        }
    }
    outcome(
        worst < 1e-8,
        format!("late-fusion limit: max |theta - OLS/2| = {worst:.2e} with X'Z = 0, lambda = 0, rho = 1 (< 1e-8)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let m_views = if draw % 2 == 0 { 2 } else { 3 };
        let n = rng.random_range(5..20);
        let widths: Vec<usize> = (0..m_views).map(|_| rng.random_range(1..6)).collect();
        let views: Vec<Matrix> = widths.iter().map(|&p| gaussian(&mut rng, n, p)).collect();
        let refs: Vec<&Matrix> = views.iter().collect();
        let y = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let thetas: Vec<Vector> = widths.iter().map(|&p| Vector::from_fn(p, |_, _| rng.sample(StandardNormal))).collect();
        let rho = rng.random_range(0.0..5.0);
        let total: usize = widths.iter().sum();
        let pf: Vec<f64> = (0..total).map(|_| rng.random_range(0.0..2.0)).collect();
        let spec = PenaltySpec::new(rng.random_range(0.0..3.0), rng.random_range(0.0..1.0), pf).unwrap();
        let direct = coop_objective(&refs, &y, &thetas, rho, &spec).unwrap();
        let sys = build_augmented(&refs, &y, rho).unwrap();
        let beta = Vector::from_iterator(total, thetas.iter().flat_map(|t| t.iter().copied()));
        let aug = 0.5 * (&sys.y_tilde - &sys.x_tilde * &beta).norm_squared() + spec.value(beta.as_slice());
        worst = worst.max((direct - aug).abs() / direct.abs().max(1e-300));
    }
    outcome(
        worst < 1e-10,
        format!("augmented identity: max relative objective gap = {worst:.2e} over 100 draws, M in {{2, 3}} (< 1e-10)"),
    )
}

fn criterion_4() -> Outcome {
    let ds = two_view_dataset(4, 80, 10);
    let base = CoopConfig::default();
    let lambda = 0.1 * coop_lambda_grid(&ds, &base, 2, 0.5).unwrap()[0];
    let mut worst_coef: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    for rho in [0.25, 1.0, 2.0] {
        let config = CoopConfig {
            ridge: 1e-8,
            solver: tight(),
            ..CoopConfig::default()
        };
        let direct = coop_direct_fit_at(&ds, rho, lambda, &config).unwrap();
        let fitter = LassoFitter {
            ridge: 1e-8,
            solver: tight(),
            ..LassoFitter::new(lambda)
        };
        let options = IterativeOptions {
            tol: 1e-15,
            max_iter: 100_000,
        };
        let (iter, _) = coop_iterative_fit(&ds, rho, &[fitter.clone(), fitter], &options).unwrap();
        let views = ds.view_matrices();
        let y = &ds.response().values;
        let spec = PenaltySpec::uniform(lambda, 1.0, ds.total_features());
        let objective = |thetas: &[Vector]| {
            let ridge: f64 = thetas.iter().map(|t| t.norm_squared()).sum::<f64>() * 0.5e-8;
            coop_objective(&views, y, thetas, rho, &spec).unwrap() + ridge
        };
        let (a, b) = (direct.thetas(), iter.thetas());
        for (ta, tb) in a.iter().zip(&b) {
            worst_coef = worst_coef.max((ta - tb).amax());
        }
        let (oa, ob) = (objective(&a), objective(&b));
        worst_obj = worst_obj.max((oa - ob).abs() / oa.abs());
    }
    outcome(
        worst_coef < 1e-4 && worst_obj < 1e-6,
        format!(
            "direct vs one-at-a-time: max coefficient gap {worst_coef:.2e} (< 1e-4), relative objective gap {worst_obj:.2e} (< 1e-6), rho in {{0.25, 1, 2}}"
        ),
    )
}

fn non_increasing(values: &[f64], slack: f64) -> usize {
    values
        .windows(2)
        .filter(|w| w[1] > w[0] + slack * (1.0 + w[0].abs()))
        .count()
}

fn criterion_5() -> Outcome {
    let rhos = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    let rho2s = [0.0, 0.1, 1.0, 10.0, 100.0];
    let (mut va, mut vb, mut vc) = (0, 0, 0);
    for seed in 0..50 {
        let ds = two_view_dataset(500 + seed, 40, 6);
        let lmax = coop_lambda_grid(&ds, &CoopConfig::default(), 2, 0.5).unwrap()[0];
        let lambda = 0.1 * lmax;

        let fitter = LassoFitter::new(lambda);
        let rho = [0.3, 1.0, 3.0][seed as usize % 3];
        let (_, trace) = coop_iterative_fit(&ds, rho, &[fitter.clone(), fitter], &IterativeOptions::default()).unwrap();
        va += non_increasing(&trace, 1e-12);

        let config = CoopConfig {
            solver: tight(),
            ..CoopConfig::default()
        };
        let views = ds.view_matrices();
        let agreements: Vec<f64> = rhos
            .iter()
            .map(|&r| {
                let fit = coop_direct_fit_at(&ds, r, lambda, &config).unwrap();
                let fitted: Vec<Vector> = views.iter().zip(fit.thetas()).map(|(v, t)| *v * t).collect();
                agreement(&fitted)
            })
            .collect();
        vb += non_increasing(&agreements, 1e-9);

        let pairs = vec![
            FeaturePair {
                view_a: 0,
                col_a: 0,
                view_b: 1,
                col_b: 0,
            },
            FeaturePair {
                view_a: 0,
                col_a: 1,
                view_b: 1,
                col_b: 2,
            },
        ];
        let gaps: Vec<f64> = rho2s
            .iter()
            .map(|&r2| {
                let spec = PairSpec {
                    pairs: pairs.clone(),
                    rho2: r2,
                };
                let config = CoopConfig {
                    pairs: Some(spec.clone()),
                    solver: tight(),
                    ..CoopConfig::default()
                };
                let fit = coop_direct_fit_at(&ds, 0.5, lambda, &config).unwrap();
                spec.discrepancy(&views, &fit.thetas())
            })
            .collect();
        vc += non_increasing(&gaps, 1e-9);
    }
    outcome(
        va + vb + vc == 0,
        format!("monotonicity over 50 runs: (a) {va} objective increases, (b) {vb} agreement increases in rho, (c) {vc} paired discrepancy increases in rho2 (all 0)"),
    )
}

fn criterion_6(exec: &RayonExecutor) -> Outcome {
    let config = SparsityConfig::default();
    let rows = sparsity_study_with(&config, 2022, exec).unwrap();
    let g = config.n_grid;
    let count = |k: usize, i: usize| rows[k * g + i].nonzero_count;
    let mut violations = 0;
    let mut strict = 0;
    for i in 0..g {
        for k in 1..config.rhos.len() {
            if count(k, i) < count(k - 1, i) {
                violations += 1;
            }
        }
        if count(config.rhos.len() - 1, i) > count(0, i) {
            strict += 1;
        }
    }
    outcome(
        violations == 0 && 2 * strict >= g,
        format!(
            "sparsity study: {violations} decreases in rho over {g} l1 grid points (0), rho=2 above rho=0 at {strict}/{g} (>= {})",
            g.div_ceil(2)
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = random_params(200, &mut rng);
        let (x, z) = draw_features(&p, &mut rng);
        worst = worst.max(check_derivative(&x, &z, &p, 1e-5).unwrap().relative_gap);
    }
    outcome(
        worst < 1e-5,
        format!("derivative at zero vs central difference: max relative gap {worst:.2e} over 50 instances, n = 200 (< 1e-5)"),
    )
}

fn criterion_8() -> Outcome {
    let unit = LatentModelParams::default().with_n(100);
    let (d, r) = (asymptotic_derivative(&unit), asymptotic_ratio(&unit));
    let hand = (d - (-8.0 / 90.0)).abs() < 1e-15
        && (r - (-1.0 / 15.0)).abs() < 1e-15
        && (d - (-0.08889)).abs() < 5e-6
        && (r - (-0.06667)).abs() < 5e-6;
    let report = run_theory_checks(&TheoryCheckConfig::default()).unwrap();
    let get = |name: &str| report.check(name).unwrap();
    let names = ["asymptotic_derivative_gap", "asymptotic_ratio_gap", "derivative_rate", "ratio_rate"];
    let passed = hand && names.iter().all(|n| get(n).passed);
    outcome(
        passed,
        format!(
            "asymptotics: derivative(n=100) = {d:.5}, ratio(n=100) = {r:.5}; relative gaps at n=1e5 {:.2e}, {:.2e} (< 0.05); median gap*n^1.5 growth 1e3->1e4 {:.3}, {:.3} (<= {})",
            get(names[0]).observed,
            get(names[1]).observed,
            get(names[2]).observed,
            get(names[3]).observed,
            get(names[2]).threshold
        ),
    )
}

fn full_scale() -> bool {
    std::env::var("COOPLEARN_FULL_SCALE").is_ok_and(|v| v == "1")
}

fn criterion_9(exec: &RayonExecutor) -> Outcome {
    let config = BenchmarkConfig {
        methods: vec![Method::EarlyFusion, Method::LateFusion, Method::Cooperative],
        ..BenchmarkConfig::correlated(full_scale())
    };
    let bench = run_benchmark_with(&config, exec).unwrap();
    let mean = |m| bench.mean(m).unwrap();
    let (coop, early, late) = (mean(Method::Cooperative), mean(Method::EarlyFusion), mean(Method::LateFusion));
    let (se, sl) = (
        bench.share_at_most(Method::Cooperative, Method::EarlyFusion),
        bench.share_at_most(Method::Cooperative, Method::LateFusion),
    );
    let reps = config.replicates as f64;
    outcome(
        coop <= early && coop <= late && se >= 0.7 && sl >= 0.7,
        format!(
            "correlated views (p = {}): mean test MSE coop {coop:.2}, early {early:.2}, late {late:.2}; coop <= early in {}/{}, coop <= late in {}/{} (>= 7/10)",
            config.p_per_view,
            (se * reps).round(),
            reps,
            (sl * reps).round(),
            reps
        ),
    )
}

fn criterion_10(exec: &RayonExecutor) -> Outcome {
    let config = BenchmarkConfig {
        methods: vec![
            Method::SeparateX,
            Method::EarlyFusion,
            Method::LateFusion,
            Method::AdaptiveCooperative,
        ],
        ..BenchmarkConfig::x_only(full_scale())
    };
    let bench = run_benchmark_with(&config, exec).unwrap();
    let mean = |m| bench.mean(m).unwrap();
    let (adaptive, sep, early, late) = (
        mean(Method::AdaptiveCooperative),
        mean(Method::SeparateX),
        mean(Method::EarlyFusion),
        mean(Method::LateFusion),
    );
    let rel = (adaptive - sep).abs() / sep;
    outcome(
        rel <= 0.05 && adaptive < early && adaptive < late,
        format!(
            "signal in X only (p = {}): mean test MSE adaptive {adaptive:.3}, separate X {sep:.3} (gap {:.1}% <= 5%), early {early:.3}, late {late:.3}",
            config.p_per_view,
            100.0 * rel
        ),
    )
}

/// Proximal gradient with backtracking on `NLL + λ‖β‖₁`, intercept unpenalized.
fn logistic_oracle(x: &Matrix, y: &[f64], lambda: f64) -> Vector {
    let (n, p) = (x.nrows(), x.ncols());
    let mut a = Matrix::from_element(n, p + 1, 1.0);
    a.columns_mut(1, p).copy_from(x);
    let f = |c: &Vector| logistic_nll(&(&a * c), y);
    let mut c = Vector::zeros(p + 1);
    let mut step = 1.0;
    for _ in 0..30_000 {
        let eta = &a * &c;
        let r = Vector::from_fn(n, |i, _| 1.0 / (1.0 + (-eta[i]).exp()) - y[i]);
        let g = a.tr_mul(&r);
        let fc = f(&c);
        loop {
            let mut next = &c - &g * step;
            for j in 1..=p {
                next[j] = soft_threshold(next[j], step * lambda);
            }
            let d = &next - &c;
            if f(&next) <= fc + g.dot(&d) + d.norm_squared() / (2.0 * step) {
                c = next;
                break;
            }
            step *= 0.5;
        }
    }
    c
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 40;
    let x = gaussian(&mut rng, n, 5);
    let z = gaussian(&mut rng, n, 5);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = 1.0 * x[(i, 0)] - 0.8 * z[(i, 1)] + 0.2;
            let u: f64 = rng.random();
            if u < 1.0 / (1.0 + (-eta).exp()) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let ds = MultiViewDataset::from_matrices(vec![x, z], &y, Family::Binomial).unwrap();
    let config = CoopConfig::default();
    let lambda = 0.1 * logistic_lambda_max(&ds, &config).unwrap();
    let options = LogisticOptions::default();
    let fit = fit_coop_logistic(&ds, 0.0, lambda, &config, &options).unwrap();
    let oracle = logistic_oracle(&ds.concatenated(), &y, lambda);
    let coefs: Vec<f64> = std::iter::once(fit.intercept)
        .chain(fit.views.iter().flat_map(|v| v.coefficients.clone()))
        .collect();
    let gap = (Vector::from_vec(coefs) - oracle).amax();

    let mut increases = 0;
    for rho in [0.0, 0.5, 2.0] {
        let spec = PenaltySpec::uniform(lambda, 1.0, ds.total_features());
        let f = fit_logistic_views(&ds.view_matrices(), &y, rho, &spec, None, &options).unwrap();
        increases += non_increasing(&f.trace, 1e-12);
    }
    outcome(
        gap < 1e-4 && increases == 0,
        format!("cooperative logistic: max |IRLS - proximal oracle| = {gap:.2e} at rho = 0 (< 1e-4); {increases} objective increases across accepted steps (0)"),
    )
}

fn main() -> ExitCode {
    let exec = RayonExecutor::global();
    let criteria: Vec<(usize, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| criterion_6(&exec))),
        (7, Box::new(criterion_7)),
        (8, Box::new(criterion_8)),
        (9, Box::new(|| criterion_9(&exec))),
        (10, Box::new(|| criterion_10(&exec))),
        (11, Box::new(criterion_11)),
    ];
    let only: Option<Vec<usize>> = std::env::var("COOPLEARN_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    for (k, run) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(k)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += !o.passed as usize;
        println!(
            "criterion {k:>2}: {} {} [{:.1}s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
