//! Acceptance suite: one PASS/FAIL line per criterion, tolerances and time budgets pinned here.
//!
//! Runs sequentially so the timings are meaningful. Positional arguments filter criteria by
//! id or title substring.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saddlemax::{run_converge, run_posterior, run_sample, ExperimentConfig};
use saddlemax_core::mle::{fit_mle, identifiability, ExactSource, MleOptions, ParameterSplit};
use saddlemax_core::models::{
    compose_concat, BirthDeathModel, GammaModel, LinearMapModel, MixtureNormalModel, NormalModel,
    NormalWithSquareModel, PoissonModel,
};
use saddlemax_core::{
    grad_log_likelihood, log_likelihood, ApproximationKind, CgfModel, Observation, QuadratureConfig,
};

use ApproximationKind::{Exact, NormalApprox, Saddlepoint, ZerothOrder};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (u32, &'static str, u64, fn() -> Outcome);

const CRITERIA: [Criterion; 14] = [
    (1, "normal exactness", 1, c01_normal_exactness),
    (2, "exponential-family MLE exactness", 5, c02_expfamily_mle_exactness),
    (3, "poisson stirling ratio", 1, c03_poisson_stirling),
    (4, "poisson normal-approx MLE", 1, c04_poisson_normal_mle),
    (5, "gamma-fi rate suite", 30, c05_gammafi_rates),
    (6, "gamma-pi rate suite", 60, c06_gammapi_rates),
    (7, "inversion oracle", 30, c07_inversion_oracle),
    (8, "gradient suite", 60, c08_gradient_suite),
    (9, "sampling distribution", 300, c09_sampling_distribution),
    (10, "posterior grid", 30, c10_posterior_grid),
    (11, "normal-with-square ratio", 5, c11_normal_square_ratio),
    (12, "mixture failure mode", 1, c12_mixture_failure_mode),
    (13, "identifiability diagnostics", 5, c13_identifiability),
    (14, "affine invariance", 5, c14_affine_invariance),
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, title, budget, run) in CRITERIA {
        let tag = format!("C{id:02}");
        if !filters.is_empty() && !filters.iter().any(|f| tag.eq_ignore_ascii_case(f) || title.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = result.pass && in_time;
        println!(
            "{} {tag} {title}: {} [{:.2}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(tag);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn closed_form_opts() -> MleOptions {
    MleOptions { exact_source: ExactSource::ClosedForm, ..MleOptions::default() }
}

fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(m, m, |i, j| if i > j { rng.random_range::<f64, _>(-1.0..1.0) } else if i == j { rng.random_range::<f64, _>(0.5..1.5) } else { 0.0 });
    &l * l.transpose()
}

/// Gaussian log-density from its definition, via an explicit Cholesky factor.
fn gaussian_oracle(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let m = x.len();
    let chol = cov.clone().cholesky().expect("SPD");
    let l = chol.l();
    let log_det: f64 = 2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>();
    let z = l.solve_lower_triangular(&(x - mean)).unwrap();
    -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + z.norm_squared())
}

fn ln_fact(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn c01_normal_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let m = 1 + i % 3;
        let base = random_spd(&mut rng, m);
        let (model, theta) = if i % 2 == 0 {
            let th = DVector::from_fn(m, |_, _| rng.random_range::<f64, _>(-2.0..2.0));
            (NormalModel::mean_only(base).unwrap(), th)
        } else {
            let mut th = DVector::from_fn(m + 1, |_, _| rng.random_range::<f64, _>(-2.0..2.0));
            th[m] = rng.random_range::<f64, _>(-1.0..1.0);
            (NormalModel::mean_log_scale(base).unwrap(), th)
        };
        let n: f64 = rng.random_range::<f64, _>(1.0..50.0);
        let mu = model.mean(&theta);
        let cov = model.cov(&theta);
        let x = &mu * n + DVector::from_fn(m, |_, _| rng.random_range::<f64, _>(-2.0..2.0)) * n.sqrt();
        let obs = Observation::new(x.clone(), n).unwrap();
        let spa = log_likelihood(&model, &theta, &obs, Saddlepoint, &quad()).unwrap().total;
        worst = worst.max((spa - gaussian_oracle(&x, &(mu * n), &(cov * n))).abs());
    }
    outcome(worst <= 1e-12, format!("max |spa - gaussian| = {worst:.2e} (tol 1e-12)"))
}

fn c02_expfamily_mle_exactness() -> Outcome {
    let mut worst_poisson = 0.0f64;
    for x in 1..=50 {
        let obs = Observation::new(v1(x as f64), 1.0).unwrap();
        let opts = MleOptions::default();
        let e = fit_mle(&PoissonModel, &obs, Exact, &v1(1.0), &[(1e-3, 200.0)], &opts).unwrap();
        let s = fit_mle(&PoissonModel, &obs, Saddlepoint, &v1(1.0), &[(1e-3, 200.0)], &opts).unwrap();
        if !(e.converged && s.converged) {
            return outcome(false, format!("poisson x={x} did not converge"));
        }
        worst_poisson = worst_poisson.max((e.theta_hat[0] - s.theta_hat[0]).abs());
    }
    let model = NormalWithSquareModel::normal_with_square();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_ns = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for n in [4usize, 6, 9, 13, 20] {
        let z: Vec<f64> = (0..n).map(|_| rng.random_range::<f64, _>(-1.0..2.0)).collect();
        let (s1, s2) = (z.iter().sum::<f64>(), z.iter().map(|v| v * v).sum::<f64>());
        let obs = Observation::new(DVector::from_vec(vec![s1, s2]), n as f64).unwrap();
        let init = DVector::from_vec(vec![0.0, 1.0]);
        let bx = [(-10.0, 10.0), (1e-3, 100.0)];
        let e = fit_mle(&model, &obs, Exact, &init, &bx, &closed_form_opts()).unwrap();
        let s = fit_mle(&model, &obs, Saddlepoint, &init, &bx, &MleOptions::default()).unwrap();
        if !(e.converged && s.converged) {
            return outcome(false, format!("normal-square n={n} did not converge"));
        }
        worst_ns = worst_ns.max((&e.theta_hat - &s.theta_hat).amax());
        let zbar = s1 / n as f64;
        let oracle = DVector::from_vec(vec![zbar, s2 / n as f64 - zbar * zbar]);
        worst_oracle = worst_oracle.max((&s.theta_hat - oracle).amax());
    }
    let pass = worst_poisson <= 1e-9 && worst_ns <= 1e-9 && worst_oracle <= 1e-9;
    outcome(
        pass,
        format!("poisson gap {worst_poisson:.1e}, normal-square gap {worst_ns:.1e}, vs (zbar, pop var) {worst_oracle:.1e} (tol 1e-9)"),
    )
}

fn c03_poisson_stirling() -> Outcome {
    let mut worst = 0.0f64;
    for x in 1..=50u64 {
        let xf = x as f64;
        let theta = v1(0.7 * xf + 1.0);
        let obs = Observation::new(v1(xf), 1.0).unwrap();
        let spa = log_likelihood(&PoissonModel, &theta, &obs, Saddlepoint, &quad()).unwrap().total;
        let log_pmf = xf * theta[0].ln() - theta[0] - ln_fact(x);
        let ratio = (spa - log_pmf).exp();
        let stirling = (ln_fact(x) - 0.5 * (2.0 * std::f64::consts::PI * xf).ln() - xf * (xf.ln() - 1.0)).exp();
        worst = worst.max((ratio / stirling - 1.0).abs());
    }
    outcome(worst <= 1e-10, format!("max relative error {worst:.2e} (tol 1e-10)"))
}

fn c04_poisson_normal_mle() -> Outcome {
    let mut worst = 0.0f64;
    for x in 1..=50 {
        let xf = x as f64;
        let obs = Observation::new(v1(xf), 1.0).unwrap();
        let fit = fit_mle(&PoissonModel, &obs, NormalApprox, &v1(1.0), &[(1e-3, 200.0)], &MleOptions::default()).unwrap();
        if !fit.converged {
            return outcome(false, format!("x={x} did not converge"));
        }
        worst = worst.max((fit.theta_hat[0] - ((xf * xf + 0.25).sqrt() - 0.5)).abs());
    }
    outcome(worst <= 1e-8, format!("max |lambda - (sqrt(x^2+1/4) - 1/2)| = {worst:.2e} (tol 1e-8)"))
}

fn slope_text(s: Option<&saddlemax::SlopeFit>) -> String {
    s.map_or("none".into(), |f| format!("{:.3} (r2 {:.4})", f.slope, f.r_squared))
}

fn in_range(s: Option<&saddlemax::SlopeFit>, lo: f64, hi: f64) -> bool {
    s.is_some_and(|f| (lo..=hi).contains(&f.slope))
}

fn c05_gammafi_rates() -> Outcome {
    let grid = "[16, 32, 64, 128, 256, 512]";
    let main = ExperimentConfig::from_json(&format!(
        r#"{{"model": "gamma-fi", "experiment": "converge", "n_grid": {grid}, "kinds": ["spa", "zeroth"],
            "theta0": [1.0], "y0": [1.0], "reference": "closed_form", "bounds": [[0.001, 20.0]]}}"#
    ))
    .unwrap();
    let normal = ExperimentConfig::from_json(&format!(
        r#"{{"model": "gamma-fi", "experiment": "converge", "n_grid": {grid}, "kinds": ["normal"],
            "theta0": [1.0], "xi": [1.0], "reference": "closed_form", "bounds": [[0.001, 20.0]]}}"#
    ))
    .unwrap();
    let a = run_converge(&main, &main.model_entry().unwrap()).unwrap();
    let b = run_converge(&normal, &normal.model_entry().unwrap()).unwrap();
    let spa = a.slope(Saddlepoint, Exact);
    let zeroth = a.slope(ZerothOrder, Exact);
    let norm = b.slope(NormalApprox, Exact);
    let mut worst_half = 0.0f64;
    let mut half_ok = true;
    for (row, (ts, tz)) in a.rows.iter().zip(a.theta(Saddlepoint).into_iter().zip(a.theta(ZerothOrder))) {
        match (ts, tz) {
            (Some(ts), Some(tz)) => {
                let dev = (row.n * (ts[0] - tz[0]) - 0.5).abs();
                worst_half = worst_half.max(dev * row.n);
                half_ok &= dev <= 5.0 / row.n;
            }
            _ => half_ok = false,
        }
    }
    let pass = in_range(spa, -2.3, -1.7) && in_range(zeroth, -1.2, -0.8) && in_range(norm, -1.3, -0.7) && half_ok;
    outcome(
        pass,
        format!(
            "slopes spa {} zeroth {} normal {}; max n*|n(spa-zeroth)-1/2| = {worst_half:.3} (limit 5)",
            slope_text(spa),
            slope_text(zeroth),
            slope_text(norm)
        ),
    )
}

fn c06_gammapi_rates() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"model": "gamma-pi", "params": {"blocks": 2}, "experiment": "converge",
            "n_grid": [16, 32, 64, 128, 256, 512], "kinds": ["spa", "normal"], "theta0": [1.0],
            "xi": [1.0, -1.0], "reference": "closed_form", "bounds": [[0.001, 50.0]]}"#,
    )
    .unwrap();
    let out = run_converge(&cfg, &cfg.model_entry().unwrap()).unwrap();
    let spa = out.slope(Saddlepoint, Exact);
    let norm = out.slope(NormalApprox, Exact);
    let pass = in_range(spa, -1.25, -0.75) && in_range(norm, -0.7, -0.3);
    outcome(pass, format!("slopes in nu: spa {} (want [-1.25,-0.75]), normal {} (want [-0.7,-0.3])", slope_text(spa), slope_text(norm)))
}

fn c07_inversion_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_cont = 0.0f64;
    for i in 0..50 {
        let (model, theta): (Box<dyn CgfModel>, DVector<f64>) = if i % 2 == 0 {
            let a = rng.random_range::<f64, _>(0.5..3.0);
            let r = rng.random_range::<f64, _>(0.5..2.0);
            (Box::new(GammaModel::free()), DVector::from_vec(vec![a, r]))
        } else {
            let m = 1 + (i / 2) % 2;
            let th = DVector::from_fn(m, |_, _| rng.random_range::<f64, _>(-2.0..2.0));
            (Box::new(NormalModel::mean_only(random_spd(&mut rng, m)).unwrap()), th)
        };
        let m = model.signature().m;
        let n = if i % 2 == 0 { (2.0 / theta[0]).ceil().max(1.0) + rng.random_range::<f64, _>(0.0..20.0) } else { rng.random_range::<f64, _>(1.0..30.0) };
        let s = DVector::from_fn(m, |_, _| rng.random_range::<f64, _>(-0.4..0.3));
        let x = model.grad_s(&s, &theta) * n;
        let obs = Observation::new(x.clone(), n).unwrap();
        let exact = log_likelihood(model.as_ref(), &theta, &obs, Exact, &quad()).unwrap().total;
        let oracle = model.closed_form_log_density(&theta, &x, n).unwrap();
        worst_cont = worst_cont.max((exact - oracle).abs());
    }
    let mut worst_lattice = 0.0f64;
    for x in 1..=40u64 {
        let lambda = rng.random_range::<f64, _>(0.5..10.0);
        let n = 1.0 + (x % 3) as f64;
        let obs = Observation::new(v1(x as f64), n).unwrap();
        let exact = log_likelihood(&PoissonModel, &v1(lambda), &obs, Exact, &quad()).unwrap().total;
        let log_pmf = x as f64 * (n * lambda).ln() - n * lambda - ln_fact(x);
        worst_lattice = worst_lattice.max((exact - log_pmf).exp_m1().abs());
    }
    outcome(
        worst_cont <= 1e-6 && worst_lattice <= 1e-10,
        format!("continuous max abs {worst_cont:.2e} (tol 1e-6); lattice max rel {worst_lattice:.2e} (tol 1e-10)"),
    )
}

/// A gradient-suite case: model, parameter, observation.
type Case = (String, Arc<dyn CgfModel>, DVector<f64>, Observation);

fn gradient_cases(rng: &mut ChaCha8Rng) -> Vec<Case> {
    let mut cases: Vec<Case> = Vec::new();
    let int = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| rng.random_range(lo..=hi) as f64;
    for _ in 0..20 {
        let th = rng.random_range::<f64, _>(0.5..5.0);
        let n = int(rng, 1, 20);
        let x = (n * th * rng.random_range::<f64, _>(0.5..1.8)).round().max(1.0);
        cases.push(("poisson".into(), Arc::new(PoissonModel), v1(th), Observation::new(v1(x), n).unwrap()));
    }
    for (name, g) in [("gamma", GammaModel::free()), ("gamma-fi", GammaModel::fi()), ("gamma-pi", GammaModel::pi())] {
        for _ in 0..20 {
            let th = if name == "gamma" {
                DVector::from_vec(vec![rng.random_range::<f64, _>(0.8..3.0), rng.random_range::<f64, _>(0.5..2.0)])
            } else {
                v1(rng.random_range::<f64, _>(0.8..3.0))
            };
            let n = int(rng, 3, 20);
            let (_, r) = g.shape_rate(&th);
            let s = rng.random_range::<f64, _>(-0.5..0.4) * r;
            let y = g.grad_s(&v1(s), &th);
            cases.push((name.into(), Arc::new(g), th, Observation::from_mean(y, n).unwrap()));
        }
    }
    for _ in 0..20 {
        let cov = random_spd(rng, 2);
        let model = NormalModel::mean_only(cov).unwrap();
        let th = DVector::from_fn(2, |_, _| rng.random_range::<f64, _>(-1.0..1.0));
        let n = rng.random_range::<f64, _>(1.0..20.0);
        let x = &th * n + DVector::from_fn(2, |_, _| rng.random_range::<f64, _>(-1.0..1.0)) * n.sqrt();
        cases.push(("normal".into(), Arc::new(model), th, Observation::new(x, n).unwrap()));
    }
    for _ in 0..20 {
        let model = NormalModel::mean_log_scale(DMatrix::from_element(1, 1, 1.5)).unwrap();
        let th = DVector::from_vec(vec![rng.random_range::<f64, _>(-1.0..1.0), rng.random_range::<f64, _>(-0.5..0.5)]);
        let n = rng.random_range::<f64, _>(1.0..20.0);
        let x = v1(th[0] * n + rng.random_range::<f64, _>(-1.0..1.0) * n.sqrt());
        cases.push(("normal-logscale".into(), Arc::new(model), th, Observation::new(x, n).unwrap()));
    }
    for _ in 0..20 {
        let th = DVector::from_vec(vec![rng.random_range::<f64, _>(-1.0..1.0), rng.random_range::<f64, _>(0.5..2.0)]);
        let n = rng.random_range::<f64, _>(1.0..20.0);
        let x = v1(th[0] * n + rng.random_range::<f64, _>(-1.0..1.0) * (n * th[1]).sqrt());
        cases.push(("normal-meanvar".into(), Arc::new(NormalModel::mean_variance()), th, Observation::new(x, n).unwrap()));
    }
    for _ in 0..20 {
        let th = DVector::from_vec(vec![rng.random_range::<f64, _>(-1.0..1.0), rng.random_range::<f64, _>(0.5..2.0)]);
        let n = int(rng, 20, 40);
        let z: Vec<f64> = (0..n as usize).map(|_| th[0] + th[1].sqrt() * rng.random_range::<f64, _>(-1.7..1.7)).collect();
        let x = DVector::from_vec(vec![z.iter().sum(), z.iter().map(|v| v * v).sum()]);
        cases.push(("normal-square".into(), Arc::new(NormalWithSquareModel::normal_with_square()), th, Observation::new(x, n).unwrap()));
    }
    for _ in 0..20 {
        let omega = rng.random_range::<f64, _>(-0.5..0.5);
        let nu = omega.abs() + rng.random_range::<f64, _>(0.3..1.5);
        let th = DVector::from_vec(vec![omega, nu]);
        let n = int(rng, 2, 20);
        let mean = n * omega.exp();
        let x = (mean * rng.random_range::<f64, _>(0.6..1.6)).round().max(1.0);
        cases.push(("birth-death".into(), Arc::new(BirthDeathModel::new(1.0).unwrap()), th, Observation::new(v1(x), n).unwrap()));
    }
    for _ in 0..20 {
        let th = v1(rng.random_range::<f64, _>(-1.5..1.5));
        let n = int(rng, 1, 10);
        let x = v1(rng.random_range::<f64, _>(-0.8..0.8) * n);
        cases.push(("mixture-normal".into(), Arc::new(MixtureNormalModel), th, Observation::new(x, n).unwrap()));
    }
    let concat: Arc<dyn CgfModel> = Arc::new(compose_concat(Arc::new(GammaModel::pi()), vec![1.0, 2.0]).unwrap());
    for _ in 0..20 {
        let th = v1(rng.random_range::<f64, _>(1.0..3.0));
        let n = int(rng, 10, 30);
        let y = DVector::from_fn(2, |i, _| [1.0, 2.0][i] * rng.random_range::<f64, _>(0.7..1.4));
        cases.push(("concat(gamma-pi)".into(), concat.clone(), th, Observation::from_mean(y, n).unwrap()));
    }
    let latent: Arc<dyn CgfModel> = Arc::new(NormalWithSquareModel::normal_with_square());
    for _ in 0..20 {
        let a = DMatrix::from_fn(2, 2, |i, j| if i == j { rng.random_range::<f64, _>(1.0..2.0) } else { rng.random_range::<f64, _>(-0.5..0.5) });
        let b = DVector::from_fn(2, |_, _| rng.random_range::<f64, _>(-1.0..1.0));
        let model = LinearMapModel::with_offset(a.clone(), b.clone(), latent.clone()).unwrap();
        let th = DVector::from_vec(vec![rng.random_range::<f64, _>(-1.0..1.0), rng.random_range::<f64, _>(0.5..2.0)]);
        let n = int(rng, 20, 40);
        let z: Vec<f64> = (0..n as usize).map(|_| th[0] + th[1].sqrt() * rng.random_range::<f64, _>(-1.7..1.7)).collect();
        let xu = DVector::from_vec(vec![z.iter().sum(), z.iter().map(|v| v * v).sum()]);
        let x = a * xu + b * n;
        cases.push(("linear-map(normal-square)".into(), Arc::new(model), th, Observation::new(x, n).unwrap()));
    }
    cases
}

/// Five-point central differences of the total log-likelihood.
fn fd5(model: &dyn CgfModel, theta: &DVector<f64>, obs: &Observation, kind: ApproximationKind) -> Option<DVector<f64>> {
    let f = |t: &DVector<f64>| log_likelihood(model, t, obs, kind, &quad()).ok().map(|l| l.total);
    let mut g = DVector::zeros(theta.len());
    for j in 0..theta.len() {
        let h = 1e-3 * theta[j].abs().max(1.0);
        let at = |k: f64| {
            let mut t = theta.clone();
            t[j] += k * h;
            f(&t)
        };
        g[j] = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * h);
    }
    Some(g)
}

fn c08_gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let cases = gradient_cases(&mut rng);
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    let mut errors = Vec::new();
    for (name, model, theta, obs) in &cases {
        for kind in ApproximationKind::ALL {
            let analytic = grad_log_likelihood(model.as_ref(), theta, obs, kind, &quad());
            let fd = fd5(model.as_ref(), theta, obs, kind);
            match (analytic, fd) {
                (Ok(g), Some(fd)) => {
                    let rel = (&g - &fd).amax() / fd.amax().max(1.0);
                    checked += 1;
                    if rel > worst.0 {
                        worst = (rel, format!("{name}/{}", kind.label()));
                    }
                }
                (Err(e), _) => errors.push(format!("{name}/{}: {e}", kind.label())),
                (_, None) => errors.push(format!("{name}/{}: fd failed", kind.label())),
            }
        }
    }
    let pass = errors.is_empty() && worst.0 <= 1e-6;
    let mut detail = format!("{checked} gradients, max rel err {:.2e} at {} (tol 1e-6)", worst.0, worst.1);
    if !errors.is_empty() {
        detail += &format!("; {} errors, first: {}", errors.len(), errors[0]);
    }
    outcome(pass, detail)
}

fn c09_sampling_distribution() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"model": "gamma-fi", "experiment": "sample", "n_grid": [200], "kinds": ["spa", "exact"],
            "theta0": [1.0], "replicates": 2000, "seed": 2024, "reference": "closed_form",
            "bounds": [[0.001, 10.0]]}"#,
    )
    .unwrap();
    let out = run_sample(&cfg, &cfg.model_entry().unwrap()).unwrap();
    let spa = out.summary(200.0, Saddlepoint).unwrap();
    let var = spa.cov[(0, 0)];
    let gap = spa.max_gap_vs_exact.unwrap();
    let pass = (var - 1.0).abs() <= 0.15 && gap <= 1e-3;
    outcome(
        pass,
        format!("var of sqrt(n)(theta_spa - 1) = {var:.4} (want 1 +- 15%), max |spa - exact| = {gap:.2e} (tol 1e-3), {} failed of {}", out.failed, out.total),
    )
}

fn c10_posterior_grid() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{"model": "gamma-fi", "experiment": "posterior", "n_grid": [400], "kinds": ["exact", "spa", "zeroth"],
            "theta0": [1.0], "grid_points": 4001, "grid_halfwidth": 8.0, "reference": "closed_form"}"#,
    )
    .unwrap();
    let out = run_posterior(&cfg, &cfg.model_entry().unwrap()).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [Exact, Saddlepoint, ZerothOrder] {
        let v = out.summary(400.0, k).unwrap().cov[(0, 0)];
        pass &= (v - 1.0).abs() <= 0.10;
        parts.push(format!("{} {v:.4}", k.label()));
    }
    let me = out.summary(400.0, Exact).unwrap().theta_mean[0];
    let ms = out.summary(400.0, Saddlepoint).unwrap().theta_mean[0];
    outcome(pass, format!("posterior var of sqrt(n)(Theta-1): {} (want 1 +- 10%); |mean exact - mean spa| = {:.1e}", parts.join(", "), (me - ms).abs()))
}

/// `Γ(k/2)` for positive integer `k` by its recursion.
fn gamma_half(k: u32) -> f64 {
    if k == 1 {
        std::f64::consts::PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half(k - 2)
    }
}

fn c11_normal_square_ratio() -> Outcome {
    let model = NormalWithSquareModel::normal_with_square();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut worst = 0.0f64;
    let mut devs = Vec::new();
    for n in 3..=12u32 {
        let nf = n as f64;
        let th = DVector::from_vec(vec![rng.random_range::<f64, _>(-1.0..1.0), rng.random_range::<f64, _>(0.5..2.0)]);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range::<f64, _>(-2.0..2.0)).collect();
        let x = DVector::from_vec(vec![z.iter().sum(), z.iter().map(|v| v * v).sum()]);
        let obs = Observation::new(x.clone(), nf).unwrap();
        let spa = log_likelihood(&model, &th, &obs, Saddlepoint, &quad()).unwrap().total;
        let exact = model.closed_form_log_density(&th, &x, nf).unwrap();
        let measured = (spa - exact).exp();
        let want = 2f64.powf((nf - 3.0) / 2.0) * (nf / 2.0).exp() * gamma_half(n - 1)
            / (nf.powf(nf / 2.0 - 1.0) * std::f64::consts::PI.sqrt());
        worst = worst.max((measured / want - 1.0).abs());
        devs.push((measured - 1.0).abs());
    }
    let monotone = devs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst <= 1e-8 && monotone,
        format!("max rel err {worst:.2e} (tol 1e-8); |ratio-1| from {:.4} (n=3) to {:.4} (n=12), monotone {monotone}", devs[0], devs[devs.len() - 1]),
    )
}

fn c12_mixture_failure_mode() -> Outcome {
    let model = MixtureNormalModel;
    let obs = Observation::new(v1(0.0), 1.0).unwrap();
    let g = grad_log_likelihood(&model, &v1(1.5), &obs, Saddlepoint, &quad()).unwrap()[0];
    let d_theta2 = g / (2.0 * 1.5);
    let exact_at = |t: f64| model.closed_form_log_density(&v1(t), &obs.x, 1.0).unwrap();
    let peak = exact_at(0.0);
    let grid_max = (-300..=300).map(|i| exact_at(i as f64 * 0.01)).fold(f64::NEG_INFINITY, f64::max);
    let fit = fit_mle(&model, &obs, Exact, &v1(0.4), &[(-3.0, 3.0)], &closed_form_opts()).unwrap();
    let pass = d_theta2 > 0.0 && peak >= grid_max && fit.converged && fit.theta_hat[0].abs() < 1e-8;
    outcome(pass, format!("dSPA/d(theta^2) at 1.5 = {d_theta2:.4} (> 0); exact MLE = {:.1e} (grid max at 0: {})", fit.theta_hat[0], peak >= grid_max))
}

fn c13_identifiability() -> Outcome {
    let mut worst_gamma = 0.0f64;
    for th in [0.5, 1.0, 3.0] {
        let r = identifiability(&GammaModel::fi(), &v1(0.0), &v1(th), None, None).unwrap();
        worst_gamma = worst_gamma.max((r.h[(0, 0)] + 1.0 / th).abs());
        if !r.h_negdef {
            return outcome(false, "gamma-fi H not negative definite");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1313);
    let mut worst_normal = 0.0f64;
    for m in [1usize, 2, 3] {
        let cov = random_spd(&mut rng, m);
        let model = NormalModel::mean_only(cov.clone()).unwrap();
        let th = DVector::from_fn(m, |_, _| rng.random_range::<f64, _>(-1.0..1.0));
        let r = identifiability(&model, &DVector::zeros(m), &th, None, None).unwrap();
        worst_normal = worst_normal.max((&r.h + cov.try_inverse().unwrap()).amax());
        let unit = NormalModel::mean_only(DMatrix::identity(m, m)).unwrap();
        let r = identifiability(&unit, &DVector::zeros(m), &th, None, None).unwrap();
        worst_normal = worst_normal.max((&r.h + DMatrix::<f64>::identity(m, m)).amax());
    }
    let bd = compose_concat(Arc::new(BirthDeathModel::new(1.0).unwrap()), vec![1.0, 1.0, 1.0]).unwrap();
    let split = ParameterSplit::new(vec![0], vec![1]);
    let theta0 = DVector::from_vec(vec![0.3, 1.2]);
    let xi0 = DVector::from_vec(vec![1.0, -0.5, 0.2]);
    let r = identifiability(&bd, &DVector::zeros(3), &theta0, Some(&split), Some(&xi0)).unwrap();
    let proj = r.partial.as_ref().unwrap().projection_error;
    let pass = worst_gamma <= 1e-10 && worst_normal <= 1e-10 && proj <= 1e-10;
    outcome(
        pass,
        format!("gamma-fi |H + 1/theta0| {worst_gamma:.1e}; normal |H + Sigma^-1| {worst_normal:.1e} (equals -Sigma at Sigma=I); birth-death ||JAJ - J|| {proj:.1e} (tol 1e-10)"),
    )
}

fn c14_affine_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1414);
    let latent: Arc<dyn CgfModel> = Arc::new(NormalWithSquareModel::normal_with_square());
    let init = DVector::from_vec(vec![0.0, 1.0]);
    let bx = [(-10.0, 10.0), (1e-3, 100.0)];
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = loop {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range::<f64, _>(-2.0..2.0));
            if a.determinant().abs() > 0.3 {
                break a;
            }
        };
        let b = DVector::from_fn(2, |_, _| rng.random_range::<f64, _>(-1.0..1.0));
        let n = 10.0;
        let z: Vec<f64> = (0..10).map(|_| rng.random_range::<f64, _>(-1.0..2.0)).collect();
        let xu = DVector::from_vec(vec![z.iter().sum(), z.iter().map(|v| v * v).sum()]);
        let xx = &a * &xu + &b * n;
        let mapped = LinearMapModel::with_offset(a, b, latent.clone()).unwrap();
        let obs_u = Observation::new(xu, n).unwrap();
        let obs_x = Observation::new(xx, n).unwrap();
        for (kind, opts) in [(Saddlepoint, MleOptions::default()), (ZerothOrder, MleOptions::default()), (Exact, closed_form_opts())] {
            let fu = fit_mle(latent.as_ref(), &obs_u, kind, &init, &bx, &opts).unwrap();
            let fx = fit_mle(&mapped, &obs_x, kind, &init, &bx, &opts).unwrap();
            if !(fu.converged && fx.converged) {
                return outcome(false, format!("{} fit did not converge", kind.label()));
            }
            worst = worst.max((&fu.theta_hat - &fx.theta_hat).amax());
        }
    }
    outcome(worst <= 1e-8, format!("max |theta_U - theta_AX+b| over spa, zeroth, exact = {worst:.2e} (tol 1e-8)"))
}
