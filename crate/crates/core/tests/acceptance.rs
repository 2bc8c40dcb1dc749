//! Acceptance suite. Each test prints one PASS/FAIL line before asserting.

use std::time::Instant;

use lanlab::density::{
    mixture_density, q1_chapman_kolmogorov, AdditiveJump, CkQuadrature, GaussianKernel, MixtureDensitySpec,
};
use lanlab::estimate::{estimator_normality_experiment, NormalityOptions, ThresholdPolicy};
use lanlab::harness::{
    run_lan_experiment, run_scaling_study, run_tail_checks, write_scaling_csv, write_tails_csv, ExperimentConfig,
    SlopeEntry,
};
use lanlab::lan::{
    exact_llr, fisher_closed_form, fisher_ergodic, main_term_sum, quasi_llr, remainder_components, write_lan_csv, ELL_NODES,
};
use lanlab::model::{make_builtin_model, BuiltinKind, LevySpec};
use lanlab::quadrature::GaussLegendre;
use lanlab::simulate::{simulate_grid, Retention, SimulationScheme};
use lanlab::stats::{chi_square_test, ks_distance_normal, paired_t_test_greater, Moments};
use lanlab::{Context, Model, StreamKey};
use rand::Rng;
use rayon::prelude::*;

fn report(id: u32, title: &str, pass: bool, detail: String, started: Instant) {
    println!(
        "criterion {id} ({title}): {} {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn gaussian_jumps() -> LevySpec<f64> {
    LevySpec::gaussian(1.0, 0.0, 1.0).unwrap()
}

fn additive_with_jumps() -> Model {
    make_builtin_model(BuiltinKind::Additive, 1.0, gaussian_jumps()).unwrap()
}

fn ou_with_jumps() -> Model {
    make_builtin_model(BuiltinKind::Ou, 1.0, gaussian_jumps()).unwrap()
}

fn lan_grid() -> Context {
    Context::with_power_rule(1.0, 1.0, 10_000, 0.6).unwrap()
}

#[test]
fn criterion_1_additive_exact_lan() {
    let started = Instant::now();
    let model = additive_with_jumps();
    let ctx = lan_grid();
    let spec = MixtureDensitySpec::new(&model).unwrap();
    let values: Vec<f64> = single_thread(|| {
        (0..2000u64)
            .into_par_iter()
            .map(|r| {
                let scheme = SimulationScheme::exact(StreamKey::new(101, r));
                let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &scheme, Retention::None).unwrap();
                exact_llr(&rec, &spec, &ctx).unwrap()
            })
            .collect()
    });
    let m = Moments::of(&values);
    let ks = ks_distance_normal(&values, -0.5, 1.0);
    let secs = started.elapsed().as_secs_f64();
    let pass = ks < 0.05 && (m.mean + 0.5).abs() <= 0.07 && secs < 300.0;
    report(1, "additive exact LAN", pass, format!("ks={ks:.4} mean={:.4} var={:.4}", m.mean, m.var), started);
    assert!(pass);
}

#[test]
fn criterion_2_main_term_exactness() {
    let started = Instant::now();
    let model = make_builtin_model(BuiltinKind::Additive, 1.0, gaussian_jumps()).unwrap();
    let rule = GaussLegendre::new(ELL_NODES);
    let mut details = Vec::new();
    let mut pass = true;
    for (i, n) in [100usize, 1000, 10_000].into_iter().enumerate() {
        let ctx = Context::with_power_rule(1.0, 1.0, n, 0.6).unwrap();
        let values: Vec<f64> = single_thread(|| {
            (0..10_000u64)
                .into_par_iter()
                .map(|r| {
                    let scheme = SimulationScheme::exact(StreamKey::new(202 + i as u64, r));
                    let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &scheme, Retention::Increments).unwrap();
                    main_term_sum(&rec, &model, &ctx, &rule).unwrap()
                })
                .collect()
        });
        let m = Moments::of(&values);
        let ks = ks_distance_normal(&values, -0.5, 1.0);
        let ok = (m.mean + 0.5).abs() <= 3.0 * m.std_error() && (m.var - 1.0).abs() <= 3.0 * m.var_std_error() && ks < 0.02;
        pass &= ok;
        details.push(format!("n={n}: mean={:.4} var={:.4} ks={ks:.4}", m.mean, m.var));
    }
    pass &= started.elapsed().as_secs_f64() < 120.0;
    report(2, "main-term exactness", pass, details.join("; "), started);
    assert!(pass);
}

#[test]
fn criterion_3_ou_quasi_lan() {
    let started = Instant::now();
    let model = ou_with_jumps();
    let ctx = lan_grid();
    let gamma = fisher_closed_form(&model, 1.0).unwrap().gamma;
    let threshold = Some(lanlab::lan::default_jump_threshold(&model, ctx.delta));
    let values: Vec<f64> = single_thread(|| {
        (0..2000u64)
            .into_par_iter()
            .map(|r| {
                let scheme = SimulationScheme::exact(StreamKey::new(303, r));
                let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &scheme, Retention::None).unwrap();
                quasi_llr(&rec, &model, &ctx, threshold).unwrap()
            })
            .collect()
    });
    let m = Moments::of(&values);
    let ks = ks_distance_normal(&values, -gamma / 2.0, gamma);
    let secs = started.elapsed().as_secs_f64();
    let pass = (gamma - 1.0).abs() < 1e-12 && ks < 0.06 && secs < 900.0;
    report(3, "OU-with-jumps quasi LAN", pass, format!("gamma={gamma} ks={ks:.4} mean={:.4} var={:.4}", m.mean, m.var), started);
    assert!(pass);
}

#[test]
fn criterion_4_fisher_consistency() {
    let started = Instant::now();
    let model = ou_with_jumps();
    let ctx = Context::new(1.0, 0.0, 20_000, 0.01).unwrap();
    assert!(ctx.horizon() >= 200.0);
    let closed = fisher_closed_form(&model, 1.0).unwrap().gamma;
    let ergodic: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|r| {
            let scheme = SimulationScheme::exact(StreamKey::new(404, r));
            let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &scheme, Retention::None).unwrap();
            fisher_ergodic(&rec, &model, 1.0).unwrap().gamma
        })
        .collect();
    let avg = ergodic.iter().sum::<f64>() / ergodic.len() as f64;
    let rel = (avg - closed).abs() / closed;
    let pass = rel < 0.05;
    report(4, "Fisher-information consistency", pass, format!("closed={closed} ergodic={avg:.4} rel={rel:.4}"), started);
    assert!(pass);
}

fn slope_of<'a>(slopes: &'a [SlopeEntry], component: &str) -> &'a SlopeEntry {
    slopes.iter().find(|s| s.component == component && s.p == 2.0).unwrap()
}

#[test]
fn criterion_5_remainder_scaling() {
    let started = Instant::now();
    let base = r#"{
        "model": {"kind": "KIND", "theta0": 1.0, "sigma": 1.0,
                  "jumps": {"gaussian": {"intensity": 1.0, "mean": 0.0, "sd": 1.0}}},
        "grid": {"n": 1000},
        "experiment": {"seed": 505},
        "scaling": {"deltas": [0.1, 0.05, 0.025], "p": [2.0], "intervals": 100000}
    }"#;
    let ou = run_scaling_study(&ExperimentConfig::from_json(&base.replace("KIND", "ou")).unwrap()).unwrap();
    let add = run_scaling_study(&ExperimentConfig::from_json(&base.replace("KIND", "additive")).unwrap()).unwrap();
    let centred = slope_of(&ou.slopes, "centred_r1_r2_r3").slope.unwrap();
    let r6 = slope_of(&add.slopes, "r6").slope.unwrap();

    // R1 against the ordered double integral of its integrand
    let model = make_builtin_model(BuiltinKind::Ou, 1.0, gaussian_jumps()).unwrap();
    let gl = GaussLegendre::<f64>::new(24);
    let mut r1_err = 0.0f64;
    for &delta in &[0.1, 0.05, 0.025] {
        let ctx = Context::new(1.0, 0.0, 4, delta).unwrap();
        let rec = simulate_grid(&model, 1.0, &[0.3], &ctx, &SimulationScheme::exact(StreamKey::new(5, 0)), Retention::FinePath).unwrap();
        let quad = gl.integrate(0.0, delta, |u| gl.integrate(0.0, u, |s| -(s.exp()) * (-s).exp()));
        for k in 0..4 {
            let c = remainder_components(&rec, &model, 1.0, k).unwrap();
            r1_err = r1_err.max((c.r1.unwrap() - quad).abs()).max((c.r1.unwrap() + delta * delta / 2.0).abs());
        }
    }
    let pass = centred >= 3.2 && (r6 - 3.0).abs() <= 0.3 && r1_err <= 1e-10;
    report(5, "remainder moment scaling", pass, format!("ou(-R1+R2+R3) slope={centred:.3} additive R6 slope={r6:.3} R1 err={r1_err:.1e}"), started);
    assert!(pass);
}

#[test]
fn criterion_6_density_correctness() {
    let started = Instant::now();
    let model = additive_with_jumps();
    let spec = MixtureDensitySpec::new(&model).unwrap();
    let (theta, delta, x) = (1.0, 0.5, 0.0);

    let gl = GaussLegendre::<f64>::new(64);
    let mass: f64 = (-40..40)
        .map(|j| {
            let a = j as f64 * 0.5;
            gl.integrate(a, a + 0.5, |y| mixture_density(&spec, theta, delta, x, y).unwrap().density)
        })
        .sum();

    // histogram of exact draws: drift, Gaussian part, compound Poisson jumps
    let draws = 10_000_000u64;
    // 200 bins over +-6 standard deviations of X_delta around its mean
    let sd = (delta * (1.0 + model.levy().intensity() * model.levy().jump_second_moment())).sqrt();
    let centre = x + theta * delta;
    let (lo, hi, bins) = (centre - 6.0 * sd, centre + 6.0 * sd, 200usize);
    let width = (hi - lo) / bins as f64;
    let levy = model.levy().clone();
    let counts: Vec<Vec<u64>> = (0..100u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = StreamKey::new(606, 0).block(b);
            let poisson = rand_distr::Poisson::new(delta).unwrap();
            let mut h = vec![0u64; bins + 2];
            let mut z = [0.0];
            for _ in 0..draws / 100 {
                let normal: f64 = rng.sample(rand_distr::StandardNormal);
                let mut y = x + theta * delta + delta.sqrt() * normal;
                let jumps: f64 = rng.sample(poisson);
                for _ in 0..jumps as u64 {
                    levy.sample_jump(&mut rng, &mut z);
                    y += z[0];
                }
                let idx = if y < lo { 0 } else if y >= hi { bins + 1 } else { 1 + ((y - lo) / width) as usize };
                h[idx.min(bins + 1)] += 1;
            }
            h
        })
        .collect();
    let mut observed = vec![0.0; bins + 2];
    for h in &counts {
        for (o, c) in observed.iter_mut().zip(h) {
            *o += *c as f64;
        }
    }
    let gl8 = GaussLegendre::<f64>::new(16);
    let p = |a: f64, b: f64| gl8.integrate(a, b, |y| mixture_density(&spec, theta, delta, x, y).unwrap().density);
    let mut expected = vec![0.0; bins + 2];
    for i in 0..bins {
        let a = lo + i as f64 * width;
        expected[i + 1] = p(a, a + width);
    }
    let inner: f64 = expected.iter().sum();
    let left: f64 = (1..=30).map(|j| p(lo - j as f64, lo - j as f64 + 1.0)).sum();
    expected[0] = left;
    expected[bins + 1] = 1.0 - inner - left;
    for e in expected.iter_mut() {
        *e *= draws as f64;
    }
    let (stat, dof, p_value) = chi_square_test(&observed, &expected, 5.0);

    let kernel = GaussianKernel::from_model(&model, theta).unwrap();
    let quad = CkQuadrature::default();
    let mut ck_err = 0.0f64;
    for j in 0..21 {
        let y = -3.0 + 0.3 * j as f64;
        for zj in [-1.5, 0.7] {
            let ck = q1_chapman_kolmogorov(&kernel, &AdditiveJump, delta, x, y, zj, &quad).unwrap();
            let closed = closed_q1_given_jump(&model, theta, delta, x, y, zj);
            ck_err = ck_err.max((ck - closed).abs());
        }
    }
    let pass = (mass - 1.0).abs() <= 1e-6 && p_value > 1e-3 && ck_err <= 1e-8;
    report(
        6,
        "density correctness",
        pass,
        format!("mass-1={:.1e} chi2={stat:.1} dof={dof} p={p_value:.3} ck_err={ck_err:.1e}", mass - 1.0),
        started,
    );
    assert!(pass);
}

/// One jump of size `z` somewhere in the interval of the additive model: the
/// jump time does not matter, so the density is the Gaussian shifted by `z`.
fn closed_q1_given_jump(model: &Model, theta: f64, delta: f64, x: f64, y: f64, z: f64) -> f64 {
    let comp = model.constant_compensator().unwrap();
    let sigma = model.constant_sigma().unwrap();
    let mean = x + (theta - comp) * delta + z;
    let var = sigma * sigma * delta;
    (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn criterion_7_estimator_efficiency() {
    let started = Instant::now();
    let model = ou_with_jumps();
    let ctx = Context::with_power_rule(1.0, 0.0, 10_000, 0.6).unwrap();
    let key = StreamKey::new(707, 0);
    let filtered = NormalityOptions { replications: 500, threshold: ThresholdPolicy::Default, ..NormalityOptions::default() };
    let unfiltered = NormalityOptions { threshold: ThresholdPolicy::None, ..filtered };
    let f = estimator_normality_experiment(&model, &ctx, &filtered, key).unwrap();
    let u = estimator_normality_experiment(&model, &ctx, &unfiltered, key).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (x, y) in u.results.iter().zip(&f.results) {
        if let (Some(x), Some(y)) = (x, y) {
            a.push(x.standardized.unwrap().powi(2));
            b.push(y.standardized.unwrap().powi(2));
        }
    }
    let test = paired_t_test_greater(&a, &b);
    let pass = (f.var - 1.0).abs() <= 0.15 && f.var < u.var && test.p_value < 0.05 && f.failures == 0;
    report(
        7,
        "estimator efficiency",
        pass,
        format!("filtered var={:.4} unfiltered var={:.4} paired p={:.2e}", f.var, u.var, test.p_value),
        started,
    );
    assert!(pass);
}

#[test]
fn criterion_8_poisson_tail() {
    let started = Instant::now();
    let cfg = ExperimentConfig::from_json(
        r#"{"model": {"kind": "additive", "theta0": 1.0, "sigma": 1.0,
                      "jumps": {"gaussian": {"intensity": 1.0, "mean": 0.0, "sd": 1.0}}},
            "grid": {"n": 1000},
            "experiment": {"seed": 808},
            "tails": {"deltas": [0.01, 0.001], "draws": 10000000}}"#,
    )
    .unwrap();
    let r = run_tail_checks(&cfg).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for t in r.tails.iter().filter(|t| t.check == "count_ge_2") {
        pass &= t.holds == Some(true);
        details.push(format!(
            "delta={}: p={:.3e} ci=[{:.3e},{:.3e}] bound={:.1e} exact={:.3e}",
            t.delta,
            t.estimate,
            t.lower,
            t.upper,
            t.bound.unwrap(),
            t.exact.unwrap()
        ));
    }
    report(8, "Poisson tail ingredient", pass, details.join("; "), started);
    assert!(pass);
}

fn outputs(cfg: &ExperimentConfig) -> Vec<Vec<u8>> {
    let mut files = Vec::new();
    let run = run_lan_experiment(cfg).unwrap();
    for s in &run.samples {
        let mut buf = Vec::new();
        write_lan_csv(s, &mut buf).unwrap();
        files.push(buf);
    }
    let mut buf = Vec::new();
    write_scaling_csv(&run_scaling_study(cfg).unwrap().slopes, &mut buf).unwrap();
    files.push(buf);
    let mut buf = Vec::new();
    write_tails_csv(&run_tail_checks(cfg).unwrap().tails, &mut buf).unwrap();
    files.push(buf);
    files
}

#[test]
fn criterion_9_determinism() {
    let started = Instant::now();
    let cfg = ExperimentConfig::from_json(
        r#"{"model": {"kind": "ou", "theta0": 1.0, "sigma": 1.0,
                      "jumps": {"gaussian": {"intensity": 1.0, "mean": 0.0, "sd": 1.0}}},
            "grid": {"n": 500},
            "experiment": {"u": [1.0, -0.5], "replications": 64, "seed": 909,
                           "statistics": ["quasi", "main", "remainders"]},
            "scaling": {"deltas": [0.1, 0.05, 0.025], "intervals": 4000, "chunk": 500},
            "tails": {"deltas": [0.01], "draws": 300000}}"#,
    )
    .unwrap();
    let pool = |k: usize| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let one = pool(1).install(|| outputs(&cfg));
    let four = pool(4).install(|| outputs(&cfg));
    let three = pool(3).install(|| outputs(&cfg));
    let pass = one == four && one == three && one.iter().all(|f| !f.is_empty());
    report(9, "determinism across thread counts", pass, format!("{} files compared", one.len()), started);
    assert!(pass);
}
