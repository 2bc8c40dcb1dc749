use lanlab::density::MixtureDensitySpec;
use lanlab::lan::{
    default_jump_threshold, exact_llr, fisher_ergodic, main_term_sum, quasi_llr, remainder_series, FisherMethod,
    ELL_NODES,
};
use lanlab::model::{make_builtin_model, BuiltinKind, JumpDiffusionModel, LevySpec, ParameterContext};
use lanlab::quadrature::GaussLegendre;
use lanlab::simulate::{simulate_grid, Retention, SimulationScheme};
use lanlab::stats::Moments;
use lanlab::StreamKey;
use proptest::prelude::*;
use rayon::prelude::*;

fn builtin<F: lanlab::scalar::Real>(kind: BuiltinKind, lambda: F) -> JumpDiffusionModel<F> {
    make_builtin_model(kind, F::one(), LevySpec::gaussian(lambda, F::zero(), F::one()).unwrap()).unwrap()
}

// Per-interval remainder values from `chunks` independent fine paths of `per_chunk` intervals.
fn remainder_values<G>(kind: BuiltinKind, delta: f64, chunks: u64, per_chunk: usize, seed: u64, pick: G) -> Vec<f64>
where
    G: Fn(&lanlab::lan::RemainderComponents<f64>) -> f64 + Sync,
{
    let model = builtin(kind, 1.0);
    let ctx = ParameterContext::new(1.0, 0.0, per_chunk, delta).unwrap();
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let scheme = SimulationScheme::exact(StreamKey::new(seed, c));
            let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &scheme, Retention::FinePath).unwrap();
            remainder_series(&rec, &model, 1.0).unwrap().iter().map(&pick).collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn ou_remainder_combination_is_centred() {
    let values = remainder_values(BuiltinKind::Ou, 0.05, 100, 1000, 41, |r| r.centred_combination().unwrap());
    assert_eq!(values.len(), 100_000);
    let m = Moments::of(&values);
    assert!(m.mean.abs() < 3.0 * m.std_error(), "mean {} se {}", m.mean, m.std_error());
}

#[test]
fn additive_r6_second_moment_is_delta_cubed() {
    let delta = 0.1;
    let sq = remainder_values(BuiltinKind::Additive, delta, 100, 1000, 42, |r| r.r6 * r.r6);
    let m = Moments::of(&sq);
    let target = delta.powi(3);
    assert!((m.mean - target).abs() < 3.0 * m.std_error(), "{} vs {target} (se {})", m.mean, m.std_error());
}

#[test]
fn quasi_llr_tracks_exact_llr_when_jumps_are_rare() {
    let model = builtin(BuiltinKind::Additive, 1.0);
    let spec = MixtureDensitySpec::new(&model).unwrap();
    let ctx = ParameterContext::with_power_rule(1.0, 1.0, 2500, 0.6).unwrap();
    assert!(model.levy().intensity() * ctx.delta <= 0.01);
    let r = default_jump_threshold(&model, ctx.delta);
    let pairs: Vec<(f64, f64)> = (0..400u64)
        .into_par_iter()
        .map(|rep| {
            let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &SimulationScheme::exact(StreamKey::new(43, rep)), Retention::None)
                .unwrap();
            (exact_llr(&rec, &spec, &ctx).unwrap(), quasi_llr(&rec, &model, &ctx, Some(r)).unwrap())
        })
        .collect();
    let exact: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let gap = pairs.iter().map(|(e, q)| (e - q).abs()).sum::<f64>() / pairs.len() as f64;
    let sd = Moments::of(&exact).var.sqrt();
    assert!(gap <= 0.1 * sd, "mean gap {gap}, sd {sd}");
}

#[test]
fn ou_main_term_mean_follows_the_transient_oracle() {
    let model = builtin(BuiltinKind::Ou, 1.0);
    let rule = GaussLegendre::new(ELL_NODES);
    let mut oracles = Vec::new();
    for (i, n) in [100usize, 1000, 10_000].into_iter().enumerate() {
        let ctx = ParameterContext::with_power_rule(1.0, 1.0, n, 0.6).unwrap();
        let xs: Vec<f64> = (0..1000u64)
            .into_par_iter()
            .map(|rep| {
                let scheme = SimulationScheme::exact(StreamKey::new(44 + i as u64, rep));
                let rec = simulate_grid(&model, 1.0, &[0.0], &ctx, &scheme, Retention::Increments).unwrap();
                main_term_sum(&rec, &model, &ctx, &rule).unwrap()
            })
            .collect();
        // from x0 = 0, E X_{t_k}^2 = 1 - exp(-2 k delta) and the mean is -(u^2 / 2T) sum E X_k^2 delta
        let t = ctx.horizon();
        let oracle = -(0..n).map(|k| 1.0 - (-2.0 * k as f64 * ctx.delta).exp()).sum::<f64>() * ctx.delta / (2.0 * t);
        let m = Moments::of(&xs);
        assert!((m.mean - oracle).abs() < 3.0 * m.std_error(), "n={n}: {} vs {oracle}", m.mean);
        oracles.push(oracle);
    }
    assert!(oracles.windows(2).all(|w| (w[1] + 0.5).abs() < (w[0] + 0.5).abs()));
    assert!((oracles[2] + 0.5).abs() < 0.01);
}

#[test]
fn f32_pipeline_agrees_with_f64() {
    let model = builtin::<f32>(BuiltinKind::Ou, 1.0);
    let ctx = ParameterContext::<f32>::with_power_rule(1.0, 1.0, 1000, 0.6).unwrap();
    let rec = simulate_grid(&model, 1.0f32, &[0.0], &ctx, &SimulationScheme::exact(StreamKey::new(45, 0)), Retention::Increments)
        .unwrap();
    assert!(rec.values.iter().all(|v| v.is_finite()));
    let r = default_jump_threshold(&model, ctx.delta);
    let q32 = quasi_llr(&rec, &model, &ctx, Some(r)).unwrap();
    let main32 = main_term_sum(&rec, &model, &ctx, &GaussLegendre::new(ELL_NODES)).unwrap();
    assert!(main32.is_finite());
    assert_eq!(quasi_llr(&rec, &model, &ctx.with_u(0.0), Some(r)).unwrap(), 0.0);

    let model64 = builtin::<f64>(BuiltinKind::Ou, 1.0);
    let ctx64 = ParameterContext::<f64>::with_power_rule(1.0, 1.0, 1000, 0.6).unwrap();
    let values: Vec<f64> = rec.values.iter().map(|&v| v as f64).collect();
    let rec64 = lanlab::simulate::ObservationRecord::from_values(1, ctx64.delta, 1.0, values).unwrap();
    let q64 = quasi_llr(&rec64, &model64, &ctx64, Some(default_jump_threshold(&model64, ctx64.delta))).unwrap();
    assert!((q32 as f64 - q64).abs() < 1e-3 * (1.0 + q64.abs()), "{q32} vs {q64}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn additive_ergodic_fisher_is_constant(sigma in 0.2f64..3.0, seed in 0u64..1000, n in 1usize..300) {
        let model = make_builtin_model(BuiltinKind::Additive, sigma, LevySpec::gaussian(1.0, 0.2, 1.0).unwrap()).unwrap();
        let ctx = ParameterContext::new(0.5, 0.0, n, 0.1).unwrap();
        let rec = simulate_grid(&model, 0.5, &[0.0], &ctx, &SimulationScheme::exact(StreamKey::new(seed, 0)), Retention::None)
            .unwrap();
        let f = fisher_ergodic(&rec, &model, 0.5).unwrap();
        prop_assert_eq!(f.method, FisherMethod::ErgodicAverage);
        prop_assert!((f.gamma - 1.0 / (sigma * sigma)).abs() < 1e-12 / (sigma * sigma));
    }

    #[test]
    fn statistics_vanish_without_local_shift(seed in 0u64..1000, ou in any::<bool>()) {
        let kind = if ou { BuiltinKind::Ou } else { BuiltinKind::Additive };
        let model = builtin::<f64>(kind, 2.0);
        let ctx = ParameterContext::new(1.0, 0.0, 50, 0.05).unwrap();
        let rec = simulate_grid(&model, 1.0, &[0.1], &ctx, &SimulationScheme::exact(StreamKey::new(seed, 1)), Retention::Increments)
            .unwrap();
        prop_assert_eq!(quasi_llr(&rec, &model, &ctx, None).unwrap(), 0.0);
        prop_assert_eq!(main_term_sum(&rec, &model, &ctx, &GaussLegendre::new(ELL_NODES)).unwrap(), 0.0);
        if !ou {
            let spec = MixtureDensitySpec::new(&model).unwrap();
            prop_assert_eq!(exact_llr(&rec, &spec, &ctx).unwrap(), 0.0);
        }
    }
}
