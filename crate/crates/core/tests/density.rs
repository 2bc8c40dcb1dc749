use lanlab::density::{
    f_transform_tools, mixture_density, q1_chapman_kolmogorov, AdditiveJump, CkQuadrature, GaussianKernel,
    MixtureDensitySpec,
};
use lanlab::model::{make_builtin_model, BuiltinKind, JumpDiffusionModel, LevySpec};
use lanlab::quadrature::{GaussHermite, GaussLegendre};
use lanlab::stats::{poisson_pmf, poisson_tail_above};
use lanlab::StreamKey;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn model(kind: BuiltinKind, lambda: f64, mean: f64, sd: f64) -> JumpDiffusionModel<f64> {
    make_builtin_model(kind, 1.0, LevySpec::gaussian(lambda, mean, sd).unwrap()).unwrap()
}

fn kind_of(ou: bool) -> BuiltinKind {
    if ou {
        BuiltinKind::Ou
    } else {
        BuiltinKind::Additive
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixture_dominates_the_no_jump_term(
        ou in any::<bool>(),
        lambda in 0.0f64..5.0,
        mean in -1.0f64..1.0,
        sd in 0.2f64..2.0,
        theta in 0.2f64..2.0,
        delta in 0.001f64..1.0,
        x in -2.0f64..2.0,
        dy in -3.0f64..3.0,
    ) {
        let spec = MixtureDensitySpec::new(&model(kind_of(ou), lambda, mean, sd)).unwrap();
        let p = mixture_density(&spec, theta, delta, x, x + dy).unwrap();
        let q0 = spec.log_q_i(theta, delta, x, x + dy, 0).unwrap().exp();
        prop_assert!(p.density >= q0 * (-lambda * delta).exp() * (1.0 - 1e-12));
        prop_assert!(p.truncation_error >= 0.0);
    }

    #[test]
    fn truncation_error_bounds_the_omitted_terms(
        ou in any::<bool>(),
        lambda in 0.1f64..8.0,
        delta in 0.01f64..1.0,
        tol_exp in 3i32..12,
        dy in -2.0f64..2.0,
    ) {
        let tol = 10f64.powi(-tol_exp);
        let spec = MixtureDensitySpec::with_tolerance(&model(kind_of(ou), lambda, 0.3, 1.0), tol, None).unwrap();
        let (theta, x) = (1.0, 0.1);
        let p = mixture_density(&spec, theta, delta, x, x + dy).unwrap();
        let mu = lambda * delta;
        prop_assert!(poisson_tail_above(mu, p.i_max) < tol);
        let weights: f64 = (0..=p.i_max).map(|i| poisson_pmf(mu, i)).sum();
        prop_assert!(weights >= 1.0 - tol);
        let long = MixtureDensitySpec::with_tolerance(spec.model(), tol, Some(p.i_max + 5)).unwrap();
        let longer: f64 = (0..=p.i_max + 5)
            .map(|i| poisson_pmf(mu, i) * long.log_q_i(theta, delta, x, x + dy, i).unwrap().exp())
            .sum();
        prop_assert!(longer - p.density <= p.truncation_error + 1e-12 * longer);
    }

    #[test]
    fn bounded_chart(xs in proptest::collection::vec(-1e6f64..1e6, 1..4)) {
        let t = f_transform_tools(&xs);
        let norm: f64 = t.value.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm < 1.0);
        let r2: f64 = xs.iter().map(|v| v * v).sum();
        let d = xs.len() as f64;
        let det = (1.0 + r2).powf(-d / 2.0 - 1.0);
        prop_assert!((t.determinant - det).abs() <= 1e-12 * det.max(1e-300));
    }

    #[test]
    fn chart_jacobian_matches_finite_differences(xs in proptest::collection::vec(-5.0f64..5.0, 1..4)) {
        let d = xs.len();
        let t = f_transform_tools(&xs);
        let h = 1e-6;
        for j in 0..d {
            let (mut up, mut dn) = (xs.clone(), xs.clone());
            up[j] += h;
            dn[j] -= h;
            let (fu, fd) = (f_transform_tools(&up).value, f_transform_tools(&dn).value);
            for i in 0..d {
                let fd_ij = (fu[i] - fd[i]) / (2.0 * h);
                prop_assert!((t.jacobian[i * d + j] - fd_ij).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn mixture_dominates_the_single_jump_term() {
    let gh = GaussHermite::<f64>::new(32);
    let quad = CkQuadrature::default();
    let (lambda, mean, sd, theta) = (2.0, 0.5, 0.8, 1.0);
    for ou in [false, true] {
        let m = model(kind_of(ou), lambda, mean, sd);
        let spec = MixtureDensitySpec::new(&m).unwrap();
        let kernel = GaussianKernel::from_model(&m, theta).unwrap();
        for (delta, x, y) in [(0.1, 0.0, 0.3), (0.5, 0.2, 1.2), (1.0, -0.5, -1.5)] {
            let p = mixture_density(&spec, theta, delta, x, y).unwrap().density;
            let q1 = gh.expect_normal(mean, sd, |a| q1_chapman_kolmogorov(&kernel, &AdditiveJump, delta, x, y, a, &quad).unwrap());
            let mu = lambda * delta;
            assert!(p >= (-mu).exp() * mu * q1 * (1.0 - 1e-9), "ou={ou} delta={delta}: {p} vs {q1}");
        }
    }
}

#[test]
fn ou_single_jump_density_matches_simulation() {
    let m = make_builtin_model(BuiltinKind::Ou, 1.0, LevySpec::none(1)).unwrap();
    let kernel = GaussianKernel::from_model(&m, 1.0).unwrap();
    let quad = CkQuadrature::default();
    let (delta, x, z) = (0.5f64, 0.2f64, 1.0f64);
    let sd = ((1.0 - (-2.0 * delta).exp()) / 2.0).sqrt();
    let draws = 10_000_000u64;
    let ys = [x, x + 0.5, x + 1.0];
    let h = 0.02;
    let mut hits = [0u64; 3];
    let mut rng = StreamKey::new(31, 0).aux(0);
    for _ in 0..draws {
        let tau: f64 = rng.random::<f64>() * delta;
        let xi: f64 = rng.sample(StandardNormal);
        let v = (-delta).exp() * x + (-(delta - tau)).exp() * z + sd * xi;
        for (hit, y) in hits.iter_mut().zip(&ys) {
            if (v - y).abs() < h {
                *hit += 1;
            }
        }
    }
    let gl = GaussLegendre::<f64>::new(8);
    for (hit, y) in hits.iter().zip(&ys) {
        let mass = gl.integrate(y - h, y + h, |w| q1_chapman_kolmogorov(&kernel, &AdditiveJump, delta, x, w, z, &quad).unwrap());
        let freq = *hit as f64 / draws as f64;
        let se = (freq * (1.0 - freq) / draws as f64).sqrt();
        assert!((freq - mass).abs() < 3.0 * se, "y={y}: mc {freq} vs quadrature {mass} (se {se})");
    }
}
