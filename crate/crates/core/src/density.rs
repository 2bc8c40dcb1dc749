//! Transition densities as Poisson mixtures over the number of jumps.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClosedForm, JumpDiffusionModel, JumpLaw};
use crate::quadrature::{GaussHermite, GaussLegendre};
use crate::rng::StreamKey;
use crate::scalar::Real;
use crate::stats::{ols_slope, poisson_tail_above};

pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
const TIME_NODES: usize = 32;
const MC_TIME_DRAWS: usize = 10_000;
const MC_TIME_SEED: u64 = 0x71d3_5eed;

fn log_normal_pdf<F: Real>(y: F, mean: F, var: F) -> F {
    let d = y - mean;
    -F::lit(0.5) * ((F::TAU() * var).ln() + d * d / var)
}

fn log_sum_exp<F: Real>(terms: &[F]) -> F {
    let m = terms.iter().copied().fold(F::neg_infinity(), F::max);
    if m == F::neg_infinity() {
        return m;
    }
    m + terms.iter().map(|t| (*t - m).exp()).fold(F::zero(), |a, b| a + b).ln()
}

fn log_poisson_weight<F: Real>(mu: F, i: usize) -> F {
    if mu == F::zero() {
        return if i == 0 { F::zero() } else { F::neg_infinity() };
    }
    let fi = F::from_usize_lossy(i);
    fi * mu.ln() - mu - F::lit(statrs::function::gamma::ln_gamma(i as f64 + 1.0))
}

fn gaussian_jump_law<F: Real>(model: &JumpDiffusionModel<F>) -> Result<(F, F)> {
    let levy = model.levy();
    if levy.intensity() == F::zero() {
        return Ok((F::zero(), F::zero()));
    }
    match *levy.law() {
        JumpLaw::Gaussian { mean, sd } => Ok((mean, sd)),
        _ => Err(Error::Unsupported("closed-form jump-conditioned densities need Gaussian jump sizes".into())),
    }
}

/// Density of `X_Delta` given `X_0 = x` and exactly `i` jumps, additive model with `N(m, s^2)` jumps.
pub fn q_i_closed_form<F: Real>(model: &JumpDiffusionModel<F>, theta: F, delta: F, x: F, y: F, i: usize) -> Result<F> {
    log_q_i_additive(model, theta, delta, x, y, i).map(F::exp)
}

fn log_q_i_additive<F: Real>(model: &JumpDiffusionModel<F>, theta: F, delta: F, x: F, y: F, i: usize) -> Result<F> {
    if model.closed_form() != ClosedForm::Additive {
        return Err(Error::Unsupported("closed-form q_i is available for the additive model".into()));
    }
    let sigma = model.constant_sigma().expect("built-in sigma");
    let comp = model.constant_compensator().expect("built-in compensator");
    let (m, s) = gaussian_jump_law(model)?;
    if !(delta > F::zero()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {delta}")));
    }
    let fi = F::from_usize_lossy(i);
    let mean = x + (theta - comp) * delta + fi * m;
    let var = sigma * sigma * delta + fi * s * s;
    if !(var > F::zero()) {
        return Err(Error::InvalidParameter("conditional variance must be positive".into()));
    }
    Ok(log_normal_pdf(y, mean, var))
}

/// Evaluation settings for [`mixture_density`].
#[derive(Debug, Clone)]
pub struct MixtureDensitySpec<F> {
    model: JumpDiffusionModel<F>,
    tail_tol: F,
    fixed_i_max: Option<usize>,
    time_rule: GaussLegendre<F>,
    /// Unit-interval jump times for the Monte Carlo terms, `mc_times[i - 3]` holds `i * draws` values.
    mc_times: Vec<Vec<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureValue {
    pub density: f64,
    pub log_density: f64,
    /// Upper bound on the omitted tail of the mixture.
    pub truncation_error: f64,
    pub i_max: usize,
}

impl<F: Real> MixtureDensitySpec<F> {
    pub fn new(model: &JumpDiffusionModel<F>) -> Result<Self> {
        Self::with_tolerance(model, F::lit(DEFAULT_TAIL_TOL), None)
    }

    /// `fixed_i_max` pins the truncation; it must still meet `tail_tol` at evaluation time.
    pub fn with_tolerance(model: &JumpDiffusionModel<F>, tail_tol: F, fixed_i_max: Option<usize>) -> Result<Self> {
        if model.closed_form() == ClosedForm::None {
            return Err(Error::Unsupported("mixture densities need a closed-form model".into()));
        }
        if !(tail_tol > F::zero()) {
            return Err(Error::InvalidParameter("tail tolerance must be positive".into()));
        }
        gaussian_jump_law(model)?;
        let mut mc_times = Vec::new();
        if model.closed_form() == ClosedForm::Ou {
            let lam = model.levy().intensity().as_f64();
            let cap = fixed_i_max.unwrap_or_else(|| crate::stats::poisson_truncation(lam, tail_tol.as_f64()));
            for i in 3..=cap {
                let mut rng = StreamKey::new(MC_TIME_SEED, i as u64).aux(0);
                mc_times.push((0..i * MC_TIME_DRAWS).map(|_| F::unit_uniform(&mut rng)).collect());
            }
        }
        Ok(Self {
            model: model.clone(),
            tail_tol,
            fixed_i_max,
            time_rule: GaussLegendre::new(TIME_NODES),
            mc_times,
        })
    }

    pub fn model(&self) -> &JumpDiffusionModel<F> {
        &self.model
    }

    /// Number of retained jump-count terms minus one at step `delta`.
    pub fn i_max(&self, delta: F) -> Result<usize> {
        let mu = (self.model.levy().intensity() * delta).as_f64();
        let tol = self.tail_tol.as_f64();
        match self.fixed_i_max {
            Some(i) => {
                let tail = poisson_tail_above(mu, i);
                if tail >= tol {
                    return Err(Error::Truncation(format!(
                        "Poisson tail {tail:e} beyond i_max = {i} exceeds tolerance {tol:e}"
                    )));
                }
                Ok(i)
            }
            None => Ok(crate::stats::poisson_truncation(mu, tol)),
        }
    }

    /// `log q_i(delta, x, y)`.
    pub fn log_q_i(&self, theta: F, delta: F, x: F, y: F, i: usize) -> Result<F> {
        match self.model.closed_form() {
            ClosedForm::Additive => log_q_i_additive(&self.model, theta, delta, x, y, i),
            ClosedForm::Ou => self.log_q_i_ou(theta, delta, x, y, i),
            ClosedForm::None => unreachable!("rejected at construction"),
        }
    }

    fn log_q_i_ou(&self, theta: F, delta: F, x: F, y: F, i: usize) -> Result<F> {
        if !(theta > F::zero()) {
            return Err(Error::InvalidParameter(format!("Ornstein-Uhlenbeck densities need theta > 0, got {theta}")));
        }
        let sigma = self.model.constant_sigma().expect("built-in sigma");
        let comp = self.model.constant_compensator().expect("built-in compensator");
        let (m, s) = gaussian_jump_law(&self.model)?;
        let two = F::lit(2.0);
        let decay = (-theta * delta).exp();
        let base_mean = decay * x - comp * (F::one() - decay) / theta;
        let base_var = sigma * sigma * (-(-two * theta * delta).exp_m1()) / (two * theta);
        // conditional Gaussian given jump offsets
        let cond = |taus: &mut dyn Iterator<Item = F>| {
            let (mut mean, mut var) = (base_mean, base_var);
            for tau in taus {
                let e = (-theta * (delta - tau)).exp();
                mean = mean + e * m;
                var = var + e * e * s * s;
            }
            log_normal_pdf(y, mean, var)
        };
        match i {
            0 => Ok(cond(&mut std::iter::empty())),
            1 => {
                let terms: Vec<F> = self
                    .time_rule
                    .mapped(F::zero(), delta)
                    .map(|(t, w)| (w / delta).ln() + cond(&mut std::iter::once(t)))
                    .collect();
                Ok(log_sum_exp(&terms))
            }
            2 => {
                // ordered offsets t1 < t2 with density 2 / delta^2
                let mut terms = Vec::with_capacity(TIME_NODES * TIME_NODES);
                let norm = two / (delta * delta);
                for (t1, w1) in self.time_rule.mapped(F::zero(), delta) {
                    for (t2, w2) in self.time_rule.mapped(t1, delta) {
                        terms.push((w1 * w2 * norm).ln() + cond(&mut [t1, t2].into_iter()));
                    }
                }
                Ok(log_sum_exp(&terms))
            }
            _ => {
                let draws = self.mc_times.get(i - 3).ok_or_else(|| {
                    Error::Truncation(format!("no jump-time draws prepared for {i} jumps; raise the truncation"))
                })?;
                let lw = -F::from_usize_lossy(MC_TIME_DRAWS).ln();
                let terms: Vec<F> = draws
                    .chunks_exact(i)
                    .map(|u| lw + cond(&mut u.iter().map(|v| *v * delta)))
                    .collect();
                Ok(log_sum_exp(&terms))
            }
        }
    }
}

/// Transition density `p(delta, x, y) = sum_i q_i e^{-lambda delta} (lambda delta)^i / i!`.
pub fn mixture_density<F: Real>(spec: &MixtureDensitySpec<F>, theta: F, delta: F, x: F, y: F) -> Result<MixtureValue> {
    if !(delta > F::zero() && delta <= F::one()) {
        return Err(Error::InvalidParameter(format!("time step must lie in (0, 1], got {delta}")));
    }
    let i_max = spec.i_max(delta)?;
    let mu = spec.model.levy().intensity() * delta;
    let mut terms = Vec::with_capacity(i_max + 1);
    for i in 0..=i_max {
        terms.push(log_poisson_weight(mu, i) + spec.log_q_i(theta, delta, x, y, i)?);
    }
    let log_density = log_sum_exp(&terms);
    // every q_i is Gaussian with variance at least that of q_0
    let sigma = spec.model.constant_sigma().expect("built-in sigma").as_f64();
    let min_var = match spec.model.closed_form() {
        ClosedForm::Ou => {
            let th = theta.as_f64();
            sigma * sigma * (-(-2.0 * th * delta.as_f64()).exp_m1()) / (2.0 * th)
        }
        _ => sigma * sigma * delta.as_f64(),
    };
    let sup_q = 1.0 / (2.0 * std::f64::consts::PI * min_var).sqrt();
    let tail = poisson_tail_above(mu.as_f64(), i_max);
    let log_density = log_density.as_f64();
    Ok(MixtureValue { density: log_density.exp(), log_density, truncation_error: tail * sup_q, i_max })
}

/// `log p(delta, x, y)`; stays finite where the density itself underflows.
pub fn log_mixture_density<F: Real>(spec: &MixtureDensitySpec<F>, theta: F, delta: F, x: F, y: F) -> Result<F> {
    if !(delta > F::zero() && delta <= F::one()) {
        return Err(Error::InvalidParameter(format!("time step must lie in (0, 1], got {delta}")));
    }
    let i_max = spec.i_max(delta)?;
    let mu = spec.model.levy().intensity() * delta;
    let mut terms = [F::zero(); 64];
    if i_max < terms.len() {
        for (i, t) in terms.iter_mut().enumerate().take(i_max + 1) {
            *t = log_poisson_weight(mu, i) + spec.log_q_i(theta, delta, x, y, i)?;
        }
        return Ok(log_sum_exp(&terms[..=i_max]));
    }
    let mut v = Vec::with_capacity(i_max + 1);
    for i in 0..=i_max {
        v.push(log_poisson_weight(mu, i) + spec.log_q_i(theta, delta, x, y, i)?);
    }
    Ok(log_sum_exp(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub y: f64,
    pub p: f64,
    pub truncation_error: f64,
}

pub fn density_curve<F: Real>(
    spec: &MixtureDensitySpec<F>,
    theta: F,
    delta: F,
    x: F,
    ys: &[F],
) -> Result<Vec<DensityPoint>> {
    ys.iter()
        .map(|&y| {
            let v = mixture_density(spec, theta, delta, x, y)?;
            Ok(DensityPoint { y: y.as_f64(), p: v.density, truncation_error: v.truncation_error })
        })
        .collect()
}

/// CSV with columns `y, p, truncation_error`.
pub fn write_density_csv<W: Write>(points: &[DensityPoint], mut w: W) -> io::Result<()> {
    writeln!(w, "y,p,truncation_error")?;
    for p in points {
        writeln!(w, "{},{},{}", p.y, p.p, p.truncation_error)?;
    }
    Ok(())
}

/// A scalar jump-free transition kernel with Gaussian proxies for quadrature centring.
pub trait TransitionKernel<F> {
    fn density(&self, t: F, x: F, y: F) -> F;
    /// Centre and spread of `y -> density(t, x, y)`.
    fn forward_proxy(&self, t: F, x: F) -> (F, F);
    /// Centre and spread of `v -> density(t, v, y)`.
    fn backward_proxy(&self, t: F, y: F) -> (F, F);
}

/// Jump-free kernel of a built-in model: `dX = (b(theta, X) - shift) dt + sigma dB`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianKernel<F> {
    pub kind: ClosedForm,
    pub theta: F,
    pub sigma: F,
    pub shift: F,
}

impl<F: Real> GaussianKernel<F> {
    /// Uses the model's own compensator as the drift shift.
    pub fn from_model(model: &JumpDiffusionModel<F>, theta: F) -> Result<Self> {
        let kind = model.closed_form();
        if kind == ClosedForm::None {
            return Err(Error::Unsupported("Gaussian kernel needs a closed-form model".into()));
        }
        if kind == ClosedForm::Ou && !(theta > F::zero()) {
            return Err(Error::InvalidParameter("Ornstein-Uhlenbeck kernel needs theta > 0".into()));
        }
        Ok(Self {
            kind,
            theta,
            sigma: model.constant_sigma().expect("built-in sigma"),
            shift: model.constant_compensator().expect("built-in compensator"),
        })
    }

    /// `(a, c, s^2)` with `X_t | X_0 = x ~ N(a x + c, s^2)`.
    fn affine(&self, t: F) -> (F, F, F) {
        match self.kind {
            ClosedForm::Ou => {
                let two = F::lit(2.0);
                let a = (-self.theta * t).exp();
                let c = -self.shift * (F::one() - a) / self.theta;
                let v = self.sigma * self.sigma * (-(-two * self.theta * t).exp_m1()) / (two * self.theta);
                (a, c, v)
            }
            _ => (F::one(), (self.theta - self.shift) * t, self.sigma * self.sigma * t),
        }
    }
}

impl<F: Real> TransitionKernel<F> for GaussianKernel<F> {
    fn density(&self, t: F, x: F, y: F) -> F {
        let (a, c, v) = self.affine(t);
        log_normal_pdf(y, a * x + c, v).exp()
    }

    fn forward_proxy(&self, t: F, x: F) -> (F, F) {
        let (a, c, v) = self.affine(t);
        (a * x + c, v.sqrt())
    }

    fn backward_proxy(&self, t: F, y: F) -> (F, F) {
        let (a, c, v) = self.affine(t);
        ((y - c) / a, v.sqrt() / a)
    }
}

/// Jump coefficient `c(v, z)` of a scalar model.
pub trait JumpMap<F> {
    fn apply(&self, v: F, z: F) -> F;
}

impl<F, G: Fn(F, F) -> F> JumpMap<F> for G {
    fn apply(&self, v: F, z: F) -> F {
        self(v, z)
    }
}

/// `c(v, z) = z`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdditiveJump;

impl<F: Real> JumpMap<F> for AdditiveJump {
    fn apply(&self, _v: F, z: F) -> F {
        z
    }
}

/// Solves `v + c(v, z) = w` by Newton iteration started at `w - c(w, z)`.
fn invert_jump<F: Real, J: JumpMap<F>>(c: &J, w: F, z: F) -> F {
    let mut v = w - c.apply(w, z);
    let h = F::lit(1e-6);
    for _ in 0..50 {
        let g = v + c.apply(v, z) - w;
        let dg = F::one() + (c.apply(v + h, z) - c.apply(v - h, z)) / (h + h);
        if dg == F::zero() || !dg.is_finite() {
            break;
        }
        let step = g / dg;
        v = v - step;
        if step.abs() <= F::epsilon() * (F::one() + v.abs()) {
            break;
        }
    }
    v
}

/// Quadrature settings for [`q1_chapman_kolmogorov`].
#[derive(Debug, Clone)]
pub struct CkQuadrature<F> {
    pub time: GaussLegendre<F>,
    pub time_refined: GaussLegendre<F>,
    pub space: GaussHermite<F>,
    pub space_refined: GaussHermite<F>,
    pub rel_tol: F,
}

impl<F: Real> Default for CkQuadrature<F> {
    fn default() -> Self {
        Self {
            time: GaussLegendre::new(16),
            time_refined: GaussLegendre::new(32),
            space: GaussHermite::new(128),
            space_refined: GaussHermite::new(256),
            rel_tol: F::lit(1e-6),
        }
    }
}

/// `(1/Delta) int_0^Delta int q0(t, x, v) q0(Delta - t, v + c(v, z), y) dv dt`.
///
/// The time range is split at `Delta/2`. In space, Gauss-Hermite nodes are
/// centred on the Gaussian product of the forward proxy from `x` and the
/// backward proxy from `y` pulled through the jump map. The result is
/// recomputed with doubled time and space nodes; a relative change above
/// `rel_tol` is an accuracy error.
pub fn q1_chapman_kolmogorov<F: Real, K: TransitionKernel<F>, J: JumpMap<F>>(
    q0: &K,
    c: &J,
    delta: F,
    x: F,
    y: F,
    z: F,
    quad: &CkQuadrature<F>,
) -> Result<F> {
    if !(delta > F::zero()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {delta}")));
    }
    let coarse = ck_integral(q0, c, delta, x, y, z, &quad.time, &quad.space);
    let fine = ck_integral(q0, c, delta, x, y, z, &quad.time_refined, &quad.space_refined);
    let scale = fine.abs().max(F::min_positive_value());
    let rel = (fine - coarse).abs() / scale;
    if !(rel <= quad.rel_tol) {
        return Err(Error::Accuracy { relative_change: rel.as_f64() });
    }
    Ok(fine)
}

#[allow(clippy::too_many_arguments)]
fn ck_integral<F: Real, K: TransitionKernel<F>, J: JumpMap<F>>(
    q0: &K,
    c: &J,
    delta: F,
    x: F,
    y: F,
    z: F,
    time: &GaussLegendre<F>,
    space: &GaussHermite<F>,
) -> F {
    let half = delta / F::lit(2.0);
    let inner = |t: F| {
        let s = delta - t;
        let (m1, s1) = q0.forward_proxy(t, x);
        let (wb, sb) = q0.backward_proxy(s, y);
        let vb = invert_jump(c, wb, z);
        let h = F::lit(1e-6) * (F::one() + vb.abs());
        let slope = F::one() + (c.apply(vb + h, z) - c.apply(vb - h, z)) / (h + h);
        let s2 = sb / slope.abs().max(F::epsilon());
        let (p1, p2) = (F::one() / (s1 * s1), F::one() / (s2 * s2));
        let centre = (m1 * p1 + vb * p2) / (p1 + p2);
        let spread = (F::one() / (p1 + p2)).sqrt();
        space.integrate_centered(centre, spread, |v| q0.density(t, x, v) * q0.density(s, v + c.apply(v, z), y))
    };
    (time.integrate(F::zero(), half, inner) + time.integrate(half, delta, inner)) / delta
}

/// The bounded chart `f(x) = x / sqrt(1 + |x|^2)` with its Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct FTransform<F> {
    pub value: Vec<F>,
    /// Row-major `d x d`.
    pub jacobian: Vec<F>,
    pub determinant: F,
}

pub fn f_transform_tools<F: Real>(x: &[F]) -> FTransform<F> {
    let d = x.len();
    let r2 = x.iter().fold(F::zero(), |a, v| a + *v * *v);
    let one_r2 = F::one() + r2;
    let value = x.iter().map(|v| *v / one_r2.sqrt()).collect();
    let scale = one_r2.powf(F::lit(-1.5));
    let mut jacobian = vec![F::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            let id = if i == j { one_r2 } else { F::zero() };
            jacobian[i * d + j] = scale * (id - x[i] * x[j]);
        }
    }
    let determinant = one_r2.powf(-F::from_usize_lossy(d) / F::lit(2.0) - F::one());
    FTransform { value, jacobian, determinant }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub delta: f64,
    pub x: f64,
    pub y: f64,
    pub q0: f64,
    pub bound: f64,
    pub holds: bool,
    /// The tighter pair `c = 2 sigma^2`, `C = (pi sigma^2)^{-1/2}`, valid for zero drift.
    pub zero_drift_bound: f64,
    pub zero_drift_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Exponent constant in `C Delta^{-1/2} exp(-|y - x|^2 / (c Delta))`.
    pub c: f64,
    pub big_c: f64,
    pub points: Vec<BoundPoint>,
    pub all_hold: bool,
    pub zero_drift_violations: usize,
}

/// Checks `q0(Delta, x, y) <= C Delta^{-1/2} exp(-|y - x|^2 / (c Delta))` for
/// the additive model with `c = 4 sigma^2` and
/// `C = (2 pi sigma^2)^{-1/2} exp(L^2 / (2 sigma^2))`, `L` the drift bound.
/// Both follow from `(a - b)^2 >= a^2/2 - b^2` and `Delta <= 1`.
pub fn gaussian_bound_check<F: Real>(
    model: &JumpDiffusionModel<F>,
    theta: F,
    deltas: &[F],
    x: F,
    ys: &[F],
) -> Result<BoundReport> {
    if model.closed_form() != ClosedForm::Additive {
        return Err(Error::Unsupported("bound check needs the additive model (constant sigma, bounded drift)".into()));
    }
    let sigma = model.constant_sigma().expect("built-in sigma").as_f64();
    let comp = model.constant_compensator().expect("built-in compensator").as_f64();
    let s2 = sigma * sigma;
    let drift = theta.as_f64() - comp;
    let c = 4.0 * s2;
    let big_c = (2.0 * std::f64::consts::PI * s2).powf(-0.5) * (drift * drift / (2.0 * s2)).exp();
    let c0 = 2.0 * s2;
    let big_c0 = (std::f64::consts::PI * s2).powf(-0.5);
    let mut points = Vec::new();
    for &d in deltas {
        let df = d.as_f64();
        if !(df > 0.0 && df <= 1.0) {
            return Err(Error::InvalidParameter(format!("time step must lie in (0, 1], got {df}")));
        }
        for &y in ys {
            let q0 = q_i_closed_form(model, theta, d, x, y, 0)?.as_f64();
            let r2 = (y - x).as_f64().powi(2);
            let bound = big_c / df.sqrt() * (-r2 / (c * df)).exp();
            let zero_drift_bound = big_c0 / df.sqrt() * (-r2 / (c0 * df)).exp();
            points.push(BoundPoint {
                delta: df,
                x: x.as_f64(),
                y: y.as_f64(),
                q0,
                bound,
                holds: q0 <= bound,
                zero_drift_bound,
                zero_drift_holds: q0 <= zero_drift_bound,
            });
        }
    }
    Ok(BoundReport {
        c,
        big_c,
        all_hold: points.iter().all(|p| p.holds),
        zero_drift_violations: points.iter().filter(|p| !p.zero_drift_holds).count(),
        points,
    })
}

/// Least-squares slope of `log q0(Delta, x, y)` against `-|y - x|^2 / Delta`.
/// As `Delta -> 0` it approaches `1 / (2 sigma^2)`.
pub fn gaussian_decay_rate<F: Real>(model: &JumpDiffusionModel<F>, theta: F, x: F, y: F, deltas: &[F]) -> Result<f64> {
    if deltas.len() < 2 || y == x {
        return Err(Error::InvalidParameter("need two or more steps and y != x".into()));
    }
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for &d in deltas {
        xs.push(-(y - x).as_f64().powi(2) / d.as_f64());
        ls.push(log_q_i_additive(model, theta, d, x, y, 0)?.as_f64());
    }
    Ok(ols_slope(&xs, &ls).slope)
}
