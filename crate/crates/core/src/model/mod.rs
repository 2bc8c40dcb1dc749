//! Jump-diffusion model class, built-in examples and observation parameters.

mod levy;
mod probe;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use levy::{small_ball_mass_closed_form, ClassTag, CustomJumpLaw, JumpLaw, LevySpec};
pub use probe::{probe_assumptions, psi_derivative_bounds, ProbeBoxes, ProbeFailure, ProbeReport, PsiGridReport, PsiPoint};

/// Coefficients of `dX = b(theta, X) dt + sigma(X) dB + int c(X-, z) (N - nu)(dt, dz)`.
///
/// Matrices are row-major `d x d`. Implementations must be pure.
pub trait Coefficients<F>: Send + Sync {
    fn dim(&self) -> usize;
    fn drift(&self, theta: F, x: &[F], out: &mut [F]);
    fn drift_theta_deriv(&self, theta: F, x: &[F], out: &mut [F]);
    /// Writes `d^2 b / d theta^2` and returns `true`, or returns `false` if not supplied.
    fn drift_theta_second_deriv(&self, _theta: F, _x: &[F], _out: &mut [F]) -> bool {
        false
    }
    fn diffusion(&self, x: &[F], out: &mut [F]);
    fn jump_coeff(&self, x: &[F], z: &[F], out: &mut [F]);
    /// `int c(x, z) nu(dz)`.
    fn jump_compensator(&self, x: &[F], out: &mut [F]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    None,
    Additive,
    Ou,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    Additive,
    Ou,
}

/// One-dimensional built-ins with constant `sigma` and `c(x, z) = z`.
#[derive(Debug, Clone, Copy)]
struct Builtin<F> {
    kind: BuiltinKind,
    sigma: F,
    compensator: F,
}

impl<F: Real> Coefficients<F> for Builtin<F> {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, theta: F, x: &[F], out: &mut [F]) {
        out[0] = match self.kind {
            BuiltinKind::Additive => theta,
            BuiltinKind::Ou => -theta * x[0],
        };
    }

    fn drift_theta_deriv(&self, _theta: F, x: &[F], out: &mut [F]) {
        out[0] = match self.kind {
            BuiltinKind::Additive => F::one(),
            BuiltinKind::Ou => -x[0],
        };
    }

    fn drift_theta_second_deriv(&self, _theta: F, _x: &[F], out: &mut [F]) -> bool {
        out[0] = F::zero();
        true
    }

    fn diffusion(&self, _x: &[F], out: &mut [F]) {
        out[0] = self.sigma;
    }

    fn jump_coeff(&self, _x: &[F], z: &[F], out: &mut [F]) {
        out[0] = z[0];
    }

    fn jump_compensator(&self, _x: &[F], out: &mut [F]) {
        out[0] = self.compensator;
    }
}

type DriftFn<F> = dyn Fn(F, &[F], &mut [F]) + Send + Sync;
type StateFn<F> = dyn Fn(&[F], &mut [F]) + Send + Sync;
type JumpFn<F> = dyn Fn(&[F], &[F], &mut [F]) + Send + Sync;

/// Coefficients assembled from closures.
pub struct FnCoefficients<F> {
    pub dim: usize,
    pub drift: Box<DriftFn<F>>,
    pub drift_theta_deriv: Box<DriftFn<F>>,
    pub drift_theta_second_deriv: Option<Box<DriftFn<F>>>,
    pub diffusion: Box<StateFn<F>>,
    pub jump_coeff: Box<JumpFn<F>>,
    pub jump_compensator: Box<StateFn<F>>,
}

impl<F: Real> Coefficients<F> for FnCoefficients<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, theta: F, x: &[F], out: &mut [F]) {
        (self.drift)(theta, x, out)
    }
    fn drift_theta_deriv(&self, theta: F, x: &[F], out: &mut [F]) {
        (self.drift_theta_deriv)(theta, x, out)
    }
    fn drift_theta_second_deriv(&self, theta: F, x: &[F], out: &mut [F]) -> bool {
        match &self.drift_theta_second_deriv {
            Some(f) => {
                f(theta, x, out);
                true
            }
            None => false,
        }
    }
    fn diffusion(&self, x: &[F], out: &mut [F]) {
        (self.diffusion)(x, out)
    }
    fn jump_coeff(&self, x: &[F], z: &[F], out: &mut [F]) {
        (self.jump_coeff)(x, z, out)
    }
    fn jump_compensator(&self, x: &[F], out: &mut [F]) {
        (self.jump_compensator)(x, out)
    }
}

#[derive(Clone)]
pub struct JumpDiffusionModel<F> {
    coeffs: Arc<dyn Coefficients<F>>,
    levy: LevySpec<F>,
    closed_form: ClosedForm,
    builtin: Option<Builtin<F>>,
}

impl<F: std::fmt::Debug> std::fmt::Debug for JumpDiffusionModel<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JumpDiffusionModel")
            .field("dim", &self.coeffs.dim())
            .field("closed_form", &self.closed_form)
            .field("sigma", &self.builtin.as_ref().map(|b| &b.sigma))
            .field("levy", &self.levy)
            .finish()
    }
}

impl<F: Real> JumpDiffusionModel<F> {
    /// A model with user coefficients. No closed-form formulas are assumed.
    pub fn new(coeffs: Arc<dyn Coefficients<F>>, levy: LevySpec<F>) -> Result<Self> {
        let d = coeffs.dim();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if levy.dim() != d {
            return Err(Error::InvalidParameter(format!(
                "jump law dimension {} does not match state dimension {d}",
                levy.dim()
            )));
        }
        Ok(Self { coeffs, levy, closed_form: ClosedForm::None, builtin: None })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    pub fn coefficients(&self) -> &dyn Coefficients<F> {
        &*self.coeffs
    }

    pub fn levy(&self) -> &LevySpec<F> {
        &self.levy
    }

    pub fn closed_form(&self) -> ClosedForm {
        self.closed_form
    }

    /// Constant diffusion level of a built-in model.
    pub fn constant_sigma(&self) -> Option<F> {
        self.builtin.map(|b| b.sigma)
    }

    /// `lambda E_mu[z]` for the built-ins.
    pub fn constant_compensator(&self) -> Option<F> {
        self.builtin.map(|b| b.compensator)
    }

    #[inline]
    pub fn drift(&self, theta: F, x: &[F], out: &mut [F]) {
        self.coeffs.drift(theta, x, out)
    }
    #[inline]
    pub fn drift_theta_deriv(&self, theta: F, x: &[F], out: &mut [F]) {
        self.coeffs.drift_theta_deriv(theta, x, out)
    }
    #[inline]
    pub fn drift_theta_second_deriv(&self, theta: F, x: &[F], out: &mut [F]) -> bool {
        self.coeffs.drift_theta_second_deriv(theta, x, out)
    }
    #[inline]
    pub fn diffusion(&self, x: &[F], out: &mut [F]) {
        self.coeffs.diffusion(x, out)
    }
    #[inline]
    pub fn jump_coeff(&self, x: &[F], z: &[F], out: &mut [F]) {
        self.coeffs.jump_coeff(x, z, out)
    }
    #[inline]
    pub fn jump_compensator(&self, x: &[F], out: &mut [F]) {
        self.coeffs.jump_compensator(x, out)
    }

    /// Bound on the operator norm of `sigma(x)`, used for the default jump
    /// threshold. Exact for the built-ins; otherwise taken from a fixed-seed
    /// probe over the default state box.
    pub fn diffusion_norm_bound(&self) -> F {
        if let Some(b) = self.builtin {
            return b.sigma.abs();
        }
        let key = crate::rng::StreamKey::new(0x5167_0a11, 0);
        let mut rng = key.aux(0);
        let boxes = ProbeBoxes::around(F::one());
        match probe_assumptions(self, &boxes, 512, &mut rng) {
            Ok(r) if r.max_diffusion_norm.is_finite() => F::lit(r.max_diffusion_norm),
            _ => F::one(),
        }
    }
}

/// One of the two closed-form example models.
pub fn make_builtin_model<F: Real>(kind: BuiltinKind, sigma: F, levy: LevySpec<F>) -> Result<JumpDiffusionModel<F>> {
    if !(sigma > F::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if levy.dim() != 1 {
        return Err(Error::InvalidParameter("built-in models are one-dimensional".into()));
    }
    let compensator = levy.intensity() * levy.jump_mean()[0];
    let builtin = Builtin { kind, sigma, compensator };
    let closed_form = match kind {
        BuiltinKind::Additive => ClosedForm::Additive,
        BuiltinKind::Ou => ClosedForm::Ou,
    };
    Ok(JumpDiffusionModel { coeffs: Arc::new(builtin), levy, closed_form, builtin: Some(builtin) })
}

/// Local alternative `theta_n = theta0 + u / sqrt(n Delta_n)` on a grid of step `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterContext<F> {
    pub theta0: F,
    pub u: F,
    pub n: usize,
    pub delta: F,
}

impl<F: Real> ParameterContext<F> {
    pub fn new(theta0: F, u: F, n: usize, delta: F) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if !(delta > F::zero() && delta <= F::one()) {
            return Err(Error::InvalidParameter(format!("step must lie in (0, 1], got {delta}")));
        }
        if !theta0.is_finite() || !u.is_finite() {
            return Err(Error::InvalidParameter("theta0 and u must be finite".into()));
        }
        Ok(Self { theta0, u, n, delta })
    }

    /// `Delta_n = n^{-beta}`.
    pub fn with_power_rule(theta0: F, u: F, n: usize, beta: F) -> Result<Self> {
        let delta = F::from_usize_lossy(n).powf(-beta);
        Self::new(theta0, u, n, delta)
    }

    /// `n Delta_n`.
    pub fn horizon(&self) -> F {
        F::from_usize_lossy(self.n) * self.delta
    }

    /// `sqrt(n Delta_n)`.
    pub fn rate(&self) -> F {
        self.horizon().sqrt()
    }

    pub fn theta_n(&self) -> F {
        self.theta_of(F::one())
    }

    pub fn theta_of(&self, ell: F) -> F {
        self.theta0 + ell * self.u / self.rate()
    }

    pub fn with_u(&self, u: F) -> Self {
        Self { u, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_additive_without_jumps() {
        let m = make_builtin_model(BuiltinKind::Additive, 1.0, LevySpec::none(1)).unwrap();
        let mut out = [0.0];
        m.drift(0.7, &[3.0], &mut out);
        assert_eq!(out[0], 0.7);
        m.jump_compensator(&[3.0], &mut out);
        assert_eq!(out[0], 0.0);
        assert_eq!(m.closed_form(), ClosedForm::Additive);
    }

    #[test]
    fn builtin_ou_with_centred_jumps() {
        let m = make_builtin_model(BuiltinKind::Ou, 1.0, LevySpec::gaussian(1.0, 0.0, 1.0).unwrap()).unwrap();
        let mut out = [0.0];
        m.drift(2.0, &[1.5], &mut out);
        assert_eq!(out[0], -3.0);
        m.jump_compensator(&[1.5], &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn compensator_is_intensity_times_mean() {
        let m = make_builtin_model(BuiltinKind::Additive, 2.0, LevySpec::gaussian(0.5, 1.0, 1.0).unwrap()).unwrap();
        let mut out = [0.0];
        m.jump_compensator(&[0.0], &mut out);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let r = make_builtin_model(BuiltinKind::Ou, 0.0, LevySpec::<f64>::none(1));
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn parameter_context_local_alternative() {
        let c = ParameterContext::<f64>::new(1.0, 2.0, 100, 0.04).unwrap();
        assert!((c.theta_n() - 1.0 - 2.0 / 2.0).abs() < 1e-15);
        assert!((c.theta_of(0.5) - 1.5).abs() < 1e-15);
        assert!(ParameterContext::new(1.0, 1.0, 10, 1.5).is_err());
        assert!(ParameterContext::new(1.0, 1.0, 0, 0.5).is_err());
    }
}
