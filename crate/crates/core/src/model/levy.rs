//! Finite Lévy measures `nu = lambda * mu` and their small-ball masses.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::stats::{exp_integral_e1, normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Gaussian,
    SupportAwayFromZero,
    PowerKappa,
    GaussianPlusPower,
    GammaPlusPower,
    Custom,
}

/// User-supplied jump-size law.
pub trait CustomJumpLaw<F>: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn rand::RngCore, out: &mut [F]);
    fn mean(&self, out: &mut [F]);
    fn second_moment(&self) -> F;
    /// `mu({|z| <= r})`.
    fn small_ball_probability(&self, r: F) -> F;
}

/// Jump-size law. The four parametric classes are specified through their
/// Lévy density `nu`, so for them the total mass `lambda` is derived.
#[derive(Clone)]
pub enum JumpLaw<F> {
    /// `N(mean, sd^2)` in one dimension.
    Gaussian { mean: F, sd: F },
    /// Symmetric, `|z| = radius + Exp(rate)`: no mass inside `radius`.
    SupportAwayFromZero { radius: F, rate: F },
    /// `nu(dz) = |z|^{-1-alpha} 1{|z| <= 1} dz` with `alpha < 0`.
    Power { alpha: F },
    /// `nu(dz) = c1 phi(z) 1{|z|>1} dz + c2 |z|^kappa 1{|z|<=1} dz`.
    GaussianPlusPower { c1: F, c2: F, kappa: F },
    /// Same as above with the symmetric gamma density `a e^{-b|z|}/|z|` outside the unit ball.
    GammaPlusPower { c1: F, c2: F, kappa: F, alpha: F, beta: F },
    Custom(Arc<dyn CustomJumpLaw<F>>),
}

impl<F: std::fmt::Debug> std::fmt::Debug for JumpLaw<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JumpLaw::Gaussian { mean, sd } => write!(f, "Gaussian {{ mean: {mean:?}, sd: {sd:?} }}"),
            JumpLaw::SupportAwayFromZero { radius, rate } => {
                write!(f, "SupportAwayFromZero {{ radius: {radius:?}, rate: {rate:?} }}")
            }
            JumpLaw::Power { alpha } => write!(f, "Power {{ alpha: {alpha:?} }}"),
            JumpLaw::GaussianPlusPower { c1, c2, kappa } => {
                write!(f, "GaussianPlusPower {{ c1: {c1:?}, c2: {c2:?}, kappa: {kappa:?} }}")
            }
            JumpLaw::GammaPlusPower { c1, c2, kappa, alpha, beta } => write!(
                f,
                "GammaPlusPower {{ c1: {c1:?}, c2: {c2:?}, kappa: {kappa:?}, alpha: {alpha:?}, beta: {beta:?} }}"
            ),
            JumpLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<F: Real> JumpLaw<F> {
    pub fn class_tag(&self) -> ClassTag {
        match self {
            JumpLaw::Gaussian { .. } => ClassTag::Gaussian,
            JumpLaw::SupportAwayFromZero { .. } => ClassTag::SupportAwayFromZero,
            JumpLaw::Power { .. } => ClassTag::PowerKappa,
            JumpLaw::GaussianPlusPower { .. } => ClassTag::GaussianPlusPower,
            JumpLaw::GammaPlusPower { .. } => ClassTag::GammaPlusPower,
            JumpLaw::Custom(_) => ClassTag::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            JumpLaw::Custom(c) => c.dim(),
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        let finite = |v: F| v.is_finite();
        match *self {
            JumpLaw::Gaussian { mean, sd } => {
                if !finite(mean) || !finite(sd) || sd < F::zero() {
                    return bad("gaussian jump law needs finite mean and sd >= 0");
                }
            }
            JumpLaw::SupportAwayFromZero { radius, rate } => {
                if !(radius > F::zero()) || !(rate > F::zero()) {
                    return bad("support radius and rate must be positive");
                }
            }
            JumpLaw::Power { alpha } => {
                if !(alpha < F::zero()) {
                    return bad("power class requires alpha < 0");
                }
            }
            JumpLaw::GaussianPlusPower { c1, c2, kappa } => {
                if !(c1 > F::zero()) || !(c2 > F::zero()) || !(kappa > -F::one()) {
                    return bad("gaussian-plus-power class requires c1, c2 > 0 and kappa > -1");
                }
            }
            JumpLaw::GammaPlusPower { c1, c2, kappa, alpha, beta } => {
                if !(c1 > F::zero())
                    || !(c2 > F::zero())
                    || !(kappa > -F::one())
                    || !(alpha > F::zero())
                    || !(beta > F::zero())
                {
                    return bad("gamma-plus-power class requires c1, c2, alpha, beta > 0 and kappa > -1");
                }
            }
            JumpLaw::Custom(_) => {}
        }
        Ok(())
    }

    /// Total mass of `nu` for the classes that are specified by their density.
    fn derived_intensity(&self) -> Option<F> {
        let two = F::lit(2.0);
        match *self {
            JumpLaw::Power { alpha } => Some(-two / alpha),
            JumpLaw::GaussianPlusPower { c1, c2, kappa } => {
                let tail = two * (F::one() - F::lit(normal_cdf(1.0)));
                Some(c1 * tail + two * c2 / (kappa + F::one()))
            }
            JumpLaw::GammaPlusPower { c1, c2, kappa, alpha, beta } => {
                let e1 = F::lit(exp_integral_e1(beta.as_f64()));
                Some(two * c1 * alpha * e1 + two * c2 / (kappa + F::one()))
            }
            _ => None,
        }
    }
}

/// `nu({|z| <= r})` in closed form for a law with total intensity `intensity`.
///
/// For the density-specified classes `intensity` is ignored (the measure is
/// fixed by the class parameters).
pub fn small_ball_mass_closed_form<F: Real>(law: &JumpLaw<F>, intensity: F, r: F) -> Result<F> {
    if !(r >= F::zero()) {
        return Err(Error::Domain(format!("small-ball radius must be nonnegative, got {r}")));
    }
    law.validate()?;
    let two = F::lit(2.0);
    let one = F::one();
    let v = match *law {
        JumpLaw::Gaussian { mean, sd } => {
            if sd == F::zero() {
                if mean.abs() <= r { intensity } else { F::zero() }
            } else {
                let hi = normal_cdf(((r - mean) / sd).as_f64());
                let lo = normal_cdf(((-r - mean) / sd).as_f64());
                intensity * F::lit(hi - lo)
            }
        }
        JumpLaw::SupportAwayFromZero { radius, rate } => {
            if r < radius {
                F::zero()
            } else {
                intensity * (one - (-rate * (r - radius)).exp())
            }
        }
        JumpLaw::Power { alpha } => {
            let rr = r.min(one);
            -two / alpha * rr.powf(-alpha)
        }
        JumpLaw::GaussianPlusPower { c1, c2, kappa } => {
            let small = two * c2 / (kappa + one) * r.min(one).powf(kappa + one);
            if r <= one {
                small
            } else {
                let big = two * (F::lit(normal_cdf(r.as_f64())) - F::lit(normal_cdf(1.0)));
                small + c1 * big
            }
        }
        JumpLaw::GammaPlusPower { c1, c2, kappa, alpha, beta } => {
            let small = two * c2 / (kappa + one) * r.min(one).powf(kappa + one);
            if r <= one {
                small
            } else {
                let e1 = exp_integral_e1(beta.as_f64()) - exp_integral_e1((beta * r).as_f64());
                small + two * c1 * alpha * F::lit(e1)
            }
        }
        JumpLaw::Custom(_) => {
            return Err(Error::Unsupported("no closed-form small-ball mass for a custom jump law".into()))
        }
    };
    Ok(v)
}

/// Finite Lévy measure: intensity `lambda` and jump law `mu`.
#[derive(Debug, Clone)]
pub struct LevySpec<F> {
    intensity: F,
    law: JumpLaw<F>,
    jump_mean: Vec<F>,
    jump_second_moment: F,
}

impl<F: Real> LevySpec<F> {
    pub fn none(dim: usize) -> Self {
        Self {
            intensity: F::zero(),
            law: JumpLaw::Gaussian { mean: F::zero(), sd: F::one() },
            jump_mean: vec![F::zero(); dim],
            jump_second_moment: F::one(),
        }
    }

    pub fn gaussian(intensity: F, mean: F, sd: F) -> Result<Self> {
        Self::with_intensity(JumpLaw::Gaussian { mean, sd }, intensity)
    }

    /// Law whose intensity is supplied (gaussian, support-away-from-zero, custom).
    pub fn with_intensity(law: JumpLaw<F>, intensity: F) -> Result<Self> {
        if !(intensity >= F::zero()) || !intensity.is_finite() {
            return Err(Error::InvalidParameter(format!("intensity must be finite and >= 0, got {intensity}")));
        }
        law.validate()?;
        if law.derived_intensity().is_some() {
            return Err(Error::InvalidParameter(
                "this jump class fixes its own intensity; use LevySpec::from_class".into(),
            ));
        }
        Self::assemble(law, intensity)
    }

    /// Density-specified classes (power, gaussian-plus-power, gamma-plus-power).
    pub fn from_class(law: JumpLaw<F>) -> Result<Self> {
        law.validate()?;
        let intensity = law
            .derived_intensity()
            .ok_or_else(|| Error::InvalidParameter("this jump law needs an explicit intensity".into()))?;
        Self::assemble(law, intensity)
    }

    fn assemble(law: JumpLaw<F>, intensity: F) -> Result<Self> {
        let two = F::lit(2.0);
        let one = F::one();
        let dim = law.dim();
        let mut jump_mean = vec![F::zero(); dim];
        let second = match law {
            JumpLaw::Gaussian { mean, sd } => {
                jump_mean[0] = mean;
                mean * mean + sd * sd
            }
            JumpLaw::SupportAwayFromZero { radius, rate } => {
                radius * radius + two * radius / rate + two / (rate * rate)
            }
            JumpLaw::Power { alpha } => (two / (two - alpha)) / intensity,
            JumpLaw::GaussianPlusPower { c1, c2, kappa } => {
                let phi1 = F::lit((-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt());
                let tail = F::one() - F::lit(normal_cdf(1.0));
                (c1 * two * (phi1 + tail) + two * c2 / (kappa + F::lit(3.0))) / intensity
            }
            JumpLaw::GammaPlusPower { c1, c2, kappa, alpha, beta } => {
                let big = two * c1 * alpha * (-beta).exp() * (one / beta + one / (beta * beta));
                (big + two * c2 / (kappa + F::lit(3.0))) / intensity
            }
            JumpLaw::Custom(ref c) => {
                c.mean(&mut jump_mean);
                c.second_moment()
            }
        };
        if !second.is_finite() {
            return Err(Error::InvalidParameter("jump law must have a finite second moment".into()));
        }
        Ok(Self { intensity, law, jump_mean, jump_second_moment: second })
    }

    pub fn intensity(&self) -> F {
        self.intensity
    }

    pub fn law(&self) -> &JumpLaw<F> {
        &self.law
    }

    pub fn class_tag(&self) -> ClassTag {
        self.law.class_tag()
    }

    pub fn dim(&self) -> usize {
        self.jump_mean.len()
    }

    /// `E_mu[z]`.
    pub fn jump_mean(&self) -> &[F] {
        &self.jump_mean
    }

    /// `E_mu |z|^2`.
    pub fn jump_second_moment(&self) -> F {
        self.jump_second_moment
    }

    /// `nu({|z| <= r})`; `r = +inf` gives the intensity.
    pub fn small_ball_mass(&self, r: F) -> Result<F> {
        if r == F::infinity() {
            return Ok(self.intensity);
        }
        match &self.law {
            JumpLaw::Custom(c) => {
                if !(r >= F::zero()) {
                    return Err(Error::Domain(format!("small-ball radius must be nonnegative, got {r}")));
                }
                Ok(self.intensity * c.small_ball_probability(r))
            }
            law => small_ball_mass_closed_form(law, self.intensity, r),
        }
    }

    /// Draws one jump size `z ~ mu` into `out`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [F]) {
        let one = F::one();
        let sign = |rng: &mut R| if F::unit_uniform(rng) < F::lit(0.5) { -one } else { one };
        match self.law {
            JumpLaw::Gaussian { mean, sd } => out[0] = mean + sd * F::standard_normal(rng),
            JumpLaw::SupportAwayFromZero { radius, rate } => {
                let e = -(one - F::unit_uniform(rng)).ln() / rate;
                let s = sign(rng);
                out[0] = s * (radius + e);
            }
            JumpLaw::Power { alpha } => {
                // |z| has density proportional to r^{-1-alpha} on (0, 1]
                let s = sign(rng);
                out[0] = s * unit_power(rng, -alpha);
            }
            JumpLaw::GaussianPlusPower { c1, c2, kappa } => {
                let two = F::lit(2.0);
                let small = two * c2 / (kappa + one);
                let s = sign(rng);
                if F::unit_uniform(rng) * self.intensity < small {
                    out[0] = s * unit_power(rng, kappa + one);
                } else {
                    let _ = c1;
                    out[0] = loop {
                        let z = F::standard_normal(rng);
                        if z.abs() > one {
                            break z;
                        }
                    };
                }
            }
            JumpLaw::GammaPlusPower { c2, kappa, beta, .. } => {
                let two = F::lit(2.0);
                let small = two * c2 / (kappa + one);
                let s = sign(rng);
                if F::unit_uniform(rng) * self.intensity < small {
                    out[0] = s * unit_power(rng, kappa + one);
                } else {
                    // proposal 1 + Exp(beta), accept with probability 1/|z|
                    out[0] = loop {
                        let r = one - (one - F::unit_uniform(rng)).ln() / beta;
                        if F::unit_uniform(rng) * r < one {
                            break s * r;
                        }
                    };
                }
            }
            JumpLaw::Custom(ref c) => {
                let mut adapter = RngAdapter(rng);
                c.sample(&mut adapter, out);
            }
        }
    }
}

// |z| on (0, 1] with density proportional to r^{p-1}
fn unit_power<F: Real, R: Rng + ?Sized>(rng: &mut R, p: F) -> F {
    (F::one() - F::unit_uniform(rng)).powf(F::one() / p)
}

struct RngAdapter<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use crate::rng::StreamKey;
    use approx::assert_relative_eq;

    #[test]
    fn class1_has_no_small_jumps() {
        let law = JumpLaw::SupportAwayFromZero { radius: 1.0, rate: 1.0 };
        assert_eq!(small_ball_mass_closed_form(&law, 2.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn class2_small_ball_matches_formula_and_quadrature() {
        let law = JumpLaw::Power { alpha: -1.0 };
        let v = small_ball_mass_closed_form(&law, 0.0, 0.1).unwrap();
        assert_relative_eq!(v, 0.2, epsilon = 1e-14);
        // 2 * int_0^0.1 z^{-1-alpha} dz with alpha = -1
        let gl = GaussLegendre::<f64>::new(8);
        let q = 2.0 * gl.integrate(0.0, 0.1, |z| z.powf(0.0));
        assert_relative_eq!(v, q, epsilon = 1e-12);
    }

    #[test]
    fn class3_small_ball_matches_formula_and_quadrature() {
        let law = JumpLaw::GaussianPlusPower { c1: 1.0, c2: 1.0, kappa: 0.0 };
        let v = small_ball_mass_closed_form(&law, 0.0, 0.2).unwrap();
        assert_relative_eq!(v, 0.4, epsilon = 1e-14);
        let law = JumpLaw::GaussianPlusPower { c1: 1.0, c2: 2.0, kappa: 0.5 };
        let gl = GaussLegendre::<f64>::new(32);
        // z = t^2 removes the endpoint singularity of the integrand
        let q = 2.0 * gl.integrate(0.0, 0.3f64.sqrt(), |t| 2.0 * t * 2.0 * t);
        assert_relative_eq!(small_ball_mass_closed_form(&law, 0.0, 0.3).unwrap(), q, max_relative = 1e-6);
    }

    #[test]
    fn domain_and_unsupported_errors() {
        let law = JumpLaw::Power { alpha: -1.0 };
        assert!(matches!(small_ball_mass_closed_form(&law, 0.0, -0.1), Err(Error::Domain(_))));
        let law = JumpLaw::Power { alpha: 0.5 };
        assert!(matches!(small_ball_mass_closed_form(&law, 0.0, 0.1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn small_ball_mass_reaches_intensity() {
        let laws = [
            LevySpec::from_class(JumpLaw::Power { alpha: -0.5 }).unwrap(),
            LevySpec::from_class(JumpLaw::GaussianPlusPower { c1: 1.0, c2: 1.0, kappa: 0.5 }).unwrap(),
            LevySpec::from_class(JumpLaw::GammaPlusPower { c1: 1.0, c2: 1.0, kappa: 0.0, alpha: 1.0, beta: 2.0 })
                .unwrap(),
            LevySpec::gaussian(1.5, 0.2, 1.0).unwrap(),
        ];
        for spec in &laws {
            let lam = spec.intensity();
            assert_relative_eq!(spec.small_ball_mass(1e6).unwrap(), lam, max_relative = 1e-9);
            assert_eq!(spec.small_ball_mass(f64::INFINITY).unwrap(), lam);
            let mut prev = 0.0;
            for i in 0..200 {
                let m = spec.small_ball_mass(i as f64 * 0.05).unwrap();
                assert!(m + 1e-15 >= prev);
                prev = m;
            }
        }
    }

    #[test]
    fn sampler_matches_small_ball_and_second_moment() {
        let specs = [
            LevySpec::from_class(JumpLaw::Power { alpha: -0.5 }).unwrap(),
            LevySpec::from_class(JumpLaw::GaussianPlusPower { c1: 1.0, c2: 1.0, kappa: 0.5 }).unwrap(),
            LevySpec::from_class(JumpLaw::GammaPlusPower { c1: 2.0, c2: 1.0, kappa: 0.0, alpha: 1.0, beta: 1.0 })
                .unwrap(),
            LevySpec::with_intensity(JumpLaw::SupportAwayFromZero { radius: 1.0, rate: 2.0 }, 1.0).unwrap(),
        ];
        let n = 200_000;
        for (i, spec) in specs.iter().enumerate() {
            let mut rng = StreamKey::new(11, i as u64).block(0);
            let mut z = [0.0f64];
            let (mut inside, mut m2) = (0usize, 0.0);
            for _ in 0..n {
                spec.sample_jump(&mut rng, &mut z);
                if z[0].abs() <= 0.5 {
                    inside += 1;
                }
                m2 += z[0] * z[0];
            }
            let p = spec.small_ball_mass(0.5).unwrap() / spec.intensity();
            let phat = inside as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((phat - p).abs() < 5.0 * se + 1e-12, "law {i}: {phat} vs {p}");
            let m2 = m2 / n as f64;
            assert_relative_eq!(m2, spec.jump_second_moment(), max_relative = 0.03);
        }
    }
}
