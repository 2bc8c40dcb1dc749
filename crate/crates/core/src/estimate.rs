//! Drift estimation by the Gaussian quasi-score with optional jump filtering.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lan::{default_jump_threshold, fisher_closed_form};
use crate::linalg::{norm, PrecisionScratch};
use crate::model::{ClosedForm, JumpDiffusionModel, ParameterContext};
use crate::rng::StreamKey;
use crate::scalar::Real;
use crate::simulate::{simulate_grid, ObservationRecord, Retention, SimulationScheme};
use crate::stats::{ks_distance_normal, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: f64,
    pub iterations: usize,
    /// Set when `|score(theta_hat)| / (n Delta) < tol`.
    pub converged: bool,
    /// Fraction of increments excluded by the threshold.
    pub filtered_fraction: f64,
    /// `sqrt(n Delta) (theta_hat - theta)` for the record's parameter, when finite.
    pub standardized: Option<f64>,
}

struct Score<'a, F: Real> {
    record: &'a ObservationRecord<F>,
    model: &'a JumpDiffusionModel<F>,
    keep: Vec<usize>,
    prec: PrecisionScratch<F>,
    dx: Vec<F>,
    d1: Vec<F>,
    d2: Vec<F>,
    b: Vec<F>,
    resid: Vec<F>,
}

impl<'a, F: Real> Score<'a, F> {
    fn new(record: &'a ObservationRecord<F>, model: &'a JumpDiffusionModel<F>, threshold: Option<F>) -> Self {
        let d = record.dim;
        let mut dx = vec![F::zero(); d];
        let keep = (0..record.n)
            .filter(|&k| {
                record.increment(k, &mut dx);
                threshold.map_or(true, |r| norm(&dx) <= r)
            })
            .collect();
        Self {
            record,
            model,
            keep,
            prec: PrecisionScratch::new(d),
            dx,
            d1: vec![F::zero(); d],
            d2: vec![F::zero(); d],
            b: vec![F::zero(); d],
            resid: vec![F::zero(); d],
        }
    }

    /// Score and, when the model supplies it, its analytic derivative.
    fn eval(&mut self, theta: F, want_deriv: bool) -> Result<(F, Option<F>)> {
        let d = self.record.dim;
        let delta = self.record.delta;
        let mut s = F::zero();
        let mut ds = F::zero();
        let mut analytic = want_deriv;
        for &k in &self.keep {
            let x = self.record.value(k);
            self.model.diffusion(x, self.prec.sigma_mut());
            if !self.prec.factorize() {
                return Err(Error::Ellipticity { index: k });
            }
            self.record.increment(k, &mut self.dx);
            self.model.drift(theta, x, &mut self.b);
            self.model.drift_theta_deriv(theta, x, &mut self.d1);
            for i in 0..d {
                self.resid[i] = self.dx[i] - self.b[i] * delta;
            }
            s = s + self.prec.inner(&self.d1, &self.resid);
            if analytic {
                if self.model.drift_theta_second_deriv(theta, x, &mut self.d2) {
                    ds = ds + self.prec.inner(&self.d2, &self.resid) - self.prec.inner(&self.d1, &self.d1) * delta;
                } else {
                    analytic = false;
                }
            }
        }
        Ok((s, analytic.then_some(ds)))
    }

    fn derivative(&mut self, theta: F, analytic: Option<F>) -> Result<F> {
        if let Some(v) = analytic {
            return Ok(v);
        }
        let h = F::lit(1e-6) * (F::one() + theta.abs());
        let (up, _) = self.eval(theta + h, false)?;
        let (dn, _) = self.eval(theta - h, false)?;
        Ok((up - dn) / (h + h))
    }
}

/// Solves the filtered quasi-score equation on `interval` by Newton steps
/// kept inside a sign-change bracket, bisecting whenever a step leaves it or
/// fails to halve the score.
pub fn drift_qmle<F: Real>(
    record: &ObservationRecord<F>,
    model: &JumpDiffusionModel<F>,
    interval: (F, F),
    threshold: Option<F>,
    tol: F,
    max_iter: usize,
) -> Result<EstimateResult> {
    let (mut lo, mut hi) = interval;
    if !(lo < hi) {
        return Err(Error::InvalidParameter("estimation interval must satisfy lo < hi".into()));
    }
    let mut score = Score::new(record, model, threshold);
    let filtered_fraction = 1.0 - score.keep.len() as f64 / record.n as f64;
    let scale = F::from_usize_lossy(record.n) * record.delta;
    let done = |s: F| (s / scale).abs() < tol;

    let (s_lo, _) = score.eval(lo, false)?;
    let (s_hi, _) = score.eval(hi, false)?;
    if !s_lo.is_finite() || !s_hi.is_finite() {
        return Err(Error::Numeric { index: 0 });
    }
    let finish = |theta: F, iterations: usize, converged: bool| {
        let standardized = record
            .theta
            .is_finite()
            .then(|| (scale.sqrt() * (theta - record.theta)).as_f64());
        EstimateResult { theta_hat: theta.as_f64(), iterations, converged, filtered_fraction, standardized }
    };
    if done(s_lo) {
        return Ok(finish(lo, 0, true));
    }
    if done(s_hi) {
        return Ok(finish(hi, 0, true));
    }
    if (s_lo > F::zero()) == (s_hi > F::zero()) {
        return Err(Error::NoRoot { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    let lo_positive = s_lo > F::zero();

    let half = F::lit(0.5);
    let mut theta = half * (lo + hi);
    let (mut s, mut analytic) = score.eval(theta, true)?;
    for it in 1..=max_iter {
        if done(s) {
            return Ok(finish(theta, it - 1, true));
        }
        if (s > F::zero()) == lo_positive {
            lo = theta;
        } else {
            hi = theta;
        }
        let ds = score.derivative(theta, analytic)?;
        let newton = theta - s / ds;
        let mut next = if ds != F::zero() && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            half * (lo + hi)
        };
        let (mut s_next, mut a_next) = score.eval(next, true)?;
        if s_next.abs() > half * s.abs() && next == newton {
            next = half * (lo + hi);
            (s_next, a_next) = score.eval(next, true)?;
        }
        theta = next;
        s = s_next;
        analytic = a_next;
    }
    Ok(finish(theta, max_iter, done(s)))
}

/// Which increments the estimator keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    None,
    /// `4 sigma_max sqrt(Delta)`.
    Default,
    Fixed(f64),
}

impl ThresholdPolicy {
    pub fn resolve<F: Real>(&self, model: &JumpDiffusionModel<F>, delta: F) -> Option<F> {
        match *self {
            ThresholdPolicy::None => None,
            ThresholdPolicy::Default => Some(default_jump_threshold(model, delta)),
            ThresholdPolicy::Fixed(r) => Some(F::lit(r)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityOptions {
    pub replications: usize,
    pub threshold: ThresholdPolicy,
    /// Search interval is `theta0 +- half_width`.
    pub half_width: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub x0: f64,
}

impl Default for NormalityOptions {
    fn default() -> Self {
        Self { replications: 500, threshold: ThresholdPolicy::Default, half_width: 5.0, tol: 1e-10, max_iter: 100, x0: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub replications: usize,
    /// Replications whose solver failed or did not converge.
    pub failures: usize,
    pub mean: f64,
    pub var: f64,
    pub var_std_error: f64,
    pub gamma: f64,
    /// `1 / gamma`.
    pub target_var: f64,
    pub ks: f64,
    /// Per replication, in index order; `None` for solver errors.
    pub results: Vec<Option<EstimateResult>>,
}

/// Law of `sqrt(n Delta)(theta_hat - theta0)` over independent paths.
///
/// Replication `r` simulates from `key` with replication index offset by `r`,
/// so reruns with the same key see the same paths whatever the policy.
pub fn estimator_normality_experiment(
    model: &JumpDiffusionModel<f64>,
    ctx: &ParameterContext<f64>,
    options: &NormalityOptions,
    key: StreamKey,
) -> Result<NormalityReport> {
    if options.replications < 100 {
        return Err(Error::InvalidParameter("the normality experiment needs at least 100 replications".into()));
    }
    if model.dim() != 1 {
        return Err(Error::Unsupported("the normality experiment is scalar".into()));
    }
    let gamma = fisher_closed_form(model, ctx.theta0)?.gamma;
    let threshold = options.threshold.resolve(model, ctx.delta);
    let interval = (ctx.theta0 - options.half_width, ctx.theta0 + options.half_width);
    let results: Vec<Option<EstimateResult>> = (0..options.replications)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(key.seed, key.replication + r as u64);
            let scheme = match model.closed_form() {
                ClosedForm::None => SimulationScheme::euler(key),
                _ => SimulationScheme::exact(key),
            };
            let record = simulate_grid(model, ctx.theta0, &[options.x0], ctx, &scheme, Retention::None).ok()?;
            drift_qmle(&record, model, interval, threshold, options.tol, options.max_iter)
                .ok()
                .filter(|e| e.converged)
        })
        .collect();
    let z: Vec<f64> = results.iter().flatten().filter_map(|e| e.standardized).collect();
    let m = Moments::of(&z);
    Ok(NormalityReport {
        replications: options.replications,
        failures: options.replications - z.len(),
        mean: m.mean,
        var: m.var,
        var_std_error: m.var_std_error(),
        gamma,
        target_var: 1.0 / gamma,
        ks: ks_distance_normal(&z, 0.0, 1.0 / gamma),
        results,
    })
}

/// CSV with columns `rep, theta_hat, standardized, converged, filtered_fraction`.
/// Failed replications leave every value empty.
pub fn write_estimate_csv<W: Write>(results: &[Option<EstimateResult>], mut w: W) -> io::Result<()> {
    writeln!(w, "rep,theta_hat,standardized,converged,filtered_fraction")?;
    for (rep, r) in results.iter().enumerate() {
        match r {
            Some(e) => writeln!(
                w,
                "{},{},{},{},{}",
                rep,
                e.theta_hat,
                e.standardized.map(|v| v.to_string()).unwrap_or_default(),
                e.converged,
                e.filtered_fraction
            )?,
            None => writeln!(w, "{rep},,,,")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin_model, BuiltinKind, LevySpec};

    fn additive() -> JumpDiffusionModel<f64> {
        make_builtin_model(BuiltinKind::Additive, 1.0, LevySpec::none(1)).unwrap()
    }

    #[test]
    fn additive_root_is_mean_increment() {
        let rec = ObservationRecord::from_values(1, 1.0, f64::NAN, vec![0.0, 1.0, 1.0]).unwrap();
        let e = drift_qmle(&rec, &additive(), (-3.0, 3.0), None, 1e-12, 50).unwrap();
        assert!(e.converged);
        assert!((e.theta_hat - 0.5).abs() < 1e-12);
        assert_eq!(e.standardized, None);
        assert_eq!(e.filtered_fraction, 0.0);
    }

    #[test]
    fn ou_root_matches_closed_form() {
        let m = make_builtin_model(BuiltinKind::Ou, 1.0, LevySpec::none(1)).unwrap();
        let ctx = ParameterContext::new(1.0, 0.0, 2000, 0.05).unwrap();
        let rec = simulate_grid(&m, 1.0, &[1.0], &ctx, &SimulationScheme::exact(StreamKey::new(3, 0)), Retention::None).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..rec.n {
            let x = rec.values[k];
            num += x * (rec.values[k + 1] - x);
            den += x * x * rec.delta;
        }
        let e = drift_qmle(&rec, &m, (-4.0, 6.0), None, 1e-13, 100).unwrap();
        assert!(e.converged);
        assert!((e.theta_hat - (-num / den)).abs() < 1e-8);
        let wider = drift_qmle(&rec, &m, (-40.0, 60.0), None, 1e-13, 100).unwrap();
        assert!((wider.theta_hat - e.theta_hat).abs() < 1e-8);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let rec = ObservationRecord::from_values(1, 1.0, 0.0, vec![0.0, 1.0, 1.0]).unwrap();
        assert!(matches!(drift_qmle(&rec, &additive(), (1.0, 3.0), None, 1e-12, 50), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn iteration_cap_gives_unconverged_result() {
        let m = make_builtin_model(BuiltinKind::Ou, 1.0, LevySpec::none(1)).unwrap();
        let rec = ObservationRecord::from_values(1, 0.1, 1.0, vec![1.0, 0.8, 0.9, 0.5]).unwrap();
        let e = drift_qmle(&rec, &m, (-50.0, 70.0), None, 1e-300, 2).unwrap();
        assert!(!e.converged);
        assert_eq!(e.iterations, 2);
    }

    #[test]
    fn estimate_csv_layout() {
        let e = EstimateResult { theta_hat: 1.5, iterations: 3, converged: true, filtered_fraction: 0.25, standardized: Some(0.5) };
        let mut out = Vec::new();
        write_estimate_csv(&[Some(e), None], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "rep,theta_hat,standardized,converged,filtered_fraction\n0,1.5,0.5,true,0.25\n1,,,,\n"
        );
    }
}
