//! Log-likelihood-ratio statistics of the local experiment and their pieces.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::density::{log_mixture_density, MixtureDensitySpec};
use crate::error::{Error, Result};
use crate::linalg::{norm, PrecisionScratch};
use crate::model::{ClosedForm, JumpDiffusionModel, ParameterContext};
use crate::quadrature::{trapezoid, GaussLegendre};
use crate::scalar::Real;
use crate::simulate::ObservationRecord;

/// Nodes of the rule over `ell in [0, 1]`.
pub const ELL_NODES: usize = 16;

/// `r = 4 sigma_max sqrt(Delta)`.
pub fn default_jump_threshold<F: Real>(model: &JumpDiffusionModel<F>, delta: F) -> F {
    F::lit(4.0) * model.diffusion_norm_bound() * delta.sqrt()
}

struct StateScratch<F> {
    prec: PrecisionScratch<F>,
    a: Vec<F>,
    b: Vec<F>,
    c: Vec<F>,
    v: Vec<F>,
}

impl<F: Real> StateScratch<F> {
    fn new(d: usize) -> Self {
        Self {
            prec: PrecisionScratch::new(d),
            a: vec![F::zero(); d],
            b: vec![F::zero(); d],
            c: vec![F::zero(); d],
            v: vec![F::zero(); d],
        }
    }

    /// Loads `sigma(x)` and factorizes `sigma sigma^T`.
    fn load(&mut self, model: &JumpDiffusionModel<F>, x: &[F], k: usize) -> Result<()> {
        model.diffusion(x, self.prec.sigma_mut());
        if !self.prec.factorize() {
            return Err(Error::Ellipticity { index: k });
        }
        Ok(())
    }
}

/// `sum_k xi_{k,n}` from the latent Brownian increments of a path simulated under `theta0`.
pub fn main_term_sum<F: Real>(
    record: &ObservationRecord<F>,
    model: &JumpDiffusionModel<F>,
    ctx: &ParameterContext<F>,
    rule: &GaussLegendre<F>,
) -> Result<F> {
    let latent = record
        .latent
        .as_ref()
        .ok_or_else(|| Error::Precondition("main term needs the latent Brownian increments".into()))?;
    if ctx.u == F::zero() {
        return Ok(F::zero());
    }
    let d = record.dim;
    let mut s = StateScratch::new(d);
    let nodes: Vec<(F, F)> = rule.mapped(F::zero(), F::one()).map(|(l, w)| (ctx.theta_of(l), w)).collect();
    let mut total = F::zero();
    for k in 0..record.n {
        let x = record.value(k);
        s.load(model, x, k)?;
        crate::linalg::mat_vec(s.prec.sigma(), latent.brownian(k), &mut s.v);
        model.drift(ctx.theta0, x, &mut s.b);
        let mut acc = F::zero();
        for &(th, w) in &nodes {
            model.drift_theta_deriv(th, x, &mut s.a);
            model.drift(th, x, &mut s.c);
            for i in 0..d {
                s.c[i] = s.v[i] + (s.b[i] - s.c[i]) * ctx.delta;
            }
            acc = acc + w * s.prec.inner(&s.a, &s.c);
        }
        total = total + acc;
    }
    Ok(total * ctx.u / ctx.rate())
}

/// Difference of Euler-Gaussian log-densities between `theta_n` and `theta0`.
/// Increments with `|Delta X| > threshold` are left out.
pub fn quasi_llr<F: Real>(
    record: &ObservationRecord<F>,
    model: &JumpDiffusionModel<F>,
    ctx: &ParameterContext<F>,
    threshold: Option<F>,
) -> Result<F> {
    if record.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("observations must be finite".into()));
    }
    if ctx.u == F::zero() {
        return Ok(F::zero());
    }
    let d = record.dim;
    let mut s = StateScratch::new(d);
    let theta_n = ctx.theta_n();
    let delta = record.delta;
    let mut dx = vec![F::zero(); d];
    let mut total = F::zero();
    for k in 0..record.n {
        record.increment(k, &mut dx);
        if let Some(r) = threshold {
            if norm(&dx) > r {
                continue;
            }
        }
        let x = record.value(k);
        s.load(model, x, k)?;
        model.drift(ctx.theta0, x, &mut s.a);
        model.drift(theta_n, x, &mut s.b);
        for i in 0..d {
            s.a[i] = dx[i] - s.a[i] * delta;
            s.b[i] = dx[i] - s.b[i] * delta;
        }
        let q0 = s.prec.inner(&s.a, &s.a);
        let q1 = s.prec.inner(&s.b, &s.b);
        total = total + (q0 - q1) / (F::lit(2.0) * delta);
    }
    Ok(total)
}

/// `sum_k log p^{theta_n} / p^{theta0}` with the mixture transition density.
pub fn exact_llr<F: Real>(
    record: &ObservationRecord<F>,
    spec: &MixtureDensitySpec<F>,
    ctx: &ParameterContext<F>,
) -> Result<F> {
    if spec.model().closed_form() != ClosedForm::Additive {
        return Err(Error::Unsupported("exact likelihood ratios are available for the additive model".into()));
    }
    if record.dim != 1 {
        return Err(Error::Unsupported("exact likelihood ratios need a scalar model".into()));
    }
    if ctx.u == F::zero() {
        return Ok(F::zero());
    }
    let theta_n = ctx.theta_n();
    let mut total = F::zero();
    for k in 0..record.n {
        let (x, y) = (record.values[k], record.values[k + 1]);
        let l1 = log_mixture_density(spec, theta_n, record.delta, x, y)?;
        let l0 = log_mixture_density(spec, ctx.theta0, record.delta, x, y)?;
        if !l1.is_finite() || !l0.is_finite() {
            return Err(Error::Numeric { index: k });
        }
        total = total + (l1 - l0);
    }
    Ok(total)
}

/// Remainder terms of one interval. `r1..r3` are `None` when no closed form
/// for the Malliavin quantities is available.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RemainderComponents<F> {
    pub r1: Option<F>,
    pub r2: Option<F>,
    pub r3: Option<F>,
    pub r4: F,
    pub r5: F,
    pub r6: F,
    pub z4: F,
    pub z5: F,
    pub z6: F,
}

impl<F: Real> RemainderComponents<F> {
    /// `-R1 + R2 + R3` when available.
    pub fn centred_combination(&self) -> Option<F> {
        Some(-self.r1? + self.r2? + self.r3?)
    }
}

/// Remainder terms on interval `k` of a fine path.
///
/// `R4..R6` use `theta` throughout and the recorded path as `Y^theta`;
/// `Z4..Z6` use `d_theta b(theta, .)` against `b(record.theta, .)`.
/// Time integrals use the trapezoid rule on the fine grid and stochastic
/// integrals use left-point sums.
pub fn remainder_components<F: Real>(
    record: &ObservationRecord<F>,
    model: &JumpDiffusionModel<F>,
    theta: F,
    k: usize,
) -> Result<RemainderComponents<F>> {
    let latent = record
        .latent
        .as_ref()
        .filter(|l| l.has_fine_path())
        .ok_or_else(|| Error::Precondition("remainder terms need the retained fine path".into()))?;
    if k >= record.n {
        return Err(Error::InvalidParameter(format!("interval {k} out of range")));
    }
    let d = record.dim;
    let m = latent.fine_substeps;
    let delta = record.delta;
    let h = delta / F::from_usize_lossy(m);
    let ys = latent.fine_values(k);
    let dws = latent.fine_dw(k);
    let x = &ys[..d];
    let theta0 = record.theta;

    let mut prec = PrecisionScratch::new(d);
    model.diffusion(x, prec.sigma_mut());
    if !prec.factorize() {
        return Err(Error::Ellipticity { index: k });
    }
    let sigma_x = prec.sigma().to_vec();
    let mut dtheta = vec![F::zero(); d];
    model.drift_theta_deriv(theta, x, &mut dtheta);

    let mut bx = vec![F::zero(); d];
    let mut bx0 = vec![F::zero(); d];
    model.drift(theta, x, &mut bx);
    model.drift(theta0, x, &mut bx0);

    // int (b(Y_s) - b(x)) ds, int comp(Y_s) ds, per coordinate
    let mut drift_int = vec![F::zero(); d];
    let mut drift0_int = vec![F::zero(); d];
    let mut comp_int = vec![F::zero(); d];
    let mut col_b = vec![F::zero(); m + 1];
    let mut col_b0 = vec![F::zero(); m + 1];
    let mut col_c = vec![F::zero(); m + 1];
    let mut tmp = vec![F::zero(); d];
    let mut tmp0 = vec![F::zero(); d];
    let mut comp = vec![F::zero(); d];
    let mut per_node = vec![F::zero(); (m + 1) * d * 3];
    for j in 0..=m {
        let y = &ys[j * d..(j + 1) * d];
        model.drift(theta, y, &mut tmp);
        model.drift(theta0, y, &mut tmp0);
        model.jump_compensator(y, &mut comp);
        for i in 0..d {
            per_node[(j * d + i) * 3] = tmp[i] - bx[i];
            per_node[(j * d + i) * 3 + 1] = tmp0[i] - bx0[i];
            per_node[(j * d + i) * 3 + 2] = comp[i];
        }
    }
    for i in 0..d {
        for j in 0..=m {
            col_b[j] = per_node[(j * d + i) * 3];
            col_b0[j] = per_node[(j * d + i) * 3 + 1];
            col_c[j] = per_node[(j * d + i) * 3 + 2];
        }
        drift_int[i] = trapezoid(&col_b, h);
        drift0_int[i] = trapezoid(&col_b0, h);
        comp_int[i] = trapezoid(&col_c, h);
    }

    // int (sigma(Y_s) - sigma(x)) dW_s as a left-point sum
    let mut stoch = vec![F::zero(); d];
    let mut sig = vec![F::zero(); d * d];
    for j in 0..m {
        let y = &ys[j * d..(j + 1) * d];
        model.diffusion(y, &mut sig);
        let dw = &dws[j * d..(j + 1) * d];
        for r in 0..d {
            for c in 0..d {
                stoch[r] = stoch[r] + (sig[r * d + c] - sigma_x[r * d + c]) * dw[c];
            }
        }
    }

    // compensated jump integral
    let mut jumps = vec![F::zero(); d];
    for jr in latent.jumps(k) {
        for i in 0..d {
            jumps[i] = jumps[i] + jr.applied[i];
        }
    }
    for i in 0..d {
        jumps[i] = jumps[i] - comp_int[i];
    }

    let r4 = delta * prec.inner(&dtheta, &drift_int);
    let r5 = delta * prec.inner(&dtheta, &stoch);
    let r6 = delta * prec.inner(&dtheta, &jumps);
    let z4 = delta * prec.inner(&dtheta, &drift0_int);

    let (r1, r2, r3) = match model.closed_form() {
        ClosedForm::Ou => {
            let sigma = model.constant_sigma().expect("built-in sigma");
            // (nabla Y_s)^{-1} d_theta b(Y_s) = -e^{theta (s - t_k)} Y_s
            let mut flow = vec![F::zero(); m + 1];
            let mut centred = vec![F::zero(); m + 1];
            for j in 0..=m {
                let s = h * F::from_usize_lossy(j);
                let e = (theta * s).exp() * ys[j];
                flow[j] = -e;
                centred[j] = ys[0] - e;
            }
            let mut w_int = F::zero();
            let mut dw_total = F::zero();
            for j in 0..m {
                let s = h * F::from_usize_lossy(j);
                w_int = w_int + ((-theta * s).exp() - F::one()) * dws[j];
                dw_total = dw_total + dws[j];
            }
            let r1 = -delta * delta / F::lit(2.0);
            let r2 = trapezoid(&flow, h) * w_int / sigma;
            let r3 = trapezoid(&centred, h) * dw_total / sigma;
            (Some(r1), Some(r2), Some(r3))
        }
        ClosedForm::Additive => (Some(F::zero()), Some(F::zero()), Some(F::zero())),
        ClosedForm::None => (None, None, None),
    };
    Ok(RemainderComponents { r1, r2, r3, r4, r5, r6, z4, z5: r5, z6: r6 })
}

/// Remainder terms for every interval of a fine path.
pub fn remainder_series<F: Real>(
    record: &ObservationRecord<F>,
    model: &JumpDiffusionModel<F>,
    theta: F,
) -> Result<Vec<RemainderComponents<F>>> {
    (0..record.n).map(|k| remainder_components(record, model, theta, k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMethod {
    ClosedForm,
    ErgodicAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub gamma: f64,
    pub method: FisherMethod,
    pub n_used: usize,
    pub horizon: f64,
}

/// Fisher information of the two closed-form models.
pub fn fisher_closed_form<F: Real>(model: &JumpDiffusionModel<F>, theta0: F) -> Result<FisherInfo> {
    let sigma = model
        .constant_sigma()
        .ok_or_else(|| Error::Unsupported("closed-form Fisher information needs a built-in model".into()))?
        .as_f64();
    let s2 = sigma * sigma;
    let gamma = match model.closed_form() {
        ClosedForm::Additive => 1.0 / s2,
        ClosedForm::Ou => {
            let th = theta0.as_f64();
            if !(th > 0.0) {
                return Err(Error::InvalidParameter(format!("Ornstein-Uhlenbeck Fisher information needs theta0 > 0, got {th}")));
            }
            let levy = model.levy();
            let jump = levy.intensity().as_f64() * levy.jump_second_moment().as_f64();
            (1.0 + jump / s2) / (2.0 * th)
        }
        ClosedForm::None => return Err(Error::Unsupported("no closed form for this model".into())),
    };
    Ok(FisherInfo { gamma, method: FisherMethod::ClosedForm, n_used: 0, horizon: f64::INFINITY })
}

/// `(1/n) sum_k d_theta b^T (sigma sigma^T)^{-1} d_theta b` along the observed path.
pub fn fisher_ergodic<F: Real>(record: &ObservationRecord<F>, model: &JumpDiffusionModel<F>, theta0: F) -> Result<FisherInfo> {
    let d = record.dim;
    let mut s = StateScratch::new(d);
    let mut acc = 0.0f64;
    for k in 0..record.n {
        let x = record.value(k);
        s.load(model, x, k)?;
        model.drift_theta_deriv(theta0, x, &mut s.a);
        acc += s.prec.inner(&s.a, &s.a).as_f64();
    }
    let n = record.n;
    Ok(FisherInfo {
        gamma: acc / n as f64,
        method: FisherMethod::ErgodicAverage,
        n_used: n,
        horizon: n as f64 * record.delta.as_f64(),
    })
}

/// Per-replication statistics. Absent entries were not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanSample {
    pub rep: usize,
    pub exact_llr: Option<f64>,
    pub quasi_llr: Option<f64>,
    pub main_term: Option<f64>,
    /// Sums over intervals of each remainder component.
    pub remainders: Option<RemainderComponents<f64>>,
    pub context: ParameterContext<f64>,
}

/// Sums a remainder series.
pub fn sum_remainders<F: Real>(series: &[RemainderComponents<F>]) -> RemainderComponents<f64> {
    let add_opt = |a: Option<f64>, b: Option<F>| Some(a? + b?.as_f64());
    series.iter().fold(
        RemainderComponents { r1: Some(0.0), r2: Some(0.0), r3: Some(0.0), ..Default::default() },
        |acc, c| RemainderComponents {
            r1: add_opt(acc.r1, c.r1),
            r2: add_opt(acc.r2, c.r2),
            r3: add_opt(acc.r3, c.r3),
            r4: acc.r4 + c.r4.as_f64(),
            r5: acc.r5 + c.r5.as_f64(),
            r6: acc.r6 + c.r6.as_f64(),
            z4: acc.z4 + c.z4.as_f64(),
            z5: acc.z5 + c.z5.as_f64(),
            z6: acc.z6 + c.z6.as_f64(),
        },
    )
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with columns `rep, exact_llr, quasi_llr, main_term, R1..R6, Z4..Z6`; absent values are empty.
pub fn write_lan_csv<W: Write>(samples: &[LanSample], mut w: W) -> io::Result<()> {
    writeln!(w, "rep,exact_llr,quasi_llr,main_term,R1,R2,R3,R4,R5,R6,Z4,Z5,Z6")?;
    for s in samples {
        write!(w, "{},{},{},{}", s.rep, opt(s.exact_llr), opt(s.quasi_llr), opt(s.main_term))?;
        match &s.remainders {
            Some(r) => writeln!(
                w,
                ",{},{},{},{},{},{},{},{},{}",
                opt(r.r1),
                opt(r.r2),
                opt(r.r3),
                r.r4,
                r.r5,
                r.r6,
                r.z4,
                r.z5,
                r.z6
            )?,
            None => writeln!(w, ",,,,,,,,,")?,
        }
    }
    Ok(())
}
