//! Grid observations of a jump-diffusion with exact compound-Poisson jumps.

use std::io::{self, Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClosedForm, JumpDiffusionModel, ParameterContext};
use crate::rng::StreamKey;
use crate::scalar::Real;
use crate::stats::Moments;

/// Sub-steps per interval of the retained fine path.
pub const FINE_SUBSTEPS: usize = 64;

pub const DEFAULT_EULER_SUBSTEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    ExactClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationScheme {
    pub method: Method,
    pub substeps: usize,
    pub key: StreamKey,
}

impl SimulationScheme {
    pub fn euler(key: StreamKey) -> Self {
        Self { method: Method::Euler, substeps: DEFAULT_EULER_SUBSTEPS, key }
    }

    pub fn exact(key: StreamKey) -> Self {
        Self { method: Method::ExactClosedForm, substeps: 1, key }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    None,
    /// Per-interval Brownian increments and the jump events.
    Increments,
    /// Increments plus a fine path of [`FINE_SUBSTEPS`] sub-steps per interval.
    FinePath,
}

/// Latent randomness of a simulated path, stored flat.
///
/// Jump times are offsets in `(0, delta)` from the start of their interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<F> {
    pub dim: usize,
    /// `n * d` aggregated Brownian increments.
    pub brownian: Vec<F>,
    /// `jump_offsets[k]..jump_offsets[k + 1]` indexes the events of interval `k`.
    pub jump_offsets: Vec<usize>,
    pub jump_times: Vec<F>,
    pub jump_sizes: Vec<F>,
    pub jump_applied: Vec<F>,
    /// Sub-steps per interval of the fine path, 0 when absent.
    pub fine_substeps: usize,
    /// `n * (m + 1) * d` values, both interval endpoints included.
    pub fine_values: Vec<F>,
    /// `n * m * d` Brownian increments over the fine sub-steps.
    pub fine_dw: Vec<F>,
}

#[derive(Debug, Clone, Copy)]
pub struct JumpRef<'a, F> {
    pub time: F,
    pub z: &'a [F],
    pub applied: &'a [F],
}

impl<F: Real> Latent<F> {
    fn new(dim: usize, n: usize, fine_substeps: usize) -> Self {
        let mut jump_offsets = Vec::with_capacity(n + 1);
        jump_offsets.push(0);
        Self {
            dim,
            brownian: Vec::with_capacity(n * dim),
            jump_offsets,
            jump_times: Vec::new(),
            jump_sizes: Vec::new(),
            jump_applied: Vec::new(),
            fine_substeps,
            fine_values: Vec::with_capacity(n * (fine_substeps + 1) * dim * usize::from(fine_substeps > 0)),
            fine_dw: Vec::with_capacity(n * fine_substeps * dim),
        }
    }

    pub fn intervals(&self) -> usize {
        self.jump_offsets.len() - 1
    }

    pub fn brownian(&self, k: usize) -> &[F] {
        &self.brownian[k * self.dim..(k + 1) * self.dim]
    }

    pub fn jump_count(&self, k: usize) -> usize {
        self.jump_offsets[k + 1] - self.jump_offsets[k]
    }

    pub fn jumps(&self, k: usize) -> impl Iterator<Item = JumpRef<'_, F>> + '_ {
        let d = self.dim;
        (self.jump_offsets[k]..self.jump_offsets[k + 1]).map(move |j| JumpRef {
            time: self.jump_times[j],
            z: &self.jump_sizes[j * d..(j + 1) * d],
            applied: &self.jump_applied[j * d..(j + 1) * d],
        })
    }

    pub fn has_fine_path(&self) -> bool {
        self.fine_substeps > 0
    }

    /// Fine values of interval `k`, `(m + 1) * d` entries.
    pub fn fine_values(&self, k: usize) -> &[F] {
        let w = (self.fine_substeps + 1) * self.dim;
        &self.fine_values[k * w..(k + 1) * w]
    }

    /// Fine Brownian increments of interval `k`, `m * d` entries.
    pub fn fine_dw(&self, k: usize) -> &[F] {
        let w = self.fine_substeps * self.dim;
        &self.fine_dw[k * w..(k + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord<F> {
    pub dim: usize,
    pub n: usize,
    pub delta: F,
    /// Parameter the path was simulated under.
    pub theta: F,
    /// `(n + 1) * d` observations; the first block is `x0`.
    pub values: Vec<F>,
    pub latent: Option<Latent<F>>,
}

impl<F: Real> ObservationRecord<F> {
    /// A record built from observed data alone.
    pub fn from_values(dim: usize, delta: F, theta: F, values: Vec<F>) -> Result<Self> {
        if dim == 0 || values.len() < 2 * dim || values.len() % dim != 0 {
            return Err(Error::InvalidParameter("need at least two observations of the stated dimension".into()));
        }
        if !(delta > F::zero()) {
            return Err(Error::InvalidParameter("observation step must be positive".into()));
        }
        let n = values.len() / dim - 1;
        Ok(Self { dim, n, delta, theta, values, latent: None })
    }

    pub fn x0(&self) -> &[F] {
        &self.values[..self.dim]
    }

    pub fn value(&self, k: usize) -> &[F] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Observed increment `X_{t_{k+1}} - X_{t_k}` written into `out`.
    pub fn increment(&self, k: usize, out: &mut [F]) {
        let d = self.dim;
        for i in 0..d {
            out[i] = self.values[(k + 1) * d + i] - self.values[k * d + i];
        }
    }

    /// CSV with columns `k, t, x_1..x_d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "k,t")?;
        for i in 1..=self.dim {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        for k in 0..=self.n {
            write!(w, "{},{}", k, (F::from_usize_lossy(k) * self.delta).as_f64())?;
            for v in self.value(k) {
                write!(w, ",{}", v.as_f64())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

struct Workspace<F> {
    drift: Vec<F>,
    comp: Vec<F>,
    sigma: Vec<F>,
    noise: Vec<F>,
    jump: Vec<F>,
    z: Vec<F>,
}

impl<F: Real> Workspace<F> {
    fn new(d: usize) -> Self {
        Self {
            drift: vec![F::zero(); d],
            comp: vec![F::zero(); d],
            sigma: vec![F::zero(); d * d],
            noise: vec![F::zero(); d],
            jump: vec![F::zero(); d],
            z: vec![F::zero(); d],
        }
    }
}

/// How a continuous piece between event times is advanced.
#[derive(Clone, Copy)]
enum PieceRule<F> {
    Euler,
    /// Constant coefficients: Euler is exact.
    AdditiveExact,
    /// Exact Ornstein-Uhlenbeck flow with rate `theta`.
    OuExact { theta: F, sigma: F, comp: F },
}

pub(crate) fn draw_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("finite positive Poisson mean");
    p.sample(rng) as usize
}

/// Draws the jump count and sorted jump offsets in `(0, delta)`.
fn draw_jump_times<F: Real, R: Rng + ?Sized>(rng: &mut R, intensity: F, delta: F, times: &mut Vec<F>) {
    times.clear();
    let k = draw_poisson(rng, (intensity * delta).as_f64());
    for _ in 0..k {
        let t = loop {
            let t = F::unit_uniform(rng) * delta;
            if t > F::zero() && t < delta {
                break t;
            }
        };
        times.push(t);
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite jump times"));
}

/// Advances `x` over a piece of length `h`, adding the Brownian increment to `dw_acc`.
fn advance_piece<F: Real, R: Rng + ?Sized>(
    model: &JumpDiffusionModel<F>,
    theta: F,
    rule: PieceRule<F>,
    x: &mut [F],
    h: F,
    rng: &mut R,
    ws: &mut Workspace<F>,
    dw_acc: &mut [F],
) {
    let d = x.len();
    match rule {
        PieceRule::Euler | PieceRule::AdditiveExact => {
            let sh = h.sqrt();
            for i in 0..d {
                ws.noise[i] = sh * F::standard_normal(rng);
                dw_acc[i] = dw_acc[i] + ws.noise[i];
            }
            model.drift(theta, x, &mut ws.drift);
            model.jump_compensator(x, &mut ws.comp);
            model.diffusion(x, &mut ws.sigma);
            for i in 0..d {
                let mut s = F::zero();
                for j in 0..d {
                    s = s + ws.sigma[i * d + j] * ws.noise[j];
                }
                x[i] = x[i] + (ws.drift[i] - ws.comp[i]) * h + s;
            }
        }
        PieceRule::OuExact { theta: rate, sigma, comp } => {
            let (dw, integral) = ou_joint_increment(rng, rate, h);
            dw_acc[0] = dw_acc[0] + dw;
            let decay = (-rate * h).exp();
            x[0] = decay * x[0] + sigma * integral - comp * (F::one() - decay) / rate;
        }
    }
}

/// Jointly Gaussian `(B_h, int_0^h e^{-theta (h - s)} dB_s)`. Both normals are
/// always drawn so the stream position does not depend on parameters.
fn ou_joint_increment<F: Real, R: Rng + ?Sized>(rng: &mut R, theta: F, h: F) -> (F, F) {
    let g1 = F::standard_normal(rng);
    let g2 = F::standard_normal(rng);
    let (var_i, cov) = ou_moments(theta, h);
    let sd_b = h.sqrt();
    let beta = cov / h;
    let resid = (var_i - beta * cov).max(F::zero()).sqrt();
    let dw = sd_b * g1;
    (dw, beta * dw + resid * g2)
}

/// `Var(int e^{-theta(h-s)} dB)` and `Cov(B_h, int e^{-theta(h-s)} dB)`.
fn ou_moments<F: Real>(theta: F, h: F) -> (F, F) {
    let two = F::lit(2.0);
    let var_i = -(-two * theta * h).exp_m1() / (two * theta);
    let cov = -(-theta * h).exp_m1() / theta;
    (var_i, cov)
}

fn piece_rule<F: Real>(model: &JumpDiffusionModel<F>, theta: F, method: Method) -> Result<PieceRule<F>> {
    match method {
        Method::Euler => Ok(PieceRule::Euler),
        Method::ExactClosedForm => match model.closed_form() {
            ClosedForm::None => Err(Error::InvalidParameter("exact scheme needs a closed-form model".into())),
            ClosedForm::Additive => Ok(PieceRule::AdditiveExact),
            ClosedForm::Ou => {
                if !(theta > F::zero()) {
                    return Err(Error::InvalidParameter(format!(
                        "exact Ornstein-Uhlenbeck transitions need theta > 0, got {theta}"
                    )));
                }
                Ok(PieceRule::OuExact {
                    theta,
                    sigma: model.constant_sigma().expect("built-in sigma"),
                    comp: model.constant_compensator().expect("built-in compensator"),
                })
            }
        },
    }
}

/// Simulates `X_{t_0}, ..., X_{t_n}` on `t_k = k delta` under parameter `theta`.
///
/// Interval `k` draws from `scheme.key.interval(k)`: jump count, jump
/// offsets, jump sizes, then Gaussian pieces in time order.
pub fn simulate_grid<F: Real>(
    model: &JumpDiffusionModel<F>,
    theta: F,
    x0: &[F],
    ctx: &ParameterContext<F>,
    scheme: &SimulationScheme,
    retention: Retention,
) -> Result<ObservationRecord<F>> {
    let d = model.dim();
    if x0.len() != d {
        return Err(Error::InvalidParameter(format!("initial state has length {}, expected {d}", x0.len())));
    }
    if scheme.substeps == 0 {
        return Err(Error::InvalidParameter("substeps must be at least 1".into()));
    }
    if !theta.is_finite() {
        return Err(Error::InvalidParameter("theta must be finite".into()));
    }
    let rule = piece_rule(model, theta, scheme.method)?;
    let n = ctx.n;
    let delta = ctx.delta;
    let m = match retention {
        Retention::FinePath => FINE_SUBSTEPS,
        _ => match scheme.method {
            Method::Euler => scheme.substeps,
            Method::ExactClosedForm => 1,
        },
    };
    let keep_fine = retention == Retention::FinePath;
    let mut latent = (retention != Retention::None).then(|| Latent::new(d, n, if keep_fine { m } else { 0 }));

    let mut values = Vec::with_capacity((n + 1) * d);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut ws = Workspace::new(d);
    let mut times = Vec::new();
    let mut sizes: Vec<F> = Vec::new();
    let mut dw_total = vec![F::zero(); d];
    let mut dw_sub = vec![F::zero(); d];
    let h = delta / F::from_usize_lossy(m);
    let intensity = model.levy().intensity();

    for k in 0..n {
        let mut rng = scheme.key.interval(k);
        draw_jump_times(&mut rng, intensity, delta, &mut times);
        sizes.clear();
        for _ in 0..times.len() {
            model.levy().sample_jump(&mut rng, &mut ws.z);
            sizes.extend_from_slice(&ws.z);
        }
        dw_total.iter_mut().for_each(|v| *v = F::zero());
        if let (Some(l), true) = (latent.as_mut(), keep_fine) {
            l.fine_values.extend_from_slice(&x);
        }

        let mut next_jump = 0;
        let mut t = F::zero();
        for j in 1..=m {
            let sub_end = if j == m { delta } else { h * F::from_usize_lossy(j) };
            dw_sub.iter_mut().for_each(|v| *v = F::zero());
            while next_jump < times.len() && times[next_jump] < sub_end {
                let tau = times[next_jump];
                if tau > t {
                    advance_piece(model, theta, rule, &mut x, tau - t, &mut rng, &mut ws, &mut dw_sub);
                    t = tau;
                }
                let z = &sizes[next_jump * d..(next_jump + 1) * d];
                model.jump_coeff(&x, z, &mut ws.jump);
                for i in 0..d {
                    x[i] = x[i] + ws.jump[i];
                }
                if let Some(l) = latent.as_mut() {
                    l.jump_times.push(tau);
                    l.jump_sizes.extend_from_slice(z);
                    l.jump_applied.extend_from_slice(&ws.jump);
                }
                next_jump += 1;
            }
            if sub_end > t {
                advance_piece(model, theta, rule, &mut x, sub_end - t, &mut rng, &mut ws, &mut dw_sub);
                t = sub_end;
            }
            for i in 0..d {
                dw_total[i] = dw_total[i] + dw_sub[i];
            }
            if let (Some(l), true) = (latent.as_mut(), keep_fine) {
                l.fine_values.extend_from_slice(&x);
                l.fine_dw.extend_from_slice(&dw_sub);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged { step: k });
        }
        values.extend_from_slice(&x);
        if let Some(l) = latent.as_mut() {
            l.brownian.extend_from_slice(&dw_total);
            l.jump_offsets.push(l.jump_times.len());
        }
    }

    Ok(ObservationRecord { dim: d, n, delta, theta, values, latent })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorReport {
    pub replications: usize,
    pub substeps: usize,
    pub mean_euler: f64,
    pub mean_exact: f64,
    /// `E[X_euler - X_exact]` on coupled paths.
    pub mean_discrepancy: f64,
    pub mean_discrepancy_se: f64,
    pub var_euler: f64,
    pub var_exact: f64,
    pub var_discrepancy: f64,
    /// Delta-method standard error of the variance difference on coupled paths.
    pub var_discrepancy_se: f64,
}

impl WeakErrorReport {
    /// 95% interval for the mean discrepancy.
    pub fn mean_interval(&self) -> (f64, f64) {
        let h = 1.96 * self.mean_discrepancy_se;
        (self.mean_discrepancy - h, self.mean_discrepancy + h)
    }
}

/// Compares Euler and exact transitions over one interval from `x0`.
///
/// Both schemes see the same jumps and the same Brownian increments on the
/// Euler pieces; the exact scheme draws its extra Gaussian component
/// conditionally on those increments, so the coupling is exact in law for
/// each scheme separately.
pub fn euler_vs_exact_check<F: Real>(
    model: &JumpDiffusionModel<F>,
    theta: F,
    x0: F,
    ctx: &ParameterContext<F>,
    substeps: usize,
    replications: usize,
    key: StreamKey,
) -> Result<WeakErrorReport> {
    if model.dim() != 1 || model.closed_form() == ClosedForm::None {
        return Err(Error::Precondition("weak-error check needs a scalar closed-form model".into()));
    }
    if substeps == 0 || replications < 2 {
        return Err(Error::InvalidParameter("need substeps >= 1 and at least two replications".into()));
    }
    piece_rule(model, theta, Method::ExactClosedForm)?;
    let sigma = model.constant_sigma().expect("built-in sigma");
    let comp = model.constant_compensator().expect("built-in compensator");
    let is_ou = model.closed_form() == ClosedForm::Ou;
    let delta = ctx.delta;
    let h = delta / F::from_usize_lossy(substeps);

    use rayon::prelude::*;
    let pairs: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = StreamKey::new(key.seed, key.replication.wrapping_add(r as u64)).interval(0);
            let mut times = Vec::new();
            draw_jump_times(&mut rng, model.levy().intensity(), delta, &mut times);
            let mut z = [F::zero()];
            let sizes: Vec<F> = times
                .iter()
                .map(|_| {
                    model.levy().sample_jump(&mut rng, &mut z);
                    z[0]
                })
                .collect();
            // piece boundaries: sub-grid points and jump times
            let mut cuts: Vec<(F, Option<F>)> =
                (1..=substeps).map(|j| (if j == substeps { delta } else { h * F::from_usize_lossy(j) }, None)).collect();
            cuts.extend(times.iter().zip(&sizes).map(|(t, s)| (*t, Some(*s))));
            cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.is_none().cmp(&b.1.is_none()).reverse()));

            let mut xe = x0;
            let mut xx = x0;
            let mut t = F::zero();
            for (c, jump) in cuts {
                let len = c - t;
                if len > F::zero() {
                    let g1 = F::standard_normal(&mut rng);
                    let g2 = F::standard_normal(&mut rng);
                    let dw = len.sqrt() * g1;
                    let mut b = [F::zero()];
                    model.drift(theta, &[xe], &mut b);
                    xe = xe + (b[0] - comp) * len + sigma * dw;
                    if is_ou {
                        let (var_i, cov) = ou_moments(theta, len);
                        let beta = cov / len;
                        let integral = beta * dw + (var_i - beta * cov).max(F::zero()).sqrt() * g2;
                        let decay = (-theta * len).exp();
                        xx = decay * xx + sigma * integral - comp * (F::one() - decay) / theta;
                    } else {
                        xx = xx + (theta - comp) * len + sigma * dw;
                    }
                    t = c;
                }
                if let Some(s) = jump {
                    xe = xe + s;
                    xx = xx + s;
                }
            }
            (xe.as_f64(), xx.as_f64())
        })
        .collect();

    let eu: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ex: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let me = Moments::of(&eu);
    let mx = Moments::of(&ex);
    let md = Moments::of(&diff);
    // variance difference as the mean of (a - ma)^2 - (b - mb)^2
    let sq: Vec<f64> = pairs.iter().map(|p| (p.0 - me.mean).powi(2) - (p.1 - mx.mean).powi(2)).collect();
    let msq = Moments::of(&sq);
    Ok(WeakErrorReport {
        replications,
        substeps,
        mean_euler: me.mean,
        mean_exact: mx.mean,
        mean_discrepancy: md.mean,
        mean_discrepancy_se: md.std_error(),
        var_euler: me.var,
        var_exact: mx.var,
        var_discrepancy: me.var - mx.var,
        var_discrepancy_se: msq.std_error(),
    })
}

const SIDECAR_MAGIC: &[u8; 8] = b"LANLAT01";

/// Header of the binary latent sidecar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidecarHeader {
    pub dim: u32,
    pub n: u64,
    pub delta: f64,
    pub fine_substeps: u32,
}

/// Writes the latent data of `record` in little-endian layout:
///
/// ```text
/// magic "LANLAT01" | d: u32 | n: u64 | delta: f64 | m: u32
/// per interval k:
///   dB[d]: f64 | jumps: u32 | per jump: offset f64, z[d] f64, applied[d] f64
///   if m > 0: values[(m + 1) d] f64, dW[m d] f64
/// ```
pub fn write_latent_sidecar<F: Real, W: Write>(record: &ObservationRecord<F>, mut w: W) -> Result<()> {
    let latent = record
        .latent
        .as_ref()
        .ok_or_else(|| Error::Precondition("record carries no latent data".into()))?;
    let io = |e: io::Error| Error::InvalidParameter(format!("sidecar write failed: {e}"));
    let mut buf = Vec::new();
    buf.extend_from_slice(SIDECAR_MAGIC);
    buf.extend_from_slice(&(record.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(record.n as u64).to_le_bytes());
    buf.extend_from_slice(&record.delta.as_f64().to_le_bytes());
    buf.extend_from_slice(&(latent.fine_substeps as u32).to_le_bytes());
    let put = |buf: &mut Vec<u8>, xs: &[F]| {
        for x in xs {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    };
    for k in 0..record.n {
        put(&mut buf, latent.brownian(k));
        buf.extend_from_slice(&(latent.jump_count(k) as u32).to_le_bytes());
        for j in latent.jumps(k) {
            put(&mut buf, &[j.time]);
            put(&mut buf, j.z);
            put(&mut buf, j.applied);
        }
        if latent.has_fine_path() {
            put(&mut buf, latent.fine_values(k));
            put(&mut buf, latent.fine_dw(k));
        }
    }
    w.write_all(&buf).map_err(io)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or_else(|| Error::InvalidParameter("sidecar truncated".into()))?;
        self.pos += N;
        Ok(s.try_into().expect("slice of length N"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn floats(&mut self, count: usize, out: &mut Vec<f64>) -> Result<()> {
        for _ in 0..count {
            out.push(f64::from_le_bytes(self.take()?));
        }
        Ok(())
    }
}

pub fn read_latent_sidecar<R: Read>(mut r: R) -> Result<(SidecarHeader, Latent<f64>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::InvalidParameter(format!("sidecar read failed: {e}")))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if &c.take::<8>()? != SIDECAR_MAGIC {
        return Err(Error::InvalidParameter("not a latent sidecar".into()));
    }
    let dim = c.u32()?;
    let n = c.u64()?;
    let delta = f64::from_le_bytes(c.take()?);
    let m = c.u32()?;
    let header = SidecarHeader { dim, n, delta, fine_substeps: m };
    let (d, m) = (dim as usize, m as usize);
    if d == 0 {
        return Err(Error::InvalidParameter("sidecar dimension is zero".into()));
    }
    let mut latent = Latent::<f64>::new(d, 0, m);
    for _ in 0..n {
        c.floats(d, &mut latent.brownian)?;
        let count = c.u32()? as usize;
        for _ in 0..count {
            c.floats(1, &mut latent.jump_times)?;
            c.floats(d, &mut latent.jump_sizes)?;
            c.floats(d, &mut latent.jump_applied)?;
        }
        latent.jump_offsets.push(latent.jump_times.len());
        if m > 0 {
            c.floats((m + 1) * d, &mut latent.fine_values)?;
            c.floats(m * d, &mut latent.fine_dw)?;
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::InvalidParameter("trailing bytes after sidecar".into()));
    }
    Ok((header, latent))
}
