//! Randomized checks of the regularity, ellipticity and jump hypotheses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::JumpDiffusionModel;
use crate::error::{Error, Result};
use crate::linalg::{gram, norm, symmetric_eigenvalues};
use crate::scalar::Real;

/// Per-coordinate sampling ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeBoxes<F> {
    pub theta: [F; 2],
    pub x: [F; 2],
    pub z: [F; 2],
    /// Jump sizes with `|z|` below this are redrawn.
    pub z_exclusion: F,
}

impl<F: Real> ProbeBoxes<F> {
    pub fn around(theta0: F) -> Self {
        let half = F::lit(0.5);
        Self {
            theta: [theta0 - half, theta0 + half],
            x: [F::lit(-5.0), F::lit(5.0)],
            z: [F::lit(-10.0), F::lit(10.0)],
            z_exclusion: F::lit(1e-3),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |b: &[F; 2]| b[0].is_finite() && b[1].is_finite() && b[0] <= b[1];
        if !ok(&self.theta) || !ok(&self.x) || !ok(&self.z) {
            return Err(Error::InvalidParameter("probe boxes must be finite with lo <= hi".into()));
        }
        let zmax = self.z[0].abs().max(self.z[1].abs());
        if !(zmax > self.z_exclusion) {
            return Err(Error::InvalidParameter("jump box lies inside the exclusion ball".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiPoint {
    pub v: f64,
    pub z: f64,
    pub derivative: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiGridReport {
    pub points: Vec<PsiPoint>,
    pub failures: usize,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub samples: usize,
    /// Largest finite-difference ratio `|b(theta,x) - b(theta,y)| / |x - y|`.
    pub drift_lipschitz: f64,
    /// Same for `sigma` in the Frobenius norm.
    pub diffusion_lipschitz: f64,
    /// Largest `|b(theta,x)| / (1 + |x|)`.
    pub drift_growth: f64,
    pub min_ellipticity_eigenvalue: f64,
    pub max_ellipticity_eigenvalue: f64,
    pub max_diffusion_norm: f64,
    /// Smallest `|c(x,z)| / |z|`.
    pub min_jump_ratio: f64,
    /// Largest `|c(x, 0)|`.
    pub max_jump_at_zero: f64,
    /// Present only for scalar models with `c(x, z) = z`.
    pub psi: Option<PsiGridReport>,
    pub failures: Vec<ProbeFailure>,
}

/// Lower and upper bounds on the derivative of the jump map in the bounded chart.
pub fn psi_derivative_bounds(z: f64) -> (f64, f64) {
    let s = (z * z + 4.0).sqrt() + z.abs();
    (8.0 / (s * s * s), s * s * s / 8.0)
}

fn sample_box<F: Real, R: Rng + ?Sized>(rng: &mut R, b: &[F; 2]) -> F {
    b[0] + (b[1] - b[0]) * F::unit_uniform(rng)
}

pub fn probe_assumptions<F: Real, R: Rng + ?Sized>(
    model: &JumpDiffusionModel<F>,
    boxes: &ProbeBoxes<F>,
    sample_count: usize,
    rng: &mut R,
) -> Result<ProbeReport> {
    boxes.validate()?;
    if sample_count < 2 {
        return Err(Error::InvalidParameter("probe needs at least two samples".into()));
    }
    let d = model.dim();
    let mut failures = Vec::new();
    let mut fail = |check: &str, detail: String| {
        if failures.len() < 64 {
            failures.push(ProbeFailure { check: check.to_string(), detail });
        }
    };

    let mut x = vec![F::zero(); d];
    let mut y = vec![F::zero(); d];
    let mut z = vec![F::zero(); d];
    let zero = vec![F::zero(); d];
    let mut bx = vec![F::zero(); d];
    let mut by = vec![F::zero(); d];
    let mut sx = vec![F::zero(); d * d];
    let mut sy = vec![F::zero(); d * d];
    let mut a = vec![F::zero(); d * d];
    let mut c = vec![F::zero(); d];

    let mut drift_lip = 0.0f64;
    let mut diff_lip = 0.0f64;
    let mut growth = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut max_eig = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    let mut max_at_zero = 0.0f64;
    let mut jump_is_identity = d == 1;

    let all_finite = |v: &[F]| v.iter().all(|t| t.is_finite());

    for s in 0..sample_count {
        let theta = sample_box(rng, &boxes.theta);
        for i in 0..d {
            x[i] = sample_box(rng, &boxes.x);
            y[i] = sample_box(rng, &boxes.x);
            z[i] = sample_box(rng, &boxes.z);
        }
        while norm(&z) < boxes.z_exclusion {
            for zi in z.iter_mut() {
                *zi = sample_box(rng, &boxes.z);
            }
        }

        model.drift(theta, &x, &mut bx);
        model.drift(theta, &y, &mut by);
        if !all_finite(&bx) || !all_finite(&by) {
            fail("drift", format!("non-finite drift at sample {s}"));
            continue;
        }
        let dxy: Vec<F> = x.iter().zip(&y).map(|(p, q)| *p - *q).collect();
        let dist = norm(&dxy).as_f64();
        if dist > 0.0 {
            let db: Vec<F> = bx.iter().zip(&by).map(|(p, q)| *p - *q).collect();
            drift_lip = drift_lip.max(norm(&db).as_f64() / dist);
        }
        growth = growth.max(norm(&bx).as_f64() / (1.0 + norm(&x).as_f64()));

        model.diffusion(&x, &mut sx);
        model.diffusion(&y, &mut sy);
        if !all_finite(&sx) || !all_finite(&sy) {
            fail("diffusion", format!("non-finite diffusion at sample {s}"));
            continue;
        }
        if dist > 0.0 {
            let ds: Vec<F> = sx.iter().zip(&sy).map(|(p, q)| *p - *q).collect();
            diff_lip = diff_lip.max(norm(&ds).as_f64() / dist);
        }
        gram(&sx, d, &mut a);
        let eig = symmetric_eigenvalues(&a, d);
        let (lo, hi) = (eig[0].as_f64(), eig[d - 1].as_f64());
        if lo <= 0.0 {
            fail("ellipticity", format!("sigma sigma^T has eigenvalue {lo} at sample {s}"));
        }
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);

        model.jump_coeff(&x, &z, &mut c);
        if !all_finite(&c) {
            fail("jump", format!("non-finite jump coefficient at sample {s}"));
            continue;
        }
        min_ratio = min_ratio.min(norm(&c).as_f64() / norm(&z).as_f64());
        if jump_is_identity && c[0] != z[0] {
            jump_is_identity = false;
        }
        model.jump_coeff(&x, &zero, &mut c);
        let c0 = norm(&c).as_f64();
        if !c0.is_finite() || c0 != 0.0 {
            fail("jump", format!("c(x, 0) = {c0} at sample {s}"));
        }
        max_at_zero = max_at_zero.max(c0);
    }

    let psi = jump_is_identity.then(psi_grid);

    Ok(ProbeReport {
        samples: sample_count,
        drift_lipschitz: drift_lip,
        diffusion_lipschitz: diff_lip,
        drift_growth: growth,
        min_ellipticity_eigenvalue: min_eig,
        max_ellipticity_eigenvalue: max_eig,
        max_diffusion_norm: max_eig.sqrt(),
        min_jump_ratio: min_ratio,
        max_jump_at_zero: max_at_zero,
        psi,
        failures,
    })
}

fn chart(x: f64) -> f64 {
    x / (1.0 + x * x).sqrt()
}

fn chart_inverse(v: f64) -> f64 {
    v / (1.0 - v * v).sqrt()
}

/// Centred finite differences of `v -> f(f^{-1}(v) + z)` on the fixed grid
/// `v = -0.99..0.99` (step 0.01), `z = -10..10` (step 0.5).
fn psi_grid() -> PsiGridReport {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-6;
    let psi = |v: f64, z: f64| chart(chart_inverse(v) + z);
    let mut points = Vec::with_capacity(199 * 41);
    for zi in -20..=20 {
        let z = zi as f64 * 0.5;
        let (lower, upper) = psi_derivative_bounds(z);
        for vi in -99..=99 {
            let v = vi as f64 * 0.01;
            let derivative = (psi(v + H, z) - psi(v - H, z)) / (2.0 * H);
            let pass = derivative >= lower * (1.0 - TOL) && derivative <= upper * (1.0 + TOL);
            points.push(PsiPoint { v, z, derivative, lower, upper, pass });
        }
    }
    let failures = points.iter().filter(|p| !p.pass).count();
    PsiGridReport { points, failures, all_pass: failures == 0 }
}
