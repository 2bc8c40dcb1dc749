//! Summary statistics and reference distributions used by the experiments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Exponential integral `E1(x) = int_x^inf e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if !(x > 0.0) {
        return if x == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    if x <= 1.0 {
        let mut sum = 0.0f64;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { count: 0, mean: f64::NAN, var: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self { count: n, mean, var }
    }

    pub fn std_error(&self) -> f64 {
        (self.var / self.count as f64).sqrt()
    }

    /// Standard error of the sample variance under a Gaussian law.
    pub fn var_std_error(&self) -> f64 {
        self.var * (2.0 / (self.count as f64 - 1.0)).sqrt()
    }
}

/// Kolmogorov-Smirnov distance between the empirical law of `xs` and `N(mean, var)`.
pub fn ks_distance_normal(xs: &[f64], mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    ks_distance(xs, |x| normal_cdf((x - mean) / sd))
}

pub fn ks_distance<C: Fn(f64) -> f64>(xs: &[f64], cdf: C) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |acc, (i, &x)| {
        let f = cdf(x);
        acc.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic Kolmogorov p-value for distance `d` with `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    let lam = (en + 0.12 + 0.11 / en) * d;
    if lam < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lam * lam).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Interval {
    let n = trials as f64;
    if trials == 0 {
        return Interval { estimate: f64::NAN, lower: 0.0, upper: 1.0 };
    }
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval { estimate: p, lower: (centre - half).max(0.0), upper: (centre + half).min(1.0) }
}

/// Upper tail of the chi-square law.
pub fn chi_square_sf(stat: f64, dof: f64) -> f64 {
    ChiSquared::new(dof).expect("positive degrees of freedom").sf(stat)
}

/// Pearson statistic over bins with expected counts; bins with tiny
/// expectation are merged into their neighbour first.
pub fn chi_square_test(observed: &[f64], expected: &[f64], min_expected: f64) -> (f64, usize, f64) {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
            *o += o_acc;
            *e += e_acc;
        } else {
            obs.push(o_acc);
            exp.push(e_acc);
        }
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = obs.len().saturating_sub(1).max(1);
    (stat, dof, chi_square_sf(stat, dof as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

/// Ordinary least squares `y = a + b x` with the standard error of `b`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> SlopeFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    SlopeFit { slope, intercept, slope_std_error: se }
}

/// Weighted least squares with weights `w` (inverse variances); the slope
/// standard error comes from the weights alone.
pub fn wls_slope(x: &[f64], y: &[f64], w: &[f64]) -> SlopeFit {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, w)| w * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, b), w)| w * (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    SlopeFit { slope, intercept: my - slope * mx, slope_std_error: (1.0 / sxx).sqrt() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// One-sided p-value for `E[a - b] > 0`.
    pub p_value: f64,
}

/// Paired one-sided t-test of `E[a] > E[b]`.
pub fn paired_t_test_greater(a: &[f64], b: &[f64]) -> PairedTest {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = Moments::of(&diffs);
    let t = m.mean / m.std_error();
    let dof = (m.count as f64 - 1.0).max(1.0);
    let p = StudentsT::new(0.0, 1.0, dof).expect("valid t law").sf(t);
    PairedTest { mean_difference: m.mean, t_statistic: t, p_value: p }
}

/// `P(N = k)` for `N ~ Poisson(mu)`.
pub fn poisson_pmf(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * mu.ln() - mu - statrs::function::gamma::ln_gamma(kf + 1.0)).exp()
}

/// `P(N > k)` summed directly so that tiny tails keep their relative accuracy.
pub fn poisson_tail_above(mu: f64, k: usize) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    if mu > k as f64 {
        let below: f64 = (0..=k).map(|j| poisson_pmf(mu, j)).sum();
        return (1.0 - below).max(0.0);
    }
    let mut j = k + 1;
    let mut term = poisson_pmf(mu, j);
    let mut sum = 0.0f64;
    while term > 0.0 && term > 1e-20 * sum.max(f64::MIN_POSITIVE) {
        sum += term;
        j += 1;
        term *= mu / j as f64;
    }
    sum
}

/// Smallest `i` with `P(N > i) < tol`.
pub fn poisson_truncation(mu: f64, tol: f64) -> usize {
    let mut i = 0;
    while poisson_tail_above(mu, i) >= tol {
        i += 1;
    }
    i
}
