//! Gauss–Legendre and Gauss–Hermite rules.
//!
//! Nodes are found by Newton iteration on the three-term recurrences in
//! `f64` and cast once into the working scalar.

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct GaussLegendre<F> {
    nodes: Vec<F>,
    weights: Vec<F>,
}

impl<F: Real> GaussLegendre<F> {
    /// `n`-point rule on `[-1, 1]`; exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self {
            nodes: nodes.into_iter().map(F::lit).collect(),
            weights: weights.into_iter().map(F::lit).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: F, b: F) -> impl Iterator<Item = (F, F)> + '_ {
        let half = (b - a) / F::lit(2.0);
        let mid = (a + b) / F::lit(2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<G: FnMut(F) -> F>(&self, a: F, b: F, mut f: G) -> F {
        self.mapped(a, b).fold(F::zero(), |acc, (x, w)| acc + w * f(x))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Physicists' Gauss–Hermite rule for `∫ g(x) e^{-x^2} dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite<F> {
    nodes: Vec<F>,
    weights: Vec<F>,
    // w_i * exp(x_i^2), formed in f64 before the cast
    unweighted: Vec<F>,
}

impl<F: Real> GaussHermite<F> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let pim4 = std::f64::consts::PI.powf(-0.25);
        // initial roots: eigenvalues of the Jacobi matrix, then Newton polish
        let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let mut nodes = tridiagonal_eigenvalues(vec![0.0; n], off);
        nodes.sort_by(f64::total_cmp);
        let mut weights = vec![0.0f64; n];
        for (z, w) in nodes.iter_mut().zip(weights.iter_mut()) {
            for _ in 0..20 {
                let (p, d) = hermite_normalized(n, *z, pim4);
                let step = p / d;
                *z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = hermite_normalized(n, *z, pim4);
            *w = 2.0 / (d * d);
        }
        // enforce exact symmetry
        for i in 0..n / 2 {
            let z = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[n - 1 - i]);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self {
            unweighted: nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| F::lit(w * (x * x).exp()))
                .collect(),
            nodes: nodes.into_iter().map(F::lit).collect(),
            weights: weights.into_iter().map(F::lit).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[g(Y)]` for `Y ~ N(mean, sd^2)`.
    pub fn expect_normal<G: FnMut(F) -> F>(&self, mean: F, sd: F, mut g: G) -> F {
        let scale = F::SQRT_2() * sd;
        let norm = F::one() / F::PI().sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold(F::zero(), |acc, (&x, &w)| acc + w * g(mean + scale * x))
            * norm
    }

    /// `∫ f(v) dv` with the rule centred at `center` with scale `sd`,
    /// i.e. the integrand is divided by the matching normal density.
    pub fn integrate_centered<G: FnMut(F) -> F>(&self, center: F, sd: F, mut f: G) -> F {
        let scale = F::SQRT_2() * sd;
        self.nodes
            .iter()
            .zip(&self.unweighted)
            .fold(F::zero(), |acc, (&x, &w)| acc + w * f(center + scale * x))
            * scale
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL iteration.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, off: Vec<f64>) -> Vec<f64> {
    let n = d.len();
    let mut e = off;
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

// Orthonormal Hermite recurrence: returns (p_n(x), p_n'(x)).
fn hermite_normalized(n: usize, x: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    let pp = (2.0 * n as f64).sqrt() * p2;
    (p1, pp)
}

/// Composite trapezoid rule over equally spaced samples.
pub fn trapezoid<F: Real>(values: &[F], step: F) -> F {
    match values.len() {
        0 | 1 => F::zero(),
        n => {
            let inner = values[1..n - 1].iter().fold(F::zero(), |a, &v| a + v);
            step * (inner + (values[0] + values[n - 1]) / F::lit(2.0))
        }
    }
}
