//! Small dense row-major matrix helpers for `d x d` diffusion matrices.
//!
//! State dimensions here are tiny (the built-in models have `d = 1`), so
//! everything works on caller-provided slices and never allocates on the
//! hot path.

use crate::scalar::Real;

pub fn norm<F: Real>(x: &[F]) -> F {
    x.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt()
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `out = a * x` for a row-major `d x d` matrix.
pub fn mat_vec<F: Real>(a: &[F], x: &[F], out: &mut [F]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate().take(d) {
        *o = dot(&a[i * d..(i + 1) * d], x);
    }
}

/// `out = a a^T`.
pub fn gram<F: Real>(a: &[F], d: usize, out: &mut [F]) {
    for i in 0..d {
        for j in 0..=i {
            let v = dot(&a[i * d..(i + 1) * d], &a[j * d..(j + 1) * d]);
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
}

/// In-place lower Cholesky factor. Returns `false` when `a` is not
/// numerically positive definite.
pub fn cholesky_in_place<F: Real>(a: &mut [F], d: usize) -> bool {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag = diag - a[j * d + k] * a[j * d + k];
        }
        if !(diag > F::zero()) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * d + j] = ljj;
        for i in (j + 1)..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s = s - a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / ljj;
        }
        for k in (j + 1)..d {
            a[j * d + k] = F::zero();
        }
    }
    true
}

/// Solves `L L^T x = b` in place given the Cholesky factor `l`.
pub fn cholesky_solve<F: Real>(l: &[F], d: usize, b: &mut [F]) {
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * d + k] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = b[i];
        for k in (i + 1)..d {
            s = s - l[k * d + i] * b[k];
        }
        b[i] = s / l[i * d + i];
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<F: Real>(a: &[F], d: usize) -> Vec<F> {
    let mut m = a.to_vec();
    let tol = F::epsilon() * F::lit(16.0);
    for _sweep in 0..64 {
        let mut off = F::zero();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off = off + m[i * d + j] * m[i * d + j];
                }
            }
        }
        let scale = (0..d).fold(F::zero(), |acc, i| acc + m[i * d + i] * m[i * d + i]);
        if off <= tol * tol * scale.max(F::min_positive_value()) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == F::zero() {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (F::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + F::one()).sqrt());
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<F> = (0..d).map(|i| m[i * d + i]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

/// Scratch space for evaluating `(sigma sigma^T)^{-1}` quadratic forms at a state.
#[derive(Debug, Clone)]
pub struct PrecisionScratch<F> {
    d: usize,
    sigma: Vec<F>,
    factor: Vec<F>,
    rhs: Vec<F>,
}

impl<F: Real> PrecisionScratch<F> {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            sigma: vec![F::zero(); d * d],
            factor: vec![F::zero(); d * d],
            rhs: vec![F::zero(); d],
        }
    }

    pub fn sigma_mut(&mut self) -> &mut [F] {
        &mut self.sigma
    }

    pub fn sigma(&self) -> &[F] {
        &self.sigma
    }

    /// Factorizes `sigma sigma^T` for the diffusion currently stored in
    /// [`Self::sigma_mut`]. Returns `false` if it is singular.
    pub fn factorize(&mut self) -> bool {
        gram(&self.sigma, self.d, &mut self.factor);
        cholesky_in_place(&mut self.factor, self.d)
    }

    /// `a^T (sigma sigma^T)^{-1} b` with the last factorization.
    pub fn inner(&mut self, a: &[F], b: &[F]) -> F {
        self.rhs.copy_from_slice(b);
        cholesky_solve(&self.factor, self.d, &mut self.rhs);
        dot(a, &self.rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let mut l = a;
        assert!(cholesky_in_place(&mut l, 2));
        let mut b = [2.0, 1.0];
        cholesky_solve(&l, 2, &mut b);
        // A^{-1} = 1/8 [3 -2; -2 4]
        assert_relative_eq!(b[0], (6.0 - 2.0) / 8.0, epsilon = 1e-14);
        assert_relative_eq!(b[1], (-4.0 + 4.0) / 8.0, epsilon = 1e-14);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let mut a = [1.0, 1.0, 1.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let e = symmetric_eigenvalues(&a, 3);
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(e[2], 5.0, epsilon = 1e-12);
    }
}
