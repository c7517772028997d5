//! Real polynomials in `s`, stored with coefficients in descending powers.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Builds a polynomial from descending coefficients. Leading zeros are
    /// dropped; an empty or all-zero input gives the zero polynomial.
    pub fn new(coeffs: Vec<f64>) -> Self {
        let first = coeffs.iter().position(|&c| c != 0.0);
        match first {
            Some(i) => Poly {
                coeffs: coeffs[i..].to_vec(),
            },
            None => Poly::zero(),
        }
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// Monic linear factor `s + c`.
    pub fn linear(c: f64) -> Self {
        Poly {
            coeffs: vec![1.0, c],
        }
    }

    /// Monic quadratic factor `s^2 + b s + c`.
    pub fn quadratic(b: f64, c: f64) -> Self {
        Poly {
            coeffs: vec![1.0, b, c],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of `s^k`.
    pub fn coeff(&self, k: usize) -> f64 {
        let n = self.coeffs.len();
        if k >= n {
            0.0
        } else {
            self.coeffs[n - 1 - k]
        }
    }

    /// Horner evaluation in the complex plane.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Sum of `|c_k| |s|^k`, the scale against which a vanishing value is judged.
    pub fn eval_abs(&self, s: Complex64) -> f64 {
        let r = s.norm();
        self.coeffs.iter().fold(0.0, |acc, &c| acc * r + c.abs())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let out = (0..n)
            .rev()
            .map(|k| self.coeff(k) + other.coeff(k))
            .collect();
        Poly::new(out)
    }

    pub fn scale(&self, c: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&x| x * c).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    /// Roots through the eigenvalues of the companion matrix.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let n = self.degree();
        if self.is_zero() {
            return Err(Error::InvalidArgument(
                "roots of the zero polynomial".into(),
            ));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let lead = self.leading();
        let mut companion = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            companion[[0, j]] = -self.coeffs[j + 1] / lead;
        }
        for i in 1..n {
            companion[[i, i - 1]] = 1.0;
        }
        let mut roots: Vec<Complex64> = crate::la::eigvals_real(&companion)?;
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(roots)
    }
}

/// Product of quadratic factors `s^2 + p[2l] s + p[2l+1]`, times `s + p[last]`
/// when the parameter count is odd. Monic, degree `params.len()`.
pub fn factored(params: &[f64]) -> Poly {
    let mut out = Poly::constant(1.0);
    for pair in params.chunks_exact(2) {
        out = out.mul(&Poly::quadratic(pair[0], pair[1]));
    }
    if params.len() % 2 == 1 {
        out = out.mul(&Poly::linear(params[params.len() - 1]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factored_even_and_odd() {
        assert_eq!(factored(&[20.0, 0.0]).coeffs(), &[1.0, 20.0, 0.0]);
        assert_eq!(factored(&[3.0]).coeffs(), &[1.0, 3.0]);
        // (s^2 + s + 2)(s + 3) = s^3 + 4s^2 + 5s + 6
        assert_eq!(factored(&[1.0, 2.0, 3.0]).coeffs(), &[1.0, 4.0, 5.0, 6.0]);
        assert_eq!(factored(&[]).coeffs(), &[1.0]);
    }

    #[test]
    fn horner_matches_direct_sum() {
        let p = Poly::new(vec![2.0, -1.0, 0.5, 3.0]);
        let s = Complex64::new(0.3, -1.7);
        let direct = 2.0 * s * s * s - s * s + 0.5 * s + 3.0;
        assert!((p.eval(s) - direct).norm() < 1e-13);
    }

    #[test]
    fn leading_zeros_trimmed() {
        let p = Poly::new(vec![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(p.degree(), 1);
        assert!(Poly::new(vec![0.0, 0.0]).is_zero());
        assert_eq!(p.coeff(0), 2.0);
        assert_eq!(p.coeff(5), 0.0);
    }

    #[test]
    fn roots_of_quadratic() {
        let r = Poly::new(vec![1.0, 3.0, 2.0]).roots().unwrap();
        assert!((r[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn arithmetic() {
        let a = Poly::new(vec![1.0, 1.0]);
        let b = Poly::new(vec![1.0, -1.0]);
        assert_eq!(a.mul(&b).coeffs(), &[1.0, 0.0, -1.0]);
        assert_eq!(a.sub(&b).coeffs(), &[2.0]);
        assert!(a.sub(&a).is_zero());
    }
}
