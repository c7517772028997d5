//! Small dense helpers shared by the numerical modules.
//!
//! The matrices handled per frequency are tiny (a handful of rows), so the
//! complex LU here avoids dispatch overhead in the hot loops. Anything
//! sized by the data set (Loewner pencils, Hamiltonians) goes through `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef};
use ndarray::{s, Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) type C = Complex64;

pub(crate) fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub(crate) fn to_complex(a: &Array2<f64>) -> Array2<C> {
    a.mapv(|x| c(x, 0.0))
}

/// In-place LU factorization with partial pivoting of a square complex matrix.
pub(crate) struct ComplexLu {
    lu: Array2<C>,
    perm: Vec<usize>,
    singular: bool,
}

impl ComplexLu {
    pub(crate) fn new(mut a: Array2<C>) -> Self {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[[i, k]].norm()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if pmax == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    a.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
            }
            let pivot = a[[k, k]];
            for i in k + 1..n {
                let f = a[[i, k]] / pivot;
                a[[i, k]] = f;
                if f != C::new(0.0, 0.0) {
                    for j in k + 1..n {
                        let t = a[[k, j]];
                        a[[i, j]] -= f * t;
                    }
                }
            }
        }
        ComplexLu {
            lu: a,
            perm,
            singular,
        }
    }

    pub(crate) fn is_singular(&self) -> bool {
        self.singular
    }

    pub(crate) fn solve(&self, b: &Array2<C>) -> Array2<C> {
        let n = self.lu.nrows();
        let m = b.ncols();
        let mut x = Array2::<C>::zeros((n, m));
        for i in 0..n {
            x.row_mut(i).assign(&b.row(self.perm[i]));
        }
        for col in 0..m {
            for i in 0..n {
                let mut acc = x[[i, col]];
                for k in 0..i {
                    acc -= self.lu[[i, k]] * x[[k, col]];
                }
                x[[i, col]] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[[i, col]];
                for k in i + 1..n {
                    acc -= self.lu[[i, k]] * x[[k, col]];
                }
                x[[i, col]] = acc / self.lu[[i, i]];
            }
        }
        x
    }
}

fn norm1(a: &Array2<C>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverse together with the reciprocal 1-norm condition number. Returns
/// `None` when the matrix is exactly singular.
pub(crate) fn inverse_rcond(a: &Array2<C>) -> Option<(Array2<C>, f64)> {
    let n = a.nrows();
    let lu = ComplexLu::new(a.clone());
    if lu.is_singular() {
        return None;
    }
    let inv = lu.solve(&Array2::eye(n).mapv(|x: f64| c(x, 0.0)));
    if inv.iter().any(|z| !z.is_finite()) {
        return None;
    }
    let rcond = 1.0 / (norm1(a) * norm1(&inv));
    Some((inv, rcond))
}

/// Solves `a x = b`, failing when `a` is singular to working precision.
pub(crate) fn solve_checked(a: &Array2<C>, b: &Array2<C>, rcond_min: f64) -> Option<Array2<C>> {
    let (inv, rcond) = inverse_rcond(a)?;
    if rcond < rcond_min {
        return None;
    }
    Some(inv.dot(b))
}

/// Largest singular value of a complex matrix.
pub(crate) fn sigma_max(a: ArrayView2<C>) -> f64 {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return 0.0;
    }
    if m == 1 || n == 1 {
        return a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    if m == 2 && n == 2 {
        let f = a.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
        let disc = (f * f - 4.0 * det.norm_sqr()).max(0.0).sqrt();
        return ((f + disc) / 2.0).sqrt();
    }
    let m = to_faer_c(a);
    match m.singular_values() {
        Ok(sv) => sv.into_iter().fold(0.0, f64::max),
        Err(_) => f64::NAN,
    }
}

pub(crate) fn frobenius_sq(a: ArrayView2<C>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn real_frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn to_faer_c(a: ArrayView2<C>) -> Mat<C> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn from_faer(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

fn finite_or(a: Array2<f64>, what: &str) -> Result<Array2<f64>> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(a)
    } else {
        Err(Error::Numerical(format!(
            "{what}: matrix is singular to working precision"
        )))
    }
}

/// Full SVD of a real matrix: `(U, sigma, V)` with `a = U diag(sigma) V^T`,
/// singular values descending.
pub(crate) fn svd_real(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let svd = to_faer(a)
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let sv = svd
        .S()
        .column_vector()
        .iter()
        .cloned()
        .collect::<Array1<f64>>();
    Ok((from_faer(svd.U()), sv, from_faer(svd.V())))
}

pub(crate) fn singular_values_real(a: &Array2<f64>) -> Result<Vec<f64>> {
    to_faer(a)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))
}

/// 2-norm condition number from singular values; infinite when singular.
pub(crate) fn cond_real(a: &Array2<f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(1.0);
    }
    let sv = singular_values_real(a)?;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

pub(crate) fn solve_real(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() == 0 {
        return Ok(Array2::zeros((0, b.ncols())));
    }
    let x = to_faer(a).partial_piv_lu().solve(to_faer(b));
    finite_or(from_faer(x.as_ref()), "linear solve")
}

pub(crate) fn inv_real(a: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let x = to_faer(a).partial_piv_lu().inverse();
    finite_or(from_faer(x.as_ref()), "inverse")
}

/// Eigenvalues of a real square matrix.
pub(crate) fn eigvals_real(a: &Array2<f64>) -> Result<Vec<C>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    to_faer(a)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue iteration did not converge: {e:?}")))
}

/// Generalized eigenvalues of `(a, b)` as `(alpha, beta)` pairs, `lambda = alpha / beta`.
pub(crate) fn gen_eigvals_real(a: &Array2<f64>, b: &Array2<f64>) -> Result<Vec<(C, C)>> {
    let g = to_faer(a)
        .generalized_eigen(to_faer(b))
        .map_err(|e| Error::Numerical(format!("QZ iteration did not converge: {e:?}")))?;
    let (sa, sb) = (g.S_a().column_vector(), g.S_b().column_vector());
    Ok(sa.iter().zip(sb.iter()).map(|(x, y)| (*x, *y)).collect())
}

/// Block-diagonal concatenation of real matrices.
pub(crate) fn block_diag(blocks: &[&Array2<f64>]) -> Array2<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Array2::zeros((rows, cols));
    let (mut r, mut cc) = (0, 0);
    for b in blocks {
        out.slice_mut(s![r..r + b.nrows(), cc..cc + b.ncols()])
            .assign(b);
        r += b.nrows();
        cc += b.ncols();
    }
    out
}
