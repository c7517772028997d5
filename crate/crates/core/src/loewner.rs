//! Loewner interpolation: from frequency samples to a real descriptor
//! realization `E x' = A x + B u, y = C x` interpolating the data.
//!
//! MIMO data is handled with the full block pencil: every divided
//! difference is an `n_o x n_i` block built from whole response matrices.

use log::warn;
use ndarray::{concatenate, s, Array2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq_data::FrequencySample;
use crate::la::{self, c, C};

/// Real descriptor realization `G(s) = C (sE - A)^{-1} B`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRealization {
    pub e: Array2<f64>,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
}

impl DescriptorRealization {
    /// Checks shapes, finiteness and regularity of the pencil `(E, A)`.
    pub fn new(e: Array2<f64>, a: Array2<f64>, b: Array2<f64>, c: Array2<f64>) -> Result<Self> {
        let r = a.nrows();
        if a.dim() != (r, r) || e.dim() != (r, r) || b.nrows() != r || c.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "E {:?}, A {:?}, B {:?}, C {:?} do not form a realization",
                e.dim(),
                a.dim(),
                b.dim(),
                c.dim()
            )));
        }
        if [&e, &a, &b, &c]
            .iter()
            .any(|m| m.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Numerical(
                "realization has non-finite entries".into(),
            ));
        }
        let real = DescriptorRealization { e, a, b, c };
        if r > 0 && !real.is_regular() {
            return Err(Error::Numerical(
                "singular pencil: det(sE - A) vanishes identically".into(),
            ));
        }
        Ok(real)
    }

    /// Realization with no states: the zero transfer.
    pub fn zero(n_o: usize, n_i: usize) -> Self {
        DescriptorRealization {
            e: Array2::zeros((0, 0)),
            a: Array2::zeros((0, 0)),
            b: Array2::zeros((0, n_i)),
            c: Array2::zeros((n_o, 0)),
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    fn is_regular(&self) -> bool {
        let scale =
            la::real_frobenius(&self.a) / la::real_frobenius(&self.e).max(f64::MIN_POSITIVE);
        let scale = if scale.is_finite() && scale > 0.0 {
            scale
        } else {
            1.0
        };
        [c(0.37, 1.31), c(-0.83, 0.59), c(2.11, -0.43)]
            .iter()
            .any(|&z| {
                let pencil = self.shifted(z * scale);
                matches!(la::inverse_rcond(&pencil), Some((_, rc)) if rc > 1e-15)
            })
    }

    fn shifted(&self, s: C) -> Array2<C> {
        let r = self.order();
        Array2::from_shape_fn((r, r), |(i, j)| s * self.e[[i, j]] - self.a[[i, j]])
    }

    /// `C (sE - A)^{-1} B`; fails when `sE - A` is singular to working precision.
    pub fn eval(&self, s: Complex64) -> Result<Array2<Complex64>> {
        let (n_o, n_i) = (self.n_outputs(), self.n_inputs());
        if self.order() == 0 {
            return Ok(Array2::zeros((n_o, n_i)));
        }
        let pencil = self.shifted(s);
        let x = la::solve_checked(&pencil, &la::to_complex(&self.b), 1e-14).ok_or_else(|| {
            Error::Singular {
                what: "sE - A is singular".into(),
                at: s,
            }
        })?;
        Ok(la::to_complex(&self.c).dot(&x))
    }

    /// Structured-text form: `order`, `n_inputs`, `n_outputs` and row-major
    /// `E`, `A`, `B`, `C`.
    pub fn to_toml(&self) -> Result<String> {
        let flat = |m: &Array2<f64>| m.iter().cloned().collect::<Vec<_>>();
        let file = RealizationFile {
            order: self.order(),
            n_inputs: self.n_inputs(),
            n_outputs: self.n_outputs(),
            e: flat(&self.e),
            a: flat(&self.a),
            b: flat(&self.b),
            c: flat(&self.c),
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: RealizationFile = toml::from_str(text)?;
        let (r, ni, no) = (f.order, f.n_inputs, f.n_outputs);
        let shape = |name: &str, v: Vec<f64>, rows: usize, cols: usize| {
            Array2::from_shape_vec((rows, cols), v).map_err(|_| {
                Error::DimensionMismatch(format!("{name} must hold {rows}x{cols} values"))
            })
        };
        Self::new(
            shape("E", f.e, r, r)?,
            shape("A", f.a, r, r)?,
            shape("B", f.b, r, ni)?,
            shape("C", f.c, no, r)?,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RealizationFile {
    order: usize,
    n_inputs: usize,
    n_outputs: usize,
    #[serde(rename = "E")]
    e: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<f64>,
}

/// Interpolation points with their data. Complex points come in adjacent
/// conjugate pairs `(z, conj z)` with conjugate data; real points stand alone.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub points: Vec<Complex64>,
    pub values: Vec<Array2<Complex64>>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds `j omega` and `-j omega` with conjugate data.
    fn push_conjugate_pair(&mut self, omega: f64, g: &Array2<C>) {
        self.points.push(c(0.0, omega));
        self.values.push(g.clone());
        self.points.push(c(0.0, -omega));
        self.values.push(g.mapv(|z| z.conj()));
    }

    /// Blocks of the real transformation: `true` for a conjugate pair.
    fn pairing(&self) -> Result<Vec<bool>> {
        let mut out = Vec::new();
        let mut k = 0;
        while k < self.len() {
            let z = self.points[k];
            if z.im == 0.0 {
                out.push(false);
                k += 1;
            } else if k + 1 < self.len() && self.points[k + 1] == z.conj() {
                out.push(true);
                k += 2;
            } else {
                return Err(Error::InvalidArgument(format!(
                    "point {z} is not followed by its conjugate"
                )));
            }
        }
        Ok(out)
    }
}

/// Splits frequency-sorted samples alternately (1st, 3rd, ... to `mu`; 2nd,
/// 4th, ... to `lambda`) and closes both sets under conjugation.
pub fn partition_points(samples: &[FrequencySample]) -> Result<(PointSet, PointSet)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "Loewner interpolation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut sorted: Vec<&FrequencySample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    if sorted.windows(2).any(|p| p[0].omega == p[1].omega) {
        return Err(Error::InvalidArgument(
            "repeated frequency in samples".into(),
        ));
    }
    let empty = || PointSet {
        points: Vec::new(),
        values: Vec::new(),
    };
    let (mut mu, mut lambda) = (empty(), empty());
    for (k, smp) in sorted.iter().enumerate() {
        let set = if k % 2 == 0 { &mut mu } else { &mut lambda };
        set.push_conjugate_pair(smp.omega, &smp.response);
    }
    Ok((mu, lambda))
}

/// Loewner pencil in the original complex coordinates.
#[derive(Debug, Clone)]
pub struct LoewnerPencil {
    pub l: Array2<Complex64>,
    pub ls: Array2<Complex64>,
    pub v: Array2<Complex64>,
    pub w: Array2<Complex64>,
    pub mu: PointSet,
    pub lambda: PointSet,
    n_o: usize,
    n_i: usize,
}

/// Real form of a pencil after the conjugate-pair change of coordinates.
#[derive(Debug, Clone)]
pub struct RealPencil {
    pub l: Array2<f64>,
    pub ls: Array2<f64>,
    pub v: Array2<f64>,
    pub w: Array2<f64>,
    /// Largest discarded imaginary part relative to the pencil magnitude.
    pub imag_residual: f64,
}

/// Block divided differences `(G(mu_i) - G(lambda_j)) / (mu_i - lambda_j)` and
/// their shifted counterparts.
pub fn build_pencil(mu: PointSet, lambda: PointSet) -> Result<LoewnerPencil> {
    if mu.is_empty() || lambda.is_empty() {
        return Err(Error::InvalidArgument(
            "empty interpolation point set".into(),
        ));
    }
    let (n_o, n_i) = mu.values[0].dim();
    if mu
        .values
        .iter()
        .chain(&lambda.values)
        .any(|g| g.dim() != (n_o, n_i))
    {
        return Err(Error::DimensionMismatch(
            "interpolation data of mixed shapes".into(),
        ));
    }
    let (p, q) = (mu.len(), lambda.len());
    let mut l = Array2::zeros((p * n_o, q * n_i));
    let mut ls = Array2::zeros((p * n_o, q * n_i));
    for (i, (&m, gm)) in mu.points.iter().zip(&mu.values).enumerate() {
        for (j, (&lam, gl)) in lambda.points.iter().zip(&lambda.values).enumerate() {
            let gap = m - lam;
            if gap.norm() <= 1e-14 * (m.norm() + lam.norm()) {
                return Err(Error::InvalidArgument(format!(
                    "interpolation point {m} appears in both point sets"
                )));
            }
            for a in 0..n_o {
                for b in 0..n_i {
                    l[[i * n_o + a, j * n_i + b]] = (gm[[a, b]] - gl[[a, b]]) / gap;
                    ls[[i * n_o + a, j * n_i + b]] = (m * gm[[a, b]] - lam * gl[[a, b]]) / gap;
                }
            }
        }
    }
    let mut v = Array2::zeros((p * n_o, n_i));
    for (i, g) in mu.values.iter().enumerate() {
        v.slice_mut(s![i * n_o..(i + 1) * n_o, ..]).assign(g);
    }
    let mut w = Array2::zeros((n_o, q * n_i));
    for (j, g) in lambda.values.iter().enumerate() {
        w.slice_mut(s![.., j * n_i..(j + 1) * n_i]).assign(g);
    }
    Ok(LoewnerPencil {
        l,
        ls,
        v,
        w,
        mu,
        lambda,
        n_o,
        n_i,
    })
}

/// Unitary `T` with `T^H x` real for conjugate-paired `x`: per pair
/// `(1/sqrt 2) [[I, jI], [I, -jI]]`, identity for real points.
fn pair_transform(set: &PointSet, block: usize) -> Result<Array2<C>> {
    let n = set.len() * block;
    let mut t = Array2::zeros((n, n));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut k = 0;
    for paired in set.pairing()? {
        if paired {
            for d in 0..block {
                let (r0, r1) = (k * block + d, (k + 1) * block + d);
                t[[r0, r0]] = c(h, 0.0);
                t[[r0, r1]] = c(0.0, h);
                t[[r1, r0]] = c(h, 0.0);
                t[[r1, r1]] = c(0.0, -h);
            }
            k += 2;
        } else {
            for d in 0..block {
                t[[k * block + d, k * block + d]] = c(1.0, 0.0);
            }
            k += 1;
        }
    }
    Ok(t)
}

impl LoewnerPencil {
    pub fn n_outputs(&self) -> usize {
        self.n_o
    }

    pub fn n_inputs(&self) -> usize {
        self.n_i
    }

    /// Applies the conjugate-pair transformation and drops the (round-off)
    /// imaginary parts.
    pub fn real_coordinates(&self) -> Result<RealPencil> {
        let tm = pair_transform(&self.mu, self.n_o)?;
        let tl = pair_transform(&self.lambda, self.n_i)?;
        let tmh = tm.t().mapv(|z| z.conj());
        let l = tmh.dot(&self.l).dot(&tl);
        let ls = tmh.dot(&self.ls).dot(&tl);
        let v = tmh.dot(&self.v);
        let w = self.w.dot(&tl);
        let mut imag: f64 = 0.0;
        let mut mag: f64 = 0.0;
        for m in [&l, &ls, &v, &w] {
            for z in m.iter() {
                imag = imag.max(z.im.abs());
                mag = mag.max(z.norm());
            }
        }
        let re = |m: &Array2<C>| m.mapv(|z| z.re);
        Ok(RealPencil {
            l: re(&l),
            ls: re(&ls),
            v: re(&v),
            w: re(&w),
            imag_residual: if mag > 0.0 { imag / mag } else { 0.0 },
        })
    }
}

/// Outcome of a Loewner identification.
#[derive(Debug, Clone)]
pub struct LoewnerModel {
    pub realization: DescriptorRealization,
    /// Singular values of `[L, Ls]`, descending.
    pub singular_values: Vec<f64>,
    /// Numerical ranks of `[L, Ls]` and `[L; Ls]`.
    pub ranks: (usize, usize),
    pub warnings: Vec<String>,
}

impl LoewnerModel {
    pub fn order(&self) -> usize {
        self.realization.order()
    }
}

fn count_above(sv: &[f64], tol: f64) -> usize {
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&x| x > tol * max).count()
}

/// Identifies a real descriptor model interpolating the samples.
pub fn realize(samples: &[FrequencySample], svd_rel_tol: f64) -> Result<LoewnerModel> {
    if !(svd_rel_tol > 0.0 && svd_rel_tol < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "SVD tolerance must lie in (0, 1), got {svd_rel_tol}"
        )));
    }
    let (mu, lambda) = partition_points(samples)?;
    let pencil = build_pencil(mu, lambda)?;
    realize_pencil(&pencil, svd_rel_tol)
}

/// SVD projection of an already built pencil.
pub fn realize_pencil(pencil: &LoewnerPencil, svd_rel_tol: f64) -> Result<LoewnerModel> {
    let rp = pencil.real_coordinates()?;
    let data_scale =
        rp.v.iter()
            .chain(rp.w.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
    let l_scale = rp.l.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if l_scale == 0.0 || l_scale <= 1e-13 * data_scale {
        return Err(Error::DegenerateData(
            "Loewner matrix vanishes: the data look constant in frequency".into(),
        ));
    }

    let row = concatenate(Axis(1), &[rp.l.view(), rp.ls.view()])?;
    let col = concatenate(Axis(0), &[rp.l.view(), rp.ls.view()])?;
    let (y, sv_row, _) = la::svd_real(&row)?;
    let (_, sv_col, x) = la::svd_real(&col)?;
    let sv_row = sv_row.to_vec();
    let r1 = count_above(&sv_row, svd_rel_tol);
    let r2 = count_above(&sv_col.to_vec(), svd_rel_tol);
    let r = r1.min(r2);

    let mut warnings = Vec::new();
    if r1 != r2 {
        warnings.push(format!(
            "rank of [L, Ls] ({r1}) differs from rank of [L; Ls] ({r2}); using {r}"
        ));
    }
    if r < sv_row.len() && sv_row[r] > 0.0 && sv_row[r - 1] / sv_row[r] < 10.0 {
        warnings.push(format!(
            "ambiguous order: sigma_{r} / sigma_{} = {:.3}",
            r + 1,
            sv_row[r - 1] / sv_row[r]
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }

    let y = y.slice(s![.., ..r]).to_owned();
    let x = x.slice(s![.., ..r]).to_owned();
    let yt = y.t();
    let e = -yt.dot(&rp.l).dot(&x);
    let a = -yt.dot(&rp.ls).dot(&x);
    let b = yt.dot(&rp.v);
    let cm = rp.w.dot(&x);
    let realization = DescriptorRealization::new(e, a, b, cm)?;
    Ok(LoewnerModel {
        realization,
        singular_values: sv_row,
        ranks: (r1, r2),
        warnings,
    })
}

/// Largest relative interpolation error `||G^(j w) - G(j w)||_F / (1 + ||G(j w)||_F)`.
pub fn interpolation_residual(
    real: &DescriptorRealization,
    samples: &[FrequencySample],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for smp in samples {
        let fit = real.eval(c(0.0, smp.omega))?;
        let err = la::frobenius_sq((&fit - &smp.response).view()).sqrt();
        let size = la::frobenius_sq(smp.response.view()).sqrt();
        worst = worst.max(err / (1.0 + size));
    }
    Ok(worst)
}
