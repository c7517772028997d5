//! Analysis of descriptor realizations: poles, spectral abscissa, stability
//! and the H-infinity norm.

use log::warn;
use ndarray::{s, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::la::{self, c};
use crate::loewner::DescriptorRealization;

/// Margin below zero that the spectral abscissa must clear for stability.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// `E` with a condition number beyond this is treated as singular.
const E_COND_LIMIT: f64 = 1e8;

/// Standard state space `x' = A x + B u, y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
    pub d: Array2<f64>,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn eval(&self, s: Complex64) -> Result<Array2<Complex64>> {
        let mut out = la::to_complex(&self.d);
        let n = self.order();
        if n == 0 {
            return Ok(out);
        }
        let pencil = Array2::from_shape_fn((n, n), |(i, j)| {
            let diag = if i == j { s } else { c(0.0, 0.0) };
            diag - self.a[[i, j]]
        });
        let x = la::solve_checked(&pencil, &la::to_complex(&self.b), 1e-14).ok_or_else(|| {
            Error::Singular {
                what: "sI - A is singular".into(),
                at: s,
            }
        })?;
        out += &la::to_complex(&self.c).dot(&x);
        Ok(out)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        if self.order() == 0 {
            return Ok(Vec::new());
        }
        la::eigvals_real(&self.a)
    }
}

/// Converts to standard form. Well-conditioned `E` is inverted; a singular
/// `E` is handled by eliminating the algebraic (index-one) part, which may
/// produce a feed-through term.
pub fn to_state_space(real: &DescriptorRealization) -> Result<StateSpace> {
    let n = real.order();
    let (n_o, n_i) = (real.n_outputs(), real.n_inputs());
    if n == 0 {
        return Ok(StateSpace {
            a: Array2::zeros((0, 0)),
            b: Array2::zeros((0, n_i)),
            c: Array2::zeros((n_o, 0)),
            d: Array2::zeros((n_o, n_i)),
        });
    }
    if la::cond_real(&real.e)? < E_COND_LIMIT {
        return Ok(StateSpace {
            a: la::solve_real(&real.e, &real.a)?,
            b: la::solve_real(&real.e, &real.b)?,
            c: real.c.clone(),
            d: Array2::zeros((n_o, n_i)),
        });
    }

    let (u, sv, v) = la::svd_real(&real.e)?;
    let smax = sv[0];
    let q = sv
        .iter()
        .filter(|&&x| x > 1e3 * n as f64 * f64::EPSILON * smax)
        .count();
    if q == n {
        // invertible but badly scaled
        return Ok(StateSpace {
            a: la::solve_real(&real.e, &real.a)?,
            b: la::solve_real(&real.e, &real.b)?,
            c: real.c.clone(),
            d: Array2::zeros((n_o, n_i)),
        });
    }
    let ut = u.t();
    let at = ut.dot(&real.a).dot(&v);
    let bt = ut.dot(&real.b);
    let ct = real.c.dot(&v);
    let a11 = at.slice(s![..q, ..q]).to_owned();
    let a12 = at.slice(s![..q, q..]).to_owned();
    let a21 = at.slice(s![q.., ..q]).to_owned();
    let a22 = at.slice(s![q.., q..]).to_owned();
    let (b1, b2) = (
        bt.slice(s![..q, ..]).to_owned(),
        bt.slice(s![q.., ..]).to_owned(),
    );
    let (c1, c2) = (
        ct.slice(s![.., ..q]).to_owned(),
        ct.slice(s![.., q..]).to_owned(),
    );
    if la::cond_real(&a22)? > 1e12 {
        return Err(Error::Numerical(
            "descriptor system has index above one (impulsive modes)".into(),
        ));
    }
    let a22_a21 = la::solve_real(&a22, &a21)?;
    let a22_b2 = la::solve_real(&a22, &b2)?;
    let sigma_inv = Array2::from_diag(&sv.slice(s![..q]).mapv(|x| 1.0 / x));
    Ok(StateSpace {
        a: sigma_inv.dot(&(&a11 - &a12.dot(&a22_a21))),
        b: sigma_inv.dot(&(&b1 - &a12.dot(&a22_b2))),
        c: &c1 - &c2.dot(&a22_a21),
        d: -c2.dot(&a22_b2),
    })
}

/// Finite generalized eigenvalues of `(A, E)`.
pub fn poles(real: &DescriptorRealization) -> Result<Vec<Complex64>> {
    let n = real.order();
    if n == 0 {
        return Ok(Vec::new());
    }
    if la::cond_real(&real.e)? < E_COND_LIMIT {
        let m = la::solve_real(&real.e, &real.a)?;
        return la::eigvals_real(&m);
    }
    let e_norm = la::real_frobenius(&real.e);
    let a_norm = la::real_frobenius(&real.a).max(f64::MIN_POSITIVE);
    let tol = 1e3 * n as f64 * f64::EPSILON;
    let vals = la::gen_eigvals_real(&real.a, &real.e)?;
    let mut out = Vec::new();
    for (alpha, beta) in vals {
        // infinite when beta is negligible on the scale of the pencil
        if beta.norm() / e_norm.max(f64::MIN_POSITIVE) <= tol * alpha.norm() / a_norm {
            continue;
        }
        if e_norm == 0.0 {
            continue;
        }
        let lambda = alpha / beta;
        if lambda.is_finite() {
            out.push(lambda);
        }
    }
    Ok(out)
}

/// Largest real part over the finite poles; `-inf` when there are none.
pub fn spectral_abscissa(real: &DescriptorRealization) -> Result<f64> {
    Ok(poles(real)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_stable(real: &DescriptorRealization) -> Result<bool> {
    Ok(spectral_abscissa(real)? < -STABILITY_MARGIN)
}

/// Result of an H-infinity norm computation.
#[derive(Debug, Clone)]
pub struct HinfNorm {
    /// Attained peak gain (a lower bound within `rel_tol` of the norm).
    pub value: f64,
    /// Certified upper bound when the level-set test converged.
    pub upper: f64,
    /// Frequency at which `value` is attained.
    pub peak_omega: f64,
    pub warning: Option<String>,
}

/// H-infinity norm of a stable realization to relative accuracy `rel_tol`.
pub fn hinf_norm(real: &DescriptorRealization, rel_tol: f64) -> Result<f64> {
    Ok(hinf_norm_in_band(real, rel_tol, None)?.value)
}

/// As [`hinf_norm`], with the initial sweep also covering `band` widened by
/// a factor 100 on both sides.
pub fn hinf_norm_in_band(
    real: &DescriptorRealization,
    rel_tol: f64,
    band: Option<(f64, f64)>,
) -> Result<HinfNorm> {
    if !(rel_tol > 0.0 && rel_tol <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "H-infinity tolerance must lie in (0, 0.1], got {rel_tol}"
        )));
    }
    let ss = to_state_space(real)?;
    let abscissa = ss
        .poles()?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::Precondition(format!(
            "H-infinity norm requires a stable system (spectral abscissa {abscissa:.3e})"
        )));
    }
    hinf_state_space(&ss, rel_tol, band)
}

fn sigma_at(ss: &StateSpace, omega: f64) -> Result<f64> {
    Ok(la::sigma_max(ss.eval(c(0.0, omega))?.view()))
}

fn hinf_state_space(ss: &StateSpace, rel_tol: f64, band: Option<(f64, f64)>) -> Result<HinfNorm> {
    let d_gain = la::sigma_max(la::to_complex(&ss.d).view());
    if ss.order() == 0 {
        return Ok(HinfNorm {
            value: d_gain,
            upper: d_gain,
            peak_omega: f64::INFINITY,
            warning: None,
        });
    }
    let poles = ss.poles()?;

    // candidate frequencies: wide log sweep, zero, pole frequencies
    let mags: Vec<f64> = poles
        .iter()
        .map(|p| p.norm())
        .filter(|&m| m > 0.0)
        .collect();
    let mut lo = mags.iter().cloned().fold(f64::INFINITY, f64::min) / 100.0;
    let mut hi = mags.iter().cloned().fold(0.0, f64::max) * 100.0;
    if let Some((a, b)) = band {
        lo = lo.min(a / 100.0);
        hi = hi.max(b * 100.0);
    }
    if !(lo.is_finite() && lo > 0.0) {
        lo = 1e-3;
    }
    if !(hi.is_finite() && hi > lo) {
        hi = lo * 1e6;
    }
    let mut grid: Vec<f64> = crate::freq_data::logspace_frequencies(lo, hi, 400)?;
    grid.push(0.0);
    grid.extend(poles.iter().map(|p| p.im.abs()).filter(|&w| w > 0.0));

    let mut best = (d_gain, f64::INFINITY);
    let mut sweep = Vec::with_capacity(grid.len());
    for &w in &grid {
        let g = sigma_at(ss, w)?;
        sweep.push((w, g));
        if g > best.0 {
            best = (g, w);
        }
    }
    if best.0 == 0.0 {
        return Ok(HinfNorm {
            value: 0.0,
            upper: 0.0,
            peak_omega: 0.0,
            warning: None,
        });
    }

    for _ in 0..100 {
        let level = (1.0 + rel_tol) * best.0;
        let crossings = match imaginary_crossings(ss, level) {
            Some(c) => c,
            None => {
                return Ok(golden_refine(
                    ss,
                    &sweep,
                    best,
                    "Hamiltonian eigen-solve failed",
                ))
            }
        };
        if crossings.is_empty() {
            return Ok(HinfNorm {
                value: best.0,
                upper: level,
                peak_omega: best.1,
                warning: None,
            });
        }
        let mut probes = crossings.clone();
        probes.extend(crossings.windows(2).map(|p| 0.5 * (p[0] + p[1])));
        let mut improved = false;
        for w in probes {
            let g = sigma_at(ss, w)?;
            if g > best.0 {
                improved = true;
                best = (g, w);
            }
        }
        if !improved {
            // crossings were round-off artifacts: no interval exceeds the level
            return Ok(HinfNorm {
                value: best.0,
                upper: level,
                peak_omega: best.1,
                warning: None,
            });
        }
    }
    Ok(golden_refine(
        ss,
        &sweep,
        best,
        "level-set iteration did not settle",
    ))
}

/// Frequencies where the level-`gamma` Hamiltonian has eigenvalues on the
/// imaginary axis, sorted. `None` if the eigen-solve failed.
fn imaginary_crossings(ss: &StateSpace, gamma: f64) -> Option<Vec<f64>> {
    let n = ss.order();
    let (n_o, n_i) = ss.d.dim();
    let g2 = gamma * gamma;
    let r = ss.d.t().dot(&ss.d) - Array2::<f64>::eye(n_i) * g2;
    let sm = ss.d.dot(&ss.d.t()) - Array2::<f64>::eye(n_o) * g2;
    let r_inv = la::inv_real(&r).ok()?;
    let s_inv = la::inv_real(&sm).ok()?;
    let br = ss.b.dot(&r_inv);
    let mut h = Array2::<f64>::zeros((2 * n, 2 * n));
    h.slice_mut(s![..n, ..n])
        .assign(&(&ss.a - &br.dot(&ss.d.t()).dot(&ss.c)));
    h.slice_mut(s![..n, n..])
        .assign(&(br.dot(&ss.b.t()) * -gamma));
    h.slice_mut(s![n.., ..n])
        .assign(&(ss.c.t().dot(&s_inv).dot(&ss.c) * gamma));
    h.slice_mut(s![n.., n..])
        .assign(&(&ss.a.t() * -1.0 + ss.c.t().dot(&ss.d).dot(&br.t())));
    if h.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let eigs = la::eigvals_real(&h).ok()?;
    let mut out: Vec<f64> = eigs
        .iter()
        .filter(|z| z.re.abs() <= 1e-8 * scale.max(z.norm()))
        .map(|z| z.im.abs())
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    Some(out)
}

/// Golden-section refinement around the best sweep point, in log frequency.
fn golden_refine(ss: &StateSpace, sweep: &[(f64, f64)], best: (f64, f64), why: &str) -> HinfNorm {
    let msg = format!("{why}; H-infinity norm refined by golden-section search only");
    warn!("{msg}");
    let mut pts: Vec<(f64, f64)> = sweep.iter().cloned().filter(|p| p.0 > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = best;
    if let Some(k) = pts.iter().position(|p| p.0 == best.1) {
        let lo = pts[k.saturating_sub(1)].0.ln();
        let hi = pts[(k + 1).min(pts.len() - 1)].0.ln();
        let f = |x: f64| sigma_at(ss, x.exp()).unwrap_or(0.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..80 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if f(x1) > f(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let x = 0.5 * (a + b);
        let g = f(x);
        if g > out.0 {
            out = (g, x.exp());
        }
    }
    HinfNorm {
        value: out.0,
        upper: f64::NAN,
        peak_omega: out.1,
        warning: Some(msg),
    }
}

/// Realization of `c * G` obtained by scaling the output matrix.
pub fn scale_output(real: &DescriptorRealization, factor: f64) -> DescriptorRealization {
    DescriptorRealization {
        c: &real.c * factor,
        ..real.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn standard(a: Array2<f64>, b: Array2<f64>, cm: Array2<f64>) -> DescriptorRealization {
        let n = a.nrows();
        DescriptorRealization::new(Array2::eye(n), a, b, cm).unwrap()
    }

    fn lag() -> DescriptorRealization {
        standard(array![[-1.0]], array![[1.0]], array![[1.0]])
    }

    /// `1 / ((s/w0)^2 + 2 xi s/w0 + 1)` in companion form.
    fn second_order(w0: f64, xi: f64) -> DescriptorRealization {
        standard(
            array![[0.0, 1.0], [-w0 * w0, -2.0 * xi * w0]],
            array![[0.0], [w0 * w0]],
            array![[1.0, 0.0]],
        )
    }

    #[test]
    fn abscissa_examples() {
        assert!((spectral_abscissa(&lag()).unwrap() + 1.0).abs() < 1e-12);
        assert!((spectral_abscissa(&second_order(10.0, 1.0)).unwrap() + 10.0).abs() < 1e-6);
        let unstable = standard(array![[2.0]], array![[1.0]], array![[1.0]]);
        assert!((spectral_abscissa(&unstable).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stability_examples() {
        assert!(is_stable(&lag()).unwrap());
        assert!(!is_stable(&standard(array![[2.0]], array![[1.0]], array![[1.0]])).unwrap());
        assert!(!is_stable(&standard(array![[0.0]], array![[1.0]], array![[1.0]])).unwrap());
    }

    #[test]
    fn hinf_examples() {
        assert!((hinf_norm(&lag(), 1e-6).unwrap() - 1.0).abs() < 1e-6);
        assert!((hinf_norm(&second_order(10.0, 1.0), 1e-6).unwrap() - 1.0).abs() < 1e-6);
        let xi: f64 = 0.1;
        let peak = 1.0 / (2.0 * xi * (1.0 - xi * xi).sqrt());
        let got = hinf_norm(&second_order(10.0, xi), 1e-6).unwrap();
        assert!((got - peak).abs() < 1e-4, "{got} vs {peak}");
    }

    #[test]
    fn hinf_rejects_unstable_and_bad_tolerance() {
        let unstable = standard(array![[2.0]], array![[1.0]], array![[1.0]]);
        assert!(matches!(
            hinf_norm(&unstable, 1e-6),
            Err(Error::Precondition(_))
        ));
        assert!(hinf_norm(&lag(), 0.5).is_err());
        assert!(hinf_norm(&lag(), 0.0).is_err());
    }

    #[test]
    fn singular_e_feedthrough_is_recovered() {
        // x1' = -x1 + u, 0 = -x2 + 2u, y = x1 + x2  =>  G = 1/(s+1) + 2
        let real = DescriptorRealization::new(
            array![[1.0, 0.0], [0.0, 0.0]],
            array![[-1.0, 0.0], [0.0, -1.0]],
            array![[1.0], [2.0]],
            array![[1.0, 1.0]],
        )
        .unwrap();
        let ss = to_state_space(&real).unwrap();
        assert_eq!(ss.order(), 1);
        assert!((ss.d[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((spectral_abscissa(&real).unwrap() + 1.0).abs() < 1e-10);
        assert!((hinf_norm(&real, 1e-6).unwrap() - 3.0).abs() < 3e-6);
        let s = c(0.3, 2.0);
        let direct = real.eval(s).unwrap()[[0, 0]];
        assert!((ss.eval(s).unwrap()[[0, 0]] - direct).norm() < 1e-12);
    }

    #[test]
    fn static_gain_norm_is_max_singular_value() {
        let real = DescriptorRealization::new(
            Array2::zeros((2, 2)),
            -Array2::<f64>::eye(2),
            array![[3.0, 0.0], [0.0, 1.0]],
            array![[1.0, 1.0], [0.0, 1.0]],
        )
        .unwrap();
        let d = array![[3.0, 1.0], [0.0, 1.0]];
        let expected: f64 = la::singular_values_real(&d).unwrap()[0];
        let got = hinf_norm(&real, 1e-6).unwrap();
        assert!(
            (got - expected).abs() <= 1e-6 * expected,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn zero_system_norm_is_zero() {
        assert_eq!(
            hinf_norm(&DescriptorRealization::zero(1, 1), 1e-6).unwrap(),
            0.0
        );
        assert_eq!(
            spectral_abscissa(&DescriptorRealization::zero(1, 1)).unwrap(),
            f64::NEG_INFINITY
        );
    }
}
