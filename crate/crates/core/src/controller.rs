//! Fixed-structure controllers with a shared factored denominator:
//! `K(s) = N(s) / d(s)`, `K` of size `n_i x n_o` (rows drive the plant
//! inputs, columns read the plant outputs).
//!
//! The flattened parameter vector is
//! `theta = [beta, alpha^{1,1}, ..., alpha^{n_i,n_o}, k^{1,1}, ..., k^{n_i,n_o}]`
//! with entries taken row by row.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la::{self, c};
use crate::linsys;
use crate::loewner::DescriptorRealization;
use crate::poly::{factored, Poly};

/// Smallest admissible denominator parameter in the optimizers.
pub const BETA_MIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Properness {
    /// Every numerator degree strictly below the denominator degree.
    Strict,
    /// Numerator degree may equal the denominator degree.
    Biproper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStructure {
    n_i: usize,
    n_o: usize,
    n_p: usize,
    n_z: Vec<usize>,
    properness: Properness,
}

impl ControllerStructure {
    /// `n_z` holds the numerator parameter counts row-major (`n_i` rows of `n_o`).
    pub fn new(
        n_i: usize,
        n_o: usize,
        n_p: usize,
        n_z: Vec<usize>,
        properness: Properness,
    ) -> Result<Self> {
        if n_i == 0 || n_o == 0 || n_z.len() != n_i * n_o {
            return Err(Error::DimensionMismatch(format!(
                "numerator grid has {} entries, a {n_i}x{n_o} controller needs {}",
                n_z.len(),
                n_i * n_o
            )));
        }
        for (k, &z) in n_z.iter().enumerate() {
            let ok = match properness {
                Properness::Strict => n_p > z,
                Properness::Biproper => n_p >= z,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "entry ({}, {}): numerator degree {z} not allowed with denominator degree {n_p} ({:?})",
                    k / n_o + 1,
                    k % n_o + 1,
                    properness
                )));
            }
        }
        Ok(ControllerStructure {
            n_i,
            n_o,
            n_p,
            n_z,
            properness,
        })
    }

    /// Same numerator degree in every entry.
    pub fn uniform(
        n_i: usize,
        n_o: usize,
        n_p: usize,
        n_z: usize,
        properness: Properness,
    ) -> Result<Self> {
        Self::new(n_i, n_o, n_p, vec![n_z; n_i * n_o], properness)
    }

    pub fn n_i(&self) -> usize {
        self.n_i
    }

    pub fn n_o(&self) -> usize {
        self.n_o
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_z(&self, i: usize, j: usize) -> usize {
        self.n_z[i * self.n_o + j]
    }

    pub fn properness(&self) -> Properness {
        self.properness
    }

    /// Length of the flattened parameter vector.
    pub fn theta_dimension(&self) -> usize {
        self.n_p + self.n_z.iter().sum::<usize>() + self.n_i * self.n_o
    }

    /// Index of the first gain in the flattened vector.
    pub fn gain_offset(&self) -> usize {
        self.n_p + self.n_z.iter().sum::<usize>()
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_dimension() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector has length {}, structure needs {}",
                theta.len(),
                self.theta_dimension()
            )));
        }
        Ok(())
    }

    pub fn split<'a>(&self, theta: &'a [f64]) -> Result<ParamsView<'a>> {
        self.check_len(theta)?;
        let beta = &theta[..self.n_p];
        let mut alpha = Vec::with_capacity(self.n_z.len());
        let mut at = self.n_p;
        for &z in &self.n_z {
            alpha.push(&theta[at..at + z]);
            at += z;
        }
        Ok(ParamsView {
            beta,
            alpha,
            k: &theta[at..],
        })
    }

    pub fn denominator(&self, theta: &[f64]) -> Result<Poly> {
        Ok(denominator_poly(self.split(theta)?.beta))
    }

    /// Numerator polynomials, row-major.
    pub fn numerators(&self, theta: &[f64]) -> Result<Vec<Poly>> {
        let p = self.split(theta)?;
        Ok(p.alpha
            .iter()
            .zip(p.k)
            .map(|(a, &k)| numerator_poly(a, k))
            .collect())
    }

    /// `K(s)`; fails at a root of the denominator.
    pub fn eval(&self, theta: &[f64], s: Complex64) -> Result<Array2<Complex64>> {
        let p = self.split(theta)?;
        let d = denominator_poly(p.beta);
        let dv = d.eval(s);
        if dv.norm() <= 1e-14 * d.eval_abs(s) {
            return Err(Error::Singular {
                what: "controller denominator vanishes".into(),
                at: s,
            });
        }
        let mut out = Array2::zeros((self.n_i, self.n_o));
        for (idx, (a, &k)) in p.alpha.iter().zip(p.k).enumerate() {
            out[[idx / self.n_o, idx % self.n_o]] = numerator_poly(a, k).eval(s) / dv;
        }
        Ok(out)
    }

    /// `-beta`: the denominator is stable iff every component is negative.
    pub fn stability_residuals(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.split(theta)?.beta.iter().map(|b| -b).collect())
    }

    pub fn is_feasible(&self, theta: &[f64]) -> Result<bool> {
        Ok(self.stability_residuals(theta)?.iter().all(|&r| r < 0.0))
    }

    /// State-space realization: one controllable companion block of `d(s)`
    /// per controller input, plus algebraic states `E = 0` carrying the
    /// direct feed-through of biproper entries.
    pub fn realization(&self, theta: &[f64]) -> Result<DescriptorRealization> {
        let p = self.split(theta)?;
        if let Some(b) = p.beta.iter().find(|&&b| !(b > 0.0)) {
            return Err(Error::Precondition(format!(
                "denominator parameter {b} is not positive: controller not stable"
            )));
        }
        let (n, ni, no) = (self.n_p, self.n_i, self.n_o);
        let d = denominator_poly(p.beta);
        let mut feed = Array2::<f64>::zeros((ni, no));
        let mut rem = vec![vec![0.0; n]; ni * no];
        for (idx, (a, &k)) in p.alpha.iter().zip(p.k).enumerate() {
            let num = numerator_poly(a, k);
            let lead = num.coeff(n);
            feed[[idx / no, idx % no]] = lead;
            let r = num.sub(&d.scale(lead));
            for (kk, slot) in rem[idx].iter_mut().enumerate() {
                *slot = r.coeff(kk);
            }
        }

        let dyn_states = n * no;
        let has_feed = feed.iter().any(|&x| x != 0.0);
        let alg = if has_feed { ni.min(no) } else { 0 };
        let total = dyn_states + alg;
        let mut e = Array2::<f64>::zeros((total, total));
        let mut a = Array2::<f64>::zeros((total, total));
        let mut b = Array2::<f64>::zeros((total, no));
        let mut cm = Array2::<f64>::zeros((ni, total));
        for j in 0..no {
            let o = j * n;
            for r in 0..n {
                e[[o + r, o + r]] = 1.0;
                if r + 1 < n {
                    a[[o + r, o + r + 1]] = 1.0;
                }
                a[[o + n - 1, o + r]] = -d.coeff(r);
            }
            if n > 0 {
                b[[o + n - 1, j]] = 1.0;
            }
            for i in 0..ni {
                for r in 0..n {
                    cm[[i, o + r]] = rem[i * no + j][r];
                }
            }
        }
        if alg > 0 {
            let o = dyn_states;
            for q in 0..alg {
                a[[o + q, o + q]] = -1.0;
            }
            if no <= ni {
                // w = u, y += D w
                for q in 0..no {
                    b[[o + q, q]] = 1.0;
                }
                for i in 0..ni {
                    for q in 0..no {
                        cm[[i, o + q]] = feed[[i, q]];
                    }
                }
            } else {
                // w = D u, y += w
                for q in 0..ni {
                    for j in 0..no {
                        b[[o + q, j]] = feed[[q, j]];
                    }
                    cm[[q, o + q]] = 1.0;
                }
            }
        }
        DescriptorRealization::new(e, a, b, cm)
    }

    /// Exact `||K(theta_a) - K(theta_b)||_inf`.
    pub fn difference_norm(&self, theta_a: &[f64], theta_b: &[f64], rel_tol: f64) -> Result<f64> {
        Ok(self
            .difference_norm_detailed(theta_a, theta_b, rel_tol)?
            .value)
    }

    pub fn difference_norm_detailed(
        &self,
        theta_a: &[f64],
        theta_b: &[f64],
        rel_tol: f64,
    ) -> Result<linsys::HinfNorm> {
        self.check_len(theta_a)?;
        self.check_len(theta_b)?;
        let ra = self.realization(theta_a)?;
        let rb = self.realization(theta_b)?;
        if theta_a == theta_b {
            return Ok(linsys::HinfNorm {
                value: 0.0,
                upper: 0.0,
                peak_omega: 0.0,
                warning: None,
            });
        }
        let diff = DescriptorRealization::new(
            la::block_diag(&[&ra.e, &rb.e]),
            la::block_diag(&[&ra.a, &rb.a]),
            ndarray::concatenate(ndarray::Axis(0), &[ra.b.view(), rb.b.view()])?,
            ndarray::concatenate(ndarray::Axis(1), &[ra.c.view(), (-&rb.c).view()])?,
        )?;
        linsys::hinf_norm_in_band(&diff, rel_tol, None)
    }

    /// `max_k sigma_max(K(theta_a, j w_k) - K(theta_b, j w_k))` over a grid.
    pub fn difference_peak_on_grid(
        &self,
        theta_a: &[f64],
        theta_b: &[f64],
        omegas: &[f64],
    ) -> Result<f64> {
        let mut peak: f64 = 0.0;
        for &w in omegas {
            let s = c(0.0, w);
            let diff = self.eval(theta_a, s)? - self.eval(theta_b, s)?;
            peak = peak.max(la::sigma_max(diff.view()));
        }
        Ok(peak)
    }

    pub fn to_file(&self) -> StructureFile {
        StructureFile {
            n_i: self.n_i,
            n_o: self.n_o,
            n_p: self.n_p,
            n_z: self.n_z.chunks(self.n_o).map(|r| r.to_vec()).collect(),
            properness: self.properness,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.to_file())?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: StructureFile = toml::from_str(text)?;
        Self::try_from(f)
    }
}

/// Borrowed view of a flattened parameter vector.
#[derive(Debug, Clone)]
pub struct ParamsView<'a> {
    pub beta: &'a [f64],
    /// Numerator parameters, row-major over the entries.
    pub alpha: Vec<&'a [f64]>,
    /// Gains, row-major.
    pub k: &'a [f64],
}

/// Monic `d(beta, s)`: quadratic factors `s^2 + beta_{2l-1} s + beta_{2l}`,
/// times `s + beta_last` when the count is odd.
pub fn denominator_poly(beta: &[f64]) -> Poly {
    factored(beta)
}

/// `gain` times the factored polynomial of `alpha`.
pub fn numerator_poly(alpha: &[f64], gain: f64) -> Poly {
    factored(alpha).scale(gain)
}

/// Structure file: `n_z` is an `n_i x n_o` grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureFile {
    pub n_i: usize,
    pub n_o: usize,
    pub n_p: usize,
    pub n_z: Vec<Vec<usize>>,
    pub properness: Properness,
}

impl TryFrom<StructureFile> for ControllerStructure {
    type Error = Error;

    fn try_from(f: StructureFile) -> Result<Self> {
        if f.n_z.len() != f.n_i || f.n_z.iter().any(|r| r.len() != f.n_o) {
            return Err(Error::DimensionMismatch(format!(
                "n_z must be a {}x{} grid",
                f.n_i, f.n_o
            )));
        }
        Self::new(f.n_i, f.n_o, f.n_p, f.n_z.concat(), f.properness)
    }
}

/// Controller file: parameters plus derived poles and zeros for reading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerFile {
    pub theta: Vec<f64>,
    /// Denominator roots as `[re, im]`; informational, ignored on load.
    #[serde(default)]
    pub poles: Vec<[f64; 2]>,
    pub structure: StructureFile,
    #[serde(default)]
    pub entries: Vec<EntryInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryInfo {
    pub row: usize,
    pub col: usize,
    pub gain: f64,
    pub zeros: Vec<[f64; 2]>,
}

fn root_pairs(p: &Poly) -> Vec<[f64; 2]> {
    if p.is_zero() {
        return Vec::new();
    }
    p.roots()
        .unwrap_or_default()
        .iter()
        .map(|z| [z.re, z.im])
        .collect()
}

pub fn controller_to_toml(structure: &ControllerStructure, theta: &[f64]) -> Result<String> {
    let d = structure.denominator(theta)?;
    let nums = structure.numerators(theta)?;
    let k = structure.split(theta)?.k.to_vec();
    let entries = nums
        .iter()
        .enumerate()
        .map(|(idx, n)| EntryInfo {
            row: idx / structure.n_o + 1,
            col: idx % structure.n_o + 1,
            gain: k[idx],
            zeros: root_pairs(n),
        })
        .collect();
    let file = ControllerFile {
        theta: theta.to_vec(),
        poles: root_pairs(&d),
        structure: structure.to_file(),
        entries,
    };
    Ok(toml::to_string(&file)?)
}

pub fn controller_from_toml(text: &str) -> Result<(ControllerStructure, Vec<f64>)> {
    let f: ControllerFile = toml::from_str(text)?;
    let structure = ControllerStructure::try_from(f.structure)?;
    structure.check_len(&f.theta)?;
    Ok((structure, f.theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THETA_STAR: [f64; 5] = [20.0, 0.0, 36.51, 4.011, 12.618];
    const THETA_INIT: [f64; 5] = [0.2145, 0.1657, 0.5237, 0.2580, 0.8859];
    const THETA_F: [f64; 5] = [15.7511, 0.1370, 25.5729, 2.9401, 14.3566];

    fn dc() -> ControllerStructure {
        ControllerStructure::uniform(1, 1, 2, 2, Properness::Biproper).unwrap()
    }

    fn j(w: f64) -> Complex64 {
        c(0.0, w)
    }

    #[test]
    fn theta_dimensions() {
        let f16 = ControllerStructure::uniform(2, 2, 2, 2, Properness::Biproper).unwrap();
        assert_eq!(f16.theta_dimension(), 14);
        assert_eq!(dc().theta_dimension(), 5);
        let bare = ControllerStructure::uniform(1, 1, 1, 0, Properness::Strict).unwrap();
        assert_eq!(bare.theta_dimension(), 2);
    }

    #[test]
    fn properness_checked_at_construction() {
        assert!(ControllerStructure::uniform(1, 1, 2, 2, Properness::Strict).is_err());
        assert!(ControllerStructure::uniform(1, 1, 2, 3, Properness::Biproper).is_err());
        assert!(ControllerStructure::new(2, 1, 2, vec![1], Properness::Strict).is_err());
    }

    #[test]
    fn polynomial_examples() {
        assert_eq!(denominator_poly(&[20.0, 0.0]).coeffs(), &[1.0, 20.0, 0.0]);
        assert_eq!(denominator_poly(&[3.0]).coeffs(), &[1.0, 3.0]);
        assert_eq!(
            denominator_poly(&[1.0, 2.0, 3.0]).coeffs(),
            &[1.0, 4.0, 5.0, 6.0]
        );
        let n = numerator_poly(&[36.51, 4.011], 12.618);
        let expected = [12.618, 12.618 * 36.51, 12.618 * 4.011];
        for (a, b) in n.coeffs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(numerator_poly(&[1.0, 2.0], 0.0).is_zero());
        assert_eq!(numerator_poly(&[], 2.0).coeffs(), &[2.0]);
    }

    #[test]
    fn ideal_controller_at_unit_frequency() {
        let k = dc().eval(&THETA_STAR, j(1.0)).unwrap()[[0, 0]];
        let expected = 12.618 * c(3.011, 36.51) / c(-1.0, 20.0);
        assert!((k - expected).norm() < 1e-12 * expected.norm());
        assert!((k.norm() - 23.0835).abs() < 1e-3);
    }

    #[test]
    fn zero_gains_give_zero_matrix() {
        let st = ControllerStructure::uniform(2, 2, 2, 1, Properness::Strict).unwrap();
        let mut theta = vec![1.0; st.theta_dimension()];
        for x in &mut theta[st.gain_offset()..] {
            *x = 0.0;
        }
        assert!(st
            .eval(&theta, j(2.0))
            .unwrap()
            .iter()
            .all(|z| z.norm() == 0.0));
    }

    #[test]
    fn low_frequency_gain_of_final_design() {
        let k = dc().eval(&THETA_F, j(1e-7)).unwrap()[[0, 0]];
        let expected = 14.3566 * 2.9401 / 0.1370;
        assert!((k.norm() - expected).abs() < 1e-3 * expected);
        assert!((expected - 308.1).abs() < 0.1);
    }

    #[test]
    fn evaluation_at_denominator_root_fails() {
        assert!(matches!(
            dc().eval(&THETA_STAR, c(0.0, 0.0)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(
            dc().stability_residuals(&THETA_STAR).unwrap(),
            vec![-20.0, -0.0]
        );
        assert!(!dc().is_feasible(&THETA_STAR).unwrap());
        assert_eq!(
            dc().stability_residuals(&THETA_F).unwrap(),
            vec![-15.7511, -0.1370]
        );
        assert!(dc().is_feasible(&THETA_F).unwrap());
        assert!(!dc().is_feasible(&[-1.0, 2.0, 0.0, 0.0, 1.0]).unwrap());
    }

    fn assert_realization_matches(st: &ControllerStructure, theta: &[f64], points: &[Complex64]) {
        let real = st.realization(theta).unwrap();
        for &s in points {
            let direct = st.eval(theta, s).unwrap();
            let via = real.eval(s).unwrap();
            let scale = la::frobenius_sq(direct.view()).sqrt().max(1e-300);
            let err = la::frobenius_sq((&via - &direct).view()).sqrt();
            assert!(err <= 1e-9 * scale, "at {s}: {err} vs {scale}");
        }
    }

    #[test]
    fn strict_first_order_realization() {
        let st = ControllerStructure::uniform(1, 1, 1, 0, Properness::Strict).unwrap();
        let real = st.realization(&[1.0, 1.0]).unwrap();
        assert_eq!(real.order(), 1);
        assert_realization_matches(&st, &[1.0, 1.0], &[j(0.5), c(-0.3, 2.0)]);
    }

    #[test]
    fn biproper_realization_on_grid() {
        let st = dc();
        let real = st.realization(&THETA_F).unwrap();
        assert!(real.order() <= 3);
        let grid: Vec<_> = crate::freq_data::logspace_frequencies(1e-2, 1e2, 50)
            .unwrap()
            .into_iter()
            .map(j)
            .collect();
        assert_realization_matches(&st, &THETA_F, &grid);
    }

    #[test]
    fn mimo_realizations_both_orientations() {
        for (ni, no) in [(2, 2), (1, 3), (3, 1), (2, 3)] {
            let st = ControllerStructure::uniform(ni, no, 3, 3, Properness::Biproper).unwrap();
            let theta: Vec<f64> = (0..st.theta_dimension())
                .map(|k| 0.3 + 0.17 * k as f64)
                .collect();
            assert_realization_matches(&st, &theta, &[j(0.7), c(0.2, -3.0), c(-0.4, 11.0)]);
        }
    }

    #[test]
    fn static_controller_realization() {
        let st = ControllerStructure::uniform(1, 1, 0, 0, Properness::Biproper).unwrap();
        assert_realization_matches(&st, &[2.5], &[j(1.0)]);
        assert!((st.difference_norm(&[2.5], &[1.0], 1e-6).unwrap() - 1.5).abs() < 1e-6);
    }

    #[test]
    fn difference_norm_examples() {
        let st = dc();
        assert_eq!(st.difference_norm(&THETA_F, &THETA_F, 1e-6).unwrap(), 0.0);
        let mut doubled = THETA_F;
        doubled[4] *= 2.0;
        let own = linsys::hinf_norm(&st.realization(&THETA_F).unwrap(), 1e-8).unwrap();
        let diff = st.difference_norm(&THETA_F, &doubled, 1e-8).unwrap();
        assert!((diff - own).abs() <= 1e-6 * own);

        let grid = crate::freq_data::logspace_frequencies(1e-4, 1e4, 40001).unwrap();
        let dense = st
            .difference_peak_on_grid(&THETA_INIT, &THETA_F, &grid)
            .unwrap();
        let exact = st.difference_norm(&THETA_INIT, &THETA_F, 1e-8).unwrap();
        assert!(exact >= dense * (1.0 - 1e-8));
        assert!((exact - dense).abs() <= 1e-4 * exact, "{exact} vs {dense}");
    }

    #[test]
    fn controller_file_round_trip() {
        let text = controller_to_toml(&dc(), &THETA_F).unwrap();
        assert!(text.contains("properness = \"biproper\""));
        let (st, theta) = controller_from_toml(&text).unwrap();
        assert_eq!(st, dc());
        assert_eq!(theta, THETA_F.to_vec());
    }

    proptest! {
        #[test]
        fn conjugate_symmetry(theta in prop::collection::vec(0.05f64..5.0, 5), w in 0.01f64..100.0, sig in -1.0f64..1.0) {
            let s = c(sig, w);
            let a = dc().eval(&theta, s).unwrap()[[0, 0]];
            let b = dc().eval(&theta, s.conj()).unwrap()[[0, 0]];
            prop_assert!((a.conj() - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }

        #[test]
        fn feasible_denominators_are_stable(beta in prop::collection::vec(1e-2f64..1e2, 1..6)) {
            let st = ControllerStructure::uniform(1, 1, beta.len(), 0, Properness::Strict).unwrap();
            let mut theta = beta.clone();
            theta.push(1.0);
            let real = st.realization(&theta).unwrap();
            prop_assert!(linsys::spectral_abscissa(&real).unwrap() < 0.0);
        }
    }
}
