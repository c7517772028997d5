//! Closed-loop quantities computed directly from plant frequency data.
//!
//! With plant samples `Phi_k` (`n_o x n_i`) and a controller `K` (`n_i x n_o`)
//! in negative feedback, the complementary sensitivity at each sample is
//! `M_k = (I + Phi_k K)^{-1} Phi_k K`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::controller::ControllerStructure;
use crate::error::{Error, Result};
use crate::freq_data::{FrequencyDataset, FrequencySample, RationalTransferMatrix};
use crate::la::{self, c};
use crate::linsys;
use crate::loewner;

/// Return differences with reciprocal condition below this are ill-posed.
const ILL_POSED_RCOND: f64 = 1e-12;

/// Value of the matching objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    /// Mean of `per_frequency`.
    pub d: f64,
    /// `||M_d(j w_k) - M(K, j w_k)||_F^2`.
    pub per_frequency: Vec<f64>,
}

fn identity(n: usize) -> Array2<Complex64> {
    Array2::eye(n).mapv(|x: f64| c(x, 0.0))
}

/// `(I + Phi K)^{-1}` at one frequency.
fn return_difference_inverse(
    phi: &Array2<Complex64>,
    k: &Array2<Complex64>,
    omega: f64,
) -> Result<Array2<Complex64>> {
    let n_o = phi.nrows();
    let rd = identity(n_o) + phi.dot(k);
    match la::inverse_rcond(&rd) {
        Some((inv, rc)) if rc >= ILL_POSED_RCOND => Ok(inv),
        _ => Err(Error::IllPosed { omega }),
    }
}

fn check_shapes(data: &FrequencyDataset, structure: &ControllerStructure) -> Result<()> {
    if structure.n_i() != data.n_inputs() || structure.n_o() != data.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "controller is {}x{} but the plant data are {}x{} (controller must be n_i x n_o)",
            structure.n_i(),
            structure.n_o(),
            data.n_outputs(),
            data.n_inputs()
        )));
    }
    Ok(())
}

/// `M_k = (I + Phi_k K(j w_k))^{-1} Phi_k K(j w_k)` for every sample.
pub fn closed_loop_samples(
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    theta: &[f64],
) -> Result<Vec<Array2<Complex64>>> {
    check_shapes(data, structure)?;
    data.samples()
        .iter()
        .map(|smp| {
            let k = structure.eval(theta, c(0.0, smp.omega))?;
            let inv = return_difference_inverse(&smp.response, &k, smp.omega)?;
            Ok(inv.dot(&smp.response.dot(&k)))
        })
        .collect()
}

/// Samples of the desired closed loop at the data frequencies.
pub fn reference_samples(
    data: &FrequencyDataset,
    md: &RationalTransferMatrix,
) -> Result<Vec<Array2<Complex64>>> {
    if md.n_outputs() != data.n_outputs() || md.n_inputs() != data.n_outputs() {
        return Err(Error::DimensionMismatch(format!(
            "reference model is {}x{}, the closed loop is {}x{}",
            md.n_outputs(),
            md.n_inputs(),
            data.n_outputs(),
            data.n_outputs()
        )));
    }
    data.samples()
        .iter()
        .map(|s| md.eval(c(0.0, s.omega)))
        .collect()
}

/// Mean squared Frobenius mismatch against precomputed reference samples.
pub fn objective_from_samples(
    md_samples: &[Array2<Complex64>],
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    theta: &[f64],
) -> Result<ObjectiveValue> {
    let m = closed_loop_samples(data, structure, theta)?;
    let per_frequency: Vec<f64> = m
        .iter()
        .zip(md_samples)
        .map(|(mk, mdk)| la::frobenius_sq((mdk - mk).view()))
        .collect();
    let d = per_frequency.iter().sum::<f64>() / per_frequency.len() as f64;
    Ok(ObjectiveValue { d, per_frequency })
}

/// `d = (1/N) sum_k ||M_d(j w_k) - M_k||_F^2`.
pub fn matching_objective(
    data: &FrequencyDataset,
    md: &RationalTransferMatrix,
    structure: &ControllerStructure,
    theta: &[f64],
) -> Result<ObjectiveValue> {
    objective_from_samples(&reference_samples(data, md)?, data, structure, theta)
}

/// Samples of the transfer seen by a controller perturbation:
/// `G_k = (I - M_k) Phi_k = (I + Phi_k K)^{-1} Phi_k`.
pub fn g_samples(
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    theta: &[f64],
) -> Result<FrequencyDataset> {
    check_shapes(data, structure)?;
    data.map_responses(|omega, phi| {
        let k = structure.eval(theta, c(0.0, omega))?;
        Ok(return_difference_inverse(phi, &k, omega)?.dot(phi))
    })
}

/// Outcome of an identified-norm estimate.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub gamma: f64,
    /// Order of the identified model.
    pub order: usize,
    pub abscissa: f64,
    pub warnings: Vec<String>,
}

/// `gamma = ||G^||_inf` with `G^` identified from [`g_samples`].
pub fn estimate_gamma(
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    theta: &[f64],
    svd_rel_tol: f64,
    hinf_rel_tol: f64,
) -> Result<GammaEstimate> {
    let g = g_samples(data, structure, theta)?;
    let model = loewner::realize(g.samples(), svd_rel_tol)?;
    let abscissa = linsys::spectral_abscissa(&model.realization)?;
    if abscissa >= -linsys::STABILITY_MARGIN {
        return Err(Error::GammaEstimation(format!(
            "identified model of order {} is unstable (spectral abscissa {abscissa:.4e}); \
             the loop may not be stabilized or the data are insufficient",
            model.order()
        )));
    }
    let norm = linsys::hinf_norm_in_band(&model.realization, hinf_rel_tol, Some(data.band()))?;
    let mut warnings = model.warnings.clone();
    warnings.extend(norm.warning);
    Ok(GammaEstimate {
        gamma: norm.value,
        order: model.order(),
        abscissa,
        warnings,
    })
}

/// Closed-loop stability judged on the model identified from `M` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCheck {
    pub stable: bool,
    pub abscissa: f64,
    pub order: usize,
}

pub fn verify_closed_loop_stability(
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    theta: &[f64],
    svd_rel_tol: f64,
) -> Result<StabilityCheck> {
    let m = closed_loop_samples(data, structure, theta)?;
    stability_of_samples(data, m, svd_rel_tol)
}

pub(crate) fn stability_of_samples(
    data: &FrequencyDataset,
    m: Vec<Array2<Complex64>>,
    svd_rel_tol: f64,
) -> Result<StabilityCheck> {
    if m.iter().all(|mk| mk.iter().all(|z| z.norm() == 0.0)) {
        return Ok(StabilityCheck {
            stable: true,
            abscissa: f64::NEG_INFINITY,
            order: 0,
        });
    }
    let samples: Vec<FrequencySample> = data
        .samples()
        .iter()
        .zip(m)
        .map(|(s, response)| FrequencySample {
            omega: s.omega,
            response,
        })
        .collect();
    let model = loewner::realize(&samples, svd_rel_tol)?;
    let abscissa = linsys::spectral_abscissa(&model.realization)?;
    Ok(StabilityCheck {
        stable: abscissa < -linsys::STABILITY_MARGIN,
        abscissa,
        order: model.order(),
    })
}

/// Plant data scaled by `(j w + a) / (j w)`, the inverse of `F(s) = s/(s + a)`.
/// Designing for the filtered plant and cascading `F^{-1}` recovers an
/// integral action.
pub fn filter_plant_for_integrator(data: &FrequencyDataset, a: f64) -> Result<FrequencyDataset> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "filter corner must be a positive number, got {a}"
        )));
    }
    data.map_responses(|omega, phi| {
        let s = c(0.0, omega);
        Ok(phi * ((s + a) / s))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Properness;
    use crate::freq_data::{logspace_frequencies, sample_rational};
    use ndarray::array;
    use proptest::prelude::*;

    fn siso_data(num: Vec<f64>, den: Vec<f64>, n: usize) -> FrequencyDataset {
        let m = RationalTransferMatrix::siso(num, den).unwrap();
        sample_rational(&m, &logspace_frequencies(1e-2, 1e2, n).unwrap()).unwrap()
    }

    fn static_gain() -> ControllerStructure {
        ControllerStructure::uniform(1, 1, 0, 0, Properness::Biproper).unwrap()
    }

    #[test]
    fn zero_controller_gives_zero_loop() {
        let data = siso_data(vec![1.0], vec![1.0, 1.0], 10);
        let m = closed_loop_samples(&data, &static_gain(), &[0.0]).unwrap();
        assert!(m.iter().all(|mk| mk[[0, 0]].norm() == 0.0));
        let g = g_samples(&data, &static_gain(), &[0.0]).unwrap();
        assert_eq!(g, data);
        let chk = verify_closed_loop_stability(&data, &static_gain(), &[0.0], 1e-10).unwrap();
        assert!(chk.stable);
        assert_eq!(chk.abscissa, f64::NEG_INFINITY);
    }

    #[test]
    fn unit_loop_gain_gives_one_half() {
        // Phi = 1 everywhere, K = 1
        let data = siso_data(vec![1.0], vec![1.0], 4);
        let m = closed_loop_samples(&data, &static_gain(), &[1.0]).unwrap();
        assert!(m.iter().all(|mk| (mk[[0, 0]] - c(0.5, 0.0)).norm() < 1e-15));
        let g = g_samples(&data, &static_gain(), &[1.0]).unwrap();
        assert!(g
            .samples()
            .iter()
            .all(|s| (s.response[[0, 0]] - c(0.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn objective_with_zero_controller_is_reference_energy() {
        let data = siso_data(vec![1.0], vec![1.0, 1.0], 12);
        let md = RationalTransferMatrix::siso(vec![1.0], vec![0.01, 0.2, 1.0]).unwrap();
        let obj = matching_objective(&data, &md, &static_gain(), &[0.0]).unwrap();
        let expected: f64 = data
            .omegas()
            .iter()
            .map(|&w| md.eval(c(0.0, w)).unwrap()[[0, 0]].norm_sqr())
            .sum::<f64>()
            / 12.0;
        assert!((obj.d - expected).abs() < 1e-15);
        assert_eq!(obj.per_frequency.len(), 12);
    }

    #[test]
    fn ill_posed_loop_names_frequency() {
        // Phi = -1, K = 1: I + Phi K = 0
        let data = siso_data(vec![-1.0], vec![1.0], 3);
        match closed_loop_samples(&data, &static_gain(), &[1.0]).unwrap_err() {
            Error::IllPosed { omega } => assert_eq!(omega, 1e-2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn gamma_of_first_order_lag() {
        let data = siso_data(vec![1.0], vec![1.0, 1.0], 20);
        let est = estimate_gamma(&data, &static_gain(), &[0.0], 1e-10, 1e-8).unwrap();
        assert!((est.gamma - 1.0).abs() < 1e-6, "{}", est.gamma);
    }

    #[test]
    fn destabilizing_gain_detected() {
        // 1/(s+1) with K = -2: closed-loop pole at s = 1
        let data = siso_data(vec![1.0], vec![1.0, 1.0], 30);
        let chk = verify_closed_loop_stability(&data, &static_gain(), &[-2.0], 1e-10).unwrap();
        assert!(!chk.stable);
        assert!((chk.abscissa - 1.0).abs() < 1e-6);
        assert!(matches!(
            estimate_gamma(&data, &static_gain(), &[-2.0], 1e-10, 1e-6),
            Err(Error::GammaEstimation(_))
        ));
        let chk = verify_closed_loop_stability(&data, &static_gain(), &[2.0], 1e-10).unwrap();
        assert!(chk.stable);
        assert!((chk.abscissa + 3.0).abs() < 1e-6);
    }

    #[test]
    fn integrator_filter_multiplier() {
        let data = siso_data(vec![1.0], vec![1.0], 3);
        let f = filter_plant_for_integrator(&data, 1.0).unwrap();
        let w = data.omegas()[1];
        let expected = (c(0.0, w) + 1.0) / c(0.0, w);
        assert!((f.samples()[1].response[[0, 0]] - expected).norm() < 1e-15);
        let at_one = (c(0.0, 1.0) + 1.0) / c(0.0, 1.0);
        assert!((at_one - c(1.0, -1.0)).norm() < 1e-15);
        let tiny = filter_plant_for_integrator(&data, 1e-12).unwrap();
        assert!((tiny.samples()[2].response[[0, 0]] - c(1.0, 0.0)).norm() < 1e-10);
        assert!(filter_plant_for_integrator(&data, 0.0).is_err());
    }

    #[test]
    fn mimo_loop_and_perturbation_transfer() {
        let phi = array![[c(1.0, 0.5), c(0.2, 0.0)], [c(-0.3, 0.1), c(0.8, -0.4)]];
        let data = FrequencyDataset::new(vec![
            FrequencySample {
                omega: 1.0,
                response: phi.clone(),
            },
            FrequencySample {
                omega: 2.0,
                response: phi.clone(),
            },
        ])
        .unwrap();
        let st = ControllerStructure::uniform(2, 2, 0, 0, Properness::Biproper).unwrap();
        let theta = [0.5, -0.2, 0.1, 1.5];
        let k = array![[c(0.5, 0.0), c(-0.2, 0.0)], [c(0.1, 0.0), c(1.5, 0.0)]];
        let m = &closed_loop_samples(&data, &st, &theta).unwrap()[0];
        // push-through: (I + Phi K)^{-1} Phi K = Phi K (I + Phi K)^{-1}
        let inv = la::inverse_rcond(&(identity(2) + phi.dot(&k))).unwrap().0;
        let other = phi.dot(&k).dot(&inv);
        assert!((m - &other).iter().all(|z| z.norm() < 1e-12));
        // G = (I - M) Phi = Phi (I + K Phi)^{-1}
        let g = g_samples(&data, &st, &theta).unwrap().samples()[0]
            .response
            .clone();
        let inv2 = la::inverse_rcond(&(identity(2) + k.dot(&phi))).unwrap().0;
        assert!((&g - &phi.dot(&inv2)).iter().all(|z| z.norm() < 1e-12));
    }

    proptest! {
        #[test]
        fn scalar_formula_agrees(re in -5.0f64..5.0, im in -5.0f64..5.0, gain in -3.0f64..3.0) {
            let phi = array![[c(re, im)]];
            let l = c(re, im) * gain;
            prop_assume!((l + 1.0).norm() > 1e-3);
            let data = FrequencyDataset::new(vec![
                FrequencySample { omega: 1.0, response: phi.clone() },
                FrequencySample { omega: 2.0, response: phi },
            ]).unwrap();
            let m = closed_loop_samples(&data, &static_gain(), &[gain]).unwrap();
            let scalar = l / (l + 1.0);
            prop_assert!((m[0][[0, 0]] - scalar).norm() <= 1e-12 * (1.0 + scalar.norm()));
        }
    }
}
