//! Built-in design cases: a DC motor speed loop and a coupled 2x2
//! non-minimum-phase plant.

use crate::controller::{ControllerStructure, Properness};
use crate::error::Result;
use crate::freq_data::{
    logspace_frequencies, sample_rational, FrequencyDataset, RationalEntry, RationalTransferMatrix,
};
use crate::poly::Poly;

// DC motor constants
const K_EM: f64 = 0.021;
const FRICTION: f64 = 0.0182;
const RESISTANCE: f64 = 0.56;
const INDUCTANCE: f64 = 5.63e-3;
const INERTIA: f64 = 5e-4;

/// Angular velocity over voltage:
/// `K / (J L s^2 + (f L + J R) s + f R + K^2)`.
pub fn dc_motor_plant() -> RationalTransferMatrix {
    let den = vec![
        INERTIA * INDUCTANCE,
        FRICTION * INDUCTANCE + INERTIA * RESISTANCE,
        FRICTION * RESISTANCE + K_EM * K_EM,
    ];
    RationalTransferMatrix::siso(vec![K_EM], den).expect("valid constant model")
}

/// Second-order reference `1 / ((s/w0)^2 + 2 xi s/w0 + 1)`.
pub fn second_order_reference(w0: f64, xi: f64) -> RationalTransferMatrix {
    RationalTransferMatrix::siso(vec![1.0], vec![1.0 / (w0 * w0), 2.0 * xi / w0, 1.0])
        .expect("valid constant model")
}

/// Critically damped reference with `w0 = 10 rad/s`.
pub fn dc_motor_reference() -> RationalTransferMatrix {
    second_order_reference(10.0, 1.0)
}

/// Classic ideal controller quoted for this motor, `12.618 (s^2 + 36.51 s + 4.011) / (s (s + 20))`.
/// It has a pole at the origin, so it is not an admissible iterate.
pub fn ideal_dc_controller() -> RationalTransferMatrix {
    RationalTransferMatrix::siso(
        vec![12.618, 12.618 * 36.51, 12.618 * 4.011],
        vec![1.0, 20.0, 0.0],
    )
    .expect("valid constant model")
}

/// Parameters of the exact ideal controller for [`dc_motor_plant`] and
/// [`dc_motor_reference`] in the [`dc_motor_structure`] layout, derived from
/// `K = M_d / (P (1 - M_d))`.
pub fn dc_motor_ideal_theta() -> Vec<f64> {
    let plant = dc_motor_plant();
    let den = plant.entry(0, 0).den.coeffs().to_vec();
    let gain = K_EM / den[2];
    let a = den[0] / den[2];
    let b = den[1] / den[2];
    vec![20.0, 0.0, b / a, 1.0 / a, 100.0 * a / gain]
}

/// `theta_5 (s^2 + theta_3 s + theta_4) / (s^2 + theta_1 s + theta_2)`.
pub fn dc_motor_structure() -> ControllerStructure {
    ControllerStructure::uniform(1, 1, 2, 2, Properness::Biproper).expect("valid structure")
}

/// 50 log-spaced frequencies on `[1e-2, 1e2]` rad/s.
pub fn dc_motor_frequencies() -> Vec<f64> {
    logspace_frequencies(1e-2, 1e2, 50).expect("valid range")
}

pub fn dc_motor_data() -> Result<FrequencyDataset> {
    sample_rational(&dc_motor_plant(), &dc_motor_frequencies())
}

/// Decoupled reference `diag(5/(s+5), 0.8/(s+0.8))`.
pub fn f16_reference() -> RationalTransferMatrix {
    let zero = RationalEntry {
        num: Poly::zero(),
        den: Poly::constant(1.0),
    };
    RationalTransferMatrix::new(
        2,
        2,
        vec![
            RationalEntry {
                num: Poly::constant(5.0),
                den: Poly::linear(5.0),
            },
            zero.clone(),
            zero,
            RationalEntry {
                num: Poly::constant(0.8),
                den: Poly::linear(0.8),
            },
        ],
    )
    .expect("valid constant model")
}

/// Coupled stable plant
/// `[[1/(s+1), 2/(s+3)], [1/(s+1), 1/(s+1)]]`
/// with determinant `(1 - s) / ((s+1)^2 (s+3))`: a transmission zero at `s = +1`.
pub fn nmp_demo_plant() -> RationalTransferMatrix {
    let lag = |g: f64, p: f64| RationalEntry {
        num: Poly::constant(g),
        den: Poly::linear(p),
    };
    RationalTransferMatrix::new(
        2,
        2,
        vec![lag(1.0, 1.0), lag(2.0, 3.0), lag(1.0, 1.0), lag(1.0, 1.0)],
    )
    .expect("valid constant model")
}

/// Order-2 biproper 2x2 controller: 14 parameters.
pub fn mismatch_structure() -> ControllerStructure {
    ControllerStructure::uniform(2, 2, 2, 2, Properness::Biproper).expect("valid structure")
}

/// 200 log-spaced frequencies on `[1e-2, 1e2]` rad/s.
pub fn mismatch_frequencies() -> Vec<f64> {
    logspace_frequencies(1e-2, 1e2, 200).expect("valid range")
}

pub fn mismatch_data() -> Result<FrequencyDataset> {
    sample_rational(&nmp_demo_plant(), &mismatch_frequencies())
}

/// A ready-to-run design problem.
#[derive(Debug, Clone)]
pub struct DesignCase {
    pub name: &'static str,
    pub plant: RationalTransferMatrix,
    pub reference: RationalTransferMatrix,
    pub structure: ControllerStructure,
    pub data: FrequencyDataset,
}

pub fn dc_motor_case() -> DesignCase {
    DesignCase {
        name: "dc-motor",
        plant: dc_motor_plant(),
        reference: dc_motor_reference(),
        structure: dc_motor_structure(),
        data: dc_motor_data().expect("plant has no poles on the grid"),
    }
}

pub fn mismatch_case() -> DesignCase {
    DesignCase {
        name: "mismatch",
        plant: nmp_demo_plant(),
        reference: f16_reference(),
        structure: mismatch_structure(),
        data: mismatch_data().expect("plant has no poles on the grid"),
    }
}

/// Looks a case up by its CLI name.
pub fn case_by_name(name: &str) -> Option<DesignCase> {
    match name {
        "dc-motor" => Some(dc_motor_case()),
        "mismatch" => Some(mismatch_case()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_loop::{closed_loop_samples, matching_objective};
    use crate::la::c;

    #[test]
    fn dc_motor_constants() {
        let p = dc_motor_plant();
        let dc = p.eval(c(0.0, 0.0)).unwrap()[[0, 0]].re;
        assert!((dc - 0.021 / (0.0182 * 0.56 + 0.021 * 0.021)).abs() < 1e-14);
        assert!((dc - 1.9750).abs() < 1e-4);
        let den = p.entry(0, 0).den.coeffs();
        assert!((den[0] / den[2] - 2.647e-4).abs() < 1e-7);
        let roots = p.entry(0, 0).den.roots().unwrap();
        assert!(roots.iter().all(|r| r.re < 0.0));
        assert_eq!(p.entry(0, 0).num.degree(), 0);
    }

    #[test]
    fn reference_examples() {
        let md = dc_motor_reference();
        assert!((md.eval(c(0.0, 0.0)).unwrap()[[0, 0]] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((md.eval(c(0.0, 10.0)).unwrap()[[0, 0]].norm() - 0.5).abs() < 1e-15);
        let roots = md.entry(0, 0).den.roots().unwrap();
        assert!(roots.iter().all(|r| (r - c(-10.0, 0.0)).norm() < 1e-6));
    }

    #[test]
    fn ideal_controller_poles_and_gain() {
        let k = ideal_dc_controller();
        let e = k.entry(0, 0);
        assert_eq!(e.num.leading(), 12.618);
        let poles = e.den.roots().unwrap();
        assert!((poles[0] - c(-20.0, 0.0)).norm() < 1e-12);
        assert!(poles[1].norm() < 1e-12);
    }

    #[test]
    fn derived_ideal_theta_matches_exactly() {
        let case = dc_motor_case();
        let theta = dc_motor_ideal_theta();
        let m = closed_loop_samples(&case.data, &case.structure, &theta).unwrap();
        for (mk, w) in m.iter().zip(case.data.omegas()) {
            let md = case.reference.eval(c(0.0, w)).unwrap()[[0, 0]];
            assert!((mk[[0, 0]] - md).norm() <= 1e-9 * md.norm());
        }
        let d = matching_objective(&case.data, &case.reference, &case.structure, &theta)
            .unwrap()
            .d;
        assert!(d <= 1e-15, "{d}");
        // numerator coefficients pinned to four digits
        assert!((theta[2] - 135.87).abs() < 0.01 && (theta[3] - 3777.3).abs() < 0.1);
    }

    #[test]
    fn f16_reference_examples() {
        let md = f16_reference();
        let at0 = md.eval(c(0.0, 0.0)).unwrap();
        assert!(
            (at0[[0, 0]] - c(1.0, 0.0)).norm() < 1e-15
                && (at0[[1, 1]] - c(1.0, 0.0)).norm() < 1e-15
        );
        let at3 = md.eval(c(0.3, 3.0)).unwrap();
        assert_eq!(at3[[0, 1]], c(0.0, 0.0));
        assert_eq!(at3[[1, 0]], c(0.0, 0.0));
    }

    #[test]
    fn nmp_plant_zero_and_poles() {
        let p = nmp_demo_plant();
        let at1 = p.eval(c(1.0, 0.0)).unwrap();
        let det = at1[[0, 0]] * at1[[1, 1]] - at1[[0, 1]] * at1[[1, 0]];
        assert!(det.norm() < 1e-15);
        for e in p.entries() {
            assert!(e.den.roots().unwrap().iter().all(|r| r.re < 0.0));
        }
        let at0 = p.eval(c(0.0, 0.0)).unwrap();
        assert!(at0[[0, 1]].norm() > 0.1 && at0[[1, 0]].norm() > 0.1);
    }

    #[test]
    fn grids_regenerate_identically() {
        assert_eq!(dc_motor_frequencies(), dc_motor_frequencies());
        assert_eq!(mismatch_frequencies().len(), 200);
        assert_eq!(mismatch_data().unwrap(), mismatch_data().unwrap());
    }
}
