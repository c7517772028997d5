//! The iterative design loop.
//!
//! Each outer iteration measures `gamma_i`, the H-infinity norm of the
//! transfer seen by a controller perturbation around the current stabilizing
//! controller, identified from data. Any stable update with
//! `||K - K_i||_inf < eps / gamma_i` keeps the loop stable (small-gain
//! theorem), so the matching objective is minimized inside that ball. A step
//! is only taken when it is verified feasible and does not increase the
//! objective, which makes the objective sequence nonincreasing.

use std::time::Instant;

use log::{debug, info, warn};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closed_loop::{self, GammaEstimate};
use crate::controller::{ControllerStructure, BETA_MIN};
use crate::error::{Error, Result};
use crate::freq_data::{logspace_frequencies, FrequencyDataset, RationalTransferMatrix};
use crate::la::{self, c};
use crate::linsys;
use crate::optim::{bfgs, BfgsOptions};

/// Options of the inner (subproblem) solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerOptions {
    /// Objective evaluations per subproblem.
    pub max_evals: usize,
    /// Relative central-difference step.
    pub fd_step: f64,
    /// Factor applied to the penalty weight while the norm bound is violated.
    pub penalty_growth: f64,
    pub initial_penalty: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            max_evals: 200,
            fd_step: 1e-6,
            penalty_growth: 10.0,
            initial_penalty: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    /// Fraction of the small-gain radius `1 / gamma_i` allowed per step, in (0, 1].
    pub epsilon: f64,
    /// Stop once an iteration decreases the objective by no more than this.
    pub eta: f64,
    pub max_iter: usize,
    pub svd_rel_tol: f64,
    pub hinf_rel_tol: f64,
    pub inner: InnerOptions,
    pub beta_min: f64,
    pub seed: u64,
    pub init_restarts: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            epsilon: 1.0,
            eta: 1e-9,
            max_iter: 500,
            svd_rel_tol: 1e-10,
            hinf_rel_tol: 1e-6,
            inner: InnerOptions::default(),
            beta_min: BETA_MIN,
            seed: 0,
            init_restarts: 50,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.svd_rel_tol > 0.0 && self.svd_rel_tol < 1.0) {
            return bad(format!(
                "svd_rel_tol must lie in (0, 1), got {}",
                self.svd_rel_tol
            ));
        }
        if !(self.hinf_rel_tol > 0.0 && self.hinf_rel_tol <= 0.1) {
            return bad(format!(
                "hinf_rel_tol must lie in (0, 0.1], got {}",
                self.hinf_rel_tol
            ));
        }
        if !(self.beta_min > 0.0) {
            return bad(format!("beta_min must be positive, got {}", self.beta_min));
        }
        let inner = &self.inner;
        if inner.max_evals < 10
            || !(inner.fd_step > 0.0)
            || !(inner.penalty_growth > 1.0)
            || !(inner.initial_penalty > 0.0)
        {
            return bad("inner solver options out of range".into());
        }
        if self.init_restarts == 0 {
            return bad("init_restarts must be at least 1".into());
        }
        Ok(())
    }
}

/// How a subproblem produced its result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemStatus {
    /// The starting point of the run.
    Initial,
    /// Inner solution accepted as is.
    Accepted,
    /// Inner solution pulled back toward the center to satisfy the checks.
    Shrunk,
    /// Fallback gradient step accepted.
    GradientStep,
    /// No verified improvement: the center is returned.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub objective: f64,
    /// `gamma_i` at this iterate; absent for the final iterate of a run.
    pub gamma: Option<f64>,
    pub theta: Vec<f64>,
    /// `||K(theta_i) - K(theta_{i-1})||_inf` (upper bound used for acceptance).
    pub step_norm: f64,
    /// `eps / gamma_{i-1}`.
    pub radius: f64,
    /// `radius - step_norm`.
    pub norm_margin: f64,
    pub accepted: bool,
    pub status: SubproblemStatus,
    pub closed_loop_stable: bool,
    pub closed_loop_abscissa: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    /// Objective decrease at or below `eta`.
    Converged,
    MaxIterations,
    GammaEstimationFailed {
        message: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub dataset_sha256: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignReport {
    pub stop_reason: StopReason,
    pub final_theta: Vec<f64>,
    pub final_objective: f64,
    pub config: DesignConfig,
    pub provenance: Provenance,
    pub records: Vec<IterationRecord>,
}

impl DesignReport {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// `iter,objective,gamma,norm_margin,accepted,wall_ms`.
    pub fn iteration_log_csv(&self) -> String {
        let mut out = String::from("iter,objective,gamma,norm_margin,accepted,wall_ms\n");
        for r in &self.records {
            let gamma = r.gamma.map(|g| format!("{g:?}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:?},{},{:?},{},{}\n",
                r.index, r.objective, gamma, r.norm_margin, r.accepted, r.wall_ms
            ));
        }
        out
    }
}

/// Precomputed pieces shared by all evaluations within a run.
pub struct Problem<'a> {
    pub data: &'a FrequencyDataset,
    pub structure: &'a ControllerStructure,
    md_samples: Vec<Array2<Complex64>>,
    /// Frequencies of the norm surrogate used inside the subproblem.
    surrogate_grid: Vec<f64>,
}

impl<'a> Problem<'a> {
    pub fn new(
        data: &'a FrequencyDataset,
        md: &RationalTransferMatrix,
        structure: &'a ControllerStructure,
    ) -> Result<Self> {
        let md_samples = closed_loop::reference_samples(data, md)?;
        if structure.n_i() != data.n_inputs() || structure.n_o() != data.n_outputs() {
            return Err(Error::DimensionMismatch(format!(
                "controller is {}x{}, plant data are {}x{}",
                structure.n_i(),
                structure.n_o(),
                data.n_outputs(),
                data.n_inputs()
            )));
        }
        let (lo, hi) = data.band();
        let mut surrogate_grid = logspace_frequencies(lo / 100.0, hi * 100.0, 240)?;
        surrogate_grid.extend(data.omegas());
        surrogate_grid.push(0.0);
        surrogate_grid.sort_by(f64::total_cmp);
        Ok(Problem {
            data,
            structure,
            md_samples,
            surrogate_grid,
        })
    }

    pub fn objective(&self, theta: &[f64]) -> Result<f64> {
        Ok(
            closed_loop::objective_from_samples(
                &self.md_samples,
                self.data,
                self.structure,
                theta,
            )?
            .d,
        )
    }

    fn objective_or_inf(&self, theta: &[f64]) -> f64 {
        self.objective(theta).unwrap_or(f64::INFINITY)
    }

    /// Peak of `sigma_max(K(theta) - K_center)` over the surrogate grid.
    fn surrogate_norm(&self, theta: &[f64], center: &[Array2<Complex64>]) -> f64 {
        let mut peak: f64 = 0.0;
        for (&w, kc) in self.surrogate_grid.iter().zip(center) {
            match self.structure.eval(theta, c(0.0, w)) {
                Ok(k) => peak = peak.max(la::sigma_max((&k - kc).view())),
                Err(_) => return f64::INFINITY,
            }
        }
        peak
    }

    fn controller_on_grid(&self, theta: &[f64]) -> Result<Vec<Array2<Complex64>>> {
        self.surrogate_grid
            .iter()
            .map(|&w| self.structure.eval(theta, c(0.0, w)))
            .collect()
    }

    /// Upper bound on `||K(a) - K(b)||_inf` from the exact norm computation.
    pub fn difference_bound(&self, a: &[f64], b: &[f64], rel_tol: f64) -> Result<f64> {
        let n = self.structure.difference_norm_detailed(a, b, rel_tol)?;
        Ok(if n.upper.is_finite() {
            n.upper
        } else {
            n.value * (1.0 + 1e3 * rel_tol)
        })
    }

    pub fn stability(
        &self,
        theta: &[f64],
        svd_rel_tol: f64,
    ) -> Result<closed_loop::StabilityCheck> {
        closed_loop::verify_closed_loop_stability(self.data, self.structure, theta, svd_rel_tol)
    }
}

/// Maps optimizer coordinates to parameters: `beta = beta_c exp(z)` (floored
/// at `beta_min`), other entries `theta_c + scale * z`.
struct Coordinates {
    center: Vec<f64>,
    scale: Vec<f64>,
    n_p: usize,
    beta_min: f64,
}

impl Coordinates {
    fn new(center: &[f64], n_p: usize, beta_min: f64) -> Self {
        let scale = center
            .iter()
            .enumerate()
            .map(|(j, v)| if j < n_p { 1.0 } else { v.abs().max(0.1) })
            .collect();
        Coordinates {
            center: center.to_vec(),
            scale,
            n_p,
            beta_min,
        }
    }

    fn theta(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, &zj)| {
                if j < self.n_p {
                    (self.center[j] * zj.clamp(-50.0, 50.0).exp()).max(self.beta_min)
                } else {
                    self.center[j] + self.scale[j] * zj
                }
            })
            .collect()
    }
}

/// Result of one subproblem.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Verified bound on `||K(theta) - K(theta_i)||_inf`.
    pub step_norm: f64,
    pub status: SubproblemStatus,
}

/// Minimizes the objective over `||K(theta) - K(theta_i)||_inf < eps/gamma_i`
/// with `beta >= beta_min`. The result is verified with the exact norm and
/// never has a larger objective than `theta_i`.
pub fn solve_subproblem(
    problem: &Problem,
    theta_i: &[f64],
    gamma_i: f64,
    config: &DesignConfig,
) -> Result<StepResult> {
    let d_i = problem.objective(theta_i)?;
    let unchanged = StepResult {
        theta: theta_i.to_vec(),
        objective: d_i,
        step_norm: 0.0,
        status: SubproblemStatus::Unchanged,
    };
    if !(gamma_i > 0.0) {
        return Err(Error::Precondition(format!(
            "gamma must be positive, got {gamma_i}"
        )));
    }
    if problem
        .structure
        .split(theta_i)?
        .beta
        .iter()
        .any(|&b| b < config.beta_min)
    {
        return Err(Error::Precondition(
            "center violates the denominator floor".into(),
        ));
    }
    let radius = config.epsilon / gamma_i;
    if d_i == 0.0 || !radius.is_finite() || radius <= 0.0 {
        return Ok(unchanged);
    }
    let r_eff = 0.95 * radius;
    let coords = Coordinates::new(theta_i, problem.structure.n_p(), config.beta_min);
    let center_k = problem.controller_on_grid(theta_i)?;
    let n = theta_i.len();

    let mut z = vec![0.0; n];
    let mut rho = config.inner.initial_penalty;
    let mut evals = 0;
    let budget = config.inner.max_evals;
    while evals < budget {
        let penalized = |zz: &[f64]| {
            let th = coords.theta(zz);
            let h = problem.surrogate_norm(&th, &center_k);
            if !h.is_finite() {
                return f64::INFINITY;
            }
            let viol = (h / r_eff - 1.0).max(0.0);
            problem.objective_or_inf(&th) / d_i + rho * viol * viol
        };
        let opts = BfgsOptions {
            max_evals: budget - evals,
            fd_step: config.inner.fd_step,
            max_step: 1.0,
        };
        let res = bfgs(penalized, &z, &opts);
        debug!(
            "penalty {rho:.1e}: merit {:.6e} after {} evaluations",
            res.fx, res.evals
        );
        evals += res.evals.max(1);
        z = res.x;
        let h = problem.surrogate_norm(&coords.theta(&z), &center_k);
        if h <= r_eff || budget - evals < 4 * n + 4 {
            break;
        }
        rho *= config.inner.penalty_growth;
    }

    let candidate = coords.theta(&z);
    if let Some(step) = verify_along_segment(problem, theta_i, &candidate, d_i, radius, config)? {
        return Ok(step);
    }

    // fallback: plain descent direction of the objective at the center
    let g = objective_gradient(problem, &coords, d_i, config.inner.fd_step);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax > 0.0 && gmax.is_finite() {
        let dir: Vec<f64> = g.iter().map(|v| -v / gmax).collect();
        let target = coords.theta(&dir);
        if let Some(mut step) =
            verify_along_segment(problem, theta_i, &target, d_i, radius, config)?
        {
            step.status = SubproblemStatus::GradientStep;
            return Ok(step);
        }
    }
    debug!("subproblem found no verified improvement");
    Ok(unchanged)
}

fn objective_gradient(problem: &Problem, coords: &Coordinates, d_i: f64, h: f64) -> Vec<f64> {
    let n = coords.center.len();
    let mut g = vec![0.0; n];
    let mut z = vec![0.0; n];
    for j in 0..n {
        z[j] = h;
        let fp = problem.objective_or_inf(&coords.theta(&z));
        z[j] = -h;
        let fm = problem.objective_or_inf(&coords.theta(&z));
        z[j] = 0.0;
        g[j] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - d_i) / h,
            (false, true) => (d_i - fm) / h,
            _ => 0.0,
        };
    }
    g
}

/// Tries `theta_i + t (target - theta_i)` for `t = 1, 1/2, 1/4, ...` and
/// returns the first point that passes the exact norm check and does not
/// increase the objective.
fn verify_along_segment(
    problem: &Problem,
    theta_i: &[f64],
    target: &[f64],
    d_i: f64,
    radius: f64,
    config: &DesignConfig,
) -> Result<Option<StepResult>> {
    let mut t = 1.0;
    for halving in 0..40 {
        let theta: Vec<f64> = theta_i
            .iter()
            .zip(target)
            .map(|(a, b)| a + t * (b - a))
            .collect();
        t *= 0.5;
        if theta.as_slice() == theta_i {
            break;
        }
        let d = match problem.objective(&theta) {
            Ok(d) => d,
            Err(_) => continue,
        };
        if !(d <= d_i) {
            continue;
        }
        let bound = match problem.difference_bound(&theta, theta_i, config.hinf_rel_tol) {
            Ok(b) => b,
            Err(e) => {
                debug!("difference norm failed: {e}");
                continue;
            }
        };
        if bound < radius {
            if d == d_i {
                // a feasible move with no gain is not worth taking
                return Ok(None);
            }
            let status = if halving == 0 {
                SubproblemStatus::Accepted
            } else {
                SubproblemStatus::Shrunk
            };
            return Ok(Some(StepResult {
                theta,
                objective: d,
                step_norm: bound,
                status,
            }));
        }
    }
    Ok(None)
}

/// `gamma_i` with one retry at a coarser rank cut when the identified model
/// is unstable although the loop itself is verified stable.
pub fn gamma_with_retry(
    problem: &Problem,
    theta: &[f64],
    config: &DesignConfig,
) -> Result<GammaEstimate> {
    let first = closed_loop::estimate_gamma(
        problem.data,
        problem.structure,
        theta,
        config.svd_rel_tol,
        config.hinf_rel_tol,
    );
    match first {
        Err(Error::GammaEstimation(msg)) => {
            let check = problem.stability(theta, config.svd_rel_tol)?;
            if !check.stable {
                return Err(Error::GammaEstimation(msg));
            }
            let tol = (config.svd_rel_tol * 1e3).min(0.5);
            warn!("{msg}; retrying with SVD tolerance {tol:e}");
            closed_loop::estimate_gamma(
                problem.data,
                problem.structure,
                theta,
                tol,
                config.hinf_rel_tol,
            )
        }
        other => other,
    }
}

/// Runs the design loop from a stabilizing `theta_0`.
pub fn run_ldisc(
    data: &FrequencyDataset,
    md: &RationalTransferMatrix,
    structure: &ControllerStructure,
    theta_0: &[f64],
    config: &DesignConfig,
) -> Result<DesignReport> {
    config.validate()?;
    let problem = Problem::new(data, md, structure)?;
    if structure
        .split(theta_0)?
        .beta
        .iter()
        .any(|&b| b < config.beta_min)
    {
        return Err(Error::Precondition(format!(
            "initial denominator parameters must be at least {}",
            config.beta_min
        )));
    }
    let check = problem.stability(theta_0, config.svd_rel_tol)?;
    if !check.stable {
        return Err(Error::Precondition(format!(
            "initial controller does not stabilize the loop (abscissa {:.4e})",
            check.abscissa
        )));
    }

    let start = Instant::now();
    let mut theta = theta_0.to_vec();
    let mut d = problem.objective(&theta)?;
    let mut pending = IterationRecord {
        index: 0,
        objective: d,
        gamma: None,
        theta: theta.clone(),
        step_norm: 0.0,
        radius: f64::INFINITY,
        norm_margin: f64::INFINITY,
        accepted: true,
        status: SubproblemStatus::Initial,
        closed_loop_stable: check.stable,
        closed_loop_abscissa: check.abscissa,
        wall_ms: 0,
    };
    let mut records = Vec::new();
    let mut stop = StopReason::MaxIterations;

    for i in 0..config.max_iter {
        let gamma = match gamma_with_retry(&problem, &theta, config) {
            Ok(g) => g.gamma,
            Err(Error::GammaEstimation(message)) => {
                warn!("stopping: {message}");
                stop = StopReason::GammaEstimationFailed { message };
                break;
            }
            Err(e) => return Err(e),
        };
        pending.gamma = Some(gamma);
        records.push(pending);

        let radius = config.epsilon / gamma;
        let step = solve_subproblem(&problem, &theta, gamma, config)?;
        let delta = d - step.objective;
        let accepted = step.status != SubproblemStatus::Unchanged;
        let check = if accepted {
            problem.stability(&step.theta, config.svd_rel_tol)?
        } else {
            let prev = records.last().expect("just pushed");
            closed_loop::StabilityCheck {
                stable: prev.closed_loop_stable,
                abscissa: prev.closed_loop_abscissa,
                order: 0,
            }
        };
        if !check.stable {
            warn!(
                "iterate {} judged unstable by the identified closed loop (abscissa {:.3e})",
                i + 1,
                check.abscissa
            );
        }
        theta = step.theta;
        d = step.objective;
        info!(
            "iter {:4}  d = {:.6e}  gamma = {:.4e}  step = {:.3e} / {:.3e}  {:?}",
            i + 1,
            d,
            gamma,
            step.step_norm,
            radius,
            step.status
        );
        pending = IterationRecord {
            index: i + 1,
            objective: d,
            gamma: None,
            theta: theta.clone(),
            step_norm: step.step_norm,
            radius,
            norm_margin: radius - step.step_norm,
            accepted,
            status: step.status,
            closed_loop_stable: check.stable,
            closed_loop_abscissa: check.abscissa,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        if delta <= config.eta {
            stop = StopReason::Converged;
            break;
        }
    }
    records.push(pending);

    Ok(DesignReport {
        stop_reason: stop,
        final_objective: d,
        final_theta: theta,
        config: config.clone(),
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").to_string(),
            dataset_sha256: data.content_hash(),
            seed: config.seed,
        },
        records,
    })
}

/// Draws random controllers and pushes the spectral abscissa of the
/// identified closed loop below zero by finite-difference descent; returns
/// the first stabilizing parameter vector.
pub fn initialize_controller(
    data: &FrequencyDataset,
    structure: &ControllerStructure,
    config: &DesignConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_p = structure.n_p();
    let gain_at = structure.gain_offset();
    let n = structure.theta_dimension();
    let mut best = f64::INFINITY;

    let abscissa = |theta: &[f64]| -> f64 {
        match closed_loop::verify_closed_loop_stability(data, structure, theta, config.svd_rel_tol)
        {
            Ok(chk) if chk.abscissa.is_finite() => chk.abscissa,
            Ok(chk) if chk.stable => -1e300,
            _ => f64::INFINITY,
        }
    };

    for restart in 0..config.init_restarts {
        let theta0: Vec<f64> = (0..n)
            .map(|j| {
                if j < gain_at {
                    10f64.powf(rng.random_range(-2.0..2.0))
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        // log coordinates for beta, plain for the rest
        let to_theta = |z: &[f64]| -> Vec<f64> {
            z.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if j < n_p {
                        v.clamp(-50.0, 50.0).exp().max(config.beta_min)
                    } else {
                        v
                    }
                })
                .collect()
        };
        let z0: Vec<f64> = theta0
            .iter()
            .enumerate()
            .map(|(j, &v)| if j < n_p { v.ln() } else { v })
            .collect();

        let a0 = abscissa(&theta0);
        if a0 < -linsys::STABILITY_MARGIN {
            info!("initial controller found on restart {restart} (abscissa {a0:.4e})");
            return Ok(theta0);
        }
        // stop the descent as soon as a stabilizing point is evaluated
        let mut found: Option<Vec<f64>> = None;
        let mut local_best = a0;
        let f = |z: &[f64]| {
            if found.is_some() {
                return f64::NEG_INFINITY;
            }
            let th = to_theta(z);
            let a = abscissa(&th);
            local_best = local_best.min(a);
            if a < -linsys::STABILITY_MARGIN {
                found = Some(th);
                return f64::NEG_INFINITY;
            }
            a
        };
        let opts = BfgsOptions {
            max_evals: 60,
            fd_step: 1e-4,
            max_step: 1.0,
        };
        let _ = bfgs(f, &z0, &opts);
        best = best.min(local_best);
        if let Some(th) = found {
            info!("initial controller found on restart {restart} after local descent");
            return Ok(th);
        }
        debug!("restart {restart}: best abscissa {local_best:.4e}");
    }
    Err(Error::InitializationFailed {
        restarts: config.init_restarts,
        best_abscissa: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::controller::Properness;
    use crate::freq_data::sample_rational;

    fn siso(num: Vec<f64>, den: Vec<f64>, n: usize) -> FrequencyDataset {
        let m = RationalTransferMatrix::siso(num, den).unwrap();
        sample_rational(&m, &logspace_frequencies(1e-2, 1e2, n).unwrap()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(DesignConfig::default().validate().is_ok());
        let bad = DesignConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DesignConfig {
            epsilon: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DesignConfig {
            eta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DesignConfig {
            max_iter: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_file_round_trip_with_defaults() {
        let cfg: DesignConfig =
            toml::from_str("epsilon = 0.5\nseed = 7\n[inner]\nmax_evals = 300\n").unwrap();
        assert_eq!(cfg.epsilon, 0.5);
        assert_eq!(cfg.inner.max_evals, 300);
        assert_eq!(cfg.inner.fd_step, 1e-6);
        assert_eq!(cfg.max_iter, 500);
        let back: DesignConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_radius_returns_center() {
        let case = cases::dc_motor_case();
        let problem = Problem::new(&case.data, &case.reference, &case.structure).unwrap();
        let theta = [0.2145, 0.1657, 0.5237, 0.2580, 0.8859];
        let step =
            solve_subproblem(&problem, &theta, f64::INFINITY, &DesignConfig::default()).unwrap();
        assert_eq!(step.theta, theta.to_vec());
        assert_eq!(step.status, SubproblemStatus::Unchanged);
    }

    #[test]
    fn first_subproblem_decreases_objective() {
        let case = cases::dc_motor_case();
        let cfg = DesignConfig::default();
        let problem = Problem::new(&case.data, &case.reference, &case.structure).unwrap();
        let theta = [0.2145, 0.1657, 0.5237, 0.2580, 0.8859];
        let gamma = gamma_with_retry(&problem, &theta, &cfg).unwrap().gamma;
        let d0 = problem.objective(&theta).unwrap();
        let step = solve_subproblem(&problem, &theta, gamma, &cfg).unwrap();
        assert!(step.objective < d0);
        let exact = case
            .structure
            .difference_norm(&step.theta, &theta, 1e-8)
            .unwrap();
        assert!(exact < cfg.epsilon / gamma);
    }

    #[test]
    fn exact_match_is_a_fixed_point() {
        let case = cases::dc_motor_case();
        // ideal controller with the origin pole moved to the floor
        let mut theta = cases::dc_motor_ideal_theta();
        theta[1] = 1e-8;
        let problem = Problem::new(&case.data, &case.reference, &case.structure).unwrap();
        let d = problem.objective(&theta).unwrap();
        let step = solve_subproblem(&problem, &theta, 1.0, &DesignConfig::default()).unwrap();
        assert!(step.objective <= d);
    }

    #[test]
    fn stable_plant_initializes_quickly() {
        let data = siso(vec![1.0], vec![1.0, 1.0], 20);
        let st = ControllerStructure::uniform(1, 1, 0, 0, Properness::Biproper).unwrap();
        let theta = initialize_controller(&data, &st, &DesignConfig::default()).unwrap();
        assert_eq!(theta.len(), 1);
        assert!(
            closed_loop::verify_closed_loop_stability(&data, &st, &theta, 1e-10)
                .unwrap()
                .stable
        );
    }

    #[test]
    fn unstabilizable_plant_fails_initialization() {
        // 1/(s^2 - s + 1) under static feedback k: s^2 - s + 1 + k is never Hurwitz
        let data = siso(vec![1.0], vec![1.0, -1.0, 1.0], 30);
        let st = ControllerStructure::uniform(1, 1, 0, 0, Properness::Biproper).unwrap();
        let cfg = DesignConfig {
            init_restarts: 5,
            ..Default::default()
        };
        assert!(matches!(
            initialize_controller(&data, &st, &cfg),
            Err(Error::InitializationFailed { restarts: 5, .. })
        ));
    }

    #[test]
    fn initialization_is_deterministic() {
        let case = cases::dc_motor_case();
        let cfg = DesignConfig {
            seed: 3,
            ..Default::default()
        };
        let a = initialize_controller(&case.data, &case.structure, &cfg).unwrap();
        let b = initialize_controller(&case.data, &case.structure, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unstable_start_rejected() {
        let data = siso(vec![1.0], vec![1.0, 1.0], 20);
        let md = RationalTransferMatrix::siso(vec![1.0], vec![1.0, 1.0]).unwrap();
        let st = ControllerStructure::uniform(1, 1, 0, 0, Properness::Biproper).unwrap();
        assert!(matches!(
            run_ldisc(&data, &md, &st, &[-2.0], &DesignConfig::default()),
            Err(Error::Precondition(_))
        ));
    }
}
