//! Seeded randomized property suites. Each property draws its cases from
//! its own ChaCha stream, so adding a property never perturbs the others.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    average_equilibrium, average_error_rhs, finite_diff_jacobian, jacobian_j11, reduced_jacobian,
    safety_report, spectral_report, AnalysisError,
};
use crate::dynamics::{average_rhs, reduced_rhs, AlgorithmConfig, AverageState};
use crate::integrate::{numeric_average, simulate_reduced, IntegrationSettings};
use crate::problem::PlantModel;
use crate::random::{
    random_average_state, random_config, random_dimension, random_plant, rng_from_seed,
};

pub const AVERAGING_TOL: f64 = 1e-8;
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
pub const GAMMA_TOL: f64 = 1e-12;
pub const JACOBIAN_TOL: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-6;
pub const SAFETY_TOL: f64 = 1e-6;
pub const MAX_DIM: usize = 5;
/// Dimension cap for the quadrature suite, which is the costly one.
pub const MAX_DIM_AVERAGING: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    AveragingOracle,
    EquilibriumResidual,
    SpectralStructure,
    JacobianOracle,
    ReducedSafety,
}

impl Property {
    pub const ALL: [Property; 5] = [
        Property::AveragingOracle,
        Property::EquilibriumResidual,
        Property::SpectralStructure,
        Property::JacobianOracle,
        Property::ReducedSafety,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::AveragingOracle => "averaging_oracle",
            Property::EquilibriumResidual => "equilibrium_residual",
            Property::SpectralStructure => "spectral_structure",
            Property::JacobianOracle => "jacobian_oracle",
            Property::ReducedSafety => "reduced_safety",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub property: Property,
    pub trials: usize,
    /// Largest observed value of the property's error metric.
    pub worst: f64,
    /// First failing trial and why.
    pub failure: Option<(usize, String)>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub results: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(PropertyResult::passed)
    }

    pub fn first_failure(&self) -> Option<&PropertyResult> {
        self.results.iter().find(|r| !r.passed())
    }

    pub fn render(&self) -> String {
        let mut out = format!("verify seed={} trials={}\n", self.seed, self.trials);
        for r in &self.results {
            let status = if r.passed() { "pass" } else { "FAIL" };
            let _ = write!(
                out,
                "{:<22} {status}  worst={:.6e}",
                r.property.name(),
                r.worst
            );
            if let Some((trial, msg)) = &r.failure {
                let _ = write!(out, "  trial={trial}: {msg}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "result: {}", if self.passed() { "pass" } else { "FAIL" });
        out
    }
}

fn stream_rng(seed: u64, property: Property) -> ChaCha8Rng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(property.stream());
    rng
}

/// Largest `|numeric − analytic| / max(|analytic|, 1)` over all components.
pub fn averaging_error(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    xa: &AverageState,
) -> Result<f64, String> {
    let num = numeric_average(plant, cfg, xa).map_err(|e| e.to_string())?;
    let ana = average_rhs(plant, cfg, xa).map_err(|e| e.to_string())?;
    Ok(num
        .to_vector()
        .iter()
        .zip(ana.to_vector().iter())
        .map(|(n, a)| (n - a).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Returns the residual norm after checking `η_h > 0` and `γ = 1/‖h1‖²`.
pub fn equilibrium_check(plant: &PlantModel, cfg: &AlgorithmConfig) -> Result<f64, String> {
    let eq = average_equilibrium(plant, cfg).map_err(|e| e.to_string())?;
    let residual = average_rhs(plant, cfg, &eq.to_average_state())
        .map_err(|e| e.to_string())?
        .to_vector()
        .norm();
    if !(residual <= EQUILIBRIUM_TOL) {
        return Err(format!("residual {residual:e}"));
    }
    if !(eq.eta_h_ae > 0.0) {
        return Err(format!("eta_h = {:e} not positive", eq.eta_h_ae));
    }
    let gamma_err = (eq.gamma_ae - 1.0 / plant.h1_norm_sq()).abs();
    if !(gamma_err <= GAMMA_TOL) {
        return Err(format!("gamma off by {gamma_err:e}"));
    }
    Ok(residual)
}

/// Returns the largest scaled pairing residual.
pub fn spectral_case(plant: &PlantModel, cfg: &AlgorithmConfig) -> Result<f64, String> {
    let eq = average_equilibrium(plant, cfg).map_err(|e| e.to_string())?;
    let rep = spectral_report(plant, cfg, &eq);
    let worst = rep
        .pairing_residuals
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let fail = if !rep.hurwitz {
        Some("J11 not Hurwitz")
    } else if !rep.omega_f_eigen_found {
        Some("-omega_f missing from sigma(J11)")
    } else if !rep.z_real_positive {
        Some("sigma(Z) not real positive")
    } else if !rep.pairing_complete {
        Some("2-to-1 pairing incomplete")
    } else {
        None
    };
    match fail {
        Some(msg) => Err(format!("{msg} (worst residual {worst:e})")),
        None => Ok(worst),
    }
}

fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(f64::MIN_POSITIVE)
}

/// Relative mismatch of `(J11, J_r)` against central differences.
pub fn jacobian_errors(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
) -> Result<(f64, f64), AnalysisError> {
    let eq = average_equilibrium(plant, cfg)?;
    let n = plant.dimension();
    let j11 = jacobian_j11(plant, cfg, &eq);
    let fd = finite_diff_jacobian(
        |x: &DVector<f64>| average_error_rhs(plant, cfg, &eq, x),
        &DVector::zeros(3 * n + 3),
        FD_STEP,
    )?;
    let block = fd.view((0, 0), (2 * n + 1, 2 * n + 1)).into_owned();
    let jr = reduced_jacobian(plant, cfg, &eq);
    let fd_r = finite_diff_jacobian(
        |x: &DVector<f64>| reduced_rhs(plant, cfg, x),
        &eq.theta_tilde_ae,
        FD_STEP,
    )?;
    Ok((relative_gap(&j11, &block), relative_gap(&jr, &fd_r)))
}

/// Integrates the reduced model and returns `−worst_violation`.
pub fn reduced_safety_case(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    theta_tilde0: &DVector<f64>,
    settings: &IntegrationSettings,
) -> Result<f64, String> {
    let traj = simulate_reduced(plant, cfg, theta_tilde0, settings).map_err(|e| e.to_string())?;
    let rep = safety_report(&traj, cfg.c, &plant.constrained_minimum()).map_err(|e| e.to_string())?;
    Ok(-rep.worst_violation)
}

fn run_property(seed: u64, trials: usize, property: Property) -> PropertyResult {
    let mut rng = stream_rng(seed, property);
    let mut worst = 0.0f64;
    let mut failure = None;
    for trial in 0..trials {
        let max_n = match property {
            Property::AveragingOracle => MAX_DIM_AVERAGING,
            _ => MAX_DIM,
        };
        let n = random_dimension(&mut rng, max_n);
        let plant = random_plant(&mut rng, n);
        let cfg = random_config(&mut rng, n);
        let outcome: Result<f64, String> = match property {
            Property::AveragingOracle => {
                let xa = random_average_state(&mut rng, n);
                averaging_error(&plant, &cfg, &xa).and_then(|e| {
                    if e <= AVERAGING_TOL {
                        Ok(e)
                    } else {
                        Err(format!("relative error {e:e}"))
                    }
                })
            }
            Property::EquilibriumResidual => equilibrium_check(&plant, &cfg),
            Property::SpectralStructure => spectral_case(&plant, &cfg),
            Property::JacobianOracle => match jacobian_errors(&plant, &cfg) {
                Ok((a, b)) if a <= JACOBIAN_TOL && b <= JACOBIAN_TOL => Ok(a.max(b)),
                Ok((a, b)) => Err(format!("J11 gap {a:e}, J_r gap {b:e}")),
                Err(e) => Err(e.to_string()),
            },
            Property::ReducedSafety => {
                let start = DVector::from_fn(n, |_, _| {
                    2.0 * rand_distr::Distribution::<f64>::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    )
                });
                let settings = IntegrationSettings::new(1e-2, 20.0, 10, 1e6)
                    .expect("constant settings are valid");
                reduced_safety_case(&plant, &cfg, &start, &settings).and_then(|v| {
                    if v <= SAFETY_TOL {
                        Ok(v.max(0.0))
                    } else {
                        Err(format!("envelope violated by {v:e}"))
                    }
                })
            }
        };
        match outcome {
            Ok(metric) => worst = worst.max(metric),
            Err(msg) => {
                failure = Some((trial, msg));
                break;
            }
        }
    }
    PropertyResult {
        property,
        trials,
        worst,
        failure,
    }
}

/// Runs every property for `trials` cases. `trials` must be positive.
pub fn run_properties(seed: u64, trials: usize) -> VerifyReport {
    assert!(trials > 0, "trials must be positive");
    VerifyReport {
        seed,
        trials,
        results: Property::ALL
            .iter()
            .map(|&p| run_property(seed, trials, p))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes_and_is_deterministic() {
        let a = run_properties(7, 5);
        assert!(a.passed(), "{}", a.render());
        let b = run_properties(7, 5);
        assert_eq!(a.render(), b.render());
        assert_eq!(a.results.len(), Property::ALL.len());
    }

    #[test]
    fn render_marks_failures() {
        let mut rep = run_properties(1, 1);
        rep.results[2].failure = Some((0, "synthetic".into()));
        let text = rep.render();
        assert!(text.contains("spectral_structure     FAIL"));
        assert!(text.ends_with("result: FAIL\n"));
        assert_eq!(rep.first_failure().unwrap().property, Property::SpectralStructure);
    }
}
