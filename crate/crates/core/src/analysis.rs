//! Equilibrium of the average system, its linearization, numeric checks
//! of the spectral structure, and trajectory safety reports.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{self, AlgorithmConfig, AverageState, DynamicsError};
use crate::integrate::Trajectory;
use crate::problem::{ConstrainedOptimum, PlantModel};
use crate::signals::smooth_max_slope;

/// Relative tolerance for `−ω_f ∈ σ(J11)` and for the pairing residuals.
pub const EIGEN_MATCH_TOL: f64 = 1e-8;
/// `|Im λ̄| ≤ Z_REAL_TOL·|λ̄|` counts as real.
pub const Z_REAL_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("equilibrium residual {residual:e} exceeds {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("eigenvalue {index} of J11 has no partner in sigma(Z) (best residual {residual:e})")]
    PairingFailure { index: usize, residual: f64 },
    #[error("J11 is not Hurwitz: max real part {max_real:e}")]
    HurwitzViolation { max_real: f64 },
    #[error("-omega_f is not an eigenvalue of J11 (closest distance {distance:e})")]
    MissingFilterEigenvalue { distance: f64 },
    #[error("sigma(Z) is not real and positive: {value}")]
    ZNotRealPositive { value: Complex<f64> },
    #[error("finite-difference step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("non-finite entry in finite-difference column {0}")]
    NonFiniteEntry(usize),
    #[error("the Newton equilibrium is defined for scalar plants only, got n = {0}")]
    NotScalar(usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Unique equilibrium of the average system.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub theta_tilde_ae: DVector<f64>,
    pub g_j_ae: DVector<f64>,
    pub eta_j_ae: f64,
    pub g_h_ae: DVector<f64>,
    pub eta_h_ae: f64,
    pub gamma_ae: f64,
    /// `(c/(k‖h1‖²))·h1ᵀH⁻¹h1`.
    pub d: f64,
    /// Scalar with `G_J = c1·h1`.
    pub c1: f64,
}

impl Equilibrium {
    pub fn to_average_state(&self) -> AverageState {
        AverageState {
            theta_tilde_a: self.theta_tilde_ae.clone(),
            g_j_a: self.g_j_ae.clone(),
            eta_j_a: self.eta_j_ae,
            g_h_a: self.g_h_ae.clone(),
            eta_h_a: self.eta_h_ae,
            gamma_a: self.gamma_ae,
        }
    }

    /// Parameter value `θ* + θ̃ᵃ′ᵉ` in plant coordinates.
    pub fn theta(&self, plant: &PlantModel) -> DVector<f64> {
        &self.theta_tilde_ae + plant.theta_star()
    }
}

/// Solves `4dν² + 4ch0·ν − δ = 0` for its positive root, which is the
/// equilibrium condition with the smooth max expanded. Regular at `h0 = 0`.
fn positive_nu(c: f64, h0: f64, d: f64, delta: f64) -> f64 {
    let root = (c * c * h0 * h0 + d * delta).sqrt();
    if h0 > 0.0 {
        0.5 * delta / (c * h0 + root)
    } else {
        (root - c * h0) / (2.0 * d)
    }
}

/// `η_h = h0/2 + √(c²h0² + dδ)/(2c)`, evaluated without cancellation.
fn equilibrium_barrier(c: f64, h0: f64, d: f64, delta: f64) -> f64 {
    let root = (c * c * h0 * h0 + d * delta).sqrt();
    if h0 < 0.0 {
        0.5 * d * delta / (c * (root - c * h0))
    } else {
        (c * h0 + root) / (2.0 * c)
    }
}

pub fn average_equilibrium(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
) -> Result<Equilibrium, AnalysisError> {
    cfg.check_plant(plant)?;
    let h1 = plant.h1();
    let h0 = plant.h0();
    let norm_sq = plant.h1_norm_sq();
    let hinv_h1 = plant.solve_hessian(h1);
    let q = h1.dot(&hinv_h1);
    let d = cfg.c * q / (cfg.k * norm_sq);
    let nu = positive_nu(cfg.c, h0, d, cfg.delta);
    let c1 = nu / (cfg.k * norm_sq);
    let theta_tilde = &hinv_h1 * c1;
    let a = cfg.dither.amplitude();
    let eq = Equilibrium {
        eta_j_ae: plant.j_star()
            + 0.5 * theta_tilde.dot(&(plant.hessian() * &theta_tilde))
            + 0.25 * a * a * plant.hessian().trace(),
        theta_tilde_ae: theta_tilde,
        g_j_ae: h1 * c1,
        g_h_ae: h1.clone(),
        eta_h_ae: equilibrium_barrier(cfg.c, h0, d, cfg.delta),
        gamma_ae: 1.0 / norm_sq,
        d,
        c1,
    };

    let residual = dynamics::average_rhs(plant, cfg, &eq.to_average_state())?
        .to_vector()
        .amax();
    let scale = eq.to_average_state().to_vector().amax() * cfg.omega_f.max(cfg.k).max(1.0);
    let tol = RESIDUAL_TOL * scale.max(1.0);
    if !(residual <= tol) {
        return Err(AnalysisError::ResidualTooLarge { residual, tol });
    }
    Ok(eq)
}

/// Equilibrium parameter of the scalar Newton variant's average system.
/// With `Γ = H⁻¹` the nominal step is `−k·θ̃`, so this is the gradient
/// equilibrium for the same plant with `H` replaced by 1.
pub fn newton_equilibrium_theta(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
) -> Result<f64, AnalysisError> {
    if plant.dimension() != 1 {
        return Err(AnalysisError::NotScalar(plant.dimension()));
    }
    let h1 = plant.h1()[0];
    let d = cfg.c / cfg.k;
    let nu = positive_nu(cfg.c, plant.h0(), d, cfg.delta);
    Ok(plant.theta_star()[0] + nu / (cfg.k * h1))
}

/// Pieces of the linearization at the equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// Slope of the smooth max at the equilibrium, in (0, 1).
    pub alpha: f64,
    /// `k(I − α·h1h1ᵀ/‖h1‖²)`.
    pub m: DMatrix<f64>,
    /// `cα/‖h1‖²`.
    pub c_tilde: f64,
}

pub fn linearization(plant: &PlantModel, cfg: &AlgorithmConfig, eq: &Equilibrium) -> Linearization {
    let norm_sq = plant.h1_norm_sq();
    let arg = cfg.k * eq.c1 * norm_sq - cfg.c * eq.eta_h_ae;
    linearization_with_alpha(plant, cfg, smooth_max_slope(arg, cfg.delta))
}

/// Same assembly with `α` supplied directly (for boundary cases α = 0, 1).
pub fn linearization_with_alpha(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    alpha: f64,
) -> Linearization {
    let n = plant.dimension();
    let h1 = plant.h1();
    let norm_sq = plant.h1_norm_sq();
    let proj = h1 * h1.transpose() / norm_sq;
    Linearization {
        alpha,
        m: (DMatrix::identity(n, n) - proj * alpha) * cfg.k,
        c_tilde: cfg.c * alpha / norm_sq,
    }
}

fn j11_from(plant: &PlantModel, cfg: &AlgorithmConfig, lin: &Linearization) -> DMatrix<f64> {
    let n = plant.dimension();
    let wf = cfg.omega_f;
    let h1 = plant.h1();
    let mut j = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    j.view_mut((0, n), (n, n)).copy_from(&(-&lin.m));
    j.view_mut((0, 2 * n), (n, 1)).copy_from(&(h1 * -lin.c_tilde));
    j.view_mut((n, 0), (n, n)).copy_from(&(plant.hessian() * wf));
    j.view_mut((n, n), (n, n)).fill_diagonal(-wf);
    j.view_mut((2 * n, 0), (1, n)).copy_from(&(h1.transpose() * wf));
    j[(2 * n, 2 * n)] = -wf;
    j
}

/// Upper-left `(2n+1)` block of the average-error Jacobian, over `[θ̃; G_J; η_h]`.
pub fn jacobian_j11(plant: &PlantModel, cfg: &AlgorithmConfig, eq: &Equilibrium) -> DMatrix<f64> {
    j11_from(plant, cfg, &linearization(plant, cfg, eq))
}

/// `Z = ω_f·M·H + ω_f·c̃·h1h1ᵀ`.
pub fn z_matrix(plant: &PlantModel, cfg: &AlgorithmConfig, lin: &Linearization) -> DMatrix<f64> {
    let h1 = plant.h1();
    (&lin.m * plant.hessian() + h1 * h1.transpose() * lin.c_tilde) * cfg.omega_f
}

/// `J_r = −MH − cα·h1h1ᵀ/‖h1‖²`.
pub fn reduced_jacobian(plant: &PlantModel, cfg: &AlgorithmConfig, eq: &Equilibrium) -> DMatrix<f64> {
    let lin = linearization(plant, cfg, eq);
    let h1 = plant.h1();
    -(&lin.m * plant.hessian()) - h1 * h1.transpose() * lin.c_tilde
}

/// Central differences, column `j = (f(x+s·e_j) − f(x−s·e_j))/(2s)`.
pub fn finite_diff_jacobian<F, E>(
    mut rhs: F,
    x0: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>, AnalysisError>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
    AnalysisError: From<E>,
{
    if !(step > 0.0) {
        return Err(AnalysisError::NonPositiveStep(step));
    }
    let f0 = rhs(x0)?;
    let mut jac = DMatrix::zeros(f0.len(), x0.len());
    for j in 0..x0.len() {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (rhs(&xp)? - rhs(&xm)?) / (2.0 * step);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFiniteEntry(j));
        }
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// The average system in error coordinates around `eq`, reordered as
/// `[θ̃_c; G_J,c; η_h,c; G_h,c; γ_c; η_J,c]` so that J11 is its leading block.
pub fn average_error_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    eq: &Equilibrium,
    xc: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let n = plant.dimension();
    if xc.len() != 3 * n + 3 {
        return Err(DynamicsError::DimensionMismatch {
            expected: 3 * n + 3,
            found: xc.len(),
        });
    }
    let xa = AverageState {
        theta_tilde_a: xc.rows(0, n) + &eq.theta_tilde_ae,
        g_j_a: xc.rows(n, n) + &eq.g_j_ae,
        eta_h_a: xc[2 * n] + eq.eta_h_ae,
        g_h_a: xc.rows(2 * n + 1, n) + &eq.g_h_ae,
        gamma_a: xc[3 * n + 1] + eq.gamma_ae,
        eta_j_a: xc[3 * n + 2] + eq.eta_j_ae,
    };
    let f = dynamics::average_rhs(plant, cfg, &xa)?;
    let mut out = DVector::zeros(3 * n + 3);
    out.rows_mut(0, n).copy_from(&f.theta_tilde_a);
    out.rows_mut(n, n).copy_from(&f.g_j_a);
    out[2 * n] = f.eta_h_a;
    out.rows_mut(2 * n + 1, n).copy_from(&f.g_h_a);
    out[3 * n + 1] = f.gamma_a;
    out[3 * n + 2] = f.eta_j_a;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub j11_eigenvalues: Vec<Complex<f64>>,
    pub z_eigenvalues: Vec<Complex<f64>>,
    /// `|λ² + ω_f λ + λ̄|` for each paired eigenvalue of J11 (excluding `−ω_f`).
    pub pairing_residuals: Vec<f64>,
    pub hurwitz: bool,
    pub omega_f_eigen_found: bool,
    pub z_real_positive: bool,
    /// Every `λ ≠ −ω_f` found a partner and every `λ̄` got exactly two.
    pub pairing_complete: bool,
    pub reduced_eigenvalues: Vec<Complex<f64>>,
    pub alpha: f64,
}

impl SpectralReport {
    pub fn passed(&self) -> bool {
        self.hurwitz && self.omega_f_eigen_found && self.z_real_positive && self.pairing_complete
    }

    pub fn max_pairing_residual(&self) -> f64 {
        self.pairing_residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut v: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

/// Computes the report without failing on violated checks.
pub fn spectral_report(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    eq: &Equilibrium,
) -> SpectralReport {
    spectral_report_for(plant, cfg, &linearization(plant, cfg, eq))
}

pub fn spectral_report_for(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    lin: &Linearization,
) -> SpectralReport {
    let wf = cfg.omega_f;
    let j11 = j11_from(plant, cfg, lin);
    let z = z_matrix(plant, cfg, lin);
    let h1 = plant.h1();
    let jr = -(&lin.m * plant.hessian()) - h1 * h1.transpose() * lin.c_tilde;
    let lam = eigenvalues(&j11);
    let zbar = eigenvalues(&z);

    let hurwitz = lam.iter().all(|l| l.re < 0.0);
    let target = Complex::new(-wf, 0.0);
    let (filter_idx, filter_dist) = lam
        .iter()
        .enumerate()
        .map(|(i, l)| (i, (l - target).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("J11 is never empty");
    let omega_f_eigen_found = filter_dist <= EIGEN_MATCH_TOL * wf.max(1.0);
    let z_real_positive = zbar
        .iter()
        .all(|zb| zb.im.abs() <= Z_REAL_TOL * zb.norm() && zb.re > 0.0);

    // Greedy nearest-residual matching, at most two partners per λ̄.
    let rest: Vec<usize> = (0..lam.len()).filter(|&i| i != filter_idx).collect();
    let mut candidates = Vec::with_capacity(rest.len() * zbar.len());
    for &i in &rest {
        let l = lam[i];
        for (j, zb) in zbar.iter().enumerate() {
            let r = (l * l + l * wf + zb).norm();
            candidates.push((r / zb.norm().max(1.0), r, i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut partner: Vec<Option<f64>> = vec![None; lam.len()];
    let mut uses = vec![0usize; zbar.len()];
    for (scaled, r, i, j) in candidates {
        if partner[i].is_none() && uses[j] < 2 && scaled <= EIGEN_MATCH_TOL {
            partner[i] = Some(r);
            uses[j] += 1;
        }
    }
    let pairing_complete =
        rest.iter().all(|&i| partner[i].is_some()) && uses.iter().all(|&u| u == 2);
    let pairing_residuals = rest
        .iter()
        .map(|&i| {
            partner[i].unwrap_or_else(|| {
                let l = lam[i];
                zbar.iter()
                    .map(|zb| (l * l + l * wf + zb).norm())
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect();

    SpectralReport {
        j11_eigenvalues: lam,
        z_eigenvalues: zbar,
        pairing_residuals,
        hurwitz,
        omega_f_eigen_found,
        z_real_positive,
        pairing_complete,
        reduced_eigenvalues: eigenvalues(&jr),
        alpha: lin.alpha,
    }
}

/// Report plus hard failure on any violated check.
pub fn spectral_check(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    eq: &Equilibrium,
) -> Result<SpectralReport, AnalysisError> {
    let report = spectral_report(plant, cfg, eq);
    if !report.hurwitz {
        let max_real = report
            .j11_eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        return Err(AnalysisError::HurwitzViolation { max_real });
    }
    if !report.omega_f_eigen_found {
        let distance = report
            .j11_eigenvalues
            .iter()
            .map(|l| (l + cfg.omega_f).norm())
            .fold(f64::INFINITY, f64::min);
        return Err(AnalysisError::MissingFilterEigenvalue { distance });
    }
    if let Some(value) = report
        .z_eigenvalues
        .iter()
        .find(|zb| !(zb.im.abs() <= Z_REAL_TOL * zb.norm() && zb.re > 0.0))
    {
        return Err(AnalysisError::ZNotRealPositive { value: *value });
    }
    if !report.pairing_complete {
        let (index, residual) = report
            .pairing_residuals
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::NAN));
        return Err(AnalysisError::PairingFailure { index, residual });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyReport {
    /// `min_t [h(t) − h(0)·e^(−ct)]`.
    pub worst_violation: f64,
    pub violation_time: f64,
    pub final_h: f64,
    /// First time with `h ≥ 0`, reported only for unsafe starts.
    pub entered_safe_set_at: Option<f64>,
    /// `|J(t_end) − J_s*|`.
    pub final_objective_gap: f64,
}

pub fn safety_report<S>(
    traj: &Trajectory<S>,
    c: f64,
    constrained: &ConstrainedOptimum,
) -> Result<SafetyReport, AnalysisError> {
    let (Some(&h_start), Some(&h_end), Some(&j_end)) =
        (traj.h_values.first(), traj.h_values.last(), traj.j_values.last())
    else {
        return Err(AnalysisError::EmptyTrajectory);
    };
    let (worst_violation, violation_time) = traj
        .times
        .iter()
        .zip(&traj.h_values)
        .map(|(&t, &h)| (h - envelope(h_start, c, t), t))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty");
    let entered_safe_set_at = if h_start < 0.0 {
        first_time(traj, |h| h >= 0.0)
    } else {
        None
    };
    Ok(SafetyReport {
        worst_violation,
        violation_time,
        final_h: h_end,
        entered_safe_set_at,
        final_objective_gap: (j_end - constrained.j_s_star).abs(),
    })
}

/// `h(0)·e^(−ct)`.
pub fn envelope(h_start: f64, c: f64, t: f64) -> f64 {
    h_start * (-c * t).exp()
}

/// First recorded time whose barrier value satisfies `pred`.
pub fn first_time<S>(traj: &Trajectory<S>, pred: impl Fn(f64) -> bool) -> Option<f64> {
    traj.times
        .iter()
        .zip(&traj.h_values)
        .find(|(_, &h)| pred(h))
        .map(|(&t, _)| t)
}

/// Equilibrium barrier value for each softening `δ`.
pub fn delta_sweep(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    deltas: &[f64],
) -> Result<Vec<(f64, Equilibrium)>, AnalysisError> {
    deltas
        .iter()
        .map(|&d| Ok((d, average_equilibrium(plant, &cfg.with_delta(d)?)?)))
        .collect()
}
