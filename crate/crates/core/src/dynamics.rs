//! Right-hand sides for every model in the hierarchy: the dithered
//! algorithm (gradient, Newton, classical), its average, the reduced
//! model, and the boundary layer.

use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

use crate::problem::{PlantModel, ProblemError};
use crate::signals::{self, smooth_max_unchecked, DitherConfig, SignalError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("gain {name} must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("the Newton variant is scalar only, got n = {0}")]
    NotScalar(usize),
    #[error("the Newton variant needs the inverse-Hessian estimate state")]
    MissingNewtonState,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Asfes,
    NewtonAsfes,
    ClassicalEs,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Asfes, Variant::NewtonAsfes, Variant::ClassicalEs];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Asfes => "asfes",
            Variant::NewtonAsfes => "nb_asfes",
            Variant::ClassicalEs => "classical_es",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asfes" => Some(Variant::Asfes),
            "nb_asfes" | "nb-asfes" | "newton" => Some(Variant::NewtonAsfes),
            "classical_es" | "classical-es" | "classical" => Some(Variant::ClassicalEs),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub k: f64,
    pub c: f64,
    pub delta: f64,
    pub omega_f: f64,
    pub dither: DitherConfig,
    pub variant: Variant,
}

impl AlgorithmConfig {
    pub fn new(
        k: f64,
        c: f64,
        delta: f64,
        omega_f: f64,
        dither: DitherConfig,
        variant: Variant,
    ) -> Result<Self, DynamicsError> {
        for (name, value) in [("k", k), ("c", c), ("delta", delta), ("omega_f", omega_f)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DynamicsError::NonPositiveGain { name, value });
            }
        }
        if variant == Variant::NewtonAsfes && dither.len() != 1 {
            return Err(DynamicsError::NotScalar(dither.len()));
        }
        Ok(Self {
            k,
            c,
            delta,
            omega_f,
            dither,
            variant,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dither.len()
    }

    pub fn with_variant(&self, variant: Variant) -> Result<Self, DynamicsError> {
        Self::new(self.k, self.c, self.delta, self.omega_f, self.dither.clone(), variant)
    }

    pub fn with_c(&self, c: f64) -> Result<Self, DynamicsError> {
        Self::new(self.k, c, self.delta, self.omega_f, self.dither.clone(), self.variant)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, DynamicsError> {
        Self::new(self.k, self.c, delta, self.omega_f, self.dither.clone(), self.variant)
    }

    pub fn check_plant(&self, plant: &PlantModel) -> Result<(), DynamicsError> {
        if plant.dimension() != self.dimension() {
            return Err(DynamicsError::DimensionMismatch {
                expected: plant.dimension(),
                found: self.dimension(),
            });
        }
        Ok(())
    }
}

/// State of the dithered algorithm; `θ = θ̂ + S(t)` is derived, not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub theta_hat: DVector<f64>,
    pub g_j: DVector<f64>,
    pub eta_j: f64,
    pub g_h: DVector<f64>,
    pub eta_h: f64,
    pub gamma: f64,
    /// Inverse-Hessian estimate, present only for the Newton variant.
    pub gamma_newton: Option<f64>,
}

impl FullState {
    pub fn zeros(n: usize, newton: bool) -> Self {
        Self {
            theta_hat: DVector::zeros(n),
            g_j: DVector::zeros(n),
            eta_j: 0.0,
            g_h: DVector::zeros(n),
            eta_h: 0.0,
            gamma: 0.0,
            gamma_newton: newton.then_some(0.0),
        }
    }

    pub fn dimension(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn vector_len(n: usize, newton: bool) -> usize {
        3 * n + 3 + usize::from(newton)
    }

    /// Flattened as `[θ̂; G_J; η_J; G_h; η_h; γ; (Γ)]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dimension();
        let mut v = DVector::zeros(Self::vector_len(n, self.gamma_newton.is_some()));
        v.rows_mut(0, n).copy_from(&self.theta_hat);
        v.rows_mut(n, n).copy_from(&self.g_j);
        v[2 * n] = self.eta_j;
        v.rows_mut(2 * n + 1, n).copy_from(&self.g_h);
        v[3 * n + 1] = self.eta_h;
        v[3 * n + 2] = self.gamma;
        if let Some(g) = self.gamma_newton {
            v[3 * n + 3] = g;
        }
        v
    }

    pub fn from_slice(n: usize, newton: bool, s: &[f64]) -> Result<Self, DynamicsError> {
        let len = Self::vector_len(n, newton);
        if s.len() != len {
            return Err(DynamicsError::DimensionMismatch {
                expected: len,
                found: s.len(),
            });
        }
        Ok(Self {
            theta_hat: DVector::from_column_slice(&s[0..n]),
            g_j: DVector::from_column_slice(&s[n..2 * n]),
            eta_j: s[2 * n],
            g_h: DVector::from_column_slice(&s[2 * n + 1..3 * n + 1]),
            eta_h: s[3 * n + 1],
            gamma: s[3 * n + 2],
            gamma_newton: newton.then(|| s[3 * n + 3]),
        })
    }

    /// The map input `θ = θ̂ + S(t)`.
    pub fn theta(&self, cfg: &AlgorithmConfig, t: f64) -> DVector<f64> {
        &self.theta_hat + signals::dither(&cfg.dither, t)
    }

    fn check(&self, n: usize) -> Result<(), DynamicsError> {
        for len in [self.theta_hat.len(), self.g_j.len(), self.g_h.len()] {
            if len != n {
                return Err(DynamicsError::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(())
    }
}

/// State of the averaged system, in error coordinates `θ̃ = θ̂ − θ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageState {
    pub theta_tilde_a: DVector<f64>,
    pub g_j_a: DVector<f64>,
    pub eta_j_a: f64,
    pub g_h_a: DVector<f64>,
    pub eta_h_a: f64,
    pub gamma_a: f64,
}

impl AverageState {
    pub fn dimension(&self) -> usize {
        self.theta_tilde_a.len()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        self.to_full(&DVector::zeros(self.dimension())).to_vector()
    }

    pub fn from_slice(n: usize, s: &[f64]) -> Result<Self, DynamicsError> {
        Ok(Self::from_full(&FullState::from_slice(n, false, s)?, &DVector::zeros(n)))
    }

    /// Full-system state with `θ̂ = θ̃ᵃ + θ*`.
    pub fn to_full(&self, theta_star: &DVector<f64>) -> FullState {
        FullState {
            theta_hat: &self.theta_tilde_a + theta_star,
            g_j: self.g_j_a.clone(),
            eta_j: self.eta_j_a,
            g_h: self.g_h_a.clone(),
            eta_h: self.eta_h_a,
            gamma: self.gamma_a,
            gamma_newton: None,
        }
    }

    pub fn from_full(x: &FullState, theta_star: &DVector<f64>) -> Self {
        Self {
            theta_tilde_a: &x.theta_hat - theta_star,
            g_j_a: x.g_j.clone(),
            eta_j_a: x.eta_j,
            g_h_a: x.g_h.clone(),
            eta_h_a: x.eta_h,
            gamma_a: x.gamma,
        }
    }

    fn check(&self, n: usize) -> Result<(), DynamicsError> {
        for len in [self.theta_tilde_a.len(), self.g_j_a.len(), self.g_h_a.len()] {
            if len != n {
                return Err(DynamicsError::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(())
    }
}

/// Derivative of everything except `θ̂` (and `Γ`), plus the measurement of `J`.
struct FilterRows {
    g_j: DVector<f64>,
    eta_j: f64,
    g_h: DVector<f64>,
    eta_h: f64,
    gamma: f64,
    j_meas: f64,
}

fn filter_rows(plant: &PlantModel, cfg: &AlgorithmConfig, t: f64, x: &FullState) -> FilterRows {
    let wf = cfg.omega_f;
    let theta = x.theta(cfg, t);
    let j = plant.objective_unchecked(&theta);
    let h = plant.barrier_unchecked(&theta);
    let m = signals::demod(&cfg.dither, t);
    FilterRows {
        g_j: (&m * (j - x.eta_j) - &x.g_j) * wf,
        eta_j: wf * (j - x.eta_j),
        g_h: (&m * (h - x.eta_h) - &x.g_h) * wf,
        eta_h: wf * (h - x.eta_h),
        gamma: wf * x.gamma * (1.0 - x.gamma * x.g_h.norm_squared()),
        j_meas: j,
    }
}

fn checked(plant: &PlantModel, cfg: &AlgorithmConfig, x: &FullState) -> Result<(), DynamicsError> {
    cfg.check_plant(plant)?;
    x.check(plant.dimension())
}

fn assemble(theta_dot: DVector<f64>, rows: FilterRows, gamma_newton: Option<f64>) -> FullState {
    FullState {
        theta_hat: theta_dot,
        g_j: rows.g_j,
        eta_j: rows.eta_j,
        g_h: rows.g_h,
        eta_h: rows.eta_h,
        gamma: rows.gamma,
        gamma_newton,
    }
}

/// Safety-filtered parameter update `γ·maxδ{k·gᵀG_h − cη_h}·G_h` for a nominal step `−k·g`.
fn safety_term(cfg: &AlgorithmConfig, g: &DVector<f64>, x: &FullState) -> DVector<f64> {
    let arg = cfg.k * g.dot(&x.g_h) - cfg.c * x.eta_h;
    &x.g_h * (x.gamma * smooth_max_unchecked(arg, cfg.delta))
}

pub fn asfes_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    t: f64,
    x: &FullState,
) -> Result<FullState, DynamicsError> {
    checked(plant, cfg, x)?;
    let theta_dot = safety_term(cfg, &x.g_j, x) - &x.g_j * cfg.k;
    let rows = filter_rows(plant, cfg, t, x);
    Ok(assemble(theta_dot, rows, x.gamma_newton.map(|_| 0.0)))
}

/// Scalar Newton variant. Rejects `n > 1`: with a vector parameter the
/// equilibrium misses the constrained optimum unless `h1` is an eigenvector of `H`.
pub fn nb_asfes_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    t: f64,
    x: &FullState,
) -> Result<FullState, DynamicsError> {
    if plant.dimension() != 1 {
        return Err(DynamicsError::NotScalar(plant.dimension()));
    }
    checked(plant, cfg, x)?;
    let big_gamma = x.gamma_newton.ok_or(DynamicsError::MissingNewtonState)?;
    let newton_grad = &x.g_j * big_gamma;
    let theta_dot = safety_term(cfg, &newton_grad, x) - newton_grad * cfg.k;
    let rows = filter_rows(plant, cfg, t, x);
    let n_t = signals::newton_demod(cfg.dither.amplitude(), cfg.dither.omegas()[0], t)?;
    let gamma_newton_dot = cfg.omega_f * big_gamma * (1.0 - big_gamma * rows.j_meas * n_t);
    Ok(assemble(theta_dot, rows, Some(gamma_newton_dot)))
}

/// Classical ES baseline: `θ̂̇ = −kG_J`. Barrier filters keep running for reporting.
pub fn classical_es_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    t: f64,
    x: &FullState,
) -> Result<FullState, DynamicsError> {
    checked(plant, cfg, x)?;
    let theta_dot = -&x.g_j * cfg.k;
    let rows = filter_rows(plant, cfg, t, x);
    Ok(assemble(theta_dot, rows, x.gamma_newton.map(|_| 0.0)))
}

/// Dispatches on `cfg.variant`.
pub fn full_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    t: f64,
    x: &FullState,
) -> Result<FullState, DynamicsError> {
    match cfg.variant {
        Variant::Asfes => asfes_rhs(plant, cfg, t, x),
        Variant::NewtonAsfes => nb_asfes_rhs(plant, cfg, t, x),
        Variant::ClassicalEs => classical_es_rhs(plant, cfg, t, x),
    }
}

/// Closed-form period average of [`asfes_rhs`].
pub fn average_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    xa: &AverageState,
) -> Result<AverageState, DynamicsError> {
    cfg.check_plant(plant)?;
    xa.check(plant.dimension())?;
    let wf = cfg.omega_f;
    let a = cfg.dither.amplitude();
    let theta = &xa.theta_tilde_a + plant.theta_star();
    let arg = cfg.k * xa.g_j_a.dot(&xa.g_h_a) - cfg.c * xa.eta_h_a;
    let theta_dot =
        &xa.g_h_a * (xa.gamma_a * smooth_max_unchecked(arg, cfg.delta)) - &xa.g_j_a * cfg.k;
    let j_avg = plant.objective_unchecked(&theta) + 0.25 * a * a * plant.hessian().trace();
    Ok(AverageState {
        theta_tilde_a: theta_dot,
        g_j_a: (plant.hessian() * &xa.theta_tilde_a - &xa.g_j_a) * wf,
        eta_j_a: wf * (j_avg - xa.eta_j_a),
        g_h_a: (plant.h1() - &xa.g_h_a) * wf,
        eta_h_a: wf * (plant.barrier_unchecked(&theta) - xa.eta_h_a),
        gamma_a: wf * xa.gamma_a * (1.0 - xa.gamma_a * xa.g_h_a.norm_squared()),
    })
}

/// Quasi-steady-state (ω_f → ∞) model in error coordinates `θ̃_r`.
pub fn reduced_rhs(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    theta_tilde_r: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    cfg.check_plant(plant)?;
    plant.check_dim(theta_tilde_r)?;
    let h1 = plant.h1();
    let grad = plant.hessian() * theta_tilde_r;
    let arg = cfg.k * grad.dot(h1) - cfg.c * (plant.h0() + h1.dot(theta_tilde_r));
    let lift = smooth_max_unchecked(arg, cfg.delta) / plant.h1_norm_sq();
    Ok(h1 * lift - grad * cfg.k)
}

/// Fast filter transient with `θ` frozen, in boundary-layer time.
/// Layout `[z1 (n); z2; z3 (n); z4; z5]` for `[G_J; η_J; G_h; η_h; γ]` offsets.
pub fn boundary_layer_rhs(
    z_b: &DVector<f64>,
    h1: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let n = h1.len();
    if z_b.len() != 2 * n + 3 {
        return Err(DynamicsError::DimensionMismatch {
            expected: 2 * n + 3,
            found: z_b.len(),
        });
    }
    let mut out = -z_b;
    let g = z_b[2 * n + 2] + 1.0 / h1.norm_squared();
    let gh = z_b.rows(n + 1, n) + h1;
    out[2 * n + 2] = g * (1.0 - g * gh.norm_squared());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::plant_from_parts;
    use approx::assert_relative_eq;

    fn example1() -> (PlantModel, AlgorithmConfig) {
        let plant = plant_from_parts(0.0, &[0.1], &[0.0], -1.0, &[-1.0]).unwrap();
        let dither = DitherConfig::from_integers(0.25, 200.0, &[1]).unwrap();
        let cfg = AlgorithmConfig::new(0.3, 0.1, 1e-3, 3.0, dither, Variant::Asfes).unwrap();
        (plant, cfg)
    }

    fn warmed_example1(newton: Option<f64>) -> FullState {
        FullState {
            theta_hat: DVector::from_element(1, -3.0),
            g_j: DVector::from_element(1, -0.3),
            eta_j: 0.4515625,
            g_h: DVector::from_element(1, -1.0),
            eta_h: 2.0,
            gamma: 1.0,
            gamma_newton: newton,
        }
    }

    #[test]
    fn config_rejects_bad_gains() {
        let d = DitherConfig::from_integers(0.25, 1.0, &[75, 100]).unwrap();
        let err = AlgorithmConfig::new(0.0, 1.0, 1e-3, 3.0, d.clone(), Variant::Asfes);
        assert!(matches!(err, Err(DynamicsError::NonPositiveGain { name: "k", .. })));
        let err = AlgorithmConfig::new(0.1, 1.0, 1e-3, 3.0, d, Variant::NewtonAsfes);
        assert_eq!(err.unwrap_err(), DynamicsError::NotScalar(2));
    }

    #[test]
    fn state_vector_roundtrip() {
        let x = warmed_example1(Some(10.0));
        let back = FullState::from_slice(1, true, x.to_vector().as_slice()).unwrap();
        assert_eq!(back, x);
        assert!(FullState::from_slice(2, false, &[0.0; 5]).is_err());
    }

    // Hand substitution at the warmed-up initial state:
    // arg = 0.3·(−0.3)(−1) − 0.1·2 = −0.11, θ̂̇ = −0.3·(−0.3) + maxδ(−0.11)·(−1).
    #[test]
    fn asfes_theta_row_example1() {
        let (plant, cfg) = example1();
        let x = warmed_example1(None);
        let dx = asfes_rhs(&plant, &cfg, 0.0, &x).unwrap();
        let m = 0.5 * (-0.11 + (0.11f64 * 0.11 + 1e-3).sqrt());
        assert_relative_eq!(dx.theta_hat[0], 0.09 - m, epsilon = 1e-15);
        assert_relative_eq!(dx.theta_hat[0], 0.0877724, epsilon = 1e-7);
    }

    #[test]
    fn filter_rows_vanish_at_fixed_point_without_dither_input() {
        // At t = 0 the demodulation is zero, and with η equal to the measurement
        // and G = 0, every filter row is at rest.
        let (plant, cfg) = example1();
        let x = FullState {
            theta_hat: DVector::from_element(1, -3.0),
            g_j: DVector::zeros(1),
            eta_j: 0.45,
            g_h: DVector::from_element(1, -1.0),
            eta_h: 2.0,
            gamma: 1.0,
            gamma_newton: None,
        };
        let dx = asfes_rhs(&plant, &cfg, 0.0, &x).unwrap();
        assert!(dx.eta_j.abs() < 1e-15);
        assert_eq!(dx.eta_h, 0.0);
        assert_eq!(dx.g_j[0], 0.0);
        assert_relative_eq!(dx.g_h[0], 3.0);
        assert_eq!(dx.gamma, 0.0);
    }

    #[test]
    fn riccati_roots() {
        let (plant, cfg) = example1();
        let mut x = warmed_example1(None);
        x.g_h[0] = 2.0;
        x.gamma = 0.25;
        assert_eq!(asfes_rhs(&plant, &cfg, 0.3, &x).unwrap().gamma, 0.0);
        x.gamma = 0.0;
        assert_eq!(asfes_rhs(&plant, &cfg, 0.3, &x).unwrap().gamma, 0.0);
    }

    #[test]
    fn classical_differs_by_safety_term() {
        let (plant, cfg) = example1();
        let x = warmed_example1(None);
        for t in [0.0, 0.01, 0.5] {
            let a = asfes_rhs(&plant, &cfg, t, &x).unwrap();
            let b = classical_es_rhs(&plant, &cfg, t, &x).unwrap();
            let s = safety_term(&cfg, &x.g_j, &x);
            assert_relative_eq!(a.theta_hat - b.theta_hat, s, epsilon = 1e-15);
            assert_eq!(a.g_h, b.g_h);
        }
        let mut x0 = x.clone();
        x0.g_j[0] = 0.0;
        assert_eq!(classical_es_rhs(&plant, &cfg, 0.2, &x0).unwrap().theta_hat[0], 0.0);
    }

    #[test]
    fn newton_rejects_vectors_and_needs_gamma_state() {
        let plant = plant_from_parts(0.0, &[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0], -1.0, &[1.0, 1.0])
            .unwrap();
        let d = DitherConfig::from_integers(0.25, 1.0, &[75, 100]).unwrap();
        let cfg = AlgorithmConfig::new(0.1, 1.0, 1e-3, 3.0, d, Variant::Asfes).unwrap();
        let x = FullState::zeros(2, true);
        assert_eq!(
            nb_asfes_rhs(&plant, &cfg, 0.0, &x).unwrap_err(),
            DynamicsError::NotScalar(2)
        );
        let (p1, c1) = example1();
        assert_eq!(
            nb_asfes_rhs(&p1, &c1, 0.0, &warmed_example1(None)).unwrap_err(),
            DynamicsError::MissingNewtonState
        );
    }

    #[test]
    fn newton_riccati_zero_root_and_gain() {
        let (plant, cfg) = example1();
        let x = warmed_example1(Some(0.0));
        assert_eq!(nb_asfes_rhs(&plant, &cfg, 0.1, &x).unwrap().gamma_newton, Some(0.0));
        // With Γ = H⁻¹ the nominal step is −kΓG_J = −k(θ̂ − θ*): gain 3 on the error.
        let x = warmed_example1(Some(10.0));
        let mut quiet = x.clone();
        quiet.eta_h = 1e6; // push the safety term to ~0
        let dx = nb_asfes_rhs(&plant, &cfg, 0.0, &quiet).unwrap();
        assert_relative_eq!(dx.theta_hat[0], -0.3 * 10.0 * -0.3, max_relative = 1e-8);
        let dg = asfes_rhs(&plant, &cfg, 0.0, &quiet).unwrap();
        assert_relative_eq!(dx.theta_hat[0] / dg.theta_hat[0], 10.0, max_relative = 1e-7);
    }

    // Quadrature oracle: the period average of J(θ̂+S)·N(t) equals H for a quadratic J,
    // so the averaged Γ row vanishes at Γ = H⁻¹.
    #[test]
    fn newton_gamma_row_averages_to_zero_at_inverse_hessian() {
        let (plant, cfg) = example1();
        let x = warmed_example1(Some(10.0));
        let period = cfg.dither.common_period_time();
        let nodes = 4000;
        let h = period / nodes as f64;
        let mut acc = 0.0;
        for i in 0..=nodes {
            let w = if i == 0 || i == nodes {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * nb_asfes_rhs(&plant, &cfg, i as f64 * h, &x).unwrap().gamma_newton.unwrap();
        }
        let avg = acc * h / 3.0 / period;
        assert!(avg.abs() < 1e-9, "avg Γ̇ = {avg}");
    }

    #[test]
    fn average_rhs_simple_rows() {
        let (plant, cfg) = example1();
        let xa = AverageState {
            theta_tilde_a: DVector::zeros(1),
            g_j_a: DVector::from_element(1, 0.7),
            eta_j_a: 0.0,
            g_h_a: DVector::from_element(1, -1.0),
            eta_h_a: 0.0,
            gamma_a: 1.0,
        };
        let d = average_rhs(&plant, &cfg, &xa).unwrap();
        assert_relative_eq!(d.g_j_a[0], -3.0 * 0.7);
        assert_relative_eq!(d.eta_j_a, 3.0 * 0.25 * 0.25 / 4.0 * 0.1, epsilon = 1e-15);
    }

    #[test]
    fn reduced_rhs_example1_hand_value() {
        let (plant, cfg) = example1();
        let d = reduced_rhs(&plant, &cfg, &DVector::from_element(1, -3.0)).unwrap();
        // 0.09 − maxδ(−0.11)
        let expect = 0.09 - 0.5 * (-0.11 + (0.0121f64 + 1e-3).sqrt());
        assert_relative_eq!(d[0], expect, epsilon = 1e-15);
        assert_relative_eq!(d[0], 0.0877724, epsilon = 1e-7);
        assert!(reduced_rhs(&plant, &cfg, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn reduced_rhs_small_delta_limit() {
        let (plant, cfg) = example1();
        let theta = DVector::from_element(1, -3.0);
        let cfg = cfg.with_delta(1e-14).unwrap();
        let d = reduced_rhs(&plant, &cfg, &theta).unwrap();
        assert_relative_eq!(d[0], -0.3 * 0.1 * -3.0, epsilon = 1e-10);
    }

    #[test]
    fn boundary_layer_cases() {
        let h1 = DVector::from_column_slice(&[1.0, -2.0]);
        let z = DVector::zeros(7);
        assert_eq!(boundary_layer_rhs(&z, &h1).unwrap(), DVector::zeros(7));
        let mut z = DVector::zeros(7);
        z[6] = -1.0 / 5.0;
        assert_eq!(boundary_layer_rhs(&z, &h1).unwrap()[6], 0.0);
        assert!(boundary_layer_rhs(&DVector::zeros(6), &h1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // ḣ + c·h > 0 along the reduced vector field.
            #[test]
            fn reduced_field_satisfies_barrier_condition(
                th in -10.0f64..10.0,
                h0 in -3.0f64..3.0,
                h1 in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0],
                hess in 0.05f64..5.0,
                k in 0.05f64..2.0,
                c in 0.05f64..3.0,
            ) {
                let plant = plant_from_parts(0.0, &[hess], &[0.0], h0, &[h1]).unwrap();
                let d = DitherConfig::from_integers(0.25, 1.0, &[1]).unwrap();
                let cfg = AlgorithmConfig::new(k, c, 1e-3, 3.0, d, Variant::Asfes).unwrap();
                let x = DVector::from_element(1, th);
                let f = reduced_rhs(&plant, &cfg, &x).unwrap();
                let lhs = plant.h1().dot(&f) + c * (h0 + h1 * th);
                prop_assert!(lhs > 0.0);
            }
        }
    }
}
