//! Fixed-step RK4 integration, filter warmup, and numeric period averaging.

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::{self, AlgorithmConfig, AverageState, DynamicsError, FullState, Variant};
use crate::problem::PlantModel;

/// Default samples per fastest dither period.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 40;
/// Coarsest admissible step, in samples per fastest dither period.
pub const MIN_STEPS_PER_PERIOD: f64 = 20.0;
pub const DEFAULT_GAMMA_GUARD: f64 = 1e6;
/// Simpson nodes per fastest dither period in [`numeric_average`].
pub const QUADRATURE_NODES_PER_PERIOD: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("step size must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon {0} yields an empty trajectory")]
    EmptyTrajectory(f64),
    #[error("record stride must be at least 1")]
    ZeroStride,
    #[error("step {dt} does not resolve the fastest dither period (need dt <= {max})")]
    StepTooCoarse { dt: f64, max: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("state became non-finite during warmup at t = {t}")]
    WarmupNonFinite { t: f64 },
    #[error("warmup did not converge within t = {t}")]
    WarmupTimeout { t: f64 },
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("non-finite integrand during period averaging")]
    QuadratureFailure,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    /// Riccati states above this magnitude raise a divergence diagnostic.
    pub gamma_guard: f64,
}

impl IntegrationSettings {
    pub fn new(
        dt: f64,
        t_end: f64,
        record_stride: usize,
        gamma_guard: f64,
    ) -> Result<Self, IntegrateError> {
        let s = Self {
            dt,
            t_end,
            record_stride,
            gamma_guard,
        };
        s.validate()?;
        Ok(s)
    }

    /// `dt = (2π/ω_max)/40`, every step recorded.
    pub fn for_config(cfg: &AlgorithmConfig, t_end: f64) -> Result<Self, IntegrateError> {
        Self::new(default_dt(cfg), t_end, 1, DEFAULT_GAMMA_GUARD)
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrateError::NonPositiveStep(self.dt));
        }
        if !(self.t_end.is_finite() && self.steps() > 0) {
            return Err(IntegrateError::EmptyTrajectory(self.t_end));
        }
        if self.record_stride == 0 {
            return Err(IntegrateError::ZeroStride);
        }
        Ok(())
    }

    /// Also checks that `dt` resolves the fastest dither period.
    pub fn validate_for(&self, cfg: &AlgorithmConfig) -> Result<(), IntegrateError> {
        self.validate()?;
        let max = fastest_period(cfg) / MIN_STEPS_PER_PERIOD;
        if self.dt > max * (1.0 + 1e-12) {
            return Err(IntegrateError::StepTooCoarse { dt: self.dt, max });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        if self.t_end > 0.0 {
            (self.t_end / self.dt).round() as usize
        } else {
            0
        }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..*self }
    }

    /// Rounds `t_end` to a whole number of common dither periods (at least
    /// one) and shrinks `dt` to divide that period, so the run ends with
    /// `S(t_end) = 0`. Invalid settings are returned unchanged so that
    /// validation still rejects them.
    pub fn snapped(&self, cfg: &AlgorithmConfig) -> Self {
        if self.validate().is_err() {
            return *self;
        }
        let period = cfg.dither.common_period_time();
        let periods = (self.t_end / period).round().max(1.0);
        let per_period = (period / self.dt).ceil().max(1.0);
        Self {
            dt: period / per_period,
            t_end: periods * period,
            ..*self
        }
    }
}

pub fn fastest_period(cfg: &AlgorithmConfig) -> f64 {
    2.0 * std::f64::consts::PI / cfg.dither.max_omega()
}

pub fn default_dt(cfg: &AlgorithmConfig) -> f64 {
    fastest_period(cfg) / DEFAULT_STEPS_PER_PERIOD as f64
}

/// Time-indexed record. `j_values`/`h_values` are evaluated at the map input
/// of the respective model (`θ̂ + S(t)`, `θ̃ᵃ + θ*`, or `θ̃_r + θ*`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub j_values: Vec<f64>,
    pub h_values: Vec<f64>,
    /// First time a Riccati state exceeded the guard, if ever.
    pub gamma_divergence: Option<f64>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&S> {
        self.states.last()
    }
}

/// Output of the untyped integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub gamma_divergence: Option<f64>,
}

/// One classic RK4 step.
pub fn rk4_step<F>(rhs: &mut F, t: f64, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>, DynamicsError>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, DynamicsError>,
{
    let half = 0.5 * dt;
    let k1 = rhs(t, x)?;
    let k2 = rhs(t + half, &(x + &k1 * half))?;
    let k3 = rhs(t + half, &(x + &k2 * half))?;
    let k4 = rhs(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// Fixed-step RK4 from `t = 0`. Times are `i·dt` (not accumulated), every
/// `record_stride`-th step is kept, and the final step always is.
/// Components listed in `guarded` are watched against `gamma_guard`.
pub fn integrate<F>(
    mut rhs: F,
    x0: &DVector<f64>,
    settings: &IntegrationSettings,
    guarded: &[usize],
) -> Result<RawTrajectory, IntegrateError>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, DynamicsError>,
{
    settings.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteState { t: 0.0 });
    }
    let steps = settings.steps();
    let dt = settings.dt;
    let mut out = RawTrajectory {
        times: Vec::with_capacity(steps / settings.record_stride + 2),
        states: Vec::with_capacity(steps / settings.record_stride + 2),
        gamma_divergence: None,
    };
    let mut x = x0.clone();
    out.times.push(0.0);
    out.states.push(x.clone());
    for i in 0..steps {
        let t = i as f64 * dt;
        x = rk4_step(&mut rhs, t, &x, dt)?;
        let t_next = (i + 1) as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NonFiniteState { t: t_next });
        }
        if out.gamma_divergence.is_none()
            && guarded.iter().any(|&g| x[g].abs() > settings.gamma_guard)
        {
            out.gamma_divergence = Some(t_next);
        }
        if (i + 1) % settings.record_stride == 0 || i + 1 == steps {
            out.times.push(t_next);
            out.states.push(x.clone());
        }
    }
    Ok(out)
}

fn full_guarded(n: usize, newton: bool) -> Vec<usize> {
    if newton {
        vec![3 * n + 2, 3 * n + 3]
    } else {
        vec![3 * n + 2]
    }
}

/// Simulates the dithered algorithm selected by `cfg.variant`.
pub fn simulate_full(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    x0: &FullState,
    settings: &IntegrationSettings,
) -> Result<Trajectory<FullState>, IntegrateError> {
    settings.validate_for(cfg)?;
    cfg.check_plant(plant)?;
    let n = plant.dimension();
    let newton = x0.gamma_newton.is_some();
    if cfg.variant == Variant::NewtonAsfes && !newton {
        return Err(DynamicsError::MissingNewtonState.into());
    }
    let rhs = |t: f64, v: &DVector<f64>| -> Result<DVector<f64>, DynamicsError> {
        let x = FullState::from_slice(n, newton, v.as_slice())?;
        Ok(dynamics::full_rhs(plant, cfg, t, &x)?.to_vector())
    };
    let raw = integrate(rhs, &x0.to_vector(), settings, &full_guarded(n, newton))?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(raw.times.len()),
        states: Vec::with_capacity(raw.times.len()),
        j_values: Vec::with_capacity(raw.times.len()),
        h_values: Vec::with_capacity(raw.times.len()),
        gamma_divergence: raw.gamma_divergence,
    };
    for (t, v) in raw.times.into_iter().zip(raw.states) {
        let x = FullState::from_slice(n, newton, v.as_slice())?;
        let theta = x.theta(cfg, t);
        traj.j_values.push(plant.objective_unchecked(&theta));
        traj.h_values.push(plant.barrier_unchecked(&theta));
        traj.times.push(t);
        traj.states.push(x);
    }
    Ok(traj)
}

/// Simulates the averaged system; `j`/`h` are taken at `θ̃ᵃ + θ*`.
pub fn simulate_average(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    xa0: &AverageState,
    settings: &IntegrationSettings,
) -> Result<Trajectory<AverageState>, IntegrateError> {
    cfg.check_plant(plant)?;
    let n = plant.dimension();
    let rhs = |_t: f64, v: &DVector<f64>| -> Result<DVector<f64>, DynamicsError> {
        let xa = AverageState::from_slice(n, v.as_slice())?;
        Ok(dynamics::average_rhs(plant, cfg, &xa)?.to_vector())
    };
    let raw = integrate(rhs, &xa0.to_vector(), settings, &full_guarded(n, false))?;
    let mut traj = Trajectory {
        times: raw.times,
        states: Vec::with_capacity(raw.states.len()),
        j_values: Vec::with_capacity(raw.states.len()),
        h_values: Vec::with_capacity(raw.states.len()),
        gamma_divergence: raw.gamma_divergence,
    };
    for v in raw.states {
        let xa = AverageState::from_slice(n, v.as_slice())?;
        let theta = &xa.theta_tilde_a + plant.theta_star();
        traj.j_values.push(plant.objective_unchecked(&theta));
        traj.h_values.push(plant.barrier_unchecked(&theta));
        traj.states.push(xa);
    }
    Ok(traj)
}

/// Simulates the reduced model; states are `θ̃_r`, `j`/`h` at `θ̃_r + θ*`.
pub fn simulate_reduced(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    theta_tilde0: &DVector<f64>,
    settings: &IntegrationSettings,
) -> Result<Trajectory<DVector<f64>>, IntegrateError> {
    plant.check_dim(theta_tilde0).map_err(DynamicsError::from)?;
    let rhs = |_t: f64, v: &DVector<f64>| dynamics::reduced_rhs(plant, cfg, v);
    let raw = integrate(rhs, theta_tilde0, settings, &[])?;
    let (j_values, h_values) = raw
        .states
        .iter()
        .map(|th| {
            let theta = th + plant.theta_star();
            (plant.objective_unchecked(&theta), plant.barrier_unchecked(&theta))
        })
        .unzip();
    Ok(Trajectory {
        times: raw.times,
        states: raw.states,
        j_values,
        h_values,
        gamma_divergence: None,
    })
}

/// Initial filter guesses before warmup: measurements for the `η`
/// filters, zero gradients, unit Riccati states.
pub fn cold_filter_state(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    theta0: &DVector<f64>,
) -> Result<FullState, DynamicsError> {
    cfg.check_plant(plant)?;
    let n = plant.dimension();
    Ok(FullState {
        theta_hat: theta0.clone(),
        g_j: DVector::zeros(n),
        eta_j: plant.eval_objective(theta0)?,
        g_h: DVector::zeros(n),
        eta_h: plant.eval_barrier(theta0)?,
        gamma: 1.0,
        gamma_newton: (cfg.variant == Variant::NewtonAsfes).then_some(1.0),
    })
}

/// Integrates the filters with `θ̂` frozen at `theta0` until one common
/// period changes no filter state by more than `rel_tol·max(|x_i|, 1)`.
/// Sampling once per period keeps the dither ripple out of the test.
/// `settings.t_end` bounds the warmup time.
pub fn warmup(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    theta0: &DVector<f64>,
    settings: &IntegrationSettings,
    rel_tol: f64,
) -> Result<FullState, IntegrateError> {
    if !(rel_tol > 0.0) {
        return Err(IntegrateError::NonPositiveTolerance(rel_tol));
    }
    settings.validate()?;
    let x0 = cold_filter_state(plant, cfg, theta0)?;
    let n = plant.dimension();
    let newton = x0.gamma_newton.is_some();

    let period = cfg.dither.common_period_time();
    let per_period = (period / settings.dt).ceil().max(1.0) as usize;
    let dt = period / per_period as f64;
    let max_periods = (settings.t_end / period).ceil() as usize;

    let mut rhs = |t: f64, v: &DVector<f64>| -> Result<DVector<f64>, DynamicsError> {
        let x = FullState::from_slice(n, newton, v.as_slice())?;
        let mut d = dynamics::full_rhs(plant, cfg, t, &x)?.to_vector();
        d.rows_mut(0, n).fill(0.0);
        Ok(d)
    };

    let mut x = x0.to_vector();
    let mut step = 0usize;
    for _ in 0..max_periods {
        let prev = x.clone();
        for _ in 0..per_period {
            let t = step as f64 * dt;
            x = rk4_step(&mut rhs, t, &x, dt)?;
            step += 1;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(IntegrateError::WarmupNonFinite { t: step as f64 * dt });
            }
        }
        let settled = (n..x.len()).all(|i| (x[i] - prev[i]).abs() <= rel_tol * x[i].abs().max(1.0));
        if settled {
            let mut state = FullState::from_slice(n, newton, x.as_slice())?;
            state.theta_hat = theta0.clone();
            return Ok(state);
        }
    }
    Err(IntegrateError::WarmupTimeout {
        t: step as f64 * dt,
    })
}

/// Period average of [`dynamics::asfes_rhs`] at a fixed state, by composite
/// Simpson quadrature over the exact common period.
pub fn numeric_average(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    xa: &AverageState,
) -> Result<AverageState, IntegrateError> {
    numeric_average_with_nodes(plant, cfg, xa, QUADRATURE_NODES_PER_PERIOD)
}

pub fn numeric_average_with_nodes(
    plant: &PlantModel,
    cfg: &AlgorithmConfig,
    xa: &AverageState,
    nodes_per_fastest_period: usize,
) -> Result<AverageState, IntegrateError> {
    cfg.check_plant(plant)?;
    let period = cfg.dither.common_period_time();
    let fastest = fastest_period(cfg);
    let mut intervals =
        ((period / fastest).round().max(1.0) as usize) * nodes_per_fastest_period.max(2);
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let h = period / intervals as f64;
    let x = xa.to_full(plant.theta_star());
    let mut acc = DVector::zeros(FullState::vector_len(plant.dimension(), false));
    for i in 0..=intervals {
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = dynamics::asfes_rhs(plant, cfg, i as f64 * h, &x)?.to_vector();
        if f.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::QuadratureFailure);
        }
        acc += f * w;
    }
    acc *= h / 3.0 / period;
    Ok(AverageState::from_slice(plant.dimension(), acc.as_slice())?)
}
