//! Plant model: the quadratic objective and linear barrier that the
//! optimizer only ever sees through measurements.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use thiserror::Error;

const SYMMETRY_TOL: f64 = 1e-12;
const PD_RELATIVE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("objective assumption violated: Hessian is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetricHessian { asymmetry: f64 },
    #[error("objective assumption violated: Hessian is not positive definite (eigenvalues {min:e}..{max:e})")]
    NonPositiveDefiniteHessian { min: f64, max: f64 },
    #[error("barrier assumption violated: barrier gradient h1 is zero")]
    ZeroBarrierGradient,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
}

/// `J(θ) = J* + ½(θ−θ*)ᵀH(θ−θ*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub j_star: f64,
    pub hessian: DMatrix<f64>,
    pub theta_star: DVector<f64>,
}

/// `h(θ) = h0 + h1ᵀ(θ−θ*)`, with `θ*` shared with the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBarrier {
    pub h0: f64,
    pub h1: DVector<f64>,
}

/// A validated plant. Construct through [`validate_plant`].
#[derive(Debug, Clone)]
pub struct PlantModel {
    objective: QuadraticObjective,
    barrier: LinearBarrier,
    dimension: usize,
    chol: Cholesky<f64, Dyn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedOptimum {
    pub theta_smin: DVector<f64>,
    pub j_s_star: f64,
    /// True iff `h0 < 0`, i.e. the constraint binds.
    pub active: bool,
}

pub fn validate_plant(
    objective: QuadraticObjective,
    barrier: LinearBarrier,
) -> Result<PlantModel, ProblemError> {
    let n = objective.theta_star.len();
    let h = &objective.hessian;
    if h.nrows() != n || h.ncols() != n {
        return Err(ProblemError::DimensionMismatch {
            expected: n,
            found: if h.nrows() != n { h.nrows() } else { h.ncols() },
        });
    }
    if barrier.h1.len() != n {
        return Err(ProblemError::DimensionMismatch {
            expected: n,
            found: barrier.h1.len(),
        });
    }
    if n == 0 {
        return Err(ProblemError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }

    let asymmetry = (h - h.transpose()).amax();
    if !(asymmetry <= SYMMETRY_TOL) {
        return Err(ProblemError::NonSymmetricHessian { asymmetry });
    }
    let eig = SymmetricEigen::new(h.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(max > 0.0 && min > PD_RELATIVE_FLOOR * max) {
        return Err(ProblemError::NonPositiveDefiniteHessian { min, max });
    }
    if barrier.h1.iter().all(|v| *v == 0.0) || !barrier.h1.iter().all(|v| v.is_finite()) {
        return Err(ProblemError::ZeroBarrierGradient);
    }
    let chol = Cholesky::new(h.clone())
        .ok_or(ProblemError::NonPositiveDefiniteHessian { min, max })?;

    Ok(PlantModel {
        objective,
        barrier,
        dimension: n,
        chol,
    })
}

impl PartialEq for PlantModel {
    fn eq(&self, other: &Self) -> bool {
        self.objective == other.objective && self.barrier == other.barrier
    }
}

impl PlantModel {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn objective(&self) -> &QuadraticObjective {
        &self.objective
    }

    pub fn barrier(&self) -> &LinearBarrier {
        &self.barrier
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.objective.hessian
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.objective.theta_star
    }

    pub fn j_star(&self) -> f64 {
        self.objective.j_star
    }

    pub fn h0(&self) -> f64 {
        self.barrier.h0
    }

    pub fn h1(&self) -> &DVector<f64> {
        &self.barrier.h1
    }

    pub fn check_dim(&self, v: &DVector<f64>) -> Result<(), ProblemError> {
        if v.len() != self.dimension {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dimension,
                found: v.len(),
            });
        }
        Ok(())
    }

    pub fn eval_objective(&self, theta: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check_dim(theta)?;
        Ok(self.objective_unchecked(theta))
    }

    pub fn eval_barrier(&self, theta: &DVector<f64>) -> Result<f64, ProblemError> {
        self.check_dim(theta)?;
        Ok(self.barrier_unchecked(theta))
    }

    /// Objective with the dimension check hoisted out; callers guarantee `theta.len() == n`.
    pub(crate) fn objective_unchecked(&self, theta: &DVector<f64>) -> f64 {
        let e = theta - &self.objective.theta_star;
        self.objective.j_star + 0.5 * e.dot(&(&self.objective.hessian * &e))
    }

    pub(crate) fn barrier_unchecked(&self, theta: &DVector<f64>) -> f64 {
        let e = theta - &self.objective.theta_star;
        self.barrier.h0 + self.barrier.h1.dot(&e)
    }

    /// `H⁻¹ v` via the Cholesky factor.
    pub fn solve_hessian(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `h1ᵀH⁻¹h1`, strictly positive for a valid plant.
    pub fn h1_hinv_h1(&self) -> f64 {
        self.barrier.h1.dot(&self.solve_hessian(&self.barrier.h1))
    }

    pub fn h1_norm_sq(&self) -> f64 {
        self.barrier.h1.norm_squared()
    }

    /// Same plant with a different barrier offset. Used by parameter sweeps.
    pub fn with_h0(&self, h0: f64) -> PlantModel {
        let mut p = self.clone();
        p.barrier.h0 = h0;
        p
    }

    /// Minimizer and minimum of `J` on `{h ≥ 0}`.
    pub fn constrained_minimum(&self) -> ConstrainedOptimum {
        let h0 = self.barrier.h0;
        if h0 >= 0.0 {
            return ConstrainedOptimum {
                theta_smin: self.objective.theta_star.clone(),
                j_s_star: self.objective.j_star,
                active: false,
            };
        }
        let hinv_h1 = self.solve_hessian(&self.barrier.h1);
        let q = self.barrier.h1.dot(&hinv_h1);
        let theta_smin = hinv_h1 * (h0.abs() / q) + &self.objective.theta_star;
        ConstrainedOptimum {
            theta_smin,
            j_s_star: self.objective.j_star + h0 * h0 / (2.0 * q),
            active: true,
        }
    }

    /// Whether `h1` is numerically an eigenvector of `H⁻¹`, which is when the
    /// Newton variant's equilibrium coincides with the constrained optimum.
    pub fn nb_eigenvector_condition(&self, tol: f64) -> Result<bool, ProblemError> {
        if !(tol > 0.0) {
            return Err(ProblemError::NonPositiveTolerance(tol));
        }
        let h1 = &self.barrier.h1;
        let hinv_h1 = self.solve_hessian(h1);
        let scale = h1.dot(&hinv_h1) / h1.norm_squared();
        let residual = (&hinv_h1 - h1 * scale).norm();
        Ok(residual <= tol * hinv_h1.norm())
    }
}

/// Free-function form of [`PlantModel::eval_objective`].
pub fn eval_objective(plant: &PlantModel, theta: &DVector<f64>) -> Result<f64, ProblemError> {
    plant.eval_objective(theta)
}

pub fn eval_barrier(plant: &PlantModel, theta: &DVector<f64>) -> Result<f64, ProblemError> {
    plant.eval_barrier(theta)
}

pub fn constrained_minimum(plant: &PlantModel) -> ConstrainedOptimum {
    plant.constrained_minimum()
}

pub fn nb_eigenvector_condition(plant: &PlantModel, tol: f64) -> Result<bool, ProblemError> {
    plant.nb_eigenvector_condition(tol)
}

/// Builds a plant from plain slices; `hessian` is row-major.
pub fn plant_from_parts(
    j_star: f64,
    hessian: &[f64],
    theta_star: &[f64],
    h0: f64,
    h1: &[f64],
) -> Result<PlantModel, ProblemError> {
    let n = theta_star.len();
    if hessian.len() != n * n {
        return Err(ProblemError::DimensionMismatch {
            expected: n * n,
            found: hessian.len(),
        });
    }
    validate_plant(
        QuadraticObjective {
            j_star,
            hessian: DMatrix::from_row_slice(n, n, hessian),
            theta_star: DVector::from_column_slice(theta_star),
        },
        LinearBarrier {
            h0,
            h1: DVector::from_column_slice(h1),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example1() -> PlantModel {
        plant_from_parts(0.0, &[0.1], &[0.0], -1.0, &[-1.0]).unwrap()
    }

    fn example2() -> PlantModel {
        plant_from_parts(0.0, &[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0], -1.0, &[1.0, 1.0]).unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    // Independent grid evaluation: sums H_ij e_i e_j directly.
    fn grid_objective(j_star: f64, h: &[f64], ts: &[f64], th: &[f64]) -> f64 {
        let n = ts.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += h[i * n + j] * (th[i] - ts[i]) * (th[j] - ts[j]);
            }
        }
        j_star + 0.5 * acc
    }

    #[test]
    fn example_plants_validate() {
        assert_eq!(example1().dimension(), 1);
        assert_eq!(example2().dimension(), 2);
    }

    #[test]
    fn indefinite_hessian_rejected() {
        let err = plant_from_parts(0.0, &[1.0, 2.0, 2.0, 1.0], &[0.0, 0.0], -1.0, &[1.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, ProblemError::NonPositiveDefiniteHessian { .. }));
    }

    #[test]
    fn asymmetric_hessian_rejected() {
        let err = plant_from_parts(0.0, &[1.0, 0.1, 0.0, 1.0], &[0.0, 0.0], -1.0, &[1.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, ProblemError::NonSymmetricHessian { .. }));
    }

    #[test]
    fn zero_barrier_gradient_rejected() {
        let err = plant_from_parts(0.0, &[1.0], &[0.0], -1.0, &[0.0]).unwrap_err();
        assert_eq!(err, ProblemError::ZeroBarrierGradient);
    }

    #[test]
    fn dimension_mismatches_rejected() {
        let err = plant_from_parts(0.0, &[1.0], &[0.0], -1.0, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, ProblemError::DimensionMismatch { .. }));
        let p = example2();
        assert!(matches!(
            p.eval_objective(&v(&[1.0])),
            Err(ProblemError::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(p.eval_barrier(&v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn nearly_singular_hessian_rejected() {
        let err = plant_from_parts(0.0, &[1.0, 0.0, 0.0, 1e-12], &[0.0, 0.0], 1.0, &[1.0, 0.0])
            .unwrap_err();
        assert!(matches!(err, ProblemError::NonPositiveDefiniteHessian { .. }));
    }

    #[test]
    fn objective_values() {
        let p1 = example1();
        let got = p1.eval_objective(&v(&[-3.0])).unwrap();
        assert_relative_eq!(got, grid_objective(0.0, &[0.1], &[0.0], &[-3.0]), epsilon = 1e-15);
        assert_relative_eq!(got, 0.45, epsilon = 1e-15);

        let p2 = example2();
        let got = p2.eval_objective(&v(&[0.5, 0.5])).unwrap();
        let grid = grid_objective(0.0, &[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0], &[0.5, 0.5]);
        assert_relative_eq!(got, grid, epsilon = 1e-15);
        assert_relative_eq!(got, 0.5, epsilon = 1e-15);

        let p = plant_from_parts(1.5, &[3.0, 1.0, 1.0, 2.0], &[0.3, -0.7], 0.2, &[1.0, -2.0])
            .unwrap();
        assert_eq!(p.eval_objective(p.theta_star()).unwrap(), 1.5);
    }

    #[test]
    fn barrier_values() {
        assert_relative_eq!(example1().eval_barrier(&v(&[-3.0])).unwrap(), 2.0);
        assert_relative_eq!(example2().eval_barrier(&v(&[0.5, 0.5])).unwrap(), 0.0);
        let p = plant_from_parts(0.0, &[1.0], &[4.0], 0.7, &[2.0]).unwrap();
        assert_eq!(p.eval_barrier(&v(&[4.0])).unwrap(), 0.7);
    }

    // Brute-force: scan a 1e-3 grid on [-2,2]^2 restricted to h >= 0.
    #[test]
    fn constrained_minimum_matches_grid_search_example2() {
        let p = example2();
        let opt = p.constrained_minimum();
        assert!(opt.active);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 4000;
        for i in 0..=steps {
            let x = -2.0 + 4.0 * i as f64 / steps as f64;
            for j in 0..=steps {
                let y = -2.0 + 4.0 * j as f64 / steps as f64;
                if x + y - 1.0 >= -1e-12 {
                    let val = x * x + y * y;
                    if val < best.0 {
                        best = (val, x, y);
                    }
                }
            }
        }
        assert_relative_eq!(opt.j_s_star, best.0, epsilon = 2e-3);
        assert_relative_eq!(opt.theta_smin[0], best.1, epsilon = 1e-3);
        assert_relative_eq!(opt.theta_smin[1], best.2, epsilon = 1e-3);
        assert_relative_eq!(opt.theta_smin[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(opt.j_s_star, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn constrained_minimum_example1_line_search() {
        let p = example1();
        let opt = p.constrained_minimum();
        // safe set is theta <= -1; scan it.
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=100_000 {
            let th = -5.0 + 5.0 * i as f64 / 100_000.0;
            if -1.0 - th >= 0.0 {
                let j = 0.05 * th * th;
                if j < best.0 {
                    best = (j, th);
                }
            }
        }
        assert_relative_eq!(opt.theta_smin[0], best.1, epsilon = 1e-4);
        assert_relative_eq!(opt.j_s_star, best.0, epsilon = 1e-6);
        assert_relative_eq!(opt.theta_smin[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(opt.j_s_star, 0.05, epsilon = 1e-14);
    }

    #[test]
    fn inactive_constraint_returns_unconstrained_minimum() {
        let p = plant_from_parts(0.0, &[0.1], &[0.0], 1.0, &[-1.0]).unwrap();
        let opt = p.constrained_minimum();
        assert!(!opt.active);
        assert_eq!(opt.theta_smin[0], 0.0);
        assert_eq!(opt.j_s_star, 0.0);
        // h0 = 0 counts as inactive
        let opt = p.with_h0(0.0).constrained_minimum();
        assert!(!opt.active);
    }

    #[test]
    fn nb_condition_cases() {
        assert!(example1().nb_eigenvector_condition(1e-9).unwrap());
        assert!(example2().nb_eigenvector_condition(1e-9).unwrap());
        let p = plant_from_parts(0.0, &[1.0, 0.0, 0.0, 4.0], &[0.0, 0.0], -1.0, &[1.0, 1.0])
            .unwrap();
        // H⁻¹h1 = (1, 0.25) is not parallel to (1, 1)
        let hinv_h1 = p.solve_hessian(p.h1());
        assert_relative_eq!(hinv_h1[0], 1.0);
        assert_relative_eq!(hinv_h1[1], 0.25);
        assert!(!p.nb_eigenvector_condition(1e-6).unwrap());
        assert_eq!(
            p.nb_eigenvector_condition(0.0),
            Err(ProblemError::NonPositiveTolerance(0.0))
        );
    }
}
