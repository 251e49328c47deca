//! Seeded generators for random plants and algorithm configurations.

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::dynamics::{AlgorithmConfig, AverageState, Variant};
use crate::problem::{validate_plant, LinearBarrier, PlantModel, QuadraticObjective};
use crate::signals::{validate_frequencies, DitherConfig};

pub const MIN_CURVATURE: f64 = 0.1;
pub const MAX_CURVATURE: f64 = 10.0;
pub const MAX_RATIO: i64 = 9;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    Uniform::new_inclusive(lo, hi).expect("valid range").sample(rng)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    uniform(rng, lo.ln(), hi.ln()).exp()
}

/// Quadratic objective with `H = QΛQᵀ`, eigenvalues log-uniform in
/// `[MIN_CURVATURE, MAX_CURVATURE]`, and a barrier with `‖h1‖ ≥ 0.2`.
pub fn random_plant<R: Rng>(rng: &mut R, n: usize) -> PlantModel {
    let gauss: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let q = gauss.qr().q();
    let lambda = DVector::from_fn(n, |_, _| log_uniform(rng, MIN_CURVATURE, MAX_CURVATURE));
    let h: DMatrix<f64> = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    let hessian = (&h + h.transpose()) * 0.5;
    let theta_star = normal_vector(rng, n);
    let j_star = uniform(rng, -1.0, 1.0);
    let mut h1 = normal_vector(rng, n);
    let norm = h1.norm();
    if norm < 0.2 {
        h1 *= 0.2 / norm.max(f64::MIN_POSITIVE);
    }
    let h0 = uniform(rng, -2.0, 2.0);
    validate_plant(
        QuadraticObjective {
            j_star,
            hessian,
            theta_star,
        },
        LinearBarrier { h0, h1 },
    )
    .expect("generated plants are symmetric positive definite")
}

/// `n` distinct integer ratios in `1..=MAX_RATIO` with no `ω_i + ω_j = ω_k`.
pub fn random_frequencies<R: Rng>(rng: &mut R, n: usize) -> Vec<Rational64> {
    assert!(n as i64 <= MAX_RATIO / 2 + 1, "too many frequencies requested");
    loop {
        let mut pool: Vec<i64> = (1..=MAX_RATIO).collect();
        let mut picked = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.random_range(0..pool.len());
            picked.push(Rational64::from_integer(pool.swap_remove(i)));
        }
        if validate_frequencies(&picked).is_ok() {
            return picked;
        }
    }
}

pub fn random_config<R: Rng>(rng: &mut R, n: usize) -> AlgorithmConfig {
    let ratios = random_frequencies(rng, n);
    let dither = DitherConfig::new(uniform(rng, 0.05, 0.5), uniform(rng, 5.0, 50.0), ratios)
        .expect("generated frequencies are valid");
    AlgorithmConfig::new(
        log_uniform(rng, 0.05, 1.0),
        log_uniform(rng, 0.05, 2.0),
        log_uniform(rng, 1e-5, 1e-2),
        log_uniform(rng, 0.5, 5.0),
        dither,
        Variant::Asfes,
    )
    .expect("generated gains are positive")
}

/// Average-system state with positive `γ`.
pub fn random_average_state<R: Rng>(rng: &mut R, n: usize) -> AverageState {
    AverageState {
        theta_tilde_a: normal_vector(rng, n),
        g_j_a: normal_vector(rng, n),
        eta_j_a: StandardNormal.sample(rng),
        g_h_a: normal_vector(rng, n),
        eta_h_a: StandardNormal.sample(rng),
        gamma_a: log_uniform(rng, 0.1, 10.0),
    }
}

/// Dimension uniform in `1..=max_n`.
pub fn random_dimension<R: Rng>(rng: &mut R, max_n: usize) -> usize {
    rng.random_range(1..=max_n)
}
