//! Dither and demodulation signals, the smooth max, and the exact
//! rational bookkeeping behind the averaging period.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_integer::Integer;
use num_rational::Rational64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("smooth-max softening delta must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("dither amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("frequency base scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("at least one dither frequency is required")]
    NoFrequencies,
    #[error("frequency {0} must be a positive rational")]
    NonPositiveFrequency(usize),
    #[error("frequencies {0} and {1} are equal")]
    DuplicateFrequency(usize, usize),
    #[error("frequencies {0} + {1} = {2} resonate")]
    ResonantTriple(usize, usize, usize),
}

/// `maxδ{x} = ½(x + √(x² + δ))`, a strictly positive C¹ stand-in for `max{x, 0}`.
pub fn smooth_max(x: f64, delta: f64) -> Result<f64, SignalError> {
    if !(delta > 0.0) {
        return Err(SignalError::NonPositiveDelta(delta));
    }
    Ok(smooth_max_unchecked(x, delta))
}

// For x < 0 the conjugate form avoids cancelling x against the root.
pub(crate) fn smooth_max_unchecked(x: f64, delta: f64) -> f64 {
    let r = (x * x + delta).sqrt();
    if x >= 0.0 {
        0.5 * (x + r)
    } else {
        0.5 * delta / (r - x)
    }
}

/// Derivative of the smooth max, `½(x/√(x²+δ) + 1)`, always in (0, 1).
pub fn smooth_max_slope(x: f64, delta: f64) -> f64 {
    let r = (x * x + delta).sqrt();
    if x >= 0.0 {
        0.5 * (x / r + 1.0)
    } else {
        // 1 + x/r = (r + x)/r = δ/(r(r − x))
        0.5 * delta / (r * (r - x))
    }
}

/// Sinusoidal dither with exact rational frequency ratios: `ω_i = ω·p_i/q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherConfig {
    amplitude: f64,
    base_scale: f64,
    ratios: Vec<Rational64>,
    omegas: Vec<f64>,
}

impl DitherConfig {
    pub fn new(
        amplitude: f64,
        base_scale: f64,
        ratios: Vec<Rational64>,
    ) -> Result<Self, SignalError> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(SignalError::NonPositiveAmplitude(amplitude));
        }
        if !(base_scale > 0.0 && base_scale.is_finite()) {
            return Err(SignalError::NonPositiveScale(base_scale));
        }
        validate_frequencies(&ratios)?;
        let omegas = ratios.iter().map(|r| base_scale * ratio_to_f64(r)).collect();
        Ok(Self {
            amplitude,
            base_scale,
            ratios,
            omegas,
        })
    }

    /// Integer frequency ratios, the common case.
    pub fn from_integers(
        amplitude: f64,
        base_scale: f64,
        ratios: &[i64],
    ) -> Result<Self, SignalError> {
        Self::new(
            amplitude,
            base_scale,
            ratios.iter().map(|&p| Rational64::from_integer(p)).collect(),
        )
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn base_scale(&self) -> f64 {
        self.base_scale
    }

    pub fn ratios(&self) -> &[Rational64] {
        &self.ratios
    }

    /// Physical frequencies `ω_i`.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    pub fn max_omega(&self) -> f64 {
        self.omegas.iter().copied().fold(0.0, f64::max)
    }

    /// Same ratios, new amplitude and base scale.
    pub fn rescaled(&self, amplitude: f64, base_scale: f64) -> Result<Self, SignalError> {
        Self::new(amplitude, base_scale, self.ratios.clone())
    }

    /// Least common period in the `τ = ωt` scale.
    pub fn common_period(&self) -> f64 {
        common_period(self)
    }

    /// Least common period in original time, `Π/ω`.
    pub fn common_period_time(&self) -> f64 {
        self.common_period() / self.base_scale
    }
}

pub(crate) fn ratio_to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Checks distinctness and that no two distinct ratios sum to a third.
/// Indices in errors are 1-based.
pub fn validate_frequencies(ratios: &[Rational64]) -> Result<(), SignalError> {
    if ratios.is_empty() {
        return Err(SignalError::NoFrequencies);
    }
    for (i, r) in ratios.iter().enumerate() {
        if *r.numer() <= 0 || *r.denom() <= 0 {
            return Err(SignalError::NonPositiveFrequency(i + 1));
        }
    }
    let n = ratios.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if ratios[i] == ratios[j] {
                return Err(SignalError::DuplicateFrequency(i + 1, j + 1));
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let sum = ratios[i] + ratios[j];
            for (k, r) in ratios.iter().enumerate() {
                if k != i && k != j && *r == sum {
                    return Err(SignalError::ResonantTriple(i + 1, j + 1, k + 1));
                }
            }
        }
    }
    Ok(())
}

/// `Π = 2π·LCM{1/ω_i′} = 2π·LCM(q_i)/GCD(p_i)` for `ω_i′ = p_i/q_i` in lowest terms.
pub fn common_period(cfg: &DitherConfig) -> f64 {
    let (num, den) = cfg
        .ratios
        .iter()
        .fold((1i64, 0i64), |(l, g), r| (l.lcm(r.denom()), g.gcd(r.numer())));
    2.0 * PI * num as f64 / den as f64
}

pub fn dither(cfg: &DitherConfig, t: f64) -> DVector<f64> {
    DVector::from_iterator(
        cfg.omegas.len(),
        cfg.omegas.iter().map(|w| cfg.amplitude * (w * t).sin()),
    )
}

pub fn demod(cfg: &DitherConfig, t: f64) -> DVector<f64> {
    let g = 2.0 / cfg.amplitude;
    DVector::from_iterator(cfg.omegas.len(), cfg.omegas.iter().map(|w| g * (w * t).sin()))
}

/// Scalar Newton demodulation `N(t) = (16/a²)(sin²(ωt) − ½)`.
pub fn newton_demod(amplitude: f64, omega: f64, t: f64) -> Result<f64, SignalError> {
    if !(amplitude > 0.0) {
        return Err(SignalError::NonPositiveAmplitude(amplitude));
    }
    let s = (omega * t).sin();
    Ok(16.0 / (amplitude * amplitude) * (s * s - 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn r(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    #[test]
    fn smooth_max_values() {
        assert_relative_eq!(smooth_max(0.0, 1e-4).unwrap(), 0.005, epsilon = 1e-16);
        assert_relative_eq!(
            smooth_max(1.0, 1e-3).unwrap(),
            0.5 * (1.0 + 1.001f64.sqrt()),
            epsilon = 1e-15
        );
        assert_eq!(smooth_max(1.0, 0.0), Err(SignalError::NonPositiveDelta(0.0)));
        assert!(smooth_max(1.0, -1.0).is_err());
    }

    #[test]
    fn smooth_max_dominates_hard_max() {
        for delta in [1e-6, 1e-3, 1.0] {
            for i in -10..=10 {
                let x = i as f64;
                let m = smooth_max(x, delta).unwrap();
                assert!(m > x.max(0.0), "x={x} delta={delta}");
                assert!(m - x.max(0.0) <= 0.5 * delta.sqrt() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn smooth_max_stable_form_agrees_with_textbook() {
        for x in [-3.0, -0.1, -1e-3, 0.0, 1e-3, 2.0] {
            let naive = 0.5 * (x + (x * x + 1e-2f64).sqrt());
            assert_relative_eq!(smooth_max(x, 1e-2).unwrap(), naive, max_relative = 1e-12);
        }
    }

    #[test]
    fn slope_matches_central_difference() {
        for x in [-2.0, -0.05, 0.0, 0.03, 1.5] {
            let h = 1e-6;
            let fd = (smooth_max_unchecked(x + h, 1e-3) - smooth_max_unchecked(x - h, 1e-3))
                / (2.0 * h);
            assert_relative_eq!(smooth_max_slope(x, 1e-3), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn dither_and_demod_values() {
        let cfg = DitherConfig::from_integers(0.25, 75.0, &[1]).unwrap();
        assert_eq!(dither(&cfg, 0.0)[0], 0.0);
        assert_eq!(demod(&cfg, 0.0)[0], 0.0);
        let t = PI / 150.0;
        assert_relative_eq!(dither(&cfg, t)[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(demod(&cfg, t)[0], 8.0, epsilon = 1e-14);

        let cfg2 = DitherConfig::from_integers(0.25, 1.0, &[75, 100]).unwrap();
        let s = dither(&cfg2, 2.0 * PI / 25.0);
        assert!(s.amax() < 1e-13);
        for t in [0.01, 0.3, 1.7] {
            let d = dither(&cfg2, t);
            let m = demod(&cfg2, t) * (0.25 * 0.25 / 2.0);
            assert_relative_eq!(d, m, epsilon = 1e-15);
        }
    }

    #[test]
    fn newton_demod_values() {
        assert_relative_eq!(newton_demod(0.25, 200.0, 0.0).unwrap(), -128.0);
        assert_relative_eq!(newton_demod(2.0, 1.0, PI / 2.0).unwrap(), 2.0, epsilon = 1e-14);
        assert!(newton_demod(0.0, 1.0, 0.0).is_err());
        // one period of sin(ωt) averages to zero
        let n = 1000;
        let omega = 3.0;
        let period = 2.0 * PI / omega;
        let mean: f64 = (0..n)
            .map(|i| newton_demod(0.25, omega, period * i as f64 / n as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn frequency_validation() {
        assert!(validate_frequencies(&[r(75, 1), r(100, 1)]).is_ok());
        assert_eq!(
            validate_frequencies(&[r(1, 1), r(2, 1), r(3, 1)]),
            Err(SignalError::ResonantTriple(1, 2, 3))
        );
        assert_eq!(
            validate_frequencies(&[r(3, 1), r(3, 1)]),
            Err(SignalError::DuplicateFrequency(1, 2))
        );
        assert_eq!(
            validate_frequencies(&[r(1, 2), r(1, 3), r(5, 6)]),
            Err(SignalError::ResonantTriple(1, 2, 3))
        );
        assert_eq!(validate_frequencies(&[]), Err(SignalError::NoFrequencies));
        assert_eq!(
            validate_frequencies(&[r(-1, 1)]),
            Err(SignalError::NonPositiveFrequency(1))
        );
    }

    #[test]
    fn common_periods() {
        let cfg = DitherConfig::from_integers(0.25, 1.0, &[75, 100]).unwrap();
        assert_relative_eq!(cfg.common_period(), 2.0 * PI / 25.0, epsilon = 1e-15);
        let one = DitherConfig::from_integers(0.25, 1.0, &[1]).unwrap();
        assert_relative_eq!(one.common_period(), 2.0 * PI);
        let frac = DitherConfig::new(0.25, 1.0, vec![r(3, 2), r(1, 1)]).unwrap();
        assert_relative_eq!(frac.common_period(), 4.0 * PI);
        // both components return to phase
        let p = frac.common_period();
        assert!((1.5 * p).sin().abs() < 1e-14 && p.sin().abs() < 1e-14);
        // half of it is not a common period: sin(1.5·2π) = 0 but cos(1.5·2π) = −1
        assert!((1.5 * p / 2.0).cos() < -0.99);
    }

    #[test]
    fn periodicity_in_original_time() {
        let cfg = DitherConfig::from_integers(0.3, 2.0, &[75, 100]).unwrap();
        let period = cfg.common_period_time();
        for t in [0.0, 0.123, 1.0] {
            assert_relative_eq!(dither(&cfg, t), dither(&cfg, t + period), epsilon = 1e-12);
            assert_relative_eq!(demod(&cfg, t), demod(&cfg, t + period), epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gap_to_hard_max_bounded(x in -50.0f64..50.0, delta in 1e-8f64..10.0) {
                let gap = smooth_max(x, delta).unwrap() - x.max(0.0);
                prop_assert!(gap > 0.0);
                prop_assert!(gap <= 0.5 * delta.sqrt() * (1.0 + 1e-12));
            }

            #[test]
            fn monotone_in_x(mut xs in proptest::collection::vec(-20.0f64..20.0, 2..40),
                             delta in 1e-6f64..1.0) {
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let ys: Vec<f64> = xs.iter().map(|&x| smooth_max(x, delta).unwrap()).collect();
                for w in ys.windows(2) {
                    prop_assert!(w[0] <= w[1]);
                }
            }

            #[test]
            fn validation_is_permutation_invariant(
                ps in proptest::collection::vec(1i64..12, 1..5),
                seed in 0usize..24,
            ) {
                let ratios: Vec<Rational64> = ps.iter().map(|&p| Rational64::from_integer(p)).collect();
                let mut permuted = ratios.clone();
                let n = permuted.len();
                permuted.rotate_left(seed % n);
                if n > 1 { permuted.swap(0, seed % n); }
                prop_assert_eq!(
                    validate_frequencies(&ratios).is_ok(),
                    validate_frequencies(&permuted).is_ok()
                );
            }
        }
    }
}
