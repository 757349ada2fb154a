//! Battery state of charge and constraint penalties.
//!
//! The battery absorbs the power tracking error: positive error charges it.
//! SOC evolves as `soc += s_norm * dt * e` and is deliberately never clamped,
//! so violations stay visible to the penalties and diagnostics. Constraints
//! are soft: each penalty is zero while its constraint holds and grows
//! linearly beyond the boundary, so a schedule always exists even when the
//! battery is (temporarily) outside its limits.
//!
//! The four penalty terms over a predicted horizon window:
//! * `B1` — battery power: `c1 * (p_norm * max|e| - 1)` once the normalized
//!   power `p_norm * max|e|` reaches 1.
//! * `B2` — SOC below zero, weighted by the mean depth of the excursion.
//! * `B3` — SOC above `soc_hi`, mean depth.
//! * `B4` — SOC below `soc_lo`, mean depth.
//!
//! Averaging the SOC excursion depth over the window (rather than taking its
//! worst point) keeps the penalty sensitive to *how long* and *how far* the
//! prediction strays, and in particular still ranks candidates when the
//! window *starts* outside the band: draining faster lowers the mean, so the
//! optimizer is pulled back toward the allowed range instead of seeing every
//! candidate as equally bad.

use thiserror::Error;

use crate::num::{lit, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum BatteryError {
    #[error("power normalization must be positive and finite, got {got}")]
    BadPowerNorm { got: f64 },
    #[error("SOC normalization must be positive and finite, got {got}")]
    BadSocNorm { got: f64 },
    #[error("SOC band [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1")]
    BadSocBand { lo: f64, hi: f64 },
    #[error("penalty weight c{index} must be nonnegative and finite, got {got}")]
    BadWeight { index: usize, got: f64 },
    #[error("error and SOC sequences differ in length: {e_len} vs {soc_len}")]
    LengthMismatch { e_len: usize, soc_len: usize },
}

/// Battery normalization constants, SOC band, and penalty weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatterySpec<F> {
    /// Power normalization, 1/PU: `p_norm * |e| < 1` is the power limit.
    pub p_norm: F,
    /// Energy-to-SOC normalization, 1/(PU·s): SOC gained per PU·second.
    pub s_norm: F,
    /// Lower SOC bound (fraction).
    pub soc_lo: F,
    /// Upper SOC bound (fraction).
    pub soc_hi: F,
    /// Penalty weights `[c1, c2, c3, c4]` for power, SOC < 0, SOC > hi,
    /// SOC < lo.
    pub c: [F; 4],
}

impl<F: Scalar> Default for BatterySpec<F> {
    /// Defaults for the demo scenario: power limited to a tenth of a PU and
    /// capacity sized so the demo day's absorbed surplus spans most of the
    /// SOC comfort band (109 PU-seconds of storage).
    fn default() -> Self {
        Self {
            p_norm: lit(10.0),
            s_norm: F::one() / lit(109.0),
            soc_lo: lit(0.1),
            soc_hi: lit(0.9),
            c: [lit(10.0), lit(1000.0), lit(10.0), lit(10.0)],
        }
    }
}

impl<F: Scalar> BatterySpec<F> {
    pub fn validate(&self) -> Result<(), BatteryError> {
        if !(self.p_norm > F::zero()) || !self.p_norm.is_finite() {
            return Err(BatteryError::BadPowerNorm {
                got: self.p_norm.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(self.s_norm > F::zero()) || !self.s_norm.is_finite() {
            return Err(BatteryError::BadSocNorm {
                got: self.s_norm.to_f64().unwrap_or(f64::NAN),
            });
        }
        let in_unit = |x: F| x >= F::zero() && x <= F::one();
        if !in_unit(self.soc_lo) || !in_unit(self.soc_hi) || !(self.soc_lo < self.soc_hi) {
            return Err(BatteryError::BadSocBand {
                lo: self.soc_lo.to_f64().unwrap_or(f64::NAN),
                hi: self.soc_hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        for (i, &w) in self.c.iter().enumerate() {
            if !(w >= F::zero()) || !w.is_finite() {
                return Err(BatteryError::BadWeight {
                    index: i + 1,
                    got: w.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// One SOC update: positive error charges the battery. The single
    /// definition shared by trajectory prediction and the live simulation,
    /// so both produce bit-identical sequences.
    pub fn soc_step(&self, soc: F, e: F, dt_s: F) -> F {
        soc + self.s_norm * dt_s * e
    }
}

/// Current battery charge as a fraction of capacity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryState<F> {
    pub soc: F,
}

/// SOC after each error sample, starting from `soc0` (which is not itself an
/// element of the result). Unclamped.
pub fn soc_trajectory<F: Scalar>(soc0: F, e: &[F], spec: &BatterySpec<F>, dt_s: F) -> Vec<F> {
    let mut soc = soc0;
    e.iter()
        .map(|&ek| {
            soc = spec.soc_step(soc, ek, dt_s);
            soc
        })
        .collect()
}

/// The four penalty terms for a predicted window: `e` on the fine grid and
/// the matching unclamped SOC trajectory.
pub fn barrier_terms<F: Scalar>(
    spec: &BatterySpec<F>,
    e: &[F],
    soc_traj: &[F],
) -> Result<[F; 4], BatteryError> {
    if e.len() != soc_traj.len() {
        return Err(BatteryError::LengthMismatch {
            e_len: e.len(),
            soc_len: soc_traj.len(),
        });
    }
    if e.is_empty() {
        return Ok([F::zero(); 4]);
    }
    let len = lit::<F>(e.len() as f64);

    let max_norm_power = e
        .iter()
        .map(|&v| spec.p_norm * v.abs())
        .fold(F::zero(), F::max);
    let b1 = if max_norm_power >= F::one() {
        spec.c[0] * (max_norm_power - F::one())
    } else {
        F::zero()
    };

    let mut below_zero = F::zero();
    let mut above_hi = F::zero();
    let mut below_lo = F::zero();
    for &s in soc_traj {
        below_zero = below_zero + (-s).max(F::zero());
        above_hi = above_hi + (s - spec.soc_hi).max(F::zero());
        below_lo = below_lo + (spec.soc_lo - s).max(F::zero());
    }
    let b2 = spec.c[1] * below_zero / len;
    let b3 = spec.c[2] * above_hi / len;
    let b4 = spec.c[3] * below_lo / len;

    Ok([b1, b2, b3, b4])
}

/// Sum of all four penalty terms.
pub fn barrier_penalty<F: Scalar>(
    spec: &BatterySpec<F>,
    e: &[F],
    soc_traj: &[F],
) -> Result<F, BatteryError> {
    Ok(barrier_terms(spec, e, soc_traj)?.into_iter().sum())
}

/// Whether the battery power limit holds over a sequence of errors, plus the
/// worst normalized power `p_norm * max|e|`.
pub fn check_power_constraint<F: Scalar>(spec: &BatterySpec<F>, e: &[F]) -> (bool, F) {
    let max_norm = e
        .iter()
        .map(|&v| spec.p_norm * v.abs())
        .fold(F::zero(), F::max);
    (max_norm < F::one(), max_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> BatterySpec<f64> {
        BatterySpec::default()
    }

    #[test]
    fn default_spec_is_valid() {
        spec().validate().unwrap();
        assert_relative_eq!(spec().s_norm, 1.0 / 109.0);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = spec();
        s.p_norm = 0.0;
        assert!(matches!(s.validate(), Err(BatteryError::BadPowerNorm { .. })));

        let mut s = spec();
        s.s_norm = -1.0;
        assert!(matches!(s.validate(), Err(BatteryError::BadSocNorm { .. })));

        let mut s = spec();
        s.soc_lo = 0.9;
        s.soc_hi = 0.1;
        assert!(matches!(s.validate(), Err(BatteryError::BadSocBand { .. })));

        let mut s = spec();
        s.soc_hi = 1.5;
        assert!(matches!(s.validate(), Err(BatteryError::BadSocBand { .. })));

        let mut s = spec();
        s.c[2] = -1.0;
        assert!(matches!(
            s.validate(),
            Err(BatteryError::BadWeight { index: 3, .. })
        ));
    }

    #[test]
    fn soc_integrates_error() {
        let s = BatterySpec::<f64> {
            s_norm: 1e-4,
            ..spec()
        };
        let e = vec![0.1; 1000];
        let traj = soc_trajectory(0.5, &e, &s, 1.0);
        assert_eq!(traj.len(), 1000);
        assert_relative_eq!(*traj.last().unwrap(), 0.51, max_relative = 1e-12);

        let e_neg = vec![-0.1; 1000];
        let traj = soc_trajectory(0.5, &e_neg, &s, 1.0);
        assert_relative_eq!(*traj.last().unwrap(), 0.49, max_relative = 1e-12);
    }

    #[test]
    fn zero_error_holds_soc() {
        let traj = soc_trajectory(0.42, &[0.0; 50], &spec(), 1.0);
        assert!(traj.iter().all(|&s| s == 0.42));
    }

    #[test]
    fn all_quiet_means_zero_penalty() {
        let e = vec![0.05; 100];
        let soc = vec![0.5; 100];
        let terms = barrier_terms(&spec(), &e, &soc).unwrap();
        assert_eq!(terms, [0.0; 4]);
        assert_eq!(barrier_penalty(&spec(), &e, &soc).unwrap(), 0.0);
    }

    #[test]
    fn power_overrun_term() {
        // p_norm=10, max|e|=0.15 → normalized power 1.5, c1=10 → 5.
        let mut e = vec![0.01; 60];
        e[30] = -0.15;
        let soc = vec![0.5; 60];
        let terms = barrier_terms(&spec(), &e, &soc).unwrap();
        assert_relative_eq!(terms[0], 5.0, max_relative = 1e-12);
        assert_eq!(&terms[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn soc_band_terms_for_flat_windows() {
        let e = vec![0.0; 40];

        let low = vec![0.05; 40];
        let terms = barrier_terms(&spec(), &e, &low).unwrap();
        assert_relative_eq!(terms[3], 10.0 * 0.05, max_relative = 1e-12);
        assert_eq!(terms[0], 0.0);
        assert_eq!(terms[2], 0.0);

        let high = vec![0.95; 40];
        let terms = barrier_terms(&spec(), &e, &high).unwrap();
        assert_relative_eq!(terms[2], 10.0 * 0.05, max_relative = 1e-12);

        let negative = vec![-0.01; 40];
        let terms = barrier_terms(&spec(), &e, &negative).unwrap();
        assert_relative_eq!(terms[1], 1000.0 * 0.01, max_relative = 1e-12);
        // Below zero is also below soc_lo.
        assert_relative_eq!(terms[3], 10.0 * 0.11, max_relative = 1e-12);
    }

    #[test]
    fn terms_are_zero_at_the_boundary_and_linear_beyond() {
        let e = vec![0.0; 10];
        assert_eq!(
            barrier_terms(&spec(), &e, &vec![0.9; 10]).unwrap()[2],
            0.0
        );
        for &depth in &[1e-6, 1e-3, 0.05] {
            let terms = barrier_terms(&spec(), &e, &vec![0.9 + depth; 10]).unwrap();
            assert_relative_eq!(terms[2], 10.0 * depth, max_relative = 1e-9);
        }
        // Exactly at the power limit the overrun term is still zero.
        let at_limit = vec![0.1; 10];
        let soc = vec![0.5; 10];
        assert_eq!(barrier_terms(&spec(), &at_limit, &soc).unwrap()[0], 0.0);
    }

    #[test]
    fn deeper_excursions_cost_more_than_partial_recovery() {
        // Two windows both starting over the top bound: the one that drains
        // harder carries the smaller penalty.
        let e = vec![0.0; 100];
        let slow: Vec<f64> = (0..100).map(|m| 1.0 - 1e-4 * m as f64).collect();
        let fast: Vec<f64> = (0..100).map(|m| 1.0 - 8e-4 * m as f64).collect();
        let b_slow = barrier_terms(&spec(), &e, &slow).unwrap()[2];
        let b_fast = barrier_terms(&spec(), &e, &fast).unwrap()[2];
        assert!(b_fast < b_slow);
        assert!(b_fast > 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            barrier_terms(&spec(), &[0.0; 3], &[0.5; 4]),
            Err(BatteryError::LengthMismatch { e_len: 3, soc_len: 4 })
        ));
    }

    #[test]
    fn power_constraint_check() {
        let s = spec();
        assert_eq!(check_power_constraint(&s, &[]), (true, 0.0));
        assert_eq!(check_power_constraint(&s, &[0.0; 5]), (true, 0.0));
        let (ok, worst) = check_power_constraint(&s, &[0.03, -0.09, 0.01]);
        assert!(ok);
        assert_relative_eq!(worst, 0.9, max_relative = 1e-12);
        let (ok, worst) = check_power_constraint(&s, &[0.03, -0.11]);
        assert!(!ok);
        assert_relative_eq!(worst, 1.1, max_relative = 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn soc_is_affine_in_error(
                soc0 in 0.0f64..1.0,
                e in proptest::collection::vec(-0.2f64..0.2, 1..80),
                alpha in -3.0f64..3.0,
            ) {
                let s = spec();
                let scaled: Vec<f64> = e.iter().map(|v| alpha * v).collect();
                let base = soc_trajectory(soc0, &e, &s, 1.0);
                let scaled_traj = soc_trajectory(soc0, &scaled, &s, 1.0);
                for (b, sc) in base.iter().zip(&scaled_traj) {
                    let expect = alpha * (b - soc0);
                    prop_assert!(((sc - soc0) - expect).abs() <= 1e-9);
                }
            }

            #[test]
            fn penalty_is_nonnegative_and_sums_terms(
                e in proptest::collection::vec(-0.5f64..0.5, 1..60),
                soc0 in -0.2f64..1.2,
            ) {
                let s = spec();
                let soc = soc_trajectory(soc0, &e, &s, 1.0);
                let terms = barrier_terms(&s, &e, &soc).unwrap();
                let total = barrier_penalty(&s, &e, &soc).unwrap();
                prop_assert!(terms.iter().all(|&t| t >= 0.0));
                prop_assert!((total - terms.iter().sum::<f64>()).abs() <= 1e-12);
            }

            #[test]
            fn larger_errors_never_lower_the_power_term(
                e in proptest::collection::vec(-0.3f64..0.3, 1..40),
                inflate in 1.0f64..3.0,
            ) {
                let s = spec();
                let bigger: Vec<f64> = e.iter().map(|v| v * inflate).collect();
                let soc = vec![0.5; e.len()];
                let b_small = barrier_terms(&s, &e, &soc).unwrap()[0];
                let b_big = barrier_terms(&s, &bigger, &soc).unwrap()[0];
                prop_assert!(b_big >= b_small);
            }
        }
    }
}
