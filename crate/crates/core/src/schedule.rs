//! Mixing schedule for the deterministic degradation process.
//!
//! The retention level `a_t` starts at 1 (clean) and decays to 0 (fully
//! reverberant) along a cosine-squared curve. Step sizes are the consecutive
//! differences, so they telescope to exactly 1 and are symmetric around the
//! midpoint.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("a schedule needs at least one step")]
    ZeroSteps,
    #[error("step {t} is out of range for a {steps}-step schedule")]
    StepOutOfRange { t: usize, steps: usize },
}

/// Precomputed retention levels `a_0..=a_T` and step sizes `g_1..=g_T`.
///
/// Only the cosine-squared shape is constructed today; keeping the levels as
/// data leaves room for other monotone schedules without touching callers.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    levels: Vec<f64>,
    step_sizes: Vec<f64>,
}

impl Schedule {
    /// Cosine-squared schedule with `steps` reverse steps.
    pub fn cosine_squared(steps: usize) -> Result<Self, ScheduleError> {
        if steps == 0 {
            return Err(ScheduleError::ZeroSteps);
        }
        let mut levels = Vec::with_capacity(steps + 1);
        for t in 0..=steps {
            let angle = std::f64::consts::FRAC_PI_2 * t as f64 / steps as f64;
            let c = angle.cos();
            levels.push(c * c);
        }
        // Pin the endpoints so downstream identities hold exactly.
        levels[0] = 1.0;
        levels[steps] = 0.0;
        let step_sizes = levels.windows(2).map(|w| w[0] - w[1]).collect();
        Ok(Schedule { levels, step_sizes })
    }

    pub fn steps(&self) -> usize {
        self.step_sizes.len()
    }

    /// Retention level `a_t` for `t` in `0..=steps`.
    pub fn level(&self, t: usize) -> Result<f64, ScheduleError> {
        self.levels
            .get(t)
            .copied()
            .ok_or(ScheduleError::StepOutOfRange {
                t,
                steps: self.steps(),
            })
    }

    /// Step size `g_t = a_{t-1} - a_t` for `t` in `1..=steps`.
    pub fn step_size(&self, t: usize) -> Result<f64, ScheduleError> {
        if t == 0 {
            return Err(ScheduleError::StepOutOfRange {
                t,
                steps: self.steps(),
            });
        }
        self.step_sizes
            .get(t - 1)
            .copied()
            .ok_or(ScheduleError::StepOutOfRange {
                t,
                steps: self.steps(),
            })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_are_exact() {
        for steps in [1usize, 2, 4, 16, 377] {
            let s = Schedule::cosine_squared(steps).unwrap();
            assert_eq!(s.level(0).unwrap(), 1.0);
            assert_eq!(s.level(steps).unwrap(), 0.0);
        }
    }

    #[test]
    fn sixteen_step_schedule_hits_half_at_the_midpoint() {
        let s = Schedule::cosine_squared(16).unwrap();
        assert!((s.level(8).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_step_schedule_midpoint() {
        let s = Schedule::cosine_squared(2).unwrap();
        assert!((s.level(1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn four_step_values_match_the_closed_form() {
        // cos^2(pi/8) = (1 + cos(pi/4)) / 2, cos^2(3pi/8) = (1 - cos(pi/4)) / 2.
        let s = Schedule::cosine_squared(4).unwrap();
        let half_sqrt2 = std::f64::consts::SQRT_2 / 2.0;
        let expected = [
            1.0,
            (1.0 + half_sqrt2) / 2.0,
            0.5,
            (1.0 - half_sqrt2) / 2.0,
            0.0,
        ];
        for (t, want) in expected.iter().enumerate() {
            assert!((s.level(t).unwrap() - want).abs() < 1e-15, "level {t}");
        }
        assert!((s.step_size(1).unwrap() - 0.146_446_609_406_726_24).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_is_rejected() {
        assert!(matches!(
            Schedule::cosine_squared(0),
            Err(ScheduleError::ZeroSteps)
        ));
    }

    #[test]
    fn out_of_range_queries_are_rejected() {
        let s = Schedule::cosine_squared(4).unwrap();
        assert!(s.level(5).is_err());
        assert!(s.step_size(0).is_err());
        assert!(s.step_size(5).is_err());
        assert!(s.step_size(4).is_ok());
    }

    proptest! {
        #[test]
        fn levels_decrease_and_steps_telescope(steps in 1usize..200) {
            let s = Schedule::cosine_squared(steps).unwrap();
            for w in s.levels().windows(2) {
                prop_assert!(w[0] > w[1], "levels must be strictly decreasing");
            }
            for &g in s.step_sizes() {
                prop_assert!(g > 0.0);
            }
            let total: f64 = s.step_sizes().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn levels_are_symmetric_around_the_midpoint(steps in 1usize..200) {
            let s = Schedule::cosine_squared(steps).unwrap();
            for t in 0..=steps {
                let a = s.level(t).unwrap();
                let b = s.level(steps - t).unwrap();
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }
}
