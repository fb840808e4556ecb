//! Noise schedules for the diffusion processes.
//!
//! The cumulative products alpha_bar are stored with one extra slot so that
//! `alpha_bar(-1) == 1.0` is an ordinary lookup: the guided sampler noising
//! of guidance values at `t - 1` then degenerates to the clean value at the
//! final step, which is what makes full-strength soft guidance exact.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::invalid_arg;
use crate::math::{F64Ext, PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Squared-cosine alpha_bar (default).
    Cosine,
    /// Linear beta grid from 1e-4 to 0.02; kept hand-computable for tests.
    Linear,
}

/// Monotone decreasing alpha_bar over `steps` timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    /// `stored[t + 1] = alpha_bar_t`, with `stored[0] = alpha_bar_{-1} = 1`.
    stored: Vec<f64>,
}

pub const LINEAR_BETA_MIN: f64 = 1e-4;
pub const LINEAR_BETA_MAX: f64 = 0.02;
const COSINE_S: f64 = 0.008;
const BETA_CLAMP: f64 = 0.999;

pub fn make_schedule(steps: usize, kind: ScheduleKind) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(invalid_arg!("schedule needs at least one step"));
    }
    let mut stored = Vec::with_capacity(steps + 1);
    stored.push(1.0);
    match kind {
        ScheduleKind::Linear => {
            let mut prod = 1.0;
            for t in 0..steps {
                let frac = if steps == 1 { 1.0 } else { t as f64 / (steps - 1) as f64 };
                let beta = LINEAR_BETA_MIN + (LINEAR_BETA_MAX - LINEAR_BETA_MIN) * frac;
                prod *= 1.0 - beta;
                stored.push(prod);
            }
        }
        ScheduleKind::Cosine => {
            let f = |u: f64| {
                let x = ((u / steps as f64 + COSINE_S) / (1.0 + COSINE_S)) * PI / 2.0;
                let c = x.cos();
                c * c
            };
            let f0 = f(0.0);
            let mut prod = 1.0;
            let mut prev = f0;
            for t in 0..steps {
                let cur = f((t + 1) as f64);
                let beta = (1.0 - cur / prev).min(BETA_CLAMP);
                prod *= 1.0 - beta;
                stored.push(prod);
                prev = cur;
            }
        }
    }
    Ok(NoiseSchedule { steps, stored })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Validate a timestep in `[-1, steps - 1]`.
    pub fn check_timestep(&self, t: i64) -> Result<()> {
        if t < -1 || t >= self.steps as i64 {
            return Err(CoreError::TimestepOutOfRange { t, steps: self.steps });
        }
        Ok(())
    }

    /// alpha_bar at `t`, where `t = -1` means the clean distribution.
    pub fn alpha_bar(&self, t: i64) -> f64 {
        debug_assert!(t >= -1 && t < self.steps as i64);
        self.stored[(t + 1) as usize]
    }

    /// Per-step beta: 1 - alpha_bar_t / alpha_bar_{t-1}.
    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alpha_bar(t as i64) / self.alpha_bar(t as i64 - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_schedule_matches_hand_computed_products() {
        // T = 4 beta grid: 1e-4, 0.0067333..., 0.0133666..., 0.02.
        let s = make_schedule(4, ScheduleKind::Linear).unwrap();
        let expect = [0.9999, 0.99316734, 0.979892003222, 0.96029416315756];
        for (t, e) in expect.iter().enumerate() {
            assert!(
                (s.alpha_bar(t as i64) - e).abs() < 1e-12,
                "t={t}: {} vs {e}",
                s.alpha_bar(t as i64)
            );
        }
        assert_eq!(s.alpha_bar(-1), 1.0);
    }

    #[test]
    fn schedules_are_monotone_decreasing_in_unit_interval() {
        for kind in [ScheduleKind::Cosine, ScheduleKind::Linear] {
            for steps in [1usize, 4, 50, 1000] {
                let s = make_schedule(steps, kind).unwrap();
                let mut prev = 1.0;
                for t in 0..steps {
                    let a = s.alpha_bar(t as i64);
                    assert!(a > 0.0 && a < 1.0, "{kind:?} T={steps} t={t}: {a}");
                    assert!(a < prev, "{kind:?} not strictly decreasing at t={t}");
                    prev = a;
                }
            }
        }
    }

    #[test]
    fn default_cosine_tail_is_nearly_fully_noised() {
        let s = make_schedule(1000, ScheduleKind::Cosine).unwrap();
        assert!(s.alpha_bar(999) < 0.01, "tail alpha_bar {}", s.alpha_bar(999));
    }

    #[test]
    fn betas_are_consistent_with_alpha_bar() {
        let s = make_schedule(16, ScheduleKind::Cosine).unwrap();
        let mut prod = 1.0;
        for t in 0..16 {
            prod *= 1.0 - s.beta(t);
            assert!((prod - s.alpha_bar(t as i64)).abs() < 1e-12);
        }
    }

    #[test]
    fn timestep_bounds_are_enforced() {
        let s = make_schedule(10, ScheduleKind::Linear).unwrap();
        assert!(s.check_timestep(-1).is_ok());
        assert!(s.check_timestep(9).is_ok());
        assert!(s.check_timestep(-2).is_err());
        assert!(s.check_timestep(10).is_err());
        assert!(make_schedule(0, ScheduleKind::Linear).is_err());
    }
}
