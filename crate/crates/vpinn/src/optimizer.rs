//! Adam with constant, exponential-decay and cosine-decay learning-rate
//! schedules.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Learning-rate schedule applied to the initial rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// lr0 * rate^(step / decay_steps), continuous (no staircase).
    Exponential { rate: f64, decay_steps: f64 },
    /// lr0 * 0.5 * (1 + cos(pi * step / total_steps)), clamped past the end.
    Cosine { total_steps: usize },
}

/// Schedule value at `step` (0-based), as a multiple of `lr0`.
pub fn schedule_lr(schedule: LrSchedule, lr0: f64, step: usize) -> f64 {
    match schedule {
        LrSchedule::Constant => lr0,
        LrSchedule::Exponential { rate, decay_steps } => {
            lr0 * rate.powf(step as f64 / decay_steps)
        }
        LrSchedule::Cosine { total_steps } => {
            let frac = if total_steps == 0 {
                1.0
            } else {
                (step as f64 / total_steps as f64).min(1.0)
            };
            lr0 * 0.5 * (1.0 + (PI * frac).cos())
        }
    }
}

/// Adam state: first/second moment accumulators plus the step counter used
/// for bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr0: f64,
    pub schedule: LrSchedule,
}

impl AdamState {
    pub fn new(n_params: usize, lr0: f64, schedule: LrSchedule) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr0,
            schedule,
        }
    }

    /// Current learning rate from the schedule.
    pub fn current_lr(&self) -> f64 {
        schedule_lr(self.schedule, self.lr0, self.step)
    }

    /// One bias-corrected Adam update in place. Returns the learning rate
    /// used. A non-finite gradient aborts the iteration with a divergence
    /// diagnostic and leaves the parameters untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Structural(format!(
                "adam state holds {} parameters, got {}/{}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged {
                iteration: self.step,
                detail: format!("non-finite gradient at parameter {idx}"),
            });
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut adam = AdamState::new(3, 0.1, LrSchedule::Constant);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        for _ in 0..5 {
            adam.step(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // closed form: m_hat = g, v_hat = g^2, update = lr * g/(|g| + eps)
        let mut adam = AdamState::new(1, 0.1, LrSchedule::Constant);
        let mut params = vec![0.0];
        adam.step(&mut params, &[1.0]).unwrap();
        assert!((params[0] + 0.1).abs() < 1e-6, "first step {}", params[0]);
    }

    #[test]
    fn constant_gradient_updates_stay_bounded() {
        let mut adam = AdamState::new(1, 0.05, LrSchedule::Constant);
        let mut params = vec![0.0];
        let mut prev = params[0];
        for _ in 0..200 {
            adam.step(&mut params, &[2.5]).unwrap();
            let update = (params[0] - prev).abs();
            assert!(update <= 0.05 * (1.0 + 1e-6), "update {update}");
            prev = params[0];
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut adam = AdamState::new(2, 0.1, LrSchedule::Constant);
        let mut params = vec![0.0, 0.0];
        let before = params.clone();
        let err = adam.step(&mut params, &[1.0, f64::NAN]);
        assert!(matches!(err, Err(Error::TrainingDiverged { .. })));
        assert_eq!(params, before);
    }

    #[test]
    fn deterministic_updates() {
        let run = || {
            let mut adam = AdamState::new(2, 0.01, LrSchedule::Constant);
            let mut params = vec![0.3, -0.7];
            for i in 0..50 {
                let g = [params[0] * 0.1 + i as f64 * 1e-3, params[1].sin()];
                adam.step(&mut params, &g).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn exponential_schedule_values() {
        let sched = LrSchedule::Exponential {
            rate: 0.9,
            decay_steps: 1000.0,
        };
        assert_eq!(schedule_lr(sched, 1e-2, 0), 1e-2);
        let at_1000 = schedule_lr(sched, 1e-2, 1000);
        assert!((at_1000 - 9e-3).abs() < 1e-12);
        let at_500 = schedule_lr(sched, 1e-2, 500);
        assert!((at_500 - 1e-2 * 0.9_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let sched = LrSchedule::Cosine { total_steps: 1000 };
        assert_eq!(schedule_lr(sched, 1e-3, 0), 1e-3);
        let half = schedule_lr(sched, 1e-3, 500);
        assert!((half - 5e-4).abs() < 1e-12);
        let end = schedule_lr(sched, 1e-3, 1000);
        assert!(end.abs() < 1e-12);
        // clamped past the end
        let past = schedule_lr(sched, 1e-3, 5000);
        assert!(past.abs() < 1e-12);
    }

    #[test]
    fn schedules_are_nonincreasing() {
        for sched in [
            LrSchedule::Constant,
            LrSchedule::Exponential {
                rate: 0.9,
                decay_steps: 100.0,
            },
            LrSchedule::Cosine { total_steps: 500 },
        ] {
            let mut prev = f64::INFINITY;
            for step in 0..600 {
                let lr = schedule_lr(sched, 1e-2, step);
                assert!(lr <= prev + 1e-15, "{sched:?} rose at step {step}");
                prev = lr;
            }
        }
    }
}
