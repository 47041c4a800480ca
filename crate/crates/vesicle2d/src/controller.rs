//! Accept/reject decisions and step-size selection from the numerical
//! drift of area and length.
//!
//! Area and length are conserved exactly by the continuous dynamics, so
//! their per-step drift estimates the local truncation error without
//! forming a second numerical solution. The error budget for a step of
//! size Δt at time t is the fraction Δt/(T-t) of the tolerance still
//! unspent, which lets early steps borrow budget left over by accurate
//! later steps and vice versa.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::FloatExt;

/// Step-controller constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Relative tolerance ε on area and length at the horizon.
    pub epsilon: f64,
    /// Time horizon T.
    pub horizon: f64,
    /// Order k of the time integrator (n_sdc + 1 unless overridden).
    pub order: usize,
    /// Largest allowed shrink factor per step.
    pub beta_down: f64,
    /// Largest allowed growth factor per step.
    pub beta_up: f64,
    /// Safety factor applied as β_scale^(1/k).
    pub beta_scale: f64,
}

impl ControllerConfig {
    pub fn new(epsilon: f64, horizon: f64, order: usize) -> Result<Self> {
        let cfg = ControllerConfig {
            epsilon,
            horizon,
            order,
            beta_down: 0.6,
            beta_up: 1.5,
            beta_scale: (0.9f64).sqrt(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if self.order < 1 {
            return Err(Error::invalid("integrator order must be >= 1"));
        }
        if !(self.beta_down > 0.0 && self.beta_down < 1.0 && self.beta_up > 1.0) {
            return Err(Error::invalid("require 0 < beta_down < 1 < beta_up"));
        }
        if !(self.beta_scale > 0.0 && self.beta_scale < 1.0) {
            return Err(Error::invalid("require 0 < beta_scale < 1"));
        }
        Ok(())
    }
}

/// Per-channel acceptance test: the local drift may spend at most the
/// fraction Δt/(T-t) of the remaining error budget.
fn channel_accept(v_t: f64, v_new: f64, v_0: f64, t: f64, dt: f64, cfg: &ControllerConfig) -> bool {
    let remaining = cfg.epsilon - (v_t - v_0).abs() / v_t;
    if remaining < 0.0 {
        return false;
    }
    (v_new - v_t).abs() <= v_t * dt / (cfg.horizon - t) * remaining
}

/// Per-channel optimal step size; +∞ when the channel committed no error,
/// β_down·Δt when its budget is already exhausted.
fn channel_dt_opt(v_t: f64, v_new: f64, v_0: f64, t: f64, dt: f64, cfg: &ControllerConfig) -> f64 {
    let remaining = cfg.epsilon - (v_t - v_0).abs() / v_t;
    if remaining < 0.0 {
        return cfg.beta_down * dt;
    }
    let local = (v_new - v_t).abs();
    if local == 0.0 {
        return f64::INFINITY;
    }
    let bracket = v_t / local * dt / (cfg.horizon - t) * remaining;
    bracket.powf(1.0 / cfg.order as f64) * dt
}

/// Acceptance test for one vesicle: both the area and the length drift
/// must fit in the remaining budget.
#[allow(clippy::too_many_arguments)]
pub fn accept_step(
    a_t: f64,
    a_new: f64,
    a_0: f64,
    l_t: f64,
    l_new: f64,
    l_0: f64,
    t: f64,
    dt: f64,
    cfg: &ControllerConfig,
) -> Result<bool> {
    if t >= cfg.horizon {
        return Err(Error::invalid(format!(
            "t = {t} is at or beyond the horizon {}",
            cfg.horizon
        )));
    }
    if !(a_t > 0.0 && l_t > 0.0) {
        return Err(Error::invalid("areas and lengths must be positive"));
    }
    Ok(channel_accept(a_t, a_new, a_0, t, dt, cfg)
        && channel_accept(l_t, l_new, l_0, t, dt, cfg))
}

/// Optimal next step size for one vesicle: the smaller of the area- and
/// length-based candidates.
#[allow(clippy::too_many_arguments)]
pub fn dt_optimal(
    a_t: f64,
    a_new: f64,
    a_0: f64,
    l_t: f64,
    l_new: f64,
    l_0: f64,
    t: f64,
    dt: f64,
    cfg: &ControllerConfig,
) -> f64 {
    channel_dt_opt(a_t, a_new, a_0, t, dt, cfg).min(channel_dt_opt(l_t, l_new, l_0, t, dt, cfg))
}

/// New step size from the previous size, the optimal size, and the
/// accept/reject outcome. The step never grows after a rejection, and the
/// result is clamped so `t_next + dt <= T`.
pub fn next_dt(dt: f64, dt_opt: f64, accepted: bool, t_next: f64, cfg: &ControllerConfig) -> f64 {
    let ceiling = if accepted { cfg.beta_up * dt } else { dt };
    let chosen = ceiling.min(dt_opt.max(cfg.beta_down * dt));
    let scaled = cfg.beta_scale.powf(1.0 / cfg.order as f64) * chosen;
    scaled.min((cfg.horizon - t_next).max(0.0))
}

/// Running controller state across a simulation: reference and current
/// invariants per vesicle plus accept/reject bookkeeping.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub config: ControllerConfig,
    area0: Vec<f64>,
    length0: Vec<f64>,
    area_t: Vec<f64>,
    length_t: Vec<f64>,
    pub accepts: usize,
    pub rejects: usize,
    pub last_rejected: bool,
}

/// Outcome of evaluating one attempted step.
#[derive(Debug, Clone, Copy)]
pub struct StepDecision {
    pub accepted: bool,
    pub dt_opt: f64,
}

impl ControllerState {
    pub fn new(config: ControllerConfig, areas: &[f64], lengths: &[f64]) -> Result<Self> {
        config.validate()?;
        if areas.len() != lengths.len() || areas.is_empty() {
            return Err(Error::invalid("need one area and length per vesicle"));
        }
        if areas.iter().chain(lengths.iter()).any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("areas and lengths must be positive"));
        }
        Ok(ControllerState {
            config,
            area0: areas.to_vec(),
            length0: lengths.to_vec(),
            area_t: areas.to_vec(),
            length_t: lengths.to_vec(),
            accepts: 0,
            rejects: 0,
            last_rejected: false,
        })
    }

    /// Evaluate an attempted step against every vesicle; the decision is
    /// that of the most restrictive vesicle.
    pub fn evaluate(
        &self,
        new_areas: &[f64],
        new_lengths: &[f64],
        t: f64,
        dt: f64,
    ) -> Result<StepDecision> {
        if new_areas.len() != self.area0.len() || new_lengths.len() != self.length0.len() {
            return Err(Error::invalid("vesicle count mismatch"));
        }
        let mut accepted = true;
        let mut dt_opt = f64::INFINITY;
        for i in 0..self.area0.len() {
            accepted &= accept_step(
                self.area_t[i],
                new_areas[i],
                self.area0[i],
                self.length_t[i],
                new_lengths[i],
                self.length0[i],
                t,
                dt,
                &self.config,
            )?;
            dt_opt = dt_opt.min(dt_optimal(
                self.area_t[i],
                new_areas[i],
                self.area0[i],
                self.length_t[i],
                new_lengths[i],
                self.length0[i],
                t,
                dt,
                &self.config,
            ));
        }
        Ok(StepDecision { accepted, dt_opt })
    }

    /// Record the outcome of an attempted step, updating the tracked
    /// invariants on acceptance.
    pub fn commit(&mut self, decision: bool, new_areas: &[f64], new_lengths: &[f64]) {
        if decision {
            self.area_t.copy_from_slice(new_areas);
            self.length_t.copy_from_slice(new_lengths);
            self.accepts += 1;
        } else {
            self.rejects += 1;
        }
        self.last_rejected = !decision;
    }

    /// Worst relative drift in area over the run so far.
    pub fn area_error(&self) -> f64 {
        self.area_t
            .iter()
            .zip(&self.area0)
            .map(|(a, a0)| (a - a0).abs() / a0)
            .fold(0.0, f64::max)
    }

    /// Worst relative drift in length over the run so far.
    pub fn length_error(&self) -> f64 {
        self.length_t
            .iter()
            .zip(&self.length0)
            .map(|(l, l0)| (l - l0).abs() / l0)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(epsilon: f64, order: usize) -> ControllerConfig {
        ControllerConfig::new(epsilon, 1.0, order).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::new(0.0, 1.0, 2).is_err());
        assert!(ControllerConfig::new(1e-2, -1.0, 2).is_err());
        assert!(ControllerConfig::new(1e-2, 1.0, 0).is_err());
        let mut c = cfg(1e-2, 2);
        c.beta_down = 1.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_local_error_accepts() {
        let c = cfg(1e-2, 2);
        assert!(accept_step(1.0, 1.0, 1.0, 6.0, 6.0, 6.0, 0.3, 0.05, &c).unwrap());
    }

    #[test]
    fn worked_rejection_example() {
        // bound = 1·0.1/0.5·1e-2 = 2e-3 < 2.1e-3
        let c = cfg(1e-2, 2);
        let accepted =
            accept_step(1.0, 1.0 + 2.1e-3, 1.0, 1.0, 1.0, 1.0, 0.5, 0.1, &c).unwrap();
        assert!(!accepted);
        // just inside the bound passes
        let accepted =
            accept_step(1.0, 1.0 + 1.9e-3, 1.0, 1.0, 1.0, 1.0, 0.5, 0.1, &c).unwrap();
        assert!(accepted);
    }

    #[test]
    fn exhausted_budget_rejects_any_error() {
        let c = cfg(1e-2, 2);
        // accumulated error |A(t)-A(0)|/A(t) = ε: remaining budget is zero
        let a_t = 1.0;
        let a_0 = a_t * (1.0 - c.epsilon);
        let accepted =
            accept_step(a_t, a_t + 1e-10, a_0, 1.0, 1.0, 1.0, 0.2, 0.01, &c).unwrap();
        assert!(!accepted);
    }

    #[test]
    fn accept_step_rejects_t_at_horizon() {
        let c = cfg(1e-2, 2);
        assert!(accept_step(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.1, &c).is_err());
    }

    #[test]
    fn dt_optimal_worked_examples() {
        let c = cfg(1e-2, 2);
        // bracket = (1/1e-3)·0.1·1e-2 = 1 → dt_opt = dt
        let v = dt_optimal(1.0, 1.0 + 1e-3, 1.0, 1.0, 1.0, 1.0, 0.0, 0.1, &c);
        assert!((v - 0.1).abs() < 1e-14, "{v}");
        // bracket = 0.25 → dt_opt = 0.05
        let v = dt_optimal(1.0, 1.0 + 4e-3, 1.0, 1.0, 1.0, 1.0, 0.0, 0.1, &c);
        assert!((v - 0.05).abs() < 1e-14, "{v}");
        // both channels error-free → unconstrained
        let v = dt_optimal(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.1, &c);
        assert!(v.is_infinite());
    }

    #[test]
    fn dt_optimal_exhausted_budget_shrinks() {
        let c = cfg(1e-2, 2);
        let a_0 = 1.0 / (1.0 + 2.0 * c.epsilon); // over budget
        let v = dt_optimal(1.0, 1.0 + 1e-5, a_0, 1.0, 1.0, 1.0, 0.2, 0.1, &c);
        assert!((v - c.beta_down * 0.1).abs() < 1e-15);
    }

    #[test]
    fn next_dt_worked_examples() {
        let c = cfg(1e-2, 2);
        // accepted, unconstrained: β_scale^(1/2)·β_up·dt = 0.9^(1/4)·0.15
        let v = next_dt(0.1, f64::INFINITY, true, 0.0, &c);
        assert!((v - 0.9f64.powf(0.25) * 0.15).abs() < 1e-14);
        assert!((v - 0.14611).abs() < 1e-4);
        // rejected with dt_opt >= dt never increases
        let v = next_dt(0.1, 0.2, false, 0.0, &c);
        assert!((v - 0.9f64.powf(0.25) * 0.1).abs() < 1e-14);
        assert!(v < 0.1);
        // accepted with small dt_opt clamps at β_down
        let v = next_dt(0.1, 0.01, true, 0.0, &c);
        assert!((v - 0.9f64.powf(0.25) * 0.06).abs() < 1e-14);
        assert!((v - 0.05845).abs() < 1e-4);
    }

    #[test]
    fn next_dt_clamps_to_horizon() {
        let c = cfg(1e-2, 2);
        let v = next_dt(0.5, f64::INFINITY, true, 0.9, &c);
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn multi_vesicle_reduction_is_most_restrictive() {
        let c = cfg(1e-2, 2);
        let state = ControllerState::new(c, &[1.0, 2.0], &[4.0, 5.0]).unwrap();
        // vesicle 0 fine, vesicle 1 commits a large area error
        let d = state
            .evaluate(&[1.0, 2.0 + 0.2], &[4.0, 5.0], 0.5, 0.1)
            .unwrap();
        assert!(!d.accepted);
        let single = ControllerState::new(cfg(1e-2, 2), &[2.0], &[5.0]).unwrap();
        let ds = single.evaluate(&[2.2], &[5.0], 0.5, 0.1).unwrap();
        assert_eq!(d.accepted, ds.accepted);
        assert!((d.dt_opt - ds.dt_opt).abs() < 1e-15);
    }

    #[test]
    fn commit_updates_counters_and_errors() {
        let mut state = ControllerState::new(cfg(1e-1, 2), &[1.0], &[1.0]).unwrap();
        state.commit(true, &[1.01], &[1.002]);
        state.commit(false, &[2.0], &[2.0]);
        assert_eq!(state.accepts, 1);
        assert_eq!(state.rejects, 1);
        assert!(state.last_rejected);
        assert!((state.area_error() - 0.01).abs() < 1e-14);
        assert!((state.length_error() - 0.002).abs() < 1e-14);
    }
}
