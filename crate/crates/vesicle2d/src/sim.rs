//! Top-level simulation drivers: far-field flows, fixed and adaptive time
//! loops, and run diagnostics.

use alloc::vec::Vec;

use crate::controller::{ControllerConfig, ControllerState};
use crate::error::{Error, Result};
use crate::imex::SolverContext;
use crate::math::{FloatExt, Vec2};
use crate::membrane::VesicleState;
use crate::sdc::{macro_step, LobattoGrid, SdcConfig};

/// Imposed background flow of the unbounded exterior fluid.
#[derive(Debug, Clone, PartialEq)]
pub enum FarFieldFlow {
    /// v = (rate·y, 0)
    Shear { rate: f64 },
    /// v = (rate·x, -rate·y)
    Extensional { rate: f64 },
    Quiescent,
}

impl FarFieldFlow {
    pub fn eval(&self, p: Vec2) -> Vec2 {
        match self {
            FarFieldFlow::Shear { rate } => Vec2::new(rate * p.y, 0.0),
            FarFieldFlow::Extensional { rate } => Vec2::new(rate * p.x, -rate * p.y),
            FarFieldFlow::Quiescent => Vec2::ZERO,
        }
    }
}

/// All vesicles plus the far-field flow at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Suspension {
    pub vesicles: Vec<VesicleState>,
    pub flow: FarFieldFlow,
    pub time: f64,
}

impl Suspension {
    pub fn new(vesicles: Vec<VesicleState>, flow: FarFieldFlow) -> Result<Self> {
        if vesicles.is_empty() {
            return Err(Error::invalid("suspension needs at least one vesicle"));
        }
        Ok(Suspension {
            vesicles,
            flow,
            time: 0.0,
        })
    }

    pub fn areas(&self) -> Vec<f64> {
        self.vesicles.iter().map(|v| v.curve.area()).collect()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.vesicles.iter().map(|v| v.curve.length()).collect()
    }

    /// One marked material point per vesicle (node 0; nodes are material).
    pub fn tracker_points(&self) -> Vec<Vec2> {
        self.vesicles.iter().map(|v| v.curve.node(0)).collect()
    }

    /// Principal-axis angle of each vesicle from the second moment of the
    /// boundary, in (-π/2, π/2].
    pub fn inclination_angles(&self) -> Vec<f64> {
        self.vesicles
            .iter()
            .map(|v| {
                let c = v.curve.centroid();
                let xt = v.curve.spectral().derivative(v.curve.xs(), 1);
                let yt = v.curve.spectral().derivative(v.curve.ys(), 1);
                let (mut mxx, mut mxy, mut myy) = (0.0, 0.0, 0.0);
                for (i, p) in v.curve.nodes().enumerate() {
                    let w = xt[i].hypot(yt[i]);
                    let d = p - c;
                    mxx += w * d.x * d.x;
                    mxy += w * d.x * d.y;
                    myy += w * d.y * d.y;
                }
                0.5 * (2.0 * mxy).atan2(mxx - myy)
            })
            .collect()
    }
}

/// Wall-clock source injected by the host; the core never touches system
/// time directly.
pub trait WallClock {
    fn now(&self) -> f64;
}

/// Clock that always reads zero (timings disabled).
pub struct NullClock;

impl WallClock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Record of one attempted macro step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Time at the start of the attempt.
    pub t: f64,
    pub dt: f64,
    pub accepted: bool,
    /// Global relative area error after the attempted step.
    pub e_area: f64,
    /// Global relative length error after the attempted step.
    pub e_length: f64,
    pub gmres_iterations: u64,
    pub matvecs_cumulative: u64,
    pub wall_seconds: f64,
}

/// Per-vesicle samples recorded after each accepted step.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub t: f64,
    pub trackers: Vec<Vec2>,
    pub centroids: Vec<Vec2>,
    pub inclinations: Vec<f64>,
}

/// Full run diagnostics: one record per attempted step plus trajectory
/// samples and end-of-run summaries.
#[derive(Debug, Clone, Default)]
pub struct RunDiagnostics {
    pub steps: Vec<StepRecord>,
    pub trajectory: Vec<TrajectorySample>,
    pub accepts: usize,
    pub rejects: usize,
    pub total_matvecs: u64,
    pub wall_seconds: f64,
    /// max_j |A_j(T) - A_j(0)| / A_j(0)
    pub e_area: f64,
    /// max_j |L_j(T) - L_j(0)| / L_j(0)
    pub e_length: f64,
}

impl RunDiagnostics {
    fn sample(&mut self, susp: &Suspension) {
        self.trajectory.push(TrajectorySample {
            t: susp.time,
            trackers: susp.tracker_points(),
            centroids: susp.vesicles.iter().map(|v| v.curve.centroid()).collect(),
            inclinations: susp.inclination_angles(),
        });
    }
}

/// A failed run, carrying whatever diagnostics were collected.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub diagnostics: RunDiagnostics,
}

fn relative_errors(susp: &Suspension, area0: &[f64], length0: &[f64]) -> (f64, f64) {
    let mut ea = 0.0f64;
    let mut el = 0.0f64;
    for (j, v) in susp.vesicles.iter().enumerate() {
        ea = ea.max((v.curve.area() - area0[j]).abs() / area0[j]);
        el = el.max((v.curve.length() - length0[j]).abs() / length0[j]);
    }
    (ea, el)
}

/// Continuous inclination-angle series per vesicle, unwrapped across the
/// π-periodicity of the principal axis.
pub fn unwrap_inclinations(diag: &RunDiagnostics) -> Vec<Vec<f64>> {
    let m = match diag.trajectory.first() {
        Some(s) => s.inclinations.len(),
        None => return Vec::new(),
    };
    let mut out = alloc::vec![Vec::new(); m];
    for j in 0..m {
        let mut prev = diag.trajectory[0].inclinations[j];
        out[j].push(prev);
        for s in diag.trajectory.iter().skip(1) {
            let mut a = s.inclinations[j];
            while a - prev > core::f64::consts::FRAC_PI_2 {
                a -= core::f64::consts::PI;
            }
            while a - prev < -core::f64::consts::FRAC_PI_2 {
                a += core::f64::consts::PI;
            }
            out[j].push(a);
            prev = a;
        }
    }
    out
}

/// Number of full revolutions each tracker point makes about its vesicle
/// centroid over the recorded trajectory.
pub fn tracker_winding(diag: &RunDiagnostics) -> Vec<f64> {
    let m = match diag.trajectory.first() {
        Some(s) => s.trackers.len(),
        None => return Vec::new(),
    };
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let angle = |s: &TrajectorySample| {
            let d = s.trackers[j] - s.centroids[j];
            d.y.atan2(d.x)
        };
        let mut prev = angle(&diag.trajectory[0]);
        let mut total = 0.0;
        for s in diag.trajectory.iter().skip(1) {
            let a = angle(s);
            let mut delta = a - prev;
            while delta > core::f64::consts::PI {
                delta -= 2.0 * core::f64::consts::PI;
            }
            while delta < -core::f64::consts::PI {
                delta += 2.0 * core::f64::consts::PI;
            }
            total += delta;
            prev = a;
        }
        out.push(total.abs() / (2.0 * core::f64::consts::PI));
    }
    out
}

/// Run `m` uniform macro steps to the horizon.
pub fn run_fixed(
    suspension: Suspension,
    m: usize,
    horizon: f64,
    sdc: &SdcConfig,
    ctx: &SolverContext,
    clock: &dyn WallClock,
) -> core::result::Result<(Suspension, RunDiagnostics), RunFailure> {
    let mut diag = RunDiagnostics::default();
    let fail = |error, diagnostics| RunFailure { error, diagnostics };
    if m == 0 {
        return Err(fail(Error::invalid("need at least one step"), diag));
    }
    if let Err(e) = sdc.validate() {
        return Err(fail(e, diag));
    }
    let grid = match LobattoGrid::new(sdc.lobatto_points) {
        Ok(g) => g,
        Err(e) => return Err(fail(e, diag)),
    };
    let area0 = suspension.areas();
    let length0 = suspension.lengths();
    let t_start = clock.now();
    let mut susp = suspension;
    diag.sample(&susp);
    for i in 0..m {
        let step_start = clock.now();
        let t0 = horizon * i as f64 / m as f64;
        let t1 = horizon * (i + 1) as f64 / m as f64;
        let dt = t1 - t0;
        match macro_step(&susp, dt, sdc.n_sdc, &grid, ctx) {
            Ok((next, step_diag)) => {
                susp = next;
                susp.time = t1;
                let (ea, el) = relative_errors(&susp, &area0, &length0);
                diag.steps.push(StepRecord {
                    t: t0,
                    dt,
                    accepted: true,
                    e_area: ea,
                    e_length: el,
                    gmres_iterations: step_diag.gmres_iterations,
                    matvecs_cumulative: ctx.matvecs(),
                    wall_seconds: clock.now() - step_start,
                });
                diag.accepts += 1;
                diag.sample(&susp);
            }
            Err(e) => {
                diag.wall_seconds = clock.now() - t_start;
                diag.total_matvecs = ctx.matvecs();
                return Err(fail(e, diag));
            }
        }
    }
    let (ea, el) = relative_errors(&susp, &area0, &length0);
    diag.e_area = ea;
    diag.e_length = el;
    diag.total_matvecs = ctx.matvecs();
    diag.wall_seconds = clock.now() - t_start;
    Ok((susp, diag))
}

/// Options of the adaptive loop.
#[derive(Debug, Clone)]
pub struct AdaptiveOptions {
    /// Initial step size; defaults to T/100.
    pub dt_init: Option<f64>,
    /// Abort when dt falls below this fraction of the horizon.
    pub dt_floor: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            dt_init: None,
            dt_floor: 1e-12,
        }
    }
}

/// Run the adaptive loop to the horizon: attempt a macro step, accept or
/// reject on the area/length budget, pick the next step size, and roll
/// back rejected states.
pub fn run_adaptive(
    suspension: Suspension,
    ctrl_cfg: ControllerConfig,
    sdc: &SdcConfig,
    ctx: &SolverContext,
    clock: &dyn WallClock,
    opts: &AdaptiveOptions,
) -> core::result::Result<(Suspension, RunDiagnostics), RunFailure> {
    let mut diag = RunDiagnostics::default();
    let fail = |error, diagnostics| RunFailure { error, diagnostics };
    if let Err(e) = sdc.validate() {
        return Err(fail(e, diag));
    }
    let grid = match LobattoGrid::new(sdc.lobatto_points) {
        Ok(g) => g,
        Err(e) => return Err(fail(e, diag)),
    };
    let horizon = ctrl_cfg.horizon;
    let area0 = suspension.areas();
    let length0 = suspension.lengths();
    let mut controller = match ControllerState::new(ctrl_cfg, &area0, &length0) {
        Ok(c) => c,
        Err(e) => return Err(fail(e, diag)),
    };
    let floor = opts.dt_floor * horizon;
    let mut dt = opts.dt_init.unwrap_or(horizon / 100.0).min(horizon);

    let t_start = clock.now();
    let mut susp = suspension;
    susp.time = 0.0;
    diag.sample(&susp);

    while horizon - susp.time > 1e-12 * horizon {
        dt = dt.min(horizon - susp.time);
        if dt < floor {
            diag.total_matvecs = ctx.matvecs();
            diag.wall_seconds = clock.now() - t_start;
            return Err(fail(
                Error::StepSizeUnderflow { t: susp.time, dt },
                diag,
            ));
        }
        let step_start = clock.now();
        let t_before = susp.time;
        match macro_step(&susp, dt, sdc.n_sdc, &grid, ctx) {
            Ok((candidate, step_diag)) => {
                let new_areas = candidate.areas();
                let new_lengths = candidate.lengths();
                let decision = match controller.evaluate(&new_areas, &new_lengths, t_before, dt) {
                    Ok(d) => d,
                    Err(e) => {
                        diag.total_matvecs = ctx.matvecs();
                        diag.wall_seconds = clock.now() - t_start;
                        return Err(fail(e, diag));
                    }
                };
                controller.commit(decision.accepted, &new_areas, &new_lengths);
                let (ea, el) = relative_errors(&candidate, &area0, &length0);
                diag.steps.push(StepRecord {
                    t: t_before,
                    dt,
                    accepted: decision.accepted,
                    e_area: ea,
                    e_length: el,
                    gmres_iterations: step_diag.gmres_iterations,
                    matvecs_cumulative: ctx.matvecs(),
                    wall_seconds: clock.now() - step_start,
                });
                if decision.accepted {
                    susp = candidate;
                    if horizon - susp.time <= 1e-12 * horizon {
                        susp.time = horizon;
                    }
                    diag.accepts += 1;
                    diag.sample(&susp);
                } else {
                    diag.rejects += 1;
                    // the rejected candidate is dropped; susp is untouched
                }
                dt = crate::controller::next_dt(
                    dt,
                    decision.dt_opt,
                    decision.accepted,
                    susp.time,
                    &controller.config,
                );
            }
            Err(Error::SolverFailure { .. }) => {
                // solver breakdown: treat as a rejection that forces shrink
                controller.commit(false, &area0, &length0);
                let (ea, el) = relative_errors(&susp, &area0, &length0);
                diag.steps.push(StepRecord {
                    t: t_before,
                    dt,
                    accepted: false,
                    e_area: ea,
                    e_length: el,
                    gmres_iterations: 0,
                    matvecs_cumulative: ctx.matvecs(),
                    wall_seconds: clock.now() - step_start,
                });
                diag.rejects += 1;
                let forced = controller.config.beta_down * dt;
                dt = crate::controller::next_dt(dt, forced, false, susp.time, &controller.config);
            }
            Err(e) => {
                diag.total_matvecs = ctx.matvecs();
                diag.wall_seconds = clock.now() - t_start;
                return Err(fail(e, diag));
            }
        }
    }

    diag.accepts = controller.accepts;
    diag.rejects = controller.rejects;
    diag.e_area = controller.area_error();
    diag.e_length = controller.length_error();
    diag.total_matvecs = ctx.matvecs();
    diag.wall_seconds = clock.now() - t_start;
    Ok((susp, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::ClosedCurve;

    #[test]
    fn flow_fields() {
        let shear = FarFieldFlow::Shear { rate: 1.0 };
        let v = shear.eval(Vec2::new(3.0, 2.0));
        assert_eq!(v, Vec2::new(2.0, 0.0));
        let ext = FarFieldFlow::Extensional { rate: 2.0 };
        let v = ext.eval(Vec2::new(1.0, 1.0));
        assert_eq!(v, Vec2::new(2.0, -2.0));
        assert_eq!(FarFieldFlow::Quiescent.eval(Vec2::new(5.0, 5.0)), Vec2::ZERO);
    }

    #[test]
    fn inclination_of_tilted_ellipse() {
        let angle = 0.4;
        let c = ClosedCurve::ellipse(Vec2::new(1.0, -2.0), 1.0, 3.0, angle, 64).unwrap();
        let v = VesicleState::new(c, 4.0, 1.0).unwrap();
        let susp = Suspension::new(alloc::vec![v], FarFieldFlow::Quiescent).unwrap();
        let inc = susp.inclination_angles()[0];
        // major axis is the rotated y-axis of the parameterization
        let expect = angle + core::f64::consts::FRAC_PI_2;
        let diff = (inc - expect).rem_euclid(core::f64::consts::PI);
        let diff = diff.min(core::f64::consts::PI - diff);
        assert!(diff < 1e-10, "inclination {inc}, expected {expect}");
    }

    #[test]
    fn tracker_points_are_node_zero() {
        let c = ClosedCurve::ellipse(Vec2::new(0.5, 0.0), 1.0, 2.0, 0.0, 32).unwrap();
        let v = VesicleState::new(c, 1.0, 1.0).unwrap();
        let susp = Suspension::new(alloc::vec![v], FarFieldFlow::Quiescent).unwrap();
        let t = susp.tracker_points();
        assert_eq!(t.len(), 1);
        assert!((t[0].x - 1.5).abs() < 1e-14);
    }
}
