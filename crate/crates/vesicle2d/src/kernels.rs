//! 2D Stokes layer potentials between and on vesicle boundaries.
//!
//! Three evaluation regimes, selected per target:
//! * on the source curve itself: product quadrature for the log kernel of
//!   the Stokeslet plus smooth-limit diagonals, spectrally accurate;
//! * well separated from the source: trapezoid rule on an upsampled copy
//!   of the source;
//! * within a few arclength spacings of the source: evaluation on the
//!   boundary and at safe distances along the ray through the nearest
//!   boundary point, then 1D Lagrange interpolation to the target.
//!
//! Inter-vesicle sums are direct O(N²); the evaluation is factored behind
//! [`LayerOps`]/[`InteractionPlan`] so an accelerated backend could slot in.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::curve::{ClosedCurve, CurveGeometry};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math::{FloatExt, Vec2};
use crate::spectral::{eval_coeffs, Coeffs, Spectral, TWO_PI};

/// Number of interpolation nodes along the near-target ray (boundary point
/// plus `NEAR_RAY_NODES - 1` off-boundary samples).
const NEAR_RAY_NODES: usize = 8;
/// Spacing of the ray samples in units of the local arclength spacing.
const NEAR_RAY_SPACING: f64 = 0.75;
/// Targets closer to the boundary than this (relative to local spacing)
/// are treated as lying on it.
const ON_BOUNDARY_TOL: f64 = 1e-12;

/// Quadrature parameters for layer-potential evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPotentialConfig {
    /// Upsampling factor for off-boundary targets.
    pub upsampling: usize,
    /// Near-singular activation distance in local arclength spacings.
    pub near_threshold: f64,
    /// Outer fluid viscosity μ₀ (normalized to 1; the viscosity contrast
    /// carries all remaining viscosity physics).
    pub mu0: f64,
}

impl Default for LayerPotentialConfig {
    fn default() -> Self {
        LayerPotentialConfig {
            upsampling: 4,
            near_threshold: 5.0,
            mu0: 1.0,
        }
    }
}

impl LayerPotentialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upsampling < 2 {
            return Err(Error::invalid("upsampling factor must be >= 2"));
        }
        if !(self.near_threshold > 0.0) {
            return Err(Error::invalid("near threshold must be positive"));
        }
        if !(self.mu0 > 0.0) {
            return Err(Error::invalid("outer viscosity must be positive"));
        }
        Ok(())
    }
}

/// Which layer potential to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Single,
    Double,
}

/// A source boundary resampled to a finer grid for smooth quadrature.
#[derive(Debug, Clone)]
struct UpsampledSource {
    spectral: Spectral,
    pos: Vec<Vec2>,
    normal: Vec<Vec2>,
    /// Arclength weight |x_θ|·2π/N per fine node.
    weight: Vec<f64>,
}

impl UpsampledSource {
    fn build(curve: &ClosedCurve, n_up: usize) -> Self {
        let sp = curve.spectral();
        let fine = Spectral::new(n_up);
        let x = sp.resample(curve.xs(), &fine);
        let y = sp.resample(curve.ys(), &fine);
        let xt = fine.derivative(&x, 1);
        let yt = fine.derivative(&y, 1);
        let h = TWO_PI / n_up as f64;
        let mut pos = Vec::with_capacity(n_up);
        let mut normal = Vec::with_capacity(n_up);
        let mut weight = Vec::with_capacity(n_up);
        for i in 0..n_up {
            let d = Vec2::new(xt[i], yt[i]);
            let j = d.norm();
            pos.push(Vec2::new(x[i], y[i]));
            normal.push(Vec2::new(d.y / j, -d.x / j));
            weight.push(j * h);
        }
        UpsampledSource {
            spectral: fine,
            pos,
            normal,
            weight,
        }
    }

    fn resample_density(&self, source: &Spectral, fx: &[f64], fy: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            source.resample(fx, &self.spectral),
            source.resample(fy, &self.spectral),
        )
    }
}

/// Frozen-geometry layer-potential data for one curve: self-interaction
/// matrices plus upsampled copies for off-boundary evaluation.
pub struct LayerOps {
    pub geom: CurveGeometry,
    /// Single-layer self matrix, acting on flat fields [x-comps | y-comps].
    pub slp_self: Mat,
    /// Double-layer self matrix including the (1-ν)/π prefactor.
    pub dlp_self: Mat,
    pub nu: f64,
    pub mu0: f64,
    coeff_x: Coeffs,
    coeff_y: Coeffs,
    n: usize,
    nodes: Vec<Vec2>,
    up: UpsampledSource,
    near_up: Option<UpsampledSource>,
    near_threshold: f64,
}

impl LayerOps {
    /// `with_near` controls whether the heavily upsampled copy used by the
    /// near-singular scheme is prepared (only needed with other vesicles
    /// around).
    pub fn build(
        curve: &ClosedCurve,
        nu: f64,
        cfg: &LayerPotentialConfig,
        with_near: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let geom = curve.geometry()?;
        let n = curve.len();
        let slp_self = slp_self_matrix(curve, &geom, cfg.mu0);
        let dlp_self = dlp_self_matrix(curve, &geom, nu);
        let up = UpsampledSource::build(curve, cfg.upsampling * n);
        let near_up = if with_near {
            let factor = ((n as f64).sqrt().ceil() as usize).max(cfg.upsampling);
            Some(UpsampledSource::build(curve, factor * n))
        } else {
            None
        };
        let sp = curve.spectral();
        Ok(LayerOps {
            geom,
            slp_self,
            dlp_self,
            nu,
            mu0: cfg.mu0,
            coeff_x: sp.forward(curve.xs()),
            coeff_y: sp.forward(curve.ys()),
            n,
            nodes: curve.nodes().collect(),
            up,
            near_up,
            near_threshold: cfg.near_threshold,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Boundary point of the interpolant at parameter θ.
    pub fn point_at(&self, theta: f64) -> Vec2 {
        Vec2::new(
            eval_coeffs(&self.coeff_x, theta, 0),
            eval_coeffs(&self.coeff_y, theta, 0),
        )
    }

    fn tangent_normal_at(&self, theta: f64) -> (Vec2, Vec2) {
        let d = Vec2::new(
            eval_coeffs(&self.coeff_x, theta, 1),
            eval_coeffs(&self.coeff_y, theta, 1),
        );
        let j = d.norm();
        let t = d * (1.0 / j);
        (t, Vec2::new(t.y, -t.x))
    }

    /// Local arclength spacing near node `i`.
    fn local_spacing(&self, i: usize) -> f64 {
        self.geom.jacobian[i] * TWO_PI / self.n as f64
    }

    /// Closest boundary point to `target`: Newton on (X-x(θ))·x'(θ) = 0
    /// seeded at the nearest node.
    pub fn nearest_point(&self, target: Vec2) -> (f64, Vec2, f64) {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.up.pos.iter().enumerate() {
            let d = (target - *p).norm_sq();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let mut theta = self.up.spectral.theta(best);
        let h = TWO_PI / self.n as f64;
        for _ in 0..60 {
            let p = self.point_at(theta);
            let d1 = Vec2::new(
                eval_coeffs(&self.coeff_x, theta, 1),
                eval_coeffs(&self.coeff_y, theta, 1),
            );
            let d2 = Vec2::new(
                eval_coeffs(&self.coeff_x, theta, 2),
                eval_coeffs(&self.coeff_y, theta, 2),
            );
            let r = target - p;
            let f = r.dot(d1);
            let fp = -d1.norm_sq() + r.dot(d2);
            if fp == 0.0 {
                break;
            }
            let mut step = f / fp;
            if step > h {
                step = h;
            } else if step < -h {
                step = -h;
            }
            theta -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        let p = self.point_at(theta);
        (theta, p, (target - p).norm())
    }
}

fn signum_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Dense self-interaction matrix of the single-layer potential.
///
/// The -ln ρ part is split as -ln(2 sin((θ_i-τ)/2)) (handled by the
/// spectrally accurate product quadrature) plus a smooth remainder with
/// diagonal limit -ln |x_θ|; the r⊗r/ρ² part is smooth with diagonal
/// limit t⊗t.
pub fn slp_self_matrix(curve: &ClosedCurve, geom: &CurveGeometry, mu0: f64) -> Mat {
    let n = curve.len();
    let sp = curve.spectral();
    let wlog = sp.log_kernel_weights();
    let h = TWO_PI / n as f64;
    let pref = 1.0 / (4.0 * core::f64::consts::PI * mu0);
    let mut m = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        let pi = curve.node(i);
        for j in 0..n {
            let jac = geom.jacobian[j];
            let (c_log, txx, txy, tyy);
            if i == j {
                c_log = wlog[0] - h * geom.jacobian[i].ln();
                let t = geom.tangent[i];
                txx = t.x * t.x;
                txy = t.x * t.y;
                tyy = t.y * t.y;
            } else {
                let r = pi - curve.node(j);
                let rho = r.norm();
                let s = 2.0 * ((sp.theta(i) - sp.theta(j)) / 2.0).sin().abs();
                c_log = wlog[(i + n - j) % n] - h * (rho / s).ln();
                let inv = 1.0 / (rho * rho);
                txx = r.x * r.x * inv;
                txy = r.x * r.y * inv;
                tyy = r.y * r.y * inv;
            }
            let scale = pref * jac;
            m[(i, j)] = scale * (c_log + h * txx);
            m[(i, n + j)] = scale * h * txy;
            m[(n + i, j)] = scale * h * txy;
            m[(n + i, n + j)] = scale * (c_log + h * tyy);
        }
    }
    m
}

/// Dense self-interaction matrix of the double-layer potential, including
/// the (1-ν)/π prefactor. The stresslet kernel is smooth on a smooth
/// curve; its diagonal limit is -κ/2 · t⊗t.
pub fn dlp_self_matrix(curve: &ClosedCurve, geom: &CurveGeometry, nu: f64) -> Mat {
    let n = curve.len();
    let h = TWO_PI / n as f64;
    let pref = (1.0 - nu) / core::f64::consts::PI;
    let mut m = Mat::zeros(2 * n, 2 * n);
    if nu == 1.0 {
        return m;
    }
    for i in 0..n {
        let pi = curve.node(i);
        for j in 0..n {
            let scale = pref * h * geom.jacobian[j];
            let (kxx, kxy, kyy);
            if i == j {
                let t = geom.tangent[i];
                let c = -0.5 * geom.curvature[i];
                kxx = c * t.x * t.x;
                kxy = c * t.x * t.y;
                kyy = c * t.y * t.y;
            } else {
                let r = pi - curve.node(j);
                let rho2 = r.norm_sq();
                let rn = r.dot(geom.normal[j]) / rho2;
                kxx = rn * r.x * r.x / rho2;
                kxy = rn * r.x * r.y / rho2;
                kyy = rn * r.y * r.y / rho2;
            }
            m[(i, j)] = scale * kxx;
            m[(i, n + j)] = scale * kxy;
            m[(n + i, j)] = scale * kxy;
            m[(n + i, n + j)] = scale * kyy;
        }
    }
    m
}

fn slp_sum(src: &UpsampledSource, fx: &[f64], fy: &[f64], target: Vec2, mu0: f64) -> Vec2 {
    let pref = 1.0 / (4.0 * core::f64::consts::PI * mu0);
    let mut u = Vec2::ZERO;
    for i in 0..src.pos.len() {
        let r = target - src.pos[i];
        let rho2 = r.norm_sq();
        let w = src.weight[i];
        let log_term = -0.5 * rho2.ln();
        let rr = (r.x * fx[i] + r.y * fy[i]) / rho2;
        u.x += w * (log_term * fx[i] + r.x * rr);
        u.y += w * (log_term * fy[i] + r.y * rr);
    }
    u * pref
}

fn dlp_sum(src: &UpsampledSource, ux: &[f64], uy: &[f64], target: Vec2, nu: f64) -> Vec2 {
    let pref = (1.0 - nu) / core::f64::consts::PI;
    let mut v = Vec2::ZERO;
    for i in 0..src.pos.len() {
        let r = target - src.pos[i];
        let rho2 = r.norm_sq();
        let rn = r.dot(src.normal[i]) / rho2;
        let ru = (r.x * ux[i] + r.y * uy[i]) / rho2;
        let w = src.weight[i] * rn * ru;
        v.x += w * r.x;
        v.y += w * r.y;
    }
    v * pref
}

/// Lagrange weights on the nodes `t_m = m·Δ`, m = 0..q-1, evaluated at `d`.
fn lagrange_weights(q: usize, delta: f64, d: f64) -> Vec<f64> {
    let mut w = vec![1.0; q];
    for m in 0..q {
        let tm = m as f64 * delta;
        for l in 0..q {
            if l != m {
                let tl = l as f64 * delta;
                w[m] *= (d - tl) / (tm - tl);
            }
        }
    }
    w
}

/// One near target: interpolation data frozen at plan-build time.
#[derive(Debug, Clone)]
pub struct NearEntry {
    /// Index into the target list.
    pub target: usize,
    /// Parameter of the nearest boundary point.
    pub theta0: f64,
    /// +1 outside the source curve, -1 inside, 0 on the boundary.
    pub side: f64,
    /// Off-boundary sample points along the ray through the target.
    ray_points: Vec<Vec2>,
    /// Lagrange weights combining [boundary value, ray values] at the
    /// target distance.
    weights: Vec<f64>,
}

/// Evaluation plan of one source curve at a fixed list of targets,
/// classified into well-separated and near-boundary targets.
pub struct InteractionPlan {
    pub far: Vec<usize>,
    pub near: Vec<NearEntry>,
    n_targets: usize,
}

impl InteractionPlan {
    /// Classify `targets` against `source`. Requires `source` to have been
    /// built `with_near` when any target lies inside the near zone.
    pub fn build(source: &LayerOps, targets: &[Vec2]) -> Result<InteractionPlan> {
        let mut far = Vec::new();
        let mut near = Vec::new();
        for (ti, &tgt) in targets.iter().enumerate() {
            // cheap screen on the coarse nodes before the Newton refinement
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, node) in source.nodes.iter().enumerate() {
                let d = (tgt - *node).norm();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            let h_loc = source.local_spacing(best);
            if best_d > (source.near_threshold + 1.0) * h_loc {
                far.push(ti);
                continue;
            }
            let (theta0, foot, dist) = source.nearest_point(tgt);
            let (_, normal) = source.tangent_normal_at(theta0);
            let h0 = Vec2::new(
                eval_coeffs(&source.coeff_x, theta0, 1),
                eval_coeffs(&source.coeff_y, theta0, 1),
            )
            .norm()
                * TWO_PI
                / source.n as f64;
            if dist > source.near_threshold * h0 {
                far.push(ti);
                continue;
            }
            // inside the near zone: build the ray interpolation stencil
            let delta = NEAR_RAY_SPACING * h0;
            let (side, dir);
            if dist <= ON_BOUNDARY_TOL * h0 {
                side = 0.0;
                dir = normal;
            } else {
                let d = (tgt - foot) * (1.0 / dist);
                side = signum_or_zero(d.dot(normal));
                dir = d;
            }
            let ray_points: Vec<Vec2> = (1..NEAR_RAY_NODES)
                .map(|m| foot + dir * (m as f64 * delta))
                .collect();
            let weights = lagrange_weights(NEAR_RAY_NODES, delta, dist);
            near.push(NearEntry {
                target: ti,
                theta0,
                side,
                ray_points,
                weights,
            });
        }
        Ok(InteractionPlan {
            far,
            near,
            n_targets: targets.len(),
        })
    }

    /// Evaluate one layer potential of `source` with nodal density
    /// (`fx`, `fy`) at the planned targets, accumulating `scale` times the
    /// result into `out` (flat layout [x-comps | y-comps]).
    #[allow(clippy::too_many_arguments)]
    pub fn apply(
        &self,
        source: &LayerOps,
        kind: KernelKind,
        fx: &[f64],
        fy: &[f64],
        targets: &[Vec2],
        scale: f64,
        out: &mut [f64],
    ) -> Result<()> {
        debug_assert_eq!(out.len(), 2 * self.n_targets);
        let sp_src = Spectral::new(source.n);
        let (ufx, ufy) = source.up.resample_density(&sp_src, fx, fy);
        for &ti in &self.far {
            let u = match kind {
                KernelKind::Single => slp_sum(&source.up, &ufx, &ufy, targets[ti], source.mu0),
                KernelKind::Double => dlp_sum(&source.up, &ufx, &ufy, targets[ti], source.nu),
            };
            out[ti] += scale * u.x;
            out[self.n_targets + ti] += scale * u.y;
        }
        if self.near.is_empty() {
            return Ok(());
        }
        let near_up = source.near_up.as_ref().ok_or_else(|| {
            Error::invalid("near-singular evaluation requested on a source built without near support")
        })?;
        let (nfx, nfy) = near_up.resample_density(&sp_src, fx, fy);

        // nodal boundary values of the potential, interpolated to θ₀ below
        let n = source.n;
        let mut flat = vec![0.0; 2 * n];
        flat[..n].copy_from_slice(fx);
        flat[n..].copy_from_slice(fy);
        let mut boundary = vec![0.0; 2 * n];
        match kind {
            KernelKind::Single => source.slp_self.matvec(&flat, &mut boundary),
            KernelKind::Double => source.dlp_self.matvec(&flat, &mut boundary),
        }
        let cbx = sp_src.forward(&boundary[..n]);
        let cby = sp_src.forward(&boundary[n..]);
        let cfx = sp_src.forward(fx);
        let cfy = sp_src.forward(fy);

        for entry in &self.near {
            let mut bx = eval_coeffs(&cbx, entry.theta0, 0);
            let mut by = eval_coeffs(&cby, entry.theta0, 0);
            if kind == KernelKind::Double && entry.side != 0.0 {
                // one-sided limit: PV ± (1-ν)/2 · density at the foot point
                let jump = 0.5 * (1.0 - source.nu) * entry.side;
                bx += jump * eval_coeffs(&cfx, entry.theta0, 0);
                by += jump * eval_coeffs(&cfy, entry.theta0, 0);
            }
            let mut ux = entry.weights[0] * bx;
            let mut uy = entry.weights[0] * by;
            for (m, pt) in entry.ray_points.iter().enumerate() {
                let u = match kind {
                    KernelKind::Single => slp_sum(near_up, &nfx, &nfy, *pt, source.mu0),
                    KernelKind::Double => dlp_sum(near_up, &nfx, &nfy, *pt, source.nu),
                };
                ux += entry.weights[m + 1] * u.x;
                uy += entry.weights[m + 1] * u.y;
            }
            out[entry.target] += scale * ux;
            out[self.n_targets + entry.target] += scale * uy;
        }
        Ok(())
    }
}

fn check_density(density: &[Vec2], n: usize) -> Result<()> {
    if density.len() != n {
        return Err(Error::invalid(format!(
            "density length {} does not match curve size {n}",
            density.len()
        )));
    }
    if density.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
        return Err(Error::invalid("non-finite density value"));
    }
    Ok(())
}

fn split(density: &[Vec2]) -> (Vec<f64>, Vec<f64>) {
    (
        density.iter().map(|v| v.x).collect(),
        density.iter().map(|v| v.y).collect(),
    )
}

fn gather(out: Vec<f64>, m: usize) -> Vec<Vec2> {
    (0..m).map(|i| Vec2::new(out[i], out[m + i])).collect()
}

fn apply_kernel(
    source: &ClosedCurve,
    kind: KernelKind,
    nu: f64,
    density: &[Vec2],
    targets: &[Vec2],
    self_eval: bool,
    cfg: &LayerPotentialConfig,
) -> Result<Vec<Vec2>> {
    check_density(density, source.len())?;
    let (fx, fy) = split(density);
    if self_eval {
        let ops = LayerOps::build(source, nu, cfg, false)?;
        let n = source.len();
        let mut flat = vec![0.0; 2 * n];
        flat[..n].copy_from_slice(&fx);
        flat[n..].copy_from_slice(&fy);
        let mut out = vec![0.0; 2 * n];
        match kind {
            KernelKind::Single => ops.slp_self.matvec(&flat, &mut out),
            KernelKind::Double => ops.dlp_self.matvec(&flat, &mut out),
        }
        return Ok(gather(out, n));
    }
    let ops = LayerOps::build(source, nu, cfg, true)?;
    let plan = InteractionPlan::build(&ops, targets)?;
    let mut out = vec![0.0; 2 * targets.len()];
    plan.apply(&ops, kind, &fx, &fy, targets, 1.0, &mut out)?;
    Ok(gather(out, targets.len()))
}

/// Single-layer (Stokeslet) potential of `density` on `source`, evaluated
/// at `targets` (or at the source nodes when `self_eval` is set).
pub fn slp_apply(
    source: &ClosedCurve,
    density: &[Vec2],
    targets: &[Vec2],
    self_eval: bool,
    cfg: &LayerPotentialConfig,
) -> Result<Vec<Vec2>> {
    apply_kernel(source, KernelKind::Single, 1.0, density, targets, self_eval, cfg)
}

/// Double-layer (stresslet) potential with viscosity-contrast prefactor
/// (1-ν)/π, evaluated at `targets` (or the source nodes for `self_eval`).
pub fn dlp_apply(
    source: &ClosedCurve,
    nu: f64,
    density: &[Vec2],
    targets: &[Vec2],
    self_eval: bool,
    cfg: &LayerPotentialConfig,
) -> Result<Vec<Vec2>> {
    apply_kernel(source, KernelKind::Double, nu, density, targets, self_eval, cfg)
}

/// Near-singular evaluation for targets within the activation distance of
/// `source`. Targets farther away are caller misuse and rejected.
pub fn near_singular_eval(
    source: &ClosedCurve,
    kind: KernelKind,
    nu: f64,
    density: &[Vec2],
    targets: &[Vec2],
    cfg: &LayerPotentialConfig,
) -> Result<Vec<Vec2>> {
    check_density(density, source.len())?;
    let ops = LayerOps::build(source, nu, cfg, true)?;
    let plan = InteractionPlan::build(&ops, targets)?;
    if !plan.far.is_empty() {
        return Err(Error::invalid(format!(
            "target {} lies outside the near zone; use the plain upsampled evaluation",
            plan.far[0]
        )));
    }
    let (fx, fy) = split(density);
    let mut out = vec![0.0; 2 * targets.len()];
    plan.apply(&ops, kind, &fx, &fy, targets, 1.0, &mut out)?;
    Ok(gather(out, targets.len()))
}
