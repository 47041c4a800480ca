//! One macro time step: a first-order sweep across Gauss-Lobatto substeps,
//! spectral-quadrature residuals of the Picard integral, and correction
//! sweeps that raise the temporal order by one each.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::imex::{
    self, build_ops, build_plans, solve_substep, solve_velocity, SolverContext, VesicleOps,
};
use crate::kernels::InteractionPlan;
use crate::linalg::Mat;
use crate::math::FloatExt;
use crate::membrane::VesicleState;
use crate::sim::{FarFieldFlow, Suspension};

/// SDC stepping parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SdcConfig {
    /// Number of Gauss-Lobatto substeps per macro step.
    pub lobatto_points: usize,
    /// Number of correction sweeps.
    pub n_sdc: usize,
}

impl Default for SdcConfig {
    fn default() -> Self {
        SdcConfig {
            lobatto_points: 5,
            n_sdc: 1,
        }
    }
}

impl SdcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lobatto_points < 3 {
            return Err(Error::invalid("need at least 3 Gauss-Lobatto points"));
        }
        Ok(())
    }
}

/// Gauss-Lobatto nodes on [0,1] with the spectral integration matrix
/// mapping nodal values to ∫₀^{c_j} of their degree-(p-1) interpolant.
#[derive(Debug, Clone)]
pub struct LobattoGrid {
    pub nodes: Vec<f64>,
    /// Row j integrates from 0 to node j.
    pub integration: Mat,
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    // returns (P_n(x), P_{n-1}(x))
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn legendre_deriv(n: usize, x: f64) -> f64 {
    let (pn, pn1) = legendre_pair(n, x);
    n as f64 * (x * pn - pn1) / (x * x - 1.0)
}

impl LobattoGrid {
    pub fn new(p: usize) -> Result<Self> {
        if p < 3 {
            return Err(Error::invalid("Gauss-Lobatto grid needs p >= 3"));
        }
        // Interior nodes are the roots of P'_{p-1} on (-1, 1).
        let n = p - 1;
        let mut xs = vec![-1.0];
        for i in 1..n {
            let mut x = -(core::f64::consts::PI * i as f64 / n as f64).cos();
            for _ in 0..100 {
                let f = legendre_deriv(n, x);
                // f' = P''_n = (2x P'_n - n(n+1) P_n) / (1 - x²)
                let (pn, _) = legendre_pair(n, x);
                let fp = (2.0 * x * f - (n * (n + 1)) as f64 * pn) / (1.0 - x * x);
                let step = f / fp;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            xs.push(x);
        }
        xs.push(1.0);
        // Symmetrize and map to [0, 1].
        let mut nodes: Vec<f64> = xs.iter().map(|x| 0.5 * (x + 1.0)).collect();
        for i in 0..p / 2 {
            let avg = 0.5 * (nodes[i] + 1.0 - nodes[p - 1 - i]);
            nodes[i] = avg;
            nodes[p - 1 - i] = 1.0 - avg;
        }
        if p % 2 == 1 {
            nodes[p / 2] = 0.5;
        }

        // Integration matrix: ∫₀^{c_j} ℓ_l via Gauss-Legendre, exact for
        // the degree-(p-1) Lagrange basis.
        let (gx, gw) = gauss_legendre(p);
        let mut integration = Mat::zeros(p, p);
        for j in 0..p {
            let cj = nodes[j];
            for l in 0..p {
                let mut s = 0.0;
                for (xg, wg) in gx.iter().zip(&gw) {
                    let t = cj * 0.5 * (xg + 1.0);
                    s += 0.5 * cj * wg * lagrange_basis(&nodes, l, t);
                }
                integration[(j, l)] = s;
            }
        }
        Ok(LobattoGrid { nodes, integration })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature weights over the full interval (the last row).
    pub fn full_weights(&self) -> &[f64] {
        self.integration.row(self.len() - 1)
    }
}

fn lagrange_basis(nodes: &[f64], l: usize, x: f64) -> f64 {
    let mut v = 1.0;
    for (i, ci) in nodes.iter().enumerate() {
        if i != l {
            v *= (x - ci) / (nodes[l] - ci);
        }
    }
    v
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = -(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, _) = legendre_pair(n, x);
            let dp = legendre_deriv(n, x);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let dp = legendre_deriv(n, x);
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Per-node substep data shared by the sweeps: states plus the operators
/// and interaction plans frozen at those states.
struct NodeData {
    states: Vec<VesicleState>,
    ops: Vec<VesicleOps>,
    plans: Vec<Vec<Option<InteractionPlan>>>,
}

impl NodeData {
    fn build(states: Vec<VesicleState>, ctx: &SolverContext) -> Result<Self> {
        let ops = build_ops(&states, &ctx.layer)?;
        let plans = build_plans(&ops)?;
        Ok(NodeData { states, ops, plans })
    }

    fn positions(&self) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|s| imex::flat_positions(&s.curve))
            .collect()
    }

    fn tensions(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.sigma.clone()).collect()
    }

    fn vinf(&self, flow: &FarFieldFlow) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|s| {
                let n = s.curve.len();
                let mut out = vec![0.0; 2 * n];
                for (i, p) in s.curve.nodes().enumerate() {
                    let v = flow.eval(p);
                    out[i] = v.x;
                    out[n + i] = v.y;
                }
                out
            })
            .collect()
    }
}

/// The Gauss-Lobatto substep states, provisional velocities, and residuals
/// of one macro step.
pub struct LobattoStage {
    /// Substep states, one set of vesicles per Lobatto node.
    pub states: Vec<Vec<VesicleState>>,
    /// Provisional velocities per node and vesicle (flat [x|y]).
    pub velocities: Vec<Vec<Vec<f64>>>,
    /// Picard residuals per node and vesicle (flat [x|y]).
    pub residuals: Vec<Vec<Vec<f64>>>,
}

impl LobattoStage {
    /// Max-norm of the residual over nodes, vesicles, and components.
    pub fn residual_norm(&self) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Diagnostics of one macro step.
#[derive(Debug, Clone, Default)]
pub struct MacroDiagnostics {
    pub matvecs: u64,
    pub gmres_iterations: u64,
    /// Max-node residual norm after the provisional sweep and after each
    /// correction sweep (empty when n_sdc = 0).
    pub residual_norms: Vec<f64>,
}

fn advance_states(
    prev: &[VesicleState],
    solution: &[f64],
    layout: &imex::Layout,
) -> Result<Vec<VesicleState>> {
    let mut out = Vec::with_capacity(prev.len());
    for (j, state) in prev.iter().enumerate() {
        let n = state.curve.len();
        let pos = &solution[layout.pos(j)];
        let mut new_state = state.clone();
        new_state.curve.set_nodes(&pos[..n], &pos[n..])?;
        new_state.sigma = solution[layout.sigma(j)].to_vec();
        out.push(new_state);
    }
    Ok(out)
}

fn substep_sizes(grid: &LobattoGrid, dt: f64) -> Vec<f64> {
    grid.nodes
        .windows(2)
        .map(|w| dt * (w[1] - w[0]))
        .collect()
}

/// March the first-order semi-implicit discretization across the Lobatto
/// subintervals, freezing operators at the left state of each.
fn provisional_march(
    initial: Vec<VesicleState>,
    dt: f64,
    grid: &LobattoGrid,
    flow: &FarFieldFlow,
    ctx: &SolverContext,
) -> Result<Vec<NodeData>> {
    let mut nodes = Vec::with_capacity(grid.len());
    nodes.push(NodeData::build(initial, ctx)?);
    for dt_m in substep_sizes(grid, dt) {
        let new_states = {
            let data = nodes.last().unwrap();
            let pos = data.positions();
            let vinf = data.vinf(flow);
            let rhs = imex::provisional_rhs(&data.ops, &data.plans, &pos, &vinf, dt_m)?;
            let divs: Vec<Mat> = data.ops.iter().map(|o| o.div.clone()).collect();
            let report = solve_substep(&data.ops, &data.plans, &divs, &rhs, dt_m, ctx)?;
            let ns: Vec<usize> = data.ops.iter().map(|o| o.n).collect();
            let layout = imex::Layout::coupled(&ns);
            advance_states(&data.states, &report.solution, &layout)?
        };
        nodes.push(NodeData::build(new_states, ctx)?);
    }
    Ok(nodes)
}

/// Provisional velocity ṽ = (αI − D)⁻¹(v∞ − S(Bx − Tσ)) at one state set.
fn node_velocity(data: &NodeData, flow: &FarFieldFlow, ctx: &SolverContext) -> Result<Vec<Vec<f64>>> {
    let pos = data.positions();
    let sig = data.tensions();
    let vinf = data.vinf(flow);
    let rhs = imex::velocity_rhs(&data.ops, &data.plans, &pos, &sig, &vinf)?;
    let report = solve_velocity(&data.ops, &data.plans, &rhs, ctx)?;
    let ns: Vec<usize> = data.ops.iter().map(|o| o.n).collect();
    let layout = imex::Layout::velocity(&ns);
    Ok((0..data.ops.len())
        .map(|j| report.solution[layout.pos(j)].to_vec())
        .collect())
}

/// Residuals r_m = x₀ − x_m + Δt Σ_l Q[m][l] ṽ_l at every node.
fn residuals_from(
    nodes: &[NodeData],
    velocities: &[Vec<Vec<f64>>],
    grid: &LobattoGrid,
    dt: f64,
) -> Vec<Vec<Vec<f64>>> {
    let p = nodes.len();
    let m_ves = nodes[0].states.len();
    let x0: Vec<Vec<f64>> = nodes[0].positions();
    let mut out = Vec::with_capacity(p);
    for m in 0..p {
        let xm = nodes[m].positions();
        let mut per_ves = Vec::with_capacity(m_ves);
        for j in 0..m_ves {
            let mut r: Vec<f64> = x0[j]
                .iter()
                .zip(&xm[j])
                .map(|(a, b)| a - b)
                .collect();
            for l in 0..p {
                let w = dt * grid.integration[(m, l)];
                if w != 0.0 {
                    crate::math::axpy(w, &velocities[l][j], &mut r);
                }
            }
            per_ves.push(r);
        }
        out.push(per_ves);
    }
    out
}

/// Arclength-frame data of the initial Lobatto node, used by the
/// correction constraint.
struct InitialFrame {
    /// d/ds in the node-0 frame, per vesicle.
    ds0: Vec<Mat>,
}

impl InitialFrame {
    fn build(node0: &NodeData) -> Result<Self> {
        let mut ds0 = Vec::with_capacity(node0.ops.len());
        for (state, ops) in node0.states.iter().zip(&node0.ops) {
            let n = state.curve.len();
            let mut d = state.curve.spectral().derivative_matrix(1);
            for i in 0..n {
                let inv = 1.0 / ops.layer.geom.jacobian[i];
                for v in d.row_mut(i) {
                    *v *= inv;
                }
            }
            ds0.push(d);
        }
        Ok(InitialFrame { ds0 })
    }

    /// Constraint matrices x̃_{s₀}·(·)_{s₀} and right-hand sides
    /// ½(1 − x̃_{s₀}·x̃_{s₀}) at the supplied provisional states.
    fn constraint(&self, states: &[VesicleState]) -> (Vec<Mat>, Vec<Vec<f64>>) {
        let mut mats = Vec::with_capacity(states.len());
        let mut rhs = Vec::with_capacity(states.len());
        for (j, state) in states.iter().enumerate() {
            let n = state.curve.len();
            let ds0 = &self.ds0[j];
            let mut gx = vec![0.0; n];
            let mut gy = vec![0.0; n];
            ds0.matvec(state.curve.xs(), &mut gx);
            ds0.matvec(state.curve.ys(), &mut gy);
            let mut m = Mat::zeros(n, 2 * n);
            for i in 0..n {
                for c in 0..n {
                    let d = ds0[(i, c)];
                    m[(i, c)] = gx[i] * d;
                    m[(i, n + c)] = gy[i] * d;
                }
            }
            mats.push(m);
            rhs.push(
                (0..n)
                    .map(|i| 0.5 * (1.0 - gx[i] * gx[i] - gy[i] * gy[i]))
                    .collect(),
            );
        }
        (mats, rhs)
    }
}

/// One correction sweep: march the error system across the subintervals
/// and add the errors onto the provisional solution.
fn correction_march(
    nodes: &mut Vec<NodeData>,
    residuals: &[Vec<Vec<f64>>],
    frame: &InitialFrame,
    dt: f64,
    grid: &LobattoGrid,
    ctx: &SolverContext,
) -> Result<()> {
    let m_ves = nodes[0].states.len();
    let sizes = substep_sizes(grid, dt);
    let mut e_prev: Vec<Vec<f64>> = nodes[0]
        .states
        .iter()
        .map(|s| vec![0.0; 2 * s.curve.len()])
        .collect();

    // errors per node (positions and tensions), node 0 stays zero
    let mut updates: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = Vec::with_capacity(grid.len() - 1);
    for (m, &dt_m) in sizes.iter().enumerate() {
        let data = &nodes[m + 1];
        let (div_mats, crhs) = frame.constraint(&data.states);
        let dr: Vec<Vec<f64>> = (0..m_ves)
            .map(|j| {
                residuals[m + 1][j]
                    .iter()
                    .zip(&residuals[m][j])
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
        let rhs = imex::correction_rhs(&data.ops, &data.plans, &e_prev, &dr, &crhs, dt_m)?;
        let report = solve_substep(&data.ops, &data.plans, &div_mats, &rhs, dt_m, ctx)?;
        let ns: Vec<usize> = data.ops.iter().map(|o| o.n).collect();
        let layout = imex::Layout::coupled(&ns);
        let e_pos: Vec<Vec<f64>> = (0..m_ves)
            .map(|j| report.solution[layout.pos(j)].to_vec())
            .collect();
        let e_sig: Vec<Vec<f64>> = (0..m_ves)
            .map(|j| report.solution[layout.sigma(j)].to_vec())
            .collect();
        e_prev.clone_from(&e_pos);
        updates.push((e_pos, e_sig));
    }

    // apply the errors and refresh the frozen operators
    for (m, (e_pos, e_sig)) in updates.into_iter().enumerate() {
        let node = m + 1;
        let mut states = nodes[node].states.clone();
        for (j, state) in states.iter_mut().enumerate() {
            let n = state.curve.len();
            let mut x = state.curve.xs().to_vec();
            let mut y = state.curve.ys().to_vec();
            for i in 0..n {
                x[i] += e_pos[j][i];
                y[i] += e_pos[j][n + i];
            }
            state.curve.set_nodes(&x, &y)?;
            for (s, e) in state.sigma.iter_mut().zip(&e_sig[j]) {
                *s += e;
            }
        }
        nodes[node] = NodeData::build(states, ctx)?;
    }
    Ok(())
}

/// Advance a suspension by one macro step of size `dt` with `n_sdc`
/// correction sweeps, returning the new state and step diagnostics.
pub fn macro_step(
    suspension: &Suspension,
    dt: f64,
    n_sdc: usize,
    grid: &LobattoGrid,
    ctx: &SolverContext,
) -> Result<(Suspension, MacroDiagnostics)> {
    if dt < 0.0 {
        return Err(Error::invalid("negative time step"));
    }
    let matvecs0 = ctx.matvecs();
    let gmres0 = ctx.gmres_iterations();
    if dt == 0.0 {
        return Ok((suspension.clone(), MacroDiagnostics::default()));
    }

    let mut nodes = provisional_march(
        suspension.vesicles.clone(),
        dt,
        grid,
        &suspension.flow,
        ctx,
    )?;

    let mut diag = MacroDiagnostics::default();
    if n_sdc > 0 {
        let frame = InitialFrame::build(&nodes[0])?;
        let mut velocities: Vec<Vec<Vec<f64>>> = nodes
            .iter()
            .map(|d| node_velocity(d, &suspension.flow, ctx))
            .collect::<Result<_>>()?;
        let mut residuals = residuals_from(&nodes, &velocities, grid, dt);
        diag.residual_norms.push(stage_norm(&residuals));

        for _ in 0..n_sdc {
            correction_march(&mut nodes, &residuals, &frame, dt, grid, ctx)?;
            velocities = nodes
                .iter()
                .map(|d| node_velocity(d, &suspension.flow, ctx))
                .collect::<Result<_>>()?;
            residuals = residuals_from(&nodes, &velocities, grid, dt);
            diag.residual_norms.push(stage_norm(&residuals));
        }
    }

    let final_states = nodes.pop().unwrap().states;
    let out = Suspension {
        vesicles: final_states,
        flow: suspension.flow.clone(),
        time: suspension.time + dt,
    };
    diag.matvecs = ctx.matvecs() - matvecs0;
    diag.gmres_iterations = ctx.gmres_iterations() - gmres0;
    Ok((out, diag))
}

fn stage_norm(residuals: &[Vec<Vec<f64>>]) -> f64 {
    residuals
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Build the full Lobatto stage (states, velocities, residuals) for one
/// provisional sweep; exposed for inspection and tests.
pub fn provisional_stage(
    suspension: &Suspension,
    dt: f64,
    grid: &LobattoGrid,
    ctx: &SolverContext,
) -> Result<LobattoStage> {
    let nodes = provisional_march(
        suspension.vesicles.clone(),
        dt,
        grid,
        &suspension.flow,
        ctx,
    )?;
    let velocities: Vec<Vec<Vec<f64>>> = nodes
        .iter()
        .map(|d| node_velocity(d, &suspension.flow, ctx))
        .collect::<Result<_>>()?;
    let residuals = residuals_from(&nodes, &velocities, grid, dt);
    Ok(LobattoStage {
        states: nodes.into_iter().map(|d| d.states).collect(),
        velocities,
        residuals,
    })
}

/// Provisional velocity of a set of vesicle states under `flow`; the
/// standalone form of the solver used inside the sweeps.
pub fn provisional_velocity(
    states: &[VesicleState],
    flow: &FarFieldFlow,
    ctx: &SolverContext,
) -> Result<Vec<Vec<f64>>> {
    let data = NodeData::build(states.to_vec(), ctx)?;
    node_velocity(&data, flow, ctx)
}
