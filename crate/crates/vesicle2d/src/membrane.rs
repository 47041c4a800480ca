//! Membrane differential operators: bending, tension, surface divergence,
//! and the traction entering the stress jump.

use alloc::format;
use alloc::vec::Vec;

use crate::curve::ClosedCurve;
use crate::error::{Error, Result};
use crate::math::Vec2;

/// One vesicle: membrane curve, nodal tension, and material parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VesicleState {
    pub curve: ClosedCurve,
    /// Membrane tension σ at the nodes (the Lagrange multiplier of the
    /// inextensibility constraint).
    pub sigma: Vec<f64>,
    /// Viscosity contrast ν = interior/exterior viscosity.
    pub nu: f64,
    /// Bending modulus κ_b.
    pub kappa_b: f64,
}

impl VesicleState {
    /// New vesicle with zero initial tension; the first implicit solve
    /// determines a consistent tension field.
    pub fn new(curve: ClosedCurve, nu: f64, kappa_b: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::invalid(format!("viscosity contrast {nu} must be > 0")));
        }
        if !(kappa_b > 0.0) {
            return Err(Error::invalid(format!("bending modulus {kappa_b} must be > 0")));
        }
        let sigma = alloc::vec![0.0; curve.len()];
        Ok(VesicleState {
            curve,
            sigma,
            nu,
            kappa_b,
        })
    }

    /// Boundary coefficient α = (1+ν)/2 of the on-surface velocity relation.
    pub fn alpha(&self) -> f64 {
        0.5 * (1.0 + self.nu)
    }
}

fn check_field(curve: &ClosedCurve, len: usize, what: &str) -> Result<()> {
    if len != curve.len() {
        return Err(Error::invalid(format!(
            "{what} length {len} does not match curve size {}",
            curve.len()
        )));
    }
    Ok(())
}

/// Bending operator κ_b d⁴/ds⁴ applied to a planar field.
pub fn bending_apply(curve: &ClosedCurve, kappa_b: f64, field: &[Vec2]) -> Result<Vec<Vec2>> {
    check_field(curve, field.len(), "field")?;
    let fx: Vec<f64> = field.iter().map(|v| v.x).collect();
    let fy: Vec<f64> = field.iter().map(|v| v.y).collect();
    let dx = curve.arclength_derivative(&fx, 4)?;
    let dy = curve.arclength_derivative(&fy, 4)?;
    Ok(dx
        .iter()
        .zip(&dy)
        .map(|(&a, &b)| Vec2::new(kappa_b * a, kappa_b * b))
        .collect())
}

/// Tension operator (σ x_s)_s.
pub fn tension_apply(curve: &ClosedCurve, sigma: &[f64]) -> Result<Vec<Vec2>> {
    check_field(curve, sigma.len(), "tension")?;
    let xs = curve.arclength_derivative(curve.xs(), 1)?;
    let ys = curve.arclength_derivative(curve.ys(), 1)?;
    let gx: Vec<f64> = sigma.iter().zip(&xs).map(|(s, t)| s * t).collect();
    let gy: Vec<f64> = sigma.iter().zip(&ys).map(|(s, t)| s * t).collect();
    let dx = curve.arclength_derivative(&gx, 1)?;
    let dy = curve.arclength_derivative(&gy, 1)?;
    Ok(dx.iter().zip(&dy).map(|(&a, &b)| Vec2::new(a, b)).collect())
}

/// Surface divergence x_s · f_s.
pub fn surface_divergence(curve: &ClosedCurve, field: &[Vec2]) -> Result<Vec<f64>> {
    check_field(curve, field.len(), "field")?;
    let xs = curve.arclength_derivative(curve.xs(), 1)?;
    let ys = curve.arclength_derivative(curve.ys(), 1)?;
    let fx: Vec<f64> = field.iter().map(|v| v.x).collect();
    let fy: Vec<f64> = field.iter().map(|v| v.y).collect();
    let dfx = curve.arclength_derivative(&fx, 1)?;
    let dfy = curve.arclength_derivative(&fy, 1)?;
    Ok((0..curve.len())
        .map(|i| xs[i] * dfx[i] + ys[i] * dfy[i])
        .collect())
}

/// Membrane traction -κ_b x_ssss + (σ x_s)_s, the stress jump across the
/// membrane.
pub fn traction(state: &VesicleState) -> Result<Vec<Vec2>> {
    let pos: Vec<Vec2> = state.curve.nodes().collect();
    let bend = bending_apply(&state.curve, state.kappa_b, &pos)?;
    let tens = tension_apply(&state.curve, &state.sigma)?;
    Ok(bend
        .iter()
        .zip(&tens)
        .map(|(b, t)| *t - *b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TWO_PI;
    use alloc::vec;

    fn unit_circle(n: usize) -> ClosedCurve {
        ClosedCurve::circle(Vec2::ZERO, 1.0, n).unwrap()
    }

    fn positions(c: &ClosedCurve) -> Vec<Vec2> {
        c.nodes().collect()
    }

    #[test]
    fn bending_of_circle_position_is_position() {
        let c = unit_circle(32);
        let out = bending_apply(&c, 1.0, &positions(&c)).unwrap();
        for (o, p) in out.iter().zip(c.nodes()) {
            assert!((o.x - p.x).abs() < 1e-10);
            assert!((o.y - p.y).abs() < 1e-10);
        }
    }

    #[test]
    fn bending_of_constant_is_zero_and_linear_in_modulus() {
        let c = unit_circle(32);
        let constant = vec![Vec2::new(2.0, -1.0); 32];
        let out = bending_apply(&c, 1.0, &constant).unwrap();
        assert!(out.iter().all(|v| v.norm() < 1e-10));

        let pos = positions(&c);
        let k1 = bending_apply(&c, 1.0, &pos).unwrap();
        let k2 = bending_apply(&c, 2.0, &pos).unwrap();
        for (a, b) in k1.iter().zip(&k2) {
            assert_eq!(2.0 * a.x, b.x);
            assert_eq!(2.0 * a.y, b.y);
        }
    }

    #[test]
    fn constant_tension_on_circle_gives_curvature_normal() {
        let c = unit_circle(32);
        let out = tension_apply(&c, &vec![2.5; 32]).unwrap();
        for (i, o) in out.iter().enumerate() {
            let t = TWO_PI * i as f64 / 32.0;
            // c·x_ss = -c·(cos, sin)
            assert!((o.x + 2.5 * t.cos()).abs() < 1e-10);
            assert!((o.y + 2.5 * t.sin()).abs() < 1e-10);
        }
        let zero = tension_apply(&c, &vec![0.0; 32]).unwrap();
        assert!(zero.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn tension_matches_hand_composed_derivatives() {
        let c = ClosedCurve::ellipse(Vec2::ZERO, 1.0, 3.0, 0.0, 64).unwrap();
        let sigma: Vec<f64> = (0..64).map(|i| (TWO_PI * i as f64 / 64.0).sin()).collect();
        let out = tension_apply(&c, &sigma).unwrap();

        // independent composition from first-order arclength derivatives
        let xs = c.arclength_derivative(c.xs(), 1).unwrap();
        let ys = c.arclength_derivative(c.ys(), 1).unwrap();
        let gx: Vec<f64> = sigma.iter().zip(&xs).map(|(s, t)| s * t).collect();
        let gy: Vec<f64> = sigma.iter().zip(&ys).map(|(s, t)| s * t).collect();
        let ex = c.arclength_derivative(&gx, 1).unwrap();
        let ey = c.arclength_derivative(&gy, 1).unwrap();
        for i in 0..64 {
            assert!((out[i].x - ex[i]).abs() < 1e-10);
            assert!((out[i].y - ey[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn surface_divergence_identities() {
        let c = ClosedCurve::ellipse(Vec2::ZERO, 1.0, 3.0, 0.0, 64).unwrap();
        // Div of the position is 1 (x_s·x_s = 1).
        let div = surface_divergence(&c, &positions(&c)).unwrap();
        assert!(div.iter().all(|v| (v - 1.0).abs() < 1e-10));

        // constant fields have zero divergence
        let constant = vec![Vec2::new(0.3, 0.7); 64];
        let div0 = surface_divergence(&c, &constant).unwrap();
        assert!(div0.iter().all(|v| v.abs() < 1e-10));

        // rigid rotations are inextensible
        let circ = unit_circle(32);
        let rot: Vec<Vec2> = circ.nodes().map(|p| Vec2::new(-p.y, p.x)).collect();
        let divr = surface_divergence(&circ, &rot).unwrap();
        assert!(divr.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn traction_on_circle() {
        let c = unit_circle(32);
        let mut state = VesicleState::new(c, 1.0, 1.0).unwrap();
        // σ = 0: traction = -position
        let t0 = traction(&state).unwrap();
        for (t, p) in t0.iter().zip(state.curve.nodes()) {
            assert!((t.x + p.x).abs() < 1e-10);
            assert!((t.y + p.y).abs() < 1e-10);
        }
        // σ = 1: traction = -2·(cos, sin)
        state.sigma = vec![1.0; 32];
        let t1 = traction(&state).unwrap();
        for (t, p) in t1.iter().zip(state.curve.nodes()) {
            assert!((t.x + 2.0 * p.x).abs() < 1e-10);
            assert!((t.y + 2.0 * p.y).abs() < 1e-10);
        }
    }

    #[test]
    fn traction_is_linear_in_tension() {
        let c = ClosedCurve::ellipse(Vec2::new(0.4, -0.2), 1.0, 2.0, 0.3, 32).unwrap();
        let mut s1 = VesicleState::new(c.clone(), 4.0, 1.0).unwrap();
        let mut s2 = s1.clone();
        let mut s3 = s1.clone();
        for i in 0..32 {
            let t = TWO_PI * i as f64 / 32.0;
            s1.sigma[i] = t.sin();
            s2.sigma[i] = 0.25 * t.cos();
            s3.sigma[i] = s1.sigma[i] + s2.sigma[i];
        }
        let (t1, t2, t3) = (
            traction(&s1).unwrap(),
            traction(&s2).unwrap(),
            traction(&s3).unwrap(),
        );
        let b = bending_apply(&s1.curve, 1.0, &positions(&s1.curve)).unwrap();
        for i in 0..32 {
            // traction(σ1+σ2) + bending = traction(σ1) + traction(σ2) + 2·bending
            let lhs = t3[i] + b[i];
            let rhs = t1[i] + t2[i] + b[i] + b[i];
            assert!((lhs.x - rhs.x).abs() < 1e-9);
            assert!((lhs.y - rhs.y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_net_force_and_tension_torque() {
        let c = ClosedCurve::ellipse(Vec2::new(1.0, 2.0), 1.0, 3.0, 0.5, 64).unwrap();
        let mut state = VesicleState::new(c, 5.0, 1.0).unwrap();
        for i in 0..64 {
            state.sigma[i] = 0.5 + 0.3 * (TWO_PI * i as f64 / 64.0).sin();
        }
        let g = state.curve.geometry().unwrap();
        let f = traction(&state).unwrap();
        let mut net = Vec2::ZERO;
        for (fi, w) in f.iter().zip(&g.arc_weight) {
            net = net + *fi * *w;
        }
        assert!(net.norm() < 1e-8, "net force {:?}", net);

        // ∮ x × (σ x_s)_s ds = 0
        let tens = tension_apply(&state.curve, &state.sigma).unwrap();
        let mut torque = 0.0;
        for ((p, ti), w) in state.curve.nodes().zip(&tens).zip(&g.arc_weight) {
            torque += p.cross(*ti) * w;
        }
        assert!(torque.abs() < 1e-8, "tension torque {torque}");
    }

    #[test]
    fn state_validation() {
        let c = unit_circle(16);
        assert!(VesicleState::new(c.clone(), 0.0, 1.0).is_err());
        assert!(VesicleState::new(c.clone(), 1.0, -2.0).is_err());
        assert!(VesicleState::new(c, 4.0, 1.0).is_ok());
    }

    #[test]
    fn operator_linearity_in_field() {
        let c = ClosedCurve::ellipse(Vec2::ZERO, 2.0, 1.0, 0.0, 32).unwrap();
        let f: Vec<Vec2> = (0..32)
            .map(|i| {
                let t = TWO_PI * i as f64 / 32.0;
                Vec2::new(t.sin(), (2.0 * t).cos())
            })
            .collect();
        let g: Vec<Vec2> = (0..32)
            .map(|i| {
                let t = TWO_PI * i as f64 / 32.0;
                Vec2::new((3.0 * t).cos(), t.sin() * t.cos())
            })
            .collect();
        let combo: Vec<Vec2> = f.iter().zip(&g).map(|(a, b)| *a * 2.0 + *b * -0.5).collect();

        let bf = bending_apply(&c, 1.0, &f).unwrap();
        let bg = bending_apply(&c, 1.0, &g).unwrap();
        let bc = bending_apply(&c, 1.0, &combo).unwrap();
        for i in 0..32 {
            let expect = bf[i] * 2.0 + bg[i] * -0.5;
            assert!((bc[i].x - expect.x).abs() < 1e-9);
            assert!((bc[i].y - expect.y).abs() < 1e-9);
        }

        let df = surface_divergence(&c, &f).unwrap();
        let dg = surface_divergence(&c, &g).unwrap();
        let dc = surface_divergence(&c, &combo).unwrap();
        for i in 0..32 {
            assert!((dc[i] - (2.0 * df[i] - 0.5 * dg[i])).abs() < 1e-11);
        }
    }
}
