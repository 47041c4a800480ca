//! Fourier-spectral representation of closed planar curves.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{FloatExt, Vec2};
use crate::spectral::{Spectral, TWO_PI};

/// Minimum admissible number of nodes; resolves the fourth-derivative
/// bending operator without the Nyquist mode dominating.
pub const MIN_NODES: usize = 8;

/// A closed curve sampled at N equispaced parameter values θ_i = 2πi/N.
///
/// Curves are stored counterclockwise; the constructor reverses the node
/// order if the signed area is negative, so the outward normal convention
/// is uniform across the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    x: Vec<f64>,
    y: Vec<f64>,
    spectral: Spectral,
}

/// Pointwise differential geometry of a curve.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    /// Unit tangent x_θ/|x_θ|.
    pub tangent: Vec<Vec2>,
    /// Unit outward normal (tangent rotated by -π/2).
    pub normal: Vec<Vec2>,
    /// Signed curvature (x_θ × x_θθ)/|x_θ|³; positive for a
    /// counterclockwise convex curve.
    pub curvature: Vec<f64>,
    /// Parameterization Jacobian |x_θ|.
    pub jacobian: Vec<f64>,
    /// Arclength quadrature weight per node, |x_θ|·2π/N.
    pub arc_weight: Vec<f64>,
}

impl ClosedCurve {
    /// Build a curve from node coordinates. Fails for short/odd grids,
    /// non-finite input, or a degenerate parameterization.
    pub fn new(mut x: Vec<f64>, mut y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid("coordinate arrays differ in length"));
        }
        let n = x.len();
        if n < MIN_NODES || n % 2 != 0 {
            return Err(Error::invalid(format!(
                "need an even number of nodes >= {MIN_NODES}, got {n}"
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite node coordinate"));
        }
        // Polygonal signed area is enough to detect orientation.
        let mut signed = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            signed += x[i] * y[j] - x[j] * y[i];
        }
        if signed < 0.0 {
            // Reverse orientation while keeping node 0 in place.
            let rev = |v: &mut Vec<f64>| {
                let old = v.clone();
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi = old[(n - i) % n];
                }
            };
            rev(&mut x);
            rev(&mut y);
        }
        let curve = ClosedCurve {
            x,
            y,
            spectral: Spectral::new(n),
        };
        // Reject degenerate parameterizations up front.
        curve.jacobian()?;
        Ok(curve)
    }

    /// Circle of radius `r` about `center`.
    pub fn circle(center: Vec2, r: f64, n: usize) -> Result<Self> {
        if r <= 0.0 {
            return Err(Error::invalid("circle radius must be positive"));
        }
        Self::parametric(center, n, |t| Vec2::new(r * t.cos(), r * t.sin()))
    }

    /// Axis-aligned ellipse x(θ) = (a cos θ, b sin θ), rotated by `rotation`
    /// and shifted to `center`.
    pub fn ellipse(center: Vec2, a: f64, b: f64, rotation: f64, n: usize) -> Result<Self> {
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::invalid("ellipse semi-axes must be positive"));
        }
        Self::parametric(center, n, |t| {
            Vec2::new(a * t.cos(), b * t.sin()).rotated(rotation)
        })
    }

    fn parametric(center: Vec2, n: usize, f: impl Fn(f64) -> Vec2) -> Result<Self> {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let p = f(TWO_PI * i as f64 / n as f64) + center;
            x.push(p.x);
            y.push(p.y);
        }
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.x
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn node(&self, i: usize) -> Vec2 {
        Vec2::new(self.x[i], self.y[i])
    }

    pub fn nodes(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.x.iter().zip(&self.y).map(|(&x, &y)| Vec2::new(x, y))
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Replace the node coordinates, keeping the transform tables.
    /// The new positions must be finite; orientation is assumed unchanged
    /// (time stepping cannot flip a non-self-intersecting curve).
    pub fn set_nodes(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.x.len() || y.len() != self.y.len() {
            return Err(Error::invalid("node count change is not supported"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite node coordinate"));
        }
        self.x.copy_from_slice(x);
        self.y.copy_from_slice(y);
        Ok(())
    }

    fn jacobian(&self) -> Result<Vec<f64>> {
        let xt = self.spectral.derivative(&self.x, 1);
        let yt = self.spectral.derivative(&self.y, 1);
        let mut j = Vec::with_capacity(self.len());
        for (a, b) in xt.iter().zip(&yt) {
            let v = a.hypot(*b);
            if !(v > 1e-12) {
                return Err(Error::geometry(format!(
                    "Jacobian {v:.3e} below threshold; parameterization degenerate"
                )));
            }
            j.push(v);
        }
        Ok(j)
    }

    /// Tangents, normals, curvature, and arclength weights at the nodes.
    pub fn geometry(&self) -> Result<CurveGeometry> {
        let n = self.len();
        let xt = self.spectral.derivative(&self.x, 1);
        let yt = self.spectral.derivative(&self.y, 1);
        let xtt = self.spectral.derivative(&self.x, 2);
        let ytt = self.spectral.derivative(&self.y, 2);

        let mut tangent = Vec::with_capacity(n);
        let mut normal = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        let mut jacobian = Vec::with_capacity(n);
        let mut arc_weight = Vec::with_capacity(n);
        let h = TWO_PI / n as f64;
        for i in 0..n {
            let d1 = Vec2::new(xt[i], yt[i]);
            let d2 = Vec2::new(xtt[i], ytt[i]);
            let j = d1.norm();
            if !(j > 1e-12) {
                return Err(Error::geometry(format!(
                    "Jacobian {j:.3e} below threshold at node {i}"
                )));
            }
            let t = d1 * (1.0 / j);
            tangent.push(t);
            normal.push(Vec2::new(t.y, -t.x));
            curvature.push(d1.cross(d2) / (j * j * j));
            jacobian.push(j);
            arc_weight.push(j * h);
        }
        Ok(CurveGeometry {
            tangent,
            normal,
            curvature,
            jacobian,
            arc_weight,
        })
    }

    /// Repeated arclength derivative d/ds = (1/|x_θ|) d/dθ of a nodal field.
    pub fn arclength_derivative(&self, values: &[f64], order: usize) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::invalid(format!(
                "field length {} does not match curve size {}",
                values.len(),
                self.len()
            )));
        }
        if order == 0 {
            return Err(Error::invalid("derivative order must be >= 1"));
        }
        let jac = self.jacobian()?;
        let mut v = values.to_vec();
        for _ in 0..order {
            v = self.spectral.derivative(&v, 1);
            for (vi, ji) in v.iter_mut().zip(&jac) {
                *vi /= ji;
            }
        }
        Ok(v)
    }

    /// Enclosed area A = ½∮ x·n ds via the spectrally accurate trapezoid
    /// rule (equals ½∮ (x y_θ - y x_θ) dθ).
    pub fn area(&self) -> f64 {
        let xt = self.spectral.derivative(&self.x, 1);
        let yt = self.spectral.derivative(&self.y, 1);
        let n = self.len() as f64;
        let mut s = 0.0;
        for i in 0..self.len() {
            s += self.x[i] * yt[i] - self.y[i] * xt[i];
        }
        0.5 * s * TWO_PI / n
    }

    /// Perimeter L = ∮ ds.
    pub fn length(&self) -> f64 {
        let xt = self.spectral.derivative(&self.x, 1);
        let yt = self.spectral.derivative(&self.y, 1);
        let n = self.len() as f64;
        let s: f64 = xt.iter().zip(&yt).map(|(a, b)| a.hypot(*b)).sum();
        s * TWO_PI / n
    }

    /// 4πA/L²; equals 1 for a circle.
    pub fn reduced_area(&self) -> f64 {
        let l = self.length();
        2.0 * TWO_PI * self.area() / (l * l)
    }

    /// Arclength-weighted centroid (1/L)∮ x ds.
    pub fn centroid(&self) -> Vec2 {
        let xt = self.spectral.derivative(&self.x, 1);
        let yt = self.spectral.derivative(&self.y, 1);
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut l = 0.0;
        for i in 0..self.len() {
            let j = xt[i].hypot(yt[i]);
            cx += self.x[i] * j;
            cy += self.y[i] * j;
            l += j;
        }
        Vec2::new(cx / l, cy / l)
    }
}
