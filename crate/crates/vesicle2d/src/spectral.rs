//! Fourier-spectral machinery on equispaced periodic grids.
//!
//! Everything is built on a direct real DFT with precomputed trigonometric
//! tables. Grid sizes are at most a few hundred nodes, so the O(N²)
//! transform is not a bottleneck and keeps the crate free of an FFT
//! dependency (the mixed-radix sizes used here, e.g. N = 96, rule out a
//! plain radix-2 implementation).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::FloatExt;

pub const TWO_PI: f64 = 2.0 * core::f64::consts::PI;

/// Real trigonometric transform tables for one grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectral {
    n: usize,
    cos_tab: Vec<f64>,
    sin_tab: Vec<f64>,
}

/// Half-complex Fourier coefficients of a real sequence: `f(θ) = a[0] +
/// Σ_{k=1}^{n/2-1} (a[k] cos kθ + b[k] sin kθ) + a[n/2] cos(nθ/2)`.
#[derive(Debug, Clone)]
pub struct Coeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "grid size must be even");
        // Fill one quadrant and mirror so the symmetries cos(2π-t) = cos t,
        // cos(π±t) = -cos t (and the sine analogues) hold bit-exactly;
        // full-period sums of table entries then cancel exactly.
        let mut cos_tab = vec![0.0; n];
        let mut sin_tab = vec![0.0; n];
        for m in 0..=n / 4 {
            let t = TWO_PI * m as f64 / n as f64;
            cos_tab[m] = t.cos();
            sin_tab[m] = t.sin();
        }
        for m in 0..=n / 4 {
            let (c, s) = (cos_tab[m], sin_tab[m]);
            let half = n / 2;
            if half >= m {
                cos_tab[half - m] = -c;
                sin_tab[half - m] = s;
            }
            if half + m < n {
                cos_tab[half + m] = -c;
                sin_tab[half + m] = -s;
            }
            if m > 0 {
                cos_tab[n - m] = c;
                sin_tab[n - m] = -s;
            }
        }
        cos_tab[0] = 1.0;
        sin_tab[0] = 0.0;
        if n % 4 == 0 {
            cos_tab[n / 4] = 0.0;
            sin_tab[n / 4] = 1.0;
            cos_tab[3 * n / 4] = 0.0;
            sin_tab[3 * n / 4] = -1.0;
        }
        Spectral { n, cos_tab, sin_tab }
    }

    /// Grid size N.
    pub fn size(&self) -> usize {
        self.n
    }

    /// Node parameter values θ_i = 2πi/N.
    pub fn theta(&self, i: usize) -> f64 {
        TWO_PI * i as f64 / self.n as f64
    }

    /// Forward transform of a real sequence sampled at the grid nodes.
    pub fn forward(&self, f: &[f64]) -> Coeffs {
        let n = self.n;
        debug_assert_eq!(f.len(), n);
        let half = n / 2;
        let mut a = vec![0.0; half + 1];
        let mut b = vec![0.0; half + 1];
        for k in 0..=half {
            let mut sa = 0.0;
            let mut sb = 0.0;
            for (j, fj) in f.iter().enumerate() {
                let idx = (k * j) % n;
                sa += fj * self.cos_tab[idx];
                sb += fj * self.sin_tab[idx];
            }
            let scale = if k == 0 || k == half { 1.0 } else { 2.0 };
            a[k] = scale * sa / n as f64;
            b[k] = scale * sb / n as f64;
        }
        b[0] = 0.0;
        b[half] = 0.0;
        Coeffs { a, b }
    }

    /// Inverse transform back to the grid nodes.
    pub fn inverse(&self, c: &Coeffs) -> Vec<f64> {
        let n = self.n;
        let half = n / 2;
        let mut f = vec![0.0; n];
        for (j, fj) in f.iter_mut().enumerate() {
            let mut s = c.a[0];
            for k in 1..half {
                let idx = (k * j) % n;
                s += c.a[k] * self.cos_tab[idx] + c.b[k] * self.sin_tab[idx];
            }
            s += c.a[half] * self.cos_tab[(half * j) % n];
            *fj = s;
        }
        f
    }

    /// Spectral derivative of the trigonometric interpolant at the nodes.
    /// The Nyquist mode is zeroed for odd orders.
    pub fn derivative(&self, f: &[f64], order: usize) -> Vec<f64> {
        let mut c = self.forward(f);
        differentiate_coeffs(&mut c, order);
        self.inverse(&c)
    }

    /// Evaluate the interpolant of `f` at the nodes of `target` (typically a
    /// finer grid of the same period).
    pub fn resample(&self, f: &[f64], target: &Spectral) -> Vec<f64> {
        let c = self.forward(f);
        let half = self.n / 2;
        let m = target.n;
        let mut out = vec![0.0; m];
        for (jj, oj) in out.iter_mut().enumerate() {
            let mut s = c.a[0];
            for k in 1..half {
                let idx = (k * jj) % m;
                s += c.a[k] * target.cos_tab[idx] + c.b[k] * target.sin_tab[idx];
            }
            s += c.a[half] * target.cos_tab[(half * jj) % m];
            *oj = s;
        }
        out
    }

    /// Build the N×N matrix of `derivative(·, order)`.
    pub fn derivative_matrix(&self, order: usize) -> crate::linalg::Mat {
        let n = self.n;
        let mut m = crate::linalg::Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.derivative(&e, order);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Circulant quadrature weights for the periodic log kernel:
    /// `∫₀^{2π} -ln(2 sin((θ_i - τ)/2)) g(τ) dτ ≈ Σ_j w[(i-j) mod N] g(θ_j)`.
    ///
    /// The rule integrates the trigonometric interpolant of `g` exactly
    /// against the kernel, using `-ln(2 sin(s/2)) = Σ_{k≥1} cos(ks)/k`.
    pub fn log_kernel_weights(&self) -> Vec<f64> {
        let n = self.n;
        let half = n / 2;
        let mut w = vec![0.0; n];
        for (m, wm) in w.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 1..half {
                s += self.cos_tab[(k * m) % n] / k as f64;
            }
            s += self.cos_tab[(half * m) % n] / n as f64;
            *wm = TWO_PI * s / n as f64;
        }
        w
    }
}

/// Differentiate half-complex coefficients in place.
pub fn differentiate_coeffs(c: &mut Coeffs, order: usize) {
    let half = c.a.len() - 1;
    if order == 0 {
        return;
    }
    c.a[0] = 0.0;
    for k in 1..half {
        let kf = k as f64;
        let factor = kf.powi(order as i32);
        let (a, b) = (c.a[k], c.b[k]);
        let (na, nb) = match order % 4 {
            0 => (a, b),
            1 => (b, -a),
            2 => (-a, -b),
            _ => (-b, a),
        };
        c.a[k] = factor * na;
        c.b[k] = factor * nb;
    }
    if order % 2 == 1 {
        c.a[half] = 0.0;
    } else {
        let kf = half as f64;
        let sign = if order % 4 == 0 { 1.0 } else { -1.0 };
        c.a[half] *= sign * kf.powi(order as i32);
    }
    c.b[half] = 0.0;
}

/// Evaluate half-complex coefficients (and optionally a derivative of the
/// interpolant) at an arbitrary angle.
pub fn eval_coeffs(c: &Coeffs, theta: f64, order: usize) -> f64 {
    let half = c.a.len() - 1;
    let mut s = if order == 0 { c.a[0] } else { 0.0 };
    for k in 1..=half {
        let kf = k as f64;
        let factor = kf.powi(order as i32);
        let (mut a, mut b) = (c.a[k], c.b[k]);
        if k == half && order % 2 == 1 {
            // Odd derivatives of the Nyquist mode vanish at the nodes and are
            // dropped off-grid as well, matching `differentiate_coeffs`.
            continue;
        }
        match order % 4 {
            0 => {}
            1 => {
                let t = a;
                a = b;
                b = -t;
            }
            2 => {
                a = -a;
                b = -b;
            }
            _ => {
                let t = a;
                a = -b;
                b = t;
            }
        }
        s += factor * (a * (kf * theta).cos() + b * (kf * theta).sin());
    }
    s
}

/// Spectral derivative of a periodic real sequence of even length.
///
/// This is the standalone entry point; hot paths use [`Spectral`] so the
/// trigonometric tables are reused.
pub fn fourier_derivative(values: &[f64], order: usize) -> Result<Vec<f64>> {
    if values.len() < 2 || values.len() % 2 != 0 {
        return Err(Error::invalid("sequence length must be even and >= 2"));
    }
    if order == 0 {
        return Err(Error::invalid("derivative order must be >= 1"));
    }
    Ok(Spectral::new(values.len()).derivative(values, order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::FloatExt;
    use alloc::vec::Vec;

    fn sample(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|i| f(TWO_PI * i as f64 / n as f64)).collect()
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn derivative_of_sine_is_cosine() {
        let n = 32;
        let f = sample(n, |t| t.sin());
        let expect = sample(n, |t| t.cos());
        let d = fourier_derivative(&f, 1).unwrap();
        assert!(max_err(&d, &expect) <= 1e-12);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let f = vec![3.25; 16];
        for order in 1..=4 {
            let d = fourier_derivative(&f, order).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn fourth_derivative_eigenfunction() {
        let n = 32;
        let f = sample(n, |t| (3.0 * t).sin());
        let expect: Vec<f64> = f.iter().map(|v| 81.0 * v).collect();
        let d = fourier_derivative(&f, 4).unwrap();
        assert!(max_err(&d, &expect) <= 1e-10);
    }

    #[test]
    fn first_derivative_twice_matches_second() {
        let n = 64;
        let f = sample(n, |t| (2.0 * t).sin() + 0.3 * (5.0 * t).cos() + 1.0);
        let d1 = fourier_derivative(&f, 1).unwrap();
        let d11 = fourier_derivative(&d1, 1).unwrap();
        let d2 = fourier_derivative(&f, 2).unwrap();
        assert!(max_err(&d11, &d2) <= 1e-10);
    }

    #[test]
    fn rejects_odd_length_and_zero_order() {
        assert!(fourier_derivative(&[1.0, 2.0, 3.0], 1).is_err());
        assert!(fourier_derivative(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let n = 24;
        let f = sample(n, |t| t.sin() + 0.5 * (7.0 * t).cos() - 2.0);
        let sp = Spectral::new(n);
        let back = sp.inverse(&sp.forward(&f));
        assert!(max_err(&back, &f) <= 1e-13);
    }

    #[test]
    fn resample_matches_analytic() {
        let n = 16;
        let sp = Spectral::new(n);
        let fine = Spectral::new(4 * n);
        let f = sample(n, |t| (3.0 * t).cos() - 0.2 * t.sin());
        let up = sp.resample(&f, &fine);
        let expect = sample(4 * n, |t| (3.0 * t).cos() - 0.2 * t.sin());
        assert!(max_err(&up, &expect) <= 1e-12);
    }

    #[test]
    fn eval_coeffs_off_grid() {
        let n = 32;
        let sp = Spectral::new(n);
        let f = sample(n, |t| (2.0 * t).sin() + 0.1 * (4.0 * t).cos());
        let c = sp.forward(&f);
        for &theta in &[0.123, 1.77, 4.56] {
            let v = eval_coeffs(&c, theta, 0);
            let expect = (2.0 * theta).sin() + 0.1 * (4.0 * theta).cos();
            assert!((v - expect).abs() < 1e-12);
            let dv = eval_coeffs(&c, theta, 1);
            let dexpect = 2.0 * (2.0 * theta).cos() - 0.4 * (4.0 * theta).sin();
            assert!((dv - dexpect).abs() < 1e-11);
        }
    }

    #[test]
    fn log_kernel_weights_integrate_cosines() {
        // ∫ -ln(2 sin(s/2)) cos(ks) ds = π/k for k ≥ 1, and 0 for k = 0.
        let n = 64;
        let sp = Spectral::new(n);
        let w = sp.log_kernel_weights();
        for k in 0..(n / 2) {
            let g = sample(n, |t| (k as f64 * t).cos());
            // target node i = 0, so the weight index is (0 - j) mod n
            let quad: f64 = (0..n).map(|j| w[(n - j) % n] * g[j]).sum();
            let expect = if k == 0 {
                0.0
            } else {
                core::f64::consts::PI / k as f64
            };
            assert!(
                (quad - expect).abs() < 1e-12,
                "mode {k}: {quad} vs {expect}"
            );
        }
    }

    #[test]
    fn log_kernel_weights_are_symmetric() {
        let sp = Spectral::new(32);
        let w = sp.log_kernel_weights();
        for m in 1..32 {
            assert!((w[m] - w[32 - m]).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_matrix_matches_function() {
        let n = 16;
        let sp = Spectral::new(n);
        let d = sp.derivative_matrix(2);
        let f = sample(n, |t| (3.0 * t).sin() + (2.0 * t).cos());
        let mut via_mat = vec![0.0; n];
        d.matvec(&f, &mut via_mat);
        let via_fn = sp.derivative(&f, 2);
        assert!(max_err(&via_mat, &via_fn) <= 1e-11);
    }
}
