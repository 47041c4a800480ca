//! Dense matrices, LU factorization, and a preconditioned GMRES driver.
//!
//! System sizes here are a few thousand unknowns at most (M vesicles times
//! 3N per vesicle), so dense block factorizations and full Krylov spaces
//! are affordable and the implementation favors clarity.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, FloatExt};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Mat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = math::dot(self.row(i), x);
        }
    }

    /// `y += s * A x`.
    pub fn matvec_add(&self, s: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += s * math::dot(self.row(i), x);
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.ncols, other.nrows);
        let mut out = Mat::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                math::axpy(aik, src, dst);
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

impl core::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Mat,
    piv: Vec<usize>,
}

impl Lu {
    pub fn factor(mut a: Mat) -> Result<Lu> {
        assert_eq!(a.nrows, a.ncols);
        let n = a.nrows;
        let mut piv = vec![0usize; n];
        let scale_ref = a.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 || best < 1e-14 * scale_ref * f64::EPSILON {
                return Err(Error::geometry("singular matrix in LU factorization"));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
            }
            let inv = 1.0 / a[(k, k)];
            for i in k + 1..n {
                let lik = a[(i, k)] * inv;
                a[(i, k)] = lik;
                if lik != 0.0 {
                    let (head, tail) = a.data.split_at_mut(i * n);
                    let row_k = &head[k * n + k + 1..k * n + n];
                    let row_i = &mut tail[k + 1..n];
                    math::axpy(-lik, row_k, row_i);
                }
            }
        }
        Ok(Lu { lu: a, piv })
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.lu.nrows;
        debug_assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..n {
                    b[i] -= self.lu[(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * b[j];
            }
            b[i] = s / self.lu[(i, i)];
        }
    }
}

/// A linear operator in matrix-free form.
pub trait LinOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinOp for Mat {
    fn dim(&self) -> usize {
        self.nrows
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

/// Outcome of a GMRES solve; `converged` is false when the iteration cap was
/// reached, in which case `x` holds the best iterate found.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Solve `A x = b` by left-preconditioned GMRES.
///
/// Convergence is declared when the preconditioned relative residual
/// `||M⁻¹(b − Ax)|| / ||M⁻¹b||` drops below `tol`. With an exact
/// preconditioner the iteration terminates after a single step. `restart`
/// bounds the Krylov space per cycle; `None` keeps the full space, which
/// is affordable at the system sizes used here.
pub fn gmres(
    op: &dyn LinOp,
    precond: Option<&dyn LinOp>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    restart: Option<usize>,
) -> GmresOutcome {
    let n = op.dim();
    debug_assert_eq!(b.len(), n);

    let apply_precond = |v: &[f64], out: &mut Vec<f64>| {
        out.resize(n, 0.0);
        match precond {
            Some(m) => m.apply(v, out),
            None => out.copy_from_slice(v),
        }
    };

    let mut pb = Vec::new();
    apply_precond(b, &mut pb);
    let pb_norm = math::norm(&pb);
    if pb_norm == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }

    let mut x = vec![0.0; n];
    let mut total_iterations = 0;
    let mut rel;
    let cycle_len = restart.unwrap_or(max_iter).max(1);

    'cycles: loop {
        // Residual of the current iterate; x = 0 on the first cycle.
        let mut pr = if total_iterations == 0 {
            pb.clone()
        } else {
            let mut ax = vec![0.0; n];
            op.apply(&x, &mut ax);
            for (axi, bi) in ax.iter_mut().zip(b) {
                *axi = bi - *axi;
            }
            let mut out = Vec::new();
            apply_precond(&ax, &mut out);
            out
        };
        let r_norm = math::norm(&pr);
        rel = r_norm / pb_norm;
        if rel < tol {
            break;
        }

        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in &mut pr {
            *v /= r_norm;
        }
        basis.push(pr);

        let mut h: Vec<Vec<f64>> = Vec::new(); // h[k] holds column k, length k+2
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![r_norm];
        let mut inner = 0;

        while inner < cycle_len && total_iterations < max_iter.min(n) {
            let k = inner;
            inner += 1;
            total_iterations += 1;
            let mut w = vec![0.0; n];
            op.apply(&basis[k], &mut w);
            let mut pw = Vec::new();
            apply_precond(&w, &mut pw);

            let mut col = vec![0.0; k + 2];
            for (j, vj) in basis.iter().enumerate() {
                let hj = math::dot(vj, &pw);
                col[j] = hj;
                math::axpy(-hj, vj, &mut pw);
            }
            let wnorm = math::norm(&pw);
            col[k + 1] = wnorm;

            // Apply accumulated Givens rotations, then a fresh one.
            for j in 0..k {
                let t = cs[j] * col[j] + sn[j] * col[j + 1];
                col[j + 1] = -sn[j] * col[j] + cs[j] * col[j + 1];
                col[j] = t;
            }
            let (c, s) = givens(col[k], col[k + 1]);
            cs.push(c);
            sn.push(s);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(col);

            rel = g[k + 1].abs() / pb_norm;
            let breakdown = wnorm < 1e-300;
            if !breakdown {
                for v in &mut pw {
                    *v /= wnorm;
                }
                basis.push(pw);
            }
            if rel < tol || breakdown {
                break;
            }
        }

        // Back-substitute H y = g and accumulate x += V y.
        let k = inner;
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = if h[i][i].abs() > 1e-300 {
                s / h[i][i]
            } else {
                0.0
            };
        }
        for (j, yj) in y.iter().enumerate() {
            math::axpy(*yj, &basis[j], &mut x);
        }

        if rel < tol || total_iterations >= max_iter.min(n) {
            break 'cycles;
        }
    }

    GmresOutcome {
        x,
        iterations: total_iterations,
        residual: rel,
        converged: rel < tol,
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn random_mat(n: usize, seed: &mut u64) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = next_unit(seed) - 0.5;
            }
            m[(i, i)] += n as f64; // diagonally dominant
        }
        m
    }

    fn next_unit(state: &mut u64) -> f64 {
        // splitmix64, unit interval
        *state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z = z ^ (z >> 31);
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn lu_roundtrip() {
        let mut seed = 7;
        let a = random_mat(12, &mut seed);
        let x_true: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; 12];
        a.matvec(&x_true, &mut b);
        let lu = Lu::factor(a).unwrap();
        lu.solve(&mut b);
        for (xi, ti) in b.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let mut a = Mat::zeros(3, 3);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0; // third row all zero
        assert!(Lu::factor(a).is_err());
    }

    #[test]
    fn gmres_zero_rhs() {
        let a = Mat::identity(5);
        let out = gmres(&a, None, &[0.0; 5], 1e-12, 50, None);
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gmres_identity_one_iteration() {
        let a = Mat::identity(6);
        let b: Vec<f64> = (0..6).map(|i| i as f64 + 1.0).collect();
        let out = gmres(&a, None, &b, 1e-12, 50, None);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        for (xi, bi) in out.x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn gmres_matches_dense_solve() {
        let mut seed = 42;
        let n = 48;
        let a = random_mat(n, &mut seed);
        let b: Vec<f64> = (0..n).map(|_| next_unit(&mut seed) - 0.5).collect();

        let mut expect = b.clone();
        Lu::factor(a.clone()).unwrap().solve(&mut expect);

        let out = gmres(&a, None, &b, 1e-12, 200, None);
        assert!(out.converged);
        for (xi, ei) in out.x.iter().zip(&expect) {
            assert!((xi - ei).abs() < 1e-8, "{xi} vs {ei}");
        }
    }

    #[test]
    fn gmres_exact_preconditioner_single_iteration() {
        let mut seed = 3;
        let n = 24;
        let a = random_mat(n, &mut seed);
        let b: Vec<f64> = (0..n).map(|_| next_unit(&mut seed)).collect();

        struct Inverse(Lu);
        impl LinOp for Inverse {
            fn dim(&self) -> usize {
                self.0.lu.nrows()
            }
            fn apply(&self, x: &[f64], y: &mut [f64]) {
                y.copy_from_slice(x);
                self.0.solve(y);
            }
        }
        let pre = Inverse(Lu::factor(a.clone()).unwrap());
        let out = gmres(&a, Some(&pre), &b, 1e-10, 50, None);
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn gmres_restarted_still_converges() {
        let mut seed = 5;
        let n = 40;
        let a = random_mat(n, &mut seed);
        let b: Vec<f64> = (0..n).map(|_| next_unit(&mut seed) - 0.5).collect();
        let full = gmres(&a, None, &b, 1e-11, 400, None);
        let cycled = gmres(&a, None, &b, 1e-11, 400, Some(8));
        assert!(full.converged && cycled.converged);
        for (xi, yi) in full.x.iter().zip(&cycled.x) {
            assert!((xi - yi).abs() < 1e-8);
        }
    }

    #[test]
    fn gmres_reports_nonconvergence() {
        let mut seed = 11;
        let n = 30;
        let a = random_mat(n, &mut seed);
        let b: Vec<f64> = (0..n).map(|_| next_unit(&mut seed)).collect();
        let out = gmres(&a, None, &b, 1e-14, 2, None);
        assert!(!out.converged);
        assert!(out.residual > 0.0);
        assert_eq!(out.iterations, 2);
    }
}
