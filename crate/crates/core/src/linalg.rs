//! Compressed sparse rows and a Jacobi-preconditioned BiCGSTAB, sized for
//! the nonsymmetric stencil matrices of this crate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&k| self.cols[k] == i).map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    /// `‖b − Ax‖∞` (NaN if any entry is NaN).
    pub fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.mul_vec(x, &mut ax);
        ax.iter().zip(b).map(|(a, b)| (b - a).abs()).fold(0.0, |m, r| if r > m || r.is_nan() { r } else { m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `Ax = b` from the initial guess in `x` until `‖b − Ax‖∞ ≤ tol`.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iters: usize) -> Result<SolveStats> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = inv_diag[i] * v[i];
        }
    };
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let norm_inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m });
    let mut res = norm_inf(&r);
    if res <= tol {
        return Ok(SolveStats { iterations: 0, residual: res });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearSolveFailure(format!("BiCGSTAB breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut y);
        a.mul_vec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        if !alpha.is_finite() {
            return Err(Error::LinearSolveFailure(format!("BiCGSTAB breakdown at iteration {it}")));
        }
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm_inf(&s) <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            res = a.residual_inf(x, b);
            if res <= tol {
                return Ok(SolveStats { iterations: it, residual: res });
            }
            if res.is_nan() {
                break;
            }
            a.mul_vec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
            continue;
        }
        precond(&s, &mut z);
        a.mul_vec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm_inf(&r);
        if !res.is_finite() {
            return Err(Error::LinearSolveFailure("residual is not finite".into()));
        }
        if res <= tol {
            // guard against drift of the recursive residual
            res = a.residual_inf(x, b);
            if res <= tol {
                return Ok(SolveStats { iterations: it, residual: res });
            }
            a.mul_vec(x, &mut r);
            for i in 0..n {
                r[i] = b[i] - r[i];
            }
        }
    }
    Err(Error::LinearSolveFailure(format!("no convergence in {max_iters} iterations (residual {res:e})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 1.0), (1, 2.0), (0, 3.0)], vec![(1, 5.0)]]);
        assert_eq!(a.diagonal(), vec![4.0, 5.0]);
        let mut out = vec![0.0; 2];
        a.mul_vec(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![6.0, 5.0]);
    }

    #[test]
    fn solves_nonsymmetric_diagonally_dominant_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = (0..4).map(|_| (rng.random_range(0..n), rng.random_range(-1.0..1.0))).collect();
                row.push((i, 6.0));
                row
            })
            .collect();
        let a = CsrMatrix::from_rows(rows);
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&truth, &mut b);
        let mut x = vec![0.0; n];
        let stats = bicgstab(&a, &b, &mut x, 1e-12, 500).unwrap();
        assert!(stats.residual <= 1e-12);
        assert!(x.iter().zip(&truth).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 2.0)], vec![(1, 3.0)]]);
        let mut x = vec![0.0; 2];
        assert_eq!(bicgstab(&a, &[0.0, 0.0], &mut x, 1e-10, 10).unwrap().iterations, 0);
    }

    #[test]
    fn singular_system_fails() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let mut x = vec![0.0; 2];
        assert!(matches!(bicgstab(&a, &[1.0, 0.0], &mut x, 1e-10, 50), Err(Error::LinearSolveFailure(_))));
    }
}
