//! Compressed sparse rows and Jacobi-preconditioned Krylov solvers.
//!
//! Stopping uses a weighted max-norm of the true residual, so the contract
//! is "every cell equation holds to `tol`", independent of the method.

/// A square linear map with an available diagonal.
pub trait LinearOperator {
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Default)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are summed
    /// and zeros kept so the sparsity pattern is stable.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .find(|&k| self.col_idx[k] == r)
                    .map_or(0.0, |k| self.values[k])
            })
            .collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.col_idx[k] == c)
            .map_or(0.0, |k| self.values[k])
    }

    /// Largest `|a_rc − a_cr|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }
}

impl LinearOperator for CsrMatrix {
    fn len(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }
    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Conjugate gradients; requires a symmetric positive definite matrix.
    Cg,
    BiCgStab,
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Weighted max-norm of the true residual at exit.
    pub residual: f64,
    pub converged: bool,
    /// Set when the method broke down (e.g. non-positive curvature in CG).
    pub breakdown: Option<String>,
}

fn weighted_max(r: &[f64], w: &[f64]) -> f64 {
    r.iter().zip(w).fold(0.0, |m, (a, b)| m.max((a * b).abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual<A: LinearOperator + ?Sized>(a: &A, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Solves `A x = b` from the initial guess in `x` until
/// `max_i |w_i (b − A x)_i| ≤ tol`.
pub fn solve<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    weights: &[f64],
    tol: f64,
    max_iter: usize,
    method: Method,
) -> KrylovOutcome {
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut total = 0;
    let mut last = KrylovOutcome {
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
        breakdown: None,
    };
    // Restarts refresh the recursively updated residual against the true one.
    for _ in 0..8 {
        let budget = max_iter.saturating_sub(total);
        if budget == 0 {
            break;
        }
        last = match method {
            Method::Cg => pcg(a, b, x, &inv_diag, weights, tol, budget),
            Method::BiCgStab => bicgstab(a, b, x, &inv_diag, weights, tol, budget),
        };
        total += last.iterations;
        let mut r = vec![0.0; a.len()];
        true_residual(a, x, b, &mut r);
        last.residual = weighted_max(&r, weights);
        if last.residual <= tol || last.breakdown.is_some() {
            break;
        }
    }
    last.iterations = total;
    last.converged = last.residual <= tol && last.breakdown.is_none();
    last
}

fn pcg<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    w: &[f64],
    tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = a.len();
    let mut r = vec![0.0; n];
    true_residual(a, x, b, &mut r);
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    while it < max_iter {
        if weighted_max(&r, w) <= tol {
            break;
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return KrylovOutcome {
                iterations: it,
                residual: weighted_max(&r, w),
                converged: false,
                breakdown: Some(format!("non-positive curvature pᵀAp = {pap:e}")),
            };
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        it += 1;
    }
    KrylovOutcome {
        iterations: it,
        residual: weighted_max(&r, w),
        converged: false,
        breakdown: None,
    }
}

fn bicgstab<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    inv_diag: &[f64],
    w: &[f64],
    tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = a.len();
    let mut r = vec![0.0; n];
    true_residual(a, x, b, &mut r);
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut it = 0;
    let breakdown = |it, r: &[f64], msg: String| KrylovOutcome {
        iterations: it,
        residual: weighted_max(r, w),
        converged: false,
        breakdown: Some(msg),
    };
    while it < max_iter {
        if weighted_max(&r, w) <= tol {
            break;
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return breakdown(it, &r, "rho breakdown".into());
        }
        if it == 0 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
        }
        rho = rho_new;
        for k in 0..n {
            y[k] = p[k] * inv_diag[k];
        }
        a.apply(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return breakdown(it, &r, "alpha breakdown".into());
        }
        alpha = rho / rv;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if weighted_max(&s, w) <= tol {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            r.copy_from_slice(&s);
            it += 1;
            break;
        }
        for k in 0..n {
            z[k] = s[k] * inv_diag[k];
        }
        a.apply(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return breakdown(it, &r, "omega breakdown".into());
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        it += 1;
        if omega == 0.0 || !omega.is_finite() {
            return breakdown(it, &r, "omega vanished".into());
        }
    }
    KrylovOutcome {
        iterations: it,
        residual: weighted_max(&r, w),
        converged: false,
        breakdown: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![(i, 2.0 + shift)];
                if i > 0 {
                    row.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    row.push((i + 1, -1.0));
                }
                row
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    #[test]
    fn cg_and_bicgstab_agree() {
        let a = laplace_1d(50, 0.0);
        let b = vec![1.0; 50];
        let w = vec![1.0; 50];
        let mut x1 = vec![0.0; 50];
        let mut x2 = vec![0.0; 50];
        let o1 = solve(&a, &b, &mut x1, &w, 1e-12, 1000, Method::Cg);
        let o2 = solve(&a, &b, &mut x2, &w, 1e-12, 1000, Method::BiCgStab);
        assert!(o1.converged && o2.converged);
        for k in 0..50 {
            // x_k = (k+1)(n-k)/2 for the discrete Poisson problem.
            let exact = (k as f64 + 1.0) * (50.0 - k as f64) / 2.0;
            assert!((x1[k] - exact).abs() < 1e-8);
            assert!((x2[k] - exact).abs() < 1e-8);
        }
        assert!(a.asymmetry() == 0.0);
    }

    #[test]
    fn cg_detects_indefiniteness() {
        let a = laplace_1d(40, -1.0);
        let b = vec![1.0; 40];
        let mut x = vec![0.0; 40];
        let o = solve(&a, &b, &mut x, &[1.0; 40], 1e-12, 1000, Method::Cg);
        assert!(!o.converged);
        assert!(o.breakdown.is_some());
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 1.0), (0, 2.0), (1, 1.0)], vec![(1, 4.0)]]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.diagonal(), vec![3.0, 4.0]);
    }
}
