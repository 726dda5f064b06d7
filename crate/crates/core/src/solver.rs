//! Mixed boundary value problems on sector grids.
//!
//! Finite volumes on the logical grid: each cell balances the fluxes of
//! `a ∇u` through its faces against the source. Interior faces carry the
//! full tensor flux `a (T_ss u_s + T_sθ u_θ)` (resp. `a (T_sθ u_s + T_θθ u_θ)`)
//! with cross derivatives averaged from neighbouring cells. `Γ₀` faces use
//! the two-point flux through the odd ghost `u_ghost = −u`, and wall and
//! vertex faces carry none.
//!
//! Rows are unnormalized (`M u = |cell|`), so on polar grids the operator is
//! symmetric and CG applies; perturbed grids use BiCGSTAB. Fluxes are evaluated from differences, and iterates are kept
//! as a per-ring baseline plus a remainder: near the vertex the angular
//! couplings exceed the cell volume by `O(h⁻³)`, and this keeps the
//! volume-normalized residual above roundoff of the stored values.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{MatrixField, ScalarField, VectorField};
use crate::linalg::{self, CsrMatrix, LinearOperator, Method};
use crate::mesh::SectorGrid;
use crate::profiles::OperatorProfile;

pub const DEFAULT_SCHEDULE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
pub const DEFAULT_GRADIENT_FLOOR: f64 = 1e-8;

const MAX_SWEEPS: usize = 12;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Target for the volume-normalized max residual of the final stage.
    pub tol: f64,
    /// Target for intermediate ε-stages.
    pub stage_tol: f64,
    /// Under-relaxation; `None` picks a profile-dependent default.
    pub omega: Option<f64>,
    pub max_picard: usize,
    pub max_linear: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            stage_tol: 1e-6,
            omega: None,
            max_picard: 400,
            max_linear: 50_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub epsilon: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub linear_iterations: usize,
    /// Discrete max-norm of `L u + 1` (volume-normalized cell residuals).
    pub final_residual: f64,
    pub tolerance: f64,
    pub epsilon_schedule: Vec<f64>,
    pub omega: f64,
    pub method: String,
    pub stages: Vec<StageReport>,
    pub converged: bool,
    pub message: Option<String>,
}

const NONE: usize = usize::MAX;

/// `w (x_a − x_b)`, or `w x_a` when `b` is `NONE`.
#[derive(Debug, Clone, Copy)]
struct Term {
    a: usize,
    b: usize,
    w: f64,
}

impl Term {
    fn diff(a: usize, b: usize, w: f64) -> Self {
        Self { a, b, w }
    }
    fn value(a: usize, w: f64) -> Self {
        Self { a, b: NONE, w }
    }
}

fn eval(terms: &[Term], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            if t.b == NONE {
                t.w * x[t.a]
            } else {
                t.w * (x[t.a] - x[t.b])
            }
        })
        .sum()
}

/// One face of the finite-volume stencil.
#[derive(Debug, Clone)]
struct FaceStencil {
    left: usize,
    /// `None` for Dirichlet faces on `Γ₀`.
    right: Option<usize>,
    /// Flux = a · (cs · u_s + ct · u_θ), face measure included.
    cs: f64,
    ct: f64,
    us: Vec<Term>,
    ut: Vec<Term>,
    t_ss: f64,
    t_st: f64,
    t_tt: f64,
    sqrt_g: f64,
}

impl FaceStencil {
    fn grad_norm(&self, u: &Split) -> f64 {
        let us = eval(&self.us, &u.base) + eval(&self.us, &u.rest);
        let ut = eval(&self.ut, &u.base) + eval(&self.ut, &u.rest);
        let q = (self.t_ss * us * us + 2.0 * self.t_st * us * ut + self.t_tt * ut * ut) / self.sqrt_g;
        q.max(0.0).sqrt()
    }

    fn flux(&self, a: f64, x: &[f64]) -> f64 {
        let mut f = self.cs * eval(&self.us, x);
        if self.ct != 0.0 {
            f += self.ct * eval(&self.ut, x);
        }
        a * f
    }

    /// `(cell, ∂flux/∂x_cell)` for unit coefficient.
    fn gradient_terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.us.iter().map(move |t| (t, self.cs));
        let t = self.ut.iter().map(move |t| (t, self.ct));
        s.chain(t).flat_map(|(t, c)| {
            let first = std::iter::once((t.a, c * t.w));
            let second = (t.b != NONE).then_some((t.b, -c * t.w));
            first.chain(second)
        })
    }
}

/// Iterate stored as a ring-constant baseline (identical values across each
/// ring) plus a remainder.
#[derive(Debug, Clone)]
struct Split {
    nr: usize,
    base: Vec<f64>,
    rest: Vec<f64>,
}

impl Split {
    fn zeros(nr: usize, n: usize) -> Self {
        Self {
            nr,
            base: vec![0.0; n],
            rest: vec![0.0; n],
        }
    }

    /// Moves the first-column remainder of each ring into the baseline.
    fn rebalance(&mut self) {
        let nt = self.base.len() / self.nr;
        for i in 0..self.nr {
            let shift = self.rest[i];
            if shift == 0.0 {
                continue;
            }
            let b = self.base[i] + shift;
            for j in 0..nt {
                let c = i + self.nr * j;
                self.base[c] = b;
                self.rest[c] -= shift;
            }
        }
    }

    fn combined(&self) -> Vec<f64> {
        self.base.iter().zip(&self.rest).map(|(a, b)| a + b).collect()
    }
}

/// Face stencils and cell volumes of a grid, reused across Picard steps.
#[derive(Debug, Clone)]
pub struct Discretization {
    faces: Vec<FaceStencil>,
    pub volumes: Vec<f64>,
    nr: usize,
    n: usize,
    symmetric: bool,
}

/// `∂_θ u` at cell `(i, j)` by centered differences, reflecting at walls.
fn dtheta_terms(grid: &SectorGrid, i: usize, j: usize, scale: f64) -> Vec<Term> {
    let jm = j.saturating_sub(1);
    let jp = (j + 1).min(grid.nt - 1);
    vec![Term::diff(
        grid.idx(i, jp),
        grid.idx(i, jm),
        scale / (2.0 * grid.dtheta),
    )]
}

/// `∂_s u` at cell `(i, j)`: centered, one-sided at the vertex row, and
/// through the odd Dirichlet ghost at the outer row.
fn ds_terms(grid: &SectorGrid, i: usize, j: usize, scale: f64) -> Vec<Term> {
    let w = scale / (2.0 * grid.ds);
    if i == 0 {
        let (c0, c1, c2) = (grid.idx(0, j), grid.idx(1, j), grid.idx(2, j));
        vec![Term::diff(c1, c0, 4.0 * w), Term::diff(c2, c0, -w)]
    } else if i == grid.nr - 1 {
        vec![Term::value(grid.idx(i, j), -w), Term::value(grid.idx(i - 1, j), -w)]
    } else {
        vec![Term::diff(grid.idx(i + 1, j), grid.idx(i - 1, j), w)]
    }
}

impl Discretization {
    pub fn new(grid: &SectorGrid) -> Self {
        let (nr, nt) = (grid.nr, grid.nt);
        let mut faces = Vec::with_capacity(2 * nr * nt);
        for j in 0..nt {
            let theta = grid.theta(j);
            for i in 0..nr {
                let left = grid.idx(i, j);
                let m = grid.metric((i as f64 + 1.0) * grid.ds, theta);
                let (right, us, ut, ct) = if i + 1 < nr {
                    let right = grid.idx(i + 1, j);
                    let mut ut = dtheta_terms(grid, i, j, 0.5);
                    ut.extend(dtheta_terms(grid, i + 1, j, 0.5));
                    let us = vec![Term::diff(right, left, 1.0 / grid.ds)];
                    (Some(right), us, ut, m.t_st * grid.dtheta)
                } else {
                    (None, vec![Term::value(left, -2.0 / grid.ds)], Vec::new(), 0.0)
                };
                faces.push(FaceStencil {
                    left,
                    right,
                    cs: m.t_ss * grid.dtheta,
                    ct,
                    us,
                    ut,
                    t_ss: m.t_ss,
                    t_st: m.t_st,
                    t_tt: m.t_tt,
                    sqrt_g: m.sqrt_g,
                });
            }
        }
        for j in 0..nt - 1 {
            let theta_face = (j as f64 + 1.0) * grid.dtheta;
            for i in 0..nr {
                let left = grid.idx(i, j);
                let right = grid.idx(i, j + 1);
                let m = grid.metric(grid.s(i), theta_face);
                let mut us = ds_terms(grid, i, j, 0.5);
                us.extend(ds_terms(grid, i, j + 1, 0.5));
                faces.push(FaceStencil {
                    left,
                    right: Some(right),
                    cs: m.t_st * grid.ds,
                    ct: m.t_tt * grid.ds,
                    us,
                    ut: vec![Term::diff(right, left, 1.0 / grid.dtheta)],
                    t_ss: m.t_ss,
                    t_st: m.t_st,
                    t_tt: m.t_tt,
                    sqrt_g: m.sqrt_g,
                });
            }
        }
        Self {
            faces,
            volumes: grid.volumes(),
            nr,
            n: grid.len(),
            symmetric: grid.is_polar(),
        }
    }

    /// Whether the operator is symmetric for any face coefficient (polar grids).
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn operator(&self, a: Vec<f64>, kappa: f64) -> FluxOperator<'_> {
        FluxOperator { disc: self, a, kappa }
    }

    fn unit_operator(&self, kappa: f64) -> FluxOperator<'_> {
        self.operator(vec![1.0; self.faces.len()], kappa)
    }

    /// Per-face coefficients `a(|∇u|_face)`.
    fn face_coefficients(&self, u: &Split, coeff: &dyn Fn(f64) -> f64) -> Vec<f64> {
        self.faces.iter().map(|f| coeff(f.grad_norm(u))).collect()
    }

    /// Volume-normalized residual `(|cell| − M u)/|cell|`, i.e. `L u + κu + 1`.
    fn residual(&self, op: &FluxOperator, u: &Split) -> Vec<f64> {
        let mut mb = vec![0.0; self.n];
        let mut mr = vec![0.0; self.n];
        op.apply(&u.base, &mut mb);
        op.apply(&u.rest, &mut mr);
        (0..self.n)
            .map(|c| ((self.volumes[c] - mb[c]) - mr[c]) / self.volumes[c])
            .collect()
    }

    /// `div(∇v)` per cell with walls closed and `v = 0` seen across `Γ₀`.
    pub fn apply_laplacian(&self, v: &[f64]) -> Vec<f64> {
        let op = self.unit_operator(0.0);
        let mut out = vec![0.0; self.n];
        op.apply(v, &mut out);
        out.iter().zip(&self.volumes).map(|(x, vol)| -x / vol).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.volumes.iter().map(|v| 1.0 / v).collect()
    }

    /// Iterative refinement around the Krylov solver, accumulating
    /// corrections in the remainder of `u`. CG requires `symmetric`.
    fn refined_solve(
        &self,
        op: &FluxOperator,
        u: &mut Split,
        tol: f64,
        max_linear: usize,
        symmetric: bool,
    ) -> (linalg::KrylovOutcome, f64) {
        let weights = self.weights();
        let method = if symmetric { Method::Cg } else { Method::BiCgStab };
        let mut total = 0;
        let mut best = f64::INFINITY;
        let mut outcome = linalg::KrylovOutcome {
            iterations: 0,
            residual: f64::INFINITY,
            converged: false,
            breakdown: None,
        };
        for _ in 0..MAX_SWEEPS {
            let r = self.residual(op, u);
            let rn = max_abs(&r);
            if rn <= tol || !(rn < 0.5 * best) {
                best = best.min(rn);
                break;
            }
            best = rn;
            let rhs: Vec<f64> = r.iter().zip(&self.volumes).map(|(a, v)| a * v).collect();
            let mut d = vec![0.0; self.n];
            let inner_tol = (0.25 * tol).max(1e-6 * rn);
            let budget = max_linear.saturating_sub(total);
            outcome = linalg::solve(op, &rhs, &mut d, &weights, inner_tol, budget, method);
            total += outcome.iterations;
            for (x, dx) in u.rest.iter_mut().zip(&d) {
                *x += dx;
            }
            u.rebalance();
            if outcome.breakdown.is_some() || !d.iter().all(|v| v.is_finite()) {
                best = f64::INFINITY;
                break;
            }
        }
        let rn = max_abs(&self.residual(op, u));
        outcome.iterations = total;
        outcome.residual = rn;
        outcome.converged = rn <= tol && outcome.breakdown.is_none();
        let _ = best;
        (outcome, rn)
    }

    /// Assembled matrix of the unit-coefficient operator.
    pub fn matrix(&self, kappa: f64) -> CsrMatrix {
        self.matrix_with(&vec![1.0; self.faces.len()], kappa)
    }

    fn matrix_with(&self, a: &[f64], kappa: f64) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for (c, row) in rows.iter_mut().enumerate() {
            row.push((c, -kappa * self.volumes[c]));
        }
        for (face, &af) in self.faces.iter().zip(a) {
            for (c, w) in face.gradient_terms() {
                rows[face.left].push((c, -af * w));
                if let Some(r) = face.right {
                    rows[r].push((c, af * w));
                }
            }
        }
        CsrMatrix::from_rows(rows)
    }
}

/// `M u = −div(a ∇u) − κ|cell| u` applied face by face.
struct FluxOperator<'a> {
    disc: &'a Discretization,
    a: Vec<f64>,
    kappa: f64,
}

impl LinearOperator for FluxOperator<'_> {
    fn len(&self) -> usize {
        self.disc.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (c, out) in y.iter_mut().enumerate() {
            *out = -self.kappa * self.disc.volumes[c] * x[c];
        }
        for (face, &a) in self.disc.faces.iter().zip(&self.a) {
            let f = face.flux(a, x);
            y[face.left] -= f;
            if let Some(r) = face.right {
                y[r] += f;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.disc.n).map(|c| -self.kappa * self.disc.volumes[c]).collect();
        for (face, &a) in self.disc.faces.iter().zip(&self.a) {
            for (c, w) in face.gradient_terms() {
                if c == face.left {
                    d[c] -= a * w;
                }
                if Some(c) == face.right {
                    d[c] += a * w;
                }
            }
        }
        d
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn method_name(symmetric: bool) -> &'static str {
    if symmetric {
        "jacobi-cg"
    } else {
        "jacobi-bicgstab"
    }
}

/// Solves `Δu + NKu = −1` with `u = 0` on `Γ₀` and `∂_ν u = 0` on the walls.
pub fn solve_linear_spaceform(grid: &SectorGrid, n: usize, k: f64) -> Result<(ScalarField, SolveReport)> {
    solve_linear_spaceform_with(grid, n, k, &SolverOptions::default())
}

pub fn solve_linear_spaceform_with(
    grid: &SectorGrid,
    n: usize,
    k: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    if n != 2 {
        return Err(Error::Unsupported(format!(
            "grids are two-dimensional; N = {n} is not supported"
        )));
    }
    if k != grid.curvature() {
        return Err(Error::InvalidGeometry(format!(
            "K = {k} does not match the grid's {} model",
            grid.space_form().model
        )));
    }
    let disc = Discretization::new(grid);
    let op = disc.unit_operator(n as f64 * k);
    let mut u = Split::zeros(disc.nr, disc.n);
    let (out, residual) = disc.refined_solve(&op, &mut u, opts.tol, opts.max_linear, disc.is_symmetric());
    let values = u.combined();
    let converged = out.converged && values.iter().all(|v| v.is_finite());
    let report = SolveReport {
        iterations: 1,
        linear_iterations: out.iterations,
        final_residual: residual,
        tolerance: opts.tol,
        epsilon_schedule: Vec::new(),
        omega: 1.0,
        method: method_name(disc.is_symmetric()).into(),
        stages: Vec::new(),
        converged,
        message: out
            .breakdown
            .map(|b| format!("linear solve broke down ({b}); the operator may be indefinite")),
    };
    Ok((ScalarField::from_values_unchecked(grid, values), report))
}

/// Default under-relaxation. For power profiles the frozen-coefficient map
/// scales amplitudes by `λ ↦ λ^{−(p−2)}`, so `1/(p−1)` cancels that mode.
pub fn default_omega(profile: &OperatorProfile) -> f64 {
    match profile.degeneracy_exponent() {
        Some(p) if p > 2.0 => 1.0 / (p - 1.0),
        Some(p) if p < 2.0 => 0.5,
        _ => 1.0,
    }
}

/// Solves `L_f u = −1` by Picard iteration on the regularized profiles
/// `f_ε`, walking down `schedule` with warm starts.
pub fn solve_lf(grid: &SectorGrid, profile: &OperatorProfile, schedule: &[f64]) -> Result<(ScalarField, SolveReport)> {
    solve_lf_with(grid, profile, schedule, &SolverOptions::default())
}

pub fn solve_lf_with(
    grid: &SectorGrid,
    profile: &OperatorProfile,
    schedule: &[f64],
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    if schedule.is_empty() || schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Input(format!(
            "epsilon schedule must be non-empty and strictly decreasing, got {schedule:?}"
        )));
    }
    let last = *schedule.last().unwrap();
    if !(last >= 1e-6) {
        return Err(Error::Input(format!("last epsilon {last} is below 1e-6")));
    }
    if let Some(w) = opts.omega {
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::out_of_domain("omega", w, "(0, 1]"));
        }
    }
    let disc = Discretization::new(grid);
    let lap = disc.unit_operator(0.0);
    let mut u = Split::zeros(disc.nr, disc.n);
    let (first, first_residual) = disc.refined_solve(&lap, &mut u, opts.tol, opts.max_linear, disc.is_symmetric());
    let mut linear_iterations = first.iterations;

    if profile.is_laplacian() {
        let report = SolveReport {
            iterations: 1,
            linear_iterations,
            final_residual: first_residual,
            tolerance: opts.tol,
            epsilon_schedule: schedule.to_vec(),
            omega: 1.0,
            method: method_name(disc.is_symmetric()).into(),
            stages: Vec::new(),
            converged: first.converged,
            message: first.breakdown,
        };
        return Ok((ScalarField::from_values_unchecked(grid, u.combined()), report));
    }

    let mut omega = opts.omega.unwrap_or_else(|| default_omega(profile));
    let mut halved = false;
    let mut stages = Vec::with_capacity(schedule.len());
    let mut total_iterations = 0;
    let mut message = None;
    let mut final_residual = f64::INFINITY;
    let mut all_converged = true;

    for (si, &eps) in schedule.iter().enumerate() {
        let reg = profile.regularize(eps)?;
        let coeff = |t: f64| reg.coefficient(t);
        let stage_tol = if si + 1 == schedule.len() {
            opts.tol
        } else {
            opts.stage_tol.max(opts.tol)
        };
        let start = u.clone();
        loop {
            let outcome = picard_stage(&disc, &coeff, &mut u, omega, stage_tol, opts);
            total_iterations += outcome.iterations;
            linear_iterations += outcome.linear_iterations;
            if outcome.converged || halved {
                stages.push(StageReport {
                    epsilon: eps,
                    iterations: outcome.iterations,
                    residual: outcome.residual,
                    converged: outcome.converged,
                });
                final_residual = outcome.residual;
                if !outcome.converged {
                    all_converged = false;
                    message = Some(format!(
                        "stage eps = {eps:e} stopped at residual {:e} after {} iterations{}",
                        outcome.residual,
                        outcome.iterations,
                        outcome.note.map(|n| format!(" ({n})")).unwrap_or_default()
                    ));
                }
                break;
            }
            omega *= 0.5;
            halved = true;
            u = start.clone();
        }
        if !all_converged {
            break;
        }
    }

    let report = SolveReport {
        iterations: total_iterations,
        linear_iterations,
        final_residual,
        tolerance: opts.tol,
        epsilon_schedule: schedule.to_vec(),
        omega,
        method: method_name(disc.is_symmetric()).into(),
        stages,
        converged: all_converged && final_residual <= opts.tol,
        message,
    };
    Ok((ScalarField::from_values_unchecked(grid, u.combined()), report))
}

struct StageOutcome {
    iterations: usize,
    linear_iterations: usize,
    residual: f64,
    converged: bool,
    note: Option<String>,
}

fn picard_stage(
    disc: &Discretization,
    coeff: &dyn Fn(f64) -> f64,
    u: &mut Split,
    omega: f64,
    tol: f64,
    opts: &SolverOptions,
) -> StageOutcome {
    let mut op = disc.operator(disc.face_coefficients(u, coeff), 0.0);
    let mut residual = max_abs(&disc.residual(&op, u));
    let initial = residual;
    let mut linear_iterations = 0;
    for it in 0..opts.max_picard {
        if residual <= tol {
            return StageOutcome {
                iterations: it,
                linear_iterations,
                residual,
                converged: true,
                note: None,
            };
        }
        let mut next = u.clone();
        let (out, _) = disc.refined_solve(&op, &mut next, 0.1 * tol, opts.max_linear, disc.is_symmetric());
        linear_iterations += out.iterations;
        for (x, y) in u.base.iter_mut().zip(&next.base) {
            *x += omega * (y - *x);
        }
        for (x, y) in u.rest.iter_mut().zip(&next.rest) {
            *x += omega * (y - *x);
        }
        u.rebalance();
        op = disc.operator(disc.face_coefficients(u, coeff), 0.0);
        residual = max_abs(&disc.residual(&op, u));
        if !residual.is_finite() || residual > 1e6 * initial.max(1.0) {
            return StageOutcome {
                iterations: it + 1,
                linear_iterations,
                residual,
                converged: false,
                note: Some("diverged".into()),
            };
        }
    }
    StageOutcome {
        iterations: opts.max_picard,
        linear_iterations,
        residual,
        converged: residual <= tol,
        note: (residual > tol).then(|| "iteration limit".to_string()),
    }
}

/// `∂_ν u` at the midpoint of every `Γ₀` face, from the quadratic through
/// the three outermost cells. The boundary value is not used, so the
/// estimate is second order both for fields vanishing on `Γ₀` and for
/// discrete solutions, which satisfy the Dirichlet condition through a ghost.
pub fn normal_derivative_gamma0(grid: &SectorGrid, u: &ScalarField) -> Result<Vec<f64>> {
    u.check_grid(grid)?;
    let nr = grid.nr;
    Ok((0..grid.nt)
        .map(|j| {
            let us = (2.0 * u.at(nr - 1, j) - 3.0 * u.at(nr - 2, j) + u.at(nr - 3, j)) / grid.ds;
            let m = grid.metric(1.0, grid.theta(j));
            m.inv_ss().sqrt() * us
        })
        .collect())
}

/// Second-order logical derivatives `(u_s, u_θ)` at every cell, centered in
/// the interior and one-sided on boundary rows.
pub fn logical_gradient(grid: &SectorGrid, u: &ScalarField) -> Result<Vec<(f64, f64)>> {
    u.check_grid(grid)?;
    let (nr, nt) = (grid.nr, grid.nt);
    let mut out = vec![(0.0, 0.0); grid.len()];
    for j in 0..nt {
        for i in 0..nr {
            let us = d_line(|k| u.at(k, j), i, nr, grid.ds);
            let ut = d_line(|k| u.at(i, k), j, nt, grid.dtheta);
            out[grid.idx(i, j)] = (us, ut);
        }
    }
    Ok(out)
}

/// Second-order first derivative along a line of `n` samples with spacing `h`.
pub(crate) fn d_line(v: impl Fn(usize) -> f64, k: usize, n: usize, h: f64) -> f64 {
    if k == 0 {
        (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * h)
    } else if k == n - 1 {
        (3.0 * v(k) - 4.0 * v(k - 1) + v(k - 2)) / (2.0 * h)
    } else {
        (v(k + 1) - v(k - 1)) / (2.0 * h)
    }
}

fn require_euclidean(grid: &SectorGrid, what: &str) -> Result<()> {
    if grid.curvature() != 0.0 {
        return Err(Error::Unsupported(format!(
            "{what} is defined on Euclidean grids only; use the covariant Hessian for space forms"
        )));
    }
    Ok(())
}

fn inverse_jacobian(grid: &SectorGrid, i: usize, j: usize) -> Matrix2<f64> {
    let jac = grid.jacobian(grid.s(i), grid.theta(j));
    let m = Matrix2::new(jac[0][0], jac[0][1], jac[1][0], jac[1][1]);
    m.try_inverse().unwrap_or_else(|| Matrix2::from_element(f64::NAN))
}

/// Cartesian `∇u` per cell: `J^{−T} (u_s, u_θ)`.
pub fn gradient_field(grid: &SectorGrid, u: &ScalarField) -> Result<VectorField> {
    require_euclidean(grid, "gradient_field")?;
    let lg = logical_gradient(grid, u)?;
    let mut values = vec![[0.0; 2]; grid.len()];
    for j in 0..grid.nt {
        for i in 0..grid.nr {
            let c = grid.idx(i, j);
            let jinv = inverse_jacobian(grid, i, j);
            let g = jinv.transpose() * Vector2::new(lg[c].0, lg[c].1);
            values[c] = [g[0], g[1]];
        }
    }
    Ok(VectorField {
        nr: grid.nr,
        nt: grid.nt,
        values,
    })
}

/// `∇_ξ V(ξ) = f'(|ξ|) ξ/|ξ|`.
pub fn mapped_gradient(profile: &OperatorProfile, g: [f64; 2]) -> [f64; 2] {
    let t = g[0].hypot(g[1]);
    if t == 0.0 {
        return [0.0, 0.0];
    }
    let s = profile.f_prime(t) / t;
    [s * g[0], s * g[1]]
}

/// `W = D(∇_ξ V(∇u))` per cell, with `W_ij = ∂_j V_{ξ_i}`. Boundary rows use
/// one-sided differences; cells within two of the boundary, whose composed
/// stencil reaches those closures, are flagged non-interior.
pub fn hessian_w_field(grid: &SectorGrid, u: &ScalarField, profile: &OperatorProfile) -> Result<MatrixField> {
    hessian_w_field_with_floor(grid, u, profile, DEFAULT_GRADIENT_FLOOR)
}

pub fn hessian_w_field_with_floor(
    grid: &SectorGrid,
    u: &ScalarField,
    profile: &OperatorProfile,
    gradient_floor: f64,
) -> Result<MatrixField> {
    let grad = gradient_field(grid, u)?;
    let (nr, nt) = (grid.nr, grid.nt);
    let mapped: Vec<[f64; 2]> = grad.values.iter().map(|&g| mapped_gradient(profile, g)).collect();
    let floor = gradient_floor * grad.max_norm();
    let mut values = vec![Matrix2::zeros(); grid.len()];
    let mut masked = vec![false; grid.len()];
    let mut interior = vec![false; grid.len()];
    for j in 0..nt {
        for i in 0..nr {
            let c = grid.idx(i, j);
            interior[c] = i > 1 && i + 2 < nr && j > 1 && j + 2 < nt;
            let g = grad.values[c];
            masked[c] = !(g[0].hypot(g[1]) > floor);
            let mut d = Matrix2::zeros();
            for comp in 0..2 {
                d[(comp, 0)] = d_line(|k| mapped[grid.idx(k, j)][comp], i, nr, grid.ds);
                d[(comp, 1)] = d_line(|k| mapped[grid.idx(i, k)][comp], j, nt, grid.dtheta);
            }
            values[c] = d * inverse_jacobian(grid, i, j);
        }
    }
    Ok(MatrixField {
        nr,
        nt,
        values,
        masked,
        interior,
    })
}

impl ScalarField {
    pub(crate) fn from_values_unchecked(grid: &SectorGrid, values: Vec<f64>) -> Self {
        Self {
            nr: grid.nr,
            nt: grid.nt,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Model;
    use crate::mesh::GridSpec;
    use crate::oracles::{RadialOracle, RadialSolutionEuclidean, RadialSolutionSpaceForm};
    use crate::profiles::make_power_profile;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn grid(model: Model, r0: f64, eps: f64, n: usize) -> SectorGrid {
        GridSpec {
            space_form: model,
            alpha: FRAC_PI_2,
            r0,
            epsilon: eps,
            k: 2,
            nr: n,
            nt: n,
        }
        .build()
        .unwrap()
    }

    fn max_err(g: &SectorGrid, u: &ScalarField, o: &dyn RadialOracle) -> f64 {
        let exact = ScalarField::from_oracle(g, o).unwrap();
        u.values
            .iter()
            .zip(&exact.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    #[test]
    fn euclidean_sector_matches_oracle() {
        let o = RadialSolutionEuclidean::at_origin(make_power_profile(2.0).unwrap(), 2, 1.0).unwrap();
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = grid(Model::Euclidean, 1.0, 0.0, n);
            let (u, rep) = solve_linear_spaceform(&g, 2, 0.0).unwrap();
            assert!(rep.converged, "{rep:?}");
            assert!(u.values.iter().all(|&v| v > 0.0));
            errs.push(max_err(&g, &u, &o));
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.7..=2.3).contains(&order), "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn sphere_cap_converges_and_is_positive() {
        let g = grid(Model::Sphere, FRAC_PI_4, 0.0, 32);
        let (u, rep) = solve_linear_spaceform(&g, 2, 1.0).unwrap();
        assert!(rep.converged);
        assert!(u.min() > 0.0);
        let o = RadialSolutionSpaceForm::at_pole(crate::geometry::SpaceForm::sphere(), 2, FRAC_PI_4).unwrap();
        assert!(max_err(&g, &u, &o) < 1e-3);
    }

    #[test]
    fn rejects_mismatched_curvature() {
        let g = grid(Model::Euclidean, 1.0, 0.0, 16);
        assert!(solve_linear_spaceform(&g, 2, -1.0).is_err());
        assert!(solve_linear_spaceform(&g, 3, 0.0).is_err());
    }

    #[test]
    fn laplacian_profile_is_one_linear_solve() {
        let g = grid(Model::Euclidean, 1.0, 0.1, 24);
        let (a, ra) = solve_lf(&g, &make_power_profile(2.0).unwrap(), &DEFAULT_SCHEDULE).unwrap();
        let (b, rb) = solve_linear_spaceform(&g, 2, 0.0).unwrap();
        assert_eq!(ra.iterations, 1);
        assert!(ra.converged && rb.converged);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn schedule_validation() {
        let g = grid(Model::Euclidean, 1.0, 0.0, 16);
        let p = make_power_profile(3.0).unwrap();
        assert!(solve_lf(&g, &p, &[1e-2, 1e-1]).is_err());
        assert!(solve_lf(&g, &p, &[1e-2, 1e-7]).is_err());
        assert!(solve_lf(&g, &p, &[]).is_err());
    }

    #[test]
    fn perturbed_matrix_is_nonsymmetric_and_polar_is_symmetric() {
        let polar = Discretization::new(&grid(Model::Hyperbolic, 1.0, 0.0, 12));
        let m = polar.matrix(-2.0);
        assert!(m.asymmetry() < 1e-14);
        let pert = Discretization::new(&grid(Model::Euclidean, 1.0, 0.1, 12));
        let m = pert.matrix(0.0);
        assert!(m.asymmetry() > 1e-6);
        // The assembled matrix and the flux operator agree.
        let x: Vec<f64> = (0..m.n).map(|c| (c as f64 * 0.37).sin()).collect();
        let mut y1 = vec![0.0; m.n];
        let mut y2 = vec![0.0; m.n];
        m.matvec(&x, &mut y1);
        pert.unit_operator(0.0).apply(&x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
        assert_eq!(pert.unit_operator(0.0).diagonal(), m.diagonal());
    }

    #[test]
    fn normal_derivative_of_oracle() {
        let o = RadialSolutionEuclidean::at_origin(make_power_profile(2.0).unwrap(), 2, 1.0).unwrap();
        let g = grid(Model::Euclidean, 1.0, 0.0, 32);
        let u = ScalarField::from_oracle(&g, &o).unwrap();
        for v in normal_derivative_gamma0(&g, &u).unwrap() {
            assert!((v + 0.5).abs() < 1e-12);
        }
        let z = ScalarField::zeros(&g);
        assert!(normal_derivative_gamma0(&g, &z).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w_of_radial_laplacian() {
        let o = RadialSolutionEuclidean::at_origin(make_power_profile(2.0).unwrap(), 2, 1.0).unwrap();
        let g = grid(Model::Euclidean, 1.0, 0.0, 32);
        let u = ScalarField::from_oracle(&g, &o).unwrap();
        let w = hessian_w_field(&g, &u, &make_power_profile(2.0).unwrap()).unwrap();
        for c in w.active() {
            let d = w.values[c] + Matrix2::identity() * 0.5;
            assert!(d.amax() < 1e-2, "{d}");
            assert!((w.values[c].trace() + 1.0).abs() < 1e-2);
        }
        let z = ScalarField::zeros(&g);
        let wz = hessian_w_field(&g, &z, &make_power_profile(2.0).unwrap()).unwrap();
        assert_eq!(wz.masked_count(), g.len());
    }
}
