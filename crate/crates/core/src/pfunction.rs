//! P-function audits for `Δu + NKu = −1` in space forms.
//!
//! `P(u) = |∇u|² + (2/N)u + Ku²` is subharmonic along solutions, equals `c²`
//! on `Γ₀`, and is constant exactly on spherical caps. The audits measure
//! each of these facts on grid fields and oracle fields.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::identities::{neumann_statistics, tol_discrete, AuditCheck, AuditReport};
use crate::mesh::SectorGrid;
use crate::oracles::{RadialOracle, RadialSolutionSpaceForm};
use crate::quadrature;
use crate::solver::{d_line, logical_gradient, Discretization};

const QUAD_TOL: f64 = 1e-13;
/// Largest RK4 step in the Obata ODE integrator.
pub const OBATA_MAX_STEP: f64 = 1e-3;

fn require_planar(n: usize) -> Result<()> {
    if n != 2 {
        return Err(Error::Unsupported(format!(
            "grid P-function audits need N = 2 (two-dimensional grids), got N = {n}"
        )));
    }
    Ok(())
}

fn p_value(grad_sq: f64, u: f64, n: f64, k: f64) -> f64 {
    grad_sq + 2.0 / n * u + k * u * u
}

/// `P(u)` per cell with the metric gradient `u_r² + u_θ²/h²`.
pub fn p_field(grid: &SectorGrid, u: &ScalarField, n: usize, k: f64) -> Result<ScalarField> {
    require_planar(n)?;
    let lg = logical_gradient(grid, u)?;
    Ok(ScalarField::from_fn(grid, |i, j| {
        let (us, ut) = lg[grid.idx(i, j)];
        let m = grid.cell_metric(i, j);
        p_value(m.grad_norm_sq(us, ut), u.at(i, j), n as f64, k)
    }))
}

/// `P` of a radial oracle from its analytic derivatives, sampled at the
/// cell centers.
pub fn p_field_analytic(grid: &SectorGrid, oracle: &dyn RadialOracle) -> Result<ScalarField> {
    let (n, k) = (oracle.dimension() as f64, oracle.curvature());
    let mut values = vec![0.0; grid.len()];
    for j in 0..grid.nt {
        let theta = grid.theta(j);
        for i in 0..grid.nr {
            let d = oracle.distance_polar(grid.r(i, j), theta);
            values[grid.idx(i, j)] = p_value(oracle.du(d)?.powi(2), oracle.u(d)?, n, k);
        }
    }
    ScalarField::from_values(grid, values)
}

#[derive(Debug, Clone, Serialize)]
pub struct SubharmonicityProbe {
    pub min_laplacian: f64,
    /// Fraction of probed cells with `ΔP < −tolerance`.
    pub violation_fraction: f64,
    pub tolerance: f64,
    pub cells: usize,
}

/// Discrete Laplace–Beltrami of `P`, with the solver's own stencil, on cells
/// whose neighbours all carry centered derivatives (two cells away from every
/// boundary row).
pub fn subharmonicity_probe(grid: &SectorGrid, p: &ScalarField, tolerance: f64) -> Result<SubharmonicityProbe> {
    p.check_grid(grid)?;
    if grid.nr < 5 || grid.nt < 5 {
        return Err(Error::InvalidGrid(
            "subharmonicity probe needs at least 5×5 cells".into(),
        ));
    }
    let lap = Discretization::new(grid).apply_laplacian(&p.values);
    let (mut min, mut bad, mut cells) = (f64::INFINITY, 0usize, 0usize);
    for j in 2..grid.nt - 2 {
        for i in 2..grid.nr - 2 {
            let v = lap[grid.idx(i, j)];
            min = min.min(v);
            bad += usize::from(v < -tolerance);
            cells += 1;
        }
    }
    Ok(SubharmonicityProbe {
        min_laplacian: min,
        violation_fraction: bad as f64 / cells as f64,
        tolerance,
        cells,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrinciple {
    /// Length-weighted mean of `−∂_ν u` on `Γ₀`.
    pub c: f64,
    pub c_squared: f64,
    pub max_p: f64,
    pub min_p: f64,
    /// `max P − c²`.
    pub excess: f64,
    /// Largest outward `∂_ν P` over both walls.
    pub wall_max: f64,
    pub wall_mean: f64,
    pub tolerance: f64,
    pub interior_pass: bool,
    pub wall_pass: bool,
}

/// Outward `∂_ν P` on the wall faces, one value per cell row and wall.
pub fn wall_normal_derivative(grid: &SectorGrid, p: &ScalarField) -> Result<Vec<f64>> {
    p.check_grid(grid)?;
    if grid.nt < 3 || grid.nr < 3 {
        return Err(Error::InvalidGrid("wall derivatives need at least 3×3 cells".into()));
    }
    let nt = grid.nt;
    let mut out = Vec::with_capacity(2 * grid.nr);
    for (side, cols, sign) in [(0u8, [0, 1, 2], -1.0), (1u8, [nt - 1, nt - 2, nt - 3], 1.0)] {
        let theta = grid.wall_angle(side);
        for i in 0..grid.nr {
            let f = cols.map(|j| p.at(i, j));
            // ∂_θ P at the wall; the column order flips the one-sided sign.
            let pt = -sign * (-2.0 * f[0] + 3.0 * f[1] - f[2]) / grid.dtheta;
            let ps_cells = cols.map(|j| d_line(|k| p.at(k, j), i, grid.nr, grid.ds));
            let ps = (15.0 * ps_cells[0] - 10.0 * ps_cells[1] + 3.0 * ps_cells[2]) / 8.0;
            let m = grid.metric(grid.s(i), theta);
            out.push(sign * (m.inv_st() * ps + m.inv_tt() * pt) / m.inv_tt().sqrt());
        }
    }
    Ok(out)
}

/// `max P ≤ c²` in `Ω` and `∂_ν P ≤ 0` on the walls, with `c` measured from
/// `u` and tolerance `tol_discrete(grid, c²)`.
pub fn max_principle_check(grid: &SectorGrid, u: &ScalarField, p: &ScalarField) -> Result<MaxPrinciple> {
    let c = neumann_statistics(grid, u)?.mean;
    let c_squared = c * c;
    let tolerance = tol_discrete(grid, c_squared);
    let wall = wall_normal_derivative(grid, p)?;
    let wall_max = wall.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wall_mean = wall.iter().sum::<f64>() / wall.len() as f64;
    let (max_p, min_p) = (p.max(), p.min());
    Ok(MaxPrinciple {
        c,
        c_squared,
        max_p,
        min_p,
        excess: max_p - c_squared,
        wall_max,
        wall_mean,
        tolerance,
        interior_pass: max_p - c_squared <= tolerance,
        wall_pass: wall_max <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Step3 {
    pub c: f64,
    /// `c² ∫ ḣ`.
    pub lhs: f64,
    /// `(1 + 2/N)(∫ ḣu − K ∫ h u ∂_r u)`.
    pub rhs: f64,
    pub residual: f64,
    /// `|residual| / |lhs|`, or `|residual|` when `lhs = 0`.
    pub relative: f64,
}

impl Step3 {
    fn new(c: f64, lhs: f64, rhs: f64) -> Self {
        let residual = lhs - rhs;
        let relative = if lhs != 0.0 {
            residual.abs() / lhs.abs()
        } else {
            residual.abs()
        };
        Self {
            c,
            lhs,
            rhs,
            residual,
            relative,
        }
    }
}

/// Integral identity `c² ∫ ḣ = (1 + 2/N)(∫ ḣu − K ∫ h u ∂_r u)` by cell
/// quadrature, with `c` the measured Neumann mean.
pub fn step3_identity(grid: &SectorGrid, u: &ScalarField, n: usize, k: f64) -> Result<Step3> {
    require_planar(n)?;
    let lg = logical_gradient(grid, u)?;
    let c = neumann_statistics(grid, u)?.mean;
    let sf = grid.space_form();
    let vols = grid.volumes();
    let (mut hdot, mut hdot_u, mut flux) = (0.0, 0.0, 0.0);
    for j in 0..grid.nt {
        let big_r = grid.boundary.value(grid.theta(j));
        for i in 0..grid.nr {
            let idx = grid.idx(i, j);
            let w = sf.warping_unchecked(grid.r(i, j));
            let ur = lg[idx].0 / big_r;
            hdot += vols[idx] * w.h_dot;
            hdot_u += vols[idx] * w.h_dot * u.values[idx];
            flux += vols[idx] * w.h * u.values[idx] * ur;
        }
    }
    let nf = n as f64;
    Ok(Step3::new(c, c * c * hdot, (1.0 + 2.0 / nf) * (hdot_u - k * flux)))
}

/// The same identity for a pole-centered oracle on the sector of opening
/// `alpha`, by adaptive quadrature with weight `h^{N−1}`.
pub fn step3_identity_analytic(oracle: &RadialSolutionSpaceForm, alpha: f64) -> Result<Step3> {
    if oracle.center != (0.0, 0.0) {
        return Err(Error::Unsupported(
            "analytic step-3 quadrature needs a pole-centered oracle".into(),
        ));
    }
    let sf = oracle.space_form;
    let (n, k, r) = (oracle.dimension as f64, oracle.curvature(), oracle.radius);
    let weight = |d: f64| sf.h(d).powf(n - 1.0);
    // The integrands are smooth on [0, R]; every evaluation stays in range.
    let u = |d: f64| oracle.spaceform_u(d).unwrap_or(f64::NAN);
    let du = |d: f64| oracle.du(d).unwrap_or(f64::NAN);
    let hdot = alpha * quadrature::integrate(|d| sf.h_dot(d) * weight(d), 0.0, r, QUAD_TOL);
    let hdot_u = alpha * quadrature::integrate(|d| sf.h_dot(d) * u(d) * weight(d), 0.0, r, QUAD_TOL);
    let flux = alpha * quadrature::integrate(|d| sf.h(d) * u(d) * du(d) * weight(d), 0.0, r, QUAD_TOL);
    let c = oracle.overdetermined_constant()?;
    let out = Step3::new(c, c * c * hdot, (1.0 + 2.0 / n) * (hdot_u - k * flux));
    if !out.residual.is_finite() {
        return Err(Error::Input("step-3 quadrature produced a non-finite value".into()));
    }
    Ok(out)
}

/// Largest metric-normalized distance between the covariant Hessian and
/// `(−1/N − Ku) g` over cells with a full second-difference stencil.
pub fn hessian_proportionality_defect(grid: &SectorGrid, u: &ScalarField, n: usize, k: f64) -> Result<f64> {
    require_planar(n)?;
    let lg = logical_gradient(grid, u)?;
    if grid.nr < 3 || grid.nt < 3 {
        return Err(Error::InvalidGrid("Hessian defect needs at least 3×3 cells".into()));
    }
    let sf = grid.space_form();
    let (ds, dt) = (grid.ds, grid.dtheta);
    let mut worst = 0.0_f64;
    for j in 1..grid.nt - 1 {
        let theta = grid.theta(j);
        let big_r = grid.boundary.value(theta);
        let r1 = grid.boundary.d1(theta);
        let r2 = grid.boundary.d2(theta);
        for i in 1..grid.nr - 1 {
            let s = grid.s(i);
            let (vs, vt) = lg[grid.idx(i, j)];
            let vss = (u.at(i + 1, j) - 2.0 * u.at(i, j) + u.at(i - 1, j)) / (ds * ds);
            let vtt = (u.at(i, j + 1) - 2.0 * u.at(i, j) + u.at(i, j - 1)) / (dt * dt);
            let vst =
                (u.at(i + 1, j + 1) - u.at(i + 1, j - 1) - u.at(i - 1, j + 1) + u.at(i - 1, j - 1)) / (4.0 * ds * dt);
            // Chain rule from (s, θ) to geodesic polar (r, θ) with s = r/R(θ).
            let s_r = 1.0 / big_r;
            let s_t = -s * r1 / big_r;
            let s_rt = -r1 / (big_r * big_r);
            let s_tt = -s * (r2 / big_r - 2.0 * r1 * r1 / (big_r * big_r));
            let ur = vs * s_r;
            let ut = vs * s_t + vt;
            let urr = vss * s_r * s_r;
            let urt = vss * s_r * s_t + vst * s_r + vs * s_rt;
            let utt = vss * s_t * s_t + 2.0 * vst * s_t + vtt + vs * s_tt;
            let w = sf.warping_unchecked(grid.r(i, j));
            let lambda = -1.0 / n as f64 - k * u.at(i, j);
            let e_rr = urr - lambda;
            let e_rt = (urt - w.h_dot / w.h * ut) / w.h;
            let e_tt = (utt + w.h * w.h_dot * ur) / (w.h * w.h) - lambda;
            worst = worst.max((e_rr * e_rr + 2.0 * e_rt * e_rt + e_tt * e_tt).sqrt());
        }
    }
    Ok(worst)
}

/// Integrates `f″ = −1/N − Kf`, `f(0) = u_p`, `f′(0) = 0` by RK4 and samples
/// `f` at the nondecreasing points `s_grid ⊂ [0, ∞)`.
pub fn obata_ode_profile(n: usize, k: f64, u_p: f64, s_grid: &[f64]) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidGeometry(format!("dimension {n} < 2")));
    }
    if s_grid.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || s_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Input(
            "s_grid must be finite, nonnegative and nondecreasing".into(),
        ));
    }
    let nf = n as f64;
    let rhs = |y: [f64; 2]| [y[1], -1.0 / nf - k * y[0]];
    let mut y = [u_p, 0.0];
    let mut s = 0.0;
    let mut out = Vec::with_capacity(s_grid.len());
    for &target in s_grid {
        let span = target - s;
        if span > 0.0 {
            let steps = (span / OBATA_MAX_STEP).ceil() as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                let k1 = rhs(y);
                let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
                let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
                let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
                for c in 0..2 {
                    y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
            }
            s = target;
        }
        out.push(y[0]);
    }
    Ok(out)
}

/// Largest `|f(d) − u(d)|` over `samples + 1` uniform points of `[0, R]`,
/// with `f` the Obata profile started at `u(0)`.
pub fn obata_oracle_gap(oracle: &RadialSolutionSpaceForm, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Input("obata_oracle_gap needs at least one sample".into()));
    }
    let r = oracle.radius;
    let grid: Vec<f64> = (0..=samples).map(|i| r * i as f64 / samples as f64).collect();
    let f = obata_ode_profile(oracle.dimension, oracle.curvature(), oracle.spaceform_u(0.0)?, &grid)?;
    let mut worst = 0.0_f64;
    for (d, v) in grid.iter().zip(&f) {
        worst = worst.max((v - oracle.spaceform_u(*d)?).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PFieldOptions {
    /// The field is a radial solution about the pole: `P` constancy, Hessian
    /// proportionality and step-3 equality become pass/fail checks.
    pub radial_reference: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PFieldReport {
    pub dimension: usize,
    pub curvature: f64,
    pub p: Vec<f64>,
    pub c: f64,
    pub c_squared: f64,
    pub c_spread: f64,
    pub max_p: f64,
    pub min_p: f64,
    /// `max |P − c²|`.
    pub p_constancy: f64,
    pub laplacian: SubharmonicityProbe,
    pub max_principle: MaxPrinciple,
    pub hessian_defect: f64,
    pub step3: Step3,
    pub audit: AuditReport,
    pub notes: Vec<String>,
}

const OBATA_NOTE: &str = "Obata profile integrated from f'' = -1/N - K f, f(0) = u(p), f'(0) = 0; \
the closed form f(s) = (u(p) - 1/N) H(s) - 1/N does not satisfy f(0) = u(p) and is not used";

/// Runs every P-function audit on a field of `Δu + NKu = −1`.
pub fn pfunction_report(
    grid: &SectorGrid,
    u: &ScalarField,
    n: usize,
    k: f64,
    opts: PFieldOptions,
) -> Result<PFieldReport> {
    if k != grid.curvature() {
        return Err(Error::InvalidGeometry(format!(
            "K = {k} does not match the grid curvature {}",
            grid.curvature()
        )));
    }
    let p = p_field(grid, u, n, k)?;
    let stats = neumann_statistics(grid, u)?;
    let mp = max_principle_check(grid, u, &p)?;
    let c2 = mp.c_squared;
    let lap_tol = tol_discrete(grid, c2.max(f64::MIN_POSITIVE));
    let laplacian = subharmonicity_probe(grid, &p, lap_tol)?;
    let hessian_defect = hessian_proportionality_defect(grid, u, n, k)?;
    let step3 = step3_identity(grid, u, n, k)?;
    let p_constancy = p.values.iter().map(|v| (v - c2).abs()).fold(0.0, f64::max);

    let mut checks = vec![
        AuditCheck::at_most("max_principle", mp.excess, mp.tolerance, "max P - c^2"),
        AuditCheck::at_most(
            "wall_normal_derivative",
            mp.wall_max,
            mp.tolerance,
            "max outward dP/dnu on walls",
        ),
        AuditCheck::at_least_neg(
            "subharmonicity",
            laplacian.min_laplacian,
            lap_tol,
            "min discrete Laplacian of P",
        ),
        AuditCheck::info(
            "violation_fraction",
            laplacian.violation_fraction,
            "cells with Laplacian of P below -tol",
        ),
        AuditCheck::info("c_spread", stats.std, "length-weighted std of -du/dnu on Gamma_0"),
    ];
    let scale = 1.0 / n as f64;
    if opts.radial_reference {
        checks.push(AuditCheck::at_most(
            "p_constancy",
            p_constancy,
            tol_discrete(grid, c2),
            "max |P - c^2|",
        ));
        checks.push(AuditCheck::at_most(
            "hessian_defect",
            hessian_defect,
            tol_discrete(grid, scale),
            "max |Hess u - (-1/N - K u) g|",
        ));
        checks.push(AuditCheck::at_most(
            "step3_relative",
            step3.relative,
            1e-2,
            "|lhs - rhs| / |lhs|",
        ));
    } else {
        checks.push(AuditCheck::info("p_constancy", p_constancy, "max |P - c^2|"));
        checks.push(AuditCheck::info(
            "hessian_defect",
            hessian_defect,
            "max |Hess u - (-1/N - K u) g|",
        ));
        checks.push(AuditCheck::info(
            "step3_residual",
            step3.residual,
            "lhs - rhs, positive when P < c^2",
        ));
    }
    let audit = AuditReport::new(checks, 0, grid.len());
    Ok(PFieldReport {
        dimension: n,
        curvature: k,
        c: mp.c,
        c_squared: c2,
        c_spread: stats.std,
        max_p: mp.max_p,
        min_p: mp.min_p,
        p_constancy,
        p: p.values,
        laplacian,
        max_principle: mp,
        hessian_defect,
        step3,
        audit,
        notes: vec![OBATA_NOTE.to_string()],
    })
}
