//! Euclidean identities and inequalities evaluated on grid fields: the `S₂`
//! algebra of `W`, Newton's inequality, the Pohozaev identity, the integral
//! inequality for `S₂(W)`, and consistency of the Neumann constant.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{MatrixField, ScalarField};
use crate::mesh::SectorGrid;
use crate::profiles::OperatorProfile;
use crate::solver::{gradient_field, hessian_w_field, mapped_gradient, normal_derivative_gamma0};

/// `S₂(A) = ½((Tr A)² − Tr(A²))`.
pub fn s2_of_matrix(a: &DMatrix<f64>) -> f64 {
    let t = a.trace();
    0.5 * (t * t - (a * a).trace())
}

/// `S²_ij(A) = −a_ji + δ_ij Tr A`.
pub fn s2_minor_form(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let t = a.trace();
    DMatrix::from_fn(n, n, |i, j| -a[(j, i)] + if i == j { t } else { 0.0 })
}

/// `½ ∑ S²_ij(A) a_ij`, which equals `S₂(A)`.
pub fn s2_contracted(a: &DMatrix<f64>) -> f64 {
    0.5 * s2_minor_form(a).component_mul(a).sum()
}

/// Sum of the 2×2 principal minors.
pub fn s2_principal_minors(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[(i, i)] * a[(j, j)] - a[(i, j)] * a[(j, i)];
        }
    }
    s
}

fn s2_2x2(a: &Matrix2<f64>) -> f64 {
    a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonGap {
    pub gap: f64,
    pub trace: f64,
    /// `max |A − (Tr A/N) Id|` entrywise.
    pub proportionality_defect: f64,
    /// Bound on the defect implied by the gap.
    pub defect_bound: f64,
    pub equality: bool,
}

const WITNESS_TOL: f64 = 1e-12;

fn validate_witness(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if b.shape() != (n, n) || c.shape() != (n, n) {
        return Err(Error::InvalidWitness("witness shapes do not match A".into()));
    }
    let scale = b.amax().max(c.amax()).max(1.0);
    if (b - b.transpose()).amax() > WITNESS_TOL * scale {
        return Err(Error::InvalidWitness("B is not symmetric".into()));
    }
    if (c - c.transpose()).amax() > WITNESS_TOL * scale {
        return Err(Error::InvalidWitness("C is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(b.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if lo < -WITNESS_TOL * scale {
        return Err(Error::InvalidWitness(format!(
            "B is not positive semidefinite (eigenvalue {lo:e})"
        )));
    }
    if (b * c - a).amax() > WITNESS_TOL * scale * scale * n as f64 {
        return Err(Error::InvalidWitness("A differs from B·C".into()));
    }
    // Conditioning of B^{1/2}, which transports the symmetric estimate to A.
    Ok(if lo > 0.0 { (hi / lo).sqrt() } else { f64::INFINITY })
}

/// `(N−1)/(2N)·(Tr A)² − S₂(A)`. With a witness `A = BC` (B PSD, C
/// symmetric) the eigenvalues of `A` are real and the gap equals
/// `½ ∑ (λ_i − Tr A/N)²`.
pub fn newton_gap(a: &DMatrix<f64>, witness: Option<(&DMatrix<f64>, &DMatrix<f64>)>) -> Result<NewtonGap> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::Input("newton_gap needs a non-empty square matrix".into()));
    }
    let n = a.nrows() as f64;
    let cond = match witness {
        Some((b, c)) => validate_witness(a, b, c)?,
        None => 1.0,
    };
    let t = a.trace();
    let gap = (n - 1.0) / (2.0 * n) * t * t - s2_of_matrix(a);
    let shifted = a - DMatrix::identity(a.nrows(), a.ncols()) * (t / n);
    let defect = shifted.amax();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let defect_bound = cond * (2.0 * gap.max(0.0)).sqrt() + 1e-12 * scale;
    let equality = gap.abs() <= 1e-12 * (t * t).max(scale * scale);
    Ok(NewtonGap {
        gap,
        trace: t,
        proportionality_defect: defect,
        defect_bound,
        equality,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Recorded without a contract.
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub detail: String,
}

impl AuditCheck {
    /// `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self::new(name, value, tolerance, value <= tolerance, detail)
    }

    /// `value ≥ −tolerance`.
    pub fn at_least_neg(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self::new(name, value, tolerance, value >= -tolerance, detail)
    }

    pub fn info(name: &str, value: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: f64::NAN,
            verdict: Verdict::Info,
            detail: detail.into(),
        }
    }

    fn new(name: &str, value: f64, tolerance: f64, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            verdict: if ok && value.is_finite() {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    pub pass: bool,
    pub masked_cells: usize,
    pub total_cells: usize,
}

impl AuditReport {
    pub fn new(checks: Vec<AuditCheck>, masked_cells: usize, total_cells: usize) -> Self {
        let pass = checks.iter().all(|c| c.verdict != Verdict::Fail);
        Self {
            checks,
            pass,
            masked_cells,
            total_cells,
        }
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Default discrete tolerance `5 · h · scale`.
pub fn tol_discrete(grid: &SectorGrid, scale: f64) -> f64 {
    5.0 * grid.mesh_width() * scale
}

fn require_euclidean(grid: &SectorGrid) -> Result<()> {
    if grid.curvature() != 0.0 {
        return Err(Error::Unsupported("Euclidean identities need a K = 0 grid".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct WStatistics {
    pub trace_deviation: f64,
    pub identity_defect: f64,
    pub newton_gap_min: f64,
    pub active_cells: usize,
    pub masked_cells: usize,
}

/// `max |Tr W + 1|`, `max ‖W + Id/N‖∞` and `min` Newton gap over interior
/// unmasked cells.
pub fn w_statistics(w: &MatrixField, n: usize) -> WStatistics {
    let nf = n as f64;
    let mut stats = WStatistics {
        trace_deviation: 0.0,
        identity_defect: 0.0,
        newton_gap_min: f64::INFINITY,
        active_cells: 0,
        masked_cells: w.masked_count(),
    };
    for c in w.active() {
        let m = &w.values[c];
        let t = m.trace();
        stats.trace_deviation = stats.trace_deviation.max((t + 1.0).abs());
        stats.identity_defect = stats.identity_defect.max((m + Matrix2::identity() / nf).amax());
        let gap = (nf - 1.0) / (2.0 * nf) * t * t - s2_2x2(m);
        stats.newton_gap_min = stats.newton_gap_min.min(gap);
        stats.active_cells += 1;
    }
    if stats.active_cells == 0 {
        stats.newton_gap_min = 0.0;
    }
    stats
}

#[derive(Debug, Clone, Copy)]
pub struct WTolerances {
    pub trace: f64,
    pub identity: f64,
    pub newton: f64,
}

/// Trace, Newton and (for radial reference fields) equality-case checks on `W`.
pub fn audit_w(
    grid: &SectorGrid,
    w: &MatrixField,
    radial_reference: bool,
    tol: WTolerances,
) -> Result<Vec<AuditCheck>> {
    require_euclidean(grid)?;
    if w.nr != grid.nr || w.nt != grid.nt {
        return Err(Error::InvalidGrid("W field does not match the grid".into()));
    }
    let s = w_statistics(w, 2);
    let mut out = vec![
        AuditCheck::at_most(
            "trace_w",
            s.trace_deviation,
            tol.trace,
            "max |Tr W + 1| on interior cells",
        ),
        AuditCheck::at_least_neg("newton_gap", s.newton_gap_min, tol.newton, "min per-cell Newton gap"),
    ];
    let detail = "max ‖W + Id/N‖∞ on interior cells";
    out.push(if radial_reference {
        AuditCheck::at_most("w_identity", s.identity_defect, tol.identity, detail)
    } else {
        AuditCheck::info("w_identity", s.identity_defect, detail)
    });
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Pohozaev {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub relative: f64,
}

/// `∫_Ω [(N+1)u − N f(|∇u|)]` against `∫_{Γ₀} [f'(|∇u|)|∇u| − f(|∇u|)] x·ν`.
pub fn pohozaev_residual(grid: &SectorGrid, u: &ScalarField, profile: &OperatorProfile) -> Result<Pohozaev> {
    require_euclidean(grid)?;
    let n = 2.0;
    let grad = gradient_field(grid, u)?;
    let vols = grid.volumes();
    let mut lhs = 0.0;
    for (c, v) in vols.iter().enumerate() {
        let g = grad.values[c];
        lhs += v * ((n + 1.0) * u.values[c] - n * profile.f(g[0].hypot(g[1])));
    }
    let dn = normal_derivative_gamma0(grid, u)?;
    let mut rhs = 0.0;
    for (j, d) in dn.iter().enumerate() {
        let t = d.abs();
        let theta = grid.theta(j);
        let big_r = grid.boundary.value(theta);
        let dr = grid.boundary.d1(theta);
        let x_dot_nu = big_r * big_r / (big_r * big_r + dr * dr).sqrt();
        rhs += grid.gamma0_weight(j) * (profile.f_prime(t) * t - profile.f(t)) * x_dot_nu;
    }
    let residual = lhs - rhs;
    let denom = lhs.abs().max(rhs.abs());
    Ok(Pohozaev {
        lhs,
        rhs,
        residual,
        relative: if denom > 0.0 { residual.abs() / denom } else { 0.0 },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityGap {
    pub gap: f64,
    /// `∫ |2 S₂(W) u| + ∫ |S²_ij V_{ξ_i} u_j|`, the natural size of the terms.
    pub scale: f64,
    pub s2_term: f64,
    pub flux_term: f64,
    pub convex: bool,
}

/// `2∫ S₂(W) u + ∫ S²_ij(W) V_{ξ_i}(∇u) u_j` over unmasked cells.
pub fn integral_inequality_gap(
    grid: &SectorGrid,
    u: &ScalarField,
    w: &MatrixField,
    profile: &OperatorProfile,
) -> Result<InequalityGap> {
    require_euclidean(grid)?;
    let grad = gradient_field(grid, u)?;
    let vols = grid.volumes();
    let (mut s2_term, mut flux_term, mut scale) = (0.0, 0.0, 0.0);
    for (c, vol) in vols.iter().enumerate() {
        if w.masked[c] {
            continue;
        }
        let m = &w.values[c];
        let t = m.trace();
        let g = grad.values[c];
        let a = mapped_gradient(profile, g);
        let a1 = 2.0 * s2_2x2(m) * u.values[c];
        let mut a2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let s2ij = -m[(j, i)] + if i == j { t } else { 0.0 };
                a2 += s2ij * a[i] * g[j];
            }
        }
        s2_term += vol * a1;
        flux_term += vol * a2;
        scale += vol * (a1.abs() + a2.abs());
    }
    Ok(InequalityGap {
        gap: s2_term + flux_term,
        scale,
        s2_term,
        flux_term,
        convex: grid.is_convex(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NeumannStats {
    /// Length-weighted mean of `−∂_ν u` over `Γ₀`.
    pub mean: f64,
    /// Length-weighted standard deviation.
    pub std: f64,
    pub max_deviation: f64,
    pub min: f64,
    pub max: f64,
}

pub fn neumann_statistics(grid: &SectorGrid, u: &ScalarField) -> Result<NeumannStats> {
    let dn = normal_derivative_gamma0(grid, u)?;
    let weights: Vec<f64> = (0..grid.nt).map(|j| grid.gamma0_weight(j)).collect();
    let total: f64 = weights.iter().sum();
    let mean = dn.iter().zip(&weights).map(|(d, w)| -d * w).sum::<f64>() / total;
    let var = dn
        .iter()
        .zip(&weights)
        .map(|(d, w)| w * (-d - mean).powi(2))
        .sum::<f64>()
        / total;
    let (mut lo, mut hi, mut dev) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64);
    for d in &dn {
        lo = lo.min(-d);
        hi = hi.max(-d);
        dev = dev.max((-d - mean).abs());
    }
    Ok(NeumannStats {
        mean,
        std: var.sqrt(),
        max_deviation: dev,
        min: lo,
        max: hi,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CConsistency {
    pub c_mean: f64,
    pub c_formula: f64,
    pub spread: f64,
    pub max_deviation: f64,
}

/// Measured Neumann constant against the value forced by integrating the
/// equation: `g'(|Ω|/|Γ₀|)` for `K = 0`, and `(|Ω| + NK∫u)/|Γ₀|` for the
/// linear space-form equation.
pub fn c_consistency(grid: &SectorGrid, u: &ScalarField, profile: &OperatorProfile) -> Result<CConsistency> {
    let stats = neumann_statistics(grid, u)?;
    let (area, length) = grid.boundary_measures();
    let k = grid.curvature();
    let c_formula = if k == 0.0 {
        profile.g_prime(area / length)?
    } else {
        if !profile.is_laplacian() {
            return Err(Error::Unsupported(
                "space-form consistency is defined for the Laplacian only".into(),
            ));
        }
        let integral: f64 = grid.volumes().iter().zip(&u.values).map(|(v, x)| v * x).sum();
        (area + 2.0 * k * integral) / length
    };
    Ok(CConsistency {
        c_mean: stats.mean,
        c_formula,
        spread: stats.std,
        max_deviation: stats.max_deviation,
    })
}

/// Discrete `L²` norm of `W` over unmasked cells.
pub fn w12_diagnostic(grid: &SectorGrid, w: &MatrixField) -> f64 {
    let vols = grid.volumes();
    vols.iter()
        .enumerate()
        .filter(|(c, _)| !w.masked[*c])
        .map(|(c, v)| v * w.values[c].norm_squared())
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AuditOptions {
    /// Treat the field as a radial reference (enables the `W = −Id/N` contract).
    pub radial_reference: bool,
    pub w: Option<WTolerances>,
    pub pohozaev: Option<f64>,
    /// Relative to the inequality's scale.
    pub inequality: Option<f64>,
    pub c_relative: Option<f64>,
}

/// Runs every Euclidean check on a field. Tolerances default to
/// `tol_discrete` with the natural scale of each quantity.
pub fn audit_euclidean(
    grid: &SectorGrid,
    u: &ScalarField,
    profile: &OperatorProfile,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    require_euclidean(grid)?;
    u.check_grid(grid)?;
    let td = tol_discrete(grid, 1.0);
    let w = hessian_w_field(grid, u, profile)?;
    let wtol = opts.w.unwrap_or(WTolerances {
        trace: td,
        identity: td,
        newton: 1e-10,
    });
    let mut checks = audit_w(grid, &w, opts.radial_reference, wtol)?;

    let poh = pohozaev_residual(grid, u, profile)?;
    checks.push(AuditCheck::at_most(
        "pohozaev",
        poh.relative,
        opts.pohozaev.unwrap_or(td),
        format!("lhs {:.6e}, rhs {:.6e}", poh.lhs, poh.rhs),
    ));

    let ineq = integral_inequality_gap(grid, u, &w, profile)?;
    let itol = opts.inequality.unwrap_or(td) * ineq.scale;
    if ineq.convex {
        checks.push(AuditCheck::at_least_neg(
            "integral_inequality",
            ineq.gap,
            itol,
            format!("scale {:.6e}", ineq.scale),
        ));
        let eq = ineq.gap.abs() <= itol;
        let detail = "equality expected on constant-radius convex sectors";
        let mut check = AuditCheck::info("integral_inequality_equality", if eq { 1.0 } else { 0.0 }, detail);
        if opts.radial_reference {
            check = AuditCheck::at_most("integral_inequality_equality", ineq.gap.abs(), itol, detail);
        }
        checks.push(check);
    } else {
        checks.push(AuditCheck::info(
            "integral_inequality",
            ineq.gap,
            "non-convex cone: sign not guaranteed",
        ));
    }

    let cc = c_consistency(grid, u, profile)?;
    let ctol = opts.c_relative.unwrap_or(td) * cc.c_formula.abs();
    checks.push(AuditCheck::at_most(
        "c_consistency",
        (cc.c_mean - cc.c_formula).abs(),
        ctol,
        format!("c_mean {:.6e}, c_formula {:.6e}", cc.c_mean, cc.c_formula),
    ));
    checks.push(AuditCheck::info("c_spread", cc.spread, "length-weighted std of −∂_ν u"));
    checks.push(AuditCheck::info("w12_norm", w12_diagnostic(grid, &w), "L² norm of W"));
    let stats = w_statistics(&w, 2);
    if stats.identity_defect > 0.0 {
        checks.push(AuditCheck::info(
            "equality_propagation_ratio",
            cc.spread / stats.identity_defect,
            "c spread over max ‖W + Id/N‖∞",
        ));
    }
    Ok(AuditReport::new(checks, w.masked_count(), grid.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Model;
    use crate::mesh::GridSpec;
    use crate::oracles::RadialSolutionEuclidean;
    use crate::profiles::make_power_profile;
    use crate::solver::solve_linear_spaceform;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    fn sector(alpha: f64, eps: f64, n: usize) -> SectorGrid {
        GridSpec {
            space_form: Model::Euclidean,
            alpha,
            r0: 1.0,
            epsilon: eps,
            k: 2,
            nr: n,
            nt: n,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn s2_examples() {
        assert_eq!(s2_of_matrix(&DMatrix::identity(2, 2)), 1.0);
        assert_eq!(s2_of_matrix(&m(&[&[1.0, 0.0], &[0.0, 0.0]])), 0.0);
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert!((s2_of_matrix(&a) + 2.0).abs() < 1e-15);
        assert!((s2_contracted(&a) + 2.0).abs() < 1e-15);
        assert!((s2_principal_minors(&a) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn newton_examples() {
        let id = DMatrix::identity(2, 2);
        let g = newton_gap(&id, None).unwrap();
        assert_eq!(g.gap, 0.0);
        assert!(g.equality && g.proportionality_defect == 0.0);

        let b = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let g = newton_gap(&b, Some((&b, &id))).unwrap();
        assert!((g.gap - 0.25).abs() < 1e-15);
        assert!(!g.equality);

        let b = m(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let g = newton_gap(&b, Some((&b, &id))).unwrap();
        assert!((g.gap - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bad_witnesses_rejected() {
        let id = DMatrix::identity(2, 2);
        let nonsym = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(newton_gap(&nonsym, Some((&nonsym, &id))).is_err());
        let indef = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(newton_gap(&indef, Some((&indef, &id))).is_err());
        let a = m(&[&[5.0, 0.0], &[0.0, 1.0]]);
        assert!(newton_gap(&a, Some((&id, &id))).is_err());
    }

    fn laplace_oracle_field(g: &SectorGrid) -> ScalarField {
        let o = RadialSolutionEuclidean::at_origin(make_power_profile(2.0).unwrap(), 2, 1.0).unwrap();
        ScalarField::from_oracle(g, &o).unwrap()
    }

    #[test]
    fn pohozaev_on_disk_and_sector() {
        let lap = make_power_profile(2.0).unwrap();
        let g = sector(2.0 * PI, 0.0, 64);
        let p = pohozaev_residual(&g, &laplace_oracle_field(&g), &lap).unwrap();
        assert!((p.rhs - PI / 4.0).abs() < 1e-12, "{p:?}");
        assert!(p.relative < 1e-2, "{p:?}");
        let g = sector(FRAC_PI_2, 0.0, 64);
        let q = pohozaev_residual(&g, &laplace_oracle_field(&g), &lap).unwrap();
        assert!((q.rhs - PI / 16.0).abs() < 1e-12);
        assert!(q.relative < 1e-2);
        let z = pohozaev_residual(&g, &ScalarField::zeros(&g), &lap).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
    }

    #[test]
    fn oracle_audit_passes() {
        let lap = make_power_profile(2.0).unwrap();
        let g = sector(FRAC_PI_2, 0.0, 32);
        let u = laplace_oracle_field(&g);
        let report = audit_euclidean(
            &g,
            &u,
            &lap,
            &AuditOptions {
                radial_reference: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.pass, "{report:#?}");
        let w = hessian_w_field(&g, &u, &lap).unwrap();
        let norm = w12_diagnostic(&g, &w);
        let area = g.boundary_measures().0;
        assert!((norm - (area / 2.0).sqrt()).abs() < 1e-2);
    }

    #[test]
    fn c_consistency_examples() {
        let lap = make_power_profile(2.0).unwrap();
        let g = sector(FRAC_PI_2, 0.0, 32);
        let (u, _) = solve_linear_spaceform(&g, 2, 0.0).unwrap();
        let c = c_consistency(&g, &u, &lap).unwrap();
        assert!((c.c_formula - 0.5).abs() < 1e-12);
        assert!((c.c_mean - 0.5).abs() < 1e-10, "{c:?}");
        assert!(c.spread < 1e-10);
        let g = sector(FRAC_PI_2, 0.1, 32);
        let (u, _) = solve_linear_spaceform(&g, 2, 0.0).unwrap();
        let c = c_consistency(&g, &u, &lap).unwrap();
        assert!(c.spread > 1e-3);
    }

    #[test]
    fn zero_field_gaps() {
        let lap = make_power_profile(2.0).unwrap();
        let g = sector(FRAC_PI_2, 0.0, 16);
        let z = ScalarField::zeros(&g);
        let w = hessian_w_field(&g, &z, &lap).unwrap();
        assert_eq!(integral_inequality_gap(&g, &z, &w, &lap).unwrap().gap, 0.0);
        assert_eq!(w12_diagnostic(&g, &w), 0.0);
    }
}
