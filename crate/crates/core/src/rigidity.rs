//! End-to-end experiments: deviation of the Neumann data under boundary
//! perturbation, convexity contrasts and convergence studies.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, GridSize};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{Model, SpaceForm};
use crate::identities::{
    audit_euclidean, c_consistency, integral_inequality_gap, w_statistics, AuditOptions, AuditReport,
};
use crate::mesh::SectorGrid;
use crate::oracles::{RadialOracle, RadialSolutionEuclidean, RadialSolutionSpaceForm};
use crate::pfunction::{
    hessian_proportionality_defect, p_field, pfunction_report, wall_normal_derivative, PFieldOptions,
};
use crate::solver::{hessian_w_field, solve_lf_with, solve_linear_spaceform_with, SolveReport};

/// Solves the configured equation on `grid`: `L_f u = −1` for `K = 0`,
/// `Δu + NKu = −1` otherwise.
pub fn solve_configured(cfg: &ExperimentConfig, grid: &SectorGrid) -> Result<(ScalarField, SolveReport)> {
    let opts = cfg.solver_options();
    match cfg.space_form {
        Model::Euclidean => solve_lf_with(grid, &cfg.profile()?, &cfg.schedule, &opts),
        _ => solve_linear_spaceform_with(grid, cfg.dimension, cfg.curvature(), &opts),
    }
}

/// Radial oracle for the unperturbed domain of `cfg`.
pub fn configured_oracle(cfg: &ExperimentConfig) -> Result<Box<dyn RadialOracle>> {
    Ok(match cfg.space_form {
        Model::Euclidean => Box::new(RadialSolutionEuclidean::at_origin(
            cfg.profile()?,
            cfg.dimension,
            cfg.r0,
        )?),
        m => Box::new(RadialSolutionSpaceForm::at_pole(
            SpaceForm::new(m),
            cfg.dimension,
            cfg.r0,
        )?),
    })
}

/// Audits a field with the model-appropriate auditor.
pub fn audit_configured(
    cfg: &ExperimentConfig,
    grid: &SectorGrid,
    u: &ScalarField,
    radial: bool,
) -> Result<AuditReport> {
    match cfg.space_form {
        Model::Euclidean => audit_euclidean(
            grid,
            u,
            &cfg.profile()?,
            &AuditOptions {
                radial_reference: radial,
                pohozaev: Some(cfg.tolerances.pohozaev),
                ..Default::default()
            },
        ),
        _ => Ok(pfunction_report(
            grid,
            u,
            cfg.dimension,
            cfg.curvature(),
            PFieldOptions {
                radial_reference: radial,
            },
        )?
        .audit),
    }
}

fn pass_rate(report: &AuditReport) -> f64 {
    use crate::identities::Verdict;
    let judged: Vec<_> = report.checks.iter().filter(|c| c.verdict != Verdict::Info).collect();
    if judged.is_empty() {
        return 1.0;
    }
    judged.iter().filter(|c| c.verdict == Verdict::Pass).count() as f64 / judged.len() as f64
}

/// Proportionality defect: `‖W + Id/N‖∞` for `K = 0`, the covariant Hessian
/// defect otherwise.
fn defect(cfg: &ExperimentConfig, grid: &SectorGrid, u: &ScalarField) -> Result<f64> {
    match cfg.space_form {
        Model::Euclidean => {
            let w = hessian_w_field(grid, u, &cfg.profile()?)?;
            Ok(w_statistics(&w, cfg.dimension).identity_defect)
        }
        _ => hessian_proportionality_defect(grid, u, cfg.dimension, cfg.curvature()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityRow {
    pub epsilon: f64,
    /// Length-weighted standard deviation of `−∂_ν u` over `Γ₀`.
    pub sigma: f64,
    pub max_deviation: f64,
    pub c_mean: f64,
    pub c_formula: f64,
    pub defect: f64,
    /// Fraction of judged audit checks that pass.
    pub audit_pass_rate: f64,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    /// `σ(0) ≤ sigma_zero·c` for `ε = 0`, `σ` above the previous row otherwise.
    pub pass: bool,
    pub message: Option<String>,
}

impl RigidityRow {
    fn failed(epsilon: f64, message: String) -> Self {
        Self {
            epsilon,
            sigma: f64::NAN,
            max_deviation: f64::NAN,
            c_mean: f64::NAN,
            c_formula: f64::NAN,
            defect: f64::NAN,
            audit_pass_rate: 0.0,
            converged: false,
            residual: f64::NAN,
            iterations: 0,
            pass: false,
            message: Some(message),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityReport {
    pub space_form: Model,
    pub profile: String,
    pub alpha: f64,
    pub r0: f64,
    pub grid: String,
    pub mode: u32,
    /// `"w"` for `K = 0`, `"hessian"` otherwise.
    pub defect_kind: String,
    pub rows: Vec<RigidityRow>,
    pub sigma_zero_ok: Option<bool>,
    pub monotone: bool,
    pub all_converged: bool,
    pub pass: bool,
}

impl RigidityReport {
    pub fn row(&self, epsilon: f64) -> Option<&RigidityRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon)
    }
}

fn scan_row(cfg: &ExperimentConfig, size: GridSize, epsilon: f64) -> RigidityRow {
    let run = || -> Result<RigidityRow> {
        let grid = cfg.build_grid(size, epsilon)?;
        let (u, rep) = solve_configured(cfg, &grid)?;
        let cc = c_consistency(&grid, &u, &cfg.profile()?)?;
        let audit = audit_configured(cfg, &grid, &u, epsilon == 0.0)?;
        Ok(RigidityRow {
            epsilon,
            sigma: cc.spread,
            max_deviation: cc.max_deviation,
            c_mean: cc.c_mean,
            c_formula: cc.c_formula,
            defect: defect(cfg, &grid, &u)?,
            audit_pass_rate: pass_rate(&audit),
            converged: rep.converged,
            residual: rep.final_residual,
            iterations: rep.iterations,
            pass: rep.converged,
            message: rep.message,
        })
    };
    run().unwrap_or_else(|e| RigidityRow::failed(epsilon, e.to_string()))
}

fn require_convex(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.alpha > std::f64::consts::PI {
        return Err(Error::Unsupported(format!(
            "alpha = {} exceeds π; the cone is not convex (use convexity_contrast)",
            cfg.alpha
        )));
    }
    Ok(())
}

/// Solves and audits every `ε` of `cfg` on the configured grid.
pub fn deviation_scan(cfg: &ExperimentConfig) -> Result<RigidityReport> {
    deviation_scan_at(cfg, cfg.grid)
}

/// [`deviation_scan`] on a grid of the given size. Cases run in parallel and
/// are assembled in configuration order; a failed case yields a failed row.
pub fn deviation_scan_at(cfg: &ExperimentConfig, size: GridSize) -> Result<RigidityReport> {
    cfg.validate()?;
    require_convex(cfg)?;
    let mut rows: Vec<RigidityRow> = cfg.epsilons.par_iter().map(|&e| scan_row(cfg, size, e)).collect();

    let sigma_zero_ok = rows.iter_mut().find(|r| r.epsilon == 0.0).map(|r| {
        let ok = r.sigma <= cfg.tolerances.sigma_zero * r.c_mean.abs();
        r.pass &= ok;
        ok
    });
    let mut monotone = true;
    for i in 1..rows.len() {
        let up = rows[i].sigma > rows[i - 1].sigma;
        monotone &= up;
        rows[i].pass &= up;
    }
    let all_converged = rows.iter().all(|r| r.converged);
    let pass = rows.iter().all(|r| r.pass);
    Ok(RigidityReport {
        space_form: cfg.space_form,
        profile: cfg.profile.clone(),
        alpha: cfg.alpha,
        r0: cfg.r0,
        grid: size.to_string(),
        mode: cfg.mode,
        defect_kind: if cfg.space_form == Model::Euclidean {
            "w"
        } else {
            "hessian"
        }
        .into(),
        rows,
        sigma_zero_ok,
        monotone,
        all_converged,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastRow {
    pub epsilon: f64,
    pub sigma: f64,
    pub c_mean: f64,
    /// Integral inequality gap and its scale (`K = 0`).
    pub inequality_gap: Option<f64>,
    pub inequality_scale: Option<f64>,
    /// Largest outward `∂_ν P` on the walls (Laplacian or `K ≠ 0`).
    pub wall_dnu_p_max: Option<f64>,
    pub converged: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastReport {
    pub alpha: f64,
    pub convex: bool,
    /// Whether the pole-centered oracle passes every equality audit.
    pub oracle_audit_pass: bool,
    pub oracle_audit: AuditReport,
    pub rows: Vec<ContrastRow>,
}

fn contrast_row(cfg: &ExperimentConfig, epsilon: f64) -> ContrastRow {
    let run = || -> Result<ContrastRow> {
        let grid = cfg.build_grid(cfg.grid, epsilon)?;
        let (u, rep) = solve_configured(cfg, &grid)?;
        let profile = cfg.profile()?;
        let cc = c_consistency(&grid, &u, &profile)?;
        let (mut gap, mut scale) = (None, None);
        if cfg.space_form == Model::Euclidean {
            let w = hessian_w_field(&grid, &u, &profile)?;
            let g = integral_inequality_gap(&grid, &u, &w, &profile)?;
            gap = Some(g.gap);
            scale = Some(g.scale);
        }
        let wall = if profile.is_laplacian() {
            let p = p_field(&grid, &u, cfg.dimension, cfg.curvature())?;
            Some(
                wall_normal_derivative(&grid, &p)?
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max),
            )
        } else {
            None
        };
        Ok(ContrastRow {
            epsilon,
            sigma: cc.spread,
            c_mean: cc.c_mean,
            inequality_gap: gap,
            inequality_scale: scale,
            wall_dnu_p_max: wall,
            converged: rep.converged,
            message: rep.message,
        })
    };
    run().unwrap_or_else(|e| ContrastRow {
        epsilon,
        sigma: f64::NAN,
        c_mean: f64::NAN,
        inequality_gap: None,
        inequality_scale: None,
        wall_dnu_p_max: None,
        converged: false,
        message: Some(e.to_string()),
    })
}

/// Runs the same audits on a cone with `α ≥ π`, where convexity no longer
/// constrains the inequality signs. Rows are reported without a contract;
/// the oracle audit on the unperturbed sector is judged.
pub fn convexity_contrast(cfg: &ExperimentConfig) -> Result<ContrastReport> {
    cfg.validate()?;
    if cfg.alpha < std::f64::consts::PI {
        return Err(Error::Unsupported(format!(
            "convexity contrast needs alpha ≥ π, got {}",
            cfg.alpha
        )));
    }
    let grid = cfg.build_grid(cfg.grid, 0.0)?;
    let oracle = configured_oracle(cfg)?;
    let u = ScalarField::from_oracle(&grid, oracle.as_ref())?;
    let oracle_audit = audit_configured(cfg, &grid, &u, true)?;
    let rows = cfg.epsilons.par_iter().map(|&e| contrast_row(cfg, e)).collect();
    Ok(ContrastReport {
        alpha: cfg.alpha,
        convex: grid.is_convex(),
        oracle_audit_pass: oracle_audit.pass,
        oracle_audit,
        rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub grid: String,
    pub h: f64,
    pub linf: f64,
    pub l2: f64,
    /// `log₂` of the error ratio to the previous level.
    pub order_linf: Option<f64>,
    pub order_l2: Option<f64>,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub space_form: Model,
    pub profile: String,
    pub rows: Vec<ConvergenceRow>,
    pub monotone_linf: bool,
    pub all_converged: bool,
}

/// Errors against the oracle over the dyadic levels of `cfg`, at `ε = 0`.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if cfg.levels.len() < 3 {
        return Err(Error::Input(format!(
            "a convergence study needs at least 3 levels, got {}",
            cfg.levels.len()
        )));
    }
    let oracle = configured_oracle(cfg)?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.levels.len());
    for &size in &cfg.levels {
        let grid = cfg.build_grid(size, 0.0)?;
        let (u, rep) = solve_configured(cfg, &grid)?;
        let exact = ScalarField::from_oracle(&grid, oracle.as_ref())?;
        let vols = grid.volumes();
        let (mut linf, mut l2) = (0.0_f64, 0.0);
        for ((a, b), v) in u.values.iter().zip(&exact.values).zip(&vols) {
            linf = linf.max((a - b).abs());
            l2 += v * (a - b).powi(2);
        }
        let l2 = l2.sqrt();
        let (order_linf, order_l2) = match rows.last() {
            Some(prev) => (Some((prev.linf / linf).log2()), Some((prev.l2 / l2).log2())),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            grid: size.to_string(),
            h: grid.mesh_width(),
            linf,
            l2,
            order_linf,
            order_l2,
            residual: rep.final_residual,
            converged: rep.converged,
        });
    }
    Ok(ConvergenceReport {
        space_form: cfg.space_form,
        profile: cfg.profile.clone(),
        monotone_linf: rows.windows(2).all(|w| w[1].linf < w[0].linf),
        all_converged: rows.iter().all(|r| r.converged),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn cfg(model: Model, profile: &str, n: usize) -> ExperimentConfig {
        ExperimentConfig::new(model, profile, FRAC_PI_2, 1.0, GridSize::square(n)).unwrap()
    }

    #[test]
    fn laplacian_scan_is_monotone() {
        for model in [Model::Euclidean, Model::Hyperbolic] {
            let rep = deviation_scan(&cfg(model, "laplacian", 32)).unwrap();
            assert!(rep.pass, "{rep:#?}");
            assert_eq!(rep.rows.len(), 4);
            assert!(rep.rows[0].sigma < 1e-10);
            assert!(rep.rows.iter().all(|r| r.converged));
        }
    }

    #[test]
    fn p3_scan_separates() {
        let mut c = cfg(Model::Euclidean, "p-laplacian:3", 32);
        c.epsilons = vec![0.0, 0.1];
        let rep = deviation_scan(&c).unwrap();
        assert!(rep.rows[1].sigma > 5.0 * rep.rows[0].sigma, "{rep:#?}");
        assert!(rep.pass);
    }

    #[test]
    fn scan_rejects_nonconvex_and_reports_failures() {
        let mut c = cfg(Model::Euclidean, "laplacian", 32);
        c.alpha = 4.0;
        assert!(deviation_scan(&c).is_err());
        let mut c = cfg(Model::Euclidean, "p-laplacian:3", 32);
        c.epsilons = vec![0.0];
        c.tolerances.max_picard = 1;
        let rep = deviation_scan(&c).unwrap();
        assert!(!rep.rows[0].converged && !rep.pass && !rep.all_converged);
    }

    #[test]
    fn contrast_on_reflex_cone() {
        let mut c = cfg(Model::Euclidean, "laplacian", 32);
        c.alpha = 1.5 * std::f64::consts::PI;
        c.epsilons = vec![0.0, 0.1];
        let rep = convexity_contrast(&c).unwrap();
        assert!(!rep.convex);
        assert!(rep.oracle_audit_pass, "{:#?}", rep.oracle_audit);
        assert!(rep.rows.iter().all(|r| r.converged && r.inequality_gap.is_some()));
        c.alpha = std::f64::consts::PI;
        let rep = convexity_contrast(&c).unwrap();
        assert!(rep.convex && rep.oracle_audit_pass);
        c.alpha = FRAC_PI_2;
        assert!(convexity_contrast(&c).is_err());
    }

    #[test]
    fn convergence_orders() {
        for model in [Model::Euclidean, Model::Hyperbolic] {
            let rep = convergence_study(&cfg(model, "laplacian", 64)).unwrap();
            assert!(rep.monotone_linf && rep.all_converged);
            for r in &rep.rows[1..] {
                let o = r.order_linf.unwrap();
                assert!((1.7..=2.3).contains(&o), "{model}: {rep:#?}");
            }
        }
        let rep = convergence_study(&cfg(Model::Euclidean, "p-laplacian:3", 64)).unwrap();
        assert!(rep.rows[1..].iter().all(|r| r.order_linf.unwrap() >= 1.0), "{rep:#?}");
    }
}
