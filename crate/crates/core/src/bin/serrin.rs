//! `serrin`: command-line front end.
//!
//! Exit codes: 0 all audits pass, 2 audit failures, 3 solver
//! non-convergence, 4 configuration error, 1 any other failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use serrin_core::config::{parse_config, ExperimentConfig, GridSize};
use serrin_core::geometry::{Model, SpaceForm};
use serrin_core::identities::{audit_euclidean, AuditOptions};
use serrin_core::oracles::{oracle_table, RadialOracle, RadialSolutionEuclidean, RadialSolutionSpaceForm};
use serrin_core::pfunction::{pfunction_report, PFieldOptions};
use serrin_core::profiles::ProfileRegistry;
use serrin_core::report::{
    audit_csv, convergence_csv, emit_reports, oracle_csv, read_solution_csv, rigidity_csv, solution_csv,
    to_sorted_json, RunManifest, Timing,
};
use serrin_core::rigidity::{convergence_study, convexity_contrast, deviation_scan, solve_configured};
use serrin_core::Error;

const EXIT_AUDIT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(
    name = "serrin",
    version,
    about = "Overdetermined-problem laboratory on sectors in cones"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Output {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record wall time in the manifest (the manifest is then not reproducible).
    #[arg(long)]
    record_timing: bool,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value = "euclidean")]
    space_form: Model,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    alpha: f64,
    #[arg(long = "R0", default_value_t = 1.0)]
    r0: f64,
    /// Boundary perturbation amplitude.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Angular mode of the perturbation.
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// Cell counts, e.g. 64x64.
    #[arg(long, default_value = "64x64")]
    grid: GridSize,
    #[arg(long, default_value = "laplacian")]
    profile: String,
}

impl GridArgs {
    fn config(&self) -> serrin_core::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.space_form, &self.profile, self.alpha, self.r0, self.grid)?;
        cfg.epsilons = vec![self.eps];
        cfg.mode = self.k;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate a radial oracle: d, u, u', residual, c.
    Oracle {
        #[arg(long, default_value = "euclidean")]
        space_form: Model,
        #[arg(long, default_value = "laplacian")]
        profile: String,
        /// Model dimension N.
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        #[arg(long = "R0", default_value_t = 1.0)]
        r0: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Solve on a sector and write the solution CSV and solve report.
    Solve {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Euclidean identity audit of a solution CSV.
    Audit {
        #[arg(long)]
        solution: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Treat the field as a radial reference solution.
        #[arg(long)]
        radial: bool,
        #[command(flatten)]
        output: Output,
    },
    /// P-function audit of a solution CSV (Laplacian, any space form).
    Pfunction {
        #[arg(long)]
        solution: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        radial: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Deviation scan over the configured perturbations (or a convexity
    /// contrast when alpha > π).
    Rigidity {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Errors against the oracle over the configured grid levels.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. }
            | Error::InvalidProfile(_)
            | Error::InvalidGeometry(_)
            | Error::InvalidGrid(_)
            | Error::OutOfDomain { .. }
            | Error::Unsupported(_) => EXIT_CONFIG,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn read(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn json_value<T: Serialize>(v: &T) -> serrin_core::Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn finish(
    output: &Output,
    stem: &str,
    files: &[(&str, String)],
    mut manifest: RunManifest,
    started: Instant,
) -> serrin_core::Result<()> {
    if output.record_timing {
        manifest.timing = Some(Timing {
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    for path in emit_reports(&output.out, stem, files, manifest)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let started = Instant::now();
    match cli.command {
        Command::Oracle {
            space_form,
            profile,
            dimension,
            r0,
            samples,
            output,
        } => {
            let oracle: Box<dyn RadialOracle> = match space_form {
                Model::Euclidean => {
                    let p = ProfileRegistry::with_builtins().resolve(&profile)?;
                    Box::new(RadialSolutionEuclidean::at_origin(p, dimension, r0)?)
                }
                m => Box::new(RadialSolutionSpaceForm::at_pole(SpaceForm::new(m), dimension, r0)?),
            };
            let text = oracle_csv(&oracle_table(oracle.as_ref(), samples)?);
            print!("{text}");
            let config = serde_json::json!({
                "space_form": space_form, "profile": profile, "dimension": dimension, "R0": r0, "samples": samples,
            });
            finish(
                &output,
                "oracle",
                &[("csv", text)],
                RunManifest::new("oracle", config, None),
                started,
            )?;
            Ok(0)
        }
        Command::Solve {
            grid,
            tol,
            omega,
            output,
        } => {
            let mut cfg = grid.config()?;
            if let Some(t) = tol {
                cfg.tolerances.solver = t;
            }
            cfg.omega = omega;
            cfg.validate()?;
            let g = cfg.build_grid(cfg.grid, grid.eps)?;
            let (u, report) = solve_configured(&cfg, &g)?;
            let files = [
                ("solution.csv", solution_csv(&g, &u)?),
                ("report.json", to_sorted_json(&report)?),
            ];
            let manifest = RunManifest::new("solve", json_value(&cfg)?, Some(g.grid_hash()));
            finish(&output, "solve", &files, manifest, started)?;
            if !report.converged {
                return Err(Failure {
                    code: EXIT_SOLVER,
                    message: format!(
                        "solver did not converge: residual {:.3e} > {:.3e}",
                        report.final_residual, report.tolerance
                    ),
                });
            }
            Ok(0)
        }
        Command::Audit {
            solution,
            grid,
            radial,
            output,
        } => {
            let cfg = grid.config()?;
            let g = cfg.build_grid(cfg.grid, grid.eps)?;
            let u = read_solution_csv(&g, &read(&solution)?)?;
            let opts = AuditOptions {
                radial_reference: radial,
                ..Default::default()
            };
            let report = audit_euclidean(&g, &u, &cfg.profile()?, &opts)?;
            let files = [
                ("report.json", to_sorted_json(&report)?),
                ("checks.csv", audit_csv(&report)),
            ];
            let manifest = RunManifest::new("audit", json_value(&cfg)?, Some(g.grid_hash()));
            finish(&output, "audit", &files, manifest, started)?;
            Ok(if report.pass { 0 } else { EXIT_AUDIT })
        }
        Command::Pfunction {
            solution,
            grid,
            radial,
            output,
        } => {
            let cfg = grid.config()?;
            let g = cfg.build_grid(cfg.grid, grid.eps)?;
            let u = read_solution_csv(&g, &read(&solution)?)?;
            let opts = PFieldOptions {
                radial_reference: radial,
            };
            let report = pfunction_report(&g, &u, cfg.dimension, cfg.curvature(), opts)?;
            let files = [
                ("report.json", to_sorted_json(&report)?),
                ("checks.csv", audit_csv(&report.audit)),
            ];
            let manifest = RunManifest::new("pfunction", json_value(&cfg)?, Some(g.grid_hash()));
            finish(&output, "pfunction", &files, manifest, started)?;
            Ok(if report.audit.pass { 0 } else { EXIT_AUDIT })
        }
        Command::Rigidity { config, output } => {
            let cfg = parse_config(&read(&config)?)?;
            let hash = cfg.build_grid(cfg.grid, 0.0)?.grid_hash();
            let manifest = RunManifest::new("rigidity", json_value(&cfg)?, Some(hash));
            if cfg.alpha > std::f64::consts::PI {
                let report = convexity_contrast(&cfg)?;
                finish(
                    &output,
                    "contrast",
                    &[("json", to_sorted_json(&report)?)],
                    manifest,
                    started,
                )?;
                return Ok(if report.oracle_audit_pass { 0 } else { EXIT_AUDIT });
            }
            let report = deviation_scan(&cfg)?;
            let files = [("csv", rigidity_csv(&report)), ("json", to_sorted_json(&report)?)];
            finish(&output, "rigidity", &files, manifest, started)?;
            Ok(if !report.all_converged {
                EXIT_SOLVER
            } else if !report.pass {
                EXIT_AUDIT
            } else {
                0
            })
        }
        Command::Convergence { config, output } => {
            let cfg = parse_config(&read(&config)?)?;
            let hash = cfg.build_grid(cfg.grid, 0.0)?.grid_hash();
            let report = convergence_study(&cfg)?;
            let files = [("csv", convergence_csv(&report)), ("json", to_sorted_json(&report)?)];
            let manifest = RunManifest::new("convergence", json_value(&cfg)?, Some(hash));
            finish(&output, "convergence", &files, manifest, started)?;
            Ok(if report.all_converged { 0 } else { EXIT_SOLVER })
        }
    }
}

fn configure_threads() -> std::result::Result<(), Failure> {
    let Ok(text) = std::env::var("SERRIN_THREADS") else {
        return Ok(());
    };
    let bad = |m: String| Failure {
        code: EXIT_CONFIG,
        message: m,
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| bad(format!("SERRIN_THREADS must be a positive integer, got {text:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| bad(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => {
            if code == EXIT_AUDIT {
                eprintln!("audit failures; see the report");
            }
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
