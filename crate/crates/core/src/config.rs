//! Experiment configuration: a TOML document with defaults, validation and
//! line-accurate error messages.
//!
//! ```toml
//! profile = "p-laplacian:3"
//! alpha = 1.5707963267948966
//! R0 = 1.0
//! grid = "64x64"
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::Model;
use crate::mesh::{GridSpec, SectorGrid};
use crate::profiles::{OperatorProfile, ProfileRegistry};
use crate::solver::{SolverOptions, DEFAULT_SCHEDULE};

/// Cell counts `nr × nt`, written `"64x64"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSize {
    pub nr: usize,
    pub nt: usize,
}

impl GridSize {
    pub fn new(nr: usize, nt: usize) -> Self {
        Self { nr, nt }
    }

    pub fn square(n: usize) -> Self {
        Self { nr: n, nt: n }
    }

    pub fn halve(self) -> Self {
        Self::new(self.nr / 2, self.nt / 2)
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nr, self.nt)
    }
}

impl FromStr for GridSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Input(format!("grid must look like 64x64, got {s:?}"));
        let (a, b) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let nr = a.trim().parse().map_err(|_| bad())?;
        let nt = b.trim().parse().map_err(|_| bad())?;
        Ok(Self { nr, nt })
    }
}

impl Serialize for GridSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GridSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Solver and audit tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Final Picard / linear residual.
    #[serde(default = "default_solver_tol")]
    pub solver: f64,
    /// Residual for intermediate regularization stages.
    #[serde(default = "default_stage_tol")]
    pub stage: f64,
    #[serde(default = "default_max_picard")]
    pub max_picard: usize,
    #[serde(default = "default_max_linear")]
    pub max_linear: usize,
    /// Pohozaev relative residual.
    #[serde(default = "default_pohozaev")]
    pub pohozaev: f64,
    /// `σ(0) ≤ sigma_zero · c` in a deviation scan.
    #[serde(default = "default_sigma_zero")]
    pub sigma_zero: f64,
}

fn default_solver_tol() -> f64 {
    SolverOptions::default().tol
}
fn default_stage_tol() -> f64 {
    SolverOptions::default().stage_tol
}
fn default_max_picard() -> usize {
    SolverOptions::default().max_picard
}
fn default_max_linear() -> usize {
    SolverOptions::default().max_linear
}
fn default_pohozaev() -> f64 {
    1e-2
}
fn default_sigma_zero() -> f64 {
    1e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: default_solver_tol(),
            stage: default_stage_tol(),
            max_picard: default_max_picard(),
            max_linear: default_max_linear(),
            pohozaev: default_pohozaev(),
            sigma_zero: default_sigma_zero(),
        }
    }
}

/// A validated experiment. Parsing fills every default, so serializing and
/// re-parsing gives the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_space_form")]
    pub space_form: Model,
    pub profile: String,
    /// Model dimension `N`; grids are two-dimensional.
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub alpha: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub grid: GridSize,
    /// Perturbation amplitudes of the deviation scan.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Angular mode of the boundary perturbation.
    #[serde(default = "default_mode")]
    pub mode: u32,
    /// Dyadic levels of a convergence study; defaults to `grid/4, grid/2, grid`.
    #[serde(default)]
    pub levels: Vec<GridSize>,
    /// Regularization schedule for degenerate profiles.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    /// Picard relaxation; the profile default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_space_form() -> Model {
    Model::Euclidean
}
fn default_dimension() -> usize {
    2
}
fn default_epsilons() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2]
}
fn default_mode() -> u32 {
    2
}
fn default_schedule() -> Vec<f64> {
    DEFAULT_SCHEDULE.to_vec()
}
fn default_output_dir() -> String {
    "out".into()
}

/// 1-based line of the byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

/// 1-based line where `key` is assigned, or 0 when it is absent.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn config_error(text: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line: key_line(text, key),
        message: message.into(),
    }
}

/// Parses, fills defaults and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    if cfg.levels.is_empty() {
        let g = cfg.grid;
        if g.nr < 32 || g.nt < 32 || !g.nr.is_multiple_of(4) || !g.nt.is_multiple_of(4) {
            return Err(config_error(
                text,
                "grid",
                format!(
                    "default levels need a grid of at least 32x32 divisible by 4, got {g}; give `levels` explicitly"
                ),
            ));
        }
        cfg.levels = vec![g.halve().halve(), g.halve(), g];
    }
    cfg.validate_in(text)?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Minimal configuration with every default filled.
    pub fn new(space_form: Model, profile: &str, alpha: f64, r0: f64, grid: GridSize) -> Result<Self> {
        let mut text = format!(
            "space_form = \"{space_form}\"\nprofile = {}\nalpha = {alpha:?}\nR0 = {r0:?}\ngrid = \"{grid}\"\n",
            toml_string(profile)
        );
        if grid.nr < 32 || grid.nt < 32 || !grid.nr.is_multiple_of(4) || !grid.nt.is_multiple_of(4) {
            text.push_str(&format!("levels = [\"{grid}\"]\n"));
        }
        parse_config(&text).map_err(|e| match e {
            Error::Config { message, .. } => Error::Config { line: 0, message },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("config serialization failed: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_in("")
    }

    fn validate_in(&self, text: &str) -> Result<()> {
        let err = |key: &str, msg: String| config_error(text, key, msg);
        if !(self.alpha > 0.0 && self.alpha <= 2.0 * std::f64::consts::PI) {
            return Err(err("alpha", format!("alpha = {} must lie in (0, 2π]", self.alpha)));
        }
        if !(self.r0 > 0.0) || !self.r0.is_finite() {
            return Err(err("R0", format!("R0 = {} must be positive", self.r0)));
        }
        if self.dimension != 2 {
            return Err(err(
                "dimension",
                format!("grids are two-dimensional; dimension must be 2, got {}", self.dimension),
            ));
        }
        if self.epsilons.is_empty() {
            return Err(err("epsilons", "epsilons must not be empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0 && **e < 1.0)) {
            return Err(err("epsilons", format!("epsilon {e} must lie in [0, 1)")));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(err("epsilons", "epsilons must be strictly increasing".into()));
        }
        if self.mode == 0 {
            return Err(err("mode", "perturbation mode must be at least 1".into()));
        }
        for g in std::iter::once(&self.grid).chain(&self.levels) {
            if g.nr < 8 || g.nt < 8 || !g.nr.is_power_of_two() || !g.nt.is_power_of_two() {
                return Err(err(
                    "grid",
                    format!("grid {g} must have power-of-two sides of at least 8"),
                ));
            }
        }
        if self
            .levels
            .windows(2)
            .any(|w| w[1].nr != 2 * w[0].nr || w[1].nt != 2 * w[0].nt)
        {
            return Err(err("levels", "levels must double at every step".into()));
        }
        if self.schedule.is_empty() || self.schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(err(
                "schedule",
                "schedule must be nonempty and strictly decreasing".into(),
            ));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w <= 1.0) {
                return Err(err("omega", format!("omega = {w} must lie in (0, 1]")));
            }
        }
        let t = &self.tolerances;
        for (key, v) in [
            ("solver", t.solver),
            ("stage", t.stage),
            ("pohozaev", t.pohozaev),
            ("sigma_zero", t.sigma_zero),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(err(key, format!("tolerance {key} = {v} must be positive")));
            }
        }
        let profile = self.profile().map_err(|e| err("profile", e.to_string()))?;
        if self.space_form != Model::Euclidean && !profile.is_laplacian() {
            return Err(err(
                "profile",
                format!("space form {} supports the laplacian profile only", self.space_form),
            ));
        }
        for &epsilon in &self.epsilons {
            self.grid_spec(self.grid, epsilon)
                .build()
                .map_err(|e| err("R0", format!("epsilon {epsilon}: {e}")))?;
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<OperatorProfile> {
        ProfileRegistry::with_builtins().resolve(&self.profile)
    }

    pub fn curvature(&self) -> f64 {
        f64::from(self.space_form.curvature())
    }

    pub fn grid_spec(&self, size: GridSize, epsilon: f64) -> GridSpec {
        GridSpec {
            space_form: self.space_form,
            alpha: self.alpha,
            r0: self.r0,
            epsilon,
            k: self.mode,
            nr: size.nr,
            nt: size.nt,
        }
    }

    pub fn build_grid(&self, size: GridSize, epsilon: f64) -> Result<SectorGrid> {
        self.grid_spec(size, epsilon).build()
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tolerances.solver,
            stage_tol: self.tolerances.stage,
            omega: self.omega,
            max_picard: self.tolerances.max_picard,
            max_linear: self.tolerances.max_linear,
        }
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}
