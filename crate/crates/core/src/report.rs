//! Deterministic serialization: CSV with a fixed column order and
//! 17-significant-digit floats, JSON with sorted keys, and a manifest that
//! ties every output file of a run together.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::identities::AuditReport;
use crate::mesh::SectorGrid;
use crate::oracles::OracleRow;
use crate::rigidity::{ConvergenceReport, RigidityReport};

pub const RIGIDITY_HEADER: &str = "epsilon,sigma,c_mean,c_formula,defect,pass";

/// Float with 17 significant digits; non-finite values as `NaN`/`inf`/`-inf`.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv<I: IntoIterator<Item = Vec<String>>>(header: &str, rows: I) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Pretty JSON with object keys sorted at every level and a trailing newline.
pub fn to_sorted_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn rigidity_csv(report: &RigidityReport) -> String {
    csv(
        RIGIDITY_HEADER,
        report.rows.iter().map(|r| {
            vec![
                fmt_float(r.epsilon),
                fmt_float(r.sigma),
                fmt_float(r.c_mean),
                fmt_float(r.c_formula),
                fmt_float(r.defect),
                r.pass.to_string(),
            ]
        }),
    )
}

pub fn convergence_csv(report: &ConvergenceReport) -> String {
    csv(
        "grid,h,linf,l2,order_linf,order_l2,residual,converged",
        report.rows.iter().map(|r| {
            vec![
                r.grid.clone(),
                fmt_float(r.h),
                fmt_float(r.linf),
                fmt_float(r.l2),
                fmt_opt(r.order_linf),
                fmt_opt(r.order_l2),
                fmt_float(r.residual),
                r.converged.to_string(),
            ]
        }),
    )
}

pub fn audit_csv(report: &AuditReport) -> String {
    csv(
        "name,value,tolerance,verdict",
        report.checks.iter().map(|c| {
            let verdict = serde_json::to_value(c.verdict)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            vec![c.name.clone(), fmt_float(c.value), fmt_float(c.tolerance), verdict]
        }),
    )
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    csv(
        "d,u,du,residual,c",
        rows.iter().map(|r| {
            vec![
                fmt_float(r.d),
                fmt_float(r.u),
                fmt_float(r.du),
                fmt_float(r.residual),
                fmt_float(r.c),
            ]
        }),
    )
}

/// Cell values as `r,theta,u`, radial index fastest.
pub fn solution_csv(grid: &SectorGrid, u: &ScalarField) -> Result<String> {
    u.check_grid(grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    for j in 0..grid.nt {
        for i in 0..grid.nr {
            rows.push(vec![
                fmt_float(grid.r(i, j)),
                fmt_float(grid.theta(j)),
                fmt_float(u.at(i, j)),
            ]);
        }
    }
    Ok(csv("r,theta,u", rows))
}

/// Reads a solution CSV written for `grid`, checking that its coordinates
/// match the grid's cell centers.
pub fn read_solution_csv(grid: &SectorGrid, text: &str) -> Result<ScalarField> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "r,theta,u" => {}
        other => return Err(Error::Input(format!("expected header r,theta,u, got {other:?}"))),
    }
    let mut values = Vec::with_capacity(grid.len());
    for (k, line) in lines.enumerate() {
        if k >= grid.len() {
            return Err(Error::Input(format!("more than {} data rows", grid.len())));
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("row {}: {e}", k + 2)))?;
        if fields.len() != 3 {
            return Err(Error::Input(format!("row {}: expected 3 columns", k + 2)));
        }
        let (i, j) = (k % grid.nr, k / grid.nr);
        let (r, t) = (grid.r(i, j), grid.theta(j));
        if (fields[0] - r).abs() > 1e-12 * r.max(1.0) || (fields[1] - t).abs() > 1e-12 * t.max(1.0) {
            return Err(Error::Input(format!(
                "row {}: coordinates ({}, {}) do not match the grid cell ({r}, {t})",
                k + 2,
                fields[0],
                fields[1]
            )));
        }
        values.push(fields[2]);
    }
    if values.len() != grid.len() {
        return Err(Error::Input(format!(
            "expected {} data rows, got {}",
            grid.len(),
            values.len()
        )));
    }
    ScalarField::from_values(grid, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

/// Provenance of one run. Every output is listed with its SHA-256 digest,
/// and every output's file name starts with the manifest's stem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub version: String,
    pub grid_hash: Option<String>,
    /// Present only when timing is requested; it breaks byte-identity.
    pub timing: Option<Timing>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: serde_json::Value, grid_hash: Option<String>) -> Self {
        Self {
            subcommand: subcommand.into(),
            config,
            version: env!("CARGO_PKG_VERSION").into(),
            grid_hash,
            timing: None,
            outputs: BTreeMap::new(),
        }
    }
}

/// Writes `files` as `<dir>/<stem>.<suffix>` and then the manifest
/// `<dir>/<stem>.manifest.json`. Returns the written paths, manifest last.
pub fn emit_reports(
    dir: &Path,
    stem: &str,
    files: &[(&str, String)],
    mut manifest: RunManifest,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(files.len() + 1);
    for (suffix, content) in files {
        let name = format!("{stem}.{suffix}");
        let path = dir.join(&name);
        fs::write(&path, content)?;
        manifest.outputs.insert(name, sha256_hex(content.as_bytes()));
        paths.push(path);
    }
    let path = dir.join(format!("{stem}.manifest.json"));
    fs::write(&path, to_sorted_json(&manifest)?)?;
    paths.push(path);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Model;
    use crate::mesh::GridSpec;
    use crate::rigidity::RigidityRow;

    fn grid() -> SectorGrid {
        GridSpec {
            space_form: Model::Hyperbolic,
            alpha: 1.0,
            r0: 0.8,
            epsilon: 0.1,
            k: 2,
            nr: 8,
            nt: 8,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn floats_carry_17_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_float(f64::NAN), "NaN");
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, -7.25e17] {
            assert_eq!(fmt_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
            mid: BTreeMap<String, u8>,
        }
        let s = S {
            zeta: 1,
            alpha: 2,
            mid: BTreeMap::from([("b".into(), 1), ("a".into(), 2)]),
        };
        let text = to_sorted_json(&s).unwrap();
        let alpha = text.find("alpha").unwrap();
        assert!(alpha < text.find("mid").unwrap() && text.find("mid").unwrap() < text.find("zeta").unwrap());
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(to_sorted_json(&back).unwrap(), text);
    }

    #[test]
    fn rigidity_csv_header_and_rows() {
        let row = RigidityRow {
            epsilon: 0.05,
            sigma: 1e-3,
            max_deviation: 2e-3,
            c_mean: 0.5,
            c_formula: 0.5,
            defect: 0.25,
            audit_pass_rate: 1.0,
            converged: true,
            residual: 1e-10,
            iterations: 1,
            pass: true,
            message: None,
        };
        let report = RigidityReport {
            space_form: Model::Euclidean,
            profile: "laplacian".into(),
            alpha: 1.0,
            r0: 1.0,
            grid: "8x8".into(),
            mode: 2,
            defect_kind: "w".into(),
            rows: vec![row],
            sigma_zero_ok: None,
            monotone: true,
            all_converged: true,
            pass: true,
        };
        let text = rigidity_csv(&report);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(RIGIDITY_HEADER));
        assert_eq!(
            lines.next(),
            Some("5.0000000000000003e-2,1.0000000000000000e-3,5.0000000000000000e-1,5.0000000000000000e-1,2.5000000000000000e-1,true")
        );
    }

    #[test]
    fn solution_csv_round_trip() {
        let g = grid();
        let u = ScalarField::from_fn(&g, |i, j| (i as f64).sin() + 0.1 * j as f64);
        let text = solution_csv(&g, &u).unwrap();
        assert_eq!(read_solution_csv(&g, &text).unwrap(), u);
        let other = GridSpec {
            epsilon: 0.0,
            ..g.spec()
        }
        .build()
        .unwrap();
        assert!(read_solution_csv(&other, &text).is_err());
        assert!(read_solution_csv(&g, "x,y,z\n").is_err());
        let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(read_solution_csv(&g, &short).is_err());
    }

    #[test]
    fn emit_writes_manifest_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest::new("solve", serde_json::json!({"grid": "8x8"}), Some(grid().grid_hash()));
        let paths = emit_reports(dir.path(), "run", &[("csv", "a\n".into()), ("json", "{}\n".into())], m).unwrap();
        assert_eq!(paths.len(), 3);
        let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(&paths[2]).unwrap()).unwrap();
        assert_eq!(manifest.outputs["run.csv"], sha256_hex(b"a\n"));
        assert!(manifest.outputs.keys().all(|k| k.starts_with("run.")));
        assert!(manifest.timing.is_none());
    }
}
