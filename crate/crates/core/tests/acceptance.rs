//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with its
//! runtime; the process exits non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serrin_core::config::{ExperimentConfig, GridSize};
use serrin_core::field::ScalarField;
use serrin_core::geometry::{Model, SpaceForm};
use serrin_core::identities::{audit_euclidean, newton_gap, AuditOptions, Verdict, WTolerances};
use serrin_core::mesh::GridSpec;
use serrin_core::oracles::{RadialOracle, RadialSolutionEuclidean, RadialSolutionSpaceForm};
use serrin_core::pfunction::{obata_oracle_gap, p_field_analytic, step3_identity_analytic};
use serrin_core::profiles::{log_grid, make_mean_curvature_profile, make_power_profile, OperatorProfile};
use serrin_core::report::{rigidity_csv, to_sorted_json};
use serrin_core::rigidity::{convergence_study, deviation_scan, deviation_scan_at};

const MODELS: [Model; 3] = [Model::Euclidean, Model::Hyperbolic, Model::Sphere];

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = Result<Outcome, String>;
type Oracles = Vec<(String, Box<dyn RadialOracle>)>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn outcome(pass: bool, detail: impl Into<String>) -> Check {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn profiles() -> Vec<(&'static str, OperatorProfile)> {
    vec![
        ("p=2", make_power_profile(2.0).unwrap()),
        ("p=3", make_power_profile(3.0).unwrap()),
        ("mean-curvature", make_mean_curvature_profile()),
    ]
}

fn oracles() -> Result<Oracles, String> {
    let mut out: Oracles = Vec::new();
    for n in [2, 3] {
        for (name, p) in profiles() {
            let o = RadialSolutionEuclidean::at_origin(p, n, 1.0).map_err(|e| e.to_string())?;
            out.push((format!("K=0 {name} N={n}"), Box::new(o)));
        }
        for m in MODELS {
            let o = RadialSolutionSpaceForm::at_pole(SpaceForm::new(m), n, 1.0).map_err(|e| e.to_string())?;
            out.push((format!("K={} laplacian N={n}", m.curvature()), Box::new(o)));
        }
    }
    Ok(out)
}

fn oracle_exactness() -> Check {
    let (mut worst_res, mut worst_c) = (0.0_f64, 0.0_f64);
    let cases = oracles()?;
    for (name, o) in &cases {
        let r = o.radius();
        for i in 0..100 {
            let d = r * (i as f64 + 0.5) / 100.0;
            let res = o.residual(d).map_err(|e| format!("{name}: {e}"))?;
            worst_res = worst_res.max(res.abs());
        }
        let c = o.overdetermined_constant().map_err(|e| e.to_string())?;
        let du = o.du(r).map_err(|e| e.to_string())?;
        worst_c = worst_c.max((c + du).abs());
    }
    outcome(
        worst_res <= 1e-9 && worst_c <= 1e-10,
        format!(
            "{} oracles; max residual {worst_res:.2e} (≤ 1e-9), max |c + u'(R)| {worst_c:.2e} (≤ 1e-10)",
            cases.len()
        ),
    )
}

fn fenchel() -> Check {
    let (mut round, mut value) = (0.0_f64, 0.0_f64);
    for (name, p) in profiles() {
        for t in log_grid(1e-4, 1e2, 200) {
            let y = p.f_prime(t);
            let back = p.g_prime(y).map_err(|e| format!("{name}: {e}"))?;
            round = round.max((back - t).abs() / t.max(1.0));
            let g = p.conjugate_by_quadrature(y).map_err(|e| format!("{name}: {e}"))?;
            let rhs = t * y - p.f(t);
            value = value.max((g - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    outcome(
        round <= 1e-9 && value <= 1e-9,
        format!("max round-trip error {round:.2e}, max value-identity error {value:.2e} (≤ 1e-9)"),
    )
}

fn study(model: Model, profile: &str, levels: &[usize]) -> Result<serrin_core::rigidity::ConvergenceReport, String> {
    let finest = *levels.last().unwrap();
    let mut cfg =
        ExperimentConfig::new(model, profile, FRAC_PI_2, 1.0, GridSize::square(finest)).map_err(|e| e.to_string())?;
    cfg.levels = levels.iter().map(|&n| GridSize::square(n)).collect();
    convergence_study(&cfg).map_err(|e| e.to_string())
}

fn linear_convergence() -> Check {
    let mut pass = true;
    let mut detail = Vec::new();
    for model in [Model::Euclidean, Model::Hyperbolic] {
        let rep = study(model, "laplacian", &[32, 64, 128])?;
        let orders: Vec<f64> = rep.rows.iter().filter_map(|r| r.order_linf).collect();
        let ok =
            rep.all_converged && orders.iter().all(|o| (1.7..=2.3).contains(o)) && rep.rows[2].linf < rep.rows[1].linf;
        pass &= ok;
        detail.push(format!(
            "K={}: orders {:?}, err128 {:.2e} < err64 {:.2e}",
            model.curvature(),
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>(),
            rep.rows[2].linf,
            rep.rows[1].linf
        ));
    }
    outcome(pass, detail.join("; "))
}

fn degenerate_solver() -> Check {
    let rep = study(Model::Euclidean, "p-laplacian:3", &[16, 32, 64, 128])?;
    let worst = rep.rows.iter().map(|r| r.residual).fold(0.0_f64, f64::max);
    let errs: Vec<String> = rep.rows.iter().map(|r| format!("{:.2e}", r.linf)).collect();
    outcome(
        rep.all_converged && worst <= 1e-8 && rep.monotone_linf,
        format!("max residual {worst:.2e} (≤ 1e-8), L∞ errors {errs:?}"),
    )
}

fn identity_suite() -> Check {
    let grid = GridSpec {
        space_form: Model::Euclidean,
        alpha: FRAC_PI_2,
        r0: 1.0,
        epsilon: 0.0,
        k: 2,
        nr: 64,
        nt: 64,
    }
    .build()
    .map_err(|e| e.to_string())?;
    let opts = AuditOptions {
        radial_reference: true,
        w: Some(WTolerances {
            trace: 5e-2,
            identity: 5e-2,
            newton: 1e-10,
        }),
        pohozaev: Some(1e-2),
        inequality: Some(1e-2),
        c_relative: None,
    };
    let names = [
        "trace_w",
        "w_identity",
        "pohozaev",
        "newton_gap",
        "integral_inequality",
        "integral_inequality_equality",
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, p) in profiles() {
        let o = RadialSolutionEuclidean::at_origin(p.clone(), 2, 1.0).map_err(|e| e.to_string())?;
        let u = ScalarField::from_oracle(&grid, &o).map_err(|e| e.to_string())?;
        let rep = audit_euclidean(&grid, &u, &p, &opts).map_err(|e| e.to_string())?;
        let mut failed = Vec::new();
        for n in names {
            match rep.check(n) {
                Some(c) if c.verdict == Verdict::Pass => {}
                Some(c) => failed.push(format!("{n}={:.2e}", c.value)),
                None => failed.push(format!("{n} missing")),
            }
        }
        pass &= failed.is_empty();
        let trace = rep.check("trace_w").map_or(f64::NAN, |c| c.value);
        let poh = rep.check("pohozaev").map_or(f64::NAN, |c| c.value);
        detail.push(if failed.is_empty() {
            format!("{name}: ok (trace {trace:.1e}, pohozaev {poh:.1e})")
        } else {
            format!("{name}: failed {}", failed.join(" "))
        });
    }
    outcome(pass, detail.join("; "))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

fn newton_property() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut worst_gap, mut worst_eq) = (f64::INFINITY, 0.0_f64);
    let mut equality_flags = true;
    for n in [2, 3] {
        for trial in 0..10_000 {
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let mut b = &m * m.transpose();
            if trial % 10 == 0 {
                // rank-deficient B
                let v = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
                b = &v * v.transpose();
            }
            let c = random_symmetric(&mut rng, n);
            let a = &b * &c;
            let g = newton_gap(&a, Some((&b, &c))).map_err(|e| e.to_string())?;
            worst_gap = worst_gap.min(g.gap);

            let (lambda, mu) = (rng.gen_range(0.01..2.0), rng.gen_range(-2.0..2.0));
            let bi = DMatrix::identity(n, n) * lambda;
            let ci = DMatrix::identity(n, n) * mu;
            let ai = &bi * &ci;
            let gi = newton_gap(&ai, Some((&bi, &ci))).map_err(|e| e.to_string())?;
            let target = DMatrix::identity(n, n) * (ai.trace() / n as f64);
            worst_eq = worst_eq.max((&ai - target).amax()).max(gi.proportionality_defect);
            equality_flags &= gi.equality;
        }
    }
    outcome(
        worst_gap >= -1e-12 && worst_eq <= 1e-12 && equality_flags,
        format!("2×10⁴ products: min gap {worst_gap:.2e} (≥ -1e-12), equality defect {worst_eq:.2e} (≤ 1e-12)"),
    )
}

fn pfunction_suite() -> Check {
    let (mut p_err, mut step3, mut obata) = (0.0_f64, 0.0_f64, 0.0_f64);
    for m in MODELS {
        let o = RadialSolutionSpaceForm::at_pole(SpaceForm::new(m), 2, 1.0).map_err(|e| e.to_string())?;
        let grid = GridSpec {
            space_form: m,
            alpha: FRAC_PI_2,
            r0: 1.0,
            epsilon: 0.0,
            k: 2,
            nr: 64,
            nt: 64,
        }
        .build()
        .map_err(|e| e.to_string())?;
        let c = o.overdetermined_constant().map_err(|e| e.to_string())?;
        let p = p_field_analytic(&grid, &o).map_err(|e| e.to_string())?;
        p_err = p.values.iter().fold(p_err, |a, v| a.max((v - c * c).abs()));
        let s3 = step3_identity_analytic(&o, FRAC_PI_2).map_err(|e| e.to_string())?;
        step3 = step3.max(s3.residual.abs());
        obata = obata.max(obata_oracle_gap(&o, 100).map_err(|e| e.to_string())?);
    }
    outcome(
        p_err <= 1e-10 && step3 <= 1e-8 && obata <= 1e-8,
        format!(
            "max |P - c²| {p_err:.2e} (≤ 1e-10), step3 residual {step3:.2e} (≤ 1e-8), obata gap {obata:.2e} (≤ 1e-8)"
        ),
    )
}

fn rigidity_scan() -> Check {
    let mut pass = true;
    let mut detail = Vec::new();
    for model in [Model::Euclidean, Model::Hyperbolic] {
        let cfg = ExperimentConfig::new(model, "laplacian", FRAC_PI_2, 1.0, GridSize::square(64))
            .map_err(|e| e.to_string())?;
        let coarse = deviation_scan(&cfg).map_err(|e| e.to_string())?;
        let fine = deviation_scan_at(&cfg, GridSize::square(128)).map_err(|e| e.to_string())?;
        let row0 = coarse.row(0.0).ok_or("missing ε = 0 row")?;
        let s0_fine = fine.row(0.0).ok_or("missing ε = 0 row")?.sigma;
        let small = row0.sigma <= 1e-2 * row0.c_formula.abs();
        let ratio = row0.sigma / s0_fine;
        let halves = ratio >= 1.8;
        pass &= small && coarse.monotone && coarse.all_converged && halves;
        let sigmas: Vec<String> = coarse.rows.iter().map(|r| format!("{:.3e}", r.sigma)).collect();
        detail.push(format!(
            "K={}: σ {sigmas:?} increasing={}, σ(0) ≤ 1e-2·c {small}, σ64(0)/σ128(0) = {ratio:.3} (≥ 1.8: {halves})",
            model.curvature(),
            coarse.monotone
        ));
    }
    outcome(pass, detail.join("; "))
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn cli_runs(root: &Path, config: &Path) -> Vec<(&'static str, Vec<String>)> {
    let solution = root.join("solve.solution.csv").to_string_lossy().into_owned();
    let cfg = config.to_string_lossy().into_owned();
    let grid = ["--grid", "16x16", "--eps", "0.1"].map(String::from).to_vec();
    let with =
        |head: &[&str], tail: &[String]| head.iter().map(|s| s.to_string()).chain(tail.iter().cloned()).collect();
    vec![
        ("oracle", with(&["oracle", "--space-form", "hyperbolic"], &[])),
        ("solve", with(&["solve"], &grid)),
        ("audit", with(&["audit", "--solution", &solution], &grid)),
        ("pfunction", with(&["pfunction", "--solution", &solution], &grid)),
        ("rigidity", with(&["rigidity", "--config", &cfg], &[])),
        ("convergence", with(&["convergence", "--config", &cfg], &[])),
    ]
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        "profile = \"laplacian\"\nalpha = 1.5707963267948966\nR0 = 1.0\ngrid = \"32x32\"\nlevels = [\"8x8\", \"16x16\", \"32x32\"]\n",
    )
    .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for attempt in ["a", "b"] {
        let out = tmp.path().join(attempt);
        for (name, args) in cli_runs(&out, &config) {
            let status = Command::new(env!("CARGO_BIN_EXE_serrin"))
                .args(&args)
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !matches!(status.status.code(), Some(0) | Some(2)) {
                return Err(format!("{name}: {}", String::from_utf8_lossy(&status.stderr)));
            }
        }
        runs.push(read_dir_sorted(&out)?);
    }
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();

    let cfg = ExperimentConfig::new(Model::Hyperbolic, "laplacian", FRAC_PI_2, 1.0, GridSize::square(32))
        .map_err(|e| e.to_string())?;
    let render = || -> Result<(String, String), String> {
        let rep = deviation_scan(&cfg).map_err(|e| e.to_string())?;
        Ok((rigidity_csv(&rep), to_sorted_json(&rep).map_err(|e| e.to_string())?))
    };
    let library_identical = render()? == render()?;
    let same_names = runs[0].len() == runs[1].len();
    outcome(
        differing.is_empty() && same_names && library_identical,
        format!(
            "{} CLI files compared, differing {differing:?}; library CSV/JSON identical {library_identical}",
            runs[0].len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle exactness", oracle_exactness, Duration::from_secs(1)),
        ("Fenchel identities", fenchel, Duration::from_secs(1)),
        ("linear solver convergence", linear_convergence, Duration::from_secs(30)),
        ("degenerate solver", degenerate_solver, Duration::from_secs(120)),
        ("identity suite", identity_suite, Duration::from_secs(10)),
        ("Newton inequality", newton_property, Duration::from_secs(5)),
        ("P-function suite", pfunction_suite, Duration::from_secs(5)),
        ("rigidity scan", rigidity_scan, Duration::from_secs(120)),
        ("determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        let time = format!("{:.2} s of {} s", elapsed.as_secs_f64(), budget.as_secs());
        println!("criterion {} {verdict} [{name}] ({time}): {detail}", k + 1);
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
