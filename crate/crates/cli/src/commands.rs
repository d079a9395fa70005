//! Command dispatch and artifact emission.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use levy_lab::checks::{self, CheckStatus};
use levy_lab::levy_kernel::cauchy_table;
use levy_lab::numeric::Num;
use levy_lab::pvariation::variation_profile;
use levy_lab::simulate::{empirical_cf, run_mc, MCConfig};
use levy_lab::spectral::{
    cf_csv, cf_curve, classical_spectrum, discretize_classical_operator, eigen_solve, general_spectrum, symmetry_check,
    weighted_cf,
};
use levy_lab::{CovKernel, KernelKind, LevyError};
use serde_json::{json, Value};

use crate::args::{
    parse_levels, parse_range, CauchyArgs, CfArgs, CheckArgs, Command, Format, OutputArgs, PvarArgs, SimulateArgs,
    SpectrumArgs,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invariant(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Invariant(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<LevyError> for CliError {
    fn from(e: LevyError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

type Echo = BTreeMap<&'static str, Value>;

fn kernel_echo(echo: &mut Echo, k1: &CovKernel, k2: &CovKernel) {
    echo.insert("kernel1", json!(k1.to_string()));
    echo.insert("kernel2", json!(k2.to_string()));
}

/// Writes the primary artifact (CSV with a `# config` header line, or the
/// JSON summary) and the optional summary file.
fn emit(output: &OutputArgs, echo: &Echo, csv: &str, result: Value) -> Result<(), CliError> {
    let mut summary = json!({ "schema_version": SCHEMA_VERSION, "config": echo });
    if let (Value::Object(dst), Value::Object(src)) = (&mut summary, result) {
        dst.extend(src);
    }
    let json_text = serde_json::to_string_pretty(&summary).expect("summary is valid JSON") + "\n";
    let primary = match output.format {
        Format::Csv => format!("# config {}\n{csv}", serde_json::to_string(echo).expect("echo is valid JSON")),
        Format::Json => json_text.clone(),
    };
    match &output.out {
        Some(path) => write_file(path, &primary)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(primary.as_bytes()).map_err(|e| CliError::Usage(format!("stdout: {e}")))?;
        }
    }
    if let Some(path) = &output.summary {
        write_file(path, &json_text)?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

pub fn run(command: &Command) -> Result<(), CliError> {
    let mut echo = Echo::new();
    echo.insert("command", json!(command.name()));
    echo.insert("version", json!(env!("CARGO_PKG_VERSION")));
    match command {
        Command::Simulate(a) => simulate(a, echo),
        Command::Cf(a) => cf(a, echo),
        Command::Spectrum(a) => spectrum(a, echo),
        Command::Pvar(a) => pvar(a, echo),
        Command::Cauchy(a) => cauchy(a, echo),
        Command::Check(a) => check(a, echo),
    }
}

/// Closed-form CF of the area when one is known for the kernel pair.
fn reference_cf(k1: &CovKernel, k2: &CovKernel) -> Option<Box<dyn Fn(f64) -> f64>> {
    if k1 != k2 {
        return None;
    }
    match k1.kind() {
        KernelKind::Brownian => Some(Box::new(|t: f64| 1.0 / t.cosh())),
        KernelKind::WeightedBrownian => {
            let norm = k1.weight()?.norm_sq();
            Some(Box::new(move |t| weighted_cf(norm, t).unwrap_or(f64::NAN)))
        }
        _ => None,
    }
}

fn simulate(a: &SimulateArgs, mut echo: Echo) -> Result<(), CliError> {
    let (k1, k2) = a.kernels.kernels()?;
    let grid = parse_range(&a.t_grid).map_err(CliError::Usage)?;
    kernel_echo(&mut echo, &k1, &k2);
    echo.insert("seed", json!(a.seed));
    echo.insert("n_samples", json!(a.n_samples));
    echo.insert("level", json!(a.level));
    echo.insert("t_grid", json!(grid));
    let cfg = MCConfig::new(a.seed, a.n_samples, a.level, k1.clone(), k2.clone())?;
    let result = run_mc(&cfg)?;
    let cf = empirical_cf(&result, &grid)?;
    if let Some(path) = &a.samples_out {
        let header = format!("# config {}\n", serde_json::to_string(&echo).expect("echo is valid JSON"));
        write_file(path, &(header + &result.samples_csv()))?;
    }
    let reference = reference_cf(&k1, &k2);
    let rows: Vec<Value> = grid
        .iter()
        .zip(&cf.estimates)
        .zip(&cf.std_errors)
        .map(|((&t, z), &se)| {
            let mut row = json!({ "t": t, "re": z.re, "im": z.im, "stderr": se });
            if let Some(f) = &reference {
                row["reference"] = json!(f(t));
            }
            row
        })
        .collect();
    let summary = json!({
        "seed": a.seed,
        "mean": result.mean,
        "mean_stderr": result.mean_stderr(),
        "variance": result.variance,
        "variance_stderr": result.variance_stderr(),
        "fourth_moment": result.fourth_moment,
        "n_samples": result.n_samples(),
        "cf": rows,
    });
    emit(&a.output, &echo, &cf.to_csv(), summary)
}

fn cf(a: &CfArgs, mut echo: Echo) -> Result<(), CliError> {
    let (k1, k2) = a.kernels.kernels()?;
    let grid = parse_range(&a.t_grid).map_err(CliError::Usage)?;
    kernel_echo(&mut echo, &k1, &k2);
    echo.insert("t_grid", json!(grid));
    let both = |kind| k1 == k2 && k1.kind() == kind;
    let (route, csv, rows, radius) = if both(KernelKind::WeightedBrownian) {
        let norm = k1.weight().expect("weighted kernel has a weight").norm_sq();
        let values = grid.iter().map(|&t| weighted_cf(norm, t)).collect::<Result<Vec<_>, _>>()?;
        let mut csv = String::from("t,re,im,tail_bound\n");
        let mut rows = Vec::new();
        for (&t, &v) in grid.iter().zip(&values) {
            csv.push_str(&format!("{},{},0,0\n", Num(t), Num(v)));
            rows.push(json!({ "t": t, "re": v, "im": 0.0, "tail_bound": 0.0 }));
        }
        ("weighted-closed-form", csv, rows, None)
    } else {
        let (route, spec) = if both(KernelKind::Brownian) {
            echo.insert("pairs", json!(a.pairs));
            ("classical-spectrum", classical_spectrum(a.pairs)?)
        } else {
            echo.insert("level", json!(a.level));
            ("discretised-operator", general_spectrum(&k1, &k2, a.level)?)
        };
        let curve = cf_curve(&spec, &grid, None)?;
        let rows = curve
            .iter()
            .map(|p| json!({ "t": p.t, "re": p.value.re, "im": p.value.im, "tail_bound": p.tail_bound }))
            .collect();
        (route, cf_csv(&curve), rows, Some(spec.spectral_radius))
    };
    let mut summary = json!({ "route": route, "rows": rows });
    if let Some(r) = radius {
        summary["spectral_radius"] = json!(r);
    }
    let mut failure = None;
    if let Some(f) = reference_cf(&k1, &k2) {
        let mut worst: f64 = 0.0;
        let mut within = true;
        for row in summary["rows"].as_array().expect("rows array") {
            let t = row["t"].as_f64().unwrap_or(f64::NAN);
            let dev = (row["re"].as_f64().unwrap_or(f64::NAN) - f(t)).abs();
            let bound = row["tail_bound"].as_f64().unwrap_or(0.0);
            worst = worst.max(dev);
            within &= dev <= bound + 1e-12;
        }
        summary["reference_max_deviation"] = json!(worst);
        summary["within_tail_bound"] = json!(within);
        if !within {
            failure = Some(format!("cf: deviation {worst:e} from the closed form exceeds the tail bound"));
        }
    }
    emit(&a.output, &echo, &csv, summary)?;
    failure.map_or(Ok(()), |m| Err(CliError::Invariant(m)))
}

fn spectrum(a: &SpectrumArgs, mut echo: Echo) -> Result<(), CliError> {
    let (k1, k2) = a.kernels.kernels()?;
    kernel_echo(&mut echo, &k1, &k2);
    echo.insert("pair_tol", json!(a.pair_tol));
    let spec = match a.grid {
        Some(g) => {
            if k1.kind() != KernelKind::Brownian || k2.kind() != KernelKind::Brownian {
                return Err(CliError::Usage("spectrum: --grid applies to the Brownian pair only".into()));
            }
            echo.insert("grid", json!(g));
            eigen_solve(&discretize_classical_operator(g)?)?
        }
        None => {
            echo.insert("level", json!(a.level));
            general_spectrum(&k1, &k2, a.level)?
        }
    };
    let report = symmetry_check(&spec, a.pair_tol);
    // symmetry is only guaranteed for equivalent covariances
    let asserted = k1 == k2;
    let summary = json!({
        "spectral_radius": spec.spectral_radius,
        "reference_top": if k1.kind() == KernelKind::Brownian && asserted { json!(1.0 / PI) } else { Value::Null },
        "symmetry_asserted": asserted,
        "symmetry": report,
        "eigenvalues": spec.eigenvalues,
    });
    emit(&a.output, &echo, &spec.to_csv(), summary)?;
    if asserted && !report.passed() {
        return Err(CliError::Invariant(format!(
            "symmetry_check: {} violations, first: {}",
            report.violations.len(),
            report.violations[0]
        )));
    }
    Ok(())
}

fn pvar(a: &PvarArgs, mut echo: Echo) -> Result<(), CliError> {
    let (kernel, _) = a.kernels.kernels()?;
    let p = if a.p == "auto" {
        kernel.variation_index().ok_or_else(|| {
            CliError::Usage(format!("pvar: --p auto needs a kernel with a known variation index, got {kernel}"))
        })?
    } else {
        a.p.parse::<f64>().map_err(|e| CliError::Usage(format!("pvar: --p {}: {e}", a.p)))?
    };
    echo.insert("kernel", json!(kernel.to_string()));
    echo.insert("p", json!(p));
    echo.insert("max_level", json!(a.max_level));
    let profile = variation_profile(&kernel, p, a.max_level)?;
    let summary = json!({ "p": p, "verdict": profile.verdict, "levels": profile.levels });
    emit(&a.output, &echo, &profile.to_csv(), summary)
}

fn cauchy(a: &CauchyArgs, mut echo: Echo) -> Result<(), CliError> {
    let (k1, k2) = a.kernels.kernels()?;
    let levels = parse_levels(&a.levels).map_err(CliError::Usage)?;
    kernel_echo(&mut echo, &k1, &k2);
    echo.insert("levels", json!(levels));
    echo.insert("refine", json!(a.refine));
    let table = cauchy_table(&levels, &k1, &k2, a.refine)?;
    let summary = json!({ "slope": table.slope, "coverage": table.coverage, "rows": table.rows });
    emit(&a.output, &echo, &table.to_csv(), summary)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check(a: &CheckArgs, echo: Echo) -> Result<(), CliError> {
    let outcomes = checks::run_all();
    let mut csv = String::from("module,check,status,detail\n");
    for o in &outcomes {
        let status = o.status.as_str();
        eprintln!("{:5} {}: {} ({})", status.to_uppercase(), o.module, o.name, o.detail);
        csv.push_str(&format!("{},{},{status},{}\n", o.module, csv_field(o.name), csv_field(&o.detail)));
    }
    let failed = outcomes.iter().filter(|o| o.status != CheckStatus::Pass).count();
    let summary = json!({ "passed": outcomes.len() - failed, "failed": failed, "checks": outcomes });
    emit(&a.output, &echo, &csv, summary)?;
    if outcomes.iter().any(|o| o.numerical) {
        return Err(CliError::Numerical(format!("check: {failed} of {} checks did not pass", outcomes.len())));
    }
    if failed > 0 {
        return Err(CliError::Invariant(format!("check: {failed} of {} checks failed", outcomes.len())));
    }
    Ok(())
}
