//! Flag definitions, `key=value` config files and range syntax.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use levy_lab::CovKernel;

#[derive(Debug, Parser)]
#[command(name = "levy-lab", version, about = "Generalised Lévy area numerics", args_override_self = true)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LEVY_LAB_THREADS")]
    pub threads: Option<usize>,

    /// `key=value` config file; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo Lévy areas and their empirical characteristic function.
    Simulate(SimulateArgs),
    /// Characteristic function from a spectrum or the weighted closed form.
    Cf(CfArgs),
    /// Discretised operator spectrum and symmetry report.
    Spectrum(SpectrumArgs),
    /// p-variation refinement profile of a covariance.
    Pvar(PvarArgs),
    /// Cauchy table of ‖f_n − f_m‖² over consecutive levels.
    Cauchy(CauchyArgs),
    /// Run the full invariant suite.
    Check(CheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Cf(_) => "cf",
            Command::Spectrum(_) => "spectrum",
            Command::Pvar(_) => "pvar",
            Command::Cauchy(_) => "cauchy",
            Command::Check(_) => "check",
        }
    }
}

pub const SUBCOMMANDS: [&str; 6] = ["simulate", "cf", "spectrum", "pvar", "cauchy", "check"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Primary artifact path (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Format of the primary artifact.
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Also write the JSON summary here.
    #[arg(long, value_name = "PATH")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Covariance of both processes, e.g. `brownian`, `fbm`, `kind=weighted weight=poly degree=1`.
    #[arg(long, default_value = "brownian")]
    pub kernel: String,
    /// Covariance of the first process (overrides --kernel).
    #[arg(long)]
    pub kernel1: Option<String>,
    /// Covariance of the second process (overrides --kernel).
    #[arg(long)]
    pub kernel2: Option<String>,
    /// Hurst index for fBm kernels given without `hurst=`.
    #[arg(long)]
    pub hurst: Option<f64>,
}

impl KernelArgs {
    pub fn specs(&self) -> (String, String) {
        let pick = |k: &Option<String>| self.with_hurst(k.as_deref().unwrap_or(&self.kernel));
        (pick(&self.kernel1), pick(&self.kernel2))
    }

    fn with_hurst(&self, spec: &str) -> String {
        match self.hurst {
            Some(h) if !spec.contains("hurst=") && spec.split([' ', ',', '=']).any(|t| t == "fbm") => {
                format!("{spec} hurst={h}")
            }
            _ => spec.to_string(),
        }
    }

    pub fn kernels(&self) -> Result<(CovKernel, CovKernel), levy_lab::LevyError> {
        let (a, b) = self.specs();
        Ok((a.parse()?, b.parse()?))
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub kernels: KernelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of Monte Carlo draws.
    #[arg(long = "samples", default_value_t = 100_000)]
    pub n_samples: usize,
    /// Dyadic sampling level.
    #[arg(long, default_value_t = 10)]
    pub level: u32,
    /// CF grid, `a:b:step` or a comma list.
    #[arg(long = "t", default_value = "0:3:0.5")]
    pub t_grid: String,
    /// Write every draw to this CSV (`sample,area`).
    #[arg(long, value_name = "PATH")]
    pub samples_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CfArgs {
    #[command(flatten)]
    pub kernels: KernelArgs,
    #[arg(long = "t", default_value = "0:3:0.1")]
    pub t_grid: String,
    /// Eigenvalue pairs of the classical spectrum.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// Level of the discretised operator for general kernels.
    #[arg(long, default_value_t = 7)]
    pub level: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub kernels: KernelArgs,
    /// Midpoint grid for the classical operator (Brownian pairs only).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Dyadic level of the general operator.
    #[arg(long, default_value_t = 7)]
    pub level: u32,
    #[arg(long, default_value_t = levy_lab::spectral::PAIR_TOL)]
    pub pair_tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PvarArgs {
    #[command(flatten)]
    pub kernels: KernelArgs,
    /// Variation exponent, or `auto` for the critical index of the kernel.
    #[arg(long, default_value = "auto")]
    pub p: String,
    #[arg(long, default_value_t = 10)]
    pub max_level: u32,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CauchyArgs {
    #[command(flatten)]
    pub kernels: KernelArgs,
    /// Approximation levels, `a:b` or a comma list.
    #[arg(long, default_value = "1:6")]
    pub levels: String,
    /// Refinement level of the quadrature (default per pair).
    #[arg(long)]
    pub refine: Option<u32>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CheckArgs {
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Reads `key=value` lines (`#` comments, blank lines ignored).
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key=value", no + 1))?;
        out.push((k.trim().replace('_', "-"), v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

/// Rewrites argv so that config-file entries come right after the
/// subcommand and before the command-line flags, which then override them.
pub fn merge_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut config = None;
    let mut it = argv.iter().enumerate().skip(1);
    while let Some((i, a)) = it.next() {
        if a == "--config" {
            config = argv.get(i + 1).cloned();
            it.next();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        }
    }
    let Some(path) = config else { return Ok(argv) };
    let entries = read_config(Path::new(&path))?;

    let sub_pos = argv.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())).map(|p| p + 1);
    let file_sub = entries.iter().find(|(k, _)| k == "command").map(|(_, v)| v.clone());
    let mut flags = Vec::new();
    for (k, v) in entries.iter().filter(|(k, _)| k != "command") {
        match v.as_str() {
            "true" => flags.push(format!("--{k}")),
            "false" => {}
            _ => {
                flags.push(format!("--{k}"));
                flags.push(v.clone());
            }
        }
    }
    let mut out = vec![argv[0].clone()];
    match (sub_pos, file_sub) {
        (Some(p), _) => {
            out.extend(argv[1..p].iter().cloned());
            out.push(argv[p].clone());
            out.extend(flags);
            out.extend(argv[p + 1..].iter().cloned());
        }
        (None, Some(sub)) => {
            out.push(sub);
            out.extend(flags);
            out.extend(argv[1..].iter().cloned());
        }
        (None, None) => return Err("no subcommand given on the command line or in the config file".into()),
    }
    Ok(out)
}

/// `a:b:step` (inclusive of `b` up to rounding), `a:b` (step 1), a comma
/// list, or a single value. Values are `a + i·step`, not accumulated.
pub fn parse_range(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?} in {text:?}: {e}"));
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (a, b, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1.0),
            [a, b, s] => (num(a)?, num(b)?, num(s)?),
            _ => return Err(format!("range {text:?} must be a:b or a:b:step")),
        };
        if step.is_nan() || step <= 0.0 || b < a {
            return Err(format!("range {text:?} needs a ≤ b and step > 0"));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        (0..=count).map(|i| a + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(format!("range {text:?} must contain finite values"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(format!("range {text:?} must be sorted"));
    }
    Ok(values)
}

pub fn parse_levels(text: &str) -> Result<Vec<u32>, String> {
    parse_range(text)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 && v <= 32.0 {
                Ok(v as u32)
            } else {
                Err(format!("level {v} in {text:?} is not a small non-negative integer"))
            }
        })
        .collect()
}
