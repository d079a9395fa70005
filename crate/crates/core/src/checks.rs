//! Self-contained invariant suite spanning every module; backs the CLI
//! `check` command and the Python `run_checks` helper.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::covariance::{dyadic_partition, gram_matrix, CovKernel, Rectangle, Weight};
use crate::error::Result;
use crate::levy_kernel::{existence_check_fbm, norm_approx, norm_diff, norm_diff_exact};
use crate::pvariation::{
    control_product_check, v1p, v2p_grid, variation_profile, AreaControl, KernelVariationControl, Verdict,
};
use crate::simulate::{discrete_levy_area, run_mc, MCConfig};
use crate::spectral::{
    cf_curve, classical_spectrum, cosh_factorization_check, discretize_classical_operator, eigen_solve,
    general_spectrum, symmetry_check, PAIR_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The check could not run because an operation returned an error.
    Error,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Error => "error",
        }
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
    /// Set when `status` is `Error` and the underlying error was numerical.
    pub numerical: bool,
}

type CheckFn = fn() -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, CheckFn)] = &[
    ("covariance", "gram matrices are PSD and sum to R(1,1)", gram_psd),
    ("covariance", "rectangular increments add under splits", increment_additivity),
    ("pvariation", "v1p dynamic programme matches exhaustive partitions", v1p_brute_force),
    ("pvariation", "v2p is non-decreasing in level", v2p_monotone),
    ("pvariation", "control products are superadditive", control_superadditivity),
    ("pvariation", "fBm H=0.35 profile verdicts", fbm_profile),
    ("levy_kernel", "Brownian Cauchy increments are 2^{-n-2}", brownian_cauchy),
    ("levy_kernel", "quadrature and exact chaos norms agree", chaos_routes_agree),
    ("levy_kernel", "fBm existence gate", existence_gate),
    ("simulate", "discrete area is antisymmetric and matches the double sum", area_identities),
    ("simulate", "Brownian MC variance matches 2·norm_approx", mc_variance),
    ("spectral", "cosh product factorisation", cosh_product),
    ("spectral", "spectral CF within tail bound of 1/cosh", spectral_cf),
    ("spectral", "discretised classical spectrum is paired with multiplicity 2", classical_operator),
    ("spectral", "fBm H=0.4 general operator is symmetric", general_symmetry),
];

/// Runs every invariant check in a fixed order.
pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(module, name, f)| {
            let (status, detail, numerical) = match f() {
                Ok((true, d)) => (CheckStatus::Pass, d, false),
                Ok((false, d)) => (CheckStatus::Fail, d, false),
                Err(e) => (CheckStatus::Error, format!("{module}: {e}"), e.is_numerical()),
            };
            CheckOutcome { module, name, status, detail, numerical }
        })
        .collect()
}

fn kernels() -> Result<Vec<CovKernel>> {
    Ok(vec![
        CovKernel::brownian(),
        CovKernel::fbm(0.3)?,
        CovKernel::fbm(0.75)?,
        CovKernel::weighted(Weight::Poly { coef: 1.0, degree: 1 })?,
        CovKernel::weighted(Weight::Exp { rate: -0.5 })?,
    ])
}

fn gram_psd() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for k in kernels()? {
        let g = gram_matrix(&k, &dyadic_partition(6))?;
        ok &= g.is_psd();
        let err = (g.total() - k.eval(1.0, 1.0)?).abs();
        worst = worst.max(err);
    }
    Ok((ok && worst < 1e-10, format!("max |ΣG − R(1,1)| = {worst:e}")))
}

fn increment_additivity() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in kernels()? {
        for _ in 0..200 {
            let mut xs: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            xs.sort_by(f64::total_cmp);
            let (u0, u1) = {
                let (a, b): (f64, f64) = (rng.random(), rng.random());
                (a.min(b), a.max(b))
            };
            let whole = k.rect_increment(&Rectangle::new(xs[0], xs[2], u0, u1)?);
            let parts = k.rect_increment(&Rectangle::new(xs[0], xs[1], u0, u1)?)
                + k.rect_increment(&Rectangle::new(xs[1], xs[2], u0, u1)?);
            worst = worst.max((whole - parts).abs());
        }
    }
    Ok((worst < 1e-12, format!("max split defect {worst:e}")))
}

fn v1p_brute_force() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut cases = 0;
    for n in 2..=6usize {
        for _ in 0..20 {
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let samples: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
            for p in [1.0, 1.5, 2.0, 3.0] {
                let dp = v1p(&samples, p)?;
                let mut best = 0.0f64;
                // every subset of interior points together with both endpoints
                for mask in 0u32..1 << (n - 2) {
                    let mut idx = vec![0];
                    idx.extend((1..n - 1).filter(|i| mask >> (i - 1) & 1 == 1));
                    idx.push(n - 1);
                    let s: f64 = idx.windows(2).map(|w| (values[w[1]] - values[w[0]]).abs().powf(p)).sum();
                    best = best.max(s);
                }
                cases += 1;
                if (dp - best.powf(1.0 / p)).abs() > 1e-12 * (1.0 + dp) {
                    mismatches += 1;
                }
            }
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches in {cases} cases")))
}

fn v2p_monotone() -> Result<(bool, String)> {
    let mut ok = true;
    for k in kernels()? {
        for p in [1.0, 2.0, 3.0] {
            let ladder: Vec<f64> = (1..=6).map(|l| v2p_grid(&k, p, l)).collect::<Result<_>>()?;
            ok &= ladder.windows(2).all(|w| w[1] >= w[0]);
        }
    }
    Ok((ok, String::from("levels 1..6, p ∈ {1,2,3}")))
}

fn control_superadditivity() -> Result<(bool, String)> {
    let bm = KernelVariationControl::new(CovKernel::brownian(), 1.0, 4)?;
    let audit = control_product_check(&AreaControl, &bm, 2.0, 2.0, 1000, 3)?;
    Ok((audit.violations == 0, format!("{} violations in {} splits", audit.violations, audit.splits_checked)))
}

fn fbm_profile() -> Result<(bool, String)> {
    let h = 0.35;
    let k = CovKernel::fbm(h)?;
    let critical = variation_profile(&k, 1.0 / (2.0 * h), 10)?;
    let one = variation_profile(&k, 1.0, 10)?;
    let ok = critical.verdict == Verdict::Stabilizing && one.verdict == Verdict::Growing;
    Ok((ok, format!("p=1/(2H): {}, p=1: {}", critical.verdict, one.verdict)))
}

fn brownian_cauchy() -> Result<(bool, String)> {
    let bm = CovKernel::brownian();
    let mut worst: f64 = 0.0;
    for n in 1..=6 {
        let v = norm_diff(n, n + 1, &bm, &bm, None)?.value;
        worst = worst.max((v - 2f64.powi(-(n as i32) - 2)).abs());
    }
    Ok((worst < 1e-10, format!("max deviation {worst:e}")))
}

fn chaos_routes_agree() -> Result<(bool, String)> {
    let k = CovKernel::fbm(0.75)?;
    let w = CovKernel::weighted(Weight::Poly { coef: 1.0, degree: 1 })?;
    let mut worst: f64 = 0.0;
    for (r1, r2) in [(&k, &k), (&w, &w), (&w, &k)] {
        let quad = norm_diff(1, 3, r1, r2, Some(9))?.value;
        let exact = norm_diff_exact(1, 3, r1, r2)?.value;
        worst = worst.max((quad - exact).abs() / exact);
    }
    Ok((worst < 2e-2, format!("max relative gap {worst:e}")))
}

fn existence_gate() -> Result<(bool, String)> {
    let ok = existence_check_fbm(0.3, 0.3) && existence_check_fbm(0.1, 0.45) && !existence_check_fbm(0.2, 0.2);
    Ok((ok, String::from("(0.3,0.3) and (0.1,0.45) exist, (0.2,0.2) does not")))
}

fn area_identities() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut antisym = true;
    for _ in 0..200 {
        let n = rng.random_range(0..30);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = discrete_levy_area(&a, &b)?;
        antisym &= discrete_levy_area(&b, &a)? == -fast;
        let mut slow = 0.0;
        for l in 0..n {
            for k in 0..l {
                slow += a[k] * b[l] - b[k] * a[l];
            }
        }
        worst = worst.max((fast - slow).abs());
    }
    Ok((antisym && worst < 1e-10, format!("max gap to double sum {worst:e}")))
}

fn mc_variance() -> Result<(bool, String)> {
    let bm = CovKernel::brownian();
    let level = 6;
    let r = run_mc(&MCConfig::new(2, 40_000, level, bm.clone(), bm.clone())?)?;
    let want = 2.0 * norm_approx(level, &bm, &bm, None)?.value;
    let z = (r.variance - want) / r.variance_stderr();
    Ok((z.abs() < 3.0, format!("variance {} vs {want} ({z:.2}σ)", r.variance)))
}

fn cosh_product() -> Result<(bool, String)> {
    let r = cosh_factorization_check(Complex64::new(1.0, 0.0), 100_000);
    Ok((r < 1e-4, format!("residual {r:e} at z=1, N=1e5")))
}

fn spectral_cf() -> Result<(bool, String)> {
    let spec = classical_spectrum(10_000)?;
    let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
    let curve = cf_curve(&spec, &grid, None)?;
    let ok = curve.iter().all(|p| (p.value.re - 1.0 / p.t.cosh()).abs() <= p.tail_bound && p.value.im.abs() <= 1e-12);
    let worst = curve.iter().map(|p| (p.value.re - 1.0 / p.t.cosh()).abs()).fold(0.0, f64::max);
    Ok((ok, format!("max deviation {worst:e} on t ∈ [0,3]")))
}

fn classical_operator() -> Result<(bool, String)> {
    let spec = eigen_solve(&discretize_classical_operator(256)?)?;
    let top = spec.spectral_radius;
    let all_two = spec.eigenvalues.iter().all(|e| e.multiplicity == 2);
    let report = symmetry_check(&spec, PAIR_TOL);
    let ok = (top - 1.0 / PI).abs() < 0.01 / PI && all_two && report.passed();
    Ok((ok, format!("σ = {top}, {} symmetry violations", report.violations.len())))
}

fn general_symmetry() -> Result<(bool, String)> {
    let k = CovKernel::fbm(0.4)?;
    let report = symmetry_check(&general_spectrum(&k, &k, 6)?, PAIR_TOL);
    Ok((report.passed(), format!("{} clusters checked", report.clusters_checked)))
}
