//! Acceptance suite: one line per criterion, non-zero exit on any failure.
//!
//! Runs without the libtest harness so the criteria execute sequentially
//! and their wall-clock budgets are measured in isolation.

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use levy_lab::covariance::Weight;
use levy_lab::levy_kernel::{cauchy_table, existence_check_fbm, norm_approx, norm_approx_exact, norm_diff};
use levy_lab::pvariation::{
    control_product_check, v1p, variation_profile, AreaControl, KernelVariationControl, Verdict,
};
use levy_lab::simulate::{empirical_cf, run_mc, MCConfig, MCResult};
use levy_lab::spectral::{
    cf_from_spectrum, classical_spectrum, cosh_factorization_check, discretize_classical_operator, eigen_solve,
    symmetry_check,
};
use levy_lab::CovKernel;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_611;
const MC_SAMPLES: usize = 200_000;
const MC_LEVEL: u32 = 10;
const T_POINTS: [f64; 3] = [0.5, 1.0, 2.0];

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(elapsed: Duration, budget_s: f64, detail: String) -> Outcome {
    let secs = elapsed.as_secs_f64();
    ensure(secs < budget_s, format!("{detail}; {secs:.2} s of {budget_s} s"))
}

fn brownian_mc() -> Result<(MCResult, Duration), String> {
    let bm = CovKernel::brownian();
    let start = Instant::now();
    let cfg = MCConfig::new(SEED, MC_SAMPLES, MC_LEVEL, bm.clone(), bm).map_err(|e| e.to_string())?;
    let r = run_mc(&cfg).map_err(|e| e.to_string())?;
    Ok((r, start.elapsed()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = classical_spectrum(10_000).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for t in T_POINTS {
        let p = cf_from_spectrum(&spec, Complex64::new(0.0, t), None).map_err(|e| e.to_string())?;
        worst = worst.max((p.value - Complex64::new(1.0 / t.cosh(), 0.0)).norm());
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-4, format!("max |φ_N − sech| = {worst:.2e}")).and_then(|d| within_budget(elapsed, 1.0, d))
}

fn criterion_2(mc: &MCResult, elapsed: Duration) -> Outcome {
    let start = Instant::now();
    let cf = empirical_cf(mc, &T_POINTS).map_err(|e| e.to_string())?;
    let elapsed = elapsed + start.elapsed();
    let mut worst_re: f64 = 0.0;
    let mut worst_im: f64 = 0.0;
    for (t, z) in T_POINTS.iter().zip(&cf.estimates) {
        worst_re = worst_re.max((z.re - 1.0 / t.cosh()).abs());
        worst_im = worst_im.max(z.im.abs());
    }
    ensure(worst_re < 0.01 && worst_im < 0.01, format!("max |Re − sech| = {worst_re:.4}, max |Im| = {worst_im:.4}"))
        .and_then(|d| within_budget(elapsed, 60.0, d))
}

/// `2‖f_n‖²` for Brownian by counting: each off-diagonal cell pair in the
/// two blocks carries (½)²·(2^{-n})².
fn combinatorial_variance(level: u32) -> f64 {
    let n = 1u64 << level;
    let off_diagonal = (n * n - n) as f64;
    2.0 * 2.0 * off_diagonal * 0.25 / (n * n) as f64
}

fn criterion_3(mc: &MCResult) -> Outcome {
    let bm = CovKernel::brownian();
    let want = 1.0 - 2f64.powi(-(MC_LEVEL as i32));
    let oracle = combinatorial_variance(MC_LEVEL);
    let exact = 2.0 * norm_approx_exact(MC_LEVEL, &bm, &bm).map_err(|e| e.to_string())?.value;
    let quad = 2.0 * norm_approx(MC_LEVEL, &bm, &bm, None).map_err(|e| e.to_string())?.value;
    let n = mc.n_samples() as f64;
    let tol = 3.0 / n.sqrt() * (mc.fourth_moment - mc.variance * mc.variance).sqrt();
    let dev = (mc.variance - want).abs();
    ensure(
        dev <= tol && (oracle - want).abs() < 1e-15 && (exact - want).abs() < 1e-10 && (quad - want).abs() < 1e-10,
        format!(
            "MC variance {:.5} vs {want:.5} (|Δ| {dev:.2e} ≤ {tol:.2e}); Gram {:.1e}, quadrature {:.1e} off",
            mc.variance,
            (exact - want).abs(),
            (quad - want).abs()
        ),
    )
}

/// Naive quadruple sum `Σ D_{kl} D_{k'l'} G(k,k') G(l,l')` over both
/// off-diagonal blocks, with `G` built from `R(s,t) = min(s,t)` directly.
fn brute_force_norm_diff(n: u32, m: u32) -> f64 {
    let level = n.max(m);
    let cells = 1usize << level;
    let h = 1.0 / cells as f64;
    let r = |s: f64, t: f64| s.min(t);
    let g = |k: usize, kp: usize| {
        let (s0, s1, t0, t1) = (k as f64 * h, (k + 1) as f64 * h, kp as f64 * h, (kp + 1) as f64 * h);
        r(s1, t1) - r(s1, t0) - r(s0, t1) + r(s0, t0)
    };
    let f = |lvl: u32, k: usize, l: usize| {
        let (a, b) = (k >> (level - lvl), l >> (level - lvl));
        if a < b {
            0.5
        } else if a > b {
            -0.5
        } else {
            0.0
        }
    };
    let d = |k: usize, l: usize| f(n, k, l) - f(m, k, l);
    let mut total = 0.0;
    for k in 0..cells {
        for l in 0..cells {
            let dkl = d(k, l);
            if dkl == 0.0 {
                continue;
            }
            for kp in 0..cells {
                let gk = g(k, kp);
                for lp in 0..cells {
                    total += dkl * d(kp, lp) * gk * g(l, lp);
                }
            }
        }
    }
    // block (2,1) carries −D and the same Grams
    2.0 * total
}

fn criterion_4() -> Outcome {
    let bm = CovKernel::brownian();
    let start = Instant::now();
    let table = cauchy_table(&[1, 2, 3, 4, 5, 6, 7], &bm, &bm, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    for (row, n) in table.rows.iter().zip(1..=6) {
        let lib = norm_diff(n, n + 1, &bm, &bm, None).map_err(|e| e.to_string())?.value;
        let oracle = brute_force_norm_diff(n, n + 1);
        worst = worst.max((row.norm.value - oracle).abs()).max((lib - oracle).abs());
        worst = worst.max((oracle - 2f64.powi(-(n as i32) - 2)).abs());
    }
    let slope = table.slope.ok_or("no slope fitted")?;
    ensure(worst < 1e-10 && (slope + 1.0).abs() <= 0.05, format!("max |Δ| vs oracle {worst:.1e}, slope {slope:.4}"))
        .and_then(|d| within_budget(elapsed, 10.0, d))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let spec =
        eigen_solve(&discretize_classical_operator(256).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut mags: Vec<f64> = spec.eigenvalues.iter().map(|e| e.alpha.abs()).collect();
    mags.dedup_by(|a, b| (*a - *b).abs() <= 1e-6 * spec.spectral_radius);
    let top_err = (mags[0] - 1.0 / PI).abs() / (1.0 / PI);
    let second_err = (mags[1] - 1.0 / (3.0 * PI)).abs() / (1.0 / (3.0 * PI));
    let all_two = spec.eigenvalues.iter().all(|e| e.multiplicity == 2);
    let report = symmetry_check(&spec, 1e-6);
    ensure(
        top_err < 0.01 && second_err < 0.02 && all_two && report.passed(),
        format!(
            "top rel. err {top_err:.1e}, second {second_err:.1e}, {} clusters all of multiplicity 2: {all_two}, {} mirror violations",
            spec.eigenvalues.len(),
            report.violations.len()
        ),
    )
    .and_then(|d| within_budget(elapsed, 30.0, d))
}

fn criterion_6() -> Outcome {
    let w = CovKernel::weighted(Weight::Poly { coef: 1.0, degree: 1 }).map_err(|e| e.to_string())?;
    let cfg = MCConfig::new(SEED, MC_SAMPLES, MC_LEVEL, w.clone(), w).map_err(|e| e.to_string())?;
    let r = run_mc(&cfg).map_err(|e| e.to_string())?;
    let cf = empirical_cf(&r, &[3.0]).map_err(|e| e.to_string())?;
    let want_cf = 1.0 / 1f64.cosh();
    let cf_err = (cf.estimates[0].re - want_cf).abs();
    let sigma = r.variance_stderr();
    let var_err = (r.variance - 1.0 / 9.0).abs();
    ensure(
        cf_err < 0.01 && var_err <= 3.0 * sigma,
        format!("|φ(3) − sech 1| = {cf_err:.4}; variance {:.5} vs 1/9 ({:.2}σ)", r.variance, var_err / sigma),
    )
}

fn criterion_7() -> Outcome {
    let gate = existence_check_fbm(0.3, 0.3) && existence_check_fbm(0.1, 0.45) && !existence_check_fbm(0.2, 0.2);
    // the gate as a property over a grid of Hurst pairs in (0, ½]
    let mut mismatches = 0;
    for i in 1..=50 {
        for j in 1..=50 {
            let (h, hp) = (i as f64 * 0.01 - 0.005, j as f64 * 0.01 - 0.005);
            if existence_check_fbm(h, hp) != (h + hp > 0.5) {
                mismatches += 1;
            }
        }
    }
    let k = CovKernel::fbm(0.35).map_err(|e| e.to_string())?;
    let critical = variation_profile(&k, 1.0 / 0.7, 10).map_err(|e| e.to_string())?;
    let one = variation_profile(&k, 1.0, 10).map_err(|e| e.to_string())?;
    ensure(
        gate && mismatches == 0 && critical.verdict == Verdict::Stabilizing && one.verdict == Verdict::Growing,
        format!(
            "gate examples {gate}, grid mismatches {mismatches}; p=1/(2H) {}, p=1 {}",
            critical.verdict, one.verdict
        ),
    )
}

fn brute_v1p(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let mut best = 0.0f64;
    for mask in 0u32..1 << (n - 2) {
        let mut idx = vec![0];
        idx.extend((1..n - 1).filter(|i| mask >> (i - 1) & 1 == 1));
        idx.push(n - 1);
        let mut s = 0.0;
        for w in idx.windows(2) {
            s += (values[w[1]] - values[w[0]]).abs().powf(p);
        }
        best = best.max(s);
    }
    best.powf(1.0 / p)
}

fn criterion_8() -> Outcome {
    let residual = cosh_factorization_check(Complex64::new(1.0, 0.0), 100_000);
    let bm = KernelVariationControl::new(CovKernel::brownian(), 1.0, 4).map_err(|e| e.to_string())?;
    let audit = control_product_check(&AreaControl, &bm, 2.0, 2.0, 1000, SEED).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut cases, mut mismatches) = (0, 0);
    for n in 2..=6 {
        for _ in 0..200 {
            let mut t = 0.0;
            let samples: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    t += rng.random_range(0.01..1.0);
                    (t, rng.random_range(-2.0..2.0))
                })
                .collect();
            let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
            for p in [1.0, 1.5, 2.0, 2.5, 4.0] {
                cases += 1;
                if v1p(&samples, p).map_err(|e| e.to_string())? != brute_v1p(&values, p) {
                    mismatches += 1;
                }
            }
        }
    }
    ensure(
        residual < 1e-4 && audit.violations == 0 && audit.splits_checked >= 1000 && mismatches == 0,
        format!(
            "cosh residual {residual:.2e}; {} violations in {} splits; v1p mismatches {mismatches}/{cases}",
            audit.violations, audit.splits_checked
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |threads: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let cf = dir.path().join(format!("cf-{threads}.csv"));
        let samples = dir.path().join(format!("samples-{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_levy-lab"))
            .args(["simulate", "--kernel", "brownian", "--level", "10", "--samples", "200000", "--t", "0.5,1,2"])
            .args(["--seed", &SEED.to_string(), "--threads", threads])
            .arg("--out")
            .arg(&cf)
            .arg("--samples-out")
            .arg(&samples)
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("simulate --threads {threads} exited with {status}"));
        }
        Ok((std::fs::read(cf).map_err(|e| e.to_string())?, std::fs::read(samples).map_err(|e| e.to_string())?))
    };
    let (cf1, s1) = run("1")?;
    let (cf4, s4) = run("4")?;
    ensure(
        cf1 == cf4 && s1 == s4,
        format!("CF CSV {} bytes, samples CSV {} bytes, identical across --threads 1/4", cf1.len(), s1.len()),
    )
}

fn main() {
    let (mc, mc_time) = match brownian_mc() {
        Ok(v) => v,
        Err(e) => {
            println!("[FAIL] Brownian Monte Carlo setup: {e}");
            std::process::exit(1);
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("classical CF, spectral route", Box::new(criterion_1)),
        ("classical CF, Monte Carlo route", Box::new(|| criterion_2(&mc, mc_time))),
        ("discrete-area variance", Box::new(|| criterion_3(&mc))),
        ("Cauchy decay", Box::new(criterion_4)),
        ("discretised spectrum", Box::new(criterion_5)),
        ("weighted example", Box::new(criterion_6)),
        ("fBm existence gate and profiles", Box::new(criterion_7)),
        ("Young machinery", Box::new(criterion_8)),
        ("determinism across --threads", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("[PASS] {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
