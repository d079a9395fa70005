//! One- and two-dimensional p-variation, control maps and the 2D
//! Young–Stieltjes integral.
//!
//! The 2D p-variation is a supremum over all pairs of partitions; here it is
//! estimated from below by the supremum over dyadic product grids
//! `D_a × D_b` with `a, b ≤ level`. The estimate is non-decreasing in
//! `level` because every coarser dyadic grid pair is still admissible.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{CovKernel, NodeTable, Rectangle};
use crate::error::{LevyError, Result};
use crate::numeric::Num;

/// Largest dyadic level accepted by the grid estimators.
pub const MAX_LEVEL: u32 = 12;

/// Relative tolerance for calling a profile stabilised.
pub const PROFILE_TOL: f64 = 1e-3;
/// Per-level growth ratio above which a profile is called divergent.
pub const GROWTH_FACTOR: f64 = 1.2;
/// Allowed superadditivity defect in control-map audits.
pub const SLACK_TOL: f64 = 1e-9;

fn check_p(op: &'static str, p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(LevyError::parameter(op, format!("p-variation needs p ≥ 1, got {p}")))
    }
}

fn check_level(op: &'static str, level: u32) -> Result<()> {
    if level > MAX_LEVEL {
        Err(LevyError::resource(op, format!("level {level} exceeds the maximum {MAX_LEVEL}")))
    } else {
        Ok(())
    }
}

/// Exact p-variation of a sampled function over all sub-partitions of the
/// sample points (both endpoints always included).
///
/// Dynamic programme: `best[j] = max_{i<j} best[i] + |f_j − f_i|^p`.
pub fn v1p(samples: &[(f64, f64)], p: f64) -> Result<f64> {
    check_p("v1p", p)?;
    if samples.windows(2).any(|w| w[0].0.partial_cmp(&w[1].0) != Some(std::cmp::Ordering::Less)) {
        return Err(LevyError::Partition("v1p sample points must be strictly increasing".into()));
    }
    Ok(v1p_values(samples.iter().map(|s| s.1).collect::<Vec<_>>().as_slice(), p))
}

pub(crate) fn v1p_values(values: &[f64], p: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut best = vec![0.0f64; values.len()];
    for j in 1..values.len() {
        let mut b = f64::NEG_INFINITY;
        for i in 0..j {
            let cand = best[i] + (values[j] - values[i]).abs().powf(p);
            if cand > b {
                b = cand;
            }
        }
        best[j] = b;
    }
    best[values.len() - 1].powf(1.0 / p)
}

/// `S[a][b] = Σ |Δ_{a,b}|^p` over the product grid with `2^a × 2^b` cells,
/// from rectangular increments between nodes of the level-`n` mesh.
fn pair_power_sums(inc: &(dyn Fn(usize, usize, usize, usize) -> f64 + Sync), n: u32, p: f64) -> Vec<Vec<f64>> {
    let m = 1usize << n;
    (0..=n)
        .map(|a| {
            (0..=n)
                .map(|b| {
                    let (sa, sb) = (m >> a, m >> b);
                    let rows: Vec<f64> = (0..1usize << a)
                        .into_par_iter()
                        .map(|k| {
                            let (i0, i1) = (k * sa, (k + 1) * sa);
                            let mut acc = 0.0;
                            for l in 0..1usize << b {
                                let (j0, j1) = (l * sb, (l + 1) * sb);
                                let d = inc(i0, i1, j0, j1);
                                acc += d.abs().powf(p);
                            }
                            acc
                        })
                        .collect();
                    crate::numeric::pairwise_sum(&rows)
                })
                .collect()
        })
        .collect()
}

fn running_max(sums: &[Vec<f64>], level: usize) -> f64 {
    let mut best = 0.0f64;
    for row in sums.iter().take(level + 1) {
        for &v in row.iter().take(level + 1) {
            best = best.max(v);
        }
    }
    best
}

/// Dyadic lower estimate of `V²_p` from node values on a `2^n` mesh.
pub fn v2p_nodes(table: &NodeTable, p: f64) -> Result<f64> {
    check_p("v2p_nodes", p)?;
    let m = table.intervals();
    if !m.is_power_of_two() {
        return Err(LevyError::parameter("v2p_nodes", "mesh size must be a power of two"));
    }
    let n = m.trailing_zeros();
    let sums = pair_power_sums(&|a0, a1, b0, b1| table.increment(a0, a1, b0, b1), n, p);
    Ok(running_max(&sums, n as usize).powf(1.0 / p))
}

/// Lower estimate of `V²_p(R, [0,1]²)` restricted to dyadic product grids of
/// level at most `level`.
pub fn v2p_grid(kernel: &CovKernel, p: f64, level: u32) -> Result<f64> {
    check_p("v2p_grid", p)?;
    check_level("v2p_grid", level)?;
    v2p_nodes(&kernel.node_table(1 << level), p)
}

/// Classification of a p-variation refinement ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stabilizing,
    Growing,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Stabilizing => "stabilizing",
            Verdict::Growing => "growing",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileConfig {
    pub profile_tol: f64,
    pub growth_factor: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { profile_tol: PROFILE_TOL, growth_factor: GROWTH_FACTOR }
    }
}

/// p-variation estimates over a ladder of dyadic levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationProfile {
    pub p: f64,
    pub levels: Vec<(u32, f64)>,
    pub verdict: Verdict,
}

impl VariationProfile {
    /// CSV with header `level,estimate,verdict`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,estimate,verdict\n");
        for &(level, est) in &self.levels {
            out.push_str(&format!("{level},{},{}\n", Num(est), self.verdict));
        }
        out
    }
}

pub fn classify(estimates: &[f64], cfg: &ProfileConfig) -> Verdict {
    let n = estimates.len();
    if n >= 2 {
        let (prev, last) = (estimates[n - 2], estimates[n - 1]);
        if (last - prev).abs() <= cfg.profile_tol * last.abs() {
            return Verdict::Stabilizing;
        }
    }
    if n >= 3 {
        let tail = &estimates[n - 3..];
        if tail.windows(2).all(|w| w[0] > 0.0 && w[1] >= cfg.growth_factor * w[0]) {
            return Verdict::Growing;
        }
    }
    Verdict::Inconclusive
}

pub fn variation_profile(kernel: &CovKernel, p: f64, max_level: u32) -> Result<VariationProfile> {
    variation_profile_with(kernel, p, max_level, &ProfileConfig::default())
}

pub fn variation_profile_with(
    kernel: &CovKernel,
    p: f64,
    max_level: u32,
    cfg: &ProfileConfig,
) -> Result<VariationProfile> {
    check_p("variation_profile", p)?;
    check_level("variation_profile", max_level)?;
    if max_level == 0 {
        return Err(LevyError::parameter("variation_profile", "max_level must be at least 1"));
    }
    let table = kernel.node_table(1 << max_level);
    let sums = pair_power_sums(&|a0, a1, b0, b1| table.increment(a0, a1, b0, b1), max_level, p);
    let levels: Vec<(u32, f64)> = (1..=max_level).map(|l| (l, running_max(&sums, l as usize).powf(1.0 / p))).collect();
    let estimates: Vec<f64> = levels.iter().map(|l| l.1).collect();
    Ok(VariationProfile { p, verdict: classify(&estimates, cfg), levels })
}

/// A rectangle function `ω` that is superadditive under axis splits.
pub trait Control: Sync {
    fn omega(&self, rect: &Rectangle) -> f64;
}

impl<F: Fn(&Rectangle) -> f64 + Sync> Control for F {
    fn omega(&self, rect: &Rectangle) -> f64 {
        self(rect)
    }
}

/// Lebesgue measure of the rectangle.
#[derive(Debug, Clone, Copy, Default)]
pub struct AreaControl;

impl Control for AreaControl {
    fn omega(&self, rect: &Rectangle) -> f64 {
        rect.area()
    }
}

/// `ω(Q) = V²_p(R, Q)^p`, with the p-variation estimated on dyadic
/// subdivisions of `Q` down to `level`.
#[derive(Debug, Clone)]
pub struct KernelVariationControl {
    pub kernel: CovKernel,
    pub p: f64,
    pub level: u32,
}

impl KernelVariationControl {
    pub fn new(kernel: CovKernel, p: f64, level: u32) -> Result<Self> {
        check_p("KernelVariationControl", p)?;
        check_level("KernelVariationControl", level)?;
        Ok(KernelVariationControl { kernel, p, level })
    }
}

impl Control for KernelVariationControl {
    fn omega(&self, rect: &Rectangle) -> f64 {
        let m = 1usize << self.level;
        let xs: Vec<f64> = (0..=m).map(|i| rect.s0 + (rect.s1 - rect.s0) * i as f64 / m as f64).collect();
        let ys: Vec<f64> = (0..=m).map(|j| rect.u0 + (rect.u1 - rect.u0) * j as f64 / m as f64).collect();
        // direct increments: exact overlap lengths for Brownian, so empty
        // cells carry no rounding noise for the fractional powers to amplify
        let inc = |i0: usize, i1: usize, j0: usize, j1: usize| {
            self.kernel.increment_unchecked(xs[i0], xs[i1], ys[j0], ys[j1])
        };
        let sums = pair_power_sums(&inc, self.level, self.p);
        running_max(&sums, self.level as usize)
    }
}

/// The value `ω(Q)^exponent` of a control on a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlEstimate {
    #[serde(skip)]
    pub rectangle: Rectangle,
    pub value: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    First,
    Second,
}

/// Outcome of a randomised superadditivity audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlAudit {
    pub trials: usize,
    pub splits_checked: usize,
    pub violations: usize,
    /// Largest `ω̂(left) + ω̂(right) − ω̂(whole)` seen (may be negative).
    pub max_violation: f64,
    pub slack_tol: f64,
}

/// Audit that `ω₁^{1/p}·ω₂^{1/q}` is superadditive along both axes on
/// `trials` random rectangles, each split once per axis.
pub fn control_product_check(
    omega1: &dyn Control,
    omega2: &dyn Control,
    p: f64,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<ControlAudit> {
    if !(p > 0.0 && q > 0.0) || 1.0 / p + 1.0 / q < 1.0 {
        return Err(LevyError::parameter(
            "control_product_check",
            format!("need p, q > 0 with 1/p + 1/q ≥ 1, got p = {p}, q = {q}"),
        ));
    }
    let combined = |r: &Rectangle| omega1.omega(r).powf(1.0 / p) * omega2.omega(r).powf(1.0 / q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sorted_pair = |rng: &mut ChaCha8Rng| {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        (a.min(b), a.max(b))
    };
    let mut violations = 0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut splits = 0;
    for _ in 0..trials {
        let (r, t) = sorted_pair(&mut rng);
        let (u, v) = sorted_pair(&mut rng);
        let frac: f64 = rng.random();
        for axis in [Axis::First, Axis::Second] {
            let whole = Rectangle { s0: r, s1: t, u0: u, u1: v };
            let (left, right) = match axis {
                Axis::First => {
                    let s = r + frac * (t - r);
                    (Rectangle { s1: s, ..whole }, Rectangle { s0: s, ..whole })
                }
                Axis::Second => {
                    let s = u + frac * (v - u);
                    (Rectangle { u1: s, ..whole }, Rectangle { u0: s, ..whole })
                }
            };
            let defect = combined(&left) + combined(&right) - combined(&whole);
            max_violation = max_violation.max(defect);
            if defect > SLACK_TOL {
                violations += 1;
            }
            splits += 1;
        }
    }
    Ok(ControlAudit { trials, splits_checked: splits, violations, max_violation, slack_tol: SLACK_TOL })
}

/// The four-part norm `‖f‖_{W²_p}` used in Young's inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YoungNorm {
    pub v2p: f64,
    /// `V¹_p(f(·, 0))`
    pub v1p_bottom_edge: f64,
    /// `V¹_p(f(0, ·))`
    pub v1p_left_edge: f64,
    pub corner_abs: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YoungIntegral {
    pub value: f64,
    /// `value(level) − value(level − 1)`; zero at level 0.
    pub refinement_delta: f64,
    pub level: u32,
    pub norm: YoungNorm,
    pub v2q_integrator: f64,
    /// `|value| / (‖f‖_{W²_p} · V²_q(g))`, reported for inspection only.
    pub ratio: Option<f64>,
}

fn riemann_stieltjes(f: &NodeTable, g: &NodeTable) -> f64 {
    let m = f.intervals();
    let rows: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|k| {
            let mut acc = crate::numeric::CompensatedSum::new();
            for l in 0..m {
                acc.add(f.at(k, l) * g.increment(k, k + 1, l, l + 1));
            }
            acc.value()
        })
        .collect();
    crate::numeric::pairwise_sum(&rows)
}

fn sample_nodes(f: &(dyn Fn(f64, f64) -> f64 + Sync), m: usize) -> NodeTable {
    let mut values = vec![0.0; (m + 1) * (m + 1)];
    values.par_chunks_mut(m + 1).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = f(i as f64 / m as f64, j as f64 / m as f64);
        }
    });
    NodeTable::from_values(m, values).expect("mesh size matches")
}

/// Riemann–Stieltjes sum `Σ f(lower-left corner) · g(□cell)` over the
/// level-`level` dyadic grid, with the Young-inequality ingredients attached.
pub fn young_integral_2d(
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    g: &CovKernel,
    p: f64,
    q: f64,
    level: u32,
) -> Result<YoungIntegral> {
    check_p("young_integral_2d", p)?;
    check_p("young_integral_2d", q)?;
    if 1.0 / p + 1.0 / q <= 1.0 {
        return Err(LevyError::parameter(
            "young_integral_2d",
            format!("Young integration needs 1/p + 1/q > 1, got p = {p}, q = {q}"),
        ));
    }
    check_level("young_integral_2d", level)?;
    let m = 1usize << level;
    let f_nodes = sample_nodes(f, m);
    let g_nodes = g.node_table(m);
    let value = riemann_stieltjes(&f_nodes, &g_nodes);
    let refinement_delta = if level == 0 {
        0.0
    } else {
        let coarse_f = sample_nodes(f, m / 2);
        let coarse_g = g.node_table(m / 2);
        value - riemann_stieltjes(&coarse_f, &coarse_g)
    };
    let bottom: Vec<f64> = (0..=m).map(|i| f_nodes.at(i, 0)).collect();
    let left: Vec<f64> = (0..=m).map(|j| f_nodes.at(0, j)).collect();
    let v2 = v2p_nodes(&f_nodes, p)?;
    let (vb, vl, corner) = (v1p_values(&bottom, p), v1p_values(&left, p), f_nodes.at(0, 0).abs());
    let norm =
        YoungNorm { v2p: v2, v1p_bottom_edge: vb, v1p_left_edge: vl, corner_abs: corner, total: v2 + vb + vl + corner };
    let v2q_integrator = v2p_nodes(&g_nodes, q)?;
    let denom = norm.total * v2q_integrator;
    let ratio = (denom > 0.0).then(|| value.abs() / denom);
    Ok(YoungIntegral { value, refinement_delta, level, norm, v2q_integrator, ratio })
}
