//! The Lévy kernel, its dyadic step approximations `f_n`, and exact
//! second-chaos norms of their differences.
//!
//! Kernels on `([0,1]×{1,2})²` are written block-wise as `f_ij(s,t)`. The
//! Lévy kernel is `±½` on the triangles `s < t`, `s > t` of the off-diagonal
//! blocks; `f_n` replaces the triangles by unions of dyadic cells `I_k × I_l`
//! with `k ≠ l`, `I_k = (k 2^{-n}, (k+1) 2^{-n}]`.
//!
//! Two independent routes compute `‖f_n − f_m‖²_{H⊗²}`:
//!
//! * [`norm_diff`] reduces each block to `Σ ∬ F_{k,l}(u,v) dR_j(u,v)`, the
//!   inner integral against `R_i` having been done in closed form, and
//!   evaluates the outer Riemann–Stieltjes integral on a refinement grid.
//! * [`norm_diff_exact`] treats `f_n − f_m` as a step kernel and sums
//!   `Σ c_{kl} c_{k'l'} R_i(□I_k×I_{k'}) R_j(□I_l×I_{l'})` through Gram
//!   matrices.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{dyadic_partition, gram_matrix, CovKernel, KernelKind, NodeTable};
use crate::error::{LevyError, Result};
use crate::numeric::{ls_slope, pairwise_sum, CompensatedSum, Num};

/// Largest refinement level of the quadrature route (tables of `(2^r+1)²`).
pub const MAX_REFINE: u32 = 12;
/// Largest level of the exact Gram route (dense `2^n × 2^n` products).
pub const MAX_EXACT_LEVEL: u32 = 11;

/// Index of one of the two processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Component {
    First,
    Second,
}

impl Component {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            1 => Some(Component::First),
            2 => Some(Component::Second),
            _ => None,
        }
    }
}

fn block_sign(i: Component, j: Component) -> f64 {
    match (i, j) {
        (Component::First, Component::Second) => 0.5,
        (Component::Second, Component::First) => -0.5,
        _ => 0.0,
    }
}

/// `f^L_{ij}(s,t)`; the diagonal `s = t` is assigned 0.
pub fn kernel_eval(s: f64, i: Component, t: f64, j: Component) -> Result<f64> {
    check_unit(s)?;
    check_unit(t)?;
    Ok(LevyKernel.eval(s, i, t, j))
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(LevyError::domain("levy_kernel", format!("argument {x} outside [0,1]")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LevyKernel;

impl LevyKernel {
    pub fn eval(&self, s: f64, i: Component, t: f64, j: Component) -> f64 {
        let sign = block_sign(i, j);
        if s < t {
            sign
        } else if s > t {
            -sign
        } else {
            0.0
        }
    }
}

/// Index `k` of the left-open dyadic cell `(k 2^{-n}, (k+1) 2^{-n}]`
/// containing `x`; `x = 0` is put in cell 0.
pub fn cell_index(x: f64, level: u32) -> usize {
    let n = 1usize << level;
    let k = (x * n as f64).ceil() as usize;
    k.saturating_sub(1).min(n - 1)
}

/// The level-`n` step approximation `f_n` of the Lévy kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicApprox {
    pub level: u32,
}

impl DyadicApprox {
    pub fn new(level: u32) -> Self {
        DyadicApprox { level }
    }

    /// Value on the cell `I_k × I_l`.
    pub fn cell_value(&self, k: usize, i: Component, l: usize, j: Component) -> f64 {
        let sign = block_sign(i, j);
        match k.cmp(&l) {
            std::cmp::Ordering::Less => sign,
            std::cmp::Ordering::Greater => -sign,
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    pub fn eval(&self, s: f64, i: Component, t: f64, j: Component) -> f64 {
        self.cell_value(cell_index(s, self.level), i, cell_index(t, self.level), j)
    }
}

/// `f_n((s,i),(t,j))` with domain checks.
pub fn approx_eval(n: u32, s: f64, i: Component, t: f64, j: Component) -> Result<f64> {
    check_unit(s)?;
    check_unit(t)?;
    Ok(DyadicApprox::new(n).eval(s, i, t, j))
}

/// `F^{n,m}_{k,l}(u,v)`: the inner integral of the (sign-split) kernel
/// product over the cell `I^n_k × I^m_l`, as a function of the corner
/// `(u,v)` that splits the cell into four rectangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FIncrement {
    pub k: usize,
    pub l: usize,
    pub n: u32,
    pub m: u32,
}

impl FIncrement {
    pub fn cell(&self) -> (f64, f64, f64, f64) {
        let (dn, dm) = (0.5f64.powi(self.n as i32), 0.5f64.powi(self.m as i32));
        (self.k as f64 * dn, (self.k + 1) as f64 * dn, self.l as f64 * dm, (self.l + 1) as f64 * dm)
    }

    pub fn eval(&self, kernel: &CovKernel, u: f64, v: f64) -> Result<f64> {
        if self.k >= 1usize << self.n || self.l >= 1usize << self.m {
            return Err(LevyError::domain("f_increment", "cell index out of range"));
        }
        let (tk0, tk1, tl0, tl1) = self.cell();
        if !(tk0..=tk1).contains(&u) || !(tl0..=tl1).contains(&v) {
            return Err(LevyError::domain(
                "f_increment",
                format!("point ({u}, {v}) outside cell [{tk0},{tk1}]×[{tl0},{tl1}]"),
            ));
        }
        let inc = |a, b, c, d| kernel.increment_unchecked(a, b, c, d);
        Ok(inc(u, tk1, v, tl1) - inc(tk0, u, v, tl1) - inc(u, tk1, tl0, v) + inc(tk0, u, tl0, v))
    }
}

pub fn f_increment(k: usize, l: usize, n: u32, m: u32, kernel: &CovKernel, u: f64, v: f64) -> Result<f64> {
    FIncrement { k, l, n, m }.eval(kernel, u, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChaosMethod {
    ExactSum,
    RefinedQuadrature,
}

/// A squared `H⊗²` norm of a kernel difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosNorm {
    /// `max(raw, 0)`
    pub value: f64,
    /// Unclamped sum; may dip below zero by quadrature error for rough kernels.
    pub raw: f64,
    pub level_pair: (u32, u32),
    pub method: ChaosMethod,
    pub refine: Option<u32>,
}

/// Default refinement: one level past the finer approximant for Brownian
/// pairs (exact there), two otherwise.
pub fn default_refine(n: u32, m: u32, r1: &CovKernel, r2: &CovKernel) -> u32 {
    let both_bm = r1.kind() == KernelKind::Brownian && r2.kind() == KernelKind::Brownian;
    n.max(m) + if both_bm { 1 } else { 2 }
}

/// Sum over all level-`r` subcells `(a,b)` of `D(a,b) · R_j(□ subcell)`,
/// where `D = F^{n,n} + F^{m,m} − 2F^{n,m}` is built from `R_i`.
fn block_sum(ti: &NodeTable, tj: &NodeTable, n: u32, m: u32, r: u32) -> f64 {
    let size = 1usize << r;
    let (sn, sm) = (r - n, r - m);
    let rows: Vec<f64> = (0..size)
        .into_par_iter()
        .map(|a| {
            let kn = ((a >> sn) << sn, ((a >> sn) + 1) << sn);
            let km = ((a >> sm) << sm, ((a >> sm) + 1) << sm);
            let f = |(k0, k1): (usize, usize), (l0, l1): (usize, usize), b: usize| {
                ti.increment(a, k1, b, l1) - ti.increment(k0, a, b, l1) - ti.increment(a, k1, l0, b)
                    + ti.increment(k0, a, l0, b)
            };
            let mut acc = CompensatedSum::new();
            for b in 0..size {
                let dr = tj.increment(a, a + 1, b, b + 1);
                if dr == 0.0 {
                    continue;
                }
                let ln = ((b >> sn) << sn, ((b >> sn) + 1) << sn);
                let lm = ((b >> sm) << sm, ((b >> sm) + 1) << sm);
                let d = f(kn, ln, b) + f(km, lm, b) - 2.0 * f(kn, lm, b);
                acc.add(d * dr);
            }
            acc.value()
        })
        .collect();
    pairwise_sum(&rows)
}

/// `‖f_n − f_m‖²_{H⊗²}` by the F-increment reduction, with the outer
/// Riemann–Stieltjes integral taken on the level-`refine` grid (lower-left
/// anchors). Level 0 denotes the zero kernel `f_0`.
pub fn norm_diff(n: u32, m: u32, r1: &CovKernel, r2: &CovKernel, refine: Option<u32>) -> Result<ChaosNorm> {
    let refine = refine.unwrap_or_else(|| default_refine(n, m, r1, r2));
    if refine < n.max(m) {
        return Err(LevyError::parameter(
            "norm_diff",
            format!("refine {refine} below approximation levels ({n}, {m})"),
        ));
    }
    if refine > MAX_REFINE {
        return Err(LevyError::resource("norm_diff", format!("refine {refine} exceeds {MAX_REFINE}")));
    }
    let level_pair = (n, m);
    if n == m {
        return Ok(ChaosNorm {
            value: 0.0,
            raw: 0.0,
            level_pair,
            method: ChaosMethod::RefinedQuadrature,
            refine: Some(refine),
        });
    }
    let (lo, hi) = (n.min(m), n.max(m));
    let size = 1usize << refine;
    let t1 = r1.node_table(size);
    let raw = if r1 == r2 {
        0.5 * block_sum(&t1, &t1, lo, hi, refine)
    } else {
        let t2 = r2.node_table(size);
        0.25 * (block_sum(&t1, &t2, lo, hi, refine) + block_sum(&t2, &t1, lo, hi, refine))
    };
    Ok(ChaosNorm { value: raw.max(0.0), raw, level_pair, method: ChaosMethod::RefinedQuadrature, refine: Some(refine) })
}

/// `‖f_n‖²_{H⊗²}` by the F-increment route (`f_0 ≡ 0`).
pub fn norm_approx(n: u32, r1: &CovKernel, r2: &CovKernel, refine: Option<u32>) -> Result<ChaosNorm> {
    let mut norm = norm_diff(0, n, r1, r2, refine)?;
    norm.level_pair = (n, n);
    Ok(norm)
}

/// Coefficients of `(f_n − f_m)_{12}` on the level-`max(n,m)` cells.
fn diff_coefficients(n: u32, m: u32) -> DMatrix<f64> {
    let level = n.max(m);
    let size = 1usize << level;
    let (fn_, fm) = (DyadicApprox::new(n), DyadicApprox::new(m));
    let (sn, sm) = (level - n, level - m);
    DMatrix::from_fn(size, size, |k, l| {
        fn_.cell_value(k >> sn, Component::First, l >> sn, Component::Second)
            - fm.cell_value(k >> sm, Component::First, l >> sm, Component::Second)
    })
}

/// `‖f_n − f_m‖²_{H⊗²}` summed exactly over step-function Gram matrices.
pub fn norm_diff_exact(n: u32, m: u32, r1: &CovKernel, r2: &CovKernel) -> Result<ChaosNorm> {
    let level = n.max(m);
    if level > MAX_EXACT_LEVEL {
        return Err(LevyError::resource("norm_diff_exact", format!("level {level} exceeds {MAX_EXACT_LEVEL}")));
    }
    let part = dyadic_partition(level);
    let g1 = gram_matrix(r1, &part)?.matrix;
    let d = diff_coefficients(n, m);
    // block (2,1) has coefficients −D, which leaves the quadratic form unchanged
    let form = |ga: &DMatrix<f64>, gb: &DMatrix<f64>| (ga * &d * gb).component_mul(&d).sum();
    let raw = if r1 == r2 {
        2.0 * form(&g1, &g1)
    } else {
        let g2 = gram_matrix(r2, &part)?.matrix;
        form(&g1, &g2) + form(&g2, &g1)
    };
    Ok(ChaosNorm { value: raw.max(0.0), raw, level_pair: (n, m), method: ChaosMethod::ExactSum, refine: None })
}

/// `‖f_n‖²_{H⊗²}` by the exact Gram route.
pub fn norm_approx_exact(n: u32, r1: &CovKernel, r2: &CovKernel) -> Result<ChaosNorm> {
    let mut norm = norm_diff_exact(0, n, r1, r2)?;
    norm.level_pair = (n, n);
    Ok(norm)
}

/// `1/p + 1/q > 1`: the covariance variation indices under which the
/// generalised Lévy area exists.
pub fn existence_check(p: f64, q: f64) -> bool {
    1.0 / p + 1.0 / q > 1.0
}

/// [`existence_check`] for two fBm covariances. With indices `1/(2H)`
/// (capped at 1 above H = ½) the gate reads `2H₁ + 2H₂ > 1`; it is
/// evaluated in that form so no reciprocal round trip can move a pair
/// across the boundary.
pub fn existence_check_fbm(h1: f64, h2: f64) -> bool {
    2.0 * h1.min(0.5) + 2.0 * h2.min(0.5) > 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coverage {
    Covered,
    NotCovered,
    Unknown,
}

impl Coverage {
    pub fn for_kernels(r1: &CovKernel, r2: &CovKernel) -> Self {
        match (r1.variation_index(), r2.variation_index()) {
            (Some(p), Some(q)) if existence_check(p, q) => Coverage::Covered,
            (Some(_), Some(_)) => Coverage::NotCovered,
            _ => Coverage::Unknown,
        }
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coverage::Covered => "covered",
            Coverage::NotCovered => "not-covered",
            Coverage::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyRow {
    pub n: u32,
    pub m: u32,
    pub norm: ChaosNorm,
}

/// `‖f_n − f_m‖²` over consecutive level pairs with a fitted log₂ decay rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchyTable {
    pub rows: Vec<CauchyRow>,
    /// Least-squares slope of `log₂ ‖f_n − f_m‖²` against `n`.
    pub slope: Option<f64>,
    pub coverage: Coverage,
}

impl CauchyTable {
    /// CSV with header `n,m,norm_sq,refine,flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,norm_sq,refine,flag\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.n,
                row.m,
                Num(row.norm.value),
                row.norm.refine.map(|r| r.to_string()).unwrap_or_default(),
                self.coverage
            ));
        }
        out
    }
}

pub fn cauchy_table(levels: &[u32], r1: &CovKernel, r2: &CovKernel, refine: Option<u32>) -> Result<CauchyTable> {
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LevyError::parameter("cauchy_table", "levels must be strictly increasing"));
    }
    let rows = levels
        .windows(2)
        .map(|w| {
            let refine = refine.map(|r| r.max(w[1]));
            norm_diff(w[0], w[1], r1, r2, refine).map(|norm| CauchyRow { n: w[0], m: w[1], norm })
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.norm.value > 0.0).map(|r| (r.n as f64, r.norm.value.log2())).unzip();
    Ok(CauchyTable { slope: ls_slope(&xs, &ys), coverage: Coverage::for_kernels(r1, r2), rows })
}
