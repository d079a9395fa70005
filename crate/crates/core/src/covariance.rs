//! Covariance kernels on [0,1]² and their rectangular-increment calculus.
//!
//! Every inner product used elsewhere in the crate reduces to increments
//! `R(□ [s0,s1]×[u0,u1]) = R(s1,u1) − R(s1,u0) − R(s0,u1) + R(s0,u0)`,
//! so this module is the only place a covariance is ever evaluated.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{LevyError, Result};

/// Relative tolerance below which a Gram eigenvalue still counts as non-negative.
pub const PSD_TOL: f64 = 1e-8;

/// Relative jitter ladder tried by [`cholesky_factor`], scaled by the largest
/// diagonal entry of the Gram matrix.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Square root of the weight of a weighted Brownian motion `X(t) = ∫₀ᵗ f dW`.
///
/// Only weights whose square has a closed-form antiderivative are offered, so
/// that covariance increments stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `f(u) = coef · u^degree`
    Poly { coef: f64, degree: u32 },
    /// `f(u) = exp(rate · u)`
    Exp { rate: f64 },
}

impl Weight {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Weight::Poly { coef, degree } => coef * u.powi(degree as i32),
            Weight::Exp { rate } => (rate * u).exp(),
        }
    }

    /// `∫₀ˣ f(u)² du`
    pub fn sq_antiderivative(&self, x: f64) -> f64 {
        match *self {
            Weight::Poly { coef, degree } => {
                let k = 2 * degree + 1;
                coef * coef * x.powi(k as i32) / k as f64
            }
            Weight::Exp { rate } => {
                if rate == 0.0 {
                    x
                } else {
                    (2.0 * rate * x).exp_m1() / (2.0 * rate)
                }
            }
        }
    }

    /// `‖f‖²_{L²[0,1]}`
    pub fn norm_sq(&self) -> f64 {
        self.sq_antiderivative(1.0)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Weight::Poly { coef, .. } => coef.is_finite() && coef != 0.0,
            Weight::Exp { rate } => rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(LevyError::parameter("weight", format!("invalid weight {self:?}")))
        }
    }
}

/// Covariance values on a uniform `(n+1)×(n+1)` mesh of [0,1]², interpolated
/// bilinearly between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    n: usize,
    values: Vec<f64>,
}

impl Table {
    /// `values` is row-major over `s` then `t`, with `(n+1)²` entries.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(LevyError::parameter("table", "mesh needs at least one interval"));
        }
        if values.len() != (n + 1) * (n + 1) {
            return Err(LevyError::shape(
                "table",
                format!("expected {} values, got {}", (n + 1) * (n + 1), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LevyError::parameter("table", "non-finite covariance value"));
        }
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        for i in 0..=n {
            for j in 0..i {
                let a = values[i * (n + 1) + j];
                let b = values[j * (n + 1) + i];
                if (a - b).abs() > 1e-12 * scale {
                    return Err(LevyError::parameter(
                        "table",
                        format!("covariance table is not symmetric at node ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(Table { n, values })
    }

    /// Tabulate a function on the uniform mesh with `n` intervals per axis.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                values.push(f(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        Table::new(n, values)
    }

    /// Parse `s,t,value` rows (with that header) covering a uniform mesh.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| LevyError::Parse("empty table".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["s", "t", "value"] {
            return Err(LevyError::Parse(format!("expected header s,t,value, got {header:?}")));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LevyError::Parse(format!("row {}: {e}", lineno + 2)))?;
            if fields.len() != 3 {
                return Err(LevyError::Parse(format!("row {}: expected 3 fields", lineno + 2)));
            }
            rows.push((fields[0], fields[1], fields[2]));
        }
        let nodes = (rows.len() as f64).sqrt().round() as usize;
        if nodes < 2 || nodes * nodes != rows.len() {
            return Err(LevyError::Parse(format!("{} rows do not form a square mesh", rows.len())));
        }
        let n = nodes - 1;
        let mut values = vec![f64::NAN; nodes * nodes];
        for &(s, t, v) in &rows {
            let i = (s * n as f64).round();
            let j = (t * n as f64).round();
            let off_mesh = (s * n as f64 - i).abs() > 1e-9 || (t * n as f64 - j).abs() > 1e-9;
            if off_mesh || i < 0.0 || j < 0.0 || i > n as f64 || j > n as f64 {
                return Err(LevyError::Parse(format!(
                    "node ({s}, {t}) is not on a uniform mesh of [0,1] with {n} intervals"
                )));
            }
            values[i as usize * nodes + j as usize] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(LevyError::Parse("mesh has missing or duplicate nodes".into()));
        }
        Table::new(n, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LevyError::Parse(format!("{}: {e}", path.display())))?;
        Table::from_csv_str(&text)
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.n + 1) + j]
    }

    fn eval(&self, s: f64, t: f64) -> f64 {
        let n = self.n;
        let (i, a) = locate(s, n);
        let (j, b) = locate(t, n);
        let v00 = self.node(i, j);
        let v10 = self.node(i + 1, j);
        let v01 = self.node(i, j + 1);
        let v11 = self.node(i + 1, j + 1);
        (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11)
    }
}

fn locate(x: f64, n: usize) -> (usize, f64) {
    let scaled = x * n as f64;
    let i = (scaled.floor() as usize).min(n - 1);
    (i, scaled - i as f64)
}

/// Which family a [`CovKernel`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Brownian,
    FractionalBrownian,
    WeightedBrownian,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Brownian,
    Fbm { hurst: f64 },
    Weighted(Weight),
    Tabulated(Arc<Table>),
}

/// A continuous covariance function `R(s,t)` on [0,1]².
#[derive(Debug, Clone, PartialEq)]
pub struct CovKernel(Repr);

impl CovKernel {
    /// `R(s,t) = s ∧ t`
    pub fn brownian() -> Self {
        CovKernel(Repr::Brownian)
    }

    /// `R(s,t) = ½(s^{2H} + t^{2H} − |t−s|^{2H})`
    pub fn fbm(hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(LevyError::parameter(
                "CovKernel::fbm",
                format!("Hurst parameter must lie in (0,1), got {hurst}"),
            ));
        }
        Ok(CovKernel(Repr::Fbm { hurst }))
    }

    /// `R(s,t) = ∫₀^{s∧t} f(u)² du`
    pub fn weighted(weight: Weight) -> Result<Self> {
        weight.validate()?;
        Ok(CovKernel(Repr::Weighted(weight)))
    }

    pub fn tabulated(table: Table) -> Self {
        CovKernel(Repr::Tabulated(Arc::new(table)))
    }

    pub fn kind(&self) -> KernelKind {
        match self.0 {
            Repr::Brownian => KernelKind::Brownian,
            Repr::Fbm { .. } => KernelKind::FractionalBrownian,
            Repr::Weighted(_) => KernelKind::WeightedBrownian,
            Repr::Tabulated(_) => KernelKind::Tabulated,
        }
    }

    pub fn hurst(&self) -> Option<f64> {
        match self.0 {
            Repr::Fbm { hurst } => Some(hurst),
            Repr::Brownian => Some(0.5),
            _ => None,
        }
    }

    pub fn weight(&self) -> Option<Weight> {
        match self.0 {
            Repr::Weighted(w) => Some(w),
            Repr::Brownian => Some(Weight::Poly { coef: 1.0, degree: 0 }),
            _ => None,
        }
    }

    /// True when increments over disjoint intervals are uncorrelated, i.e.
    /// every Gram matrix of this kernel is diagonal.
    pub fn has_independent_increments(&self) -> bool {
        matches!(self.0, Repr::Brownian | Repr::Weighted(_)) || matches!(self.0, Repr::Fbm { hurst } if hurst == 0.5)
    }

    /// The smallest `p` for which the kernel is known to have finite
    /// 2D p-variation: 1/(2H) for fBm with H ≤ ½, 1 for bounded variation.
    /// `None` when unknown (tabulated kernels).
    pub fn variation_index(&self) -> Option<f64> {
        match self.0 {
            Repr::Brownian | Repr::Weighted(_) => Some(1.0),
            Repr::Fbm { hurst } => Some(fbm_variation_index(hurst)),
            Repr::Tabulated(_) => None,
        }
    }

    /// Evaluate `R(s,t)`; both arguments must lie in [0,1].
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        check_unit("CovKernel::eval", s)?;
        check_unit("CovKernel::eval", t)?;
        Ok(self.eval_unchecked(s, t))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, s: f64, t: f64) -> f64 {
        match &self.0 {
            Repr::Brownian => s.min(t),
            Repr::Fbm { hurst } => {
                let h2 = 2.0 * hurst;
                0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
            }
            Repr::Weighted(w) => w.sq_antiderivative(s.min(t)),
            Repr::Tabulated(table) => table.eval(s, t),
        }
    }

    /// `R(s1,u1) − R(s1,u0) − R(s0,u1) + R(s0,u0)`
    pub fn rect_increment(&self, rect: &Rectangle) -> f64 {
        self.increment_unchecked(rect.s0, rect.s1, rect.u0, rect.u1)
    }

    #[inline]
    pub(crate) fn increment_unchecked(&self, s0: f64, s1: f64, u0: f64, u1: f64) -> f64 {
        if let Repr::Brownian = self.0 {
            // overlap length, free of cancellation
            return (s1.min(u1) - s0.max(u0)).max(0.0);
        }
        self.eval_unchecked(s1, u1) - self.eval_unchecked(s1, u0) - self.eval_unchecked(s0, u1)
            + self.eval_unchecked(s0, u0)
    }

    /// Values at the nodes `(i/m, j/m)`, `0 ≤ i,j ≤ m`.
    pub fn node_table(&self, m: usize) -> NodeTable {
        let width = m + 1;
        let mut values = vec![0.0; width * width];
        values.par_chunks_mut(width).enumerate().for_each(|(i, row)| {
            let s = i as f64 / m as f64;
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = self.eval_unchecked(s, j as f64 / m as f64);
            }
        });
        NodeTable { m, values }
    }
}

/// Critical variation index of fBm: 1/(2H) for H ≤ ½, 1 otherwise.
pub fn fbm_variation_index(hurst: f64) -> f64 {
    if hurst <= 0.5 {
        1.0 / (2.0 * hurst)
    } else {
        1.0
    }
}

impl fmt::Display for CovKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Brownian => write!(f, "kind=brownian"),
            Repr::Fbm { hurst } => write!(f, "kind=fbm hurst={hurst}"),
            Repr::Weighted(Weight::Poly { coef, degree }) => {
                write!(f, "kind=weighted weight=poly degree={degree} coef={coef}")
            }
            Repr::Weighted(Weight::Exp { rate }) => {
                write!(f, "kind=weighted weight=exp rate={rate}")
            }
            Repr::Tabulated(t) => write!(f, "kind=tabulated intervals={}", t.intervals()),
        }
    }
}

/// Parses the flat key–value kernel record, e.g. `kind=fbm hurst=0.35`,
/// `kind=weighted weight=poly degree=1`, `kind=tabulated file=cov.csv`.
/// A bare kind name (`brownian`) is accepted as shorthand.
impl FromStr for CovKernel {
    type Err = LevyError;

    fn from_str(spec: &str) -> Result<Self> {
        let mut kind = None;
        let mut params = std::collections::BTreeMap::new();
        for token in spec.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            match token.split_once('=') {
                Some(("kind", v)) => kind = Some(v.to_string()),
                Some((k, v)) => {
                    params.insert(k.to_string(), v.to_string());
                }
                None if kind.is_none() => kind = Some(token.to_string()),
                None => return Err(LevyError::Parse(format!("unexpected token {token:?} in kernel spec"))),
            }
        }
        let kind = kind.ok_or_else(|| LevyError::Parse(format!("kernel spec {spec:?} lacks kind")))?;
        let num = |key: &str| -> Result<Option<f64>> {
            params
                .get(key)
                .map(|v| v.parse::<f64>().map_err(|e| LevyError::Parse(format!("{key}={v}: {e}"))))
                .transpose()
        };
        match kind.as_str() {
            "brownian" | "bm" => Ok(CovKernel::brownian()),
            "fbm" => {
                let h = num("hurst")?.ok_or_else(|| LevyError::Parse("kind=fbm requires hurst=<H>".into()))?;
                CovKernel::fbm(h)
            }
            "weighted" => {
                let weight = match params.get("weight").map(String::as_str).unwrap_or("poly") {
                    "poly" => {
                        let degree = num("degree")?.unwrap_or(1.0);
                        if degree < 0.0 || degree.fract() != 0.0 || degree > 32.0 {
                            return Err(LevyError::Parse(format!(
                                "degree must be a small non-negative integer, got {degree}"
                            )));
                        }
                        Weight::Poly { coef: num("coef")?.unwrap_or(1.0), degree: degree as u32 }
                    }
                    "exp" => Weight::Exp { rate: num("rate")?.unwrap_or(1.0) },
                    other => return Err(LevyError::Parse(format!("unknown weight {other:?}"))),
                };
                CovKernel::weighted(weight)
            }
            "tabulated" => {
                let file =
                    params.get("file").ok_or_else(|| LevyError::Parse("kind=tabulated requires file=<csv>".into()))?;
                Ok(CovKernel::tabulated(Table::from_csv_path(Path::new(file))?))
            }
            other => Err(LevyError::Parse(format!("unknown kernel kind {other:?}"))),
        }
    }
}

/// Covariance values on the uniform mesh of [0,1]² with `m` intervals.
#[derive(Debug, Clone)]
pub struct NodeTable {
    m: usize,
    values: Vec<f64>,
}

impl NodeTable {
    pub fn from_values(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (m + 1) * (m + 1) {
            return Err(LevyError::shape("NodeTable", "value count does not match mesh"));
        }
        Ok(NodeTable { m, values })
    }

    pub fn intervals(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.m + 1) + j]
    }

    /// Increment over the node rectangle `[a0,a1]×[b0,b1]` (node indices).
    #[inline]
    pub fn increment(&self, a0: usize, a1: usize, b0: usize, b1: usize) -> f64 {
        self.at(a1, b1) - self.at(a1, b0) - self.at(a0, b1) + self.at(a0, b0)
    }
}

fn check_unit(op: &'static str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(LevyError::domain(op, format!("argument {x} outside [0,1]")))
    }
}

/// The closed rectangle `[s0,s1]×[u0,u1] ⊂ [0,1]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub s0: f64,
    pub s1: f64,
    pub u0: f64,
    pub u1: f64,
}

impl Rectangle {
    pub fn new(s0: f64, s1: f64, u0: f64, u1: f64) -> Result<Self> {
        for x in [s0, s1, u0, u1] {
            check_unit("Rectangle::new", x)?;
        }
        if s0 > s1 || u0 > u1 {
            return Err(LevyError::domain("Rectangle::new", format!("reversed sides [{s0},{s1}]×[{u0},{u1}]")));
        }
        Ok(Rectangle { s0, s1, u0, u1 })
    }

    pub fn unit() -> Self {
        Rectangle { s0: 0.0, s1: 1.0, u0: 0.0, u1: 1.0 }
    }

    pub fn area(&self) -> f64 {
        (self.s1 - self.s0) * (self.u1 - self.u0)
    }
}

/// Validated breakpoints `0 = x_0 < x_1 < … < x_N = 1`.
pub fn check_partition(breakpoints: &[f64]) -> Result<()> {
    if breakpoints.len() < 2 {
        return Err(LevyError::Partition("need at least the two endpoints".into()));
    }
    if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
        return Err(LevyError::Partition("breakpoints must start at 0 and end at 1".into()));
    }
    if let Some(w) = breakpoints.windows(2).find(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(LevyError::Partition(format!("breakpoints not strictly increasing at {} ≥ {}", w[0], w[1])));
    }
    Ok(())
}

/// `k / 2^level` for `k = 0..=2^level`.
pub fn dyadic_partition(level: u32) -> Vec<f64> {
    let n = 1usize << level;
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Gram matrix of covariance increments over a partition of [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct GridGram {
    pub partition: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl GridGram {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Sum of all entries; telescopes to `R(□[0,1]²)`.
    pub fn total(&self) -> f64 {
        self.matrix.iter().sum()
    }

    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Smallest eigenvalue ≥ −PSD_TOL·(largest eigenvalue).
    pub fn is_psd(&self) -> bool {
        let (lo, hi) = self.eigenvalue_range();
        lo >= -PSD_TOL * hi.abs().max(f64::MIN_POSITIVE)
    }
}

/// `matrix[k][l] = R(□ I_k × I_l)` with `I_k = (x_k, x_{k+1}]`.
pub fn gram_matrix(kernel: &CovKernel, partition: &[f64]) -> Result<GridGram> {
    check_partition(partition)?;
    let nodes = partition.len();
    let n = nodes - 1;
    let mut vals = vec![0.0; nodes * nodes];
    vals.par_chunks_mut(nodes).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate().skip(i) {
            *slot = kernel.eval_unchecked(partition[i], partition[j]);
        }
    });
    for i in 0..nodes {
        for j in 0..i {
            vals[i * nodes + j] = vals[j * nodes + i];
        }
    }
    let at = |i: usize, j: usize| vals[i * nodes + j];
    let brownian = matches!(kernel.0, Repr::Brownian);
    let matrix = DMatrix::from_fn(n, n, |k, l| {
        // evaluate on the upper triangle only so the result is exactly symmetric
        let (k, l) = (k.min(l), k.max(l));
        if brownian {
            kernel.increment_unchecked(partition[k], partition[k + 1], partition[l], partition[l + 1])
        } else {
            at(k + 1, l + 1) - at(k + 1, l) - at(k, l + 1) + at(k, l)
        }
    });
    Ok(GridGram { partition: partition.to_vec(), matrix })
}

/// A lower-triangular factor `L` with `L·Lᵀ = G + jitter·I`.
#[derive(Debug, Clone)]
pub struct LowerFactor {
    pub matrix: DMatrix<f64>,
    /// Absolute jitter that was added to the diagonal.
    pub jitter: f64,
    diagonal: Option<Vec<f64>>,
    /// Lower triangle packed row by row, for cache-friendly products.
    packed: Vec<f64>,
}

impl LowerFactor {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal.is_some()
    }

    /// `out = L · z`
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        if let Some(d) = &self.diagonal {
            for ((o, &zi), &di) in out.iter_mut().zip(z).zip(d) {
                *o = di * zi;
            }
            return;
        }
        let mut start = 0;
        for (i, o) in out.iter_mut().enumerate().take(self.dim()) {
            let row = &self.packed[start..start + i + 1];
            *o = row.iter().zip(z).map(|(l, x)| l * x).sum();
            start += i + 1;
        }
    }
}

/// Cholesky factorisation with jitter escalation.
///
/// `jitter` is the first relative jitter tried (scaled by the largest
/// diagonal entry); larger entries of [`JITTER_LADDER`] follow.
pub fn cholesky_factor(gram: &GridGram, jitter: f64) -> Result<LowerFactor> {
    factor_matrix(&gram.matrix, jitter)
}

pub(crate) fn factor_matrix(matrix: &DMatrix<f64>, jitter: f64) -> Result<LowerFactor> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(LevyError::shape("cholesky_factor", "matrix is not square"));
    }
    let asym = (matrix - matrix.transpose()).amax();
    let scale = matrix.diagonal().amax().max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale {
        return Err(LevyError::shape("cholesky_factor", format!("matrix not symmetric (|G−Gᵀ| = {asym:e})")));
    }
    let ladder = std::iter::once(jitter).chain(JITTER_LADDER.iter().copied().filter(|&j| j > jitter));
    for rel in ladder {
        let abs = rel * scale;
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += abs;
        }
        if let Some(ch) = m.cholesky() {
            let l = ch.l();
            let off_diag = (0..n).any(|i| (0..i).any(|j| l[(i, j)] != 0.0));
            let diagonal = (!off_diag).then(|| l.diagonal().iter().copied().collect());
            let packed = if off_diag {
                (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|ij| l[ij]).collect()
            } else {
                Vec::new()
            };
            return Ok(LowerFactor { matrix: l, jitter: abs, diagonal, packed });
        }
    }
    let min_eig = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Err(LevyError::numerical(
        "cholesky_factor",
        format!("factorisation failed after jitter escalation; smallest eigenvalue {min_eig:e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn brownian_eval() {
        assert_eq!(CovKernel::brownian().eval(0.3, 0.7).unwrap(), 0.3);
    }

    #[test]
    fn fbm_half_is_brownian() {
        let k = CovKernel::fbm(0.5).unwrap();
        for &(s, t) in &[(0.1, 0.9), (0.7, 0.2), (0.5, 0.5), (0.0, 1.0), (1.0, 1.0)] {
            assert!((k.eval(s, t).unwrap() - f64::min(s, t)).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_linear_eval() {
        let k = CovKernel::weighted(Weight::Poly { coef: 1.0, degree: 1 }).unwrap();
        let expected = 0.5f64.powi(3) / 3.0;
        assert!((k.eval(0.5, 0.8).unwrap() - expected).abs() < 1e-15);
        assert!((k.eval(0.5, 0.8).unwrap() - 0.0416667).abs() < 1e-7);
    }

    #[test]
    fn exp_weight_norm() {
        let w = Weight::Exp { rate: 0.5 };
        assert!((w.norm_sq() - (1f64.exp() - 1.0)).abs() < 1e-14);
        assert_eq!(Weight::Exp { rate: 0.0 }.norm_sq(), 1.0);
    }

    #[test]
    fn bad_arguments() {
        assert!(matches!(CovKernel::fbm(0.0), Err(LevyError::Parameter { .. })));
        assert!(matches!(CovKernel::fbm(1.0), Err(LevyError::Parameter { .. })));
        assert!(matches!(CovKernel::fbm(f64::NAN), Err(LevyError::Parameter { .. })));
        let k = CovKernel::brownian();
        assert!(matches!(k.eval(-0.1, 0.5), Err(LevyError::Domain { .. })));
        assert!(matches!(k.eval(0.5, 1.5), Err(LevyError::Domain { .. })));
        assert!(Rectangle::new(0.6, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn brownian_rect_increments() {
        let k = CovKernel::brownian();
        let r = Rectangle::new(0.0, 0.5, 0.5, 1.0).unwrap();
        assert_eq!(k.rect_increment(&r), 0.0);
        let r = Rectangle::new(0.0, 0.5, 0.0, 0.5).unwrap();
        assert_eq!(k.rect_increment(&r), 0.5);
    }

    #[test]
    fn additive_kernel_has_no_increments() {
        let k = CovKernel::tabulated(Table::from_fn(16, |s, t| s + t).unwrap());
        for &(s0, s1, u0, u1) in &[(0.0, 1.0, 0.0, 1.0), (0.13, 0.77, 0.2, 0.41), (0.5, 0.5, 0.1, 0.9)] {
            let r = Rectangle::new(s0, s1, u0, u1).unwrap();
            assert!(k.rect_increment(&r).abs() < 1e-14);
        }
    }

    #[test]
    fn gram_examples() {
        let g = gram_matrix(&CovKernel::brownian(), &dyadic_partition(1)).unwrap();
        assert_eq!(g.matrix, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
        let g = gram_matrix(&CovKernel::brownian(), &dyadic_partition(5)).unwrap();
        for k in 0..32 {
            for l in 0..32 {
                let want = if k == l { 1.0 / 32.0 } else { 0.0 };
                assert_eq!(g.matrix[(k, l)], want);
            }
        }
        let h = 0.75;
        let g = gram_matrix(&CovKernel::fbm(h).unwrap(), &dyadic_partition(1)).unwrap();
        let want = 2f64.powf(-2.0 * h) * (2f64.powf(2.0 * h - 1.0) - 1.0);
        assert!((g.matrix[(0, 1)] - want).abs() < 1e-14);
        assert!((g.matrix[(0, 1)] - 0.146447).abs() < 1e-6);
    }

    #[test]
    fn partition_errors() {
        let k = CovKernel::brownian();
        assert!(matches!(gram_matrix(&k, &[0.0, 0.6, 0.4, 1.0]), Err(LevyError::Partition(_))));
        assert!(matches!(gram_matrix(&k, &[0.1, 1.0]), Err(LevyError::Partition(_))));
        assert!(matches!(gram_matrix(&k, &[0.0, 0.5, 0.5, 1.0]), Err(LevyError::Partition(_))));
    }

    #[test]
    fn cholesky_examples() {
        let id = GridGram { partition: vec![], matrix: DMatrix::identity(4, 4) };
        let f = cholesky_factor(&id, 0.0).unwrap();
        assert_eq!(f.matrix, DMatrix::identity(4, 4));
        assert!(f.is_diagonal());

        let g = gram_matrix(&CovKernel::brownian(), &dyadic_partition(4)).unwrap();
        let f = cholesky_factor(&g, 0.0).unwrap();
        assert!(f.is_diagonal());
        for i in 0..16 {
            assert!((f.matrix[(i, i)] - 0.25).abs() < 1e-15);
        }

        let g = gram_matrix(&CovKernel::fbm(0.3).unwrap(), &dyadic_partition(6)).unwrap();
        let f = cholesky_factor(&g, 0.0).unwrap();
        let resid = (&f.matrix * f.matrix.transpose() - &g.matrix).amax();
        assert!(resid <= 1e-10 + f.jitter, "residual {resid}");
        assert!(!f.is_diagonal());
    }

    #[test]
    fn cholesky_reports_negative_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = factor_matrix(&m, 0.0).unwrap_err();
        assert!(err.is_numerical());
        assert!(err.to_string().contains("smallest eigenvalue"));
    }

    #[test]
    fn table_csv_roundtrip_and_errors() {
        let mut text = String::from("s,t,value\n");
        for i in 0..=4 {
            for j in 0..=4 {
                let (s, t) = (i as f64 / 4.0, j as f64 / 4.0);
                text.push_str(&format!("{s},{t},{}\n", s.min(t)));
            }
        }
        let table = Table::from_csv_str(&text).unwrap();
        let k = CovKernel::tabulated(table);
        assert!((k.eval(0.3, 0.6).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(k.eval(0.25, 0.75).unwrap(), 0.25);
        assert!(Table::from_csv_str("a,b,c\n").is_err());
        assert!(Table::from_csv_str("s,t,value\n0,0,0\n0,1,0\n1,0,0\n").is_err());
        assert!(Table::from_csv_str("s,t,value\n0,0,0\n0,0.3,0\n1,0,0\n1,1,1\n").is_err());
    }

    #[test]
    fn spec_parsing() {
        let k: CovKernel = "kind=fbm hurst=0.35".parse().unwrap();
        assert_eq!(k.hurst(), Some(0.35));
        let k: CovKernel = "brownian".parse().unwrap();
        assert_eq!(k.kind(), KernelKind::Brownian);
        let k: CovKernel = "kind=weighted weight=poly degree=1".parse().unwrap();
        assert_eq!(k.weight(), Some(Weight::Poly { coef: 1.0, degree: 1 }));
        assert!((k.weight().unwrap().norm_sq() - 1.0 / 3.0).abs() < 1e-15);
        assert!("kind=fbm".parse::<CovKernel>().is_err());
        assert!("kind=nope".parse::<CovKernel>().is_err());
        let k: CovKernel = "kind=fbm hurst=0.35".parse().unwrap();
        assert_eq!(k.to_string().parse::<CovKernel>().unwrap(), k);
    }

    fn closed_form_kernels() -> Vec<CovKernel> {
        vec![
            CovKernel::brownian(),
            CovKernel::fbm(0.2).unwrap(),
            CovKernel::fbm(0.35).unwrap(),
            CovKernel::fbm(0.75).unwrap(),
            CovKernel::weighted(Weight::Poly { coef: 1.0, degree: 1 }).unwrap(),
            CovKernel::weighted(Weight::Exp { rate: -0.7 }).unwrap(),
        ]
    }

    #[test]
    fn zero_on_origin_edges_and_symmetric() {
        for k in closed_form_kernels() {
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                assert_eq!(k.eval(0.0, x).unwrap(), 0.0, "{k}");
                assert_eq!(k.eval(x, 0.0).unwrap(), 0.0, "{k}");
                for j in 0..=20 {
                    let y = j as f64 / 20.0;
                    assert_eq!(k.eval(x, y).unwrap(), k.eval(y, x).unwrap());
                }
            }
        }
    }

    #[test]
    fn grams_are_psd_and_telescope() {
        for k in closed_form_kernels() {
            for level in [1, 3, 6] {
                let g = gram_matrix(&k, &dyadic_partition(level)).unwrap();
                assert!(g.is_psd(), "{k} level {level}");
                assert!((g.matrix.clone() - g.matrix.transpose()).amax() == 0.0);
                let full = k.rect_increment(&Rectangle::unit());
                assert!((g.total() - full).abs() < 1e-10, "{k}");
                if k.has_independent_increments() {
                    for a in 0..g.dim() {
                        for b in 0..g.dim() {
                            if a != b {
                                assert_eq!(g.matrix[(a, b)], 0.0);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tabulated_mesh_refinement_is_continuous() {
        // interpolation error of a tabulated fBm shrinks as the mesh is refined
        let exact = CovKernel::fbm(0.35).unwrap();
        let mut prev = f64::INFINITY;
        for n in [4, 16, 64, 256] {
            let t = CovKernel::tabulated(Table::from_fn(n, |s, u| exact.eval(s, u).unwrap()).unwrap());
            let mut err = 0.0f64;
            for i in 0..=37 {
                for j in 0..=37 {
                    let (s, u) = (i as f64 / 37.0, j as f64 / 37.0);
                    err = err.max((t.eval(s, u).unwrap() - exact.eval(s, u).unwrap()).abs());
                }
            }
            assert!(err < prev, "mesh {n}: {err} vs {prev}");
            prev = err;
        }
        assert!(prev < 1e-2);
    }

    proptest! {
        #[test]
        fn increments_additive_under_splits(
            which in 0usize..6,
            a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0,
            frac in 0.0f64..1.0, vertical in any::<bool>(),
        ) {
            let k = &closed_form_kernels()[which];
            let (s0, s1) = if a <= b { (a, b) } else { (b, a) };
            let (u0, u1) = if c <= d { (c, d) } else { (d, c) };
            let whole = k.rect_increment(&Rectangle::new(s0, s1, u0, u1).unwrap());
            let parts = if vertical {
                let m = s0 + frac * (s1 - s0);
                k.rect_increment(&Rectangle::new(s0, m, u0, u1).unwrap())
                    + k.rect_increment(&Rectangle::new(m, s1, u0, u1).unwrap())
            } else {
                let m = u0 + frac * (u1 - u0);
                k.rect_increment(&Rectangle::new(s0, s1, u0, m).unwrap())
                    + k.rect_increment(&Rectangle::new(s0, s1, m, u1).unwrap())
            };
            prop_assert!((whole - parts).abs() <= 1e-12, "{} vs {}", whole, parts);
        }
    }
}
