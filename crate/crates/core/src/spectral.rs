//! Characteristic functions of second-chaos elements from operator spectra.
//!
//! For a Hilbert–Schmidt kernel with eigenvalues `α_n` (with multiplicity
//! `m_n`) the Carleman–Fredholm formula gives
//! `E[e^{z I₂(f)}] = exp(−½ Σ m_n (Ln(1 − 2zα_n) + 2zα_n))` on
//! `2|Re z|·σ < 1`, `σ = max|α_n|`. Spectra come either in closed form
//! (the classical Lévy area) or from a symmetric discretisation of the
//! operator.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::covariance::{dyadic_partition, factor_matrix, gram_matrix, CovKernel};
use crate::error::{LevyError, Result};
use crate::levy_kernel::{Component, DyadicApprox};
use crate::numeric::{CompensatedSum, Num};

/// Relative gap (to σ) under which eigenvalues are merged into one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;
/// Largest asymmetry accepted by [`eigen_solve`], relative to `max(1, max|Mᵢⱼ|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Default pairing tolerance for [`symmetry_check`].
pub const PAIR_TOL: f64 = 1e-6;
/// Largest level of [`discretize_general_operator`].
pub const MAX_GENERAL_LEVEL: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub alpha: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Sorted by `|α|` descending, positive first on ties.
    pub eigenvalues: Vec<Eigenvalue>,
    pub spectral_radius: f64,
    /// Upper bound on `Σ α²` (with multiplicity) over eigenvalues not listed.
    pub tail_mass: f64,
}

impl Spectrum {
    pub fn new(mut eigenvalues: Vec<Eigenvalue>, tail_mass: f64) -> Result<Self> {
        if eigenvalues.iter().any(|e| e.multiplicity == 0 || !e.alpha.is_finite()) {
            return Err(LevyError::parameter("spectrum", "eigenvalues must be finite with multiplicity ≥ 1"));
        }
        eigenvalues.sort_by(|a, b| b.alpha.abs().total_cmp(&a.alpha.abs()).then(b.alpha.total_cmp(&a.alpha)));
        let spectral_radius = eigenvalues.first().map_or(0.0, |e| e.alpha.abs());
        Ok(Spectrum { eigenvalues, spectral_radius, tail_mass })
    }

    /// Total number of eigenvalues counted with multiplicity.
    pub fn total_multiplicity(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    /// CSV with header `alpha,multiplicity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,multiplicity\n");
        for e in &self.eigenvalues {
            out.push_str(&format!("{},{}\n", Num(e.alpha), e.multiplicity));
        }
        out
    }
}

/// `±1/(π(2n+1))`, `n < count`, each of multiplicity 2.
pub fn classical_spectrum(count: usize) -> Result<Spectrum> {
    if count == 0 {
        return Err(LevyError::parameter("classical_spectrum", "count must be at least 1"));
    }
    let pi = std::f64::consts::PI;
    let eigenvalues = (0..count)
        .flat_map(|n| {
            let a = 1.0 / (pi * (2 * n + 1) as f64);
            [Eigenvalue { alpha: a, multiplicity: 2 }, Eigenvalue { alpha: -a, multiplicity: 2 }]
        })
        .collect();
    // 4 Σ_{n≥N} (π(2n+1))^{-2} ≤ (4/π²) Σ_{n≥N} 1/(2n(2n+2)) = 1/(π² N)
    Spectrum::new(eigenvalues, 1.0 / (pi * pi * count as f64))
}

/// Truncated Carleman–Fredholm evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CFProduct {
    pub z: Complex64,
    /// `Im z`, the CF argument when `z` is on the imaginary axis.
    pub t: f64,
    pub value: Complex64,
    /// Number of spectrum entries used.
    pub truncation: usize,
    pub tail_bound: f64,
}

/// CF product over the first `truncation` entries of `spec` (all when
/// `None`). `tail_bound = |z|²·(Σ m α² over omitted entries + tail_mass)`
/// bounds the truncation error on the imaginary axis.
pub fn cf_from_spectrum(spec: &Spectrum, z: Complex64, truncation: Option<usize>) -> Result<CFProduct> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(LevyError::parameter("cf_from_spectrum", "z must be finite"));
    }
    if 2.0 * z.re.abs() * spec.spectral_radius >= 1.0 {
        return Err(LevyError::parameter(
            "cf_from_spectrum",
            format!("domain condition 2|Re z|·σ < 1 violated (Re z = {}, σ = {})", z.re, spec.spectral_radius),
        ));
    }
    let n = truncation.unwrap_or(spec.eigenvalues.len()).min(spec.eigenvalues.len());
    let (mut re, mut im) = (CompensatedSum::new(), CompensatedSum::new());
    for e in &spec.eigenvalues[..n] {
        let w = 2.0 * z * e.alpha;
        let term = ((1.0 - w).ln() + w) * e.multiplicity as f64;
        re.add(term.re);
        im.add(term.im);
    }
    let value = (Complex64::new(re.value(), im.value()) * -0.5).exp();
    let omitted: f64 = spec.eigenvalues[n..].iter().map(|e| e.multiplicity as f64 * e.alpha * e.alpha).sum();
    Ok(CFProduct { z, t: z.im, value, truncation: n, tail_bound: z.norm_sqr() * (omitted + spec.tail_mass) })
}

/// `E[e^{itI₂}]` along a grid of real `t`.
pub fn cf_curve(spec: &Spectrum, t_grid: &[f64], truncation: Option<usize>) -> Result<Vec<CFProduct>> {
    t_grid.iter().map(|&t| cf_from_spectrum(spec, Complex64::new(0.0, t), truncation)).collect()
}

/// CSV with header `t,re,im,tail_bound`.
pub fn cf_csv(curve: &[CFProduct]) -> String {
    let mut out = String::from("t,re,im,tail_bound\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{}\n", Num(p.t), Num(p.value.re), Num(p.value.im), Num(p.tail_bound)));
    }
    out
}

/// `|∏_{n<N} (1 + 4z²/(π²(2n+1)²)) − cosh z|`
pub fn cosh_factorization_check(z: Complex64, n: usize) -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    let z2 = 4.0 * z * z / pi2;
    let prod = (0..n).fold(Complex64::new(1.0, 0.0), |acc, k| {
        let d = (2 * k + 1) as f64;
        acc * (1.0 + z2 / (d * d))
    });
    (prod - z.cosh()).norm()
}

/// `sech(t·‖f‖²)`: the Lévy-area CF for `X_i = ∫ f dW_i`.
pub fn weighted_cf(weight_norm_sq: f64, t: f64) -> Result<f64> {
    if !(weight_norm_sq > 0.0 && weight_norm_sq.is_finite()) {
        return Err(LevyError::parameter("weighted_cf", "‖f‖² must be positive and finite"));
    }
    Ok(1.0 / (t * weight_norm_sq).cosh())
}

/// Midpoint collocation of the Lévy-kernel operator on `g` cells per
/// process: a `2g × 2g` symmetric matrix with zero diagonal blocks and
/// `½·sign(t_b − t_a)/g` in block (1,2).
pub fn discretize_classical_operator(grid_size: usize) -> Result<DMatrix<f64>> {
    if grid_size < 4 {
        return Err(LevyError::parameter("discretize_classical_operator", "grid size must be at least 4"));
    }
    let g = grid_size;
    let w = 0.5 / g as f64;
    Ok(DMatrix::from_fn(2 * g, 2 * g, |r, c| {
        let (i, a) = (r / g, r % g);
        let (j, b) = (c / g, c % g);
        match (i, j) {
            (0, 1) => w * sign(b as f64 - a as f64),
            (1, 0) => w * sign(a as f64 - b as f64),
            _ => 0.0,
        }
    }))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Eigenvalues of a symmetric matrix, clustered into multiplicities where
/// consecutive gaps are below `CLUSTER_TOL·σ`.
pub fn eigen_solve(matrix: &DMatrix<f64>) -> Result<Spectrum> {
    eigen_solve_with(matrix, CLUSTER_TOL)
}

pub fn eigen_solve_with(matrix: &DMatrix<f64>, cluster_tol: f64) -> Result<Spectrum> {
    if !matrix.is_square() {
        return Err(LevyError::shape("eigen_solve", "matrix is not square"));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(LevyError::numerical("eigen_solve", "matrix has non-finite entries"));
    }
    let asym = (matrix - matrix.transpose()).amax();
    if asym > SYMMETRY_TOL * matrix.amax().max(1.0) {
        return Err(LevyError::shape("eigen_solve", format!("matrix not symmetric (|M−Mᵀ| = {asym:e})")));
    }
    let mut values: Vec<f64> = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let sigma = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Spectrum::new(cluster(&values, cluster_tol * sigma), 0.0)
}

/// Groups sorted values whose consecutive gaps are `< tol`; each cluster is
/// represented by its mean.
fn cluster(sorted: &[f64], tol: f64) -> Vec<Eigenvalue> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] >= tol {
            let group = &sorted[start..i];
            if !group.is_empty() {
                let alpha = group.iter().sum::<f64>() / group.len() as f64;
                out.push(Eigenvalue { alpha, multiplicity: group.len() });
            }
            start = i;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryViolation {
    pub alpha: f64,
    pub multiplicity: usize,
    /// Multiplicity of the matched cluster at `−α`, zero when none is found.
    pub mirror_multiplicity: usize,
}

impl fmt::Display for SymmetryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alpha {} (multiplicity {}) has mirror multiplicity {}",
            self.alpha, self.multiplicity, self.mirror_multiplicity
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub pair_tol: f64,
    pub clusters_checked: usize,
    pub violations: Vec<SymmetryViolation>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every cluster `α` with `|α| > pair_tol` has a mirror cluster
/// within `pair_tol` of `−α` of the same multiplicity, so each
/// `|α|`-cluster has even total multiplicity. Clusters within `pair_tol`
/// of zero are their own mirror and are skipped.
pub fn symmetry_check(spec: &Spectrum, pair_tol: f64) -> SymmetryReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for e in spec.eigenvalues.iter().filter(|e| e.alpha.abs() > pair_tol) {
        checked += 1;
        let mirror = spec
            .eigenvalues
            .iter()
            .filter(|m| (m.alpha + e.alpha).abs() <= pair_tol)
            .min_by(|a, b| (a.alpha + e.alpha).abs().total_cmp(&(b.alpha + e.alpha).abs()));
        let mirror_multiplicity = mirror.map_or(0, |m| m.multiplicity);
        if mirror_multiplicity != e.multiplicity {
            violations.push(SymmetryViolation { alpha: e.alpha, multiplicity: e.multiplicity, mirror_multiplicity });
        }
    }
    SymmetryReport { pair_tol, clusters_checked: checked, violations }
}

/// The generalised eigenproblem `K·g = α·G·g` on level-`n` step functions
/// of both processes.
#[derive(Debug, Clone)]
pub struct GeneralOperator {
    pub level: u32,
    /// Lévy-kernel cross-Gram, blocks `K_ij = G_i C_ij G_j`.
    pub k: DMatrix<f64>,
    /// Block-diagonal Gram `diag(G₁, G₂)`.
    pub g: DMatrix<f64>,
    /// `L₁ᵀ C₁₂ L₂` with `G_i + jitter = L_i L_iᵀ`; the reduced operator is
    /// `[[0, B], [Bᵀ, 0]]`.
    reduced_block: DMatrix<f64>,
    pub jitter: (f64, f64),
}

impl GeneralOperator {
    /// Dimension of one process block.
    pub fn cells(&self) -> usize {
        1 << self.level
    }

    /// `L⁻¹ K L⁻ᵀ`, orthogonally similar to `G^{-1/2} K G^{-1/2}`.
    pub fn reduced(&self) -> DMatrix<f64> {
        let n = self.cells();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, n), (n, n)).copy_from(&self.reduced_block);
        m.view_mut((n, 0), (n, n)).copy_from(&self.reduced_block.transpose());
        m
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.cells();
        self.k.view((i * n, j * n), (n, n)).into_owned()
    }
}

/// Coefficients `C₁₂[k][l]` of `f_n` in block (1,2); block (2,1) is `C₁₂ᵀ = −C₁₂`.
fn levy_coefficients(level: u32) -> DMatrix<f64> {
    let f = DyadicApprox::new(level);
    let n = 1usize << level;
    DMatrix::from_fn(n, n, |k, l| f.cell_value(k, Component::First, l, Component::Second))
}

pub fn discretize_general_operator(r1: &CovKernel, r2: &CovKernel, level: u32) -> Result<GeneralOperator> {
    if level > MAX_GENERAL_LEVEL {
        return Err(LevyError::resource(
            "discretize_general_operator",
            format!("level {level} exceeds {MAX_GENERAL_LEVEL}"),
        ));
    }
    let n = 1usize << level;
    let part = dyadic_partition(level);
    let g1 = gram_matrix(r1, &part)?.matrix;
    let g2 = if r1 == r2 { g1.clone() } else { gram_matrix(r2, &part)?.matrix };
    let l1 = factor_matrix(&g1, 0.0)?;
    let l2 = if r1 == r2 { l1.clone() } else { factor_matrix(&g2, 0.0)? };
    let c = levy_coefficients(level);
    let k12 = &g1 * &c * &g2;
    let k21 = &g2 * c.transpose() * &g1;
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    k.view_mut((0, n), (n, n)).copy_from(&k12);
    k.view_mut((n, 0), (n, n)).copy_from(&k21);
    let mut g = DMatrix::zeros(2 * n, 2 * n);
    g.view_mut((0, 0), (n, n)).copy_from(&g1);
    g.view_mut((n, n), (n, n)).copy_from(&g2);
    let reduced_block = l1.matrix.transpose() * &c * &l2.matrix;
    Ok(GeneralOperator { level, k, g, reduced_block, jitter: (l1.jitter, l2.jitter) })
}

/// Spectrum of the discretised general operator.
pub fn general_spectrum(r1: &CovKernel, r2: &CovKernel, level: u32) -> Result<Spectrum> {
    eigen_solve(&discretize_general_operator(r1, r2, level)?.reduced())
}
