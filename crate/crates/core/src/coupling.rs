//! Analysis of coupling matrices.
//!
//! A coupling matrix `D = (d_ij)` is *monotone* when `d_ii ≥ 0`, `d_ij ≤ 0`
//! for `i ≠ j` and every row sum is nonnegative. Such a matrix is an M-matrix,
//! `D = s·I − B` with `B ≥ 0` and `s ≥ ρ(B)`. When it is also irreducible and
//! its rows sum to zero, its kernel is spanned by `(1, …, 1)` and `Dᵀ` has a
//! strictly positive kernel vector Λ, built here from the cofactor matrix.
//!
//! Indices are 0-based throughout.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::TorusGrid;
use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Eigenvalues of modulus at most this are classified as zero.
pub const EIGEN_TOL: f64 = 1e-9;

/// Builds a matrix from row-major nested vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let m = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "row {bad} has {} entries, expected {m}",
            rows[bad].len()
        )));
    }
    Ok(Matrix::from_fn(m, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(d: &Matrix) -> Vec<Vec<f64>> {
    (0..d.nrows())
        .map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect())
        .collect()
}

fn row_sum(d: &Matrix, i: usize) -> f64 {
    d.row(i).iter().sum()
}

#[derive(Clone, Debug, PartialEq)]
enum CouplingValues {
    Constant(Matrix),
    PerCell(Vec<Matrix>),
}

/// The coupling matrix `D(x)`, either constant or sampled per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingField {
    m: usize,
    values: CouplingValues,
}

impl CouplingField {
    pub fn constant(d: Matrix) -> Result<Self> {
        check_well_formed(&d, d.nrows())?;
        Ok(Self {
            m: d.nrows(),
            values: CouplingValues::Constant(d),
        })
    }

    pub fn per_cell(m: usize, cells: Vec<Matrix>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::DimensionMismatch(
                "per-cell coupling needs at least one cell".into(),
            ));
        }
        for d in &cells {
            check_well_formed(d, m)?;
        }
        Ok(Self {
            m,
            values: CouplingValues::PerCell(cells),
        })
    }

    /// Samples `d(x)` at every cell centre of `grid`.
    pub fn from_fn(m: usize, grid: &TorusGrid, d: impl Fn(&[f64]) -> Matrix) -> Result<Self> {
        let cells = (0..grid.cells()).map(|c| d(&grid.point(c))).collect();
        Self::per_cell(m, cells)
    }

    pub fn zero(m: usize) -> Self {
        Self {
            m,
            values: CouplingValues::Constant(Matrix::zeros(m, m)),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.values, CouplingValues::Constant(_))
    }

    /// Number of stored cells, `None` for a constant field.
    pub fn n_cells(&self) -> Option<usize> {
        match &self.values {
            CouplingValues::Constant(_) => None,
            CouplingValues::PerCell(v) => Some(v.len()),
        }
    }

    #[inline]
    pub fn at(&self, cell: usize) -> &Matrix {
        match &self.values {
            CouplingValues::Constant(d) => d,
            CouplingValues::PerCell(v) => &v[cell],
        }
    }

    /// Stored matrices labelled by cell (`None` for the constant entry).
    pub fn entries(&self) -> Vec<(Option<usize>, &Matrix)> {
        match &self.values {
            CouplingValues::Constant(d) => vec![(None, d)],
            CouplingValues::PerCell(v) => v.iter().enumerate().map(|(c, d)| (Some(c), d)).collect(),
        }
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries()
            .iter()
            .flat_map(|(_, d)| (0..self.m).map(move |i| d[(i, i)]))
            .fold(0.0, f64::max)
    }

    /// Checks that a per-cell field matches a grid.
    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        match self.n_cells() {
            Some(n) if n != grid.cells() => Err(Error::DimensionMismatch(format!(
                "coupling sampled on {n} cells, grid has {}",
                grid.cells()
            ))),
            _ => Ok(()),
        }
    }
}

fn check_well_formed(d: &Matrix, m: usize) -> Result<()> {
    if d.nrows() != m || d.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "coupling matrix is {}x{}, expected {m}x{m}",
            d.nrows(),
            d.ncols()
        )));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch(
            "coupling matrix has non-finite entries".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CouplingFieldRepr {
    m: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    constant: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cells: Option<Vec<Vec<Vec<f64>>>>,
}

impl Serialize for CouplingField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match &self.values {
            CouplingValues::Constant(d) => CouplingFieldRepr {
                m: self.m,
                constant: Some(matrix_to_rows(d)),
                cells: None,
            },
            CouplingValues::PerCell(v) => CouplingFieldRepr {
                m: self.m,
                constant: None,
                cells: Some(v.iter().map(matrix_to_rows).collect()),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CouplingField {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = CouplingFieldRepr::deserialize(de)?;
        let field = match (repr.constant, repr.cells) {
            (Some(rows), None) => matrix_from_rows(&rows).and_then(CouplingField::constant),
            (None, Some(cells)) => cells
                .iter()
                .map(|rows| matrix_from_rows(rows))
                .collect::<Result<Vec<_>>>()
                .and_then(|v| CouplingField::per_cell(repr.m, v)),
            _ => {
                return Err(D::Error::custom(
                    "exactly one of `constant` or `cells` is required",
                ))
            }
        };
        let field = field.map_err(D::Error::custom)?;
        if field.m != repr.m {
            return Err(D::Error::custom("`m` does not match the matrix size"));
        }
        Ok(field)
    }
}

// ---------------------------------------------------------------------------
// Monotonicity

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    DiagSign,
    OffdiagSign,
    RowSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for a constant field.
    pub cell: Option<usize>,
    pub i: usize,
    /// Column index; `None` for row-sum violations.
    pub j: Option<usize>,
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub holds: bool,
    pub violations: Vec<Violation>,
}

fn matrix_violations(d: &Matrix, cell: Option<usize>, tol: f64, out: &mut Vec<Violation>) {
    let m = d.nrows();
    for i in 0..m {
        for j in 0..m {
            let v = d[(i, j)];
            if i == j && v < -tol {
                out.push(Violation {
                    cell,
                    i,
                    j: Some(j),
                    kind: ViolationKind::DiagSign,
                    value: v,
                });
            } else if i != j && v > tol {
                out.push(Violation {
                    cell,
                    i,
                    j: Some(j),
                    kind: ViolationKind::OffdiagSign,
                    value: v,
                });
            }
        }
        let s = row_sum(d, i);
        if s < -tol {
            out.push(Violation {
                cell,
                i,
                j: None,
                kind: ViolationKind::RowSum,
                value: s,
            });
        }
    }
}

/// Checks `d_ii ≥ −tol`, `d_ij ≤ tol` (i ≠ j) and `Σ_j d_ij ≥ −tol` at every cell.
pub fn check_monotone_coupling(field: &CouplingField, tol: f64) -> MonotonicityReport {
    let mut violations = Vec::new();
    for (cell, d) in field.entries() {
        matrix_violations(d, cell, tol, &mut violations);
    }
    MonotonicityReport {
        holds: violations.is_empty(),
        violations,
    }
}

pub fn check_monotone_matrix(d: &Matrix, tol: f64) -> MonotonicityReport {
    let mut violations = Vec::new();
    matrix_violations(d, None, tol, &mut violations);
    MonotonicityReport {
        holds: violations.is_empty(),
        violations,
    }
}

// ---------------------------------------------------------------------------
// Irreducibility

/// A chain `from = path[0], …, path[n] = to` with `d_{path[l-1] path[l]} ≠ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub from: usize,
    pub to: usize,
    pub path: Vec<usize>,
}

impl Chain {
    pub fn is_valid(&self, d: &Matrix) -> bool {
        self.path.first() == Some(&self.from)
            && self.path.last() == Some(&self.to)
            && self.path.windows(2).all(|w| d[(w[0], w[1])] != 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrreducibilityWitness {
    pub irreducible: bool,
    /// One chain per ordered pair `i ≠ j`, present iff irreducible.
    pub chains: Option<Vec<Chain>>,
    /// A nonempty proper index set with no nonzero entry leaving it.
    pub separating_set: Option<Vec<usize>>,
}

/// Graph reachability on the support of the off-diagonal entries.
pub fn is_irreducible(d: &Matrix) -> IrreducibilityWitness {
    let m = d.nrows();
    let mut chains = Vec::new();
    for start in 0..m {
        let mut parent = vec![usize::MAX; m];
        parent[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..m {
                if j != i && parent[j] == usize::MAX && d[(i, j)] != 0.0 {
                    parent[j] = i;
                    queue.push_back(j);
                }
            }
        }
        if parent.contains(&usize::MAX) {
            let reached: Vec<usize> = (0..m).filter(|&k| parent[k] != usize::MAX).collect();
            return IrreducibilityWitness {
                irreducible: false,
                chains: None,
                separating_set: Some(reached),
            };
        }
        for end in (0..m).filter(|&e| e != start) {
            let mut path = vec![end];
            let mut k = end;
            while k != start {
                k = parent[k];
                path.push(k);
            }
            path.reverse();
            chains.push(Chain {
                from: start,
                to: end,
                path,
            });
        }
    }
    IrreducibilityWitness {
        irreducible: true,
        chains: Some(chains),
        separating_set: None,
    }
}

// ---------------------------------------------------------------------------
// M-matrix structure

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MDecomposition {
    pub s: f64,
    #[serde(with = "rows_serde")]
    pub b: Matrix,
    pub rho: f64,
}

impl MDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        Matrix::identity(self.b.nrows(), self.b.ncols()) * self.s - &self.b
    }
}

/// Splits a monotone coupling matrix as `D = s·I − B`, `s = max_k d_kk`.
pub fn m_decompose(d: &Matrix, tol: f64) -> Result<MDecomposition> {
    let report = check_monotone_matrix(d, tol);
    if !report.holds {
        return Err(Error::MonotonicityViolated(format!(
            "{:?}",
            report.violations
        )));
    }
    let m = d.nrows();
    let s = (0..m).map(|k| d[(k, k)]).fold(0.0, f64::max);
    let mut b = Matrix::identity(m, m) * s - d;
    // Entries within tol of zero from the sign checks above are clamped.
    b.iter_mut().for_each(|v| *v = v.max(0.0));
    let rho = spectral_radius(&b, tol.max(1e-12))?;
    if s < rho - EIGEN_TOL.max(tol) {
        return Err(Error::MonotonicityViolated(format!(
            "s = {s} < rho(B) = {rho}"
        )));
    }
    Ok(MDecomposition { s, b, rho })
}

/// Spectral radius of an entrywise-nonnegative matrix.
///
/// Power iteration on `B + I` started from the all-ones vector, stopped once
/// the Collatz-Wielandt bounds `min_i (Cx)_i/x_i ≤ ρ(C) ≤ max_i (Cx)_i/x_i`
/// agree to `tol`; falls back to a dense eigensolve otherwise.
pub fn spectral_radius(b: &Matrix, tol: f64) -> Result<f64> {
    let m = b.nrows();
    for i in 0..m {
        for j in 0..m {
            if b[(i, j)] < 0.0 {
                return Err(Error::NotNonnegative {
                    row: i,
                    col: j,
                    value: b[(i, j)],
                });
            }
        }
    }
    if m == 0 {
        return Ok(0.0);
    }
    let c = b + Matrix::identity(m, m);
    let mut x = nalgebra::DVector::from_element(m, 1.0);
    for _ in 0..20_000 {
        let y = &c * &x;
        let (lo, hi) = y
            .iter()
            .zip(x.iter())
            .map(|(yi, xi)| yi / xi)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            });
        if hi - lo <= tol * hi.max(1.0) {
            return Ok((0.5 * (lo + hi) - 1.0).max(0.0));
        }
        let norm = y.amax();
        x = y / norm;
    }
    Ok(b.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// `com(D)_ij = (−1)^{i+j} det(D without row i and column j)`.
pub fn cofactor_matrix(d: &Matrix) -> Matrix {
    let m = d.nrows();
    if m == 1 {
        return Matrix::from_element(1, 1, 1.0);
    }
    Matrix::from_fn(m, m, |i, j| {
        let minor = d.clone().remove_row(i).remove_column(j);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerronMode {
    /// Zero row sums: `Dᵀ Λ = 0`.
    Degenerate,
    /// Nonnegative row sums: `Dᵀ Λ ≥ 0`.
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerronData {
    /// Strictly positive, normalized so the entries sum to 1.
    pub lambda_vec: Vec<f64>,
    pub kernel_dim: usize,
    pub min_nonzero_real_part: Option<f64>,
    #[serde(with = "opt_rows_serde")]
    pub limit_projector: Option<Matrix>,
}

fn rows_are_zero(d: &Matrix, tol: f64) -> std::result::Result<(), (usize, f64)> {
    for i in 0..d.nrows() {
        let s = row_sum(d, i);
        if s.abs() > tol {
            return Err((i, s));
        }
    }
    Ok(())
}

/// Numerical kernel dimension from the singular values.
pub fn kernel_dim(d: &Matrix, tol: f64) -> usize {
    if d.nrows() == 0 {
        return 0;
    }
    let sv = d.clone().singular_values();
    let scale = sv.max().max(1.0);
    sv.iter().filter(|&&s| s <= tol * scale).count()
}

/// Positive left kernel (or sub-kernel) vector Λ of an irreducible monotone
/// coupling matrix, built from the absolute column sums of the cofactor matrix.
pub fn perron_left_null_vector(d: &Matrix, mode: PerronMode) -> Result<PerronData> {
    let m = d.nrows();
    let report = check_monotone_matrix(d, EIGEN_TOL);
    if !report.holds {
        return Err(Error::MonotonicityViolated(format!(
            "{:?}",
            report.violations
        )));
    }
    let witness = is_irreducible(d);
    if let Some(set) = witness.separating_set {
        return Err(Error::NotIrreducible(set));
    }
    let scale = d.amax().max(1.0);
    let target = match mode {
        PerronMode::Degenerate => {
            if let Err((row, sum)) = rows_are_zero(d, EIGEN_TOL * scale) {
                return Err(Error::RowSumsNonzero { row, sum });
            }
            d.clone()
        }
        PerronMode::General => {
            let mut t = d.clone();
            for i in 0..m {
                let s = row_sum(d, i);
                t[(i, i)] -= s;
            }
            t
        }
    };
    let com = cofactor_matrix(&target);
    let raw: Vec<f64> = (0..m)
        .map(|i| com.row(i).iter().map(|v| v.abs()).sum())
        .collect();
    let total: f64 = raw.iter().sum();
    let floor = f64::EPSILON * scale.powi(m.saturating_sub(1) as i32);
    if !(total > floor) || raw.iter().any(|&v| v <= 0.0) {
        return Err(Error::DegenerateCofactor);
    }
    let lambda_vec: Vec<f64> = raw.iter().map(|v| v / total).collect();

    let kdim = kernel_dim(d, EIGEN_TOL);
    let spectrum = nonzero_spectrum_check(d, EIGEN_TOL);
    let limit_projector = if kdim == 1 && rows_are_zero(d, EIGEN_TOL * scale).is_ok() {
        Some(rank_one_projector(&lambda_vec))
    } else {
        None
    };
    Ok(PerronData {
        lambda_vec,
        kernel_dim: kdim,
        min_nonzero_real_part: spectrum.r,
        limit_projector,
    })
}

/// `A = 1·Λᵀ`: every row equals Λ, so `A·1 = 1` when `Σ Λ_i = 1`.
fn rank_one_projector(lambda: &[f64]) -> Matrix {
    let m = lambda.len();
    Matrix::from_fn(m, m, |_, j| lambda[j])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCheck {
    pub ok: bool,
    pub r: Option<f64>,
}

/// Every eigenvalue with `|λ| > tol` must have positive real part; `r` is the
/// smallest such real part.
pub fn nonzero_spectrum_check(d: &Matrix, tol: f64) -> SpectrumCheck {
    if d.nrows() == 0 {
        return SpectrumCheck { ok: true, r: None };
    }
    let eig = d.clone().complex_eigenvalues();
    let mut ok = true;
    let mut r: Option<f64> = None;
    for z in eig.iter().filter(|z| z.norm() > tol) {
        if z.re <= 0.0 {
            ok = false;
        }
        r = Some(r.map_or(z.re, |cur| cur.min(z.re)));
    }
    SpectrumCheck { ok, r }
}

/// `exp(−t·D)` for `t ≥ 0`.
pub fn matrix_exponential(d: &Matrix, t: f64) -> Matrix {
    assert!(t >= 0.0, "matrix_exponential needs t >= 0, got {t}");
    if t == 0.0 || d.amax() == 0.0 {
        return Matrix::identity(d.nrows(), d.ncols());
    }
    (d * (-t)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitProjector {
    #[serde(with = "rows_serde")]
    pub a: Matrix,
    /// Spectral gap: smallest real part among nonzero eigenvalues.
    pub r: f64,
    /// Constant `C` certified in `‖exp(−tD) − A‖ ≤ C·exp(−r·t/2)`.
    pub decay_constant: f64,
}

/// `A = lim_{t→∞} exp(−tD)` for an irreducible coupling matrix with zero row sums.
pub fn exp_limit_projector(d: &Matrix) -> Result<LimitProjector> {
    let perron = perron_left_null_vector(d, PerronMode::Degenerate)?;
    if perron.kernel_dim != 1 {
        return Err(Error::KernelDimNotOne(perron.kernel_dim));
    }
    let a = rank_one_projector(&perron.lambda_vec);
    let Some(r) = perron.min_nonzero_real_part else {
        // m = 1 and D = 0: exp(−tD) = I = A for all t.
        return Ok(LimitProjector {
            a,
            r: f64::INFINITY,
            decay_constant: 0.0,
        });
    };
    let err = |t: f64| (matrix_exponential(d, t) - &a).abs().max();
    // The constant is fixed on the transient t ≤ 2/r and then checked on later samples.
    let tau = 1.0 / r;
    let c = (0..=2)
        .map(|k| {
            let t = k as f64 * tau;
            err(t) * (0.5 * r * t).exp()
        })
        .fold(0.0, f64::max);
    for k in 3..=16 {
        let t = k as f64 * tau;
        let bound = c * (-0.5 * r * t).exp() * (1.0 + 1e-6) + 1e-12;
        let e = err(t);
        if e > bound {
            return Err(Error::PreconditionFailed(format!(
                "exp(-tD) approaches A too slowly: error {e:e} > {bound:e} at t = {t}"
            )));
        }
    }
    Ok(LimitProjector {
        a,
        r,
        decay_constant: c,
    })
}

// ---------------------------------------------------------------------------
// Per-cell analysis

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAnalysis {
    pub cell: Option<usize>,
    pub monotone: bool,
    pub irreducible: bool,
    pub zero_row_sums: bool,
    pub perron: Option<PerronData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldAnalysis {
    pub cells: Vec<CellAnalysis>,
    /// Largest sup-norm jump of Λ between neighbouring cells, when defined.
    pub max_lambda_jump: Option<f64>,
}

impl FieldAnalysis {
    /// Analysis for `cell`; a constant field answers for every cell.
    pub fn at(&self, cell: usize) -> &CellAnalysis {
        if self.cells.len() == 1 {
            &self.cells[0]
        } else {
            &self.cells[cell]
        }
    }

    pub fn lambda_at(&self, cell: usize) -> Option<&[f64]> {
        self.at(cell)
            .perron
            .as_ref()
            .map(|p| p.lambda_vec.as_slice())
    }
}

fn analyze_matrix(cell: Option<usize>, d: &Matrix) -> CellAnalysis {
    let monotone = check_monotone_matrix(d, EIGEN_TOL).holds;
    let irreducible = is_irreducible(d).irreducible;
    let scale = d.amax().max(1.0);
    let zero_row_sums = rows_are_zero(d, EIGEN_TOL * scale).is_ok();
    let mode = if zero_row_sums {
        PerronMode::Degenerate
    } else {
        PerronMode::General
    };
    let perron = if monotone && irreducible {
        perron_left_null_vector(d, mode).ok()
    } else {
        None
    };
    CellAnalysis {
        cell,
        monotone,
        irreducible,
        zero_row_sums,
        perron,
    }
}

/// Per-cell coupling analysis, evaluated in parallel and stored by cell index.
pub fn analyze_field(field: &CouplingField, grid: Option<&TorusGrid>) -> FieldAnalysis {
    let cells: Vec<CellAnalysis> = field
        .entries()
        .into_par_iter()
        .map(|(cell, d)| analyze_matrix(cell, d))
        .collect();
    let max_lambda_jump = match (grid, field.n_cells()) {
        (Some(grid), Some(_)) => {
            let mut jump: Option<f64> = None;
            for c in 0..grid.cells() {
                let Some(a) = cells[c].perron.as_ref() else {
                    continue;
                };
                for nb in grid.forward_neighbors(c) {
                    if let Some(b) = cells[nb].perron.as_ref() {
                        let j = a
                            .lambda_vec
                            .iter()
                            .zip(&b.lambda_vec)
                            .map(|(x, y)| (x - y).abs())
                            .fold(0.0, f64::max);
                        jump = Some(jump.map_or(j, |cur: f64| cur.max(j)));
                    }
                }
            }
            jump
        }
        _ => None,
    };
    FieldAnalysis {
        cells,
        max_lambda_jump,
    }
}

pub(crate) mod rows_serde {
    use super::{matrix_from_rows, matrix_to_rows, Matrix};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod opt_rows_serde {
    use super::{matrix_from_rows, matrix_to_rows, Matrix};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(matrix_to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Matrix>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(de)?;
        rows.map(|r| matrix_from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        matrix_from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn cyclic() -> Matrix {
        mat(&[&[1.0, -1.0, 0.0], &[0.0, 1.0, -1.0], &[-1.0, 0.0, 1.0]])
    }

    #[test]
    fn two_state_rates_are_monotone() {
        let (a, b) = (1.0, 2.0);
        let d = mat(&[&[a, -a], &[-b, b]]);
        assert!(check_monotone_matrix(&d, 0.0).holds);
    }

    #[test]
    fn positive_offdiagonal_is_flagged() {
        let r = check_monotone_matrix(&mat(&[&[1.0, 1.0], &[0.0, 1.0]]), 0.0);
        assert!(!r.holds);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!((v.i, v.j, v.kind), (0, Some(1), ViolationKind::OffdiagSign));
    }

    #[test]
    fn negative_row_sum_is_flagged() {
        let r = check_monotone_matrix(&mat(&[&[1.0, -2.0], &[0.0, 1.0]]), 0.0);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!((v.i, v.kind), (0, ViolationKind::RowSum));
        assert_eq!(v.value, -1.0);
    }

    #[test]
    fn per_cell_violation_reports_cell() {
        let field = CouplingField::per_cell(
            2,
            vec![
                mat(&[&[1.0, -1.0], &[-1.0, 1.0]]),
                mat(&[&[-1.0, 0.0], &[0.0, 0.0]]),
            ],
        )
        .unwrap();
        let r = check_monotone_coupling(&field, 0.0);
        assert!(r.violations.iter().all(|v| v.cell == Some(1)));
        assert!(r
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::DiagSign));
    }

    #[test]
    fn irreducibility_examples() {
        let w = is_irreducible(&cyclic());
        assert!(w.irreducible);
        let chains = w.chains.unwrap();
        assert_eq!(chains.len(), 6);
        assert!(chains.iter().all(|c| c.is_valid(&cyclic())));

        let blocks = mat(&[
            &[1.0, -1.0, 0.0, 0.0],
            &[-1.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, -1.0],
            &[0.0, 0.0, -1.0, 1.0],
        ]);
        let w = is_irreducible(&blocks);
        assert!(!w.irreducible);
        assert_eq!(w.separating_set, Some(vec![0, 1]));

        let tri = mat(&[&[0.0, 0.0], &[-1.0, 1.0]]);
        assert_eq!(is_irreducible(&tri).separating_set, Some(vec![0]));
    }

    #[test]
    fn scalar_is_irreducible() {
        assert!(is_irreducible(&mat(&[&[0.0]])).irreducible);
    }

    #[test]
    fn m_decomposition_values() {
        let dec = m_decompose(&mat(&[&[1.0, -1.0], &[-2.0, 2.0]]), 1e-12).unwrap();
        assert_eq!(dec.s, 2.0);
        assert_eq!(dec.b, mat(&[&[1.0, 1.0], &[2.0, 0.0]]));
        assert!((dec.rho - 2.0).abs() < 1e-10);

        let zero = m_decompose(&Matrix::zeros(3, 3), 1e-12).unwrap();
        assert_eq!((zero.s, zero.rho), (0.0, 0.0));
        assert_eq!(zero.b, Matrix::zeros(3, 3));

        let id = m_decompose(&Matrix::identity(2, 2), 1e-12).unwrap();
        assert_eq!((id.s, id.rho), (1.0, 0.0));
    }

    #[test]
    fn m_decompose_rejects_non_monotone() {
        assert!(matches!(
            m_decompose(&mat(&[&[1.0, 1.0], &[0.0, 1.0]]), 0.0),
            Err(Error::MonotonicityViolated(_))
        ));
    }

    #[test]
    fn spectral_radius_values() {
        let r = spectral_radius(&mat(&[&[1.0, 1.0], &[2.0, 0.0]]), 1e-12).unwrap();
        assert!((r - 2.0).abs() < 1e-10);
        assert_eq!(spectral_radius(&Matrix::zeros(2, 2), 1e-12).unwrap(), 0.0);
        let p = spectral_radius(&mat(&[&[0.0, 1.0], &[1.0, 0.0]]), 1e-12).unwrap();
        assert!((p - 1.0).abs() < 1e-10);
        assert!(matches!(
            spectral_radius(&mat(&[&[0.0, -1.0], &[1.0, 0.0]]), 1e-12),
            Err(Error::NotNonnegative { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn perron_vectors() {
        let p =
            perron_left_null_vector(&mat(&[&[1.0, -1.0], &[-2.0, 2.0]]), PerronMode::Degenerate)
                .unwrap();
        assert!((p.lambda_vec[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((p.lambda_vec[1] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(p.kernel_dim, 1);

        let p = perron_left_null_vector(&cyclic(), PerronMode::Degenerate).unwrap();
        for l in &p.lambda_vec {
            assert!((l - 1.0 / 3.0).abs() < 1e-14);
        }

        let p =
            perron_left_null_vector(&mat(&[&[1.0, -1.0], &[-1.0, 1.0]]), PerronMode::Degenerate)
                .unwrap();
        assert_eq!(p.lambda_vec, vec![0.5, 0.5]);
    }

    #[test]
    fn perron_general_mode_gives_sub_kernel_vector() {
        let d = mat(&[&[2.0, -1.0, 0.0], &[0.0, 1.0, -1.0], &[-0.5, 0.0, 1.5]]);
        let p = perron_left_null_vector(&d, PerronMode::General).unwrap();
        let l = nalgebra::DVector::from_vec(p.lambda_vec.clone());
        let dt_l = d.transpose() * l;
        assert!(dt_l.iter().all(|&v| v >= -1e-12));
        assert!(p.lambda_vec.iter().all(|&v| v > 0.0));
        assert_eq!(p.kernel_dim, 0);
        assert!(p.limit_projector.is_none());
    }

    #[test]
    fn perron_errors() {
        let blocks = mat(&[&[1.0, -1.0, 0.0], &[-1.0, 1.0, 0.0], &[0.0, 0.0, 0.0]]);
        assert!(matches!(
            perron_left_null_vector(&blocks, PerronMode::Degenerate),
            Err(Error::NotIrreducible(_))
        ));
        let pos = mat(&[&[2.0, -1.0], &[-1.0, 1.0]]);
        assert!(matches!(
            perron_left_null_vector(&pos, PerronMode::Degenerate),
            Err(Error::RowSumsNonzero { row: 0, .. })
        ));
    }

    #[test]
    fn spectrum_gaps() {
        let s = nonzero_spectrum_check(&cyclic(), EIGEN_TOL);
        assert!(s.ok);
        assert!((s.r.unwrap() - 1.5).abs() < 1e-9);
        let s = nonzero_spectrum_check(&mat(&[&[1.0, -1.0], &[-2.0, 2.0]]), EIGEN_TOL);
        assert!(s.ok);
        assert!((s.r.unwrap() - 3.0).abs() < 1e-9);
        let s = nonzero_spectrum_check(&Matrix::zeros(2, 2), EIGEN_TOL);
        assert_eq!(s, SpectrumCheck { ok: true, r: None });
    }

    #[test]
    fn exponential_basics() {
        assert_eq!(
            matrix_exponential(&Matrix::zeros(3, 3), 4.0),
            Matrix::identity(3, 3)
        );
        let d = mat(&[&[1.0, -1.0], &[-2.0, 2.0]]);
        let e = matrix_exponential(&d, 20.0);
        let target = mat(&[&[2.0, 1.0], &[2.0, 1.0]]) / 3.0;
        assert!((e - target).abs().max() < 1e-8);
        let e = matrix_exponential(&cyclic(), 0.7);
        for i in 0..3 {
            assert!((e.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_projectors() {
        let lp = exp_limit_projector(&mat(&[&[1.0, -1.0], &[-2.0, 2.0]])).unwrap();
        assert!(
            (lp.a.clone() - mat(&[&[2.0, 1.0], &[2.0, 1.0]]) / 3.0)
                .abs()
                .max()
                < 1e-14
        );
        assert!((lp.r - 3.0).abs() < 1e-9);

        let lp = exp_limit_projector(&mat(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert!((lp.a.clone() - Matrix::from_element(2, 2, 0.5)).abs().max() < 1e-14);
        assert!((lp.r - 2.0).abs() < 1e-9);

        let lp = exp_limit_projector(&cyclic()).unwrap();
        assert!(
            (lp.a.clone() - Matrix::from_element(3, 3, 1.0 / 3.0))
                .abs()
                .max()
                < 1e-14
        );
        assert!((lp.r - 1.5).abs() < 1e-9);
    }

    #[test]
    fn coupling_field_json_round_trip() {
        let field = CouplingField::constant(cyclic()).unwrap();
        let json = serde_json::to_string(&field).unwrap();
        assert_eq!(
            json,
            r#"{"m":3,"constant":[[1.0,-1.0,0.0],[0.0,1.0,-1.0],[-1.0,0.0,1.0]]}"#
        );
        let back: CouplingField = serde_json::from_str(&json).unwrap();
        assert_eq!(back, field);
        assert!(serde_json::from_str::<CouplingField>(r#"{"m":2,"constant":[[1.0]]}"#).is_err());
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(CouplingField::per_cell(2, vec![Matrix::zeros(3, 3)]).is_err());
        assert!(matrix_from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
