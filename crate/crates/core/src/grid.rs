//! Uniform periodic grids, one-sided differences and monotone numerical
//! Hamiltonians.
//!
//! Nodes sit at `x = k·dx`, `k = 0, …, n−1` along each axis; in two dimensions
//! the cell index is `ix + n·iy`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{HamiltonianKind, ModelProblem, ScalarFn};
use crate::{Error, Result};

pub const MIN_CELLS: usize = 8;

/// Smallest per-task cell count handed to the thread pool.
pub const PAR_MIN_CELLS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub dx: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize, period: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::DegenerateGrid(format!(
                "dimension {dim} not in {{1, 2}}"
            )));
        }
        if n < MIN_CELLS {
            return Err(Error::DegenerateGrid(format!("n = {n} < {MIN_CELLS}")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::DegenerateGrid(format!("period {period}")));
        }
        Ok(Self {
            dim,
            n,
            period,
            dx: period / n as f64,
        })
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Node coordinates; the second entry is 0 in one dimension.
    #[inline]
    pub fn point(&self, cell: usize) -> [f64; 2] {
        let (ix, iy) = self.coords(cell);
        [ix as f64 * self.dx, iy as f64 * self.dx]
    }

    #[inline]
    pub fn coords(&self, cell: usize) -> (usize, usize) {
        if self.dim == 1 {
            (cell, 0)
        } else {
            (cell % self.n, cell / self.n)
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        if self.dim == 1 {
            ix
        } else {
            ix + self.n * iy
        }
    }

    /// Neighbour one step forward (`+1`) or backward (`-1`) along `axis`.
    #[inline]
    pub fn neighbor(&self, cell: usize, axis: usize, forward: bool) -> usize {
        let n = self.n;
        let step = |k: usize| {
            if forward {
                (k + 1) % n
            } else {
                (k + n - 1) % n
            }
        };
        let (ix, iy) = self.coords(cell);
        match axis {
            0 => self.index(step(ix), iy),
            _ => self.index(ix, step(iy)),
        }
    }

    pub fn forward_neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).map(move |axis| self.neighbor(cell, axis, true))
    }

    /// Cell whose node is nearest to `x` on the torus.
    pub fn nearest_cell(&self, x: &[f64]) -> usize {
        let snap = |v: f64| {
            let k = (v.rem_euclid(self.period) / self.dx).round() as usize;
            k % self.n
        };
        let ix = snap(x[0]);
        let iy = if self.dim == 2 {
            snap(x.get(1).copied().unwrap_or(0.0))
        } else {
            0
        };
        self.index(ix, iy)
    }

    /// Shortest signed displacement from `a` to `b` along one periodic axis.
    #[inline]
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        let d = (b - a).rem_euclid(self.period);
        if d > 0.5 * self.period {
            d - self.period
        } else {
            d
        }
    }
}

/// `m` scalar arrays over the grid cells at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorGridField {
    pub m: usize,
    pub values: Vec<Vec<f64>>,
    pub t: f64,
}

impl VectorGridField {
    pub fn zeros(m: usize, cells: usize) -> Self {
        Self {
            m,
            values: vec![vec![0.0; cells]; m],
            t: 0.0,
        }
    }

    pub fn from_components(values: Vec<Vec<f64>>, t: f64) -> Result<Self> {
        let cells = values.first().map_or(0, Vec::len);
        if values.iter().any(|v| v.len() != cells) {
            return Err(Error::DimensionMismatch(
                "components of different lengths".into(),
            ));
        }
        Ok(Self {
            m: values.len(),
            values,
            t,
        })
    }

    pub fn from_fns(grid: &TorusGrid, fns: &[ScalarFn]) -> Self {
        let values = fns
            .iter()
            .map(|f| {
                (0..grid.cells())
                    .map(|c| f.eval(&grid.point(c)[..grid.dim]))
                    .collect()
            })
            .collect();
        Self {
            m: fns.len(),
            values,
            t: 0.0,
        }
    }

    pub fn cells(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    /// `max_i sup_x |u_i − v_i|`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// `max_i sup_x (u_i − v_i)`.
    pub fn max_difference(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest one-sided difference quotient over components, cells and axes.
    pub fn lipschitz_estimate(&self, grid: &TorusGrid) -> f64 {
        let mut l: f64 = 0.0;
        for u in &self.values {
            for c in 0..u.len() {
                for nb in grid.forward_neighbors(c) {
                    l = l.max((u[nb] - u[c]).abs() / grid.dx);
                }
            }
        }
        l
    }

    /// Per-component Lipschitz estimates.
    pub fn lipschitz_by_component(&self, grid: &TorusGrid) -> Vec<f64> {
        self.values
            .iter()
            .map(|u| {
                (0..u.len())
                    .flat_map(|c| {
                        grid.forward_neighbors(c)
                            .map(move |nb| (u[nb] - u[c]).abs() / grid.dx)
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Adds `shift[i]` to every value of component `i`.
    pub fn add_constants(&mut self, shift: &[f64]) {
        for (u, s) in self.values.iter_mut().zip(shift) {
            u.iter_mut().for_each(|v| *v += s);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumericalFlux {
    /// `H(x, p̄) − θ Σ_k (p⁺_k − p⁻_k)/2` with `p̄ = (p⁻ + p⁺)/2`.
    #[default]
    LaxFriedrichs,
    /// Upwind flux for the radial built-in kinds; Custom equations fall back
    /// to Lax-Friedrichs.
    Godunov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Dissipation coefficient per equation.
    pub thetas: Vec<f64>,
    pub cfl_safety: f64,
    pub dt: f64,
    pub flux: NumericalFlux,
}

impl SchemeParams {
    /// Estimates θ from `field` and sets `dt` from the CFL bound.
    pub fn auto(
        disc: &Discretization<'_>,
        field: &VectorGridField,
        flux: NumericalFlux,
        cfl_safety: f64,
    ) -> Result<Self> {
        let thetas = estimate_thetas(disc, field);
        let dt = cfl_max_dt(disc.problem(), disc.grid(), &thetas, cfl_safety)?;
        Ok(Self {
            thetas,
            cfl_safety,
            dt,
            flux,
        })
    }

    /// Monotonicity bound for the explicit coupled step.
    pub fn max_stable_dt(&self, problem: &ModelProblem, grid: &TorusGrid) -> Result<f64> {
        cfl_max_dt(problem, grid, &self.thetas, 1.0)
    }

    /// Raises θ to at least `thetas` and recomputes `dt`.
    pub fn raise_thetas(
        &mut self,
        problem: &ModelProblem,
        grid: &TorusGrid,
        thetas: &[f64],
    ) -> Result<bool> {
        let mut changed = false;
        for (cur, new) in self.thetas.iter_mut().zip(thetas) {
            if *new > *cur {
                *cur = *new;
                changed = true;
            }
        }
        if changed {
            self.dt = cfl_max_dt(problem, grid, &self.thetas, self.cfl_safety)?;
        }
        Ok(changed)
    }
}

/// Backward and forward differences along each axis (unused axes are zero).
#[inline]
pub fn gradient_pair(values: &[f64], grid: &TorusGrid, cell: usize) -> [(f64, f64); 2] {
    let mut out = [(0.0, 0.0); 2];
    for (axis, slot) in out.iter_mut().enumerate().take(grid.dim) {
        let back = values[grid.neighbor(cell, axis, false)];
        let fwd = values[grid.neighbor(cell, axis, true)];
        *slot = (
            (values[cell] - back) / grid.dx,
            (fwd - values[cell]) / grid.dx,
        );
    }
    out
}

/// Lax-Friedrichs numerical Hamiltonian of equation `i` at `x`.
pub fn lf_hamiltonian(
    problem: &ModelProblem,
    i: usize,
    x: &[f64],
    p_minus: &[f64],
    p_plus: &[f64],
    theta: f64,
) -> Result<f64> {
    let h = problem.hamiltonians.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        m: problem.m,
    })?;
    let (mid, spread) = lf_parts(p_minus, p_plus);
    Ok(h.eval(x, &mid[..p_minus.len()]) - theta * spread)
}

#[inline]
fn lf_parts(p_minus: &[f64], p_plus: &[f64]) -> ([f64; 2], f64) {
    let mut mid = [0.0; 2];
    let mut spread = 0.0;
    for k in 0..p_minus.len() {
        mid[k] = 0.5 * (p_minus[k] + p_plus[k]);
        spread += 0.5 * (p_plus[k] - p_minus[k]);
    }
    (mid, spread)
}

/// Upwinded `p − p*` for the radial kinds: per axis the larger in magnitude of
/// `max(p⁻ − p*, 0)` and `min(p⁺ − p*, 0)`.
#[inline]
fn upwind_offset(p_minus: &[f64], p_plus: &[f64], center: &[f64]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for k in 0..p_minus.len() {
        let c = center.get(k).copied().unwrap_or(0.0);
        let a = (p_minus[k] - c).max(0.0);
        let b = (p_plus[k] - c).min(0.0);
        v[k] = if a >= -b { a } else { b };
    }
    v
}

/// Godunov numerical Hamiltonian; `None` for Custom kinds.
pub fn godunov_hamiltonian(
    problem: &ModelProblem,
    i: usize,
    x: &[f64],
    p_minus: &[f64],
    p_plus: &[f64],
) -> Result<Option<f64>> {
    let h = problem.hamiltonians.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        m: problem.m,
    })?;
    let Some(center) = h.radial_center() else {
        return Ok(None);
    };
    let v = upwind_offset(p_minus, p_plus, &center);
    let n = p_minus.len();
    let p: Vec<f64> = (0..n)
        .map(|k| v[k] + center.get(k).copied().unwrap_or(0.0))
        .collect();
    Ok(Some(h.eval(x, &p)))
}

/// `dt = safety / max_i (θ_i·dim/dx + max_x d_ii(x))`.
pub fn cfl_max_dt(
    problem: &ModelProblem,
    grid: &TorusGrid,
    thetas: &[f64],
    cfl_safety: f64,
) -> Result<f64> {
    if thetas.len() != problem.m {
        return Err(Error::DimensionMismatch(format!(
            "{} thetas for m = {}",
            thetas.len(),
            problem.m
        )));
    }
    if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
        return Err(Error::DegenerateGrid(format!(
            "cfl safety {cfl_safety} not in (0, 1]"
        )));
    }
    let mut rate: f64 = 0.0;
    for (i, theta) in thetas.iter().enumerate() {
        let dmax = problem
            .coupling
            .entries()
            .iter()
            .map(|(_, d)| d[(i, i)])
            .fold(0.0, f64::max);
        rate = rate.max(theta * grid.dim as f64 / grid.dx + dmax);
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::DegenerateGrid(format!(
            "no finite positive CFL rate (rate = {rate})"
        )));
    }
    Ok(cfl_safety / rate)
}

const THETA_INFLATION: f64 = 1.2;
const THETA_LATTICE: usize = 5;
const THETA_MAX_CELLS: usize = 256;

/// Samples `|∂F_i/∂p_k|` over the gradient hypercube of `field` (widened so
/// that flat fields still probe the kink of `|p|`), inflated by 1.2.
pub fn estimate_thetas(disc: &Discretization<'_>, field: &VectorGridField) -> Vec<f64> {
    let grid = disc.grid();
    let dim = grid.dim;
    let stride = (grid.cells() / THETA_MAX_CELLS).max(1);
    (0..disc.problem().m)
        .map(|i| {
            let u = &field.values[i];
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for c in 0..grid.cells() {
                let g = gradient_pair(u, grid, c);
                for k in 0..dim {
                    lo[k] = lo[k].min(g[k].0.min(g[k].1));
                    hi[k] = hi[k].max(g[k].0.max(g[k].1));
                }
            }
            for k in 0..dim {
                let widen = (0.25 * (hi[k] - lo[k])).max(1.0);
                lo[k] -= widen;
                hi[k] += widen;
            }
            let axis_samples = |k: usize| -> Vec<f64> {
                (0..THETA_LATTICE)
                    .map(|s| lo[k] + (hi[k] - lo[k]) * s as f64 / (THETA_LATTICE - 1) as f64)
                    .collect()
            };
            let xs = axis_samples(0);
            let ys = if dim == 2 { axis_samples(1) } else { vec![0.0] };
            let mut best: f64 = 0.0;
            for c in (0..grid.cells()).step_by(stride) {
                for &px in &xs {
                    for &py in &ys {
                        let p = [px, py];
                        for k in 0..dim {
                            let h = 1e-6 * (1.0 + p[k].abs());
                            let mut a = p;
                            let mut b = p;
                            a[k] += h;
                            b[k] -= h;
                            let d = (disc.convex_cached(i, c, &a[..dim])
                                - disc.convex_cached(i, c, &b[..dim]))
                            .abs()
                                / (2.0 * h);
                            best = best.max(d);
                        }
                    }
                }
            }
            THETA_INFLATION * best
        })
        .collect()
}

#[derive(Clone, Debug)]
enum CachedKind {
    Eikonal(Vec<f64>),
    Shifted(Vec<f64>),
    Quadratic(Vec<f64>),
    Custom,
}

/// Problem data sampled once on a grid, with the stencil operators.
#[derive(Clone, Debug)]
pub struct Discretization<'a> {
    problem: &'a ModelProblem,
    grid: TorusGrid,
    points: Vec<[f64; 2]>,
    costs: Vec<Vec<f64>>,
    kinds: Vec<CachedKind>,
    nbr: Vec<[usize; 4]>,
}

impl<'a> Discretization<'a> {
    pub fn new(problem: &'a ModelProblem, grid: TorusGrid) -> Result<Self> {
        if grid.dim != problem.dim {
            return Err(Error::DimensionMismatch(format!(
                "grid dimension {} vs problem dimension {}",
                grid.dim, problem.dim
            )));
        }
        if (grid.period - problem.period).abs() > 1e-12 * problem.period {
            return Err(Error::DimensionMismatch(format!(
                "grid period {} vs problem period {}",
                grid.period, problem.period
            )));
        }
        problem.coupling.check_grid(&grid)?;
        let dim = grid.dim;
        let points: Vec<[f64; 2]> = (0..grid.cells()).map(|c| grid.point(c)).collect();
        let costs = problem
            .hamiltonians
            .iter()
            .map(|h| points.iter().map(|x| h.cost.eval(&x[..dim])).collect())
            .collect();
        let kinds = problem
            .hamiltonians
            .iter()
            .map(|h| match &h.kind {
                HamiltonianKind::Eikonal { sigma } => {
                    CachedKind::Eikonal(points.iter().map(|x| sigma.eval(&x[..dim])).collect())
                }
                HamiltonianKind::Quadratic { sigma } => {
                    CachedKind::Quadratic(points.iter().map(|x| sigma.eval(&x[..dim])).collect())
                }
                HamiltonianKind::ShiftedEikonal { shift } => CachedKind::Shifted(shift.clone()),
                HamiltonianKind::Custom { .. } => CachedKind::Custom,
            })
            .collect();
        let nbr = (0..grid.cells())
            .map(|c| {
                let mut out = [c; 4];
                for axis in 0..dim {
                    out[2 * axis] = grid.neighbor(c, axis, false);
                    out[2 * axis + 1] = grid.neighbor(c, axis, true);
                }
                out
            })
            .collect();
        Ok(Self {
            problem,
            grid,
            points,
            costs,
            kinds,
            nbr,
        })
    }

    pub fn problem(&self) -> &'a ModelProblem {
        self.problem
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn cost(&self, i: usize, cell: usize) -> f64 {
        self.costs[i][cell]
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    pub fn point(&self, cell: usize) -> &[f64] {
        &self.points[cell][..self.grid.dim]
    }

    /// `F_i(x_cell, p)` using the sampled speeds.
    #[inline]
    pub fn convex_cached(&self, i: usize, cell: usize, p: &[f64]) -> f64 {
        match &self.kinds[i] {
            CachedKind::Eikonal(s) => s[cell] * p.iter().map(|v| v * v).sum::<f64>().sqrt(),
            CachedKind::Quadratic(s) => 0.5 * s[cell] * p.iter().map(|v| v * v).sum::<f64>(),
            CachedKind::Shifted(q) => p
                .iter()
                .zip(q)
                .map(|(a, b)| (a + b) * (a + b))
                .sum::<f64>()
                .sqrt(),
            CachedKind::Custom => self.problem.hamiltonians[i].convex_part(self.point(cell), p),
        }
    }

    #[inline]
    fn center(&self, i: usize) -> Option<[f64; 2]> {
        match &self.kinds[i] {
            CachedKind::Eikonal(_) | CachedKind::Quadratic(_) => Some([0.0; 2]),
            CachedKind::Shifted(q) => {
                let mut c = [0.0; 2];
                for (k, v) in q.iter().enumerate() {
                    c[k] = -v;
                }
                Some(c)
            }
            CachedKind::Custom => None,
        }
    }

    /// Backward/forward differences of `u` at `cell`.
    #[inline]
    pub fn differences(&self, u: &[f64], cell: usize) -> ([f64; 2], [f64; 2]) {
        let mut pm = [0.0; 2];
        let mut pp = [0.0; 2];
        let inv = 1.0 / self.grid.dx;
        let nb = &self.nbr[cell];
        for k in 0..self.grid.dim {
            pm[k] = (u[cell] - u[nb[2 * k]]) * inv;
            pp[k] = (u[nb[2 * k + 1]] - u[cell]) * inv;
        }
        (pm, pp)
    }

    /// Numerical `F̂_i` (without the cost) at `cell`.
    #[inline]
    pub fn numerical_convex(
        &self,
        i: usize,
        cell: usize,
        u: &[f64],
        theta: f64,
        flux: NumericalFlux,
    ) -> f64 {
        let dim = self.grid.dim;
        let (pm, pp) = self.differences(u, cell);
        if flux == NumericalFlux::Godunov {
            if let Some(center) = self.center(i) {
                let v = upwind_offset(&pm[..dim], &pp[..dim], &center[..dim]);
                let mut p = [0.0; 2];
                for k in 0..dim {
                    p[k] = v[k] + center[k];
                }
                return self.convex_cached(i, cell, &p[..dim]);
            }
        }
        let (mid, spread) = lf_parts(&pm[..dim], &pp[..dim]);
        self.convex_cached(i, cell, &mid[..dim]) - theta * spread
    }

    /// Numerical `Ĥ_i = F̂_i − f_i` at `cell`.
    #[inline]
    pub fn numerical_hamiltonian(
        &self,
        i: usize,
        cell: usize,
        u: &[f64],
        theta: f64,
        flux: NumericalFlux,
    ) -> f64 {
        self.numerical_convex(i, cell, u, theta, flux) - self.costs[i][cell]
    }

    /// `Σ_j d_ij(x) u_j(x)`.
    #[inline]
    pub fn coupling_term(&self, i: usize, cell: usize, field: &VectorGridField) -> f64 {
        let d = self.problem.coupling.at(cell);
        (0..self.problem.m)
            .map(|j| d[(i, j)] * field.values[j][cell])
            .sum()
    }

    /// `Ĥ_i(x, Du_i) + Σ_j d_ij u_j` for every equation and cell.
    pub fn operator(&self, field: &VectorGridField, params: &SchemeParams) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.grid.cells()]; self.problem.m];
        self.operator_into(field, params, &mut out);
        out
    }

    /// [`Self::operator`] writing into preallocated buffers.
    pub fn operator_into(
        &self,
        field: &VectorGridField,
        params: &SchemeParams,
        out: &mut [Vec<f64>],
    ) {
        for (i, row) in out.iter_mut().enumerate() {
            let u = &field.values[i];
            let eval = |(c, slot): (usize, &mut f64)| {
                *slot = self.numerical_hamiltonian(i, c, u, params.thetas[i], params.flux)
                    + self.coupling_term(i, c, field);
            };
            if row.len() >= 2 * PAR_MIN_CELLS {
                row.par_iter_mut()
                    .enumerate()
                    .with_min_len(PAR_MIN_CELLS)
                    .for_each(eval);
            } else {
                row.iter_mut().enumerate().for_each(eval);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{matrix_from_rows, CouplingField};
    use crate::model::HamiltonianSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn eikonal_problem(m: usize, cost: ScalarFn, d: Vec<Vec<f64>>) -> ModelProblem {
        ModelProblem::new(
            1,
            1.0,
            (0..m)
                .map(|_| HamiltonianSpec::eikonal(ScalarFn::constant(1.0), cost.clone()))
                .collect(),
            CouplingField::constant(matrix_from_rows(&d).unwrap()).unwrap(),
            (0..m).map(|_| ScalarFn::constant(0.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn grid_rejects_small_n() {
        assert!(matches!(
            TorusGrid::new(1, 4, 1.0),
            Err(Error::DegenerateGrid(_))
        ));
        assert!(TorusGrid::new(3, 16, 1.0).is_err());
    }

    #[test]
    fn neighbours_wrap() {
        let g = TorusGrid::new(2, 8, 1.0).unwrap();
        assert_eq!(g.neighbor(g.index(7, 3), 0, true), g.index(0, 3));
        assert_eq!(g.neighbor(g.index(2, 0), 1, false), g.index(2, 7));
        assert_eq!(g.nearest_cell(&[0.99, 0.01]), g.index(0, 0));
        assert!((g.periodic_delta(0.9, 0.1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = TorusGrid::new(1, 16, 1.0).unwrap();
        let u = vec![3.5; 16];
        assert_eq!(gradient_pair(&u, &g, 5)[0], (0.0, 0.0));
    }

    #[test]
    fn gradient_of_sine_at_origin() {
        let n = 512;
        let g = TorusGrid::new(1, n, 1.0).unwrap();
        let u: Vec<f64> = (0..n).map(|c| (2.0 * PI * g.point(c)[0]).sin()).collect();
        let (pm, pp) = gradient_pair(&u, &g, 0)[0];
        // |f'' | ≤ 4π², so each one-sided quotient is within 2π²·dx of 2π.
        let bound = 2.0 * PI * PI * g.dx;
        assert!((pm - 2.0 * PI).abs() <= bound);
        assert!((pp - 2.0 * PI).abs() <= bound);
    }

    #[test]
    fn sawtooth_seam() {
        let n = 16;
        let g = TorusGrid::new(1, n, 1.0).unwrap();
        let u: Vec<f64> = (0..n).map(|c| c as f64 * g.dx).collect();
        let (pm, pp) = gradient_pair(&u, &g, 0)[0];
        assert_eq!(pp, 1.0);
        assert!((pp - pm - n as f64).abs() < 1e-9);
    }

    #[test]
    fn lf_consistency_and_value() {
        let p = eikonal_problem(1, ScalarFn::constant(0.0), vec![vec![0.0]]);
        assert_eq!(
            lf_hamiltonian(&p, 0, &[0.2], &[0.7], &[0.7], 5.0).unwrap(),
            0.7
        );
        assert_eq!(
            lf_hamiltonian(&p, 0, &[0.2], &[-1.0], &[1.0], 1.0).unwrap(),
            -1.0
        );
        assert_eq!(
            godunov_hamiltonian(&p, 0, &[0.2], &[0.7], &[0.7]).unwrap(),
            Some(0.7)
        );
        assert_eq!(
            godunov_hamiltonian(&p, 0, &[0.2], &[-1.0], &[1.0]).unwrap(),
            Some(0.0)
        );
    }

    #[test]
    fn cfl_examples() {
        let p = eikonal_problem(
            2,
            ScalarFn::constant(0.0),
            vec![vec![2.0, -2.0], vec![-1.0, 1.0]],
        );
        let g = TorusGrid::new(1, 100, 1.0).unwrap();
        let dt = cfl_max_dt(&p, &g, &[1.0, 1.0], 0.9).unwrap();
        assert!((dt - 0.9 / 102.0).abs() < 1e-15);

        let p0 = eikonal_problem(1, ScalarFn::constant(0.0), vec![vec![0.0]]);
        let dt0 = cfl_max_dt(&p0, &g, &[1.0], 0.9).unwrap();
        assert!((dt0 - 0.9 * g.dx).abs() < 1e-15);
        let g2 = TorusGrid::new(1, 200, 1.0).unwrap();
        assert!((cfl_max_dt(&p0, &g2, &[1.0], 0.9).unwrap() - 0.5 * dt0).abs() < 1e-15);
        assert!(matches!(
            cfl_max_dt(&p0, &g, &[0.0], 0.9),
            Err(Error::DegenerateGrid(_))
        ));
    }

    #[test]
    fn theta_estimate_covers_eikonal_speed() {
        let p = eikonal_problem(1, ScalarFn::constant(0.0), vec![vec![0.0]]);
        let g = TorusGrid::new(1, 64, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let th = estimate_thetas(&disc, &VectorGridField::zeros(1, 64));
        assert!((th[0] - 1.2).abs() < 1e-6);
    }

    fn lf_partials(theta: f64, x: f64, pm: f64, pp: f64) -> (f64, f64) {
        let p = eikonal_problem(1, ScalarFn::new("cos", |x| (x[0]).cos()), vec![vec![0.0]]);
        let d = 1e-4;
        let h = |a: f64, b: f64| lf_hamiltonian(&p, 0, &[x], &[a], &[b], theta).unwrap();
        (
            (h(pm + d, pp) - h(pm, pp)) / d,
            (h(pm, pp + d) - h(pm, pp)) / d,
        )
    }

    proptest! {
        #[test]
        fn lf_is_monotone_for_lipschitz_theta(x in 0.0..1.0f64, pm in -5.0..5.0f64, pp in -5.0..5.0f64) {
            let (dm, dp) = lf_partials(1.0, x, pm, pp);
            prop_assert!(dm >= -1e-9);
            prop_assert!(dp <= 1e-9);
        }

        #[test]
        fn shifting_fields_shifts_the_operator(k in 0usize..32, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = eikonal_problem(2, ScalarFn::constant(0.3), vec![vec![1.0, -1.0], vec![-0.5, 0.5]]);
            let g = TorusGrid::new(1, 32, 1.0).unwrap();
            let disc = Discretization::new(&p, g).unwrap();
            let u: Vec<Vec<f64>> = (0..2).map(|_| (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let shifted: Vec<Vec<f64>> = u.iter().map(|c| (0..32).map(|i| c[(i + 32 - k) % 32]).collect()).collect();
            for flux in [NumericalFlux::LaxFriedrichs, NumericalFlux::Godunov] {
                let params = SchemeParams { thetas: vec![1.2, 1.2], cfl_safety: 0.9, dt: 0.01, flux };
                let a = disc.operator(&VectorGridField::from_components(u.clone(), 0.0).unwrap(), &params);
                let b = disc.operator(&VectorGridField::from_components(shifted.clone(), 0.0).unwrap(), &params);
                for i in 0..2 {
                    for c in 0..32 {
                        prop_assert_eq!(b[i][(c + k) % 32], a[i][c]);
                    }
                }
            }
        }
    }
}
