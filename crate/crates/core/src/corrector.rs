//! Discrete corrector: the projected linear problem
//! `−Δφ − Ŵφ = h + Σ c_ij χ_i Z_ij`, `⟨χ_i Z_ij, φ⟩ = 0`, on a cell-centered
//! grid over the disk, the fixed-point iteration `φ = T(Ê + N(φ))`, the
//! multiplier check at and near a reduced maximizer, and the mass of the
//! corrected solution.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{exp_remainder, AnsatzFields};
use crate::domain::DiskDomain;
use crate::error::{Error, Result};
use crate::geometry::{Loc, Point};
use crate::params::{build_config, ProblemSpec};
use crate::quadrature::{QuadratureScheme, RegionSplit};

/// Grid spacing must not exceed the narrowest bubble width over this.
pub const CELLS_PER_WIDTH: f64 = 6.0;

pub const DEFAULT_GRID_N: usize = 768;

/// Smallest Shortley–Weller arm, as a fraction of the spacing.
const MIN_ARM: f64 = 1e-8;

/// Cell-centered lattice `x = −1 + (k + ½)h`, `h = 2/n`, restricted to the
/// open unit disk. For even `n` no node coincides with the origin.
#[derive(Clone, Debug)]
pub struct Grid {
    pub n: usize,
    pub h: f64,
    nodes: Vec<Point>,
    /// Lattice `(row, col)` of each node.
    cells: Vec<(usize, usize)>,
    /// Node index of each lattice cell, `usize::MAX` outside the disk.
    index: Vec<usize>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("grid needs at least 4 cells per side, got {n}")));
        }
        let h = 2.0 / n as f64;
        let mut nodes = Vec::new();
        let mut cells = Vec::new();
        let mut index = vec![usize::MAX; n * n];
        for row in 0..n {
            for col in 0..n {
                let p = Point::new(Self::coord(h, col), Self::coord(h, row));
                if p.norm_sq() < 1.0 {
                    index[row * n + col] = nodes.len();
                    nodes.push(p);
                    cells.push((row, col));
                }
            }
        }
        Ok(Grid {
            n,
            h,
            nodes,
            cells,
            index,
        })
    }

    fn coord(h: f64, k: usize) -> f64 {
        -1.0 + (k as f64 + 0.5) * h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Point {
        self.nodes[k]
    }

    fn lookup(&self, row: isize, col: isize) -> Option<usize> {
        let n = self.n as isize;
        if row < 0 || col < 0 || row >= n || col >= n {
            return None;
        }
        let k = self.index[(row * n + col) as usize];
        (k != usize::MAX).then_some(k)
    }

    /// Grid inner product `h² Σ a_k b_k`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.h * self.h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    /// Bilinear interpolation of a node field, with the value 0 at lattice
    /// cells outside the disk (the Dirichlet data).
    pub fn interpolate(&self, field: &[f64], x: Point) -> f64 {
        if x.norm_sq() >= 1.0 {
            return 0.0;
        }
        let fx = (x.x + 1.0) / self.h - 0.5;
        let fy = (x.y + 1.0) / self.h - 0.5;
        let (c0, r0) = (fx.floor(), fy.floor());
        let (sx, sy) = (fx - c0, fy - r0);
        let v = |r: f64, c: f64| self.lookup(r as isize, c as isize).map_or(0.0, |k| field[k]);
        (1.0 - sy) * ((1.0 - sx) * v(r0, c0) + sx * v(r0, c0 + 1.0))
            + sy * ((1.0 - sx) * v(r0 + 1.0, c0) + sx * v(r0 + 1.0, c0 + 1.0))
    }
}

/// Five-point `−Δ_h` with Shortley–Weller arms at the circle; row `k` holds
/// `(column, coefficient)` pairs with the diagonal first.
#[derive(Clone, Debug)]
pub struct Laplacian {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Laplacian {
    pub fn new(grid: &Grid) -> Self {
        let h = grid.h;
        let rows = grid
            .cells
            .par_iter()
            .zip(grid.nodes.par_iter())
            .map(|(&(row, col), &p)| {
                let mut entries = vec![(grid.index[row * grid.n + col], 0.0)];
                // (lattice step, coordinate along the axis, the other coordinate)
                for axis in 0..2 {
                    let (along, across) = if axis == 0 { (p.x, p.y) } else { (p.y, p.x) };
                    let reach = (1.0 - across * across).sqrt();
                    let mut arms = [(h, None); 2];
                    for (s, sign) in [1isize, -1].into_iter().enumerate() {
                        let (dr, dc) = if axis == 0 { (0, sign) } else { (sign, 0) };
                        match grid.lookup(row as isize + dr, col as isize + dc) {
                            Some(k) => arms[s] = (h, Some(k)),
                            None => {
                                let dist = (reach - sign as f64 * along).max(MIN_ARM * h);
                                arms[s] = (dist.min(h), None);
                            }
                        }
                    }
                    let (a, b) = (arms[0].0, arms[1].0);
                    entries[0].1 += 2.0 / (a * b);
                    for (len, nb) in [(a, arms[0].1), (b, arms[1].1)] {
                        if let Some(k) = nb {
                            entries.push((k, -2.0 / (len * (a + b))));
                        }
                    }
                }
                entries
            })
            .collect();
        Laplacian { rows }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|row| row.iter().map(|&(k, a)| a * u[k]).sum())
            .collect()
    }

    fn matrix_minus_diag(&self, diag: &[f64]) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.rows.len() * 5);
        for (r, row) in self.rows.iter().enumerate() {
            for (e, &(k, a)) in row.iter().enumerate() {
                let v = if e == 0 { a - diag[r] } else { a };
                trip.push(Triplet::new(r, k, v));
            }
        }
        let n = self.rows.len();
        SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| Error::Solver {
            reason: format!("sparse assembly failed: {e:?}"),
            history: Vec::new(),
        })
    }
}

/// Direct solver for `(−Δ_h − diag(d)) φ = rhs + B c`, `Bᵀφ = 0` through the
/// Schur complement of the (few) constraint columns.
pub struct ProjectedSolver {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    lap: Laplacian,
    diag: Vec<f64>,
    columns: Vec<Vec<f64>>,
    linv_cols: Vec<Vec<f64>>,
    schur: Mat<f64>,
    h2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSolveResult {
    pub phi: Vec<f64>,
    /// Multipliers in column order (center-major, then direction).
    pub c: Vec<f64>,
    /// `‖(−Δ_h − d)φ − Bc − rhs‖_∞ / ‖rhs‖_∞`.
    pub linear_residual: f64,
    /// `max_ij |⟨b_ij, φ⟩| / (‖b_ij‖ ‖φ‖)`.
    pub orthogonality_residual: f64,
}

fn solver_error(reason: impl Into<String>) -> Error {
    Error::Solver {
        reason: reason.into(),
        history: Vec::new(),
    }
}

impl ProjectedSolver {
    pub fn new(grid: &Grid, lap: &Laplacian, diag: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let a = lap.matrix_minus_diag(&diag)?;
        let lu = a.sp_lu().map_err(|e| solver_error(format!("sparse LU failed: {e:?}")))?;
        let h2 = grid.h * grid.h;
        let mut solver = ProjectedSolver {
            lu,
            lap: lap.clone(),
            diag,
            columns: Vec::new(),
            linv_cols: Vec::new(),
            schur: Mat::zeros(0, 0),
            h2,
        };
        let linv_cols: Vec<Vec<f64>> = columns.iter().map(|b| solver.solve_plain(b)).collect();
        let q = columns.len();
        solver.schur = Mat::from_fn(q, q, |i, j| h2 * dot(&columns[i], &linv_cols[j]));
        solver.columns = columns;
        solver.linv_cols = linv_cols;
        Ok(solver)
    }

    /// Solves `(−Δ_h − d) φ = rhs` without constraints.
    pub fn solve_plain(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.lap.apply(u);
        out.iter_mut().zip(&self.diag).zip(u).for_each(|((o, d), x)| *o -= d * x);
        out
    }

    fn constrain(&self, phi0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let q = self.columns.len();
        if q == 0 {
            return (phi0.to_vec(), Vec::new());
        }
        let g = Mat::from_fn(q, 1, |i, _| -self.h2 * dot(&self.columns[i], phi0));
        let c = self.schur.partial_piv_lu().solve(&g);
        let c: Vec<f64> = (0..q).map(|i| c[(i, 0)]).collect();
        let mut phi = phi0.to_vec();
        for (ci, col) in c.iter().zip(&self.linv_cols) {
            phi.iter_mut().zip(col).for_each(|(p, v)| *p += ci * v);
        }
        (phi, c)
    }

    pub fn residual(&self, phi: &[f64], c: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut r = self.apply(phi);
        for (k, v) in r.iter_mut().enumerate() {
            *v -= rhs[k] + c.iter().zip(&self.columns).map(|(ci, b)| ci * b[k]).sum::<f64>();
        }
        r
    }

    pub fn solve_projected(&self, rhs: &[f64]) -> Result<ProjectedSolveResult> {
        let (mut phi, mut c) = self.constrain(&self.solve_plain(rhs));
        // one step of iterative refinement
        let r = self.residual(&phi, &c, rhs);
        let (dphi, dc) = self.constrain(&self.solve_plain(&r.iter().map(|v| -v).collect::<Vec<_>>()));
        phi.iter_mut().zip(&dphi).for_each(|(a, b)| *a += b);
        c.iter_mut().zip(&dc).for_each(|(a, b)| *a += b);
        let r = self.residual(&phi, &c, rhs);
        let rhs_norm = max_abs(rhs);
        let linear_residual = if rhs_norm > 0.0 { max_abs(&r) / rhs_norm } else { max_abs(&r) };
        let phi_norm = dot(&phi, &phi).sqrt();
        let orthogonality_residual = self
            .columns
            .iter()
            .map(|b| {
                let bn = dot(b, b).sqrt();
                if phi_norm == 0.0 || bn == 0.0 {
                    0.0
                } else {
                    dot(b, &phi).abs() / (bn * phi_norm)
                }
            })
            .fold(0.0, f64::max);
        if phi.iter().any(|v| !v.is_finite()) || c.iter().any(|v| !v.is_finite()) {
            return Err(solver_error("projected solve produced non-finite values"));
        }
        Ok(ProjectedSolveResult {
            phi,
            c,
            linear_residual,
            orthogonality_residual,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// The linearized operator `−Δ_h − Ŵ` of an ansatz on a grid, with the
/// sampled fields it needs.
pub struct Operator {
    pub grid: Grid,
    pub laplacian: Laplacian,
    /// `Ŵ` at the nodes.
    pub w: Vec<f64>,
    /// `Ê` at the nodes.
    pub e: Vec<f64>,
    /// `log ŵ` (star-norm weight) at the nodes.
    pub log_star: Vec<f64>,
    /// Sampled `χ_i Z_ij`, center-major.
    pub columns: Vec<Vec<f64>>,
    pub solver: ProjectedSolver,
    /// `γ_i` of the center owning each column.
    pub column_gamma: Vec<f64>,
}

/// Grid size needed to resolve the narrowest bubble.
pub fn required_grid_n(fields: &AnsatzFields) -> usize {
    let width = (0..fields.bubble_count()).map(|j| fields.width(j)).fold(f64::INFINITY, f64::min);
    let n = (2.0 * CELLS_PER_WIDTH / width).ceil() as usize;
    n + n % 2
}

/// Samples the ansatz on the grid and factors `−Δ_h − Ŵ`. Refuses grids
/// with spacing above `width / 6` for the narrowest bubble.
pub fn assemble(fields: &AnsatzFields, grid: Grid) -> Result<Operator> {
    let required = required_grid_n(fields);
    if grid.n < required {
        let width = (0..fields.bubble_count()).map(|j| fields.width(j)).fold(f64::INFINITY, f64::min);
        return Err(Error::UnderResolved {
            n: grid.n,
            width,
            required,
        });
    }
    let laplacian = Laplacian::new(&grid);
    let samples: Vec<(f64, f64, f64)> = grid
        .nodes
        .par_iter()
        .map(|&x| (fields.w_hat(x), fields.e_hat(x), fields.log_star_weight(x)))
        .collect();
    for (k, s) in samples.iter().enumerate() {
        if !(s.0.is_finite() && s.1.is_finite()) {
            return Err(Error::NonFinite {
                patch: "grid".into(),
                node: k,
                x: grid.nodes[k],
                value: if s.0.is_finite() { s.1 } else { s.0 },
            });
        }
    }
    let m = fields.bubble_count() - 1;
    let mut columns = Vec::with_capacity(2 * m);
    let mut column_gamma = Vec::with_capacity(2 * m);
    for i in 1..=m {
        for j in 1..=2 {
            columns.push(
                grid.nodes
                    .par_iter()
                    .map(|&x| {
                        let loc = Loc::from(x);
                        fields.chi(i, loc) * fields.kernel(i, j, loc)
                    })
                    .collect(),
            );
            column_gamma.push(fields.cfg.gamma[i - 1]);
        }
    }
    let w: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let solver = ProjectedSolver::new(&grid, &laplacian, w.clone(), columns.clone())?;
    Ok(Operator {
        e: samples.iter().map(|s| s.1).collect(),
        log_star: samples.iter().map(|s| s.2).collect(),
        w,
        columns,
        column_gamma,
        solver,
        laplacian,
        grid,
    })
}

impl Operator {
    pub fn solve_projected(&self, rhs: &[f64]) -> Result<ProjectedSolveResult> {
        self.solver.solve_projected(rhs)
    }

    /// `N(φ) = Ŵ(e^φ − 1 − φ)` at the nodes.
    pub fn nonlinear(&self, phi: &[f64]) -> Vec<f64> {
        self.w.iter().zip(phi).map(|(w, p)| w * exp_remainder(*p)).collect()
    }

    /// `Ê + N(φ)`.
    pub fn rhs(&self, phi: &[f64]) -> Vec<f64> {
        self.nonlinear(phi).iter().zip(&self.e).map(|(a, b)| a + b).collect()
    }

    /// Grid star norm `max_k |f_k| / ŵ(x_k)`.
    pub fn star_norm(&self, f: &[f64]) -> f64 {
        f.iter()
            .zip(&self.log_star)
            .map(|(v, lw)| if *v == 0.0 { 0.0 } else { (v.abs().ln() - lw).exp() })
            .fold(0.0, f64::max)
    }

    /// `max |−Δ_hφ − Ŵφ − Ê − N(φ) − Σ c χZ|`.
    pub fn nonlinear_residual(&self, phi: &[f64], c: &[f64]) -> f64 {
        max_abs(&self.solver.residual(phi, c, &self.rhs(phi)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorMode {
    FixedPoint,
    Newton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Newton stops once the discrete residual max-norm is below this.
    pub residual_tol: f64,
    /// Newton iterations per continuation stage.
    pub newton_steps: usize,
    /// Smallest continuation increment before giving up.
    pub min_continuation_step: f64,
    /// Switch to Newton after this many consecutive ratios above 0.9.
    pub stall_window: usize,
    pub newton_fallback: bool,
    /// Skip the fixed-point phase.
    pub newton_only: bool,
}

impl Default for CorrectOptions {
    fn default() -> Self {
        CorrectOptions {
            tol: 1e-10,
            max_iter: 50,
            residual_tol: 1e-9,
            newton_steps: 12,
            min_continuation_step: 1.0 / 64.0,
            stall_window: 3,
            newton_fallback: true,
            newton_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorResult {
    pub phi_final: Vec<f64>,
    pub c_final: Vec<f64>,
    /// `‖φ_{k+1} − φ_k‖_∞` per iteration (fixed-point steps, then Newton
    /// steps if the fallback ran).
    pub iterations: Vec<f64>,
    /// Ratios of consecutive increments.
    pub contraction: Vec<f64>,
    pub mode: CorrectorMode,
    pub converged: bool,
    pub nonlinear_residual: f64,
    pub orthogonality_residual: f64,
    pub phi_max: f64,
    /// Star norm of `Ê + N(φ_final)`.
    pub rhs_star_norm: f64,
    /// `γ_i |c_ij| / ‖Ê + N(φ)‖_*`, column order.
    pub normalized_multipliers: Vec<f64>,
    pub grid_n: usize,
}

fn increment(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Damped Newton for `(−Δ_h − Ŵ)φ − Bc = sÊ + N(φ)`, `Bᵀφ = 0` from
/// `(phi, c)`; steps are halved until the residual 2-norm decreases.
/// Converged when a full step is below `tol` or the residual max-norm is
/// below `residual_tol`.
fn newton_at(
    op: &Operator,
    s: f64,
    mut phi: Vec<f64>,
    mut c: Vec<f64>,
    opts: &CorrectOptions,
    max_iter: usize,
    trace: &mut Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let residual = |phi: &[f64], c: &[f64]| -> Vec<f64> {
        let rhs: Vec<f64> = op.nonlinear(phi).iter().zip(&op.e).map(|(n, e)| n + s * e).collect();
        op.solver.residual(phi, c, &rhs)
    };
    let mut f = residual(&phi, &c);
    let mut f_norm = dot(&f, &f).sqrt();
    for _ in 0..max_iter {
        if max_abs(&f) <= opts.residual_tol {
            return Ok((phi, c, true));
        }
        let diag: Vec<f64> = op.w.iter().zip(&phi).map(|(w, p)| w * p.exp()).collect();
        let jac = ProjectedSolver::new(&op.grid, &op.laplacian, diag, op.columns.clone())?;
        let step = jac.solve_projected(&f.iter().map(|v| -v).collect::<Vec<_>>())?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = phi.iter().zip(&step.phi).map(|(a, b)| a + lambda * b).collect();
            let trial_c: Vec<f64> = c.iter().zip(&step.c).map(|(a, b)| a + lambda * b).collect();
            let ft = residual(&trial, &trial_c);
            let ft_norm = dot(&ft, &ft).sqrt();
            if ft_norm.is_finite() && (ft_norm < f_norm || ft_norm == 0.0) {
                accepted = Some((trial, trial_c, ft, ft_norm));
                break;
            }
            lambda *= 0.5;
        }
        let Some((p, cc, ft, ft_norm)) = accepted else {
            return Ok((phi, c, max_abs(&f) <= opts.residual_tol));
        };
        let inc = lambda * max_abs(&step.phi);
        trace.push(inc);
        phi = p;
        c = cc;
        f = ft;
        f_norm = ft_norm;
        if lambda == 1.0 && inc < opts.tol {
            return Ok((phi, c, true));
        }
    }
    Ok((phi, c, max_abs(&f) <= opts.residual_tol))
}

/// Newton with continuation in the scale `s` of `Ê`, from the trivial
/// solution at `s = 0`: the full step `s = 1` is tried first and the
/// increment halved after each failure.
fn newton_continuation(op: &Operator, opts: &CorrectOptions, trace: &mut Vec<f64>) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    let mut phi = vec![0.0; op.grid.len()];
    let mut c = vec![0.0; op.columns.len()];
    let mut s = 0.0;
    let mut ds = 1.0_f64;
    while s < 1.0 {
        let target = (s + ds).min(1.0);
        let (p, cc, ok) = newton_at(op, target, phi.clone(), c.clone(), opts, opts.newton_steps, trace)?;
        if ok {
            phi = p;
            c = cc;
            s = target;
            ds *= 2.0;
        } else {
            ds *= 0.5;
            if ds < opts.min_continuation_step {
                return Ok((phi, c, false));
            }
        }
    }
    Ok((phi, c, true))
}

/// `φ_{k+1} = T(Ê + N(φ_k))` from `φ₀ = 0` until the increment drops below
/// `tol`; falls back to Newton when the iteration stalls or diverges.
pub fn fixed_point_correct(op: &Operator, opts: &CorrectOptions) -> Result<CorrectorResult> {
    let mut phi = vec![0.0; op.grid.len()];
    let mut c = vec![0.0; op.columns.len()];
    let mut iterations: Vec<f64> = Vec::new();
    let mut contraction = Vec::new();
    let mut converged = false;
    let mut mode = CorrectorMode::FixedPoint;
    let mut stalled = 0;
    let mut floor = f64::INFINITY;
    if !opts.newton_only {
        for _ in 0..opts.max_iter {
            let step = match op.solve_projected(&op.rhs(&phi)) {
                Ok(step) => step,
                Err(_) => {
                    iterations.push(f64::INFINITY);
                    break;
                }
            };
            let inc = increment(&step.phi, &phi);
            if let Some(&prev) = iterations.last() {
                let ratio = inc / prev;
                contraction.push(ratio);
                stalled = if ratio > 0.9 || !ratio.is_finite() { stalled + 1 } else { 0 };
            }
            iterations.push(inc);
            phi = step.phi;
            c = step.c;
            if inc < opts.tol {
                // keep iterating until the residual reaches its tolerance or
                // stops improving (round-off floor)
                let res = op.nonlinear_residual(&phi, &c);
                if res <= opts.residual_tol || res >= 0.5 * floor {
                    converged = true;
                    break;
                }
                floor = floor.min(res);
            }
            if !inc.is_finite() || stalled >= opts.stall_window {
                break;
            }
        }
    }
    if !converged && (opts.newton_fallback || opts.newton_only) {
        mode = CorrectorMode::Newton;
        let diverged = iterations.last().is_some_and(|v| !v.is_finite())
            || iterations.len() > 1 && iterations[iterations.len() - 1] > iterations[0];
        let (start, start_c) = if !diverged && phi.iter().all(|v| v.is_finite()) {
            (phi.clone(), c.clone())
        } else {
            (vec![0.0; op.grid.len()], vec![0.0; op.columns.len()])
        };
        let (p, cc, ok) = match newton_at(op, 1.0, start, start_c, opts, opts.newton_steps, &mut iterations)? {
            (_, _, false) => newton_continuation(op, opts, &mut iterations)?,
            done => done,
        };
        phi = p;
        c = cc;
        converged = ok;
    }
    if !converged {
        return Err(Error::Solver {
            reason: format!("corrector did not converge in {} iterations", iterations.len()),
            history: iterations,
        });
    }
    let rhs = op.rhs(&phi);
    let rhs_star_norm = op.star_norm(&rhs);
    let phi_norm = dot(&phi, &phi).sqrt();
    let orthogonality_residual = op
        .columns
        .iter()
        .map(|b| {
            let bn = dot(b, b).sqrt();
            if phi_norm == 0.0 || bn == 0.0 {
                0.0
            } else {
                dot(b, &phi).abs() / (bn * phi_norm)
            }
        })
        .fold(0.0, f64::max);
    Ok(CorrectorResult {
        nonlinear_residual: op.nonlinear_residual(&phi, &c),
        orthogonality_residual,
        phi_max: max_abs(&phi),
        normalized_multipliers: c
            .iter()
            .zip(&op.column_gamma)
            .map(|(ci, g)| g * ci.abs() / rhs_star_norm)
            .collect(),
        rhs_star_norm,
        phi_final: phi,
        c_final: c,
        iterations,
        contraction,
        mode,
        converged,
        grid_n: op.grid.n,
    })
}

/// Convenience: configuration, ansatz, grid, operator and corrector for
/// centers `xi`.
pub fn correct_at(spec: &ProblemSpec, xi: &[Point], grid_n: usize, opts: &CorrectOptions) -> Result<(Operator, CorrectorResult)> {
    let dom = DiskDomain;
    let cfg = build_config(spec, xi, &dom)?;
    let fields = AnsatzFields::new(spec, &cfg, &dom)?;
    let op = assemble(&fields, Grid::new(grid_n)?)?;
    let res = fixed_point_correct(&op, opts)?;
    Ok((op, res))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSample {
    pub xi: Vec<Point>,
    pub c: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Largest normalized multiplier.
    pub max_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierCheck {
    pub at_star: MultiplierSample,
    /// Centers scaled about `p` by `1 − δ` and `1 + δ`.
    pub displaced: Vec<MultiplierSample>,
    /// Smallest displaced maximum over the maximum at the maximizer.
    pub ratio: f64,
}

/// Multipliers at `xi_star` and at the two configurations obtained by moving
/// every center radially by the fraction `delta` of its distance to `p`.
pub fn multiplier_check(
    spec: &ProblemSpec,
    xi_star: &[Point],
    grid_n: usize,
    delta: f64,
    opts: &CorrectOptions,
) -> Result<MultiplierCheck> {
    let sample = |xi: Vec<Point>| -> Result<MultiplierSample> {
        let (_, r) = correct_at(spec, &xi, grid_n, opts)?;
        Ok(MultiplierSample {
            max_normalized: r.normalized_multipliers.iter().cloned().fold(0.0, f64::max),
            normalized: r.normalized_multipliers,
            c: r.c_final,
            xi,
        })
    };
    let scaled = |s: f64| xi_star.iter().map(|&x| spec.p + (x - spec.p) * s).collect::<Vec<_>>();
    let at_star = sample(xi_star.to_vec())?;
    let displaced = vec![sample(scaled(1.0 - delta))?, sample(scaled(1.0 + delta))?];
    let ratio = displaced.iter().map(|d| d.max_normalized).fold(f64::INFINITY, f64::min) / at_star.max_normalized;
    Ok(MultiplierCheck {
        at_star,
        displaced,
        ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub mass: f64,
    /// `8π(m+1+α)`.
    pub target: f64,
    pub rel_err: f64,
    pub split: RegionSplit,
}

/// `∫ |x−p|^{2α} k e^{−tφ₁} e^{U+φ}` by quadrature, with `φ` interpolated
/// from the grid when a correction is given.
pub fn mass_quantization(
    fields: &AnsatzFields,
    correction: Option<(&Grid, &[f64])>,
    scheme: &QuadratureScheme,
) -> Result<MassReport> {
    let split = scheme.integrate_regions(|loc| {
        let phi = correction.map_or(0.0, |(g, f)| g.interpolate(f, loc.x));
        (fields.log_w_hat(*loc) + phi).exp()
    })?;
    let target = 8.0 * std::f64::consts::PI * (fields.cfg.m() as f64 + fields.cfg.kappa());
    Ok(MassReport {
        mass: split.total,
        target,
        rel_err: (split.total - target).abs() / target,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_avoids_origin_and_stays_inside() {
        let g = Grid::new(64).unwrap();
        assert!(g.nodes().iter().all(|p| p.norm() < 1.0 && p.norm() > 0.0));
        let area = g.len() as f64 * g.h * g.h;
        assert!((area - std::f64::consts::PI).abs() < 0.1);
    }

    #[test]
    fn stencil_annihilates_constants_at_regular_nodes() {
        let g = Grid::new(64).unwrap();
        let lap = Laplacian::new(&g);
        let out = lap.apply(&vec![1.0; g.len()]);
        for (k, row) in lap.rows.iter().enumerate() {
            if row.len() == 5 && row.iter().skip(1).all(|e| (e.1 + 1.0 / (g.h * g.h)).abs() < 1e-9) {
                assert!(out[k].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stencil_exact_on_quadratics_vanishing_on_circle() {
        // u = 1 − |x|² has −Δu = 4 and vanishes on the boundary; the
        // Shortley–Weller stencil is exact for it.
        let g = Grid::new(50).unwrap();
        let lap = Laplacian::new(&g);
        let u: Vec<f64> = g.nodes().iter().map(|p| 1.0 - p.norm_sq()).collect();
        let out = lap.apply(&u);
        assert!(out.iter().all(|v| (v - 4.0).abs() < 1e-8), "{}", max_abs(&out.iter().map(|v| v - 4.0).collect::<Vec<_>>()));
    }

    #[test]
    fn symmetric_away_from_boundary() {
        let g = Grid::new(40).unwrap();
        let lap = Laplacian::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_vec = || -> Vec<f64> {
            g.nodes().iter().map(|p| if p.norm() < 0.7 { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect()
        };
        let (u, v) = (rand_vec(), rand_vec());
        let a = dot(&lap.apply(&u), &v);
        let b = dot(&u, &lap.apply(&v));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn lowest_rayleigh_quotient_near_lambda1() {
        let g = Grid::new(128).unwrap();
        let lap = Laplacian::new(&g);
        let solver = ProjectedSolver::new(&g, &lap, vec![0.0; g.len()], Vec::new()).unwrap();
        let mut v = vec![1.0; g.len()];
        for _ in 0..30 {
            let w = solver.solve_plain(&v);
            let n = dot(&w, &w).sqrt();
            v = w.iter().map(|x| x / n).collect();
        }
        let rq = dot(&lap.apply(&v), &v) / dot(&v, &v);
        let lambda = DiskDomain.eigenpair().lambda1;
        assert!((rq - lambda).abs() < 0.02 * lambda, "{rq}");
    }

    #[test]
    fn maximum_principle_without_potential() {
        let g = Grid::new(96).unwrap();
        let lap = Laplacian::new(&g);
        let solver = ProjectedSolver::new(&g, &lap, vec![0.0; g.len()], Vec::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rhs: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let res = solver.solve_projected(&rhs).unwrap();
        assert!(res.phi.iter().all(|&v| v >= 0.0));
        assert!(res.linear_residual < 1e-10);
    }

    #[test]
    fn interpolation_reproduces_bilinear_fields() {
        let g = Grid::new(64).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|p| 2.0 + p.x - 3.0 * p.y + p.x * p.y).collect();
        let x = Point::new(0.123, -0.31);
        let exact = 2.0 + x.x - 3.0 * x.y + x.x * x.y;
        assert!((g.interpolate(&f, x) - exact).abs() < 1e-12);
    }
}
