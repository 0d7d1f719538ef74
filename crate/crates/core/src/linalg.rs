//! Krylov solvers and the structured-grid matrices they act on.
//!
//! Everything here works on flat row-major slices laid out like
//! [`ScalarField`](crate::grid::ScalarField) values.

use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::grid::{dot, laplacian_into, GridSpec};

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve. `rel_residual` is the recomputed true
/// residual `‖b - A x‖₂ / ‖b‖₂`, not the recursively updated one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

/// `(I - a Δ_h) x` with the Neumann five-point Laplacian.
pub fn apply_shifted(grid: &GridSpec, a: f64, x: &[f64], out: &mut [f64]) {
    laplacian_into(grid, x, out);
    for (o, &xi) in out.iter_mut().zip(x) {
        *o = xi - a * *o;
    }
}

/// Infinity-norm bound of `I - a Δ_h`.
pub fn shifted_norm_inf(grid: &GridSpec, a: f64) -> f64 {
    1.0 + a * 4.0 * (1.0 / (grid.hx() * grid.hx()) + 1.0 / (grid.hy() * grid.hy()))
}

/// Exact inverse of `I - a Δ_h` by diagonalization in the cosine basis.
///
/// The cell-centered Neumann Laplacian is diagonal in the DCT-II basis
/// with eigenvalues `-(4 / h²) sin²(π k / 2n)` per direction.
pub struct SpectralInverse {
    grid: GridSpec,
    dct_x: Arc<dyn TransformType2And3<f64>>,
    dct_y: Arc<dyn TransformType2And3<f64>>,
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
    scratch: Vec<f64>,
    column: Vec<f64>,
}

impl std::fmt::Debug for SpectralInverse {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralInverse").field("grid", &self.grid).finish()
    }
}

impl Clone for SpectralInverse {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid,
            dct_x: Arc::clone(&self.dct_x),
            dct_y: Arc::clone(&self.dct_y),
            eig_x: self.eig_x.clone(),
            eig_y: self.eig_y.clone(),
            scratch: self.scratch.clone(),
            column: self.column.clone(),
        }
    }
}

fn neumann_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

impl SpectralInverse {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = DctPlanner::new();
        let dct_x = planner.plan_dct2(grid.nx());
        let dct_y = planner.plan_dct2(grid.ny());
        let scratch_len = dct_x.get_scratch_len().max(dct_y.get_scratch_len());
        Self {
            grid,
            eig_x: neumann_eigenvalues(grid.nx(), grid.hx()),
            eig_y: neumann_eigenvalues(grid.ny(), grid.hy()),
            dct_x,
            dct_y,
            scratch: vec![0.0; scratch_len],
            column: vec![0.0; grid.ny()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Smallest nonzero eigenvalue of `-Δ_h`.
    pub fn first_eigenvalue(&self) -> f64 {
        self.eig_x[1].min(self.eig_y[1])
    }

    /// `out = (I - a Δ_h)^{-1} rhs`
    pub fn solve(&mut self, a: f64, rhs: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        out.copy_from_slice(rhs);
        for row in out.chunks_mut(nx) {
            self.dct_x.process_dct2_with_scratch(row, &mut self.scratch);
        }
        self.columns(out, true);
        for l in 0..ny {
            for k in 0..nx {
                out[l * nx + k] /= 1.0 + a * (self.eig_x[k] + self.eig_y[l]);
            }
        }
        self.columns(out, false);
        for row in out.chunks_mut(nx) {
            self.dct_x.process_dct3_with_scratch(row, &mut self.scratch);
        }
        let scale = 4.0 / (nx * ny) as f64;
        out.iter_mut().for_each(|x| *x *= scale);
    }

    fn columns(&mut self, data: &mut [f64], forward: bool) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        for i in 0..nx {
            for j in 0..ny {
                self.column[j] = data[j * nx + i];
            }
            if forward {
                self.dct_y
                    .process_dct2_with_scratch(&mut self.column, &mut self.scratch);
            } else {
                self.dct_y
                    .process_dct3_with_scratch(&mut self.column, &mut self.scratch);
            }
            for j in 0..ny {
                data[j * nx + i] = self.column[j];
            }
        }
    }
}

/// Preconditioned conjugate gradients for an SPD operator.
///
/// `x` holds the initial guess on entry and the iterate on exit. The
/// iteration restarts from the true residual whenever the recursive one
/// claims convergence that the true one does not confirm.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    norm_a: f64,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> SolveStats {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return SolveStats { iterations: 0, rel_residual: 0.0, converged: true };
    }
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;
    let mut restarts = 0;
    loop {
        apply(x, &mut q);
        for k in 0..n {
            r[k] = b[k] - q[k];
        }
        let true_rel = norm2(&r) / bnorm;
        let target = tol.max(rounding_floor(norm_a, x, bnorm));
        if true_rel <= target || iterations >= max_iter || restarts > MAX_RESTARTS {
            return SolveStats {
                iterations,
                rel_residual: true_rel,
                converged: true_rel <= target,
            };
        }
        restarts += 1;
        precond(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            if norm2(&r) / bnorm <= tol {
                break;
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
    }
}

const MAX_RESTARTS: usize = 8;

/// Relative residual below which `b - A x` is dominated by rounding in the
/// product `A x` itself.
fn rounding_floor(norm_a: f64, x: &[f64], bnorm: f64) -> f64 {
    f64::EPSILON * norm_a * norm2(x) / bnorm
}

/// Sparse matrix with the five-point structure of a cell-centered grid.
/// Neighbor coefficients that would point outside the grid are zero.
#[derive(Debug, Clone)]
pub struct FivePoint {
    grid: GridSpec,
    pub diag: Vec<f64>,
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    pub south: Vec<f64>,
    pub north: Vec<f64>,
}

impl FivePoint {
    pub fn identity(grid: GridSpec) -> Self {
        let n = grid.len();
        Self {
            grid,
            diag: vec![1.0; n],
            west: vec![0.0; n],
            east: vec![0.0; n],
            south: vec![0.0; n],
            north: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let mut s = self.diag[k] * x[k];
                if i > 0 {
                    s += self.west[k] * x[k - 1];
                }
                if i + 1 < nx {
                    s += self.east[k] * x[k + 1];
                }
                if j > 0 {
                    s += self.south[k] * x[k - nx];
                }
                if j + 1 < ny {
                    s += self.north[k] * x[k + nx];
                }
                out[k] = s;
            }
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.diag.len())
            .map(|k| {
                self.diag[k].abs() + self.west[k].abs() + self.east[k].abs() + self.south[k].abs() + self.north[k].abs()
            })
            .fold(0.0, f64::max)
    }

    /// Column sums; all ones for a mass-conserving implicit step.
    pub fn column_sums(&self) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut sums = self.diag.clone();
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if i > 0 {
                    sums[k - 1] += self.west[k];
                }
                if i + 1 < nx {
                    sums[k + 1] += self.east[k];
                }
                if j > 0 {
                    sums[k - nx] += self.south[k];
                }
                if j + 1 < ny {
                    sums[k + nx] += self.north[k];
                }
            }
        }
        sums
    }
}

/// Zero fill-in incomplete factorization `P = (L U)^T` of a [`FivePoint`]
/// matrix `M`, computed as a modified ILU(0) of `M^T`: dropped fill is
/// folded into the pivots so that `P` has the same column sums as `M`.
///
/// Consequently `sum(P^{-1} r) = sum(r)` whenever the columns of `M` sum
/// to one.
#[derive(Debug, Clone)]
pub struct ColumnMilu {
    pivots: Vec<f64>,
}

impl ColumnMilu {
    pub fn new(m: &FivePoint) -> Option<Self> {
        let nx = m.grid.nx();
        let n = m.diag.len();
        let mut pivots = m.diag.clone();
        for k in 0..n {
            let i = k % nx;
            if i > 0 {
                let p = pivots[k - 1];
                pivots[k] -= m.east[k - 1] * m.west[k] / p;
                if k - 1 + nx < n {
                    pivots[k] -= m.east[k - 1] * m.south[k - 1 + nx] / p;
                }
            }
            if k >= nx {
                let p = pivots[k - nx];
                pivots[k] -= m.north[k - nx] * m.south[k] / p;
                if i + 1 < nx {
                    pivots[k] -= m.north[k - nx] * m.west[k - nx + 1] / p;
                }
            }
            if !(pivots[k].is_finite() && pivots[k] != 0.0) {
                return None;
            }
        }
        Some(Self { pivots })
    }

    /// `out = P^{-1} r`
    pub fn solve(&self, m: &FivePoint, r: &[f64], out: &mut [f64]) {
        let nx = m.grid.nx();
        let n = r.len();
        // U^T y = r
        for k in 0..n {
            let mut s = r[k];
            if k % nx > 0 {
                s -= m.west[k] * out[k - 1];
            }
            if k >= nx {
                s -= m.south[k] * out[k - nx];
            }
            out[k] = s / self.pivots[k];
        }
        // L^T z = y
        for k in (0..n).rev() {
            let mut s = 0.0;
            if k % nx + 1 < nx {
                s += m.east[k] * out[k + 1];
            }
            if k + nx < n {
                s += m.north[k] * out[k + nx];
            }
            out[k] -= s / self.pivots[k];
        }
    }
}

const GMRES_RESTART: usize = 40;

/// Restarted GMRES for a nonsymmetric [`FivePoint`] system, right
/// preconditioned with [`ColumnMilu`]. `x` is the initial guess on entry.
///
/// For a matrix with unit column sums every correction added to `x` has
/// the same sum as the residual it was built from, so a zero-sum right-hand
/// side with a zero initial guess gives a zero-sum solution at any stopping
/// point.
pub fn gmres(m: &FivePoint, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> SolveStats {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return SolveStats { iterations: 0, rel_residual: 0.0, converged: true };
    }
    let norm_a = m.norm_inf();
    let Some(pc) = ColumnMilu::new(m) else {
        return SolveStats { iterations: 0, rel_residual: f64::INFINITY, converged: false };
    };
    let mm = GMRES_RESTART;
    let mut basis: Vec<Vec<f64>> = (0..=mm).map(|_| vec![0.0; n]).collect();
    let mut h = vec![vec![0.0; mm]; mm + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; mm], vec![0.0; mm], vec![0.0; mm + 1]);
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    let mut restarts = 0;
    loop {
        m.apply(x, &mut w);
        for k in 0..n {
            basis[0][k] = b[k] - w[k];
        }
        let beta = norm2(&basis[0]);
        let true_rel = beta / bnorm;
        let target = tol.max(rounding_floor(norm_a, x, bnorm));
        if true_rel <= target || iterations >= max_iter || restarts > MAX_RESTARTS + max_iter / mm {
            return SolveStats {
                iterations,
                rel_residual: true_rel,
                converged: true_rel <= target,
            };
        }
        restarts += 1;
        basis[0].iter_mut().for_each(|e| *e /= beta);
        g.iter_mut().for_each(|e| *e = 0.0);
        g[0] = beta;
        let mut used = 0;
        for j in 0..mm {
            if iterations >= max_iter {
                break;
            }
            iterations += 1;
            pc.solve(m, &basis[j], &mut z);
            m.apply(&z, &mut w);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                h[i][j] = hij;
                for k in 0..n {
                    w[k] -= hij * basis[i][k];
                }
            }
            let hn = norm2(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(hn);
            if d == 0.0 {
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = hn / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if hn == 0.0 || g[j + 1].abs() / bnorm <= tol {
                break;
            }
            for k in 0..n {
                basis[j + 1][k] = w[k] / hn;
            }
        }
        // back substitution, then x += P^{-1} V y
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        w.iter_mut().for_each(|e| *e = 0.0);
        for (i, yi) in y.iter().enumerate() {
            for k in 0..n {
                w[k] += yi * basis[i][k];
            }
        }
        pc.solve(m, &w, &mut z);
        for k in 0..n {
            x[k] += z[k];
        }
    }
}
