//! The quasi-static signal equation `(I - Δ_h) v = w` under discrete
//! Neumann conditions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{field_stats, GridSpec, ScalarField};
use crate::linalg::{apply_shifted, conjugate_gradient, shifted_norm_inf, SpectralInverse};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("conjugate gradients did not converge: residual {residual:.3e} > {tol:.3e} after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("invalid solver argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticSolveReport {
    pub iterations: usize,
    pub final_residual_rel: f64,
    pub min_v: f64,
    pub max_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    #[default]
    None,
    /// Diagonal scaling.
    Jacobi,
    /// Exact cosine-transform inverse of the constant-coefficient operator.
    Spectral,
}

/// Reusable solver for `(I - a Δ_h) x = b` on a fixed grid.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    grid: GridSpec,
    preconditioner: Preconditioner,
    spectral: Option<SpectralInverse>,
}

impl ShiftedSolver {
    pub fn new(grid: GridSpec, preconditioner: Preconditioner) -> Self {
        let spectral = match preconditioner {
            Preconditioner::Spectral => Some(SpectralInverse::new(grid)),
            _ => None,
        };
        Self {
            grid,
            preconditioner,
            spectral,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn preconditioner(&self) -> Preconditioner {
        self.preconditioner
    }

    /// Solves in place: `x` carries the initial guess in and the solution
    /// out.
    pub fn solve_into(
        &mut self,
        a: f64,
        b: &[f64],
        x: &mut [f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<usize, EllipticError> {
        let grid = self.grid;
        let diag = 1.0 + a * 2.0 * (1.0 / (grid.hx() * grid.hx()) + 1.0 / (grid.hy() * grid.hy()));
        let norm_a = shifted_norm_inf(&grid, a);
        let stats = match (&mut self.spectral, self.preconditioner) {
            (Some(inv), _) => conjugate_gradient(
                |p, q| apply_shifted(&grid, a, p, q),
                |r, z| inv.solve(a, r, z),
                norm_a,
                b,
                x,
                tol,
                max_iter,
            ),
            (None, Preconditioner::Jacobi) => conjugate_gradient(
                |p, q| apply_shifted(&grid, a, p, q),
                |r, z| {
                    // boundary rows have fewer neighbors
                    jacobi(&grid, a, diag, r, z)
                },
                norm_a,
                b,
                x,
                tol,
                max_iter,
            ),
            (None, _) => conjugate_gradient(
                |p, q| apply_shifted(&grid, a, p, q),
                |r, z| z.copy_from_slice(r),
                norm_a,
                b,
                x,
                tol,
                max_iter,
            ),
        };
        if stats.converged {
            Ok(stats.iterations)
        } else {
            Err(EllipticError::NonConvergence {
                iterations: stats.iterations,
                residual: stats.rel_residual,
                tol,
            })
        }
    }

    /// Solves `(I - Δ_h) v = w`, warm-starting from `initial_guess` when
    /// given and from `w` otherwise.
    pub fn solve_helmholtz(
        &mut self,
        w: &ScalarField,
        tol: f64,
        max_iter: usize,
        initial_guess: Option<&ScalarField>,
    ) -> Result<(ScalarField, EllipticSolveReport), EllipticError> {
        check_args(tol, max_iter)?;
        if w.grid() != &self.grid {
            return Err(EllipticError::InvalidArgument(
                "right-hand side lives on a different grid".into(),
            ));
        }
        let mut v = initial_guess.unwrap_or(w).clone();
        let iterations = self.solve_into(1.0, w.values(), v.values_mut(), tol, max_iter)?;
        let mut r = vec![0.0; w.values().len()];
        apply_shifted(&self.grid, 1.0, v.values(), &mut r);
        let stats = field_stats(&v);
        let report = EllipticSolveReport {
            iterations,
            final_residual_rel: relative_residual(w.values(), &r),
            min_v: stats.min,
            max_v: stats.max,
        };
        Ok((v, report))
    }
}

fn jacobi(grid: &GridSpec, a: f64, interior_diag: f64, r: &[f64], z: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (cx, cy) = (a / (grid.hx() * grid.hx()), a / (grid.hy() * grid.hy()));
    for j in 0..ny {
        for i in 0..nx {
            let mut d = interior_diag;
            if i == 0 || i + 1 == nx {
                d -= cx;
            }
            if j == 0 || j + 1 == ny {
                d -= cy;
            }
            let k = j * nx + i;
            z[k] = r[k] / d;
        }
    }
}

fn relative_residual(b: &[f64], ax: &[f64]) -> f64 {
    let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if bn == 0.0 {
        return 0.0;
    }
    b.iter()
        .zip(ax)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
        / bn
}

fn check_args(tol: f64, max_iter: usize) -> Result<(), EllipticError> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(EllipticError::InvalidArgument(format!(
            "tolerance {tol} outside (0, 1e-2]"
        )));
    }
    if max_iter == 0 {
        return Err(EllipticError::InvalidArgument("max_iter must be at least 1".into()));
    }
    Ok(())
}

/// One-shot unpreconditioned solve of `(I - Δ_h) v = w`.
pub fn solve_helmholtz(
    w: &ScalarField,
    tol: f64,
    max_iter: usize,
) -> Result<(ScalarField, EllipticSolveReport), EllipticError> {
    ShiftedSolver::new(*w.grid(), Preconditioner::None).solve_helmholtz(w, tol, max_iter, None)
}

/// Discrete maximum principle: `min w - slack <= v <= max w + slack` with
/// `slack = 10 tol ‖w‖∞`.
pub fn check_elliptic_bounds(v: &ScalarField, w: &ScalarField, tol: f64) -> bool {
    let ws = field_stats(w);
    let slack = 10.0 * tol * ws.linf;
    v.values()
        .iter()
        .all(|&x| x >= ws.min - slack && x <= ws.max + slack)
}
