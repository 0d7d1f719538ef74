//! Time stepping for the cell density.
//!
//! Each substep treats diffusion with backward Euler and the chemotactic
//! transport either explicitly (upwind flux from the old density) or
//! linearly implicitly (upwind flux of the new density in the frozen drift
//! field of the old signal). The signal is re-solved after every substep.
//! Step size is controlled by step doubling: one full step is compared
//! against two half steps and the half-step result is kept.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{EllipticError, Preconditioner, ShiftedSolver};
use crate::grid::{divergence_into, laplacian_into, FaceFluxField, GridSpec, ScalarField};
use crate::linalg::{gmres, FivePoint};
use crate::model::{drift_velocity, upwind_flux, ModelError, ModelParams};

pub const NEGATIVITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("numerical failure at t = {t:e} (dt = {dt:e}): {reason}")]
    NumericalFailure { t: f64, dt: f64, reason: String },
    #[error("invalid controller: {0}")]
    InvalidController(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepController {
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rtol: f64,
    pub cfl: f64,
    pub shrink: f64,
    pub grow: f64,
    pub safety: f64,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            dt: 1e-8,
            dt_min: 1e-14,
            dt_max: 1.0,
            rtol: 1e-4,
            cfl: 0.5,
            shrink: 0.5,
            grow: 1.25,
            safety: 0.9,
        }
    }
}

impl StepController {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: String| Err(IntegratorError::InvalidController(m));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt && self.dt <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt <= dt_max, got {} <= {} <= {}",
                self.dt_min, self.dt, self.dt_max
            ));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.rtol > 0.0 && self.rtol <= 0.1) {
            return bad(format!("rtol must lie in (0, 0.1], got {}", self.rtol));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0 && self.grow > 1.0 && self.safety > 0.0) {
            return bad("need 0 < shrink < 1 < grow and safety > 0".into());
        }
        Ok(())
    }
}

/// Step-size update after an attempted step.
pub fn adapt(ctrl: &StepController, accepted: bool, err_est: f64, cfl_dt: f64) -> StepController {
    let mut next = *ctrl;
    if accepted {
        let factor = if err_est > 0.0 {
            ctrl.grow.min(ctrl.safety * (ctrl.rtol / err_est).sqrt())
        } else {
            ctrl.grow
        };
        next.dt = ctrl.dt_max.min(cfl_dt).min(ctrl.dt * factor);
    } else {
        next.dt = ctrl.dt * ctrl.shrink;
    }
    next.dt = next.dt.max(ctrl.dt_min);
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportScheme {
    /// Forward-Euler upwind transport, CFL limited.
    Explicit,
    /// Upwind transport of the new density in the old drift field.
    #[default]
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperOptions {
    pub scheme: TransportScheme,
    pub elliptic_tol: f64,
    pub elliptic_max_iter: usize,
    pub preconditioner: Preconditioner,
    /// Relative residual for the density update solves.
    pub transport_tol: f64,
    pub transport_max_iter: usize,
    /// Denominator floor of the error estimate, as a fraction of the mean
    /// density.
    pub error_floor_fraction: f64,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            scheme: TransportScheme::SemiImplicit,
            elliptic_tol: 1e-10,
            elliptic_max_iter: 10_000,
            preconditioner: Preconditioner::Spectral,
            transport_tol: 1e-9,
            transport_max_iter: 5_000,
            error_floor_fraction: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub step_index: u64,
}

/// Why a step attempt was not accepted.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    ErrorTooLarge,
    NegativeDensity { min_u: f64 },
    SignalOutOfDomain(ModelError),
    Elliptic(EllipticError),
    TransportSolve { residual: f64 },
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::ErrorTooLarge => write!(f, "local error above tolerance"),
            Rejection::NegativeDensity { min_u } => write!(f, "negative density {min_u:e}"),
            Rejection::SignalOutOfDomain(e) => write!(f, "{e}"),
            Rejection::Elliptic(e) => write!(f, "{e}"),
            Rejection::TransportSolve { residual } => {
                write!(f, "density solve stalled at residual {residual:e}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// New state when accepted, otherwise the input state.
    pub state: SimState,
    pub accepted: bool,
    pub err_est: f64,
    /// Largest stable step for the next attempt (infinite when transport is
    /// implicit or the drift vanishes).
    pub cfl_dt: f64,
    /// `‖u_{n+1} - u_n‖∞` of the accepted step.
    pub increment: f64,
    pub rejection: Option<Rejection>,
}

/// Owns the per-grid solver workspaces for a run.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridSpec,
    params: ModelParams,
    opts: StepperOptions,
    solver: ShiftedSolver,
    scratch: Vec<f64>,
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn min_of(a: &[f64]) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}

impl Stepper {
    pub fn new(grid: GridSpec, params: ModelParams, opts: StepperOptions) -> Self {
        Self {
            grid,
            params,
            opts,
            solver: ShiftedSolver::new(grid, opts.preconditioner),
            scratch: vec![0.0; grid.len()],
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn options(&self) -> &StepperOptions {
        &self.opts
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Solves `(I - Δ_h) v = g(u)`; `guess` warm-starts the iteration.
    pub fn signal(&mut self, u: &ScalarField, guess: Option<&ScalarField>) -> Result<ScalarField, Rejection> {
        let linf = max_abs(u.values());
        let floor = -NEGATIVITY_SLACK * linf.max(1.0);
        let prod = self.params.production;
        let mut w = u.clone();
        for x in w.values_mut() {
            if !(*x >= floor) {
                return Err(Rejection::NegativeDensity { min_u: *x });
            }
            *x = prod.eval_unchecked(x.max(0.0));
        }
        let (v, _) = self
            .solver
            .solve_helmholtz(&w, self.opts.elliptic_tol, self.opts.elliptic_max_iter, guess)
            .map_err(Rejection::Elliptic)?;
        Ok(v)
    }

    /// Largest explicit step allowed by the advective Courant condition.
    pub fn cfl_dt(&self, cfl: f64, velocity: &FaceFluxField) -> f64 {
        if self.opts.scheme == TransportScheme::SemiImplicit {
            return f64::INFINITY;
        }
        let vmax = velocity.max_abs();
        if vmax == 0.0 {
            f64::INFINITY
        } else {
            cfl * self.grid.hx().min(self.grid.hy()) / vmax
        }
    }

    /// One uncontrolled substep of length `dt` from `(u, v)`; returns the new
    /// density (the signal is not updated).
    pub fn advance(&mut self, u: &ScalarField, v: &ScalarField, dt: f64) -> Result<ScalarField, Rejection> {
        let velocity = drift_velocity(v, &self.params.sensitivity).map_err(Rejection::SignalOutOfDomain)?;
        self.advance_with_velocity(u, &velocity, dt)
    }

    fn advance_with_velocity(
        &mut self,
        u: &ScalarField,
        velocity: &FaceFluxField,
        dt: f64,
    ) -> Result<ScalarField, Rejection> {
        let n = self.grid.len();
        let mut delta = vec![0.0; n];
        match self.opts.scheme {
            TransportScheme::Explicit => {
                // (I - dt Δ) δ = dt (Δu - div F)
                let flux = upwind_flux(u, velocity);
                let mut rhs = vec![0.0; n];
                divergence_into(&flux, &mut self.scratch);
                laplacian_into(&self.grid, u.values(), &mut rhs);
                for (r, d) in rhs.iter_mut().zip(&self.scratch) {
                    *r = dt * (*r - d);
                }
                self.solver
                    .solve_into(dt, &rhs, &mut delta, self.opts.transport_tol, self.opts.elliptic_max_iter)
                    .map_err(|e| match e {
                        EllipticError::NonConvergence { residual, .. } => Rejection::TransportSolve { residual },
                        other => Rejection::Elliptic(other),
                    })?;
            }
            TransportScheme::SemiImplicit => {
                let m = assemble_transport(&self.grid, velocity, dt);
                // M δ = u - M u
                m.apply(u.values(), &mut self.scratch);
                let rhs: Vec<f64> = u.values().iter().zip(&self.scratch).map(|(a, b)| a - b).collect();
                let stats = gmres(&m, &rhs, &mut delta, self.opts.transport_tol, self.opts.transport_max_iter);
                if !stats.converged {
                    return Err(Rejection::TransportSolve {
                        residual: stats.rel_residual,
                    });
                }
            }
        }
        let mut out = u.clone();
        for (o, d) in out.values_mut().iter_mut().zip(&delta) {
            *o += d;
        }
        Ok(out)
    }

    /// Error-controlled step. Rejections are reported in the outcome; once
    /// `dt` is already at `dt_min` a rejection becomes a numerical failure.
    pub fn step(&mut self, state: &SimState, ctrl: &StepController) -> Result<StepOutcome, IntegratorError> {
        let dt = ctrl.dt;
        match self.try_step(state, dt) {
            Ok((u_new, v_new, err_est)) if err_est <= ctrl.rtol => {
                let cfl_dt = self.cfl_for(ctrl.cfl, &v_new);
                let increment = u_new
                    .values()
                    .iter()
                    .zip(state.u.values())
                    .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
                Ok(StepOutcome {
                    state: SimState {
                        t: state.t + dt,
                        u: u_new,
                        v: v_new,
                        step_index: state.step_index + 1,
                    },
                    accepted: true,
                    err_est,
                    cfl_dt,
                    increment,
                    rejection: None,
                })
            }
            other => {
                let (err_est, rejection) = match other {
                    Ok((_, _, e)) => (e, Rejection::ErrorTooLarge),
                    Err(r) => (f64::INFINITY, r),
                };
                if dt <= ctrl.dt_min {
                    return Err(IntegratorError::NumericalFailure {
                        t: state.t,
                        dt,
                        reason: rejection.to_string(),
                    });
                }
                Ok(StepOutcome {
                    state: state.clone(),
                    accepted: false,
                    err_est,
                    cfl_dt: self.cfl_for(ctrl.cfl, &state.v),
                    increment: 0.0,
                    rejection: Some(rejection),
                })
            }
        }
    }

    /// Courant limit for the drift generated by `v`.
    pub fn cfl_for(&self, cfl: f64, v: &ScalarField) -> f64 {
        if self.opts.scheme == TransportScheme::SemiImplicit {
            return f64::INFINITY;
        }
        drift_velocity(v, &self.params.sensitivity)
            .map(|c| self.cfl_dt(cfl, &c))
            .unwrap_or(f64::INFINITY)
    }

    fn try_step(&mut self, state: &SimState, dt: f64) -> Result<(ScalarField, ScalarField, f64), Rejection> {
        let velocity =
            drift_velocity(&state.v, &self.params.sensitivity).map_err(Rejection::SignalOutOfDomain)?;
        let full = self.advance_with_velocity(&state.u, &velocity, dt)?;
        let half = self.advance_with_velocity(&state.u, &velocity, 0.5 * dt)?;
        check_positive(&half)?;
        let v_half = self.signal(&half, Some(&state.v))?;
        let two_half = self.advance(&half, &v_half, 0.5 * dt)?;
        check_positive(&two_half)?;
        let v_new = self.signal(&two_half, Some(&v_half))?;
        if let Some(&bad) = v_new.values().iter().find(|&&x| !self.params.sensitivity.in_domain(x)) {
            return Err(Rejection::SignalOutOfDomain(ModelError::DomainViolation {
                law: self.params.sensitivity.name(),
                value: bad,
            }));
        }
        let mean = state.u.values().iter().sum::<f64>() / state.u.values().len() as f64;
        let floor = self.opts.error_floor_fraction * mean.abs();
        let diff = full
            .values()
            .iter()
            .zip(two_half.values())
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        let err_est = diff / (max_abs(state.u.values()) + floor);
        if !err_est.is_finite() {
            return Err(Rejection::TransportSolve { residual: f64::NAN });
        }
        Ok((two_half, v_new, err_est))
    }
}

fn check_positive(u: &ScalarField) -> Result<(), Rejection> {
    let min_u = min_of(u.values());
    if !(min_u >= -NEGATIVITY_SLACK * max_abs(u.values())) {
        return Err(Rejection::NegativeDensity { min_u });
    }
    Ok(())
}

/// `I + dt K` where `K u = div(-∇u + u_up c)` with upwinded density in the
/// face velocity field `c`. Off-diagonals are nonpositive and every column
/// sums to one, so the matrix is an M-matrix that conserves mass.
pub fn assemble_transport(grid: &GridSpec, velocity: &FaceFluxField, dt: f64) -> FivePoint {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut m = FivePoint::identity(*grid);
    for j in 0..ny {
        for i in 1..nx {
            let c = velocity.x_face(i, j);
            let (l, r) = (grid.idx(i - 1, j), grid.idx(i, j));
            // face flux J = al u_l + ar u_r
            let al = 1.0 / hx + c.max(0.0);
            let ar = -1.0 / hx + c.min(0.0);
            let s = dt / hx;
            m.diag[l] += s * al;
            m.east[l] += s * ar;
            m.west[r] -= s * al;
            m.diag[r] -= s * ar;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = velocity.y_face(i, j);
            let (l, r) = (grid.idx(i, j - 1), grid.idx(i, j));
            let al = 1.0 / hy + c.max(0.0);
            let ar = -1.0 / hy + c.min(0.0);
            let s = dt / hy;
            m.diag[l] += s * al;
            m.north[l] += s * ar;
            m.south[r] -= s * al;
            m.diag[r] -= s * ar;
        }
    }
    m
}

/// Convenience wrapper building a stepper with default options.
pub fn step(
    state: &SimState,
    params: &ModelParams,
    ctrl: &StepController,
) -> Result<StepOutcome, IntegratorError> {
    Stepper::new(*state.u.grid(), *params, StepperOptions::default()).step(state, ctrl)
}
