//! Run lifecycle: noisy initial data, the adaptive time loop, diagnostics,
//! event detection and outcome classification.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::{self, EllipticError};
use crate::grid::{field_stats, gradient_energy, integrate, GridError, GridSpec, ScalarField};
use crate::integrator::{adapt, IntegratorError, Rejection, SimState, StepController, Stepper, StepperOptions};
use crate::model::{ModelError, ModelParams, ProductionLaw, SensitivityLaw};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("signal initialization failed: {0}")]
    Elliptic(#[from] EllipticError),
    #[error("blow-up confirmation needs a prior blow-up outcome, got {0}")]
    NotBlowUp(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub u_bar: f64,
    pub sigma: f64,
    pub seed: u64,
    pub t_end: f64,
    pub blowup_threshold: f64,
    /// Optional extra blow-up event: the run counts as collapsed once one
    /// cell holds this fraction of the total mass. Off by default.
    pub collapse_fraction: Option<f64>,
    /// Per unit time.
    pub steady_rel_tol: f64,
    /// Consecutive accepted steps below `steady_rel_tol`.
    pub steady_window: usize,
    pub heterogeneity_tol: f64,
    pub controller: StepController,
    pub stepper: StepperOptions,
    /// Record every `sample_stride`-th accepted step (the first and last
    /// states are always recorded).
    pub sample_stride: usize,
    pub max_steps: u64,
    pub dump_times: Vec<f64>,
    /// Grid doublings performed by [`confirm_blowup`].
    pub refine_rounds: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::square(64, 0.1).expect("valid default grid"),
            params: ModelParams {
                sensitivity: SensitivityLaw::Constant { chi: 1e3 },
                production: ProductionLaw::power_shift(0.5),
            },
            u_bar: 1.0,
            sigma: 1.0,
            seed: 1,
            t_end: 100.0,
            blowup_threshold: 1e10,
            collapse_fraction: None,
            steady_rel_tol: 1e-7,
            steady_window: 50,
            heterogeneity_tol: 1e-3,
            controller: StepController::default(),
            stepper: StepperOptions::default(),
            sample_stride: 1,
            max_steps: 2_000_000,
            dump_times: Vec::new(),
            refine_rounds: 2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        self.controller.validate()?;
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.u_bar > 0.0 && self.u_bar.is_finite()) {
            return bad("u_bar must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be nonnegative");
        }
        if !(self.t_end > 0.0) {
            return bad("t_end must be positive");
        }
        if !(self.blowup_threshold > 0.0) {
            return bad("blowup_threshold must be positive");
        }
        if matches!(self.collapse_fraction, Some(f) if !(f > 0.0 && f <= 1.0)) {
            return bad("collapse_fraction must lie in (0, 1]");
        }
        if !(self.steady_rel_tol > 0.0) || self.steady_window == 0 {
            return bad("steady_rel_tol and steady_window must be positive");
        }
        if !(self.heterogeneity_tol > 0.0) {
            return bad("heterogeneity_tol must be positive");
        }
        if self.sample_stride == 0 || self.max_steps == 0 {
            return bad("sample_stride and max_steps must be positive");
        }
        if !(self.stepper.elliptic_tol > 0.0 && self.stepper.elliptic_tol <= 1e-2) {
            return bad("elliptic tolerance must lie in (0, 1e-2]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSample {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub max_u: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub grad_energy: f64,
    pub err_est: f64,
}

impl DiagnosticsSample {
    pub const CSV_HEADER: &'static str = "t,dt,mass,max_u,min_u,min_v,max_v,grad_energy,err_est";

    pub fn measure(t: f64, dt: f64, err_est: f64, u: &ScalarField, v: &ScalarField) -> Self {
        let us = field_stats(u);
        let vs = field_stats(v);
        Self {
            t,
            dt,
            mass: integrate(u),
            max_u: us.max,
            min_u: us.min,
            min_v: vs.min,
            max_v: vs.max,
            grad_energy: gradient_energy(v),
            err_est,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:e}",
            self.t, self.dt, self.mass, self.max_u, self.min_u, self.min_v, self.max_v, self.grad_energy, self.err_est
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum OutcomeKind {
    SteadyHomogeneous,
    SteadyHeterogeneous,
    BlowUp { t_detect: f64, max_u: f64 },
    /// `homogeneous` carries the heterogeneity classification of the final
    /// state.
    HorizonReached { homogeneous: bool },
    NumericalFailure { reason: String },
}

impl OutcomeKind {
    pub fn label(&self) -> &'static str {
        match self {
            OutcomeKind::SteadyHomogeneous => "SteadyHomogeneous",
            OutcomeKind::SteadyHeterogeneous => "SteadyHeterogeneous",
            OutcomeKind::BlowUp { .. } => "BlowUp",
            OutcomeKind::HorizonReached { .. } => "HorizonReached",
            OutcomeKind::NumericalFailure { .. } => "NumericalFailure",
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, OutcomeKind::BlowUp { .. })
    }

    /// Whether the final state counts as spatially homogeneous. `None` for
    /// blow-up and failures.
    pub fn homogeneous(&self) -> Option<bool> {
        match self {
            OutcomeKind::SteadyHomogeneous => Some(true),
            OutcomeKind::SteadyHeterogeneous => Some(false),
            OutcomeKind::HorizonReached { homogeneous } => Some(*homogeneous),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub kind: OutcomeKind,
    pub final_sample: DiagnosticsSample,
    /// `(max u - min u) / mean u` of the final state.
    pub heterogeneity: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub t_requested: f64,
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub timeseries: Vec<DiagnosticsSample>,
    pub final_u: ScalarField,
    pub final_v: ScalarField,
    pub dumps: Vec<FieldDump>,
    pub wall_time: f64,
}

/// Noisy initial density `|ū + σ η|`, `η ~ U[-1/2, 1/2)`.
///
/// Each cell draws from a ChaCha8 stream selected by its row `j`, at a word
/// offset fixed by its column `i`, so the value of cell `(i, j)` depends on
/// `(seed, i, j)` only.
pub fn init_u(grid: &GridSpec, u_bar: f64, sigma: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny() {
        rng.set_stream(j as u64);
        for i in 0..grid.nx() {
            rng.set_word_pos(2 * i as u128);
            let eta: f64 = rng.random::<f64>() - 0.5;
            values.push((u_bar + sigma * eta).abs());
        }
    }
    ScalarField::from_vec(*grid, values).expect("length matches grid")
}

/// Initial signal from `-Δv₀ + v₀ = g(u₀)`.
pub fn init_v(u0: &ScalarField, params: &ModelParams) -> Result<ScalarField, SimError> {
    let w = params.production.apply(u0)?;
    let mut solver = elliptic::ShiftedSolver::new(*u0.grid(), elliptic::Preconditioner::Spectral);
    let (v, _) = solver.solve_helmholtz(&w, elliptic::DEFAULT_TOL, elliptic::DEFAULT_MAX_ITER, None)?;
    Ok(v)
}

fn heterogeneity(u: &ScalarField) -> f64 {
    let s = field_stats(u);
    if s.mean == 0.0 {
        0.0
    } else {
        (s.max - s.min) / s.mean
    }
}

/// Runs one simulation to an event or the time horizon. Failures are
/// reported inside the outcome.
pub fn run(config: &SimConfig) -> Result<RunResult, SimError> {
    config.validate()?;
    let started = Instant::now();
    let grid = config.grid;
    let u0 = init_u(&grid, config.u_bar, config.sigma, config.seed);
    let mut stepper = Stepper::new(grid, config.params, config.stepper);
    let v0 = stepper.signal(&u0, None).map_err(|r| match r {
        Rejection::Elliptic(e) => SimError::Elliptic(e),
        other => SimError::InvalidConfig(format!("initial signal: {other}")),
    })?;
    let mut state = SimState { t: 0.0, u: u0, v: v0, step_index: 0 };
    let mut ctrl = config.controller;
    if ctrl.dt > ctrl.dt_max {
        ctrl.dt = ctrl.dt_max;
    }

    let mass0 = integrate(&state.u);
    let floor = config.stepper.error_floor_fraction * mass0 / grid.area();
    // single-cell ceiling of a nonnegative density with this mass
    let collapse_level = config
        .collapse_fraction
        .map_or(f64::INFINITY, |f| f * mass0 / grid.cell_area());

    let mut timeseries = vec![DiagnosticsSample::measure(0.0, ctrl.dt, 0.0, &state.u, &state.v)];
    let mut dumps = Vec::new();
    let mut pending_dumps: Vec<f64> = config.dump_times.clone();
    pending_dumps.sort_by(|a, b| a.total_cmp(b));
    pending_dumps.reverse();
    take_dumps(&mut pending_dumps, &state, &mut dumps);

    let mut accepted_steps = 0u64;
    let mut rejected_steps = 0u64;
    let mut steady_count = 0usize;
    // consecutive accepted steps with rising max u
    let mut rising = 0usize;
    let mut last_max = field_stats(&state.u).max;
    let mut last_dt = ctrl.dt;
    let mut last_err = 0.0;

    let kind = loop {
        if state.t >= config.t_end * (1.0 - 1e-14) {
            break OutcomeKind::HorizonReached {
                homogeneous: heterogeneity(&state.u) < config.heterogeneity_tol,
            };
        }
        if accepted_steps + rejected_steps >= config.max_steps {
            break OutcomeKind::NumericalFailure {
                reason: format!("step budget of {} attempts exhausted at t = {:e}", config.max_steps, state.t),
            };
        }
        let mut attempt = ctrl;
        let remaining = config.t_end - state.t;
        if remaining < attempt.dt {
            attempt.dt = remaining.max(ctrl.dt_min);
        }
        let out = match stepper.step(&state, &attempt) {
            Ok(out) => out,
            Err(IntegratorError::NumericalFailure { t, reason, .. }) => {
                if rising > 0 && ctrl.dt <= ctrl.dt_min * (1.0 + 1e-12) {
                    break OutcomeKind::BlowUp { t_detect: t, max_u: last_max };
                }
                break OutcomeKind::NumericalFailure { reason };
            }
            Err(e) => return Err(e.into()),
        };
        ctrl = adapt(&attempt, out.accepted, out.err_est, out.cfl_dt);
        if !out.accepted {
            rejected_steps += 1;
            continue;
        }
        accepted_steps += 1;
        let u_prev_linf = field_stats(&state.u).linf;
        let dt = attempt.dt;
        state = out.state;
        last_dt = dt;
        last_err = out.err_est;

        let stats = field_stats(&state.u);
        if stats.max > last_max {
            rising += 1;
        } else {
            rising = 0;
        }
        last_max = stats.max;

        if accepted_steps % config.sample_stride as u64 == 0 {
            timeseries.push(DiagnosticsSample::measure(state.t, dt, out.err_est, &state.u, &state.v));
        }
        take_dumps(&mut pending_dumps, &state, &mut dumps);

        if stats.max >= config.blowup_threshold || stats.max >= collapse_level {
            break OutcomeKind::BlowUp {
                t_detect: state.t,
                max_u: stats.max,
            };
        }

        let rate = out.increment / (dt * (u_prev_linf + floor));
        if rate < config.steady_rel_tol {
            steady_count += 1;
        } else {
            steady_count = 0;
        }
        if steady_count >= config.steady_window {
            break if heterogeneity(&state.u) < config.heterogeneity_tol {
                OutcomeKind::SteadyHomogeneous
            } else {
                OutcomeKind::SteadyHeterogeneous
            };
        }
    };

    let final_sample = DiagnosticsSample::measure(state.t, last_dt, last_err, &state.u, &state.v);
    if timeseries.last().map(|s| s.t) != Some(state.t) {
        timeseries.push(final_sample);
    }
    Ok(RunResult {
        outcome: RunOutcome {
            heterogeneity: heterogeneity(&state.u),
            kind,
            final_sample,
            accepted_steps,
            rejected_steps,
        },
        timeseries,
        final_u: state.u,
        final_v: state.v,
        dumps,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

fn take_dumps(pending: &mut Vec<f64>, state: &SimState, dumps: &mut Vec<FieldDump>) {
    while let Some(&t_req) = pending.last() {
        if state.t < t_req {
            break;
        }
        pending.pop();
        dumps.push(FieldDump {
            t_requested: t_req,
            t: state.t,
            u: state.u.clone(),
            v: state.v.clone(),
        });
    }
}

#[derive(Debug, Clone)]
pub struct RefinementRound {
    pub grid: GridSpec,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone)]
pub struct BlowUpConfirmation {
    pub confirmed: bool,
    pub rounds: Vec<RefinementRound>,
}

impl BlowUpConfirmation {
    /// Outcome on the finest grid.
    pub fn refined_outcome(&self) -> &RunOutcome {
        &self.rounds.last().expect("at least one round").outcome
    }
}

/// Reruns a blown-up configuration on grids refined by 2 per direction per
/// round (with `rtol / 4` per round) and checks the blow-up persists with a
/// detection time within a factor 10 of the original.
pub fn confirm_blowup(config: &SimConfig, prior: &RunOutcome) -> Result<BlowUpConfirmation, SimError> {
    confirm_blowup_rounds(config, prior, config.refine_rounds)
}

pub fn confirm_blowup_rounds(
    config: &SimConfig,
    prior: &RunOutcome,
    rounds: usize,
) -> Result<BlowUpConfirmation, SimError> {
    let OutcomeKind::BlowUp { t_detect: t0, .. } = prior.kind else {
        return Err(SimError::NotBlowUp(prior.kind.label().to_string()));
    };
    let mut out = Vec::with_capacity(rounds);
    let mut confirmed = true;
    for r in 1..=rounds.max(1) {
        let mut refined = config.clone();
        refined.grid = config.grid.refined(1 << r);
        refined.controller.rtol = config.controller.rtol / 4f64.powi(r as i32);
        let result = run(&refined)?;
        confirmed &= match result.outcome.kind {
            OutcomeKind::BlowUp { t_detect, .. } => t_detect <= 10.0 * t0 && t_detect >= t0 / 10.0,
            _ => false,
        };
        out.push(RefinementRound {
            grid: refined.grid,
            outcome: result.outcome,
        });
        if !confirmed {
            break;
        }
    }
    Ok(BlowUpConfirmation { confirmed, rounds: out })
}
