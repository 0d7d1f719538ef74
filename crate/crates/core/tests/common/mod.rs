//! Checks shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use chemotaxis_core::elliptic::{Preconditioner, ShiftedSolver};
use chemotaxis_core::grid::{divergence, integrate, laplacian_neumann, GridSpec, ScalarField};
use chemotaxis_core::integrator::{SimState, StepController, Stepper, StepperOptions, TransportScheme};
use chemotaxis_core::model::{chemotactic_flux, ModelParams, ProductionLaw, SensitivityLaw};
use chemotaxis_core::{check_elliptic_bounds, init_u};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PI: f64 = std::f64::consts::PI;

/// A random transport-step setup: grid, parameters, density and step.
#[derive(Debug, Clone)]
pub struct StepCase {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub u: ScalarField,
    pub dt: f64,
}

pub fn random_step_case(seed: u64) -> StepCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = 4 + (rng.random::<f64>() * 28.0) as usize;
    let ny = 4 + (rng.random::<f64>() * 28.0) as usize;
    let lx = 0.05 + 0.1 * rng.random::<f64>();
    let ly = 0.05 + 0.1 * rng.random::<f64>();
    let grid = GridSpec::new(nx, ny, lx, ly).unwrap();
    let chi = 10f64.powf(1.0 + 3.0 * rng.random::<f64>());
    let beta = rng.random::<f64>();
    let sensitivity = match (rng.random::<f64>() * 4.0) as u32 {
        0 => SensitivityLaw::Constant { chi },
        1 => SensitivityLaw::Singular { chi0: chi },
        2 => SensitivityLaw::PowerSingular {
            chi0: chi,
            k: 1.0 + 2.0 * rng.random::<f64>(),
        },
        _ => SensitivityLaw::Logarithmic { chi0: chi },
    };
    let production = if rng.random::<f64>() < 0.2 && !matches!(sensitivity, SensitivityLaw::Logarithmic { .. }) {
        ProductionLaw::linear()
    } else {
        ProductionLaw::power_shift(beta)
    };
    let u_bar = 10f64.powf(2.0 * rng.random::<f64>());
    let u = init_u(&grid, u_bar, u_bar * rng.random::<f64>(), rng.random::<u64>());
    let dt = 10f64.powf(-8.0 + 6.0 * rng.random::<f64>());
    StepCase {
        grid,
        params: ModelParams { sensitivity, production },
        u,
        dt,
    }
}

/// Relative mass change of one transport update and, when accepted, of one
/// error-controlled step.
pub fn mass_defects(case: &StepCase) -> Vec<f64> {
    let mut stepper = Stepper::new(case.grid, case.params, StepperOptions::default());
    let v = stepper.signal(&case.u, None).expect("signal solve");
    let m0 = integrate(&case.u);
    let mut out = Vec::new();
    let u1 = stepper.advance(&case.u, &v, case.dt).expect("transport update");
    out.push((integrate(&u1) - m0).abs() / m0);
    let state = SimState {
        t: 0.0,
        u: case.u.clone(),
        v,
        step_index: 0,
    };
    let ctrl = StepController {
        dt: case.dt,
        ..StepController::default()
    };
    if let Ok(o) = stepper.step(&state, &ctrl) {
        if o.accepted {
            out.push((integrate(&o.state.u) - m0).abs() / m0);
        }
    }
    out
}

/// Random nonnegative right-hand side on a random grid.
pub fn random_rhs(seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4 + (rng.random::<f64>() * 40.0) as usize;
    let m = 4 + (rng.random::<f64>() * 40.0) as usize;
    let grid = GridSpec::new(n, m, 0.1, 0.05 + 0.1 * rng.random::<f64>()).unwrap();
    let scale = 10f64.powf(4.0 * rng.random::<f64>() - 1.0);
    let sparse = rng.random::<f64>() < 0.3;
    let values = (0..grid.len())
        .map(|_| {
            let x: f64 = rng.random();
            if sparse && x < 0.9 {
                0.0
            } else {
                scale * x
            }
        })
        .collect();
    ScalarField::from_vec(grid, values).unwrap()
}

pub fn elliptic_max_principle(w: &ScalarField, tol: f64) -> bool {
    let mut solver = ShiftedSolver::new(*w.grid(), Preconditioner::Spectral);
    let (v, _) = solver.solve_helmholtz(w, tol, 10_000, None).expect("solve");
    check_elliptic_bounds(&v, w, tol)
}

/// Max-norm error of the solution recovered from a manufactured right-hand
/// side `w = (I - Δ_h) v*`, plus the reported relative residual.
pub fn manufactured_elliptic(n: usize, pc: Preconditioner, tol: f64) -> (f64, f64) {
    let g = GridSpec::square(n, 0.1).unwrap();
    let exact = ScalarField::from_fn(g, |x, y| {
        2.0 + (PI * x / 0.1).cos() * (3.0 * PI * y / 0.1).cos() + 0.5 * (2.0 * PI * x / 0.1).cos()
    });
    let lap = laplacian_neumann(&exact);
    let w = ScalarField::from_vec(g, exact.values().iter().zip(lap.values()).map(|(a, b)| a - b).collect()).unwrap();
    let mut solver = ShiftedSolver::new(g, pc);
    let (v, report) = solver.solve_helmholtz(&w, tol, 20_000, None).expect("solve");
    let err = v
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (err, report.final_residual_rel)
}

/// Whether one controlled step leaves a homogeneous state `(ū, g(ū))`
/// unchanged to rounding.
pub fn homogeneous_fixed_point(params: ModelParams, u_bar: f64, n: usize, dt: f64) -> bool {
    let g = GridSpec::square(n, 0.1).unwrap();
    let u = ScalarField::constant(g, u_bar);
    let mut stepper = Stepper::new(g, params, StepperOptions::default());
    let v = stepper.signal(&u, None).unwrap();
    let vs = params.production.g(u_bar).unwrap();
    if v.values().iter().any(|&x| (x - vs).abs() > 1e-12 * vs) {
        return false;
    }
    let state = SimState { t: 0.0, u, v, step_index: 0 };
    let ctrl = StepController {
        dt,
        ..StepController::default()
    };
    let o = stepper.step(&state, &ctrl).unwrap();
    o.accepted
        && o.state
            .u
            .values()
            .iter()
            .all(|&x| (x - u_bar).abs() <= 1e-12 * u_bar)
}

/// L1 errors of the discrete chemotactic divergence against the exact
/// `∇·(u χ ∇v)` for smooth Neumann-compatible data, on `n = 16, 32, ...`.
pub fn chemotactic_divergence_errors(levels: &[usize]) -> Vec<f64> {
    let l = 0.1;
    let k = PI / l;
    let chi = 3.0;
    levels
        .iter()
        .map(|&n| {
            let g = GridSpec::square(n, l).unwrap();
            let u = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * (k * x).cos() * (k * y).cos());
            let v = ScalarField::from_fn(g, |x, y| 2.0 + (2.0 * k * x).cos() * (k * y).cos());
            let flux = chemotactic_flux(&u, &v, &SensitivityLaw::Constant { chi }).unwrap();
            let d = divergence(&flux);
            let exact = ScalarField::from_fn(g, |x, y| {
                let (cx, sx, cy, sy) = ((k * x).cos(), (k * x).sin(), (k * y).cos(), (k * y).sin());
                let (c2x, s2x) = ((2.0 * k * x).cos(), (2.0 * k * x).sin());
                let uu = 1.0 + 0.5 * cx * cy;
                let (ux, uy) = (-0.5 * k * sx * cy, -0.5 * k * cx * sy);
                let (vx, vy) = (-2.0 * k * s2x * cy, -k * c2x * sy);
                let lap_v = -5.0 * k * k * c2x * cy;
                chi * (ux * vx + uy * vy + uu * lap_v)
            });
            d.values()
                .iter()
                .zip(exact.values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * g.cell_area()
        })
        .collect()
}

/// Differences between fixed-step solutions with `steps`, `2 steps`, ...
/// over `[0, t_end]`.
pub fn temporal_differences(scheme: TransportScheme, step_counts: &[usize], t_end: f64) -> Vec<f64> {
    let g = GridSpec::square(32, 0.1).unwrap();
    let params = ModelParams {
        sensitivity: SensitivityLaw::Constant { chi: 300.0 },
        production: ProductionLaw::power_shift(0.5),
    };
    let k = PI / 0.1;
    let u0 = ScalarField::from_fn(g, |x, y| 2.0 + (k * x).cos() * (2.0 * k * y).cos());
    let sols: Vec<ScalarField> = step_counts
        .iter()
        .map(|&steps| {
            let opts = StepperOptions {
                scheme,
                ..StepperOptions::default()
            };
            let mut stepper = Stepper::new(g, params, opts);
            let dt = t_end / steps as f64;
            let mut u = u0.clone();
            for _ in 0..steps {
                let v = stepper.signal(&u, None).unwrap();
                u = stepper.advance(&u, &v, dt).unwrap();
            }
            u
        })
        .collect();
    sols.windows(2)
        .map(|w| {
            w[0].values()
                .iter()
                .zip(w[1].values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Observed orders `log2(e_k / e_{k+1})`.
pub fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
