//! Finite-volume simulation of the parabolic-elliptic chemotaxis system
//!
//! ```text
//! u_t = Δu - ∇·(u χ(v) ∇v),   0 = Δv - v + g(u)
//! ```
//!
//! with zero-flux boundaries on a rectangle.

pub mod elliptic;
pub mod experiments;
pub mod grid;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod simulation;

pub use elliptic::{check_elliptic_bounds, solve_helmholtz, EllipticSolveReport, Preconditioner};
pub use grid::{
    divergence, field_stats, gradient_energy, gradient_faces, integrate, laplacian_neumann, FaceFluxField,
    FieldStats, GridSpec, ScalarField,
};
pub use integrator::{adapt, SimState, StepController, Stepper, StepperOptions, TransportScheme};
pub use model::{
    chemotactic_flux, chi_eval, g_eval, validate_production, ModelParams, ProductionKind, ProductionLaw,
    SensitivityLaw,
};
pub use simulation::{
    confirm_blowup, init_u, init_v, run, DiagnosticsSample, OutcomeKind, RunOutcome, RunResult, SimConfig, SimError,
};
