//! Constitutive laws: chemotactic sensitivity `χ(v)`, signal production
//! `g(u)`, and the upwinded chemotactic face flux `u χ(v) ∇v`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{FaceFluxField, GridSpec, ScalarField};

/// Slack below zero tolerated for cell densities.
pub const POSITIVITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{law} is undefined at {value:e}")]
    DomainViolation { law: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SensitivityLaw {
    /// `χ(v) = chi`
    Constant { chi: f64 },
    /// `χ(v) = chi0 / v`
    #[serde(rename = "inverse")]
    Singular { chi0: f64 },
    /// `χ(v) = chi0 / v^k`, `k >= 1`
    #[serde(rename = "inverse_power")]
    PowerSingular { chi0: f64, k: f64 },
    /// `χ(v) = chi0 ln v`, defined for `v > 1`
    #[serde(rename = "log")]
    Logarithmic { chi0: f64 },
}

impl SensitivityLaw {
    pub fn name(&self) -> &'static str {
        match self {
            SensitivityLaw::Constant { .. } => "constant",
            SensitivityLaw::Singular { .. } => "inverse",
            SensitivityLaw::PowerSingular { .. } => "inverse_power",
            SensitivityLaw::Logarithmic { .. } => "log",
        }
    }

    /// Leading coefficient (`chi` or `chi0`).
    pub fn coefficient(&self) -> f64 {
        match *self {
            SensitivityLaw::Constant { chi } => chi,
            SensitivityLaw::Singular { chi0 }
            | SensitivityLaw::PowerSingular { chi0, .. }
            | SensitivityLaw::Logarithmic { chi0 } => chi0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let c = self.coefficient();
        if !(c > 0.0 && c.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "{} sensitivity coefficient must be positive, got {c}",
                self.name()
            )));
        }
        if let SensitivityLaw::PowerSingular { k, .. } = *self {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(ModelError::InvalidParameter(format!(
                    "inverse_power exponent must be >= 1, got {k}"
                )));
            }
        }
        Ok(())
    }

    /// Whether `v` lies in the open domain where `χ(v) > 0`.
    #[inline]
    pub fn in_domain(&self, v: f64) -> bool {
        match self {
            SensitivityLaw::Constant { .. } => v.is_finite(),
            SensitivityLaw::Singular { .. } | SensitivityLaw::PowerSingular { .. } => {
                v > 0.0 && v.is_finite()
            }
            SensitivityLaw::Logarithmic { .. } => v > 1.0 && v.is_finite(),
        }
    }

    pub fn chi(&self, v: f64) -> Result<f64, ModelError> {
        if !self.in_domain(v) {
            return Err(ModelError::DomainViolation {
                law: self.name(),
                value: v,
            });
        }
        Ok(match *self {
            SensitivityLaw::Constant { chi } => chi,
            SensitivityLaw::Singular { chi0 } => chi0 / v,
            SensitivityLaw::PowerSingular { chi0, k } => chi0 / v.powf(k),
            SensitivityLaw::Logarithmic { chi0 } => chi0 * v.ln(),
        })
    }
}

pub fn chi_eval(law: &SensitivityLaw, v: f64) -> Result<f64, ModelError> {
    law.chi(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ProductionKind {
    /// `g(u) = u`
    Linear,
    /// `g(u) = λ₂ (1 + u)^β`
    PowerShift { beta: f64 },
}

/// Signal production together with the bounds `λ₁ <= g(s) <= λ₂ (1 + s)^β`
/// it is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductionLaw {
    pub kind: ProductionKind,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl ProductionLaw {
    pub fn linear() -> Self {
        Self {
            kind: ProductionKind::Linear,
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    pub fn power_shift(beta: f64) -> Self {
        Self {
            kind: ProductionKind::PowerShift { beta },
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ProductionKind::Linear => "linear",
            ProductionKind::PowerShift { .. } => "power_shift",
        }
    }

    /// Growth exponent of the upper bound; 1 for linear production.
    pub fn bound_exponent(&self) -> f64 {
        match self.kind {
            ProductionKind::Linear => 1.0,
            ProductionKind::PowerShift { beta } => beta,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lambda1 > 0.0 && self.lambda1 <= self.lambda2 && self.lambda2.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "need 0 < lambda1 <= lambda2, got lambda1 = {}, lambda2 = {}",
                self.lambda1, self.lambda2
            )));
        }
        if let ProductionKind::PowerShift { beta } = self.kind {
            if !(0.0..=1.0).contains(&beta) {
                return Err(ModelError::InvalidParameter(format!(
                    "beta must lie in [0, 1], got {beta}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval_unchecked(&self, u: f64) -> f64 {
        match self.kind {
            ProductionKind::Linear => u,
            ProductionKind::PowerShift { beta } => self.lambda2 * (1.0 + u).powf(beta),
        }
    }

    pub fn g(&self, u: f64) -> Result<f64, ModelError> {
        if !(u >= -POSITIVITY_SLACK) || !u.is_finite() {
            return Err(ModelError::DomainViolation {
                law: self.name(),
                value: u,
            });
        }
        Ok(self.eval_unchecked(u.max(0.0)))
    }

    /// Applies `g` cellwise.
    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField, ModelError> {
        let mut out = u.clone();
        for x in out.values_mut() {
            *x = self.g(*x)?;
        }
        Ok(out)
    }

    /// `g'(u)`
    pub fn derivative(&self, u: f64) -> f64 {
        match self.kind {
            ProductionKind::Linear => 1.0,
            ProductionKind::PowerShift { beta } => self.lambda2 * beta * (1.0 + u).powf(beta - 1.0),
        }
    }
}

pub fn g_eval(law: &ProductionLaw, u: f64) -> Result<f64, ModelError> {
    law.g(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub s: f64,
    pub g: f64,
    pub side: BoundSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionReport {
    /// Every sample satisfies `λ₁ <= g(s) <= λ₂ (1 + s)^β`.
    pub bounds_hold: bool,
    /// The bounds hold and the exponent is at most 1/2, the range covered by
    /// the global boundedness result.
    pub within_boundedness_hypotheses: bool,
    pub violations: Vec<BoundViolation>,
}

/// Checks the production bounds at every sample point.
pub fn validate_production(law: &ProductionLaw, samples: &[f64]) -> ProductionReport {
    let beta = law.bound_exponent();
    let mut violations = Vec::new();
    for &s in samples {
        let g = law.eval_unchecked(s);
        if g < law.lambda1 {
            violations.push(BoundViolation { s, g, side: BoundSide::Lower });
        }
        let upper = law.lambda2 * (1.0 + s).powf(beta);
        if g > upper * (1.0 + 4.0 * f64::EPSILON) {
            violations.push(BoundViolation { s, g, side: BoundSide::Upper });
        }
    }
    let bounds_hold = violations.is_empty();
    ProductionReport {
        bounds_hold,
        within_boundedness_hypotheses: bounds_hold && beta <= 0.5,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sensitivity: SensitivityLaw,
    pub production: ProductionLaw,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.sensitivity.validate()?;
        self.production.validate()
    }
}

/// Face drift velocity `χ(v_face) ∂v`, with `v_face` the mean of the two
/// adjacent cells and `∂v` the central face difference. Boundary faces are
/// zero.
pub fn drift_velocity(v: &ScalarField, law: &SensitivityLaw) -> Result<FaceFluxField, ModelError> {
    let g = *v.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let vals = v.values();
    let mut out = FaceFluxField::zeros(g);
    let mut xs = vec![0.0; (nx + 1) * ny];
    let mut ys = vec![0.0; nx * (ny + 1)];
    for j in 0..ny {
        for i in 1..nx {
            let (a, b) = (vals[g.idx(i - 1, j)], vals[g.idx(i, j)]);
            let d = (b - a) / hx;
            xs[out.xi(i, j)] = if d == 0.0 {
                check_domain(law, a)?;
                check_domain(law, b)?;
                0.0
            } else {
                law.chi(0.5 * (a + b))? * d
            };
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (a, b) = (vals[g.idx(i, j - 1)], vals[g.idx(i, j)]);
            let d = (b - a) / hy;
            ys[out.yi(i, j)] = if d == 0.0 {
                check_domain(law, a)?;
                check_domain(law, b)?;
                0.0
            } else {
                law.chi(0.5 * (a + b))? * d
            };
        }
    }
    out.x_values_mut().copy_from_slice(&xs);
    out.y_values_mut().copy_from_slice(&ys);
    Ok(out)
}

fn check_domain(law: &SensitivityLaw, v: f64) -> Result<(), ModelError> {
    law.chi(v).map(|_| ())
}

/// Upwinded flux `u_up * c` for a given face velocity field `c`.
pub fn upwind_flux(u: &ScalarField, velocity: &FaceFluxField) -> FaceFluxField {
    let g: GridSpec = *u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let vals = u.values();
    let mut out = FaceFluxField::zeros(g);
    for j in 0..ny {
        for i in 1..nx {
            let k = out.xi(i, j);
            let c = velocity.x_values()[k];
            let up = if c >= 0.0 { vals[g.idx(i - 1, j)] } else { vals[g.idx(i, j)] };
            out.x_values_mut()[k] = up * c;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = out.yi(i, j);
            let c = velocity.y_values()[k];
            let up = if c >= 0.0 { vals[g.idx(i, j - 1)] } else { vals[g.idx(i, j)] };
            out.y_values_mut()[k] = up * c;
        }
    }
    out
}

/// Chemotactic face flux `u χ(v) ∇v` with `u` taken from the upwind cell.
pub fn chemotactic_flux(
    u: &ScalarField,
    v: &ScalarField,
    law: &SensitivityLaw,
) -> Result<FaceFluxField, ModelError> {
    if let Some(&bad) = u.values().iter().find(|&&x| !(x >= -POSITIVITY_SLACK)) {
        return Err(ModelError::DomainViolation {
            law: "cell density",
            value: bad,
        });
    }
    Ok(upwind_flux(u, &drift_velocity(v, law)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::divergence;

    #[test]
    fn chi_examples() {
        assert_eq!(chi_eval(&SensitivityLaw::Singular { chi0: 1e4 }, 100.0).unwrap(), 100.0);
        assert_eq!(chi_eval(&SensitivityLaw::Constant { chi: 1e3 }, -7.0).unwrap(), 1e3);
        let e = std::f64::consts::E;
        assert!((chi_eval(&SensitivityLaw::Logarithmic { chi0: 1.0 }, e).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            chi_eval(&SensitivityLaw::PowerSingular { chi0: 8.0, k: 3.0 }, 2.0).unwrap(),
            1.0
        );
    }

    #[test]
    fn chi_domain_violations() {
        assert!(SensitivityLaw::Singular { chi0: 1.0 }.chi(0.0).is_err());
        assert!(SensitivityLaw::PowerSingular { chi0: 1.0, k: 2.0 }.chi(-1.0).is_err());
        assert!(SensitivityLaw::Logarithmic { chi0: 1.0 }.chi(1.0).is_err());
        assert!(SensitivityLaw::Logarithmic { chi0: 1.0 }.chi(0.5).is_err());
        assert!(SensitivityLaw::Constant { chi: 1.0 }.chi(f64::NAN).is_err());
    }

    #[test]
    fn law_validation() {
        assert!(SensitivityLaw::Constant { chi: 0.0 }.validate().is_err());
        assert!(SensitivityLaw::PowerSingular { chi0: 1.0, k: 0.5 }.validate().is_err());
        assert!(SensitivityLaw::Logarithmic { chi0: 2.0 }.validate().is_ok());
        assert!(ProductionLaw::power_shift(1.5).validate().is_err());
        let mut p = ProductionLaw::power_shift(0.5);
        p.lambda1 = 2.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn g_examples() {
        assert_eq!(g_eval(&ProductionLaw::power_shift(0.5), 3.0).unwrap(), 2.0);
        assert_eq!(g_eval(&ProductionLaw::power_shift(0.0), 123.0).unwrap(), 1.0);
        assert_eq!(g_eval(&ProductionLaw::linear(), 10.0).unwrap(), 10.0);
        assert_eq!(g_eval(&ProductionLaw::linear(), -1e-13).unwrap(), 0.0);
        assert!(g_eval(&ProductionLaw::linear(), -1e-9).is_err());
    }

    #[test]
    fn production_validation_examples() {
        let sqrt = ProductionLaw::power_shift(0.5);
        let r = validate_production(&sqrt, &[0.0, 1.0, 1e6]);
        assert!(r.bounds_hold && r.within_boundedness_hypotheses);

        let lin = validate_production(&ProductionLaw::linear(), &[0.0]);
        assert!(!lin.bounds_hold);
        assert!(!lin.within_boundedness_hypotheses);
        assert_eq!(lin.violations[0].side, BoundSide::Lower);

        let dense: Vec<f64> = (0..=10_000).map(|k| k as f64 * 0.01).collect();
        assert!(validate_production(&ProductionLaw::power_shift(0.4), &dense).bounds_hold);

        let r = validate_production(&ProductionLaw::power_shift(0.7), &dense);
        assert!(r.bounds_hold && !r.within_boundedness_hypotheses);
    }

    fn g(nx: usize, ny: usize, lx: f64, ly: f64) -> GridSpec {
        GridSpec::new(nx, ny, lx, ly).unwrap()
    }

    #[test]
    fn flux_vanishes_for_flat_signal_or_empty_density() {
        let grid = g(6, 5, 0.1, 0.1);
        let law = SensitivityLaw::Singular { chi0: 1e4 };
        let u = ScalarField::from_fn(grid, |x, y| 1.0 + 100.0 * x * y);
        let flat = ScalarField::constant(grid, 3.0);
        assert_eq!(chemotactic_flux(&u, &flat, &law).unwrap().max_abs(), 0.0);
        let v = ScalarField::from_fn(grid, |x, y| 2.0 + x - y);
        let zero = ScalarField::zeros(grid);
        assert_eq!(chemotactic_flux(&zero, &v, &law).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn upwind_flux_two_cells() {
        let grid = g(2, 2, 2.0, 2.0);
        let u = ScalarField::from_vec(grid, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let v = ScalarField::from_vec(grid, vec![0.0, 2.0, 0.0, 2.0]).unwrap();
        let flux = chemotactic_flux(&u, &v, &SensitivityLaw::Constant { chi: 1.0 }).unwrap();
        assert_eq!(flux.x_face(1, 0), 2.0);
        assert!(flux.has_zero_boundary());
        // the transport tendency -div F moves density toward higher signal
        let tendency = divergence(&flux).map(|x| -x);
        assert_eq!(tendency.at(0, 0), -2.0);
        assert_eq!(tendency.at(1, 0), 2.0);
    }

    #[test]
    fn upwind_picks_the_outflow_cell() {
        let grid = g(2, 2, 2.0, 2.0);
        let u = ScalarField::from_vec(grid, vec![1.0, 5.0, 1.0, 5.0]).unwrap();
        let v = ScalarField::from_vec(grid, vec![2.0, 0.0, 2.0, 0.0]).unwrap();
        let flux = chemotactic_flux(&u, &v, &SensitivityLaw::Constant { chi: 1.0 }).unwrap();
        // flow in -x: leaves cell 1 (u = 5)
        assert_eq!(flux.x_face(1, 0), -10.0);
    }

    #[test]
    fn flux_propagates_domain_violation() {
        let grid = g(3, 3, 1.0, 1.0);
        let u = ScalarField::constant(grid, 1.0);
        let v = ScalarField::from_fn(grid, |x, _| 0.5 + x);
        assert!(matches!(
            chemotactic_flux(&u, &v, &SensitivityLaw::Logarithmic { chi0: 1.0 }),
            Err(ModelError::DomainViolation { .. })
        ));
        let neg = ScalarField::constant(grid, -1e-6);
        assert!(chemotactic_flux(&neg, &v, &SensitivityLaw::Constant { chi: 1.0 }).is_err());
    }
}
