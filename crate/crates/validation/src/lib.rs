//! Figure-level checks run at desk scale (64x64, blow-up confirmation on
//! 128x128). Each check returns a [`Verdict`]; the `acceptance` test target
//! prints one line per verdict.

use std::fmt;

use chemotaxis_core::experiments::{homogeneity_transition, preset, run_sweep, summarize, BetaSummary, Experiment};
use chemotaxis_core::simulation::{confirm_blowup, run, OutcomeKind, RunResult, SimConfig, SimError};

#[derive(Debug, Clone)]
pub struct Verdict {
    pub criterion: u32,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {}: {tag} | {}", self.criterion, self.detail)
    }
}

/// Relative drop in final `max u` between neighboring β values still read
/// as non-decreasing.
pub const MONOTONE_SLACK: f64 = 1e-2;

/// Upper end of the `O(10^2)` branch in the fig4b jump.
pub const LOW_BRANCH_MAX: f64 = 1e3;

fn singles(name: &str) -> Result<Vec<SimConfig>, String> {
    let experiments = preset(name).map_err(|e| e.to_string())?;
    Ok(experiments
        .into_iter()
        .filter_map(|e| match e {
            Experiment::Single(c) => Some(c),
            Experiment::Sweep(_) => None,
        })
        .collect())
}

fn sweep_summary(name: &str) -> Result<Vec<BetaSummary>, String> {
    let experiments = preset(name).map_err(|e| e.to_string())?;
    let Some(Experiment::Sweep(spec)) = experiments.into_iter().next() else {
        return Err(format!("{name} is not a sweep"));
    };
    let rows = run_sweep(&spec, |_| {}).map_err(|e| e.to_string())?;
    Ok(summarize(&rows))
}

fn describe(r: &RunResult) -> String {
    format!(
        "{} t={:.3e} max_u={:.4e}",
        r.outcome.kind.label(),
        r.outcome.final_sample.t,
        r.outcome.final_sample.max_u
    )
}

fn verdict(criterion: u32, body: impl FnOnce() -> Result<(bool, String), String>) -> Verdict {
    match body() {
        Ok((pass, detail)) => Verdict {
            criterion,
            pass,
            detail,
        },
        Err(e) => Verdict {
            criterion,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn sim(c: &SimConfig) -> Result<RunResult, String> {
    run(c).map_err(|e: SimError| e.to_string())
}

/// Linear production, `(ū, χ)` in `{(1, 1e2), (1, 1e3), (10, 1e2)}`: steady
/// homogeneous with `|max u - ū| <= 1e-2 ū`.
pub fn criterion_1() -> Verdict {
    verdict(1, || {
        let configs = singles("fig1")?;
        let mut pass = true;
        let mut parts = Vec::new();
        for c in configs.iter().take(3) {
            let r = sim(c)?;
            let ok = r.outcome.kind == OutcomeKind::SteadyHomogeneous
                && (r.outcome.final_sample.max_u - c.u_bar).abs() <= 1e-2 * c.u_bar;
            pass &= ok;
            parts.push(format!(
                "(u_bar={}, chi={}) {}",
                c.u_bar,
                c.params.sensitivity.coefficient(),
                describe(&r)
            ));
        }
        Ok((pass, parts.join("; ")))
    })
}

/// Linear production, `ū = 10`, `χ = 1e3`: blow-up with `max u >= 1e10`
/// by `t = 1e-4`, confirmed on the refined grid.
pub fn criterion_2() -> Verdict {
    verdict(2, || {
        let mut c = singles("fig1")?.into_iter().nth(3).ok_or("fig1 has no blow-up case")?;
        c.refine_rounds = 1;
        let r = sim(&c)?;
        let mut detail = describe(&r);
        let (hit, t_ok) = match r.outcome.kind {
            OutcomeKind::BlowUp { t_detect, max_u } => (max_u >= 1e10, t_detect <= 1e-4),
            _ => (false, false),
        };
        let confirmed = if r.outcome.kind.is_blow_up() {
            let conf = confirm_blowup(&c, &r.outcome).map_err(|e| e.to_string())?;
            let n = conf.rounds.last().map_or(0, |x| x.grid.nx());
            let refined = conf.refined_outcome();
            detail.push_str(&format!(
                "; refined {n}x{n}: {} max_u={:.4e} (confirmed={})",
                refined.kind.label(),
                refined.final_sample.max_u,
                conf.confirmed
            ));
            conf.confirmed
        } else {
            detail.push_str("; no blow-up, confirmation not attempted");
            false
        };
        let cap = c.u_bar * c.grid.area() / c.grid.cell_area();
        detail.push_str(&format!("; single-cell mass ceiling {cap:.3e}"));
        Ok((hit && t_ok && confirmed, detail))
    })
}

/// `β = 1/2` runs stay bounded through `t = 100`, the last two end steady
/// heterogeneous, and every sample obeys the gradient-energy and signal
/// lower bounds.
pub fn criterion_3() -> Verdict {
    verdict(3, || {
        let mut pass = true;
        let mut parts = Vec::new();
        for (k, c) in singles("fig2")?.iter().enumerate() {
            let r = sim(c)?;
            let bounded = matches!(
                r.outcome.kind,
                OutcomeKind::SteadyHomogeneous | OutcomeKind::SteadyHeterogeneous | OutcomeKind::HorizonReached { .. }
            );
            let class_ok = k == 0 || r.outcome.kind == OutcomeKind::SteadyHeterogeneous;
            let area = c.grid.area();
            let worst_energy = r
                .timeseries
                .iter()
                .map(|s| s.grad_energy / (0.25 * (area + s.mass)))
                .fold(0.0, f64::max);
            let min_v = r.timeseries.iter().map(|s| s.min_v).fold(f64::INFINITY, f64::min);
            let ok = bounded && class_ok && worst_energy <= 1.0 && min_v >= 1.0 - 1e-6;
            pass &= ok;
            parts.push(format!(
                "({}) {} energy/bound<={worst_energy:.3} min_v={min_v:.6}",
                ['a', 'b', 'c'][k.min(2)],
                describe(&r)
            ));
        }
        Ok((pass, parts.join("; ")))
    })
}

/// Inverse and logarithmic sensitivity at `ū = 100`, `χ = 1e4`: both
/// bounded, with different heterogeneity classifications.
pub fn criterion_4() -> Verdict {
    verdict(4, || {
        let mut classes = Vec::new();
        let mut parts = Vec::new();
        for c in singles("fig3")? {
            let r = sim(&c)?;
            classes.push(r.outcome.kind.homogeneous());
            let class = match r.outcome.kind.homogeneous() {
                Some(true) => "homogeneous",
                Some(false) => "heterogeneous",
                None => "unbounded or failed",
            };
            parts.push(format!("{}: {} ({class})", c.params.sensitivity.name(), describe(&r)));
        }
        let pass = classes.len() == 2 && classes.iter().all(Option::is_some) && classes[0] != classes[1];
        Ok((pass, parts.join("; ")))
    })
}

/// Constant `χ = 1e3`, `ū = 10` sweep: homogeneous-to-heterogeneous switch
/// within 0.1 of `β = 0.4`, final `max u` non-decreasing in β on the
/// heterogeneous branch.
pub fn criterion_5() -> Verdict {
    verdict(5, || {
        let summary = sweep_summary("fig4a")?;
        let Some(b) = homogeneity_transition(&summary) else {
            return Ok((false, "no homogeneous -> heterogeneous transition".into()));
        };
        let bracket_ok = (b.beta_lo - 0.4).abs() <= 0.1 && (b.beta_hi - 0.4).abs() <= 0.1;
        let branch: Vec<&BetaSummary> = summary
            .iter()
            .filter(|s| s.beta >= b.beta_hi && s.homogeneous == Some(false))
            .collect();
        let drops: Vec<f64> = branch
            .windows(2)
            .filter(|w| w[1].median_max_u < w[0].median_max_u * (1.0 - MONOTONE_SLACK))
            .map(|w| w[1].beta)
            .collect();
        let detail = format!(
            "beta* in [{}, {}]; heterogeneous branch max_u {:.4e} .. {:.4e} over {} points; drops at {:?}",
            b.beta_lo,
            b.beta_hi,
            branch.first().map_or(f64::NAN, |s| s.median_max_u),
            branch.last().map_or(f64::NAN, |s| s.median_max_u),
            branch.len(),
            drops
        );
        Ok((bracket_ok && drops.is_empty(), detail))
    })
}

/// Inverse sensitivity `1e4/v`, `ū = 100` sweep: final `max u` jumps from
/// `O(10^2)` to at least `1e6` between neighboring β in `[0.55, 0.75]`.
pub fn criterion_6() -> Verdict {
    verdict(6, || {
        let summary = sweep_summary("fig4b")?;
        let jump = summary.windows(2).find(|w| {
            w[0].beta >= 0.55 && w[1].beta <= 0.75 && w[0].median_max_u <= LOW_BRANCH_MAX && w[1].median_max_u >= 1e6
        });
        let lo = summary.iter().map(|s| s.median_max_u).fold(f64::INFINITY, f64::min);
        let hi = summary.iter().map(|s| s.median_max_u).fold(0.0, f64::max);
        let detail = match jump {
            Some(w) => format!(
                "jump {:.4e} -> {:.4e} between beta = {} and {}",
                w[0].median_max_u, w[1].median_max_u, w[0].beta, w[1].beta
            ),
            None => format!(
                "no jump from <= {LOW_BRANCH_MAX:e} to >= 1e6; final max_u spans {lo:.4e} .. {hi:.4e}; heterogeneous at {} of {} beta values",
                summary.iter().filter(|s| s.homogeneous == Some(false)).count(),
                summary.len()
            ),
        };
        Ok((jump.is_some(), detail))
    })
}
