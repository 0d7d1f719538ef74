//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::time::Instant;

use chemotaxis_core::grid::GridSpec;
use chemotaxis_core::integrator::TransportScheme;
use chemotaxis_core::model::{ModelParams, ProductionLaw, SensitivityLaw};
use chemotaxis_core::{init_u, run, Preconditioner, SimConfig};
use chemotaxis_validation::{criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, Verdict};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn part(label: char, ok: bool, what: String) -> (bool, String) {
    (ok, format!("({label}) {} {what}", if ok { "ok" } else { "FAILED" }))
}

fn criterion_7() -> Verdict {
    let mut parts = Vec::new();

    let worst_mass = (0..200u64)
        .flat_map(|seed| common::mass_defects(&common::random_step_case(0xACCE + seed)))
        .fold(0.0, f64::max);
    parts.push(part('a', worst_mass <= 1e-10, format!("max relative mass change {worst_mass:.2e}")));

    let held = (0..100u64)
        .filter(|&seed| common::elliptic_max_principle(&common::random_rhs(0xE11 + seed), 1e-10))
        .count();
    parts.push(part('b', held == 100, format!("{held}/100 right-hand sides")));

    let mut worst_err: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for n in [16, 32, 64] {
        for pc in [Preconditioner::None, Preconditioner::Jacobi, Preconditioner::Spectral] {
            let (err, res) = common::manufactured_elliptic(n, pc, 1e-10);
            worst_err = worst_err.max(err);
            worst_res = worst_res.max(res);
        }
    }
    parts.push(part(
        'c',
        worst_res <= 1e-10 && worst_err <= 1e-8,
        format!("residual {worst_res:.2e}, error {worst_err:.2e}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fixed = (0..40)
        .filter(|_| {
            let params = ModelParams {
                sensitivity: SensitivityLaw::Singular {
                    chi0: 10f64.powf(4.0 * rng.random::<f64>()),
                },
                production: ProductionLaw::power_shift(rng.random::<f64>()),
            };
            let u_bar = 10f64.powf(2.0 * rng.random::<f64>() - 0.5);
            let dt = 10f64.powf(-8.0 + 7.0 * rng.random::<f64>());
            common::homogeneous_fixed_point(params, u_bar, 16, dt)
        })
        .count();
    parts.push(part('d', fixed == 40, format!("{fixed}/40 homogeneous states unchanged")));

    let space = common::orders(&common::chemotactic_divergence_errors(&[16, 32, 64, 128]));
    parts.push(part('e', space.iter().all(|&p| p >= 1.0), format!("spatial orders {space:.3?}")));

    let time = common::orders(&common::temporal_differences(
        TransportScheme::Explicit,
        &[40, 80, 160, 320],
        2e-4,
    ));
    parts.push(part('f', time.iter().all(|&p| p >= 1.0), format!("temporal orders {time:.4?}")));

    let g = GridSpec::square(32, 0.1).unwrap();
    let init_same = init_u(&g, 10.0, 1.0, 42) == init_u(&g, 10.0, 1.0, 42);
    let mut c = SimConfig {
        grid: GridSpec::square(16, 0.1).unwrap(),
        u_bar: 2.0,
        t_end: 1e-3,
        ..SimConfig::default()
    };
    c.params.sensitivity = SensitivityLaw::Constant { chi: 300.0 };
    let (a, b) = (run(&c), run(&c));
    let runs_same = match (a, b) {
        (Ok(a), Ok(b)) => a.outcome == b.outcome && a.timeseries == b.timeseries && a.final_u == b.final_u,
        _ => false,
    };
    parts.push(part(
        'g',
        init_same && runs_same,
        format!("init_u repeatable={init_same}, full run repeatable={runs_same}"),
    ));

    Verdict {
        criterion: 7,
        pass: parts.iter().all(|(ok, _)| *ok),
        detail: parts.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join("; "),
    }
}

fn main() -> ExitCode {
    let checks: [fn() -> Verdict; 7] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
    ];
    let mut failed = 0;
    for check in checks {
        let started = Instant::now();
        let v = check();
        failed += usize::from(!v.pass);
        println!("{v} [{:.0} s]", started.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 7 criteria passed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
