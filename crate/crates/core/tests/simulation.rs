use chemotaxis_core::grid::{integrate, GridSpec};
use chemotaxis_core::model::{ProductionLaw, SensitivityLaw};
use chemotaxis_core::simulation::RunResult;
use chemotaxis_core::{confirm_blowup, run, DiagnosticsSample, OutcomeKind, SimConfig, SimError};

fn small(n: usize, u_bar: f64, chi: f64, beta: Option<f64>) -> SimConfig {
    let mut c = SimConfig {
        grid: GridSpec::square(n, 0.1).unwrap(),
        u_bar,
        sigma: 1.0,
        t_end: 1e-3,
        ..SimConfig::default()
    };
    c.params.sensitivity = SensitivityLaw::Constant { chi };
    c.params.production = beta.map_or(ProductionLaw::linear(), ProductionLaw::power_shift);
    c
}

fn same_run(a: &RunResult, b: &RunResult) -> bool {
    a.outcome == b.outcome && a.timeseries == b.timeseries && a.final_u == b.final_u && a.final_v == b.final_v
}

#[test]
fn full_runs_are_deterministic_under_a_fixed_seed() {
    let c = small(16, 2.0, 300.0, Some(0.5));
    let a = run(&c).unwrap();
    let b = run(&c).unwrap();
    assert!(same_run(&a, &b));

    let other = run(&SimConfig { seed: 2, ..c }).unwrap();
    assert_ne!(a.final_u, other.final_u);
}

#[test]
fn horizon_run_conserves_mass_in_every_sample() {
    let c = small(16, 2.0, 300.0, Some(0.5));
    let r = run(&c).unwrap();
    assert!(matches!(r.outcome.kind, OutcomeKind::HorizonReached { .. }), "{:?}", r.outcome.kind);
    let m0 = r.timeseries[0].mass;
    for s in &r.timeseries {
        assert!((s.mass - m0).abs() <= 1e-10 * m0, "{s:?}");
        assert!(s.min_u >= 0.0);
    }
    let last = r.timeseries.last().unwrap();
    assert_eq!(last.t, c.t_end);
    assert_eq!(r.outcome.final_sample, *last);
    assert!((integrate(&r.final_u) - m0).abs() <= 1e-10 * m0);
}

#[test]
fn sample_rows_match_the_csv_header() {
    let r = run(&small(8, 1.0, 10.0, Some(0.5))).unwrap();
    let columns = DiagnosticsSample::CSV_HEADER.split(',').count();
    assert_eq!(columns, 9);
    for s in &r.timeseries {
        let row = s.csv_row();
        assert_eq!(row.split(',').count(), columns);
        assert!(row.split(',').all(|x| x.parse::<f64>().is_ok()), "{row}");
    }
}

#[test]
fn sample_stride_thins_the_timeseries() {
    let c = small(16, 2.0, 300.0, Some(0.5));
    let dense = run(&c).unwrap();
    let sparse = run(&SimConfig { sample_stride: 5, ..c }).unwrap();
    assert!(sparse.timeseries.len() < dense.timeseries.len());
    assert_eq!(sparse.timeseries.last().unwrap().t, c.t_end);
}

#[test]
fn dumps_are_taken_at_requested_times() {
    let c = SimConfig {
        dump_times: vec![5e-4, 0.0, 2e-4],
        ..small(16, 2.0, 300.0, Some(0.5))
    };
    let r = run(&c).unwrap();
    let requested: Vec<f64> = r.dumps.iter().map(|d| d.t_requested).collect();
    assert_eq!(requested, vec![0.0, 2e-4, 5e-4]);
    for d in &r.dumps {
        assert!(d.t >= d.t_requested);
        assert_eq!(d.u.grid(), &c.grid);
        assert_eq!(d.v.grid(), &c.grid);
    }
}

#[test]
fn flat_start_settles_on_the_homogeneous_state() {
    let c = SimConfig {
        sigma: 0.0,
        t_end: 100.0,
        ..small(8, 3.0, 10.0, Some(0.5))
    };
    let r = run(&c).unwrap();
    assert_eq!(r.outcome.kind, OutcomeKind::SteadyHomogeneous);
    assert!(r.outcome.final_sample.t < 100.0);
    assert!((r.outcome.final_sample.max_u - 3.0).abs() <= 1e-9);
}

#[test]
fn weak_chemotaxis_relaxes_to_homogeneous() {
    let c = SimConfig {
        t_end: 100.0,
        ..small(16, 1.0, 10.0, None)
    };
    let r = run(&c).unwrap();
    assert_eq!(r.outcome.kind, OutcomeKind::SteadyHomogeneous, "{:?}", r.outcome);
    assert_eq!(r.outcome.kind.homogeneous(), Some(true));
}

#[test]
fn threshold_crossing_is_reported_as_blow_up() {
    let c = SimConfig {
        t_end: 1.0,
        blowup_threshold: 200.0,
        ..small(16, 10.0, 1e3, None)
    };
    let r = run(&c).unwrap();
    match r.outcome.kind {
        OutcomeKind::BlowUp { t_detect, max_u } => {
            assert!(max_u >= 200.0);
            assert!(t_detect > 0.0 && t_detect < 1.0);
            assert_eq!(t_detect, r.outcome.final_sample.t);
        }
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn confirmation_refines_the_grid() {
    let c = SimConfig {
        t_end: 1.0,
        blowup_threshold: 200.0,
        refine_rounds: 1,
        ..small(8, 10.0, 1e3, None)
    };
    let prior = run(&c).unwrap().outcome;
    assert!(prior.kind.is_blow_up());
    let conf = confirm_blowup(&c, &prior).unwrap();
    assert_eq!(conf.rounds.len(), 1);
    assert_eq!(conf.rounds[0].grid.nx(), 16);
    assert!(conf.confirmed, "{:?}", conf.refined_outcome());
}

#[test]
fn confirmation_of_a_bounded_run_is_an_error() {
    let c = small(8, 1.0, 10.0, Some(0.5));
    let prior = run(&c).unwrap().outcome;
    assert!(matches!(confirm_blowup(&c, &prior), Err(SimError::NotBlowUp(_))));
}

#[test]
fn outcome_json_carries_the_variant_tag() {
    let r = run(&small(8, 1.0, 10.0, Some(0.5))).unwrap();
    let json = serde_json::to_value(&r.outcome).unwrap();
    assert_eq!(json["kind"]["variant"], "HorizonReached");
    let back: chemotaxis_core::RunOutcome = serde_json::from_value(json).unwrap();
    assert_eq!(back, r.outcome);
}

#[test]
fn invalid_configs_are_rejected_before_stepping() {
    let base = small(8, 1.0, 10.0, Some(0.5));
    for bad in [
        SimConfig { u_bar: 0.0, ..base.clone() },
        SimConfig { sigma: -1.0, ..base.clone() },
        SimConfig { t_end: 0.0, ..base.clone() },
        SimConfig { sample_stride: 0, ..base.clone() },
        SimConfig { collapse_fraction: Some(1.5), ..base.clone() },
    ] {
        assert!(matches!(run(&bad), Err(SimError::InvalidConfig(_))), "{bad:?}");
    }
}
