//! `sim`: run single configurations, figure presets and β sweeps.
//!
//! Exit status: 0 when the simulations completed (blow-up is a result),
//! 1 for usage, configuration or I/O errors, 2 when a single run ended in a
//! numerical failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use chemotaxis_core::experiments::{
    homogeneity_transition, largest_jump, parse_config, preset, summarize, Experiment, SweepRow, SweepSpec,
};
use chemotaxis_core::simulation::{run, DiagnosticsSample, OutcomeKind, RunResult, SimConfig};
use chemotaxis_core::GridSpec;

#[derive(Parser)]
#[command(name = "sim", version, about = "Parabolic-elliptic chemotaxis simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration file.
    ///
    /// Defaults for keys not given: 64x64 grid on [0,0.1]^2, t_end = 100,
    /// blowup_threshold = 1e10, steady_rel_tol = 1e-7, steady_window = 50,
    /// heterogeneity_tol = 1e-3, dt0 = 1e-8, dt_min = 1e-14, dt_max = 1,
    /// rtol = 1e-4, cfl = 0.5, scheme = semi_implicit.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a named preset: fig1, fig2, fig3, fig4a or fig4b.
    Preset {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a configuration file with a [sweep] section.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Cells per direction.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated times at which to write field dumps.
    #[arg(long, value_delimiter = ',')]
    dump_fields: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, common } => load(&config).and_then(|e| match e {
            Experiment::Single(c) => single(apply(c, &common)?, &common.out, true),
            Experiment::Sweep(_) => Err(Failure::Config(format!(
                "{} describes a sweep; use `sim sweep`",
                config.display()
            ))),
        }),
        Command::Sweep { config, common } => load(&config).and_then(|e| match e {
            Experiment::Sweep(s) => sweep(apply_sweep(s, &common)?, &common.out),
            Experiment::Single(_) => Err(Failure::Config(format!("{} has no [sweep] section", config.display()))),
        }),
        Command::Preset { name, common } => run_preset(&name, &common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<Experiment, Failure> {
    parse_config(path).map_err(|e| Failure::Config(e.to_string()))
}

fn apply(mut c: SimConfig, common: &Common) -> Result<SimConfig, Failure> {
    if let Some(n) = common.grid {
        c.grid = GridSpec::new(n, n, c.grid.lx(), c.grid.ly()).map_err(|e| Failure::Config(e.to_string()))?;
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(t) = common.t_end {
        c.t_end = t;
    }
    if !common.dump_fields.is_empty() {
        c.dump_times = common.dump_fields.clone();
    }
    c.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(c)
}

fn apply_sweep(mut s: SweepSpec, common: &Common) -> Result<SweepSpec, Failure> {
    s.base = apply(s.base, common)?;
    if let Some(k) = common.threads {
        s.concurrency = k;
    }
    s.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(s)
}

fn run_preset(name: &str, common: &Common) -> Result<(), Failure> {
    let experiments = preset(name).map_err(|e| Failure::Config(e.to_string()))?;
    let single_count = experiments.len();
    for (k, e) in experiments.into_iter().enumerate() {
        match e {
            Experiment::Single(c) => {
                let dir = common.out.join(format!("{name}_{}", k + 1));
                single(apply(c, common)?, &dir, false)?;
            }
            Experiment::Sweep(s) => {
                let dir = if single_count == 1 {
                    common.out.join(name)
                } else {
                    common.out.join(format!("{name}_{}", k + 1))
                };
                sweep(apply_sweep(s, common)?, &dir)?;
            }
        }
    }
    Ok(())
}

fn single(config: SimConfig, out: &Path, strict: bool) -> Result<(), Failure> {
    let result = run(&config).map_err(|e| Failure::Config(e.to_string()))?;
    write_run(&config, &result, out)?;
    let o = &result.outcome;
    println!(
        "{}: {} t = {:.6e} max_u = {:.6e} heterogeneity = {:.3e} ({} steps, {:.1} s)",
        out.display(),
        o.kind.label(),
        o.final_sample.t,
        o.final_sample.max_u,
        o.heterogeneity,
        o.accepted_steps,
        result.wall_time
    );
    match &o.kind {
        OutcomeKind::NumericalFailure { reason } if strict => Err(Failure::Numerical(reason.clone())),
        _ => Ok(()),
    }
}

fn write_run(config: &SimConfig, result: &RunResult, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    let mut ts = BufWriter::new(File::create(out.join("timeseries.csv"))?);
    writeln!(ts, "{}", DiagnosticsSample::CSV_HEADER)?;
    for s in &result.timeseries {
        writeln!(ts, "{}", s.csv_row())?;
    }
    ts.flush()?;
    for d in &result.dumps {
        let name = format!("fields_t{}", d.t_requested);
        let dump = |field: &chemotaxis_core::ScalarField, path: PathBuf| -> Result<(), Failure> {
            let f = BufWriter::new(File::create(path)?);
            field.write_dump(f).map_err(|e| Failure::Config(e.to_string()))
        };
        dump(&d.u, out.join(format!("{name}.dat")))?;
        dump(&d.v, out.join(format!("{name}_v.dat")))?;
    }
    let doc = json!({
        "variant": result.outcome.kind.label(),
        "outcome": result.outcome,
        "wall_time": result.wall_time,
        "config": config,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(out.join("outcome.json"), text)?;
    Ok(())
}

fn sweep(spec: SweepSpec, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    let rows = chemotaxis_core::experiments::run_sweep(&spec, |r: &SweepRow| {
        eprintln!(
            "beta = {:.3} seed = {}: {} max_u = {:.4e}",
            r.beta,
            r.seed,
            r.outcome.kind.label(),
            r.outcome.final_sample.max_u
        )
    })
    .map_err(|e| Failure::Config(e.to_string()))?;
    let mut f = BufWriter::new(File::create(out.join("sweep.csv"))?);
    writeln!(f, "{}", SweepRow::CSV_HEADER)?;
    for r in &rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()?;
    let summary = summarize(&rows);
    let transition = homogeneity_transition(&summary);
    let jump = largest_jump(&summary);
    let doc = json!({
        "per_beta": summary,
        "homogeneity_transition": transition,
        "largest_jump": jump.map(|j| json!({"bracket": j.bracket, "max_lo": j.max_lo, "max_hi": j.max_hi, "ratio": j.ratio()})),
        "config": spec,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(out.join("summary.json"), text)?;
    match transition {
        Some(b) => println!("homogeneous -> heterogeneous between beta = {} and {}", b.beta_lo, b.beta_hi),
        None => println!("no homogeneous -> heterogeneous transition in the sweep"),
    }
    if let Some(j) = jump {
        println!(
            "largest max_u jump: {:.4e} -> {:.4e} between beta = {} and {}",
            j.max_lo, j.max_hi, j.bracket.beta_lo, j.bracket.beta_hi
        );
    }
    Ok(())
}
