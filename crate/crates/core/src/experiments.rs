//! Plain-text run configurations, the figure presets and concurrent
//! β sweeps.
//!
//! Configuration files are `key = value` lines grouped under `[grid]`,
//! `[model]`, `[init]`, `[control]`, `[events]` and `[sweep]`. Comments
//! start with `#` or `;`. Any unknown section or key is an error. A file
//! with a `[sweep]` section describes a sweep, otherwise a single run.
//!
//! ```text
//! [model]
//! sensitivity = "inverse"   # constant | inverse | inverse_power | log
//! chi = 1e4
//! production = "power_shift"
//! beta = 0.5
//!
//! [sweep]
//! beta = 0.30:0.80:0.05     # inclusive range, or a comma list
//! runs_per_beta = 2
//! ```

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elliptic::Preconditioner;
use crate::grid::GridSpec;
use crate::integrator::TransportScheme;
use crate::model::{ProductionKind, ProductionLaw, SensitivityLaw};
use crate::simulation::{run, OutcomeKind, RunOutcome, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("unknown preset {0:?} (expected fig1, fig2, fig3, fig4a or fig4b)")]
    UnknownPreset(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub beta_values: Vec<f64>,
    /// Runs per β, seeded `base.seed`, `base.seed + 1`, ...
    pub runs_per_beta: usize,
    pub concurrency: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.beta_values.is_empty() {
            return Err(ConfigError::Validation("sweep needs at least one beta".into()));
        }
        if let Some(b) = self.beta_values.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(ConfigError::Validation(format!("sweep beta {b} outside [0, 1]")));
        }
        if self.runs_per_beta == 0 || self.concurrency == 0 {
            return Err(ConfigError::Validation(
                "runs_per_beta and concurrency must be at least 1".into(),
            ));
        }
        self.config_for(self.beta_values[0], self.base.seed)
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))
    }

    /// The base configuration with production `(1 + u)^β`.
    pub fn config_for(&self, beta: f64, seed: u64) -> SimConfig {
        let mut c = self.base.clone();
        c.params.production.kind = ProductionKind::PowerShift { beta };
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Experiment {
    Single(SimConfig),
    Sweep(SweepSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Grid,
    Model,
    Init,
    Control,
    Events,
    Sweep,
}

#[derive(Default)]
struct ModelKeys {
    sensitivity: Option<String>,
    chi: Option<f64>,
    k: Option<f64>,
    production: Option<String>,
    beta: Option<f64>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<Experiment, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Experiment, ConfigError> {
    let mut c = SimConfig::default();
    let mut n: Option<usize> = None;
    let (mut nx, mut ny, mut lx, mut ly) = (None, None, None, None);
    let mut model = ModelKeys::default();
    let mut sweep_seen = false;
    let mut betas: Option<Vec<f64>> = None;
    let mut runs_per_beta = 1;
    let mut concurrency = 1;
    let mut section: Option<Section> = None;

    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let err = |msg: String| ConfigError::Parse { line, msg };
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(format!("malformed section header {content:?}")))?
                .trim();
            section = Some(match name {
                "grid" => Section::Grid,
                "model" => Section::Model,
                "init" => Section::Init,
                "control" => Section::Control,
                "events" => Section::Events,
                "sweep" => {
                    sweep_seen = true;
                    Section::Sweep
                }
                other => return Err(err(format!("unknown section [{other}]"))),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {content:?}")))?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        let sec = section.ok_or_else(|| err(format!("key {key:?} outside any section")))?;
        let real = || -> Result<f64, ConfigError> {
            value
                .parse::<f64>()
                .map_err(|_| err(format!("{key}: expected a number, got {value:?}")))
        };
        let int = || -> Result<u64, ConfigError> {
            value
                .parse::<u64>()
                .map_err(|_| err(format!("{key}: expected a nonnegative integer, got {value:?}")))
        };
        match (sec, key) {
            (Section::Grid, "n") => n = Some(int()? as usize),
            (Section::Grid, "nx") => nx = Some(int()? as usize),
            (Section::Grid, "ny") => ny = Some(int()? as usize),
            (Section::Grid, "lx") => lx = Some(real()?),
            (Section::Grid, "ly") => ly = Some(real()?),
            (Section::Model, "sensitivity") => model.sensitivity = Some(value.to_string()),
            (Section::Model, "chi") => model.chi = Some(real()?),
            (Section::Model, "k") => model.k = Some(real()?),
            (Section::Model, "production") => model.production = Some(value.to_string()),
            (Section::Model, "beta") => model.beta = Some(real()?),
            (Section::Model, "lambda1") => model.lambda1 = Some(real()?),
            (Section::Model, "lambda2") => model.lambda2 = Some(real()?),
            (Section::Init, "u_bar") => c.u_bar = real()?,
            (Section::Init, "sigma") => c.sigma = real()?,
            (Section::Init, "seed") => c.seed = int()?,
            (Section::Control, "t_end") => c.t_end = real()?,
            (Section::Control, "dt0") => c.controller.dt = real()?,
            (Section::Control, "dt_min") => c.controller.dt_min = real()?,
            (Section::Control, "dt_max") => c.controller.dt_max = real()?,
            (Section::Control, "rtol") => c.controller.rtol = real()?,
            (Section::Control, "cfl") => c.controller.cfl = real()?,
            (Section::Control, "shrink") => c.controller.shrink = real()?,
            (Section::Control, "grow") => c.controller.grow = real()?,
            (Section::Control, "safety") => c.controller.safety = real()?,
            (Section::Control, "scheme") => {
                c.stepper.scheme = match value {
                    "semi_implicit" => TransportScheme::SemiImplicit,
                    "explicit" => TransportScheme::Explicit,
                    other => return Err(err(format!("unknown scheme {other:?}"))),
                }
            }
            (Section::Control, "preconditioner") => {
                c.stepper.preconditioner = match value {
                    "none" => Preconditioner::None,
                    "jacobi" => Preconditioner::Jacobi,
                    "spectral" => Preconditioner::Spectral,
                    other => return Err(err(format!("unknown preconditioner {other:?}"))),
                }
            }
            (Section::Control, "elliptic_tol") => c.stepper.elliptic_tol = real()?,
            (Section::Control, "transport_tol") => c.stepper.transport_tol = real()?,
            (Section::Control, "max_steps") => c.max_steps = int()?,
            (Section::Control, "sample_stride") => c.sample_stride = int()? as usize,
            (Section::Events, "blowup_threshold") => c.blowup_threshold = real()?,
            (Section::Events, "collapse_fraction") => c.collapse_fraction = Some(real()?),
            (Section::Events, "steady_rel_tol") => c.steady_rel_tol = real()?,
            (Section::Events, "steady_window") => c.steady_window = int()? as usize,
            (Section::Events, "heterogeneity_tol") => c.heterogeneity_tol = real()?,
            (Section::Events, "refine_rounds") => c.refine_rounds = int()? as usize,
            (Section::Events, "dump_times") => c.dump_times = parse_list(value).map_err(err)?,
            (Section::Sweep, "beta") => betas = Some(parse_betas(value).map_err(err)?),
            (Section::Sweep, "runs_per_beta") => runs_per_beta = int()? as usize,
            (Section::Sweep, "concurrency") => concurrency = int()? as usize,
            (_, other) => return Err(err(format!("unknown key {other:?} in this section"))),
        }
    }

    let base = c.grid;
    let nx = nx.or(n).unwrap_or(base.nx());
    let ny = ny.or(n).unwrap_or(base.ny());
    c.grid = GridSpec::new(nx, ny, lx.unwrap_or(base.lx()), ly.unwrap_or(base.ly()))
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
    apply_model(&mut c, &model)?;

    if sweep_seen {
        let spec = SweepSpec {
            beta_values: betas.ok_or_else(|| ConfigError::Validation("[sweep] needs beta".into()))?,
            base: c,
            runs_per_beta,
            concurrency,
        };
        spec.validate()?;
        Ok(Experiment::Sweep(spec))
    } else {
        c.validate().map_err(|e| ConfigError::Validation(e.to_string()))?;
        Ok(Experiment::Single(c))
    }
}

fn apply_model(c: &mut SimConfig, m: &ModelKeys) -> Result<(), ConfigError> {
    let chi = m.chi.unwrap_or(c.params.sensitivity.coefficient());
    c.params.sensitivity = match m.sensitivity.as_deref().unwrap_or(c.params.sensitivity.name()) {
        "constant" => SensitivityLaw::Constant { chi },
        "inverse" => SensitivityLaw::Singular { chi0: chi },
        "inverse_power" => SensitivityLaw::PowerSingular {
            chi0: chi,
            k: m.k.unwrap_or(1.0),
        },
        "log" => SensitivityLaw::Logarithmic { chi0: chi },
        other => return Err(ConfigError::Validation(format!("unknown sensitivity law {other:?}"))),
    };
    if m.k.is_some() && !matches!(c.params.sensitivity, SensitivityLaw::PowerSingular { .. }) {
        return Err(ConfigError::Validation("k only applies to inverse_power".into()));
    }
    let mut production = match m.production.as_deref().unwrap_or(c.params.production.name()) {
        "linear" => {
            if m.beta.is_some() {
                return Err(ConfigError::Validation("beta does not apply to linear production".into()));
            }
            ProductionLaw::linear()
        }
        "power_shift" => {
            let beta = match (m.beta, c.params.production.kind) {
                (Some(b), _) => b,
                (None, ProductionKind::PowerShift { beta }) => beta,
                (None, ProductionKind::Linear) => 0.5,
            };
            ProductionLaw::power_shift(beta)
        }
        other => return Err(ConfigError::Validation(format!("unknown production law {other:?}"))),
    };
    production.lambda1 = m.lambda1.unwrap_or(production.lambda1);
    production.lambda2 = m.lambda2.unwrap_or(production.lambda2);
    c.params.production = production;
    Ok(())
}

fn parse_list(value: &str) -> Result<Vec<f64>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("expected a number, got {s:?}")))
        .collect()
}

/// `start:stop:step` (inclusive) or a comma-separated list. Values are
/// rounded to 12 decimals so ranges hit round numbers exactly.
pub fn parse_betas(value: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    match parts.as_slice() {
        [single] => parse_list(single),
        [a, b, s] => {
            let num = |x: &str| x.parse::<f64>().map_err(|_| format!("bad range bound {x:?}"));
            let (a, b, s) = (num(a)?, num(b)?, num(s)?);
            if !(s > 0.0) || b < a {
                return Err(format!("range {value:?} needs start <= stop and step > 0"));
            }
            Ok(beta_range(a, b, s))
        }
        _ => Err(format!("expected start:stop:step or a list, got {value:?}")),
    }
}

fn beta_range(a: f64, b: f64, step: f64) -> Vec<f64> {
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| round12(a + k as f64 * step)).collect()
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn merged_betas(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    let mut all: Vec<f64> = parts.drain(..).flatten().collect();
    all.sort_by(|a, b| a.total_cmp(b));
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    all
}

pub const PRESET_NAMES: [&str; 5] = ["fig1", "fig2", "fig3", "fig4a", "fig4b"];

fn base_config(u_bar: f64, sigma: f64, sensitivity: SensitivityLaw, production: ProductionLaw) -> SimConfig {
    let mut c = SimConfig {
        u_bar,
        sigma,
        ..SimConfig::default()
    };
    c.params.sensitivity = sensitivity;
    c.params.production = production;
    c
}

/// Named figure presets. Single runs come back as [`Experiment::Single`],
/// β sweeps as [`Experiment::Sweep`].
pub fn preset(name: &str) -> Result<Vec<Experiment>, ConfigError> {
    let constant = |chi| SensitivityLaw::Constant { chi };
    let half = ProductionLaw::power_shift(0.5);
    let configs = match name {
        "fig1" => [(1.0, 1e2), (1.0, 1e3), (10.0, 1e2), (10.0, 1e3)]
            .into_iter()
            .map(|(u, chi)| Experiment::Single(base_config(u, 1.0, constant(chi), ProductionLaw::linear())))
            .collect(),
        "fig2" => [(1.0, 1e4), (10.0, 1e3), (100.0, 1e3)]
            .into_iter()
            .map(|(u, chi)| Experiment::Single(base_config(u, u, constant(chi), half)))
            .collect(),
        "fig3" => [
            SensitivityLaw::Singular { chi0: 1e4 },
            SensitivityLaw::Logarithmic { chi0: 1e4 },
        ]
        .into_iter()
        .map(|law| Experiment::Single(base_config(100.0, 10.0, law, half)))
        .collect(),
        "fig4a" => vec![Experiment::Sweep(SweepSpec {
            base: base_config(10.0, 1.0, constant(1e3), half),
            beta_values: merged_betas(vec![beta_range(0.05, 0.95, 0.05), beta_range(0.36, 0.44, 0.01)]),
            runs_per_beta: 1,
            concurrency: 1,
        })],
        "fig4b" => vec![Experiment::Sweep(SweepSpec {
            base: base_config(100.0, 10.0, SensitivityLaw::Singular { chi0: 1e4 }, half),
            beta_values: merged_betas(vec![beta_range(0.30, 0.80, 0.05), beta_range(0.60, 0.70, 0.01)]),
            runs_per_beta: 1,
            concurrency: 1,
        })],
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    };
    Ok(configs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub seed: u64,
    pub outcome: RunOutcome,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "beta,seed,outcome,t_final,max_u,min_u,mass,heterogeneity,t_detect";

    pub fn csv_row(&self) -> String {
        let s = &self.outcome.final_sample;
        let t_detect = match self.outcome.kind {
            OutcomeKind::BlowUp { t_detect, .. } => format!("{t_detect:e}"),
            _ => String::new(),
        };
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{}",
            self.beta,
            self.seed,
            self.outcome.kind.label(),
            s.t,
            s.max_u,
            s.min_u,
            s.mass,
            self.outcome.heterogeneity,
            t_detect
        )
    }
}

/// Runs every `(β, seed)` job of the sweep on up to `concurrency` worker
/// threads. Rows come back sorted by `(β, seed)`; a progress callback sees
/// each row as it completes.
pub fn run_sweep(spec: &SweepSpec, progress: impl Fn(&SweepRow) + Sync) -> Result<Vec<SweepRow>, SimError> {
    spec.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let jobs: Vec<(f64, u64)> = spec
        .beta_values
        .iter()
        .flat_map(|&b| (0..spec.runs_per_beta as u64).map(move |r| (b, spec.base.seed + r)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Result<SweepRow, SimError>>> = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = spec.concurrency.min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(beta, seed)) = jobs.get(k) else { break };
                let row = run(&spec.config_for(beta, seed)).map(|r| SweepRow {
                    beta,
                    seed,
                    outcome: r.outcome,
                });
                if let Ok(row) = &row {
                    progress(row);
                }
                results.lock().expect("no worker panicked").push(row);
            });
        }
    });
    let mut rows = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.seed.cmp(&b.seed)));
    Ok(rows)
}

/// Per-β summary over seeds: the median final `max u` and whether all
/// runs ended homogeneous / heterogeneous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummary {
    pub beta: f64,
    pub median_max_u: f64,
    pub homogeneous: Option<bool>,
    pub any_blow_up: bool,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<BetaSummary> {
    let mut out: Vec<BetaSummary> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let beta = rows[i].beta;
        let group: Vec<&SweepRow> = rows[i..].iter().take_while(|r| r.beta == beta).collect();
        i += group.len();
        let mut maxes: Vec<f64> = group.iter().map(|r| r.outcome.final_sample.max_u).collect();
        maxes.sort_by(|a, b| a.total_cmp(b));
        let m = maxes.len();
        let median = if m % 2 == 1 {
            maxes[m / 2]
        } else {
            0.5 * (maxes[m / 2 - 1] + maxes[m / 2])
        };
        let classes: Vec<Option<bool>> = group.iter().map(|r| r.outcome.kind.homogeneous()).collect();
        let homogeneous = if classes.iter().all(|c| *c == Some(true)) {
            Some(true)
        } else if classes.iter().all(|c| *c == Some(false)) {
            Some(false)
        } else {
            None
        };
        out.push(BetaSummary {
            beta,
            median_max_u: median,
            homogeneous,
            any_blow_up: group.iter().any(|r| r.outcome.kind.is_blow_up()),
        });
    }
    out
}

/// `[β_lo, β_hi]` bracketing the first switch from homogeneous to
/// heterogeneous rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub beta_lo: f64,
    pub beta_hi: f64,
}

impl Bracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.beta_lo + self.beta_hi)
    }
}

pub fn homogeneity_transition(summary: &[BetaSummary]) -> Option<Bracket> {
    summary.windows(2).find_map(|w| {
        (w[0].homogeneous == Some(true) && w[1].homogeneous == Some(false)).then_some(Bracket {
            beta_lo: w[0].beta,
            beta_hi: w[1].beta,
        })
    })
}

/// Largest ratio of median final `max u` between neighboring β values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub bracket: Bracket,
    pub max_lo: f64,
    pub max_hi: f64,
}

impl Jump {
    pub fn ratio(&self) -> f64 {
        self.max_hi / self.max_lo
    }
}

pub fn largest_jump(summary: &[BetaSummary]) -> Option<Jump> {
    summary
        .windows(2)
        .map(|w| Jump {
            bracket: Bracket {
                beta_lo: w[0].beta,
                beta_hi: w[1].beta,
            },
            max_lo: w[0].median_max_u,
            max_hi: w[1].median_max_u,
        })
        .max_by(|a, b| a.ratio().total_cmp(&b.ratio()))
}
