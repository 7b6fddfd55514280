//! Resolved run configuration: defaults, then an optional flat JSON file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fvpbe::{CaseParams, MeshFamily, Method, TestCase};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Integrate one test case on one mesh and write the trajectory.
    Run,
    /// Convergence study over successively refined meshes.
    Eoc,
    /// Run the invariant suite; exits 1 on any failure.
    Verify,
    /// Reproduce a published convergence table (`--which 1a`, ..., or `all`).
    Tables,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Run => "run",
            Command::Eoc => "eoc",
            Command::Verify => "verify",
            Command::Tables => "tables",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Table,
}

/// Flat configuration; keys are the long flag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub command: Option<Command>,
    pub case: TestCase,
    pub mesh: MeshFamily,
    /// Cells of the mesh (`run`) or of the coarsest level (`eoc`).
    pub cells: usize,
    pub levels: usize,
    pub t_end: Option<f64>,
    /// Fixed time step; when absent the step is chosen automatically.
    pub dt: Option<f64>,
    /// Temporal-to-spatial error fraction targeted by the automatic step.
    pub auto_dt: f64,
    pub method: Method,
    pub seed: u64,
    pub replicas: usize,
    pub ratio: f64,
    pub alpha: f64,
    pub beta0: Option<f64>,
    pub p: u32,
    pub c: u32,
    pub mu: f64,
    pub sigma: f64,
    pub n0: f64,
    pub x0: f64,
    pub x_mono: f64,
    /// Snapshots recorded by `run` besides the initial state.
    pub snapshots: usize,
    /// Random samples per property in `verify`.
    pub samples: usize,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    pub which: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = CaseParams::default();
        let study = fvpbe::StudyConfig::default();
        Self {
            command: None,
            case: TestCase::AggSum,
            mesh: MeshFamily::Uniform,
            cells: study.base_cells,
            levels: study.levels,
            t_end: None,
            dt: None,
            auto_dt: 0.01,
            method: Method::Rk4,
            seed: study.seed,
            replicas: study.replicas,
            ratio: study.oscillatory_ratio,
            alpha: params.alpha,
            beta0: params.beta0,
            p: params.p,
            c: params.c,
            mu: params.mu,
            sigma: params.sigma,
            n0: params.n0,
            x0: params.x0,
            x_mono: params.x_mono,
            snapshots: 10,
            samples: 1000,
            out: None,
            format: Format::Table,
            threads: None,
            which: None,
        }
    }
}

fn usage(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Usage(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "config".to_string() } else { path };
            usage(&key, e.into_inner())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn params(&self) -> CaseParams {
        CaseParams {
            alpha: self.alpha,
            beta0: self.beta0,
            p: self.p,
            c: self.c,
            mu: self.mu,
            sigma: self.sigma,
            n0: self.n0,
            x0: self.x0,
            x_mono: self.x_mono,
        }
    }

    /// Range checks; the message names the offending key.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(usage(key, format!("must be positive and finite, got {v}")))
            }
        };
        if self.command.is_none() {
            return Err(usage("command", "missing (run, eoc, verify or tables)"));
        }
        if self.cells == 0 || self.cells > 100_000 {
            return Err(usage("cells", format!("must be in 1..=100000, got {}", self.cells)));
        }
        if matches!(self.mesh, MeshFamily::Oscillatory | MeshFamily::Random) && self.cells % 2 != 0 {
            return Err(usage("cells", format!("{} meshes need an even cell count", self.mesh)));
        }
        if self.levels == 0 || self.levels > 12 {
            return Err(usage("levels", format!("must be in 1..=12, got {}", self.levels)));
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(usage("t-end", format!("must be non-negative, got {t}")));
            }
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        if !(self.auto_dt > 0.0 && self.auto_dt <= 1.0) {
            return Err(usage("auto-dt", format!("must be in (0, 1], got {}", self.auto_dt)));
        }
        if self.replicas == 0 {
            return Err(usage("replicas", "must be at least 1"));
        }
        positive("ratio", self.ratio)?;
        if self.ratio == 1.0 {
            return Err(usage("ratio", "must differ from 1"));
        }
        positive("alpha", self.alpha)?;
        if let Some(b) = self.beta0 {
            positive("beta0", b)?;
        }
        if !(2..=19).contains(&self.p) {
            return Err(usage("p", format!("must be in 2..=19, got {}", self.p)));
        }
        if self.c == 0 {
            return Err(usage("c", "must be at least 1"));
        }
        positive("mu", self.mu)?;
        positive("sigma", self.sigma)?;
        positive("n0", self.n0)?;
        positive("x0", self.x0)?;
        positive("x-mono", self.x_mono)?;
        if self.snapshots == 0 {
            return Err(usage("snapshots", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(usage("samples", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(usage("threads", "must be at least 1"));
        }
        if self.command == Some(Command::Tables) {
            match self.which.as_deref() {
                None => return Err(usage("which", "required by tables (e.g. 1a, or all)")),
                Some(w) if !w.eq_ignore_ascii_case("all") => {
                    fvpbe::tables::find(w).map_err(|e| usage("which", e))?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn parse_case(s: &str) -> Result<TestCase, String> {
    TestCase::from_str(s).map_err(|e| e.to_string())
}

fn parse_mesh(s: &str) -> Result<MeshFamily, String> {
    MeshFamily::from_str(s).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::from_str(s).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "fvpbe", version, about = "Finite-volume aggregation-breakage solver and convergence studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub flags: Flags,
}

/// Every flag overrides the corresponding key of `--config`.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Flat JSON file with the same keys as the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Test case, e.g. agg_sum, brk_diemer_olson, lage_gamma.
    #[arg(long, global = true, value_parser = parse_case)]
    pub case: Option<TestCase>,
    /// Mesh family: uniform, geometric, oscillatory or random.
    #[arg(long, global = true, value_parser = parse_mesh)]
    pub mesh: Option<MeshFamily>,
    /// Cells of the mesh (run) or of the coarsest level (eoc).
    #[arg(long, global = true)]
    pub cells: Option<usize>,
    /// Meshes in a study, each doubling the previous one.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Final time (default: the case default).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Fixed time step.
    #[arg(long, global = true, allow_negative_numbers = true, conflicts_with = "auto_dt")]
    pub dt: Option<f64>,
    /// Choose dt automatically (optionally with the error fraction, default 0.01).
    #[arg(long, global = true, allow_negative_numbers = true, num_args = 0..=1, default_missing_value = "0.01")]
    pub auto_dt: Option<f64>,
    /// Time integrator: euler, rk2 or rk4.
    #[arg(long, global = true, value_parser = parse_method)]
    pub method: Option<Method>,
    /// Seed of the random mesh family and of the verify samples.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Replicas averaged on random meshes.
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Width ratio of oscillatory splits.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub ratio: Option<f64>,
    /// Decay rate of the exponential initial condition.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Constant aggregation rate of the combined cases.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta0: Option<f64>,
    /// Diemer-Olson fragment count.
    #[arg(long, global = true)]
    pub p: Option<u32>,
    /// Diemer-Olson shape parameter.
    #[arg(long, global = true)]
    pub c: Option<u32>,
    /// Mean of the normal initial condition.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Standard deviation of the normal initial condition.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Initial particle number of the combined cases.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub n0: Option<f64>,
    /// Initial mean size of the combined cases.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Size of the monodisperse initial condition.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x_mono: Option<f64>,
    /// Snapshots recorded by run.
    #[arg(long, global = true)]
    pub snapshots: Option<usize>,
    /// Random samples per property in verify.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Directory for CSV/JSON/text artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format on stdout.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; 1 is the deterministic reference mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Table id for tables (1a ... 4b, or all).
    #[arg(long, global = true)]
    pub which: Option<String>,
}

macro_rules! overlay {
    ($cfg:ident, $flags:ident; $($field:ident),*) => {
        $(if let Some(v) = $flags.$field.clone() { $cfg.$field = v; })*
    };
}

impl Cli {
    /// Defaults, then `--config`, then flags; validated.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let f = self.flags;
        let mut cfg = match &f.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if self.command.is_some() {
            cfg.command = self.command;
        }
        overlay!(cfg, f; case, mesh, cells, levels, method, seed, replicas, ratio, alpha, p, c,
            mu, sigma, n0, x0, x_mono, snapshots, samples, format);
        if f.t_end.is_some() {
            cfg.t_end = f.t_end;
        }
        if f.dt.is_some() {
            cfg.dt = f.dt;
        }
        if let Some(frac) = f.auto_dt {
            cfg.dt = None;
            cfg.auto_dt = frac;
        }
        if f.beta0.is_some() {
            cfg.beta0 = f.beta0;
        }
        if f.out.is_some() {
            cfg.out = f.out;
        }
        if f.threads.is_some() {
            cfg.threads = f.threads;
        }
        if f.which.is_some() {
            cfg.which = f.which;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
