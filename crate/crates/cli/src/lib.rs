//! Command-line front end of `fvpbe`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical divergence.

pub mod config;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use fvpbe::convergence::{auto_dt, study_meshes, DtChoice};
use fvpbe::integrate::integrate_with;
use fvpbe::profiles::project;
use fvpbe::tables::{run_table, TABLES};
use fvpbe::verify::{run_verify, VerifyConfig};
use fvpbe::{FluxOperator, StudyConfig, TimeStepPlan};
use serde_json::json;

pub use config::{Cli, Command, Format, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Solver(#[from] fvpbe::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Verification(_) => 1,
            CliError::Solver(e) => match e {
                fvpbe::Error::Divergence { .. } | fvpbe::Error::StepSize { .. } => 3,
                fvpbe::Error::Config(_) => 2,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

/// One result rendered three ways.
pub struct Rendered {
    pub name: &'static str,
    pub csv: String,
    pub json: serde_json::Value,
    pub table: String,
    /// Extra artifacts written only to `--out`.
    pub extra: Vec<(&'static str, String)>,
}

impl Rendered {
    fn json_with_config(&self, cfg: &RunConfig) -> String {
        let doc = json!({ "config": cfg, "result": self.json });
        serde_json::to_string_pretty(&doc).expect("json value serializes")
    }

    /// Text for stdout in the configured format.
    pub fn stdout(&self, cfg: &RunConfig) -> String {
        match cfg.format {
            Format::Csv => self.csv.clone(),
            Format::Json => self.json_with_config(cfg) + "\n",
            Format::Table => format!(
                "# config: {}\n{}",
                serde_json::to_string(cfg).expect("config serializes"),
                self.table
            ),
        }
    }

    /// Writes `<name>.csv`, `<name>.json`, `<name>.txt`, the extras and `config.json`.
    pub fn write(&self, cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.csv", self.name)), &self.csv)?;
        fs::write(dir.join(format!("{}.json", self.name)), self.json_with_config(cfg))?;
        fs::write(dir.join(format!("{}.txt", self.name)), &self.table)?;
        for (file, body) in &self.extra {
            fs::write(dir.join(file), body)?;
        }
        fs::write(dir.join("config.json"), cfg.to_json())?;
        Ok(())
    }
}

fn study_config(cfg: &RunConfig) -> StudyConfig {
    StudyConfig {
        case: cfg.case,
        params: cfg.params(),
        family: cfg.mesh,
        base_cells: cfg.cells,
        levels: cfg.levels,
        t_end: cfg.t_end,
        method: cfg.method,
        dt: match cfg.dt {
            Some(dt) => DtChoice::Fixed(dt),
            None => DtChoice::Auto { fraction: cfg.auto_dt },
        },
        seed: cfg.seed,
        replicas: cfg.replicas,
        oscillatory_ratio: cfg.ratio,
        threads: cfg.threads,
    }
}

fn run(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let study = StudyConfig {
        levels: 1,
        ..study_config(cfg)
    };
    let mut setup = cfg.case.setup(&study.params)?;
    if let Some(t) = cfg.t_end {
        setup.t_end = t;
    }
    let mesh = study_meshes(&study, setup.x_min, setup.x_max, 0)?.remove(0);
    let dt = match cfg.dt {
        Some(dt) => dt,
        None => auto_dt(&setup, std::slice::from_ref(&mesh), cfg.method, cfg.auto_dt)?,
    };
    let op = FluxOperator::new(Arc::clone(&mesh), setup.kinetics);
    let initial = project(&setup.initial, &mesh, 1e-10)?;
    let plan = TimeStepPlan::new(cfg.method, dt.min(setup.t_end.max(f64::MIN_POSITIVE)), setup.t_end)?;
    let every = plan.steps().div_ceil(cfg.snapshots).max(1);
    let traj = integrate_with(&op, &initial, &plan.record_every(every))?;

    let m1 = traj.initial().m1;
    let drift = if m1 > 0.0 { (traj.last().m1 - m1).abs() / m1 } else { 0.0 };
    let summary: Vec<_> = traj
        .snapshots
        .iter()
        .map(|s| json!({ "t": s.t, "m0": s.m0, "m1": s.m1, "outflow": s.outflow }))
        .collect();
    let last = traj.final_state();
    let mut table = format!(
        "{} on {} mesh ({} cells), t = {}, dt = {dt:e} ({:?}), {} steps\n",
        cfg.case,
        mesh.family(),
        mesh.cells(),
        setup.t_end,
        cfg.method,
        traj.steps
    );
    table.push_str(&format!("{:>12}  {:>14}  {:>14}  {:>12}\n", "t", "M0", "M1", "outflow"));
    for s in &traj.snapshots {
        table.push_str(&format!("{:>12.5e}  {:>14.8e}  {:>14.8e}  {:>12.4e}\n", s.t, s.m0, s.m1, s.outflow));
    }
    table.push_str(&format!(
        "relative mass change {drift:.3e}, integrated outflow {:.6e}\n",
        traj.integrated_outflow
    ));
    Ok(Rendered {
        name: "trajectory",
        csv: traj.summary_csv(),
        json: json!({
            "case": cfg.case,
            "mesh": mesh.to_record(),
            "t_end": setup.t_end,
            "dt": dt,
            "steps": traj.steps,
            "mass_drift": drift,
            "integrated_outflow": traj.integrated_outflow,
            "negative_steps": traj.negative_steps,
            "summary": summary,
            "final": { "pivots": mesh.pivots(), "values": last.values() },
        }),
        table,
        extra: vec![("states.csv", traj.states_csv())],
    })
}

fn eoc(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let report = fvpbe::run_eoc_study(&study_config(cfg))?;
    Ok(Rendered {
        name: "eoc",
        csv: report.to_csv(true),
        json: serde_json::to_value(&report).map_err(fvpbe::Error::from)?,
        table: report.to_table(),
        extra: Vec::new(),
    })
}

fn verify(cfg: &RunConfig) -> Result<(Rendered, bool), CliError> {
    let report = run_verify(&VerifyConfig {
        samples: cfg.samples,
        seed: cfg.seed,
    });
    let passed = report.passed();
    Ok((
        Rendered {
            name: "verify",
            csv: report.to_csv(),
            json: serde_json::to_value(&report).map_err(fvpbe::Error::from)?,
            table: report.to_table(),
            extra: Vec::new(),
        },
        passed,
    ))
}

fn tables(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let which = cfg.which.as_deref().unwrap_or("all");
    let selected: Vec<_> = if which.eq_ignore_ascii_case("all") {
        TABLES.iter().collect()
    } else {
        vec![fvpbe::tables::find(which)?]
    };
    // Only execution settings carry over; each table fixes its own case, mesh and sizes.
    let base = study_config(cfg);
    let mut csv = String::new();
    let mut table = String::new();
    let mut docs = Vec::new();
    for (k, t) in selected.into_iter().enumerate() {
        let result = run_table(t, &base)?;
        csv.push_str(&result.to_csv(k == 0));
        table.push_str(&result.to_table());
        table.push('\n');
        docs.push(serde_json::to_value(&result).map_err(fvpbe::Error::from)?);
    }
    Ok(Rendered {
        name: "tables",
        csv,
        json: serde_json::Value::Array(docs),
        table,
        extra: Vec::new(),
    })
}

/// Runs the configured command, prints its output and writes artifacts.
pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    let command = cfg
        .command
        .ok_or_else(|| CliError::Usage("command: missing (run, eoc, verify or tables)".into()))?;
    log::info!("running {command}");
    let (rendered, passed) = match command {
        Command::Run => (run(cfg)?, true),
        Command::Eoc => (eoc(cfg)?, true),
        Command::Verify => verify(cfg)?,
        Command::Tables => (tables(cfg)?, true),
    };
    print!("{}", rendered.stdout(cfg));
    if let Some(dir) = &cfg.out {
        rendered.write(cfg, dir)?;
    }
    if !passed {
        let failures: Vec<_> = rendered.json["checks"]
            .as_array()
            .map(|c| {
                c.iter()
                    .filter(|c| c["passed"] == false)
                    .map(|c| json!({ "name": c["name"], "detail": c["detail"] }))
                    .collect()
            })
            .unwrap_or_default();
        return Err(CliError::Verification(
            serde_json::to_string(&failures).expect("json value serializes"),
        ));
    }
    Ok(())
}
