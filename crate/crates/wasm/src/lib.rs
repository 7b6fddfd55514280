//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string so the page needs nothing beyond `JSON.parse`.

use std::str::FromStr;
use std::sync::Arc;

use fvpbe::convergence::{auto_dt, study_meshes};
use fvpbe::integrate::integrate_with;
use fvpbe::profiles::project;
use fvpbe::{CaseParams, FluxOperator, MeshFamily, Method, StudyConfig, TestCase, TimeStepPlan};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json(v: &impl Serialize) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js)
}

fn config(case: &str, family: &str, cells: usize, levels: usize, seed: u64) -> Result<StudyConfig, JsError> {
    Ok(StudyConfig {
        case: TestCase::from_str(case).map_err(js)?,
        family: MeshFamily::from_str(family).map_err(js)?,
        base_cells: cells,
        levels,
        seed,
        threads: Some(1),
        ..StudyConfig::default()
    })
}

#[derive(Serialize)]
struct MeshView<'a> {
    family: MeshFamily,
    edges: &'a [f64],
    pivots: &'a [f64],
    widths: &'a [f64],
    quasi_uniformity: f64,
}

/// Mesh of `cells` cells on the domain of `case`, as used by the studies.
#[wasm_bindgen]
pub fn build_mesh(case: &str, family: &str, cells: usize, seed: u64) -> Result<String, JsError> {
    let cfg = config(case, family, cells, 1, seed)?;
    let (x_min, x_max) = cfg.case.domain();
    let mesh = study_meshes(&cfg, x_min, x_max, 0).map_err(js)?.remove(0);
    to_json(&MeshView {
        family: mesh.family(),
        edges: mesh.edges(),
        pivots: mesh.pivots(),
        widths: mesh.widths(),
        quasi_uniformity: mesh.quasi_uniformity(),
    })
}

#[derive(Serialize)]
struct Frame {
    t: f64,
    values: Vec<f64>,
    /// Projected closed form at `t`, where one exists.
    exact: Option<Vec<f64>>,
    m0: f64,
    m1: f64,
}

#[derive(Serialize)]
struct Simulation {
    pivots: Vec<f64>,
    widths: Vec<f64>,
    dt: f64,
    steps: usize,
    frames: Vec<Frame>,
}

/// Integrates `case` to `t_end` (<= 0 means the case default) with RK4 and an automatic step.
#[wasm_bindgen]
pub fn simulate(case: &str, family: &str, cells: usize, t_end: f64, frames: usize, seed: u64) -> Result<String, JsError> {
    let cfg = config(case, family, cells, 1, seed)?;
    let mut setup = cfg.case.setup(&CaseParams::default()).map_err(js)?;
    if t_end > 0.0 {
        setup.t_end = t_end;
    }
    let (x_min, x_max) = (setup.x_min, setup.x_max);
    let mesh = study_meshes(&cfg, x_min, x_max, 0).map_err(js)?.remove(0);
    let dt = auto_dt(&setup, std::slice::from_ref(&mesh), Method::Rk4, 0.01).map_err(js)?;
    let op = FluxOperator::new(Arc::clone(&mesh), setup.kinetics);
    let initial = project(&setup.initial, &mesh, 1e-10).map_err(js)?;
    let plan = TimeStepPlan::new(Method::Rk4, dt.min(setup.t_end.max(f64::MIN_POSITIVE)), setup.t_end).map_err(js)?;
    let every = plan.steps().div_ceil(frames.max(1)).max(1);
    let traj = integrate_with(&op, &initial, &plan.record_every(every)).map_err(js)?;
    let frames = traj
        .snapshots
        .iter()
        .map(|s| {
            let exact = match setup.analytic {
                Some(case) => Some(project(&case.at(s.t), &mesh, 1e-10).map_err(js)?.into_values()),
                None => None,
            };
            Ok(Frame {
                t: s.t,
                values: s.state.values().to_vec(),
                exact,
                m0: s.m0,
                m1: s.m1,
            })
        })
        .collect::<Result<Vec<_>, JsError>>()?;
    to_json(&Simulation {
        pivots: mesh.pivots().to_vec(),
        widths: mesh.widths().to_vec(),
        dt,
        steps: traj.steps,
        frames,
    })
}

/// Convergence study; returns the serialized report (rows of cells, error, EOC).
#[wasm_bindgen]
pub fn eoc_study(case: &str, family: &str, base_cells: usize, levels: usize, seed: u64) -> Result<String, JsError> {
    let mut cfg = config(case, family, base_cells, levels, seed)?;
    // Keep random studies responsive in the browser.
    cfg.replicas = 3;
    let report = fvpbe::run_eoc_study(&cfg).map_err(js)?;
    report.to_json().map_err(js)
}
