//! Error norms, experimental orders of convergence and mesh-refinement studies.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cases::{CaseParams, CaseSetup, TestCase};
use crate::discretization::FluxOperator;
use crate::error::{Error, Result};
use crate::integrate::{integrate_with, Method, NonnegativityPolicy, TimeStepPlan};
use crate::kinetics::KineticsSet;
use crate::mesh::{Mesh, MeshFamily, DEFAULT_OSCILLATORY_RATIO};
use crate::profiles::{project, GridFunction};

/// Quadrature tolerance for projections used as references.
const PROJECTION_TOL: f64 = 1e-10;

/// `Σ |v_i| Δx_i`.
pub fn discrete_l1(values: &[f64], mesh: &Mesh) -> Result<f64> {
    if values.len() != mesh.cells() {
        return Err(Error::Contract(format!(
            "{} values for a {}-cell mesh",
            values.len(),
            mesh.cells()
        )));
    }
    Ok(values.iter().zip(mesh.widths()).map(|(v, w)| v.abs() * w).sum())
}

/// `Σ |N_i - N̂_i| / Σ |N_i|` on cell numbers, `N` from `reference`.
pub fn relative_error(numeric: &GridFunction, reference: &GridFunction) -> Result<f64> {
    if !numeric.same_mesh(reference) {
        return Err(Error::Contract("relative error needs both states on one mesh".into()));
    }
    let num = numeric.numbers();
    let refn = reference.numbers();
    let norm: f64 = refn.iter().map(|v| v.abs()).sum();
    if norm == 0.0 {
        return Err(Error::Undefined("reference has zero norm".into()));
    }
    let diff: f64 = num.iter().zip(&refn).map(|(a, b)| (a - b).abs()).sum();
    Ok(diff / norm)
}

/// `ln(E_I / E_2I) / ln 2`.
pub fn eoc_known(e_coarse: f64, e_fine: f64) -> Result<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0) || !e_coarse.is_finite() || !e_fine.is_finite() {
        return Err(Error::Undefined(format!(
            "EOC needs positive errors, got {e_coarse:e} and {e_fine:e}"
        )));
    }
    Ok((e_coarse / e_fine).ln() / std::f64::consts::LN_2)
}

/// Cell numbers of `fine` summed onto the cells of the nested `coarse` mesh.
pub fn coarsen_numbers(fine: &GridFunction, coarse: &Mesh) -> Result<Vec<f64>> {
    let map = fine
        .mesh()
        .coarse_map(coarse, 1e-12)
        .ok_or_else(|| Error::Contract("meshes are not nested".into()))?;
    let numbers = fine.numbers();
    Ok(map
        .windows(2)
        .map(|w| numbers[w[0]..w[1]].iter().sum())
        .collect())
}

/// `‖N̂_a - N̂_b‖` with `b` coarsened onto the mesh of `a`.
pub fn nested_difference(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    let coarse = a.numbers();
    let fine = coarsen_numbers(b, a.mesh())?;
    Ok(coarse.iter().zip(&fine).map(|(x, y)| (x - y).abs()).sum())
}

/// `ln(‖N̂_I - N̂_2I‖ / ‖N̂_2I - N̂_4I‖) / ln 2` on nested meshes.
pub fn eoc_unknown(n_i: &GridFunction, n_2i: &GridFunction, n_4i: &GridFunction) -> Result<f64> {
    let d1 = nested_difference(n_i, n_2i)?;
    let d2 = nested_difference(n_2i, n_4i)?;
    if d2 == 0.0 {
        return Err(Error::Undefined("finer difference vanishes".into()));
    }
    eoc_known(d1, d2)
}

/// How the time step of a study is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtChoice {
    Fixed(f64),
    /// Halve until the temporal self-difference on the coarsest mesh is at most
    /// `fraction` of the spatial error projected to the finest level.
    Auto { fraction: f64 },
}

impl Default for DtChoice {
    fn default() -> Self {
        DtChoice::Auto { fraction: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub case: TestCase,
    pub params: CaseParams,
    pub family: MeshFamily,
    /// Cells on the coarsest level.
    pub base_cells: usize,
    /// Number of meshes (each doubling the previous one).
    pub levels: usize,
    /// Overrides the case's default final time.
    pub t_end: Option<f64>,
    pub method: Method,
    pub dt: DtChoice,
    pub seed: u64,
    /// Replicas averaged on random meshes.
    pub replicas: usize,
    pub oscillatory_ratio: f64,
    /// Worker threads; `None` uses all cores, `Some(1)` is the sequential reference mode.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            case: TestCase::AggSum,
            params: CaseParams::default(),
            family: MeshFamily::Uniform,
            base_cells: 60,
            levels: 4,
            t_end: None,
            method: Method::Rk4,
            dt: DtChoice::default(),
            seed: 2024,
            replicas: 10,
            oscillatory_ratio: DEFAULT_OSCILLATORY_RATIO,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Relative L1 error of cell numbers against the projected closed form.
    RelativeL1,
    /// `‖N̂_{I/2} - N̂_I‖` between consecutive levels (reported on the finer row).
    NestedDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub cells: usize,
    /// Mean over replicas; `None` where undefined (first row of nested differences).
    pub error: Option<f64>,
    pub eoc: Option<f64>,
    pub replica_errors: Vec<f64>,
    /// Mean final `N̂` and mass over replicas.
    pub m0: f64,
    pub m1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EocReport {
    pub case: TestCase,
    pub family: MeshFamily,
    pub error_kind: ErrorKind,
    pub x_min: f64,
    pub x_max: f64,
    pub t_end: f64,
    pub kinetics: KineticsSet,
    pub method: Method,
    pub dt: f64,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
    pub rows: Vec<LevelRow>,
}

impl EocReport {
    pub fn eocs(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.eoc).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV `family,case,I,error,eoc`; undefined entries are empty.
    pub fn to_csv(&self, header: bool) -> String {
        let mut out = String::new();
        if header {
            out.push_str("family,case,I,error,eoc\n");
        }
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.family,
                self.case,
                r.cells,
                r.error.map(|e| format!("{e:e}")).unwrap_or_default(),
                r.eoc.map(|e| format!("{e:.4}")).unwrap_or_default()
            );
        }
        out
    }

    /// Aligned text table `Grid points | Error | EOC`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} on {} mesh, t = {}, dt = {:e} ({:?}){}",
            self.case,
            self.family,
            self.t_end,
            self.dt,
            self.method,
            if self.replicas > 1 {
                format!(", mean of {} replicas", self.replicas)
            } else {
                String::new()
            }
        );
        let _ = writeln!(out, "{:>8}  {:>12}  {:>6}", "I", "Error", "EOC");
        for r in &self.rows {
            let err = r.error.map(|e| format!("{e:.4e}")).unwrap_or_else(|| "-".into());
            let eoc = r.eoc.map(|e| format!("{e:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:>8}  {:>12}  {:>6}", r.cells, err, eoc);
        }
        out
    }
}

/// Meshes of one replica, coarsest first, each refining the previous one.
pub fn study_meshes(config: &StudyConfig, x_min: f64, x_max: f64, replica: usize) -> Result<Vec<Arc<Mesh>>> {
    if config.levels == 0 {
        return Err(Error::Config("a study needs at least one level".into()));
    }
    let base = match config.family {
        MeshFamily::Uniform => Mesh::uniform(x_min, x_max, config.base_cells)?,
        MeshFamily::Geometric => Mesh::geometric(x_min, x_max, config.base_cells)?,
        MeshFamily::Oscillatory | MeshFamily::Random => {
            if config.base_cells % 2 != 0 {
                return Err(Error::Config(format!(
                    "{} meshes start from half as many cells; base_cells must be even",
                    config.family
                )));
            }
            if config.family == MeshFamily::Oscillatory {
                Mesh::oscillatory(x_min, x_max, config.base_cells / 2, 1, config.oscillatory_ratio)?
            } else {
                let seed = config.seed.wrapping_add(replica as u64);
                Mesh::random(x_min, x_max, config.base_cells / 2, 1, seed)?
            }
        }
    };
    let mut meshes = vec![Arc::new(base)];
    for _ in 1..config.levels {
        let next = meshes.last().expect("non-empty").refine();
        meshes.push(Arc::new(next));
    }
    Ok(meshes)
}

/// Runs `f` over `items`, concurrently when the `parallel` feature is on.
/// Output order always matches input order.
pub fn parallel_map<T, R, F>(items: Vec<T>, threads: Option<usize>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads != Some(1) && items.len() > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            return pool.install(|| items.into_par_iter().map(&f).collect());
        }
    }
    let _ = threads;
    items.into_iter().map(f).collect()
}

fn run_to(op: &FluxOperator, initial: &GridFunction, method: Method, dt: f64, t_end: f64) -> Result<GridFunction> {
    let plan = TimeStepPlan::new(method, dt.min(t_end.max(dt * 1e-300)), t_end)?;
    Ok(integrate_with(op, initial, &plan)?.final_state().clone())
}

/// Picks the time step on the coarsest mesh (see [`DtChoice::Auto`]).
pub fn auto_dt(setup: &CaseSetup, meshes: &[Arc<Mesh>], method: Method, fraction: f64) -> Result<f64> {
    let t_end = setup.t_end;
    if t_end == 0.0 {
        return Ok(1.0);
    }
    let coarse = &meshes[0];
    let op = FluxOperator::new(Arc::clone(coarse), setup.kinetics);
    let initial = project(&setup.initial, coarse, PROJECTION_TOL)?;
    let reference = match setup.analytic {
        Some(case) => Some(project(&case.at(t_end), coarse, PROJECTION_TOL)?),
        None => None,
    };
    let strict = |dt: f64| -> Option<GridFunction> {
        let plan = TimeStepPlan::new(method, dt, t_end)
            .ok()?
            .with_policy(NonnegativityPolicy::Reject);
        integrate_with(&op, &initial, &plan).ok().map(|t| t.final_state().clone())
    };
    let levels = meshes.len() as i32;
    let mut spatial_fine: Option<f64> = None;
    let mut dt = t_end / 4.0;
    let mut a = strict(dt);
    for _ in 0..40 {
        let b = strict(0.5 * dt);
        if let (Some(ga), Some(gb)) = (&a, &b) {
            let temporal = relative_error(ga, gb).unwrap_or(0.0);
            let spatial = match &reference {
                Some(r) => relative_error(gb, r)?,
                None => match spatial_fine {
                    Some(s) => s,
                    None => {
                        // Relative nested difference to the next level at this step size.
                        let s = if meshes.len() > 1 {
                            let op1 = FluxOperator::new(Arc::clone(&meshes[1]), setup.kinetics);
                            let init1 = project(&setup.initial, &meshes[1], PROJECTION_TOL)?;
                            let g1 = run_to(&op1, &init1, method, 0.5 * dt, t_end)?;
                            let norm: f64 = gb.numbers().iter().map(|v| v.abs()).sum();
                            nested_difference(gb, &g1)? / norm.max(f64::MIN_POSITIVE)
                        } else {
                            1e-6
                        };
                        spatial_fine = Some(s);
                        s
                    }
                },
            };
            let target = fraction * spatial / 4f64.powi(levels - 1);
            if temporal <= target {
                return Ok(dt);
            }
        }
        dt *= 0.5;
        a = b;
    }
    Err(Error::Divergence { step: 0, t: 0.0 })
}

struct LevelOutcome {
    state: GridFunction,
    error: Option<f64>,
    steps: usize,
}

/// Builds meshes, integrates every level (and replica), and computes errors and EOCs.
pub fn run_eoc_study(config: &StudyConfig) -> Result<EocReport> {
    let mut setup = config.case.setup(&config.params)?;
    if let Some(t) = config.t_end {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("t_end must be non-negative, got {t}")));
        }
        setup.t_end = t;
    }
    let replicas = if config.family == MeshFamily::Random {
        config.replicas.max(1)
    } else {
        1
    };
    let meshes: Vec<Vec<Arc<Mesh>>> = (0..replicas)
        .map(|r| study_meshes(config, setup.x_min, setup.x_max, r))
        .collect::<Result<_>>()?;
    let dt = match config.dt {
        DtChoice::Fixed(dt) => {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
            dt
        }
        DtChoice::Auto { fraction } => auto_dt(&setup, &meshes[0], config.method, fraction)?,
    };
    log::info!("{} on {} meshes: dt = {dt:e}", config.case, config.family);

    let jobs: Vec<(usize, usize)> = (0..replicas)
        .flat_map(|r| (0..config.levels).map(move |l| (r, l)))
        .collect();
    let outcomes = parallel_map(jobs, config.threads, |(r, l)| {
        let mesh = &meshes[r][l];
        let op = FluxOperator::new(Arc::clone(mesh), setup.kinetics);
        let initial = project(&setup.initial, mesh, PROJECTION_TOL)?;
        let plan = TimeStepPlan::new(config.method, dt.min(setup.t_end.max(dt * 1e-300)), setup.t_end)?;
        let traj = integrate_with(&op, &initial, &plan)?;
        let state = traj.final_state().clone();
        let error = match setup.analytic {
            Some(case) => Some(relative_error(&state, &project(&case.at(setup.t_end), mesh, PROJECTION_TOL)?)?),
            None => None,
        };
        Ok(LevelOutcome {
            state,
            error,
            steps: traj.steps,
        })
    })?;
    let outcome = |r: usize, l: usize| &outcomes[r * config.levels + l];

    let error_kind = if setup.analytic.is_some() {
        ErrorKind::RelativeL1
    } else {
        ErrorKind::NestedDifference
    };
    let mut rows = Vec::with_capacity(config.levels);
    for l in 0..config.levels {
        let replica_errors: Vec<f64> = match error_kind {
            ErrorKind::RelativeL1 => (0..replicas).map(|r| outcome(r, l).error.unwrap_or(f64::NAN)).collect(),
            ErrorKind::NestedDifference if l == 0 => Vec::new(),
            ErrorKind::NestedDifference => (0..replicas)
                .map(|r| nested_difference(&outcome(r, l - 1).state, &outcome(r, l).state))
                .collect::<Result<_>>()?,
        };
        let error = (!replica_errors.is_empty())
            .then(|| replica_errors.iter().sum::<f64>() / replica_errors.len() as f64);
        let m0 = (0..replicas).map(|r| outcome(r, l).state.moment(0)).sum::<f64>() / replicas as f64;
        let m1 = (0..replicas).map(|r| outcome(r, l).state.moment(1)).sum::<f64>() / replicas as f64;
        rows.push(LevelRow {
            cells: meshes[0][l].cells(),
            error,
            eoc: None,
            replica_errors,
            m0,
            m1,
        });
    }
    for l in 1..rows.len() {
        if let (Some(a), Some(b)) = (rows[l - 1].error, rows[l].error) {
            rows[l].eoc = eoc_known(a, b).ok();
        }
    }
    Ok(EocReport {
        case: config.case,
        family: config.family,
        error_kind,
        x_min: setup.x_min,
        x_max: setup.x_max,
        t_end: setup.t_end,
        kinetics: setup.kinetics,
        method: config.method,
        dt,
        steps: outcome(0, 0).steps,
        replicas,
        seed: config.seed,
        rows,
    })
}
