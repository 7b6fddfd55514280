//! Invariant suite: structural properties of meshes, kernels and the discrete
//! operator, plus short runs checking conservation, monotonicity and bounds.
//!
//! Every check is deterministic for a fixed seed.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cases::{CaseParams, TestCase};
use crate::discretization::FluxOperator;
use crate::error::Result;
use crate::integrate::{integrate_with, number_bound_check, Method, TimeStepPlan};
use crate::kinetics::{Aggregation, Breakage, KineticsSet, Selection};
use crate::mesh::{AlphaTable, Mesh, MeshFamily};
use crate::profiles::{analytic_solution, project, GridFunction, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    /// Random states (or pairs) per sampled property.
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 1000, seed: 2024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,passed,detail\n");
        for c in &self.checks {
            let _ = writeln!(out, "{},{},\"{}\"", c.name, c.passed, c.detail.replace('"', "'"));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{:<4} {:<28} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        }
        let failed = self.failures().len();
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), failed);
        out
    }
}

/// Meshes of all four families on `]x_min, x_max]` with `cells` cells (even).
pub fn sample_meshes(x_min: f64, x_max: f64, cells: usize, seed: u64) -> Result<Vec<Arc<Mesh>>> {
    Ok(vec![
        Arc::new(Mesh::uniform(x_min, x_max, cells)?),
        Arc::new(Mesh::geometric(x_min, x_max, cells)?),
        Arc::new(Mesh::oscillatory(x_min, x_max, cells / 2, 1, 2.0)?),
        Arc::new(Mesh::random(x_min, x_max, cells / 2, 1, seed)?),
    ])
}

/// Random nonnegative state with total number `total`; about a fifth of the cells are empty.
pub fn random_state(mesh: &Arc<Mesh>, rng: &mut impl Rng, total: f64) -> GridFunction {
    let mut numbers: Vec<f64> = (0..mesh.cells())
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    let sum: f64 = numbers.iter().sum();
    if sum > 0.0 {
        numbers.iter_mut().for_each(|v| *v *= total / sum);
    }
    GridFunction::from_numbers(Arc::clone(mesh), &numbers, 0.0).expect("finite numbers")
}

/// Kinetics used for sampled operator properties: every kernel type appears.
pub fn sample_kinetics() -> Vec<KineticsSet> {
    let k = |a, s, b| KineticsSet::new(a, s, b).expect("valid kinetics");
    vec![
        k(Aggregation::Sum, Selection::Linear, Breakage::Binary),
        k(Aggregation::Product, Selection::Quadratic, Breakage::DiemerOlson { p: 4, c: 2 }),
        k(Aggregation::Constant { beta0: 2.0 }, Selection::Quadratic, Breakage::ZiffTernary),
    ]
}

fn l1(v: &[f64], mesh: &Mesh) -> f64 {
    v.iter().zip(mesh.widths()).map(|(a, w)| a.abs() * w).sum()
}

/// Worst relative deviation between the telescoped and the direct assembly.
pub fn dual_path_deviation(op: &FluxOperator, n: &GridFunction) -> Result<f64> {
    let a = op.rhs(n)?;
    let b = op.rhs_direct(n)?;
    let scale = a.iter().chain(&b).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// `|Σ x_i Δx_i rhs_i + J^agg_{I+1/2} + J^brk_{I+1/2}|`, relative to the largest face flux.
pub fn mass_balance_defect(op: &FluxOperator, n: &GridFunction) -> Result<f64> {
    let rhs = op.rhs(n)?;
    let f = op.fluxes(n)?;
    let mesh = op.mesh();
    let cells = mesh.cells();
    let rate: f64 = (0..cells).map(|i| mesh.pivots()[i] * mesh.widths()[i] * rhs[i]).sum();
    let boundary = f.total(cells);
    let scale = f
        .agg
        .iter()
        .chain(&f.brk)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(n.moment(1) * f64::MIN_POSITIVE);
    Ok(if scale > 0.0 { (rate + boundary).abs() / scale } else { 0.0 })
}

/// `rhs_i / scale_i` at a zeroed component, where `scale_i` is the size of the
/// face fluxes entering that component; nonnegative up to roundoff.
pub fn zeroed_component_rate(op: &FluxOperator, n: &GridFunction, i: usize) -> Result<f64> {
    let mut values = n.values().to_vec();
    values[i] = 0.0;
    let g = GridFunction::new(Arc::clone(op.mesh()), values, n.t())?;
    let rhs = op.rhs(&g)?;
    let f = op.fluxes(&g)?;
    let mesh = op.mesh();
    let scale = [f.agg[i], f.agg[i + 1], f.brk[i], f.brk[i + 1]]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        / (mesh.pivots()[i] * mesh.widths()[i]);
    Ok(if scale > 0.0 { rhs[i] / scale } else { rhs[i].max(0.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzOutcome {
    pub pairs: usize,
    pub violations: usize,
    /// Largest observed `‖rhs(n) - rhs(m)‖ / (L ‖n - m‖)`.
    pub worst_ratio: f64,
    pub constant: f64,
}

/// Samples state pairs whose total number is at most `C_{T,x_max}` with `N̂(0) = 1`, `T = 1`.
pub fn lipschitz_check(mesh: &Arc<Mesh>, kinetics: &KineticsSet, pairs: usize, seed: u64) -> Result<LipschitzOutcome> {
    let bounds = kinetics.estimate_bounds(mesh.x_max(), 512);
    let c_t = (mesh.x_max() * bounds.q1).exp();
    let op = FluxOperator::new(Arc::clone(mesh), *kinetics);
    let constant = op.lipschitz_bound(bounds.q, bounds.q1, c_t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..pairs {
        let (tn, tm) = (c_t * rng.gen::<f64>(), c_t * rng.gen::<f64>());
        let n = random_state(mesh, &mut rng, tn);
        let m = random_state(mesh, &mut rng, tm);
        let rn = op.rhs(&n)?;
        let rm = op.rhs(&m)?;
        let dr: Vec<f64> = rn.iter().zip(&rm).map(|(a, b)| a - b).collect();
        let dn: Vec<f64> = n.values().iter().zip(m.values()).map(|(a, b)| a - b).collect();
        let lhs = l1(&dr, mesh);
        let rhs = constant * l1(&dn, mesh);
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
        if lhs > rhs * (1.0 + 1e-12) {
            violations += 1;
        }
    }
    Ok(LipschitzOutcome {
        pairs,
        violations,
        worst_ratio,
        constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonnegativityOutcome {
    pub states: usize,
    pub violations: usize,
    /// Most negative `rhs_i / scale_i` observed.
    pub worst: f64,
}

pub fn nonnegativity_check(mesh: &Arc<Mesh>, kinetics: &KineticsSet, states: usize, seed: u64) -> Result<NonnegativityOutcome> {
    let op = FluxOperator::new(Arc::clone(mesh), *kinetics);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..states {
        let total = 10f64.powf(rng.gen_range(-3.0..3.0));
        let n = random_state(mesh, &mut rng, total);
        let i = rng.gen_range(0..mesh.cells());
        let r = zeroed_component_rate(&op, &n, i)?;
        worst = worst.min(r);
        if r < -1e-14 {
            violations += 1;
        }
    }
    Ok(NonnegativityOutcome {
        states,
        violations,
        worst,
    })
}

fn check(name: &'static str, result: Result<(bool, String)>) -> Check {
    match result {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn mesh_invariants(seed: u64) -> Result<(bool, String)> {
    let mut problems = Vec::new();
    for base in sample_meshes(1e-3, 1.0, 60, seed)? {
        let mut mesh = (*base).clone();
        for _ in 0..3 {
            let e = mesh.edges();
            let ok = e.windows(2).all(|w| w[1] > w[0])
                && mesh.widths().iter().all(|&w| w > 0.0)
                && mesh.pivots().iter().zip(e.windows(2)).all(|(p, w)| w[0] < *p && *p < w[1])
                && ((mesh.widths().iter().sum::<f64>() - (mesh.x_max() - mesh.x_min())).abs()
                    <= 1e-13 * (mesh.x_max() - mesh.x_min()));
            let family_ok = match mesh.family() {
                MeshFamily::Uniform => {
                    let w0 = mesh.widths()[0];
                    mesh.widths().iter().all(|w| (w - w0).abs() <= 1e-12 * w0)
                }
                MeshFamily::Geometric => {
                    let r = e[1] / e[0];
                    e.windows(2).all(|w| (w[1] / w[0] - r).abs() <= 1e-12 * r)
                }
                _ => true,
            };
            if !(ok && family_ok) {
                problems.push(format!("{} I={}", mesh.family(), mesh.cells()));
            }
            let fine = mesh.refine();
            if !fine.is_refinement_of(&mesh, 1e-12) {
                problems.push(format!("{} I={} not nested", mesh.family(), fine.cells()));
            }
            mesh = fine;
        }
    }
    Ok((problems.is_empty(), if problems.is_empty() { "4 families x 3 levels".into() } else { problems.join("; ") }))
}

fn alpha_invariants(seed: u64) -> Result<(bool, String)> {
    let mut worst_excess = 0i64;
    let mut membership_failures = 0usize;
    for mesh in sample_meshes(1e-3, 1.0, 60, seed)? {
        let table = AlphaTable::build(&mesh);
        let e = mesh.edges();
        for i in 1..=mesh.cells() {
            for k in 1..=i {
                let offset = e[i] - mesh.pivots()[k - 1];
                let a = table.alpha(i, k);
                let ok = if table.is_clamped(i, k) {
                    offset <= e[0] && a == 2
                } else {
                    (2..=mesh.cells() + 1).contains(&a) && e[a - 2] < offset && offset <= e[a - 1]
                };
                if !ok {
                    membership_failures += 1;
                }
            }
        }
        let c = table.quasi_uniformity();
        worst_excess = worst_excess.max(table.max_repetition() as i64 - (c.floor() as i64 + 1));
    }
    Ok((
        membership_failures == 0 && worst_excess <= 0,
        format!("membership failures {membership_failures}, repetition excess over C+1: {worst_excess}"),
    ))
}

fn kernel_identities(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut breakages = vec![Breakage::Binary, Breakage::ZiffTernary];
    for p in 2..=19 {
        breakages.push(Breakage::DiemerOlson { p, c: 2 });
    }
    breakages.push(Breakage::DiemerOlson { p: 4, c: 0 });
    let mut worst_mass = 0.0f64;
    let mut worst_spread = 0.0f64;
    let mut count_mismatch = Vec::new();
    let mut ziff_count = f64::NAN;
    for b in breakages {
        let k = KineticsSet::breakage_only(Selection::Linear, b)?;
        let mut counts = Vec::new();
        for _ in 0..10 {
            let y = 10f64.powf(rng.gen_range(-3.0..0.0));
            worst_mass = worst_mass.max((k.mass_moment_check(y, 1e-12)? - y).abs() / y);
            counts.push(k.fragment_count(y, 1e-12)?);
        }
        let (lo, hi) = counts.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
        worst_spread = worst_spread.max((hi - lo) / hi);
        let expected = match b {
            Breakage::Binary => Some(2.0),
            Breakage::DiemerOlson { p, .. } => Some(f64::from(p)),
            _ => None,
        };
        if let Some(n) = expected {
            if (counts[0] - n).abs() > 1e-8 * n {
                count_mismatch.push(format!("{b}: {}", counts[0]));
            }
        } else {
            ziff_count = counts[0];
        }
    }
    let mut symmetric = true;
    for a in [Aggregation::Constant { beta0: 1.5 }, Aggregation::Sum, Aggregation::Product] {
        for _ in 0..100 {
            let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>() * 1e3);
            symmetric &= a.eval(x, y) == a.eval(y, x);
        }
    }
    let passed = worst_mass <= 1e-8 && worst_spread <= 1e-8 && count_mismatch.is_empty() && symmetric;
    Ok((
        passed,
        format!(
            "mass moment rel dev {worst_mass:.1e}, count spread {worst_spread:.1e}, ziff count {ziff_count:.6}, beta symmetric {symmetric}{}",
            if count_mismatch.is_empty() { String::new() } else { format!(", mismatches: {}", count_mismatch.join(", ")) }
        ),
    ))
}

fn kernel_bounds(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = true;
    for k in sample_kinetics() {
        for x_max in [1.0, 10.0, 1000.0] {
            let b = k.estimate_bounds(x_max, 64);
            for _ in 0..2000 {
                let y = x_max * rng.gen::<f64>().max(1e-12);
                let x = y * rng.gen::<f64>().max(1e-12);
                ok &= k.eval_beta(x, y) <= b.q;
                ok &= k.eval_breakage(x, y)? * k.eval_selection(y) <= b.q1 * (1.0 + 1e-12);
            }
        }
    }
    Ok((ok, "Q >= beta and Q1 >= b S on random samples".into()))
}

fn operator_checks(config: &VerifyConfig) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let meshes = sample_meshes(1e-3, 1.0, 40, config.seed)?;
    let kinetics = sample_kinetics();
    let per_combo = (config.samples / (meshes.len() * kinetics.len())).max(1);
    let mut dual = 0.0f64;
    let mut balance = 0.0f64;
    for mesh in &meshes {
        for k in &kinetics {
            let op = FluxOperator::new(Arc::clone(mesh), *k);
            for _ in 0..per_combo {
                let total = 10f64.powf(rng.gen_range(-2.0..2.0));
                let n = random_state(mesh, &mut rng, total);
                dual = dual.max(dual_path_deviation(&op, &n)?);
                balance = balance.max(mass_balance_defect(&op, &n)?);
            }
        }
    }
    let mut out = vec![
        Check {
            name: "dual_path_assembly",
            passed: dual <= 1e-12,
            detail: format!("max relative deviation {dual:.2e} (limit 1e-12)"),
        },
        Check {
            name: "discrete_mass_balance",
            passed: balance <= 1e-13,
            detail: format!("max defect relative to face fluxes {balance:.2e} (limit 1e-13)"),
        },
    ];
    let geo = Arc::new(Mesh::geometric(1e-3, 1.0, 60)?);
    let mut worst_nn = f64::INFINITY;
    let mut nn_viol = 0;
    let mut worst_lip = 0.0f64;
    let mut lip_viol = 0;
    for (s, k) in kinetics.iter().enumerate() {
        let seed = config.seed.wrapping_add(s as u64 + 1);
        let nn = nonnegativity_check(&geo, k, config.samples, seed)?;
        worst_nn = worst_nn.min(nn.worst);
        nn_viol += nn.violations;
        let lip = lipschitz_check(&geo, k, config.samples, seed)?;
        worst_lip = worst_lip.max(lip.worst_ratio);
        lip_viol += lip.violations;
    }
    out.push(Check {
        name: "nonnegativity_condition",
        passed: nn_viol == 0,
        detail: format!("{nn_viol} violations, most negative scaled rate {worst_nn:.2e}"),
    });
    out.push(Check {
        name: "lipschitz_bound",
        passed: lip_viol == 0,
        detail: format!("{lip_viol} violations, largest ratio to L {worst_lip:.2e}"),
    });
    Ok(out)
}

fn breakage_conservation(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for mesh in sample_meshes(1e-3, 1.0, 60, seed)? {
        for b in [Breakage::Binary, Breakage::DiemerOlson { p: 4, c: 2 }, Breakage::ZiffTernary] {
            let k = KineticsSet::breakage_only(Selection::Quadratic, b)?;
            let op = FluxOperator::new(Arc::clone(&mesh), k);
            let n0 = project(&Profile::Normal { mu: 0.4, sigma: 0.1 }, &mesh, 1e-10)?;
            let traj = integrate_with(&op, &n0, &TimeStepPlan::new(Method::Rk4, 1.0, 50.0)?.record_every(10))?;
            for s in &traj.snapshots {
                worst = worst.max((s.m1 - traj.initial().m1).abs() / traj.initial().m1);
            }
        }
    }
    Ok((worst <= 1e-11, format!("max relative mass drift {worst:.2e} (limit 1e-11)")))
}

fn aggregation_monotonicity(seed: u64) -> Result<(bool, String)> {
    let mut worst_increase = 0.0f64;
    let mut worst_balance = 0.0f64;
    for mesh in sample_meshes(1e-2, 10.0, 60, seed)? {
        let k = KineticsSet::new(Aggregation::Product, Selection::Linear, Breakage::Binary)?;
        let op = FluxOperator::new(Arc::clone(&mesh), k);
        let n0 = project(&Profile::Exponential { alpha: 1.0 }, &mesh, 1e-10)?;
        let traj = integrate_with(&op, &n0, &TimeStepPlan::new(Method::Rk4, 0.01, 0.5)?)?;
        for w in traj.snapshots.windows(2) {
            worst_increase = worst_increase.max((w[1].m1 - w[0].m1) / traj.initial().m1);
        }
        let decrement = traj.initial().m1 - traj.last().m1;
        worst_balance = worst_balance.max((decrement - traj.integrated_outflow).abs() / decrement.abs().max(1e-300));
    }
    Ok((
        worst_increase <= 1e-14 && worst_balance <= 1e-10,
        format!("largest M1 increase {worst_increase:.1e}, outflow balance {worst_balance:.1e}"),
    ))
}

fn number_bounds() -> Result<(bool, String)> {
    let mut worst = f64::INFINITY;
    let mut all = true;
    for case in TestCase::ALL {
        let s = case.setup(&CaseParams::default())?;
        let mesh = Arc::new(Mesh::geometric(s.x_min, s.x_max, 60)?);
        let op = FluxOperator::new(Arc::clone(&mesh), s.kinetics);
        let n0 = project(&s.initial, &mesh, 1e-10)?;
        let dt = s.t_end / 200.0;
        let traj = integrate_with(&op, &n0, &TimeStepPlan::new(Method::Rk4, dt, s.t_end)?.record_every(10))?;
        let c = number_bound_check(&traj, &s.kinetics, s.x_max, s.t_end);
        all &= c.passed;
        worst = worst.min(c.worst_margin);
    }
    Ok((all, format!("all cases within the number bound, smallest margin {worst:.3e}")))
}

fn analytic_oracles() -> Result<(bool, String)> {
    use crate::profiles::{AnalyticCase, LageInitial};
    let cases = [
        AnalyticCase::AggSum { alpha: 10.0 },
        AnalyticCase::AggProduct { alpha: 10.0 },
        AnalyticCase::BrkBinaryLinear { x0: 1.0 },
        AnalyticCase::BrkBinaryQuadratic { x0: 1.0 },
        AnalyticCase::CombinedConstantBinaryLinear { n0: 1.0, x0: 1.0, initial: LageInitial::Gamma },
        AnalyticCase::CombinedConstantBinaryLinear { n0: 1.0, x0: 1.0, initial: LageInitial::Exponential },
    ];
    let mut worst_t0 = 0.0f64;
    let mut negative = false;
    for case in cases {
        let init = case.initial_profile();
        for s in 1..50 {
            let x = 0.02 * f64::from(s);
            let a = analytic_solution(&case, x, 0.0)?;
            let b = init.density(x);
            if !init.atoms().is_empty() {
                continue;
            }
            worst_t0 = worst_t0.max((a - b).abs() / b.abs().max(1e-300));
            for t in [0.1, 0.3, 1.0] {
                negative |= analytic_solution(&case, x, t)? < 0.0;
            }
        }
    }
    Ok((
        worst_t0 <= 1e-12 && !negative,
        format!("t = 0 deviation {worst_t0:.1e}, negative values {negative}"),
    ))
}

fn coarsening(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for coarse in sample_meshes(1e-3, 1.0, 60, seed)? {
        let fine = Arc::new(coarse.refine());
        let p = Profile::Normal { mu: 0.4, sigma: 0.1 };
        let g = project(&p, &fine, 1e-12)?;
        let summed = crate::convergence::coarsen_numbers(&g, &coarse)?;
        let direct = project(&p, &coarse, 1e-12)?.numbers();
        let total: f64 = direct.iter().sum();
        worst = worst.max((summed.iter().sum::<f64>() - g.numbers().iter().sum::<f64>()).abs() / total);
        for (a, b) in summed.iter().zip(&direct) {
            worst = worst.max((a - b).abs() / total);
        }
    }
    Ok((worst <= 1e-10, format!("largest relative mismatch {worst:.1e}")))
}

/// Runs the whole suite.
pub fn run_verify(config: &VerifyConfig) -> VerifyReport {
    let mut checks = vec![
        check("mesh_invariants", mesh_invariants(config.seed)),
        check("alpha_table", alpha_invariants(config.seed)),
        check("kernel_identities", kernel_identities(config.seed)),
        check("kernel_bounds", kernel_bounds(config.seed)),
    ];
    match operator_checks(config) {
        Ok(c) => checks.extend(c),
        Err(e) => checks.push(Check {
            name: "operator_properties",
            passed: false,
            detail: format!("error: {e}"),
        }),
    }
    checks.push(check("breakage_mass_conservation", breakage_conservation(config.seed)));
    checks.push(check("aggregation_mass_monotone", aggregation_monotonicity(config.seed)));
    checks.push(check("number_bound", number_bounds()));
    checks.push(check("analytic_solutions", analytic_oracles()));
    checks.push(check("coarsening", coarsening(config.seed)));
    VerifyReport {
        config: *config,
        checks,
    }
}
