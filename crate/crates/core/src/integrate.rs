//! Explicit Runge–Kutta integration of the semi-discrete system.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{FluxOperator, Workspace};
use crate::error::{Error, Result};
use crate::kinetics::KineticsSet;
use crate::profiles::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    /// Heun's method (explicit trapezoidal rule).
    Rk2,
    #[default]
    Rk4,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Euler => 1,
            Method::Rk2 => 2,
            Method::Rk4 => 4,
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Method::Euler),
            "rk2" | "heun" => Ok(Method::Rk2),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::Config(format!("unknown time integrator '{other}'"))),
        }
    }
}

/// What to do when a step produces a negative cell average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonnegativityPolicy {
    /// Fail with a step-size error.
    Reject,
    /// Log and count, leave the state untouched.
    #[default]
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepPlan {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    /// Record a snapshot every this many steps; the final state is always recorded.
    pub record_every: usize,
    pub nonnegativity: NonnegativityPolicy,
}

impl TimeStepPlan {
    pub fn new(method: Method, dt: f64, t_end: f64) -> Result<Self> {
        let plan = Self {
            method,
            dt,
            t_end,
            record_every: usize::MAX,
            nonnegativity: NonnegativityPolicy::Warn,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn record_every(mut self, steps: usize) -> Self {
        self.record_every = steps.max(1);
        self
    }

    pub fn with_policy(mut self, policy: NonnegativityPolicy) -> Self {
        self.nonnegativity = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        Ok(())
    }

    /// Number of steps; only the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        if self.t_end == 0.0 {
            return 0;
        }
        let raw = self.t_end / self.dt;
        // Absorb a ratio that is integral up to roundoff.
        let rounded = raw.round();
        if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
            (rounded as usize).max(1)
        } else {
            raw.ceil() as usize
        }
    }

    fn time_at(&self, step: usize, steps: usize) -> f64 {
        if step >= steps {
            self.t_end
        } else {
            step as f64 * self.dt
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: GridFunction,
    /// Total number `N̂(t) = Σ n̂_i Δx_i`.
    pub m0: f64,
    /// Total mass `Σ x_i n̂_i Δx_i`.
    pub m1: f64,
    /// Mass outflow `J^agg_{I+1/2} + J^brk_{I+1/2}` of this state.
    pub outflow: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    /// Outflow integrated with the weights of the Runge–Kutta method, so that
    /// `M1(0) - M1(t_end)` equals it up to roundoff.
    pub integrated_outflow: f64,
    /// Steps after which some cell average was negative.
    pub negative_steps: usize,
    pub min_value: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    pub fn final_state(&self) -> &GridFunction {
        &self.last().state
    }

    /// Outflow integrated by the trapezoidal rule over the recorded snapshots.
    pub fn trapezoid_outflow(&self) -> f64 {
        self.snapshots
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].outflow + w[1].outflow))
            .sum()
    }

    /// Long-format CSV `t,i,x,dx,n` of every snapshot.
    pub fn states_csv(&self) -> String {
        let mut out = String::from("t,i,x,dx,n\n");
        for s in &self.snapshots {
            let mesh = s.state.mesh();
            for (i, ((x, w), v)) in mesh
                .pivots()
                .iter()
                .zip(mesh.widths())
                .zip(s.state.values())
                .enumerate()
            {
                let _ = writeln!(out, "{:e},{},{x:e},{w:e},{v:e}", s.t, i + 1);
            }
        }
        out
    }

    /// CSV `t,m0,m1,outflow`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("t,m0,m1,outflow\n");
        for s in &self.snapshots {
            let _ = writeln!(out, "{:e},{:e},{:e},{:e}", s.t, s.m0, s.m1, s.outflow);
        }
        out
    }
}

struct Stepper<'a> {
    op: &'a FluxOperator,
    ws: Workspace,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(op: &'a FluxOperator) -> Self {
        let cells = op.mesh().cells();
        Self {
            op,
            ws: Workspace::default(),
            k: std::array::from_fn(|_| vec![0.0; cells]),
            stage: vec![0.0; cells],
        }
    }

    fn eval(&mut self, which: usize, from_stage: bool, n: &[f64]) -> f64 {
        let input: &[f64] = if from_stage { &self.stage } else { n };
        self.op.rhs_into(input, &mut self.ws, &mut self.k[which])
    }

    /// Advances `n` by `h`; returns the method-weighted outflow and the outflow of the initial state.
    fn step(&mut self, method: Method, n: &mut [f64], h: f64) -> (f64, f64) {
        let o1 = self.eval(0, false, n);
        match method {
            Method::Euler => {
                for (v, k) in n.iter_mut().zip(&self.k[0]) {
                    *v += h * k;
                }
                (o1, o1)
            }
            Method::Rk2 => {
                self.combine(n, &[(0, h)]);
                let o2 = self.eval(1, true, n);
                for i in 0..n.len() {
                    n[i] += 0.5 * h * (self.k[0][i] + self.k[1][i]);
                }
                (0.5 * (o1 + o2), o1)
            }
            Method::Rk4 => {
                self.combine(n, &[(0, 0.5 * h)]);
                let o2 = self.eval(1, true, n);
                self.combine(n, &[(1, 0.5 * h)]);
                let o3 = self.eval(2, true, n);
                self.combine(n, &[(2, h)]);
                let o4 = self.eval(3, true, n);
                let sixth = h / 6.0;
                for i in 0..n.len() {
                    n[i] += sixth * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
                }
                ((o1 + 2.0 * o2 + 2.0 * o3 + o4) / 6.0, o1)
            }
        }
    }

    fn combine(&mut self, n: &[f64], parts: &[(usize, f64)]) {
        self.stage.copy_from_slice(n);
        for &(which, c) in parts {
            for (s, k) in self.stage.iter_mut().zip(&self.k[which]) {
                *s += c * k;
            }
        }
    }
}

fn snapshot(state: GridFunction, outflow: f64) -> Snapshot {
    let m0 = state.moment(0);
    let m1 = state.moment(1);
    Snapshot {
        t: state.t(),
        state,
        m0,
        m1,
        outflow,
    }
}

/// Integrates with a freshly built flux operator.
pub fn integrate(initial: &GridFunction, kinetics: &KineticsSet, plan: &TimeStepPlan) -> Result<Trajectory> {
    let op = FluxOperator::new(Arc::clone(initial.mesh()), *kinetics);
    integrate_with(&op, initial, plan)
}

pub fn integrate_with(op: &FluxOperator, initial: &GridFunction, plan: &TimeStepPlan) -> Result<Trajectory> {
    plan.validate()?;
    if initial.mesh().edges() != op.mesh().edges() {
        return Err(Error::Contract("initial state lives on a different mesh".into()));
    }
    if let Some(i) = initial.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Config(format!("initial state is negative in cell {}", i + 1)));
    }
    let mesh = Arc::clone(op.mesh());
    let steps = plan.steps();
    let mut n = initial.values().to_vec();
    let mut stepper = Stepper::new(op);
    let mut snapshots = vec![snapshot(initial.clone(), f64::NAN)];
    let mut integrated_outflow = 0.0;
    let mut negative_steps = 0;
    let mut min_value = n.iter().copied().fold(f64::INFINITY, f64::min);

    for step in 1..=steps {
        let t0 = plan.time_at(step - 1, steps);
        let t1 = plan.time_at(step, steps);
        let (weighted, start_outflow) = stepper.step(plan.method, &mut n, t1 - t0);
        integrated_outflow += (t1 - t0) * weighted;
        let last = snapshots.last_mut().expect("non-empty");
        if last.outflow.is_nan() && last.t == t0 {
            last.outflow = start_outflow;
        }

        let mut scale = 0.0f64;
        let mut worst = (f64::INFINITY, 0);
        for (i, &v) in n.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Divergence { step, t: t1 });
            }
            scale = scale.max(v.abs());
            if v < worst.0 {
                worst = (v, i);
            }
        }
        min_value = min_value.min(worst.0);
        if worst.0 < -1e-12 * scale {
            match plan.nonnegativity {
                NonnegativityPolicy::Reject => {
                    return Err(Error::StepSize {
                        step,
                        t: t1,
                        cell: worst.1 + 1,
                        value: worst.0,
                    })
                }
                NonnegativityPolicy::Warn => {
                    if negative_steps == 0 {
                        log::warn!(
                            "negative value {:.3e} in cell {} at t = {t1}; consider a smaller dt",
                            worst.0,
                            worst.1 + 1
                        );
                    }
                    negative_steps += 1;
                }
            }
        }

        if step % plan.record_every == 0 || step == steps {
            let state = GridFunction::new(Arc::clone(&mesh), n.clone(), t1)?;
            snapshots.push(snapshot(state, f64::NAN));
        }
    }

    let last = snapshots.last_mut().expect("non-empty");
    if last.outflow.is_nan() {
        let mut tmp = vec![0.0; n.len()];
        last.outflow = op.rhs_into(&n, &mut Workspace::default(), &mut tmp);
    }
    Ok(Trajectory {
        snapshots,
        steps,
        integrated_outflow,
        negative_steps,
        min_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumberBoundCheck {
    pub passed: bool,
    /// `min_t (bound(t) - N̂(t)) / bound(t)` with the time-dependent bound `N̂(0) exp(x_max Q1 t)`.
    pub worst_margin: f64,
    /// `C_{T,x_max} = N̂(0) exp(x_max Q1 T)`.
    pub c_t_xmax: f64,
    pub q1: f64,
}

/// Checks `N̂(t) ≤ N̂(0) exp(x_max Q1 t)` at every snapshot, and reports `C_{T,x_max}`.
pub fn number_bound_check(traj: &Trajectory, kinetics: &KineticsSet, x_max: f64, t_final: f64) -> NumberBoundCheck {
    let q1 = kinetics.estimate_bounds(x_max, 256).q1;
    let n0 = traj.initial().m0;
    let mut passed = true;
    let mut worst_margin = f64::INFINITY;
    for s in &traj.snapshots {
        let bound = n0 * (x_max * q1 * s.t).exp();
        // Roundoff allowance relative to the initial number.
        if s.m0 > bound + 1e-12 * n0 {
            passed = false;
        }
        // At t = 0 the bound is attained by definition.
        if bound > 0.0 && s.t > 0.0 {
            worst_margin = worst_margin.min((bound - s.m0) / bound);
        }
    }
    if n0 == 0.0 || !worst_margin.is_finite() {
        worst_margin = 0.0;
    }
    NumberBoundCheck {
        passed,
        worst_margin,
        c_t_xmax: n0 * (x_max * q1 * t_final).exp(),
        q1,
    }
}

/// Relative L1 distance of the cell numbers of two states on the same mesh.
fn relative_number_distance(a: &[f64], b: &[f64], widths: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for ((x, y), w) in a.iter().zip(b).zip(widths) {
        diff += (x - y).abs() * w;
        norm += y.abs() * w;
    }
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Result of the time-step probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtProbe {
    pub dt: f64,
    /// Relative L1 self-difference between runs with `dt` and `dt/2`.
    pub self_difference: f64,
    pub halvings: u32,
}

/// Halves `dt` (starting from `dt0`) until the relative L1 difference of the final
/// cell numbers computed with `dt` and `dt/2` is at most `target`. Divergent or
/// negative runs count as not yet resolved.
pub fn probe_dt(
    op: &FluxOperator,
    initial: &GridFunction,
    method: Method,
    t_end: f64,
    dt0: f64,
    target: f64,
    max_halvings: u32,
) -> Result<DtProbe> {
    let run = |dt: f64| -> Option<Vec<f64>> {
        let plan = TimeStepPlan::new(method, dt.min(t_end.max(f64::MIN_POSITIVE)), t_end)
            .ok()?
            .with_policy(NonnegativityPolicy::Reject);
        integrate_with(op, initial, &plan).ok().map(|t| t.final_state().values().to_vec())
    };
    if t_end == 0.0 {
        return Ok(DtProbe {
            dt: dt0,
            self_difference: 0.0,
            halvings: 0,
        });
    }
    let widths = op.mesh().widths();
    let mut dt = dt0.min(t_end);
    let mut coarse = run(dt);
    for halvings in 0..=max_halvings {
        let fine = run(0.5 * dt);
        if let (Some(c), Some(f)) = (&coarse, &fine) {
            let d = relative_number_distance(c, f, widths);
            if d <= target {
                return Ok(DtProbe {
                    dt,
                    self_difference: d,
                    halvings,
                });
            }
        }
        dt *= 0.5;
        coarse = fine;
    }
    Err(Error::Divergence { step: 0, t: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{Aggregation, Breakage, Selection};
    use crate::mesh::Mesh;
    use crate::profiles::{project, AnalyticCase, LageInitial, Profile};
    use approx::assert_relative_eq;

    #[test]
    fn step_counts() {
        let p = TimeStepPlan::new(Method::Rk4, 0.1, 1.0).unwrap();
        assert_eq!(p.steps(), 10);
        let p = TimeStepPlan::new(Method::Rk4, 0.3, 1.0).unwrap();
        assert_eq!(p.steps(), 4);
        assert_eq!(p.time_at(4, 4), 1.0);
        assert_eq!(TimeStepPlan::new(Method::Rk4, 0.3, 0.0).unwrap().steps(), 0);
        assert!(TimeStepPlan::new(Method::Rk4, 0.0, 1.0).is_err());
        assert!(TimeStepPlan::new(Method::Rk4, 0.1, -1.0).is_err());
        assert_eq!("RK4".parse::<Method>().unwrap(), Method::Rk4);
        assert!("rk3".parse::<Method>().is_err());
    }

    fn breakage_setup(cells: usize) -> (GridFunction, KineticsSet) {
        let mesh = Arc::new(Mesh::uniform(1e-3, 1.0, cells).unwrap());
        let n = project(&Profile::Monodisperse { x0: 1.0 }, &mesh, 1e-10).unwrap();
        let k = KineticsSet::breakage_only(Selection::Linear, Breakage::Binary).unwrap();
        (n, k)
    }

    #[test]
    fn zero_horizon_returns_initial() {
        let (n, k) = breakage_setup(10);
        let plan = TimeStepPlan::new(Method::Rk4, 0.1, 0.0).unwrap();
        let traj = integrate(&n, &k, &plan).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
        assert_eq!(traj.final_state(), &n);
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn breakage_conserves_mass() {
        let (n, k) = breakage_setup(60);
        for method in [Method::Euler, Method::Rk2, Method::Rk4] {
            let plan = TimeStepPlan::new(method, 0.25, 20.0).unwrap().record_every(8);
            let traj = integrate(&n, &k, &plan).unwrap();
            let m1 = traj.initial().m1;
            for s in &traj.snapshots {
                assert!((s.m1 - m1).abs() <= 1e-12 * m1, "{method:?} t={}", s.t);
            }
            assert_eq!(traj.last().t, 20.0);
        }
    }

    /// `dM0/dt = M1` for binary breakage with `S = x`, so `M0(t) = 1 + t` on the
    /// untruncated domain; the midpoint rule matches it up to O(Δx²).
    #[test]
    fn breakage_number_follows_moment_ode() {
        let (n, k) = breakage_setup(240);
        let plan = TimeStepPlan::new(Method::Rk4, 0.1, 10.0).unwrap().record_every(10);
        let traj = integrate(&n, &k, &plan).unwrap();
        let mut prev = 0.0;
        for s in &traj.snapshots {
            assert!(s.m0 >= prev);
            prev = s.m0;
        }
        let m0 = traj.last().m0;
        assert!((m0 - 11.0).abs() < 2e-2 * 11.0, "M0 = {m0}");
    }

    #[test]
    fn aggregation_outflow_accounts_for_mass_loss() {
        let mesh = Arc::new(Mesh::geometric(1e-3, 10.0, 60).unwrap());
        let n = project(&Profile::Exponential { alpha: 1.0 }, &mesh, 1e-10).unwrap();
        let k = KineticsSet::aggregation_only(Aggregation::Sum);
        let plan = TimeStepPlan::new(Method::Rk4, 0.01, 1.0).unwrap().record_every(1);
        let traj = integrate(&n, &k, &plan).unwrap();
        let lost = traj.initial().m1 - traj.last().m1;
        assert!(lost > 0.0);
        assert_relative_eq!(lost, traj.integrated_outflow, max_relative = 1e-10);
        assert_relative_eq!(lost, traj.trapezoid_outflow(), max_relative = 1e-3);
        for w in traj.snapshots.windows(2) {
            assert!(w[1].m1 <= w[0].m1);
            assert!(w[1].m0 <= w[0].m0);
        }
    }

    #[test]
    fn bound_check_on_aggregation_and_zero_state() {
        let mesh = Arc::new(Mesh::geometric(1e-3, 10.0, 30).unwrap());
        let n = project(&Profile::Exponential { alpha: 1.0 }, &mesh, 1e-10).unwrap();
        let k = KineticsSet::aggregation_only(Aggregation::Sum);
        let plan = TimeStepPlan::new(Method::Rk4, 0.05, 1.0).unwrap().record_every(1);
        let traj = integrate(&n, &k, &plan).unwrap();
        let c = number_bound_check(&traj, &k, 10.0, 1.0);
        assert!(c.passed && c.q1 == 0.0);
        let zero = GridFunction::zeros(Arc::clone(&mesh), 0.0);
        let traj = integrate(&zero, &k, &plan).unwrap();
        assert!(number_bound_check(&traj, &k, 10.0, 1.0).passed);
    }

    #[test]
    fn reject_policy_reports_step_size() {
        let (n, k) = breakage_setup(60);
        // dt far beyond the stability limit of Euler for rates up to S(1) = 1.
        let plan = TimeStepPlan::new(Method::Euler, 5.0, 50.0)
            .unwrap()
            .with_policy(NonnegativityPolicy::Reject);
        assert!(matches!(integrate(&n, &k, &plan), Err(Error::StepSize { .. })));
    }

    #[test]
    fn rk4_time_order_on_combined_problem() {
        let mesh = Arc::new(Mesh::geometric(1e-2, 10.0, 30).unwrap());
        let case = AnalyticCase::CombinedConstantBinaryLinear { n0: 1.0, x0: 1.0, initial: LageInitial::Gamma };
        let n = project(&case.initial_profile(), &mesh, 1e-10).unwrap();
        let k = KineticsSet::new(Aggregation::Constant { beta0: 2.0 }, Selection::Linear, Breakage::Binary).unwrap();
        let op = FluxOperator::new(Arc::clone(&mesh), k);
        let run = |dt: f64| {
            let plan = TimeStepPlan::new(Method::Rk4, dt, 0.3).unwrap();
            integrate_with(&op, &n, &plan).unwrap().final_state().values().to_vec()
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let d1 = relative_number_distance(&a, &b, mesh.widths());
        let d2 = relative_number_distance(&b, &c, mesh.widths());
        assert!(d1 / d2 >= 8.0, "ratio {}", d1 / d2);
    }

    #[test]
    fn probe_finds_resolving_step() {
        let (n, k) = breakage_setup(30);
        let op = FluxOperator::new(Arc::clone(n.mesh()), k);
        let p = probe_dt(&op, &n, Method::Rk4, 10.0, 10.0, 1e-8, 20).unwrap();
        assert!(p.self_difference <= 1e-8);
        assert!(p.dt < 10.0);
    }
}
