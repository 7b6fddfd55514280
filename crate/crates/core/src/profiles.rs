//! Initial conditions, closed-form reference solutions and cell-average grid functions.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::Quadrature;

/// Which Lage initial condition a combined aggregation-breakage solution starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LageInitial {
    /// `N0 (2 N0/x0)^2 x exp(-2 x N0/x0)`.
    Gamma,
    /// `N0 (N0/x0) exp(-x N0/x0)`, a steady state.
    Exponential,
}

/// Problems with a known closed-form solution on the untruncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum AnalyticCase {
    /// `β = x + y`, `n(0, x) = exp(-α x)`.
    AggSum { alpha: f64 },
    /// `β = x y`, `n(0, x) = exp(-α x)`.
    AggProduct { alpha: f64 },
    /// `b = 2/y`, `S = x`, unit point mass at `x0`.
    BrkBinaryLinear { x0: f64 },
    /// `b = 2/y`, `S = x^2`, unit point mass at `x0`.
    BrkBinaryQuadratic { x0: f64 },
    /// `β = 2 x0 / N0^2`, `b = 2/y`, `S = x`: total number stays at `N0`.
    CombinedConstantBinaryLinear { n0: f64, x0: f64, initial: LageInitial },
}

/// Constant aggregation rate under which the Lage problem keeps its particle number.
pub fn lage_beta0(n0: f64, x0: f64) -> f64 {
    2.0 * x0 / (n0 * n0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `exp(-α x)`.
    Exponential { alpha: f64 },
    /// Gaussian density with mean `mu` and deviation `sigma`.
    Normal { mu: f64, sigma: f64 },
    /// Unit point mass at `x0`.
    Monodisperse { x0: f64 },
    LageGamma { n0: f64, x0: f64 },
    LageExponential { n0: f64, x0: f64 },
    /// A closed-form solution evaluated at time `t`.
    AnalyticReference { case: AnalyticCase, t: f64 },
}

impl Profile {
    /// Density of the absolutely continuous part.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero | Profile::Monodisperse { .. } => 0.0,
            Profile::Exponential { alpha } => (-alpha * x).exp(),
            Profile::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Profile::LageGamma { n0, x0 } => {
                let k = 2.0 * n0 / x0;
                n0 * k * k * x * (-k * x).exp()
            }
            Profile::LageExponential { n0, x0 } => {
                let k = n0 / x0;
                n0 * k * (-k * x).exp()
            }
            Profile::AnalyticReference { case, t } => analytic_density(case, x, t),
        }
    }

    /// Point masses `(location, number)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match *self {
            Profile::Monodisperse { x0 } => vec![(x0, 1.0)],
            Profile::AnalyticReference { case, t } => analytic_atom(case, t).into_iter().collect(),
            _ => Vec::new(),
        }
    }

    /// Points where the continuous part is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Profile::AnalyticReference {
                case: AnalyticCase::BrkBinaryLinear { x0 } | AnalyticCase::BrkBinaryQuadratic { x0 },
                ..
            } => vec![x0],
            _ => Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Zero)
    }
}

/// Cell averages `n̂_i` on a mesh at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    t: f64,
}

impl GridFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() != mesh.cells() {
            return Err(Error::Contract(format!(
                "grid function has {} values for a {}-cell mesh",
                values.len(),
                mesh.cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite value in cell {i}")));
        }
        Ok(Self { mesh, values, t })
    }

    pub fn zeros(mesh: Arc<Mesh>, t: f64) -> Self {
        let values = vec![0.0; mesh.cells()];
        Self { mesh, values, t }
    }

    /// Builds a grid function from cell numbers `N_i = n̂_i Δx_i`.
    pub fn from_numbers(mesh: Arc<Mesh>, numbers: &[f64], t: f64) -> Result<Self> {
        let values = numbers
            .iter()
            .zip(mesh.widths())
            .map(|(n, w)| n / w)
            .collect();
        Self::new(mesh, values, t)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Cell numbers `N_i = n̂_i Δx_i`.
    pub fn numbers(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.mesh.widths())
            .map(|(v, w)| v * w)
            .collect()
    }

    pub fn moment(&self, order: u32) -> f64 {
        moments(self, order)
    }

    pub fn same_mesh(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || self.mesh.edges() == other.mesh.edges()
    }

    /// CSV with columns `x,dx,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,dx,n\n");
        for ((x, w), v) in self.mesh.pivots().iter().zip(self.mesh.widths()).zip(&self.values) {
            let _ = writeln!(out, "{x:e},{w:e},{v:e}");
        }
        out
    }
}

/// `M0 = Σ n̂_i Δx_i` (order 0) or `M1 = Σ x_i n̂_i Δx_i` (order 1).
pub fn moments(g: &GridFunction, order: u32) -> f64 {
    let mesh = g.mesh();
    g.values
        .iter()
        .zip(mesh.widths())
        .zip(mesh.pivots())
        .map(|((v, w), x)| v * w * x.powi(order as i32))
        .sum()
}

/// Cell averages of `profile` by adaptive quadrature; point masses go to their host cell.
pub fn project(profile: &Profile, mesh: &Arc<Mesh>, quadrature_tol: f64) -> Result<GridFunction> {
    let mut values = vec![0.0; mesh.cells()];
    if !profile.is_zero() {
        let q = Quadrature::new(quadrature_tol);
        let kinks = profile.breakpoints();
        for (i, w) in mesh.edges().windows(2).enumerate() {
            let mut points = vec![w[0]];
            points.extend(kinks.iter().copied().filter(|&k| k > w[0] && k < w[1]));
            points.push(w[1]);
            let r = q.integrate_with_breaks(|x| profile.density(x), &points)?;
            values[i] = r.value / mesh.widths()[i];
        }
        for (x0, weight) in profile.atoms() {
            let cell = mesh.locate(x0).ok_or_else(|| {
                Error::Config(format!(
                    "point mass at {x0} outside of ]{}, {}]",
                    mesh.x_min(),
                    mesh.x_max()
                ))
            })?;
            values[cell] += weight / mesh.widths()[cell];
        }
    }
    let t = match profile {
        Profile::AnalyticReference { t, .. } => *t,
        _ => 0.0,
    };
    GridFunction::new(Arc::clone(mesh), values, t)
}

/// Closed-form density (continuous part) of `case` at `(x, t)`.
pub fn analytic_solution(case: &AnalyticCase, x: f64, t: f64) -> Result<f64> {
    if !(x > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("analytic solution needs x > 0, t >= 0 (x={x}, t={t})")));
    }
    let v = analytic_density(*case, x, t);
    if !v.is_finite() {
        return Err(Error::Undefined(format!("closed form of {case:?} not evaluable at x={x}, t={t}")));
    }
    Ok(v)
}

impl AnalyticCase {
    pub fn initial_profile(&self) -> Profile {
        match *self {
            AnalyticCase::AggSum { alpha } | AnalyticCase::AggProduct { alpha } => {
                Profile::Exponential { alpha }
            }
            AnalyticCase::BrkBinaryLinear { x0 } | AnalyticCase::BrkBinaryQuadratic { x0 } => {
                Profile::Monodisperse { x0 }
            }
            AnalyticCase::CombinedConstantBinaryLinear { n0, x0, initial } => match initial {
                LageInitial::Gamma => Profile::LageGamma { n0, x0 },
                LageInitial::Exponential => Profile::LageExponential { n0, x0 },
            },
        }
    }

    pub fn at(&self, t: f64) -> Profile {
        Profile::AnalyticReference { case: *self, t }
    }
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// `ln Σ_{k ≥ k_min} exp(log_term(k))` for a unimodal series, summed outwards
/// from `k_peak` until terms are 40 e-folds below the largest.
fn log_series(log_term: impl Fn(usize) -> f64, k_peak: usize, k_min: usize) -> f64 {
    if k_peak > MAX_SERIES_PEAK {
        return f64::NAN;
    }
    let k_peak = k_peak.max(k_min);
    let peak = log_term(k_peak);
    let mut logs = vec![peak];
    let mut k = k_peak;
    loop {
        k += 1;
        let l = log_term(k);
        logs.push(l);
        if l < peak - 40.0 {
            break;
        }
    }
    let mut k = k_peak;
    while k > k_min {
        k -= 1;
        let l = log_term(k);
        logs.push(l);
        if l < peak - 40.0 {
            break;
        }
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// Beyond this the series evaluation is too costly; callers get an error.
const MAX_SERIES_PEAK: usize = 100_000_000;

fn ln_factorial(k: usize) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// `β = x + y`, `n0 = exp(-α x)`: `n = (1-τ) e^{-(1+τ)ξ} Σ (τ ξ²)^k / (k!(k+1)!)`
/// with `ξ = α x`, `τ = 1 - exp(-t/α²)`.
fn scott_sum(alpha: f64, x: f64, t: f64) -> f64 {
    let xi = alpha * x;
    if t == 0.0 {
        return (-xi).exp();
    }
    let m1 = 1.0 / (alpha * alpha);
    let tau = -(-m1 * t).exp_m1();
    let log_pref = (1.0 - tau).ln() - (1.0 + tau) * xi;
    // Σ ≤ exp(2 ξ √τ).
    if log_pref + 2.0 * xi * tau.sqrt() < -745.0 {
        return 0.0;
    }
    let lz = (tau * xi * xi).ln();
    let k_peak = (xi * tau.sqrt()) as usize;
    let log_sum = log_series(
        |k| k as f64 * lz - ln_factorial(k) - ln_factorial(k + 1),
        k_peak,
        0,
    );
    (log_pref + log_sum).exp()
}

/// `β = x y`, `n0 = exp(-α x)`:
/// `n = e^{-x(M1 t + α)} Σ_{k≥1} t^{k-1} x^{3k-3} / (k! (2k-1)!)`, `M1 = 1/α²`.
fn scott_product(alpha: f64, x: f64, t: f64) -> f64 {
    if t == 0.0 {
        return (-alpha * x).exp();
    }
    let m1 = 1.0 / (alpha * alpha);
    let log_pref = -x * (m1 * t + alpha);
    let z = t * x * x * x;
    // Σ ≤ exp(3 z^{1/3}).
    if log_pref + 3.0 * z.cbrt() < -745.0 {
        return 0.0;
    }
    let lz = z.ln();
    let k_peak = (0.25 * z).cbrt() as usize;
    let log_sum = log_series(
        |k| (k - 1) as f64 * lz - ln_factorial(k) - ln_factorial(2 * k - 1),
        k_peak,
        1,
    );
    (log_pref + log_sum).exp()
}

/// Unit Lage problem (`N0 = x0 = 1`, `β = 2`) from the gamma initial condition.
///
/// The Laplace transform is `1/(1+s) - 2 s² / ((1+s) D(s))` with
/// `D(s) = e^{2t}(s+1)(2s+2t+7) - (s-1)`; the pole at `s = -1` cancels the
/// steady part, leaving two exponentials at the roots of `D`. Roots are solved
/// in `u = s + 1`, where `D/e^{2t} = 2u² + (2t+5 - e^{-2t})u + 2e^{-2t}`, so the
/// root close to `s = -1` keeps full relative accuracy at late times.
fn lage_gamma_unit(xi: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 4.0 * xi * (-2.0 * xi).exp();
    }
    let einv = (-2.0 * t).exp();
    let (a, b, c) = (2.0, 2.0 * t + 5.0 - einv, 2.0 * einv);
    let q = -0.5 * (b + (b * b - 4.0 * a * c).max(0.0).sqrt());
    let (u_big, u_small) = (q / a, c / q);
    // e^{2t} u for each root.
    let (eu_big, eu_small) = (q / (a * einv), 2.0 / q);
    let term = |u: f64, eu: f64, gap: f64| {
        let p = u - 1.0;
        p * p * (p * xi).exp() / (eu * gap)
    };
    let gap = u_big - u_small;
    let big = if eu_big.is_finite() { term(u_big, eu_big, gap) } else { 0.0 };
    -(big + term(u_small, eu_small, -gap))
}

fn analytic_density(case: AnalyticCase, x: f64, t: f64) -> f64 {
    match case {
        AnalyticCase::AggSum { alpha } => scott_sum(alpha, x, t),
        AnalyticCase::AggProduct { alpha } => scott_product(alpha, x, t),
        AnalyticCase::BrkBinaryLinear { x0 } => {
            if x < x0 {
                (-t * x).exp() * (2.0 * t + t * t * (x0 - x))
            } else {
                0.0
            }
        }
        AnalyticCase::BrkBinaryQuadratic { x0 } => {
            if x < x0 {
                (-t * x * x).exp() * 2.0 * t * x0
            } else {
                0.0
            }
        }
        AnalyticCase::CombinedConstantBinaryLinear { n0, x0, initial } => {
            let v = x0 / n0;
            match initial {
                LageInitial::Exponential => n0 / v * (-x / v).exp(),
                LageInitial::Gamma => n0 / v * lage_gamma_unit(x / v, v * t),
            }
        }
    }
}

fn analytic_atom(case: AnalyticCase, t: f64) -> Option<(f64, f64)> {
    match case {
        AnalyticCase::BrkBinaryLinear { x0 } => Some((x0, (-t * x0).exp())),
        AnalyticCase::BrkBinaryQuadratic { x0 } => Some((x0, (-t * x0 * x0).exp())),
        _ => None,
    }
}
