//! Discrete aggregation and breakage mass fluxes at cell faces and the
//! semi-discrete right-hand side
//!
//! `dn̂_i/dt = -(J^agg_{i+1/2} - J^agg_{i-1/2} + J^brk_{i+1/2} - J^brk_{i-1/2}) / (x_i Δx_i)`.
//!
//! Face sequences have `I + 1` entries, index `f` standing for face `x_{f+1/2}`
//! (so `0` is the left boundary `x_min` and `I` the right boundary `x_max`).
//! Cell quantities are 0-based in code; doc comments keep the 1-based notation.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kinetics::KineticsSet;
use crate::mesh::{AlphaTable, Mesh};
use crate::profiles::{project, GridFunction, Profile};
use crate::quadrature::Quadrature;

/// Aggregation and breakage fluxes at all `I + 1` faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxes {
    pub agg: Vec<f64>,
    pub brk: Vec<f64>,
}

impl FaceFluxes {
    pub fn total(&self, face: usize) -> f64 {
        self.agg[face] + self.brk[face]
    }

    /// CSV with columns `face,x,agg,brk`.
    pub fn to_csv(&self, mesh: &Mesh) -> String {
        let mut out = String::from("face,x,agg,brk\n");
        for (f, x) in mesh.edges().iter().enumerate() {
            let _ = writeln!(out, "{f},{x:e},{:e},{:e}", self.agg[f], self.brk[f]);
        }
        out
    }
}

/// Midpoint-rule breakage weights `W_{i,k} = Σ_{j≤i} x_j b(x_j, x_k) Δx_j` for `i < k`,
/// together with the individual terms `x_j b(x_j, x_k) Δx_j`, `j < k`.
#[derive(Debug, Clone)]
pub struct BreakageWeights {
    cells: usize,
    prefix: Vec<f64>,
    terms: Vec<f64>,
}

/// Row start of parent `k` (1-based) in the triangular storage.
#[inline]
fn row(k: usize) -> usize {
    k * (k - 1) / 2
}

impl BreakageWeights {
    pub fn build(mesh: &Mesh, kinetics: &KineticsSet) -> Self {
        let cells = mesh.cells();
        let len = cells * (cells + 1) / 2;
        let mut prefix = vec![0.0; len];
        let mut terms = vec![0.0; len];
        if kinetics.has_breakage() {
            let x = mesh.pivots();
            let dx = mesh.widths();
            for k in 1..=cells {
                let r = row(k);
                let mut acc = 0.0;
                for j in 1..k {
                    let term = x[j - 1] * kinetics.breakage.density(x[j - 1], x[k - 1]) * dx[j - 1];
                    terms[r + j - 1] = term;
                    acc += term;
                    prefix[r + j] = acc;
                }
            }
        }
        Self { cells, prefix, terms }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// `W_{i,k}` for `0 ≤ i < k` (1-based `k`); `W_{0,k} = 0`.
    #[inline]
    pub fn prefix(&self, i: usize, k: usize) -> f64 {
        debug_assert!(i < k);
        self.prefix[row(k) + i]
    }

    /// `x_j b(x_j, x_k) Δx_j` for `1 ≤ j < k`.
    #[inline]
    pub fn term(&self, j: usize, k: usize) -> f64 {
        debug_assert!(j >= 1 && j < k);
        self.terms[row(k) + j - 1]
    }
}

/// Partial-cell weight `x_{α-1/2} - (x_{i+1/2} - x_k)` clamped to `[0, Δx_{α-1}]`,
/// with `host = α - 2` the 0-based index of the cell containing the offset.
#[inline]
fn partial_weight(mesh: &Mesh, host: usize, i: usize, k: usize) -> f64 {
    let edges = mesh.edges();
    let offset = edges[i] - mesh.pivots()[k - 1];
    (edges[host + 1] - offset).clamp(0.0, mesh.widths()[host])
}

fn check_cells(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Contract(format!(
            "{what} built for {got} cells, mesh has {expected}"
        )));
    }
    Ok(())
}

fn check_grid(mesh: &Mesh, n: &GridFunction) -> Result<()> {
    if n.mesh().edges() != mesh.edges() {
        return Err(Error::Contract("grid function lives on a different mesh".into()));
    }
    Ok(())
}

/// `J^agg_{i+1/2} = Σ_{k≤i} x_k n̂_k Δx_k [Σ_{j≥α_{i,k}} n̂_j β_{jk} Δx_j + n̂_{α-1} β_{α-1,k} w_{ik}]`
/// accumulated in O(I²): for each `k` a suffix sum over `j` is built once and
/// reused for every face.
fn aggregation_kernel(
    mesh: &Mesh,
    alpha: &AlphaTable,
    beta: impl Fn(usize, usize) -> f64,
    n: &[f64],
    suffix: &mut Vec<f64>,
    out: &mut [f64],
) {
    let cells = mesh.cells();
    let x = mesh.pivots();
    let dx = mesh.widths();
    out.fill(0.0);
    suffix.resize(cells + 1, 0.0);
    for k in 1..=cells {
        let carrier = x[k - 1] * n[k - 1] * dx[k - 1];
        if carrier == 0.0 {
            continue;
        }
        suffix[cells] = 0.0;
        for j in (0..cells).rev() {
            suffix[j] = suffix[j + 1] + n[j] * beta(j, k - 1) * dx[j];
        }
        for i in k..=cells {
            let host = alpha.alpha(i, k) - 2;
            let w = partial_weight(mesh, host, i, k);
            out[i] += carrier * (suffix[host + 1] + n[host] * beta(host, k - 1) * w);
        }
    }
}

/// `J^brk_{i+1/2} = -Σ_{k>i} n̂_k S(x_k) Δx_k W_{i,k}`, zero at both boundaries.
fn breakage_kernel(weights: &BreakageWeights, selection: &[f64], dx: &[f64], n: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let cells = dx.len();
    for k in 2..=cells {
        let c = n[k - 1] * selection[k - 1] * dx[k - 1];
        if c == 0.0 {
            continue;
        }
        let r = row(k);
        for (f, o) in out.iter_mut().enumerate().take(k).skip(1) {
            *o -= c * weights.prefix[r + f];
        }
    }
}

/// Discrete aggregation flux at every face.
pub fn aggregation_flux(
    mesh: &Mesh,
    alpha: &AlphaTable,
    kinetics: &KineticsSet,
    n: &GridFunction,
) -> Result<Vec<f64>> {
    check_cells("alpha table", mesh.cells(), alpha.cells())?;
    check_grid(mesh, n)?;
    let mut out = vec![0.0; mesh.cells() + 1];
    if kinetics.has_aggregation() {
        let x = mesh.pivots();
        aggregation_kernel(
            mesh,
            alpha,
            |j, k| kinetics.eval_beta(x[j], x[k]),
            n.values(),
            &mut Vec::new(),
            &mut out,
        );
    }
    Ok(out)
}

/// Discrete breakage flux at every face.
pub fn breakage_flux(
    mesh: &Mesh,
    weights: &BreakageWeights,
    kinetics: &KineticsSet,
    n: &GridFunction,
) -> Result<Vec<f64>> {
    check_cells("breakage weights", mesh.cells(), weights.cells())?;
    check_grid(mesh, n)?;
    let mut out = vec![0.0; mesh.cells() + 1];
    if kinetics.has_breakage() {
        let selection: Vec<f64> = mesh.pivots().iter().map(|&x| kinetics.eval_selection(x)).collect();
        breakage_kernel(weights, &selection, mesh.widths(), n.values(), &mut out);
    }
    Ok(out)
}

/// Right-hand side assembled from the face fluxes.
pub fn rhs(
    mesh: &Mesh,
    alpha: &AlphaTable,
    weights: &BreakageWeights,
    kinetics: &KineticsSet,
    n: &GridFunction,
) -> Result<Vec<f64>> {
    let agg = aggregation_flux(mesh, alpha, kinetics, n)?;
    let brk = breakage_flux(mesh, weights, kinetics, n)?;
    Ok(telescope(mesh, &agg, &brk))
}

fn telescope(mesh: &Mesh, agg: &[f64], brk: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.cells()];
    telescope_into(mesh.pivots(), mesh.widths(), agg, brk, &mut out);
    out
}

#[inline]
fn telescope_into(x: &[f64], dx: &[f64], agg: &[f64], brk: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        let d = (agg[i + 1] - agg[i]) + (brk[i + 1] - brk[i]);
        out[i] = -d / (x[i] * dx[i]);
    }
}

/// Precomputed state for repeated right-hand side evaluations on one mesh.
#[derive(Debug, Clone)]
pub struct FluxOperator {
    mesh: Arc<Mesh>,
    kinetics: KineticsSet,
    alpha: AlphaTable,
    weights: BreakageWeights,
    /// `β(x_j, x_k)`, row-major `j * I + k`.
    beta: Vec<f64>,
    selection: Vec<f64>,
}

/// Scratch buffers so that the hot path does not allocate.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    agg: Vec<f64>,
    brk: Vec<f64>,
    suffix: Vec<f64>,
}

impl FluxOperator {
    pub fn new(mesh: Arc<Mesh>, kinetics: KineticsSet) -> Self {
        let cells = mesh.cells();
        let x = mesh.pivots();
        let alpha = AlphaTable::build(&mesh);
        let weights = BreakageWeights::build(&mesh, &kinetics);
        let beta = if kinetics.has_aggregation() {
            let mut b = vec![0.0; cells * cells];
            for j in 0..cells {
                for k in 0..cells {
                    b[j * cells + k] = kinetics.eval_beta(x[j], x[k]);
                }
            }
            b
        } else {
            Vec::new()
        };
        let selection = x.iter().map(|&x| kinetics.eval_selection(x)).collect();
        Self {
            mesh,
            kinetics,
            alpha,
            weights,
            beta,
            selection,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    pub fn kinetics(&self) -> &KineticsSet {
        &self.kinetics
    }
    pub fn alpha(&self) -> &AlphaTable {
        &self.alpha
    }
    pub fn weights(&self) -> &BreakageWeights {
        &self.weights
    }

    fn check(&self, n: &GridFunction) -> Result<()> {
        check_grid(&self.mesh, n)
    }

    /// Fluxes for raw cell averages; `agg`/`brk` must have `I + 1` entries.
    pub fn fluxes_into(&self, n: &[f64], ws: &mut Workspace, agg: &mut [f64], brk: &mut [f64]) {
        let cells = self.mesh.cells();
        if self.kinetics.has_aggregation() {
            let beta = &self.beta;
            aggregation_kernel(&self.mesh, &self.alpha, |j, k| beta[j * cells + k], n, &mut ws.suffix, agg);
        } else {
            agg.fill(0.0);
        }
        if self.kinetics.has_breakage() {
            breakage_kernel(&self.weights, &self.selection, self.mesh.widths(), n, brk);
        } else {
            brk.fill(0.0);
        }
    }

    pub fn fluxes(&self, n: &GridFunction) -> Result<FaceFluxes> {
        self.check(n)?;
        let faces = self.mesh.cells() + 1;
        let mut agg = vec![0.0; faces];
        let mut brk = vec![0.0; faces];
        self.fluxes_into(n.values(), &mut Workspace::default(), &mut agg, &mut brk);
        Ok(FaceFluxes { agg, brk })
    }

    /// Right-hand side for raw cell averages. Returns the outflow `J^agg_{I+1/2} + J^brk_{I+1/2}`.
    pub fn rhs_into(&self, n: &[f64], ws: &mut Workspace, out: &mut [f64]) -> f64 {
        let faces = self.mesh.cells() + 1;
        let mut agg = std::mem::take(&mut ws.agg);
        let mut brk = std::mem::take(&mut ws.brk);
        agg.resize(faces, 0.0);
        brk.resize(faces, 0.0);
        self.fluxes_into(n, ws, &mut agg, &mut brk);
        telescope_into(self.mesh.pivots(), self.mesh.widths(), &agg, &brk, out);
        let outflow = agg[faces - 1] + brk[faces - 1];
        ws.agg = agg;
        ws.brk = brk;
        outflow
    }

    pub fn rhs(&self, n: &GridFunction) -> Result<Vec<f64>> {
        self.check(n)?;
        let mut out = vec![0.0; self.mesh.cells()];
        self.rhs_into(n.values(), &mut Workspace::default(), &mut out);
        Ok(out)
    }

    /// Cross-check path: flux differences assembled cell by cell, without
    /// forming face fluxes.
    ///
    /// Breakage: `ΔJ_i = -Σ_{k>i} n̂_k S_k Δx_k x_i b(x_i,x_k) Δx_i + n̂_i S_i Δx_i Σ_{j<i} x_j b(x_j,x_i) Δx_j`.
    ///
    /// Aggregation: `ΔJ_i = x_i n̂_i Δx_i A_{i,i} + Σ_{k<i} x_k n̂_k Δx_k (A_{i,k} - A_{i-1,k})`, where
    /// `A_{i,k} - A_{i-1,k} = -Σ_{j=α_{i-1,k}}^{α_{i,k}-1} n̂_j β_{jk} Δx_j + p_{i,k} - p_{i-1,k}`
    /// with `p` the partial-cell terms; empty ranges are zero.
    pub fn rhs_direct(&self, n: &GridFunction) -> Result<Vec<f64>> {
        self.check(n)?;
        let n = n.values();
        let mesh = &*self.mesh;
        let cells = mesh.cells();
        let x = mesh.pivots();
        let dx = mesh.widths();
        let mut out = vec![0.0; cells];
        for i in 1..=cells {
            let mut d = 0.0;
            if self.kinetics.has_breakage() {
                let mut lost = 0.0;
                for k in i + 1..=cells {
                    lost += n[k - 1] * self.selection[k - 1] * dx[k - 1] * self.weights.term(i, k);
                }
                let mut gained = 0.0;
                for j in 1..i {
                    gained += self.weights.term(j, i);
                }
                d += -lost + n[i - 1] * self.selection[i - 1] * dx[i - 1] * gained;
            }
            if self.kinetics.has_aggregation() {
                let beta = |j: usize, k: usize| self.beta[j * cells + k];
                let partial = |i: usize, k: usize| {
                    let host = self.alpha.alpha(i, k) - 2;
                    n[host] * beta(host, k - 1) * partial_weight(mesh, host, i, k)
                };
                // k = i: the whole of A_{i,i}.
                let a_ii = self.alpha.alpha(i, i);
                let mut full = 0.0;
                for j in a_ii..=cells {
                    full += n[j - 1] * beta(j - 1, i - 1) * dx[j - 1];
                }
                d += x[i - 1] * n[i - 1] * dx[i - 1] * (full + partial(i, i));
                for k in 1..i {
                    let carrier = x[k - 1] * n[k - 1] * dx[k - 1];
                    if carrier == 0.0 {
                        continue;
                    }
                    let lo = self.alpha.alpha(i - 1, k);
                    let hi = self.alpha.alpha(i, k);
                    let mut crossed = 0.0;
                    for j in lo..hi {
                        crossed += n[j - 1] * beta(j - 1, k - 1) * dx[j - 1];
                    }
                    d += carrier * (-crossed + partial(i, k) - partial(i - 1, k));
                }
            }
            out[i - 1] = -d / (x[i - 1] * dx[i - 1]);
        }
        Ok(out)
    }

    /// Lipschitz constant `L = (4C + 6) Q C_{T,x_max} + 2 Q1 x_max` of the right-hand
    /// side on states whose total number stays below `number_bound`.
    pub fn lipschitz_bound(&self, q: f64, q1: f64, number_bound: f64) -> f64 {
        let c = self.mesh.quasi_uniformity();
        (4.0 * c + 6.0) * q * number_bound + 2.0 * q1 * self.mesh.x_max()
    }
}

/// Continuous fluxes at one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousFlux {
    pub agg: f64,
    pub brk: f64,
}

/// Mass fluxes of the truncated problem on `]x_min, x_max]` at `x_face`:
///
/// `F^agg(x) = ∫_{x_min}^{x} ∫_{max(x-u, x_min)}^{x_max} u β(u,v) n(u) n(v) dv du`,
/// `F^brk(x) = -∫_{x}^{x_max} ∫_{x_min}^{x} u b(u,v) S(v) n(v) du dv`,
///
/// both by nested adaptive quadrature. Only the continuous part of `profile` enters.
pub fn continuous_flux_quadrature(
    kinetics: &KineticsSet,
    profile: &Profile,
    x_min: f64,
    x_face: f64,
    x_max: f64,
    tol: f64,
) -> Result<ContinuousFlux> {
    if !(x_min < x_max) || !(x_face >= x_min && x_face <= x_max) {
        return Err(Error::Domain(format!(
            "face {x_face} outside of [{x_min}, {x_max}]"
        )));
    }
    if profile.is_zero() {
        return Ok(ContinuousFlux { agg: 0.0, brk: 0.0 });
    }
    let inner_q = Quadrature::new(tol * 0.1).with_abs_tol(1e-300);
    let outer_q = Quadrature::new(tol).with_abs_tol(1e-300);
    let n = |x: f64| profile.density(x);
    let mut failure: Option<Error> = None;

    let mut agg = 0.0;
    if kinetics.has_aggregation() && x_face > x_min {
        let inner = |u: f64, failure: &mut Option<Error>| {
            let lo = (x_face - u).max(x_min);
            match inner_q.integrate(|v| kinetics.eval_beta(u, v) * n(v), lo, x_max) {
                Ok(r) => u * n(u) * r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        let mut points = vec![x_min];
        let kink = x_face - x_min;
        if kink > x_min && kink < x_face {
            points.push(kink);
        }
        points.push(x_face);
        agg = outer_q.integrate_with_breaks(|u| inner(u, &mut failure), &points)?.value;
    }

    let mut brk = 0.0;
    if kinetics.has_breakage() && x_face < x_max && x_face > x_min {
        let b = kinetics.breakage;
        let inner = |v: f64, failure: &mut Option<Error>| {
            let mut points = vec![x_min];
            if let Some(z) = b.peak_fraction() {
                let p = z * v;
                if p > x_min && p < x_face {
                    points.push(p);
                }
            }
            points.push(x_face);
            match inner_q.integrate_with_breaks(|u| u * b.density(u, v), &points) {
                Ok(r) => kinetics.eval_selection(v) * n(v) * r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        brk = -outer_q.integrate(|v| inner(v, &mut failure), x_face, x_max)?.value;
    }

    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ContinuousFlux { agg, brk })
}

/// Per-cell defects `σ_i = ((F - J)_{i+1/2} - (F - J)_{i-1/2}) / (x_i Δx_i)` of
/// aggregation and breakage, with `J` evaluated on the projection of `profile`.
#[derive(Debug, Clone)]
pub struct ConsistencyDefect {
    pub agg: Vec<f64>,
    pub brk: Vec<f64>,
}

impl ConsistencyDefect {
    /// Discrete L1 norms `(Σ|σ^agg_i|Δx_i, Σ|σ^brk_i|Δx_i)`.
    pub fn norms(&self, mesh: &Mesh) -> (f64, f64) {
        let l1 = |v: &[f64]| v.iter().zip(mesh.widths()).map(|(s, w)| s.abs() * w).sum();
        (l1(&self.agg), l1(&self.brk))
    }
}

pub fn consistency_defect(
    mesh: &Arc<Mesh>,
    kinetics: &KineticsSet,
    profile: &Profile,
    tol: f64,
) -> Result<ConsistencyDefect> {
    let projected = project(profile, mesh, tol * 0.01)?;
    let op = FluxOperator::new(Arc::clone(mesh), *kinetics);
    let discrete = op.fluxes(&projected)?;
    let edges = mesh.edges();
    let mut f_agg = Vec::with_capacity(edges.len());
    let mut f_brk = Vec::with_capacity(edges.len());
    for &face in edges {
        let c = continuous_flux_quadrature(kinetics, profile, mesh.x_min(), face, mesh.x_max(), tol)?;
        f_agg.push(c.agg);
        f_brk.push(c.brk);
    }
    let defect = |f: &[f64], j: &[f64]| -> Vec<f64> {
        (0..mesh.cells())
            .map(|i| {
                let d = (f[i + 1] - j[i + 1]) - (f[i] - j[i]);
                d / (mesh.pivots()[i] * mesh.widths()[i])
            })
            .collect()
    };
    Ok(ConsistencyDefect {
        agg: defect(&f_agg, &discrete.agg),
        brk: defect(&f_brk, &discrete.brk),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{Aggregation, Breakage, Selection};
    use crate::mesh::MeshFamily;
    use crate::profiles::project;
    use approx::assert_relative_eq;

    fn grid(mesh: &Arc<Mesh>, values: Vec<f64>) -> GridFunction {
        GridFunction::new(Arc::clone(mesh), values, 0.0).unwrap()
    }

    fn example_mesh(family: MeshFamily, cells: usize) -> Mesh {
        match family {
            MeshFamily::Uniform => Mesh::uniform(1e-3, 1.0, cells),
            MeshFamily::Geometric => Mesh::geometric(1e-3, 1.0, cells),
            MeshFamily::Oscillatory => Mesh::oscillatory(1e-3, 1.0, cells / 2, 1, 2.0),
            MeshFamily::Random => Mesh::random(1e-3, 1.0, cells / 2, 1, 3),
        }
        .unwrap()
    }

    fn tiny_origin_mesh(cells: usize, width: f64) -> Arc<Mesh> {
        // ]0, I] is not admissible; a negligible x_min stands in for the origin.
        let mut edges: Vec<f64> = (0..=cells).map(|i| i as f64 * width).collect();
        edges[0] = 1e-12;
        Arc::new(Mesh::from_edges(MeshFamily::Uniform, edges).unwrap())
    }

    #[test]
    fn breakage_flux_hand_value() {
        let mesh = tiny_origin_mesh(3, 1.0);
        let k = KineticsSet::breakage_only(Selection::Linear, Breakage::Binary).unwrap();
        let w = BreakageWeights::build(&mesh, &k);
        let j = breakage_flux(&mesh, &w, &k, &grid(&mesh, vec![0.0, 1.0, 0.0])).unwrap();
        // Pivot of the first cell moves by 5e-13 with the shifted origin.
        assert_relative_eq!(j[1], -1.0, max_relative = 1e-11);
        assert_eq!(j[0], 0.0);
        assert_eq!(j[3], 0.0);
        assert_eq!(j[2], 0.0);
    }

    #[test]
    fn aggregation_flux_hand_value() {
        let mesh = tiny_origin_mesh(2, 1.0);
        let alpha = AlphaTable::build(&mesh);
        assert_eq!(alpha.alpha(1, 1), 2);
        let k = KineticsSet::aggregation_only(Aggregation::Constant { beta0: 1.0 });
        let j = aggregation_flux(&mesh, &alpha, &k, &grid(&mesh, vec![1.0, 0.0])).unwrap();
        assert_eq!(j[0], 0.0);
        assert_relative_eq!(j[1], 0.25, max_relative = 1e-11);
    }

    #[test]
    fn zero_state_gives_zero() {
        let mesh = Arc::new(Mesh::geometric(1e-3, 1.0, 20).unwrap());
        let k = KineticsSet::new(Aggregation::Sum, Selection::Quadratic, Breakage::DiemerOlson { p: 4, c: 2 }).unwrap();
        let op = FluxOperator::new(Arc::clone(&mesh), k);
        let zero = GridFunction::zeros(Arc::clone(&mesh), 0.0);
        assert!(op.rhs(&zero).unwrap().iter().all(|&v| v == 0.0));
        let f = op.fluxes(&zero).unwrap();
        assert!(f.agg.iter().chain(&f.brk).all(|&v| v == 0.0));
    }

    #[test]
    fn partial_weights_within_host_cell() {
        for family in MeshFamily::ALL {
            let mesh = example_mesh(family, 40);
            let alpha = AlphaTable::build(&mesh);
            for i in 1..=mesh.cells() {
                for k in 1..=i {
                    let host = alpha.alpha(i, k) - 2;
                    let raw = mesh.edges()[host + 1] - (mesh.edges()[i] - mesh.pivots()[k - 1]);
                    if !alpha.is_clamped(i, k) {
                        let tol = 1e-12 * mesh.x_max();
                        assert!(raw >= -tol && raw <= mesh.widths()[host] + tol, "{family} i={i} k={k}");
                    }
                    let w = partial_weight(&mesh, host, i, k);
                    assert!(w >= 0.0 && w <= mesh.widths()[host]);
                }
            }
        }
    }

    #[test]
    fn cached_operator_matches_free_functions() {
        let mesh = Arc::new(Mesh::random(1e-3, 1.0, 10, 2, 5).unwrap());
        let k = KineticsSet::new(
            Aggregation::Product,
            Selection::Linear,
            Breakage::ZiffTernary,
        )
        .unwrap();
        let n = project(&Profile::Normal { mu: 0.4, sigma: 0.1 }, &mesh, 1e-10).unwrap();
        let op = FluxOperator::new(Arc::clone(&mesh), k);
        let free = rhs(&mesh, op.alpha(), op.weights(), &k, &n).unwrap();
        assert_eq!(op.rhs(&n).unwrap(), free);
    }

    #[test]
    fn mesh_mismatch_is_contract_violation() {
        let a = Arc::new(Mesh::uniform(1e-3, 1.0, 10).unwrap());
        let b = Arc::new(Mesh::uniform(1e-3, 1.0, 12).unwrap());
        let k = KineticsSet::aggregation_only(Aggregation::Sum);
        let op = FluxOperator::new(Arc::clone(&a), k);
        let g = GridFunction::zeros(b, 0.0);
        assert!(matches!(op.rhs(&g), Err(Error::Contract(_))));
        assert!(matches!(
            aggregation_flux(&a, op.alpha(), &k, &g),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn continuous_aggregation_flux_closed_form() {
        // n = 1 on ]0,1], β = 1: F(1) = ∫_0^1 ∫_{1-u}^1 u dv du = 1/3.
        let k = KineticsSet::aggregation_only(Aggregation::Constant { beta0: 1.0 });
        let p = Profile::Exponential { alpha: 0.0 };
        let f = continuous_flux_quadrature(&k, &p, 1e-12, 1.0, 1.0, 1e-10).unwrap();
        assert_relative_eq!(f.agg, 1.0 / 3.0, max_relative = 1e-9);
        assert_eq!(f.brk, 0.0);
    }

    #[test]
    fn continuous_breakage_flux_boundaries() {
        let k = KineticsSet::breakage_only(Selection::Linear, Breakage::Binary).unwrap();
        let p = Profile::Normal { mu: 0.4, sigma: 0.1 };
        let top = continuous_flux_quadrature(&k, &p, 1e-3, 1.0, 1.0, 1e-10).unwrap();
        assert_eq!(top.brk, 0.0);
        let zero = continuous_flux_quadrature(&k, &Profile::Zero, 1e-3, 0.5, 1.0, 1e-10).unwrap();
        assert_eq!(zero, ContinuousFlux { agg: 0.0, brk: 0.0 });
        // Binary breakage, S = x: F(x) = -∫_x^1 (x² - x_min²) n(v) dv.
        let mid = continuous_flux_quadrature(&k, &p, 1e-3, 0.5, 1.0, 1e-10).unwrap();
        let tail = Quadrature::new(1e-12).integrate(|v| p.density(v), 0.5, 1.0).unwrap().value;
        assert_relative_eq!(mid.brk, -(0.25 - 1e-6) * tail, max_relative = 1e-8);
    }

    #[test]
    fn zero_profile_zero_defect() {
        let mesh = Arc::new(Mesh::uniform(1e-3, 1.0, 8).unwrap());
        let k = KineticsSet::new(Aggregation::Sum, Selection::Linear, Breakage::Binary).unwrap();
        let d = consistency_defect(&mesh, &k, &Profile::Zero, 1e-8).unwrap();
        assert_eq!(d.norms(&mesh), (0.0, 0.0));
    }
}
