//! Cell meshes of the truncated size domain `]x_min, x_max]` and the
//! aggregation index table.
//!
//! Cells are half-open, `Λ_i = ]x_{i-1/2}, x_{i+1/2}]`; a point lying exactly
//! on a face belongs to the cell on its left. All indices in this module's
//! public API are 0-based unless stated otherwise; [`AlphaTable`] keeps the
//! 1-based `α_{i,k}` convention of the flux formulas.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random splits draw their interior fraction from this interval.
pub const RANDOM_SPLIT_RANGE: (f64, f64) = (0.1, 0.9);

/// Width ratio between the right and left child of an oscillatory split.
pub const DEFAULT_OSCILLATORY_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFamily {
    Uniform,
    Geometric,
    Oscillatory,
    Random,
}

impl MeshFamily {
    pub const ALL: [MeshFamily; 4] = [
        MeshFamily::Uniform,
        MeshFamily::Geometric,
        MeshFamily::Oscillatory,
        MeshFamily::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeshFamily::Uniform => "uniform",
            MeshFamily::Geometric => "geometric",
            MeshFamily::Oscillatory => "oscillatory",
            MeshFamily::Random => "random",
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(MeshFamily::Uniform),
            "geometric" | "smooth" => Ok(MeshFamily::Geometric),
            "oscillatory" => Ok(MeshFamily::Oscillatory),
            "random" => Ok(MeshFamily::Random),
            other => Err(Error::Config(format!("unknown mesh family '{other}'"))),
        }
    }
}

/// A one-dimensional finite volume mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    family: MeshFamily,
    edges: Vec<f64>,
    pivots: Vec<f64>,
    widths: Vec<f64>,
    /// Number of refinements applied to the base mesh.
    level: u32,
    /// Right/left width ratio of oscillatory splits.
    ratio: Option<f64>,
    /// Generator seed of the random family.
    seed: Option<u64>,
}

/// JSON layout of an exported mesh.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MeshRecord {
    pub family: MeshFamily,
    pub x_min: f64,
    pub x_max: f64,
    pub edges: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn check_bounds(x_min: f64, x_max: f64) -> Result<()> {
    if !(x_min.is_finite() && x_max.is_finite()) || x_min <= 0.0 || x_max <= x_min {
        return Err(Error::Config(format!(
            "mesh bounds must satisfy 0 < x_min < x_max, got [{x_min}, {x_max}]"
        )));
    }
    Ok(())
}

fn check_cells(cells: usize, min: usize) -> Result<()> {
    if cells < min {
        return Err(Error::Config(format!(
            "mesh needs at least {min} cells, got {cells}"
        )));
    }
    Ok(())
}

fn random_split_rng(seed: u64, level: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (u64::from(level)).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl Mesh {
    /// Builds a mesh from explicit edges, checking the ordering invariants.
    pub fn from_edges(family: MeshFamily, edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("a mesh needs at least two edges".into()));
        }
        check_bounds(edges[0], edges[edges.len() - 1])?;
        if let Some(w) = edges.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "mesh edges must be strictly increasing ({} !< {})",
                w[0], w[1]
            )));
        }
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let pivots: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            family,
            edges,
            pivots,
            widths,
            level: 0,
            ratio: None,
            seed: None,
        })
    }

    pub fn uniform(x_min: f64, x_max: f64, cells: usize) -> Result<Self> {
        check_bounds(x_min, x_max)?;
        check_cells(cells, 2)?;
        let h = (x_max - x_min) / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|i| x_min + i as f64 * h).collect();
        edges[cells] = x_max;
        Self::from_edges(MeshFamily::Uniform, edges)
    }

    /// Edges `x_min * r^i` with `r = (x_max/x_min)^(1/I)`, i.e. a uniform mesh in `ln x`.
    pub fn geometric(x_min: f64, x_max: f64, cells: usize) -> Result<Self> {
        check_bounds(x_min, x_max)?;
        check_cells(cells, 2)?;
        let ratio = (x_max / x_min).powf(1.0 / cells as f64);
        let mut edges: Vec<f64> = (0..=cells).map(|i| x_min * ratio.powi(i as i32)).collect();
        edges[cells] = x_max;
        Self::from_edges(MeshFamily::Geometric, edges)
    }

    /// Uniform base mesh whose cells are split `levels` times into a left and a
    /// right child of width ratio `1 : ratio`.
    pub fn oscillatory(
        x_min: f64,
        x_max: f64,
        base_cells: usize,
        levels: u32,
        ratio: f64,
    ) -> Result<Self> {
        check_bounds(x_min, x_max)?;
        check_cells(base_cells, 1)?;
        if !(ratio.is_finite() && ratio > 0.0) || ratio == 1.0 {
            return Err(Error::Config(format!(
                "oscillatory ratio must be positive and different from 1, got {ratio}"
            )));
        }
        let h = (x_max - x_min) / base_cells as f64;
        let mut edges: Vec<f64> = (0..=base_cells).map(|i| x_min + i as f64 * h).collect();
        edges[base_cells] = x_max;
        let mut mesh = Self::from_edges(MeshFamily::Oscillatory, edges)?;
        mesh.ratio = Some(ratio);
        for _ in 0..levels {
            mesh = mesh.refine();
        }
        Ok(mesh)
    }

    /// Geometric base mesh whose cells are split `levels` times at random interior fractions.
    pub fn random(x_min: f64, x_max: f64, base_cells: usize, levels: u32, seed: u64) -> Result<Self> {
        check_bounds(x_min, x_max)?;
        check_cells(base_cells, 1)?;
        let ratio = (x_max / x_min).powf(1.0 / base_cells as f64);
        let mut edges: Vec<f64> = (0..=base_cells)
            .map(|i| x_min * ratio.powi(i as i32))
            .collect();
        edges[base_cells] = x_max;
        let mut mesh = Self::from_edges(MeshFamily::Random, edges)?;
        mesh.seed = Some(seed);
        for _ in 0..levels {
            mesh = mesh.refine();
        }
        Ok(mesh)
    }

    /// Splits every cell in two, keeping all existing edges.
    pub fn refine(&self) -> Mesh {
        let cells = self.cells();
        let level = self.level + 1;
        let mut rng = self.seed.map(|s| random_split_rng(s, level));
        let mut edges = Vec::with_capacity(2 * cells + 1);
        edges.push(self.edges[0]);
        for w in self.edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let interior = match self.family {
                MeshFamily::Uniform => 0.5 * (a + b),
                MeshFamily::Geometric => (a * b).sqrt(),
                MeshFamily::Oscillatory => {
                    let r = self.ratio.unwrap_or(DEFAULT_OSCILLATORY_RATIO);
                    a + (b - a) / (1.0 + r)
                }
                MeshFamily::Random => {
                    let rng = rng.get_or_insert_with(|| random_split_rng(0, level));
                    let frac = rng.gen_range(RANDOM_SPLIT_RANGE.0..RANDOM_SPLIT_RANGE.1);
                    a + frac * (b - a)
                }
            };
            edges.push(interior);
            edges.push(b);
        }
        let mut fine = Mesh::from_edges(self.family, edges)
            .expect("splitting a valid mesh keeps edges increasing");
        fine.level = level;
        fine.ratio = self.ratio;
        fine.seed = self.seed;
        fine
    }

    pub fn family(&self) -> MeshFamily {
        self.family
    }
    pub fn cells(&self) -> usize {
        self.widths.len()
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }
    pub fn x_max(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
    pub fn ratio(&self) -> Option<f64> {
        self.ratio
    }

    /// Largest over smallest cell width.
    pub fn quasi_uniformity(&self) -> f64 {
        let (lo, hi) = self
            .widths
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        hi / lo
    }

    /// Index of the cell `]x_{i-1/2}, x_{i+1/2}]` containing `x`, or `None`
    /// outside of `]x_min, x_max]`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x > self.x_min() && x <= self.x_max()) {
            return None;
        }
        // Number of edges strictly below x; x lies in the cell to the left of edge `idx`.
        let idx = self.edges.partition_point(|&e| e < x);
        Some(idx - 1)
    }

    /// True when every edge of `coarse` is an edge of `self` (to relative `tol`).
    pub fn is_refinement_of(&self, coarse: &Mesh, tol: f64) -> bool {
        self.coarse_map(coarse, tol).is_some()
    }

    /// For each edge of `coarse`, the index of the matching edge of `self`.
    pub(crate) fn coarse_map(&self, coarse: &Mesh, tol: f64) -> Option<Vec<usize>> {
        let mut map = Vec::with_capacity(coarse.edges.len());
        let mut j = 0;
        for &e in &coarse.edges {
            while j < self.edges.len() && self.edges[j] < e * (1.0 - tol) {
                j += 1;
            }
            if j == self.edges.len() || (self.edges[j] - e).abs() > tol * e.abs() {
                return None;
            }
            map.push(j);
        }
        (map[0] == 0 && map[map.len() - 1] == self.edges.len() - 1).then_some(map)
    }

    pub fn to_record(&self) -> MeshRecord {
        MeshRecord {
            family: self.family,
            x_min: self.x_min(),
            x_max: self.x_max(),
            edges: self.edges.clone(),
            level: Some(self.level),
            ratio: self.ratio,
            seed: self.seed,
        }
    }

    pub fn from_record(record: MeshRecord) -> Result<Self> {
        let n = record.edges.len();
        if n < 2 || record.edges[0] != record.x_min || record.edges[n - 1] != record.x_max {
            return Err(Error::Config(
                "mesh record edges must start at x_min and end at x_max".into(),
            ));
        }
        let mut mesh = Mesh::from_edges(record.family, record.edges)?;
        mesh.level = record.level.unwrap_or(0);
        mesh.ratio = record.ratio;
        mesh.seed = record.seed;
        Ok(mesh)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(text)?)
    }
}

/// Indices `α_{i,k}` of the cells hosting `x_{i+1/2} - x_k`, for `1 <= k <= i <= I`.
///
/// Stored 1-based as in the flux formulas: `x_{i+1/2} - x_k ∈ Λ_{α_{i,k} - 1}`.
/// When the offset falls at or below `x_{1/2}` (possible because the domain is
/// truncated at `x_min > 0`) the entry is clamped to `α = 2` and flagged.
#[derive(Debug, Clone)]
pub struct AlphaTable {
    cells: usize,
    alpha: Vec<u32>,
    clamped: Vec<bool>,
    quasi_uniformity_c: f64,
}

#[inline]
fn tri_index(i: usize, k: usize) -> usize {
    i * (i - 1) / 2 + (k - 1)
}

impl AlphaTable {
    pub fn build(mesh: &Mesh) -> Self {
        let cells = mesh.cells();
        let edges = mesh.edges();
        let pivots = mesh.pivots();
        let len = cells * (cells + 1) / 2;
        let mut alpha = Vec::with_capacity(len);
        let mut clamped = Vec::with_capacity(len);
        for i in 1..=cells {
            let face = edges[i];
            for k in 1..=i {
                let offset = face - pivots[k - 1];
                if offset <= edges[0] {
                    alpha.push(2);
                    clamped.push(true);
                } else {
                    let idx = edges.partition_point(|&e| e < offset);
                    // offset ∈ ]edges[idx-1], edges[idx]] = Λ_idx (1-based), so α = idx + 1.
                    alpha.push((idx + 1) as u32);
                    clamped.push(false);
                }
            }
        }
        Self {
            cells,
            alpha,
            clamped,
            quasi_uniformity_c: mesh.quasi_uniformity(),
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// `α_{i,k}` with 1-based `1 <= k <= i <= I`.
    #[inline]
    pub fn alpha(&self, i: usize, k: usize) -> usize {
        self.alpha[tri_index(i, k)] as usize
    }

    #[inline]
    pub fn is_clamped(&self, i: usize, k: usize) -> bool {
        self.clamped[tri_index(i, k)]
    }

    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    pub fn quasi_uniformity(&self) -> f64 {
        self.quasi_uniformity_c
    }

    /// Longest run of consecutive faces `i` that share one (unclamped) `α_{i,k}` for a fixed `k`.
    pub fn max_repetition(&self) -> usize {
        let mut worst = 0;
        for k in 1..=self.cells {
            let mut run = 0;
            let mut prev = None;
            for i in k..=self.cells {
                if self.is_clamped(i, k) {
                    prev = None;
                    run = 0;
                    continue;
                }
                let a = self.alpha(i, k);
                if prev == Some(a) {
                    run += 1;
                } else {
                    run = 1;
                    prev = Some(a);
                }
                worst = worst.max(run);
            }
        }
        worst
    }
}
