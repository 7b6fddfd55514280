//! Aggregation kernels, selection functions and breakage functions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aggregation {
    None,
    Constant { beta0: f64 },
    Sum,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    None,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Breakage {
    None,
    /// `b(x, y) = 2 / y`.
    Binary,
    /// Diemer–Olson daughter distribution with `p` fragments and shape parameter `c`.
    DiemerOlson { p: u32, c: u32 },
    /// `b(x, y) = 12 x / y^2 (1 - x / y)`.
    ZiffTernary,
}

impl Aggregation {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Aggregation::None => 0.0,
            Aggregation::Constant { beta0 } => beta0,
            Aggregation::Sum => x + y,
            Aggregation::Product => x * y,
        }
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, Aggregation::None)
    }
}

impl Selection {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Selection::None => 0.0,
            Selection::Linear => x,
            Selection::Quadratic => x * x,
        }
    }

    /// `sup S(y)/y` over `]0, x_max]`.
    fn max_rate_per_size(&self, x_max: f64) -> f64 {
        match self {
            Selection::None => 0.0,
            Selection::Linear => 1.0,
            Selection::Quadratic => x_max,
        }
    }
}

/// `[c+(c+1)(p-1)]! / (c! [c+(c+1)(p-2)]!)` evaluated exactly as a product of
/// `c + 1` consecutive integers divided by `c!`.
pub fn diemer_olson_coefficient(p: u32, c: u32) -> Result<u128> {
    if p < 2 {
        return Err(Error::Config(format!("Diemer-Olson needs p >= 2, got {p}")));
    }
    let (p, c) = (u128::from(p), u128::from(c));
    let top = c + (c + 1) * (p - 1);
    let overflow = || Error::Config(format!("Diemer-Olson coefficient overflows for p={p}, c={c}"));
    let mut numer: u128 = 1;
    for m in (top - c)..=top {
        numer = numer.checked_mul(m).ok_or_else(overflow)?;
    }
    let mut fact: u128 = 1;
    for m in 2..=c {
        fact = fact.checked_mul(m).ok_or_else(overflow)?;
    }
    // A product of c+1 consecutive integers is divisible by (c+1)!, hence by c!.
    Ok(numer / fact)
}

impl Breakage {
    pub fn validate(&self) -> Result<()> {
        if let Breakage::DiemerOlson { p, c } = *self {
            diemer_olson_coefficient(p, c)?;
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        !matches!(self, Breakage::None)
    }

    /// Daughter density `b(x, y)` for `0 < x <= y`; zero above the parent size.
    #[inline]
    pub fn density(&self, x: f64, y: f64) -> f64 {
        if x > y {
            return 0.0;
        }
        match *self {
            Breakage::None => 0.0,
            Breakage::Binary => 2.0 / y,
            Breakage::DiemerOlson { p, c } => {
                let coef = diemer_olson_coefficient(p, c).map(|v| v as f64).unwrap_or(f64::NAN);
                let z = x / y;
                let tail = c + (c + 1) * (p - 2);
                f64::from(p) * coef * z.powi(c as i32) * (1.0 - z).powi(tail as i32) / y
            }
            Breakage::ZiffTernary => {
                let z = x / y;
                12.0 * z * (1.0 - z) / y
            }
        }
    }

    /// `max_z y * b(z y, y)`; every built-in is of the form `g(x/y) / y`.
    fn max_scaled_density(&self) -> f64 {
        match *self {
            Breakage::None => 0.0,
            Breakage::Binary => 2.0,
            Breakage::DiemerOlson { p, c } => {
                let coef = diemer_olson_coefficient(p, c).map(|v| v as f64).unwrap_or(f64::NAN);
                let tail = c + (c + 1) * (p - 2);
                let z = f64::from(c) / f64::from(c + tail);
                f64::from(p) * coef * z.powi(c as i32) * (1.0 - z).powi(tail as i32)
            }
            Breakage::ZiffTernary => 3.0,
        }
    }

    /// Interior points where the daughter density is sharply peaked, as fractions of `y`.
    pub fn peak_fraction(&self) -> Option<f64> {
        match *self {
            Breakage::DiemerOlson { p, c } if c > 0 => {
                let tail = c + (c + 1) * (p - 2);
                Some(f64::from(c) / f64::from(c + tail))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Breakage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Breakage::None => f.write_str("none"),
            Breakage::Binary => f.write_str("binary"),
            Breakage::DiemerOlson { p, c } => write!(f, "diemer_olson(p={p}, c={c})"),
            Breakage::ZiffTernary => f.write_str("ziff_ternary"),
        }
    }
}

/// Upper bounds `β <= Q` and `b S <= Q1` on `]0, x_max]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub q: f64,
    pub q1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticsSet {
    pub aggregation: Aggregation,
    pub selection: Selection,
    pub breakage: Breakage,
}

impl KineticsSet {
    pub fn new(aggregation: Aggregation, selection: Selection, breakage: Breakage) -> Result<Self> {
        if let Aggregation::Constant { beta0 } = aggregation {
            if !(beta0.is_finite() && beta0 >= 0.0) {
                return Err(Error::Config(format!("beta0 must be non-negative, got {beta0}")));
            }
        }
        breakage.validate()?;
        Ok(Self {
            aggregation,
            selection,
            breakage,
        })
    }

    pub fn aggregation_only(aggregation: Aggregation) -> Self {
        Self {
            aggregation,
            selection: Selection::None,
            breakage: Breakage::None,
        }
    }

    pub fn breakage_only(selection: Selection, breakage: Breakage) -> Result<Self> {
        Self::new(Aggregation::None, selection, breakage)
    }

    pub fn has_aggregation(&self) -> bool {
        self.aggregation.is_active()
    }

    pub fn has_breakage(&self) -> bool {
        self.breakage.is_active() && self.selection != Selection::None
    }

    #[inline]
    pub fn eval_beta(&self, x: f64, y: f64) -> f64 {
        self.aggregation.eval(x, y)
    }

    #[inline]
    pub fn eval_selection(&self, x: f64) -> f64 {
        self.selection.eval(x)
    }

    pub fn eval_breakage(&self, x: f64, y: f64) -> Result<f64> {
        if x > y {
            return Err(Error::Domain(format!(
                "daughter size {x} exceeds parent size {y}"
            )));
        }
        if !(x > 0.0) {
            return Err(Error::Domain(format!("daughter size must be positive, got {x}")));
        }
        Ok(self.breakage.density(x, y))
    }

    fn daughter_moment(&self, y: f64, order: i32, quadrature_tol: f64) -> Result<f64> {
        if !self.breakage.is_active() {
            return Err(Error::Config("no breakage function configured".into()));
        }
        let mut points = vec![0.0];
        if let Some(z) = self.breakage.peak_fraction() {
            points.push(z * y);
        }
        points.push(y);
        let q = Quadrature::new(quadrature_tol);
        let b = self.breakage;
        let r = q.integrate_with_breaks(|u| u.powi(order) * b.density(u, y), &points)?;
        Ok(r.value)
    }

    /// `∫_0^y b(u, y) du`, the expected number of fragments.
    pub fn fragment_count(&self, y: f64, quadrature_tol: f64) -> Result<f64> {
        self.daughter_moment(y, 0, quadrature_tol)
    }

    /// `∫_0^y u b(u, y) du`, which must equal `y`.
    pub fn mass_moment_check(&self, y: f64, quadrature_tol: f64) -> Result<f64> {
        self.daughter_moment(y, 1, quadrature_tol)
    }

    /// Bounds from analytic maxima, cross-checked against a `samples x samples` grid.
    pub fn estimate_bounds(&self, x_max: f64, samples: usize) -> KernelBounds {
        let samples = samples.max(2);
        let q_analytic = match self.aggregation {
            Aggregation::None => 0.0,
            Aggregation::Constant { beta0 } => beta0,
            Aggregation::Sum => 2.0 * x_max,
            Aggregation::Product => x_max * x_max,
        };
        let q1_analytic = if self.has_breakage() {
            self.breakage.max_scaled_density() * self.selection.max_rate_per_size(x_max)
        } else {
            0.0
        };
        let grid: Vec<f64> = (1..=samples).map(|s| x_max * s as f64 / samples as f64).collect();
        let mut q = q_analytic;
        let mut q1 = q1_analytic;
        for &y in &grid {
            let sel = self.selection.eval(y);
            for &x in &grid {
                q = q.max(self.aggregation.eval(x, y));
                if self.has_breakage() && x <= y {
                    q1 = q1.max(self.breakage.density(x, y) * sel);
                }
            }
        }
        KernelBounds { q, q1 }
    }
}
