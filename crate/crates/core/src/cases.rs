//! Benchmark problems: pure aggregation (sum and product kernels), pure
//! binary and multiple breakage, and combined constant aggregation with
//! binary breakage, with their default domains, times and initial data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{Aggregation, Breakage, KineticsSet, Selection};
use crate::profiles::{lage_beta0, AnalyticCase, LageInitial, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestCase {
    AggSum,
    AggProduct,
    BrkBinaryLinear,
    BrkBinaryQuadratic,
    BrkDiemerOlson,
    BrkZiff,
    LageGamma,
    LageExponential,
}

impl TestCase {
    pub const ALL: [TestCase; 8] = [
        TestCase::AggSum,
        TestCase::AggProduct,
        TestCase::BrkBinaryLinear,
        TestCase::BrkBinaryQuadratic,
        TestCase::BrkDiemerOlson,
        TestCase::BrkZiff,
        TestCase::LageGamma,
        TestCase::LageExponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestCase::AggSum => "agg_sum",
            TestCase::AggProduct => "agg_product",
            TestCase::BrkBinaryLinear => "brk_binary_linear",
            TestCase::BrkBinaryQuadratic => "brk_binary_quadratic",
            TestCase::BrkDiemerOlson => "brk_diemer_olson",
            TestCase::BrkZiff => "brk_ziff",
            TestCase::LageGamma => "lage_gamma",
            TestCase::LageExponential => "lage_exponential",
        }
    }

    /// Default domain `(x_min, x_max)`.
    pub fn domain(self) -> (f64, f64) {
        match self {
            TestCase::AggSum | TestCase::AggProduct => (1e-6, 1000.0),
            TestCase::LageGamma | TestCase::LageExponential => (1e-2, 10.0),
            _ => (1e-3, 1.0),
        }
    }

    pub fn default_t_end(self) -> f64 {
        match self {
            TestCase::AggSum => 0.5,
            TestCase::AggProduct => 0.3,
            TestCase::BrkBinaryLinear | TestCase::BrkDiemerOlson => 100.0,
            TestCase::BrkBinaryQuadratic => 200.0,
            TestCase::BrkZiff => 150.0,
            TestCase::LageGamma | TestCase::LageExponential => 0.3,
        }
    }

    pub fn has_analytic(self) -> bool {
        !matches!(self, TestCase::BrkDiemerOlson | TestCase::BrkZiff)
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty test case name".into()));
        }
        TestCase::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = TestCase::ALL.iter().map(|c| c.name()).collect();
                Error::Config(format!("unknown test case '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Tunable parameters of the benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseParams {
    /// Decay rate of the exponential initial condition.
    pub alpha: f64,
    /// Constant aggregation rate; `None` keeps the particle number constant (`2 x0 / N0²`).
    pub beta0: Option<f64>,
    /// Diemer–Olson fragment count.
    pub p: u32,
    /// Diemer–Olson shape parameter.
    pub c: u32,
    pub mu: f64,
    pub sigma: f64,
    pub n0: f64,
    pub x0: f64,
    /// Location of the monodisperse initial condition.
    pub x_mono: f64,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta0: None,
            p: 4,
            c: 2,
            mu: 0.4,
            sigma: 0.1,
            n0: 1.0,
            x0: 1.0,
            x_mono: 1.0,
        }
    }
}

/// Everything needed to run one benchmark problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSetup {
    pub case: TestCase,
    pub x_min: f64,
    pub x_max: f64,
    pub t_end: f64,
    pub kinetics: KineticsSet,
    pub initial: Profile,
    pub analytic: Option<AnalyticCase>,
}

impl TestCase {
    pub fn setup(self, params: &CaseParams) -> Result<CaseSetup> {
        let (x_min, x_max) = self.domain();
        let lage = |initial| {
            let beta0 = params.beta0.unwrap_or_else(|| lage_beta0(params.n0, params.x0));
            let kinetics = KineticsSet::new(Aggregation::Constant { beta0 }, Selection::Linear, Breakage::Binary)?;
            let case = AnalyticCase::CombinedConstantBinaryLinear {
                n0: params.n0,
                x0: params.x0,
                initial,
            };
            // The closed form only holds for the number-preserving rate.
            let exact = (beta0 - lage_beta0(params.n0, params.x0)).abs() <= 1e-12 * beta0;
            Ok::<_, Error>((kinetics, case.initial_profile(), exact.then_some(case)))
        };
        let (kinetics, initial, analytic) = match self {
            TestCase::AggSum | TestCase::AggProduct => {
                if !(params.alpha > 0.0) {
                    return Err(Error::Config(format!("alpha must be positive, got {}", params.alpha)));
                }
                let (agg, case) = if self == TestCase::AggSum {
                    (Aggregation::Sum, AnalyticCase::AggSum { alpha: params.alpha })
                } else {
                    (Aggregation::Product, AnalyticCase::AggProduct { alpha: params.alpha })
                };
                (KineticsSet::aggregation_only(agg), case.initial_profile(), Some(case))
            }
            TestCase::BrkBinaryLinear | TestCase::BrkBinaryQuadratic => {
                let x0 = params.x_mono;
                if !(x0 > x_min && x0 <= x_max) {
                    return Err(Error::Config(format!(
                        "monodisperse size {x0} outside of ]{x_min}, {x_max}]"
                    )));
                }
                let (sel, case) = if self == TestCase::BrkBinaryLinear {
                    (Selection::Linear, AnalyticCase::BrkBinaryLinear { x0 })
                } else {
                    (Selection::Quadratic, AnalyticCase::BrkBinaryQuadratic { x0 })
                };
                (
                    KineticsSet::breakage_only(sel, Breakage::Binary)?,
                    case.initial_profile(),
                    Some(case),
                )
            }
            TestCase::BrkDiemerOlson | TestCase::BrkZiff => {
                if !(params.sigma > 0.0) {
                    return Err(Error::Config(format!("sigma must be positive, got {}", params.sigma)));
                }
                let b = if self == TestCase::BrkDiemerOlson {
                    Breakage::DiemerOlson { p: params.p, c: params.c }
                } else {
                    Breakage::ZiffTernary
                };
                (
                    KineticsSet::breakage_only(Selection::Quadratic, b)?,
                    Profile::Normal {
                        mu: params.mu,
                        sigma: params.sigma,
                    },
                    None,
                )
            }
            TestCase::LageGamma => lage(LageInitial::Gamma)?,
            TestCase::LageExponential => lage(LageInitial::Exponential)?,
        };
        if matches!(self, TestCase::LageGamma | TestCase::LageExponential)
            && !(params.n0 > 0.0 && params.x0 > 0.0)
        {
            return Err(Error::Config("N0 and x0 must be positive".into()));
        }
        Ok(CaseSetup {
            case: self,
            x_min,
            x_max,
            t_end: self.default_t_end(),
            kinetics,
            initial,
            analytic,
        })
    }
}
