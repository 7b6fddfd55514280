//! Finite-volume solver for the aggregation–multiple-breakage population
//! balance equation in conservative (mass-flux) form on a truncated domain
//! `]x_min, x_max]`, together with the tooling for convergence studies on
//! uniform, geometric, oscillatory and random meshes.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod convergence;
pub mod discretization;
pub mod error;
pub mod integrate;
pub mod kinetics;
pub mod mesh;
pub mod profiles;
pub mod quadrature;
pub mod tables;
pub mod verify;

pub use cases::{CaseParams, TestCase};
pub use convergence::{run_eoc_study, EocReport, StudyConfig};
pub use discretization::{FaceFluxes, FluxOperator};
pub use error::{Error, Result};
pub use integrate::{Method, TimeStepPlan, Trajectory};
pub use kinetics::{Aggregation, Breakage, KineticsSet, Selection};
pub use mesh::{Mesh, MeshFamily};
pub use profiles::{AnalyticCase, GridFunction, Profile};
