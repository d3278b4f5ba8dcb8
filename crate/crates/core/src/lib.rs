//! Estimation of an unobserved population from aggregated administrative
//! counts using power-link count regression.
//!
//! The pipeline is: [`dataio`] (ingest and condition strata) →
//! [`meanmodel`] (design and likelihood) → [`mle`] (Newton-Raphson fit) →
//! [`uncertainty`] and [`diagnostics`]. [`simulation`] reproduces the
//! likelihood-variant bias study.

pub mod dataio;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod meanmodel;
pub mod mle;
mod quadrature;
pub mod simulation;
pub mod special;
pub mod uncertainty;

pub use dataio::{AuditReport, ColumnSchema, Dataset, RecordKey, StratumRecord};
pub use diagnostics::{DiagnosticsReport, LinearizedCheck};
pub use distributions::{CountFamily, EtaPoint, Family, Truncation};
pub use error::{Error, Result};
pub use meanmodel::{CovariateTerm, DesignSpec, LikelihoodKernel, ModelSpec, ParamVector, Problem};
pub use mle::{fit, FitOptions, FitStatus, FittedModel, Grouping};
pub use simulation::{SimDesign, SimulationReport, Variant};
pub use uncertainty::{BootstrapConfig, BootstrapResult, Interval};
