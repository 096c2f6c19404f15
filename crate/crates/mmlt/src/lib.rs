//! Minimum message length parameter estimation and variable selection for
//! Student-t (and limiting Gaussian) linear regression, with BIC, AICc, and
//! MDL-denoising baselines, a JS-equidistant degrees-of-freedom grid, and a
//! replicated simulation/cross-validation harness.

pub mod codelength;
pub mod criteria;
pub mod data;
pub mod dist;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod search;
pub mod simulation;

pub use codelength::{CodelengthBreakdown, HyperK, StructureCodingScheme};
pub use criteria::CriterionName;
pub use data::{Dataset, ModelStructure, Scheme, TParams};
pub use dist::TSpec;
pub use divergence::DofGrid;
pub use error::{Error, Result};
pub use estimation::{EMConfig, FitResult};
pub use search::{CandidateScore, SelectionReport};
pub use simulation::{CvReport, ExperimentResult, Metrics, SimConfig};
