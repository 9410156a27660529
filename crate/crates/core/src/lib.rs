//! Bayesian hierarchical baseline-category logit models for longitudinal
//! nominal categorical data.
//!
//! The crate covers the whole analysis path:
//!
//! * [`data`]: validated long-format observation tables loaded from event
//!   or count CSV files, plus contingency tables.
//! * [`design`]: model terms, dummy coding, and the flat parameter layout.
//! * [`likelihood`]: softmax probabilities, multinomial log-likelihood,
//!   normal priors, and the log-posterior with its gradient.
//! * [`sampler`]: adaptive random-walk Metropolis-within-Gibbs over several
//!   independent chains, with split R-hat and effective sample size.
//! * [`inference`]: posterior summaries, credible intervals, DIC and model
//!   ranking.
//! * [`explore`]: chi-square test of independence, correspondence analysis
//!   and mean profiles.
//! * [`simulate`]: synthetic data, grid-integration posterior oracles and
//!   parameter-recovery trials.

pub mod data;
pub mod design;
mod error;
pub mod explore;
pub mod inference;
pub mod likelihood;
pub mod sampler;
pub mod simulate;
pub mod special;

pub use data::{CategorySet, Contingency, FactorDef, ObservationTable, Row, Schema};
pub use design::{ModelSpec, ParameterLayout, PriorConfig, RandomEffect, Term};
pub use error::{Error, Result};
pub use explore::{ChiSquareResult, CorrespondenceResult, ProfileRow};
pub use inference::{DicReport, ParamSummary};
pub use likelihood::ParameterState;
pub use sampler::{PosteriorDraws, SamplerConfig};
pub use simulate::SimulationSpec;

/// Crate version embedded in every metadata sidecar.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
