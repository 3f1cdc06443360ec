//! Conformal meta-learners: distribution-free predictive intervals for
//! individual treatment effects (ITEs).
//!
//! The crate is organised around the pipeline it implements:
//!
//! - [`dgp`]: the causal data model, the synthetic benchmark generator and
//!   CSV ingestion.
//! - [`regress`]: gradient-boosted regression trees for conditional means
//!   and conditional quantiles (pinball loss).
//! - [`metalearner`]: nuisance fitting, IPW/X/DR pseudo-outcomes and the
//!   second-stage CATE regression.
//! - [`conformal`]: split conformal calibration, oracle calibration on true
//!   ITEs, pseudo-intervals and the CQR signed-distance score.
//! - [`wcp`]: weighted conformal baselines that build ITE intervals from
//!   potential-outcome intervals.
//! - [`stochord`]: empirical stochastic-order diagnostics between
//!   pseudo-outcome and oracle conformity scores.

pub mod conformal;
pub mod dgp;
mod error;
mod matrix;
pub mod metalearner;
pub mod regress;
pub mod stochord;
pub mod wcp;

pub use error::{Error, Result};
pub use matrix::Matrix;
