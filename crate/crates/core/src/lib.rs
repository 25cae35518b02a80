//! Multi-fidelity Bayesian calibration of the alternative-specific constants
//! of an agent-based multinomial-logit mode-choice simulator.
//!
//! The crate is organised bottom-up:
//!
//! * [`space`]: the bounded 8-dimensional intercept search space.
//! * [`sim`]: the logit mode-choice simulator with congestion feedback, the
//!   L1 mode-share objective and a maximum-likelihood estimator.
//! * [`gp`]: Gaussian-process regression, closed-form and batch (q-EI)
//!   expected improvement, and multi-start stochastic gradient ascent.
//! * [`tpe`]: bounded product-kernel density estimators and the l/g proposal.
//! * [`hyperband`]: budget ladders, successive-halving brackets, the
//!   elapsed-time early-stopping rule and the BOHB job scheduler.
//!
//! Data-parallel inner loops (agents, Monte Carlo draws, restarts) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! plain iterators otherwise; results are bit-identical either way.

pub mod gp;
pub mod hyperband;
pub mod mode;
pub mod par;
pub mod rng;
pub mod sim;
pub mod space;
pub mod tpe;

pub use mode::{Mode, ModeShare, NUM_MODES};
pub use space::{ConfigId, InterceptConfig, Interval, ParameterSpace};
