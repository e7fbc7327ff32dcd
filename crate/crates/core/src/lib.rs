//! Estimation of a decreasing probability mass function from a sample whose
//! species labels are unknown.
//!
//! The observation is a partition of the sample size (how many species were
//! seen once, twice, ...). From it this crate computes
//!
//! * the naive estimator (sorted relative frequencies), the Good-Turing
//!   unseen mass and the blob-plus-repeats check estimator ([`baseline`]);
//! * the sieved nonparametric maximum likelihood estimator, via a
//!   stochastic-approximation EM whose E-step is a Metropolis-Hastings walk
//!   over latent species assignments and whose M-step is a (lower-bounded)
//!   isotonic regression ([`saem`], [`isotonic`]);
//! * exact likelihoods, partition probabilities and brute-force MLEs for tiny
//!   instances, used as ground truth ([`oracle`]);
//! * ground-truth families, multinomial sampling, consistency experiments and
//!   evaluators for the concentration bounds ([`simulation`]).

pub mod baseline;
pub mod error;
pub mod isotonic;
pub mod oracle;
pub mod partition;
pub mod pmf;
pub mod saem;
pub mod simulation;

pub use error::{Error, Result};
pub use partition::{CompactPartition, Partition};
pub use pmf::OrderedPmf;
