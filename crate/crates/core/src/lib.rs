//! Learned dimensionality reduction for mixed-integer programs.
//!
//! The crate covers the whole loop: an exact MILP solver ([`milp`]), the
//! cell-therapy supply-chain model ([`supply`]), oracle-labelled data
//! generation ([`datagen`]), from-scratch multi-label neural classifiers
//! ([`neural`]), Gaussian-process Bayesian hyperparameter search ([`hpo`]),
//! multi-label evaluation ([`metrics`]) and the probability-threshold
//! model reduction that ties them together ([`reducer`]).

pub mod datagen;
pub mod hpo;
pub mod metrics;
pub mod milp;
pub mod neural;
pub mod reducer;
pub mod supply;
