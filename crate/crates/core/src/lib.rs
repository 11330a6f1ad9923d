//! Recommendation policies for two-sided matching markets.
//!
//! Both sides of a market receive probabilistic ranking lists of the other
//! side, encoded as doubly stochastic matrices; a match needs mutual
//! interest. This crate models such markets, evaluates policies (expected
//! matches, envy counts between agents' recommendation opportunities, Gini
//! indices), and computes policies by alternating Frank-Wolfe maximization
//! of social welfare, log Nash social welfare, or alpha-social welfare,
//! with either an exact assignment oracle or Sinkhorn scaling for the
//! inner linear maximizations. Classic ranking baselines and a seeded
//! synthetic market generator round out an experiment toolkit.

pub mod baselines;
pub mod birkhoff;
pub mod datagen;
mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optim;

pub use error::{Error, Result};
pub use model::{ExamKind, ExaminationModel, Instance, Policy, PolicyViolation, Side};
