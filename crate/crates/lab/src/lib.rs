//! Workbench for learning the causal graph of small reinforcement-learning
//! environments by iteratively fitting sparse linear causal models on rollout
//! features and training agents on intervention rewards that collect data
//! disproving spurious correlations.

pub mod causal;
pub mod envs;
pub mod error;
pub mod harness;
pub mod interventions;
pub mod oracle;
pub mod rl;

pub use error::{LabError, Result};
