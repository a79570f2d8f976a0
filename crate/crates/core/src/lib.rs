//! Distillation of probabilistic deterministic finite automata from a teacher
//! that answers string-probability queries.

pub mod eval;
pub mod learner;
pub mod merge;
pub mod pdfa;
pub mod teacher;
pub mod tree;

use thiserror::Error;

pub use eval::{EvalError, EvalReport, TestSet};
pub use learner::{run, LearnError, Learner, LearnerConfig, RunObserver, RunReport, StopReason};
pub use pdfa::{Pdfa, PdfaBuilder, PdfaError, StateId, Token};
pub use teacher::{
    CachedTeacher, EquivalenceConfig, ExactTeacher, RemoteTeacher, Teacher, TeacherError, Verdict,
};
pub use tree::{NodeId, ObservationTree};

/// A rejected configuration value.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("invalid configuration: {message}")]
pub struct ConfigError {
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            message: message.into(),
        }
    }
}
