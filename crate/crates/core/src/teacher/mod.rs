//! Query sources answering whole-string probabilities.

mod equivalence;
pub mod remote;

use std::collections::HashMap;
use std::time::Duration;

use thiserror::Error;

use crate::pdfa::{Pdfa, PdfaError, Token};

pub use equivalence::{
    equivalence_query, equivalence_query_seeded, sample_test_string, EquivalenceConfig, Verdict,
};
pub use remote::RemoteTeacher;

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error(transparent)]
    Token(#[from] PdfaError),
    #[error("failed to start teacher process: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("teacher stream broken: {0}")]
    Io(#[source] std::io::Error),
    #[error("teacher closed its output stream")]
    Closed,
    #[error("no response from teacher within {0:?}")]
    Timeout(Duration),
    #[error("malformed teacher response ({reason}): {payload}")]
    Malformed { reason: String, payload: String },
    #[error("teacher answered probability {p} outside [0, 1]: {payload}")]
    OutOfRange { p: f64, payload: String },
    #[error("teacher reported an error for request {id}: {message}")]
    Remote { id: u64, message: String },
}

/// A source of string probabilities `P(x)`.
pub trait Teacher {
    fn alphabet_size(&self) -> usize;

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError>;
}

impl<T: Teacher + ?Sized> Teacher for &mut T {
    fn alphabet_size(&self) -> usize {
        (**self).alphabet_size()
    }

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        (**self).string_prob(x)
    }
}

impl<T: Teacher + ?Sized> Teacher for Box<T> {
    fn alphabet_size(&self) -> usize {
        (**self).alphabet_size()
    }

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        (**self).string_prob(x)
    }
}

/// Answers queries by evaluating a known automaton.
#[derive(Clone, Debug)]
pub struct ExactTeacher {
    pdfa: Pdfa,
}

impl ExactTeacher {
    pub fn new(pdfa: Pdfa) -> Self {
        ExactTeacher { pdfa }
    }

    pub fn pdfa(&self) -> &Pdfa {
        &self.pdfa
    }
}

impl Teacher for ExactTeacher {
    fn alphabet_size(&self) -> usize {
        self.pdfa.alphabet_size()
    }

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        Ok(exact_string_prob(&self.pdfa, x)?)
    }
}

pub fn exact_string_prob(pdfa: &Pdfa, x: &[Token]) -> Result<f64, PdfaError> {
    pdfa.eval_string_prob(x)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Memoizes answers of an inner teacher. Each distinct string reaches the
/// inner teacher at most once; failed queries are not cached.
#[derive(Debug)]
pub struct CachedTeacher<T> {
    inner: T,
    answers: HashMap<Vec<Token>, f64>,
    stats: CacheStats,
}

impl<T: Teacher> CachedTeacher<T> {
    pub fn new(inner: T) -> Self {
        CachedTeacher {
            inner,
            answers: HashMap::new(),
            stats: CacheStats::default(),
        }
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Teacher> Teacher for CachedTeacher<T> {
    fn alphabet_size(&self) -> usize {
        self.inner.alphabet_size()
    }

    fn string_prob(&mut self, x: &[Token]) -> Result<f64, TeacherError> {
        if let Some(&p) = self.answers.get(x) {
            self.stats.hits += 1;
            return Ok(p);
        }
        let p = self.inner.string_prob(x)?;
        self.stats.misses += 1;
        self.answers.insert(x.to_vec(), p);
        Ok(p)
    }
}
