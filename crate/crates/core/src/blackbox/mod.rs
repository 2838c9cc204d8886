//! Query interface to the opaque classifier being explained.
//!
//! Every predictor sits behind [`BlackBox`], which validates response
//! lengths and counts queries. Built-in predictors live in [`ensemble`];
//! [`external`] talks to out-of-process models over a line-delimited JSON
//! protocol (see [`protocol`]).

pub mod ensemble;
pub mod external;
pub mod protocol;
pub mod stub;

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::data::{Instance, Label};

pub use ensemble::{BaggedTreeEnsemble, EnsembleParams};
pub use external::connect_external;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlackBoxError {
    /// Spawning, I/O or HTTP failure.
    #[error("black-box transport failure: {0}")]
    Transport(String),
    #[error("black box did not answer within {0:?}")]
    Timeout(std::time::Duration),
    /// Response that is not a well-formed protocol message.
    #[error("malformed black-box message: {0}")]
    Protocol(String),
    /// Well-formed response that breaks the request/response contract.
    #[error("black-box contract violation: {0}")]
    ContractViolation(String),
    #[error("black-box protocol version mismatch: expected {expected}, got {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("black-box training failed: {0}")]
    Training(String),
}

impl BlackBoxError {
    /// `true` for failures of the channel rather than of the peer's answers.
    pub fn is_transport(&self) -> bool {
        matches!(self, BlackBoxError::Transport(_) | BlackBoxError::Timeout(_))
    }
}

/// Anything that maps a batch of instances to class labels.
pub trait Predictor: Send + Sync {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError>;
}

/// Predictor returning the same label for every instance.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub Label);

impl Predictor for Constant {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        Ok(vec![self.0; xs.len()])
    }
}

/// Adapts a per-instance closure.
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&Instance) -> Label + Send + Sync,
{
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        Ok(xs.iter().map(&self.0).collect())
    }
}

impl Predictor for crate::tree::DecisionTree {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        Ok(xs.iter().map(|x| crate::tree::DecisionTree::predict(self, x)).collect())
    }
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        (**self).predict(xs)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        (**self).predict(xs)
    }
}

pub struct BlackBox {
    inner: Box<dyn Predictor>,
    queries: AtomicU64,
}

impl BlackBox {
    pub fn new(predictor: impl Predictor + 'static) -> Self {
        BlackBox {
            inner: Box::new(predictor),
            queries: AtomicU64::new(0),
        }
    }

    pub fn constant(label: Label) -> Self {
        Self::new(Constant(label))
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&Instance) -> Label + Send + Sync + 'static,
    {
        Self::new(FnPredictor(f))
    }

    /// One label per instance, in input order.
    pub fn predict_batch(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        self.queries.fetch_add(xs.len() as u64, Ordering::Relaxed);
        let labels = self.inner.predict(xs)?;
        if labels.len() != xs.len() {
            return Err(BlackBoxError::ContractViolation(format!(
                "{} labels returned for {} instances",
                labels.len(),
                xs.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(BlackBoxError::ContractViolation(format!("label index {bad} out of range")));
        }
        Ok(labels)
    }

    pub fn predict_one(&self, x: &Instance) -> Result<Label, BlackBoxError> {
        Ok(self.predict_batch(std::slice::from_ref(x))?[0])
    }

    /// Total number of instances submitted so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl Predictor for BlackBox {
    fn predict(&self, xs: &[Instance]) -> Result<Vec<Label>, BlackBoxError> {
        self.predict_batch(xs)
    }
}

impl std::fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlackBox").field("queries", &self.query_count()).finish()
    }
}
