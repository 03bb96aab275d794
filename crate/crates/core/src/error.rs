use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("time {t} is not a mesh level below the horizon")]
    Domain { t: f64 },

    #[error("{what} evaluated to a non-finite value for control {control} at t={t}, x={x:?}")]
    Evaluation {
        what: &'static str,
        control: usize,
        t: f64,
        x: Vec<f64>,
    },

    #[error("control set is empty")]
    EmptyControlSet,

    #[error("validation failed for control {control}, direction {direction:?} at t={t}, x={x:?}: {reason}")]
    Validation {
        control: usize,
        direction: Option<i32>,
        t: f64,
        x: Vec<f64>,
        reason: String,
    },

    #[error("unknown problem `{name}` (available: {available})")]
    UnknownProblem { name: String, available: String },

    #[error("no convergence after {iterations} iterations (residual {residual:e}){}", slice_note(*.slice))]
    Convergence {
        iterations: usize,
        residual: f64,
        slice: Option<usize>,
    },

    #[error("negative stencil weight {weight:e} at node {node}, control {control}")]
    NegativeWeight {
        weight: f64,
        node: usize,
        control: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

fn slice_note(slice: Option<usize>) -> String {
    match slice {
        Some(j) => alloc::format!(" in time slice {j}"),
        None => String::new(),
    }
}

impl Error {
    /// Failures of the numerical method itself, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::Evaluation { .. } | Error::NegativeWeight { .. }
        )
    }

    pub(crate) fn in_slice(self, j: usize) -> Self {
        match self {
            Error::Convergence {
                iterations,
                residual,
                slice: None,
            } => Error::Convergence {
                iterations,
                residual,
                slice: Some(j),
            },
            other => other,
        }
    }
}
