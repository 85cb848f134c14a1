//! Process failure with a fixed exit code.
//!
//! Codes: 1 acceptance (a check ran and failed), 2 usage (bad flags, bad
//! config, malformed input files), 3 degenerate data at runtime.

use cosmot::evaluator::EvalError;
use cosmot::formats::FormatError;
use cosmot::hypersphere::HypersphereError;
use cosmot::losses::LossError;
use cosmot::synth::SynthError;
use cosmot::tracker::TrackerError;
use cosmot::trainer::TrainError;

pub const EXIT_ACCEPTANCE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn acceptance(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_ACCEPTANCE, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn degenerate(message: impl Into<String>) -> Failure {
        Failure { code: EXIT_DEGENERATE, message: message.into() }
    }

    /// Wraps an error with the file path it came from.
    pub fn in_file(path: &str, err: impl std::fmt::Display, code: i32) -> Failure {
        Failure { code, message: format!("{path}: {err}") }
    }
}

impl From<FormatError> for Failure {
    fn from(err: FormatError) -> Failure {
        Failure::usage(err.to_string())
    }
}

impl From<TrackerError> for Failure {
    fn from(err: TrackerError) -> Failure {
        let code = match err {
            TrackerError::ZeroNormEmbedding { .. } => EXIT_DEGENERATE,
            _ => EXIT_USAGE,
        };
        Failure { code, message: err.to_string() }
    }
}

impl From<TrainError> for Failure {
    fn from(err: TrainError) -> Failure {
        let code = match err {
            TrainError::DegenerateBatch(_) | TrainError::Loss(_) => EXIT_DEGENERATE,
            _ => EXIT_USAGE,
        };
        Failure { code, message: err.to_string() }
    }
}

impl From<SynthError> for Failure {
    fn from(err: SynthError) -> Failure {
        match err {
            SynthError::Tracker(inner) => inner.into(),
            other => Failure::usage(other.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(err: EvalError) -> Failure {
        Failure::usage(err.to_string())
    }
}

impl From<LossError> for Failure {
    fn from(err: LossError) -> Failure {
        Failure::degenerate(err.to_string())
    }
}

impl From<HypersphereError> for Failure {
    fn from(err: HypersphereError) -> Failure {
        Failure::degenerate(err.to_string())
    }
}
