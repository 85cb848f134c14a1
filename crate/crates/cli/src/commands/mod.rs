//! Subcommand implementations. Each takes its clap args struct and returns
//! `Err(Failure)` with the exit code to use.

pub mod eval;
pub mod gradcheck;
pub mod sweep;
pub mod synth;
pub mod track;
pub mod train;

use cosmot::evaluator::AnnotatedObject;
use cosmot::losses::{CmcForm, LossKind};
use cosmot::tracker::{Detection, Matcher};

use crate::fail::{Failure, EXIT_USAGE};

pub(crate) fn read_file(path: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{path}: {e}")))
}

pub(crate) fn write_file(path: &str, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::usage(format!("{path}: {e}")))
}

pub(crate) fn read_detections_file(path: &str) -> Result<Vec<Detection>, Failure> {
    let text = read_file(path)?;
    cosmot::formats::read_detections(&text).map_err(|e| Failure::in_file(path, e, EXIT_USAGE))
}

pub(crate) fn read_tracks_file(path: &str) -> Result<Vec<AnnotatedObject>, Failure> {
    let text = read_file(path)?;
    cosmot::formats::read_tracks(&text).map_err(|e| Failure::in_file(path, e, EXIT_USAGE))
}

pub(crate) fn parse_loss(name: &str) -> Result<LossKind, Failure> {
    LossKind::parse(name).ok_or_else(|| {
        Failure::usage(format!(
            "unknown loss `{name}` (expected one of softmax, lmcl, contrastive, triplet, dot-triplet, cmt, cmc)"
        ))
    })
}

pub(crate) fn parse_matcher(name: &str) -> Result<Matcher, Failure> {
    Matcher::parse(name)
        .ok_or_else(|| Failure::usage(format!("unknown matcher `{name}` (expected greedy or hungarian)")))
}

pub(crate) fn parse_cmc_form(name: &str) -> Result<CmcForm, Failure> {
    match name {
        "direct" => Ok(CmcForm::Direct),
        "two-class-softmax" | "two_class_softmax" => Ok(CmcForm::TwoClassSoftmax),
        other => Err(Failure::usage(format!(
            "unknown cmc form `{other}` (expected direct or two-class-softmax)"
        ))),
    }
}
