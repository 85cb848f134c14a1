//! Score hypothesis tracks against ground truth and print per-class
//! metrics, either human-readable or as `key=value` pairs.

use clap::Args as ClapArgs;
use cosmot::evaluator::compute_metrics;

use crate::config::{pick, require, Settings};
use crate::fail::Failure;

use super::read_tracks_file;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Ground-truth track file (required here or in the config)
    #[arg(long)]
    pub ground_truth: Option<String>,
    /// Hypothesis track file (required here or in the config)
    #[arg(long)]
    pub hypotheses: Option<String>,
    /// IoU threshold for a valid correspondence, strict > [default: 0.5]
    #[arg(long)]
    pub iou: Option<f64>,
    /// text | kv [default: text]
    #[arg(long)]
    pub format: Option<String>,
    /// Settings file; flags override its keys
    #[arg(long)]
    pub config: Option<String>,
}

const KEYS: &[&str] = &["ground_truth", "hypotheses", "iou", "format"];

pub fn run(args: &Args) -> Result<(), Failure> {
    let file = Settings::load_opt(args.config.as_deref(), KEYS)?;
    let gt_path = require(
        args.ground_truth.clone(),
        file.raw("ground_truth").map(str::to_string),
        "ground_truth",
    )?;
    let hyp_path = require(
        args.hypotheses.clone(),
        file.raw("hypotheses").map(str::to_string),
        "hypotheses",
    )?;
    let iou = pick(args.iou, file.parsed("iou")?, cosmot::evaluator::DEFAULT_IOU_THRESHOLD);
    let format = pick(
        args.format.clone(),
        file.raw("format").map(str::to_string),
        "text".to_string(),
    );
    if format != "text" && format != "kv" {
        return Err(Failure::usage(format!("unknown format `{format}` (expected text or kv)")));
    }
    if !(0.0..1.0).contains(&iou) {
        return Err(Failure::usage(format!("iou must lie in [0, 1), got {iou}")));
    }

    let ground_truth = read_tracks_file(&gt_path)?;
    let hypotheses = read_tracks_file(&hyp_path)?;
    let report = compute_metrics(&ground_truth, &hypotheses, iou)?;

    if report.classes.is_empty() {
        eprintln!("no ground-truth objects; nothing to score");
        return Ok(());
    }
    for c in &report.classes {
        match format.as_str() {
            "text" => println!(
                "class {}: sMOTSA {:.3} MOTSA {:.3} IDS {} TP {} FP {} FN {} GT {}",
                c.class, c.smotsa, c.motsa, c.ids, c.tp, c.fp, c.fn_count, c.gt_count
            ),
            _ => println!(
                "class={} smotsa={} motsa={} ids={} tp={} soft_tp={} fp={} fn={} gt={}",
                c.class, c.smotsa, c.motsa, c.ids, c.tp, c.soft_tp, c.fp, c.fn_count, c.gt_count
            ),
        }
    }
    Ok(())
}
