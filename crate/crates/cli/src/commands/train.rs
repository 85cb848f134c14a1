//! Fit a linear projection on a detection stream labeled by IoU overlap
//! with ground-truth tracks, then write the model and the step history.

use clap::Args as ClapArgs;
use cosmot::formats::{write_history, write_model};
use cosmot::losses::MarginScale;
use cosmot::trainer::{label_detections, train, TrainConfig, TrainStage};

use crate::config::{pick, require, Settings};
use crate::fail::Failure;

use super::{parse_cmc_form, parse_loss, read_detections_file, read_tracks_file, write_file};

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Settings file; flags override its keys
    #[arg(long)]
    pub config: Option<String>,
    /// Loss to train with (required here or in the config)
    #[arg(long)]
    pub loss: Option<String>,
    /// Detection stream with embeddings (required here or in the config)
    #[arg(long)]
    pub detections: Option<String>,
    /// Ground-truth tracks used to label detections (required here or in the config)
    #[arg(long)]
    pub ground_truth: Option<String>,
    /// Cosine margin m
    #[arg(long)]
    pub margin: Option<f64>,
    /// Logit scale s
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Shuffle and init seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dimension of the projection [default: 8]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// direct | two-class-softmax [default: two-class-softmax]
    #[arg(long)]
    pub cmc_form: Option<String>,
    /// IoU threshold for labeling [default: 0.5]
    #[arg(long)]
    pub iou: Option<f64>,
    /// Model output path [default: model.txt]
    #[arg(long)]
    pub model_out: Option<String>,
    /// History CSV output path [default: history.csv]
    #[arg(long)]
    pub history_out: Option<String>,
}

const KEYS: &[&str] = &[
    "loss",
    "detections",
    "ground_truth",
    "margin",
    "scale",
    "learning_rate",
    "momentum",
    "epochs",
    "batch_size",
    "seed",
    "embed_dim",
    "cmc_form",
    "iou",
    "model_out",
    "history_out",
    "stages",
];

/// Extra stages appended after the base schedule. Config-file only, written
/// as `margin:scale:batch:epochs` entries separated by `;`.
fn parse_stages(text: &str) -> Result<Vec<TrainStage>, Failure> {
    let mut stages = Vec::new();
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split(':').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Failure::usage(format!(
                "stage `{part}` must have the form margin:scale:batch:epochs"
            )));
        }
        let parse_f = |s: &str| -> Result<f64, Failure> {
            s.parse().map_err(|e| Failure::usage(format!("stage `{part}`: {e}")))
        };
        let parse_u = |s: &str| -> Result<usize, Failure> {
            s.parse().map_err(|e| Failure::usage(format!("stage `{part}`: {e}")))
        };
        let margin_scale = MarginScale::new(parse_f(fields[0])?, parse_f(fields[1])?)
            .map_err(|e| Failure::usage(format!("stage `{part}`: {e}")))?;
        stages.push(TrainStage {
            margin_scale,
            batch_size: parse_u(fields[2])?,
            epochs: parse_u(fields[3])?,
        });
    }
    if stages.is_empty() {
        return Err(Failure::usage("stages must contain at least one entry"));
    }
    Ok(stages)
}

pub fn run(args: &Args) -> Result<(), Failure> {
    let file = Settings::load_opt(args.config.as_deref(), KEYS)?;
    let loss_name = require(
        args.loss.clone(),
        file.raw("loss").map(str::to_string),
        "loss",
    )?;
    let det_path = require(
        args.detections.clone(),
        file.raw("detections").map(str::to_string),
        "detections",
    )?;
    let gt_path = require(
        args.ground_truth.clone(),
        file.raw("ground_truth").map(str::to_string),
        "ground_truth",
    )?;

    let kind = parse_loss(&loss_name)?;
    let mut cfg = TrainConfig::new(kind);
    let margin = pick(args.margin, file.parsed("margin")?, cfg.margin_scale.margin());
    let scale = pick(args.scale, file.parsed("scale")?, cfg.margin_scale.scale());
    cfg.margin_scale = MarginScale::new(margin, scale).map_err(|e| Failure::usage(e.to_string()))?;
    cfg.learning_rate = pick(args.learning_rate, file.parsed("learning_rate")?, cfg.learning_rate);
    cfg.momentum = pick(args.momentum, file.parsed("momentum")?, cfg.momentum);
    cfg.epochs = pick(args.epochs, file.parsed("epochs")?, cfg.epochs);
    cfg.batch_size = pick(args.batch_size, file.parsed("batch_size")?, cfg.batch_size);
    cfg.seed = pick(args.seed, file.parsed("seed")?, cfg.seed);
    cfg.embed_dim = pick(args.embed_dim, file.parsed("embed_dim")?, cfg.embed_dim);
    if let Some(form) = args.cmc_form.clone().or_else(|| file.raw("cmc_form").map(str::to_string)) {
        cfg.cmc_form = parse_cmc_form(&form)?;
    }
    if let Some(stages) = file.raw("stages") {
        cfg.stages = parse_stages(stages)?;
    }
    let iou = pick(args.iou, file.parsed("iou")?, 0.5);
    let model_out = pick(
        args.model_out.clone(),
        file.raw("model_out").map(str::to_string),
        "model.txt".to_string(),
    );
    let history_out = pick(
        args.history_out.clone(),
        file.raw("history_out").map(str::to_string),
        "history.csv".to_string(),
    );

    let detections = read_detections_file(&det_path)?;
    let ground_truth = read_tracks_file(&gt_path)?;
    let data = label_detections(&detections, &ground_truth, iou)?;
    let (model, history) = train(&cfg, &data)?;
    write_file(&model_out, &write_model(&model, kind, cfg.seed))?;
    write_file(&history_out, &write_history(&history))?;

    let last = history.last().expect("training always logs at least one step");
    println!(
        "trained {} on {} labeled detections: {} -> {}, {} steps",
        kind.name(),
        data.len(),
        model.input_dim(),
        model.embed_dim(),
        history.len()
    );
    println!("final loss {} violation {}", last.loss, last.violation_rate);
    println!("model written to {model_out}");
    println!("history written to {history_out}");
    Ok(())
}
