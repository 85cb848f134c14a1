//! Run the loss x matcher grid over freshly generated scenarios and print
//! one CSV row per cell, averaged across scenario replicates. Each cell
//! trains a projection, re-embeds the detections, tracks them, and scores
//! the result against the scenario's ground truth.

use clap::Args as ClapArgs;
use cosmot::evaluator::{compute_metrics, AnnotatedObject, MetricsReport};
use cosmot::losses::MarginScale;
use cosmot::mining::DetectionBatch;
use cosmot::synth::{generate, Scenario, ScenarioConfig};
use cosmot::tracker::{run_sequence, ClassConfigs, Detection};
use cosmot::trainer::{train, TrainConfig};
use cosmot::FeatureVector;

use crate::config::{pick, Settings};
use crate::fail::Failure;

use super::{parse_loss, parse_matcher};

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Settings file; flags override its keys
    #[arg(long)]
    pub config: Option<String>,
    /// Comma-separated losses [default: cmt,cmc,triplet,contrastive]
    #[arg(long)]
    pub losses: Option<String>,
    /// Comma-separated matchers [default: greedy,hungarian]
    #[arg(long)]
    pub matchers: Option<String>,
    /// Scenario replicates averaged per cell [default: 3]
    #[arg(long)]
    pub scenarios: Option<u64>,
    /// Identities per scenario [default: 12]
    #[arg(long)]
    pub identities: Option<usize>,
    /// Frames per scenario [default: 40]
    #[arg(long)]
    pub frames: Option<u64>,
    /// Object classes per scenario [default: 2]
    #[arg(long)]
    pub classes: Option<u32>,
    /// Scenario feature dimension [default: 16]
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Cluster noise stddev [default: 0.15]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Occlusion probability [default: 0.1]
    #[arg(long)]
    pub occlusion: Option<f64>,
    /// Base seed; scenario i uses seed + i [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 0.1]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// [default: 6]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 16]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Projection output dimension [default: 8]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Cosine margin m [default: 0.15]
    #[arg(long)]
    pub margin: Option<f64>,
    /// Logit scale s [default: 8]
    #[arg(long)]
    pub scale: Option<f64>,
}

const KEYS: &[&str] = &[
    "losses",
    "matchers",
    "scenarios",
    "identities",
    "frames",
    "classes",
    "input_dim",
    "noise",
    "occlusion",
    "seed",
    "learning_rate",
    "momentum",
    "epochs",
    "batch_size",
    "embed_dim",
    "margin",
    "scale",
];

fn parse_list<T>(
    text: &str,
    what: &str,
    parse: impl Fn(&str) -> Result<T, Failure>,
) -> Result<Vec<T>, Failure>
where
    T: PartialEq,
{
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let item = parse(part)?;
        if out.contains(&item) {
            return Err(Failure::usage(format!("duplicate {what} `{part}` in the grid")));
        }
        out.push(item);
    }
    if out.is_empty() {
        return Err(Failure::usage(format!("the {what} list is empty")));
    }
    Ok(out)
}

/// Counts summed over classes; MOTSA and sMOTSA recomputed from the sums.
fn overall(report: &MetricsReport) -> Result<(u64, f64, f64), Failure> {
    let mut tp = 0u64;
    let mut soft_tp = 0.0f64;
    let mut fp = 0u64;
    let mut ids = 0u64;
    let mut gt = 0u64;
    for c in &report.classes {
        tp += c.tp;
        soft_tp += c.soft_tp;
        fp += c.fp;
        ids += c.ids;
        gt += c.gt_count;
    }
    if gt == 0 {
        return Err(Failure::degenerate("scenario produced no ground-truth objects"));
    }
    let denom = gt as f64;
    let motsa = (tp as f64 - fp as f64 - ids as f64) / denom;
    let smotsa = (soft_tp - fp as f64 - ids as f64) / denom;
    Ok((ids, motsa, smotsa))
}

fn labeled_batch(scenario: &Scenario) -> Result<DetectionBatch, Failure> {
    let embeddings: Vec<FeatureVector> = scenario
        .detections
        .iter()
        .map(|d| d.embedding.clone())
        .collect();
    let classes: Vec<u32> = scenario.detections.iter().map(|d| d.class).collect();
    Ok(DetectionBatch::from_parts(
        embeddings,
        scenario.labels.clone(),
        classes,
    )?)
}

#[derive(Default, Clone, Copy)]
struct CellSums {
    ids: u64,
    motsa: f64,
    smotsa: f64,
}

pub fn run(args: &Args) -> Result<(), Failure> {
    let file = Settings::load_opt(args.config.as_deref(), KEYS)?;
    let losses_text = pick(
        args.losses.clone(),
        file.raw("losses").map(str::to_string),
        "cmt,cmc,triplet,contrastive".to_string(),
    );
    let matchers_text = pick(
        args.matchers.clone(),
        file.raw("matchers").map(str::to_string),
        "greedy,hungarian".to_string(),
    );
    let losses = parse_list(&losses_text, "loss", parse_loss)?;
    let matchers = parse_list(&matchers_text, "matcher", parse_matcher)?;

    let scenarios = pick(args.scenarios, file.parsed("scenarios")?, 3u64);
    if scenarios == 0 {
        return Err(Failure::usage("scenarios must be at least 1"));
    }
    let defaults = ScenarioConfig::default();
    let base_scenario = ScenarioConfig {
        identities: pick(args.identities, file.parsed("identities")?, 12),
        frames: pick(args.frames, file.parsed("frames")?, 40),
        classes: pick(args.classes, file.parsed("classes")?, defaults.classes),
        embedding_dim: pick(args.input_dim, file.parsed("input_dim")?, 16),
        cluster_noise: pick(args.noise, file.parsed("noise")?, 0.15),
        occlusion_prob: pick(args.occlusion, file.parsed("occlusion")?, 0.1),
        ..defaults
    };
    let base_seed = pick(args.seed, file.parsed("seed")?, 0u64);

    let learning_rate = pick(args.learning_rate, file.parsed("learning_rate")?, 0.1);
    let momentum = pick(args.momentum, file.parsed("momentum")?, 0.9);
    let epochs = pick(args.epochs, file.parsed("epochs")?, 6);
    let batch_size = pick(args.batch_size, file.parsed("batch_size")?, 16);
    let embed_dim = pick(args.embed_dim, file.parsed("embed_dim")?, 8);
    let margin = pick(args.margin, file.parsed("margin")?, 0.15);
    let scale = pick(args.scale, file.parsed("scale")?, 8.0);
    let margin_scale = MarginScale::new(margin, scale).map_err(|e| Failure::usage(e.to_string()))?;

    let mut sums = vec![vec![CellSums::default(); matchers.len()]; losses.len()];
    for offset in 0..scenarios {
        let scenario_cfg = ScenarioConfig {
            seed: base_seed + offset,
            ..base_scenario.clone()
        };
        let scenario = generate(&scenario_cfg)?;
        let data = labeled_batch(&scenario)?;
        for (li, &kind) in losses.iter().enumerate() {
            let mut cfg = TrainConfig::new(kind);
            cfg.margin_scale = margin_scale;
            cfg.learning_rate = learning_rate;
            cfg.momentum = momentum;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.embed_dim = embed_dim;
            cfg.seed = scenario_cfg.seed;
            let (model, _history) = train(&cfg, &data)?;
            let projected: Vec<Detection> = scenario
                .detections
                .iter()
                .map(|d| {
                    let mut out = d.clone();
                    out.embedding = model.project(&d.embedding)?;
                    Ok(out)
                })
                .collect::<Result<_, cosmot::trainer::TrainError>>()?;
            for (mi, &matcher) in matchers.iter().enumerate() {
                let result = run_sequence(&projected, &ClassConfigs::default_gates(matcher))?;
                let hyp: Vec<AnnotatedObject> =
                    result.records.iter().map(AnnotatedObject::from).collect();
                let report = compute_metrics(
                    &scenario.ground_truth,
                    &hyp,
                    cosmot::evaluator::DEFAULT_IOU_THRESHOLD,
                )?;
                let (ids, motsa, smotsa) = overall(&report)?;
                sums[li][mi].ids += ids;
                sums[li][mi].motsa += motsa;
                sums[li][mi].smotsa += smotsa;
            }
        }
    }

    let n = scenarios as f64;
    println!("loss,matcher,mean_ids,mean_motsa,mean_smotsa");
    for (li, &kind) in losses.iter().enumerate() {
        for (mi, &matcher) in matchers.iter().enumerate() {
            let cell = sums[li][mi];
            println!(
                "{},{},{},{},{}",
                kind.name(),
                matcher.name(),
                cell.ids as f64 / n,
                cell.motsa / n,
                cell.smotsa / n
            );
        }
    }
    Ok(())
}
