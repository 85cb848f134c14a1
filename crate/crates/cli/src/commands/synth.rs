//! Generate a synthetic scenario and write the detection stream plus its
//! ground-truth tracks.

use clap::Args as ClapArgs;
use cosmot::formats::{write_detections, write_tracks};
use cosmot::synth::{generate, ScenarioConfig};

use crate::config::{pick, require, Settings};
use crate::fail::Failure;

use super::write_file;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Detection stream to write (required here or in the config)
    #[arg(long)]
    pub out_detections: Option<String>,
    /// Ground-truth track file to write (required here or in the config)
    #[arg(long)]
    pub out_ground_truth: Option<String>,
    /// Number of tracked identities [default: 20]
    #[arg(long)]
    pub identities: Option<usize>,
    /// Sequence length in frames [default: 60]
    #[arg(long)]
    pub frames: Option<u64>,
    /// Number of object classes [default: 2]
    #[arg(long)]
    pub classes: Option<u32>,
    /// Feature dimension of the embeddings [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Stddev of the per-detection cluster noise [default: 0.15]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Per-identity occlusion probability per window [default: 0.15]
    #[arg(long)]
    pub occlusion: Option<f64>,
    /// Longest occlusion window in frames [default: 4]
    #[arg(long)]
    pub max_occlusion: Option<u64>,
    /// Scenario seed [default: 7]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Settings file; flags override its keys
    #[arg(long)]
    pub config: Option<String>,
}

const KEYS: &[&str] = &[
    "out_detections",
    "out_ground_truth",
    "identities",
    "frames",
    "classes",
    "dim",
    "noise",
    "occlusion",
    "max_occlusion",
    "seed",
];

pub fn run(args: &Args) -> Result<(), Failure> {
    let file = Settings::load_opt(args.config.as_deref(), KEYS)?;
    let det_path = require(
        args.out_detections.clone(),
        file.raw("out_detections").map(str::to_string),
        "out_detections",
    )?;
    let gt_path = require(
        args.out_ground_truth.clone(),
        file.raw("out_ground_truth").map(str::to_string),
        "out_ground_truth",
    )?;

    let defaults = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        identities: pick(args.identities, file.parsed("identities")?, defaults.identities),
        frames: pick(args.frames, file.parsed("frames")?, defaults.frames),
        classes: pick(args.classes, file.parsed("classes")?, defaults.classes),
        embedding_dim: pick(args.dim, file.parsed("dim")?, defaults.embedding_dim),
        cluster_noise: pick(args.noise, file.parsed("noise")?, defaults.cluster_noise),
        occlusion_prob: pick(args.occlusion, file.parsed("occlusion")?, defaults.occlusion_prob),
        max_occlusion_len: pick(
            args.max_occlusion,
            file.parsed("max_occlusion")?,
            defaults.max_occlusion_len,
        ),
        seed: pick(args.seed, file.parsed("seed")?, defaults.seed),
        ..defaults
    };

    let scenario = generate(&cfg)?;
    let det_text = write_detections(&scenario.detections)
        .map_err(|e| Failure::usage(e.to_string()))?;
    write_file(&det_path, &det_text)?;
    write_file(&gt_path, &write_tracks(&scenario.ground_truth))?;
    println!(
        "generated {} detections over {} ground-truth objects ({} identities, {} frames)",
        scenario.detections.len(),
        scenario.ground_truth.len(),
        cfg.identities,
        cfg.frames
    );
    println!("detections written to {det_path}");
    println!("ground truth written to {gt_path}");
    Ok(())
}
