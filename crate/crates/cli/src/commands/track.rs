//! Associate a detection stream into tracks and write them out. Gate
//! overrides replace the per-class presets with one uniform setting for
//! every class; `ema` applies on top of either arrangement.

use clap::Args as ClapArgs;
use cosmot::evaluator::AnnotatedObject;
use cosmot::formats::write_tracks;
use cosmot::tracker::{
    run_sequence, AssocConfig, ClassConfigs, Matcher, CLASS_CAR, CLASS_PEDESTRIAN,
};

use crate::config::{pick, require, Settings};
use crate::fail::Failure;

use super::{parse_matcher, read_detections_file, write_file};

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Detection stream to associate (required here or in the config)
    #[arg(long)]
    pub detections: Option<String>,
    /// Track file to write (required here or in the config)
    #[arg(long, short = 'o')]
    pub output: Option<String>,
    /// greedy | hungarian [default: greedy]
    #[arg(long)]
    pub matcher: Option<String>,
    /// Frame gap limit, uniform across classes
    #[arg(long)]
    pub alpha: Option<u64>,
    /// Confidence cut, uniform across classes
    #[arg(long)]
    pub beta: Option<f64>,
    /// Center distance gate, uniform across classes
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Cosine similarity gate, uniform across classes
    #[arg(long)]
    pub delta: Option<f64>,
    /// Blend weight for updating track embeddings
    #[arg(long)]
    pub ema: Option<f64>,
    /// Settings file; flags override its keys
    #[arg(long)]
    pub config: Option<String>,
}

const KEYS: &[&str] = &[
    "detections",
    "output",
    "matcher",
    "alpha",
    "beta",
    "gamma",
    "delta",
    "ema",
];

pub fn run(args: &Args) -> Result<(), Failure> {
    let file = Settings::load_opt(args.config.as_deref(), KEYS)?;
    let det_path = require(
        args.detections.clone(),
        file.raw("detections").map(str::to_string),
        "detections",
    )?;
    let out_path = require(
        args.output.clone(),
        file.raw("output").map(str::to_string),
        "output",
    )?;
    let matcher_name = pick(
        args.matcher.clone(),
        file.raw("matcher").map(str::to_string),
        Matcher::Greedy.name().to_string(),
    );
    let matcher = parse_matcher(&matcher_name)?;

    let alpha = args.alpha.or(file.parsed("alpha")?);
    let beta = args.beta.or(file.parsed("beta")?);
    let gamma = args.gamma.or(file.parsed("gamma")?);
    let delta = args.delta.or(file.parsed("delta")?);
    let ema = args.ema.or(file.parsed("ema")?);

    let gates_overridden = alpha.is_some() || beta.is_some() || gamma.is_some() || delta.is_some();
    let configs = if gates_overridden {
        let base = AssocConfig::car(matcher);
        let mut cfg = AssocConfig::new(
            alpha.unwrap_or(base.alpha),
            beta.unwrap_or(base.beta),
            gamma.unwrap_or(base.gamma),
            delta.unwrap_or(base.delta),
            matcher,
        )?;
        if let Some(lambda) = ema {
            cfg = cfg.with_ema(lambda)?;
        }
        ClassConfigs::uniform(cfg)
    } else {
        let mut car = AssocConfig::car(matcher);
        let mut ped = AssocConfig::pedestrian(matcher);
        if let Some(lambda) = ema {
            car = car.with_ema(lambda)?;
            ped = ped.with_ema(lambda)?;
        }
        let mut configs = ClassConfigs::uniform(car);
        configs.insert(CLASS_CAR, car);
        configs.insert(CLASS_PEDESTRIAN, ped);
        configs
    };

    let detections = read_detections_file(&det_path)?;
    let result = run_sequence(&detections, &configs)?;
    let objects: Vec<AnnotatedObject> = result.records.iter().map(AnnotatedObject::from).collect();
    write_file(&out_path, &write_tracks(&objects))?;
    println!(
        "tracked {} detections into {} tracks ({} dropped below the confidence cut)",
        result.records.len(),
        result.tracks.len(),
        result.dropped.len()
    );
    println!("tracks written to {out_path}");
    Ok(())
}
