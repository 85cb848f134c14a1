//! Compare analytical gradients against central finite differences and
//! print one table row per loss. Any relative error at or above 1e-5 fails
//! the run with exit code 1.

use clap::Args as ClapArgs;
use cosmot::losses::{grad_check, CmcForm, GradCheckSettings, LossKind};

use crate::config::{pick, Settings};
use crate::fail::Failure;

use super::parse_loss;

#[derive(ClapArgs, Debug)]
pub struct Args {
    /// Loss to check: one name, `cmc-direct`, or `all` [default: all]
    #[arg(long)]
    pub loss: Option<String>,
    /// Embedding dimension of the sampled instances [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Instances sampled per loss [default: 32]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Central-difference step [default: 1e-5]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Seed for instance sampling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Settings file; flags override its keys
    #[arg(long)]
    pub config: Option<String>,
}

const KEYS: &[&str] = &["loss", "dim", "batch", "eps", "seed"];
const PASS_LIMIT: f64 = 1e-5;

struct Row {
    label: &'static str,
    kind: LossKind,
    form: CmcForm,
}

fn row(kind: LossKind, form: CmcForm) -> Row {
    let label = match (kind, form) {
        (LossKind::Cmc, CmcForm::Direct) => "cmc-direct",
        _ => kind.name(),
    };
    Row { label, kind, form }
}

fn selected_rows(name: &str) -> Result<Vec<Row>, Failure> {
    if name == "all" {
        let mut rows: Vec<Row> = LossKind::ALL
            .iter()
            .map(|&k| row(k, CmcForm::TwoClassSoftmax))
            .collect();
        rows.push(row(LossKind::Cmc, CmcForm::Direct));
        return Ok(rows);
    }
    if name == "cmc-direct" {
        return Ok(vec![row(LossKind::Cmc, CmcForm::Direct)]);
    }
    Ok(vec![row(parse_loss(name)?, CmcForm::TwoClassSoftmax)])
}

pub fn run(args: &Args) -> Result<(), Failure> {
    let file = Settings::load_opt(args.config.as_deref(), KEYS)?;
    let loss = pick(args.loss.clone(), file.raw("loss").map(str::to_string), "all".to_string());
    let dim = pick(args.dim, file.parsed("dim")?, 16);
    let batch = pick(args.batch, file.parsed("batch")?, 32);
    let eps = pick(args.eps, file.parsed("eps")?, 1e-5);
    let seed = pick(args.seed, file.parsed("seed")?, 0);

    if dim < 2 {
        return Err(Failure::usage("dim must be at least 2"));
    }
    if batch == 0 {
        return Err(Failure::usage("batch must be at least 1"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Failure::usage(format!("eps must be a positive finite number, got {eps}")));
    }

    let rows = selected_rows(&loss)?;
    println!(
        "{:<14} {:>12} {:>8} {:>8}  result",
        "loss", "max rel err", "coords", "skipped"
    );
    let mut worst = 0.0f64;
    for r in rows {
        let settings = GradCheckSettings {
            eps,
            cmc_form: r.form,
            ..GradCheckSettings::default()
        };
        let report = grad_check(r.kind, dim, batch, &settings, seed)?;
        let verdict = if report.max_rel_error < PASS_LIMIT { "PASS" } else { "FAIL" };
        println!(
            "{:<14} {:>12.3e} {:>8} {:>8}  {}",
            r.label, report.max_rel_error, report.coords_checked, report.skipped_instances, verdict
        );
        worst = worst.max(report.max_rel_error);
    }
    if worst >= PASS_LIMIT {
        return Err(Failure::acceptance(format!(
            "gradient check failed: max relative error {worst:.3e} is not below {PASS_LIMIT:e}"
        )));
    }
    Ok(())
}
