//! `anchordepth eval` — metrics for a checkpoint over a dataset.

use std::path::PathBuf;

use anchordepth::metrics::{DatasetEval, EvalConfig, EvalReport};
use anchordepth::model::checkpoint::load_checkpoint;
use anchordepth::model::evaluate_on;
use anyhow::{Context, Result};
use clap::Args;
use serde_json::json;

use crate::util::load_samples;

#[derive(Args)]
pub struct EvalArgs {
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset manifest to evaluate on
    #[arg(long)]
    data: PathBuf,
    /// Evaluation anchor in meters (the nearest pool anchor is used)
    #[arg(long)]
    anchor: f64,
    /// Depth cap in meters; ground truth beyond it is excluded
    /// (default: the anchor value)
    #[arg(long)]
    cap: Option<f64>,
    /// Threshold base for the delta metrics
    #[arg(long, default_value_t = 1.25)]
    delta_base: f64,
    /// Average each prediction with its horizontally flipped pass
    #[arg(long)]
    flip: bool,
    /// Emit metrics as JSON instead of a table
    #[arg(long)]
    json: bool,
}

fn report_json(r: &EvalReport) -> serde_json::Value {
    json!({
        "abs_rel": r.abs_rel,
        "rmse": r.rmse,
        "log10": r.log10,
        "delta1": r.delta1,
        "delta2": r.delta2,
        "delta3": r.delta3,
        "pixels": r.pixels,
    })
}

fn print_table(eval: &DatasetEval, anchor: f64, cap: f64, flip: bool) {
    println!(
        "{} images, anchor {anchor} m, cap {cap} m, flip averaging {}",
        eval.images,
        if flip { "on" } else { "off" }
    );
    println!("scope         abs_rel    rmse     log10    d1       d2       d3");
    for (name, r) in [("image-mean", &eval.image_mean), ("pixel-pooled", &eval.pixel_pooled)] {
        println!(
            "{name:<12}  {:<9.4}  {:<7.4}  {:<7.4}  {:<7.4}  {:<7.4}  {:<7.4}",
            r.abs_rel, r.rmse, r.log10, r.delta1, r.delta2, r.delta3
        );
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let (_, samples) = load_samples(&args.data)?;
    let cap = args.cap.unwrap_or(args.anchor);
    let config = EvalConfig::new(cap, args.delta_base)?;
    let eval = evaluate_on(
        &ckpt.model,
        &ckpt.pool,
        &samples,
        args.anchor,
        ckpt.taper,
        &config,
        args.flip,
    )?;

    if args.json {
        let out = json!({
            "images": eval.images,
            "anchor_m": args.anchor,
            "cap_m": cap,
            "delta_base": args.delta_base,
            "flip": args.flip,
            "image_mean": report_json(&eval.image_mean),
            "pixel_pooled": report_json(&eval.pixel_pooled),
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("metrics serialize"));
    } else {
        print_table(&eval, args.anchor, cap, args.flip);
    }
    Ok(())
}
