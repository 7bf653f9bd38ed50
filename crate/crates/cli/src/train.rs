//! `anchordepth train` — train a model on a generated dataset.

use std::path::PathBuf;

use anchordepth::io::atomic_write;
use anchordepth::model::checkpoint::save_checkpoint;
use anchordepth::model::train::{train, write_loss_curve_csv};
use anchordepth::model::Model;
use anchordepth::pool::AnchorPool;
use anchordepth::repr::TaperRate;
use anyhow::{ensure, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{
    load_train_file, parse_variant, variant_name, ResolvedTrain, CONFIG_SCHEMA_VERSION,
};
use crate::util::load_samples;

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset manifest to train on
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path (a `<path>.json` metadata sidecar is written
    /// next to it)
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags below override its values
    #[arg(long, env = "ANCHORDEPTH_CONFIG")]
    config: Option<PathBuf>,
    /// Optimization steps
    #[arg(long)]
    steps: Option<usize>,
    /// Scenes per step
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Seed for initialization and batch/anchor draws
    #[arg(long)]
    seed: Option<u64>,
    /// Loss-curve recording interval
    #[arg(long)]
    log_every: Option<usize>,
    /// Worker threads (bitwise results depend on this count)
    #[arg(long)]
    threads: Option<usize>,
    /// Far-field taper rate per meter
    #[arg(long)]
    taper: Option<f64>,
    /// Model variant: "full" or "no-mask"
    #[arg(long)]
    variant: Option<String>,
    /// Anchor embedding width
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Comma-separated anchor depths in meters
    #[arg(long, value_delimiter = ',')]
    anchors: Option<Vec<f64>>,
    /// Train only at the pool anchor nearest this depth (ablation)
    #[arg(long)]
    fixed_anchor: Option<f64>,
    /// Near,far,mask loss weights
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Write the recorded loss curve as CSV
    #[arg(long)]
    loss_curve: Option<PathBuf>,
}

fn resolve(args: &TrainArgs) -> Result<ResolvedTrain> {
    let mut r = ResolvedTrain::default();
    if let Some(path) = &args.config {
        let file = load_train_file(path)?;
        r.apply_file(&file)?;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = args.$field.clone() {
                r.$field = v;
            }
        };
    }
    take!(steps);
    take!(batch_size);
    take!(learning_rate);
    take!(momentum);
    take!(seed);
    take!(log_every);
    take!(threads);
    take!(taper);
    take!(embed_dim);
    take!(anchors);
    if let Some(v) = &args.variant {
        r.variant = parse_variant(v)?;
    }
    if let Some(m) = args.fixed_anchor {
        r.fixed_anchor = Some(m);
    }
    if let Some(w) = &args.weights {
        ensure!(w.len() == 3, "--weights expects three values: near,far,mask");
        r.weights = crate::config::WeightsFile { near: w[0], far: w[1], mask: w[2] };
    }
    Ok(r)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let resolved = resolve(&args)?;
    let (_, samples) = load_samples(&args.data)?;
    ensure!(!samples.is_empty(), "manifest {} lists no scenes", args.data.display());

    // One seed covers initialization (model, then pool) and the training
    // stream, so a train run is a pure function of config + data.
    let mut init_rng = ChaCha8Rng::seed_from_u64(resolved.seed);
    let mut model = Model::new(resolved.variant, resolved.embed_dim, &mut init_rng);
    let mut pool = AnchorPool::new(&resolved.anchors, resolved.embed_dim, &mut init_rng)?;
    let config = resolved.to_train_config()?;

    println!(
        "training {} model: {} steps, batch {}, lr {}, {} scenes, {} anchors",
        variant_name(resolved.variant),
        config.steps,
        config.batch_size,
        config.learning_rate,
        samples.len(),
        pool.len()
    );
    let outcome = train(&mut model, &mut pool, &samples, &config)
        .with_context(|| format!("training on {}", args.data.display()))?;

    let taper = TaperRate::new(resolved.taper)?;
    save_checkpoint(&model, &pool, taper, &args.out)
        .with_context(|| format!("writing checkpoint {}", args.out.display()))?;

    if let Some(curve_path) = &args.loss_curve {
        write_loss_curve_csv(curve_path, &outcome.curve)
            .with_context(|| format!("writing loss curve {}", curve_path.display()))?;
    }

    let sidecar = PathBuf::from(format!("{}.json", args.out.display()));
    let metadata = json!({
        "schema_version": CONFIG_SCHEMA_VERSION,
        "checkpoint": args.out.file_name().and_then(|n| n.to_str()),
        "data": args.data.display().to_string(),
        "scenes": samples.len(),
        "variant": variant_name(resolved.variant),
        "steps": resolved.steps,
        "batch_size": resolved.batch_size,
        "learning_rate": resolved.learning_rate,
        "momentum": resolved.momentum,
        "seed": resolved.seed,
        "log_every": resolved.log_every,
        "threads": resolved.threads,
        "taper": resolved.taper,
        "embed_dim": resolved.embed_dim,
        "anchors": resolved.anchors,
        "fixed_anchor": resolved.fixed_anchor,
        "weights": {
            "near": resolved.weights.near,
            "far": resolved.weights.far,
            "mask": resolved.weights.mask,
        },
        "final_loss": outcome.final_loss,
    });
    let text = serde_json::to_string_pretty(&metadata).expect("metadata serializes");
    atomic_write(&sidecar, format!("{text}\n").as_bytes())
        .with_context(|| format!("writing metadata {}", sidecar.display()))?;

    let last = outcome.curve.last().expect("curve has the final step");
    println!(
        "final loss {:.6} (near {:.6}, far {:.6}, mask {:.6})",
        last.loss_total, last.loss_near, last.loss_far, last.loss_mask
    );
    println!("checkpoint: {}", args.out.display());
    println!("metadata:   {}", sidecar.display());
    Ok(())
}
