//! `anchordepth generate` — synthesize a scene dataset on disk.

use std::fs;
use std::path::PathBuf;

use anchordepth::io::{self, Manifest, ManifestEntry};
use anchordepth::scene::{self, Regime, DEFAULT_RESOLUTION};
use anyhow::{ensure, Context, Result};
use clap::{Args, ValueEnum};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DepthFormat {
    /// 32-bit float PFM (lossless for generated depth)
    Pfm,
    /// 16-bit grayscale PNG with a depth-scale header
    Png16,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes
    #[arg(long)]
    count: usize,
    /// Fraction of indoor scenes, interleaved deterministically
    #[arg(long, default_value_t = 0.5)]
    indoor_mix: f64,
    /// Square image resolution in pixels
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    /// Master seed for the whole dataset
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// On-disk depth encoding
    #[arg(long, value_enum, default_value_t = DepthFormat::Pfm)]
    depth_format: DepthFormat,
}

pub fn run(args: GenerateArgs) -> Result<()> {
    let samples = scene::generate_dataset(args.count, args.indoor_mix, args.resolution, args.seed)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    let mut entries = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let image_name = format!("scene_{i:05}.png");
        let depth_name = match args.depth_format {
            DepthFormat::Pfm => format!("scene_{i:05}_depth.pfm"),
            DepthFormat::Png16 => format!("scene_{i:05}_depth.png"),
        };
        io::write_image_png(&sample.image, &args.out.join(&image_name))?;
        let depth_path = args.out.join(&depth_name);
        match args.depth_format {
            DepthFormat::Pfm => io::write_depth_pfm(&sample.depth, &depth_path)?,
            DepthFormat::Png16 => {
                let scale = io::png16_scale_for(&sample.depth);
                io::write_depth_png16(&sample.depth, &depth_path, scale)?;
            }
        }
        entries.push(ManifestEntry {
            image: image_name.into(),
            depth: depth_name.into(),
            spec: sample.spec.clone(),
        });
    }

    ensure!(!samples.is_empty(), "dataset generation produced no scenes");
    let manifest = Manifest {
        width: args.resolution,
        height: args.resolution,
        intrinsics: samples[0].spec.intrinsics,
        entries,
    };
    let manifest_path = args.out.join("manifest.txt");
    io::write_manifest(&manifest, &manifest_path)?;

    let indoor = samples.iter().filter(|s| s.spec.regime == Regime::Indoor).count();
    println!(
        "wrote {} scenes ({} indoor, {} outdoor) at {}x{} to {}",
        samples.len(),
        indoor,
        samples.len() - indoor,
        args.resolution,
        args.resolution,
        args.out.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}
