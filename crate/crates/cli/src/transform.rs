//! `anchordepth transform` — apply the anchor representation to depth files.

use std::path::PathBuf;

use anchordepth::depth::DepthMap;
use anchordepth::io::write_depth_pfm;
use anchordepth::repr::{self, AnchorDepth, Field, TaperRate, DEFAULT_TAPER_RATE};
use anyhow::{ensure, Result};
use clap::{Args, ValueEnum};

use crate::util::read_depth_auto;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Metric depth -> near channel (`d / a`, clamped to 1 past the anchor)
    Near,
    /// Metric depth -> far channel (`exp(-k (d - a))`, clamped to 1 inside)
    Far,
    /// Metric depth -> ground-truth near/far mask (1 = near)
    Mask,
    /// Near channel -> metric depth
    ReprojectNear,
    /// Far channel -> metric depth
    ReprojectFar,
    /// Normalize at the anchor, re-project both channels, fuse by the mask
    Roundtrip,
}

#[derive(Args)]
pub struct TransformArgs {
    /// Input depth file (.pfm or 16-bit .png)
    #[arg(long)]
    input: PathBuf,
    /// Output PFM file
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Anchor depth in meters
    #[arg(long)]
    anchor: f64,
    /// Far-field taper rate per meter
    #[arg(long, default_value_t = DEFAULT_TAPER_RATE)]
    taper: f64,
}

fn field_to_map(field: &Field) -> Result<DepthMap> {
    Ok(DepthMap::new(
        field.width(),
        field.height(),
        field.values().to_vec(),
        field.valid().to_vec(),
    )?)
}

fn map_to_field(map: &DepthMap) -> Result<Field> {
    Ok(Field::new(map.width(), map.height(), map.values().to_vec(), map.valid().to_vec())?)
}

pub fn run(args: TransformArgs) -> Result<()> {
    ensure!(
        args.output.extension().and_then(|e| e.to_str()) == Some("pfm"),
        "transform output must be a .pfm file, got {}",
        args.output.display()
    );
    let anchor = AnchorDepth::new(args.anchor)?;
    let taper = TaperRate::new(args.taper)?;
    let input = read_depth_auto(&args.input)?;

    let out = match args.mode {
        Mode::Near => field_to_map(&repr::normalize_near(&input, anchor))?,
        Mode::Far => field_to_map(&repr::normalize_far(&input, anchor, taper))?,
        Mode::Mask => field_to_map(&repr::gt_near_mask(&input, anchor))?,
        Mode::ReprojectNear => {
            field_to_map(&repr::reproject_near(&map_to_field(&input)?, anchor)?)?
        }
        Mode::ReprojectFar => {
            field_to_map(&repr::reproject_far(&map_to_field(&input)?, anchor, taper)?)?
        }
        Mode::Roundtrip => {
            let pair = repr::normalize(&input, anchor, taper);
            let near_metric = repr::reproject_near(&pair.near, anchor)?;
            let far_metric = repr::reproject_far(&pair.far, anchor, taper)?;
            repr::fuse(&near_metric, &far_metric, &pair.mask)?
        }
    };
    write_depth_pfm(&out, &args.output)?;
    println!(
        "wrote {} ({}x{}, anchor {} m) to {}",
        match args.mode {
            Mode::Near => "near channel",
            Mode::Far => "far channel",
            Mode::Mask => "near/far mask",
            Mode::ReprojectNear => "re-projected near depth",
            Mode::ReprojectFar => "re-projected far depth",
            Mode::Roundtrip => "round-tripped depth",
        },
        out.width(),
        out.height(),
        args.anchor,
        args.output.display()
    );
    Ok(())
}
