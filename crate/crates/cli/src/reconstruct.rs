//! `anchordepth reconstruct` — back-project depth to a PLY point cloud.

use std::path::PathBuf;

use anchordepth::io::read_image_png;
use anchordepth::recon::{backproject, write_ply, CameraIntrinsics};
use anyhow::{ensure, Context, Result};
use clap::Args;

use crate::util::read_depth_auto;

#[derive(Args)]
pub struct ReconstructArgs {
    /// Input depth file (.pfm or 16-bit .png)
    #[arg(long)]
    depth: PathBuf,
    /// Output ASCII PLY file
    #[arg(long)]
    out: PathBuf,
    /// Optional RGB image (PNG) for per-point colors
    #[arg(long)]
    image: Option<PathBuf>,
    /// Pinhole intrinsics as fx,fy,cx,cy (default: derived from the size)
    #[arg(long, value_delimiter = ',')]
    intrinsics: Option<Vec<f64>>,
}

pub fn run(args: ReconstructArgs) -> Result<()> {
    let depth = read_depth_auto(&args.depth)?;
    let intrinsics = match &args.intrinsics {
        Some(v) => {
            ensure!(v.len() == 4, "--intrinsics expects four values: fx,fy,cx,cy");
            CameraIntrinsics::new(v[0], v[1], v[2], v[3])?
        }
        None => CameraIntrinsics::default_for(depth.width(), depth.height()),
    };
    let image = match &args.image {
        Some(path) => Some(
            read_image_png(path)
                .with_context(|| format!("reading color image {}", path.display()))?,
        ),
        None => None,
    };
    let cloud = backproject(&depth, &intrinsics, image.as_ref())?;
    write_ply(&cloud, &args.out)?;
    println!(
        "wrote {} points ({}) to {}",
        cloud.len(),
        if cloud.colors.is_some() { "with colors" } else { "geometry only" },
        args.out.display()
    );
    Ok(())
}
