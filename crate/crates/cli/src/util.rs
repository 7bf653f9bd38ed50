//! Shared helpers for the subcommands.

use std::path::Path;

use anchordepth::depth::DepthMap;
use anchordepth::io::{self, Manifest};
use anchordepth::scene::SceneSample;
use anyhow::{bail, Context, Result};

/// Read a depth file, dispatching on the extension: `.pfm` for 32-bit float
/// PFM, `.png` for scaled 16-bit PNG.
pub fn read_depth_auto(path: &Path) -> Result<DepthMap> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let map = match ext.as_str() {
        "pfm" => io::read_depth_pfm(path),
        "png" => io::read_depth_png16(path),
        _ => bail!(
            "cannot infer depth format of {}: expected a .pfm or .png extension",
            path.display()
        ),
    };
    map.with_context(|| format!("reading depth file {}", path.display()))
}

/// Load a manifest and every sample it lists.
pub fn load_samples(manifest_path: &Path) -> Result<(Manifest, Vec<SceneSample>)> {
    let manifest = io::read_manifest(manifest_path)
        .with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let (image, depth) = io::load_entry(dir, entry)
            .with_context(|| format!("loading dataset entry {}", entry.image.display()))?;
        samples.push(SceneSample { spec: entry.spec.clone(), image, depth });
    }
    Ok((manifest, samples))
}
