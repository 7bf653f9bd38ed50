//! Depth, image, and manifest file I/O.
//!
//! Three on-disk formats carry data between CLI runs:
//!
//! - **PFM** (`Pf`, single channel, little-endian, rows bottom-to-top): the
//!   lossless depth format. Finite depths are stored as f32, infinite depth
//!   as `+inf`, and invalid pixels as NaN (their carried value is not
//!   preserved; they read back as invalid with value 0).
//! - **16-bit grayscale PNG** with a `depth_scale` tEXt chunk giving meters
//!   per count: the interoperable depth format. Count 0 is reserved for
//!   infinite depth — invalid pixels are conflated with it on write — and
//!   finite depths quantize to counts clamped to `[1, 65535]`, so a round
//!   trip is exact only up to half a quantization step.
//! - **8-bit RGB PNG** for scene images; values on the `n / 255` grid round
//!   trip exactly.
//!
//! A line-oriented manifest ties a generated dataset together: a header with
//! the shared resolution and camera intrinsics, then one `scene` line per
//! sample holding its file paths (relative to the manifest) and full
//! generation spec, so any consumer can reload or regenerate the data.
//!
//! All writes go through [`atomic_write`]: a temp file in the target
//! directory renamed into place, so readers never observe partial files.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::depth::{DepthMap, ImageBuf, INFINITE_DEPTH};
use crate::error::{Error, Result};
use crate::recon::CameraIntrinsics;
use crate::scene::{Regime, SceneSpec};

/// First token of a manifest file, followed by the format version.
pub const MANIFEST_MAGIC: &str = "anchordepth-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Write `bytes` to `path` atomically (temp file + rename); readers see
/// either the old content or the new, never a prefix.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);
    let file_name = path.file_name().ok_or_else(|| {
        Error::InvalidArgument(format!("cannot write to {}: no file name", path.display()))
    })?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = parent.join(format!(
        ".{}.tmp.{}.{}",
        file_name.to_string_lossy(),
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed),
    ));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path.display().to_string(), e)
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// PFM

/// Serialize a depth map as a single-channel PFM (scale `-1.0`, so samples
/// are little-endian f32; rows stored bottom-to-top).
pub fn write_depth_pfm(map: &DepthMap, path: &Path) -> Result<()> {
    let (w, h) = (map.width(), map.height());
    let mut bytes = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    bytes.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            let f = if map.is_valid(x, y) { map.get(x, y) as f32 } else { f32::NAN };
            bytes.extend_from_slice(&f.to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

fn pfm_token(bytes: &[u8], pos: &mut usize, what: &str) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Malformed {
            format: "pfm",
            reason: format!("missing {what} in header"),
        });
    }
    String::from_utf8(bytes[start..*pos].to_vec()).map_err(|_| Error::Malformed {
        format: "pfm",
        reason: format!("non-ASCII {what} in header"),
    })
}

/// Parse a single-channel PFM. The scale's sign selects endianness (its
/// magnitude is ignored); NaN samples become invalid pixels and `+inf`
/// becomes [`INFINITE_DEPTH`]. Negative samples are rejected.
pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = read_bytes(path)?;
    let mut pos = 0usize;
    let magic = pfm_token(&bytes, &mut pos, "magic")?;
    if magic != "Pf" {
        return Err(Error::Malformed {
            format: "pfm",
            reason: format!("bad magic '{magic}' (only single-channel 'Pf' is supported)"),
        });
    }
    let parse_dim = |tok: String, what: &str| -> Result<usize> {
        tok.parse::<usize>().ok().filter(|&d| d > 0).ok_or_else(|| Error::Malformed {
            format: "pfm",
            reason: format!("bad {what} '{tok}'"),
        })
    };
    let w = parse_dim(pfm_token(&bytes, &mut pos, "width")?, "width")?;
    let h = parse_dim(pfm_token(&bytes, &mut pos, "height")?, "height")?;
    let scale_tok = pfm_token(&bytes, &mut pos, "scale")?;
    let scale: f64 = scale_tok.parse().ok().filter(|s: &f64| s.is_finite() && *s != 0.0).ok_or_else(
        || Error::Malformed { format: "pfm", reason: format!("bad scale '{scale_tok}'") },
    )?;
    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Malformed {
            format: "pfm",
            reason: "missing separator after header".into(),
        });
    }
    pos += 1;
    let data = &bytes[pos..];
    if data.len() != w * h * 4 {
        return Err(Error::Malformed {
            format: "pfm",
            reason: format!("expected {} sample bytes for {w}x{h}, found {}", w * h * 4, data.len()),
        });
    }
    let little_endian = scale < 0.0;
    let mut values = vec![0.0f64; w * h];
    let mut valid = vec![true; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let f = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        // PFM rows run bottom-to-top; flip back to image order.
        let (x, y) = (i % w, h - 1 - i / w);
        let out = y * w + x;
        if f.is_nan() {
            values[out] = 0.0;
            valid[out] = false;
        } else if f < 0.0 {
            return Err(Error::Malformed {
                format: "pfm",
                reason: format!("negative depth {f} at pixel ({x}, {y})"),
            });
        } else {
            values[out] = f as f64;
        }
    }
    DepthMap::new(w, h, values, valid)
}

// ---------------------------------------------------------------------------
// PNG depth and images

fn png_malformed(e: impl std::fmt::Display) -> Error {
    Error::Malformed { format: "png", reason: e.to_string() }
}

/// Scale (meters per count) that spreads the map's largest finite depth
/// across the full 16-bit range; `1.0` if no finite depth exists.
pub fn png16_scale_for(map: &DepthMap) -> f64 {
    let max = map
        .values()
        .iter()
        .zip(map.valid())
        .filter(|&(v, &ok)| ok && v.is_finite())
        .fold(0.0f64, |m, (v, _)| m.max(*v));
    if max > 0.0 {
        max / 65535.0
    } else {
        1.0
    }
}

/// Serialize a depth map as 16-bit grayscale PNG with a `depth_scale` tEXt
/// chunk (meters per count). Count 0 encodes infinite depth — invalid
/// pixels are conflated with it — and finite depths round to counts clamped
/// to `[1, 65535]`.
pub fn write_depth_png16(map: &DepthMap, path: &Path, scale_m_per_count: f64) -> Result<()> {
    if !(scale_m_per_count.is_finite() && scale_m_per_count > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth scale must be finite and > 0, got {scale_m_per_count}"
        )));
    }
    let (w, h) = (map.width(), map.height());
    let mut data = Vec::with_capacity(w * h * 2);
    for y in 0..h {
        for x in 0..w {
            let d = map.get(x, y);
            let count: u16 = if !map.is_valid(x, y) || !d.is_finite() {
                0
            } else {
                (d / scale_m_per_count).round().clamp(1.0, 65535.0) as u16
            };
            data.extend_from_slice(&count.to_be_bytes());
        }
    }
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, w as u32, h as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Sixteen);
        encoder
            .add_text_chunk("depth_scale".to_string(), format!("{scale_m_per_count}"))
            .map_err(png_malformed)?;
        let mut writer = encoder.write_header().map_err(png_malformed)?;
        writer.write_image_data(&data).map_err(png_malformed)?;
        writer.finish().map_err(png_malformed)?;
    }
    atomic_write(path, &bytes)
}

struct DecodedPng {
    width: usize,
    height: usize,
    color_type: png::ColorType,
    bit_depth: png::BitDepth,
    data: Vec<u8>,
    texts: Vec<(String, String)>,
}

fn decode_png(path: &Path) -> Result<DecodedPng> {
    let bytes = read_bytes(path)?;
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_malformed)?;
    let mut data = vec![0u8; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut data).map_err(png_malformed)?;
    data.truncate(frame.buffer_size());
    let texts = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect();
    Ok(DecodedPng {
        width: frame.width as usize,
        height: frame.height as usize,
        color_type: frame.color_type,
        bit_depth: frame.bit_depth,
        data,
        texts,
    })
}

/// Parse a 16-bit grayscale depth PNG written by [`write_depth_png16`].
/// Count 0 reads back as [`INFINITE_DEPTH`]; every pixel is valid.
pub fn read_depth_png16(path: &Path) -> Result<DepthMap> {
    let png = decode_png(path)?;
    if png.color_type != png::ColorType::Grayscale || png.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Malformed {
            format: "png",
            reason: format!(
                "depth PNG must be 16-bit grayscale, got {:?} {:?}",
                png.color_type, png.bit_depth
            ),
        });
    }
    let scale_text = png
        .texts
        .iter()
        .find(|(k, _)| k == "depth_scale")
        .map(|(_, v)| v.clone())
        .ok_or(Error::Malformed {
            format: "png",
            reason: "missing depth_scale text chunk".into(),
        })?;
    let scale: f64 = scale_text
        .trim()
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s > 0.0)
        .ok_or_else(|| Error::Malformed {
            format: "png",
            reason: format!("bad depth_scale '{scale_text}'"),
        })?;
    let values = png
        .data
        .chunks_exact(2)
        .map(|c| {
            let count = u16::from_be_bytes([c[0], c[1]]);
            if count == 0 {
                INFINITE_DEPTH
            } else {
                count as f64 * scale
            }
        })
        .collect::<Vec<_>>();
    let valid = vec![true; values.len()];
    DepthMap::new(png.width, png.height, values, valid)
}

/// Serialize a 3-channel image as 8-bit RGB PNG; channel values are clamped
/// to `[0, 1]` and rounded to the `n / 255` grid.
pub fn write_image_png(image: &ImageBuf, path: &Path) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::InvalidArgument(format!(
            "image PNG needs exactly 3 channels, got {}",
            image.channels()
        )));
    }
    let (w, h) = (image.width(), image.height());
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data.push((image.get(c, x, y).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, w as u32, h as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(png_malformed)?;
        writer.write_image_data(&data).map_err(png_malformed)?;
        writer.finish().map_err(png_malformed)?;
    }
    atomic_write(path, &bytes)
}

/// Parse an 8-bit RGB PNG into a planar image with values on `n / 255`.
pub fn read_image_png(path: &Path) -> Result<ImageBuf> {
    let png = decode_png(path)?;
    if png.color_type != png::ColorType::Rgb || png.bit_depth != png::BitDepth::Eight {
        return Err(Error::Malformed {
            format: "png",
            reason: format!(
                "image PNG must be 8-bit RGB, got {:?} {:?}",
                png.color_type, png.bit_depth
            ),
        });
    }
    let (w, h) = (png.width, png.height);
    let mut image = ImageBuf::zeros(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let byte = png.data[(y * w + x) * 3 + c];
                image.set(c, x, y, byte as f64 / 255.0);
            }
        }
    }
    Ok(image)
}

// ---------------------------------------------------------------------------
// Manifest

/// One dataset sample: file paths relative to the manifest, plus the spec
/// that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub depth: PathBuf,
    pub spec: SceneSpec,
}

/// A generated dataset: shared camera geometry plus per-sample entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    pub entries: Vec<ManifestEntry>,
}

fn manifest_path_str(path: &Path, what: &str) -> Result<String> {
    let s = path.to_str().unwrap_or("");
    if s.is_empty() || s.chars().any(char::is_whitespace) || path.is_absolute() {
        return Err(Error::InvalidArgument(format!(
            "manifest {what} path '{}' must be relative, non-empty, and whitespace-free",
            path.display()
        )));
    }
    Ok(s.to_string())
}

/// Write a manifest. Entry paths must be relative to the manifest's
/// directory and every entry's spec must match the shared geometry.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut text = format!("{MANIFEST_MAGIC} {MANIFEST_VERSION}\n");
    text.push_str(&format!("size {} {}\n", manifest.width, manifest.height));
    let i = &manifest.intrinsics;
    text.push_str(&format!("intrinsics {} {} {} {}\n", i.fx, i.fy, i.cx, i.cy));
    for entry in &manifest.entries {
        let spec = &entry.spec;
        if spec.width != manifest.width
            || spec.height != manifest.height
            || spec.intrinsics != manifest.intrinsics
        {
            return Err(Error::ShapeMismatch(format!(
                "entry '{}' disagrees with the manifest's shared geometry",
                entry.image.display()
            )));
        }
        text.push_str(&format!(
            "scene image={} depth={} regime={} seed={} depth_min={} depth_max={} \
             sky_fraction={} primitives={} camera_height={}\n",
            manifest_path_str(&entry.image, "image")?,
            manifest_path_str(&entry.depth, "depth")?,
            spec.regime.name(),
            spec.seed,
            spec.depth_min,
            spec.depth_max,
            spec.sky_fraction,
            spec.primitive_count,
            spec.camera_height,
        ));
    }
    atomic_write(path, text.as_bytes())
}

fn manifest_err(line: usize, reason: impl std::fmt::Display) -> Error {
    Error::Malformed { format: "manifest", reason: format!("line {line}: {reason}") }
}

/// Parse a manifest and verify every referenced file exists next to it.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));

    // Iterate non-empty, non-comment lines with their 1-based numbers.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (n, header) = lines.next().ok_or(Error::Malformed {
        format: "manifest",
        reason: "empty file".into(),
    })?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some(MANIFEST_MAGIC) {
        return Err(manifest_err(n, format!("expected magic '{MANIFEST_MAGIC}'")));
    }
    let version: u32 = toks
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| manifest_err(n, "missing format version"))?;
    if version != MANIFEST_VERSION {
        return Err(manifest_err(n, format!("unsupported version {version}")));
    }

    let (n, size_line) = lines.next().ok_or(manifest_err(0, "missing size line"))?;
    let dims: Vec<usize> = size_line
        .strip_prefix("size")
        .map(|rest| rest.split_whitespace().filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_default();
    let (width, height) = match dims.as_slice() {
        [w, h] if *w > 0 && *h > 0 => (*w, *h),
        _ => return Err(manifest_err(n, "expected 'size <width> <height>'")),
    };

    let (n, intr_line) = lines.next().ok_or(manifest_err(0, "missing intrinsics line"))?;
    let nums: Vec<f64> = intr_line
        .strip_prefix("intrinsics")
        .map(|rest| rest.split_whitespace().filter_map(|t| t.parse().ok()).collect())
        .unwrap_or_default();
    let intrinsics = match nums.as_slice() {
        [fx, fy, cx, cy] => {
            CameraIntrinsics::new(*fx, *fy, *cx, *cy).map_err(|e| manifest_err(n, e))?
        }
        _ => return Err(manifest_err(n, "expected 'intrinsics <fx> <fy> <cx> <cy>'")),
    };

    let mut entries = Vec::new();
    for (n, line) in lines {
        let rest = line
            .strip_prefix("scene")
            .ok_or_else(|| manifest_err(n, format!("unknown line tag '{line}'")))?;
        let mut fields = std::collections::BTreeMap::new();
        for tok in rest.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| manifest_err(n, format!("expected key=value, got '{tok}'")))?;
            if fields.insert(key.to_string(), value.to_string()).is_some() {
                return Err(manifest_err(n, format!("duplicate key '{key}'")));
            }
        }
        const KEYS: [&str; 9] = [
            "image",
            "depth",
            "regime",
            "seed",
            "depth_min",
            "depth_max",
            "sky_fraction",
            "primitives",
            "camera_height",
        ];
        for key in fields.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(manifest_err(n, format!("unknown key '{key}'")));
            }
        }
        let get = |key: &str| -> Result<&String> {
            fields.get(key).ok_or_else(|| manifest_err(n, format!("missing key '{key}'")))
        };
        fn num<T: std::str::FromStr>(raw: &str, key: &str, line: usize) -> Result<T> {
            raw.parse().map_err(|_| manifest_err(line, format!("bad value '{raw}' for '{key}'")))
        }
        let image = PathBuf::from(get("image")?);
        let depth = PathBuf::from(get("depth")?);
        let regime = Regime::parse(get("regime")?).map_err(|e| manifest_err(n, e))?;
        let spec = SceneSpec::new(
            regime,
            width,
            height,
            num(get("depth_min")?, "depth_min", n)?,
            num(get("depth_max")?, "depth_max", n)?,
            num(get("sky_fraction")?, "sky_fraction", n)?,
            num(get("primitives")?, "primitives", n)?,
            num(get("seed")?, "seed", n)?,
            num(get("camera_height")?, "camera_height", n)?,
            intrinsics,
        )
        .map_err(|e| manifest_err(n, e))?;
        for rel in [&image, &depth] {
            if !dir.join(rel).is_file() {
                return Err(manifest_err(
                    n,
                    format!("referenced file '{}' does not exist", dir.join(rel).display()),
                ));
            }
        }
        entries.push(ManifestEntry { image, depth, spec });
    }

    Ok(Manifest { width, height, intrinsics, entries })
}

/// Load one manifest entry's image and depth map from disk (`manifest_dir`
/// is the directory containing the manifest file). The depth format is
/// chosen by extension: `.pfm` or `.png`.
pub fn load_entry(manifest_dir: &Path, entry: &ManifestEntry) -> Result<(ImageBuf, DepthMap)> {
    let image = read_image_png(&manifest_dir.join(&entry.image))?;
    let depth_path = manifest_dir.join(&entry.depth);
    let ext = depth_path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let depth = match ext.as_str() {
        "pfm" => read_depth_pfm(&depth_path),
        "png" => read_depth_png16(&depth_path),
        other => Err(Error::Malformed {
            format: "manifest",
            reason: format!("unsupported depth extension '{other}' for '{}'", depth_path.display()),
        }),
    }?;
    let spec = &entry.spec;
    if image.width() != spec.width || image.height() != spec.height {
        return Err(Error::ShapeMismatch(format!(
            "image '{}' is {}x{}, manifest says {}x{}",
            entry.image.display(),
            image.width(),
            image.height(),
            spec.width,
            spec.height
        )));
    }
    if depth.width() != spec.width || depth.height() != spec.height {
        return Err(Error::ShapeMismatch(format!(
            "depth '{}' is {}x{}, manifest says {}x{}",
            entry.depth.display(),
            depth.width(),
            depth.height(),
            spec.width,
            spec.height
        )));
    }
    Ok((image, depth))
}
