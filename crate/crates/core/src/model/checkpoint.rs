//! Binary checkpoint format for a trained model plus its anchor pool.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "ADPTHCK1"
//! version    u32      currently 1
//! flags      u32      bit 0: model has a mask head; other bits must be 0
//! taper      f64      far-field taper rate
//! anchors    u32 n    anchor count
//! embed_dim  u32 e    embedding width
//! depths     f64 * n  anchor depths in meters, ascending
//! tensors    u32 t    tensor count
//! per tensor:
//!   name_len u16, name bytes (UTF-8)
//!   ndim     u8,  dims u32 * ndim
//!   data     f64 * product(dims)
//! ```
//!
//! Tensors appear in the model's fixed traversal order followed by one
//! `pool.embeddings` tensor of shape `[n, e]`. Loading is strict: names,
//! shapes, order, and byte counts must match exactly, and every parameter
//! must be finite.

use std::path::Path;

use super::{Model, ModelVariant};
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::pool::AnchorPool;
use crate::repr::TaperRate;

const MAGIC: &[u8; 8] = b"ADPTHCK1";
const VERSION: u32 = 1;
const FLAG_MASK_HEAD: u32 = 1;
const POOL_TENSOR: &str = "pool.embeddings";
const FORMAT: &'static str = "checkpoint";

/// A loaded checkpoint: the model, its anchor pool, and the taper rate the
/// pair was trained with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub pool: AnchorPool,
    pub taper: TaperRate,
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_tensor(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f64]) {
    debug_assert!(name.len() <= u16::MAX as usize);
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    push_u16(out, name.len() as u16);
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        push_u32(out, d as u32);
    }
    for &v in data {
        push_f64(out, v);
    }
}

/// Serialize the model and pool to `path` (written atomically).
pub fn save_checkpoint(
    model: &Model,
    pool: &AnchorPool,
    taper: TaperRate,
    path: &Path,
) -> Result<()> {
    if model.embed_dim() != pool.embed_dim() {
        return Err(Error::ShapeMismatch(format!(
            "model embedding dim {} does not match pool dim {}",
            model.embed_dim(),
            pool.embed_dim()
        )));
    }
    let tensors = model.named_tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    let flags = match model.variant() {
        ModelVariant::Full => FLAG_MASK_HEAD,
        ModelVariant::NoMaskHead => 0,
    };
    push_u32(&mut out, flags);
    push_f64(&mut out, taper.per_meter());
    push_u32(&mut out, pool.len() as u32);
    push_u32(&mut out, pool.embed_dim() as u32);
    for d in pool.depths_m() {
        push_f64(&mut out, d);
    }
    push_u32(&mut out, (tensors.len() + 1) as u32);
    for (name, dims, data) in &tensors {
        push_tensor(&mut out, name, dims, data);
    }
    push_tensor(
        &mut out,
        POOL_TENSOR,
        &[pool.len(), pool.embed_dim()],
        pool.embeddings_flat(),
    );
    atomic_write(path, &out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Malformed {
                format: FORMAT,
                reason: format!(
                    "unexpected end of file at byte {} (wanted {n} more)",
                    self.pos
                ),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed { format: FORMAT, reason: reason.into() }
}

fn read_tensor(r: &mut Reader<'_>) -> Result<(String, Vec<usize>, Vec<f64>)> {
    let name_len = r.u16()? as usize;
    let name = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|_| malformed("tensor name is not valid UTF-8"))?;
    let ndim = r.u8()? as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(r.u32()? as usize);
    }
    let count: usize = dims.iter().product();
    if count > (1 << 28) {
        return Err(malformed(format!("tensor {name} claims {count} values")));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let v = r.f64()?;
        if !v.is_finite() {
            return Err(malformed(format!("non-finite parameter in tensor {name}")));
        }
        data.push(v);
    }
    Ok((name, dims, data))
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };

    if r.take(MAGIC.len())? != MAGIC {
        return Err(malformed("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let flags = r.u32()?;
    if flags & !FLAG_MASK_HEAD != 0 {
        return Err(malformed(format!("unknown flag bits {flags:#x}")));
    }
    let variant = if flags & FLAG_MASK_HEAD != 0 {
        ModelVariant::Full
    } else {
        ModelVariant::NoMaskHead
    };
    let taper_rate = r.f64()?;
    let taper = TaperRate::new(taper_rate)
        .map_err(|e| malformed(format!("taper rate rejected: {e}")))?;
    let anchor_count = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    if anchor_count == 0 || embed_dim == 0 {
        return Err(malformed("anchor count and embedding dim must be positive"));
    }
    let mut depths = Vec::with_capacity(anchor_count);
    for _ in 0..anchor_count {
        depths.push(r.f64()?);
    }

    let tensor_count = r.u32()? as usize;
    let mut model = Model::zeroed(variant, embed_dim);
    {
        let expected = model.named_tensors_mut();
        if tensor_count != expected.len() + 1 {
            return Err(malformed(format!(
                "expected {} tensors, file has {tensor_count}",
                expected.len() + 1
            )));
        }
        for (i, (name, dims, slot)) in expected.into_iter().enumerate() {
            let (fname, fdims, fdata) = read_tensor(&mut r)?;
            if fname != name || fdims != dims {
                return Err(malformed(format!(
                    "tensor {i}: expected {name} {dims:?}, found {fname} {fdims:?}"
                )));
            }
            debug_assert_eq!(slot.len(), fdata.len());
            *slot = fdata;
        }
    }

    let (pname, pdims, pdata) = read_tensor(&mut r)?;
    if pname != POOL_TENSOR || pdims != [anchor_count, embed_dim] {
        return Err(malformed(format!(
            "final tensor must be {POOL_TENSOR} [{anchor_count}, {embed_dim}], found {pname} {pdims:?}"
        )));
    }
    let pool = AnchorPool::from_parts(&depths, embed_dim, pdata)
        .map_err(|e| malformed(format!("anchor table rejected: {e}")))?;

    if r.pos != bytes.len() {
        return Err(malformed(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint { model, pool, taper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::ImageBuf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(variant: ModelVariant, seed: u64) -> (Model, AnchorPool, TaperRate) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::new(variant, 3, &mut rng);
        let pool = AnchorPool::new(&[2.0, 4.0, 10.0], 3, &mut rng).unwrap();
        (model, pool, TaperRate::new(0.05).unwrap())
    }

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuf {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = ImageBuf::zeros(w, h, 3);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    img.set(c, x, y, rng.gen_range(0.0..1.0));
                }
            }
        }
        img
    }

    #[test]
    fn round_trip_is_bitwise_for_both_variants() {
        let dir = tempfile::tempdir().unwrap();
        let img = random_image(16, 16, 40);
        for (variant, name) in
            [(ModelVariant::Full, "full.ckpt"), (ModelVariant::NoMaskHead, "nomask.ckpt")]
        {
            let (model, pool, taper) = setup(variant, 41);
            let path = dir.path().join(name);
            save_checkpoint(&model, &pool, taper, &path).unwrap();
            let loaded = load_checkpoint(&path).unwrap();

            assert_eq!(loaded.model.variant(), variant);
            assert_eq!(loaded.taper, taper);
            assert_eq!(loaded.pool.depths_m(), pool.depths_m());
            assert_eq!(loaded.pool.embeddings_flat(), pool.embeddings_flat());
            let orig = model.named_tensors();
            let back = loaded.model.named_tensors();
            assert_eq!(orig.len(), back.len());
            for ((n1, d1, t1), (n2, d2, t2)) in orig.iter().zip(&back) {
                assert_eq!(n1, n2);
                assert_eq!(d1, d2);
                assert_eq!(t1, t2, "tensor {n1} must round-trip bitwise");
            }

            // Same bytes in, same prediction out.
            let a = model.predict_depth(&img, &pool, 1, taper).unwrap();
            let b = loaded.model.predict_depth(&img, &loaded.pool, 1, taper).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (model, pool, taper) = setup(ModelVariant::Full, 42);
        let path = dir.path().join("good.ckpt");
        save_checkpoint(&model, &pool, taper, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let cases: Vec<(&str, Vec<u8>)> = vec![
            ("bad magic", {
                let mut b = good.clone();
                b[0] ^= 0xff;
                b
            }),
            ("bad version", {
                let mut b = good.clone();
                b[8] = 9;
                b
            }),
            ("unknown flags", {
                let mut b = good.clone();
                b[12] |= 0x02;
                b
            }),
            ("truncated", good[..good.len() / 2].to_vec()),
            ("trailing bytes", {
                let mut b = good.clone();
                b.push(0);
                b
            }),
            ("empty", Vec::new()),
        ];
        for (what, bytes) in cases {
            let p = dir.path().join("bad.ckpt");
            std::fs::write(&p, &bytes).unwrap();
            let err = load_checkpoint(&p).unwrap_err();
            assert!(matches!(err, Error::Malformed { .. }), "{what}: got {err:?}");
        }
    }

    #[test]
    fn save_rejects_mismatched_pool() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let model = Model::new(ModelVariant::Full, 3, &mut rng);
        let pool = AnchorPool::new(&[2.0, 4.0], 5, &mut rng).unwrap();
        let err = save_checkpoint(&model, &pool, TaperRate::default(), &dir.path().join("x.ckpt"))
            .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }
}
