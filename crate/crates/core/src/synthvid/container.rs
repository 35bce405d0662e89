//! Clip container.
//!
//! ```text
//! offset  size        field
//! 0       8           magic "MOTIFCLP"
//! 8       4           version (u32 LE, currently 1)
//! 12      16          frames, height, width, channels (u32 LE each)
//! 28      8           seed (u64 LE)
//! 36      4·L·H·W·C   samples, f32 LE, row-major frame/row/column/channel
//! ```
//!
//! The same layout stores videos (3 channels), heatmaps (1) and flow (2).

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::numcore::{Dims4, Tensor4};

const MAGIC: &[u8; 8] = b"MOTIFCLP";
const VERSION: u32 = 1;
const HEADER: usize = 36;

pub fn encode_container(tensor: &Tensor4<f32>, seed: u64) -> Vec<u8> {
    let d = tensor.dims();
    let mut out = Vec::with_capacity(HEADER + 4 * d.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in [d.frames, d.height, d.width, d.channels] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&seed.to_le_bytes());
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<(Tensor4<f32>, u64)> {
    const WHAT: &str = "clip container";
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::format(WHAT, "missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u32_at(8);
    if version != VERSION as usize {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let dims = Dims4::new(u32_at(12), u32_at(16), u32_at(20), u32_at(24));
    let seed = u64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let n = dims
        .frames
        .checked_mul(dims.height)
        .and_then(|v| v.checked_mul(dims.width))
        .and_then(|v| v.checked_mul(dims.channels))
        .ok_or_else(|| Error::format(WHAT, "dims overflow"))?;
    if bytes.len() != HEADER + 4 * n {
        return Err(Error::format(
            WHAT,
            format!("payload is {} bytes, dims {dims} need {}", bytes.len() - HEADER, 4 * n),
        ));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let t = Tensor4::from_vec(dims, data).map_err(|e| Error::format(WHAT, e.to_string()))?;
    Ok((t, seed))
}

pub fn write_container(path: &Path, tensor: &Tensor4<f32>, seed: u64) -> Result<()> {
    std::fs::write(path, encode_container(tensor, seed)).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<(Tensor4<f32>, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes)
}

/// Lossless 8-bit PNG per frame (`<stem>_<l>.png`); 1- or 3-channel tensors.
pub fn export_png_frames(dir: &Path, stem: &str, tensor: &Tensor4<f32>) -> Result<Vec<std::path::PathBuf>> {
    let d = tensor.dims();
    ensure!(
        d.channels == 1 || d.channels == 3,
        "png export needs 1 or 3 channels, got {}",
        d.channels
    );
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(d.frames);
    for l in 0..d.frames {
        let bytes: Vec<u8> = tensor
            .frame(l)
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let path = dir.join(format!("{stem}_{l:03}.png"));
        let color = if d.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        image::save_buffer(&path, &bytes, d.width as u32, d.height as u32, color)
            .map_err(|e| Error::format("png", e.to_string()))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads an 8-bit PNG as a single-frame tensor with values in `[0, 1]`.
pub fn read_png_frame(path: &Path) -> Result<Tensor4<f32>> {
    let img = image::open(path).map_err(|e| Error::format("png", format!("{}: {e}", path.display())))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Tensor4::from_vec(Dims4::new(1, h as usize, w as usize, 3), data)
}
