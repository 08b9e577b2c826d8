//! File formats: the `.hsr` series container, PNG label masks and PNG
//! renders with their scaling sidecars.
//!
//! `.hsr` layout: a 32-byte header (`b"HSR1"`, then little-endian `u32`
//! width, height, channels and dtype tag `1` for `f32`, then 12 zero bytes)
//! followed by the channel-major little-endian `f32` payload.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::raster::{HyperImage, LabelField, Raster};

pub const HSR_MAGIC: &[u8; 4] = b"HSR1";
pub const HSR_HEADER_LEN: usize = 32;
pub const HSR_DTYPE_F32: u32 = 1;
/// Largest payload accepted by the decoder, in samples.
pub const HSR_MAX_SAMPLES: usize = 1 << 28;

/// Serializes `img` as `.hsr`, rounding samples to `f32`.
pub fn encode_hsr(img: &HyperImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HSR_HEADER_LEN + 4 * img.data().len());
    out.extend_from_slice(HSR_MAGIC);
    for v in [img.width(), img.height(), img.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&HSR_DTYPE_F32.to_le_bytes());
    out.extend_from_slice(&[0u8; 12]);
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_hsr(bytes: &[u8]) -> Result<HyperImage> {
    if bytes.len() < HSR_HEADER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the {HSR_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != HSR_MAGIC {
        return Err(Error::Format("bad magic, expected HSR1".into()));
    }
    let (w, h, c) = (
        le_u32(bytes, 4) as usize,
        le_u32(bytes, 8) as usize,
        le_u32(bytes, 12) as usize,
    );
    let dtype = le_u32(bytes, 16);
    if dtype != HSR_DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype tag {dtype}")));
    }
    if bytes[20..32].iter().any(|&b| b != 0) {
        return Err(Error::Format("reserved header bytes are not zero".into()));
    }
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::Format(format!("empty series {w}x{h}x{c}")));
    }
    let samples = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(c))
        .filter(|&n| n <= HSR_MAX_SAMPLES)
        .ok_or_else(|| Error::Format(format!("series {w}x{h}x{c} is too large")))?;
    let payload = &bytes[HSR_HEADER_LEN..];
    if payload.len() != 4 * samples {
        return Err(Error::Format(format!(
            "payload has {} bytes, {w}x{h}x{c} needs {}",
            payload.len(),
            4 * samples
        )));
    }
    let mut data = Vec::with_capacity(samples);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite sample at index {k}")));
        }
        data.push(f64::from(v));
    }
    HyperImage::new(w, h, c, data)
}

pub fn write_hsr(path: &Path, img: &HyperImage) -> Result<()> {
    fs::write(path, encode_hsr(img))?;
    Ok(())
}

pub fn read_hsr(path: &Path) -> Result<HyperImage> {
    decode_hsr(&fs::read(path)?)
}

/// Decodes a greyscale PNG (8 or 16 bit, palette and low bit depths
/// expanded) into per-pixel integer labels. `num_classes` is the largest
/// label plus one.
pub fn decode_label_mask(bytes: &[u8]) -> Result<LabelField> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("label mask: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Format("label mask: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("label mask: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let samples: Vec<u32> = match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => {
            buf[..w * h].iter().map(|&b| u32::from(b)).collect()
        }
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => buf[..2 * w * h]
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect(),
        (ct, bd) => {
            return Err(Error::Format(format!(
                "label mask must be greyscale, got {ct:?} at {bd:?}"
            )))
        }
    };
    let max = samples.iter().copied().max().unwrap_or(0);
    LabelField::new(w, h, samples, max + 1, None)
}

/// Encodes integer labels as an 8-bit (labels < 256) or 16-bit greyscale PNG.
pub fn encode_label_mask(width: usize, height: usize, labels: &[u32]) -> Result<Vec<u8>> {
    if labels.len() != width * height {
        return Err(Error::DimensionMismatch("label count does not match size".into()));
    }
    let max = labels.iter().copied().max().unwrap_or(0);
    if max > u32::from(u16::MAX) {
        return Err(Error::InvalidParameter(format!("label {max} does not fit 16 bits")));
    }
    if max < 256 {
        let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
        encode_png(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
    } else {
        let bytes: Vec<u8> = labels.iter().flat_map(|&l| (l as u16).to_be_bytes()).collect();
        encode_png(width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
    }
}

pub fn read_label_mask(path: &Path) -> Result<LabelField> {
    decode_label_mask(&fs::read(path)?)
}

fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Internal(format!("png: {e}")))?;
        writer
            .write_image_data(bytes)
            .map_err(|e| Error::Internal(format!("png: {e}")))?;
    }
    Ok(out)
}

/// Linear min–max scaling of `r` to 8 bits. Returns the PNG and the bounds.
pub fn encode_raster_png(r: &Raster) -> Result<(Vec<u8>, (f64, f64))> {
    let (lo, hi) = (r.min(), r.max());
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let bytes: Vec<u8> = r
        .data()
        .iter()
        .map(|&v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    let png = encode_png(r.width(), r.height(), png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)?;
    Ok((png, (lo, hi)))
}

/// Sidecar path holding the scaling bounds of a PNG render.
pub fn bounds_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("bounds.txt")
}

/// Writes the 8-bit render of `r` and its `min=`/`max=` sidecar.
pub fn write_raster_png(path: &Path, r: &Raster) -> Result<()> {
    let (png, (lo, hi)) = encode_raster_png(r)?;
    fs::write(path, png)?;
    fs::write(bounds_path(path), format!("min={lo:e}\nmax={hi:e}\n"))?;
    Ok(())
}

/// Writes interleaved RGB bytes as a PNG.
pub fn write_rgb_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != 3 * width * height {
        return Err(Error::DimensionMismatch("RGB buffer does not match size".into()));
    }
    fs::write(
        path,
        encode_png(width, height, png::ColorType::Rgb, png::BitDepth::Eight, rgb)?,
    )?;
    Ok(())
}
