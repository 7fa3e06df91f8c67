//! PNG and base64 encoding for rasters and masks.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};
use crate::model::{Mask, RgbImage};

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

fn encode(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
    }
    Ok(out)
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>> {
    encode(img.width(), img.height(), png::ColorType::Rgb, img.as_raw())
}

pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    encode(mask.width(), mask.height(), png::ColorType::Grayscale, mask.as_raw())
}

/// Decoded 8-bit PNG with its channel count.
struct Decoded {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<u8>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(png_err)?;
    data.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Png("unexpanded palette image".into())),
    };
    Ok(Decoded {
        width: info.width,
        height: info.height,
        channels,
        data,
    })
}

/// Decodes any 8/16-bit PNG into RGB8, dropping alpha.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    let d = decode(bytes)?;
    let pixels = match d.channels {
        3 => d.data,
        4 => d.data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        1 => d.data.iter().flat_map(|&v| [v, v, v]).collect(),
        _ => d.data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
    };
    RgbImage::from_raw(d.width, d.height, pixels)
}

/// Decodes a PNG to one 8-bit channel (first channel of color images) and
/// returns `(width, height, values)`.
pub fn decode_gray_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let d = decode(bytes)?;
    let gray = d.data.chunks_exact(d.channels).map(|p| p[0]).collect();
    Ok((d.width, d.height, gray))
}

pub fn to_base64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn from_base64(text: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(text.trim())
        .map_err(|e| Error::InvalidInput(format!("bad base64 payload: {e}")))
}
