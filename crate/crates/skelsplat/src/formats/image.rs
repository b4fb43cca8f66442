//! PNG images: 8-bit RGB for color, 8-bit indexed with a fixed palette for
//! label maps. Colors are quantized with `round(clamp(v, 0, 1) · 255)`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use skelsplat_core::image::Image;

use crate::error::{IoError, Result};

/// Largest label an indexed PNG can carry.
pub const MAX_LABEL: u32 = 255;

/// Fixed label palette: black background, then well-separated hues.
pub fn palette() -> Vec<u8> {
    const BASE: [[u8; 3]; 12] = [
        [0, 0, 0],
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 212],
        [0, 128, 128],
    ];
    let mut p = Vec::with_capacity(768);
    for i in 0..256usize {
        if i < BASE.len() {
            p.extend_from_slice(&BASE[i]);
        } else {
            // deterministic filler for the remaining labels
            let h = (i as u32).wrapping_mul(2_654_435_761);
            p.extend_from_slice(&[(h >> 24) as u8, (h >> 16) as u8, (h >> 8) as u8]);
        }
    }
    p
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| IoError::io(path, e))?))
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::format(path, format!("PNG: {e}"))
}

/// Writes the interleaved RGB values `data` (`H×W×3`).
pub fn save_rgb(path: &Path, width: u32, height: u32, data: &[f64]) -> Result<()> {
    assert_eq!(data.len(), width as usize * height as usize * 3);
    let bytes: Vec<u8> = data.iter().map(|&v| quantize(v)).collect();
    let mut enc = png::Encoder::new(create(path)?, width, height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| png_err(path, e))?;
    w.write_image_data(&bytes).map_err(|e| png_err(path, e))?;
    w.finish().map_err(|e| png_err(path, e))
}

pub fn save_labels(path: &Path, width: u32, height: u32, labels: &[u32]) -> Result<()> {
    assert_eq!(labels.len(), width as usize * height as usize);
    if let Some(&l) = labels.iter().find(|&&l| l > MAX_LABEL) {
        return Err(IoError::format(path, format!("label {l} does not fit the palette")));
    }
    let bytes: Vec<u8> = labels.iter().map(|&l| l as u8).collect();
    let mut enc = png::Encoder::new(create(path)?, width, height);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette());
    let mut w = enc.write_header().map_err(|e| png_err(path, e))?;
    w.write_image_data(&bytes).map_err(|e| png_err(path, e))?;
    w.finish().map_err(|e| png_err(path, e))
}

struct Raw {
    width: u32,
    height: u32,
    color: png::ColorType,
    bytes: Vec<u8>,
}

fn read_raw(path: &Path) -> Result<Raw> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    // keep palette indices as they are
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| png_err(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(IoError::format(path, "only 8-bit PNGs are supported"));
    }
    buf.truncate(info.buffer_size());
    Ok(Raw { width: info.width, height: info.height, color: info.color_type, bytes: buf })
}

/// Reads an 8-bit RGB or RGBA PNG as values in `[0, 1]` (alpha dropped).
pub fn load_rgb(path: &Path) -> Result<Image> {
    let raw = read_raw(path)?;
    let stride = match raw.color {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(IoError::format(path, format!("expected an RGB image, found {other:?}"))),
    };
    let data = raw.bytes.chunks_exact(stride).flat_map(|p| p[..3].iter().map(|&b| b as f64 / 255.0)).collect();
    Image::new(raw.width, raw.height, 3, data).map_err(|e| IoError::format(path, e.to_string()))
}

/// Reads an indexed (or 8-bit grayscale) label PNG.
pub fn load_labels(path: &Path) -> Result<(u32, u32, Vec<u32>)> {
    let raw = read_raw(path)?;
    match raw.color {
        png::ColorType::Indexed | png::ColorType::Grayscale => {}
        other => return Err(IoError::format(path, format!("expected an indexed label image, found {other:?}"))),
    }
    Ok((raw.width, raw.height, raw.bytes.iter().map(|&b| b as u32).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_and_labels_round_trip() {
        let dir = std::env::temp_dir().join(format!("skelsplat-png-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let data = vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.25];
        save_rgb(&dir.join("c.png"), 2, 1, &data).unwrap();
        let img = load_rgb(&dir.join("c.png")).unwrap();
        let back: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
        assert_eq!(back, vec![0, 128, 255, 255, 0, 64]);
        save_labels(&dir.join("l.png"), 3, 1, &[0, 2, 255]).unwrap();
        assert_eq!(load_labels(&dir.join("l.png")).unwrap(), (3, 1, vec![0, 2, 255]));
        assert!(save_labels(&dir.join("l.png"), 1, 1, &[256]).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
