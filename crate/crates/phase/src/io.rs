//! Image loading and the raw float32 interchange format.
//!
//! Raw format: magic "IMG2" | u32 width | u32 height | u32 reserved, then
//! width·height little-endian f32 values, row-major.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{PhaseError, Result};
use crate::image::Image2D;

pub const RAW_MAGIC: &[u8; 4] = b"IMG2";

/// Loads an 8/16-bit grayscale PNG or PGM, normalizing intensities to
/// [0, 1]. Color inputs are converted to luma first.
pub fn load_image(path: &Path) -> Result<Image2D> {
    let dynimg = image::open(path)?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let data: Vec<f64> = match dynimg {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        other => other
            .to_luma16()
            .into_raw()
            .iter()
            .map(|&v| v as f64 / 65535.0)
            .collect(),
    };
    Image2D::new(w, h, data)
}

/// Writes an 8-bit grayscale PNG for inspection; values are clamped to
/// [0, 1] and quantized.
pub fn save_png8(path: &Path, img: &Image2D) -> Result<()> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_vec(
        img.width() as u32,
        img.height() as u32,
        img.data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
    )
    .ok_or_else(|| PhaseError::Format("pixel buffer size mismatch".into()))?;
    buf.save(path)?;
    Ok(())
}

pub fn write_raw_f32(path: &Path, img: &Image2D) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + img.data().len() * 4);
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&(img.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(img.height() as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for &v in img.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_raw_f32(path: &Path) -> Result<Image2D> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 {
        return Err(PhaseError::Format(
            "raw image file shorter than header".into(),
        ));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(PhaseError::Format(format!(
            "bad raw image magic {:?}, expected {:?}",
            &bytes[0..4],
            RAW_MAGIC
        )));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 16 + width * height * 4;
    if bytes.len() != expected {
        return Err(PhaseError::Format(format!(
            "raw image payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Image2D::new(width, height, data)
}

/// Loads either format by extension: `.f32` raw, anything else via the
/// image decoder.
pub fn load_any(path: &Path) -> Result<Image2D> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("f32") => read_raw_f32(path),
        _ => load_image(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_roundtrip_preserves_f32_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        let img = Image2D::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        write_raw_f32(&path, &img).unwrap();
        let back = read_raw_f32(&path).unwrap();
        assert_eq!(back.width(), 3);
        assert_eq!(back.height(), 2);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        let img = Image2D::constant(2, 2, 0.5);
        write_raw_f32(&path, &img).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_raw_f32(&path), Err(PhaseError::Format(_))));
    }

    #[test]
    fn png_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = Image2D::new(4, 4, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        save_png8(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
        }
    }

    #[test]
    fn sixteen_bit_png_loads_at_full_depth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img16.png");
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_vec(2, 2, vec![0u16, 32768, 16384, 65535]).unwrap();
        buf.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.get(1, 0) - 32768.0 / 65535.0).abs() < 1e-9);
        assert_eq!(img.get(1, 1), 1.0);
    }

    #[test]
    fn pgm_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        // binary P5, 8-bit, 2×2
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8, 128, 64, 255]);
        std::fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.width(), 2);
        assert!((img.get(1, 0) - 128.0 / 255.0).abs() < 1e-9);
        assert!((img.get(1, 1) - 1.0).abs() < 1e-9);
    }
}
