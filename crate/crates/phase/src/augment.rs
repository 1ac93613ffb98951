//! Geometric training augmentations: bilinear resize, bounded random
//! rotation with edge clamping, horizontal flip. Deterministic per seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PhaseError, Result};
use crate::image::Image2D;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AugmentConfig {
    pub resize_to: usize,
    /// Rotation bound in degrees; the angle is drawn uniformly from
    /// [−max_rotation, +max_rotation].
    pub max_rotation: f64,
    pub hflip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            resize_to: 224,
            max_rotation: 10.0,
            hflip_prob: 0.5,
        }
    }
}

fn sample_bilinear_clamped(img: &Image2D, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let clamp = |v: isize, hi: isize| v.clamp(0, hi - 1) as usize;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0i = x0 as isize;
    let y0i = y0 as isize;
    let p00 = img.get(clamp(x0i, w), clamp(y0i, h));
    let p10 = img.get(clamp(x0i + 1, w), clamp(y0i, h));
    let p01 = img.get(clamp(x0i, w), clamp(y0i + 1, h));
    let p11 = img.get(clamp(x0i + 1, w), clamp(y0i + 1, h));
    let top = p00 * (1.0 - fx) + p10 * fx;
    let bot = p01 * (1.0 - fx) + p11 * fx;
    top * (1.0 - fy) + bot * fy
}

/// Bilinear resize with pixel-center alignment; a same-size resize is the
/// identity.
pub fn resize_bilinear(img: &Image2D, out_w: usize, out_h: usize) -> Result<Image2D> {
    if out_w == 0 || out_h == 0 {
        return Err(PhaseError::Config("resize target must be nonzero".into()));
    }
    let sx = img.width() as f64 / out_w as f64;
    let sy = img.height() as f64 / out_h as f64;
    let mut data = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..out_w {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            data.push(sample_bilinear_clamped(img, src_x, src_y));
        }
    }
    Image2D::new(out_w, out_h, data)
}

/// Rotation about the image center; out-of-bounds samples clamp to the
/// nearest edge pixel rather than filling with zeros.
pub fn rotate_bilinear(img: &Image2D, degrees: f64) -> Result<Image2D> {
    let (w, h) = (img.width(), img.height());
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // inverse map: rotate destination back into the source frame
            let src_x = cx + cos * dx + sin * dy;
            let src_y = cy - sin * dx + cos * dy;
            data.push(sample_bilinear_clamped(img, src_x, src_y));
        }
    }
    Image2D::new(w, h, data)
}

/// Exact column mirror.
pub fn hflip(img: &Image2D) -> Image2D {
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(img.get(w - 1 - x, y));
        }
    }
    Image2D::new(w, h, data).expect("same grid")
}

/// resize → rotate(U(−max,+max)) → hflip(p); deterministic given `seed`.
pub fn augment(image: &Image2D, seed: u64, cfg: &AugmentConfig) -> Result<Image2D> {
    if cfg.resize_to < 8 {
        return Err(PhaseError::Config(format!(
            "resize_to {} is below the minimum of 8",
            cfg.resize_to
        )));
    }
    if image.width() == 0 || image.height() == 0 {
        return Err(PhaseError::Config("augment input is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = (2.0 * rng.gen::<f64>() - 1.0) * cfg.max_rotation;
    let flip = rng.gen::<f64>() < cfg.hflip_prob;

    let mut out = resize_bilinear(image, cfg.resize_to, cfg.resize_to)?;
    if angle != 0.0 {
        out = rotate_bilinear(&out, angle)?;
    }
    if flip {
        out = hflip(&out);
    }
    Ok(out)
}
