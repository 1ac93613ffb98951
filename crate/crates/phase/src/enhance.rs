//! Full enhancement pipeline: monogenic filtering → LwPA/LPE/ELEA → MF.

use serde::{Deserialize, Serialize};

use crate::elea::{elea, EleaParams};
use crate::error::{PhaseError, Result};
use crate::features::{lpe, lwpa};
use crate::filterbank::{build_filter_bank, FilterBank};
use crate::image::Image2D;
use crate::monogenic::monogenic_responses;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnhanceConfig {
    /// Power-of-two working grid the image is resized to before filtering.
    pub working_grid: usize,
    pub num_scales: usize,
    pub base_wavelength: f64,
    pub scale_factor: f64,
    pub alpha: f64,
    pub elea: EleaParams,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            working_grid: 512,
            num_scales: 3,
            base_wavelength: 40.0,
            scale_factor: 2.0,
            alpha: 2.0,
            elea: EleaParams::default(),
        }
    }
}

impl EnhanceConfig {
    pub fn build_bank(&self) -> Result<FilterBank> {
        build_filter_bank(
            (self.working_grid, self.working_grid),
            self.num_scales,
            self.base_wavelength,
            self.scale_factor,
            self.alpha,
        )
    }
}

/// MF = (LwPA + LPE + ELEA)/3; inputs must share a grid and lie in [0,1].
pub fn mf_combine(lwpa_img: &Image2D, lpe_img: &Image2D, elea_img: &Image2D) -> Result<Image2D> {
    if !lwpa_img.same_grid(lpe_img) || !lwpa_img.same_grid(elea_img) {
        return Err(PhaseError::Dimension(
            "mf_combine inputs must share one grid".into(),
        ));
    }
    for (name, img) in [("lwpa", lwpa_img), ("lpe", lpe_img), ("elea", elea_img)] {
        let (lo, hi) = img.min_max();
        if lo < -1e-12 || hi > 1.0 + 1e-12 {
            return Err(PhaseError::Config(format!(
                "mf_combine input {name} outside [0,1]: [{lo}, {hi}]"
            )));
        }
    }
    let data: Vec<f64> = lwpa_img
        .data()
        .iter()
        .zip(lpe_img.data())
        .zip(elea_img.data())
        .map(|((&a, &b), &c)| (a + b + c) / 3.0)
        .collect();
    Image2D::new(lwpa_img.width(), lwpa_img.height(), data)
}

pub struct EnhancedImage {
    pub lwpa: Image2D,
    pub lpe: Image2D,
    pub elea: Image2D,
    pub mf: Image2D,
}

/// Runs the whole enhancement on an image already resized to the bank grid.
pub fn enhance_on_grid(
    image: &Image2D,
    bank: &FilterBank,
    elea_params: &EleaParams,
) -> Result<EnhancedImage> {
    let resp = monogenic_responses(image, bank)?;
    let lwpa_img = lwpa(&resp)?;
    let lpe_img = lpe(&resp)?;
    let elea_img = elea(&lpe_img, elea_params)?;
    let mf = mf_combine(&lwpa_img, &lpe_img, &elea_img)?;
    Ok(EnhancedImage {
        lwpa: lwpa_img,
        lpe: lpe_img,
        elea: elea_img,
        mf,
    })
}

/// Resizes to the working grid and enhances. The filter bank is built by
/// the caller once and shared across images.
pub fn enhance_image(
    image: &Image2D,
    cfg: &EnhanceConfig,
    bank: &FilterBank,
) -> Result<EnhancedImage> {
    let resized = if image.width() == cfg.working_grid && image.height() == cfg.working_grid {
        image.clone()
    } else {
        crate::augment::resize_bilinear(image, cfg.working_grid, cfg.working_grid)?
    };
    enhance_on_grid(&resized, bank, &cfg.elea)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_pass_through() {
        let x = Image2D::new(4, 4, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
        let out = mf_combine(&x, &x, &x).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn extremes_map_to_extremes() {
        let zero = Image2D::constant(4, 4, 0.0);
        let one = Image2D::constant(4, 4, 1.0);
        assert_eq!(mf_combine(&zero, &zero, &zero).unwrap().data()[0], 0.0);
        assert_eq!(mf_combine(&one, &one, &one).unwrap().data()[0], 1.0);
    }

    #[test]
    fn combine_is_bit_deterministic() {
        let a = Image2D::new(8, 8, (0..64).map(|i| (i as f64 * 0.37) % 1.0).collect()).unwrap();
        let b = Image2D::new(8, 8, (0..64).map(|i| (i as f64 * 0.11) % 1.0).collect()).unwrap();
        let c = Image2D::new(8, 8, (0..64).map(|i| (i as f64 * 0.53) % 1.0).collect()).unwrap();
        let x = mf_combine(&a, &b, &c).unwrap();
        let y = mf_combine(&a, &b, &c).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = Image2D::constant(4, 4, 0.5);
        let b = Image2D::constant(8, 8, 0.5);
        assert!(matches!(
            mf_combine(&a, &b, &a),
            Err(PhaseError::Dimension(_))
        ));
    }
}
