//! Frequency-domain monogenic filtering: per scale, an even bandpass
//! response and the two odd Riesz components.

use rustfft::num_complex::Complex;

use crate::error::{PhaseError, Result};
use crate::filterbank::FilterBank;
use crate::image::Image2D;

pub struct ScaleResponse {
    pub even: Image2D,
    pub odd1: Image2D,
    pub odd2: Image2D,
}

pub struct MonogenicResponses {
    pub scales: Vec<ScaleResponse>,
}

impl MonogenicResponses {
    pub fn width(&self) -> usize {
        self.scales[0].even.width()
    }

    pub fn height(&self) -> usize {
        self.scales[0].even.height()
    }
}

/// even_s = IFFT(FFT(I)·G_s); odd1_s = IFFT(FFT(I)·G_s·i·R1);
/// odd2_s = IFFT(FFT(I)·G_s·i·R2).
pub fn monogenic_responses(image: &Image2D, bank: &FilterBank) -> Result<MonogenicResponses> {
    if image.width() != bank.width() || image.height() != bank.height() {
        return Err(PhaseError::Dimension(format!(
            "image {}×{} does not match filter bank {}×{}",
            image.width(),
            image.height(),
            bank.width(),
            bank.height()
        )));
    }
    let (w, h) = (image.width(), image.height());
    let spectrum = bank.fft.forward(image.data());
    let mut scales = Vec::with_capacity(bank.num_scales());
    for s in 0..bank.num_scales() {
        let radial = bank.radial(s);
        let band: Vec<Complex<f64>> = spectrum
            .iter()
            .zip(radial)
            .map(|(&sp, &g)| sp * g)
            .collect();
        let even = bank.fft.inverse_real(&band)?;
        let odd_spec = |riesz: &[f64]| -> Vec<Complex<f64>> {
            band.iter()
                .zip(riesz)
                .map(|(&sp, &r)| sp * Complex::new(0.0, r))
                .collect()
        };
        let odd1 = bank.fft.inverse_real(&odd_spec(bank.riesz1()))?;
        let odd2 = bank.fft.inverse_real(&odd_spec(bank.riesz2()))?;
        scales.push(ScaleResponse {
            even: Image2D::new(w, h, even)?,
            odd1: Image2D::new(w, h, odd1)?,
            odd2: Image2D::new(w, h, odd2)?,
        });
    }
    Ok(MonogenicResponses { scales })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::build_filter_bank;

    #[test]
    fn constant_image_gives_zero_responses() {
        let bank = build_filter_bank((64, 64), 3, 8.0, 2.0, 2.0).unwrap();
        let img = Image2D::constant(64, 64, 0.7);
        let resp = monogenic_responses(&img, &bank).unwrap();
        for s in &resp.scales {
            for v in s
                .even
                .data()
                .iter()
                .chain(s.odd1.data())
                .chain(s.odd2.data())
            {
                assert!(v.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_at_peak_wavelength_forms_quadrature_pair() {
        // I(x,y) = cos(2πx/λ) with λ exactly on a grid bin: the even/odd1
        // responses are a cosine/sine pair with a constant envelope, and the
        // vertical Riesz component vanishes.
        let (w, h) = (64usize, 64usize);
        let lambda = 8.0;
        let bank = build_filter_bank((w, h), 1, lambda, 2.0, 2.0).unwrap();
        let data: Vec<f64> = (0..w * h)
            .map(|i| {
                let x = (i % w) as f64;
                (2.0 * std::f64::consts::PI * x / lambda).cos()
            })
            .collect();
        let img = Image2D::new(w, h, data).unwrap();
        let resp = monogenic_responses(&img, &bank).unwrap();
        let s = &resp.scales[0];

        for v in s.odd2.data() {
            assert!(v.abs() < 1e-9, "odd2 must vanish for a horizontal cosine");
        }
        let envelope: Vec<f64> = s
            .even
            .data()
            .iter()
            .zip(s.odd1.data())
            .map(|(&e, &o)| (e * e + o * o).sqrt())
            .collect();
        let mean = envelope.iter().sum::<f64>() / envelope.len() as f64;
        assert!(mean > 0.5, "filter at its peak passes the cosine");
        for v in &envelope {
            assert!(
                (v - mean).abs() < 1e-6 * mean.max(1.0),
                "quadrature envelope must be constant, got {v} vs mean {mean}"
            );
        }
    }

    #[test]
    fn dc_shift_invariance() {
        let (w, h) = (64usize, 64usize);
        let bank = build_filter_bank((w, h), 2, 8.0, 2.0, 2.0).unwrap();
        let data: Vec<f64> = (0..w * h).map(|i| ((i * 31) % 17) as f64 / 17.0).collect();
        let img = Image2D::new(w, h, data.clone()).unwrap();
        let shifted = Image2D::new(w, h, data.iter().map(|v| v + 0.5).collect()).unwrap();
        let a = monogenic_responses(&img, &bank).unwrap();
        let b = monogenic_responses(&shifted, &bank).unwrap();
        for (sa, sb) in a.scales.iter().zip(&b.scales) {
            assert!(sa.even.max_abs_diff(&sb.even) < 1e-9);
            assert!(sa.odd1.max_abs_diff(&sb.odd1) < 1e-9);
            assert!(sa.odd2.max_abs_diff(&sb.odd2) < 1e-9);
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let bank = build_filter_bank((64, 64), 1, 8.0, 2.0, 2.0).unwrap();
        let img = Image2D::constant(32, 32, 0.5);
        assert!(matches!(
            monogenic_responses(&img, &bank),
            Err(PhaseError::Dimension(_))
        ));
    }
}
