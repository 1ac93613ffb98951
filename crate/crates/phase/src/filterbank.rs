//! Monogenic quadrature filter bank: alpha-scale-space-derivative radial
//! bandpass responses plus the two Riesz transfer functions, all laid out
//! on the unshifted FFT grid.

use crate::error::{PhaseError, Result};
use crate::fft::Fft2;

pub struct FilterBank {
    width: usize,
    height: usize,
    /// Unit-peak radial bandpass responses, one per scale.
    scales: Vec<Vec<f64>>,
    /// Imaginary parts of the Riesz transfer functions i·R1, i·R2.
    riesz1: Vec<f64>,
    riesz2: Vec<f64>,
    /// Wavelength (pixels) of each scale's response peak.
    wavelengths: Vec<f64>,
    pub(crate) fft: Fft2,
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Signed frequency index for FFT bin `k` of an `n`-point transform.
fn signed_bin(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

/// Builds `num_scales` radial responses G_s(ω) = exp(−σ_s·ω^α)·(σ_s·α·ω^α)
/// normalized to unit peak, with σ_s placing the peak at ω = 2π/λ_s for
/// λ_s = base_wavelength·scale_factor^s, plus the Riesz responses
/// i·u/|ω| and i·v/|ω|.
pub fn build_filter_bank(
    grid: (usize, usize),
    num_scales: usize,
    base_wavelength: f64,
    scale_factor: f64,
    alpha: f64,
) -> Result<FilterBank> {
    let (width, height) = grid;
    if !is_power_of_two(width) || !is_power_of_two(height) {
        return Err(PhaseError::Config(format!(
            "grid {width}×{height} must have power-of-two sides"
        )));
    }
    if num_scales == 0 {
        return Err(PhaseError::Config("num_scales must be ≥ 1".into()));
    }
    if !(scale_factor > 0.0) {
        return Err(PhaseError::Config("scale_factor must be > 0".into()));
    }
    if !(alpha > 0.0) {
        return Err(PhaseError::Config("alpha must be > 0".into()));
    }
    if base_wavelength < 2.0 {
        return Err(PhaseError::Config(format!(
            "base_wavelength {base_wavelength} is beyond Nyquist (min 2 px)"
        )));
    }

    let n = width * height;
    let mut omega = vec![0.0f64; n];
    let mut riesz1 = vec![0.0f64; n];
    let mut riesz2 = vec![0.0f64; n];
    for ky in 0..height {
        let sy = signed_bin(ky, height);
        let v = 2.0 * std::f64::consts::PI * sy as f64 / height as f64;
        for kx in 0..width {
            let sx = signed_bin(kx, width);
            let u = 2.0 * std::f64::consts::PI * sx as f64 / width as f64;
            let idx = ky * width + kx;
            let w = (u * u + v * v).sqrt();
            omega[idx] = w;
            // Nyquist rows/columns have no mirror bin; forcing them to zero
            // keeps the responses exactly odd on the torus so filtered
            // outputs stay real.
            let nyquist = (width > 1 && kx == width / 2) || (height > 1 && ky == height / 2);
            if w > 0.0 && !nyquist {
                riesz1[idx] = u / w;
                riesz2[idx] = v / w;
            }
        }
    }

    let mut scales = Vec::with_capacity(num_scales);
    let mut wavelengths = Vec::with_capacity(num_scales);
    for s in 0..num_scales {
        let lambda = base_wavelength * scale_factor.powi(s as i32);
        if lambda < 2.0 {
            return Err(PhaseError::Config(format!(
                "scale {s} wavelength {lambda:.3} px is beyond Nyquist"
            )));
        }
        let omega_peak = 2.0 * std::f64::consts::PI / lambda;
        let sigma = omega_peak.powf(-alpha);
        let mut response: Vec<f64> = omega
            .iter()
            .map(|&w| {
                if w == 0.0 {
                    0.0
                } else {
                    let p = sigma * w.powf(alpha);
                    alpha * p * (-p).exp()
                }
            })
            .collect();
        let peak = response.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(PhaseError::Numeric(format!(
                "scale {s} radial response vanished on the grid"
            )));
        }
        for r in response.iter_mut() {
            *r /= peak;
        }
        scales.push(response);
        wavelengths.push(lambda);
    }

    Ok(FilterBank {
        width,
        height,
        scales,
        riesz1,
        riesz2,
        wavelengths,
        fft: Fft2::new(width, height),
    })
}

impl FilterBank {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn radial(&self, scale: usize) -> &[f64] {
        &self.scales[scale]
    }

    pub fn riesz1(&self) -> &[f64] {
        &self.riesz1
    }

    pub fn riesz2(&self) -> &[f64] {
        &self.riesz2
    }

    pub fn wavelength(&self, scale: usize) -> f64 {
        self.wavelengths[scale]
    }
}
