//! 2-D FFT helper over row-major real images.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{PhaseError, Result};

/// Absolute imaginary residue tolerated when an inverse transform is
/// expected to be real.
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// Planned forward/inverse transforms for one grid size. Plans are `Arc`s
/// and the struct is immutable after construction, so it can be shared
/// across threads.
pub struct Fft2 {
    width: usize,
    height: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            fwd_row: planner.plan_fft_forward(width),
            inv_row: planner.plan_fft_inverse(width),
            fwd_col: planner.plan_fft_forward(height),
            inv_col: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn pass(
        &self,
        buf: &mut [Complex<f64>],
        row_fft: &Arc<dyn Fft<f64>>,
        col_fft: &Arc<dyn Fft<f64>>,
    ) {
        let (w, h) = (self.width, self.height);
        let mut scratch = vec![Complex::default(); row_fft.get_inplace_scratch_len()];
        for row in buf.chunks_exact_mut(w) {
            row_fft.process_with_scratch(row, &mut scratch);
        }
        // Column pass via transpose → row FFT → transpose back.
        let mut tr = vec![Complex::default(); w * h];
        for y in 0..h {
            for x in 0..w {
                tr[x * h + y] = buf[y * w + x];
            }
        }
        scratch.resize(col_fft.get_inplace_scratch_len(), Complex::default());
        for col in tr.chunks_exact_mut(h) {
            col_fft.process_with_scratch(col, &mut scratch);
        }
        for y in 0..h {
            for x in 0..w {
                buf[y * w + x] = tr[x * h + y];
            }
        }
    }

    pub fn forward(&self, real: &[f64]) -> Vec<Complex<f64>> {
        debug_assert_eq!(real.len(), self.width * self.height);
        let mut buf: Vec<Complex<f64>> = real.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.pass(&mut buf, &self.fwd_row, &self.fwd_col);
        buf
    }

    /// Inverse transform normalized by 1/(w·h).
    pub fn inverse(&self, spectrum: &[Complex<f64>]) -> Vec<Complex<f64>> {
        debug_assert_eq!(spectrum.len(), self.width * self.height);
        let mut buf = spectrum.to_vec();
        self.pass(&mut buf, &self.inv_row, &self.inv_col);
        let norm = 1.0 / (self.width * self.height) as f64;
        for v in buf.iter_mut() {
            *v *= norm;
        }
        buf
    }

    /// Inverse transform whose result must be real; the imaginary residue
    /// is checked against [`IMAG_RESIDUE_TOL`] and discarded.
    pub fn inverse_real(&self, spectrum: &[Complex<f64>]) -> Result<Vec<f64>> {
        let buf = self.inverse(spectrum);
        let mut worst = 0.0f64;
        for v in &buf {
            worst = worst.max(v.im.abs());
        }
        if worst > IMAG_RESIDUE_TOL {
            return Err(PhaseError::Numeric(format!(
                "imaginary residue {worst:.3e} exceeds {IMAG_RESIDUE_TOL:.0e}"
            )));
        }
        Ok(buf.into_iter().map(|v| v.re).collect())
    }
}
