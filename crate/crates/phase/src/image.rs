//! Single-channel floating-point image on a fixed grid.

use crate::error::{PhaseError, Result};

/// Row-major grayscale image; intensities are dimensionless, typically in
/// [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(PhaseError::Dimension(format!(
                "image data length {} != {width}×{height}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(PhaseError::Numeric(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Image2D {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Image2D {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_grid(&self, other: &Image2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Largest absolute pixel difference against another image.
    pub fn max_abs_diff(&self, other: &Image2D) -> f64 {
        assert!(self.same_grid(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Image2D::new(3, 3, vec![0.0; 8]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Image2D::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(Image2D::new(2, 2, vec![0.0, f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let mut img = Image2D::constant(4, 2, 0.0);
        img.set(3, 1, 0.5);
        assert_eq!(img.data()[7], 0.5);
        assert_eq!(img.get(3, 1), 0.5);
    }
}
