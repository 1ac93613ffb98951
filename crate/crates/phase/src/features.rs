//! Scale-summed local-phase feature images.

use crate::error::{PhaseError, Result};
use crate::image::Image2D;
use crate::monogenic::MonogenicResponses;

pub const LWPA_EPS: f64 = 1e-10;

/// Local weighted mean phase angle:
/// φ = atan2(Σ_s even_s, √((Σ_s odd1_s)² + (Σ_s odd2_s)²) + ε),
/// normalized to [0, 1] by (φ + π/2)/π.
pub fn lwpa(resp: &MonogenicResponses) -> Result<Image2D> {
    if resp.scales.is_empty() {
        return Err(PhaseError::Config("lwpa needs at least one scale".into()));
    }
    let (w, h) = (resp.width(), resp.height());
    let n = w * h;
    let mut sum_even = vec![0.0f64; n];
    let mut sum_odd1 = vec![0.0f64; n];
    let mut sum_odd2 = vec![0.0f64; n];
    for s in &resp.scales {
        for i in 0..n {
            sum_even[i] += s.even.data()[i];
            sum_odd1[i] += s.odd1.data()[i];
            sum_odd2[i] += s.odd2.data()[i];
        }
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let data: Vec<f64> = (0..n)
        .map(|i| {
            let odd_norm = (sum_odd1[i] * sum_odd1[i] + sum_odd2[i] * sum_odd2[i]).sqrt();
            let phi = sum_even[i].atan2(odd_norm + LWPA_EPS);
            (phi + half_pi) / std::f64::consts::PI
        })
        .collect();
    Image2D::new(w, h, data)
}

/// Weighted local phase energy:
/// raw = max(0, Σ_s (|even_s| − √(odd1_s² + odd2_s²))), normalized by its
/// maximum (all-zero output when the maximum vanishes).
pub fn lpe(resp: &MonogenicResponses) -> Result<Image2D> {
    if resp.scales.is_empty() {
        return Err(PhaseError::Config("lpe needs at least one scale".into()));
    }
    let (w, h) = (resp.width(), resp.height());
    let n = w * h;
    let mut raw = vec![0.0f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for s in &resp.scales {
            let e = s.even.data()[i];
            let o1 = s.odd1.data()[i];
            let o2 = s.odd2.data()[i];
            acc += e.abs() - (o1 * o1 + o2 * o2).sqrt();
        }
        raw[i] = acc.max(0.0);
    }
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in raw.iter_mut() {
            *v /= max;
        }
    }
    Image2D::new(w, h, raw)
}
