//! Paired Student's t-test with the p-value computed through the
//! regularized incomplete beta function.

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Lanczos approximation (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9_f64;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    /// The difference variance vanished; t/p come from the declared
    /// degenerate branch rather than the t distribution.
    pub degenerate: bool,
}

/// Paired two-sided t-test on per-repeat score vectors:
/// t = mean(d)/(sd(d)/√n) with df = n−1,
/// p = I_{df/(df+t²)}(df/2, 1/2).
pub fn paired_t_test(scores_a: &[f64], scores_b: &[f64]) -> Result<TTestResult> {
    let n = scores_a.len();
    if n != scores_b.len() {
        return Err(PipelineError::Config(format!(
            "paired t-test needs equal lengths, got {n} and {}",
            scores_b.len()
        )));
    }
    if n < 2 {
        return Err(PipelineError::Config(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let d: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;

    if var == 0.0 {
        // Zero difference variance: p collapses to 0 (any nonzero mean is
        // infinitely significant under the model) or 1 (identical inputs).
        let (t, p) = if mean != 0.0 {
            (f64::INFINITY * mean.signum(), 0.0)
        } else {
            (0.0, 1.0)
        };
        return Ok(TTestResult {
            t,
            p,
            df,
            mean_diff: mean,
            degenerate: true,
        });
    }

    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dff = df as f64;
    let p = reg_inc_beta(dff / 2.0, 0.5, dff / (dff + t * t));
    Ok(TTestResult {
        t,
        p,
        df,
        mean_diff: mean,
        degenerate: false,
    })
}
