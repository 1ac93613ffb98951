//! Desk-scale synthetic stand-in for the clinical CXR corpora: three
//! separable classes of 64×64 grayscale images with patient-disjoint
//! splits.

use std::path::Path;

use mfvit_phase::{io::save_png8, Image2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mfvit_tensor::seeding::derive_seed;

use crate::error::{PipelineError, Result};
use crate::manifest::{ClassLabel, ManifestRow, RunManifest, Split};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub n_per_class: usize,
    /// Extra covid-heavy robustness split: per-class counts
    /// (n, n, 2n); 0 disables test2 generation.
    pub test2_per_class: usize,
    pub image_size: usize,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_per_class: 20,
            test2_per_class: 0,
            image_size: 64,
            noise: 0.03,
        }
    }
}

/// class 0: low-frequency smooth gradients; class 1: mid-frequency
/// oriented stripes; class 2: stripes plus localized blobs.
fn synth_image(class: usize, size: usize, noise: f64, rng: &mut ChaCha8Rng) -> Image2D {
    let n = size as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut data = vec![0.0f64; size * size];
    match class {
        0 => {
            let fx = 0.3 + 0.9 * rng.gen::<f64>();
            let fy = 0.3 + 0.9 * rng.gen::<f64>();
            let phase = two_pi * rng.gen::<f64>();
            for y in 0..size {
                for x in 0..size {
                    let v =
                        0.5 + 0.4 * (two_pi * (fx * x as f64 + fy * y as f64) / n + phase).sin();
                    data[y * size + x] = v;
                }
            }
        }
        1 | 2 => {
            let freq = 6.0 + 4.0 * rng.gen::<f64>();
            let theta = std::f64::consts::PI * rng.gen::<f64>();
            let phase = two_pi * rng.gen::<f64>();
            let (sin_t, cos_t) = theta.sin_cos();
            for y in 0..size {
                for x in 0..size {
                    let u = x as f64 * cos_t + y as f64 * sin_t;
                    data[y * size + x] = 0.5 + 0.35 * (two_pi * freq * u / n + phase).sin();
                }
            }
            if class == 2 {
                let blobs = 2 + (rng.gen::<f64>() * 3.0) as usize; // 2..=4
                for _ in 0..blobs {
                    let cx = 8.0 + (n - 16.0) * rng.gen::<f64>();
                    let cy = 8.0 + (n - 16.0) * rng.gen::<f64>();
                    let sigma = 3.0 + 2.0 * rng.gen::<f64>();
                    let amp = 0.4;
                    for y in 0..size {
                        for x in 0..size {
                            let dx = x as f64 - cx;
                            let dy = y as f64 - cy;
                            data[y * size + x] +=
                                amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                        }
                    }
                }
            }
        }
        _ => unreachable!("three classes"),
    }
    for v in data.iter_mut() {
        *v = (*v + noise * (2.0 * rng.gen::<f64>() - 1.0)).clamp(0.0, 1.0);
    }
    Image2D::new(size, size, data).expect("generated in range")
}

/// Writes PNGs plus `manifest.csv` under `out_dir`; patients hold two
/// consecutive images each and are assigned whole to one split
/// (60/20/20 by patient).
pub fn make_synthetic_dataset(cfg: &SynthConfig, seed: u64, out_dir: &Path) -> Result<RunManifest> {
    if cfg.n_per_class < 4 {
        return Err(PipelineError::Config(
            "need n_per_class ≥ 4 for nonempty splits".into(),
        ));
    }
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir)?;

    let mut rows = Vec::new();
    for class in 0..3 {
        let n = cfg.n_per_class;
        let patients = n.div_ceil(2);
        let train_p = (patients as f64 * 0.6).floor() as usize;
        let val_p = (patients as f64 * 0.2).floor() as usize;
        for i in 0..n {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, (class * 1_000_000 + i) as u64));
            let img = synth_image(class, cfg.image_size, cfg.noise, &mut rng);
            let rel = format!("images/c{class}_{i:03}.png");
            save_png8(&out_dir.join(&rel), &img)?;
            let patient = i / 2;
            let split = if patient < train_p {
                Split::Train
            } else if patient < train_p + val_p {
                Split::Val
            } else {
                Split::Test1
            };
            rows.push(ManifestRow {
                path: rel.into(),
                label: ClassLabel::from_index(class).expect("class < 3"),
                patient_id: format!("p{class}_{patient}"),
                split,
            });
        }
    }
    if cfg.test2_per_class > 0 {
        for class in 0..3 {
            let count = if class == 2 {
                2 * cfg.test2_per_class
            } else {
                cfg.test2_per_class
            };
            for i in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    seed,
                    (7_000_000 + class * 1_000_000 + i) as u64,
                ));
                let img = synth_image(class, cfg.image_size, cfg.noise, &mut rng);
                let rel = format!("images/t2_c{class}_{i:03}.png");
                save_png8(&out_dir.join(&rel), &img)?;
                rows.push(ManifestRow {
                    path: rel.into(),
                    label: ClassLabel::from_index(class).expect("class < 3"),
                    patient_id: format!("t2p{class}_{i}"),
                    split: Split::Test2,
                });
            }
        }
    }
    let manifest = RunManifest::new(rows)?;
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
