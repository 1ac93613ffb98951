//! Individual pipeline stages. Each stage is a pure function of
//! (config, seeds, files on disk) and writes its outputs under the run
//! directory.

use std::path::{Path, PathBuf};

use mfvit_backbone::{train_classifier, Classifier, Protocol, VitConfig};
use mfvit_fusion::{train_fusion, FusionMode, FusionModel, FusionSample, FusionTrainConfig};
use mfvit_moco::pretrain;
use mfvit_phase::{io, resize_bilinear, EnhanceConfig, Image2D};
use mfvit_tensor::checkpoint::{Sidecar, TensorStore};
use mfvit_tensor::seeding::{derive_seed, derive_seed_str};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_branch_method, ExperimentConfig};
use crate::error::{PipelineError, Result};
use crate::manifest::{ManifestRow, RunManifest, Split};
use crate::metrics::{evaluate_predictions, EvalReport};
use crate::sampling::sample_label_fraction;
use crate::synth::make_synthetic_dataset;

pub fn checkpoints_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("checkpoints")
}

pub fn metrics_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("metrics")
}

pub fn enhanced_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.dataset
        .enhanced_root
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("enhanced"))
}

pub fn frac_tag(fraction: f64) -> String {
    format!("f{fraction}")
}

pub fn moco_ckpt_path(cfg: &ExperimentConfig, features: &str) -> PathBuf {
    checkpoints_dir(cfg).join(format!("moco-{features}.ckpt"))
}

pub fn branch_ckpt_path(
    cfg: &ExperimentConfig,
    method: &str,
    fraction: f64,
    repeat: usize,
) -> PathBuf {
    checkpoints_dir(cfg).join(format!("{method}.{}.r{repeat}.ckpt", frac_tag(fraction)))
}

pub fn metrics_path(
    cfg: &ExperimentConfig,
    method: &str,
    fraction: f64,
    repeat: usize,
    split: &str,
) -> PathBuf {
    metrics_dir(cfg).join(format!(
        "{method}.{}.r{repeat}.{split}.json",
        frac_tag(fraction)
    ))
}

/// Enhanced mirror of a manifest-relative image path.
pub fn enhanced_image_path(enh_dir: &Path, rel: &Path) -> PathBuf {
    enh_dir.join(rel).with_extension("mf.f32")
}

pub fn load_manifest(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let path = cfg.dataset.root.join("manifest.csv");
    if !path.exists() {
        return Err(PipelineError::Dependency {
            stage: "dataset".into(),
            what: format!(
                "manifest {} (run synth-data or point dataset.root at data)",
                path.display()
            ),
        });
    }
    RunManifest::load(&path)
}

fn load_raw(cfg: &ExperimentConfig, row: &ManifestRow) -> Result<Image2D> {
    Ok(io::load_any(&cfg.dataset.root.join(&row.path))?)
}

fn load_enhanced(cfg: &ExperimentConfig, row: &ManifestRow) -> Result<Image2D> {
    let path = enhanced_image_path(&enhanced_dir(cfg), &row.path);
    if !path.exists() {
        return Err(PipelineError::Dependency {
            stage: "enhance".into(),
            what: format!("enhanced image {}", path.display()),
        });
    }
    Ok(io::read_raw_f32(&path)?)
}

/// Raw CXR images for the `cxr` branch, MF images for the `enh` branch.
pub fn load_branch_images(
    cfg: &ExperimentConfig,
    rows: &[&ManifestRow],
    features: &str,
) -> Result<Vec<Image2D>> {
    rows.iter()
        .map(|row| match features {
            "cxr" => load_raw(cfg, row),
            "enh" => load_enhanced(cfg, row),
            other => Err(PipelineError::Config(format!(
                "unknown features {other:?} (expected cxr or enh)"
            ))),
        })
        .collect()
}

pub fn stage_synth(cfg: &ExperimentConfig) -> Result<()> {
    let Some(synth) = &cfg.dataset.synthetic else {
        return Ok(()); // nothing to generate; manifest must already exist
    };
    let seed = derive_seed_str(cfg.seeds.master, "synth-data");
    make_synthetic_dataset(synth, seed, &cfg.dataset.root)?;
    Ok(())
}

/// Enhances one already-loaded image and writes the MF (and optionally
/// intermediate) files next to `rel` under `out_dir`. Returns the file
/// count written.
pub fn enhance_one(
    image: &Image2D,
    rel: &Path,
    out_dir: &Path,
    params: &EnhanceConfig,
    bank: &mfvit_phase::FilterBank,
    emit_intermediates: bool,
    emit_png: bool,
) -> Result<usize> {
    let enhanced = mfvit_phase::enhance_image(image, params, bank)?;
    let base = out_dir.join(rel);
    if let Some(parent) = base.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut written = 0;
    io::write_raw_f32(&base.with_extension("mf.f32"), &enhanced.mf)?;
    written += 1;
    if emit_png {
        io::save_png8(&base.with_extension("mf.png"), &enhanced.mf)?;
        written += 1;
    }
    if emit_intermediates {
        io::save_png8(&base.with_extension("lwpa.png"), &enhanced.lwpa)?;
        io::save_png8(&base.with_extension("lpe.png"), &enhanced.lpe)?;
        io::save_png8(&base.with_extension("elea.png"), &enhanced.elea)?;
        written += 3;
    }
    Ok(written)
}

pub fn stage_enhance(cfg: &ExperimentConfig) -> Result<usize> {
    let manifest = load_manifest(cfg)?;
    let out = enhanced_dir(cfg);
    std::fs::create_dir_all(&out)?;
    let bank = cfg.enhance.params.build_bank()?;
    let mut written = 0;
    for row in manifest.rows() {
        let img = load_raw(cfg, row)?;
        written += enhance_one(
            &img,
            &row.path,
            &out,
            &cfg.enhance.params,
            &bank,
            cfg.enhance.emit_intermediates,
            cfg.enhance.emit_png,
        )?;
    }
    Ok(written)
}

pub fn stage_pretrain(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let train_rows = manifest.split_rows(Split::Train);
    std::fs::create_dir_all(checkpoints_dir(cfg))?;
    // Which branches need a pretrained encoder?
    let mut features: Vec<&str> = Vec::new();
    for m in &cfg.finetune.methods {
        let (f, _, random) = parse_branch_method(m)?;
        if !random && !features.contains(&f) {
            features.push(f);
        }
    }
    if !cfg.fusion.methods.is_empty() {
        for f in ["cxr", "enh"] {
            if !features.contains(&f) {
                features.push(f);
            }
        }
    }
    for feat in features {
        let images = load_branch_images(cfg, &train_rows, feat)?;
        let seed = derive_seed_str(cfg.seeds.master, &format!("pretrain/{feat}"));
        let out = moco_ckpt_path(cfg, feat);
        pretrain::<f32>(&images, &cfg.pretrain, seed, Some(&out))?;
    }
    Ok(())
}

/// Builds a classifier for a branch method: MoCo-initialized encoder, or a
/// fresh random one for the `*-random` baselines.
fn build_branch_classifier(
    cfg: &ExperimentConfig,
    features: &str,
    random_encoder: bool,
    seed: u64,
) -> Result<Classifier<f32>> {
    let vit: &VitConfig = &cfg.pretrain.vit;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Classifier::<f32>::new(vit, &mut rng)?;
    if !random_encoder {
        let ckpt = moco_ckpt_path(cfg, features);
        if !ckpt.exists() {
            return Err(PipelineError::Dependency {
                stage: "finetune".into(),
                what: format!("pretrained checkpoint {}", ckpt.display()),
            });
        }
        let store = TensorStore::load(&ckpt)?;
        model.load_encoder_from(&store)?;
    }
    Ok(model)
}

pub fn stage_finetune(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let train_rows = manifest.split_rows(Split::Train);
    std::fs::create_dir_all(checkpoints_dir(cfg))?;
    for method in &cfg.finetune.methods {
        let (features, protocol, random_encoder) = parse_branch_method(method)?;
        let protocol: Protocol = protocol.parse()?;
        for &fraction in &cfg.finetune.label_fractions {
            for repeat in 0..cfg.finetune.repeats {
                let tag = format!("finetune/{method}/{}/r{repeat}", frac_tag(fraction));
                let seed = derive_seed_str(cfg.seeds.master, &tag);
                let subset = sample_label_fraction(&train_rows, fraction, seed)?;
                let images = load_branch_images(cfg, &subset, features)?;
                let labels: Vec<usize> = subset.iter().map(|r| r.label.index()).collect();
                let mut model =
                    build_branch_classifier(cfg, features, random_encoder, derive_seed(seed, 1))?;
                train_classifier(
                    &mut model,
                    &images,
                    &labels,
                    protocol,
                    &cfg.finetune.train,
                    derive_seed(seed, 2),
                )?;
                let out = branch_ckpt_path(cfg, method, fraction, repeat);
                model.to_store().save(&out)?;
                Sidecar {
                    config: serde_json::json!({
                        "method": method, "fraction": fraction, "repeat": repeat,
                        "train": &cfg.finetune.train,
                    }),
                    seeds: vec![seed],
                    fingerprints: Default::default(),
                }
                .save(&out)?;
            }
        }
    }
    Ok(())
}

fn load_branch_store(
    cfg: &ExperimentConfig,
    method: &str,
    fraction: f64,
    repeat: usize,
    stage: &str,
) -> Result<TensorStore> {
    let path = branch_ckpt_path(cfg, method, fraction, repeat);
    if !path.exists() {
        return Err(PipelineError::Dependency {
            stage: stage.into(),
            what: format!("branch checkpoint {}", path.display()),
        });
    }
    Ok(TensorStore::load(&path)?)
}

fn classifier_from_store(vit: &VitConfig, store: &TensorStore) -> Result<Classifier<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Classifier::<f32>::new(vit, &mut rng)?;
    model.load_store(store)?;
    Ok(model)
}

pub fn stage_fuse(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.fusion.methods.is_empty() {
        return Ok(());
    }
    let manifest = load_manifest(cfg)?;
    let train_rows = manifest.split_rows(Split::Train);
    std::fs::create_dir_all(checkpoints_dir(cfg))?;
    let vit = &cfg.pretrain.vit;
    for method in &cfg.fusion.methods {
        let mode: FusionMode = method.trim_start_matches("mf-").parse()?;
        for &fraction in &cfg.finetune.label_fractions {
            for repeat in 0..cfg.finetune.repeats {
                let tag = format!("fusion/{method}/{}/r{repeat}", frac_tag(fraction));
                let seed = derive_seed_str(cfg.seeds.master, &tag);
                let cxr_store = load_branch_store(cfg, "cxr-ft", fraction, repeat, "fuse-train")?;
                let enh_store = load_branch_store(cfg, "enh-ft", fraction, repeat, "fuse-train")?;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
                let mut model =
                    FusionModel::<f32>::from_branches(vit, &cxr_store, &enh_store, &mut rng)?;

                // Teachers are the standalone fine-tuned classifiers.
                let teacher_cxr = classifier_from_store(vit, &cxr_store)?;
                let teacher_enh = classifier_from_store(vit, &enh_store)?;
                for (_, t) in teacher_cxr
                    .named_params()
                    .iter()
                    .chain(teacher_enh.named_params().iter())
                {
                    t.set_requires_grad(false);
                }

                // The students see the same label subset the branches saw.
                let ft_seed = derive_seed_str(
                    cfg.seeds.master,
                    &format!("finetune/cxr-ft/{}/r{repeat}", frac_tag(fraction)),
                );
                let subset = sample_label_fraction(&train_rows, fraction, ft_seed)?;
                let mut dataset = Vec::with_capacity(subset.len());
                for row in &subset {
                    dataset.push(FusionSample {
                        cxr: load_raw(cfg, row)?,
                        enh: load_enhanced(cfg, row)?,
                        label: row.label.index(),
                    });
                }

                let train_cfg: &FusionTrainConfig = &cfg.fusion.train;
                train_fusion(
                    &dataset,
                    &mut model,
                    Some((&teacher_cxr, &teacher_enh)),
                    mode,
                    train_cfg,
                    derive_seed(seed, 2),
                )?;

                let out = branch_ckpt_path(cfg, method, fraction, repeat);
                model.to_store().save(&out)?;
                Sidecar {
                    config: serde_json::json!({
                        "method": method, "fraction": fraction, "repeat": repeat,
                        "train": train_cfg,
                    }),
                    seeds: vec![seed],
                    fingerprints: [
                        (
                            "cxr-branch".to_string(),
                            model.branch_fingerprints.0.clone(),
                        ),
                        (
                            "enh-branch".to_string(),
                            model.branch_fingerprints.1.clone(),
                        ),
                    ]
                    .into(),
                }
                .save(&out)?;
            }
        }
    }
    Ok(())
}

fn fit_to(img: &Image2D, size: usize) -> Result<Image2D> {
    if img.width() == size && img.height() == size {
        Ok(img.clone())
    } else {
        Ok(resize_bilinear(img, size, size)?)
    }
}

/// Eval-mode class predictions with an optional thread fan-out; workers
/// each rebuild the model from the store and results are reduced in
/// manifest order.
pub fn predict_classifier(
    vit: &VitConfig,
    store: &TensorStore,
    images: &[Image2D],
    threads: usize,
) -> Result<Vec<usize>> {
    let size = vit.image_size;
    let run_chunk = |chunk: &[Image2D]| -> Result<Vec<usize>> {
        let model = classifier_from_store(vit, store)?;
        let fitted: Vec<Image2D> = chunk
            .iter()
            .map(|img| fit_to(img, size))
            .collect::<Result<_>>()?;
        let refs: Vec<&Image2D> = fitted.iter().collect();
        Ok(model.predict(&refs)?)
    };
    if threads <= 1 || images.len() < 2 {
        return run_chunk(images);
    }
    let chunk_size = images.len().div_ceil(threads);
    let chunks: Vec<&[Image2D]> = images.chunks(chunk_size).collect();
    let mut results: Vec<Result<Vec<usize>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| scope.spawn(move || run_chunk(chunk)))
            .collect();
        for h in handles {
            results.push(h.join().expect("worker panicked"));
        }
    });
    let mut out = Vec::with_capacity(images.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Fusion-model predictions over (raw, enhanced) pairs.
pub fn predict_fusion(
    vit: &VitConfig,
    store: &TensorStore,
    pairs: &[(Image2D, Image2D)],
    mode: FusionMode,
    threads: usize,
) -> Result<Vec<usize>> {
    let size = vit.image_size;
    let run_chunk = |chunk: &[(Image2D, Image2D)]| -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = FusionModel::<f32>::new(vit, &mut rng)?;
        model.load_store(store)?;
        let fitted: Vec<(Image2D, Image2D)> = chunk
            .iter()
            .map(|(a, b)| Ok((fit_to(a, size)?, fit_to(b, size)?)))
            .collect::<Result<_>>()?;
        let refs: Vec<(&Image2D, &Image2D)> = fitted.iter().map(|(a, b)| (a, b)).collect();
        Ok(model.predict(&refs, mode)?)
    };
    if threads <= 1 || pairs.len() < 2 {
        return run_chunk(pairs);
    }
    let chunk_size = pairs.len().div_ceil(threads);
    let chunks: Vec<&[(Image2D, Image2D)]> = pairs.chunks(chunk_size).collect();
    let mut results: Vec<Result<Vec<usize>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|chunk| scope.spawn(move || run_chunk(chunk)))
            .collect();
        for h in handles {
            results.push(h.join().expect("worker panicked"));
        }
    });
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn split_from_name(name: &str) -> Result<Split> {
    name.parse()
}

/// Evaluates one trained model checkpoint on one split and writes the
/// metrics JSON plus the confusion CSV.
pub fn evaluate_method_split(
    cfg: &ExperimentConfig,
    method: &str,
    fraction: f64,
    repeat: usize,
    split_name: &str,
    manifest: &RunManifest,
) -> Result<EvalReport> {
    let split = split_from_name(split_name)?;
    let rows = manifest.split_rows(split);
    if rows.is_empty() {
        return Err(PipelineError::Config(format!(
            "split {split_name} is empty"
        )));
    }
    let ckpt = branch_ckpt_path(cfg, method, fraction, repeat);
    if !ckpt.exists() {
        return Err(PipelineError::Dependency {
            stage: "eval".into(),
            what: format!("checkpoint {}", ckpt.display()),
        });
    }
    let store = TensorStore::load(&ckpt)?;
    let vit = &cfg.pretrain.vit;
    let actual: Vec<usize> = rows.iter().map(|r| r.label.index()).collect();

    let predicted = if let Some(mode) = method.strip_prefix("mf-") {
        let mode: FusionMode = mode.parse()?;
        let mut pairs = Vec::with_capacity(rows.len());
        for row in &rows {
            pairs.push((load_raw(cfg, row)?, load_enhanced(cfg, row)?));
        }
        predict_fusion(vit, &store, &pairs, mode, cfg.threads)?
    } else {
        let (features, _, _) = parse_branch_method(method)?;
        let images = load_branch_images(cfg, &rows, features)?;
        predict_classifier(vit, &store, &images, cfg.threads)?
    };

    let report = evaluate_predictions(&actual, &predicted)?;
    std::fs::create_dir_all(metrics_dir(cfg))?;
    let out = metrics_path(cfg, method, fraction, repeat, split_name);
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.with_extension("confusion.csv"), report.confusion_csv())?;
    Ok(report)
}

pub fn all_methods(cfg: &ExperimentConfig) -> Vec<String> {
    let mut methods = cfg.finetune.methods.clone();
    methods.extend(cfg.fusion.methods.iter().cloned());
    methods
}

pub fn stage_eval(cfg: &ExperimentConfig) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    for method in all_methods(cfg) {
        for &fraction in &cfg.finetune.label_fractions {
            for repeat in 0..cfg.finetune.repeats {
                for split in &cfg.eval.splits {
                    evaluate_method_split(cfg, &method, fraction, repeat, split, &manifest)?;
                }
            }
        }
    }
    Ok(())
}
