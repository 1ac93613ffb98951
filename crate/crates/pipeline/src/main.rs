//! Command-line frontend for the enhancement/training/evaluation pipeline.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use mfvit_backbone::{train_classifier, Classifier, Protocol};
use mfvit_fusion::{train_fusion, FusionMode, FusionModel, FusionSample};
use mfvit_pipeline::config::ExperimentConfig;
use mfvit_pipeline::manifest::{RunManifest, Split};
use mfvit_pipeline::stages;
use mfvit_pipeline::synth::SynthConfig;
use mfvit_pipeline::{
    evaluate_predictions, make_synthetic_dataset, paired_t_test, run_experiment,
    sample_label_fraction, PipelineError,
};
use mfvit_tensor::checkpoint::{Sidecar, TensorStore};
use mfvit_tensor::seeding::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "mfvit",
    about = "Local-phase CXR enhancement with momentum-contrast ViT pretraining and cross-attention fusion"
)]
struct Cli {
    /// Experiment config JSON; subcommands read their section from it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master RNG seed (overrides the config's seeds.master).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation fan-out.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance every image in a directory (MF .f32 plus optional PNGs).
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        emit_intermediates: bool,
        #[arg(long)]
        emit_png: bool,
    },
    /// Generate the synthetic three-class dataset.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        test2_per_class: usize,
    },
    /// Self-supervised pretraining on the train split.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        enhanced_dir: Option<PathBuf>,
    },
    /// Supervised fine-tuning (LP or FT) from a pretraining checkpoint.
    Finetune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        features: String,
        #[arg(long)]
        protocol: String,
        #[arg(long, default_value_t = 1.0)]
        label_fraction: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        enhanced_dir: Option<PathBuf>,
    },
    /// Train the fusion model from two fine-tuned branch checkpoints.
    FuseTrain {
        #[arg(long)]
        cxr_ckpt: PathBuf,
        #[arg(long)]
        enh_ckpt: PathBuf,
        #[arg(long)]
        teacher_cxr: Option<PathBuf>,
        #[arg(long)]
        teacher_enh: Option<PathBuf>,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        data: PathBuf,
        /// Manifest override; defaults to <data>/manifest.csv.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        label_fraction: f64,
        #[arg(long)]
        enhanced_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a manifest split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// classifier or fusion
        #[arg(long)]
        kind: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// classifier input branch: cxr or enh
        #[arg(long, default_value = "cxr")]
        features: String,
        /// fusion mode: ca or lp
        #[arg(long, default_value = "ca")]
        mode: String,
        #[arg(long)]
        enhanced_dir: Option<PathBuf>,
    },
    /// Rebuild summary.{json,csv} from a run directory's metrics.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Paired two-sided t-test between comma-separated score lists.
    TTest {
        #[arg(long, value_delimiter = ',')]
        a: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
    },
    /// Run the configured experiment end to end.
    Run {
        /// Output directory override; defaults to the config's out_dir
        /// with a run-<unix-seconds> subdirectory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn base_config(
    cli_config: &Option<PathBuf>,
    seed: Option<u64>,
    threads: usize,
) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match cli_config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::toy(PathBuf::from("runs/adhoc")),
    };
    if let Some(s) = seed {
        cfg.seeds.master = s;
    }
    if threads > 0 {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() {
            if let Some(ext) = path.extension().and_then(|e| e.to_str()) {
                if matches!(ext, "png" | "pgm" | "f32") {
                    out.push(path);
                }
            }
        } else if path.is_dir() {
            out.extend(list_images(&path)?);
        }
    }
    out.sort();
    Ok(out)
}

fn load_labeled_images(
    cfg: &ExperimentConfig,
    data: &Path,
    manifest: &RunManifest,
    features: &str,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<mfvit_phase::Image2D>, Vec<usize>), PipelineError> {
    let mut scoped = cfg.clone();
    scoped.dataset.root = data.to_path_buf();
    let train_rows = manifest.split_rows(Split::Train);
    let subset = sample_label_fraction(&train_rows, fraction, seed)?;
    let images = stages::load_branch_images(&scoped, &subset, features)?;
    let labels = subset.iter().map(|r| r.label.index()).collect();
    Ok((images, labels))
}

fn run() -> Result<(), PipelineError> {
    let cli = Cli::parse();
    let mut cfg = base_config(&cli.config, cli.seed, cli.threads)?;

    match cli.command {
        Command::Enhance {
            input,
            output,
            emit_intermediates,
            emit_png,
        } => {
            std::fs::create_dir_all(&output)?;
            let bank = cfg.enhance.params.build_bank()?;
            let files = list_images(&input)?;
            if files.is_empty() {
                return Err(PipelineError::Config(format!(
                    "no images found under {}",
                    input.display()
                )));
            }
            let mut written = 0;
            for file in &files {
                let img = mfvit_phase::io::load_any(file)?;
                let rel = file.strip_prefix(&input).unwrap_or(file);
                written += stages::enhance_one(
                    &img,
                    rel,
                    &output,
                    &cfg.enhance.params,
                    &bank,
                    emit_intermediates || cfg.enhance.emit_intermediates,
                    emit_png || cfg.enhance.emit_png,
                )?;
            }
            println!("enhanced {} images, wrote {written} files", files.len());
        }
        Command::SynthData {
            out,
            n_per_class,
            test2_per_class,
        } => {
            let synth = SynthConfig {
                n_per_class,
                test2_per_class,
                ..SynthConfig::default()
            };
            let manifest = make_synthetic_dataset(&synth, cfg.seeds.master, &out)?;
            println!(
                "wrote {} images and manifest.csv under {}",
                manifest.rows().len(),
                out.display()
            );
        }
        Command::Pretrain {
            data,
            features,
            out,
            epochs,
            enhanced_dir,
        } => {
            cfg.dataset.root = data.clone();
            if let Some(e) = epochs {
                cfg.pretrain.epochs = e;
            }
            let manifest = stages::load_manifest(&cfg)?;
            let train_rows = manifest.split_rows(Split::Train);
            let mut scoped = cfg.clone();
            if let Some(dir) = enhanced_dir {
                scoped.dataset.enhanced_root = Some(dir);
            }
            let images = stages::load_branch_images(&scoped, &train_rows, &features)?;
            let seed = mfvit_tensor::seeding::derive_seed_str(
                cfg.seeds.master,
                &format!("pretrain/{features}"),
            );
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let result = mfvit_moco::pretrain::<f32>(&images, &cfg.pretrain, seed, Some(&out))?;
            println!(
                "pretrained {} epochs; final mean InfoNCE {:.4}; checkpoint {}",
                cfg.pretrain.epochs,
                result.log.last().map(|l| l.mean_loss).unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Finetune {
            data,
            ckpt,
            features,
            protocol,
            label_fraction,
            out,
            enhanced_dir,
        } => {
            cfg.dataset.root = data.clone();
            if let Some(dir) = enhanced_dir {
                cfg.dataset.enhanced_root = Some(dir);
            }
            let manifest = stages::load_manifest(&cfg)?;
            let protocol: Protocol = protocol.parse()?;
            let seed = cfg.seeds.master;
            let (images, labels) =
                load_labeled_images(&cfg, &data, &manifest, &features, label_fraction, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let mut model = Classifier::<f32>::new(&cfg.pretrain.vit, &mut rng)?;
            let store = TensorStore::load(&ckpt)?;
            model.load_encoder_from(&store)?;
            let losses = train_classifier(
                &mut model,
                &images,
                &labels,
                protocol,
                &cfg.finetune.train,
                derive_seed(seed, 2),
            )?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            model.to_store().save(&out)?;
            println!(
                "fine-tuned on {} labeled images; final loss {:.4}; checkpoint {}",
                images.len(),
                losses.last().unwrap_or(&f64::NAN),
                out.display()
            );
        }
        Command::FuseTrain {
            cxr_ckpt,
            enh_ckpt,
            teacher_cxr,
            teacher_enh,
            mode,
            data,
            labels,
            out,
            label_fraction,
            enhanced_dir,
        } => {
            cfg.dataset.root = data.clone();
            if let Some(dir) = &enhanced_dir {
                cfg.dataset.enhanced_root = Some(dir.clone());
            }
            let manifest = match labels {
                Some(path) => RunManifest::load(&path)?,
                None => stages::load_manifest(&cfg)?,
            };
            let mode: FusionMode = mode.parse()?;
            let cxr_store = TensorStore::load(&cxr_ckpt)?;
            let enh_store = TensorStore::load(&enh_ckpt)?;
            let seed = cfg.seeds.master;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
            let mut model = FusionModel::<f32>::from_branches(
                &cfg.pretrain.vit,
                &cxr_store,
                &enh_store,
                &mut rng,
            )?;

            let teachers = match (&teacher_cxr, &teacher_enh) {
                (Some(tc), Some(te)) => {
                    let tc = TensorStore::load(tc)?;
                    let te = TensorStore::load(te)?;
                    let mut r = ChaCha8Rng::seed_from_u64(0);
                    let a = Classifier::<f32>::new(&cfg.pretrain.vit, &mut r)?;
                    a.load_store(&tc)?;
                    let b = Classifier::<f32>::new(&cfg.pretrain.vit, &mut r)?;
                    b.load_store(&te)?;
                    for (_, t) in a.named_params().iter().chain(b.named_params().iter()) {
                        t.set_requires_grad(false);
                    }
                    Some((a, b))
                }
                (None, None) => None,
                _ => {
                    return Err(PipelineError::Config(
                        "provide both --teacher-cxr and --teacher-enh, or neither".into(),
                    ))
                }
            };
            if mode == FusionMode::CrossAttention && teachers.is_none() {
                return Err(PipelineError::Config(
                    "cross-attention training requires --teacher-cxr and --teacher-enh".into(),
                ));
            }

            let train_rows = manifest.split_rows(Split::Train);
            let subset = sample_label_fraction(&train_rows, label_fraction, seed)?;
            let mut dataset = Vec::with_capacity(subset.len());
            for row in &subset {
                let cxr = mfvit_phase::io::load_any(&data.join(&row.path))?;
                let enh_path = stages::enhanced_image_path(&stages::enhanced_dir(&cfg), &row.path);
                let enh = mfvit_phase::io::read_raw_f32(&enh_path)?;
                dataset.push(FusionSample {
                    cxr,
                    enh,
                    label: row.label.index(),
                });
            }
            let losses = train_fusion(
                &dataset,
                &mut model,
                teachers.as_ref().map(|(a, b)| (a, b)),
                mode,
                &cfg.fusion.train,
                derive_seed(seed, 2),
            )?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            model.to_store().save(&out)?;
            Sidecar {
                config: serde_json::json!({"mode": format!("{mode:?}"), "label_fraction": label_fraction}),
                seeds: vec![seed],
                fingerprints: [
                    ("cxr-branch".to_string(), model.branch_fingerprints.0.clone()),
                    ("enh-branch".to_string(), model.branch_fingerprints.1.clone()),
                ]
                .into(),
            }
            .save(&out)?;
            println!(
                "fusion training done; final loss {:.4}; checkpoint {}",
                losses.last().unwrap_or(&f64::NAN),
                out.display()
            );
        }
        Command::Eval {
            model,
            kind,
            data,
            split,
            out,
            features,
            mode,
            enhanced_dir,
        } => {
            cfg.dataset.root = data.clone();
            if let Some(dir) = &enhanced_dir {
                cfg.dataset.enhanced_root = Some(dir.clone());
            }
            let manifest = stages::load_manifest(&cfg)?;
            let split: Split = split.parse()?;
            let rows = manifest.split_rows(split);
            if rows.is_empty() {
                return Err(PipelineError::Config("requested split is empty".into()));
            }
            let store = TensorStore::load(&model)?;
            let actual: Vec<usize> = rows.iter().map(|r| r.label.index()).collect();
            let predicted = match kind.as_str() {
                "classifier" => {
                    let images = stages::load_branch_images(&cfg, &rows, &features)?;
                    stages::predict_classifier(&cfg.pretrain.vit, &store, &images, cfg.threads)?
                }
                "fusion" => {
                    let mode: FusionMode = mode.parse()?;
                    let mut pairs = Vec::with_capacity(rows.len());
                    for row in &rows {
                        let cxr = mfvit_phase::io::load_any(&data.join(&row.path))?;
                        let enh_path =
                            stages::enhanced_image_path(&stages::enhanced_dir(&cfg), &row.path);
                        pairs.push((cxr, mfvit_phase::io::read_raw_f32(&enh_path)?));
                    }
                    stages::predict_fusion(&cfg.pretrain.vit, &store, &pairs, mode, cfg.threads)?
                }
                other => {
                    return Err(PipelineError::Config(format!(
                        "unknown model kind {other:?} (expected classifier or fusion)"
                    )))
                }
            };
            let report = evaluate_predictions(&actual, &predicted)?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            std::fs::write(out.with_extension("confusion.csv"), report.confusion_csv())?;
            println!(
                "accuracy {:.4} over {} samples; report {}",
                report.accuracy,
                report.total,
                out.display()
            );
        }
        Command::Report { run_dir } => {
            let mut run_cfg = ExperimentConfig::load(&run_dir.join("config.json"))?;
            run_cfg.out_dir = run_dir;
            let report = mfvit_pipeline::stage_report(&run_cfg)?;
            println!(
                "summary over {} cells written to {}",
                report.cells.len(),
                run_cfg.out_dir.join("summary.json").display()
            );
        }
        Command::TTest { a, b } => {
            let result = paired_t_test(&a, &b)?;
            println!(
                "t = {}, p = {}, df = {}, mean diff = {}{}",
                result.t,
                result.p,
                result.df,
                result.mean_diff,
                if result.degenerate {
                    " (degenerate: zero difference variance)"
                } else {
                    ""
                }
            );
        }
        Command::Run { out_dir } => {
            match out_dir {
                Some(dir) => cfg.out_dir = dir,
                None => {
                    let stamp = std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0);
                    cfg.out_dir = cfg.out_dir.join(format!("run-{stamp}"));
                }
            }
            let dir = run_experiment(&cfg)?;
            println!("experiment complete; outputs under {}", dir.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err}");
        std::process::exit(1);
    }
}
