//! Mechanics of the stage graph on a miniature experiment: artifact
//! contracts, dependency errors, and bit-level rerun reproducibility.

use std::path::{Path, PathBuf};

use mfvit_pipeline::config::ExperimentConfig;
use mfvit_pipeline::{run_experiment, PipelineError};

/// Miniature config: enough structure to exercise every stage, small
/// enough to run in seconds.
fn mini_config(out_dir: PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::toy(out_dir);
    cfg.dataset.synthetic.as_mut().unwrap().n_per_class = 8;
    cfg.dataset.synthetic.as_mut().unwrap().test2_per_class = 2;
    cfg.pretrain.epochs = 2;
    cfg.pretrain.warmup_epochs = 1;
    cfg.pretrain.batch_size = 4;
    cfg.pretrain.queue_size = 16;
    cfg.finetune.train.epochs = 2;
    cfg.finetune.train.batch_size = 8;
    cfg.finetune.label_fractions = vec![1.0];
    cfg.finetune.repeats = 2;
    cfg.finetune.methods = vec!["cxr-lp".into(), "cxr-ft".into(), "enh-ft".into()];
    cfg.fusion.train.epochs = 2;
    cfg.fusion.methods = vec!["mf-ca".into()];
    cfg
}

fn tree_bytes(dir: &Path, filter: &dyn Fn(&Path) -> bool) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    fn walk(
        dir: &Path,
        base: &Path,
        filter: &dyn Fn(&Path) -> bool,
        out: &mut Vec<(String, Vec<u8>)>,
    ) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, base, filter, out);
            } else if filter(&path) {
                let rel = path.strip_prefix(base).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    walk(dir, dir, filter, &mut files);
    files
}

#[test]
fn full_stage_graph_runs_and_reruns_bit_identically() {
    let base = tempfile::tempdir().unwrap();
    let run_a = base.path().join("a");
    let run_b = base.path().join("b");
    run_experiment(&mini_config(run_a.clone())).unwrap();
    run_experiment(&mini_config(run_b.clone())).unwrap();

    // Checkpoints, metrics and summaries are all byte-reproducible. The
    // config copy embeds its own run paths, so it is the one exclusion.
    let relevant = |p: &Path| {
        let name = p.to_string_lossy();
        !name.ends_with("config.json")
            && (name.ends_with(".ckpt")
                || name.ends_with(".json")
                || name.ends_with(".csv")
                || name.ends_with(".f32"))
    };
    let files_a = tree_bytes(&run_a, &relevant);
    let files_b = tree_bytes(&run_b, &relevant);
    assert!(!files_a.is_empty());
    assert_eq!(files_a.len(), files_b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(&files_b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between reruns");
    }

    // The summary covers the whole grid with no silent omissions.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_a.join("summary.json")).unwrap())
            .unwrap();
    let cells = summary["cells"].as_array().unwrap();
    // 4 methods × 1 fraction × 2 splits
    assert_eq!(cells.len(), 4 * 1 * 2);
    assert!(run_a.join("summary.csv").exists());
    assert!(run_a.join("config.json").exists());

    // Per-repeat metrics and confusion CSVs exist for every cell.
    assert!(run_a.join("metrics/mf-ca.f1.r0.test1.json").exists());
    assert!(run_a.join("metrics/mf-ca.f1.r1.test2.json").exists());
    assert!(run_a
        .join("metrics/cxr-lp.f1.r0.test1.confusion.csv")
        .exists());
}

#[test]
fn enhance_emits_mf_plus_three_intermediates_per_image() {
    let base = tempfile::tempdir().unwrap();
    let mut cfg = mini_config(base.path().join("run"));
    cfg.dataset.synthetic.as_mut().unwrap().n_per_class = 4;
    cfg.dataset.synthetic.as_mut().unwrap().test2_per_class = 0;
    cfg.enhance.emit_intermediates = true;
    cfg.stages = vec!["synth-data".into(), "enhance".into()];
    run_experiment(&cfg).unwrap();

    let enhanced = cfg.out_dir.join("enhanced/images");
    let mut mf = 0;
    let mut intermediates = 0;
    for entry in std::fs::read_dir(&enhanced).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().to_string();
        if name.ends_with(".mf.f32") {
            mf += 1;
        } else if name.ends_with(".lwpa.png")
            || name.ends_with(".lpe.png")
            || name.ends_with(".elea.png")
        {
            intermediates += 1;
        }
    }
    // 12 images → 12 MF files + 36 intermediates (3 per image)
    assert_eq!(mf, 12);
    assert_eq!(intermediates, 36);
}

#[test]
fn missing_upstream_checkpoint_names_the_stage() {
    let base = tempfile::tempdir().unwrap();
    let mut cfg = mini_config(base.path().join("run"));
    // Ask for fusion without ever fine-tuning the branches.
    cfg.stages = vec!["synth-data".into(), "enhance".into(), "fuse-train".into()];
    let err = run_experiment(&cfg).unwrap_err();
    match err {
        PipelineError::Dependency { stage, what } => {
            assert_eq!(stage, "fuse-train");
            assert!(what.contains("cxr-ft"), "message was {what}");
        }
        other => panic!("expected dependency error, got {other}"),
    }
}

#[test]
fn eval_fanout_matches_serial_predictions() {
    let base = tempfile::tempdir().unwrap();
    let mut cfg = mini_config(base.path().join("run"));
    cfg.finetune.methods = vec!["cxr-lp".into()];
    cfg.fusion.methods = vec![];
    cfg.stages = vec![
        "synth-data".into(),
        "enhance".into(),
        "pretrain".into(),
        "finetune".into(),
        "eval".into(),
        "report".into(),
    ];
    run_experiment(&cfg).unwrap();
    let serial =
        std::fs::read_to_string(cfg.out_dir.join("metrics/cxr-lp.f1.r0.test1.json")).unwrap();

    let mut threaded = mini_config(base.path().join("run-threaded"));
    threaded.finetune.methods = vec!["cxr-lp".into()];
    threaded.fusion.methods = vec![];
    threaded.stages = cfg.stages.clone();
    threaded.threads = 3;
    run_experiment(&threaded).unwrap();
    let parallel =
        std::fs::read_to_string(threaded.out_dir.join("metrics/cxr-lp.f1.r0.test1.json")).unwrap();
    assert_eq!(serial, parallel, "thread fan-out changed the predictions");
}
