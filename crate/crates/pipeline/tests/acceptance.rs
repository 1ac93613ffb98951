//! Acceptance suite: one test per exit criterion, each printing a
//! PASS line (run with `--nocapture` to see them).
//!
//! The headline clinical numbers are not reproducible at desk scale;
//! acceptance rests on the property suites below plus a structural
//! reproduction of the experiment grid on synthetic data.

use std::time::Instant;

use mfvit_backbone::{Classifier, TokenMatrix, VitConfig};
use mfvit_fusion::{ca_block_forward, cross_attend, CaBlock, CrossAttentionParams};
use mfvit_moco::{info_nce, momentum_at, momentum_update, MocoConfig, RepresentationQueue};
use mfvit_phase::{build_filter_bank, enhance_on_grid, EleaParams, EleaSolver, Image2D};
use mfvit_pipeline::config::ExperimentConfig;
use mfvit_pipeline::{paired_t_test, run_experiment, SummaryReport};
use mfvit_tensor::checkpoint::{CheckpointError, TensorStore};
use mfvit_tensor::nn::{BatchNorm, Mode};
use mfvit_tensor::testutil::{check_gradients, finite_diff, pseudo_random, rel_err};
use mfvit_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(size: usize, seed: u64) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image2D::new(
        size,
        size,
        (0..size * size).map(|_| rng.gen::<f64>()).collect(),
    )
    .unwrap()
}

fn weighted_sum(t: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let w = Tensor::from_vec(t.shape(), pseudo_random(t.numel(), seed)).unwrap();
    t.mul(&w).unwrap().sum_all()
}

/// Gradient suite: every differentiable operation passes central finite
/// differences in f64 at rel. error < 1e-5 (ops) / < 1e-4 (composed
/// network), inside 60 s.
#[test]
fn criterion_gradient_suite() {
    let start = Instant::now();
    const OP_TOL: f64 = 1e-5;
    let h = 1e-5;

    let matmul = check_gradients(
        |p| weighted_sum(&p[0].matmul(&p[1]).unwrap(), 1),
        &[vec![4, 3], vec![3, 5]],
        &[pseudo_random(12, 2), pseudo_random(15, 3)],
        h,
    );
    assert!(matmul < OP_TOL, "matmul {matmul}");

    let softmax = check_gradients(
        |p| weighted_sum(&p[0].softmax(1).unwrap(), 4),
        &[vec![5, 7]],
        &[pseudo_random(35, 5)],
        h,
    );
    assert!(softmax < OP_TOL, "softmax {softmax}");

    let layernorm = check_gradients(
        |p| weighted_sum(&p[0].layernorm(&p[1], &p[2]).unwrap(), 6),
        &[vec![4, 6], vec![6], vec![6]],
        &[
            pseudo_random(24, 7),
            pseudo_random(6, 8).iter().map(|v| v + 1.5).collect(),
            pseudo_random(6, 9),
        ],
        h,
    );
    assert!(layernorm < OP_TOL, "layernorm {layernorm}");

    let batchnorm = check_gradients(
        |p| {
            let mut bn = BatchNorm::<f64>::new(5);
            bn.gain = p[1].clone();
            bn.bias = p[2].clone();
            weighted_sum(&bn.forward(&p[0], Mode::Train).unwrap(), 10)
        },
        &[vec![6, 5], vec![5], vec![5]],
        &[
            pseudo_random(30, 11),
            pseudo_random(5, 12).iter().map(|v| v + 1.2).collect(),
            pseudo_random(5, 13),
        ],
        h,
    );
    assert!(batchnorm < OP_TOL, "batchnorm {batchnorm}");

    let gelu = check_gradients(
        |p| weighted_sum(&p[0].gelu(), 14),
        &[vec![4, 6]],
        &[pseudo_random(24, 15)],
        h,
    );
    assert!(gelu < OP_TOL, "gelu {gelu}");

    let ce = check_gradients(
        |p| p[0].cross_entropy(&[2, 0, 1]).unwrap(),
        &[vec![3, 3]],
        &[pseudo_random(9, 16)],
        h,
    );
    assert!(ce < OP_TOL, "cross-entropy {ce}");

    // InfoNCE through the normalization contract.
    let dim = 6;
    let mut queue = RepresentationQueue::<f64>::new(5, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        let n: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        queue
            .push(raw.into_iter().map(|x| x / n).collect())
            .unwrap();
    }
    let nce = check_gradients(
        |p| {
            let q = p[0].l2_normalize_rows().unwrap();
            let k = p[1].l2_normalize_rows().unwrap();
            info_nce(&q, &k, &queue, 0.2).unwrap()
        },
        &[vec![1, dim], vec![1, dim]],
        &[
            pseudo_random(dim, 18).iter().map(|v| v + 0.3).collect(),
            pseudo_random(dim, 19).iter().map(|v| v + 0.3).collect(),
        ],
        1e-6,
    );
    assert!(nce < OP_TOL, "info_nce {nce}");

    // Cross-attention w.r.t. every projection of one head.
    let (c, heads, p_tokens) = (12usize, 3usize, 4usize);
    let head_dim = c / heads;
    let cls_data = pseudo_random(c, 20);
    let patch_data = pseudo_random(p_tokens * c, 21);
    let ca_err = check_gradients(
        |p| {
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let mut params = CrossAttentionParams::<f64>::new(c, heads, &mut rng).unwrap();
            params.wq[0] = p[0].clone();
            params.wk[0] = p[1].clone();
            params.wv[0] = p[2].clone();
            let cls = Tensor::from_vec(&[1, c], cls_data.clone()).unwrap();
            let patches = Tensor::from_vec(&[p_tokens, c], patch_data.clone()).unwrap();
            weighted_sum(&cross_attend(&cls, &patches, &params).unwrap(), 23)
        },
        &[vec![c, head_dim], vec![c, head_dim], vec![c, head_dim]],
        &[
            pseudo_random(c * head_dim, 24),
            pseudo_random(c * head_dim, 25),
            pseudo_random(c * head_dim, 26),
        ],
        h,
    );
    assert!(ca_err < OP_TOL, "cross-attention {ca_err}");

    // Composed network: toy ViT at depth 1, sampled coordinates.
    let cfg = VitConfig {
        image_size: 16,
        patch_size: 8,
        embed_dim: 8,
        depth: 1,
        num_heads: 2,
        mlp_ratio: 2,
        num_classes: 3,
        pos_embed: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let model = Classifier::<f64>::new(&cfg, &mut rng).unwrap();
    let img = random_image(16, 28);
    let named = model.named_params();
    let loss_fn = || {
        model
            .forward_images(&[&img], Mode::Train)
            .unwrap()
            .cross_entropy(&[1])
            .unwrap()
    };
    let loss = loss_fn();
    loss.backward().unwrap();
    let analytic: Vec<Vec<f64>> = named
        .iter()
        .map(|(_, t)| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    for (_, t) in &named {
        t.zero_grad();
    }
    let mut state = 0x51ab_u64;
    let mut worst = 0.0f64;
    for (pi, (_, t)) in named.iter().enumerate() {
        for _ in 0..3 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let j = (state % t.numel() as u64) as usize;
            let orig = t.value_vec()[j];
            t.value_mut()[j] = orig + h;
            let plus = loss_fn().item();
            t.value_mut()[j] = orig - h;
            let minus = loss_fn().item();
            t.value_mut()[j] = orig;
            worst = worst.max(rel_err(analytic[pi][j], (plus - minus) / (2.0 * h)));
        }
    }
    assert!(worst < 1e-4, "composed toy ViT {worst}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient suite took {elapsed:.1}s");
    println!("acceptance: gradient-suite PASS ({elapsed:.1}s, worst composed err {worst:.2e})");
}

/// Enhancement invariants at full 512×512 scale on 20 random images,
/// inside 2 minutes.
#[test]
fn criterion_enhancement_invariants() {
    let start = Instant::now();
    let n = 512;
    let bank = build_filter_bank((n, n), 3, 40.0, 2.0, 2.0).unwrap();
    let elea = EleaParams::default();
    for seed in 0..20u64 {
        let img = {
            let raw = random_image(n, 1000 + seed);
            Image2D::new(n, n, raw.data().iter().map(|v| v * 0.09).collect()).unwrap()
        };
        let base = enhance_on_grid(&img, &bank, &elea).unwrap();

        for (name, feat) in [
            ("lwpa", &base.lwpa),
            ("lpe", &base.lpe),
            ("elea", &base.elea),
            ("mf", &base.mf),
        ] {
            let (lo, hi) = feat.min_max();
            assert!(lo >= -1e-12 && hi <= 1.0 + 1e-12, "{name} out of [0,1]");
        }

        let shifted = Image2D::new(n, n, img.data().iter().map(|v| v + 0.25).collect()).unwrap();
        let dc = enhance_on_grid(&shifted, &bank, &elea).unwrap();
        let dc_diff = base.mf.max_abs_diff(&dc.mf);
        assert!(dc_diff < 1e-6, "image {seed}: MF(I+c) off by {dc_diff}");

        for c in [0.5, 2.0, 10.0] {
            let scaled = Image2D::new(n, n, img.data().iter().map(|v| v * c).collect()).unwrap();
            let sc = enhance_on_grid(&scaled, &bank, &elea).unwrap();
            let diff = base.mf.max_abs_diff(&sc.mf);
            assert!(diff < 1e-4, "image {seed}: MF({c}·I) off by {diff}");
        }
    }

    // ELEA alternation descent at fixed β, 1e-9 relative.
    let lpe_img = {
        let raw = random_image(64, 99);
        let bank64 = build_filter_bank((64, 64), 3, 8.0, 2.0, 2.0).unwrap();
        enhance_on_grid(&raw, &bank64, &elea).unwrap().lpe
    };
    let mut solver = EleaSolver::new(&lpe_img, &elea).unwrap();
    let beta = 4.0;
    let mut prev = f64::INFINITY;
    for it in 0..5 {
        solver.u_step(beta);
        solver.a_step(beta).unwrap();
        let obj = solver.surrogate_objective(beta);
        assert!(
            obj <= prev * (1.0 + 1e-9),
            "objective rose at alternation {it}: {prev} → {obj}"
        );
        prev = obj;
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "enhancement invariants took {elapsed:.1}s");
    println!("acceptance: enhancement-invariants PASS ({elapsed:.1}s)");
}

/// InfoNCE matches direct scalar evaluation on 100 random configurations
/// to 1e-9 and the uniform-logit case equals log(K+1) exactly.
#[test]
fn criterion_eq1_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let unit = |v: Vec<f64>| -> Vec<f64> {
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    };
    for trial in 0..100 {
        let dim = 3 + trial % 6;
        let k = 1 + trial % 10;
        let rq = unit((0..dim).map(|_| rng.gen::<f64>() - 0.5).collect());
        let rk = unit((0..dim).map(|_| rng.gen::<f64>() - 0.5).collect());
        let mut queue = RepresentationQueue::<f64>::new(k, dim);
        let mut rows = Vec::new();
        for _ in 0..k {
            let row = unit((0..dim).map(|_| rng.gen::<f64>() - 0.5).collect());
            queue.push(row.clone()).unwrap();
            rows.push(row);
        }
        let tau = 0.1 + 0.5 * rng.gen::<f64>();
        let got = info_nce(
            &Tensor::from_vec(&[1, dim], rq.clone()).unwrap(),
            &Tensor::from_vec(&[1, dim], rk.clone()).unwrap(),
            &queue,
            tau,
        )
        .unwrap()
        .item();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let pos = (dot(&rq, &rk) / tau).exp();
        let negs: f64 = rows.iter().map(|q| (dot(&rq, q) / tau).exp()).sum();
        let want = -(pos / (pos + negs)).ln();
        assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
    }

    // Uniform logits: every stored representation equals the positive key.
    let dim = 4;
    let row = unit(vec![0.3, -0.5, 0.2, 0.7]);
    for k in [1usize, 31, 255] {
        let mut queue = RepresentationQueue::<f64>::new(k, dim);
        for _ in 0..k {
            queue.push(row.clone()).unwrap();
        }
        let r = Tensor::from_vec(&[1, dim], row.clone()).unwrap();
        let loss = info_nce(&r, &r, &queue, 0.2).unwrap().item();
        assert_eq!(loss, ((k + 1) as f64).ln(), "K={k} must be exact");
    }
    println!("acceptance: eq1-infonce-oracle PASS");
}

/// With agreeing teachers the hard-label distillation loss and its
/// gradients equal plain cross-entropy to 1e-9.
#[test]
fn criterion_eq2_reduction() {
    use mfvit_fusion::{hard_distill_loss, DistillBatch};
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..10 {
        let b = 2 + trial % 5;
        let student = Tensor::<f64>::param(
            &[b, 3],
            (0..b * 3).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..b)
            .map(|_| (rng.gen::<f64>() * 3.0) as usize % 3)
            .collect();
        let mut tdata = vec![0.0; b * 3];
        for (i, &l) in labels.iter().enumerate() {
            tdata[i * 3 + l] = 7.0 + rng.gen::<f64>();
        }
        let teachers = Tensor::from_vec(&[b, 3], tdata).unwrap();
        let batch = DistillBatch::new(
            student.clone(),
            teachers.clone(),
            teachers.clone(),
            labels.clone(),
        )
        .unwrap();
        let distill = hard_distill_loss(&batch).unwrap();
        let plain = student.cross_entropy(&labels).unwrap();
        assert!((distill.item() - plain.item()).abs() < 1e-9);

        distill.backward().unwrap();
        let g1 = student.grad().unwrap();
        student.zero_grad();
        plain.backward().unwrap();
        let g2 = student.grad().unwrap();
        student.zero_grad();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-9, "gradient mismatch {a} vs {b}");
        }
    }
    println!("acceptance: eq2-distillation-reduction PASS");
}

/// Cross-attention block structure: bit-exact patch passthrough, identity
/// under zero projections, and both token geometries.
#[test]
fn criterion_eq3_5_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (tokens, dim) in [(197usize, 384usize), (17, 48)] {
        let block = CaBlock::<f64>::new(dim, 3, &mut rng).unwrap();
        let a = TokenMatrix::new(
            Tensor::from_vec(&[tokens, dim], pseudo_random(tokens * dim, 40)).unwrap(),
        )
        .unwrap();
        let b = TokenMatrix::new(
            Tensor::from_vec(&[tokens, dim], pseudo_random(tokens * dim, 41)).unwrap(),
        )
        .unwrap();
        let (za, zb) = ca_block_forward(&a, &b, &block).unwrap();
        assert_eq!(za.tensor().shape(), &[tokens, dim]);
        assert_eq!(zb.tensor().shape(), &[tokens, dim]);

        let in_a = a.tensor().value_vec();
        let out_a = za.tensor().value_vec();
        assert_eq!(
            in_a[dim..].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            out_a[dim..].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "patch passthrough must be bit-exact at {tokens}×{dim}"
        );

        block.cxr.zero();
        block.enh.zero();
        let (za, zb) = ca_block_forward(&a, &b, &block).unwrap();
        assert_eq!(a.tensor().value_vec(), za.tensor().value_vec());
        assert_eq!(b.tensor().value_vec(), zb.tensor().value_vec());
    }
    println!("acceptance: eq3-5-ca-structure PASS");
}

/// Momentum schedule endpoints and the identity update.
#[test]
fn criterion_momentum_schedule() {
    let cfg = MocoConfig::toy();
    assert_eq!(momentum_at(0.0, &cfg), 0.9);
    assert_eq!(momentum_at(1.0, &cfg), 0.999);
    assert!((momentum_at(0.5, &cfg) - 0.9495).abs() < 1e-12);

    let q = vec![(
        "p".to_string(),
        Tensor::<f64>::param(&[4], vec![0.3, -0.2, 0.9, 0.1]).unwrap(),
    )];
    let k = vec![(
        "p".to_string(),
        Tensor::<f64>::param(&[4], vec![0.5, 0.25, -0.75, 0.125]).unwrap(),
    )];
    let before: Vec<u64> = k[0].1.value_vec().iter().map(|v| v.to_bits()).collect();
    momentum_update(&q, &k, 1.0).unwrap();
    let after: Vec<u64> = k[0].1.value_vec().iter().map(|v| v.to_bits()).collect();
    assert_eq!(before, after, "m=1 must be the identity");
    println!("acceptance: momentum-schedule PASS");
}

fn accuracy_cell(report: &SummaryReport, method: &str, fraction: f64, split: &str) -> f64 {
    report
        .cell(method, fraction, split)
        .unwrap_or_else(|| panic!("missing summary cell {method}/{fraction}/{split}"))
        .mean_accuracy
}

/// End-to-end toy experiment, seed-fixed and single-threaded:
/// (a) pretraining strictly reduces mean InfoNCE;
/// (b) MoCo LP beats random-frozen LP by ≥ 10 points (mean of 5);
/// (c) fused CA accuracy ≥ max(single branches) − 1 point;
/// (d) paired t-test on the repeats matches the independent oracle.
#[test]
fn criterion_e2e_toy_experiment() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::toy(dir.path().join("run"));
    run_experiment(&cfg).unwrap();

    // (a) InfoNCE decreased for both branch pretrains.
    for feat in ["cxr", "enh"] {
        let log_path = cfg
            .out_dir
            .join(format!("checkpoints/moco-{feat}.ckpt.log.csv"));
        let log = std::fs::read_to_string(&log_path).unwrap();
        let losses: Vec<f64> = log
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(
            losses.last().unwrap() < losses.first().unwrap(),
            "({feat}) InfoNCE did not decrease: {losses:?}"
        );
    }
    println!("acceptance: e2e (a) pretraining reduces InfoNCE PASS");

    let report: SummaryReport =
        serde_json::from_str(&std::fs::read_to_string(cfg.out_dir.join("summary.json")).unwrap())
            .unwrap();

    // (b) pretrained LP vs random frozen LP, mean of 5 repeats.
    let lp = accuracy_cell(&report, "cxr-lp", 1.0, "test1");
    let lp_random = accuracy_cell(&report, "cxr-lp-random", 1.0, "test1");
    assert!(
        lp - lp_random >= 0.10,
        "(b) MoCo LP {lp:.3} vs random LP {lp_random:.3}: gap below 10 points"
    );
    println!("acceptance: e2e (b) LP gap PASS (moco {lp:.3} vs random {lp_random:.3})");

    // (c) fusion tracks the best single branch within 1 point.
    let ca = accuracy_cell(&report, "mf-ca", 1.0, "test1");
    let cxr_ft = accuracy_cell(&report, "cxr-ft", 1.0, "test1");
    let enh_ft = accuracy_cell(&report, "enh-ft", 1.0, "test1");
    assert!(
        ca >= cxr_ft.max(enh_ft) - 0.01,
        "(c) mf-ca {ca:.3} below max(cxr-ft {cxr_ft:.3}, enh-ft {enh_ft:.3}) − 1pt"
    );
    println!(
        "acceptance: e2e (c) fusion accuracy PASS (ca {ca:.3}, cxr-ft {cxr_ft:.3}, enh-ft {enh_ft:.3})"
    );

    // (d) every reported t-test on the 5 repeats matches statrs.
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let mut checked = 0;
    for t in &report.ttests {
        let a = &report
            .cell(&t.method_a, t.fraction, &t.split)
            .unwrap()
            .accuracies;
        let b = &report
            .cell(&t.method_b, t.fraction, &t.split)
            .unwrap()
            .accuracies;
        let ours = paired_t_test(a, b).unwrap();
        assert_eq!(
            ours, t.result,
            "reported t-test differs from recomputation for {}/{} at {}/{} (a={a:?}, b={b:?})",
            t.method_a, t.method_b, t.fraction, t.split
        );
        if !ours.degenerate {
            let dist = StudentsT::new(0.0, 1.0, (a.len() - 1) as f64).unwrap();
            let want_p = 2.0 * dist.sf(ours.t.abs());
            assert!(
                (ours.p - want_p).abs() < 1e-6,
                "(d) p mismatch: ours {} statrs {want_p}",
                ours.p
            );
            checked += 1;
        }
    }
    assert!(checked > 0, "no non-degenerate t-tests to check");
    println!("acceptance: e2e (d) t-test oracle PASS ({checked} non-degenerate pairs)");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "e2e toy experiment took {elapsed:.0}s");
    println!("acceptance: e2e-toy-experiment PASS ({elapsed:.0}s)");
}

/// Rerunning a stage with identical config and seeds yields bit-identical
/// checkpoints and metrics.
#[test]
fn criterion_reproducibility() {
    let base = tempfile::tempdir().unwrap();
    let mk = |dir: std::path::PathBuf| {
        let mut cfg = ExperimentConfig::toy(dir);
        cfg.dataset.synthetic.as_mut().unwrap().n_per_class = 8;
        cfg.dataset.synthetic.as_mut().unwrap().test2_per_class = 0;
        cfg.pretrain.epochs = 2;
        cfg.pretrain.warmup_epochs = 1;
        cfg.pretrain.batch_size = 4;
        cfg.pretrain.queue_size = 16;
        cfg.finetune.train.epochs = 2;
        cfg.finetune.label_fractions = vec![1.0];
        cfg.finetune.repeats = 1;
        cfg.finetune.methods = vec!["cxr-ft".into(), "enh-ft".into()];
        cfg.fusion.train.epochs = 2;
        cfg.fusion.methods = vec!["mf-ca".into()];
        cfg.eval.splits = vec!["test1".into()];
        cfg
    };
    let a = mk(base.path().join("a"));
    let b = mk(base.path().join("b"));
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();

    for rel in [
        "checkpoints/moco-cxr.ckpt",
        "checkpoints/cxr-ft.f1.r0.ckpt",
        "checkpoints/mf-ca.f1.r0.ckpt",
        "metrics/mf-ca.f1.r0.test1.json",
        "summary.json",
        "summary.csv",
    ] {
        let x = std::fs::read(a.out_dir.join(rel)).unwrap();
        let y = std::fs::read(b.out_dir.join(rel)).unwrap();
        assert_eq!(x, y, "{rel} differs between identical reruns");
    }
    println!("acceptance: reproducibility PASS");
}

/// Checkpoint round-trip restores every tensor bit-exactly; corrupted
/// magic bytes are rejected with a format error.
#[test]
fn criterion_serialization() {
    let mut store = TensorStore::new();
    let w32 = Tensor::<f32>::from_vec(
        &[3, 5],
        pseudo_random(15, 50).iter().map(|&v| v as f32).collect(),
    )
    .unwrap();
    let w64 = Tensor::<f64>::from_vec(&[2, 2, 2], pseudo_random(8, 51)).unwrap();
    store.insert("encoder.block0.attn.wq", &w32);
    store.insert("head.b", &w64);

    let bytes = store.to_bytes();
    let back = TensorStore::from_bytes(&bytes).unwrap();
    let (dims, data) = back.get::<f32>("encoder.block0.attn.wq").unwrap();
    assert_eq!(dims, vec![3, 5]);
    assert_eq!(
        data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        w32.value_vec()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    );
    let (dims, data) = back.get::<f64>("head.b").unwrap();
    assert_eq!(dims, vec![2, 2, 2]);
    assert_eq!(
        data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        w64.value_vec()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    );

    let mut corrupted = bytes.clone();
    corrupted[1] = b'X';
    match TensorStore::from_bytes(&corrupted) {
        Err(CheckpointError::Format(msg)) => assert!(msg.contains("magic")),
        other => panic!("corrupted magic must be a format error, got {other:?}"),
    }
    println!("acceptance: serialization PASS");
}

/// The finite-difference helper itself is sane (guards the oracle the
/// whole suite leans on).
#[test]
fn criterion_oracle_self_check() {
    // d/dx of x² at 3 is 6; the helper must say so.
    let grads = finite_diff(&|xs: &[Vec<f64>]| xs[0][0] * xs[0][0], &[vec![3.0]], 1e-5);
    assert!((grads[0][0] - 6.0).abs() < 1e-8);
    println!("acceptance: oracle-self-check PASS");
}
