use mfvit_backbone::{
    apply_freeze_policy, train_classifier, Classifier, FinetuneConfig, Protocol, TokenMatrix,
    VitConfig, VitEncoder,
};
use mfvit_phase::Image2D;
use mfvit_tensor::nn::Mode;
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

#[test]
fn full_preset_geometry_is_197_by_384() {
    let cfg = VitConfig::vit_small();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = VitEncoder::<f32>::new(&cfg, &mut rng).unwrap();
    let tokens = enc.patchify_embed(&random_image(224, 1)).unwrap();
    assert_eq!(tokens.tensor().shape(), &[197, 384]);
    let out = enc.encoder_forward(&tokens, Mode::Eval).unwrap();
    assert_eq!(out.tensor().shape(), &[197, 384]);
}

#[test]
fn toy_preset_geometry_is_17_by_48() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = VitEncoder::<f64>::new(&cfg, &mut rng).unwrap();
    let tokens = enc.patchify_embed(&random_image(32, 2)).unwrap();
    assert_eq!(tokens.tensor().shape(), &[17, 48]);
    let out = enc.encoder_forward(&tokens, Mode::Eval).unwrap();
    assert_eq!(out.tensor().shape(), &[17, 48]);
}

#[test]
fn patchify_is_deterministic() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let enc = VitEncoder::<f64>::new(&cfg, &mut rng).unwrap();
    let img = random_image(32, 4);
    let a = enc.patchify_embed(&img).unwrap();
    let b = enc.patchify_embed(&img).unwrap();
    assert_eq!(a.tensor().value_vec(), b.tensor().value_vec());
}

#[test]
fn patchify_rejects_wrong_size() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let enc = VitEncoder::<f64>::new(&cfg, &mut rng).unwrap();
    assert!(enc.patchify_embed(&random_image(64, 4)).is_err());
}

#[test]
fn patch_permutation_equivariance_without_positions() {
    // With the position table disabled, permuting patch rows permutes the
    // output patch rows identically and leaves CLS unchanged.
    let mut cfg = VitConfig::toy();
    cfg.pos_embed = false;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let enc = VitEncoder::<f64>::new(&cfg, &mut rng).unwrap();
    let tokens = enc.patchify_embed(&random_image(32, 6)).unwrap();

    let n = cfg.num_tokens();
    let dim = cfg.embed_dim;
    // permutation of patch rows 1..n (rotate by 5)
    let perm: Vec<usize> = (0..n - 1).map(|i| (i + 5) % (n - 1)).collect();

    let base = enc.encoder_forward(&tokens, Mode::Eval).unwrap();
    let v = tokens.tensor().value_vec();
    let mut permuted = vec![0.0f64; n * dim];
    permuted[0..dim].copy_from_slice(&v[0..dim]);
    for (dst, &src) in perm.iter().enumerate() {
        permuted[(dst + 1) * dim..(dst + 2) * dim]
            .copy_from_slice(&v[(src + 1) * dim..(src + 2) * dim]);
    }
    let permuted_tokens = TokenMatrix::new(Tensor::from_vec(&[n, dim], permuted).unwrap()).unwrap();
    let out_perm = enc.encoder_forward(&permuted_tokens, Mode::Eval).unwrap();

    let a = base.tensor().value_vec();
    let b = out_perm.tensor().value_vec();
    for j in 0..dim {
        assert!(
            (a[j] - b[j]).abs() < 1e-12,
            "CLS output changed under patch permutation"
        );
    }
    for (dst, &src) in perm.iter().enumerate() {
        for j in 0..dim {
            let want = a[(src + 1) * dim + j];
            let got = b[(dst + 1) * dim + j];
            assert!(
                (want - got).abs() < 1e-12,
                "patch row {src} not mapped to {dst}"
            );
        }
    }
}

#[test]
fn attention_rows_are_stochastic() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let enc = VitEncoder::<f64>::new(&cfg, &mut rng).unwrap();
    let tokens = enc.patchify_embed(&random_image(32, 8)).unwrap();
    let (_, attns) = enc.blocks[0]
        .attn
        .forward_with_attn(tokens.tensor())
        .unwrap();
    assert_eq!(attns.len(), cfg.num_heads);
    for attn in &attns {
        assert_eq!(attn.shape(), &[17, 17]);
        for row in attn.value_vec().chunks(17) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "attention row sums to {sum}");
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}

/// In-place finite-difference oracle over a model's own parameters: bump a
/// coordinate, re-run the forward loss, compare against the recorded
/// analytic gradient.
fn model_gradcheck_sampled(
    named: &[(String, Tensor<f64>)],
    loss_fn: impl Fn() -> f64,
    analytic: &[Vec<f64>],
    h: f64,
    coords_per_param: usize,
    seed: u64,
) -> f64 {
    let mut state = seed.wrapping_mul(0x2545_f491_4f6c_dd1d) | 1;
    let mut next = |n: usize| -> usize {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % n as u64) as usize
    };
    let mut worst = 0.0f64;
    for (pi, (_, t)) in named.iter().enumerate() {
        let len = t.numel();
        for _ in 0..coords_per_param.min(len) {
            let j = next(len);
            let orig = t.value_vec()[j];
            t.value_mut()[j] = orig + h;
            let plus = loss_fn();
            t.value_mut()[j] = orig - h;
            let minus = loss_fn();
            t.value_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][j];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn depth1_toy_forward_backward_matches_finite_differences() {
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
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = Classifier::<f64>::new(&cfg, &mut rng).unwrap();
    let img = random_image(16, 10);
    let named = model.named_params();

    let loss_fn = || {
        let logits = model.forward_images(&[&img], Mode::Train).unwrap();
        logits.cross_entropy(&[1]).unwrap().item()
    };
    let loss = model
        .forward_images(&[&img], Mode::Train)
        .unwrap()
        .cross_entropy(&[1])
        .unwrap();
    loss.backward().unwrap();
    let analytic: Vec<Vec<f64>> = named
        .iter()
        .map(|(_, t)| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    for (_, t) in &named {
        t.zero_grad();
    }

    let err = model_gradcheck_sampled(&named, loss_fn, &analytic, 1e-5, 4, 11);
    assert!(err < 1e-4, "toy ViT gradcheck rel err {err}");
}

#[test]
fn freeze_policy_lp_trains_only_the_head() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = Classifier::<f64>::new(&cfg, &mut rng).unwrap();
    let trainable = apply_freeze_policy(&model, Protocol::LinearProbe);
    let count: usize = trainable.iter().map(|(_, t)| t.numel()).sum();
    assert_eq!(count, 48 * 3 + 3);
    assert!(trainable.iter().all(|(n, _)| n.starts_with("head")));

    let all = apply_freeze_policy(&model, Protocol::FineTune);
    let full_count: usize = all.iter().map(|(_, t)| t.numel()).sum();
    assert!(full_count > count);
    assert_eq!(all.len(), model.named_params().len());
}

#[test]
fn lp_leaves_encoder_bits_untouched() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut model = Classifier::<f64>::new(&cfg, &mut rng).unwrap();
    let images: Vec<Image2D> = (0..8).map(|i| random_image(32, 100 + i)).collect();
    let labels = vec![0usize, 1, 2, 0, 1, 2, 0, 1];
    let before: Vec<Vec<u64>> = model
        .encoder
        .named_params()
        .iter()
        .map(|(_, t)| t.value_vec().iter().map(|v| v.to_bits()).collect())
        .collect();
    let cfg_train = FinetuneConfig {
        epochs: 5,
        batch_size: 4,
        base_lr: 0.05,
        augment: None,
        ..FinetuneConfig::default()
    };
    train_classifier(
        &mut model,
        &images,
        &labels,
        Protocol::LinearProbe,
        &cfg_train,
        7,
    )
    .unwrap();
    let after: Vec<Vec<u64>> = model
        .encoder
        .named_params()
        .iter()
        .map(|(_, t)| t.value_vec().iter().map(|v| v.to_bits()).collect())
        .collect();
    assert_eq!(before, after, "LP must freeze the encoder bit-exactly");
}

#[test]
fn finetune_reduces_loss_and_is_deterministic() {
    let cfg = VitConfig::toy();
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut model = Classifier::<f64>::new(&cfg, &mut rng).unwrap();
        let images: Vec<Image2D> = (0..12).map(|i| random_image(32, 200 + i)).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let cfg_train = FinetuneConfig {
            epochs: 8,
            batch_size: 6,
            base_lr: 0.05,
            augment: None,
            ..FinetuneConfig::default()
        };
        let losses = train_classifier(
            &mut model,
            &images,
            &labels,
            Protocol::FineTune,
            &cfg_train,
            3,
        )
        .unwrap();
        (losses, model.to_store().content_hash())
    };
    let (losses_a, hash_a) = run();
    let (losses_b, hash_b) = run();
    assert_eq!(hash_a, hash_b, "training must be bit-deterministic");
    assert_eq!(losses_a, losses_b);
    assert!(
        losses_a.last().unwrap() < losses_a.first().unwrap(),
        "loss did not decrease: {losses_a:?}"
    );
}

#[test]
fn checkpoint_roundtrip_via_store() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let model = Classifier::<f32>::new(&cfg, &mut rng).unwrap();
    let store = model.to_store();
    let mut rng2 = ChaCha8Rng::seed_from_u64(16);
    let restored = Classifier::<f32>::new(&cfg, &mut rng2).unwrap();
    restored.load_store(&store).unwrap();
    assert_eq!(store.content_hash(), restored.to_store().content_hash());
}

#[test]
fn non_finite_activations_name_the_offending_block() {
    let cfg = VitConfig::toy();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let enc = VitEncoder::<f64>::new(&cfg, &mut rng).unwrap();
    // Poison a second-block weight: block 0 stays clean, block 1 blows up.
    enc.blocks[1].attn.q.weight.value_mut()[0] = f64::NAN;
    let tokens = enc.patchify_embed(&random_image(32, 18)).unwrap();
    let msg = match enc.encoder_forward(&tokens, Mode::Eval) {
        Err(err) => err.to_string(),
        Ok(_) => panic!("poisoned forward must fail"),
    };
    assert!(msg.contains("encoder.block1"), "error was: {msg}");
    assert!(!msg.contains("encoder.block0"));
}
