use audiotag::arch::{
    build_cnn, build_wavegram_logmel_cnn, count_multiadds, count_params, ArchSpec, CnnDepth, CnnOptions, Complexity,
    Model, ModelInput, OutputKind, WavegramConfig,
};
use audiotag::autodiff::Tensor;
use audiotag::data::{toy_dataset, ToyConfig};
use audiotag::train::{Checkpoint, TrainConfig, Trainer};
use audiotag::transfer::{apply_strategy, TransferKind, TransferStrategy};
use audiotag::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cnn(depth: CnnDepth, width: f64, k: usize) -> ArchSpec {
    build_cnn(
        depth,
        &CnnOptions {
            n_classes: k,
            width_scale: width,
            ..CnnOptions::default()
        },
    )
    .unwrap()
}

/// Closed-form parameter count: bias-free convs, two scalars per BN channel,
/// the 64-bin input BN, then `fc1` and the output layer with biases.
fn param_oracle(convs: &[(usize, usize, usize)], emb: usize, k: usize) -> u64 {
    let mut total = 2 * 64;
    let mut last = 0;
    for &(kernel, cin, cout) in convs {
        total += kernel * kernel * cin * cout + 2 * cout;
        last = cout;
    }
    total += last * emb + emb + emb * k + k;
    total as u64
}

fn doubled(channels: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut cin = 1;
    let mut out = Vec::new();
    for &c in channels {
        out.push((3, cin, c));
        out.push((3, c, c));
        cin = c;
    }
    out
}

#[test]
fn parameter_counts_match_closed_form_and_table() {
    let cnn14 = param_oracle(&doubled(&[64, 128, 256, 512, 1024, 2048]), 2048, 527);
    let cnn10 = param_oracle(&doubled(&[64, 128, 256, 512]), 512, 527);
    let cnn6 = param_oracle(&[(5, 1, 64), (5, 64, 128), (5, 128, 256), (5, 256, 512)], 512, 527);
    assert_eq!(count_params(&cnn(CnnDepth::Cnn14, 1.0, 527)).unwrap(), cnn14);
    assert_eq!(count_params(&cnn(CnnDepth::Cnn10, 1.0, 527)).unwrap(), cnn10);
    assert_eq!(count_params(&cnn(CnnDepth::Cnn6, 1.0, 527)).unwrap(), cnn6);
    for (got, table) in [(cnn14, 80_753_615u64), (cnn10, 5_219_279), (cnn6, 4_837_455)] {
        assert!((got as f64 - table as f64).abs() / table as f64 <= 0.02, "{got} vs {table}");
    }
}

#[test]
fn multiadds_follow_the_counting_convention() {
    let spec = cnn(CnnDepth::Cnn14, 1.0, 527);
    let c = Complexity::of(&spec, 320_000).unwrap();
    assert_eq!(c.multiadds, count_multiadds(&spec, 320_000).unwrap());
    assert_eq!(c.multiadds, c.stft_ops + c.conv_ops + c.linear_ops + c.norm_ops);
    // STFT as a 1024-tap conv producing 2 × 513 outputs per frame
    assert_eq!(c.stft_ops, 2 * 1001 * 513 * 1024 * 2);
    assert!((c.multiadds as f64 - 42.220e9).abs() / 42.220e9 < 0.05, "{}", c.multiadds);
    for (depth, table) in [(CnnDepth::Cnn6, 21.986e9), (CnnDepth::Cnn10, 28.166e9)] {
        let m = count_multiadds(&cnn(depth, 1.0, 527), 320_000).unwrap() as f64;
        assert!((m - table).abs() / table < 0.05, "{depth:?}: {m}");
    }
}

#[test]
fn half_width_keeps_about_a_quarter_of_the_parameters() {
    let full = count_params(&cnn(CnnDepth::Cnn14, 1.0, 527)).unwrap() as f64;
    let half = count_params(&cnn(CnnDepth::Cnn14, 0.5, 527)).unwrap() as f64;
    assert!((0.24..0.27).contains(&(half / full)), "{}", half / full);
}

#[test]
fn wavegram_and_logmel_fuse_to_three_channels() {
    let spec = build_wavegram_logmel_cnn(&WavegramConfig::default(), &cnn(CnnDepth::Cnn14, 1.0, 527)).unwrap();
    let p = spec.propagate(320_000).unwrap();
    assert_eq!(32_000 / 5 / 4 / 4 / 4, 100);
    assert_eq!(p.wavegram_output.as_deref(), Some(&[2usize, 1000, 64][..]));
    assert_eq!(p.logmel_input, Some([1001, 64]));
    assert_eq!(p.fused_input, vec![3, 1000, 64]);
}

#[test]
fn small_wavegram_logmel_model_runs_a_batch() {
    let base = cnn(CnnDepth::Cnn14, 0.125, 4);
    let spec = build_wavegram_logmel_cnn(&WavegramConfig::scaled(0.125), &base).unwrap();
    let model: Model<f32> = Model::new(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let x: Vec<f32> = (0..2 * 32_000).map(|i| ((i as f32) * 0.07).sin() * 0.2).collect();
    let out = model
        .predict(&ModelInput::from_waveform(Tensor::new(vec![2, 32_000], x).unwrap()), Execution::Sequential)
        .unwrap();
    assert_eq!(out.clipwise.shape(), &[2, 4]);
    assert!(out.clipwise.data().iter().all(|p| (0.0..=1.0).contains(p)));
}

fn pretrained(seed: u64) -> (Checkpoint, audiotag::data::ClipSet) {
    let set = toy_dataset(&ToyConfig {
        n_clips: 8,
        n_classes: 4,
        duration_secs: 0.5,
        seed,
        ..Default::default()
    })
    .unwrap();
    let model = Model::new(cnn(CnnDepth::Cnn6, 0.0625, 4), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (Checkpoint::from_model(&model, 0), set)
}

fn short_run(model: Model<f32>, set: &audiotag::data::ClipSet, steps: u64) -> Checkpoint {
    let mut t = Trainer::new(model);
    let cfg = TrainConfig {
        batch_size: 4,
        max_iterations: steps,
        eval_every: 0,
        learning_rate: 1e-2,
        execution: Execution::Sequential,
        ..TrainConfig::default()
    };
    t.train(set, None, &cfg).unwrap();
    t.checkpoint()
}

fn backbone_bytes(c: &Checkpoint) -> Vec<(String, Vec<u32>)> {
    c.model_tensors()
        .filter(|t| !t.name.starts_with("head."))
        .map(|t| (t.name.clone(), t.tensor.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn frozen_strategies_leave_the_backbone_bit_identical() {
    let (src, set) = pretrained(1);
    for kind in [TransferKind::FreezeL1, TransferKind::FreezeL3] {
        let strategy = TransferStrategy {
            head_hidden_dim: 16,
            ..TransferStrategy::new(kind, 3, OutputKind::Sigmoid)
        };
        let model = apply_strategy(Some(&src), &src.arch, &strategy, 5).unwrap();
        let mut set3 = set.clone();
        for t in &mut set3.targets {
            t.truncate(3);
        }
        let after = short_run(model, &set3, 4);
        assert_eq!(backbone_bytes(&after), backbone_bytes(&src), "{kind:?}");
    }
}

#[test]
fn freeze_l3_trains_exactly_the_three_layer_head() {
    let (src, _) = pretrained(2);
    let (e, h, k) = (src.arch.embedding_dim, 24, 5);
    let strategy = TransferStrategy {
        head_hidden_dim: h,
        ..TransferStrategy::new(TransferKind::FreezeL3, k, OutputKind::Softmax)
    };
    let model = apply_strategy(Some(&src), &src.arch, &strategy, 0).unwrap();
    let trainable: usize = model.trainable_indices().iter().map(|&i| model.params.entry(i).tensor.numel()).sum();
    assert_eq!(trainable, e * h + h + h * h + h + h * k + k);
}

#[test]
fn fine_tune_moves_the_backbone() {
    let (src, set) = pretrained(3);
    let strategy = TransferStrategy::new(TransferKind::FineTune, 4, OutputKind::Sigmoid);
    let model = apply_strategy(Some(&src), &src.arch, &strategy, 5).unwrap();
    assert!(model.trainable_indices().iter().any(|&i| !model.params.entry(i).name.starts_with("head.")));
    let after = short_run(model, &set, 2);
    assert_ne!(backbone_bytes(&after), backbone_bytes(&src));
}

#[test]
fn replacing_the_head_keeps_the_embedding() {
    let (src, set) = pretrained(4);
    let model = src.to_model().unwrap();
    let (w, _) = set.batch(&[0, 1, 2]);
    let input = ModelInput::from_waveform(w);
    let before = model.predict(&input, Execution::Sequential).unwrap();
    let strategy = TransferStrategy::new(TransferKind::FreezeL1, 7, OutputKind::Softmax);
    let swapped = apply_strategy(Some(&src), &src.arch, &strategy, 9).unwrap();
    let after = swapped.predict(&input, Execution::Sequential).unwrap();
    assert_eq!(after.embedding, before.embedding);
    assert_eq!(after.clipwise.shape(), &[3, 7]);
    for row in after.clipwise.data().chunks(7) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}
