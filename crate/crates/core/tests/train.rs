use proptest::prelude::*;
use ssan::charset::Charset;
use ssan::checkpoint;
use ssan::data::{generate_dataset, render_word, sample_rng, GenSpec, GlyphFont, LabeledSample, ScaleBucket};
use ssan::decoder::{DecodeStrategy, Decoded, GreedyStrategy, Lexicon, LexiconStrategy};
use ssan::model::Encoded;
use ssan::params::ParamStore;
use ssan::train::*;
use ssan::{ModelConfig, Recognizer};
use ssan_tensor::Tensor;

fn micro(seed: u64) -> Recognizer<f32> {
    let config = ModelConfig { encoder: "safe:48x32,24x32".into(), width_div: 16, charset: Charset::digits() };
    Recognizer::new(config, seed).unwrap()
}

fn digits(count: usize, seed: u64) -> Vec<LabeledSample> {
    let spec = GenSpec { charset: Charset::digits(), count, seed, ..GenSpec::default() };
    generate_dataset(&spec, &GlyphFont::builtin()).unwrap()
}

/// The recurrences in f64 for one coordinate: returns (x, E[g²], E[Δ²], Δ).
fn adadelta_oracle(x: f64, g: f64, gs: f64, us: f64, rho: f64, eps: f64) -> (f64, f64, f64, f64) {
    let gs = rho * gs + (1.0 - rho) * g * g;
    let delta = -((us + eps).sqrt() / (gs + eps).sqrt()) * g;
    let us = rho * us + (1.0 - rho) * delta * delta;
    (x + delta, gs, us, delta)
}

#[test]
fn zero_gradient_only_decays_the_state() {
    let (mut x, mut gs, mut us) = (1.5f64, 0.4, 0.2);
    let delta = adadelta_update(&mut x, 0.0, &mut gs, &mut us, 0.9, 1e-6);
    assert_eq!(delta, 0.0);
    assert_eq!(x, 1.5);
    assert!((gs - 0.36).abs() < 1e-15 && (us - 0.18).abs() < 1e-15);
}

#[test]
fn first_step_from_zero_state() {
    for g in [1e-3f64, 0.5, -2.0, 40.0] {
        let (mut x, mut gs, mut us) = (0.0, 0.0, 0.0);
        let (rho, eps) = (0.9, 1e-6);
        let delta = adadelta_update(&mut x, g, &mut gs, &mut us, rho, eps);
        let expected = -eps.sqrt() * g / ((1.0 - rho) * g * g + eps).sqrt();
        assert!((delta - expected).abs() <= 1e-15 * expected.abs().max(1e-3));
        assert!(gs >= 0.0 && us >= 0.0);
    }
}

#[test]
fn optimizer_rejects_mismatched_gradient() {
    let mut store = ParamStore::<f64>::new();
    store.insert_param("w", Tensor::zeros(vec![2, 2]));
    let mut opt = Adadelta::default();
    let g = Tensor::zeros(vec![4]);
    assert!(opt.step(&mut store, [("w", &g)]).is_err());
    let missing = Tensor::zeros(vec![2, 2]);
    assert!(opt.step(&mut store, [("v", &missing)]).is_err());
}

#[test]
fn quadratic_descent_matches_scalar_simulation() {
    let curv = [3.0, 0.5];
    let mut store = ParamStore::<f64>::new();
    store.insert_param("x", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
    let mut opt = Adadelta::new(0.9, 1e-6);
    let mut sim = [(1.0, 0.0, 0.0), (-2.0, 0.0, 0.0)];
    let objective = |x: &[f64]| curv[0] * x[0] * x[0] + curv[1] * x[1] * x[1];
    let mut values = vec![objective(store.get("x").unwrap().data())];
    for _ in 0..100 {
        let x = store.get("x").unwrap().data().to_vec();
        let grad = Tensor::new(vec![2], vec![2.0 * curv[0] * x[0], 2.0 * curv[1] * x[1]]).unwrap();
        opt.step(&mut store, [("x", &grad)]).unwrap();
        for (i, s) in sim.iter_mut().enumerate() {
            let (x1, gs, us, _) = adadelta_oracle(s.0, 2.0 * curv[i] * s.0, s.1, s.2, 0.9, 1e-6);
            *s = (x1, gs, us);
        }
        let now = store.get("x").unwrap().data();
        for (i, s) in sim.iter().enumerate() {
            assert!((now[i] - s.0).abs() <= 1e-12 * s.0.abs().max(1.0));
        }
        let acc = opt.state("x").unwrap();
        assert!(acc.grad_sq.iter().chain(&acc.update_sq).all(|&v| v >= 0.0));
        values.push(objective(now));
    }
    for t in 5..values.len() - 1 {
        assert!(values[t + 1] < values[t], "objective rose at step {}", t + 1);
    }
}

proptest! {
    #[test]
    fn update_magnitude_ignores_gradient_scale(
        grads in proptest::collection::vec(0.01f64..10.0, 1..20),
        signs in proptest::collection::vec(any::<bool>(), 20),
        scale in 1e-3f64..1e3,
    ) {
        let (rho, eps) = (0.9, 1e-12);
        let (mut x, mut gs, mut us) = (0.0, 0.0, 0.0);
        let (mut y, mut hs, mut vs) = (0.0, 0.0, 0.0);
        for (g, s) in grads.iter().zip(&signs) {
            let g = if *s { *g } else { -*g };
            let a = adadelta_update(&mut x, g, &mut gs, &mut us, rho, eps);
            let b = adadelta_update(&mut y, g * scale, &mut hs, &mut vs, rho, eps);
            prop_assert!((a.abs() - b.abs()).abs() <= 1e-3 * a.abs().max(b.abs()));
        }
    }
}

#[test]
fn single_sample_overfits() {
    let mut model = micro(1);
    let sample = render_word("7", &GlyphFont::builtin(), &GenSpec { charset: Charset::digits(), ..GenSpec::default() }, &mut sample_rng(2, 0)).unwrap();
    let config = TrainConfig { batch_size: 1, steps: 200, seed: 0, ..TrainConfig::default() };
    let report = train(&mut model, &[sample], &config, |_, _| {}).unwrap();
    let losses = &report.losses;
    assert_eq!(losses.len(), 200);
    assert!(losses[49] < losses[0], "no decrease over 50 steps: {} -> {}", losses[0], losses[49]);
    assert!(*losses.last().unwrap() < 0.01, "final loss {}", losses.last().unwrap());
    let mut best = f64::INFINITY;
    for (t, &l) in losses.iter().enumerate() {
        if t > 100 {
            assert!(l <= best * 1.1, "loss {} at step {} exceeds running minimum {}", l, t, best);
        }
        best = best.min(l);
    }
}

#[test]
fn training_is_deterministic_and_writes_checkpoints() {
    let samples = digits(40, 3);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut curves = Vec::new();
    for dir in &dirs {
        let mut model = micro(5);
        let config = TrainConfig { steps: 8, seed: 9, checkpoint_dir: Some(dir.path().to_path_buf()), ..TrainConfig::default() };
        let mut seen = Vec::new();
        let report = train(&mut model, &samples, &config, |t, l| seen.push((t, l))).unwrap();
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        assert_eq!(report.epoch_losses.len(), 3);
        assert_eq!(checkpoint::to_bytes(&model), std::fs::read(dir.path().join(LAST_CHECKPOINT)).unwrap());
        assert!(dir.path().join(BEST_CHECKPOINT).exists());
        curves.push(report.losses);
    }
    assert_eq!(curves[0], curves[1]);
    let files: Vec<Vec<u8>> = dirs.iter().map(|d| std::fs::read(d.path().join(LAST_CHECKPOINT)).unwrap()).collect();
    assert_eq!(files[0], files[1]);
}

#[test]
fn invalid_training_requests() {
    let mut model = micro(0);
    let samples = digits(4, 0);
    let zero_batch = TrainConfig { batch_size: 0, steps: 1, ..TrainConfig::default() };
    assert!(matches!(train(&mut model, &samples, &zero_batch, |_, _| {}), Err(ssan::Error::Input(_))));
    let config = TrainConfig { steps: 1, ..TrainConfig::default() };
    assert!(matches!(train(&mut model, &[], &config, |_, _| {}), Err(ssan::Error::Input(_))));
}

#[test]
fn non_finite_loss_names_the_step() {
    let mut model = micro(0);
    let samples = digits(8, 1);
    let set = TrainSet::new(&model, &samples).unwrap();
    let mut opt = Adadelta::default();
    train_step(&mut model, &mut opt, &set, &[0, 1], 0).unwrap();
    model.params_mut().get_mut("decoder.w_y").unwrap().data_mut()[0] = f32::NAN;
    match train_step(&mut model, &mut opt, &set, &[2, 3], 1) {
        Err(ssan::Error::Numerical { step, .. }) => assert_eq!(step, 1),
        other => panic!("expected a numerical error, got {:?}", other.map(|_| ())),
    }
}

/// Emits the ground truth of whichever sample produced the features.
struct Oracle {
    known: Vec<(Encoded<f32>, String)>,
}

impl DecodeStrategy for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn decode(&self, model: &Recognizer<f32>, encoded: &Encoded<f32>, _: usize) -> ssan::Result<Decoded<f32>> {
        let text = self.known.iter().find(|(e, _)| e == encoded).map(|(_, l)| l.clone()).unwrap();
        Ok(Decoded { indices: model.charset().encode(&text)?, text, log_prob: 0.0, truncated: false, alphas: vec![] })
    }
}

#[test]
fn rigged_perfect_decoder_scores_one() {
    let model = micro(2);
    let samples = digits(30, 4);
    let known = samples.iter().map(|s| (model.encode(&model.prepare(&s.image)).unwrap(), s.label.clone())).collect();
    let (report, predictions) = evaluate(&model, &samples, &Oracle { known }, 11, false).unwrap();
    assert_eq!(report.accuracy(), 1.0);
    assert_eq!(report.mean_normalized_edit, 0.0);
    assert!(predictions.iter().all(|p| p.correct() && p.edit == 0));
}

#[test]
fn report_accounting_identities() {
    let model = micro(3);
    let samples = digits(60, 5);
    let (report, predictions) = evaluate(&model, &samples, &GreedyStrategy, default_max_steps(&samples), true).unwrap();
    assert_eq!(report.overall.count, 60);
    let by_len_count: usize = report.by_length.values().map(|t| t.count).sum();
    let by_len_correct: usize = report.by_length.values().map(|t| t.correct).sum();
    let by_scale_count: usize = report.by_scale.values().map(|t| t.count).sum();
    assert_eq!((by_len_count, by_scale_count), (60, 60));
    assert_eq!(by_len_correct, report.overall.correct);
    let weighted: f64 = report.by_length.values().map(|t| t.accuracy() * t.count as f64).sum::<f64>() / 60.0;
    assert!((weighted - report.accuracy()).abs() < 1e-12);
    assert!((0.0..=1.0).contains(&report.accuracy()));
    assert!(report.by_scale.keys().all(|k| ScaleBucket::ALL.contains(k)));
    assert_eq!(predictions.len(), 60);
    let tsv = report.to_tsv("greedy");
    assert!(tsv.starts_with("greedy\toverall\tall\t60\t"));
    assert_eq!(REPORT_HEADER.split('\t').count(), tsv.lines().next().unwrap().split('\t').count());
    assert!(evaluate(&model, &[], &GreedyStrategy, 5, false).is_err());
}

#[test]
fn prediction_matching_is_case_insensitive() {
    let p = Prediction { label: "abc".into(), text: "ABC".into(), log_prob: 0.0, edit: 0 };
    assert!(p.correct());
    let q = Prediction { label: "abcd".into(), text: "ab".into(), log_prob: 0.0, edit: 2 };
    assert!(!q.correct());
    assert_eq!(q.normalized_edit(), 0.5);
}

#[test]
fn parallel_evaluation_matches_serial_and_lexicon_dominates() {
    let mut model = micro(6);
    let samples = digits(40, 7);
    let config = TrainConfig { steps: 60, seed: 1, ..TrainConfig::default() };
    train(&mut model, &samples, &config, |_, _| {}).unwrap();
    let steps = default_max_steps(&samples);
    let serial = evaluate(&model, &samples, &GreedyStrategy, steps, false).unwrap();
    let parallel = evaluate(&model, &samples, &GreedyStrategy, steps, true).unwrap();
    assert_eq!(serial, parallel);

    let lexicon = Lexicon::new(samples.iter().map(|s| s.label.clone()));
    let strategy = LexiconStrategy::new(lexicon.clone()).unwrap();
    let (constrained, preds) = evaluate(&model, &samples, &strategy, steps, false).unwrap();
    assert!(constrained.accuracy() >= serial.0.accuracy());
    assert!(preds.iter().all(|p| lexicon.contains(&p.text)));
}

#[test]
fn checkpoint_round_trip_and_layout() {
    let mut model = micro(8);
    let samples = digits(16, 2);
    train(&mut model, &samples, &TrainConfig { steps: 3, ..TrainConfig::default() }, |_, _| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/model.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    assert_eq!(loaded.config(), model.config());
    assert_eq!(loaded.params(), model.params());
    assert_eq!(checkpoint::to_bytes(&loaded), std::fs::read(&path).unwrap());
    let (a, _) = evaluate(&model, &samples, &GreedyStrategy, 11, false).unwrap();
    let (b, _) = evaluate(&loaded, &samples, &GreedyStrategy, 11, false).unwrap();
    assert_eq!(a, b);

    let bytes = checkpoint::to_bytes(&model);
    assert_eq!(&bytes[..5], b"SAFE1");
    let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    assert_eq!(count, model.params().len() + 3);
    let first_len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    assert_eq!(&bytes[13..13 + first_len], b"meta.encoder");
    let records = checkpoint::read_tensors(&bytes).unwrap();
    assert_eq!(records.len(), count);
    assert_eq!(records[3].0, model.params().iter().next().unwrap().0);

    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"SAFE2rest").unwrap();
    assert!(matches!(checkpoint::load(&bad), Err(ssan::Error::Format { .. })));
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(checkpoint::load(&bad), Err(ssan::Error::Format { .. })));
    assert!(matches!(checkpoint::load(&dir.path().join("missing.ckpt")), Err(ssan::Error::Io { .. })));
}

fn tiny_ablation(variants: Vec<String>) -> AblationConfig {
    let base = GenSpec { charset: Charset::digits(), ..GenSpec::default() };
    AblationConfig {
        variants,
        width_div: 16,
        model_seed: 1,
        train_data: GenSpec { count: 24, seed: 1, lengths: "2-4".parse().unwrap(), ..base.clone() },
        splits: vec![
            Split { name: "balanced".into(), spec: GenSpec { count: 10, seed: 2, lengths: "1-4".parse().unwrap(), ..base.clone() } },
            Split { name: "single".into(), spec: GenSpec { count: 6, seed: 3, lengths: "1-1".parse().unwrap(), ..base.clone() } },
            Split { name: "long".into(), spec: GenSpec { count: 6, seed: 4, lengths: "6-6".parse().unwrap(), ..base } },
        ],
        train: TrainConfig { steps: 4, batch_size: 8, ..TrainConfig::default() },
    }
}

#[test]
fn ablation_report_structure() {
    let config = tiny_ablation(vec!["1cnn:96x32".into(), "safe:24x32,48x32,96x32,192x32".into()]);
    let report = run_ablation(&config, &GlyphFont::builtin(), |_| {}).unwrap();
    assert_eq!(report.splits, vec!["balanced", "single", "long"]);
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.rows[1].variant, "safe:192x32,96x32,48x32,24x32");
    assert!(report.rows.iter().all(|r| r.reports.len() == 3));
    assert_eq!(report.rows[0].reports[1].by_length.keys().copied().collect::<Vec<_>>(), vec![1]);
    let tsv = report.to_tsv();
    assert!(tsv.starts_with("variant\tparameters\tfinal_loss\tbalanced\tsingle\tlong\n"));
    assert!(tsv.contains("\nvariant\tsplit\tlength\tcount\taccuracy\n"));

    let single = tiny_ablation(vec!["1cnn:96x32".into()]);
    assert!(matches!(run_ablation(&single, &GlyphFont::builtin(), |_| {}), Err(ssan::Error::Input(_))));
}

#[test]
fn identical_variants_give_identical_rows() {
    let config = tiny_ablation(vec!["safe:48x32,24x32".into(), "safe:24x32,48x32".into()]);
    let report = run_ablation(&config, &GlyphFont::builtin(), |_| {}).unwrap();
    assert_eq!(report.rows[0], report.rows[1]);
}
