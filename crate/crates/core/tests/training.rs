use octdenoise::datasets::{batch_iter, make_synthetic, LabeledDataset};
use octdenoise::models::{Autoencoder, AutoencoderConfig, Classifier, ClassifierConfig};
use octdenoise::training::{fit, train_autoencoder, train_classifier, PlateauConfig, TrainConfig, ValTerms};
use octdenoise::{Adam, AdamConfig, Error, Tape, Tensor};
use proptest::prelude::*;

fn tiny_dataset(train: usize) -> LabeledDataset {
    let mut ds = make_synthetic(10, 16, 3);
    ds.train.truncate(train);
    ds
}

fn tiny_classifier(seed: u64) -> Classifier<f32> {
    let config = ClassifierConfig {
        input_size: 16,
        base_channels: 4,
        blocks_per_stage: 1,
        n_stages: 2,
        ..Default::default()
    };
    Classifier::new(config, seed).unwrap()
}

fn tiny_autoencoder(seed: u64) -> Autoencoder<f32> {
    let config = AutoencoderConfig {
        input_size: 16,
        widths: vec![4, 8],
    };
    Autoencoder::new(config, seed).unwrap()
}

fn frozen_classifier() -> Classifier<f32> {
    let mut clf = tiny_classifier(9);
    clf.freeze();
    clf
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        lr: 1e-3,
        seed: 5,
        ..Default::default()
    }
}

fn train_set_loss(model: &Classifier<f32>, ds: &LabeledDataset) -> f64 {
    let batch = batch_iter::<f32>(&ds.train, ds.train.len(), None)
        .unwrap()
        .next()
        .unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(batch.images);
    let params = model.params().bind(&mut tape, false);
    let logits = model.forward_bound(&mut tape, &params, x).unwrap();
    let loss = tape.softmax_cross_entropy(logits, &batch.labels).unwrap();
    tape.value(loss).item().unwrap() as f64
}

/// Drives the shared epoch loop with a scripted validation sequence. The
/// "model" counts completed epochs, so the returned snapshot names its epoch.
fn scripted(losses: &[f64], config: &TrainConfig) -> octdenoise::training::TrainRun<usize> {
    let mut epoch_losses = losses.iter().copied();
    fit(
        0usize,
        config,
        |model, _, _| {
            *model += 1;
            Ok(0.0)
        },
        |_| {
            let total = epoch_losses.next().expect("script long enough");
            Ok(ValTerms {
                total,
                ..Default::default()
            })
        },
        &mut |_| {},
    )
    .unwrap()
}

/// Learning rate in effect during each epoch, computed independently of the
/// scheduler: a drop lands on the epoch after the stale count passes patience.
fn expected_lrs(losses: &[f64], lr: f64, plateau: &PlateauConfig) -> Vec<f64> {
    let (mut best, mut stale, mut lr) = (f64::INFINITY, 0, lr);
    let mut out = Vec::new();
    for &loss in losses {
        out.push(lr);
        if best.is_infinite() || loss < best * (1.0 - plateau.threshold) {
            best = loss;
            stale = 0;
        } else {
            stale += 1;
            if stale > plateau.patience {
                lr = (lr * plateau.factor).max(plateau.min_lr);
                stale = 0;
            }
        }
    }
    out
}

#[test]
fn adam_matches_the_textbook_update_for_two_steps() {
    let mut adam = Adam::<f64>::new(AdamConfig::with_lr(0.1)).unwrap();
    let (b1, b2, eps) = (adam.config().beta1, adam.config().beta2, adam.config().eps);
    let mut params = [Tensor::from_fn([3], |i| [0.5, -1.0, 2.0][i])];
    let grad = [1.0, 1.0, 1.0];
    let (mut m, mut v, mut expected) = (0.0, 0.0, [0.5, -1.0, 2.0]);
    for t in 1..=2 {
        adam.step(&mut params, &[&grad]).unwrap();
        m = b1 * m + (1.0 - b1) * 1.0;
        v = b2 * v + (1.0 - b2) * 1.0;
        let step = 0.1 * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        for (e, p) in expected.iter_mut().zip(params[0].data()) {
            *e -= step;
            assert!((*e - p).abs() < 1e-12, "step {t}: {p} vs {e}");
        }
    }
    // with a constant gradient each bias-corrected step is the full learning rate
    assert!((params[0].data()[0] - 0.3).abs() < 1e-7);
    assert_eq!(adam.step_count(), 2);
}

#[test]
fn scripted_losses_select_the_minimum_and_drop_on_exhaustion() {
    let losses = [
        1.0, 0.8, 0.9, 0.85, 0.81, 0.8, 0.7, 0.75, 0.72, 0.71, 0.7, 0.74, 0.9, 0.95,
    ];
    let config = TrainConfig {
        epochs: losses.len(),
        lr: 1e-3,
        plateau: PlateauConfig {
            patience: 3,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = scripted(&losses, &config);
    assert_eq!(run.best_epoch, 7);
    assert_eq!(run.model, 7, "the snapshot is the one taken at the best epoch");
    assert_eq!(run.best_val_loss, 0.7);
    let lrs: Vec<f64> = run.logs.iter().map(|l| l.lr).collect();
    // stale epochs 3..=6 exhaust patience 3 at epoch 6; epochs 8..=11 do so again at 11
    let mut expected = vec![1e-3; 6];
    expected.extend([1e-4; 5]);
    expected.extend([1e-5; 3]);
    for (got, want) in lrs.iter().zip(&expected) {
        assert!((got - want).abs() < 1e-18, "{lrs:?}");
    }
    assert_eq!(lrs.len(), expected.len());
}

#[test]
fn early_stop_ends_the_run_after_the_limit() {
    let losses = [1.0, 0.5, 0.6, 0.7, 0.4, 0.3];
    let config = TrainConfig {
        epochs: losses.len(),
        early_stop: Some(2),
        ..Default::default()
    };
    let run = scripted(&losses, &config);
    assert_eq!(run.logs.len(), 4);
    assert_eq!((run.best_epoch, run.model), (2, 2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn selection_and_schedule_hold_for_any_sequence(
        losses in prop::collection::vec(0.01f64..10.0, 1..40),
        patience in 0usize..5,
        early in prop::option::of(1usize..6),
    ) {
        let plateau = PlateauConfig { patience, min_lr: 1e-6, ..Default::default() };
        let config = TrainConfig { epochs: losses.len(), lr: 1e-3, plateau, early_stop: early, ..Default::default() };
        let run = scripted(&losses, &config);
        let seen: Vec<f64> = run.logs.iter().map(|l| l.val_loss).collect();
        let min = seen.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(run.best_val_loss, min);
        prop_assert_eq!(seen[run.best_epoch - 1], min);
        prop_assert!(seen[..run.best_epoch - 1].iter().all(|&l| l > min), "first minimum wins");
        prop_assert_eq!(run.model, run.best_epoch);

        let lrs: Vec<f64> = run.logs.iter().map(|l| l.lr).collect();
        let expected = expected_lrs(&seen, 1e-3, &plateau);
        for (got, want) in lrs.iter().zip(&expected) {
            prop_assert!((got - want).abs() <= 1e-15 * want);
        }
        for pair in lrs.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
            let ratio = pair[0] / pair[1];
            prop_assert!((ratio - 1.0).abs() < 1e-9 || (ratio - 10.0).abs() < 1e-9 || pair[1] == 1e-6);
        }
        prop_assert!(lrs.iter().all(|&lr| lr >= 1e-6));
        if let Some(limit) = early {
            let last = run.logs.len();
            prop_assert!(last == losses.len() || last - run.best_epoch == limit);
        }
    }
}

#[test]
fn one_classifier_epoch_on_eight_samples_lowers_the_loss() {
    let ds = tiny_dataset(8);
    let model = tiny_classifier(2);
    let before = train_set_loss(&model, &ds);
    let run = train_classifier(&ds, model, &quick(1), &mut |_| {}).unwrap();
    let after = train_set_loss(&run.model, &ds);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn single_epoch_metadata_records_that_epoch() {
    let ds = tiny_dataset(16);
    let run = train_classifier(&ds, tiny_classifier(1), &quick(1), &mut |_| {}).unwrap();
    assert_eq!(run.meta().epoch, 1);
    assert_eq!(run.meta().best_val_loss, run.logs[0].val_loss);
    let ae = train_autoencoder(&ds, tiny_autoencoder(1), &frozen_classifier(), &quick(1), &mut |_| {}).unwrap();
    assert_eq!((ae.meta().epoch, ae.meta().best_val_loss), (1, ae.logs[0].val_loss));
}

#[test]
fn same_seed_runs_produce_identical_logs() {
    let ds = tiny_dataset(24);
    let clf_logs = || {
        train_classifier(&ds, tiny_classifier(4), &quick(3), &mut |_| {})
            .unwrap()
            .logs
    };
    let (a, b) = (clf_logs(), clf_logs());
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_metrics(y)));

    let clf = frozen_classifier();
    let ae_logs = || {
        train_autoencoder(&ds, tiny_autoencoder(4), &clf, &quick(3), &mut |_| {})
            .unwrap()
            .logs
    };
    let (a, b) = (ae_logs(), ae_logs());
    assert_eq!(a.len(), 3);
    assert!(a.iter().zip(&b).all(|(x, y)| x.same_metrics(y)));
}

#[test]
fn frozen_classifier_is_untouched_by_autoencoder_training() {
    let ds = tiny_dataset(16);
    let clf = frozen_classifier();
    let before = clf.params().clone();
    let run = train_autoencoder(&ds, tiny_autoencoder(3), &clf, &quick(2), &mut |_| {}).unwrap();
    assert!(run.logs.iter().all(|l| l.val_lc_term > 0.0));
    for (a, b) in before.tensors().iter().zip(clf.params().tensors()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn logged_terms_combine_with_alpha() {
    let ds = tiny_dataset(16);
    let clf = frozen_classifier();
    for alpha in [0.0, 0.1, 2.0] {
        let config = TrainConfig { alpha, ..quick(1) };
        let log = train_autoencoder(&ds, tiny_autoencoder(6), &clf, &config, &mut |_| {})
            .unwrap()
            .logs[0];
        let combined = log.val_lr_term + alpha * log.val_lc_term;
        assert!(
            (log.val_loss - combined).abs() < 1e-6 * log.val_loss.max(1e-3),
            "alpha {alpha}: {log:?}"
        );
    }
}

#[test]
fn training_rejects_mismatched_or_unfrozen_models() {
    let ds = tiny_dataset(8);
    let unfrozen = tiny_classifier(1);
    assert!(matches!(
        train_autoencoder(&ds, tiny_autoencoder(1), &unfrozen, &quick(1), &mut |_| {}),
        Err(Error::InvalidArgument(_))
    ));
    let wide = Autoencoder::new(
        AutoencoderConfig {
            input_size: 32,
            widths: vec![4, 8],
        },
        1,
    )
    .unwrap();
    assert!(matches!(
        train_autoencoder(&ds, wide, &frozen_classifier(), &quick(1), &mut |_| {}),
        Err(Error::Config(_))
    ));
    let mut frozen = tiny_classifier(1);
    frozen.freeze();
    assert!(train_classifier(&ds, frozen, &quick(1), &mut |_| {}).is_err());
}

#[test]
fn runaway_learning_rate_reports_divergence() {
    let ds = tiny_dataset(16);
    let config = TrainConfig { lr: 1e12, ..quick(5) };
    match train_classifier(&ds, tiny_classifier(1), &config, &mut |_| {}) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
        // a run that survives must still have finite logs throughout
        Ok(run) => assert!(run.logs.iter().all(|l| l.val_loss.is_finite())),
        Err(other) => panic!("unexpected error {other}"),
    }
}
