use std::ops::ControlFlow;

use super::*;
use crate::dfg::{build_dfg, EdgeMode, GnnKind};
use crate::eventlog::{rule_log, split_log, EventLog, SplitRatios};
use crate::gnn::{ModelConfig, ModelSizes};
use crate::metrics::classification_metrics;
use crate::sampling::log_samples;

struct Fixture {
    train: Vec<EncodedSample>,
    val: Vec<EncodedSample>,
    scaler: TargetScaler,
    sizes: ModelSizes,
}

fn fixture(log: &EventLog, variant: DfgVariant) -> Fixture {
    let (train_log, val_log, _) = split_log(log, SplitRatios::default(), 3).unwrap();
    let (av, rv) = (&train_log.activity_vocab, &train_log.resource_vocab);
    let train_samples = log_samples(&train_log);
    let val_samples = log_samples(&val_log);
    let raw: Vec<_> = train_samples.iter().map(|s| build_dfg(s, av, rv, variant).unwrap()).collect();
    let norm = FeatureNormalizer::fit(variant, &raw).unwrap();
    Fixture {
        train: encode_samples(&train_samples, av, rv, variant, &norm).unwrap(),
        val: encode_samples(&val_samples, av, rv, variant, &norm).unwrap(),
        scaler: TargetScaler::fit(&train_samples),
        sizes: ModelSizes {
            activity_vocab: av.len(),
            resource_vocab: rv.len(),
            num_classes: ClassSpace::new(av).num_classes(),
        },
    }
}

fn tiny(variant: DfgVariant) -> ModelConfig {
    ModelConfig {
        num_layers: 2,
        hidden_dim: 8,
        activity_embed_dim: 4,
        resource_embed_dim: 2,
        mlp_hidden_dim: 8,
        ..ModelConfig::new(variant)
    }
}

fn keep_going(_: &EpochRecord, _: &PpmModel) -> ControlFlow<()> {
    ControlFlow::Continue(())
}

#[test]
fn config_defaults_and_validation() {
    let cfg: TrainConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(cfg, TrainConfig::default());
    assert_eq!((cfg.learning_rate, cfg.max_epochs, cfg.patience, cfg.batch_size), (1e-4, 100, Some(10), 32));
    let off: TrainConfig = serde_json::from_str(r#"{"patience": null}"#).unwrap();
    assert_eq!(off.patience, None);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1}"#).is_err());
    for bad in [
        TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { patience: Some(101), ..TrainConfig::default() },
        TrainConfig { max_epochs: 0, ..TrainConfig::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn encoded_samples_keep_order_and_classes() {
    let log = rule_log(10);
    let f = fixture(&log, DfgVariant::ALL[0]);
    let (train_log, _, _) = split_log(&log, SplitRatios::default(), 3).unwrap();
    let samples = log_samples(&train_log);
    assert_eq!(f.train.len(), samples.len());
    let classes = ClassSpace::new(&train_log.activity_vocab);
    for (e, s) in f.train.iter().zip(&samples) {
        assert_eq!((&e.case_id, e.k), (&s.case_id, s.k));
        assert_eq!(e.class, s.next_activity.and_then(|a| classes.class_of(a)));
        assert_eq!(e.is_end, e.class == Some(classes.end_class()));
        assert!(e.graph.normalized);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let log = rule_log(20);
    for (variant, task) in [(DfgVariant::ALL[2], Task::NextActivity), (DfgVariant::ALL[5], Task::RemainingTime)] {
        let f = fixture(&log, variant);
        let cfg = TrainConfig { max_epochs: 3, batch_size: 8, seed: 11, learning_rate: 1e-3, patience: Some(2) };
        let run = || {
            let mut m = PpmModel::new(tiny(variant), task, f.sizes, 5).unwrap();
            let out = train(&mut m, &f.train, &f.val, &f.scaler, &cfg, keep_going).unwrap();
            (out, m.params)
        };
        let (a, pa) = run();
        let (b, pb) = run();
        let losses = |o: &TrainOutcome| o.history.iter().map(|r| (r.train_loss, r.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(a.best_params, b.best_params);
        assert_eq!(pa, pb);
        assert_eq!(a.steps, b.steps);
    }
}

#[test]
fn best_checkpoint_has_lowest_validation_loss() {
    let log = rule_log(20);
    let variant = DfgVariant::new(GnnKind::Gat, EdgeMode::Multi);
    let f = fixture(&log, variant);
    let cfg = TrainConfig { max_epochs: 8, batch_size: 8, seed: 1, learning_rate: 3e-2, patience: Some(3) };
    let mut m = PpmModel::new(tiny(variant), Task::NextActivity, f.sizes, 2).unwrap();
    let out = train(&mut m, &f.train, &f.val, &f.scaler, &cfg, keep_going).unwrap();
    let min = out.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best_val_loss, min);
    assert_eq!(out.history[out.best_epoch - 1].val_loss, min);
    let best = PpmModel::from_params(m.config.clone(), m.task, m.sizes, out.best_params.clone()).unwrap();
    let val = supervised(&f.val, Task::NextActivity);
    assert_eq!(mean_loss(&best, &val, &f.scaler, 8).unwrap(), out.best_val_loss);
    assert_eq!(out.stopped_early, out.history.len() < 8);
}

#[test]
fn single_batch_loss_is_nonincreasing_at_small_lr() {
    let log = rule_log(6);
    for variant in DfgVariant::ALL {
        let f = fixture(&log, variant);
        let cfg = TrainConfig { max_epochs: 6, batch_size: 1000, patience: None, ..TrainConfig::default() };
        let mut m = PpmModel::new(tiny(variant), Task::NextActivity, f.sizes, 0).unwrap();
        let out = train(&mut m, &f.train, &f.train, &f.scaler, &cfg, keep_going).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.train_loss).collect();
        let increases: Vec<f64> = losses.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
        assert!(increases.len() <= 1 && increases.iter().all(|&r| r <= 0.01), "{variant}: {losses:?}");
    }
}

#[test]
fn callback_can_end_training() {
    let log = rule_log(10);
    let f = fixture(&log, DfgVariant::ALL[0]);
    let cfg = TrainConfig { max_epochs: 50, batch_size: 16, patience: None, ..TrainConfig::default() };
    let mut m = PpmModel::new(tiny(DfgVariant::ALL[0]), Task::RemainingTime, f.sizes, 0).unwrap();
    let out = train(&mut m, &f.train, &f.val, &f.scaler, &cfg, |r, _| {
        if r.epoch == 2 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.history.len(), 2);
    assert!(!out.stopped_early);
}

#[test]
fn small_model_overfits_rule_log() {
    let log = rule_log(20);
    let variant = DfgVariant::new(GnnKind::Gcn, EdgeMode::Single);
    let f = fixture(&log, variant);
    let cfg = TrainConfig { max_epochs: 200, batch_size: 16, patience: None, learning_rate: 1e-2, seed: 0 };
    let mut cfg_m = tiny(variant);
    cfg_m.hidden_dim = 16;
    cfg_m.mlp_hidden_dim = 16;
    let mut m = PpmModel::new(cfg_m, Task::NextActivity, f.sizes, 0).unwrap();
    let train_refs = supervised(&f.train, Task::NextActivity);
    let labels: Vec<Option<usize>> = train_refs.iter().map(|s| s.class).collect();
    let mut acc = 0.0;
    train(&mut m, &f.train, &f.val, &f.scaler, &cfg, |_, model| {
        let logits = predict_all(model, &train_refs, 64).unwrap();
        acc = classification_metrics(&logits, &labels, &[]).unwrap().accuracy;
        if acc >= 0.95 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
}
