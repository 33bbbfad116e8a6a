use super::*;
use crate::annot::{Shape, TextInstance};
use crate::geom::Quad;
use crate::glyph::builtin_font;
use crate::synth::synth_dataset;

fn micro_config() -> TrainConfig {
    TrainConfig {
        model: OdmConfig {
            image_size: 32,
            ..OdmConfig::micro()
        },
        batch_size: 2,
        steps: 3,
        lr: 1e-3,
        ..TrainConfig::default()
    }
}

fn samples(n: usize, size: usize) -> Vec<TrainSample> {
    let g = builtin_font();
    synth_dataset(n, 1, &g, 128)
        .unwrap()
        .into_iter()
        .map(|s| {
            // Nearest downsample of the 128 px scene.
            let full = s.to_array::<f32>();
            let f = 128 / size;
            let mut data = Vec::with_capacity(3 * size * size);
            for c in 0..3 {
                for y in 0..size {
                    for x in 0..size {
                        data.push(full.data()[(c * 128 + y * f) * 128 + x * f]);
                    }
                }
            }
            TrainSample {
                annotation: s.annotation,
                image: Array::new(&[3, size, size], data).unwrap(),
            }
        })
        .collect()
}

fn indexed(data: &[TrainSample]) -> Vec<(usize, &TrainSample)> {
    data.iter().enumerate().collect()
}

#[test]
fn config_json_round_trip_and_overrides() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr, 1e-4);
    assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    assert!(TrainConfig::from_json(r#"{"learning_rate": 0.1}"#).is_err());
    assert!(TrainConfig::from_json(r#"{"batch_size": 0}"#).is_err());

    let mut v = serde_json::to_value(&cfg).unwrap();
    apply_override(&mut v, "loss.gamma=0.25").unwrap();
    apply_override(&mut v, "modules.nt=false").unwrap();
    apply_override(&mut v, "controller.drop_keep_ratio=[0.5,1.0]").unwrap();
    let c = TrainConfig::from_value(v.clone()).unwrap();
    assert_eq!(c.loss.gamma, 0.25);
    assert!(!c.modules.nt);
    assert_eq!(c.controller.drop_keep_ratio, KeepRatio::Range([0.5, 1.0]));
    assert_eq!(c.resolved().controller.noise_count, [0, 0]);

    apply_override(&mut v, "loss.bogus=1").unwrap();
    assert!(TrainConfig::from_value(v).is_err());
    let mut v = serde_json::to_value(&cfg).unwrap();
    assert!(apply_override(&mut v, "no_equals_sign").is_err());
    assert!(apply_override(&mut v, "lr.inner=1").is_err());
}

#[test]
fn module_switches_resolve() {
    let cfg = TrainConfig {
        modules: Modules {
            te: false,
            dt: false,
            nt: true,
            ol: false,
        },
        ..TrainConfig::default()
    };
    let r = cfg.resolved();
    assert!(!r.model.text_encoder);
    assert_eq!((r.loss.beta, r.loss.gamma), (0.0, 0.0));
    assert_eq!(r.controller.drop_keep_ratio, KeepRatio::Fixed(1.0));
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = samples(2, 32);
    let g = builtin_font();
    let mut tr = Trainer::new(&TrainConfig { lr: 0.0, ..micro_config() }).unwrap();
    let before = tr.model().params().clone();
    let m1 = tr.train_step(&indexed(&data), &g).unwrap();
    let m2 = tr.train_step(&indexed(&data), &g).unwrap();
    assert_eq!(tr.model().params(), &before);
    for m in [m1, m2] {
        assert!(m.seg.is_finite() && m.ocr.is_finite() && m.bc.is_finite() && m.total.is_finite());
        assert!((m.total - (m.seg + m.ocr + 0.5 * m.bc)).abs() < 1e-5);
    }
}

#[test]
fn adam_ignores_zero_gradients() {
    let mut store = ParamStore::<f64>::new();
    store.push("w", Array::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap()).unwrap();
    let before = store.clone();
    let mut adam = AdamState::new(&store);
    let zero = Array::zeros(&[3]).unwrap();
    adam.step(&mut store, &[&zero], 0.1);
    assert_eq!(store, before);
    // First step moves each coordinate by lr against the gradient sign.
    let g = Array::from_f64(&[3], &[2.0, -0.001, 0.0]).unwrap();
    let mut adam = AdamState::new(&store);
    adam.step(&mut store, &[&g], 0.1);
    let d: Vec<f64> = store.array(0).data().iter().zip(before.array(0).data()).map(|(a, b)| a - b).collect();
    assert!((d[0] + 0.1).abs() < 1e-6 && (d[1] - 0.1).abs() < 1e-4 && d[2] == 0.0);
}

#[test]
fn seg_only_weights_reduce_to_pixel_training() {
    let data = samples(2, 32);
    let g = builtin_font();
    let cfg = micro_config();
    let batch = prepare_batch(&indexed(&data), &cfg, &g, 0).unwrap().cast::<f64>();
    let model = OdmModel::<f64>::new(cfg.model.clone(), 3).unwrap();
    let fx = FeatureExtractor::<f64>::seeded(0);
    let seg_only = LossConfig {
        beta: 0.0,
        gamma: 0.0,
        ..LossConfig::default()
    };

    let mut t1 = Tape::new();
    let b1 = model.bind(&mut t1, true);
    let obj = record_objective(&mut t1, &model, &b1, &batch, &fx, &seg_only).unwrap();
    let g1 = t1.backward(obj.total).unwrap();

    let mut t2 = Tape::new();
    let b2 = model.bind(&mut t2, true);
    let img = t2.constant(batch.images.clone());
    let out = model.record(&mut t2, &b2, img, &batch.tokens).unwrap();
    let seg = seg_loss(&mut t2, out.logits, &batch.targets).unwrap();
    let g2 = t2.backward(seg).unwrap();

    for (&v1, &v2) in b1.vars().iter().zip(b2.vars()) {
        assert_eq!(g1.of(v1).unwrap(), g2.of(v2).unwrap());
    }
}

#[test]
fn fit_is_deterministic_and_logs_every_step() {
    let data = samples(3, 32);
    let g = builtin_font();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoint_every: 2,
        ..micro_config()
    };
    let a = fit(&data, &cfg, &g, Some(dir.path())).unwrap();
    let b = fit(&data, &cfg, &g, None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.trainer.model().params(), b.trainer.model().params());

    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 1 + cfg.steps as usize);
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("{i},")));
    }
    assert!(dir.path().join("step_2.odmc").exists());
    let fin: Checkpoint<f32> = load_checkpoint(dir.path().join("final.odmc")).unwrap();
    assert_eq!(fin.step, 3);
    assert_eq!(&fin.params, a.trainer.model().params());
}

#[test]
fn zero_steps_returns_initialization() {
    let data = samples(1, 32);
    let cfg = TrainConfig {
        steps: 0,
        ..micro_config()
    };
    let out = fit(&data, &cfg, &builtin_font(), None).unwrap();
    let init = OdmModel::<f32>::new(cfg.model.clone(), cfg.seed).unwrap();
    assert_eq!(out.trainer.model().params(), init.params());
    assert!(out.metrics.is_empty());
    assert!(fit(&[], &cfg, &builtin_font(), None).is_err());
}

#[test]
fn single_tile_overfit_decreases_loss() {
    let data = samples(1, 32);
    let g = builtin_font();
    let cfg = TrainConfig {
        controller: ControllerConfig::identity(),
        batch_size: 1,
        ..micro_config()
    };
    let mut tr = Trainer::new(&cfg).unwrap();
    let mut last = f64::INFINITY;
    for _ in 0..50 {
        let m = tr.train_step(&indexed(&data), &g).unwrap();
        assert!(m.total < last, "step {}: {} !< {last}", m.step, m.total);
        last = m.total;
    }
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let data = samples(2, 32);
    let g = builtin_font();
    let mut tr = Trainer::new(&micro_config()).unwrap();
    tr.train_step(&indexed(&data), &g).unwrap();
    let ck = tr.checkpoint();
    let bytes = ck.to_bytes();
    let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
    assert_eq!(back, ck);

    let batch = prepare_batch(&indexed(&data), tr.config(), &g, 7).unwrap();
    let o1 = tr.model().forward(&batch.images, &batch.tokens).unwrap();
    let o2 = back.model().unwrap().forward(&batch.images, &batch.tokens).unwrap();
    assert_eq!(o1.logits, o2.logits);

    let resumed = Trainer::from_checkpoint(back).unwrap();
    assert_eq!(resumed.step(), 1);

    match Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() / 2]) {
        Err(OdmError::Format { offset, .. }) => assert!(offset <= bytes.len() / 2),
        other => panic!("expected format error, got {other:?}"),
    }
    let mut wrong = bytes.clone();
    wrong[4] = 9;
    assert!(matches!(
        Checkpoint::<f32>::from_bytes(&wrong),
        Err(OdmError::Version { found: 9, expected: 1 })
    ));
    let mut flipped = bytes.clone();
    let mid = bytes.len() - 100;
    flipped[mid] ^= 0x40;
    assert!(matches!(Checkpoint::<f32>::from_bytes(&flipped), Err(OdmError::Format { .. })));
    assert!(matches!(Checkpoint::<f32>::from_bytes(b"NOPE"), Err(OdmError::Format { offset: 0, .. })));
    assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes), Err(OdmError::Format { offset: 5, .. })));
}

#[test]
fn batch_schedule_covers_each_epoch() {
    let mut s = BatchSchedule::new(5, 2, 3);
    let mut seen: Vec<usize> = (0..5).flat_map(|st| s.indices(st)).collect();
    let first: Vec<usize> = seen[..5].to_vec();
    let mut sorted = first.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    seen.truncate(10);
    assert_eq!(seen.len(), 10);
}

#[test]
fn empty_batch_and_wrong_image_size_are_rejected() {
    let g = builtin_font();
    let cfg = micro_config();
    assert!(prepare_batch(&[], &cfg, &g, 0).is_err());
    let mut ann = SceneAnnotation::new("x", 64, 64);
    ann.instances.push(TextInstance::new(
        Shape::Quad(Quad::axis_aligned(2.0, 2.0, 60.0, 20.0).unwrap()),
        "ok",
    ));
    let bad = TrainSample {
        annotation: ann,
        image: Array::zeros(&[3, 16, 16]).unwrap(),
    };
    assert!(matches!(prepare_batch(&[(0, &bad)], &cfg, &g, 0), Err(OdmError::Shape(_))));
}

#[test]
fn cosine_schedule_decays_to_zero() {
    let mut cfg = TrainConfig { lr: 1e-3, steps: 100, ..TrainConfig::default() };
    assert_eq!(cfg.lr_at(0), 1e-3);
    assert_eq!(cfg.lr_at(99), 1e-3);
    cfg.lr_schedule = LrSchedule::Cosine;
    assert!((cfg.lr_at(0) - 1e-3).abs() < 1e-18);
    assert!((cfg.lr_at(50) - 5e-4).abs() < 1e-15);
    assert!(cfg.lr_at(100).abs() < 1e-18);
    assert!(cfg.lr_at(70) < cfg.lr_at(60));
    let parsed = TrainConfig::from_json(r#"{"lr_schedule": "cosine"}"#).unwrap();
    assert_eq!(parsed.lr_schedule, LrSchedule::Cosine);
    assert!(TrainConfig::from_json(r#"{"lr_schedule": "step"}"#).is_err());
}
