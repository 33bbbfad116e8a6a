use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nd::{grad_check_with, GradCheckOptions};

fn image<T: Real>(cfg: &OdmConfig, batch: usize, seed: u64) -> Array<T> {
    let s = cfg.image_size;
    let a = Array::<T>::uniform(&[batch, 3, s, s], 0.5, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    a.map(|v| v + T::from_f64(0.5))
}

fn micro_tokens(texts: &[&[&str]]) -> TokenBatch {
    let cfg = OdmConfig::micro();
    let parts: Vec<TokenBatch> = texts
        .iter()
        .map(|t| tokenize_with(t, &Charset, cfg.max_instances, cfg.max_len))
        .collect();
    TokenBatch::stack(&parts).unwrap()
}

#[test]
fn encoder_grid_and_finiteness() {
    let cfg = OdmConfig::default();
    let model = OdmModel::<f32>::new(cfg.clone(), 1).unwrap();
    assert_eq!(cfg.grid(), 16);
    let mut t = Tape::new();
    let p = model.bind(&mut t, false);
    let zero = t.constant(Array::zeros(&[1, 3, 128, 128]).unwrap());
    let other = t.constant(image(&cfg, 1, 3));
    let f0 = encode_image(&cfg, &mut t, &p, zero).unwrap();
    let f1 = encode_image(&cfg, &mut t, &p, other).unwrap();
    let top0 = *f0.last().unwrap();
    assert_eq!(t.shape(top0), &[1, 48, 16, 16]);
    assert!(t.value(top0).all_finite());
    assert!(t.value(top0).max_abs_diff(t.value(*f1.last().unwrap())) > 1e-4);
    let wrong = t.constant(Array::zeros(&[1, 3, 64, 64]).unwrap());
    assert!(matches!(encode_image(&cfg, &mut t, &p, wrong), Err(OdmError::Shape(_))));
}

#[test]
fn text_encoder_symmetries() {
    let cfg = OdmConfig::micro();
    let model = OdmModel::<f64>::new(cfg.clone(), 2).unwrap();
    let mut t = Tape::new();
    let p = model.bind(&mut t, false);
    let d = cfg.embed_dim;

    let tok = micro_tokens(&[&["ab", "Zq!", "ab"]]);
    let tv = encode_text(&cfg, &mut t, &p, &tok).unwrap();
    let inst = t.value(tv.instances).data().to_vec();
    assert_eq!(&inst[..d], &inst[2 * d..3 * d]);
    assert!(inst[3 * d..].iter().all(|&v| v == 0.0));

    let perm = micro_tokens(&[&["Zq!", "ab", "ab"]]);
    let tp = encode_text(&cfg, &mut t, &p, &perm).unwrap();
    let pinst = t.value(tp.instances).data().to_vec();
    for (a, b) in pinst[..d].iter().zip(&inst[d..2 * d]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(t.value(tp.pooled).max_abs_diff(t.value(tv.pooled)) < 1e-12);

    let single = micro_tokens(&[&["hello"]]);
    let ts = encode_text(&cfg, &mut t, &p, &single).unwrap();
    assert!(t.value(ts.pooled).max_abs_diff(&Array::new(&[1, d], t.value(ts.instances).data()[..d].to_vec()).unwrap()) < 1e-12);

    let none = TokenBatch::empty(1, cfg.max_instances, cfg.max_len);
    assert!(matches!(encode_text(&cfg, &mut t, &p, &none), Err(OdmError::Validation(_))));
}

#[test]
fn empty_string_is_a_valid_prompt() {
    let cfg = OdmConfig::micro();
    let model = OdmModel::<f64>::new(cfg.clone(), 2).unwrap();
    let out = model.forward(&image(&cfg, 1, 1), &micro_tokens(&[&[""]])).unwrap();
    assert!(out.txt_embed.unwrap().all_finite());
}

#[test]
fn single_key_attention_is_identity_weighting() {
    let cfg = OdmConfig::micro();
    let model = OdmModel::<f64>::new(cfg.clone(), 3).unwrap();
    let mut t = Tape::new();
    let p = model.bind(&mut t, false);
    let img = t.constant(image(&cfg, 1, 5));
    let feats = encode_image(&cfg, &mut t, &p, img).unwrap();
    let top = *feats.last().unwrap();

    let one = micro_tokens(&[&["key"]]);
    let tv = encode_text(&cfg, &mut t, &p, &one).unwrap();
    let (fused, attn) = cross_attend(&cfg, &mut t, &p, top, tv.instances, &one.mask).unwrap();
    let m = cfg.max_instances;
    for row in t.value(attn).data().chunks(m) {
        assert_eq!(row[0], 1.0);
        assert!(row[1..].iter().all(|&v| v == 0.0));
    }
    // fused = features + the single value vector at every position.
    let inst = t.value(tv.instances).data()[..cfg.embed_dim].to_vec();
    let wv = model.params().get("xattn.wv").unwrap();
    let c = wv.shape()[1];
    let value: Vec<f64> = (0..c)
        .map(|j| (0..cfg.embed_dim).map(|i| inst[i] * wv.data()[i * c + j]).sum())
        .collect();
    let hw = cfg.grid() * cfg.grid();
    for ch in 0..c {
        for q in 0..hw {
            let i = ch * hw + q;
            let want = t.value(top).data()[i] + value[ch];
            assert!((t.value(fused).data()[i] - want).abs() < 1e-12);
        }
    }

    // Masked extra instances change nothing.
    let mut padded = micro_tokens(&[&["key", "other", "x"]]);
    padded.mask[1] = false;
    padded.mask[2] = false;
    let tp = encode_text(&cfg, &mut t, &p, &padded).unwrap();
    let (fused2, _) = cross_attend(&cfg, &mut t, &p, top, tp.instances, &padded.mask).unwrap();
    assert!(t.value(fused2).max_abs_diff(t.value(fused)) < 1e-12);
}

#[test]
fn decoder_shapes_zero_weights_and_gradient() {
    let cfg = OdmConfig::default();
    let model = OdmModel::<f32>::new(cfg.clone(), 4).unwrap();
    let out = model.forward(&image(&cfg, 2, 1), &{
        let a = tokenize(&["alpha", "beta"], &Charset);
        let b = tokenize(&["gamma"], &Charset);
        TokenBatch::stack(&[a, b]).unwrap()
    });
    let out = out.unwrap();
    assert_eq!(out.logits.shape(), &[2, 1, 128, 128]);
    assert_eq!(out.img_embed.shape(), &[2, 64]);
    assert_eq!(out.txt_embed.as_ref().unwrap().shape(), &[2, 64]);
    assert_eq!(out.attn.as_ref().unwrap().shape(), &[2, 32, 256]);

    let mut zeroed = model.clone();
    for i in 0..zeroed.params().len() {
        if zeroed.params().name(i).starts_with("dec.") {
            zeroed.params_mut().array_mut(i).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let z = zeroed.forward(&image(&cfg, 1, 1), &tokenize(&["x"], &Charset)).unwrap();
    assert!(z.logits.data().iter().all(|&v| v == 0.0));

    let micro = OdmConfig::micro();
    let m = OdmModel::<f64>::new(micro.clone(), 5).unwrap();
    let img = image::<f64>(&micro, 1, 2);
    let fused0 = Array::<f64>::uniform(&[1, 4, 2, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let report = grad_check_with(
        |t, fused| {
            let p = m.bind(t, false);
            let im = t.constant(img.clone());
            let feats = encode_image(&micro, t, &p, im)?;
            let logits = decode(t, &p, fused, &feats, im)?;
            let sq = t.mul(logits, logits)?;
            Ok(t.mean(sq))
        },
        &fused0,
        &GradCheckOptions {
            tol: 1e-3,
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn forward_is_deterministic_and_heatmaps_follow_the_mask() {
    let cfg = OdmConfig::micro();
    let a = OdmModel::<f32>::new(cfg.clone(), 7).unwrap();
    let b = OdmModel::<f32>::new(cfg.clone(), 7).unwrap();
    let img = image(&cfg, 1, 3);
    let tok = micro_tokens(&[&["one", "two", "three"]]);
    let oa = a.forward(&img, &tok).unwrap();
    let ob = b.forward(&img, &tok).unwrap();
    assert_eq!(oa.logits, ob.logits);

    let hm = oa.heatmaps(0);
    assert_eq!(hm.iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    for (_, h) in &hm {
        assert!(h.iter().all(|&v| v >= 0.0));
        assert!((h.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
    let mut dropped = tok.clone();
    dropped.mask[1] = false;
    let od = a.forward(&img, &dropped).unwrap();
    assert_eq!(od.heatmaps(0).iter().map(|h| h.0).collect::<Vec<_>>(), vec![0, 2]);
}

#[test]
fn instance_permutation_equivariance() {
    let cfg = OdmConfig::micro();
    let model = OdmModel::<f64>::new(cfg.clone(), 8).unwrap();
    let img = image(&cfg, 1, 4);
    let o1 = model.forward(&img, &micro_tokens(&[&["ab", "cde", "f"]])).unwrap();
    let o2 = model.forward(&img, &micro_tokens(&[&["f", "ab", "cde"]])).unwrap();
    assert!(o1.logits.max_abs_diff(&o2.logits) < 1e-10);
    let (a1, a2) = (o1.attn.unwrap(), o2.attn.unwrap());
    let hw = cfg.grid() * cfg.grid();
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        for q in 0..hw {
            assert!((a1.data()[i * hw + q] - a2.data()[j * hw + q]).abs() < 1e-10);
        }
    }
}

#[test]
fn text_branch_can_be_disabled() {
    let cfg = OdmConfig {
        text_encoder: false,
        ..OdmConfig::micro()
    };
    let model = OdmModel::<f32>::new(cfg.clone(), 1).unwrap();
    assert!(model.params().get("txt.tok_emb").is_none());
    let out = model
        .forward(&image(&cfg, 1, 1), &TokenBatch::empty(1, cfg.max_instances, cfg.max_len))
        .unwrap();
    assert!(out.txt_embed.is_none() && out.attn.is_none());
    assert_eq!(out.logits.shape(), &[1, 1, 16, 16]);
}

#[test]
fn config_validation() {
    assert!(OdmConfig::default().validate().is_ok());
    assert!(OdmConfig::full_scale().validate().is_ok());
    let bad = OdmConfig {
        image_size: 100,
        ..OdmConfig::default()
    };
    assert!(matches!(bad.validate(), Err(OdmError::Validation(_))));
    let bad = OdmConfig {
        text_heads: 5,
        ..OdmConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn from_params_checks_layout() {
    let cfg = OdmConfig::micro();
    let m = OdmModel::<f32>::new(cfg.clone(), 1).unwrap();
    assert!(OdmModel::from_params(cfg.clone(), m.params().clone()).is_ok());
    let other = OdmConfig {
        embed_dim: 16,
        ..cfg.clone()
    };
    assert!(OdmModel::from_params(other, m.params().clone()).is_err());
}
