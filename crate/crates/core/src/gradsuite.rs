//! Finite-difference checks of the training losses and of the whole model,
//! run in double precision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::control::ControllerConfig;
use crate::error::Result;
use crate::glyph::builtin_font;
use crate::loss::{batch_contrastive, ocr_lpips, seg_loss, total_loss, FeatureExtractor, LossWeights};
use crate::model::{OdmConfig, OdmModel};
use crate::nd::{grad_check_with, Array, GradCheckOptions, GradReport, Tape};
use crate::synth::synth_dataset;
use crate::train::{prepare_batch, record_objective, TrainConfig, TrainSample};

/// Bound for the individual loss terms.
pub const LOSS_TOL: f64 = 1e-5;
/// Bound for the whole objective with respect to model parameters.
pub const MODEL_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SuiteCheck {
    pub name: String,
    pub tol: f64,
    pub report: GradReport,
}

fn rand_array(shape: &[usize], seed: u64) -> Result<Array<f64>> {
    Array::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn binary(shape: &[usize], seed: u64) -> Result<Array<f64>> {
    Ok(rand_array(shape, seed)?.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))
}

fn loss_opts() -> GradCheckOptions {
    GradCheckOptions {
        tol: LOSS_TOL,
        ..GradCheckOptions::default()
    }
}

/// Checks of the segmentation, OCR-feature, contrastive and weighted total
/// losses against their direct inputs.
pub fn loss_checks() -> Result<Vec<SuiteCheck>> {
    let mut out = Vec::new();
    let y = binary(&[2, 1, 8, 8], 21)?;
    let report = grad_check_with(|t, x| seg_loss(t, x, &y), &rand_array(&[2, 1, 8, 8], 22)?, &loss_opts())?;
    out.push(SuiteCheck { name: "segmentation".into(), tol: LOSS_TOL, report });

    let fx = FeatureExtractor::<f64>::seeded(2);
    let target = binary(&[2, 1, 16, 16], 23)?;
    let report = grad_check_with(
        |t, x| {
            let p = t.sigmoid(x);
            let tg = t.constant(target.clone());
            ocr_lpips(t, &fx, p, tg)
        },
        &rand_array(&[2, 1, 16, 16], 24)?,
        &loss_opts(),
    )?;
    out.push(SuiteCheck { name: "ocr_feature".into(), tol: LOSS_TOL, report });

    let txt = rand_array(&[3, 5], 25)?;
    let report = grad_check_with(
        |t, x| {
            let tx = t.constant(txt.clone());
            batch_contrastive(t, x, tx, 1.0)
        },
        &rand_array(&[3, 5], 26)?,
        &loss_opts(),
    )?;
    out.push(SuiteCheck { name: "contrastive".into(), tol: LOSS_TOL, report });

    let y = binary(&[2, 1, 16, 16], 27)?;
    let report = grad_check_with(
        |t, x| {
            let seg = seg_loss(t, x, &y)?;
            let p = t.sigmoid(x);
            let tg = t.constant(y.clone());
            let ocr = ocr_lpips(t, &fx, p, tg)?;
            let bc = t.constant(Array::scalar(0.7));
            total_loss(t, seg, ocr, bc, &LossWeights::default())
        },
        &rand_array(&[2, 1, 16, 16], 28)?,
        &loss_opts(),
    )?;
    out.push(SuiteCheck { name: "total".into(), tol: LOSS_TOL, report });
    Ok(out)
}

/// Nearest-neighbour downsample of synthetic 128 px scenes to `size`.
fn small_scenes(n: usize, size: usize) -> Result<Vec<TrainSample>> {
    let g = builtin_font();
    let f = 128 / size;
    synth_dataset(n, 1, &g, 128)?
        .into_iter()
        .map(|s| {
            let full = s.to_array::<f32>();
            let mut data = Vec::with_capacity(3 * size * size);
            for c in 0..3 {
                for y in 0..size {
                    for x in 0..size {
                        data.push(full.data()[(c * 128 + y * f) * 128 + x * f]);
                    }
                }
            }
            Ok(TrainSample {
                annotation: s.annotation,
                image: Array::new(&[3, size, size], data)?,
            })
        })
        .collect()
}

/// Checks the full objective against every parameter group of a micro
/// model on a two-sample batch. Biases are moved off zero first so that no
/// unit starts exactly on a ReLU kink.
pub fn model_checks() -> Result<Vec<SuiteCheck>> {
    let cfg = TrainConfig {
        model: OdmConfig::micro(),
        controller: ControllerConfig {
            noise_count: [1, 1],
            ..ControllerConfig::default()
        },
        ..TrainConfig::default()
    };
    let data = small_scenes(2, cfg.model.image_size)?;
    let indexed: Vec<(usize, &TrainSample)> = data.iter().enumerate().collect();
    let batch = prepare_batch(&indexed, &cfg, &builtin_font(), 0)?.cast::<f64>();
    let mut model = OdmModel::<f64>::new(cfg.model.clone(), 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..model.params().len() {
        if model.params().name(i).ends_with(".b") {
            let shape = model.params().array(i).shape().to_vec();
            *model.params_mut().array_mut(i) = Array::uniform(&shape, 0.1, &mut rng)?;
        }
    }
    let fx = FeatureExtractor::<f64>::seeded(0);
    let opts = GradCheckOptions {
        tol: MODEL_TOL,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::new();
    for i in 0..model.params().len() {
        let name = model.params().name(i).to_string();
        let x = model.params().array(i).clone();
        let report = grad_check_with(
            |t: &mut Tape<f64>, v| {
                let mut bound = model.bind(t, false);
                bound.replace(&name, v)?;
                Ok(record_objective(t, &model, &bound, &batch, &fx, &cfg.loss)?.total)
            },
            &x,
            &opts,
        )?;
        out.push(SuiteCheck { name: format!("model/{name}"), tol: MODEL_TOL, report });
    }
    Ok(out)
}

/// Every loss and model check.
pub fn run() -> Result<Vec<SuiteCheck>> {
    let mut all = loss_checks()?;
    all.extend(model_checks()?);
    Ok(all)
}
