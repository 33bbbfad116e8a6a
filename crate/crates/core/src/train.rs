//! Pre-training: controller, forward, weighted objective, Adam, checkpoints.

use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annot::SceneAnnotation;
use crate::control::{control_sample, sample_rng, ControlledSample, ControllerConfig, KeepRatio};
use crate::error::{OdmError, Result};
use crate::glyph::GlyphSet;
use crate::loss::{batch_contrastive, ocr_lpips, seg_loss, total_loss, FeatureExtractor, LossConfig};
use crate::model::{Bound, OdmConfig, OdmModel, OutputVars, ParamStore, TokenBatch};
use crate::nd::{Array, Real, Tape, Var};

/// Switches for the text encoder (`te`), Drop-Text (`dt`), Noise-Text
/// (`nt`) and the OCR feature loss (`ol`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Modules {
    pub te: bool,
    pub dt: bool,
    pub nt: bool,
    pub ol: bool,
}

impl Default for Modules {
    fn default() -> Self {
        Modules {
            te: true,
            dt: true,
            nt: true,
            ol: true,
        }
    }
}

/// Where `odm pretrain` reads samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Canonical JSONL annotations; images are looked up by `image_id`.
    pub annotations: Option<PathBuf>,
    pub images: Option<PathBuf>,
    /// Used when no annotations are given.
    pub synthetic_scenes: usize,
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            annotations: None,
            images: None,
            synthetic_scenes: 8,
            synthetic_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` at step 0 to zero at `steps`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: OdmConfig,
    pub loss: LossConfig,
    pub controller: ControllerConfig,
    pub modules: Modules,
    pub data: DataConfig,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub steps: u64,
    /// Model initialization and data order.
    pub seed: u64,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: OdmConfig::default(),
            loss: LossConfig::default(),
            controller: ControllerConfig::default(),
            modules: Modules::default(),
            data: DataConfig::default(),
            lr: 1e-4,
            lr_schedule: LrSchedule::Constant,
            batch_size: 4,
            steps: 500,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| OdmError::Validation(format!("config: {e}")))?)
    }

    pub fn from_value(v: serde_json::Value) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_value(v).map_err(|e| OdmError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.controller.validate()?;
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(OdmError::Validation(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(OdmError::Validation("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate applied at `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let frac = (step as f64 / self.steps.max(1) as f64).min(1.0);
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }

    /// The configuration with module switches folded into the components
    /// they disable.
    pub fn resolved(&self) -> TrainConfig {
        let mut c = self.clone();
        if !c.modules.te {
            c.model.text_encoder = false;
            c.loss.gamma = 0.0;
        }
        if !c.modules.dt {
            c.controller.drop_keep_ratio = KeepRatio::Fixed(1.0);
        }
        if !c.modules.nt {
            c.controller.noise_count = [0, 0];
        }
        if !c.modules.ol {
            c.loss.beta = 0.0;
        }
        c
    }
}

/// Sets a dotted `key=value` pair inside a JSON config. The value is parsed
/// as JSON when possible and taken as a string otherwise.
pub fn apply_override(config: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| OdmError::Validation(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| OdmError::Validation(format!("override `{key}`: `{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}

/// One image with its annotation, already at model resolution.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub annotation: SceneAnnotation,
    /// `[3, S, S]` in `[0, 1]`.
    pub image: Array<f32>,
}

/// Model inputs and targets for one step.
#[derive(Debug, Clone)]
pub struct PreparedBatch<T> {
    pub ids: Vec<String>,
    /// `[B, 3, S, S]`
    pub images: Array<T>,
    pub tokens: TokenBatch,
    /// `[B, 1, S, S]` binary.
    pub targets: Array<T>,
    pub controlled: Vec<ControlledSample>,
}

impl<T: Real> PreparedBatch<T> {
    pub fn cast<U: Real>(&self) -> PreparedBatch<U> {
        PreparedBatch {
            ids: self.ids.clone(),
            images: self.images.cast(),
            tokens: self.tokens.clone(),
            targets: self.targets.cast(),
            controlled: self.controlled.clone(),
        }
    }
}

/// Runs the controller on each sample (stream keyed by step and dataset
/// index) and stacks images, prompts and targets.
pub fn prepare_batch(
    samples: &[(usize, &TrainSample)],
    cfg: &TrainConfig,
    glyphs: &GlyphSet,
    step: u64,
) -> Result<PreparedBatch<f32>> {
    if samples.is_empty() {
        return Err(OdmError::Validation("empty batch".into()));
    }
    let s = cfg.model.image_size;
    let mut images = Vec::with_capacity(samples.len() * 3 * s * s);
    let mut targets = Vec::with_capacity(samples.len() * s * s);
    let mut rows = Vec::with_capacity(samples.len());
    let mut controlled = Vec::with_capacity(samples.len());
    let mut ids = Vec::with_capacity(samples.len());
    for &(idx, sample) in samples {
        if sample.image.shape() != [3, s, s] {
            return Err(OdmError::shape(&sample.annotation.image_id, sample.image.shape(), &[3, s, s]));
        }
        let mut rng = sample_rng(cfg.controller.seed, step, idx as u64);
        let c = control_sample(
            &sample.annotation,
            &cfg.controller,
            glyphs,
            (s, s),
            cfg.model.max_instances,
            cfg.model.max_len,
            &mut rng,
        )?;
        images.extend_from_slice(sample.image.data());
        targets.extend(c.target.pixels().iter().map(|&p| p as f32));
        rows.push(c.tokens.clone());
        ids.push(sample.annotation.image_id.clone());
        controlled.push(c);
    }
    let b = samples.len();
    Ok(PreparedBatch {
        ids,
        images: Array::new(&[b, 3, s, s], images)?,
        tokens: TokenBatch::stack(&rows)?,
        targets: Array::new(&[b, 1, s, s], targets)?,
        controlled,
    })
}

/// Tape handles of the objective and its parts.
#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub seg: Var,
    pub ocr: Var,
    pub bc: Var,
    pub total: Var,
    pub outputs: OutputVars,
}

/// Records the forward pass and weighted objective for `batch`.
pub fn record_objective<T: Real>(
    t: &mut Tape<T>,
    model: &OdmModel<T>,
    bound: &Bound,
    batch: &PreparedBatch<T>,
    fx: &FeatureExtractor<T>,
    loss: &LossConfig,
) -> Result<ObjectiveVars> {
    let image = t.constant(batch.images.clone());
    let outputs = model.record(t, bound, image, &batch.tokens)?;
    let seg = seg_loss(t, outputs.logits, &batch.targets)?;
    let probs = t.sigmoid(outputs.logits);
    let target = t.constant(batch.targets.clone());
    let ocr = ocr_lpips(t, fx, probs, target)?;
    let bc = match &outputs.txt {
        Some(txt) => batch_contrastive(t, outputs.img_embed, txt.pooled, loss.temperature)?,
        None => t.constant(Array::scalar(T::ZERO)),
    };
    let total = total_loss(t, seg, ocr, bc, &loss.weights())?;
    Ok(ObjectiveVars {
        seg,
        ocr,
        bc,
        total,
        outputs,
    })
}

/// First and second moment estimates, in parameter-store order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Array<T>>,
    pub v: Vec<Array<T>>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, a)| Array::full(a.shape(), T::ZERO).expect("param shape")).collect();
        AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected Adam update with a constant learning rate.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[&Array<T>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.array_mut(i).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j].to_f64();
                let mj = ADAM_BETA1 * m[j].to_f64() + (1.0 - ADAM_BETA1) * gj;
                let vj = ADAM_BETA2 * v[j].to_f64() + (1.0 - ADAM_BETA2) * gj * gj;
                m[j] = T::from_f64(mj);
                v[j] = T::from_f64(vj);
                let update = lr * (mj / c1) / ((vj / c2).sqrt() + ADAM_EPS);
                p[j] = T::from_f64(p[j].to_f64() - update);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub seg: f64,
    pub ocr: f64,
    pub bc: f64,
    pub total: f64,
}

pub const METRICS_HEADER: &str = "step,seg,ocr,bc,total";

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.step, self.seg, self.ocr, self.bc, self.total)
    }
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[StepMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| OdmError::io(path, e))
}

/// Training state: model, optimizer and the resolved configuration.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    model: OdmModel<f32>,
    adam: AdamState<f32>,
    extractor: FeatureExtractor<f32>,
    step: u64,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let model = OdmModel::new(config.model.clone(), config.seed)?;
        let adam = AdamState::new(model.params());
        let extractor = config.loss.extractor()?;
        Ok(Trainer {
            config,
            model,
            adam,
            extractor,
            step: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint<f32>) -> Result<Self> {
        let config = ckpt.config.resolved();
        let model = OdmModel::from_params(config.model.clone(), ckpt.params)?;
        let extractor = config.loss.extractor()?;
        Ok(Trainer {
            config,
            model,
            adam: ckpt.adam,
            extractor,
            step: ckpt.step,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &OdmModel<f32> {
        &self.model
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint<f32> {
        Checkpoint {
            config: self.config.clone(),
            step: self.step,
            params: self.model.params().clone(),
            adam: self.adam.clone(),
        }
    }

    /// Controller, forward, backward and one optimizer update.
    pub fn train_step(&mut self, samples: &[(usize, &TrainSample)], glyphs: &GlyphSet) -> Result<StepMetrics> {
        let batch = prepare_batch(samples, &self.config, glyphs, self.step)?;
        let mut t = Tape::new();
        let bound = self.model.bind(&mut t, true);
        let obj = record_objective(&mut t, &self.model, &bound, &batch, &self.extractor, &self.config.loss)
            .map_err(|e| self.annotate(e, &batch.ids))?;
        let val = |v: Var| t.value(v).data()[0].to_f64();
        let metrics = StepMetrics {
            step: self.step,
            seg: val(obj.seg),
            ocr: val(obj.ocr),
            bc: val(obj.bc),
            total: val(obj.total),
        };
        let grads = t.backward(obj.total)?;
        let gs: Vec<&Array<f32>> = bound
            .vars()
            .iter()
            .map(|&v| grads.of(v).expect("trainable leaf has a gradient"))
            .collect();
        if let Some(i) = gs.iter().position(|g| !g.all_finite()) {
            return Err(self.annotate(
                OdmError::Numeric {
                    component: "gradient",
                    detail: format!(" ({})", self.model.params().name(i)),
                },
                &batch.ids,
            ));
        }
        self.adam.step(self.model.params_mut(), &gs, self.config.lr_at(self.step));
        self.step += 1;
        Ok(metrics)
    }

    fn annotate(&self, err: OdmError, ids: &[String]) -> OdmError {
        match err {
            OdmError::Numeric { component, detail } => {
                log::error!("step {}: non-finite {component}{detail}; batch samples: {}", self.step, ids.join(", "));
                OdmError::Numeric {
                    component,
                    detail: format!("{detail} at step {} in batch [{}]", self.step, ids.join(", ")),
                }
            }
            other => other,
        }
    }
}

/// Dataset indices for each step: consecutive slices of per-epoch
/// permutations drawn from `seed`.
#[derive(Debug)]
pub struct BatchSchedule {
    n: usize,
    batch: usize,
    seed: u64,
    perms: HashMap<u64, Vec<usize>>,
}

impl BatchSchedule {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        BatchSchedule {
            n,
            batch,
            seed,
            perms: HashMap::new(),
        }
    }

    pub fn indices(&mut self, step: u64) -> Vec<usize> {
        let start = step as usize * self.batch;
        (start..start + self.batch)
            .map(|pos| {
                let epoch = (pos / self.n) as u64;
                let (n, seed) = (self.n, self.seed);
                let perm = self.perms.entry(epoch).or_insert_with(|| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(epoch);
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(&mut rng);
                    p
                });
                perm[pos % n]
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub trainer: Trainer,
    pub metrics: Vec<StepMetrics>,
}

/// Trains for `config.steps` steps. With `out_dir`, streams `metrics.csv`
/// and writes `step_<n>.odmc` at the checkpoint cadence plus `final.odmc`.
pub fn fit(dataset: &[TrainSample], config: &TrainConfig, glyphs: &GlyphSet, out_dir: Option<&Path>) -> Result<FitOutput> {
    if dataset.is_empty() {
        return Err(OdmError::Validation("training dataset is empty".into()));
    }
    let mut trainer = Trainer::new(config)?;
    log::info!("resolved training config: {}", trainer.config().to_json());
    let mut schedule = BatchSchedule::new(dataset.len(), trainer.config.batch_size, trainer.config.seed);
    let mut csv = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| OdmError::io(dir, e))?;
            let path = dir.join("metrics.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(|e| OdmError::io(&path, e))?);
            writeln!(w, "{METRICS_HEADER}").map_err(|e| OdmError::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };
    let mut metrics = Vec::with_capacity(trainer.config.steps as usize);
    for _ in 0..trainer.config.steps {
        let step = trainer.step;
        let idx = schedule.indices(step);
        let batch: Vec<(usize, &TrainSample)> = idx.iter().map(|&i| (i, &dataset[i])).collect();
        let m = trainer.train_step(&batch, glyphs)?;
        log::debug!("{}", m.csv_row());
        if let Some((w, path)) = csv.as_mut() {
            writeln!(w, "{}", m.csv_row()).map_err(|e| OdmError::io(path.as_path(), e))?;
        }
        metrics.push(m);
        let every = trainer.config.checkpoint_every;
        if let (Some(dir), true) = (out_dir, every > 0 && trainer.step % every == 0) {
            save_checkpoint(&trainer.checkpoint(), dir.join(format!("step_{}.odmc", trainer.step)))?;
        }
    }
    if let Some((mut w, path)) = csv {
        w.flush().map_err(|e| OdmError::io(&path, e))?;
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&trainer.checkpoint(), dir.join("final.odmc"))?;
    }
    Ok(FitOutput { trainer, metrics })
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ODMC";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: TrainConfig,
    pub step: u64,
    pub params: ParamStore<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn model(&self) -> Result<OdmModel<T>> {
        OdmModel::from_params(self.config.resolved().model, self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.push(CHECKPOINT_VERSION);
        b.push(T::DTYPE);
        b.extend_from_slice(&self.step.to_le_bytes());
        let cfg = self.config.to_json();
        b.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        b.extend_from_slice(cfg.as_bytes());
        b.extend_from_slice(&fnv64(cfg.as_bytes()).to_le_bytes());
        b.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, a) in self.params.iter() {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(a.shape().len() as u8);
            for &d in a.shape() {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            push_data(&mut b, a);
        }
        b.extend_from_slice(&self.adam.t.to_le_bytes());
        for a in self.adam.m.iter().chain(&self.adam.v) {
            push_data(&mut b, a);
        }
        let sum = fnv64(&b);
        b.extend_from_slice(&sum.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(OdmError::Format {
                offset: 0,
                message: "missing ODMC magic".into(),
            });
        }
        let version = r.u8()?;
        if version != CHECKPOINT_VERSION {
            return Err(OdmError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let dtype_at = r.pos;
        let dtype = r.u8()?;
        if dtype != T::DTYPE {
            return Err(OdmError::Format {
                offset: dtype_at,
                message: format!("tensor dtype {dtype} does not match the requested {}", T::DTYPE),
            });
        }
        let step = r.u64()?;
        let cfg_len = r.u32()? as usize;
        let cfg_at = r.pos;
        let cfg_bytes = r.take(cfg_len)?;
        let hash = r.u64()?;
        if hash != fnv64(cfg_bytes) {
            return Err(OdmError::Format {
                offset: cfg_at,
                message: "config hash mismatch".into(),
            });
        }
        let config: TrainConfig = std::str::from_utf8(cfg_bytes)
            .ok()
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| OdmError::Format {
                offset: cfg_at,
                message: "embedded config is not a valid training config".into(),
            })?;
        let n = r.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name_len = r.u16()? as usize;
            let name_at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| OdmError::Format {
                    offset: name_at,
                    message: "parameter name is not UTF-8".into(),
                })?
                .to_string();
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let at = r.pos;
            let a = r.array::<T>(&shape)?;
            params.push(name, a).map_err(|e| OdmError::Format {
                offset: at,
                message: e.to_string(),
            })?;
        }
        let t = r.u64()?;
        let mut moments = Vec::with_capacity(2 * n);
        for k in 0..2 * n {
            let shape = params.array(k % n).shape().to_vec();
            moments.push(r.array::<T>(&shape)?);
        }
        let sum_at = r.pos;
        let stored = r.u64()?;
        if stored != fnv64(&bytes[..sum_at]) {
            return Err(OdmError::Format {
                offset: sum_at,
                message: "checksum mismatch".into(),
            });
        }
        if r.pos != bytes.len() {
            return Err(OdmError::Format {
                offset: r.pos,
                message: "trailing bytes after checksum".into(),
            });
        }
        let v = moments.split_off(n);
        Ok(Checkpoint {
            config,
            step,
            params,
            adam: AdamState { t, m: moments, v },
        })
    }
}

fn push_data<T: Real>(b: &mut Vec<u8>, a: &Array<T>) {
    for &x in a.data() {
        b.extend_from_slice(&x.to_le_bytes_vec());
    }
}

/// 64-bit FNV-1a.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(OdmError::Format {
                offset: self.pos,
                message: format!("truncated: needed {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn array<T: Real>(&mut self, shape: &[usize]) -> Result<Array<T>> {
        let at = self.pos;
        let len: usize = shape.iter().product();
        let width = std::mem::size_of::<T>();
        let raw = self.take(len.saturating_mul(width))?;
        let data = raw.chunks_exact(width).map(T::from_le_slice).collect();
        Array::new(shape, data).map_err(|e| OdmError::Format {
            offset: at,
            message: e.to_string(),
        })
    }
}

pub fn save_checkpoint<T: Real>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| OdmError::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| OdmError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests;
