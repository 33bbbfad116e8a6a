//! Training objectives: pixel BCE against the glyph label, an L1 distance in
//! the feature space of a frozen conv pyramid, and a symmetric image/text
//! contrastive term.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OdmError, Result};
use crate::nd::{Array, Real, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OdmError::Validation(format!("loss weight {name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// `alpha * seg + beta * ocr + gamma * bc` on plain numbers.
    pub fn combine(&self, seg: f64, ocr: f64, bc: f64) -> Result<f64> {
        check_components(seg, ocr, bc)?;
        Ok(self.alpha * seg + self.beta * ocr + self.gamma * bc)
    }
}

/// Loss settings as they appear in the training config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub extractor_seed: u64,
    /// Replaces the seeded extractor when set.
    pub extractor_weights_path: Option<PathBuf>,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        LossConfig {
            alpha: w.alpha,
            beta: w.beta,
            gamma: w.gamma,
            temperature: 1.0,
            extractor_seed: 0,
            extractor_weights_path: None,
        }
    }
}

impl LossConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(OdmError::Validation(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }

    pub fn extractor<T: Real>(&self) -> Result<FeatureExtractor<T>> {
        match &self.extractor_weights_path {
            Some(p) => FeatureExtractor::load_json(p),
            None => Ok(FeatureExtractor::seeded(self.extractor_seed)),
        }
    }
}

fn check_components(seg: f64, ocr: f64, bc: f64) -> Result<()> {
    for (component, v) in [("seg", seg), ("ocr", ocr), ("bc", bc)] {
        if !v.is_finite() {
            return Err(OdmError::Numeric {
                component,
                detail: String::new(),
            });
        }
    }
    Ok(())
}

/// Mean pixel BCE between `[B, 1, H, W]` logits and a binary target.
pub fn seg_loss<T: Real>(t: &mut Tape<T>, logits: Var, target: &Array<T>) -> Result<Var> {
    t.bce_with_logits(logits, target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorLayer<T> {
    /// `[out, in, k, k]`
    pub weight: Array<T>,
    pub bias: Array<T>,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
}

/// Frozen conv pyramid whose every layer output enters the feature distance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T> {
    layers: Vec<ExtractorLayer<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    shape: [usize; 4],
    weight: Vec<f64>,
    bias: Vec<f64>,
    stride: usize,
    pad: usize,
    relu: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractorFile {
    layers: Vec<LayerFile>,
}

pub const EXTRACTOR_CHANNELS: [usize; 4] = [3, 8, 16, 32];

impl<T: Real> FeatureExtractor<T> {
    /// Three 3x3 stride-2 ReLU convs, 3 -> 8 -> 16 -> 32 channels, He-uniform
    /// weights. Biases are small and non-zero so that units fed only by dead
    /// activations sit off the ReLU kink.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = EXTRACTOR_CHANNELS
            .windows(2)
            .map(|io| {
                let bound = (6.0 / (io[0] * 9) as f64).sqrt();
                ExtractorLayer {
                    weight: Array::uniform(&[io[1], io[0], 3, 3], bound, &mut rng).expect("non-empty"),
                    bias: Array::uniform(&[io[1]], 0.1, &mut rng).expect("non-empty"),
                    stride: 2,
                    pad: 1,
                    relu: true,
                }
            })
            .collect();
        FeatureExtractor { layers }
    }

    pub fn from_layers(layers: Vec<ExtractorLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(OdmError::Validation("feature extractor needs at least one layer".into()));
        }
        let mut prev: Option<usize> = None;
        for (i, l) in layers.iter().enumerate() {
            let s = l.weight.shape();
            if s.len() != 4 || l.bias.shape() != [s[0]] || l.stride == 0 {
                return Err(OdmError::Shape(format!(
                    "extractor layer {i}: weight {s:?} with bias {:?} and stride {}",
                    l.bias.shape(),
                    l.stride
                )));
            }
            if let Some(p) = prev {
                if p != s[1] {
                    return Err(OdmError::shape("extractor chain", &[p], &[s[1]]));
                }
            }
            prev = Some(s[0]);
        }
        Ok(FeatureExtractor { layers })
    }

    /// Reads `{"layers": [{"shape", "weight", "bias", "stride", "pad", "relu"}]}`.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OdmError::io(path, e))?;
        let file: ExtractorFile = serde_json::from_str(&text)
            .map_err(|e| OdmError::Validation(format!("{}: {e}", path.display())))?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                Ok(ExtractorLayer {
                    weight: Array::from_f64(&l.shape, &l.weight)?,
                    bias: Array::from_f64(&[l.shape[0]], &l.bias)?,
                    stride: l.stride,
                    pad: l.pad,
                    relu: l.relu,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[ExtractorLayer<T>] {
        &self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].weight.shape()[1]
    }

    /// Per-layer features of `[B, C, H, W]`, where `C` is 1 or the
    /// extractor's input width. A single channel is treated as replicated.
    pub fn record(&self, t: &mut Tape<T>, x: Var) -> Result<Vec<Var>> {
        let c = t.shape(x).get(1).copied().unwrap_or(0);
        let cin = self.in_channels();
        if t.shape(x).len() != 4 || (c != 1 && c != cin) {
            return Err(OdmError::shape("ocr_lpips input", t.shape(x), &[cin]));
        }
        let mut h = x;
        let mut feats = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let w = if i == 0 && c == 1 && cin != 1 {
                fold_input_channels(&l.weight)
            } else {
                l.weight.clone()
            };
            let w = t.constant(w);
            let b = t.constant(l.bias.clone());
            h = t.conv2d(h, w, Some(b), l.stride, l.pad)?;
            if l.relu {
                h = t.relu(h);
            }
            feats.push(h);
        }
        Ok(feats)
    }

    pub fn cast<U: Real>(&self) -> FeatureExtractor<U> {
        FeatureExtractor {
            layers: self
                .layers
                .iter()
                .map(|l| ExtractorLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                    stride: l.stride,
                    pad: l.pad,
                    relu: l.relu,
                })
                .collect(),
        }
    }
}

/// Replicating a one-channel input equals convolving with input-summed weights.
fn fold_input_channels<T: Real>(w: &Array<T>) -> Array<T> {
    let s = w.shape();
    let (o, i, kk) = (s[0], s[1], s[2] * s[3]);
    let mut out = vec![T::ZERO; o * kk];
    for oc in 0..o {
        for ic in 0..i {
            for k in 0..kk {
                out[oc * kk + k] += w.data()[(oc * i + ic) * kk + k];
            }
        }
    }
    Array::new(&[o, 1, s[2], s[3]], out).expect("folded shape")
}

/// Sum over layers of the L1 feature distance divided by the layer's
/// spatial size, averaged over the batch.
pub fn ocr_lpips<T: Real>(t: &mut Tape<T>, fx: &FeatureExtractor<T>, pred: Var, target: Var) -> Result<Var> {
    if t.shape(pred) != t.shape(target) {
        return Err(OdmError::shape("ocr_lpips", t.shape(pred), t.shape(target)));
    }
    let batch = t.shape(pred)[0];
    let fp = fx.record(t, pred)?;
    let ft = fx.record(t, target)?;
    let mut total: Option<Var> = None;
    for (a, b) in fp.into_iter().zip(ft) {
        let s = t.shape(a);
        let spatial = s[2] * s[3];
        let d = t.sub(a, b)?;
        let d = t.abs(d);
        let d = t.sum(d);
        let term = t.scale(d, 1.0 / (spatial * batch) as f64);
        total = Some(match total {
            Some(acc) => t.add(acc, term)?,
            None => term,
        });
    }
    Ok(total.expect("extractor has layers"))
}

/// Symmetric cross-entropy over cosine similarities of paired `[B, d]` rows.
pub fn batch_contrastive<T: Real>(t: &mut Tape<T>, img: Var, txt: Var, temperature: f64) -> Result<Var> {
    if t.shape(img) != t.shape(txt) || t.shape(img).len() != 2 {
        return Err(OdmError::shape("batch_contrastive", t.shape(img), t.shape(txt)));
    }
    let b = t.shape(img)[0];
    let i = t.l2_normalize_rows(img)?;
    let tx = t.l2_normalize_rows(txt)?;
    let txt_t = t.permute(tx, &[1, 0])?;
    let sim = t.matmul(i, txt_t)?;
    let sim = t.scale(sim, 1.0 / temperature);
    let labels: Vec<usize> = (0..b).collect();
    let i2t = t.cross_entropy(sim, &labels)?;
    let sim_t = t.permute(sim, &[1, 0])?;
    let t2i = t.cross_entropy(sim_t, &labels)?;
    t.add(i2t, t2i)
}

/// Weighted sum of the three components; a non-finite component is an error.
pub fn total_loss<T: Real>(t: &mut Tape<T>, seg: Var, ocr: Var, bc: Var, w: &LossWeights) -> Result<Var> {
    let v = |t: &Tape<T>, x: Var| t.value(x).data()[0].to_f64();
    check_components(v(t, seg), v(t, ocr), v(t, bc))?;
    let a = t.scale(seg, w.alpha);
    let b = t.scale(ocr, w.beta);
    let c = t.scale(bc, w.gamma);
    let ab = t.add(a, b)?;
    t.add(ab, c)
}
