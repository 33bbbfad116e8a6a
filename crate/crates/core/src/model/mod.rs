//! The text-prompted destylization network: a residual conv encoder, a
//! transformer text encoder, image-to-text cross-attention and an FPN-style
//! decoder back to input resolution.

mod charset;
mod net;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OdmError, Result};
use crate::nd::{Array, Real, Tape, Var};

pub use charset::{tokenize, tokenize_with, Charset, TokenBatch, MAX_INSTANCES, MAX_LEN, PAD, UNK, VOCAB_SIZE};
pub use net::{cross_attend, decode, encode_image, encode_text, Bound, OutputVars, TextVars};
pub use params::ParamStore;

/// Additive attention bias for masked keys.
pub const MASK_BIAS: f64 = -1e9;
/// Input channels of the image encoder.
pub const IMAGE_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdmConfig {
    /// Square input side; the label canvas uses the same size.
    pub image_size: usize,
    pub embed_dim: usize,
    /// One stride-2 residual stage per entry.
    pub encoder_channels: Vec<usize>,
    pub text_depth: usize,
    pub text_heads: usize,
    /// Feed-forward width as a multiple of `embed_dim`.
    pub ffn_mult: usize,
    pub decoder_channels: usize,
    pub max_instances: usize,
    pub max_len: usize,
    /// With the text branch off the network is a plain image-to-label model.
    pub text_encoder: bool,
}

impl Default for OdmConfig {
    fn default() -> Self {
        OdmConfig {
            image_size: 128,
            embed_dim: 64,
            encoder_channels: vec![16, 32, 48],
            text_depth: 2,
            text_heads: 4,
            ffn_mult: 2,
            decoder_channels: 32,
            max_instances: MAX_INSTANCES,
            max_len: MAX_LEN,
            text_encoder: true,
        }
    }
}

impl OdmConfig {
    /// Full-size settings: 512 px input and a 6-layer text encoder.
    pub fn full_scale() -> Self {
        OdmConfig {
            image_size: 512,
            embed_dim: 256,
            encoder_channels: vec![64, 128, 256],
            text_depth: 6,
            text_heads: 8,
            ffn_mult: 4,
            decoder_channels: 64,
            ..OdmConfig::default()
        }
    }

    /// Tiny network for finite-difference checks.
    pub fn micro() -> Self {
        OdmConfig {
            image_size: 16,
            embed_dim: 8,
            encoder_channels: vec![4, 4, 4],
            text_depth: 1,
            text_heads: 2,
            ffn_mult: 2,
            decoder_channels: 4,
            max_instances: 4,
            max_len: 6,
            text_encoder: true,
        }
    }

    pub fn stride(&self) -> usize {
        1 << self.encoder_channels.len()
    }

    /// Side of the coarsest feature grid.
    pub fn grid(&self) -> usize {
        self.image_size / self.stride()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OdmError::Validation(m));
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return bad("encoder_channels must be non-empty and positive".into());
        }
        if self.image_size == 0 || self.image_size % self.stride() != 0 {
            return bad(format!(
                "image_size {} is not divisible by the encoder stride {}",
                self.image_size,
                self.stride()
            ));
        }
        if self.embed_dim == 0 || self.decoder_channels == 0 || self.ffn_mult == 0 {
            return bad("embed_dim, decoder_channels and ffn_mult must be positive".into());
        }
        if self.text_heads == 0 || self.embed_dim % self.text_heads != 0 {
            return bad(format!(
                "embed_dim {} is not divisible by text_heads {}",
                self.embed_dim, self.text_heads
            ));
        }
        if self.max_instances == 0 || self.max_len == 0 {
            return bad("max_instances and max_len must be positive".into());
        }
        Ok(())
    }
}

/// Plain values produced by [`OdmModel::forward`].
#[derive(Debug, Clone)]
pub struct ModelOutput<T> {
    /// `[B, 1, H, W]` pre-sigmoid destylization map.
    pub logits: Array<T>,
    /// `[B, d]`
    pub img_embed: Array<T>,
    /// `[B, d]`; absent with the text branch off.
    pub txt_embed: Option<Array<T>>,
    /// `[B, M, d]` per-instance text embeddings, zero rows where masked.
    pub inst_embed: Option<Array<T>>,
    /// `[B, M, H'W']` attention of each instance over image positions,
    /// normalized per instance; masked rows are zero.
    pub attn: Option<Array<T>>,
    /// `[B, M]` instance-present mask.
    pub mask: Vec<bool>,
    /// `(H', W')` of the attention grid.
    pub grid: (usize, usize),
}

impl<T: Real> ModelOutput<T> {
    /// Heatmaps for the present instances of sample `b`, keyed by instance slot.
    pub fn heatmaps(&self, b: usize) -> Vec<(usize, Vec<T>)> {
        let Some(attn) = &self.attn else { return Vec::new() };
        let (m, hw) = (attn.shape()[1], attn.shape()[2]);
        (0..m)
            .filter(|&i| self.mask[b * m + i])
            .map(|i| {
                let start = (b * m + i) * hw;
                (i, attn.data()[start..start + hw].to_vec())
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct OdmModel<T> {
    config: OdmConfig,
    params: ParamStore<T>,
}

impl<T: Real> OdmModel<T> {
    /// Seeded initialization.
    pub fn new(config: OdmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = params::init(&config, &mut rng)?;
        Ok(OdmModel { config, params })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(config: OdmConfig, params: ParamStore<T>) -> Result<Self> {
        let fresh = OdmModel::<T>::new(config.clone(), 0)?;
        if fresh.params.len() != params.len() {
            return Err(OdmError::Validation(format!(
                "expected {} parameter arrays, got {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for ((n1, a1), (n2, a2)) in fresh.params.iter().zip(params.iter()) {
            if n1 != n2 || a1.shape() != a2.shape() {
                return Err(OdmError::Validation(format!(
                    "parameter mismatch: expected {n1} {:?}, got {n2} {:?}",
                    a1.shape(),
                    a2.shape()
                )));
            }
        }
        Ok(OdmModel { config, params })
    }

    pub fn config(&self) -> &OdmConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> OdmModel<U> {
        OdmModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Records every parameter on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        Bound::new(tape, &self.params, trainable)
    }

    /// Records the whole network on `tape`.
    pub fn record(&self, tape: &mut Tape<T>, bound: &Bound, image: Var, tokens: &TokenBatch) -> Result<OutputVars> {
        net::record(&self.config, tape, bound, image, tokens)
    }

    /// Evaluates the network on `[B, 3, S, S]` images in `[0, 1]`.
    pub fn forward(&self, image: &Array<T>, tokens: &TokenBatch) -> Result<ModelOutput<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let img = tape.constant(image.clone());
        let out = self.record(&mut tape, &bound, img, tokens)?;
        let g = self.config.grid();
        let attn = match out.attn {
            Some(a) => Some(net::instance_heatmaps(tape.value(a), &tokens.mask)?),
            None => None,
        };
        Ok(ModelOutput {
            logits: tape.value(out.logits).clone(),
            img_embed: tape.value(out.img_embed).clone(),
            txt_embed: out.txt.as_ref().map(|t| tape.value(t.pooled).clone()),
            inst_embed: out.txt.as_ref().map(|t| tape.value(t.instances).clone()),
            attn,
            mask: tokens.mask.clone(),
            grid: (g, g),
        })
    }
}

#[cfg(test)]
mod tests;
