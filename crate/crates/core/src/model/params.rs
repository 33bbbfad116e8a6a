use std::collections::HashMap;

use rand::Rng;

use super::{OdmConfig, IMAGE_CHANNELS, VOCAB_SIZE};
use crate::error::{OdmError, Result};
use crate::nd::{Array, Real};

/// Named parameter arrays in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    arrays: Vec<Array<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            arrays: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(OdmError::Validation(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.arrays.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Array<T>> {
        self.index_of(name).map(|i| &self.arrays[i])
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn array(&self, i: usize) -> &Array<T> {
        &self.arrays[i]
    }

    pub fn array_mut(&mut self, i: usize) -> &mut Array<T> {
        &mut self.arrays[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array<T>)> {
        self.names.iter().map(String::as_str).zip(&self.arrays)
    }

    pub fn num_elements(&self) -> usize {
        self.arrays.iter().map(Array::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            arrays: self.arrays.iter().map(Array::cast).collect(),
            index: self.index.clone(),
        }
    }
}

struct Init<'a, T, R> {
    store: ParamStore<T>,
    rng: &'a mut R,
}

impl<T: Real, R: Rng> Init<'_, T, R> {
    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) -> Result<()> {
        let a = Array::uniform(shape, bound, self.rng)?;
        self.store.push(name, a)
    }

    fn zeros(&mut self, name: String, shape: &[usize]) -> Result<()> {
        self.store.push(name, Array::zeros(shape)?)
    }

    /// Conv feeding a ReLU: He-uniform weights, zero bias.
    fn conv(&mut self, name: &str, out: usize, inp: usize, k: usize) -> Result<()> {
        let fan_in = (inp * k * k) as f64;
        self.uniform(format!("{name}.w"), &[out, inp, k, k], (6.0 / fan_in).sqrt())?;
        self.zeros(format!("{name}.b"), &[out])
    }

    /// Linear map `[inp, out]` with unit-variance-preserving weights.
    fn linear(&mut self, name: String, inp: usize, out: usize) -> Result<()> {
        self.uniform(name, &[inp, out], (3.0 / inp as f64).sqrt())
    }
}

pub(super) fn init<T: Real>(cfg: &OdmConfig, rng: &mut impl Rng) -> Result<ParamStore<T>> {
    let mut it = Init {
        store: ParamStore::new(),
        rng,
    };
    let d = cfg.embed_dim;
    let chans = &cfg.encoder_channels;
    let mut prev = IMAGE_CHANNELS;
    for (i, &c) in chans.iter().enumerate() {
        it.conv(&format!("enc.s{i}.down"), c, prev, 3)?;
        it.conv(&format!("enc.s{i}.res"), c, c, 3)?;
        prev = c;
    }
    let top = *chans.last().expect("validated non-empty");
    it.linear("img_proj.w".into(), top, d)?;
    it.zeros("img_proj.b".into(), &[d])?;

    if cfg.text_encoder {
        it.uniform("txt.tok_emb".into(), &[VOCAB_SIZE, d], 3f64.sqrt())?;
        it.uniform("txt.pos_emb".into(), &[cfg.max_len, d], 0.1 * 3f64.sqrt())?;
        let ff = d * cfg.ffn_mult;
        for l in 0..cfg.text_depth {
            for w in ["wq", "wk", "wv", "wo"] {
                it.linear(format!("txt.l{l}.{w}"), d, d)?;
            }
            it.linear(format!("txt.l{l}.ff1.w"), d, ff)?;
            it.zeros(format!("txt.l{l}.ff1.b"), &[ff])?;
            it.linear(format!("txt.l{l}.ff2.w"), ff, d)?;
            it.zeros(format!("txt.l{l}.ff2.b"), &[d])?;
        }
        it.linear("xattn.wq".into(), top, d)?;
        it.linear("xattn.wk".into(), d, d)?;
        it.linear("xattn.wv".into(), d, top)?;
    }

    let dc = cfg.decoder_channels;
    it.conv("dec.top", dc, top, 1)?;
    // Laterals from the next-finer encoder stage down to the raw image.
    for (j, &c) in chans.iter().rev().skip(1).chain(std::iter::once(&IMAGE_CHANNELS)).enumerate() {
        it.conv(&format!("dec.lat{j}"), dc, c, 1)?;
    }
    it.conv("dec.head", 1, dc, 1)?;
    Ok(it.store)
}
