use super::{OdmConfig, ParamStore, TokenBatch, IMAGE_CHANNELS, MASK_BIAS};
use crate::error::{OdmError, Result};
use crate::nd::{Array, Real, Tape, Var};

/// Parameters recorded on a tape, addressable by name.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    names: std::collections::HashMap<String, usize>,
}

impl Bound {
    pub(super) fn new<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, trainable: bool) -> Self {
        let mut vars = Vec::with_capacity(store.len());
        let mut names = std::collections::HashMap::new();
        for (i, (name, a)) in store.iter().enumerate() {
            let v = if trainable {
                tape.param(a.clone())
            } else {
                tape.constant(a.clone())
            };
            vars.push(v);
            names.insert(name.to_string(), i);
        }
        Bound { vars, names }
    }

    /// Tape handles in parameter-store order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.names
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| OdmError::Validation(format!("model has no parameter `{name}`")))
    }

    /// Points parameter `name` at another tape value.
    pub fn replace(&mut self, name: &str, var: Var) -> Result<()> {
        let i = *self
            .names
            .get(name)
            .ok_or_else(|| OdmError::Validation(format!("model has no parameter `{name}`")))?;
        self.vars[i] = var;
        Ok(())
    }
}

/// Text-branch handles.
#[derive(Debug, Clone)]
pub struct TextVars {
    /// `[B, M, d]`, zero rows for masked instances.
    pub instances: Var,
    /// `[B, d]` mean over present instances.
    pub pooled: Var,
}

#[derive(Debug, Clone)]
pub struct OutputVars {
    /// `[B, 1, H, W]`
    pub logits: Var,
    /// `[B, d]`
    pub img_embed: Var,
    pub txt: Option<TextVars>,
    /// `[B, H'W', M]` softmax over instances for each image position.
    pub attn: Option<Var>,
}

fn conv<T: Real>(t: &mut Tape<T>, p: &Bound, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let w = p.get(&format!("{name}.w"))?;
    let b = p.get(&format!("{name}.b"))?;
    t.conv2d(x, w, Some(b), stride, pad)
}

/// Residual conv stack; returns one feature map per stage, finest first.
pub fn encode_image<T: Real>(cfg: &OdmConfig, t: &mut Tape<T>, p: &Bound, image: Var) -> Result<Vec<Var>> {
    let want = [IMAGE_CHANNELS, cfg.image_size, cfg.image_size];
    let sh = t.shape(image);
    if sh.len() != 4 || sh[1..] != want {
        return Err(OdmError::shape("encode_image", sh, &want));
    }
    let x = t.add_scalar(image, -0.5);
    let mut feats = Vec::with_capacity(cfg.encoder_channels.len());
    let mut h = x;
    for i in 0..cfg.encoder_channels.len() {
        let d = conv(t, p, &format!("enc.s{i}.down"), h, 2, 1)?;
        let d = t.relu(d);
        let r = conv(t, p, &format!("enc.s{i}.res"), d, 1, 1)?;
        let s = t.add(d, r)?;
        h = t.relu(s);
        feats.push(h);
    }
    Ok(feats)
}

fn linear<T: Real>(t: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.get(name)?;
    t.matmul(x, w)
}

/// Splits `[N, L, d]` into `[N * heads, L, d / heads]`.
fn split_heads<T: Real>(t: &mut Tape<T>, x: Var, heads: usize) -> Result<Var> {
    let (n, l, d) = (t.shape(x)[0], t.shape(x)[1], t.shape(x)[2]);
    let x = t.reshape(x, &[n, l, heads, d / heads])?;
    let x = t.permute(x, &[0, 2, 1, 3])?;
    t.reshape(x, &[n * heads, l, d / heads])
}

fn merge_heads<T: Real>(t: &mut Tape<T>, x: Var, n: usize, heads: usize) -> Result<Var> {
    let (l, dh) = (t.shape(x)[1], t.shape(x)[2]);
    let x = t.reshape(x, &[n, heads, l, dh])?;
    let x = t.permute(x, &[0, 2, 1, 3])?;
    t.reshape(x, &[n, l, heads * dh])
}

/// Pre-LN transformer over the present instances; PAD keys are masked.
/// Returns per-instance `[B, M, d]` embeddings and their mean per image.
pub fn encode_text<T: Real>(cfg: &OdmConfig, t: &mut Tape<T>, p: &Bound, tokens: &TokenBatch) -> Result<TextVars> {
    let (bs, m) = (tokens.batch, tokens.instances);
    if m != cfg.max_instances || tokens.len != cfg.max_len {
        return Err(OdmError::shape(
            "encode_text",
            &[tokens.instances, tokens.len],
            &[cfg.max_instances, cfg.max_len],
        ));
    }
    for b in 0..bs {
        if tokens.present_count(b) == 0 {
            return Err(OdmError::Validation(format!("batch element {b} has no text instance")));
        }
    }
    let d = cfg.embed_dim;
    let heads = cfg.text_heads;
    let present: Vec<(usize, usize)> = (0..bs)
        .flat_map(|b| (0..m).map(move |i| (b, i)))
        .filter(|&(b, i)| tokens.present(b, i))
        .collect();
    let n = present.len();
    let lens: Vec<usize> = present.iter().map(|&(b, i)| tokens.row_len(b, i)).collect();
    let l = lens.iter().copied().max().unwrap_or(0).max(1);

    let ids: Vec<Option<usize>> = present
        .iter()
        .flat_map(|&(b, i)| tokens.row(b, i)[..l].iter().map(|&id| Some(id as usize)))
        .collect();
    let emb = t.index_rows(p.get("txt.tok_emb")?, &ids)?;
    let emb = t.reshape(emb, &[n, l, d])?;
    let pos_idx: Vec<Option<usize>> = (0..l).map(Some).collect();
    let pos = t.index_rows(p.get("txt.pos_emb")?, &pos_idx)?;
    let mut x = t.add(emb, pos)?;

    // Key-padding bias; an empty string keeps its first position visible.
    let mut bias = Vec::with_capacity(n * heads * l * l);
    for &len in &lens {
        let visible = len.max(1);
        let row: Vec<T> = (0..l)
            .map(|j| if j < visible { T::ZERO } else { T::from_f64(MASK_BIAS) })
            .collect();
        for _ in 0..heads * l {
            bias.extend_from_slice(&row);
        }
    }
    let bias = t.constant(Array::new(&[n * heads, l, l], bias)?);
    let scale = 1.0 / ((d / heads) as f64).sqrt();

    for layer in 0..cfg.text_depth {
        let name = |s: &str| format!("txt.l{layer}.{s}");
        let h = t.layer_norm(x)?;
        let q = linear(t, p, &name("wq"), h)?;
        let k = linear(t, p, &name("wk"), h)?;
        let v = linear(t, p, &name("wv"), h)?;
        let (q, k, v) = (split_heads(t, q, heads)?, split_heads(t, k, heads)?, split_heads(t, v, heads)?);
        let s = t.bmm(q, k, true)?;
        let s = t.scale(s, scale);
        let s = t.add(s, bias)?;
        let a = t.softmax(s)?;
        let o = t.bmm(a, v, false)?;
        let o = merge_heads(t, o, n, heads)?;
        let o = linear(t, p, &name("wo"), o)?;
        x = t.add(x, o)?;

        let h = t.layer_norm(x)?;
        let f = linear(t, p, &name("ff1.w"), h)?;
        let f = t.add(f, p.get(&name("ff1.b"))?)?;
        let f = t.relu(f);
        let f = linear(t, p, &name("ff2.w"), f)?;
        let f = t.add(f, p.get(&name("ff2.b"))?)?;
        x = t.add(x, f)?;
    }
    let x = t.layer_norm(x)?;

    // Mean over non-PAD positions (position 0 for an empty string).
    let mut w = vec![T::ZERO; n * l];
    for (r, &len) in lens.iter().enumerate() {
        let c = len.max(1);
        for j in 0..c {
            w[r * l + j] = T::from_f64(1.0 / c as f64);
        }
    }
    let w = t.constant(Array::new(&[n, 1, l], w)?);
    let pooled = t.bmm(w, x, false)?;
    let pooled = t.reshape(pooled, &[n, d])?;

    let mut slot = vec![None; bs * m];
    for (r, &(b, i)) in present.iter().enumerate() {
        slot[b * m + i] = Some(r);
    }
    let inst = t.index_rows(pooled, &slot)?;
    let instances = t.reshape(inst, &[bs, m, d])?;

    let mut w = vec![T::ZERO; bs * m];
    for b in 0..bs {
        let c = tokens.present_count(b) as f64;
        for i in 0..m {
            if tokens.present(b, i) {
                w[b * m + i] = T::from_f64(1.0 / c);
            }
        }
    }
    let w = t.constant(Array::new(&[bs, 1, m], w)?);
    let pooled = t.bmm(w, instances, false)?;
    let pooled = t.reshape(pooled, &[bs, d])?;
    Ok(TextVars { instances, pooled })
}

/// Image positions query the text instances. Returns the residual-fused
/// feature map and the `[B, H'W', M]` attention weights.
pub fn cross_attend<T: Real>(
    cfg: &OdmConfig,
    t: &mut Tape<T>,
    p: &Bound,
    feats: Var,
    instances: Var,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let fs = t.shape(feats).to_vec();
    let is = t.shape(instances).to_vec();
    if fs.len() != 4 || is.len() != 3 || fs[0] != is[0] || is[2] != cfg.embed_dim || mask.len() != is[0] * is[1] {
        return Err(OdmError::shape("cross_attend", &fs, &is));
    }
    let (bs, c, hh, ww) = (fs[0], fs[1], fs[2], fs[3]);
    let (m, hw) = (is[1], fs[2] * fs[3]);
    let f = t.reshape(feats, &[bs, c, hw])?;
    let f = t.permute(f, &[0, 2, 1])?;
    let q = linear(t, p, "xattn.wq", f)?;
    let k = linear(t, p, "xattn.wk", instances)?;
    let v = linear(t, p, "xattn.wv", instances)?;
    let s = t.bmm(q, k, true)?;
    let s = t.scale(s, 1.0 / (cfg.embed_dim as f64).sqrt());
    let mut bias = Vec::with_capacity(bs * hw * m);
    for b in 0..bs {
        let row: Vec<T> = (0..m)
            .map(|i| if mask[b * m + i] { T::ZERO } else { T::from_f64(MASK_BIAS) })
            .collect();
        for _ in 0..hw {
            bias.extend_from_slice(&row);
        }
    }
    let bias = t.constant(Array::new(&[bs, hw, m], bias)?);
    let s = t.add(s, bias)?;
    let attn = t.softmax(s)?;
    let o = t.bmm(attn, v, false)?;
    let o = t.permute(o, &[0, 2, 1])?;
    let o = t.reshape(o, &[bs, c, hh, ww])?;
    let fused = t.add(feats, o)?;
    Ok((fused, attn))
}

/// Per-sample, per-channel standardization of a `[B, C, H, W]` array.
pub fn standardize_channels<T: Real>(x: &Array<T>) -> Result<Array<T>> {
    let sh = x.shape();
    if sh.len() != 4 {
        return Err(OdmError::shape("standardize_channels", sh, &[0, 0, 0, 0]));
    }
    let hw = sh[2] * sh[3];
    let mut out = Vec::with_capacity(x.data().len());
    for plane in x.data().chunks_exact(hw.max(1)) {
        let mean = plane.iter().map(|v| v.to_f64()).sum::<f64>() / hw as f64;
        let var = plane.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / hw as f64;
        let scale = 1.0 / (var.sqrt() + STANDARDIZE_EPS);
        out.extend(plane.iter().map(|v| T::from_f64((v.to_f64() - mean) * scale)));
    }
    Array::new(sh, out)
}

const STANDARDIZE_EPS: f64 = 1e-2;

/// FPN decoder: nearest upsampling merged with 1x1 laterals from each finer
/// encoder stage and the standardized image, then a 1x1 head to one channel.
pub fn decode<T: Real>(t: &mut Tape<T>, p: &Bound, fused: Var, feats: &[Var], image: Var) -> Result<Var> {
    let top = conv(t, p, "dec.top", fused, 1, 0)?;
    let mut x = t.relu(top);
    let centred = t.constant(standardize_channels(t.value(image))?);
    let laterals: Vec<Var> = feats.iter().rev().skip(1).copied().chain(std::iter::once(centred)).collect();
    for (j, &src) in laterals.iter().enumerate() {
        let up = t.upsample_nearest(x, 2)?;
        let lat = conv(t, p, &format!("dec.lat{j}"), src, 1, 0)?;
        let s = t.add(up, lat)?;
        x = t.relu(s);
    }
    conv(t, p, "dec.head", x, 1, 0)
}

pub(super) fn record<T: Real>(
    cfg: &OdmConfig,
    t: &mut Tape<T>,
    p: &Bound,
    image: Var,
    tokens: &TokenBatch,
) -> Result<OutputVars> {
    let feats = encode_image(cfg, t, p, image)?;
    let top = *feats.last().expect("at least one stage");
    let bs = t.shape(image)[0];

    let (c, hw) = (t.shape(top)[1], t.shape(top)[2] * t.shape(top)[3]);
    let g = t.reshape(top, &[bs, c, hw])?;
    let g = t.mean_last_axis(g)?;
    let g = linear(t, p, "img_proj.w", g)?;
    let img_embed = t.add(g, p.get("img_proj.b")?)?;

    let (fused, txt, attn) = if cfg.text_encoder {
        if tokens.batch != bs {
            return Err(OdmError::shape("forward", &[bs], &[tokens.batch]));
        }
        let txt = encode_text(cfg, t, p, tokens)?;
        let (fused, attn) = cross_attend(cfg, t, p, top, txt.instances, &tokens.mask)?;
        (fused, Some(txt), Some(attn))
    } else {
        (top, None, None)
    };
    let logits = decode(t, p, fused, &feats, image)?;
    Ok(OutputVars {
        logits,
        img_embed,
        txt,
        attn,
    })
}

/// Turns `[B, H'W', M]` position-wise attention into `[B, M, H'W']`
/// per-instance heatmaps normalized over positions; masked rows are zero.
pub(super) fn instance_heatmaps<T: Real>(attn: &Array<T>, mask: &[bool]) -> Result<Array<T>> {
    let (bs, hw, m) = (attn.shape()[0], attn.shape()[1], attn.shape()[2]);
    let mut out = vec![T::ZERO; bs * m * hw];
    for b in 0..bs {
        for i in 0..m {
            if !mask[b * m + i] {
                continue;
            }
            let col: Vec<f64> = (0..hw).map(|q| attn.data()[(b * hw + q) * m + i].to_f64()).collect();
            let total: f64 = col.iter().sum();
            for (q, v) in col.iter().enumerate() {
                let val = if total > 0.0 { v / total } else { 1.0 / hw as f64 };
                out[(b * m + i) * hw + q] = T::from_f64(val);
            }
        }
    }
    Array::new(&[bs, m, hw], out)
}
