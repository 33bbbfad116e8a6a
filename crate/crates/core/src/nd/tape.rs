use super::{matmul_into, Array, Real};
use crate::error::{OdmError, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Probabilities are clamped to `[eps, 1 - eps]` inside the BCE log terms.
pub const LOG_CLAMP_EPS: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, trans_b: bool },
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<T> },
    IndexRows { table: Var, idx: Vec<Option<usize>> },
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    MeanLast(Var),
    Conv2d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    Upsample(Var, usize),
    BceWithLogits { logits: Var, target: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    L2NormRows { x: Var, norms: Vec<T> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Array<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records operations for one forward pass; [`Tape::backward`] walks them
/// in reverse.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    grads: Vec<Option<Array<T>>>,
}

impl<T: Real> Grads<T> {
    /// Gradient of a leaf created with [`Tape::param`]. Leaves the loss does
    /// not depend on get zeros; constants and intermediates give `None`.
    pub fn of(&self, v: Var) -> Option<&Array<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn suffix_of(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn permute_data<T: Copy>(src: &[T], shape: &[usize], axes: &[usize]) -> (Vec<T>, Vec<usize>) {
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides = strides(shape);
    let step: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
    let nd = axes.len();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; nd];
    let mut off = 0usize;
    for _ in 0..src.len() {
        out.push(src[off]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            off += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= step[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `[lo, hi)` whose tap `kx` lands inside the input row.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let (s, pad) = (self.stride, self.pad);
        // ox * s + kx - pad >= 0  and  < w
        let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(s) };
        let hi = if self.w + pad > kx {
            ((self.w + pad - kx - 1) / s + 1).min(self.ow)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    /// Input row read by output row `oy` through tap `ky`, if any.
    fn source_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let y = oy * self.stride + ky;
        (y >= self.pad && y - self.pad < self.h).then(|| y - self.pad)
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let p = self.oh * self.ow;
        let s = self.stride;
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    let (lo, hi) = self.valid_cols(kx);
                    for oy in 0..self.oh {
                        let dst = &mut cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        let Some(y) = self.source_row(oy, ky) else {
                            dst.fill(T::ZERO);
                            continue;
                        };
                        dst[..lo].fill(T::ZERO);
                        dst[hi..].fill(T::ZERO);
                        let src = &plane[y * self.w..(y + 1) * self.w];
                        let x0 = lo * s + kx - self.pad;
                        if s == 1 {
                            dst[lo..hi].copy_from_slice(&src[x0..x0 + hi - lo]);
                        } else {
                            for (j, d) in dst[lo..hi].iter_mut().enumerate() {
                                *d = src[x0 + j * s];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Real>(&self, cols: &[T], x: &mut [T]) {
        let p = self.oh * self.ow;
        let s = self.stride;
        for c in 0..self.c {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    let (lo, hi) = self.valid_cols(kx);
                    for oy in 0..self.oh {
                        let Some(y) = self.source_row(oy, ky) else { continue };
                        let src = &cols[row + oy * self.ow + lo..row + oy * self.ow + hi];
                        let x0 = lo * s + kx - self.pad;
                        let dst = &mut plane[y * self.w..(y + 1) * self.w];
                        if s == 1 {
                            dst[x0..x0 + src.len()].iter_mut().zip(src).for_each(|(d, &v)| *d += v);
                        } else {
                            for (j, &v) in src.iter().enumerate() {
                                dst[x0 + j * s] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Array<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Array<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, a: Var, value: Array<T>, op: Op<T>) -> Var {
        let g = self.nodes[a.0].needs_grad;
        self.push(value, op, g)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn array(&self, shape: Vec<usize>, data: Vec<T>) -> Array<T> {
        Array::new(&shape, data).expect("op produced consistent shape")
    }

    fn broadcast(&mut self, name: &str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !suffix_of(av.shape(), bv.shape()) {
            return Err(OdmError::shape(name, av.shape(), bv.shape()));
        }
        let nb = bv.len();
        let data = av.data().iter().enumerate().map(|(i, &x)| f(x, bv.data()[i % nb])).collect();
        let value = self.array(av.shape().to_vec(), data);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(value, op, g))
    }

    /// `a + b`, with `b` broadcast over `a`'s leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::from_f64(s);
        let value = self.value(a).map(|x| x * s);
        self.unary(a, value, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let s = T::from_f64(s);
        let value = self.value(a).map(|x| x + s);
        self.unary(a, value, Op::AddScalar(a))
    }

    /// `a [.., k] x b [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ash, bsh) = (av.shape(), bv.shape());
        if ash.is_empty() || bsh.len() != 2 || ash[ash.len() - 1] != bsh[0] {
            return Err(OdmError::shape("matmul", ash, bsh));
        }
        let (k, n) = (bsh[0], bsh[1]);
        let m = av.len() / k;
        let mut out = vec![T::ZERO; m * n];
        matmul_into(av.data(), false, bv.data(), false, &mut out, m, k, n, false);
        let mut shape = ash[..ash.len() - 1].to_vec();
        shape.push(n);
        let value = self.array(shape, out);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), g))
    }

    /// Batched `a [B, m, k] x b [B, k, n]`, or `b [B, n, k]` transposed when
    /// `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (ash, bsh) = (av.shape(), bv.shape());
        let ok = ash.len() == 3
            && bsh.len() == 3
            && ash[0] == bsh[0]
            && if trans_b { ash[2] == bsh[2] } else { ash[2] == bsh[1] };
        if !ok {
            return Err(OdmError::shape("bmm", ash, bsh));
        }
        let (bs, m, k) = (ash[0], ash[1], ash[2]);
        let n = if trans_b { bsh[1] } else { bsh[2] };
        let mut out = vec![T::ZERO; bs * m * n];
        for i in 0..bs {
            matmul_into(
                &av.data()[i * m * k..],
                false,
                &bv.data()[i * k * n..],
                trans_b,
                &mut out[i * m * n..],
                m,
                k,
                n,
                false,
            );
        }
        let value = self.array(vec![bs, m, n], out);
        let g = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Bmm { a, b, trans_b }, g))
    }

    /// Reorders axes; output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let mut seen = vec![false; axes.len()];
        let valid = axes.len() == av.shape().len()
            && axes.iter().all(|&x| x < axes.len() && !std::mem::replace(&mut seen[x], true));
        if !valid {
            return Err(OdmError::Shape(format!("permute: axes {axes:?} invalid for shape {:?}", av.shape())));
        }
        let (data, shape) = permute_data(av.data(), av.shape(), axes);
        let value = self.array(shape, data);
        Ok(self.unary(a, value, Op::Permute(a, axes.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.value(a);
        let value = av
            .reshape(shape)
            .map_err(|_| OdmError::shape("reshape", av.shape(), shape))?;
        Ok(self.unary(a, value, Op::Reshape(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > T::ZERO { x } else { T::ZERO });
        self.unary(a, value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| T::from_f64(sigmoid(x.to_f64())));
        self.unary(a, value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(Real::exp);
        self.unary(a, value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= T::ZERO) {
            return Err(OdmError::Domain("log of a non-positive value".into()));
        }
        let value = self.value(a).map(Real::ln);
        Ok(self.unary(a, value, Op::Log(a)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(Real::abs);
        self.unary(a, value, Op::Abs(a))
    }

    fn last_axis(&self, name: &str, a: Var) -> Result<(usize, usize)> {
        let shape = self.value(a).shape();
        match shape.last() {
            Some(&d) => Ok((self.value(a).len() / d, d)),
            None => Err(OdmError::Shape(format!("{name}: needs at least one axis, got a scalar"))),
        }
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (rows, d) = self.last_axis("softmax", a)?;
        let av = self.value(a);
        let mut out = Vec::with_capacity(av.len());
        for r in 0..rows {
            let row = &av.data()[r * d..(r + 1) * d];
            let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
            let s: f64 = e.iter().sum();
            out.extend(e.iter().map(|v| T::from_f64(v / s)));
        }
        let value = self.array(av.shape().to_vec(), out);
        Ok(self.unary(a, value, Op::Softmax(a)))
    }

    /// Normalizes each last-axis row to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        let (rows, d) = self.last_axis("layer_norm", a)?;
        let av = self.value(a);
        let mut out = Vec::with_capacity(av.len());
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &av.data()[r * d..(r + 1) * d];
            let mean = row.iter().map(|v| v.to_f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(T::from_f64(is));
            out.extend(row.iter().map(|v| T::from_f64((v.to_f64() - mean) * is)));
        }
        let value = self.array(av.shape().to_vec(), out);
        Ok(self.unary(a, value, Op::LayerNorm { x: a, inv_std }))
    }

    /// Gathers rows of a `[V, d]` table; `None` yields a zero row.
    pub fn index_rows(&mut self, table: Var, idx: &[Option<usize>]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(OdmError::Shape(format!("index_rows: table must be 2-D, got {:?}", tv.shape())));
        }
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = vec![T::ZERO; idx.len() * d];
        for (r, i) in idx.iter().enumerate() {
            if let Some(i) = *i {
                if i >= v {
                    return Err(OdmError::Domain(format!("index_rows: row {i} out of range for {v} rows")));
                }
                out[r * d..(r + 1) * d].copy_from_slice(&tv.data()[i * d..(i + 1) * d]);
            }
        }
        let value = Array::new(&[idx.len(), d], out)?;
        Ok(self.unary(table, value, Op::IndexRows { table, idx: idx.to_vec() }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|v| v.to_f64()).sum::<f64>();
        self.unary(a, Array::scalar(T::from_f64(s)), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data().iter().map(|v| v.to_f64()).sum::<f64>() / av.len() as f64;
        self.unary(a, Array::scalar(T::from_f64(s)), Op::Mean(a))
    }

    fn reduce_last(&mut self, name: &str, a: Var, mean: bool) -> Result<Var> {
        let (rows, d) = self.last_axis(name, a)?;
        let av = self.value(a);
        let div = if mean { d as f64 } else { 1.0 };
        let out = (0..rows)
            .map(|r| T::from_f64(av.data()[r * d..(r + 1) * d].iter().map(|v| v.to_f64()).sum::<f64>() / div))
            .collect();
        let shape = av.shape()[..av.shape().len() - 1].to_vec();
        let value = self.array(shape, out);
        let op = if mean { Op::MeanLast(a) } else { Op::SumLast(a) };
        Ok(self.unary(a, value, op))
    }

    pub fn sum_last_axis(&mut self, a: Var) -> Result<Var> {
        self.reduce_last("sum_last_axis", a, false)
    }

    pub fn mean_last_axis(&mut self, a: Var) -> Result<Var> {
        self.reduce_last("mean_last_axis", a, true)
    }

    fn conv_geom(&self, x: Var, w: Var, stride: usize, pad: usize) -> Result<ConvGeom> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(OdmError::shape("conv2d", xs, ws));
        }
        if stride == 0 {
            return Err(OdmError::Domain("conv2d: stride must be positive".into()));
        }
        let (h, wd, kh, kw) = (xs[2], xs[3], ws[2], ws[3]);
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(OdmError::shape("conv2d", xs, ws));
        }
        Ok(ConvGeom {
            c: xs[1],
            h,
            w: wd,
            kh,
            kw,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
            stride,
            pad,
        })
    }

    /// Cross-correlation of `x [N, C, H, W]` with `w [O, C, kh, kw]`, plus an
    /// optional per-channel bias `[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geo = self.conv_geom(x, w, stride, pad)?;
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, o) = (xv.shape()[0], wv.shape()[0]);
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(OdmError::shape("conv2d bias", self.shape(b), &[o]));
            }
        }
        let ckk = geo.c * geo.kh * geo.kw;
        let p = geo.oh * geo.ow;
        let in_sz = geo.c * geo.h * geo.w;
        let mut out = vec![T::ZERO; n * o * p];
        let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![T::ZERO; ckk * p] };
        for i in 0..n {
            let xi = &xv.data()[i * in_sz..(i + 1) * in_sz];
            let src: &[T] = if geo.is_pointwise() {
                xi
            } else {
                geo.im2col(xi, &mut cols);
                &cols
            };
            matmul_into(wv.data(), false, src, false, &mut out[i * o * p..], o, ckk, p, false);
            if let Some(b) = bias {
                let bv = self.value(b).data();
                for (oc, &bias) in bv.iter().enumerate() {
                    out[(i * o + oc) * p..(i * o + oc + 1) * p].iter_mut().for_each(|v| *v += bias);
                }
            }
        }
        let value = self.array(vec![n, o, geo.oh, geo.ow], out);
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let g = self.any_grad(&inputs);
        Ok(self.push(value, Op::Conv2d { x, w, b: bias, stride, pad }, g))
    }

    /// Nearest-neighbour upsampling of `[N, C, H, W]` by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 4 || factor == 0 {
            return Err(OdmError::Shape(format!(
                "upsample_nearest: needs a 4-D input and positive factor, got {:?} and {factor}",
                xv.shape()
            )));
        }
        let (nc, h, w) = (xv.shape()[0] * xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let (oh, ow) = (h * factor, w * factor);
        let mut out = Vec::with_capacity(nc * oh * ow);
        for plane in 0..nc {
            for y in 0..oh {
                let row = &xv.data()[(plane * h + y / factor) * w..(plane * h + y / factor + 1) * w];
                for xx in 0..ow {
                    out.push(row[xx / factor]);
                }
            }
        }
        let value = self.array(vec![xv.shape()[0], xv.shape()[1], oh, ow], out);
        Ok(self.unary(x, value, Op::Upsample(x, factor)))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against a 0/1 target
    /// of the same shape.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Array<T>) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape() != target.shape() {
            return Err(OdmError::shape("bce_with_logits", lv.shape(), target.shape()));
        }
        let eps = LOG_CLAMP_EPS;
        let mut total = 0.0;
        for (&x, &y) in lv.data().iter().zip(target.data()) {
            let p = sigmoid(x.to_f64()).clamp(eps, 1.0 - eps);
            let y = y.to_f64();
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        let value = Array::scalar(T::from_f64(total / lv.len() as f64));
        Ok(self.unary(
            logits,
            value,
            Op::BceWithLogits {
                logits,
                target: target.data().to_vec(),
            },
        ))
    }

    /// Mean softmax cross-entropy of `[n, c]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let sh = lv.shape();
        if sh.len() != 2 || sh[0] != targets.len() {
            return Err(OdmError::shape("cross_entropy", sh, &[targets.len()]));
        }
        let c = sh[1];
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(OdmError::Domain(format!("cross_entropy: class {t} out of range for {c}")));
            }
            let row = &lv.data()[r * c..(r + 1) * c];
            let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
            total += lse - row[t].to_f64();
            probs.extend(row.iter().map(|v| T::from_f64((v.to_f64() - lse).exp())));
        }
        let value = Array::scalar(T::from_f64(total / targets.len() as f64));
        Ok(self.unary(
            logits,
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Scales each row of `[n, d]` to unit Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 2 {
            return Err(OdmError::Shape(format!("l2_normalize_rows: needs 2-D input, got {:?}", xv.shape())));
        }
        let d = xv.shape()[1];
        let mut out = Vec::with_capacity(xv.len());
        let mut norms = Vec::new();
        for (r, row) in xv.data().chunks(d).enumerate() {
            let nrm = row.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt();
            if !(nrm > 0.0) {
                return Err(OdmError::Validation(format!("row {r} has zero norm")));
            }
            norms.push(T::from_f64(nrm));
            out.extend(row.iter().map(|v| T::from_f64(v.to_f64() / nrm)));
        }
        let value = self.array(xv.shape().to_vec(), out);
        Ok(self.unary(x, value, Op::L2NormRows { x, norms }))
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(OdmError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::ONE]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backprop(node, &g, &mut grads);
        }
        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.needs_grad) {
                (Op::Leaf, true) => Some(match g {
                    Some(g) => Array::new(node.value.shape(), g).expect("gradient shape"),
                    None => Array {
                        shape: node.value.shape().to_vec(),
                        data: vec![T::ZERO; node.value.len()],
                    },
                }),
                _ => None,
            })
            .collect();
        Ok(Grads { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn reduce_to(&self, g: &[T], n: usize) -> Vec<T> {
        if g.len() == n {
            return g.to_vec();
        }
        let mut out = vec![T::ZERO; n];
        for chunk in g.chunks_exact(n) {
            out.iter_mut().zip(chunk).for_each(|(o, &v)| *o += v);
        }
        out
    }

    fn backprop(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                if self.wants(*b) {
                    let mut gb = self.reduce_to(g, self.value(*b).len());
                    if matches!(node.op, Op::Sub(..)) {
                        gb.iter_mut().for_each(|v| *v = -*v);
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let nb = bv.len();
                if self.wants(*a) {
                    let ga = g.iter().enumerate().map(|(i, &gi)| gi * bv[i % nb]).collect();
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let prod: Vec<T> = g.iter().zip(av).map(|(&gi, &ai)| gi * ai).collect();
                    self.accumulate(grads, *b, self.reduce_to(&prod, nb));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.iter().map(|&v| v * *s).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let m = av.len() / k;
                if self.wants(*a) {
                    let mut ga = vec![T::ZERO; m * k];
                    matmul_into(g, false, bv.data(), true, &mut ga, m, n, k, false);
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![T::ZERO; k * n];
                    matmul_into(av.data(), true, g, false, &mut gb, k, m, n, false);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (bs, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = node.value.shape()[2];
                if self.wants(*a) {
                    let mut ga = vec![T::ZERO; bs * m * k];
                    for i in 0..bs {
                        let (gi, bi) = (&g[i * m * n..], &bv.data()[i * k * n..]);
                        // dA = dC B^T, or dC B when B was used transposed.
                        matmul_into(gi, false, bi, !*trans_b, &mut ga[i * m * k..], m, n, k, false);
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![T::ZERO; bs * k * n];
                    for i in 0..bs {
                        let (gi, ai) = (&g[i * m * n..], &av.data()[i * m * k..]);
                        if *trans_b {
                            matmul_into(gi, true, ai, false, &mut gb[i * k * n..], n, m, k, false);
                        } else {
                            matmul_into(ai, true, gi, false, &mut gb[i * k * n..], k, m, n, false);
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Permute(a, axes) => {
                let mut inv = vec![0; axes.len()];
                for (i, &ax) in axes.iter().enumerate() {
                    inv[ax] = i;
                }
                let (ga, _) = permute_data(g, node.value.shape(), &inv);
                self.accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let ga = g.iter().zip(y).map(|(&gi, &yi)| if yi > T::ZERO { gi } else { T::ZERO }).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g.iter().zip(y).map(|(&gi, &yi)| gi * yi * (T::ONE - yi)).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                let ga = g.iter().zip(y).map(|(&gi, &yi)| gi * yi).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Log(a) => {
                let xv = self.value(*a).data();
                let ga = g.iter().zip(xv).map(|(&gi, &xi)| gi / xi).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Abs(a) => {
                let xv = self.value(*a).data();
                let ga = g
                    .iter()
                    .zip(xv)
                    .map(|(&gi, &xi)| {
                        if xi > T::ZERO {
                            gi
                        } else if xi < T::ZERO {
                            -gi
                        } else {
                            T::ZERO
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Softmax(a) => {
                let d = *node.value.shape().last().unwrap();
                let mut ga = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks(d).zip(y.chunks(d)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    ga.extend(gr.iter().zip(yr).map(|(&gi, &yi)| yi * (gi - dot)));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, inv_std } => {
                let d = *node.value.shape().last().unwrap();
                let dn = T::from_f64(d as f64);
                let mut ga = Vec::with_capacity(g.len());
                for ((gr, yr), &is) in g.chunks(d).zip(y.chunks(d)).zip(inv_std) {
                    let mg: T = gr.iter().copied().sum::<T>() / dn;
                    let mgy: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>() / dn;
                    ga.extend(gr.iter().zip(yr).map(|(&gi, &yi)| is * (gi - mg - yi * mgy)));
                }
                self.accumulate(grads, *x, ga);
            }
            Op::IndexRows { table, idx } => {
                let tv = self.value(*table);
                let d = tv.shape()[1];
                let mut gt = vec![T::ZERO; tv.len()];
                for (r, i) in idx.iter().enumerate() {
                    if let Some(i) = *i {
                        for (dst, &src) in gt[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *dst += src;
                        }
                    }
                }
                self.accumulate(grads, *table, gt);
            }
            Op::Sum(a) => self.accumulate(grads, *a, vec![g[0]; self.value(*a).len()]),
            Op::Mean(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![g[0] / T::from_f64(n as f64); n]);
            }
            Op::SumLast(a) | Op::MeanLast(a) => {
                let av = self.value(*a);
                let d = *av.shape().last().unwrap();
                let s = if matches!(node.op, Op::MeanLast(_)) {
                    T::ONE / T::from_f64(d as f64)
                } else {
                    T::ONE
                };
                let ga = (0..av.len()).map(|i| g[i / d] * s).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let geo = self.conv_geom(*x, *w, *stride, *pad).expect("validated in forward");
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, o) = (xv.shape()[0], wv.shape()[0]);
                let ckk = geo.c * geo.kh * geo.kw;
                let p = geo.oh * geo.ow;
                let in_sz = geo.c * geo.h * geo.w;
                let (want_x, want_w) = (self.wants(*x), self.wants(*w));
                let mut gx = vec![T::ZERO; if want_x { xv.len() } else { 0 }];
                let mut gw = vec![T::ZERO; if want_w { wv.len() } else { 0 }];
                let mut cols = vec![T::ZERO; if geo.is_pointwise() { 0 } else { ckk * p }];
                let mut dcols = vec![T::ZERO; if want_x && !geo.is_pointwise() { ckk * p } else { 0 }];
                for i in 0..n {
                    let gi = &g[i * o * p..(i + 1) * o * p];
                    if want_w {
                        let xi = &xv.data()[i * in_sz..(i + 1) * in_sz];
                        let src: &[T] = if geo.is_pointwise() {
                            xi
                        } else {
                            geo.im2col(xi, &mut cols);
                            &cols
                        };
                        matmul_into(gi, false, src, true, &mut gw, o, p, ckk, true);
                    }
                    if want_x {
                        let gxi = &mut gx[i * in_sz..(i + 1) * in_sz];
                        if geo.is_pointwise() {
                            matmul_into(wv.data(), true, gi, false, gxi, ckk, o, p, false);
                        } else {
                            matmul_into(wv.data(), true, gi, false, &mut dcols, ckk, o, p, false);
                            geo.col2im_add(&dcols, gxi);
                        }
                    }
                }
                if want_x {
                    self.accumulate(grads, *x, gx);
                }
                if want_w {
                    self.accumulate(grads, *w, gw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut gb = vec![T::ZERO; o];
                        for (j, chunk) in g.chunks(p).enumerate() {
                            gb[j % o] += chunk.iter().copied().sum::<T>();
                        }
                        self.accumulate(grads, *b, gb);
                    }
                }
            }
            Op::Upsample(x, f) => {
                let xs = self.shape(*x);
                let (nc, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
                let ow = w * f;
                let mut gx = vec![T::ZERO; nc * h * w];
                for (r, grow) in g.chunks_exact(ow).enumerate() {
                    let (plane, yy) = (r / (h * f), r % (h * f) / f);
                    let dst = &mut gx[(plane * h + yy) * w..(plane * h + yy + 1) * w];
                    for (d, block) in dst.iter_mut().zip(grow.chunks_exact(*f)) {
                        *d += block.iter().copied().sum::<T>();
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::BceWithLogits { logits, target } => {
                let lv = self.value(*logits).data();
                let s = g[0].to_f64() / lv.len() as f64;
                let gl = lv
                    .iter()
                    .zip(target)
                    .map(|(&x, &t)| T::from_f64((sigmoid(x.to_f64()) - t.to_f64()) * s))
                    .collect();
                self.accumulate(grads, *logits, gl);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = probs.len() / targets.len();
                let s = g[0] / T::from_f64(targets.len() as f64);
                let mut gl: Vec<T> = probs.iter().map(|&p| p * s).collect();
                for (r, &t) in targets.iter().enumerate() {
                    gl[r * c + t] -= s;
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::L2NormRows { x, norms } => {
                let d = node.value.shape()[1];
                let mut gx = Vec::with_capacity(g.len());
                for ((gr, yr), &nrm) in g.chunks(d).zip(y.chunks(d)).zip(norms) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    gx.extend(gr.iter().zip(yr).map(|(&gi, &yi)| (gi - yi * dot) / nrm));
                }
                self.accumulate(grads, *x, gx);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
