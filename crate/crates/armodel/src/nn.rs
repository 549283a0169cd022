use std::collections::BTreeMap;

use candle_core::{Device, Tensor, Var, D};
use candle_nn::ops::softmax;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

/// Named trainable parameters, initialized from a seeded stream in
/// construction order.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    rng: ChaCha8Rng,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, device: Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            device,
        }
    }

    pub fn normal(&mut self, name: &str, dims: &[usize], std: f64) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = (0..n).map(|_| (self.rng.sample::<f64, _>(StandardNormal) * std) as f32).collect();
        self.insert(name, Tensor::from_vec(data, dims, &self.device)?)
    }

    pub fn fill(&mut self, name: &str, dims: &[usize], value: f32) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        self.insert(name, Tensor::from_vec(vec![value; n], dims, &self.device)?)
    }

    fn insert(&mut self, name: &str, t: Tensor) -> Result<Tensor> {
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        let old = self.vars.insert(name.to_string(), var);
        assert!(old.is_none(), "parameter {name} registered twice");
        Ok(out)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    pub fn all(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn device(&self) -> &Device {
        &self.device
    }
}

#[derive(Clone)]
pub struct Linear {
    w: Tensor,
    b: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, out: usize, std: f64, bias: bool) -> Result<Self> {
        let w = store.normal(&format!("{name}.weight"), &[inp, out], std)?;
        let b = if bias {
            Some(store.fill(&format!("{name}.bias"), &[out], 0.0)?)
        } else {
            None
        };
        Ok(Self { w, b })
    }

    /// Applies to the last dimension of `x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut dims = x.dims().to_vec();
        let inp = *dims.last().expect("linear input has no dimensions");
        let rows = x.elem_count() / inp;
        let mut y = x.reshape((rows, inp))?.matmul(&self.w)?;
        if let Some(b) = &self.b {
            y = y.broadcast_add(b)?;
        }
        *dims.last_mut().unwrap() = self.w.dim(1)?;
        Ok(y.reshape(dims)?)
    }
}

/// Built from elementary ops so every path has a backward rule.
#[derive(Clone)]
pub struct LayerNorm {
    gain: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(Self {
            gain: store.fill(&format!("{name}.gain"), &[width], 1.0)?,
            bias: store.fill(&format!("{name}.bias"), &[width], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + Self::EPS)?.sqrt()?)?;
        Ok(xn.broadcast_mul(&self.gain)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Clone)]
pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, out_std: f64) -> Result<Self> {
        let std = 0.02;
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), width, width, std, true)?,
            k: Linear::new(store, &format!("{name}.k"), width, width, std, true)?,
            v: Linear::new(store, &format!("{name}.v"), width, width, std, true)?,
            o: Linear::new(store, &format!("{name}.o"), width, width, out_std, true)?,
            heads,
        })
    }

    /// `xq` is `[B, S, d]`, `xkv` is `[B, M, d]` and `mask` is an additive
    /// `[B, 1, S, M]` tensor holding 0 or -inf.
    pub fn forward(&self, xq: &Tensor, xkv: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (b, s, d) = xq.dims3()?;
        let m = xkv.dim(1)?;
        let h = self.heads;
        let dh = d / h;
        let split = |t: Tensor, n: usize| -> Result<Tensor> { Ok(t.reshape((b, n, h, dh))?.transpose(1, 2)?.contiguous()?) };
        let q = split(self.q.forward(xq)?, s)?;
        let k = split(self.k.forward(xkv)?, m)?;
        let v = split(self.v.forward(xkv)?, m)?;
        let att = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (dh as f64).sqrt()))?;
        let p = softmax(&att.broadcast_add(mask)?, D::Minus1)?;
        let y = p.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, s, d))?;
        self.o.forward(&y)
    }
}

/// Pre-norm self-attention, then cross-attention into the conditioning set,
/// then a feed-forward layer.
#[derive(Clone)]
pub struct Block {
    ln_self: LayerNorm,
    attn: Attention,
    ln_query: LayerNorm,
    ln_context: LayerNorm,
    cross: Attention,
    ln_mlp: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

impl Block {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, heads: usize, mlp: usize, out_std: f64) -> Result<Self> {
        Ok(Self {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), width)?,
            attn: Attention::new(store, &format!("{name}.self"), width, heads, out_std)?,
            ln_query: LayerNorm::new(store, &format!("{name}.ln_query"), width)?,
            ln_context: LayerNorm::new(store, &format!("{name}.ln_context"), width)?,
            cross: Attention::new(store, &format!("{name}.cross"), width, heads, out_std)?,
            ln_mlp: LayerNorm::new(store, &format!("{name}.ln_mlp"), width)?,
            fc1: Linear::new(store, &format!("{name}.fc1"), width, width * mlp, 0.02, true)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), width * mlp, width, out_std, true)?,
        })
    }

    pub fn forward(&self, x: &Tensor, context: &Tensor, self_mask: &Tensor, cross_mask: &Tensor) -> Result<Tensor> {
        let h = self.ln_self.forward(x)?;
        let x = (x + self.attn.forward(&h, &h, self_mask)?)?;
        let q = self.ln_query.forward(&x)?;
        let c = self.ln_context.forward(context)?;
        let x = (&x + self.cross.forward(&q, &c, cross_mask)?)?;
        let h = self.fc2.forward(&self.fc1.forward(&self.ln_mlp.forward(&x)?)?.gelu_erf()?)?;
        Ok((x + h)?)
    }
}
