//! Shared network building blocks on top of candle.
//!
//! All parameters live in a [`ParamStore`] keyed by name, which gives
//! deterministic initialization order, a flat view for the optimizer, and a
//! direct mapping to the checkpoint tensor table. Layer norm is composed from
//! primitive ops (the fused kernel has no f64 path, and the gradient suite
//! runs models in double precision). No code here ever touches a global RNG;
//! dropout masks and init draws come from caller-provided streams.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;

use crate::error::{DuetError, Result};
use crate::rng::DuetRng;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    TruncNormal(f64),
    Zeros,
    Ones,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StoreMode {
    /// Fresh model: `param` creates variables.
    Init,
    /// Checkpoint restore: `param` must find every variable.
    Load,
}

/// Named parameter set backing a model.
#[derive(Clone)]
pub struct ParamStore {
    vars: Arc<Mutex<BTreeMap<String, Var>>>,
    accessed: Arc<Mutex<std::collections::BTreeSet<String>>>,
    pub dtype: DType,
    pub device: Device,
    mode: StoreMode,
}

impl ParamStore {
    pub fn new(dtype: DType, device: &Device) -> Self {
        ParamStore {
            vars: Arc::new(Mutex::new(BTreeMap::new())),
            accessed: Arc::new(Mutex::new(Default::default())),
            dtype,
            device: device.clone(),
            mode: StoreMode::Init,
        }
    }

    /// Store primed with checkpoint tensors; `param` then resolves names
    /// against it and fails loudly on anything missing or misshapen.
    pub fn from_entries(
        entries: &[(String, Vec<usize>, Vec<f32>)],
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (name, shape, data) in entries {
            let t = Tensor::from_vec(data.clone(), shape.as_slice(), device)?.to_dtype(dtype)?;
            vars.insert(name.clone(), Var::from_tensor(&t)?);
        }
        Ok(ParamStore {
            vars: Arc::new(Mutex::new(vars)),
            accessed: Arc::new(Mutex::new(Default::default())),
            dtype,
            device: device.clone(),
            mode: StoreMode::Load,
        })
    }

    pub fn param(
        &self,
        name: &str,
        shape: &[usize],
        init: Init,
        rng: &mut DuetRng,
    ) -> Result<Tensor> {
        self.accessed.lock().unwrap().insert(name.to_string());
        let mut vars = self.vars.lock().unwrap();
        if let Some(var) = vars.get(name) {
            if var.shape().dims() != shape {
                return Err(DuetError::CheckpointMismatch(format!(
                    "parameter '{name}': stored shape {:?}, model wants {shape:?}",
                    var.shape().dims()
                )));
            }
            return Ok(var.as_tensor().clone());
        }
        if self.mode == StoreMode::Load {
            return Err(DuetError::CheckpointMismatch(format!(
                "parameter '{name}' missing from checkpoint"
            )));
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Constant(c) => vec![c; n],
            Init::TruncNormal(std) => (0..n)
                .map(|_| {
                    // Resample outside two standard deviations.
                    loop {
                        let x: f64 = rng.sample(rand_distr::StandardNormal);
                        if x.abs() <= 2.0 {
                            return x * std;
                        }
                    }
                })
                .collect(),
        };
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        vars.insert(name.to_string(), var);
        Ok(out)
    }

    /// All variables in name order (the optimizer consumes this).
    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.lock().unwrap().values().cloned().collect()
    }

    pub fn n_params(&self) -> usize {
        self.vars
            .lock()
            .unwrap()
            .values()
            .map(|v| v.shape().elem_count())
            .sum()
    }

    /// Export for checkpointing: (name, shape, f32 data), name-ordered.
    pub fn to_entries(&self) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>> {
        let vars = self.vars.lock().unwrap();
        let mut out = Vec::with_capacity(vars.len());
        for (name, var) in vars.iter() {
            let t = var.as_tensor().to_dtype(DType::F32)?;
            let shape = t.shape().dims().to_vec();
            let data = t.flatten_all()?.to_vec1::<f32>()?;
            out.push((name.clone(), shape, data));
        }
        Ok(out)
    }

    /// Full-precision export, for tests that re-implement a forward pass.
    pub fn entries_f64(&self) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
        let vars = self.vars.lock().unwrap();
        let mut out = Vec::with_capacity(vars.len());
        for (name, var) in vars.iter() {
            let t = var.as_tensor().to_dtype(DType::F64)?;
            let shape = t.shape().dims().to_vec();
            let data = t.flatten_all()?.to_vec1::<f64>()?;
            out.push((name.clone(), shape, data));
        }
        Ok(out)
    }

    /// After a checkpoint load, every stored tensor must have been claimed by
    /// the model builder.
    pub fn assert_fully_consumed(&self) -> Result<()> {
        let vars = self.vars.lock().unwrap();
        let accessed = self.accessed.lock().unwrap();
        for name in vars.keys() {
            if !accessed.contains(name) {
                return Err(DuetError::CheckpointMismatch(format!(
                    "checkpoint tensor '{name}' not used by this model configuration"
                )));
            }
        }
        Ok(())
    }
}

/// Linear layer; `weight` is `[out, in]`.
///
/// Inputs of any rank are flattened to one 2D matmul (one big gemm beats a
/// batch of small ones on CPU) and reshaped back.
#[derive(Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
    out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        Self::with_bias_init(store, name, in_dim, out_dim, init, Init::Zeros, rng)
    }

    pub fn with_bias_init(
        store: &ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        init: Init,
        bias_init: Init,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        let weight = store.param(&format!("{name}.weight"), &[out_dim, in_dim], init, rng)?;
        let bias = store.param(&format!("{name}.bias"), &[out_dim], bias_init, rng)?;
        Ok(Linear {
            weight,
            bias,
            out_dim,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let last = *dims.last().ok_or_else(|| {
            DuetError::shape("at least 1-d input".to_string(), "scalar".to_string())
        })?;
        let flat = x.reshape(((), last))?;
        let y = flat
            .matmul(&self.weight.t()?)?
            .broadcast_add(&self.bias)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.out_dim;
        Ok(y.reshape(out_dims)?)
    }
}

/// Layer norm without affine parameters, composed from primitives.
pub fn layer_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + eps)?.sqrt()?)?)
}

/// Layer norm with learned scale and shift.
#[derive(Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &ParamStore, name: &str, dim: usize, rng: &mut DuetRng) -> Result<Self> {
        Ok(LayerNorm {
            weight: store.param(&format!("{name}.weight"), &[dim], Init::Ones, rng)?,
            bias: store.param(&format!("{name}.bias"), &[dim], Init::Zeros, rng)?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(layer_norm(x, self.eps)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)?)
    }
}

/// Dropout context threaded through training forward passes. `None` means
/// inference: dropout off, fully deterministic.
pub struct TrainCtx<'a> {
    pub rng: &'a mut DuetRng,
    pub dropout: f64,
}

pub fn dropout(x: &Tensor, ctx: &mut Option<&mut TrainCtx>) -> Result<Tensor> {
    let Some(ctx) = ctx.as_deref_mut() else {
        return Ok(x.clone());
    };
    if ctx.dropout <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - ctx.dropout;
    let n = x.shape().elem_count();
    let mask: Vec<f64> = (0..n)
        .map(|_| {
            if ctx.rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape().clone(), x.device())?.to_dtype(x.dtype())?;
    Ok((x * mask)?)
}

/// Multi-head attention; cross-attention when `kv` differs from `q`.
#[derive(Clone)]
pub struct MultiHeadAttention {
    q_proj: Linear,
    k_proj: Linear,
    v_proj: Linear,
    o_proj: Linear,
    heads: usize,
    head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        if hidden % heads != 0 {
            return Err(DuetError::InvalidConfig(format!(
                "hidden {hidden} not divisible by heads {heads}"
            )));
        }
        let init = Init::TruncNormal(0.02);
        Ok(MultiHeadAttention {
            q_proj: Linear::new(store, &format!("{name}.q"), hidden, hidden, init, rng)?,
            k_proj: Linear::new(store, &format!("{name}.k"), hidden, hidden, init, rng)?,
            v_proj: Linear::new(store, &format!("{name}.v"), hidden, hidden, init, rng)?,
            o_proj: Linear::new(store, &format!("{name}.o"), hidden, hidden, init, rng)?,
            heads,
            head_dim: hidden / heads,
        })
    }

    /// `q_in`: `[B, Tq, H]`, `kv_in`: `[B, Tk, H]` -> `[B, Tq, H]`.
    pub fn forward(
        &self,
        q_in: &Tensor,
        kv_in: &Tensor,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<Tensor> {
        let (b, tq, _) = q_in.dims3()?;
        let (bk, tk, _) = kv_in.dims3()?;
        if b != bk {
            return Err(DuetError::shape(format!("batch {b}"), format!("{bk}")));
        }
        let split = |t: &Tensor, len: usize| -> Result<Tensor> {
            Ok(t.reshape((b, len, self.heads, self.head_dim))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let q = split(&self.q_proj.forward(q_in)?, tq)?;
        let k = split(&self.k_proj.forward(kv_in)?, tk)?;
        let v = split(&self.v_proj.forward(kv_in)?, tk)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let probs = dropout(&probs, ctx)?;
        let out = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .reshape((b, tq, self.heads * self.head_dim))?;
        self.o_proj.forward(&out)
    }
}

/// Two-layer SiLU feed-forward.
#[derive(Clone)]
pub struct FeedForward {
    lin1: Linear,
    lin2: Linear,
}

impl FeedForward {
    pub fn new(
        store: &ParamStore,
        name: &str,
        hidden: usize,
        inner: usize,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        let init = Init::TruncNormal(0.02);
        Ok(FeedForward {
            lin1: Linear::new(store, &format!("{name}.lin1"), hidden, inner, init, rng)?,
            lin2: Linear::new(store, &format!("{name}.lin2"), inner, hidden, init, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Option<&mut TrainCtx>) -> Result<Tensor> {
        let h = candle_nn::ops::silu(&self.lin1.forward(x)?)?;
        let h = dropout(&h, ctx)?;
        self.lin2.forward(&h)
    }
}

/// Pre-norm self-attention encoder block.
#[derive(Clone)]
pub struct EncoderBlock {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl EncoderBlock {
    pub fn new(
        store: &ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        Ok(EncoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), hidden, rng)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), hidden, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), hidden, rng)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), hidden, hidden * 2, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Option<&mut TrainCtx>) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + dropout(&self.attn.forward(&h, &h, ctx)?, ctx)?)?;
        let h = self.ln2.forward(&x)?;
        Ok((&x + dropout(&self.ff.forward(&h, ctx)?, ctx)?)?)
    }
}

/// Cross-attention block: queries from one stream, keys/values from another,
/// with an additive skip from the query stream's input.
#[derive(Clone)]
pub struct CrossBlock {
    ln_q: LayerNorm,
    ln_kv: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl CrossBlock {
    pub fn new(
        store: &ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        Ok(CrossBlock {
            ln_q: LayerNorm::new(store, &format!("{name}.ln_q"), hidden, rng)?,
            ln_kv: LayerNorm::new(store, &format!("{name}.ln_kv"), hidden, rng)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), hidden, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), hidden, rng)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), hidden, hidden * 2, rng)?,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor,
        other: &Tensor,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<Tensor> {
        let q = self.ln_q.forward(x)?;
        let kv = self.ln_kv.forward(other)?;
        let x = (x + dropout(&self.attn.forward(&q, &kv, ctx)?, ctx)?)?;
        let h = self.ln2.forward(&x)?;
        Ok((&x + dropout(&self.ff.forward(&h, ctx)?, ctx)?)?)
    }
}

/// Pre-norm decoder block: self-attention, cross-attention to a memory, FF.
#[derive(Clone)]
pub struct DecoderBlock {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln_mem: LayerNorm,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderBlock {
    pub fn new(
        store: &ParamStore,
        name: &str,
        hidden: usize,
        heads: usize,
        rng: &mut DuetRng,
    ) -> Result<Self> {
        Ok(DecoderBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), hidden, rng)?,
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), hidden, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), hidden, rng)?,
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross"), hidden, heads, rng)?,
            ln_mem: LayerNorm::new(store, &format!("{name}.ln_mem"), hidden, rng)?,
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), hidden, rng)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), hidden, hidden * 2, rng)?,
        })
    }

    pub fn forward(
        &self,
        x: &Tensor,
        memory: &Tensor,
        ctx: &mut Option<&mut TrainCtx>,
    ) -> Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + dropout(&self.self_attn.forward(&h, &h, ctx)?, ctx)?)?;
        let q = self.ln2.forward(&x)?;
        let mem = self.ln_mem.forward(memory)?;
        let x = (&x + dropout(&self.cross_attn.forward(&q, &mem, ctx)?, ctx)?)?;
        let h = self.ln3.forward(&x)?;
        Ok((&x + dropout(&self.ff.forward(&h, ctx)?, ctx)?)?)
    }
}

/// Classic sinusoidal positional table, `[len, dim]`.
pub fn sinusoidal_pe(len: usize, dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = vec![0.0f64; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let exponent = (2 * (i / 2)) as f64 / dim as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Ok(Tensor::from_vec(data, (len, dim), device)?.to_dtype(dtype)?)
}

/// Scalar view of a 0-dim or 1-element tensor as f64.
pub fn scalar_f64(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?
        .flatten_all()?
        .to_vec1::<f64>()?
        .first()
        .copied()
        .ok_or_else(|| DuetError::shape("scalar".to_string(), "empty tensor".to_string()))?)
}
