//! Layers and parameter storage for the denoisers and the discriminator.
//!
//! Parameters live in a [`ParamStore`] (name -> tensor, insertion-ordered so
//! checkpoints have a stable layout). A forward pass loads them into a fresh
//! [`Graph`] as leaves and runs layer objects that only hold [`ParamId`]s.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::invalid_arg;
use crate::math::F64Ext;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Handle to one named parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Insertion-ordered named parameter set.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter name `{name}`"
        );
        self.entries.push((name, t));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].1
    }

    pub fn set(&mut self, id: ParamId, t: Tensor) {
        assert_eq!(self.entries[id.0].1.shape(), t.shape(), "parameter shape change");
        self.entries[id.0].1 = t;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Replace every tensor from `other` (shapes and names must match).
    pub fn copy_from(&mut self, other: &ParamStore) {
        assert_eq!(self.entries.len(), other.entries.len(), "parameter count mismatch");
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            assert_eq!(dst.0, src.0, "parameter name mismatch");
            assert_eq!(dst.1.shape(), src.1.shape(), "parameter shape mismatch");
            dst.1 = src.1.clone();
        }
    }

    /// Load all parameters into a graph as leaves.
    pub fn load(&self, g: &mut Graph, trainable: bool) -> ParamVars {
        let vars = self
            .entries
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), trainable))
            .collect();
        ParamVars { vars }
    }

    /// Collect gradients for every parameter, in store order. Parameters
    /// unused by the loss come back as zeros.
    pub fn collect_grads(&self, g: &Graph, pv: &ParamVars, loss: Var) -> Vec<Tensor> {
        let grads = g.backward(loss);
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (_, t))| {
                grads
                    .get(pv.vars[i])
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}

/// Parameter leaves for one forward pass.
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Assemble from raw leaves in store order (test instrumentation).
    pub(crate) fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }
}

/// Weight initialization flavors.
#[derive(Debug, Clone, Copy)]
pub enum WeightInit {
    /// Glorot-style scale sqrt(2 / (fan_in + fan_out)).
    Xavier,
    /// All zeros (used where a block must start as the identity).
    Zeros,
    /// Normal with an explicit standard deviation.
    Std(f64),
}

fn init_weight(shape: &[usize], init: WeightInit, rng: &mut Rng) -> Tensor {
    match init {
        WeightInit::Xavier => {
            let fan_in = shape[0] as f64;
            let fan_out = shape[shape.len() - 1] as f64;
            Tensor::randn(shape, (2.0 / (fan_in + fan_out)).sqrt(), rng)
        }
        WeightInit::Zeros => Tensor::zeros(shape),
        WeightInit::Std(s) => Tensor::randn(shape, s, rng),
    }
}

/// Affine map x @ W + b with W stored (in, out).
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        input: usize,
        output: usize,
        init: WeightInit,
    ) -> Self {
        let w = ps.add(alloc::format!("{name}.w"), init_weight(&[input, output], init, rng));
        let b = ps.add(alloc::format!("{name}.b"), Tensor::zeros(&[output]));
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, pv: &ParamVars, x: Var) -> Var {
        let y = g.matmul(x, pv.var(self.w));
        g.add_row_bcast(y, pv.var(self.b))
    }
}

/// Layer norm with learned gain/bias.
#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = ps.add(alloc::format!("{name}.gamma"), Tensor::full(&[dim], 1.0));
        let beta = ps.add(alloc::format!("{name}.beta"), Tensor::zeros(&[dim]));
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, pv: &ParamVars, x: Var) -> Var {
        g.layer_norm(x, pv.var(self.gamma), pv.var(self.beta))
    }
}

/// Single-head scaled dot-product attention.
///
/// `forward(x, x)` is self-attention; passing a different key/value source
/// gives cross-attention. No positional information is added here, so
/// self-attention is permutation-equivariant on its own.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    dim: usize,
}

impl Attention {
    pub fn new(ps: &mut ParamStore, rng: &mut Rng, name: &str, dim: usize) -> Self {
        Self {
            wq: Linear::new(ps, rng, &alloc::format!("{name}.q"), dim, dim, WeightInit::Xavier),
            wk: Linear::new(ps, rng, &alloc::format!("{name}.k"), dim, dim, WeightInit::Xavier),
            wv: Linear::new(ps, rng, &alloc::format!("{name}.v"), dim, dim, WeightInit::Xavier),
            wo: Linear::new(ps, rng, &alloc::format!("{name}.o"), dim, dim, WeightInit::Xavier),
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, pv: &ParamVars, queries: Var, keys_values: Var) -> Var {
        let q = self.wq.forward(g, pv, queries);
        let k = self.wk.forward(g, pv, keys_values);
        let v = self.wv.forward(g, pv, keys_values);
        let scores = g.matmul_tb(q, k);
        let scaled = g.scale(scores, 1.0 / (self.dim as f64).sqrt());
        let attn = g.softmax(scaled);
        let ctx = g.matmul(attn, v);
        self.wo.forward(g, pv, ctx)
    }
}

/// Feature-wise linear modulation from a conditioning row vector.
///
/// gamma = 1 + cond @ Wg, beta = cond @ Wb, output = x * gamma + beta.
/// Both maps start at zero, so the block is the identity at init.
#[derive(Debug, Clone, Copy)]
pub struct Film {
    pub wg: ParamId,
    pub wb: ParamId,
    dim: usize,
}

impl Film {
    pub fn new(ps: &mut ParamStore, name: &str, cond_dim: usize, dim: usize) -> Self {
        let wg = ps.add(alloc::format!("{name}.gamma_map"), Tensor::zeros(&[cond_dim, dim]));
        let wb = ps.add(alloc::format!("{name}.beta_map"), Tensor::zeros(&[cond_dim, dim]));
        Self { wg, wb, dim }
    }

    /// `x` is (T, D); `cond` is a (1, C) row.
    pub fn forward(&self, g: &mut Graph, pv: &ParamVars, x: Var, cond: Var) -> Var {
        let gamma = g.matmul(cond, pv.var(self.wg));
        let gamma = g.add_const(gamma, 1.0);
        let gamma = g.reshape(gamma, &[self.dim]);
        let beta = g.matmul(cond, pv.var(self.wb));
        let beta = g.reshape(beta, &[self.dim]);
        let scaled = g.mul_row_bcast(x, gamma);
        g.add_row_bcast(scaled, beta)
    }
}

/// Two-layer GELU MLP.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub lin1: Linear,
    pub lin2: Linear,
}

impl Mlp {
    pub fn new(ps: &mut ParamStore, rng: &mut Rng, name: &str, dim: usize, hidden: usize) -> Self {
        Self {
            lin1: Linear::new(ps, rng, &alloc::format!("{name}.fc1"), dim, hidden, WeightInit::Xavier),
            lin2: Linear::new(ps, rng, &alloc::format!("{name}.fc2"), hidden, dim, WeightInit::Xavier),
        }
    }

    pub fn forward(&self, g: &mut Graph, pv: &ParamVars, x: Var) -> Var {
        let h = self.lin1.forward(g, pv, x);
        let h = g.gelu(h);
        self.lin2.forward(g, pv, h)
    }
}

/// Sinusoidal embedding of a scalar position: interleaved (sin, cos) pairs
/// over geometrically spaced frequencies.
pub fn sinusoidal_embed(t: f64, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(invalid_arg!("sinusoidal embedding dim must be even, got {dim}"));
    }
    let half = dim / 2;
    let mut data = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(i as f64) * (10000.0_f64.ln()) / half as f64).exp();
        data.push((t * freq).sin());
        data.push((t * freq).cos());
    }
    Ok(Tensor::new(&[1, dim], data))
}

/// Stacked sinusoidal embeddings for a list of positions: (n, dim).
pub fn sinusoidal_table(positions: &[f64], dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(positions.len() * dim);
    for &p in positions {
        data.extend_from_slice(sinusoidal_embed(p, dim)?.data());
    }
    Ok(Tensor::new(&[positions.len(), dim], data))
}
