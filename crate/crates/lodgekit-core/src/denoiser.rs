//! The x0-predicting sequence transformer used by both diffusion stages.
//!
//! Each block is self-attention, cross-attention to the conditioning rows,
//! a GELU MLP, and FiLM modulation from the timestep embedding, all with
//! residual connections and pre-layer-norms. The local stage appends a Foot
//! Refine Block: foot positions, velocities, and ground-contact scores are
//! computed from the base prediction via differentiable forward kinematics,
//! attended to from the motion features, and projected (zero-initialized)
//! to a residual on the root translation and leg rotation channels.

use alloc::vec::Vec;

use crate::diffusion::{fk_positions_graph, X0Model};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::invalid_arg;
use crate::motion::MOTION_CHANNELS;
use crate::nn::{
    sinusoidal_embed, Attention, Film, LayerNorm, Linear, Mlp, ParamStore, ParamVars, WeightInit,
};
use crate::rng::Rng;
use crate::skeleton::{joints, KinematicChain};
use crate::tensor::Tensor;

/// Contact-score thresholds and sharpness for the Foot Refine Block.
/// Height below `height_threshold` (meters) and speed below
/// `speed_threshold` (m/s) count as planted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactScoreParams {
    pub height_threshold: f64,
    pub speed_threshold: f64,
    pub height_sharpness: f64,
    pub speed_sharpness: f64,
}

impl Default for ContactScoreParams {
    fn default() -> Self {
        Self {
            height_threshold: 0.05,
            speed_threshold: 0.1,
            height_sharpness: 200.0,
            speed_sharpness: 100.0,
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub model_dim: usize,
    pub blocks: usize,
    pub time_embed_dim: usize,
    /// Channels per conditioning row fed to cross-attention.
    pub cond_dim: usize,
    pub mlp_hidden: usize,
    /// Append the Foot Refine Block (local stage only).
    pub foot_refine: bool,
    /// Frame rate used by the refine block's velocity features.
    pub fps: f64,
    pub contact_score: ContactScoreParams,
}

impl DenoiserConfig {
    pub fn new(cond_dim: usize) -> Self {
        Self {
            model_dim: 64,
            blocks: 4,
            time_embed_dim: 64,
            cond_dim,
            mlp_hidden: 128,
            foot_refine: false,
            fps: 30.0,
            contact_score: ContactScoreParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.blocks == 0 || self.mlp_hidden == 0 || self.cond_dim == 0 {
            return Err(invalid_arg!("denoiser dimensions must be positive"));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return Err(invalid_arg!("time embedding dim must be positive and even"));
        }
        if !(self.fps > 0.0) {
            return Err(invalid_arg!("fps must be positive"));
        }
        Ok(())
    }
}

struct Block {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    mlp: Mlp,
    film: Film,
}

/// Leg channels receiving the refine residual: root translation plus the
/// 6D blocks of hips, knees, and ankles.
const REFINE_RESIDUAL_DIM: usize = 3 + 6 * 6;

struct FootRefine {
    feat_proj: Linear,
    attn: Attention,
    out_proj: Linear,
}

pub struct Denoiser {
    cfg: DenoiserConfig,
    in_proj: Linear,
    cond_proj: Linear,
    t_fc1: Linear,
    t_fc2: Linear,
    blocks: Vec<Block>,
    out_norm: LayerNorm,
    out_proj: Linear,
    refine: Option<FootRefine>,
}

impl Denoiser {
    /// Register all parameters in `ps` under `name.*`.
    pub fn new(ps: &mut ParamStore, rng: &mut Rng, name: &str, cfg: DenoiserConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        let in_proj =
            Linear::new(ps, rng, &alloc::format!("{name}.in"), MOTION_CHANNELS, d, WeightInit::Xavier);
        let cond_proj =
            Linear::new(ps, rng, &alloc::format!("{name}.cond"), cfg.cond_dim, d, WeightInit::Xavier);
        let t_fc1 = Linear::new(
            ps,
            rng,
            &alloc::format!("{name}.time.fc1"),
            cfg.time_embed_dim,
            d,
            WeightInit::Xavier,
        );
        let t_fc2 = Linear::new(ps, rng, &alloc::format!("{name}.time.fc2"), d, d, WeightInit::Xavier);
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for b in 0..cfg.blocks {
            let p = alloc::format!("{name}.block{b}");
            blocks.push(Block {
                ln1: LayerNorm::new(ps, &alloc::format!("{p}.ln1"), d),
                self_attn: Attention::new(ps, rng, &alloc::format!("{p}.self"), d),
                ln2: LayerNorm::new(ps, &alloc::format!("{p}.ln2"), d),
                cross_attn: Attention::new(ps, rng, &alloc::format!("{p}.cross"), d),
                ln3: LayerNorm::new(ps, &alloc::format!("{p}.ln3"), d),
                mlp: Mlp::new(ps, rng, &alloc::format!("{p}.mlp"), d, cfg.mlp_hidden),
                film: Film::new(ps, &alloc::format!("{p}.film"), d, d),
            });
        }
        let out_norm = LayerNorm::new(ps, &alloc::format!("{name}.out_norm"), d);
        let out_proj = Linear::new(
            ps,
            rng,
            &alloc::format!("{name}.out"),
            d,
            MOTION_CHANNELS,
            WeightInit::Std(0.02),
        );
        let refine = if cfg.foot_refine {
            Some(FootRefine {
                feat_proj: Linear::new(
                    ps,
                    rng,
                    &alloc::format!("{name}.refine.feat"),
                    28,
                    d,
                    WeightInit::Xavier,
                ),
                attn: Attention::new(ps, rng, &alloc::format!("{name}.refine.attn"), d),
                out_proj: Linear::new(
                    ps,
                    rng,
                    &alloc::format!("{name}.refine.out"),
                    d,
                    REFINE_RESIDUAL_DIM,
                    WeightInit::Zeros,
                ),
            })
        } else {
            None
        };
        Ok(Self { cfg, in_proj, cond_proj, t_fc1, t_fc2, blocks, out_norm, out_proj, refine })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    /// Forward pass.
    ///
    /// * `noisy`: (T, 139) noisy motion window.
    /// * `t`: diffusion timestep (embedded sinusoidally).
    /// * `cond_rows`: (S, cond_dim) conditioning rows for cross-attention.
    /// * `pos`: (T, model_dim) positional encoding added after input
    ///   projection; the stages decide what "position" means.
    /// * `use_refine`: apply the Foot Refine Block if the model has one
    ///   (can be disabled at inference for ablations).
    pub fn forward(
        &self,
        g: &mut Graph,
        pv: &ParamVars,
        noisy: Var,
        t: usize,
        cond_rows: Var,
        pos: &Tensor,
        chain: &KinematicChain,
        use_refine: bool,
    ) -> Var {
        let temb = {
            let sin = g.constant(
                sinusoidal_embed(t as f64, self.cfg.time_embed_dim)
                    .expect("validated config has even time dim"),
            );
            let h = self.t_fc1.forward(g, pv, sin);
            let h = g.gelu(h);
            self.t_fc2.forward(g, pv, h)
        };
        let cond = self.cond_proj.forward(g, pv, cond_rows);

        let mut h = self.in_proj.forward(g, pv, noisy);
        let pos_var = g.constant(pos.clone());
        h = g.add(h, pos_var);

        for block in &self.blocks {
            let normed = block.ln1.forward(g, pv, h);
            let sa = block.self_attn.forward(g, pv, normed, normed);
            h = g.add(h, sa);
            let normed = block.ln2.forward(g, pv, h);
            let ca = block.cross_attn.forward(g, pv, normed, cond);
            h = g.add(h, ca);
            let normed = block.ln3.forward(g, pv, h);
            let ff = block.mlp.forward(g, pv, normed);
            h = g.add(h, ff);
            h = block.film.forward(g, pv, h, temb);
        }

        let normed = self.out_norm.forward(g, pv, h);
        let base = self.out_proj.forward(g, pv, normed);

        match (&self.refine, use_refine) {
            (Some(refine), true) => self.apply_refine(g, pv, refine, base, h, chain),
            _ => base,
        }
    }

    /// Foot Refine Block: cross-attend motion features to foot-state
    /// features of the base prediction and add a residual on the root and
    /// leg channels. Zero-initialized output projection makes it the
    /// identity until trained.
    fn apply_refine(
        &self,
        g: &mut Graph,
        pv: &ParamVars,
        refine: &FootRefine,
        base: Var,
        motion_feats: Var,
        chain: &KinematicChain,
    ) -> Var {
        let frames = g.value(base).rows();
        let pos66 = fk_positions_graph(g, base, chain);
        let cs = &self.cfg.contact_score;
        let mut feat_parts: Vec<Var> = Vec::with_capacity(12);
        for &joint_idx in &chain.foot_joints {
            let fp = g.slice_cols(pos66, 3 * joint_idx, 3);
            // Forward-difference velocity, last frame repeated to keep the
            // per-frame feature table rectangular.
            let hi = g.slice_rows(fp, 1, frames - 1);
            let lo = g.slice_rows(fp, 0, frames - 1);
            let vel_short = g.sub(hi, lo);
            let vel_short = g.scale(vel_short, self.cfg.fps);
            let last = g.slice_rows(vel_short, frames - 2, 1);
            let vel = g.concat_rows(&[vel_short, last]);

            let speed_sq = {
                let sq = g.mul(vel, vel);
                g.sum_last_keep(sq)
            };
            let speed = {
                let e = g.add_const(speed_sq, 1e-12);
                g.pow_const(e, 0.5)
            };
            let height = g.slice_cols(fp, 1, 1);
            // score = sigma(a (h0 - height)) * sigma(b (v0 - speed))
            let hterm = {
                let neg = g.scale(height, -cs.height_sharpness);
                let sh = g.add_const(neg, cs.height_sharpness * cs.height_threshold);
                g.sigmoid(sh)
            };
            let vterm = {
                let neg = g.scale(speed, -cs.speed_sharpness);
                let sv = g.add_const(neg, cs.speed_sharpness * cs.speed_threshold);
                g.sigmoid(sv)
            };
            let score = g.mul(hterm, vterm);
            feat_parts.push(fp);
            feat_parts.push(vel);
            feat_parts.push(score);
        }
        let feats = g.concat_cols(&feat_parts);
        let keys = refine.feat_proj.forward(g, pv, feats);
        let attended = refine.attn.forward(g, pv, motion_feats, keys);
        let residual = refine.out_proj.forward(g, pv, attended);

        scatter_leg_residual(g, base, residual)
    }
}

/// Add the (T, 39) residual onto root translation and the hip/knee/ankle
/// 6D channels of `base`.
fn scatter_leg_residual(g: &mut Graph, base: Var, residual: Var) -> Var {
    use joints::{L_ANKLE, L_HIP, L_KNEE};
    // Contiguous channel spans: contacts | root | j0 | j1 j2 | j3 | j4 j5
    // | j6 | j7 j8 | rest. Hips are joints 1-2, knees 4-5, ankles 7-8.
    let rot = |j: usize| 7 + 6 * j;
    let contacts = g.slice_cols(base, 0, 4);
    let root = {
        let b = g.slice_cols(base, 4, 3);
        let r = g.slice_cols(residual, 0, 3);
        g.add(b, r)
    };
    let global_rot = g.slice_cols(base, rot(0), 6);
    let hips = {
        let b = g.slice_cols(base, rot(L_HIP), 12);
        let r = g.slice_cols(residual, 3, 12);
        g.add(b, r)
    };
    let spine1 = g.slice_cols(base, rot(3), 6);
    let knees = {
        let b = g.slice_cols(base, rot(L_KNEE), 12);
        let r = g.slice_cols(residual, 15, 12);
        g.add(b, r)
    };
    let spine2 = g.slice_cols(base, rot(6), 6);
    let ankles = {
        let b = g.slice_cols(base, rot(L_ANKLE), 12);
        let r = g.slice_cols(residual, 27, 12);
        g.add(b, r)
    };
    let rest = g.slice_cols(base, rot(9), MOTION_CHANNELS - rot(9));
    g.concat_cols(&[contacts, root, global_rot, hips, spine1, knees, spine2, ankles, rest])
}

/// An [`X0Model`] view of a denoiser bound to fixed conditioning.
pub struct CondDenoiser<'a> {
    pub model: &'a Denoiser,
    pub params: &'a ParamStore,
    pub cond: Tensor,
    pub pos: Tensor,
    pub chain: &'a KinematicChain,
    pub use_refine: bool,
}

impl X0Model for CondDenoiser<'_> {
    fn predict_clean(&self, noisy: &Tensor, t: usize) -> Tensor {
        let mut g = Graph::new();
        let pv = self.params.load(&mut g, false);
        let nv = g.constant(noisy.clone());
        let cv = g.constant(self.cond.clone());
        let out = self.model.forward(
            &mut g,
            &pv,
            nv,
            t,
            cv,
            &self.pos,
            self.chain,
            self.use_refine,
        );
        g.value(out).clone()
    }
}
