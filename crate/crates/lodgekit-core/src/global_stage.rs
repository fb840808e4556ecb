//! Global diffusion: long-window music in, dance primitives out.
//!
//! The music window is compressed by stride-8 mean pooling, a linear map,
//! and one transformer encoder layer; the denoiser then generates all
//! `3l + 1` primitive slots as one `(3l+1) x 8`-frame sequence. Slot-to-kind
//! assignment is positional: the first `l + 1` slots are hard boundary
//! primitives with fixed targets `{0, n, ..., l n}`, the remaining `2l`
//! slots are soft primitives whose target timestamps (training: extracted
//! beat windows; inference: the highest-envelope beats) are injected
//! through per-token positional encodings.

use alloc::vec::Vec;

use crate::dataset::{
    extract_key_motions, select_soft_centers, DancePrimitive, PairedSample, PrimitiveKind,
    PrimitiveSet, SegmentLayout, PRIMITIVE_FRAMES,
};
use crate::denoiser::{CondDenoiser, Denoiser, DenoiserConfig};
use crate::diffusion::{
    motion_losses_graph, noise_like, q_sample, sample_ddim, sample_ddpm, total_loss_graph,
    LossWeights,
};
use crate::error::{CoreError, Result};
use crate::graph::{Graph, Var};
use crate::invalid_arg;
use crate::motion::{mirror_motion, MotionSeq, MOTION_CHANNELS};
use crate::music::{beat_indices, segment_features, MusicFeatureSeq, MUSIC_CHANNELS};
use crate::nn::{sinusoidal_table, Attention, LayerNorm, Linear, Mlp, ParamStore, ParamVars, WeightInit};
use crate::optim::{adan_step, ema_update, AdanParams, AdanState};
use crate::rng::{derive_seed, next_index, rng_from_seed, Rng};
use crate::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::skeleton::KinematicChain;
use crate::tensor::Tensor;

/// Which sampler drives generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

/// Sampler selection plus DDIM step count (ignored for DDPM).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub steps: usize,
}

/// Downsampling stride from music frames to conditioning rows.
pub const MUSIC_DOWNSAMPLE: usize = 8;

pub struct GlobalModel {
    pub layout: SegmentLayout,
    down_linear: Linear,
    down_ln1: LayerNorm,
    down_attn: Attention,
    down_ln2: LayerNorm,
    down_mlp: Mlp,
    pub denoiser: Denoiser,
}

impl GlobalModel {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut Rng,
        layout: SegmentLayout,
        mut denoiser_cfg: DenoiserConfig,
    ) -> Result<Self> {
        layout.validate()?;
        if layout.n_global % MUSIC_DOWNSAMPLE != 0 {
            return Err(invalid_arg!(
                "global window {} not divisible by the downsample factor {MUSIC_DOWNSAMPLE}",
                layout.n_global
            ));
        }
        denoiser_cfg.cond_dim = denoiser_cfg.model_dim;
        denoiser_cfg.foot_refine = false;
        let d = denoiser_cfg.model_dim;
        let down_linear =
            Linear::new(ps, rng, "global.down.linear", MUSIC_CHANNELS, d, WeightInit::Xavier);
        let down_ln1 = LayerNorm::new(ps, "global.down.ln1", d);
        let down_attn = Attention::new(ps, rng, "global.down.attn", d);
        let down_ln2 = LayerNorm::new(ps, "global.down.ln2", d);
        let down_mlp = Mlp::new(ps, rng, "global.down.mlp", d, 2 * d);
        let denoiser = Denoiser::new(ps, rng, "global.denoiser", denoiser_cfg)?;
        Ok(Self { layout, down_linear, down_ln1, down_attn, down_ln2, down_mlp, denoiser })
    }

    pub fn model_dim(&self) -> usize {
        self.denoiser.config().model_dim
    }

    /// Stride-8 mean pooling plus projection, before any positional or
    /// attention mixing. Constant music rows stay constant here.
    pub fn downsample_pooled(&self, g: &mut Graph, pv: &ParamVars, music: Var) -> Var {
        let pooled = g.mean_pool_rows(music, MUSIC_DOWNSAMPLE);
        self.down_linear.forward(g, pv, pooled)
    }

    /// Full conditioning encoder: pooled rows + row positions through one
    /// transformer encoder layer.
    pub fn encode_music(&self, g: &mut Graph, pv: &ParamVars, music: Var) -> Var {
        let frames = g.value(music).rows();
        assert_eq!(frames % MUSIC_DOWNSAMPLE, 0, "music length must match the layout");
        let rows = frames / MUSIC_DOWNSAMPLE;
        let mut h = self.downsample_pooled(g, pv, music);
        let positions: Vec<f64> = (0..rows)
            .map(|r| (r * MUSIC_DOWNSAMPLE) as f64 + (MUSIC_DOWNSAMPLE as f64 - 1.0) / 2.0)
            .collect();
        let pos = g.constant(
            sinusoidal_table(&positions, self.model_dim()).expect("model dim is even"),
        );
        h = g.add(h, pos);
        let normed = self.down_ln1.forward(g, pv, h);
        let sa = self.down_attn.forward(g, pv, normed, normed);
        h = g.add(h, sa);
        let normed = self.down_ln2.forward(g, pv, h);
        let ff = self.down_mlp.forward(g, pv, normed);
        g.add(h, ff)
    }

    /// Per-token positional encodings for the primitive slots: each token
    /// is embedded at its intended global timestamp.
    pub fn slot_positions(&self, soft_targets: &[usize]) -> Result<Tensor> {
        let l = self.layout.segments_per_window();
        if soft_targets.len() != self.layout.soft_count() {
            return Err(invalid_arg!(
                "expected {} soft targets, got {}",
                self.layout.soft_count(),
                soft_targets.len()
            ));
        }
        let mut positions = Vec::with_capacity(self.layout.slot_count() * PRIMITIVE_FRAMES);
        let hard_targets = (0..=l).map(|j| j * self.layout.n_local);
        for target in hard_targets.chain(soft_targets.iter().copied()) {
            for o in 0..PRIMITIVE_FRAMES {
                positions.push(target as f64 - (PRIMITIVE_FRAMES as f64) / 2.0 + o as f64);
            }
        }
        sinusoidal_table(&positions, self.model_dim())
    }

    /// Denoiser forward over the stacked primitive slots.
    pub fn forward(
        &self,
        g: &mut Graph,
        pv: &ParamVars,
        noisy: Var,
        t: usize,
        music: Var,
        soft_targets: &[usize],
        chain: &KinematicChain,
    ) -> Result<Var> {
        let cond = self.encode_music(g, pv, music);
        let pos = self.slot_positions(soft_targets)?;
        Ok(self.denoiser.forward(g, pv, noisy, t, cond, &pos, chain, false))
    }
}

/// Stack primitive motions into the training/sampling row matrix:
/// hard slots in boundary order, then soft slots in temporal order.
pub fn primitives_to_rows(ps: &PrimitiveSet) -> Tensor {
    let slots = ps.hard.len() + ps.soft.len();
    let mut data = Vec::with_capacity(slots * PRIMITIVE_FRAMES * MOTION_CHANNELS);
    for p in ps.hard.iter().chain(ps.soft.iter()) {
        data.extend_from_slice(p.motion.frames().data());
    }
    Tensor::new(&[slots * PRIMITIVE_FRAMES, MOTION_CHANNELS], data)
}

/// Split sampled rows back into primitives. `soft_targets` must be the
/// same (temporally ordered) targets the slots were conditioned on.
pub fn rows_to_primitives(
    rows: &Tensor,
    layout: &SegmentLayout,
    soft_targets: &[usize],
    fps: f64,
) -> Result<PrimitiveSet> {
    let l = layout.segments_per_window();
    let expected = layout.slot_count() * PRIMITIVE_FRAMES;
    if rows.shape() != [expected, MOTION_CHANNELS] {
        return Err(invalid_arg!(
            "primitive rows have shape {:?}, expected [{expected}, {MOTION_CHANNELS}]",
            rows.shape()
        ));
    }
    let slot = |s: usize| {
        let start = s * PRIMITIVE_FRAMES;
        let data =
            rows.data()[start * MOTION_CHANNELS..(start + PRIMITIVE_FRAMES) * MOTION_CHANNELS].to_vec();
        MotionSeq::from_prediction(Tensor::new(&[PRIMITIVE_FRAMES, MOTION_CHANNELS], data), fps)
    };
    let mut hard = Vec::with_capacity(layout.hard_count());
    for j in 0..=l {
        hard.push(DancePrimitive {
            motion: slot(j)?,
            target_frame: j * layout.n_local,
            kind: PrimitiveKind::Hard,
        });
    }
    let mut soft = Vec::with_capacity(layout.soft_count());
    for (i, &target) in soft_targets.iter().enumerate() {
        soft.push(DancePrimitive {
            motion: slot(l + 1 + i)?,
            target_frame: target,
            kind: PrimitiveKind::Soft,
        });
    }
    Ok(PrimitiveSet { hard, soft, layout: *layout })
}

/// Training configuration for the global stage.
#[derive(Debug, Clone)]
pub struct GlobalTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub schedule_steps: usize,
    pub schedule_kind: ScheduleKind,
    pub optimizer: AdanParams,
    pub ema_decay: f64,
    pub seed: u64,
    pub denoiser: DenoiserConfig,
    pub weights: LossWeights,
}

impl Default for GlobalTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            schedule_steps: 1000,
            schedule_kind: ScheduleKind::Cosine,
            optimizer: AdanParams::default(),
            ema_decay: 0.999,
            seed: 0,
            denoiser: DenoiserConfig::new(64),
            // Boundary primitives carry no contact or genre terms.
            weights: LossWeights { contact: 0.0, genre: 0.0, ..LossWeights::default() },
        }
    }
}

/// One precomputed training item: a window's extracted targets.
struct GlobalItem {
    music: Tensor,
    target_rows: Tensor,
    soft_targets: Vec<usize>,
    slot_motions: Vec<MotionSeq>,
}

/// A trained global stage: live parameters, EMA shadow, optimizer state.
pub struct TrainedGlobal {
    pub model: GlobalModel,
    pub params: ParamStore,
    pub ema: ParamStore,
    pub opt: AdanState,
    pub step: u64,
    pub history: Vec<f64>,
    pub rng: Rng,
    pub schedule: NoiseSchedule,
}

fn build_items(dataset: &[PairedSample], layout: &SegmentLayout) -> Result<Vec<GlobalItem>> {
    let mut items = Vec::new();
    for sample in dataset {
        sample.validate()?;
        let seg = segment_features(&sample.music, layout.n_global, layout.n_local)?;
        for (w, music_window) in seg.globals.iter().enumerate() {
            let dance_window = sample.dance.slice_frames(w * layout.n_global, layout.n_global);
            let prims = extract_key_motions(&dance_window, music_window, layout)?;
            let soft_targets: Vec<usize> = prims.soft.iter().map(|p| p.target_frame).collect();
            let slot_motions: Vec<MotionSeq> = prims
                .hard
                .iter()
                .chain(prims.soft.iter())
                .map(|p| p.motion.clone())
                .collect();
            items.push(GlobalItem {
                music: music_window.feats().clone(),
                target_rows: primitives_to_rows(&prims),
                soft_targets,
                slot_motions,
            });
        }
    }
    if items.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    Ok(items)
}

/// Train the global stage on extracted key motions.
///
/// Loss: reconstruction plus per-slot joint/velocity/acceleration terms
/// (contact and genre do not apply to boundary primitives). Pass `resume`
/// to continue from a checkpointed state bit-exactly.
pub fn train_global(
    dataset: &[PairedSample],
    layout: SegmentLayout,
    cfg: &GlobalTrainConfig,
    resume: Option<TrainedGlobal>,
    mut on_step: impl FnMut(u64, f64),
) -> Result<TrainedGlobal> {
    let items = build_items(dataset, &layout)?;
    let chain = KinematicChain::human22();

    let mut state = match resume {
        Some(s) => s,
        None => {
            let mut ps = ParamStore::new();
            let mut init_rng = rng_from_seed(derive_seed(cfg.seed, 0x91));
            let model = GlobalModel::new(&mut ps, &mut init_rng, layout, cfg.denoiser.clone())?;
            let ema = ps.clone();
            let opt = AdanState::new(&ps);
            let schedule = make_schedule(cfg.schedule_steps, cfg.schedule_kind)?;
            TrainedGlobal {
                model,
                params: ps,
                ema,
                opt,
                step: 0,
                history: Vec::new(),
                rng: rng_from_seed(derive_seed(cfg.seed, 0x92)),
                schedule,
            }
        }
    };

    for _ in 0..cfg.steps {
        let mut grad_sum: Option<Vec<Tensor>> = None;
        let mut loss_sum = 0.0;
        for _ in 0..cfg.batch_size {
            let item = &items[next_index(&mut state.rng, items.len())];
            let t = next_index(&mut state.rng, state.schedule.steps());
            let eps = noise_like(item.target_rows.shape(), &mut state.rng);
            let noisy = q_sample(&item.target_rows, t as i64, &eps, &state.schedule)?;

            let mut g = Graph::new();
            let pv = state.params.load(&mut g, true);
            let noisy_var = g.constant(noisy);
            let music_var = g.constant(item.music.clone());
            let pred = state.model.forward(
                &mut g,
                &pv,
                noisy_var,
                t,
                music_var,
                &item.soft_targets,
                &chain,
            )?;

            // Reconstruction over all slots at once; kinematic terms per
            // 8-frame slot, averaged.
            let target_var = g.constant(item.target_rows.clone());
            let recon = g.mse(pred, target_var);
            let mut joint_acc: Option<(Var, Var, Var)> = None;
            for (s, slot_clean) in item.slot_motions.iter().enumerate() {
                let slot_pred = g.slice_rows(pred, s * PRIMITIVE_FRAMES, PRIMITIVE_FRAMES);
                let losses = motion_losses_graph(&mut g, slot_pred, slot_clean, &chain);
                joint_acc = Some(match joint_acc {
                    None => (losses.joint, losses.j_vel, losses.j_acc),
                    Some((j, v, a)) => (
                        g.add(j, losses.joint),
                        g.add(v, losses.j_vel),
                        g.add(a, losses.j_acc),
                    ),
                });
            }
            let slots = item.slot_motions.len() as f64;
            let (j, v, a) = joint_acc.expect("at least one slot");
            let total = {
                let j = g.scale(j, cfg.weights.joint / slots);
                let v = g.scale(v, cfg.weights.j_vel / slots);
                let a = g.scale(a, cfg.weights.j_acc / slots);
                let s1 = g.add(recon, j);
                let s2 = g.add(s1, v);
                g.add(s2, a)
            };

            loss_sum += g.scalar_value(total);
            let grads = state.params.collect_grads(&g, &pv, total);
            match &mut grad_sum {
                None => grad_sum = Some(grads),
                Some(sum) => {
                    for (s, gr) in sum.iter_mut().zip(&grads) {
                        s.add_scaled(gr, 1.0);
                    }
                }
            }
        }
        let mut grads = grad_sum.expect("batch size >= 1");
        for gr in grads.iter_mut() {
            gr.scale_in_place(1.0 / cfg.batch_size as f64);
        }
        adan_step(&mut state.params, &grads, &mut state.opt, &cfg.optimizer)?;
        ema_update(&mut state.ema, &state.params, cfg.ema_decay);
        state.step += 1;
        let loss = loss_sum / cfg.batch_size as f64;
        state.history.push(loss);
        on_step(state.step, loss);
    }
    Ok(state)
}

/// Generate one window's primitive set from trained (EMA) parameters.
pub fn generate_primitives(
    music: &MusicFeatureSeq,
    model: &GlobalModel,
    params: &ParamStore,
    sampler: SamplerSpec,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<PrimitiveSet> {
    let layout = model.layout;
    if music.len() != layout.n_global {
        return Err(invalid_arg!(
            "music window has {} frames, layout expects {}",
            music.len(),
            layout.n_global
        ));
    }
    let chain = KinematicChain::human22();
    // Soft targets: highest-envelope beats, temporally ordered (uniform
    // fallback when the clip has too few beats).
    let soft_targets = choose_soft_targets(music, layout.soft_count());

    // Conditioning is timestep-independent: encode once.
    let mut g = Graph::new();
    let pv = params.load(&mut g, false);
    let music_var = g.constant(music.feats().clone());
    let cond_var = model.encode_music(&mut g, &pv, music_var);
    let cond = g.value(cond_var).clone();
    let pos = model.slot_positions(&soft_targets)?;

    let x0 = CondDenoiser {
        model: &model.denoiser,
        params,
        cond,
        pos,
        chain: &chain,
        use_refine: false,
    };
    let shape = [layout.slot_count() * PRIMITIVE_FRAMES, MOTION_CHANNELS];
    let mut rng = rng_from_seed(seed);
    let rows = match sampler.kind {
        SamplerKind::Ddpm => sample_ddpm(&x0, &shape, schedule, &mut rng)?,
        SamplerKind::Ddim => sample_ddim(&x0, &shape, schedule, sampler.steps, &mut rng)?,
    };
    rows_to_primitives(&rows, &layout, &soft_targets, music.fps())
}

/// Inference-time soft-slot targets: top-envelope beats in temporal order.
pub fn choose_soft_targets(music: &MusicFeatureSeq, count: usize) -> Vec<usize> {
    // Flat speed curve: beat ranking only, no snapping.
    let flat = alloc::vec![0.0; music.len().saturating_sub(1).max(1)];
    select_soft_centers(music, &flat, count, music.len())
}

/// Choreographic augmentation: double the soft set with mirrored copies
/// assigned to the next-ranked unused beats, snap every soft target to a
/// beat frame, keep hard primitives untouched.
pub fn augment_primitives(
    ps: &PrimitiveSet,
    chain: &KinematicChain,
    music: &MusicFeatureSeq,
) -> PrimitiveSet {
    let beats = beat_indices(music);
    let mut ranked = beats.clone();
    ranked.sort_by(|a, b| {
        music
            .envelope(*b)
            .partial_cmp(&music.envelope(*a))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });

    let snap = |frame: usize| -> usize {
        beats
            .iter()
            .copied()
            .min_by_key(|b| b.abs_diff(frame))
            .unwrap_or(frame)
    };

    let mut soft: Vec<DancePrimitive> = ps
        .soft
        .iter()
        .map(|p| DancePrimitive {
            motion: p.motion.clone(),
            target_frame: snap(p.target_frame),
            kind: PrimitiveKind::Soft,
        })
        .collect();

    let used: Vec<usize> = soft.iter().map(|p| p.target_frame).collect();
    let mut unused = ranked.into_iter().filter(|b| !used.contains(b));
    let length = music.len();
    let mut fallback_needed = 0usize;
    let mut mirrored: Vec<DancePrimitive> = Vec::with_capacity(ps.soft.len());
    for p in &ps.soft {
        let target = match unused.next() {
            Some(b) => b,
            None => {
                fallback_needed += 1;
                // Uniform placement over the window for the overflow.
                (fallback_needed * length) / (ps.soft.len() + 1)
            }
        };
        mirrored.push(DancePrimitive {
            motion: mirror_motion(&p.motion, chain),
            target_frame: target,
            kind: PrimitiveKind::Soft,
        });
    }
    soft.append(&mut mirrored);
    soft.sort_by_key(|p| p.target_frame);

    PrimitiveSet { hard: ps.hard.clone(), soft, layout: ps.layout }
}
