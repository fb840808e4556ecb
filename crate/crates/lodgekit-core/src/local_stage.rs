//! Local diffusion: short-window training with the full loss suite, the
//! genre discriminator, and the boundary fine-tuning stage.
//!
//! Training crops random n-frame windows from the paired dataset. The
//! conditioning concatenates per-frame music features with a learned genre
//! embedding row. The optional multi-genre discriminator adds a
//! non-saturating adversarial term (one discriminator step per generator
//! step); it is off by default because the genre loss weight defaults to
//! zero. Fine-tuning continues training with the first and last four frames
//! of the noisy input replaced by clean ground truth and a doubled
//! acceleration weight, teaching the model the inference-time situation
//! where hard guidance pins segment boundaries.

use alloc::vec::Vec;

use crate::dataset::PairedSample;
use crate::denoiser::{CondDenoiser, ContactScoreParams, Denoiser, DenoiserConfig};
use crate::diffusion::{
    motion_losses_graph, noise_like, q_sample, total_loss_graph, LossWeights, X0Model,
};
use crate::error::{CoreError, Result};
use crate::graph::{Graph, Var};
use crate::invalid_arg;
use crate::math::{sigmoid, F64Ext, Vec3};
use crate::motion::{MotionSeq, MOTION_CHANNELS};
use crate::music::{GenreLabel, MusicFeatureSeq, MUSIC_CHANNELS};
use crate::nn::{sinusoidal_table, Linear, Mlp, ParamStore, ParamVars, WeightInit};
use crate::optim::{adan_step, ema_update, AdanParams, AdanState};
use crate::rng::{derive_seed, next_index, rng_from_seed, Rng};
use crate::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::skeleton::{foot_state, KinematicChain};
use crate::tensor::Tensor;

/// Foot positions, velocities, and ground-contact scores per frame.
#[derive(Debug, Clone)]
pub struct FootRefineState {
    pub positions: Vec<[Vec3; 4]>,
    /// Per frame (the last velocity is repeated so lengths match).
    pub velocities: Vec<[Vec3; 4]>,
    /// Per frame, per foot, in (0, 1).
    pub scores: Vec<[f64; 4]>,
}

/// Differentiable-in-spirit contact score, evaluated in plain arithmetic:
/// `sigma(a (h0 - height)) * sigma(b (v0 - speed))` per foot and frame.
pub fn contact_score(
    seq: &MotionSeq,
    chain: &KinematicChain,
    params: &ContactScoreParams,
) -> Result<FootRefineState> {
    let l = seq.len();
    if l == 0 {
        return Err(CoreError::SequenceTooShort { len: 0, min: 1 });
    }
    let (positions, velocities) = if l >= 2 {
        let fs = foot_state(seq, chain)?;
        let mut vel = fs.velocities.clone();
        let last = *vel.last().expect("at least one velocity");
        vel.push(last);
        (fs.positions, vel)
    } else {
        let fs = crate::skeleton::forward_kinematics(seq, chain);
        let pos: Vec<[Vec3; 4]> = (0..l)
            .map(|f| core::array::from_fn(|i| fs.at(f, chain.foot_joints[i])))
            .collect();
        (pos, alloc::vec![[[0.0; 3]; 4]; l])
    };
    let mut scores = Vec::with_capacity(l);
    for f in 0..l {
        scores.push(core::array::from_fn(|foot| {
            let height = positions[f][foot][1];
            let v = velocities[f][foot];
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            sigmoid(params.height_sharpness * (params.height_threshold - height))
                * sigmoid(params.speed_sharpness * (params.speed_threshold - speed))
        }));
    }
    Ok(FootRefineState { positions, velocities, scores })
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

pub struct LocalModel {
    pub denoiser: Denoiser,
    pub genre_table: crate::nn::ParamId,
    pub genres: usize,
    pub genre_embed_dim: usize,
    pub window: usize,
}

impl LocalModel {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut Rng,
        mut denoiser_cfg: DenoiserConfig,
        genres: usize,
        genre_embed_dim: usize,
        window: usize,
    ) -> Result<Self> {
        if genres == 0 || genre_embed_dim == 0 {
            return Err(invalid_arg!("need at least one genre and a positive embedding dim"));
        }
        denoiser_cfg.cond_dim = MUSIC_CHANNELS + genre_embed_dim;
        denoiser_cfg.foot_refine = true;
        let genre_table = ps.add(
            "local.genre_embed",
            Tensor::randn(&[genres, genre_embed_dim], 0.5, rng),
        );
        let denoiser = Denoiser::new(ps, rng, "local.denoiser", denoiser_cfg)?;
        Ok(Self { denoiser, genre_table, genres, genre_embed_dim, window })
    }

    pub fn check_genre(&self, genre: GenreLabel) -> Result<()> {
        if genre.0 >= self.genres {
            return Err(invalid_arg!("genre {} outside [0, {})", genre.0, self.genres));
        }
        Ok(())
    }

    /// In-graph conditioning: music rows ++ broadcast genre embedding.
    pub fn cond_rows(&self, g: &mut Graph, pv: &ParamVars, music: Var, genre: GenreLabel) -> Var {
        let frames = g.value(music).rows();
        let row = g.slice_rows(pv.var(self.genre_table), genre.0, 1);
        let rows = g.broadcast_rows(row, frames);
        g.concat_cols(&[music, rows])
    }

    /// Conditioning tensor for sampling, read from a parameter store.
    pub fn cond_tensor(
        &self,
        params: &ParamStore,
        music: &MusicFeatureSeq,
        genre: GenreLabel,
    ) -> Result<Tensor> {
        self.check_genre(genre)?;
        let table = params.get(self.genre_table);
        let e = self.genre_embed_dim;
        let n = music.len();
        let mut data = Vec::with_capacity(n * (MUSIC_CHANNELS + e));
        for f in 0..n {
            data.extend_from_slice(music.feats().row(f));
            data.extend_from_slice(&table.data()[genre.0 * e..(genre.0 + 1) * e]);
        }
        Ok(Tensor::new(&[n, MUSIC_CHANNELS + e], data))
    }

    /// Frame-index positional encodings for an n-frame window.
    pub fn window_positions(&self, frames: usize) -> Tensor {
        let positions: Vec<f64> = (0..frames).map(|f| f as f64).collect();
        sinusoidal_table(&positions, self.denoiser.config().model_dim)
            .expect("model dim validated even")
    }

    /// Bind this model to one segment's conditioning as an [`X0Model`].
    pub fn bind<'a>(
        &'a self,
        params: &'a ParamStore,
        music: &MusicFeatureSeq,
        genre: GenreLabel,
        chain: &'a KinematicChain,
        use_refine: bool,
    ) -> Result<CondDenoiser<'a>> {
        Ok(CondDenoiser {
            model: &self.denoiser,
            params,
            cond: self.cond_tensor(params, music, genre)?,
            pos: self.window_positions(music.len()),
            chain,
            use_refine,
        })
    }
}

// ---------------------------------------------------------------------------
// Multi-genre discriminator
// ---------------------------------------------------------------------------

/// Small classifier over (pooled motion window, genre embedding, pooled
/// music): real/fake logit per window.
pub struct Discriminator {
    frame_proj: Linear,
    genre_table: crate::nn::ParamId,
    head: Mlp,
    out: Linear,
    dim: usize,
}

impl Discriminator {
    pub fn new(
        ps: &mut ParamStore,
        rng: &mut Rng,
        genres: usize,
        genre_embed_dim: usize,
        dim: usize,
    ) -> Self {
        let frame_proj =
            Linear::new(ps, rng, "mgd.frame", MOTION_CHANNELS, dim, WeightInit::Xavier);
        let genre_table =
            ps.add("mgd.genre_embed", Tensor::randn(&[genres, genre_embed_dim], 0.5, rng));
        let head = Mlp::new(
            ps,
            rng,
            "mgd.head",
            dim + genre_embed_dim + MUSIC_CHANNELS,
            2 * dim,
        );
        // Zero-initialized logit head: the discriminator starts undecided
        // (probability exactly one half).
        let out = Linear::new(
            ps,
            rng,
            "mgd.out",
            dim + genre_embed_dim + MUSIC_CHANNELS,
            1,
            WeightInit::Zeros,
        );
        Self { frame_proj, genre_table, head, out, dim }
    }

    /// Logit for one (motion, genre, music) triple.
    pub fn logit(
        &self,
        g: &mut Graph,
        pv: &ParamVars,
        motion: Var,
        genre: GenreLabel,
        music: Var,
    ) -> Var {
        let frames = g.value(motion).rows();
        let h = self.frame_proj.forward(g, pv, motion);
        let h = g.gelu(h);
        let pooled = g.mean_pool_rows(h, frames);
        let music_pooled = g.mean_pool_rows(music, frames);
        let genre_row = g.slice_rows(pv.var(self.genre_table), genre.0, 1);
        let joined = g.concat_cols(&[pooled, genre_row, music_pooled]);
        let deep = self.head.forward(g, pv, joined);
        let mixed = g.add(joined, deep);
        let logit = self.out.forward(g, pv, mixed);
        let _ = self.dim;
        logit
    }
}

/// Discriminator and generator losses for one real/generated pair
/// (non-saturating logistic form).
///
/// With the discriminator undecided (probability 1/2 everywhere) the
/// discriminator loss is `2 ln 2` and the generator loss `ln 2`.
pub fn mgd_loss(
    disc: &Discriminator,
    disc_params: &ParamStore,
    real: &MotionSeq,
    generated: &MotionSeq,
    genre: GenreLabel,
    music: &MusicFeatureSeq,
) -> Result<(f64, f64)> {
    if real.len() != generated.len() || real.len() != music.len() {
        return Err(invalid_arg!("mgd windows must share one length"));
    }
    let mut g = Graph::new();
    let pv = disc_params.load(&mut g, false);
    let music_var = g.constant(music.feats().clone());
    let real_var = g.constant(real.frames().clone());
    let fake_var = g.constant(generated.frames().clone());
    let lr = disc.logit(&mut g, &pv, real_var, genre, music_var);
    let lf = disc.logit(&mut g, &pv, fake_var, genre, music_var);
    let (d_loss, g_loss) = adversarial_losses(&mut g, lr, lf);
    Ok((g.scalar_value(d_loss), g.scalar_value(g_loss)))
}

/// d_loss = -ln s(real) - ln(1 - s(fake)); g_loss = -ln s(fake).
fn adversarial_losses(g: &mut Graph, real_logit: Var, fake_logit: Var) -> (Var, Var) {
    let eps = 1e-12;
    let sr = g.sigmoid(real_logit);
    let sf = g.sigmoid(fake_logit);
    let log_sr = {
        let e = g.add_const(sr, eps);
        g.log(e)
    };
    let one_minus_sf = {
        let n = g.scale(sf, -1.0);
        g.add_const(n, 1.0 + eps)
    };
    let log_one_minus_sf = g.log(one_minus_sf);
    let d_sum = g.add(log_sr, log_one_minus_sf);
    let d_sum = g.mean_all(d_sum);
    let d_loss = g.scale(d_sum, -1.0);
    let log_sf = {
        let e = g.add_const(sf, eps);
        g.log(e)
    };
    let g_mean = g.mean_all(log_sf);
    let g_loss = g.scale(g_mean, -1.0);
    (d_loss, g_loss)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LocalTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub window: usize,
    pub schedule_steps: usize,
    pub schedule_kind: ScheduleKind,
    pub optimizer: AdanParams,
    pub disc_optimizer: AdanParams,
    pub ema_decay: f64,
    pub seed: u64,
    pub denoiser: DenoiserConfig,
    pub weights: LossWeights,
    pub genres: usize,
    pub genre_embed_dim: usize,
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 4,
            window: 256,
            schedule_steps: 1000,
            schedule_kind: ScheduleKind::Cosine,
            optimizer: AdanParams::default(),
            disc_optimizer: AdanParams { lr: 2e-4, ..AdanParams::default() },
            ema_decay: 0.999,
            seed: 0,
            denoiser: DenoiserConfig::new(MUSIC_CHANNELS + 8),
            weights: LossWeights::default(),
            genres: 4,
            genre_embed_dim: 8,
        }
    }
}

/// Trained local stage (generator, EMA shadow, optional discriminator).
pub struct TrainedLocal {
    pub model: LocalModel,
    pub params: ParamStore,
    pub ema: ParamStore,
    pub opt: AdanState,
    pub disc: Option<(Discriminator, ParamStore, AdanState)>,
    pub step: u64,
    pub history: Vec<f64>,
    pub rng: Rng,
    pub schedule: NoiseSchedule,
}

fn validate_dataset(dataset: &[PairedSample], window: usize, genres: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    for s in dataset {
        s.validate()?;
        if s.dance.len() < window {
            return Err(invalid_arg!(
                "sample {} has {} frames, shorter than the window {window}",
                s.id,
                s.dance.len()
            ));
        }
        if s.genre.0 >= genres {
            return Err(invalid_arg!("sample {} genre {} outside [0, {genres})", s.id, s.genre.0));
        }
    }
    Ok(())
}

/// Train or continue training the local stage.
///
/// `boundary_clean` enables the fine-tuning mixture: the first and last
/// four frames of the noisy input are replaced by ground truth (the
/// acceleration weight should be raised by the caller when using it).
fn train_local_inner(
    dataset: &[PairedSample],
    cfg: &LocalTrainConfig,
    resume: Option<TrainedLocal>,
    boundary_clean: bool,
    mut on_step: impl FnMut(u64, f64),
) -> Result<TrainedLocal> {
    cfg.weights.validate()?;
    validate_dataset(dataset, cfg.window, cfg.genres)?;
    if boundary_clean && cfg.window < 9 {
        return Err(invalid_arg!(
            "boundary fine-tuning needs windows of at least 9 frames, got {}",
            cfg.window
        ));
    }
    let chain = KinematicChain::human22();
    let adversarial = cfg.weights.genre > 0.0;

    let mut state = match resume {
        Some(s) => s,
        None => {
            let mut ps = ParamStore::new();
            let mut init_rng = rng_from_seed(derive_seed(cfg.seed, 0xa1));
            let model = LocalModel::new(
                &mut ps,
                &mut init_rng,
                cfg.denoiser.clone(),
                cfg.genres,
                cfg.genre_embed_dim,
                cfg.window,
            )?;
            let ema = ps.clone();
            let opt = AdanState::new(&ps);
            let disc = if adversarial {
                let mut dps = ParamStore::new();
                let mut drng = rng_from_seed(derive_seed(cfg.seed, 0xa2));
                let d = Discriminator::new(
                    &mut dps,
                    &mut drng,
                    cfg.genres,
                    cfg.genre_embed_dim,
                    cfg.denoiser.model_dim,
                );
                let ds = AdanState::new(&dps);
                Some((d, dps, ds))
            } else {
                None
            };
            let schedule = make_schedule(cfg.schedule_steps, cfg.schedule_kind)?;
            TrainedLocal {
                model,
                params: ps,
                ema,
                opt,
                disc,
                step: 0,
                history: Vec::new(),
                rng: rng_from_seed(derive_seed(cfg.seed, 0xa3)),
                schedule,
            }
        }
    };

    for _ in 0..cfg.steps {
        let mut grad_sum: Option<Vec<Tensor>> = None;
        let mut loss_sum = 0.0;
        // One generated window per batch is reused for the discriminator
        // step when the adversarial term is on.
        let mut disc_material: Option<(Tensor, Tensor, GenreLabel, Tensor)> = None;

        for b in 0..cfg.batch_size {
            let sample = &dataset[next_index(&mut state.rng, dataset.len())];
            let start = next_index(&mut state.rng, sample.dance.len() - cfg.window + 1);
            let clean = sample.dance.slice_frames(start, cfg.window);
            let music = sample.music.slice_frames(start, cfg.window);
            let t = next_index(&mut state.rng, state.schedule.steps());
            let eps = noise_like(&[cfg.window, MOTION_CHANNELS], &mut state.rng);
            let mut noisy = q_sample(clean.frames(), t as i64, &eps, &state.schedule)?;
            if boundary_clean {
                // First/last four frames stay clean ground truth.
                for r in (0..4).chain(cfg.window - 4..cfg.window) {
                    for c in 0..MOTION_CHANNELS {
                        noisy.set2(r, c, clean.frames().at2(r, c));
                    }
                }
            }

            let mut g = Graph::new();
            let pv = state.params.load(&mut g, true);
            let noisy_var = g.constant(noisy);
            let music_var = g.constant(music.feats().clone());
            let cond = state.model.cond_rows(&mut g, &pv, music_var, sample.genre);
            let pos = state.model.window_positions(cfg.window);
            let pred = state.model.denoiser.forward(
                &mut g,
                &pv,
                noisy_var,
                t,
                cond,
                &pos,
                &chain,
                true,
            );
            let losses = motion_losses_graph(&mut g, pred, &clean, &chain);

            let genre_term = if let Some((disc, dps, _)) = &state.disc {
                // Generator sees the discriminator as frozen constants.
                let dpv = dps.load(&mut g, false);
                let music_const = g.constant(music.feats().clone());
                let fake_logit = disc.logit(&mut g, &dpv, pred, sample.genre, music_const);
                let sf = g.sigmoid(fake_logit);
                let e = g.add_const(sf, 1e-12);
                let lg = g.log(e);
                let m = g.mean_all(lg);
                Some(g.scale(m, -1.0))
            } else {
                None
            };
            let total = total_loss_graph(&mut g, &losses, genre_term, &cfg.weights);

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
            if adversarial && b == 0 {
                disc_material = Some((
                    clean.frames().clone(),
                    g.value(pred).clone(),
                    sample.genre,
                    music.feats().clone(),
                ));
            }
        }

        let mut grads = grad_sum.expect("batch size >= 1");
        for gr in grads.iter_mut() {
            gr.scale_in_place(1.0 / cfg.batch_size as f64);
        }
        adan_step(&mut state.params, &grads, &mut state.opt, &cfg.optimizer)?;
        ema_update(&mut state.ema, &state.params, cfg.ema_decay);

        // One discriminator step on the detached generation.
        if let (Some((disc, dps, dopt)), Some((real, fake, genre, music))) =
            (&mut state.disc, disc_material)
        {
            let mut g = Graph::new();
            let dpv = dps.load(&mut g, true);
            let real_var = g.constant(real);
            let fake_var = g.constant(fake);
            let music_var = g.constant(music);
            let lr = disc.logit(&mut g, &dpv, real_var, genre, music_var);
            let lf = disc.logit(&mut g, &dpv, fake_var, genre, music_var);
            let (d_loss, _) = adversarial_losses(&mut g, lr, lf);
            let dgrads = dps.collect_grads(&g, &dpv, d_loss);
            adan_step(dps, &dgrads, dopt, &cfg.disc_optimizer)?;
        }

        state.step += 1;
        let loss = loss_sum / cfg.batch_size as f64;
        state.history.push(loss);
        on_step(state.step, loss);
    }
    Ok(state)
}

/// Train the local stage from scratch or resume from a checkpointed state.
pub fn train_local(
    dataset: &[PairedSample],
    cfg: &LocalTrainConfig,
    resume: Option<TrainedLocal>,
    on_step: impl FnMut(u64, f64),
) -> Result<TrainedLocal> {
    train_local_inner(dataset, cfg, resume, false, on_step)
}

/// Boundary fine-tuning: continue training with clean first/last four
/// frames in the noisy input and a doubled acceleration weight, so the
/// model learns to bridge pinned boundaries smoothly.
pub fn finetune_boundaries(
    state: TrainedLocal,
    dataset: &[PairedSample],
    cfg: &LocalTrainConfig,
    on_step: impl FnMut(u64, f64),
) -> Result<TrainedLocal> {
    let mut ft_cfg = cfg.clone();
    ft_cfg.weights.j_acc *= 2.0;
    train_local_inner(dataset, &ft_cfg, Some(state), true, on_step)
}
