//! Forward process, samplers, and the x0-prediction loss suite.
//!
//! The denoiser predicts the clean sample directly, so the DDPM posterior
//! mean is an affine blend of the prediction and the current noisy state,
//! and DDIM becomes a deterministic re-noising along a strided timestep
//! subsequence. Losses combine plain reconstruction with forward-kinematics
//! penalties (joint position / velocity / acceleration) and the decoupled
//! foot-contact term driven by the predicted contact channels.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::{Graph, Var};
use crate::invalid_arg;
use crate::math::F64Ext;
use crate::motion::{MotionSeq, MOTION_CHANNELS, ROOT_OFFSET, ROT_OFFSET};
use crate::rng::{next_normal, Rng};
use crate::schedule::NoiseSchedule;
use crate::skeleton::{forward_kinematics, JointPositions, KinematicChain, GUARD_EPS};
use crate::tensor::Tensor;

/// A model that predicts the clean sample from a noisy one at timestep `t`.
pub trait X0Model {
    fn predict_clean(&self, noisy: &Tensor, t: usize) -> Tensor;
}

/// Test/diagnostic model that always answers with a fixed clean sample.
/// Because its output ignores the input, every channel evolves
/// independently under the samplers, which makes it the right instrument
/// for locality checks of guided sampling.
pub struct OracleModel {
    pub clean: Tensor,
}

impl X0Model for OracleModel {
    fn predict_clean(&self, _noisy: &Tensor, _t: usize) -> Tensor {
        self.clean.clone()
    }
}

/// Diffuse a clean sample to noise level `t` with given noise:
/// `sqrt(alpha_bar_t) d0 + sqrt(1 - alpha_bar_t) eps`.
///
/// `t = -1` returns the clean sample bit-exactly.
pub fn q_sample(d0: &Tensor, t: i64, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_timestep(t)?;
    if t == -1 {
        return Ok(d0.clone());
    }
    if eps.shape() != d0.shape() {
        return Err(invalid_arg!(
            "noise shape {:?} does not match sample shape {:?}",
            eps.shape(),
            d0.shape()
        ));
    }
    let ab = sched.alpha_bar(t);
    let (ca, cb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let data = d0
        .data()
        .iter()
        .zip(eps.data())
        .map(|(&x, &e)| ca * x + cb * e)
        .collect();
    Ok(Tensor::new(d0.shape(), data))
}

/// Standard normal tensor from the stream.
pub fn noise_like(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(next_normal(rng));
    }
    Tensor::new(shape, data)
}

/// One DDPM ancestral step `t -> t-1` with an x0-predicting model.
///
/// Posterior mean `c0 x0_hat + c1 d_t`; noise is added only for `t > 0`, so
/// the final step is deterministic given the prediction.
pub fn p_sample_ddpm(
    model: &dyn X0Model,
    d_t: &Tensor,
    t: usize,
    sched: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Tensor> {
    sched.check_timestep(t as i64)?;
    let x0 = model.predict_clean(d_t, t);
    let ab_t = sched.alpha_bar(t as i64);
    let ab_prev = sched.alpha_bar(t as i64 - 1);
    let alpha_t = ab_t / ab_prev;
    let beta_t = 1.0 - alpha_t;
    let c0 = ab_prev.sqrt() * beta_t / (1.0 - ab_t);
    let c1 = alpha_t.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t);
    let sigma = ((1.0 - ab_prev) / (1.0 - ab_t) * beta_t).sqrt();

    let mut data: Vec<f64> = x0
        .data()
        .iter()
        .zip(d_t.data())
        .map(|(&p, &cur)| c0 * p + c1 * cur)
        .collect();
    if t > 0 {
        for v in data.iter_mut() {
            *v += sigma * next_normal(rng);
        }
    }
    let out = Tensor::new(d_t.shape(), data);
    if !out.is_finite() {
        return Err(CoreError::NonFinite { context: alloc::format!("DDPM step t={t}") });
    }
    Ok(out)
}

/// Full DDPM chain from pure noise.
pub fn sample_ddpm(
    model: &dyn X0Model,
    shape: &[usize],
    sched: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Tensor> {
    let mut d = noise_like(shape, rng);
    for t in (0..sched.steps()).rev() {
        d = p_sample_ddpm(model, &d, t, sched, rng)?;
    }
    Ok(d)
}

/// Strided deterministic DDIM timesteps, descending. `steps` must divide
/// the schedule length.
pub fn ddim_timesteps(sched: &NoiseSchedule, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > sched.steps() {
        return Err(invalid_arg!(
            "DDIM steps {steps} outside [1, {}]",
            sched.steps()
        ));
    }
    if sched.steps() % steps != 0 {
        return Err(invalid_arg!(
            "DDIM steps {steps} must divide the schedule length {}",
            sched.steps()
        ));
    }
    let stride = sched.steps() / steps;
    Ok((0..steps).rev().map(|j| (j + 1) * stride - 1).collect())
}

/// One deterministic DDIM update from `t` to `t_prev` (`-1` = clean).
pub fn ddim_step(
    model: &dyn X0Model,
    d_t: &Tensor,
    t: usize,
    t_prev: i64,
    sched: &NoiseSchedule,
) -> Result<Tensor> {
    let x0 = model.predict_clean(d_t, t);
    let ab_t = sched.alpha_bar(t as i64);
    let ab_prev = sched.alpha_bar(t_prev);
    let eps_scale = 1.0 / (1.0 - ab_t).sqrt();
    let (sa, sb) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    let sqrt_ab_t = ab_t.sqrt();
    let data: Vec<f64> = x0
        .data()
        .iter()
        .zip(d_t.data())
        .map(|(&p, &cur)| {
            let eps_hat = (cur - sqrt_ab_t * p) * eps_scale;
            sa * p + sb * eps_hat
        })
        .collect();
    let out = Tensor::new(d_t.shape(), data);
    if !out.is_finite() {
        return Err(CoreError::NonFinite { context: alloc::format!("DDIM step t={t}") });
    }
    Ok(out)
}

/// Deterministic DDIM sampler (eta = 0) over `steps` strided timesteps;
/// only the initial noise consumes randomness.
pub fn sample_ddim(
    model: &dyn X0Model,
    shape: &[usize],
    sched: &NoiseSchedule,
    steps: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let taus = ddim_timesteps(sched, steps)?;
    let mut d = noise_like(shape, rng);
    for (i, &t) in taus.iter().enumerate() {
        let t_prev = if i + 1 < taus.len() { taus[i + 1] as i64 } else { -1 };
        d = ddim_step(model, &d, t, t_prev, sched)?;
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Weights for the total training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub joint: f64,
    pub j_vel: f64,
    pub j_acc: f64,
    pub contact: f64,
    pub genre: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { joint: 1.0, j_vel: 0.5, j_acc: 0.5, contact: 10.0, genre: 0.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("joint", self.joint),
            ("j_vel", self.j_vel),
            ("j_acc", self.j_acc),
            ("contact", self.contact),
            ("genre", self.genre),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid_arg!("loss weight {name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// The forward-kinematics auxiliary loss values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxLosses {
    pub joint: f64,
    pub j_vel: f64,
    pub j_acc: f64,
    pub contact: f64,
}

/// In-graph loss handles for training.
pub struct MotionLossVars {
    pub recon: Var,
    pub joint: Var,
    pub j_vel: Var,
    pub j_acc: Var,
    pub contact: Var,
}

/// Normalize rows of a (T, 3) block with the same epsilon guard as the
/// plain decoder.
fn normalize_rows(g: &mut Graph, a: Var) -> Var {
    let sq = g.mul(a, a);
    let n2 = g.sum_last_keep(sq);
    let n2e = g.add_const(n2, GUARD_EPS);
    let inv = g.pow_const(n2e, -0.5);
    g.mul_col_bcast(a, inv)
}

fn cross_rows(g: &mut Graph, a: Var, b: Var) -> Var {
    let (ax, ay, az) = (g.slice_cols(a, 0, 1), g.slice_cols(a, 1, 1), g.slice_cols(a, 2, 1));
    let (bx, by, bz) = (g.slice_cols(b, 0, 1), g.slice_cols(b, 1, 1), g.slice_cols(b, 2, 1));
    let aybz = g.mul(ay, bz);
    let azby = g.mul(az, by);
    let cx = g.sub(aybz, azby);
    let azbx = g.mul(az, bx);
    let axbz = g.mul(ax, bz);
    let cy = g.sub(azbx, axbz);
    let axby = g.mul(ax, by);
    let aybx = g.mul(ay, bx);
    let cz = g.sub(axby, aybx);
    g.concat_cols(&[cx, cy, cz])
}

/// Differentiable 6D decode of one joint's channels into (T, 3, 3)
/// row-major rotation matrices.
fn rot6d_to_matrices_graph(g: &mut Graph, motion: Var, base: usize, frames: usize) -> Var {
    let a1 = g.slice_cols(motion, base, 3);
    let a2 = g.slice_cols(motion, base + 3, 3);
    let b1 = normalize_rows(g, a1);
    let prod = g.mul(b1, a2);
    let dot = g.sum_last_keep(prod);
    let proj = g.mul_col_bcast(b1, dot);
    let rej = g.sub(a2, proj);
    let b2 = normalize_rows(g, rej);
    let b3 = cross_rows(g, b1, b2);
    // Row-major 3x3: rows are (x, y, z) components of the three columns.
    let mut cols = Vec::with_capacity(9);
    for comp in 0..3 {
        for basis in [b1, b2, b3] {
            cols.push(g.slice_cols(basis, comp, 1));
        }
    }
    let flat = g.concat_cols(&cols);
    g.reshape(flat, &[frames, 3, 3])
}

/// Differentiable forward kinematics: motion (T, 139) -> positions (T, 66),
/// matching [`forward_kinematics`] up to floating-point association.
pub fn fk_positions_graph(g: &mut Graph, motion: Var, chain: &KinematicChain) -> Var {
    let frames = g.value(motion).rows();
    assert_eq!(g.value(motion).cols(), MOTION_CHANNELS);
    let trans = g.slice_cols(motion, ROOT_OFFSET, 3);
    let n = chain.joint_count();
    let mut global: Vec<Var> = Vec::with_capacity(n);
    let mut rel: Vec<Var> = Vec::with_capacity(n);
    for j in 0..n {
        let rot = rot6d_to_matrices_graph(g, motion, ROT_OFFSET + 6 * j, frames);
        match chain.parent[j] {
            None => {
                global.push(rot);
                let off = chain.rest_offset[j];
                let off_row = g.constant(Tensor::new(&[1, 3], alloc::vec![off[0], off[1], off[2]]));
                rel.push(g.broadcast_rows(off_row, frames));
            }
            Some(p) => {
                let gl = g.bmm(global[p], rot);
                global.push(gl);
                let off = chain.rest_offset[j];
                let off_row = g.constant(Tensor::new(&[1, 3], alloc::vec![off[0], off[1], off[2]]));
                let off_rows = g.broadcast_rows(off_row, frames);
                let off_col = g.reshape(off_rows, &[frames, 3, 1]);
                let moved = g.bmm(global[p], off_col);
                let moved = g.reshape(moved, &[frames, 3]);
                rel.push(g.add(rel[p], moved));
            }
        }
    }
    let world: Vec<Var> = rel.iter().map(|r| g.add(*r, trans)).collect();
    g.concat_cols(&world)
}

/// Forward-difference rows scaled to physical units: (R, C) -> (R-1, C).
fn diff_rows(g: &mut Graph, x: Var, fps: f64) -> Var {
    let rows = g.value(x).rows();
    let hi = g.slice_rows(x, 1, rows - 1);
    let lo = g.slice_rows(x, 0, rows - 1);
    let d = g.sub(hi, lo);
    g.scale(d, fps)
}

/// Flatten a [`JointPositions`] into an (L, 3J) tensor.
pub fn positions_tensor(pos: &JointPositions) -> Tensor {
    let (l, j) = (pos.frames(), pos.joints());
    let mut data = Vec::with_capacity(l * j * 3);
    for f in 0..l {
        for joint in 0..j {
            data.extend_from_slice(&pos.at(f, joint));
        }
    }
    Tensor::new(&[l, 3 * j], data)
}

/// Build the full loss suite in-graph for one training window.
///
/// `pred` is the model output (T, 139) inside the graph; `clean` is the
/// ground-truth window. Reconstruction is the elementwise mean square;
/// the kinematic terms are per-frame squared norms averaged over frames;
/// the contact term multiplies horizontal plus downward-vertical foot
/// velocity by the predicted contact label, averaged over frames and feet.
pub fn motion_losses_graph(
    g: &mut Graph,
    pred: Var,
    clean: &MotionSeq,
    chain: &KinematicChain,
) -> MotionLossVars {
    let frames = clean.len();
    assert!(frames >= 3, "loss window needs at least 3 frames");
    let fps = clean.fps();
    let clean_var = g.constant(clean.frames().clone());
    let recon = g.mse(pred, clean_var);

    // Both position sets run through the same in-graph kinematics so a
    // perfect prediction yields exactly zero; the target side is constant,
    // so no gradients flow through it.
    let target_pos = fk_positions_graph(g, clean_var, chain);
    let pred_pos = fk_positions_graph(g, pred, chain);

    let joint = {
        let d = g.sub(pred_pos, target_pos);
        let sq = g.mul(d, d);
        let s = g.sum_all(sq);
        g.scale(s, 1.0 / frames as f64)
    };
    let j_vel = {
        let pv = diff_rows(g, pred_pos, fps);
        let tv = diff_rows(g, target_pos, fps);
        let d = g.sub(pv, tv);
        let sq = g.mul(d, d);
        let s = g.sum_all(sq);
        g.scale(s, 1.0 / (frames - 1) as f64)
    };
    let j_acc = {
        let pv = diff_rows(g, pred_pos, fps);
        let pa = diff_rows(g, pv, fps);
        let tv = diff_rows(g, target_pos, fps);
        let ta = diff_rows(g, tv, fps);
        let d = g.sub(pa, ta);
        let sq = g.mul(d, d);
        let s = g.sum_all(sq);
        g.scale(s, 1.0 / (frames - 2) as f64)
    };

    // Contact: predicted foot velocities, horizontal + downward vertical,
    // gated by the predicted contact channel of the same frame.
    let contact = {
        let mut total: Option<Var> = None;
        for (foot, &joint_idx) in chain.foot_joints.iter().enumerate() {
            let fp = g.slice_cols(pred_pos, 3 * joint_idx, 3);
            let v = diff_rows(g, fp, fps);
            let vx = g.slice_cols(v, 0, 1);
            let vy = g.slice_cols(v, 1, 1);
            let vz = g.slice_cols(v, 2, 1);
            let down = g.neg_part(vy);
            let pen = g.concat_cols(&[vx, down, vz]);
            let label = g.slice_cols(pred, foot, 1);
            let label = g.clamp01(label);
            let label = g.slice_rows(label, 0, frames - 1);
            let gated = g.mul_col_bcast(pen, label);
            let sq = g.mul(gated, gated);
            let s = g.sum_all(sq);
            total = Some(match total {
                Some(acc) => g.add(acc, s),
                None => s,
            });
        }
        let t = total.expect("four feet");
        g.scale(t, 1.0 / (4.0 * (frames - 1) as f64))
    };

    MotionLossVars { recon, joint, j_vel, j_acc, contact }
}

/// Weighted total per the training objective (genre term supplied by the
/// discriminator when enabled).
pub fn total_loss_graph(
    g: &mut Graph,
    losses: &MotionLossVars,
    genre: Option<Var>,
    w: &LossWeights,
) -> Var {
    let mut total = losses.recon;
    for (term, weight) in [
        (losses.joint, w.joint),
        (losses.j_vel, w.j_vel),
        (losses.j_acc, w.j_acc),
        (losses.contact, w.contact),
    ] {
        if weight != 0.0 {
            let scaled = g.scale(term, weight);
            total = g.add(total, scaled);
        }
    }
    if let Some(gv) = genre {
        if w.genre != 0.0 {
            let scaled = g.scale(gv, w.genre);
            total = g.add(total, scaled);
        }
    }
    total
}

/// Plain (non-training) evaluation of the auxiliary losses between a
/// ground-truth window and a prediction.
pub fn aux_losses(
    clean: &MotionSeq,
    pred: &MotionSeq,
    chain: &KinematicChain,
) -> Result<AuxLosses> {
    if clean.len() < 3 {
        return Err(CoreError::SequenceTooShort { len: clean.len(), min: 3 });
    }
    if clean.len() != pred.len() {
        return Err(invalid_arg!(
            "prediction has {} frames, target has {}",
            pred.len(),
            clean.len()
        ));
    }
    let mut g = Graph::new();
    let pred_var = g.constant(pred.frames().clone());
    let l = motion_losses_graph(&mut g, pred_var, clean, chain);
    Ok(AuxLosses {
        joint: g.scalar_value(l.joint),
        j_vel: g.scalar_value(l.j_vel),
        j_acc: g.scalar_value(l.j_acc),
        contact: g.scalar_value(l.contact),
    })
}

/// Mean squared reconstruction error of an x0 model on one noised sample.
pub fn recon_loss(
    model: &dyn X0Model,
    d0: &Tensor,
    t: usize,
    eps: &Tensor,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let d_t = q_sample(d0, t as i64, eps, sched)?;
    let pred = model.predict_clean(&d_t, t);
    if pred.shape() != d0.shape() {
        return Err(invalid_arg!(
            "model output shape {:?} does not match target {:?}",
            pred.shape(),
            d0.shape()
        ));
    }
    let n = d0.len() as f64;
    Ok(d0
        .data()
        .iter()
        .zip(pred.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Weighted scalar total of precomputed loss components.
pub fn total_loss(recon: f64, aux: &AuxLosses, genre: f64, w: &LossWeights) -> f64 {
    recon
        + w.joint * aux.joint
        + w.j_vel * aux.j_vel
        + w.j_acc * aux.j_acc
        + w.contact * aux.contact
        + w.genre * genre
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::CONTACT_CHANNELS;
    use crate::rng::rng_from_seed;
    use crate::schedule::{make_schedule, ScheduleKind};

    fn schedule() -> NoiseSchedule {
        make_schedule(50, ScheduleKind::Cosine).unwrap()
    }

    #[test]
    fn q_sample_clean_convention_is_bit_exact() {
        let sched = schedule();
        let mut rng = rng_from_seed(1);
        let d0 = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let eps = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let out = q_sample(&d0, -1, &eps, &sched).unwrap();
        assert_eq!(out.data(), d0.data());
        assert!(q_sample(&d0, 50, &eps, &sched).is_err());
        assert!(q_sample(&d0, -2, &eps, &sched).is_err());
    }

    #[test]
    fn q_sample_of_zero_sample_is_scaled_noise() {
        let sched = schedule();
        let mut rng = rng_from_seed(2);
        let d0 = Tensor::zeros(&[2, 3]);
        let eps = Tensor::randn(&[2, 3], 1.0, &mut rng);
        let t = 20;
        let out = q_sample(&d0, t, &eps, &sched).unwrap();
        let cb = (1.0 - sched.alpha_bar(t)).sqrt();
        for (o, e) in out.data().iter().zip(eps.data()) {
            assert!((o - cb * e).abs() < 1e-15);
        }
    }

    #[test]
    fn q_sample_monte_carlo_moments_match_the_forward_process() {
        let sched = schedule();
        let mut rng = rng_from_seed(3);
        let d0 = Tensor::scalar(0.7);
        let t = 25;
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let eps = noise_like(&[1], &mut rng);
            let v = q_sample(&d0, t, &eps, &sched).unwrap().data()[0];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let ab = sched.alpha_bar(t);
        let target_mean = ab.sqrt() * 0.7;
        let target_var = 1.0 - ab;
        // 3-sigma bounds for the estimators.
        let mean_tol = 3.0 * target_var.sqrt() / (n as f64).sqrt();
        let var_tol = 3.0 * target_var * (2.0 / n as f64).sqrt();
        assert!((mean - target_mean).abs() < mean_tol, "mean {mean} vs {target_mean}");
        assert!((var - target_var).abs() < var_tol, "var {var} vs {target_var}");
    }

    #[test]
    fn ddpm_chain_with_oracle_recovers_the_clean_sample() {
        let sched = schedule();
        let mut rng = rng_from_seed(4);
        let clean = Tensor::randn(&[4, 6], 1.0, &mut rng);
        let model = OracleModel { clean: clean.clone() };
        let out = sample_ddpm(&model, &[4, 6], &sched, &mut rng).unwrap();
        assert!(out.linf_distance(&clean) < 1e-3);

        // Contraction from a noised start with live noise in the chain.
        let eps = noise_like(&[4, 6], &mut rng);
        let mut d = q_sample(&clean, sched.steps() as i64 - 1, &eps, &sched).unwrap();
        for t in (0..sched.steps()).rev() {
            d = p_sample_ddpm(&model, &d, t, &sched, &mut rng).unwrap();
        }
        assert!(d.linf_distance(&clean) < 1e-3);
    }

    #[test]
    fn ddpm_final_step_is_deterministic() {
        let sched = schedule();
        let mut rng1 = rng_from_seed(5);
        let mut rng2 = rng_from_seed(999);
        let clean = Tensor::scalar(0.3);
        let model = OracleModel { clean };
        let d = Tensor::scalar(5.0);
        let a = p_sample_ddpm(&model, &d, 0, &sched, &mut rng1).unwrap();
        let b = p_sample_ddpm(&model, &d, 0, &sched, &mut rng2).unwrap();
        assert_eq!(a.data(), b.data(), "no noise may be added at t = 0");
        assert!((a.data()[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ddpm_is_reproducible_for_a_fixed_seed() {
        let sched = schedule();
        let clean = Tensor::randn(&[2, 3], 1.0, &mut rng_from_seed(6));
        let model = OracleModel { clean };
        let a = sample_ddpm(&model, &[2, 3], &sched, &mut rng_from_seed(7)).unwrap();
        let b = sample_ddpm(&model, &[2, 3], &sched, &mut rng_from_seed(7)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn ddim_full_stride_recovers_oracle_sample_and_is_deterministic() {
        let sched = schedule();
        let mut rng = rng_from_seed(8);
        let clean = Tensor::randn(&[3, 5], 1.0, &mut rng);
        let model = OracleModel { clean: clean.clone() };
        let out = sample_ddim(&model, &[3, 5], &sched, sched.steps(), &mut rng_from_seed(9)).unwrap();
        assert!(out.linf_distance(&clean) < 1e-3);
        let again = sample_ddim(&model, &[3, 5], &sched, sched.steps(), &mut rng_from_seed(9)).unwrap();
        assert_eq!(out.data(), again.data());

        // Strided subsequence: 50 steps / 10.
        let short = sample_ddim(&model, &[3, 5], &sched, 10, &mut rng_from_seed(9)).unwrap();
        assert!(short.linf_distance(&clean) < 1e-3);
    }

    #[test]
    fn ddim_step_counts_are_validated() {
        let sched = schedule();
        assert!(ddim_timesteps(&sched, 51).is_err());
        assert!(ddim_timesteps(&sched, 0).is_err());
        assert!(ddim_timesteps(&sched, 7).is_err()); // does not divide 50
        assert_eq!(ddim_timesteps(&sched, 5).unwrap(), alloc::vec![49, 39, 29, 19, 9]);
    }

    #[test]
    fn graph_fk_matches_plain_fk() {
        let chain = KinematicChain::human22();
        let m = crate::motion::tests::random_motion(6, 17);
        let plain = positions_tensor(&forward_kinematics(&m, &chain));
        let mut g = Graph::new();
        let mv = g.constant(m.frames().clone());
        let pos = fk_positions_graph(&mut g, mv, &chain);
        assert!(g.value(pos).linf_distance(&plain) < 1e-9);
    }

    #[test]
    fn aux_losses_vanish_for_perfect_prediction() {
        let chain = KinematicChain::human22();
        let m = crate::motion::tests::random_motion(8, 19);
        let l = aux_losses(&m, &m, &chain).unwrap();
        assert_eq!(l.joint, 0.0);
        assert_eq!(l.j_vel, 0.0);
        assert_eq!(l.j_acc, 0.0);
        assert!(aux_losses(&m.slice_frames(0, 2), &m.slice_frames(0, 2), &chain).is_err());
    }

    #[test]
    fn static_prediction_with_full_contact_has_zero_contact_loss() {
        let chain = KinematicChain::human22();
        let mut frames = MotionSeq::zeros(5, 30.0).into_frames();
        for f in 0..5 {
            for c in 0..CONTACT_CHANNELS {
                frames.set2(f, c, 1.0);
            }
        }
        let m = MotionSeq::new(frames, 30.0).unwrap();
        let l = aux_losses(&m, &m, &chain).unwrap();
        assert_eq!(l.contact, 0.0);
    }

    #[test]
    fn gliding_feet_with_full_contact_cost_speed_squared() {
        let chain = KinematicChain::human22();
        let fps = 30.0;
        let v = 0.9; // m/s horizontal glide
        // Two frames: a single velocity sample. All feet glide at v with
        // contact 1, so the mean over frames and feet is v^2.
        let mut frames = MotionSeq::zeros(2, fps).into_frames();
        for f in 0..2 {
            for c in 0..CONTACT_CHANNELS {
                frames.set2(f, c, 1.0);
            }
            frames.set2(f, ROOT_OFFSET, v / fps * f as f64);
        }
        let pred = MotionSeq::new(frames, fps).unwrap();
        // Graph losses need >= 3 frames for acceleration; evaluate contact
        // directly on a 3-frame extension.
        let mut ext = MotionSeq::zeros(3, fps).into_frames();
        for f in 0..3 {
            for c in 0..CONTACT_CHANNELS {
                ext.set2(f, c, 1.0);
            }
            ext.set2(f, ROOT_OFFSET, v / fps * f as f64);
        }
        let pred3 = MotionSeq::new(ext, fps).unwrap();
        let l = aux_losses(&pred3, &pred3, &chain).unwrap();
        assert!((l.contact - v * v).abs() < 1e-9, "contact {}", l.contact);
        let _ = pred;
    }

    #[test]
    fn recon_loss_oracle_and_zero_model_closed_forms() {
        struct ZeroModel;
        impl X0Model for ZeroModel {
            fn predict_clean(&self, noisy: &Tensor, _t: usize) -> Tensor {
                Tensor::zeros(noisy.shape())
            }
        }
        let sched = schedule();
        let mut rng = rng_from_seed(11);
        let d0 = Tensor::randn(&[4, 5], 1.0, &mut rng);
        let eps = noise_like(&[4, 5], &mut rng);

        let oracle = OracleModel { clean: d0.clone() };
        assert_eq!(recon_loss(&oracle, &d0, 10, &eps, &sched).unwrap(), 0.0);

        let zero = ZeroModel;
        let expect = d0.data().iter().map(|x| x * x).sum::<f64>() / d0.len() as f64;
        let got = recon_loss(&zero, &d0, 10, &eps, &sched).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_linear_in_each_weight() {
        let aux = AuxLosses { joint: 0.4, j_vel: 0.3, j_acc: 0.2, contact: 0.1 };
        let base = LossWeights { joint: 0.0, j_vel: 0.0, j_acc: 0.0, contact: 0.0, genre: 0.0 };
        assert_eq!(total_loss(1.5, &aux, 0.7, &base), 1.5);
        let w = LossWeights { joint: 2.0, j_vel: 1.0, j_acc: 4.0, contact: 10.0, genre: 3.0 };
        let expect = 1.5 + 2.0 * 0.4 + 1.0 * 0.3 + 4.0 * 0.2 + 10.0 * 0.1 + 3.0 * 0.7;
        assert!((total_loss(1.5, &aux, 0.7, &w) - expect).abs() < 1e-15);
        // Doubling one weight adds exactly its component once more.
        let w2 = LossWeights { joint: 4.0, ..w };
        assert!((total_loss(1.5, &aux, 0.7, &w2) - (expect + 2.0 * 0.4)).abs() < 1e-15);
        assert!(LossWeights { joint: -1.0, ..base }.validate().is_err());
    }

    /// Small smooth perturbation of the rest pose; keeps the FK losses
    /// well-conditioned for finite differencing (low fps, strictly
    /// interior contact values).
    fn smooth_motion(len: usize, seed: u64) -> MotionSeq {
        let mut rng = rng_from_seed(seed);
        let mut frames = MotionSeq::zeros(len, 2.0).into_frames();
        for f in 0..len {
            for c in 0..CONTACT_CHANNELS {
                frames.set2(f, c, 0.3 + 0.4 * crate::rng::next_uniform(&mut rng));
            }
            for c in ROOT_OFFSET..ROOT_OFFSET + 3 {
                frames.set2(f, c, 0.2 * next_normal_clamped(&mut rng));
            }
            for c in ROT_OFFSET..MOTION_CHANNELS {
                let base = frames.at2(f, c);
                frames.set2(f, c, base + 0.25 * next_normal_clamped(&mut rng));
            }
        }
        MotionSeq::new(frames, 2.0).unwrap()
    }

    fn next_normal_clamped(rng: &mut crate::rng::Rng) -> f64 {
        next_normal_raw(rng).clamp(-2.0, 2.0)
    }

    fn next_normal_raw(rng: &mut crate::rng::Rng) -> f64 {
        crate::rng::next_normal(rng)
    }

    #[test]
    fn loss_gradients_flow_through_fk_and_match_finite_differences() {
        let chain = KinematicChain::human22();
        let clean = smooth_motion(4, 23);
        let pred = smooth_motion(4, 29);
        let weights = LossWeights::default();

        let clean2 = clean.clone();
        let chain2 = chain.clone();
        let err = crate::graph::tests::check_grad(pred.frames(), &move |g, v| {
            let l = motion_losses_graph(g, v, &clean2, &chain2);
            total_loss_graph(g, &l, None, &weights)
        });
        assert!(err < 1e-4, "total loss gradient error {err}");
    }
}
