//! Synthetic paired music-dance data and key-motion extraction.
//!
//! The generator stands in for a capture dataset: keyposes from a
//! genre-keyed bank are placed at the music's beat frames and connected
//! with smoothstep interpolation in axis-angle space, so joint velocities
//! dip to local minima exactly at the beats. The root drifts along a slow
//! genre-keyed closed curve and contact labels are derived from the
//! synthesized feet themselves, which makes label/height consistency a
//! construction property rather than a hope.
//!
//! Key-motion extraction mirrors how the global stage is trained: the
//! 8-frame windows at segment boundaries become hard primitives, and the
//! highest-envelope beats (snapped to nearby speed minima) become soft
//! primitives.

use alloc::vec::Vec;

use crate::error::Result;
use crate::invalid_arg;
use crate::math::{axis_angle_to_mat3, F64Ext, Vec3, PI};
use crate::motion::{MotionSeq, CONTACT_CHANNELS, MOTION_CHANNELS, ROOT_OFFSET, ROT_OFFSET};
use crate::music::{beat_indices, synth_music, GenreLabel, MusicFeatureSeq};
use crate::rng::{derive_seed, next_uniform, rng_from_seed};
use crate::rotation::matrix_to_rot6d;
use crate::skeleton::{forward_kinematics, joints, KinematicChain};
use crate::tensor::Tensor;

/// Height (meters) below which a synthesized foot point is labeled as in
/// ground contact. Kept under the 5 cm evaluation threshold on purpose.
pub const CONTACT_LABEL_HEIGHT: f64 = 0.045;

/// Primitive length in frames.
pub const PRIMITIVE_FRAMES: usize = 8;

/// How segments tile a global window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentLayout {
    /// Global window length N.
    pub n_global: usize,
    /// Local segment length n.
    pub n_local: usize,
}

impl SegmentLayout {
    pub fn new(n_global: usize, n_local: usize) -> Result<Self> {
        let layout = Self { n_global, n_local };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_local < PRIMITIVE_FRAMES {
            return Err(invalid_arg!(
                "local window {} shorter than a primitive ({PRIMITIVE_FRAMES})",
                self.n_local
            ));
        }
        if self.n_global == 0 || self.n_global % self.n_local != 0 {
            return Err(invalid_arg!(
                "global window {} must be a positive multiple of local window {}",
                self.n_global,
                self.n_local
            ));
        }
        Ok(())
    }

    /// Segments per global window (l = N / n, at least 1).
    pub fn segments_per_window(&self) -> usize {
        self.n_global / self.n_local
    }

    /// Hard primitives per window: one per segment boundary, l + 1.
    pub fn hard_count(&self) -> usize {
        self.segments_per_window() + 1
    }

    /// Soft primitives generated per window (before mirroring): 2l.
    pub fn soft_count(&self) -> usize {
        2 * self.segments_per_window()
    }

    /// Model output slots: (l + 1) hard + 2l soft.
    pub fn slot_count(&self) -> usize {
        3 * self.segments_per_window() + 1
    }
}

impl Default for SegmentLayout {
    fn default() -> Self {
        Self { n_global: 1024, n_local: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    /// Pinned bit-exactly to segment boundaries; enables parallel stitching.
    Hard,
    /// Blended at beat-aligned windows during early denoising.
    Soft,
}

/// An 8-frame expressive key motion with its intended global timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct DancePrimitive {
    pub motion: MotionSeq,
    pub target_frame: usize,
    pub kind: PrimitiveKind,
}

/// Hard and soft primitives for one global window.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveSet {
    pub hard: Vec<DancePrimitive>,
    pub soft: Vec<DancePrimitive>,
    pub layout: SegmentLayout,
}

/// A music window paired with its dance and genre.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub id: alloc::string::String,
    pub music: MusicFeatureSeq,
    pub dance: MotionSeq,
    pub genre: GenreLabel,
}

impl PairedSample {
    pub fn validate(&self) -> Result<()> {
        if self.music.len() != self.dance.len() {
            return Err(invalid_arg!(
                "music has {} frames but dance has {}",
                self.music.len(),
                self.dance.len()
            ));
        }
        if self.music.fps() != self.dance.fps() {
            return Err(invalid_arg!("music and dance fps disagree"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Keypose bank
// ---------------------------------------------------------------------------

/// Joint axis-angle targets for one keypose. Anything unlisted stays at
/// rest. `lifted` marks which leg swings (contact labels come from the
/// synthesized heights, this only shapes the motion).
struct Keypose {
    rotations: Vec<(usize, Vec3)>,
    #[allow(dead_code)]
    lifted: Option<bool>, // Some(true) = left leg lifted
}

fn pose_rest() -> Keypose {
    Keypose { rotations: Vec::new(), lifted: None }
}

/// Arms raised overhead, slight torso twist.
fn pose_arms_up(side: f64) -> Keypose {
    use joints::*;
    Keypose {
        rotations: alloc::vec![
            (L_SHOULDER, [0.0, 0.0, 1.5]),
            (R_SHOULDER, [0.0, 0.0, -1.5]),
            (L_ELBOW, [0.0, 0.0, 0.4]),
            (R_ELBOW, [0.0, 0.0, -0.4]),
            (SPINE2, [0.0, 0.25 * side, 0.0]),
        ],
        lifted: None,
    }
}

/// One leg swung forward with bent knee, opposite arm reaching.
fn pose_step(left: bool, amp: f64) -> Keypose {
    use joints::*;
    let (hip, knee, shoulder, elbow) = if left {
        (L_HIP, L_KNEE, R_SHOULDER, R_ELBOW)
    } else {
        (R_HIP, R_KNEE, L_SHOULDER, L_ELBOW)
    };
    Keypose {
        rotations: alloc::vec![
            (hip, [-0.7 * amp, 0.0, 0.0]),
            (knee, [1.1 * amp, 0.0, 0.0]),
            (shoulder, [-0.9 * amp, 0.0, 0.0]),
            (elbow, [0.0, if left { -0.8 } else { 0.8 }, 0.0]),
            (SPINE1, [0.1 * amp, 0.0, 0.0]),
        ],
        lifted: Some(left),
    }
}

/// Crouch with arms out to the sides.
fn pose_crouch(amp: f64) -> Keypose {
    use joints::*;
    Keypose {
        rotations: alloc::vec![
            (L_HIP, [-0.5 * amp, 0.0, 0.0]),
            (R_HIP, [-0.5 * amp, 0.0, 0.0]),
            (L_KNEE, [0.8 * amp, 0.0, 0.0]),
            (R_KNEE, [0.8 * amp, 0.0, 0.0]),
            (L_SHOULDER, [0.0, 0.0, 0.9]),
            (R_SHOULDER, [0.0, 0.0, -0.9]),
            (SPINE1, [0.35 * amp, 0.0, 0.0]),
        ],
        lifted: None,
    }
}

/// Lean with hands brought together in front.
fn pose_reach(side: f64) -> Keypose {
    use joints::*;
    Keypose {
        rotations: alloc::vec![
            (L_SHOULDER, [-1.2, 0.0, -0.5]),
            (R_SHOULDER, [-1.2, 0.0, 0.5]),
            (L_ELBOW, [0.0, -0.6, 0.0]),
            (R_ELBOW, [0.0, 0.6, 0.0]),
            (SPINE2, [0.0, 0.0, 0.3 * side]),
            (NECK, [0.2, 0.0, 0.0]),
        ],
        lifted: None,
    }
}

/// Genre-keyed pose cycle. All genres alternate swing legs; amplitude and
/// flavor differ so genre features separate.
fn genre_cycle(genre: GenreLabel) -> Vec<Keypose> {
    match genre.0 % 4 {
        0 => alloc::vec![
            pose_arms_up(1.0),
            pose_step(true, 1.0),
            pose_reach(1.0),
            pose_step(false, 1.0),
        ],
        1 => alloc::vec![
            pose_step(true, 1.3),
            pose_crouch(1.0),
            pose_step(false, 1.3),
            pose_arms_up(-1.0),
        ],
        2 => alloc::vec![
            pose_reach(-1.0),
            pose_step(false, 0.8),
            pose_crouch(0.7),
            pose_step(true, 0.8),
        ],
        _ => alloc::vec![
            pose_crouch(1.2),
            pose_step(true, 1.1),
            pose_arms_up(1.0),
            pose_step(false, 1.1),
            pose_reach(-1.0),
        ],
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Dense per-joint axis-angle pose.
type DensePose = Vec<Vec3>;

fn densify(pose: &Keypose, jitter: &mut impl FnMut() -> f64) -> DensePose {
    let mut dense = alloc::vec![[0.0, 0.0, 0.0]; crate::motion::JOINT_COUNT];
    for (j, v) in &pose.rotations {
        dense[*j] = *v;
    }
    // Small seeded jitter on the posed joints keeps samples distinct
    // without moving feet through the floor.
    for v in dense.iter_mut() {
        for c in v.iter_mut() {
            *c += 0.06 * jitter();
        }
    }
    dense
}

fn lerp_pose(a: &DensePose, b: &DensePose, u: f64) -> DensePose {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            [
                x[0] + (y[0] - x[0]) * u,
                x[1] + (y[1] - x[1]) * u,
                x[2] + (y[2] - x[2]) * u,
            ]
        })
        .collect()
}

/// Root path: slow genre-keyed closed curve in the ground plane plus a
/// small vertical bob. One lap over the whole clip keeps per-frame
/// displacement well under the skating threshold.
fn root_at(genre: GenreLabel, radius: f64, phase: f64) -> Vec3 {
    let bob = 0.012 * (4.0 * PI * phase).sin();
    match genre.0 % 4 {
        0 => [radius * (2.0 * PI * phase).cos() - radius, bob, radius * (2.0 * PI * phase).sin()],
        1 => [
            radius * (2.0 * PI * phase).sin(),
            bob,
            0.5 * radius * (4.0 * PI * phase).sin(),
        ],
        2 => [
            0.8 * radius * (2.0 * PI * phase).cos() - 0.8 * radius,
            bob,
            0.5 * radius * (2.0 * PI * phase).sin(),
        ],
        _ => [
            radius * (2.0 * PI * phase).sin(),
            bob,
            radius * (1.0 - (2.0 * PI * phase).cos()) * 0.5,
        ],
    }
}

/// Deterministically synthesize one paired sample.
///
/// Keyposes sit on the beat grid, so mean joint speed has local minima at
/// (or within a frame or two of) every beat; contact labels are derived
/// from the generated foot heights.
pub fn generate_synthetic_pair(
    length: usize,
    beat_period: usize,
    genre: GenreLabel,
    seed: u64,
    fps: f64,
) -> Result<PairedSample> {
    if length < 2 * beat_period {
        return Err(invalid_arg!(
            "length {length} must cover at least two beat periods ({})",
            2 * beat_period
        ));
    }
    let music = synth_music(length, beat_period, genre, seed, fps)?;
    let beats = beat_indices(&music);

    let mut rng = rng_from_seed(derive_seed(seed, 0xda7a + genre.0 as u64));
    let mut jitter = {
        let mut jrng = rng_from_seed(derive_seed(seed, 0x11aa + genre.0 as u64));
        move || 2.0 * next_uniform(&mut jrng) - 1.0
    };

    // Keyframe grid: frame 0, every beat, and the final frame.
    let mut keyframes: Vec<usize> = Vec::with_capacity(beats.len() + 2);
    keyframes.push(0);
    for &b in &beats {
        if b > 0 && b < length - 1 {
            keyframes.push(b);
        }
    }
    if *keyframes.last().unwrap() != length - 1 {
        keyframes.push(length - 1);
    }

    let cycle = genre_cycle(genre);
    let keyposes: Vec<DensePose> = (0..keyframes.len())
        .map(|i| densify(&cycle[i % cycle.len()], &mut jitter))
        .collect();

    let radius = 0.35 + 0.2 * next_uniform(&mut rng);
    let chain = KinematicChain::human22();

    let mut frames = Tensor::zeros(&[length, MOTION_CHANNELS]);
    let mut segment = 0usize;
    for f in 0..length {
        while segment + 1 < keyframes.len() && f > keyframes[segment + 1] {
            segment += 1;
        }
        let (t0, t1) = (keyframes[segment], keyframes[(segment + 1).min(keyframes.len() - 1)]);
        let u = if t1 > t0 {
            crate::math::smoothstep((f - t0) as f64 / (t1 - t0) as f64)
        } else {
            0.0
        };
        let pose = lerp_pose(&keyposes[segment], &keyposes[(segment + 1).min(keyposes.len() - 1)], u);

        let phase = f as f64 / length as f64;
        let root = root_at(genre, radius, phase);
        frames.set2(f, ROOT_OFFSET, root[0]);
        frames.set2(f, ROOT_OFFSET + 1, root[1]);
        frames.set2(f, ROOT_OFFSET + 2, root[2]);

        // Global rotation: slow yaw sweep, one gentle oscillation per clip.
        let yaw = 0.35 * (2.0 * PI * phase).sin();
        let global = axis_angle_to_mat3([0.0, yaw, 0.0]);
        let r6 = matrix_to_rot6d(&global).expect("yaw matrix is a rotation");
        for (i, v) in r6.iter().enumerate() {
            frames.set2(f, ROT_OFFSET + i, *v);
        }
        for j in 1..crate::motion::JOINT_COUNT {
            let m = axis_angle_to_mat3(pose[j]);
            let r6 = matrix_to_rot6d(&m).expect("axis-angle matrix is a rotation");
            for (i, v) in r6.iter().enumerate() {
                frames.set2(f, ROT_OFFSET + 6 * j + i, *v);
            }
        }
    }

    // Contact labels from the synthesized feet themselves.
    let provisional = MotionSeq::new(frames, fps)?;
    let pos = forward_kinematics(&provisional, &chain);
    let mut frames = provisional.into_frames();
    for f in 0..length {
        for (c, &joint_idx) in chain.foot_joints.iter().enumerate() {
            let height = pos.at(f, joint_idx)[1];
            frames.set2(f, c, if height < CONTACT_LABEL_HEIGHT { 1.0 } else { 0.0 });
        }
    }
    let dance = MotionSeq::new(frames, fps)?;

    let sample = PairedSample {
        id: alloc::format!("synth-g{}-s{}", genre.0, seed),
        music,
        dance,
        genre,
    };
    sample.validate()?;
    Ok(sample)
}

// ---------------------------------------------------------------------------
// Key-motion extraction
// ---------------------------------------------------------------------------

/// Mean joint speed curve (length L-1): average over joints of the
/// per-frame displacement norm times fps.
pub fn mean_joint_speed(dance: &MotionSeq, chain: &KinematicChain) -> Result<Vec<f64>> {
    if dance.len() < 2 {
        return Err(crate::error::CoreError::SequenceTooShort { len: dance.len(), min: 2 });
    }
    let pos = forward_kinematics(dance, chain);
    let joints_n = pos.joints();
    let mut out = Vec::with_capacity(dance.len() - 1);
    for f in 0..dance.len() - 1 {
        let mut acc = 0.0;
        for j in 0..joints_n {
            let a = pos.at(f, j);
            let b = pos.at(f + 1, j);
            let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            acc += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        }
        out.push(acc / joints_n as f64 * dance.fps());
    }
    Ok(out)
}

fn window_start(center: usize, len: usize) -> usize {
    center
        .saturating_sub(PRIMITIVE_FRAMES / 2)
        .min(len - PRIMITIVE_FRAMES)
}

/// Snap a candidate center to the lowest-speed frame within +-4 frames,
/// ties resolved toward the original center (identity on flat curves).
fn snap_to_speed_minimum(center: usize, speed: &[f64]) -> usize {
    let lo = center.saturating_sub(4);
    let hi = (center + 4).min(speed.len().saturating_sub(1));
    if lo > hi {
        return center.min(speed.len().saturating_sub(1));
    }
    let mut best = center.clamp(lo, hi);
    for c in lo..=hi {
        let better = speed[c] < speed[best]
            || (speed[c] == speed[best]
                && c.abs_diff(center) < best.abs_diff(center));
        if better {
            best = c;
        }
    }
    best
}

/// Extract training targets for the global stage from one window's dance.
///
/// Hard primitives: 8-frame windows centered at segment boundaries
/// `{0, n, 2n, ..., l n}` (windows clamped inside the clip, `target_frame`
/// keeps the boundary). Soft primitives: the 2l beats with the highest
/// onset envelope, snapped to nearby mean-joint-speed minima and ordered
/// by time; missing beats fall back to uniform placement.
pub fn extract_key_motions(
    dance: &MotionSeq,
    music: &MusicFeatureSeq,
    layout: &SegmentLayout,
) -> Result<PrimitiveSet> {
    layout.validate()?;
    let n = layout.n_local;
    let l = layout.segments_per_window();
    if dance.len() < layout.n_global {
        return Err(invalid_arg!(
            "dance of {} frames shorter than the global window {}",
            dance.len(),
            layout.n_global
        ));
    }
    if music.len() != dance.len() {
        return Err(invalid_arg!("music and dance must be the same length"));
    }
    let chain = KinematicChain::human22();
    let speed = mean_joint_speed(dance, &chain)?;

    let mut hard = Vec::with_capacity(layout.hard_count());
    for j in 0..=l {
        let center = j * n;
        let start = window_start(center, dance.len());
        hard.push(DancePrimitive {
            motion: dance.slice_frames(start, PRIMITIVE_FRAMES),
            target_frame: center,
            kind: PrimitiveKind::Hard,
        });
    }

    let soft_targets = select_soft_centers(music, &speed, layout.soft_count(), dance.len());
    let mut soft: Vec<DancePrimitive> = soft_targets
        .into_iter()
        .map(|center| {
            let start = window_start(center, dance.len());
            DancePrimitive {
                motion: dance.slice_frames(start, PRIMITIVE_FRAMES),
                target_frame: center,
                kind: PrimitiveKind::Soft,
            }
        })
        .collect();
    soft.sort_by_key(|p| p.target_frame);

    Ok(PrimitiveSet { hard, soft, layout: *layout })
}

/// Pick `count` soft centers: top-envelope beats snapped to speed minima,
/// padded uniformly when there are not enough beats.
pub fn select_soft_centers(
    music: &MusicFeatureSeq,
    speed: &[f64],
    count: usize,
    length: usize,
) -> Vec<usize> {
    let beats = beat_indices(music);
    let mut ranked: Vec<usize> = beats.clone();
    ranked.sort_by(|a, b| {
        music
            .envelope(*b)
            .partial_cmp(&music.envelope(*a))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });

    let mut centers: Vec<usize> = ranked
        .into_iter()
        .take(count)
        .map(|b| snap_to_speed_minimum(b, speed))
        .collect();

    // Uniform fallback for missing slots.
    let missing = count.saturating_sub(centers.len());
    for i in 0..missing {
        centers.push(((i + 1) * length) / (missing + 1));
    }
    centers.sort_unstable();
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::music::{CH_BEAT, MUSIC_CHANNELS};
    use crate::skeleton::foot_state;

    fn sample() -> PairedSample {
        generate_synthetic_pair(256, 32, GenreLabel(0), 7, 30.0).unwrap()
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let a = sample();
        let b = sample();
        assert_eq!(a.dance.frames().data(), b.dance.frames().data());
        assert_eq!(a.music.feats().data(), b.music.feats().data());
    }

    #[test]
    fn contact_labels_imply_low_feet() {
        let s = sample();
        let chain = KinematicChain::human22();
        let fs = foot_state(&s.dance, &chain).unwrap();
        for f in 0..s.dance.len() {
            for foot in 0..CONTACT_CHANNELS {
                if s.dance.contact(f, foot) == 1.0 {
                    assert!(
                        fs.height(f, foot) < 0.05,
                        "frame {f} foot {foot}: height {}",
                        fs.height(f, foot)
                    );
                }
            }
        }
    }

    #[test]
    fn feet_alternate_between_planted_and_swing() {
        let s = sample();
        let mut planted = 0usize;
        let mut swinging = 0usize;
        for f in 0..s.dance.len() {
            let left = s.dance.contact(f, 0) + s.dance.contact(f, 1);
            let right = s.dance.contact(f, 2) + s.dance.contact(f, 3);
            if left > 0.0 && right > 0.0 {
                planted += 1;
            }
            if left == 0.0 || right == 0.0 {
                swinging += 1;
            }
        }
        assert!(planted > 0, "no double-support frames");
        assert!(swinging > 0, "no swing frames");
    }

    #[test]
    fn joint_speed_dips_near_every_beat() {
        let s = sample();
        let chain = KinematicChain::human22();
        let speed = mean_joint_speed(&s.dance, &chain).unwrap();
        let beats = beat_indices(&s.music);
        let half = 16usize;
        for &b in beats.iter().filter(|&&b| b >= half && b + half < speed.len()) {
            let lo = b - half + 2;
            let hi = b + half - 2;
            let (mut best, mut best_v) = (lo, f64::INFINITY);
            for f in lo..=hi {
                if speed[f] < best_v {
                    best_v = speed[f];
                    best = f;
                }
            }
            assert!(
                best.abs_diff(b) <= 2,
                "speed minimum near beat {b} is at {best} (distance {})",
                best.abs_diff(b)
            );
        }
    }

    #[test]
    fn generation_rejects_too_short_clips() {
        assert!(generate_synthetic_pair(40, 32, GenreLabel(0), 1, 30.0).is_err());
    }

    #[test]
    fn extraction_counts_and_spacing_match_the_layout() {
        let s = generate_synthetic_pair(1024, 32, GenreLabel(1), 3, 30.0).unwrap();
        let layout = SegmentLayout::new(1024, 256).unwrap();
        let ps = extract_key_motions(&s.dance, &s.music, &layout).unwrap();
        assert_eq!(ps.hard.len(), 5);
        assert_eq!(ps.soft.len(), 8);
        for (j, p) in ps.hard.iter().enumerate() {
            assert_eq!(p.target_frame, j * 256);
            assert_eq!(p.motion.len(), PRIMITIVE_FRAMES);
            assert_eq!(p.kind, PrimitiveKind::Hard);
        }
        for pair in ps.soft.windows(2) {
            assert!(pair[0].target_frame <= pair[1].target_frame);
        }
    }

    #[test]
    fn soft_centers_sit_on_or_near_beats() {
        let s = generate_synthetic_pair(512, 32, GenreLabel(2), 11, 30.0).unwrap();
        let layout = SegmentLayout::new(512, 128).unwrap();
        let ps = extract_key_motions(&s.dance, &s.music, &layout).unwrap();
        let beats = beat_indices(&s.music);
        for p in &ps.soft {
            let nearest = beats
                .iter()
                .map(|b| b.abs_diff(p.target_frame))
                .min()
                .unwrap();
            assert!(nearest <= 2, "soft target {} is {nearest} frames from a beat", p.target_frame);
        }
    }

    #[test]
    fn constant_pose_dance_snaps_identically() {
        // All speeds equal (zero): snapping must keep the original center.
        let speed = alloc::vec![0.0; 100];
        for c in [0usize, 4, 50, 99] {
            assert_eq!(snap_to_speed_minimum(c, &speed), c);
        }
    }

    #[test]
    fn too_few_beats_fall_back_to_uniform_placement() {
        let mut feats = Tensor::zeros(&[256, MUSIC_CHANNELS]);
        feats.set2(50, CH_BEAT, 1.0);
        feats.set2(150, CH_BEAT, 1.0);
        let music = MusicFeatureSeq::new(feats, 30.0).unwrap();
        let speed = alloc::vec![0.0; 255];
        let centers = select_soft_centers(&music, &speed, 8, 256);
        assert_eq!(centers.len(), 8);
        // The two real beats are present; the rest are evenly spread.
        assert!(centers.contains(&50));
        assert!(centers.contains(&150));
    }

    #[test]
    fn genres_produce_distinct_dances() {
        let a = generate_synthetic_pair(256, 32, GenreLabel(0), 5, 30.0).unwrap();
        let b = generate_synthetic_pair(256, 32, GenreLabel(1), 5, 30.0).unwrap();
        assert_ne!(a.dance.frames().data(), b.dance.frames().data());
    }
}
