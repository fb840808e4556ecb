//! Hard/soft diffusion guidance and parallel segment assembly.
//!
//! Hard primitives are split at segment boundaries: each segment's first
//! four frames take the second half of its boundary primitive and its last
//! four take the first half of the next one, so bit-exact overwrites alone
//! make independently denoised segments concatenate seamlessly. Soft
//! primitives occupy 8-frame beat-aligned windows and are blended in only
//! while `t >= T (1 - s)`: the blend substitutes the value re-noised to the
//! current level, which at the final step (with `alpha_bar(-1) = 1`) leaves
//! the window bit-equal to the primitive when `s = 1`.
//!
//! Every segment is denoised with an independent seed derived from the run
//! seed and the segment index, so serial and parallel execution are
//! bit-identical by construction.

use alloc::vec::Vec;

use crate::dataset::{PrimitiveSet, SegmentLayout, PRIMITIVE_FRAMES};
use crate::diffusion::{ddim_timesteps, ddim_step, noise_like, p_sample_ddpm, q_sample, X0Model};
use crate::error::Result;
use crate::global_stage::{SamplerKind, SamplerSpec};
use crate::invalid_arg;
use crate::motion::{MotionSeq, MOTION_CHANNELS};
use crate::music::MusicFeatureSeq;
use crate::rng::{derive_seed, rng_from_seed};
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// Half of a primitive: the rows pinned at each side of a boundary.
const HALF: usize = PRIMITIVE_FRAMES / 2;

/// A soft primitive's window inside one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoftWindow {
    pub segment: usize,
    /// Local start row; the window spans `start .. start + 8`.
    pub start: usize,
    /// Index into the augmented soft primitive list (for diagnostics).
    pub primitive: usize,
}

/// Guidance values and masks for all segments of one global window.
#[derive(Debug, Clone)]
pub struct GuidanceSpec {
    /// Per segment, the value rows (n x 139); only masked rows are read.
    pub values: Vec<Tensor>,
    /// Per segment, per row: whether guidance owns the row.
    pub masks: Vec<Vec<bool>>,
    pub soft_windows: Vec<SoftWindow>,
    /// Soft strength in [0, 1].
    pub soft_strength: f64,
    pub layout: SegmentLayout,
    /// Soft primitives that could not be placed without overlap.
    pub dropped: usize,
}

impl GuidanceSpec {
    pub fn segments(&self) -> usize {
        self.values.len()
    }

    /// Hard rows of every segment: the first and last four.
    pub fn hard_rows(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.layout.n_local;
        (0..HALF).chain(n - HALF..n)
    }

    fn validate(&self) -> Result<()> {
        let n = self.layout.n_local;
        for (seg, mask) in self.masks.iter().enumerate() {
            if mask.len() != n || self.values[seg].shape() != [n, MOTION_CHANNELS] {
                return Err(invalid_arg!("guidance tables disagree with the layout"));
            }
            // Reconstruct the expected mask from hard rows and windows.
            let mut expect = alloc::vec![false; n];
            for r in (0..HALF).chain(n - HALF..n) {
                expect[r] = true;
            }
            for w in self.soft_windows.iter().filter(|w| w.segment == seg) {
                if w.start < HALF || w.start > n - PRIMITIVE_FRAMES - HALF {
                    return Err(invalid_arg!(
                        "soft window at {} overlaps hard rows (segment {seg})",
                        w.start
                    ));
                }
                for r in w.start..w.start + PRIMITIVE_FRAMES {
                    if expect[r] {
                        return Err(invalid_arg!("overlapping guidance windows in segment {seg}"));
                    }
                    expect[r] = true;
                }
            }
            if &expect != mask {
                return Err(invalid_arg!("guidance mask inconsistent in segment {seg}"));
            }
        }
        Ok(())
    }
}

/// Legal start rows for a soft window: clear of both hard regions.
fn legal_start_range(n: usize) -> (usize, usize) {
    (HALF, n - PRIMITIVE_FRAMES - HALF)
}

/// Build guidance values and masks from an augmented primitive set.
///
/// Hard primitives are reshaped `(l+1)*8 -> trim 4 at each end -> l x 8`;
/// block halves pin each segment's head and tail rows. Soft primitives
/// claim the 8-frame window centered on their beat-aligned target; windows
/// whose beat violates the legal range clamp to the nearest legal span,
/// and collisions resolve in favor of the higher-envelope primitive (the
/// loser shifts to the nearest free span or is dropped and counted).
pub fn build_guidance(
    ps: &PrimitiveSet,
    music: &MusicFeatureSeq,
    soft_strength: f64,
) -> Result<GuidanceSpec> {
    let layout = ps.layout;
    layout.validate()?;
    if !(0.0..=1.0).contains(&soft_strength) {
        return Err(invalid_arg!("soft strength {soft_strength} outside [0, 1]"));
    }
    let l = layout.segments_per_window();
    let n = layout.n_local;
    if ps.hard.len() != l + 1 {
        return Err(invalid_arg!(
            "{} hard primitives do not fit a layout with {l} segments",
            ps.hard.len()
        ));
    }
    if music.len() != layout.n_global {
        return Err(invalid_arg!(
            "music window of {} frames does not match the layout ({})",
            music.len(),
            layout.n_global
        ));
    }
    for p in ps.hard.iter().chain(ps.soft.iter()) {
        if p.motion.len() != PRIMITIVE_FRAMES {
            return Err(invalid_arg!("primitive with {} frames", p.motion.len()));
        }
    }

    let mut values: Vec<Tensor> = (0..l).map(|_| Tensor::zeros(&[n, MOTION_CHANNELS])).collect();
    let mut masks: Vec<Vec<bool>> = (0..l).map(|_| alloc::vec![false; n]).collect();

    // Hard rows: segment i head takes primitive i's second half, tail takes
    // primitive i+1's first half (the trim-and-reshape construction).
    for seg in 0..l {
        copy_rows(&mut values[seg], 0, ps.hard[seg].motion.frames(), HALF, HALF);
        copy_rows(&mut values[seg], n - HALF, ps.hard[seg + 1].motion.frames(), 0, HALF);
        for r in (0..HALF).chain(n - HALF..n) {
            masks[seg][r] = true;
        }
    }

    // Soft windows, highest envelope first.
    let mut order: Vec<usize> = (0..ps.soft.len()).collect();
    order.sort_by(|&a, &b| {
        let ea = envelope_at(music, ps.soft[a].target_frame);
        let eb = envelope_at(music, ps.soft[b].target_frame);
        eb.partial_cmp(&ea)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(ps.soft[a].target_frame.cmp(&ps.soft[b].target_frame))
    });

    let (lo, hi) = legal_start_range(n);
    let mut soft_windows: Vec<SoftWindow> = Vec::new();
    let mut dropped = 0usize;
    for &idx in &order {
        let prim = &ps.soft[idx];
        let target = prim.target_frame.min(layout.n_global - 1);
        let seg = (target / n).min(l - 1);
        let local = target - seg * n;
        let desired = local.saturating_sub(HALF).clamp(lo, hi);
        let taken: Vec<usize> = soft_windows
            .iter()
            .filter(|w| w.segment == seg)
            .map(|w| w.start)
            .collect();
        let free = |start: usize| {
            taken
                .iter()
                .all(|&t| start + PRIMITIVE_FRAMES <= t || t + PRIMITIVE_FRAMES <= start)
        };
        let placed = if free(desired) {
            Some(desired)
        } else {
            // Nearest free legal span.
            (1..=(hi - lo))
                .flat_map(|d| {
                    let mut c = Vec::new();
                    if desired >= lo + d {
                        c.push(desired - d);
                    }
                    if desired + d <= hi {
                        c.push(desired + d);
                    }
                    c
                })
                .find(|&cand| free(cand))
        };
        match placed {
            Some(start) => {
                copy_rows(&mut values[seg], start, prim.motion.frames(), 0, PRIMITIVE_FRAMES);
                for r in start..start + PRIMITIVE_FRAMES {
                    masks[seg][r] = true;
                }
                soft_windows.push(SoftWindow { segment: seg, start, primitive: idx });
            }
            None => dropped += 1,
        }
    }
    soft_windows.sort_by_key(|w| (w.segment, w.start));

    let spec = GuidanceSpec {
        values,
        masks,
        soft_windows,
        soft_strength,
        layout,
        dropped,
    };
    spec.validate()?;
    Ok(spec)
}

fn envelope_at(music: &MusicFeatureSeq, frame: usize) -> f64 {
    music.envelope(frame.min(music.len() - 1))
}

fn copy_rows(dst: &mut Tensor, dst_start: usize, src: &Tensor, src_start: usize, rows: usize) {
    for r in 0..rows {
        for c in 0..MOTION_CHANNELS {
            dst.set2(dst_start + r, c, src.at2(src_start + r, c));
        }
    }
}

/// Overwrite masked rows of `d` with rows of `src` (bit-exact selection,
/// not an arithmetic blend).
fn select_rows(d: &mut Tensor, src: &Tensor, rows: impl Iterator<Item = usize>) {
    for r in rows {
        for c in 0..MOTION_CHANNELS {
            d.set2(r, c, src.at2(r, c));
        }
    }
}

/// Denoise one segment under guidance.
///
/// The per-segment stream is derived from `seed` and the segment index, so
/// results do not depend on scheduling. Soft guidance runs on steps with
/// `t >= T (1 - s)`; hard rows are overwritten with clean values after
/// every step.
pub fn guided_sample_segment(
    model: &dyn X0Model,
    spec: &GuidanceSpec,
    segment: usize,
    sched: &NoiseSchedule,
    sampler: SamplerSpec,
    seed: u64,
) -> Result<Tensor> {
    let n = spec.layout.n_local;
    let value = &spec.values[segment];
    let mask = &spec.masks[segment];
    let steps_total = sched.steps() as f64;
    let guided_from = steps_total * (1.0 - spec.soft_strength);
    let has_soft = spec.soft_strength > 0.0
        && spec.soft_windows.iter().any(|w| w.segment == segment);

    let mut rng = rng_from_seed(derive_seed(seed, segment as u64));
    let shape = [n, MOTION_CHANNELS];
    let mut d = noise_like(&shape, &mut rng);

    let mask_rows = || mask.iter().enumerate().filter(|(_, m)| **m).map(|(r, _)| r);
    let hard_rows = || (0..HALF).chain(n - HALF..n);

    match sampler.kind {
        SamplerKind::Ddpm => {
            for t in (0..sched.steps()).rev() {
                d = p_sample_ddpm(model, &d, t, sched, &mut rng)?;
                if has_soft && (t as f64) >= guided_from {
                    let eps = noise_like(&shape, &mut rng);
                    let noised = q_sample(value, t as i64 - 1, &eps, sched)?;
                    select_rows(&mut d, &noised, mask_rows());
                }
                select_rows(&mut d, value, hard_rows());
            }
        }
        SamplerKind::Ddim => {
            let taus = ddim_timesteps(sched, sampler.steps)?;
            for (i, &t) in taus.iter().enumerate() {
                let t_prev = if i + 1 < taus.len() { taus[i + 1] as i64 } else { -1 };
                d = ddim_step(model, &d, t, t_prev, sched)?;
                if has_soft && (t as f64) >= guided_from {
                    let eps = noise_like(&shape, &mut rng);
                    let noised = q_sample(value, t_prev, &eps, sched)?;
                    select_rows(&mut d, &noised, mask_rows());
                }
                select_rows(&mut d, value, hard_rows());
            }
        }
    }
    Ok(d)
}

/// Serial reference driver: denoise every segment in order. A parallel
/// driver calling [`guided_sample_segment`] per worker produces identical
/// bytes because the per-segment streams are independent.
pub fn guided_sample(
    models: &[&dyn X0Model],
    spec: &GuidanceSpec,
    sched: &NoiseSchedule,
    sampler: SamplerSpec,
    seed: u64,
) -> Result<Vec<Tensor>> {
    if models.len() != spec.segments() {
        return Err(invalid_arg!(
            "{} models for {} segments",
            models.len(),
            spec.segments()
        ));
    }
    let mut out = Vec::with_capacity(spec.segments());
    for (seg, model) in models.iter().enumerate() {
        out.push(guided_sample_segment(*model, spec, seg, sched, sampler, seed)?);
    }
    Ok(out)
}

/// Concatenate denoised segments into one sequence. Hard guidance already
/// pinned the junction rows, so this is a plain concatenation.
pub fn stitch_segments(segments: &[Tensor], fps: f64) -> Result<MotionSeq> {
    if segments.is_empty() {
        return Err(invalid_arg!("no segments to stitch"));
    }
    let n = segments[0].rows();
    let mut data = Vec::with_capacity(segments.len() * n * MOTION_CHANNELS);
    for (i, s) in segments.iter().enumerate() {
        if s.shape() != [n, MOTION_CHANNELS] {
            return Err(invalid_arg!(
                "segment {i} has shape {:?}, expected [{n}, {MOTION_CHANNELS}]",
                s.shape()
            ));
        }
        data.extend_from_slice(s.data());
    }
    MotionSeq::from_prediction(Tensor::new(&[segments.len() * n, MOTION_CHANNELS], data), fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DancePrimitive, PrimitiveKind};
    use crate::diffusion::{sample_ddpm, OracleModel};
    use crate::music::{synth_music, GenreLabel};
    use crate::rng::next_uniform;
    use crate::schedule::{make_schedule, ScheduleKind};

    fn test_layout() -> SegmentLayout {
        SegmentLayout::new(256, 64).unwrap()
    }

    fn random_primitive(seed: u64, target: usize, kind: PrimitiveKind) -> DancePrimitive {
        let mut rng = rng_from_seed(seed);
        let mut frames = Tensor::zeros(&[PRIMITIVE_FRAMES, MOTION_CHANNELS]);
        for r in 0..PRIMITIVE_FRAMES {
            for c in 0..MOTION_CHANNELS {
                frames.set2(r, c, next_uniform(&mut rng));
            }
        }
        DancePrimitive {
            motion: MotionSeq::new(frames, 30.0).unwrap(),
            target_frame: target,
            kind,
        }
    }

    fn primitive_set(layout: SegmentLayout, soft_targets: &[usize]) -> PrimitiveSet {
        let l = layout.segments_per_window();
        let hard = (0..=l)
            .map(|j| random_primitive(100 + j as u64, j * layout.n_local, PrimitiveKind::Hard))
            .collect();
        let soft = soft_targets
            .iter()
            .enumerate()
            .map(|(i, &t)| random_primitive(200 + i as u64, t, PrimitiveKind::Soft))
            .collect();
        PrimitiveSet { hard, soft, layout }
    }

    fn music_for(layout: SegmentLayout) -> MusicFeatureSeq {
        synth_music(layout.n_global, 16, GenreLabel(0), 5, 30.0).unwrap()
    }

    #[test]
    fn hard_rows_reconstruct_the_original_primitives() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[40, 100, 150, 210]);
        let spec = build_guidance(&ps, &music_for(layout), 0.5).unwrap();
        let n = layout.n_local;
        // Segment i tail + segment i+1 head = primitive i+1, bit-exact.
        for seg in 0..spec.segments() - 1 {
            let prim = ps.hard[seg + 1].motion.frames();
            for r in 0..4 {
                for c in 0..MOTION_CHANNELS {
                    assert_eq!(spec.values[seg].at2(n - 4 + r, c), prim.at2(r, c));
                    assert_eq!(spec.values[seg + 1].at2(r, c), prim.at2(4 + r, c));
                }
            }
        }
    }

    #[test]
    fn mask_row_counts_match_the_window_arithmetic() {
        let layout = test_layout();
        // 16 soft primitives (augmented count for l = 4).
        let targets: Vec<usize> = (0..16).map(|i| 10 + i * 15).collect();
        let ps = primitive_set(layout, &targets);
        let spec = build_guidance(&ps, &music_for(layout), 1.0).unwrap();
        let hard_ones: usize = spec.segments() * 8;
        let soft_ones = spec.soft_windows.len() * PRIMITIVE_FRAMES;
        let total: usize = spec
            .masks
            .iter()
            .map(|m| m.iter().filter(|&&b| b).count())
            .sum();
        assert_eq!(total, hard_ones + soft_ones);
        assert!(spec.soft_windows.len() + spec.dropped == 16);
        // With 4 segments of 64 frames there are 6 legal non-overlapping
        // windows per segment at most; nothing should be dropped here.
        assert_eq!(spec.dropped, 0);
    }

    #[test]
    fn no_soft_primitives_leaves_only_hard_rows() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[]);
        let spec = build_guidance(&ps, &music_for(layout), 0.7).unwrap();
        for mask in &spec.masks {
            let ones: Vec<usize> =
                mask.iter().enumerate().filter(|(_, &b)| b).map(|(r, _)| r).collect();
            assert_eq!(ones, alloc::vec![0, 1, 2, 3, 60, 61, 62, 63]);
        }
    }

    #[test]
    fn colliding_windows_shift_to_free_spans() {
        let layout = test_layout();
        // Three primitives fighting for nearly the same local rows.
        let ps = primitive_set(layout, &[30, 31, 32]);
        let spec = build_guidance(&ps, &music_for(layout), 1.0).unwrap();
        assert_eq!(spec.soft_windows.len(), 3);
        let mut starts: Vec<usize> = spec.soft_windows.iter().map(|w| w.start).collect();
        starts.sort_unstable();
        for pair in starts.windows(2) {
            assert!(pair[1] - pair[0] >= PRIMITIVE_FRAMES, "windows overlap: {starts:?}");
        }
    }

    #[test]
    fn wrong_primitive_counts_are_rejected() {
        let layout = test_layout();
        let mut ps = primitive_set(layout, &[40]);
        ps.hard.pop();
        assert!(build_guidance(&ps, &music_for(layout), 0.5).is_err());
        let ps = primitive_set(layout, &[40]);
        assert!(build_guidance(&ps, &music_for(layout), 1.5).is_err());
    }

    #[test]
    fn hard_rows_of_output_equal_clean_values_bitwise() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[40, 100, 150, 210]);
        let spec = build_guidance(&ps, &music_for(layout), 0.5).unwrap();
        let sched = make_schedule(20, ScheduleKind::Cosine).unwrap();
        let clean = Tensor::randn(&[64, MOTION_CHANNELS], 1.0, &mut rng_from_seed(77));
        let oracle = OracleModel { clean };
        let models: Vec<&dyn X0Model> = (0..4).map(|_| &oracle as &dyn X0Model).collect();
        for sampler in [
            SamplerSpec { kind: SamplerKind::Ddpm, steps: 20 },
            SamplerSpec { kind: SamplerKind::Ddim, steps: 10 },
        ] {
            let segs = guided_sample(&models, &spec, &sched, sampler, 9).unwrap();
            for (seg, out) in segs.iter().enumerate() {
                for r in spec.hard_rows() {
                    for c in 0..MOTION_CHANNELS {
                        assert_eq!(out.at2(r, c), spec.values[seg].at2(r, c));
                    }
                }
            }
        }
    }

    #[test]
    fn full_strength_soft_windows_equal_their_primitives_bitwise() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[40, 100, 150, 210]);
        let spec = build_guidance(&ps, &music_for(layout), 1.0).unwrap();
        let sched = make_schedule(20, ScheduleKind::Cosine).unwrap();
        let clean = Tensor::randn(&[64, MOTION_CHANNELS], 1.0, &mut rng_from_seed(78));
        let oracle = OracleModel { clean };
        let models: Vec<&dyn X0Model> = (0..4).map(|_| &oracle as &dyn X0Model).collect();
        for sampler in [
            SamplerSpec { kind: SamplerKind::Ddpm, steps: 20 },
            SamplerSpec { kind: SamplerKind::Ddim, steps: 20 },
        ] {
            let segs = guided_sample(&models, &spec, &sched, sampler, 10).unwrap();
            for w in &spec.soft_windows {
                let out = &segs[w.segment];
                let value = &spec.values[w.segment];
                for r in w.start..w.start + PRIMITIVE_FRAMES {
                    for c in 0..MOTION_CHANNELS {
                        assert_eq!(out.at2(r, c), value.at2(r, c), "row {r} channel {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_strength_equals_unguided_outside_hard_rows() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[40, 100, 150, 210]);
        let spec = build_guidance(&ps, &music_for(layout), 0.0).unwrap();
        let sched = make_schedule(25, ScheduleKind::Cosine).unwrap();
        // The oracle ignores its input, so rows evolve independently and
        // the paired-run comparison is bit-exact outside hard rows.
        let clean = Tensor::randn(&[64, MOTION_CHANNELS], 1.0, &mut rng_from_seed(79));
        let oracle = OracleModel { clean };
        let models: Vec<&dyn X0Model> = (0..4).map(|_| &oracle as &dyn X0Model).collect();
        let seed = 11;
        let segs = guided_sample(
            &models,
            &spec,
            &sched,
            SamplerSpec { kind: SamplerKind::Ddpm, steps: 25 },
            seed,
        )
        .unwrap();
        for (seg, out) in segs.iter().enumerate() {
            let mut rng = rng_from_seed(derive_seed(seed, seg as u64));
            let free = sample_ddpm(&oracle, &[64, MOTION_CHANNELS], &sched, &mut rng).unwrap();
            let hard: Vec<usize> = spec.hard_rows().collect();
            for r in 0..64 {
                for c in 0..MOTION_CHANNELS {
                    if hard.contains(&r) {
                        assert_eq!(out.at2(r, c), spec.values[seg].at2(r, c));
                    } else {
                        assert_eq!(out.at2(r, c), free.at2(r, c), "row {r} diverged");
                    }
                }
            }
        }
    }

    #[test]
    fn soft_influence_is_monotone_in_strength() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[40, 100, 150, 210]);
        let sched = make_schedule(40, ScheduleKind::Cosine).unwrap();
        let clean = Tensor::randn(&[64, MOTION_CHANNELS], 1.0, &mut rng_from_seed(80));
        let oracle = OracleModel { clean };
        let models: Vec<&dyn X0Model> = (0..4).map(|_| &oracle as &dyn X0Model).collect();
        let mut last = f64::INFINITY;
        for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let spec = build_guidance(&ps, &music_for(layout), s).unwrap();
            let segs = guided_sample(
                &models,
                &spec,
                &sched,
                SamplerSpec { kind: SamplerKind::Ddim, steps: 40 },
                21,
            )
            .unwrap();
            let mut dist = 0.0;
            let mut count = 0usize;
            for w in &spec.soft_windows {
                let out = &segs[w.segment];
                let value = &spec.values[w.segment];
                for r in w.start..w.start + PRIMITIVE_FRAMES {
                    for c in 0..MOTION_CHANNELS {
                        let d = out.at2(r, c) - value.at2(r, c);
                        dist += d * d;
                        count += 1;
                    }
                }
            }
            let mse = dist / count as f64;
            assert!(
                mse <= last + 1e-12,
                "soft-window distance increased at s={s}: {last} -> {mse}"
            );
            last = mse;
        }
        assert_eq!(last, 0.0, "s = 1 must pin windows exactly");
    }

    #[test]
    fn stitching_concatenates_and_checks_lengths() {
        let layout = test_layout();
        let ps = primitive_set(layout, &[]);
        let spec = build_guidance(&ps, &music_for(layout), 0.0).unwrap();
        let sched = make_schedule(10, ScheduleKind::Cosine).unwrap();
        let clean = Tensor::randn(&[64, MOTION_CHANNELS], 0.5, &mut rng_from_seed(81));
        let oracle = OracleModel { clean };
        let models: Vec<&dyn X0Model> = (0..4).map(|_| &oracle as &dyn X0Model).collect();
        let segs = guided_sample(
            &models,
            &spec,
            &sched,
            SamplerSpec { kind: SamplerKind::Ddpm, steps: 10 },
            1,
        )
        .unwrap();
        let long = stitch_segments(&segs, 30.0).unwrap();
        assert_eq!(long.len(), 256);
        // Junction rows equal the hard primitives.
        for seg in 1..4 {
            let prim = ps.hard[seg].motion.frames();
            for r in 0..8 {
                let global = seg * 64 - 4 + r;
                for c in 0..MOTION_CHANNELS {
                    assert_eq!(long.frames().at2(global, c), prim.at2(r, c));
                }
            }
        }
        // Single segment: identity.
        let one = stitch_segments(&segs[..1], 30.0).unwrap();
        assert_eq!(one.len(), 64);
        // Ragged input: error.
        let bad = [segs[0].clone(), Tensor::zeros(&[32, MOTION_CHANNELS])];
        assert!(stitch_segments(&bad, 30.0).is_err());
    }
}
