//! Music conditioning features.
//!
//! A feature sequence is `L x 35` with a fixed channel layout: onset
//! envelope, 20 MFCC-like texture channels, 12 chroma-like channels, a peak
//! one-hot, and a beat one-hot. Real audio decoding is out of scope; the
//! synthesizer below fabricates features with the same layout, keyed by
//! genre so downstream conditioning has signal.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::invalid_arg;
use crate::math::{F64Ext, PI};
use crate::rng::{derive_seed, next_normal, next_uniform, rng_from_seed};
use crate::tensor::Tensor;

pub const CH_ENVELOPE: usize = 0;
pub const CH_MFCC: core::ops::Range<usize> = 1..21;
pub const CH_CHROMA: core::ops::Range<usize> = 21..33;
pub const CH_PEAK: usize = 33;
pub const CH_BEAT: usize = 34;
pub const MUSIC_CHANNELS: usize = 35;

/// Per-frame conditioning features.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicFeatureSeq {
    feats: Tensor,
    fps: f64,
}

impl MusicFeatureSeq {
    pub fn new(feats: Tensor, fps: f64) -> Result<Self> {
        if feats.shape().len() != 2 || feats.cols() != MUSIC_CHANNELS {
            return Err(invalid_arg!(
                "music features must be Lx{MUSIC_CHANNELS}, got {:?}",
                feats.shape()
            ));
        }
        if feats.rows() == 0 {
            return Err(invalid_arg!("music features need at least one frame"));
        }
        if !(fps > 0.0) {
            return Err(invalid_arg!("fps must be positive, got {fps}"));
        }
        if !feats.is_finite() {
            return Err(CoreError::NonFinite { context: "music features".into() });
        }
        for r in 0..feats.rows() {
            for c in [CH_PEAK, CH_BEAT] {
                let v = feats.at2(r, c);
                if v != 0.0 && v != 1.0 {
                    return Err(invalid_arg!("channel {c} at frame {r} is {v}, must be 0 or 1"));
                }
            }
        }
        Ok(Self { feats, fps })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.feats.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // enforced at construction: L >= 1
    }

    #[inline]
    pub fn fps(&self) -> f64 {
        self.fps
    }

    #[inline]
    pub fn feats(&self) -> &Tensor {
        &self.feats
    }

    #[inline]
    pub fn envelope(&self, frame: usize) -> f64 {
        self.feats.at2(frame, CH_ENVELOPE)
    }

    pub fn slice_frames(&self, start: usize, len: usize) -> MusicFeatureSeq {
        assert!(start + len <= self.len() && len > 0, "feature slice out of range");
        let cols = MUSIC_CHANNELS;
        let data = self.feats.data()[start * cols..(start + len) * cols].to_vec();
        MusicFeatureSeq { feats: Tensor::new(&[len, cols], data), fps: self.fps }
    }

    pub fn concat(parts: &[MusicFeatureSeq]) -> Result<MusicFeatureSeq> {
        let first = parts.first().ok_or(invalid_arg!("concat of zero sequences"))?;
        let mut data = Vec::new();
        let mut total = 0;
        for p in parts {
            if p.fps != first.fps {
                return Err(invalid_arg!("fps mismatch in concat"));
            }
            data.extend_from_slice(p.feats.data());
            total += p.len();
        }
        Ok(MusicFeatureSeq { feats: Tensor::new(&[total, MUSIC_CHANNELS], data), fps: first.fps })
    }
}

/// Dance genre id. The number of genres is configuration, checked at the
/// embedding-lookup and dataset boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenreLabel(pub usize);

/// Frame indices whose beat channel is set, ascending.
pub fn beat_indices(m: &MusicFeatureSeq) -> Vec<usize> {
    (0..m.len()).filter(|&i| m.feats.at2(i, CH_BEAT) == 1.0).collect()
}

/// Synthesize a deterministic feature sequence.
///
/// Beats are one-hot every `beat_period` frames starting at
/// `beat_period / 2`. The envelope is a smooth pulse train peaking at the
/// beats with per-beat amplitudes drawn from a genre-independent stream, so
/// two genres with one seed share channels 0, 33, 34 and differ on 1..32.
pub fn synth_music(
    length: usize,
    beat_period: usize,
    genre: GenreLabel,
    seed: u64,
    fps: f64,
) -> Result<MusicFeatureSeq> {
    if beat_period < 8 {
        return Err(invalid_arg!("beat period {beat_period} too small (need >= 8)"));
    }
    if length < beat_period {
        return Err(invalid_arg!("length {length} shorter than one beat period {beat_period}"));
    }
    let mut rng_env = rng_from_seed(derive_seed(seed, 0x0e27));
    let mut rng_tex = rng_from_seed(derive_seed(seed, 0x7e81 + 1000 * (genre.0 as u64 + 1)));

    let first_beat = beat_period / 2;
    let beat_count = (length - first_beat - 1) / beat_period + 1;
    let amps: Vec<f64> = (0..beat_count + 1)
        .map(|_| 0.6 + 0.4 * next_uniform(&mut rng_env))
        .collect();

    let mut feats = Tensor::zeros(&[length, MUSIC_CHANNELS]);

    // Envelope: squared raised cosine, per-beat amplitude; amplitude switches
    // at the zero between beats, so the curve stays continuous.
    for i in 0..length {
        let phase = (i as f64 - first_beat as f64) / beat_period as f64;
        let nearest = phase.round().clamp(0.0, beat_count as f64);
        let base = 0.5 + 0.5 * (2.0 * PI * (phase - nearest)).cos();
        feats.set2(i, CH_ENVELOPE, amps[nearest as usize] * base * base);
    }

    // Beats.
    let mut beat = first_beat;
    while beat < length {
        feats.set2(beat, CH_BEAT, 1.0);
        beat += beat_period;
    }

    // Peaks: interior local maxima of the envelope.
    for i in 1..length.saturating_sub(1) {
        let (prev, cur, next) = (
            feats.at2(i - 1, CH_ENVELOPE),
            feats.at2(i, CH_ENVELOPE),
            feats.at2(i + 1, CH_ENVELOPE),
        );
        if cur > prev && cur >= next {
            feats.set2(i, CH_PEAK, 1.0);
        }
    }

    // Texture channels: genre-keyed frequency bands plus seeded noise.
    let genre_base = 0.4 + 0.35 * genre.0 as f64; // Hz
    let mut channel_params: Vec<(f64, f64, f64)> = Vec::new();
    for c in CH_MFCC.chain(CH_CHROMA) {
        let f = genre_base * (1.0 + 0.11 * (c as f64));
        let amp = 0.4 + 0.5 * next_uniform(&mut rng_tex);
        let phi = 2.0 * PI * next_uniform(&mut rng_tex);
        channel_params.push((f, amp, phi));
    }
    for i in 0..length {
        let t = i as f64 / fps;
        for (idx, c) in CH_MFCC.chain(CH_CHROMA).enumerate() {
            let (f, amp, phi) = channel_params[idx];
            let v = amp * (2.0 * PI * f * t + phi).sin() + 0.05 * next_normal(&mut rng_tex);
            feats.set2(i, c, v);
        }
    }

    MusicFeatureSeq::new(feats, fps)
}

/// A music sequence split for the two diffusion stages.
#[derive(Debug, Clone)]
pub struct SegmentedMusic {
    /// Non-overlapping global windows of `n_global` frames.
    pub globals: Vec<MusicFeatureSeq>,
    /// Per global window, its `n_global / n_local` local segments.
    pub locals: Vec<Vec<MusicFeatureSeq>>,
    /// Frames dropped from the tail to reach a whole number of windows.
    pub trimmed: usize,
}

/// Split into global windows of `n_global` frames and local segments of
/// `n_local`. Trailing frames beyond a whole number of global windows are
/// trimmed. `n_global` must be divisible by `n_local` and the input must
/// cover at least one window.
pub fn segment_features(
    m: &MusicFeatureSeq,
    n_global: usize,
    n_local: usize,
) -> Result<SegmentedMusic> {
    if n_local == 0 || n_global == 0 || n_global % n_local != 0 {
        return Err(invalid_arg!(
            "global window {n_global} not divisible by local window {n_local}"
        ));
    }
    let k = m.len() / n_global;
    if k == 0 {
        return Err(invalid_arg!(
            "input of {} frames shorter than one global window {n_global}",
            m.len()
        ));
    }
    let l = n_global / n_local;
    let mut globals = Vec::with_capacity(k);
    let mut locals = Vec::with_capacity(k);
    for w in 0..k {
        let g = m.slice_frames(w * n_global, n_global);
        let mut segs = Vec::with_capacity(l);
        for j in 0..l {
            segs.push(g.slice_frames(j * n_local, n_local));
        }
        globals.push(g);
        locals.push(segs);
    }
    Ok(SegmentedMusic { globals, locals, trimmed: m.len() - k * n_global })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beat_channel_is_an_arithmetic_sequence() {
        let m = synth_music(256, 32, GenreLabel(0), 7, 30.0).unwrap();
        let beats = beat_indices(&m);
        let expect: Vec<usize> = (0..).map(|k| 16 + 32 * k).take_while(|&b| b < 256).collect();
        assert_eq!(beats, expect);
        // Count formula.
        assert_eq!(beats.len(), (256 - 16 - 1) / 32 + 1);
    }

    #[test]
    fn empty_beat_channel_yields_empty_list() {
        let t = Tensor::zeros(&[8, MUSIC_CHANNELS]);
        let m = MusicFeatureSeq::new(t, 30.0).unwrap();
        assert!(beat_indices(&m).is_empty());
    }

    #[test]
    fn explicit_one_hot_beats_are_found() {
        let mut t = Tensor::zeros(&[64, MUSIC_CHANNELS]);
        t.set2(30, CH_BEAT, 1.0);
        t.set2(60, CH_BEAT, 1.0);
        let m = MusicFeatureSeq::new(t, 30.0).unwrap();
        assert_eq!(beat_indices(&m), alloc::vec![30, 60]);
    }

    #[test]
    fn synth_is_bit_reproducible() {
        let a = synth_music(256, 32, GenreLabel(1), 7, 30.0).unwrap();
        let b = synth_music(256, 32, GenreLabel(1), 7, 30.0).unwrap();
        assert_eq!(a.feats().data(), b.feats().data());
    }

    #[test]
    fn genres_share_rhythm_channels_but_differ_in_texture() {
        let a = synth_music(256, 32, GenreLabel(0), 7, 30.0).unwrap();
        let b = synth_music(256, 32, GenreLabel(2), 7, 30.0).unwrap();
        let mut texture_differs = false;
        for i in 0..256 {
            assert_eq!(a.feats().at2(i, CH_BEAT), b.feats().at2(i, CH_BEAT));
            assert_eq!(a.feats().at2(i, CH_ENVELOPE), b.feats().at2(i, CH_ENVELOPE));
            for c in CH_MFCC.chain(CH_CHROMA) {
                if a.feats().at2(i, c) != b.feats().at2(i, c) {
                    texture_differs = true;
                }
            }
        }
        assert!(texture_differs);
    }

    #[test]
    fn envelope_peaks_at_beats() {
        let m = synth_music(256, 32, GenreLabel(0), 3, 30.0).unwrap();
        for &b in &beat_indices(&m) {
            if b > 0 && b + 1 < m.len() {
                assert!(m.envelope(b) > m.envelope(b - 1));
                assert!(m.envelope(b) > m.envelope(b + 1));
            }
        }
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(synth_music(100, 4, GenreLabel(0), 1, 30.0).is_err());
        assert!(synth_music(10, 32, GenreLabel(0), 1, 30.0).is_err());
    }

    #[test]
    fn segmentation_partitions_and_reassembles() {
        let m = synth_music(1030, 103, GenreLabel(0), 5, 30.0).unwrap();
        // 1024 = 1 global window of 1024 with 4 local segments of 256.
        let seg = segment_features(&m, 1024, 256).unwrap();
        assert_eq!(seg.globals.len(), 1);
        assert_eq!(seg.locals[0].len(), 4);
        assert_eq!(seg.trimmed, 6);
        let back = MusicFeatureSeq::concat(&seg.locals[0]).unwrap();
        assert_eq!(back.feats().data(), m.slice_frames(0, 1024).feats().data());
    }

    #[test]
    fn single_segment_input_is_identity() {
        let m = synth_music(64, 16, GenreLabel(0), 5, 30.0).unwrap();
        let seg = segment_features(&m, 64, 64).unwrap();
        assert_eq!(seg.globals.len(), 1);
        assert_eq!(seg.locals[0].len(), 1);
        assert_eq!(seg.locals[0][0].feats().data(), m.feats().data());
    }

    #[test]
    fn indivisible_windows_are_rejected() {
        let m = synth_music(256, 32, GenreLabel(0), 5, 30.0).unwrap();
        assert!(segment_features(&m, 96, 64).is_err());
        assert!(segment_features(&m, 512, 64).is_err()); // shorter than one window
    }

    #[test]
    fn beats_map_bijectively_to_segment_local_pairs() {
        let m = synth_music(512, 32, GenreLabel(1), 9, 30.0).unwrap();
        let seg = segment_features(&m, 256, 64).unwrap();
        let mut recovered = Vec::new();
        for (w, window) in seg.locals.iter().enumerate() {
            for (j, local) in window.iter().enumerate() {
                for b in beat_indices(local) {
                    recovered.push(w * 256 + j * 64 + b);
                }
            }
        }
        assert_eq!(recovered, beat_indices(&m));
    }
}
