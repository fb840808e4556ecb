//! The 139-channel motion representation.
//!
//! Channel layout per frame, fixed across the whole crate:
//!
//! ```text
//! [0..4)    foot-ground contact: L-toe, L-heel, R-toe, R-heel, in [0, 1]
//! [4..7)    root translation x, y, z in meters
//! [7..139)  22 joints x 6D rotation; joint 0 is the global rotation,
//!           joints 1..21 are relative rotations along the kinematic chain
//! ```

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::invalid_arg;
use crate::math::Vec3;
use crate::skeleton::KinematicChain;
use crate::tensor::Tensor;

pub const CONTACT_CHANNELS: usize = 4;
pub const ROOT_OFFSET: usize = 4;
pub const ROT_OFFSET: usize = 7;
pub const JOINT_COUNT: usize = 22;
pub const MOTION_CHANNELS: usize = 139;

/// A motion sequence: `L x 139` frames plus a frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSeq {
    frames: Tensor,
    fps: f64,
}

impl MotionSeq {
    /// Wrap a frame matrix, enforcing the layout invariants: exactly 139
    /// channels, finite values, contact channels within `[0, 1]`.
    pub fn new(frames: Tensor, fps: f64) -> Result<Self> {
        if frames.shape().len() != 2 || frames.cols() != MOTION_CHANNELS {
            return Err(invalid_arg!(
                "motion frames must be Lx{MOTION_CHANNELS}, got {:?}",
                frames.shape()
            ));
        }
        if !(fps > 0.0) {
            return Err(invalid_arg!("fps must be positive, got {fps}"));
        }
        if !frames.is_finite() {
            return Err(CoreError::NonFinite { context: "motion frames".into() });
        }
        for r in 0..frames.rows() {
            for c in 0..CONTACT_CHANNELS {
                let v = frames.at2(r, c);
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid_arg!(
                        "contact channel {c} at frame {r} is {v}, outside [0, 1]"
                    ));
                }
            }
        }
        Ok(Self { frames, fps })
    }

    /// Wrap raw model output: contacts are clamped into `[0, 1]` first
    /// (predictions are soft), everything else must be finite.
    pub fn from_prediction(mut frames: Tensor, fps: f64) -> Result<Self> {
        if frames.shape().len() == 2 && frames.cols() == MOTION_CHANNELS {
            for r in 0..frames.rows() {
                for c in 0..CONTACT_CHANNELS {
                    let v = frames.at2(r, c).clamp(0.0, 1.0);
                    frames.set2(r, c, v);
                }
            }
        }
        Self::new(frames, fps)
    }

    pub fn zeros(len: usize, fps: f64) -> Self {
        let mut frames = Tensor::zeros(&[len, MOTION_CHANNELS]);
        // Identity rotations keep the zero motion decodable.
        for r in 0..len {
            for j in 0..JOINT_COUNT {
                frames.set2(r, ROT_OFFSET + 6 * j, 1.0);
                frames.set2(r, ROT_OFFSET + 6 * j + 4, 1.0);
            }
        }
        Self { frames, fps }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn fps(&self) -> f64 {
        self.fps
    }

    #[inline]
    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn into_frames(self) -> Tensor {
        self.frames
    }

    #[inline]
    pub fn contact(&self, frame: usize, foot: usize) -> f64 {
        self.frames.at2(frame, foot)
    }

    #[inline]
    pub fn root_translation(&self, frame: usize) -> Vec3 {
        [
            self.frames.at2(frame, ROOT_OFFSET),
            self.frames.at2(frame, ROOT_OFFSET + 1),
            self.frames.at2(frame, ROOT_OFFSET + 2),
        ]
    }

    #[inline]
    pub fn joint_rot6d(&self, frame: usize, joint: usize) -> [f64; 6] {
        let base = ROT_OFFSET + 6 * joint;
        core::array::from_fn(|i| self.frames.at2(frame, base + i))
    }

    /// Copy a frame window `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> MotionSeq {
        assert!(start + len <= self.len(), "frame slice out of range");
        let cols = MOTION_CHANNELS;
        let data = self.frames.data()[start * cols..(start + len) * cols].to_vec();
        MotionSeq { frames: Tensor::new(&[len, cols], data), fps: self.fps }
    }

    /// Concatenate sequences along time. All parts must share the fps.
    pub fn concat(parts: &[MotionSeq]) -> Result<MotionSeq> {
        let first = parts.first().ok_or(invalid_arg!("concat of zero sequences"))?;
        let fps = first.fps;
        let mut data = Vec::new();
        let mut total = 0;
        for p in parts {
            if p.fps != fps {
                return Err(invalid_arg!("fps mismatch in concat: {} vs {fps}", p.fps));
            }
            data.extend_from_slice(p.frames.data());
            total += p.len();
        }
        Ok(MotionSeq { frames: Tensor::new(&[total, MOTION_CHANNELS], data), fps })
    }
}

/// Mirror a motion across the sagittal `x = 0` plane.
///
/// Root x is negated, every joint rotation is conjugated by `diag(-1,1,1)`,
/// joint channels are permuted by the chain's left/right map, and contact
/// channels swap sides. The raw-channel map below is exactly the conjugation
/// after 6D decoding, and it is an involution bit-for-bit because it only
/// negates and permutes.
pub fn mirror_motion(seq: &MotionSeq, chain: &KinematicChain) -> MotionSeq {
    let l = seq.len();
    let mut out = Tensor::zeros(&[l, MOTION_CHANNELS]);
    for f in 0..l {
        // Contacts: (L-toe, L-heel, R-toe, R-heel) -> (R-toe, R-heel, L-toe, L-heel).
        out.set2(f, 0, seq.contact(f, 2));
        out.set2(f, 1, seq.contact(f, 3));
        out.set2(f, 2, seq.contact(f, 0));
        out.set2(f, 3, seq.contact(f, 1));

        let t = seq.root_translation(f);
        out.set2(f, ROOT_OFFSET, -t[0]);
        out.set2(f, ROOT_OFFSET + 1, t[1]);
        out.set2(f, ROOT_OFFSET + 2, t[2]);

        for j in 0..JOINT_COUNT {
            let src = seq.joint_rot6d(f, j);
            // R' = M R M with M = diag(-1,1,1); on the two stored columns:
            // col0' = (a, -b, -c), col1' = (-d, e, f).
            let mirrored = [src[0], -src[1], -src[2], -src[3], src[4], src[5]];
            let dst = chain.left_right_map[j];
            let base = ROT_OFFSET + 6 * dst;
            for (i, v) in mirrored.iter().enumerate() {
                out.set2(f, base + i, *v);
            }
        }
    }
    MotionSeq { frames: out, fps: seq.fps }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::{next_normal, next_uniform, rng_from_seed};

    pub(crate) fn random_motion(len: usize, seed: u64) -> MotionSeq {
        let mut rng = rng_from_seed(seed);
        let mut frames = Tensor::zeros(&[len, MOTION_CHANNELS]);
        for f in 0..len {
            for c in 0..CONTACT_CHANNELS {
                frames.set2(f, c, if next_uniform(&mut rng) > 0.5 { 1.0 } else { 0.0 });
            }
            for c in ROOT_OFFSET..MOTION_CHANNELS {
                frames.set2(f, c, next_normal(&mut rng));
            }
        }
        MotionSeq::new(frames, 30.0).unwrap()
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let t = Tensor::zeros(&[4, 10]);
        assert!(MotionSeq::new(t, 30.0).is_err());
    }

    #[test]
    fn rejects_out_of_range_contacts() {
        let mut t = Tensor::zeros(&[2, MOTION_CHANNELS]);
        t.set2(0, 1, 1.5);
        assert!(MotionSeq::new(t, 30.0).is_err());
    }

    #[test]
    fn prediction_clamps_contacts() {
        let mut t = Tensor::zeros(&[2, MOTION_CHANNELS]);
        t.set2(0, 1, 1.5);
        t.set2(1, 2, -0.25);
        let m = MotionSeq::from_prediction(t, 30.0).unwrap();
        assert_eq!(m.contact(0, 1), 1.0);
        assert_eq!(m.contact(1, 2), 0.0);
    }

    #[test]
    fn mirror_is_a_bit_exact_involution() {
        let chain = KinematicChain::human22();
        let m = random_motion(9, 5);
        let twice = mirror_motion(&mirror_motion(&m, &chain), &chain);
        assert_eq!(m.frames().data(), twice.frames().data());
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let m = random_motion(12, 9);
        let a = m.slice_frames(0, 5);
        let b = m.slice_frames(5, 7);
        let back = MotionSeq::concat(&[a, b]).unwrap();
        assert_eq!(back.frames().data(), m.frames().data());
    }
}
