//! Kinematic chain, forward kinematics, and foot state.
//!
//! The built-in skeleton is a 22-joint body (pelvis root, three spine
//! segments, neck, head, and left/right hip-knee-ankle-toe and
//! collar-shoulder-elbow-wrist chains) with hard-coded rest offsets in
//! meters. Up axis is +y and the ground plane is y = 0. Heel contact
//! channels map to the ankle joints, the nearest proxy in this chain.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::invalid_arg;
use crate::math::{mat3_mul, mat3_mul_vec, vec3_add, vec3_cross, vec3_dot, vec3_scale, vec3_sub, F64Ext, Mat3, Vec3};
use crate::motion::{MotionSeq, JOINT_COUNT};

pub mod joints {
    pub const PELVIS: usize = 0;
    pub const L_HIP: usize = 1;
    pub const R_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const L_KNEE: usize = 4;
    pub const R_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const L_ANKLE: usize = 7;
    pub const R_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const L_TOE: usize = 10;
    pub const R_TOE: usize = 11;
    pub const NECK: usize = 12;
    pub const L_COLLAR: usize = 13;
    pub const R_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const L_SHOULDER: usize = 16;
    pub const R_SHOULDER: usize = 17;
    pub const L_ELBOW: usize = 18;
    pub const R_ELBOW: usize = 19;
    pub const L_WRIST: usize = 20;
    pub const R_WRIST: usize = 21;
}

/// Joint hierarchy plus rest offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    /// Per-joint parent; `None` for the root. Topologically sorted:
    /// every parent index is smaller than its child's index.
    pub parent: Vec<Option<usize>>,
    /// Offset of each joint from its parent in the rest pose, meters.
    /// The root offset is its world position at zero translation.
    pub rest_offset: Vec<Vec3>,
    /// Involutive left/right joint permutation.
    pub left_right_map: Vec<usize>,
    /// Joints carrying the contact channels: L-toe, L-heel, R-toe, R-heel.
    pub foot_joints: [usize; 4],
}

impl KinematicChain {
    pub fn joint_count(&self) -> usize {
        self.parent.len()
    }

    /// The built-in 22-joint skeleton. Right-side offsets are generated by
    /// negating x on the left side, so mirror symmetry is exact.
    pub fn human22() -> Self {
        use joints::*;
        let parent: Vec<Option<usize>> = vec![
            None,        // pelvis
            Some(PELVIS),
            Some(PELVIS),
            Some(PELVIS),
            Some(L_HIP),
            Some(R_HIP),
            Some(SPINE1),
            Some(L_KNEE),
            Some(R_KNEE),
            Some(SPINE2),
            Some(L_ANKLE),
            Some(R_ANKLE),
            Some(SPINE3),
            Some(SPINE3),
            Some(SPINE3),
            Some(NECK),
            Some(L_COLLAR),
            Some(R_COLLAR),
            Some(L_SHOULDER),
            Some(R_SHOULDER),
            Some(L_ELBOW),
            Some(R_ELBOW),
        ];
        let mut rest_offset = vec![[0.0; 3]; parent.len()];
        // Leg lengths put the ankle (heel proxy) and toe 2 cm above the
        // ground in the rest pose, inside the 5 cm contact threshold.
        rest_offset[PELVIS] = [0.0, 0.94, 0.0];
        rest_offset[L_HIP] = [0.09, -0.06, 0.0];
        rest_offset[SPINE1] = [0.0, 0.11, 0.0];
        rest_offset[L_KNEE] = [0.0, -0.42, 0.0];
        rest_offset[SPINE2] = [0.0, 0.12, 0.0];
        rest_offset[L_ANKLE] = [0.0, -0.44, 0.0];
        rest_offset[SPINE3] = [0.0, 0.12, 0.0];
        rest_offset[L_TOE] = [0.0, 0.0, 0.13];
        rest_offset[NECK] = [0.0, 0.14, 0.0];
        rest_offset[L_COLLAR] = [0.07, 0.08, 0.0];
        rest_offset[HEAD] = [0.0, 0.12, 0.0];
        rest_offset[L_SHOULDER] = [0.11, 0.0, 0.0];
        rest_offset[L_ELBOW] = [0.26, 0.0, 0.0];
        rest_offset[L_WRIST] = [0.25, 0.0, 0.0];

        let left_right_map: Vec<usize> = vec![
            PELVIS, R_HIP, L_HIP, SPINE1, R_KNEE, L_KNEE, SPINE2, R_ANKLE, L_ANKLE, SPINE3,
            R_TOE, L_TOE, NECK, R_COLLAR, L_COLLAR, HEAD, R_SHOULDER, L_SHOULDER, R_ELBOW,
            L_ELBOW, R_WRIST, L_WRIST,
        ];
        for j in 0..left_right_map.len() {
            let m = left_right_map[j];
            if j < m {
                let o = rest_offset[j];
                rest_offset[m] = [-o[0], o[1], o[2]];
            }
        }

        let chain = Self {
            parent,
            rest_offset,
            left_right_map,
            foot_joints: [L_TOE, L_ANKLE, R_TOE, R_ANKLE],
        };
        debug_assert!(chain.validate().is_ok());
        chain
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joint_count();
        if self.rest_offset.len() != n || self.left_right_map.len() != n {
            return Err(invalid_arg!("chain table lengths disagree"));
        }
        for (j, p) in self.parent.iter().enumerate() {
            match p {
                None if j != 0 => return Err(invalid_arg!("non-root joint {j} has no parent")),
                Some(p) if *p >= j => {
                    return Err(invalid_arg!("chain not topologically sorted at joint {j}"))
                }
                _ => {}
            }
        }
        for j in 0..n {
            if self.left_right_map[self.left_right_map[j]] != j {
                return Err(invalid_arg!("left_right_map is not involutive at joint {j}"));
            }
        }
        Ok(())
    }
}

/// World-space joint positions, `L x J` of 3-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions {
    frames: usize,
    joints: usize,
    data: Vec<Vec3>,
}

impl JointPositions {
    pub fn new(frames: usize, joints: usize) -> Self {
        Self { frames, joints, data: vec![[0.0; 3]; frames * joints] }
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn joints(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn at(&self, frame: usize, joint: usize) -> Vec3 {
        self.data[frame * self.joints + joint]
    }

    #[inline]
    pub fn set(&mut self, frame: usize, joint: usize, v: Vec3) {
        self.data[frame * self.joints + joint] = v;
    }
}

/// Norm-squared stabilizer for the guarded decode. Small enough that
/// `1.0 + GUARD_EPS == 1.0`, so well-formed inputs decode exactly.
pub const GUARD_EPS: f64 = 1e-30;

/// Gram-Schmidt 6D decode stabilized with a tiny epsilon so forward
/// kinematics stays total on arbitrary (e.g. freshly denoised) channels.
pub fn rot6d_to_matrix_guarded(r6: &[f64; 6]) -> Mat3 {
    let a1: Vec3 = [r6[0], r6[1], r6[2]];
    let a2: Vec3 = [r6[3], r6[4], r6[5]];
    let n1 = (vec3_dot(a1, a1) + GUARD_EPS).sqrt();
    let b1 = vec3_scale(a1, 1.0 / n1);
    let rej = vec3_sub(a2, vec3_scale(b1, vec3_dot(b1, a2)));
    let n2 = (vec3_dot(rej, rej) + GUARD_EPS).sqrt();
    let b2 = vec3_scale(rej, 1.0 / n2);
    let b3 = vec3_cross(b1, b2);
    [
        [b1[0], b2[0], b3[0]],
        [b1[1], b2[1], b3[1]],
        [b1[2], b2[2], b3[2]],
    ]
}

/// Forward kinematics over per-joint local rotation matrices.
///
/// `rotations` holds one matrix per joint for a single frame; joint 0 is the
/// global rotation. Positions are accumulated root-relative and shifted by
/// the translation at the end, which makes translation equivariance exact.
/// Returns global rotations and world positions.
pub fn fk_frame(
    rotations: &[Mat3],
    root_translation: Vec3,
    chain: &KinematicChain,
) -> (Vec<Mat3>, Vec<Vec3>) {
    let n = chain.joint_count();
    assert_eq!(rotations.len(), n, "one rotation per joint");
    let mut global = Vec::with_capacity(n);
    let mut pos = Vec::with_capacity(n);
    for j in 0..n {
        match chain.parent[j] {
            None => {
                global.push(rotations[j]);
                pos.push(chain.rest_offset[j]);
            }
            Some(p) => {
                global.push(mat3_mul(&global[p], &rotations[j]));
                pos.push(vec3_add(pos[p], mat3_mul_vec(&global[p], chain.rest_offset[j])));
            }
        }
    }
    for p in pos.iter_mut() {
        *p = vec3_add(*p, root_translation);
    }
    (global, pos)
}

/// Forward kinematics for a whole motion sequence.
pub fn forward_kinematics(seq: &MotionSeq, chain: &KinematicChain) -> JointPositions {
    assert_eq!(chain.joint_count(), JOINT_COUNT, "motion layout is 22-joint");
    let l = seq.len();
    let mut out = JointPositions::new(l, JOINT_COUNT);
    let mut rotations = vec![crate::math::MAT3_IDENTITY; JOINT_COUNT];
    for f in 0..l {
        for (j, rot) in rotations.iter_mut().enumerate() {
            *rot = rot6d_to_matrix_guarded(&seq.joint_rot6d(f, j));
        }
        let (_, pos) = fk_frame(&rotations, seq.root_translation(f), chain);
        for (j, p) in pos.iter().enumerate() {
            out.set(f, j, *p);
        }
    }
    out
}

/// Forward finite-difference joint velocities in m/s: `(L-1) x J`.
pub fn joint_velocity(pos: &JointPositions, fps: f64) -> Result<JointPositions> {
    if pos.frames() < 2 {
        return Err(CoreError::SequenceTooShort { len: pos.frames(), min: 2 });
    }
    let mut out = JointPositions::new(pos.frames() - 1, pos.joints());
    for f in 0..pos.frames() - 1 {
        for j in 0..pos.joints() {
            let d = vec3_sub(pos.at(f + 1, j), pos.at(f, j));
            out.set(f, j, vec3_scale(d, fps));
        }
    }
    Ok(out)
}

/// Forward finite-difference joint accelerations in m/s^2: `(L-2) x J`.
pub fn joint_acceleration(pos: &JointPositions, fps: f64) -> Result<JointPositions> {
    if pos.frames() < 3 {
        return Err(CoreError::SequenceTooShort { len: pos.frames(), min: 3 });
    }
    let vel = joint_velocity(pos, fps)?;
    joint_velocity(&vel, fps)
}

/// Per-frame foot positions and velocities for the four contact channels.
#[derive(Debug, Clone)]
pub struct FootState {
    /// `L` frames of (L-toe, L-heel, R-toe, R-heel) world positions.
    pub positions: Vec<[Vec3; 4]>,
    /// `L-1` frames of velocities in m/s.
    pub velocities: Vec<[Vec3; 4]>,
}

impl FootState {
    /// Height above ground (world y) of one foot point.
    #[inline]
    pub fn height(&self, frame: usize, foot: usize) -> f64 {
        self.positions[frame][foot][1]
    }

    /// Horizontal (x, z) speed of one foot point.
    #[inline]
    pub fn horizontal_speed(&self, frame: usize, foot: usize) -> f64 {
        let v = self.velocities[frame][foot];
        (v[0] * v[0] + v[2] * v[2]).sqrt()
    }

    /// Signed vertical (y) velocity of one foot point.
    #[inline]
    pub fn vertical_velocity(&self, frame: usize, foot: usize) -> f64 {
        self.velocities[frame][foot][1]
    }
}

/// Extract the foot state from a motion.
pub fn foot_state(seq: &MotionSeq, chain: &KinematicChain) -> Result<FootState> {
    if seq.len() < 2 {
        return Err(CoreError::SequenceTooShort { len: seq.len(), min: 2 });
    }
    let pos = forward_kinematics(seq, chain);
    let mut positions = Vec::with_capacity(seq.len());
    for f in 0..seq.len() {
        positions.push(core::array::from_fn(|i| pos.at(f, chain.foot_joints[i])));
    }
    let mut velocities = Vec::with_capacity(seq.len() - 1);
    for f in 0..seq.len() - 1 {
        velocities.push(core::array::from_fn(|i| {
            vec3_scale(vec3_sub(positions[f + 1][i], positions[f][i]), seq.fps())
        }));
    }
    Ok(FootState { positions, velocities })
}
