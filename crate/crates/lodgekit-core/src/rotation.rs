//! 6D rotation representation.
//!
//! A rotation is encoded as the first two columns of its matrix; decoding
//! Gram-Schmidt-orthonormalizes the pair and completes the basis with a
//! cross product. The representation is continuous, which is why it is used
//! for every joint channel in the motion layout.

use crate::error::{CoreError, Result};
use crate::math::{vec3_cross, vec3_dot, vec3_norm, vec3_scale, vec3_sub, Mat3, Vec3};

/// Norm below which inputs are treated as degenerate.
pub const DEGENERACY_EPS: f64 = 1e-8;

/// Orthonormality tolerance accepted by [`matrix_to_rot6d`].
pub const ORTHONORMALITY_TOL: f64 = 1e-6;

/// Decode `[a1, a2]` (two stacked 3-vectors, column-major halves) into a
/// rotation matrix via Gram-Schmidt plus cross product.
///
/// Returns [`CoreError::DegenerateRotation`] when `a1` is near zero or the
/// two vectors are near parallel.
pub fn rot6d_to_matrix(r6: &[f64; 6]) -> Result<Mat3> {
    let a1: Vec3 = [r6[0], r6[1], r6[2]];
    let a2: Vec3 = [r6[3], r6[4], r6[5]];

    let norm_a = vec3_norm(a1);
    if norm_a < DEGENERACY_EPS {
        return Err(CoreError::DegenerateRotation { norm_a, norm_rej: vec3_norm(a2) });
    }
    let b1 = vec3_scale(a1, 1.0 / norm_a);

    let rej = vec3_sub(a2, vec3_scale(b1, vec3_dot(b1, a2)));
    let norm_rej = vec3_norm(rej);
    if norm_rej < DEGENERACY_EPS {
        return Err(CoreError::DegenerateRotation { norm_a, norm_rej });
    }
    let b2 = vec3_scale(rej, 1.0 / norm_rej);
    let b3 = vec3_cross(b1, b2);

    // Columns are b1, b2, b3.
    Ok([
        [b1[0], b2[0], b3[0]],
        [b1[1], b2[1], b3[1]],
        [b1[2], b2[2], b3[2]],
    ])
}

/// Encode a rotation matrix as its first two columns.
///
/// Rejects matrices that are not orthonormal with determinant +1 within
/// [`ORTHONORMALITY_TOL`].
pub fn matrix_to_rot6d(m: &Mat3) -> Result<[f64; 6]> {
    let dev = rotation_deviation(m);
    if dev > ORTHONORMALITY_TOL {
        return Err(CoreError::NotARotation { deviation: dev });
    }
    Ok([m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]])
}

/// Max-norm deviation of `R^T R` from the identity, plus |det - 1|.
pub fn rotation_deviation(m: &Mat3) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut dot = 0.0;
            for k in 0..3 {
                dot += m[k][i] * m[k][j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((dot - target).abs());
        }
    }
    dev.max((mat3_det(m) - 1.0).abs())
}

pub fn mat3_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{axis_angle_to_mat3, mat3_mul, mat3_transpose, MAT3_IDENTITY, PI};
    use crate::rng::{next_normal, rng_from_seed};

    fn assert_mat3_close(a: &Mat3, b: &Mat3, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (a[i][j] - b[i][j]).abs() < tol,
                    "entry ({i},{j}): {} vs {}",
                    a[i][j],
                    b[i][j]
                );
            }
        }
    }

    #[test]
    fn identity_code_decodes_to_identity() {
        let m = rot6d_to_matrix(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_mat3_close(&m, &MAT3_IDENTITY, 1e-15);
    }

    #[test]
    fn hand_gram_schmidt_case() {
        // a1 = (2,0,0) normalizes to e1; a2 = (1,1,0) rejects to e2; cross = e3.
        let m = rot6d_to_matrix(&[2.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_mat3_close(&m, &MAT3_IDENTITY, 1e-15);
    }

    #[test]
    fn output_is_orthonormal_for_random_inputs() {
        let mut rng = rng_from_seed(11);
        for _ in 0..200 {
            let r6 = core::array::from_fn(|_| next_normal(&mut rng));
            match rot6d_to_matrix(&r6) {
                Ok(m) => {
                    let rt_r = mat3_mul(&mat3_transpose(&m), &m);
                    assert_mat3_close(&rt_r, &MAT3_IDENTITY, 1e-6);
                    assert!((mat3_det(&m) - 1.0).abs() < 1e-6);
                }
                Err(_) => panic!("random gaussian input should not be degenerate"),
            }
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            rot6d_to_matrix(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            Err(CoreError::DegenerateRotation { .. })
        ));
        // Parallel pair.
        assert!(matches!(
            rot6d_to_matrix(&[1.0, 2.0, 0.5, 2.0, 4.0, 1.0]),
            Err(CoreError::DegenerateRotation { .. })
        ));
    }

    #[test]
    fn encode_identity() {
        let r6 = matrix_to_rot6d(&MAT3_IDENTITY).unwrap();
        assert_eq!(r6, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn encode_quarter_turn_about_z() {
        let m = axis_angle_to_mat3([0.0, 0.0, PI / 2.0]);
        let r6 = matrix_to_rot6d(&m).unwrap();
        // Columns of the 90-degree z rotation: (0,1,0) and (-1,0,0).
        let expect = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in r6.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_on_random_rotations() {
        let mut rng = rng_from_seed(23);
        for _ in 0..100 {
            let axis_angle = [
                next_normal(&mut rng),
                next_normal(&mut rng),
                next_normal(&mut rng),
            ];
            let m = axis_angle_to_mat3(axis_angle);
            let r6 = matrix_to_rot6d(&m).unwrap();
            let back = rot6d_to_matrix(&r6).unwrap();
            assert_mat3_close(&back, &m, 1e-6);
        }
    }

    #[test]
    fn non_orthonormal_matrix_is_rejected() {
        let mut m = MAT3_IDENTITY;
        m[0][0] = 1.5;
        assert!(matches!(matrix_to_rot6d(&m), Err(CoreError::NotARotation { .. })));
    }
}
