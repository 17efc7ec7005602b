//! 6D rotation representation.
//!
//! A rotation is stored as the first two columns of its matrix, concatenated
//! as `(a1, a2)`. Decoding runs Gram-Schmidt: `b1 = a1/|a1|`,
//! `b2 = normalize(a2 - (a2.b1) b1)`, `b3 = b1 x b2`, which always yields a
//! right-handed orthonormal frame when the inputs are non-degenerate.

use nalgebra::{Matrix3, Vector3};

use crate::error::{DuetError, Result};

const DEGENERATE_EPS: f64 = 1e-8;
const ORTHO_EPS: f64 = 1e-6;

/// First two rotation-matrix columns, row-concatenated as `(a1, a2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub const IDENTITY: Rotation6D = Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn new(values: [f64; 6]) -> Self {
        Rotation6D(values)
    }

    pub fn from_f32(values: &[f32]) -> Self {
        debug_assert_eq!(values.len(), 6);
        let mut v = [0.0; 6];
        for (dst, src) in v.iter_mut().zip(values) {
            *dst = *src as f64;
        }
        Rotation6D(v)
    }

    pub fn to_f32(&self) -> [f32; 6] {
        let mut v = [0.0f32; 6];
        for (dst, src) in v.iter_mut().zip(&self.0) {
            *dst = *src as f32;
        }
        v
    }

    fn col_a(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    fn col_b(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }
}

/// Gram-Schmidt decode of a 6D rotation into an orthonormal matrix.
pub fn rot6d_to_matrix(r: &Rotation6D) -> Result<Matrix3<f64>> {
    let a1 = r.col_a();
    let a2 = r.col_b();
    let n1 = a1.norm();
    if n1 <= DEGENERATE_EPS {
        return Err(DuetError::DegenerateRotation(format!(
            "first column norm {n1:.3e} below {DEGENERATE_EPS:.0e}"
        )));
    }
    let b1 = a1 / n1;
    let proj = a2 - b1 * a2.dot(&b1);
    let n2 = proj.norm();
    if n2 <= DEGENERATE_EPS {
        return Err(DuetError::DegenerateRotation(format!(
            "second column parallel to first within {DEGENERATE_EPS:.0e} (residual {n2:.3e})"
        )));
    }
    let b2 = proj / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Inverse of [`rot6d_to_matrix`]: keep the first two columns.
pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> Result<Rotation6D> {
    let gram = m.transpose() * m - Matrix3::identity();
    let max_dev = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max_dev > ORTHO_EPS {
        return Err(DuetError::NotARotation(format!(
            "columns not orthonormal: max |R^T R - I| = {max_dev:.3e}"
        )));
    }
    if m.determinant() < 0.0 {
        return Err(DuetError::NotARotation(
            "determinant is negative (left-handed frame)".into(),
        ));
    }
    Ok(Rotation6D([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ]))
}

/// Rotation about the y axis (the up axis everywhere in this crate).
pub fn yaw_matrix(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Shortest-arc rotation taking unit vector `from` onto unit vector `to`.
pub fn shortest_arc(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let f = from.normalize();
    let t = to.normalize();
    let c = f.dot(&t).clamp(-1.0, 1.0);
    if c > 1.0 - 1e-12 {
        return Matrix3::identity();
    }
    if c < -1.0 + 1e-12 {
        // Antipodal: rotate pi about any axis orthogonal to `f`.
        let axis = if f.x.abs() < 0.9 {
            f.cross(&Vector3::x()).normalize()
        } else {
            f.cross(&Vector3::y()).normalize()
        };
        return nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            std::f64::consts::PI,
        )
        .into_inner();
    }
    let axis = nalgebra::Unit::new_normalize(f.cross(&t));
    nalgebra::Rotation3::from_axis_angle(&axis, c.acos()).into_inner()
}
