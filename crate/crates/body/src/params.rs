use crate::BodyError;
use nalgebra::Vector3;

/// Pose parameters for the articulated body: one axis-angle rotation per
/// joint plus a root translation. The flat layout is
/// `[rot_0.xyz, rot_1.xyz, ..., rot_{K-1}.xyz, t.xyz]`, i.e. `3K + 3` values.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BodyParams {
    pub rotations: Vec<Vector3<f64>>,
    pub translation: Vector3<f64>,
}

impl BodyParams {
    /// The all-zero (rest) pose for a `k`-joint body.
    pub fn zeros(k: usize) -> BodyParams {
        BodyParams {
            rotations: vec![Vector3::zeros(); k],
            translation: Vector3::zeros(),
        }
    }

    /// Flat length for a `k`-joint body.
    pub fn dim(k: usize) -> usize {
        3 * k + 3
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.rotations.len() + 3);
        for r in &self.rotations {
            out.extend_from_slice(&[r.x, r.y, r.z]);
        }
        out.extend_from_slice(&[self.translation.x, self.translation.y, self.translation.z]);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<BodyParams, BodyError> {
        if flat.len() < 6 || flat.len() % 3 != 0 {
            return Err(BodyError::WrongParamCount {
                expected: 6,
                got: flat.len(),
            });
        }
        let k = flat.len() / 3 - 1;
        let rotations = (0..k)
            .map(|i| Vector3::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]))
            .collect();
        let translation = Vector3::new(flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]);
        Ok(BodyParams {
            rotations,
            translation,
        })
    }
}

/// Rigid pose of an object: one axis-angle rotation and a translation.
/// Flat layout `[rot.xyz, t.xyz]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectParams {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl ObjectParams {
    pub fn zeros() -> ObjectParams {
        ObjectParams {
            rotation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        vec![
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        ]
    }

    pub fn from_flat(flat: &[f64]) -> Result<ObjectParams, BodyError> {
        if flat.len() != 6 {
            return Err(BodyError::WrongParamCount {
                expected: 6,
                got: flat.len(),
            });
        }
        Ok(ObjectParams {
            rotation: Vector3::new(flat[0], flat[1], flat[2]),
            translation: Vector3::new(flat[3], flat[4], flat[5]),
        })
    }
}
