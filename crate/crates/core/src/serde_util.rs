//! Serde adapters so nalgebra types appear as plain JSON arrays.
//!
//! Vectors serialize as `[x, y, z]`; quaternions as `[w, x, y, z]`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod vec3 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::from(a))
    }
}

pub mod quat {
    use super::*;

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        [q.w, q.i, q.j, q.k].serialize(s)
    }

    /// Rejects quaternions whose norm is off by more than 1e-9 instead of
    /// silently renormalizing them.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(serde::de::Error::custom(format!(
                "quaternion norm must be 1 ± 1e-9, got {n}"
            )));
        }
        Ok(UnitQuaternion::new_unchecked(q))
    }
}
