//! Vector, matrix and quaternion algebra.

pub mod quat;
pub mod vec3;

pub use quat::{slerp, Quaternion};
pub use vec3::{Mat3, Vec3};
