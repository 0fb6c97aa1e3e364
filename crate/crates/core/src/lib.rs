//! Propagation cones, geodesics, abnormal extremals and wave-kernel
//! singularities for sums of squares of polynomial vector fields.

pub mod abnormal;
pub mod cones;
pub mod error;
pub mod geodesics;
pub mod hull;
pub mod linalg;
pub mod poly;
pub mod rays;
pub mod srstruct;
pub mod wavekernel;

pub use error::{Error, Result};
pub use srstruct::{CotangentPoint, ExtendedPoint, SubRiemannianStructure, Symbol};
