//! Numerical laboratory for sub-Riemannian geometry on ℝ³: Carnot–Carathéodory
//! distances, ball volumes, discrete Q-modulus of curve families, and a
//! modulus-based experiment contrasting the roto-translation group with the
//! Heisenberg group.

pub mod contacto;
pub mod error;
pub mod geodesics;
pub mod modulus;
pub mod obstruction;
pub mod optim;
pub mod output;
pub mod planar;
pub mod run;
pub mod spaces;
pub mod volume;
mod trigpoly;

pub use error::{Error, Result};
pub use spaces::{ControlPath, Point3, Segment, SpaceId, SpaceModel, TangentVector};
