//! Simulation and reconstruction toolkit for EIT-based membrane pressure
//! sensors.
//!
//! A clamped conductive membrane deflects under pressure according to the
//! prescribed mean curvature equation. Seen from above, the stretched sheet
//! acts as an anisotropic conductor, so the boundary voltages of an
//! adjacent-drive EIT system change quadratically with the membrane slope.
//! The crate provides the forward chain (mesh, membrane, conductivity,
//! voltages) and the reduced quadratic-sensitivity inversion that recovers
//! the pressure magnitude from voltage differences.
//!
//! Everything numerical is generic over [`Real`]; the `*64`/`*32` aliases
//! below name the usual instantiations.

pub mod error;
pub mod forward;
pub mod harness;
pub mod inversion;
pub mod linalg;
pub mod membrane;
pub mod mesh;
pub mod scalar;
pub mod sensitivity;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh64 = mesh::Mesh<f64>;
pub type Mesh32 = mesh::Mesh<f32>;
pub type PressureField64 = membrane::PressureField<f64>;
pub type PressureField32 = membrane::PressureField<f32>;
pub type DisplacementField64 = membrane::DisplacementField<f64>;
pub type DisplacementField32 = membrane::DisplacementField<f32>;
pub type ConductivityField64 = forward::ConductivityField<f64>;
pub type ConductivityField32 = forward::ConductivityField<f32>;
pub type VoltageDataset64 = forward::VoltageDataset<f64>;
pub type VoltageDataset32 = forward::VoltageDataset<f32>;
pub type BasisBank64 = sensitivity::BasisBank<f64>;
pub type BasisBank32 = sensitivity::BasisBank<f32>;
pub type SensitivitySystem64 = sensitivity::SensitivitySystem<f64>;
pub type SensitivitySystem32 = sensitivity::SensitivitySystem<f32>;
pub type ReconstructionResult64 = inversion::ReconstructionResult<f64>;
pub type ReconstructionResult32 = inversion::ReconstructionResult<f32>;
