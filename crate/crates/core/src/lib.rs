//! Reciprocal-space electrodynamics of dispersive anisotropic
//! magnetodielectric media.
//!
//! The engine discretizes the half space k_z >= 0, builds causal
//! susceptibility kernels from oscillator coupling tensors, assembles the
//! wave operator whose inverse is the Green tensor, solves it (closed form
//! for translationally invariant media, dense LU, or a Born series), and
//! reconstructs the time evolution of the coupled field-medium system from
//! initial data along a regulated Bromwich line, with Maxwell, constitutive,
//! causality and energy diagnostics.
//!
//! The numerical core is generic over the real scalar (`f32`/`f64`) through
//! [`scalar::Real`]; concrete `f64` (and `f32`) aliases are exported at the
//! crate root.

pub mod assembly;
pub mod export;
pub mod green;
pub mod grid;
pub mod linalg;
pub mod medium;
pub mod propagate;
pub mod scalar;

pub use scalar::{Constants, Cplx, Real};

/// f64 complex scalar.
pub type C64 = Cplx<f64>;
/// f32 complex scalar.
pub type C32 = Cplx<f32>;

pub type Grid64 = grid::ReciprocalGrid<f64>;
pub type Grid32 = grid::ReciprocalGrid<f32>;
pub type GridSpec64 = grid::GridSpec<f64>;
pub type Triad64 = grid::PolarizationTriad<f64>;

pub type CouplingModel64 = medium::CouplingModel<f64>;
pub type CouplingModel32 = medium::CouplingModel<f32>;
pub type ResponseKernel64 = medium::ResponseKernel<f64>;
pub type OmegaGrid64 = medium::OmegaGrid<f64>;

pub type LambdaKernel64 = assembly::LambdaKernel<f64>;
pub type GreenTensor64 = green::GreenTensor<f64>;

pub type OscillatorBank64 = propagate::OscillatorBank<f64>;
pub type FieldState64 = propagate::FieldState<f64>;
pub type Trajectory64 = propagate::Trajectory<f64>;
pub type PropagationConfig64 = propagate::PropagationConfig<f64>;
pub type InitialData64 = propagate::InitialData<f64>;
pub type Constants64 = scalar::Constants<f64>;
