//! Quantum dynamics of two spin-1/2 particles with an axially symmetric
//! hyperfine coupling in a time-dependent magnetic field.
//!
//! For fields parallel or perpendicular to the symmetry axis the Hamiltonian
//! splits into two independent two-level blocks. The crate solves each block
//! in the instantaneous eigenbasis (the adiabatic frame), where the only
//! time-dependent coupling is the gauge term produced by the rotating basis,
//! and checks those solutions against a brute-force exponential-midpoint
//! propagator of the full 4x4 problem.

pub mod algebra;
pub mod analysis;
pub mod error;
pub mod field;
pub mod frame;
pub mod hamiltonian;
pub mod propagate;
pub mod quadrature;
pub mod scenario;

pub use algebra::{fidelity, kron2, Matrix2, Matrix4, StateVector4, C64};
pub use error::{Error, Result};
pub use field::{FieldProfile, Tabulated};
pub use frame::{AdiabaticAngles, FrameSnapshot};
pub use hamiltonian::{BlockId, Orientation, SystemParams};
pub use propagate::{Frame, Order, ReferenceOptions, StepControl, TimeGrid, Trajectory};
