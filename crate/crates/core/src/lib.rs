//! Two-mode Gaussian probe states and their quantum Fisher information.
//!
//! The probes are thermal product states passed through a two-mode squeezer
//! S(R) and a beam splitter B(φ). The crate computes the quantum Fisher
//! information (QFI) for φ, R and the thermal occupations with three
//! independent engines, checks them against a truncated Fock-space oracle,
//! and verifies the Cramér–Rao bound with simulated heterodyne data.
//!
//! Conventions: ħ = 2, vacuum covariance I, quadrature ordering
//! (q₁, q₂, p₁, p₂) unless a state says otherwise.

pub mod channels;
pub mod crb;
pub mod error;
pub mod fidelity;
pub mod fock;
pub mod par;
pub mod phase_space;
pub mod qfi;
pub mod sensing;

pub use channels::{build_probe, Parameter, ProbeParams};
pub use error::{Error, Result};
pub use par::Execution;
pub use phase_space::{GaussianState, Mode, ModeOrdering};
pub use qfi::{qfi, Engine, QfiResult};

/// Convention statement embedded in every output file.
pub const CONVENTIONS: &str = "hbar=2, vacuum variance 1, ordering QQPP";
