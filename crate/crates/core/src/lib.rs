//! Prepare-probe spectroscopy (PrePSy).
//!
//! A system that starts out correlated with its environment is measured
//! projectively, reset to a standard state, driven through a two-delay pulse
//! sequence and read out. Repeating this for several projections and
//! differencing the signals cancels everything except the contribution of the
//! initial correlations, which then shows up as peaks in a 2D spectrum.
//!
//! The crate is layered bottom-up:
//!
//! * [`linalg`]: dense complex matrices, partial traces, Hermitian
//!   eigendecomposition and exponentials.
//! * [`states`]: density matrices, the `R = ρ⊗τ + χ` split, two-qubit Fano
//!   states and Gibbs states.
//! * [`models`]: the two-spin toy Hamiltonian, the NV flip-flop Hamiltonians
//!   and their dissipators, and the collective level enumerator.
//! * [`dynamics`]: Lindblad integration, closed-system propagation and pulses.
//! * [`protocol`]: conditional preparation, the 2D signal, differencing and
//!   the analytic checks on correlation retention and signal sensitivity.
//! * [`spectral`]: 2D spectra, peak picking, total intensity and calibration.
//! * [`cli`]: the experiment-file runner behind the `prepsy` binary.
//!
//! Frequencies are ordinary frequencies (cycles per unit time) throughout.
//! Hamiltonians are expressed in those units and are multiplied by 2π when
//! they become generators of time evolution, so an energy gap `ΔE` shows up
//! as a spectral peak at `ΔE`.
//!
//! A longer walk-through lives in the `book/` directory of the repository.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
mod error;
pub mod linalg;
pub mod models;
pub mod protocol;
pub mod spectral;
pub mod states;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, HilbertStructure, C64};
pub use states::DensityMatrix;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// The README's and the book's code listings are compiled and run as doctests.
#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/correlations.md")]
    mod correlations {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/spectra.md")]
    mod spectra {}
    #[doc = include_str!("../../../book/src/nv_cavity.md")]
    mod nv_cavity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
