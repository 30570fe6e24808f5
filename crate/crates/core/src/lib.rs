//! Observables of open quantum systems with bosonic baths via the Dyson/Wick
//! diagrammatic expansion on the unfolded Keldysh contour.
//!
//! The library is organized around a small set of pieces:
//!
//! * [`model`] — system/bath specifications and run configuration,
//! * [`contour`] — unfolded-contour bookkeeping and the system propagator,
//! * [`pairings`] — enumeration of ordered pairings and Wick sums,
//! * [`bathcorr`] — bath correlation functions and their perturbations,
//! * [`dyson`] — the truncated series for `⟨O(t)⟩` with simplex integration,
//! * [`bounds`] — the bath-perturbation error bound and identity checkers,
//! * [`oracle`] — brute-force ground truth on a truncated Fock space.

pub mod bathcorr;
pub mod bounds;
pub mod contour;
pub mod dyson;
pub mod model;
pub mod oracle;
pub mod pairings;
pub mod quad;

mod error;

pub use error::Error;

/// Dense complex matrix used for all operators.
pub type CMat = nalgebra::DMatrix<num_complex::Complex64>;

pub use bathcorr::{CorrelationFn, PerturbationSpec};
pub use contour::TimeSequence;
pub use dyson::DysonResult;
pub use model::{BathSpec, DysonConfig, Integrator, SystemSpec};
pub use oracle::FockTruncation;
pub use pairings::Pairing;
