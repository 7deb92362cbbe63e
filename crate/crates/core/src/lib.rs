pub mod dirac;
pub mod disorder;
pub mod error;
pub mod flux;
pub mod geometry;
pub mod hopping;
pub mod invariants;
pub mod harness;
pub mod localization;
pub mod model;
pub mod models;
pub mod oracle;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::LatticeScalar;

/// Double precision aliases for the common entry points.
pub type BuiltinModel64 = models::BuiltinModel<f64>;
pub type FiniteModel64 = model::FiniteModel<f64>;
pub type LatticeOperator64 = spectral::LatticeOperator<f64>;
pub type SpectralDecomposition64 = spectral::SpectralDecomposition<f64>;
pub type InvariantResult64 = invariants::InvariantResult<f64>;
pub type BulkBoundaryReport64 = invariants::BulkBoundaryReport<f64>;
pub type SweepConfig64 = harness::SweepConfig<f64>;
pub type ResultRow64 = harness::ResultRow<f64>;
pub type MomentProfile64 = localization::MomentProfile<f64>;
pub type DecayFit64 = localization::DecayFit<f64>;
