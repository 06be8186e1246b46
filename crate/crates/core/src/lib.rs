//! Kimmel's branching model for parasites in dividing cells.
//!
//! A cell holding `x` parasites divides into two daughters; each parasite
//! independently produces `(Z0, Z1)` offspring sent to daughters 0 and 1.
//! The crate offers
//!
//! * [`model`]: offspring laws, moments, generating functions and the
//!   D1–D5 regime map of the `(m0, m1)` quadrant,
//! * [`bpre`]: exact truncated dynamics of the parasite count along a
//!   random cell line (a branching process in a two-state random
//!   environment), Yaglom limits and size-biasing,
//! * [`treesim`]: Monte Carlo simulation of the contaminated-cell tree,
//!   with deterministic parallel ensembles,
//! * [`stats`]: distances, intervals, fits and ensemble aggregation.

pub mod bpre;
pub mod format;
pub mod model;
pub mod pmf;
pub mod sampling;
pub mod stats;
pub mod treesim;

pub use model::{OffspringLaw, Regime, RegimeLabel};
pub use pmf::Pmf;
