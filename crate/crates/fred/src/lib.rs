//! Forecast relative error decompositions.
//!
//! The FRED splits `E{log[E(Z_{t+h}|I_t) / Z_{t+h}] | I_t}` for a positive transform `Z`
//! into nonnegative contributions of the successive information updates. Taking `Z` as
//! a transition density gives the FEKD, taking `Z = exp(-u'Y)` gives the FELD.

pub mod affine;
pub mod data;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod quad;
pub mod registry;
pub mod scenario;
pub mod sim;
pub mod table;

pub use error::{FredError, Result};
pub use table::{DecompositionTable, Kind};
