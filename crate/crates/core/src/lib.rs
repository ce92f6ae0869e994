//! Real-time device performance scoring.
//!
//! The crate turns streamed feature telemetry into a per-device performance
//! score and keeps three views of it:
//!
//! * real-time: an entropy-weighted TOPSIS closeness score in `[0, 100]`,
//!   computed against a reference population ([`evaluate`]);
//! * short-term: a Hull moving average of the score series ([`smooth`]);
//! * long-term: an ARIMA forecast of the next few scores ([`forecast`]).
//!
//! [`engine`] wires these together behind configurable trigger events, and
//! [`abharness`] runs a synthetic-fleet AB experiment over the engine.

pub mod abharness;
pub mod engine;
pub mod evaluate;
pub mod forecast;
pub mod matrix;
pub mod portrait;
pub mod preprocess;
pub mod schema;
pub mod smooth;

mod config;

pub use matrix::{DecisionMatrix, MatrixError};
pub use schema::{Direction, FeatureRecord, FeatureSchema, IndicatorSpec, SchemaError};
