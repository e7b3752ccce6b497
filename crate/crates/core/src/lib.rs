//! Position-aided pilot design and compressed-sensing channel estimation for
//! OFDM links on high-speed railways.
//!
//! Numeric types are generic over [`scalar::Real`]; the `*64` and `*32`
//! aliases below fix the precision.

pub mod channel_model;
pub mod coherence;
pub mod config;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod linalg;
pub mod pilot_design;
pub mod qam;
pub mod random;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};

pub type PilotPattern64 = pilot_design::PilotPattern<f64>;
pub type PilotPattern32 = pilot_design::PilotPattern<f32>;
pub type Codebook64 = pilot_design::Codebook<f64>;
pub type Codebook32 = pilot_design::Codebook<f32>;
pub type Dictionary64 = channel_model::Dictionary<f64>;
pub type Dictionary32 = channel_model::Dictionary<f32>;
pub type DelayDopplerCoeffs64 = channel_model::DelayDopplerCoeffs<f64>;
pub type DelayDopplerCoeffs32 = channel_model::DelayDopplerCoeffs<f32>;
pub type PilotObservation64 = estimators::PilotObservation<f64>;
pub type PilotObservation32 = estimators::PilotObservation<f32>;
pub type EstimateResult64 = estimators::EstimateResult<f64>;
pub type EstimateResult32 = estimators::EstimateResult<f32>;
pub type GeometryConfig64 = geometry::GeometryConfig<f64>;
pub type GeometryConfig32 = geometry::GeometryConfig<f32>;
