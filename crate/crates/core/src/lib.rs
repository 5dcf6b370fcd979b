//! Finite-blocklength rate formulas, effective bandwidth and capacity,
//! Laplace approximations of the capacity integral, high-SNR gain
//! analysis, and a fluid queue simulator for checking the large
//! deviation estimates.
//!
//! All quantities are `f64`. Rates are in bits; SNRs are linear unless
//! a name says otherwise; QoS exponents are per bit.

pub mod asymptotics;
pub mod channels;
mod error;
pub mod fbc;
pub mod laplace;
pub mod numerics;
pub mod power;
pub mod qos;
pub mod queuesim;
pub mod specfun;

pub use channels::{ChannelModel, Fading};
pub use error::{Error, ErrorKind, Result};
pub use fbc::{FbcParams, RateCurve, RateValue, ZeroPowerRate};
pub use power::{Allocation, PowerPolicy};
pub use qos::{ArrivalProcess, EcEstimate, EcMethod, QosExponent, QosState, ServiceContext};
