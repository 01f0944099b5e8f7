//! Edge-side intelligence for home monitoring of chronic patients: ECG
//! cleanup and QRS detection, HRV and respiration features, XML if-then
//! alert rules, lightweight classifiers, and the decision to transmit now or
//! wait for the daily scheduled send.

pub mod classify;
pub mod config;
pub mod ecg;
pub mod error;
pub mod hrv;
pub mod manifest;
pub mod measurement;
pub mod messaging;
pub mod pipeline;
pub mod qrs;
pub mod respiration;
pub mod rules;
pub mod signal;
mod stats;
pub mod synth;
pub mod time;

pub use error::{Error, Result};
pub use signal::{SampledSignal, SignalKind, Spectrum};
