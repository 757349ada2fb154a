//! On/off scheduling of dynamic electrical loads against a short-term power
//! forecast, with battery power and state-of-charge constraints.
//!
//! Each load has its own switching dynamics (different transfer models for
//! turning on and off) and minimum on/off dwell times. The scheduler walks a
//! receding horizon: at every control step it enumerates the admissible
//! switching combinations, scores each one by tracking error plus barrier
//! penalties, applies the first column of the winner, and advances.
//!
//! All numerics are generic over the scalar type via [`Scalar`]; the I/O and
//! configuration layer is `f64`-concrete. See the type aliases at the crate
//! root for the common `f64` instantiations.

pub mod battery;
pub mod config;
pub mod forecast;
pub mod linalg;
pub mod loadmodel;
pub mod num;
pub mod scheduler;
pub mod switchset;
pub mod trace;

#[cfg(test)]
pub(crate) mod testutil;

pub use num::Scalar;

/// Scalar type used by the CLI and configuration layer.
pub type Real = f64;

pub type LoadSpec64 = loadmodel::LoadSpec<f64>;
pub type DiscreteLoadModel64 = loadmodel::DiscreteLoadModel<f64>;
pub type HorizonConfig64 = switchset::HorizonConfig<f64>;
pub type BatterySpec64 = battery::BatterySpec<f64>;
pub type ForecastSeries64 = forecast::ForecastSeries<f64>;
pub type SimTrace64 = trace::SimTrace<f64>;
pub type ScheduleSolution64 = scheduler::ScheduleSolution<f64>;
