//! Discrete-time simulation of an interior PMSM under three MTPA strategies:
//! `i_d = 0`, square-wave extremum seeking, and dual control for exploration
//! and exploitation (DCEE) driven by a bank of RLS parameter estimators.
//!
//! The math modules are generic over [`Scalar`] (`f32` or `f64`); the
//! scenario harness and the aliases below fix the scalar to `f64`.

// `!(x > 0)` rejects NaN along with non-positive values; the lint's
// suggested rewrite does not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dcee;
pub mod es;
pub mod estimator;
pub mod foc;
pub mod linalg;
pub mod mtpa;
pub mod observer;
pub mod plant;
pub mod scalar;
pub mod scenario;
pub mod validation;

pub use scalar::Scalar;

pub type MotorParams = plant::MotorParams<f64>;
pub type MotorState = plant::MotorState<f64>;
pub type PlantInput = plant::PlantInput<f64>;
pub type MtpaPoint = mtpa::MtpaPoint<f64>;
pub type ParamEstimate = estimator::ParamEstimate<f64>;
pub type EstimatorBank = estimator::EstimatorBank<f64>;
pub type BankConfig = estimator::BankConfig<f64>;
pub type DceeConfig = dcee::DceeConfig<f64>;
pub type EsConfig = es::EsConfig<f64>;
pub type ObserverConfig = observer::ObserverConfig<f64>;
pub type FocConfig = foc::FocConfig<f64>;
pub type Vec2 = linalg::Vec2<f64>;
pub type Mat2 = linalg::Mat2<f64>;
pub type ScenarioConfig = scenario::ScenarioConfig<f64>;
pub type ScenarioTimeline = scenario::ScenarioTimeline<f64>;

pub type MotorParams32 = plant::MotorParams<f32>;
pub type EstimatorBank32 = estimator::EstimatorBank<f32>;
