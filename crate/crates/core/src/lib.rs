//! Two-qubit gmon simulation, leakage bounds and the UFO cost.
//!
//! Everything numeric is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod error;
pub mod evaluate;
pub mod gmon;
pub mod linalg;
pub mod objective;
pub mod qops;
pub mod scalar;
pub mod targets;
pub mod tswt;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Complex = linalg::C<f64>;
pub type Matrix = linalg::CMatrix<f64>;
pub type Knobs = gmon::ControlKnobs<f64>;
pub type Model = gmon::GmonModel<f64>;
pub type Trajectory = control::ControlTrajectory<f64>;
pub type Filter = control::FilterConfig<f64>;
pub type Frame = tswt::TswtFrame<f64>;
pub type Ledger = tswt::LeakageLedger<f64>;
pub type Cost = objective::CostBreakdown<f64>;
pub type Target = targets::GateTarget<f64>;
pub type Report = evaluate::EvaluationReport<f64>;
