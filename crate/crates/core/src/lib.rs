//! Uncertainty-weighted adversarial domain adaptation on small MLPs.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod evalmetrics;
pub mod losses;
pub mod ndgrad;
pub mod nets;
pub mod pseudo;
pub mod scalar;
pub mod synthdata;
pub mod theorylab;
pub mod trainer;
pub mod uncertainty;

pub use scalar::{FieldScalar, Scalar};

pub type Array = ndgrad::Array2<f64>;
pub type Tape64 = ndgrad::Tape<f64>;
pub type Bundle = nets::ModelBundle<f64>;
pub type Record = uncertainty::UncertaintyRecord<f64>;
pub type PseudoLabels = pseudo::PseudoLabelSet<f64>;
pub type Outcome = trainer::TrainOutcome<f64>;
/// Exact field used by the theory checks.
pub type Exact = num_rational::Ratio<i128>;
