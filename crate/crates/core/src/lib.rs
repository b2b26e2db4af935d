pub mod checks;
pub mod digest;
pub mod error;
pub mod evaluator;
pub mod generator;
pub mod harness;
pub mod corpus;
pub mod math;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};

/// Double-precision instantiations of the scalar-generic math types.
pub type Real = f64;
pub type Matrix64 = math::Matrix<Real>;
pub type ParamStore64 = math::ParamStore<Real>;
pub type GradBuffer64 = math::GradBuffer<Real>;
pub type LstmState64 = math::LstmState<Real>;
