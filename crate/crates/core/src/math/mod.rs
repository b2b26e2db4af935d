//! Dense linear algebra, activations, the LSTM cell with its backward pass,
//! parameter storage, optimizers, gradient checking, and seeded RNG.

pub mod activation;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod matrix;
pub mod optim;
pub mod params;
pub mod rng;
pub mod scalar;

pub use activation::{log_softmax, log_sum_exp, sigmoid, softmax, softmax_in_place, softmax_xent};
pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport};
pub use lstm::{lstm_backward, lstm_step, lstm_step_cached, LstmCache, LstmState, LstmStepGrad, LstmWeights};
pub use matrix::{affine, Matrix};
pub use optim::{Direction, Optimizer, OptimizerKind};
pub use params::{GradBuffer, ParamId, ParamStore};
pub use scalar::Scalar;
