//! Markov-modulated Hawkes processes with a δ-piecewise constant kernel.
//!
//! The conditional intensity of state `i` is `μⁱ + Σ αⁱ e^{-βⁱ(·)}` frozen on
//! steps of length δ anchored at the last event, and the parameters switch
//! with a hidden continuous-time Markov chain. Under that freezing the
//! transition matrices between events are finite products of matrix
//! exponentials, which makes exact likelihoods, EM estimation and Viterbi
//! decoding tractable.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix it to `f64`, which is what the file formats and
//! the command line use.

pub mod data;
pub mod decode;
pub mod em;
pub mod error;
pub mod gof;
pub mod inference;
pub mod matexp;
pub mod matrix;
pub mod model;
pub mod optimize;
pub mod oracle;
pub mod scalar;
pub mod simulate;
pub mod transition;

pub use error::{Error, Result};
pub use matrix::Mat;
pub use model::{EventSequence, IntervalGrid, ModelParams};
pub use scalar::Scalar;

pub type Mat64 = matrix::Mat<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type EventSequence64 = model::EventSequence<f64>;
pub type TransitionBundle64 = transition::TransitionBundle<f64>;
pub type InferenceState64 = inference::InferenceState<f64>;
pub type FitConfig64 = em::FitConfig<f64>;
pub type FitResult64 = em::FitResult<f64>;
pub type ViterbiTrace64 = decode::ViterbiTrace<f64>;
pub type OnlineDecoder64 = decode::OnlineDecoderState<f64>;
pub type SimulationResult64 = simulate::SimulationResult<f64>;
pub type ResidualReport64 = gof::ResidualReport<f64>;

pub type ModelParams32 = model::ModelParams<f32>;
pub type EventSequence32 = model::EventSequence<f32>;
