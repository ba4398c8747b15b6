//! Recursive-least-squares training for FC, CONV, RECUR and LSTM networks,
//! with SGD and Adam baselines and a reproducible experiment harness.

pub mod backward;
pub mod data;
pub mod baseline;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod linalg;
pub mod loss;
pub mod network;
pub mod plan;
pub mod rls;

pub use error::{Error, Result};
