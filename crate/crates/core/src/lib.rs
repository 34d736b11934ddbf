//! Forecasting daily time series (electricity load, temperature, wind speed)
//! from dated text documents alone.
//!
//! The pipeline tokenizes the documents, encodes them either as TF-IDF
//! vectors or as integer sequences for a jointly trained word embedding, and
//! regresses the scaled target with LASSO, random forests, a multilayer
//! perceptron or an embedding + GRU network. Around the models sit
//! random-forest feature selection, evaluation metrics, forecast averaging
//! and interpretability reports (importances, signed coefficients, embedding
//! geometry).

pub mod corpus;
pub mod encode;
pub mod error;
pub mod forest;
pub mod interpret;
pub mod linmod;
pub mod neural;
pub mod series;
pub mod synth;

pub mod par;
pub mod pipeline;

pub use error::{Error, Result};
