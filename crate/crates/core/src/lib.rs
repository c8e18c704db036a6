//! Cuisine classification over ordered recipe token sequences.
//!
//! The pipeline runs in stages, one module each:
//!
//! * [`corpus`] loads labeled recipes and produces deterministic splits,
//! * [`preprocess`] cleans and lemmatizes tokens without reordering them,
//! * [`features`] builds the vocabulary, TF-IDF bags and padded id sequences,
//! * [`linear_models`] holds the bag-of-tokens classifiers (naive Bayes,
//!   one-vs-rest logistic regression, linear SVM, random forest, AdaBoost),
//! * [`seq_models`] holds the order-aware LSTM and transformer encoder,
//! * [`metrics`] turns predictions into accuracy/loss/precision/recall/F1,
//! * [`cli`] wires everything into the `cuisine` command.
//!
//! All training math runs in `f64` and every random draw flows from
//! [`numeric::Prng`], so a fixed seed reproduces a model bit for bit.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod linear_models;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod preprocess;
pub mod seq_models;

pub use error::{Error, Result};
