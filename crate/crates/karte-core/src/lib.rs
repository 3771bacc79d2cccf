//! Core math and algorithms for character-level radiograph captioning:
//! a small tensor/autodiff substrate, the CNN encoder and attention-LSTM
//! decoder, epoch samplers, greedy/beam decoding, BLEU scoring and
//! attention-trace handling.
//!
//! The crate is `no_std` (alloc required); all file and image IO lives in
//! the companion `karte` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod attention;
pub mod bleu;
pub mod checkpoint;
pub mod dataset;
pub mod decoder;
pub mod encoder;
pub mod gradcheck;
pub mod gradsuite;
pub mod infer;
pub mod loss;
pub mod model;
pub mod ops;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod trace;
pub mod vocab;

pub use rng::RngState;
pub use tensor::{OpError, Parameter, Tensor};
