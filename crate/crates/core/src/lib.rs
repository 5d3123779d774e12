//! A small laboratory for searching, training with, and benchmarking neural
//! network activation functions.
//!
//! * [`exprlang`]: the activation DSL (parse, print, FLOP cost, evaluation and
//!   reverse-mode derivatives).
//! * [`tensor`]: dense 2-D tensors and labelled seeded random streams.
//! * [`nn`]: MLP with a pluggable activation, trained with Adam or SGD on MSE.
//! * [`datagen`]: synthetic regression families with disjoint ID/OOD ranges.
//! * [`zoo`]: reference implementations of ten studied activations.
//! * [`evolve`]: the evolutionary search loop and candidate database.

pub mod exprlang;
pub mod tensor;
pub mod datagen;
pub mod nn;
pub mod zoo;
pub mod evolve;
