//! Neuro-symbolic program synthesis for FlashFill-style string transformations.

pub mod bench;
pub mod datagen;
pub mod dsl;
pub mod encoder;
pub mod io2seq;
pub mod r3nn;
pub mod rng;
pub mod search;
pub mod selfcheck;
pub mod synth;
pub mod tensor;

pub use datagen::{Example, Task};
pub use dsl::{DslConfig, Grammar, Program};
pub use encoder::{EncoderConfig, EncoderVariant};
pub use io2seq::{Io2Seq, Io2SeqConfig};
pub use r3nn::{GenMode, R3nn, R3nnConfig};
pub use synth::TrainConfig;
