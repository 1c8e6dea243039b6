//! Shared fixtures for the criterion benches in `benches/`.

use std::path::{Path, PathBuf};

use nsps_core::datagen::Example;
use nsps_core::encoder::{EncoderConfig, EncoderVariant};
use nsps_core::r3nn::{R3nn, R3nnConfig};
use nsps_core::rng::{purpose, stream};
use nsps_core::DslConfig;

pub fn benchmark_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

pub fn name_examples() -> Vec<Example> {
    [("William Henry Charles", "Charles, W."), ("Michael Johnson", "Johnson, M."), ("Barack Rogers", "Rogers, B.")]
        .iter()
        .map(|(i, o)| Example { input: i.to_string(), output: o.to_string() })
        .collect()
}

pub fn encoder(variant: EncoderVariant, t: usize) -> EncoderConfig {
    EncoderConfig {
        max_len: t,
        hidden: 16,
        embed: 16,
        variant,
        n_pairs: 3,
        depth: 2,
    }
}

/// Randomly initialized model at the overfit-experiment size.
pub fn model(t: usize) -> R3nn {
    let dsl = DslConfig { max_len: t, ..DslConfig::default() };
    let config = R3nnConfig {
        dim: 64,
        encoder: encoder(EncoderVariant::Cc, t),
        ..R3nnConfig::default()
    };
    R3nn::new(config, &dsl, &mut stream(0, purpose::INIT, 0)).expect("valid config")
}
