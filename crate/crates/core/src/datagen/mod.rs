//! Training-corpus generation: uniform program sampling and example synthesis.

pub mod count;
pub mod dataset;
pub mod input;

use thiserror::Error;

pub use count::{count_programs, sample_program_uniform, DerivationCountTable};
pub use dataset::{generate_corpus, read_dataset, split_of, write_dataset, Corpus, DataConfig, Split};
pub use input::{gen_input, gen_task, Example, Task, RETRY_CAP};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("no programs of size <= {max_size}")]
    NoPrograms { max_size: usize },
    #[error("could not generate valid inputs for {program}")]
    GenerationFailed { program: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("bad data config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Config(#[from] crate::dsl::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
