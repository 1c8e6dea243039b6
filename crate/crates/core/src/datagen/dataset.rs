//! JSON Lines datasets and corpus generation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{DslConfig, Grammar};
use crate::rng::{purpose, stream};

use super::count::{count_programs, sample_program_uniform};
use super::input::{gen_task, Task};
use super::DatagenError;

pub fn write_dataset(tasks: &[Task], path: &Path) -> Result<(), DatagenError> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in tasks {
        serde_json::to_writer(&mut out, t).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Task>, DatagenError> {
    let reader = BufReader::new(File::open(path)?);
    let mut tasks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task: Task = serde_json::from_str(&line).map_err(|e| DatagenError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        if task.examples.is_empty() {
            return Err(DatagenError::Format {
                line: i + 1,
                message: "task has no examples".into(),
            });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// Corpus generation settings, read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    #[serde(flatten)]
    pub dsl: DslConfig,
    pub seed: u64,
    pub n_tasks: usize,
    pub max_size: usize,
    pub n_examples: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dsl: DslConfig::default(),
            seed: 0,
            n_tasks: 1000,
            max_size: 9,
            n_examples: 5,
            split: [0.8, 0.1, 0.1],
        }
    }
}

impl DataConfig {
    pub fn check(&self) -> Result<(), DatagenError> {
        self.dsl.check()?;
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatagenError::BadConfig("split fractions must be non-negative and sum to 1".into()));
        }
        if self.n_examples == 0 {
            return Err(DatagenError::BadConfig("n_examples must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Assigns a program to a split by hashing its canonical text, so the same
/// program always lands in the same split.
pub fn split_of(program_text: &str, fractions: [f64; 3]) -> Split {
    let digest = Sha256::digest(program_text.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    let u = u64::from_le_bytes(word) as f64 / u64::MAX as f64;
    if u < fractions[0] {
        Split::Train
    } else if u < fractions[0] + fractions[1] {
        Split::Valid
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub train: Vec<Task>,
    pub valid: Vec<Task>,
    pub test: Vec<Task>,
    /// Sampled programs discarded because no valid inputs were found.
    pub dropped: usize,
}

/// Samples `n_tasks` programs uniformly and generates examples for each.
/// Task `i` uses its own seed stream, so output depends only on the config.
pub fn generate_corpus(config: &DataConfig) -> Result<Corpus, DatagenError> {
    config.check()?;
    let grammar = Grammar::new(&config.dsl);
    let table = count_programs(&grammar, config.max_size);
    let mut corpus = Corpus::default();
    for i in 0..config.n_tasks as u64 {
        let mut attempt = 0u64;
        let task = loop {
            let idx = (i << 16) | attempt;
            let mut prng = stream(config.seed, purpose::PROGRAMS, idx);
            let prog = sample_program_uniform(&grammar, &table, config.max_size, &mut prng)?;
            let mut irng = stream(config.seed, purpose::INPUTS, idx);
            match gen_task(&prog, config.n_examples, &config.dsl, &mut irng) {
                Ok(t) => break t,
                Err(DatagenError::GenerationFailed { .. }) => {
                    corpus.dropped += 1;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let text = task.program.as_ref().expect("generated tasks carry programs").to_string();
        match split_of(&text, config.split) {
            Split::Train => corpus.train.push(task),
            Split::Valid => corpus.valid.push(task),
            Split::Test => corpus.test.push(task),
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_file_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(
            &path,
            "{\"program\":null,\"examples\":[{\"in\":\"a\",\"out\":\"b\"}]}\n{\"program\":\"Concat(",
        )
        .unwrap();
        match read_dataset(&path) {
            Err(DatagenError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn split_is_a_function_of_program_text() {
        let f = [0.8, 0.1, 0.1];
        assert_eq!(split_of("Concat(ConstStr(\"a\"))", f), split_of("Concat(ConstStr(\"a\"))", f));
        assert_eq!(split_of("x", [1.0, 0.0, 0.0]), Split::Train);
        assert_eq!(split_of("x", [0.0, 0.0, 1.0]), Split::Test);
    }

    #[test]
    fn corpus_is_deterministic_and_sound() {
        let cfg = DataConfig {
            n_tasks: 40,
            max_size: 9,
            ..DataConfig::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.train.len() + a.valid.len() + a.test.len(), 40);
        for t in a.train.iter().chain(&a.valid).chain(&a.test) {
            assert!(t.is_satisfied_by(t.program.as_ref().unwrap()));
        }
    }
}
