//! Benchmark files and the per-benchmark harness.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Example, Task};
use crate::dsl::{eval_program, Grammar, Program};
use crate::io2seq::Io2Seq;
use crate::r3nn::{ModelError, R3nn};
use crate::search::{enum_search, SearchLimits, SearchOutcome};
use crate::synth::{synthesize, SynthOptions, Synthesizer};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{0}: benchmark has no training examples")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One task: examples to learn from and optional held-out examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub train: Vec<Example>,
    #[serde(default)]
    pub test: Vec<Example>,
}

impl Benchmark {
    pub fn task(&self) -> Task {
        Task {
            program: None,
            examples: self.train.clone(),
        }
    }
}

pub fn load_benchmark(path: &Path) -> Result<Benchmark, BenchError> {
    let text = fs::read_to_string(path)?;
    let b: Benchmark = serde_json::from_str(&text).map_err(|e| BenchError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if b.train.is_empty() {
        return Err(BenchError::Empty(b.name));
    }
    Ok(b)
}

/// Every `*.json` file in `dir`, sorted by file name.
pub fn load_benchmark_dir(dir: &Path) -> Result<Vec<Benchmark>, BenchError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_benchmark(p)).collect()
}

#[derive(Debug, Clone, Copy)]
pub enum Engine<'a> {
    R3nn(&'a R3nn),
    Io2Seq(&'a Io2Seq),
    Enum(&'a Grammar),
}

impl Engine<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::R3nn(_) => "r3nn",
            Engine::Io2Seq(_) => "io2seq",
            Engine::Enum(_) => "enum",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchSettings {
    pub samples: usize,
    pub seed: u64,
    pub max_size: usize,
    pub time_budget: Duration,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            samples: 100,
            seed: 0,
            max_size: 13,
            time_budget: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub name: String,
    pub engine: String,
    pub solved: bool,
    pub program: Option<String>,
    pub size: Option<usize>,
    /// Whether the program also matches the held-out examples, when any exist.
    pub generalizes: Option<bool>,
    pub millis: u128,
}

fn matches_all(p: &Program, examples: &[Example]) -> bool {
    examples
        .iter()
        .all(|e| eval_program(p, &e.input).is_ok_and(|o| o == e.output))
}

fn model_solve<M: Synthesizer>(m: &M, b: &Benchmark, s: &BenchSettings) -> Result<Option<Program>, ModelError> {
    let opts = SynthOptions {
        samples: s.samples,
        seed: s.seed,
        max_size: s.max_size,
    };
    let extra: Vec<String> = b.test.iter().map(|e| e.input.clone()).collect();
    Ok(synthesize(m, &b.task(), &opts, &extra)?.into_iter().next().map(|r| r.program))
}

/// Runs one engine on one benchmark. A reported program is re-evaluated on
/// the training examples and dropped if it does not reproduce them.
pub fn run_benchmark(engine: Engine<'_>, b: &Benchmark, s: &BenchSettings) -> Result<BenchResult, BenchError> {
    let started = Instant::now();
    let found = match engine {
        Engine::R3nn(m) => model_solve(m, b, s)?,
        Engine::Io2Seq(m) => model_solve(m, b, s)?,
        Engine::Enum(grammar) => {
            let limits = SearchLimits {
                max_size: s.max_size,
                time_budget: s.time_budget,
                ..SearchLimits::default()
            };
            match enum_search(grammar, &b.task(), limits).outcome {
                SearchOutcome::Found(p) => Some(p),
                SearchOutcome::NotFound(_) => None,
            }
        }
    };
    let found = found.filter(|p| matches_all(p, &b.train));
    Ok(BenchResult {
        name: b.name.clone(),
        engine: engine.name().into(),
        solved: found.is_some(),
        size: found.as_ref().map(Program::size),
        generalizes: match (&found, b.test.is_empty()) {
            (Some(p), false) => Some(matches_all(p, &b.test)),
            _ => None,
        },
        program: found.map(|p| p.to_string()),
        millis: started.elapsed().as_millis(),
    })
}

/// Solved-program counts by size.
pub fn size_histogram(results: &[BenchResult]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for r in results {
        if let Some(s) = r.size {
            *h.entry(s).or_insert(0) += 1;
        }
    }
    h
}
