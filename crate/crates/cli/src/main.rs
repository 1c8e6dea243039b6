use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use nsps_core::bench::{load_benchmark, load_benchmark_dir, run_benchmark, size_histogram, BenchSettings, Engine};
use nsps_core::datagen::{generate_corpus, read_dataset, write_dataset, DataConfig};
use nsps_core::io2seq::Vocab;
use nsps_core::rng::{purpose, stream};
use nsps_core::search::{enum_search, SearchLimits};
use nsps_core::selfcheck::selfcheck;
use nsps_core::synth::{evaluate, train, write_log_csv, EvalRow, Synthesizer};
use nsps_core::{DslConfig, Grammar, Io2Seq, Io2SeqConfig, R3nn, R3nnConfig, TrainConfig};

#[derive(Parser)]
#[command(name = "nsps", version, about = "Neuro-symbolic program synthesis for string transformations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    R3nn,
    Io2seq,
    Enum,
}

#[derive(clap::Args)]
struct SearchArgs {
    /// Largest program size considered.
    #[arg(long, default_value_t = 13)]
    max_size: usize,
    /// Wall-clock budget for enumerative search.
    #[arg(long, default_value_t = 30_000)]
    time_budget_ms: u64,
    /// Samples drawn in addition to the greedy candidate.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus of synthetic tasks.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a checkpoint plus a CSV training log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "r3nn")]
        engine: EngineArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Log path; defaults to the checkpoint path with `.csv` appended.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Synthesize a program for one benchmark file.
    Synth {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, value_enum, default_value = "enum")]
        engine: EngineArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// DSL config for the enumerative engine.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Enumerative search only.
    Enum {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 13)]
        max_size: usize,
        #[arg(long, default_value_t = 30_000)]
        time_budget_ms: u64,
    },
    /// Solve rates over a dataset file at several sample budgets.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "r3nn")]
        engine: EngineArg,
        #[arg(long, value_delimiter = ',', default_value = "0,1,10,50,100")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 13)]
        max_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an engine over every benchmark in a directory.
    Bench {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "enum")]
        engine: EngineArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Print the grammar (or the sequence-model vocabulary) as JSON.
    GrammarDump {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        vocab: bool,
    },
    /// Interpreter goldens and gradient checks.
    Selfcheck,
}

/// Settings file for `train`. Every section is optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainFile {
    dsl: DslConfig,
    r3nn: R3nnConfig,
    io2seq: Io2SeqConfig,
    train: TrainConfig,
}

enum Failure {
    NoSolution,
    Config(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::NoSolution => 2,
            Failure::Config(_) => 3,
            Failure::Internal(_) => 4,
        }
    }
}

type Res<T> = Result<T, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Res<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn print_json(v: &impl Serialize) -> Res<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, v).map_err(internal)?;
    writeln!(out).map_err(internal)
}

enum Loaded {
    R3nn(R3nn),
    Io2Seq(Io2Seq),
    Enum(Grammar),
}

impl Loaded {
    fn engine(&self) -> Engine<'_> {
        match self {
            Loaded::R3nn(m) => Engine::R3nn(m),
            Loaded::Io2Seq(m) => Engine::Io2Seq(m),
            Loaded::Enum(g) => Engine::Enum(g),
        }
    }
}

fn load_engine(engine: EngineArg, checkpoint: Option<&Path>, config: Option<&Path>) -> Res<Loaded> {
    let need = || checkpoint.ok_or_else(|| config_err("--checkpoint is required for this engine"));
    Ok(match engine {
        EngineArg::R3nn => Loaded::R3nn(R3nn::load(need()?, None).map_err(config_err)?.0),
        EngineArg::Io2seq => Loaded::Io2Seq(Io2Seq::load(need()?, None).map_err(config_err)?.0),
        EngineArg::Enum => {
            let dsl: DslConfig = read_json(config)?;
            dsl.check().map_err(config_err)?;
            Loaded::Enum(Grammar::new(&dsl))
        }
    })
}

fn settings(s: &SearchArgs) -> BenchSettings {
    BenchSettings {
        samples: s.samples,
        seed: s.seed,
        max_size: s.max_size,
        time_budget: Duration::from_millis(s.time_budget_ms),
    }
}

fn run(cli: Cli) -> Res<()> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let mut cfg: DataConfig = read_json(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.check().map_err(config_err)?;
            let corpus = generate_corpus(&cfg).map_err(internal)?;
            fs::create_dir_all(&out).map_err(config_err)?;
            for (name, tasks) in [("train", &corpus.train), ("valid", &corpus.valid), ("test", &corpus.test)] {
                write_dataset(tasks, &out.join(format!("{name}.jsonl"))).map_err(internal)?;
            }
            let manifest = json!({
                "config": cfg,
                "config_hash": cfg.hash(),
                "train": corpus.train.len(),
                "valid": corpus.valid.len(),
                "test": corpus.test.len(),
                "dropped": corpus.dropped,
            });
            let text = serde_json::to_string_pretty(&manifest).map_err(internal)?;
            fs::write(out.join("manifest.json"), text + "\n").map_err(config_err)?;
            print_json(&manifest)
        }
        Command::Train { config, data, checkpoint, engine, seed, log } => {
            let mut file: TrainFile = read_json(config.as_deref())?;
            if let Some(s) = seed {
                file.train.seed = s;
            }
            file.dsl.check().map_err(config_err)?;
            let tasks = read_dataset(&data).map_err(config_err)?;
            let log_path = log.unwrap_or_else(|| {
                let mut p = checkpoint.clone().into_os_string();
                p.push(".csv");
                p.into()
            });
            let mut init = stream(file.train.seed, purpose::INIT, 0);
            let extra = json!({ "train": file.train, "data": data.display().to_string() });
            let echo = |r: &nsps_core::synth::EpochLog| eprintln!("{}", json!(r));
            let rows = match engine {
                EngineArg::R3nn => {
                    let mut m = R3nn::new(file.r3nn, &file.dsl, &mut init).map_err(config_err)?;
                    let rows = train_model(&mut m, &tasks, &file.train, echo)?;
                    m.save(&checkpoint, extra).map_err(internal)?;
                    rows
                }
                EngineArg::Io2seq => {
                    let mut m = Io2Seq::new(file.io2seq, &file.dsl, &mut init).map_err(config_err)?;
                    let rows = train_model(&mut m, &tasks, &file.train, echo)?;
                    m.save(&checkpoint, extra).map_err(internal)?;
                    rows
                }
                EngineArg::Enum => return Err(config_err("the enum engine has nothing to train")),
            };
            let mut w = BufWriter::new(fs::File::create(&log_path).map_err(config_err)?);
            write_log_csv(&rows, &mut w).map_err(internal)?;
            print_json(&json!({
                "checkpoint": checkpoint.display().to_string(),
                "log": log_path.display().to_string(),
                "epochs": rows.len(),
                "final": rows.last(),
            }))
        }
        Command::Synth { benchmark, engine, checkpoint, config, search } => {
            let b = load_benchmark(&benchmark).map_err(config_err)?;
            let loaded = load_engine(engine, checkpoint.as_deref(), config.as_deref())?;
            let r = run_benchmark(loaded.engine(), &b, &settings(&search)).map_err(internal)?;
            print_json(&r)?;
            if r.solved {
                Ok(())
            } else {
                Err(Failure::NoSolution)
            }
        }
        Command::Enum { benchmark, config, max_size, time_budget_ms } => {
            let b = load_benchmark(&benchmark).map_err(config_err)?;
            let dsl: DslConfig = read_json(config.as_deref())?;
            dsl.check().map_err(config_err)?;
            let limits = SearchLimits {
                max_size,
                time_budget: Duration::from_millis(time_budget_ms),
                ..SearchLimits::default()
            };
            let r = enum_search(&Grammar::new(&dsl), &b.task(), limits);
            println!("{}", r.to_json());
            match r.program() {
                Some(p) if b.task().is_satisfied_by(p) => Ok(()),
                Some(_) => Err(internal("search returned an inconsistent program")),
                None => Err(Failure::NoSolution),
            }
        }
        Command::Eval { checkpoint, data, engine, ks, max_size, seed } => {
            let tasks = read_dataset(&data).map_err(config_err)?;
            if tasks.is_empty() {
                return Err(config_err("dataset is empty"));
            }
            let rows: Vec<EvalRow> = match load_engine(engine, Some(&checkpoint), None)? {
                Loaded::R3nn(m) => evaluate(&m, &tasks, &ks, seed, max_size),
                Loaded::Io2Seq(m) => evaluate(&m, &tasks, &ks, seed, max_size),
                Loaded::Enum(_) => return Err(config_err("eval needs a trained engine")),
            }
            .map_err(internal)?;
            print_json(&rows)
        }
        Command::Bench { dir, engine, checkpoint, config, search } => {
            let benches = load_benchmark_dir(&dir).map_err(config_err)?;
            let loaded = load_engine(engine, checkpoint.as_deref(), config.as_deref())?;
            let s = settings(&search);
            let mut results = Vec::with_capacity(benches.len());
            for b in &benches {
                let r = run_benchmark(loaded.engine(), b, &s).map_err(internal)?;
                print_json(&r)?;
                results.push(r);
            }
            print_json(&json!({
                "solved": results.iter().filter(|r| r.solved).count(),
                "total": results.len(),
                "size_histogram": size_histogram(&results),
            }))
        }
        Command::GrammarDump { config, vocab } => {
            let dsl: DslConfig = read_json(config.as_deref())?;
            dsl.check().map_err(config_err)?;
            let g = Grammar::new(&dsl);
            if vocab {
                println!("{}", Vocab::new(&g).to_json(&g));
            } else {
                println!("{}", g.to_json());
            }
            Ok(())
        }
        Command::Selfcheck => {
            let checks = selfcheck();
            for c in &checks {
                print_json(c)?;
            }
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(internal(format!("{n} checks failed"))),
            }
        }
    }
}

fn train_model<M: Synthesizer>(
    m: &mut M,
    tasks: &[nsps_core::Task],
    cfg: &TrainConfig,
    echo: impl FnMut(&nsps_core::synth::EpochLog),
) -> Res<Vec<nsps_core::synth::EpochLog>> {
    use nsps_core::synth::TrainError;
    train(m, tasks, cfg, echo).map_err(|e| match e {
        TrainError::EmptyDataset | TrainError::BadConfig(_) | TrainError::MissingProgram { .. } => config_err(e),
        TrainError::Model(nsps_core::r3nn::ModelError::Encoder(_)) => config_err(e),
        other => internal(other),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, message) = match &f {
                Failure::NoSolution => ("no_solution", "no consistent program found".to_string()),
                Failure::Config(m) => ("config", m.clone()),
                Failure::Internal(m) => ("internal", m.clone()),
            };
            eprintln!("{}", json!({ "error": kind, "message": message }));
            ExitCode::from(f.code())
        }
    }
}
