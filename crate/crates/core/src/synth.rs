//! Training loops, sampling-based synthesis and evaluation.

use std::collections::HashMap;
use std::io::Write;
use std::thread;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{Example, Task};
use crate::dsl::{Grammar, NodeId, Ppt, Program, TreeError};
use crate::io2seq::{linearize, Decoded, Io2Seq};
use crate::r3nn::{Expansion, GenMode, Generated, ModelError, R3nn};
use crate::rng::{purpose, stream};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("task {task} has no program to learn from")]
    MissingProgram { task: usize },
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("non-finite loss at epoch {epoch}, task {task}: {dump}")]
    NonFinite { epoch: usize, task: usize, dump: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Expansions reproducing `prog`, always at the leftmost open leaf.
pub fn derivation_trace(prog: &Program, grammar: &Grammar) -> Result<Vec<Expansion>, TreeError> {
    let full = Ppt::from_program(grammar, prog)?;
    let mut ppt = Ppt::new(grammar);
    // map node ids of the partial tree to ids in `full`
    let mut link: HashMap<NodeId, NodeId> = HashMap::from([(ppt.root(), full.root())]);
    let mut trace = Vec::with_capacity(full.size());
    while let Some(&leaf) = ppt.open_leaves().first() {
        let src = link[&leaf];
        let rule = full.node(src).rule.ok_or(TreeError::Malformed(src.0))?;
        ppt.expand(grammar, leaf, rule)?;
        for (a, b) in ppt.node(leaf).children.iter().zip(&full.node(src).children) {
            link.insert(*a, *b);
        }
        trace.push(Expansion { leaf, rule });
    }
    Ok(trace)
}

/// Both programs run without error on every input and agree byte-wise.
pub fn equivalent_wrt<'a>(a: &Program, b: &Program, inputs: impl IntoIterator<Item = &'a str>) -> bool {
    inputs.into_iter().all(|i| match (a.eval(i), b.eval(i)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    })
}

/// One decoded candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub program: Option<Program>,
    pub log_prob: f64,
    /// Emitted output was syntactically valid (complete tree or parseable sequence).
    pub valid: bool,
}

/// What the training and synthesis loops need from a model.
pub trait Synthesizer: Sync {
    fn grammar(&self) -> &Grammar;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Summed loss over the supervision targets of `prog`, with their count.
    fn program_loss(&self, tape: &mut Tape, examples: &[Example], prog: &Program) -> Result<(Var, usize), ModelError>;
    fn encode_task(&self, examples: &[Example]) -> Result<Tensor, ModelError>;
    fn decode(&self, io: &Tensor, mode: GenMode, max_size: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Candidate, ModelError>;
}

impl Synthesizer for R3nn {
    fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn program_loss(&self, tape: &mut Tape, examples: &[Example], prog: &Program) -> Result<(Var, usize), ModelError> {
        let trace = derivation_trace(prog, &self.grammar)?;
        let io = self.encode_examples(tape, examples)?;
        let cond = self.condition(tape, io)?;
        let mut ppt = Ppt::new(&self.grammar);
        let mut losses = Vec::with_capacity(trace.len());
        for e in &trace {
            let l = self.step_loss(tape, &ppt, *e, &cond)?;
            losses.push(tape.reshape(l, &[1])?);
            ppt.expand(&self.grammar, e.leaf, e.rule)?;
        }
        let all = tape.concat(&losses, 0)?;
        Ok((tape.sum(all, None)?, trace.len()))
    }

    fn encode_task(&self, examples: &[Example]) -> Result<Tensor, ModelError> {
        R3nn::encode_task(self, examples)
    }

    fn decode(&self, io: &Tensor, mode: GenMode, max_size: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Candidate, ModelError> {
        Ok(match self.generate(io, mode, max_size, rng)? {
            Generated::Program { program, log_prob } => Candidate {
                program: Some(program),
                log_prob,
                valid: true,
            },
            Generated::Incomplete { log_prob, .. } => Candidate {
                program: None,
                log_prob,
                valid: false,
            },
        })
    }
}

impl Synthesizer for Io2Seq {
    fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn program_loss(&self, tape: &mut Tape, examples: &[Example], prog: &Program) -> Result<(Var, usize), ModelError> {
        let tokens = linearize(prog, &self.grammar)?;
        let io = self.encode_examples(tape, examples)?;
        self.sequence_loss(tape, io, &tokens)
    }

    fn encode_task(&self, examples: &[Example]) -> Result<Tensor, ModelError> {
        Io2Seq::encode_task(self, examples)
    }

    /// `max_size` bounds the derivation size; the token cap is derived from it.
    fn decode(&self, io: &Tensor, mode: GenMode, max_size: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Candidate, ModelError> {
        let cap = self.config.max_tokens.min(4 * (max_size + 1));
        let d = self.generate(io, mode, cap, rng)?;
        let log_prob = d.log_prob();
        Ok(match d {
            Decoded::Program { program, .. } => Candidate {
                program: Some(program),
                log_prob,
                valid: true,
            },
            _ => Candidate {
                program: None,
                log_prob,
                valid: false,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Size cap for greedy decoding while measuring training accuracy.
    pub max_size: usize,
    /// Measure greedy accuracy every this many epochs (0 disables).
    pub acc_every: usize,
    /// Upper bound on tasks used to measure greedy accuracy.
    pub acc_tasks: usize,
    /// Stop once greedy training accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            epochs: 10,
            adam: AdamConfig::default(),
            seed: 0,
            max_size: 13,
            acc_every: 1,
            acc_tasks: 200,
            target_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub greedy_train_acc: Option<f64>,
}

pub fn write_log_csv(log: &[EpochLog], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,mean_loss,greedy_train_acc")?;
    for e in log {
        let acc = e.greedy_train_acc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", e.epoch, e.mean_loss, acc)?;
    }
    Ok(())
}

/// Fraction of tasks whose greedy decoding equals the task's program.
pub fn greedy_accuracy<M: Synthesizer>(model: &M, tasks: &[Task], max_size: usize) -> Result<f64, ModelError> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let hits = par_map(tasks, |_, t| -> Result<bool, ModelError> {
        let io = model.encode_task(&t.examples)?;
        let c = model.decode(&io, GenMode::Greedy, max_size, &mut crate::rng::seeded(0))?;
        Ok(c.program.is_some() && c.program == t.program)
    })
    .into_iter()
    .collect::<Result<Vec<bool>, _>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / tasks.len() as f64)
}

/// Minimizes the mean per-target loss with Adam over batches of tasks.
/// `on_epoch` sees every log row as it is produced.
pub fn train<M: Synthesizer>(
    model: &mut M,
    tasks: &[Task],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    if tasks.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(TrainError::BadConfig("batch_size must be positive".into()));
    }
    let programs: Vec<&Program> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| t.program.as_ref().ok_or(TrainError::MissingProgram { task: i }))
        .collect::<Result<_, _>>()?;
    let acc_set = &tasks[..tasks.len().min(config.acc_tasks)];
    let mut opt = Adam::new(config.adam);
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    model.params_mut().zero_grads();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut stream(config.seed, purpose::SHUFFLE, epoch as u64));
        let (mut total, mut steps) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let mut batch_steps = 0;
            for &ti in batch {
                let mut tape = Tape::new();
                let (loss, n) = model.program_loss(&mut tape, &tasks[ti].examples, programs[ti])?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    let dump = serde_json::json!({
                        "program": programs[ti].to_string(),
                        "examples": tasks[ti].examples,
                        "loss": value.to_string(),
                        "targets": n,
                    });
                    return Err(TrainError::NonFinite {
                        epoch,
                        task: ti,
                        dump: dump.to_string(),
                    });
                }
                tape.backward(loss, model.params_mut()).map_err(ModelError::from)?;
                total += value;
                batch_steps += n;
            }
            steps += batch_steps;
            opt.step(model.params_mut(), 1.0 / batch_steps.max(1) as f64);
        }
        let greedy_train_acc = if config.acc_every > 0 && (epoch % config.acc_every == 0 || epoch == config.epochs) {
            Some(greedy_accuracy(model, acc_set, config.max_size)?)
        } else {
            None
        };
        let row = EpochLog {
            epoch,
            mean_loss: total / steps.max(1) as f64,
            greedy_train_acc,
        };
        on_epoch(&row);
        log.push(row);
        if let (Some(target), Some(acc)) = (config.target_accuracy, greedy_train_acc) {
            if acc >= target {
                break;
            }
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Number of samples drawn in addition to the greedy candidate.
    pub samples: usize,
    pub seed: u64,
    pub max_size: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            samples: 100,
            seed: 0,
            max_size: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub program: Program,
    pub log_prob: f64,
    /// 0 for the greedy candidate, `i + 1` for sample `i`.
    pub found_at: usize,
}

/// Raw candidates for one task: greedy first, then samples drawn from
/// streams `0..samples` so a smaller budget sees a prefix of a larger one.
pub fn candidates<M: Synthesizer>(model: &M, examples: &[Example], opts: &SynthOptions, task_index: u64) -> Result<Vec<Candidate>, ModelError> {
    let io = model.encode_task(examples)?;
    let mut out = Vec::with_capacity(opts.samples + 1);
    out.push(model.decode(&io, GenMode::Greedy, opts.max_size, &mut crate::rng::seeded(0))?);
    for i in 0..opts.samples as u64 {
        let mut rng = stream(opts.seed, purpose::SAMPLES, (task_index << 24) | i);
        out.push(model.decode(&io, GenMode::Sample, opts.max_size, &mut rng)?);
    }
    Ok(out)
}

/// Consistent candidates, one per output signature on the task inputs and
/// `extra_inputs`, best log-probability first.
pub fn rank_consistent(task: &Task, cands: &[Candidate], extra_inputs: &[String]) -> Vec<Ranked> {
    let mut best: HashMap<Vec<String>, Ranked> = HashMap::new();
    for (i, c) in cands.iter().enumerate() {
        let Some(p) = &c.program else { continue };
        if !task.is_satisfied_by(p) {
            continue;
        }
        let sig: Vec<String> = task
            .inputs()
            .chain(extra_inputs.iter().map(String::as_str))
            .map(|s| p.eval(s).unwrap_or_else(|e| format!("\u{0}{e}")))
            .collect();
        let r = Ranked {
            program: p.clone(),
            log_prob: c.log_prob,
            found_at: i,
        };
        match best.get(&sig) {
            Some(b) if b.log_prob >= r.log_prob => {}
            _ => {
                best.insert(sig, r);
            }
        }
    }
    let mut out: Vec<Ranked> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then(a.found_at.cmp(&b.found_at))
    });
    out
}

pub fn synthesize<M: Synthesizer>(model: &M, task: &Task, opts: &SynthOptions, extra_inputs: &[String]) -> Result<Vec<Ranked>, ModelError> {
    let cands = candidates(model, &task.examples, opts, 0)?;
    Ok(rank_consistent(task, &cands, extra_inputs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub index: usize,
    pub solved: bool,
    pub program: Option<String>,
    /// Candidates that were syntactically valid.
    pub valid: usize,
    pub decoded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub k: usize,
    pub solved: usize,
    pub total: usize,
    pub tasks: Vec<TaskReport>,
}

/// Solve counts for each budget in `k_list`. Budget `k` uses the greedy
/// candidate plus the first `k` samples; every reported program is
/// re-checked against the examples.
pub fn evaluate<M: Synthesizer>(model: &M, tasks: &[Task], k_list: &[usize], seed: u64, max_size: usize) -> Result<Vec<EvalRow>, ModelError> {
    let kmax = k_list.iter().copied().max().unwrap_or(0);
    let opts = SynthOptions {
        samples: kmax,
        seed,
        max_size,
    };
    let per_task = par_map(tasks, |i, t| candidates(model, &t.examples, &opts, i as u64))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut reports = Vec::with_capacity(tasks.len());
        for (i, (task, cands)) in tasks.iter().zip(&per_task).enumerate() {
            let used = &cands[..(k + 1).min(cands.len())];
            let ranked = rank_consistent(task, used, &[]);
            let program = ranked.first().map(|r| r.program.clone());
            let solved = program.as_ref().is_some_and(|p| recheck(task, p));
            reports.push(TaskReport {
                index: i,
                solved,
                program: program.map(|p| p.to_string()),
                valid: used.iter().filter(|c| c.valid).count(),
                decoded: used.len(),
            });
        }
        rows.push(EvalRow {
            k,
            solved: reports.iter().filter(|r| r.solved).count(),
            total: tasks.len(),
            tasks: reports,
        });
    }
    Ok(rows)
}

fn recheck(task: &Task, p: &Program) -> bool {
    task.examples
        .iter()
        .all(|e| crate::dsl::eval_program(p, &e.input).is_ok_and(|o| o == e.output))
}

/// Maps `f` over `items` on scoped threads, preserving order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, t)| f(c * chunk + j, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
