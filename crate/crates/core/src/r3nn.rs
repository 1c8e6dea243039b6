//! Recursive-reverse-recursive network over partial program trees.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::datagen::Example;
use crate::dsl::{DslConfig, Grammar, NodeId, Ppt, Program, RuleId, TreeError};
use crate::encoder::{EncoderConfig, EncoderError, IoEncoder};
use crate::tensor::nn::{BiLstm, Linear};
use crate::tensor::{load_checkpoint, save_checkpoint, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("tree is complete; no expansions")]
    CompleteTree,
    #[error("io encoding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("checkpoint grammar {found} does not match {expected}")]
    GrammarMismatch { expected: String, found: String },
    #[error("bad model config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondNet {
    Feedforward,
    BiLstm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct R3nnConfig {
    /// Width `M` of every tree vector.
    pub dim: usize,
    /// Hidden layers inside each `f_r` / `g_r`.
    pub rule_depth: usize,
    pub cond_net: CondNet,
    pub pre_condition: bool,
    pub root_condition: bool,
    pub post_condition: bool,
    pub leaf_lstm: bool,
    pub encoder: EncoderConfig,
}

impl Default for R3nnConfig {
    fn default() -> Self {
        R3nnConfig {
            dim: 64,
            rule_depth: 1,
            cond_net: CondNet::Feedforward,
            pre_condition: true,
            root_condition: false,
            post_condition: false,
            leaf_lstm: true,
            encoder: EncoderConfig::default(),
        }
    }
}

/// Application of `rule` to the open leaf `leaf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Expansion {
    pub leaf: NodeId,
    pub rule: RuleId,
}

/// Every (open leaf, applicable rule) pair, leaves in left-to-right order.
pub fn valid_expansions(ppt: &Ppt, grammar: &Grammar) -> Vec<Expansion> {
    let mut out = Vec::new();
    for leaf in ppt.open_leaves() {
        for &rule in grammar.rules_for(ppt.node(leaf).symbol) {
            out.push(Expansion { leaf, rule });
        }
    }
    out
}

pub fn apply_expansion(ppt: &Ppt, grammar: &Grammar, e: Expansion) -> Result<Ppt, TreeError> {
    let mut next = ppt.clone();
    next.expand(grammar, e.leaf, e.rule)?;
    Ok(next)
}

#[derive(Debug, Clone)]
struct RuleNet {
    f: Vec<Linear>,
    g: Vec<Linear>,
    arity: usize,
}

#[derive(Debug, Clone)]
enum Cond {
    Feedforward { sym: ParamId, io: ParamId, b: ParamId },
    Lstm(BiLstm),
}

/// Per-task conditioning values living on one tape.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning {
    pub io: Var,
    proj: Option<Var>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Program { program: Program, log_prob: f64 },
    Incomplete { size: usize, log_prob: f64 },
}

impl Generated {
    pub fn program(&self) -> Option<&Program> {
        match self {
            Generated::Program { program, .. } => Some(program),
            Generated::Incomplete { .. } => None,
        }
    }
}

/// Node vectors from both passes over one tree.
#[derive(Debug, Clone)]
pub struct TreeVectors {
    pub phi: Vec<Option<Var>>,
    pub phi_prime: Vec<Option<Var>>,
}

#[derive(Debug, Clone)]
pub struct R3nn {
    pub config: R3nnConfig,
    pub grammar: Grammar,
    pub encoder: IoEncoder,
    pub params: ParamStore,
    symbols: ParamId,
    rules: ParamId,
    nets: Vec<RuleNet>,
    cond: Cond,
    leaf_lstm: Option<BiLstm>,
    root_cond: Option<Linear>,
    post_cond: Option<Linear>,
}

impl R3nn {
    pub fn new(config: R3nnConfig, dsl: &DslConfig, rng: &mut impl Rng) -> Result<R3nn, ModelError> {
        let m = config.dim;
        if m < 2 || !m.is_multiple_of(2) {
            return Err(ModelError::BadConfig(format!("dim must be even and >= 2, got {m}")));
        }
        let grammar = Grammar::new(dsl);
        let mut store = ParamStore::new();
        let encoder = IoEncoder::new(config.encoder.clone(), &dsl.charset, &mut store, rng)?;
        let io_dim = config.encoder.set_dim();
        let symbols = store.add_matrix("r3nn.phi", grammar.symbols().len(), m, rng)?;
        let rules = store.add_matrix("r3nn.omega", grammar.rules().len(), m, rng)?;
        let mut nets = Vec::with_capacity(grammar.rules().len());
        for (i, rule) in grammar.rules().iter().enumerate() {
            let q = rule.rhs.len();
            let mut f = Vec::new();
            let mut g = Vec::new();
            let mut width = q * m;
            for l in 0..config.rule_depth {
                f.push(Linear::new(&mut store, &format!("r3nn.f{i}.{l}"), width, m, rng)?);
                width = m;
            }
            f.push(Linear::new(&mut store, &format!("r3nn.f{i}.out"), width, m, rng)?);
            for l in 0..config.rule_depth {
                g.push(Linear::new(&mut store, &format!("r3nn.g{i}.{l}"), m, m, rng)?);
            }
            g.push(Linear::new(&mut store, &format!("r3nn.g{i}.out"), m, q * m, rng)?);
            nets.push(RuleNet { f, g, arity: q });
        }
        let cond = match config.cond_net {
            CondNet::Feedforward => Cond::Feedforward {
                sym: store.add_matrix("r3nn.cond.sym", m, m, rng)?,
                io: store.add_matrix("r3nn.cond.io", m, io_dim, rng)?,
                b: store.add_zeros("r3nn.cond.b", &[m])?,
            },
            CondNet::BiLstm => Cond::Lstm(BiLstm::new(&mut store, "r3nn.cond.lstm", m + io_dim, m / 2, 1, rng)?),
        };
        let leaf_lstm = if config.leaf_lstm {
            Some(BiLstm::new(&mut store, "r3nn.leaf_lstm", m, m / 2, 1, rng)?)
        } else {
            None
        };
        let root_cond = if config.root_condition {
            Some(Linear::new(&mut store, "r3nn.root_cond", m + io_dim, m, rng)?)
        } else {
            None
        };
        let post_cond = if config.post_condition {
            Some(Linear::new(&mut store, "r3nn.post_cond", m + io_dim, m, rng)?)
        } else {
            None
        };
        Ok(R3nn {
            config,
            grammar,
            encoder,
            params: store,
            symbols,
            rules,
            nets,
            cond,
            leaf_lstm,
            root_cond,
            post_cond,
        })
    }

    pub fn symbol_table(&self) -> ParamId {
        self.symbols
    }

    pub fn rule_table(&self) -> ParamId {
        self.rules
    }

    pub fn encode_examples(&self, tape: &mut Tape, examples: &[Example]) -> Result<Var, ModelError> {
        Ok(self.encoder.encode_io_set(tape, &self.params, examples)?)
    }

    /// Computes the task-level parts of conditioning once per tape.
    pub fn condition(&self, tape: &mut Tape, io: Var) -> Result<Conditioning, ModelError> {
        let expected = self.config.encoder.set_dim();
        let got = tape.value(io).len();
        if got != expected {
            return Err(ModelError::DimensionMismatch { expected, got });
        }
        let proj = match &self.cond {
            Cond::Feedforward { io: w, b, .. } if self.config.pre_condition => {
                let w = tape.param(&self.params, *w);
                let b = tape.param(&self.params, *b);
                let p = tape.matmul(w, io)?;
                Some(tape.add(p, b)?)
            }
            _ => None,
        };
        Ok(Conditioning { io, proj })
    }

    /// Conditioned vector for every leaf of `ppt`, in left-to-right order.
    pub fn leaf_inputs(&self, tape: &mut Tape, ppt: &Ppt, cond: &Conditioning) -> Result<Vec<(NodeId, Var)>, ModelError> {
        let table = tape.param(&self.params, self.symbols);
        let leaves = ppt.leaves();
        let mut phis = Vec::with_capacity(leaves.len());
        for &l in &leaves {
            phis.push(tape.embedding(table, ppt.node(l).symbol.0)?);
        }
        if !self.config.pre_condition {
            return Ok(leaves.into_iter().zip(phis).collect());
        }
        let out = match &self.cond {
            Cond::Feedforward { sym, .. } => {
                let w = tape.param(&self.params, *sym);
                let proj = cond.proj.expect("set when pre-conditioning");
                let mut out = Vec::with_capacity(phis.len());
                for p in phis {
                    let y = tape.matmul(w, p)?;
                    let y = tape.add(y, proj)?;
                    out.push(tape.tanh(y));
                }
                out
            }
            Cond::Lstm(lstm) => {
                let mut xs = Vec::with_capacity(phis.len());
                for p in phis {
                    xs.push(tape.concat(&[p, cond.io], 0)?);
                }
                let run = lstm.run(tape, &self.params, &xs)?;
                run.joined(tape)?
            }
        };
        Ok(leaves.into_iter().zip(out).collect())
    }

    fn mlp(&self, tape: &mut Tape, layers: &[Linear], mut x: Var) -> Result<Var, ModelError> {
        for l in layers {
            let y = l.apply(tape, &self.params, x)?;
            x = tape.tanh(y);
        }
        Ok(x)
    }

    /// Bottom-up pass; returns a vector for every node.
    pub fn recursive_pass(&self, tape: &mut Tape, ppt: &Ppt, leaves: &[(NodeId, Var)]) -> Result<Vec<Option<Var>>, ModelError> {
        let mut phi: Vec<Option<Var>> = vec![None; ppt.len()];
        for (id, v) in leaves {
            phi[id.0] = Some(*v);
        }
        for id in ppt.post_order() {
            let node = ppt.node(id);
            let Some(rule) = node.rule else { continue };
            let kids: Vec<Var> = node
                .children
                .iter()
                .map(|c| phi[c.0].expect("children precede parents in post-order"))
                .collect();
            let x = if kids.len() == 1 { kids[0] } else { tape.concat(&kids, 0)? };
            phi[id.0] = Some(self.mlp(tape, &self.nets[rule.0].f, x)?);
        }
        Ok(phi)
    }

    /// Top-down pass starting from the root vector.
    pub fn reverse_pass(&self, tape: &mut Tape, ppt: &Ppt, root: Var) -> Result<Vec<Option<Var>>, ModelError> {
        let mut out: Vec<Option<Var>> = vec![None; ppt.len()];
        out[ppt.root().0] = Some(root);
        let mut order = ppt.post_order();
        order.reverse();
        let m = self.config.dim;
        for id in order {
            let node = ppt.node(id);
            let Some(rule) = node.rule else { continue };
            let net = &self.nets[rule.0];
            let v = out[id.0].expect("parents precede children in pre-order");
            let y = self.mlp(tape, &net.g, v)?;
            if net.arity == 1 {
                out[node.children[0].0] = Some(y);
            } else {
                let parts = tape.split(y, 0, &vec![m; net.arity])?;
                for (c, p) in node.children.iter().zip(parts) {
                    out[c.0] = Some(p);
                }
            }
        }
        Ok(out)
    }

    pub fn tree_vectors(&self, tape: &mut Tape, ppt: &Ppt, cond: &Conditioning) -> Result<TreeVectors, ModelError> {
        let leaves = self.leaf_inputs(tape, ppt, cond)?;
        let phi = self.recursive_pass(tape, ppt, &leaves)?;
        let mut root = phi[ppt.root().0].expect("root visited");
        if let Some(l) = &self.root_cond {
            let x = tape.concat(&[root, cond.io], 0)?;
            let y = l.apply(tape, &self.params, x)?;
            root = tape.tanh(y);
        }
        let phi_prime = self.reverse_pass(tape, ppt, root)?;
        Ok(TreeVectors { phi, phi_prime })
    }

    /// Log-probabilities over [`valid_expansions`] in the same order.
    pub fn expansion_log_probs(
        &self,
        tape: &mut Tape,
        ppt: &Ppt,
        cond: &Conditioning,
    ) -> Result<(Vec<Expansion>, Var), ModelError> {
        let exps = valid_expansions(ppt, &self.grammar);
        if exps.is_empty() {
            return Err(ModelError::CompleteTree);
        }
        let tv = self.tree_vectors(tape, ppt, cond)?;
        let leaves = ppt.leaves();
        let mut states: Vec<Var> = leaves
            .iter()
            .map(|l| tv.phi_prime[l.0].expect("every leaf reached"))
            .collect();
        if let Some(l) = &self.post_cond {
            for s in states.iter_mut() {
                let x = tape.concat(&[*s, cond.io], 0)?;
                let y = l.apply(tape, &self.params, x)?;
                *s = tape.tanh(y);
            }
        }
        if let Some(lstm) = &self.leaf_lstm {
            let run = lstm.run(tape, &self.params, &states)?;
            states = run.joined(tape)?;
        }
        let omega = tape.param(&self.params, self.rules);
        let mut scores = Vec::new();
        for (leaf, h) in leaves.iter().zip(&states) {
            let node = ppt.node(*leaf);
            if !node.is_open() {
                continue;
            }
            let all = tape.matmul(omega, *h)?;
            let idx = self.grammar.rules_for(node.symbol).iter().map(|r| Some(r.0)).collect();
            scores.push(tape.gather(all, idx)?);
        }
        let z = if scores.len() == 1 { scores[0] } else { tape.concat(&scores, 0)? };
        Ok((exps, tape.log_softmax(z)?))
    }

    /// Probabilities over [`valid_expansions`].
    pub fn expansion_distribution(
        &self,
        tape: &mut Tape,
        ppt: &Ppt,
        cond: &Conditioning,
    ) -> Result<(Vec<Expansion>, Vec<f64>), ModelError> {
        let (exps, lp) = self.expansion_log_probs(tape, ppt, cond)?;
        let probs = tape.value(lp).data().iter().map(|x| x.exp()).collect();
        Ok((exps, probs))
    }

    /// `-log π(target)` on `ppt`.
    pub fn step_loss(&self, tape: &mut Tape, ppt: &Ppt, target: Expansion, cond: &Conditioning) -> Result<Var, ModelError> {
        let (exps, lp) = self.expansion_log_probs(tape, ppt, cond)?;
        let Some(i) = exps.iter().position(|e| *e == target) else {
            return Err(TreeError::InvalidExpansion {
                node: target.leaf.0,
                rule: target.rule.0,
            }
            .into());
        };
        let pick = tape.gather(lp, vec![Some(i)])?;
        let s = tape.sum(pick, None)?;
        Ok(tape.scale(s, -1.0))
    }

    /// Encodes the examples once and returns the encoding as plain values.
    pub fn encode_task(&self, examples: &[Example]) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let io = self.encode_examples(&mut tape, examples)?;
        Ok(tape.value(io).clone())
    }

    /// Expands from the start symbol until the tree is complete or its size
    /// exceeds `max_size`.
    pub fn generate(&self, io: &Tensor, mode: GenMode, max_size: usize, rng: &mut impl Rng) -> Result<Generated, ModelError> {
        let mut tape = Tape::new();
        let io = tape.constant(io.clone());
        let cond = self.condition(&mut tape, io)?;
        let mut ppt = Ppt::new(&self.grammar);
        let mut log_prob = 0.0;
        while !ppt.is_complete() {
            if ppt.size() >= max_size {
                return Ok(Generated::Incomplete { size: ppt.size(), log_prob });
            }
            let (exps, lp) = self.expansion_log_probs(&mut tape, &ppt, &cond)?;
            let lp = tape.value(lp).data();
            let i = match mode {
                GenMode::Greedy => argmax(lp),
                GenMode::Sample => sample_index(lp, rng),
            };
            log_prob += lp[i];
            ppt.expand(&self.grammar, exps[i].leaf, exps[i].rule)?;
        }
        Ok(Generated::Program {
            program: ppt.to_program(&self.grammar)?,
            log_prob,
        })
    }

    pub fn meta(&self) -> Value {
        json!({
            "model": "r3nn",
            "grammar_hash": self.grammar.hash(),
            "dsl": self.grammar.config(),
            "config": self.config,
        })
    }

    pub fn save(&self, path: &Path, extra: Value) -> Result<(), ModelError> {
        let mut meta = self.meta();
        meta["extra"] = extra;
        save_checkpoint(path, &self.params, &meta)?;
        Ok(())
    }

    /// Loads a checkpoint; when `expect` is given its grammar hash must match.
    pub fn load(path: &Path, expect: Option<&Grammar>) -> Result<(R3nn, Value), ModelError> {
        let ck = load_checkpoint(path)?;
        let (dsl, config): (DslConfig, R3nnConfig) = parse_meta(&ck.meta, "r3nn", expect)?;
        let mut model = R3nn::new(config, &dsl, &mut crate::rng::seeded(0))?;
        model.params.load_values(&ck.params)?;
        Ok((model, ck.meta["extra"].clone()))
    }
}

/// Validates checkpoint metadata written by a model's `meta`.
pub(crate) fn parse_meta<C: serde::de::DeserializeOwned>(
    meta: &Value,
    kind: &str,
    expect: Option<&Grammar>,
) -> Result<(DslConfig, C), ModelError> {
    let bad = |m: &str| ModelError::Tensor(TensorError::Checkpoint(m.to_string()));
    if meta["model"] != kind {
        return Err(bad(&format!("not a {kind} checkpoint")));
    }
    let dsl: DslConfig = serde_json::from_value(meta["dsl"].clone()).map_err(|e| bad(&e.to_string()))?;
    let config: C = serde_json::from_value(meta["config"].clone()).map_err(|e| bad(&e.to_string()))?;
    let found = meta["grammar_hash"].as_str().unwrap_or_default().to_string();
    let actual = Grammar::new(&dsl).hash();
    if found != actual {
        return Err(ModelError::GrammarMismatch { expected: actual, found });
    }
    if let Some(g) = expect {
        if g.hash() != found {
            return Err(ModelError::GrammarMismatch {
                expected: g.hash(),
                found,
            });
        }
    }
    Ok((dsl, config))
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draws an index from log-probabilities.
pub(crate) fn sample_index(log_probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}
