//! Sequence baseline: an LSTM that emits a bracketed linearization of the
//! program's derivation tree.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::datagen::Example;
use crate::dsl::{DslConfig, Grammar, NodeId, Ppt, Program, SymbolId, TreeError};
use crate::encoder::{EncoderConfig, EncoderVariant, IoEncoder};
use crate::r3nn::{argmax, parse_meta, sample_index, GenMode, ModelError};
use crate::tensor::nn::{Linear, LstmCell};
use crate::tensor::{load_checkpoint, save_checkpoint, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    /// The wrapper around the whole tree.
    Root,
    Nt(SymbolId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinearToken {
    Open(Tag),
    Close(Tag),
    Terminal(SymbolId),
    Eos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid token sequence at {index}: {reason}")]
pub struct Invalid {
    pub reason: String,
    pub index: usize,
}

/// Token inventory for one grammar. Index 0 is end-of-sequence.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<LinearToken>,
    index: HashMap<LinearToken, usize>,
}

impl Vocab {
    pub fn new(grammar: &Grammar) -> Vocab {
        let mut tokens = vec![
            LinearToken::Eos,
            LinearToken::Open(Tag::Root),
            LinearToken::Close(Tag::Root),
        ];
        for (i, _) in grammar.symbols().iter().enumerate() {
            let id = SymbolId(i);
            if grammar.is_terminal(id) {
                tokens.push(LinearToken::Terminal(id));
            } else {
                tokens.push(LinearToken::Open(Tag::Nt(id)));
                tokens.push(LinearToken::Close(Tag::Nt(id)));
            }
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: usize) -> Option<LinearToken> {
        self.tokens.get(i).copied()
    }

    pub fn id(&self, t: LinearToken) -> usize {
        self.index[&t]
    }

    pub fn eos(&self) -> usize {
        0
    }

    pub fn render(&self, grammar: &Grammar, t: LinearToken) -> String {
        let name = |tag: Tag| match tag {
            Tag::Root => "S".to_string(),
            Tag::Nt(s) => grammar.symbol(s).to_string(),
        };
        match t {
            LinearToken::Open(tag) => format!("(_{}", name(tag)),
            LinearToken::Close(tag) => format!(")_{}", name(tag)),
            LinearToken::Terminal(s) => grammar.symbol(s).to_string(),
            LinearToken::Eos => "<eos>".into(),
        }
    }

    pub fn to_json(&self, grammar: &Grammar) -> String {
        let names: Vec<String> = self.tokens.iter().map(|t| self.render(grammar, *t)).collect();
        serde_json::to_string_pretty(&names).expect("strings serialize")
    }
}

/// Text rendering: a space before every token except closing tags.
pub struct Rendered<'a>(pub &'a Grammar, pub &'a [LinearToken]);

impl fmt::Display for Rendered<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = Vocab::new(self.0);
        for (i, t) in self.1.iter().enumerate() {
            if i > 0 && !matches!(t, LinearToken::Close(_)) {
                f.write_str(" ")?;
            }
            f.write_str(&v.render(self.0, *t))?;
        }
        Ok(())
    }
}

/// Pre-order typed-bracket serialization, wrapped in the root tag.
pub fn linearize(prog: &Program, grammar: &Grammar) -> Result<Vec<LinearToken>, TreeError> {
    let ppt = Ppt::from_program(grammar, prog)?;
    let mut out = vec![LinearToken::Open(Tag::Root)];
    fn walk(ppt: &Ppt, id: NodeId, out: &mut Vec<LinearToken>) {
        let node = ppt.node(id);
        if node.rule.is_none() {
            out.push(LinearToken::Terminal(node.symbol));
            return;
        }
        out.push(LinearToken::Open(Tag::Nt(node.symbol)));
        for c in &node.children {
            walk(ppt, *c, out);
        }
        out.push(LinearToken::Close(Tag::Nt(node.symbol)));
    }
    walk(&ppt, ppt.root(), &mut out);
    out.push(LinearToken::Close(Tag::Root));
    Ok(out)
}

struct Parsed {
    symbol: SymbolId,
    children: Vec<Parsed>,
}

struct Parser<'a> {
    grammar: &'a Grammar,
    tokens: &'a [LinearToken],
    pos: usize,
}

impl Parser<'_> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, Invalid> {
        Err(Invalid {
            reason: reason.into(),
            index: self.pos,
        })
    }

    fn next(&mut self) -> Result<LinearToken, Invalid> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => self.fail("truncated sequence"),
        }
    }

    /// Parses `(_X ... )_X` where the opening tag was already consumed.
    fn node(&mut self, symbol: SymbolId) -> Result<Parsed, Invalid> {
        let mut children = Vec::new();
        loop {
            let at = self.pos;
            match self.next()? {
                LinearToken::Terminal(t) => children.push(Parsed { symbol: t, children: Vec::new() }),
                LinearToken::Open(Tag::Nt(s)) => children.push(self.node(s)?),
                LinearToken::Close(Tag::Nt(s)) if s == symbol => break,
                other => {
                    self.pos = at;
                    return self.fail(format!("unexpected {other:?} inside {}", self.grammar.symbol(symbol)));
                }
            }
        }
        let rhs: Vec<SymbolId> = children.iter().map(|c| c.symbol).collect();
        if self.grammar.find_rule(symbol, &rhs).is_none() {
            self.pos -= 1;
            return self.fail(format!("no rule {} -> {rhs:?}", self.grammar.symbol(symbol)));
        }
        Ok(Parsed { symbol, children })
    }
}

fn build(grammar: &Grammar, ppt: &mut Ppt, at: NodeId, p: &Parsed) -> Result<(), TreeError> {
    if p.children.is_empty() && grammar.is_terminal(p.symbol) {
        return Ok(());
    }
    let rhs: Vec<SymbolId> = p.children.iter().map(|c| c.symbol).collect();
    let rule = grammar.find_rule(p.symbol, &rhs).ok_or(TreeError::Malformed(at.0))?;
    ppt.expand(grammar, at, rule)?;
    let kids = ppt.node(at).children.clone();
    for (k, c) in kids.iter().zip(&p.children) {
        build(grammar, ppt, *k, c)?;
    }
    Ok(())
}

/// Parses a token sequence; a trailing end-of-sequence token is allowed.
pub fn delinearize(tokens: &[LinearToken], grammar: &Grammar) -> Result<Program, Invalid> {
    let mut p = Parser { grammar, tokens, pos: 0 };
    if p.next()? != LinearToken::Open(Tag::Root) {
        p.pos = 0;
        return p.fail("expected root open tag");
    }
    let start = grammar.start();
    if p.next()? != LinearToken::Open(Tag::Nt(start)) {
        p.pos = 1;
        return p.fail("expected start symbol");
    }
    let tree = p.node(start)?;
    if p.next()? != LinearToken::Close(Tag::Root) {
        p.pos -= 1;
        return p.fail("expected root close tag");
    }
    match tokens.get(p.pos) {
        None | Some(LinearToken::Eos) if p.pos + 1 >= tokens.len() => {}
        _ => return p.fail("trailing tokens"),
    }
    let mut ppt = Ppt::new(grammar);
    let root = ppt.root();
    build(grammar, &mut ppt, root, &tree).map_err(|e| Invalid { reason: e.to_string(), index: 0 })?;
    ppt.to_program(grammar).map_err(|e| Invalid { reason: e.to_string(), index: 0 })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Io2SeqConfig {
    pub hidden: usize,
    pub embed: usize,
    pub layers: usize,
    pub max_tokens: usize,
    pub encoder: EncoderConfig,
}

impl Default for Io2SeqConfig {
    fn default() -> Self {
        Io2SeqConfig {
            hidden: 64,
            embed: 32,
            layers: 2,
            max_tokens: 128,
            encoder: EncoderConfig {
                variant: EncoderVariant::LstmSumCc,
                ..EncoderConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Program { program: Program, log_prob: f64 },
    Invalid { invalid: Invalid, log_prob: f64 },
    Incomplete { log_prob: f64 },
}

impl Decoded {
    pub fn program(&self) -> Option<&Program> {
        match self {
            Decoded::Program { program, .. } => Some(program),
            _ => None,
        }
    }

    pub fn log_prob(&self) -> f64 {
        match self {
            Decoded::Program { log_prob, .. } | Decoded::Invalid { log_prob, .. } | Decoded::Incomplete { log_prob } => {
                *log_prob
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Io2Seq {
    pub config: Io2SeqConfig,
    pub grammar: Grammar,
    pub vocab: Vocab,
    pub encoder: IoEncoder,
    pub params: ParamStore,
    tokens: ParamId,
    init_h: Vec<Linear>,
    init_c: Vec<Linear>,
    cells: Vec<LstmCell>,
    out: Linear,
}

type State = Vec<(Var, Var)>;

impl Io2Seq {
    pub fn new(config: Io2SeqConfig, dsl: &DslConfig, rng: &mut impl Rng) -> Result<Io2Seq, ModelError> {
        if config.layers == 0 || config.hidden == 0 || config.embed == 0 {
            return Err(ModelError::BadConfig(format!("{config:?}")));
        }
        let grammar = Grammar::new(dsl);
        let vocab = Vocab::new(&grammar);
        let mut store = ParamStore::new();
        let encoder = IoEncoder::new(config.encoder.clone(), &dsl.charset, &mut store, rng)?;
        let io_dim = config.encoder.set_dim();
        let tokens = store.add_matrix("seq.embed", vocab.len(), config.embed, rng)?;
        let mut init_h = Vec::new();
        let mut init_c = Vec::new();
        let mut cells = Vec::new();
        for l in 0..config.layers {
            init_h.push(Linear::new(&mut store, &format!("seq.h0.{l}"), io_dim, config.hidden, rng)?);
            init_c.push(Linear::new(&mut store, &format!("seq.c0.{l}"), io_dim, config.hidden, rng)?);
            let input = if l == 0 { config.embed } else { config.hidden };
            cells.push(LstmCell::new(&mut store, &format!("seq.lstm.{l}"), input, config.hidden, rng)?);
        }
        let out = Linear::new(&mut store, "seq.out", config.hidden, vocab.len(), rng)?;
        Ok(Io2Seq {
            config,
            grammar,
            vocab,
            encoder,
            params: store,
            tokens,
            init_h,
            init_c,
            cells,
            out,
        })
    }

    pub fn encode_examples(&self, tape: &mut Tape, examples: &[Example]) -> Result<Var, ModelError> {
        Ok(self.encoder.encode_io_set(tape, &self.params, examples)?)
    }

    pub fn encode_task(&self, examples: &[Example]) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let io = self.encode_examples(&mut tape, examples)?;
        Ok(tape.value(io).clone())
    }

    fn initial_state(&self, tape: &mut Tape, io: Var) -> Result<State, ModelError> {
        let expected = self.config.encoder.set_dim();
        let got = tape.value(io).len();
        if got != expected {
            return Err(ModelError::DimensionMismatch { expected, got });
        }
        let mut state = Vec::with_capacity(self.cells.len());
        for (lh, lc) in self.init_h.iter().zip(&self.init_c) {
            let h = lh.apply(tape, &self.params, io)?;
            let c = lc.apply(tape, &self.params, io)?;
            state.push((tape.tanh(h), tape.tanh(c)));
        }
        Ok(state)
    }

    /// Feeds token `prev` and returns next-token log-probabilities.
    fn step(&self, tape: &mut Tape, state: &mut State, prev: usize) -> Result<Var, ModelError> {
        let table = tape.param(&self.params, self.tokens);
        let mut x = tape.embedding(table, prev)?;
        for (cell, st) in self.cells.iter().zip(state.iter_mut()) {
            *st = cell.step(tape, &self.params, x, *st)?;
            x = st.0;
        }
        let logits = self.out.apply(tape, &self.params, x)?;
        Ok(tape.log_softmax(logits)?)
    }

    /// Teacher-forced negative log-likelihood of `target` followed by
    /// end-of-sequence. Returns the summed loss and the number of tokens.
    pub fn sequence_loss(&self, tape: &mut Tape, io: Var, target: &[LinearToken]) -> Result<(Var, usize), ModelError> {
        let mut state = self.initial_state(tape, io)?;
        let mut prev = self.vocab.eos();
        let mut picks = Vec::with_capacity(target.len() + 1);
        let ids = target.iter().map(|t| self.vocab.id(*t)).chain([self.vocab.eos()]);
        for id in ids {
            let lp = self.step(tape, &mut state, prev)?;
            picks.push(tape.gather(lp, vec![Some(id)])?);
            prev = id;
        }
        let n = picks.len();
        let all = tape.concat(&picks, 0)?;
        let s = tape.sum(all, None)?;
        Ok((tape.scale(s, -1.0), n))
    }

    pub fn generate(&self, io: &Tensor, mode: GenMode, max_tokens: usize, rng: &mut impl Rng) -> Result<Decoded, ModelError> {
        let mut tape = Tape::new();
        let io = tape.constant(io.clone());
        let mut state = self.initial_state(&mut tape, io)?;
        let mut prev = self.vocab.eos();
        let mut out = Vec::new();
        let mut log_prob = 0.0;
        loop {
            if out.len() >= max_tokens {
                return Ok(Decoded::Incomplete { log_prob });
            }
            let lp = self.step(&mut tape, &mut state, prev)?;
            let lp = tape.value(lp).data();
            let i = match mode {
                GenMode::Greedy => argmax(lp),
                GenMode::Sample => sample_index(lp, rng),
            };
            log_prob += lp[i];
            if i == self.vocab.eos() {
                break;
            }
            out.push(self.vocab.token(i).expect("index within vocab"));
            prev = i;
        }
        Ok(match delinearize(&out, &self.grammar) {
            Ok(program) => Decoded::Program { program, log_prob },
            Err(invalid) => Decoded::Invalid { invalid, log_prob },
        })
    }

    pub fn output_layer(&self) -> &Linear {
        &self.out
    }

    pub fn meta(&self) -> Value {
        json!({
            "model": "io2seq",
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

    pub fn load(path: &Path, expect: Option<&Grammar>) -> Result<(Io2Seq, Value), ModelError> {
        let ck = load_checkpoint(path)?;
        let (dsl, config): (DslConfig, Io2SeqConfig) = parse_meta(&ck.meta, "io2seq", expect)?;
        let mut model = Io2Seq::new(config, &dsl, &mut crate::rng::seeded(0))?;
        model.params.load_values(&ck.params)?;
        Ok((model, ck.meta["extra"].clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::rng;

    #[test]
    fn constant_program_linearization() {
        let g = Grammar::new(&DslConfig::default());
        let p = parse_program(r#"Concat(ConstStr("@"))"#).unwrap();
        let toks = linearize(&p, &g).unwrap();
        assert_eq!(
            Rendered(&g, &toks).to_string(),
            r#"(_S (_e (_f (_ConstStr "@")_ConstStr)_f)_e)_S"#
        );
        assert_eq!(delinearize(&toks, &g).unwrap(), p);
    }

    #[test]
    fn malformed_sequences_are_invalid() {
        let g = Grammar::new(&DslConfig::default());
        let p = parse_program(r#"Concat(SubStr(ConstPos(0), ConstPos(-1)), ConstStr("@"))"#).unwrap();
        let toks = linearize(&p, &g).unwrap();
        assert_eq!(delinearize(&toks, &g).unwrap(), p);
        for cut in 0..toks.len() {
            assert!(delinearize(&toks[..cut], &g).is_err());
        }
        let mut swapped = toks.clone();
        let n = swapped.len();
        swapped.swap(n - 4, n - 3);
        assert!(delinearize(&swapped, &g).is_err());
        let mut extra = toks.clone();
        extra.push(LinearToken::Open(Tag::Root));
        assert!(delinearize(&extra, &g).is_err());
        assert!(delinearize(&[], &g).is_err());
    }

    #[test]
    fn generation_statuses() {
        let dsl = DslConfig {
            constants: vec!["a".into()],
            max_len: 5,
            ..DslConfig::default()
        };
        let config = Io2SeqConfig {
            hidden: 4,
            embed: 3,
            layers: 2,
            max_tokens: 20,
            encoder: EncoderConfig {
                max_len: 5,
                hidden: 2,
                embed: 2,
                variant: EncoderVariant::LstmSumCc,
                n_pairs: 1,
                depth: 1,
            },
        };
        let model = Io2Seq::new(config, &dsl, &mut rng::seeded(1)).unwrap();
        let io = model.encode_task(&[Example { input: "ab".into(), output: "b".into() }]).unwrap();
        let d = model.generate(&io, GenMode::Greedy, 1, &mut rng::seeded(0)).unwrap();
        assert!(matches!(d, Decoded::Incomplete { .. } | Decoded::Invalid { .. }));
        for s in 0..20 {
            model.generate(&io, GenMode::Sample, 20, &mut rng::seeded(s)).unwrap();
        }
    }
}
