//! Input-output example encoders.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Example;
use crate::tensor::nn::BiLstm;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("string of length {len} exceeds max length {max}")]
    StringTooLong { len: usize, max: usize },
    #[error("character {0:?} is not in the charset")]
    UnknownChar(char),
    #[error("{got} example pairs exceed the configured {max}")]
    TooManyPairs { got: usize, max: usize },
    #[error("no example pairs")]
    NoPairs,
    #[error("bad encoder config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderVariant {
    Lstm,
    Cc,
    DiffusedCc,
    LstmSumCc,
    AugmentedDiffusedCc,
}

impl EncoderVariant {
    pub const ALL: [EncoderVariant; 5] = [
        EncoderVariant::Lstm,
        EncoderVariant::Cc,
        EncoderVariant::DiffusedCc,
        EncoderVariant::LstmSumCc,
        EncoderVariant::AugmentedDiffusedCc,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Padded string length `T`.
    pub max_len: usize,
    /// Top LSTM hidden size `H`.
    pub hidden: usize,
    /// Character embedding size `E`.
    pub embed: usize,
    pub variant: EncoderVariant,
    pub n_pairs: usize,
    /// Layers of the per-string bidirectional LSTM.
    pub depth: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            max_len: 32,
            hidden: 32,
            embed: 16,
            variant: EncoderVariant::AugmentedDiffusedCc,
            n_pairs: 5,
            depth: 2,
        }
    }
}

impl EncoderConfig {
    pub fn check(&self) -> Result<(), EncoderError> {
        if self.max_len < 2 || self.hidden == 0 || self.embed == 0 || self.n_pairs == 0 || self.depth == 0 {
            return Err(EncoderError::BadConfig(format!("{self:?}")));
        }
        Ok(())
    }

    /// Number of alignments between two feature blocks.
    pub fn alignments(&self) -> usize {
        2 * (self.max_len - 1)
    }

    /// Dimension of one pair's encoding.
    pub fn pair_dim(&self) -> usize {
        let (t, h) = (self.max_len, self.hidden);
        match self.variant {
            EncoderVariant::Lstm => 4 * h * t,
            EncoderVariant::Cc => 2 * (t - 1),
            EncoderVariant::DiffusedCc => 2 * (t - 1) * t,
            EncoderVariant::LstmSumCc => 2 * h * 2 * (t - 1),
            EncoderVariant::AugmentedDiffusedCc => 4 * h + t * (t - 1),
        }
    }

    pub fn set_dim(&self) -> usize {
        self.n_pairs * self.pair_dim()
    }

    /// Relative shift `i - j` of alignment `a`: `-(T-1) ..= T-2`.
    pub fn shift(&self, a: usize) -> isize {
        a as isize - (self.max_len as isize - 1)
    }
}

/// Embedded string: one row per padded position, plus the validity mask.
#[derive(Debug, Clone)]
pub struct Embedded {
    pub rows: Vec<Var>,
    pub mask: Vec<bool>,
}

impl Embedded {
    pub fn len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Top-layer states of the per-string LSTM: `2H` per real position.
/// Padding rows are implicit zeros.
#[derive(Debug, Clone)]
pub struct FeatureBlock {
    pub rows: Vec<Var>,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct IoEncoder {
    pub config: EncoderConfig,
    charset: HashMap<char, usize>,
    embedding: ParamId,
    input_lstm: BiLstm,
    output_lstm: BiLstm,
    sum_lstm: Option<BiLstm>,
    aug_lstms: Option<(BiLstm, BiLstm)>,
}

impl IoEncoder {
    /// Registers the encoder's parameters under `enc.` in `store`.
    pub fn new(
        config: EncoderConfig,
        charset: &str,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<IoEncoder, EncoderError> {
        config.check()?;
        let (e, h) = (config.embed, config.hidden);
        let index: HashMap<char, usize> = charset.chars().enumerate().map(|(i, c)| (c, i)).collect();
        let n_chars = index.len();
        let a = (6.0 / (n_chars + e) as f64).sqrt();
        let table = (0..n_chars * e).map(|_| rng.gen_range(-a..a)).collect();
        let embedding = store.add("enc.embed", Tensor::matrix(n_chars, e, table)?)?;
        let input_lstm = BiLstm::new(store, "enc.in", e, h, config.depth, rng)?;
        let output_lstm = BiLstm::new(store, "enc.out", e, h, config.depth, rng)?;
        let sum_lstm = match config.variant {
            EncoderVariant::LstmSumCc => Some(BiLstm::new(store, "enc.sum", 4 * h, h, 1, rng)?),
            _ => None,
        };
        let aug_lstms = match config.variant {
            EncoderVariant::AugmentedDiffusedCc => {
                let width = e + config.alignments();
                Some((
                    BiLstm::new(store, "enc.aug_in", width, h, 1, rng)?,
                    BiLstm::new(store, "enc.aug_out", width, h, 1, rng)?,
                ))
            }
            _ => None,
        };
        Ok(IoEncoder {
            config,
            charset: index,
            embedding,
            input_lstm,
            output_lstm,
            sum_lstm,
            aug_lstms,
        })
    }

    pub fn embed_string(&self, tape: &mut Tape, store: &ParamStore, s: &str) -> Result<Embedded, EncoderError> {
        let t = self.config.max_len;
        let chars: Vec<char> = s.chars().collect();
        if chars.len() > t {
            return Err(EncoderError::StringTooLong { len: chars.len(), max: t });
        }
        let table = tape.param(store, self.embedding);
        let mut rows = Vec::with_capacity(t);
        for c in &chars {
            let i = *self.charset.get(c).ok_or(EncoderError::UnknownChar(*c))?;
            rows.push(tape.embedding(table, i)?);
        }
        if chars.len() < t {
            let pad = tape.constant(Tensor::zeros(&[self.config.embed]));
            rows.resize(t, pad);
        }
        let mask = (0..t).map(|i| i < chars.len()).collect();
        Ok(Embedded { rows, mask })
    }

    fn block(&self, tape: &mut Tape, store: &ParamStore, lstm: &BiLstm, emb: &Embedded) -> Result<FeatureBlock, EncoderError> {
        let n = emb.len();
        let out = lstm.run(tape, store, &emb.rows[..n])?;
        Ok(FeatureBlock {
            rows: out.joined(tape)?,
            forward: out.forward,
            backward: out.backward,
        })
    }

    pub fn feature_blocks(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        ex: &Example,
    ) -> Result<(Embedded, Embedded, FeatureBlock, FeatureBlock), EncoderError> {
        let ei = self.embed_string(tape, store, &ex.input)?;
        let eo = self.embed_string(tape, store, &ex.output)?;
        let bi = self.block(tape, store, &self.input_lstm, &ei)?;
        let bo = self.block(tape, store, &self.output_lstm, &eo)?;
        Ok((ei, eo, bi, bo))
    }

    pub fn encode_pair(&self, tape: &mut Tape, store: &ParamStore, ex: &Example) -> Result<Var, EncoderError> {
        let (ei, eo, bi, bo) = self.feature_blocks(tape, store, ex)?;
        let c = &self.config;
        match c.variant {
            EncoderVariant::Lstm => {
                let a = flatten_block(tape, &bi, c.max_len, 2 * c.hidden)?;
                let b = flatten_block(tape, &bo, c.max_len, 2 * c.hidden)?;
                Ok(tape.concat(&[a, b], 0)?)
            }
            EncoderVariant::Cc => cc_encode(tape, c, &bi, &bo),
            EncoderVariant::DiffusedCc => diffused_cc(tape, c, &bi, &bo),
            EncoderVariant::LstmSumCc => {
                let lstm = self.sum_lstm.as_ref().expect("built for this variant");
                lstm_sum_cc(tape, store, c, lstm, &bi, &bo)
            }
            EncoderVariant::AugmentedDiffusedCc => {
                let (li, lo) = self.aug_lstms.as_ref().expect("built for this variant");
                augmented_diffused_cc(tape, store, c, (li, lo), (&ei, &eo), &bi, &bo)
            }
        }
    }

    /// Concatenated pair encodings. Short sets repeat their last pair.
    pub fn encode_io_set(&self, tape: &mut Tape, store: &ParamStore, examples: &[Example]) -> Result<Var, EncoderError> {
        let n = self.config.n_pairs;
        if examples.len() > n {
            return Err(EncoderError::TooManyPairs { got: examples.len(), max: n });
        }
        let last = examples.last().ok_or(EncoderError::NoPairs)?;
        let mut parts = Vec::with_capacity(n);
        for ex in examples {
            parts.push(self.encode_pair(tape, store, ex)?);
        }
        if examples.len() < n {
            let v = self.encode_pair(tape, store, last)?;
            parts.resize(n, v);
        }
        Ok(tape.concat(&parts, 0)?)
    }
}

fn flatten_block(tape: &mut Tape, b: &FeatureBlock, t: usize, width: usize) -> Result<Var, EncoderError> {
    let mut parts = b.rows.clone();
    if parts.len() < t {
        parts.push(tape.constant(Tensor::zeros(&[(t - parts.len()) * width])));
    }
    Ok(tape.concat(&parts, 0)?)
}

/// Row-stacks a block and returns `[len, 2H]`, or `None` when empty.
fn stack(tape: &mut Tape, b: &FeatureBlock) -> Result<Option<Var>, EncoderError> {
    if b.rows.is_empty() {
        return Ok(None);
    }
    let width = tape.shape(b.rows[0])[0];
    let flat = tape.concat(&b.rows, 0)?;
    Ok(Some(tape.reshape(flat, &[b.rows.len(), width])?))
}

/// Gram matrix `G[i][j] = <I_i, O_j>` flattened, with its dimensions.
fn gram(tape: &mut Tape, bi: &FeatureBlock, bo: &FeatureBlock) -> Result<Option<(Var, usize, usize)>, EncoderError> {
    let (Some(mi), Some(mo)) = (stack(tape, bi)?, stack(tape, bo)?) else {
        return Ok(None);
    };
    let mot = tape.transpose(mo)?;
    let g = tape.matmul(mi, mot)?;
    Ok(Some((g, bi.rows.len(), bo.rows.len())))
}

/// Flat Gram indices for output positions `j = 0..T` at shift `s`.
fn diagonal(c: &EncoderConfig, s: isize, li: usize, lo: usize) -> impl Iterator<Item = Option<usize>> {
    (0..c.max_len).map(move |j| {
        let i = j as isize + s;
        (i >= 0 && (i as usize) < li && j < lo).then(|| i as usize * lo + j)
    })
}

/// Per-overlap dot products, `T` per alignment, zero where either side is padding.
pub fn diffused_cc(tape: &mut Tape, c: &EncoderConfig, bi: &FeatureBlock, bo: &FeatureBlock) -> Result<Var, EncoderError> {
    let Some((g, li, lo)) = gram(tape, bi, bo)? else {
        return Ok(tape.constant(Tensor::zeros(&[c.alignments() * c.max_len])));
    };
    let idx: Vec<Option<usize>> = (0..c.alignments())
        .flat_map(|a| diagonal(c, c.shift(a), li, lo))
        .collect();
    Ok(tape.gather(g, idx)?)
}

/// One summed dot product per alignment.
pub fn cc_encode(tape: &mut Tape, c: &EncoderConfig, bi: &FeatureBlock, bo: &FeatureBlock) -> Result<Var, EncoderError> {
    let d = diffused_cc(tape, c, bi, bo)?;
    let m = tape.reshape(d, &[c.alignments(), c.max_len])?;
    Ok(tape.sum(m, Some(1))?)
}

/// Bidirectional LSTM over `[I_i; O_j]` for each alignment's overlap;
/// forward final plus backward final state per alignment.
pub fn lstm_sum_cc(
    tape: &mut Tape,
    store: &ParamStore,
    c: &EncoderConfig,
    lstm: &BiLstm,
    bi: &FeatureBlock,
    bo: &FeatureBlock,
) -> Result<Var, EncoderError> {
    let (li, lo) = (bi.rows.len(), bo.rows.len());
    let h = lstm.hidden;
    let mut parts = Vec::with_capacity(c.alignments());
    let mut zero = None;
    for a in 0..c.alignments() {
        let s = c.shift(a);
        let mut seq = Vec::new();
        for j in 0..lo {
            let i = j as isize + s;
            if i >= 0 && (i as usize) < li {
                seq.push(tape.concat(&[bi.rows[i as usize], bo.rows[j]], 0)?);
            }
        }
        if seq.is_empty() {
            let z = *zero.get_or_insert_with(|| tape.constant(Tensor::zeros(&[2 * h])));
            parts.push(z);
            continue;
        }
        let out = lstm.run(tape, store, &seq)?;
        let last = *out.forward.last().expect("non-empty");
        parts.push(tape.concat(&[last, out.backward[0]], 0)?);
    }
    Ok(tape.concat(&parts, 0)?)
}

/// LSTM summaries of each stream with its correlation rows attached, plus
/// the diffused entries of the non-negative shifts.
pub fn augmented_diffused_cc(
    tape: &mut Tape,
    store: &ParamStore,
    c: &EncoderConfig,
    (lstm_in, lstm_out): (&BiLstm, &BiLstm),
    (ei, eo): (&Embedded, &Embedded),
    bi: &FeatureBlock,
    bo: &FeatureBlock,
) -> Result<Var, EncoderError> {
    let t = c.max_len;
    let h = lstm_in.hidden;
    let na = c.alignments();
    let g = gram(tape, bi, bo)?;
    let (li, lo) = (bi.rows.len(), bo.rows.len());

    let mut summaries = Vec::with_capacity(2);
    for (stream, emb, lstm) in [(0, ei, lstm_in), (1, eo, lstm_out)] {
        let len = if stream == 0 { li } else { lo };
        if len == 0 {
            summaries.push(tape.constant(Tensor::zeros(&[2 * h])));
            continue;
        }
        let mut seq = Vec::with_capacity(len);
        for p in 0..len {
            let corr = match g {
                Some((g, _, _)) => {
                    let idx = (0..na)
                        .map(|a| {
                            let s = c.shift(a);
                            let (i, j) = if stream == 0 { (p as isize, p as isize - s) } else { (p as isize + s, p as isize) };
                            (i >= 0 && j >= 0 && (i as usize) < li && (j as usize) < lo)
                                .then(|| i as usize * lo + j as usize)
                        })
                        .collect();
                    tape.gather(g, idx)?
                }
                None => tape.constant(Tensor::zeros(&[na])),
            };
            seq.push(tape.concat(&[emb.rows[p], corr], 0)?);
        }
        let out = lstm.run(tape, store, &seq)?;
        let last = *out.forward.last().expect("non-empty");
        summaries.push(tape.concat(&[last, out.backward[0]], 0)?);
    }

    let tail = match g {
        Some((g, li, lo)) => {
            let idx: Vec<Option<usize>> = (0..t as isize - 1).flat_map(|s| diagonal(c, s, li, lo)).collect();
            tape.gather(g, idx)?
        }
        None => tape.constant(Tensor::zeros(&[t * (t - 1)])),
    };
    Ok(tape.concat(&[summaries[0], summaries[1], tail], 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::DslConfig;
    use crate::rng;

    fn cfg(variant: EncoderVariant, t: usize, h: usize) -> EncoderConfig {
        EncoderConfig {
            max_len: t,
            hidden: h,
            embed: 3,
            variant,
            n_pairs: 2,
            depth: 2,
        }
    }

    fn ex(i: &str, o: &str) -> Example {
        Example { input: i.into(), output: o.into() }
    }

    fn build(c: EncoderConfig) -> (IoEncoder, ParamStore) {
        let mut store = ParamStore::new();
        let charset = DslConfig::default().charset;
        let enc = IoEncoder::new(c, &charset, &mut store, &mut rng::seeded(1)).unwrap();
        (enc, store)
    }

    #[test]
    fn dimensions_match_formulas() {
        for (t, h) in [(8, 4), (5, 2), (3, 1)] {
            for v in EncoderVariant::ALL {
                let c = cfg(v, t, h);
                let (enc, store) = build(c.clone());
                let mut tape = Tape::new();
                let y = enc.encode_pair(&mut tape, &store, &ex("a c", "c")).unwrap();
                assert_eq!(tape.shape(y), &[c.pair_dim()], "{v:?} T={t} H={h}");
            }
        }
        assert_eq!(cfg(EncoderVariant::Lstm, 8, 4).pair_dim(), 128);
        assert_eq!(cfg(EncoderVariant::Cc, 8, 4).pair_dim(), 14);
        assert_eq!(cfg(EncoderVariant::DiffusedCc, 8, 4).pair_dim(), 112);
        assert_eq!(cfg(EncoderVariant::LstmSumCc, 8, 4).pair_dim(), 112);
        assert_eq!(cfg(EncoderVariant::AugmentedDiffusedCc, 8, 4).pair_dim(), 72);
    }

    #[test]
    fn embedding_errors_and_mask() {
        let (enc, store) = build(cfg(EncoderVariant::Cc, 4, 2));
        let mut tape = Tape::new();
        let e = enc.embed_string(&mut tape, &store, "").unwrap();
        assert!(e.mask.iter().all(|m| !m));
        let e = enc.embed_string(&mut tape, &store, "aba").unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(tape.value(e.rows[0]), tape.value(e.rows[2]));
        assert!(matches!(
            enc.embed_string(&mut tape, &store, "abcde"),
            Err(EncoderError::StringTooLong { len: 5, max: 4 })
        ));
        assert!(matches!(
            enc.embed_string(&mut tape, &store, "é"),
            Err(EncoderError::UnknownChar('é'))
        ));
    }

    #[test]
    fn set_pads_and_rejects_excess() {
        let (enc, store) = build(cfg(EncoderVariant::Cc, 6, 2));
        let mut tape = Tape::new();
        let one = enc.encode_pair(&mut tape, &store, &ex("ab", "b")).unwrap();
        let set = enc.encode_io_set(&mut tape, &store, &[ex("ab", "b")]).unwrap();
        let (a, s) = (tape.value(one).data().to_vec(), tape.value(set).data().to_vec());
        assert_eq!(s.len(), 2 * a.len());
        assert_eq!(&s[..a.len()], &a[..]);
        assert_eq!(&s[a.len()..], &a[..]);
        let three = [ex("a", "a"), ex("b", "b"), ex("c", "c")];
        assert!(matches!(
            enc.encode_io_set(&mut tape, &store, &three),
            Err(EncoderError::TooManyPairs { got: 3, max: 2 })
        ));
    }
}
