//! Rule-based input generation: plant enough token matches for every
//! position logic in the program, then validate by execution.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{DslConfig, Position, Program, RegexToken, Substring, TokenKind};

use super::DatagenError;

pub const RETRY_CAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    #[serde(rename = "in")]
    pub input: String,
    #[serde(rename = "out")]
    pub output: String,
}

/// A set of examples, optionally with the program that produced them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub program: Option<Program>,
    pub examples: Vec<Example>,
}

impl Task {
    pub fn inputs(&self) -> impl Iterator<Item = &str> {
        self.examples.iter().map(|e| e.input.as_str())
    }

    /// Does `prog` reproduce every example output?
    pub fn is_satisfied_by(&self, prog: &Program) -> bool {
        self.examples
            .iter()
            .all(|e| prog.eval(&e.input).as_deref() == Ok(e.output.as_str()))
    }
}

struct Requirements {
    matches: BTreeMap<RegexToken, usize>,
    min_len: usize,
}

fn requirements(prog: &Program) -> Requirements {
    let mut req = Requirements {
        matches: BTreeMap::new(),
        min_len: 0,
    };
    let mut visit = |p: &Position| match p {
        Position::ConstPos(k) => {
            let need = if *k >= 0 { *k } else { -*k - 1 };
            req.min_len = req.min_len.max(need as usize);
        }
        Position::Match { token, k, .. } => {
            if matches!(
                token,
                RegexToken::Class(TokenKind::StartOfString | TokenKind::EndOfString)
            ) {
                return;
            }
            let e = req.matches.entry(token.clone()).or_insert(0);
            *e = (*e).max(k.unsigned_abs() as usize);
        }
    };
    for part in prog.parts() {
        if let Substring::SubStr(l, r) = part {
            visit(l);
            visit(r);
        }
    }
    req
}

fn pick(rng: &mut impl Rng, class: &[u8]) -> char {
    class[rng.gen_range(0..class.len())] as char
}

const UPPER: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
const LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const DIGIT: &[u8] = b"0123456789";

/// One planted instance of a token.
fn chunk(rng: &mut impl Rng, token: &RegexToken) -> String {
    let run = |rng: &mut dyn rand::RngCore, class: &[&[u8]], lo: usize, hi: usize| -> String {
        let n = rng.gen_range(lo..=hi);
        (0..n)
            .map(|_| {
                let c = class[rng.gen_range(0..class.len())];
                c[rng.gen_range(0..c.len())] as char
            })
            .collect()
    };
    match token {
        RegexToken::Const(s) => s.clone(),
        RegexToken::Class(kind) => match kind {
            TokenKind::ProperCase => {
                let mut s = pick(rng, UPPER).to_string();
                s.push_str(&run(rng, &[LOWER], 1, 5));
                s
            }
            TokenKind::Caps => run(rng, &[UPPER], 1, 3),
            TokenKind::Lowercase => run(rng, &[LOWER], 1, 5),
            TokenKind::Digits => run(rng, &[DIGIT], 1, 4),
            TokenKind::Alphabets => run(rng, &[UPPER, LOWER], 1, 5),
            TokenKind::Alphanumeric => run(rng, &[UPPER, LOWER, DIGIT], 1, 5),
            TokenKind::StartOfString | TokenKind::EndOfString => String::new(),
        },
    }
}

/// Filler characters that do not extend planted matches: lowercase and space
/// unless a required class would absorb lowercase letters.
fn filler_class(req: &Requirements, config: &DslConfig) -> Vec<u8> {
    let absorbs_lower = req.matches.keys().any(|t| {
        matches!(
            t,
            RegexToken::Class(
                TokenKind::Lowercase
                    | TokenKind::Alphabets
                    | TokenKind::Alphanumeric
                    | TokenKind::ProperCase
            )
        )
    });
    let base: &[u8] = if absorbs_lower {
        b" -.,;:/_"
    } else {
        b"abcdefghijklmnopqrstuvwxyz "
    };
    let allowed: Vec<u8> = base
        .iter()
        .copied()
        .filter(|c| config.charset.as_bytes().contains(c))
        .collect();
    if allowed.is_empty() {
        config.charset.bytes().collect()
    } else {
        allowed
    }
}

fn filler(rng: &mut impl Rng, class: &[u8], lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| pick(rng, class)).collect()
}

fn noise_token(rng: &mut impl Rng) -> RegexToken {
    const NOISE: [TokenKind; 4] = [
        TokenKind::ProperCase,
        TokenKind::Caps,
        TokenKind::Digits,
        TokenKind::Lowercase,
    ];
    RegexToken::Class(NOISE[rng.gen_range(0..NOISE.len())])
}

fn attempt(
    rng: &mut impl Rng,
    req: &Requirements,
    fill: &[u8],
    config: &DslConfig,
    max_len: usize,
) -> String {
    let mut chunks: Vec<String> = Vec::new();
    for (token, &count) in &req.matches {
        let extra = rng.gen_range(0..=1);
        for _ in 0..count + extra {
            chunks.push(chunk(rng, token));
        }
    }
    for _ in 0..rng.gen_range(0..=2) {
        let t = noise_token(rng);
        chunks.push(chunk(rng, &t));
    }
    chunks.shuffle(rng);
    let mut s = filler(rng, fill, 0, 2);
    for (i, c) in chunks.iter().enumerate() {
        if i > 0 {
            s.push_str(&filler(rng, fill, 1, 2));
        }
        s.push_str(c);
    }
    s.push_str(&filler(rng, fill, 0, 2));
    while s.len() < req.min_len {
        s.push(pick(rng, fill));
    }
    s.retain(|c| config.charset.contains(c));
    s.truncate(max_len);
    s
}

/// Generates an input on which `prog` evaluates without error.
pub fn gen_input(
    prog: &Program,
    config: &DslConfig,
    rng: &mut impl Rng,
    max_len: usize,
) -> Result<String, DatagenError> {
    let req = requirements(prog);
    let fill = filler_class(&req, config);
    for _ in 0..RETRY_CAP {
        let s = attempt(rng, &req, &fill, config, max_len);
        if prog.eval(&s).is_ok() {
            return Ok(s);
        }
    }
    Err(DatagenError::GenerationFailed {
        program: prog.to_string(),
    })
}

/// `n` distinct inputs with their outputs; every string fits `config.max_len`.
pub fn gen_task(
    prog: &Program,
    n_examples: usize,
    config: &DslConfig,
    rng: &mut impl Rng,
) -> Result<Task, DatagenError> {
    assert!(n_examples >= 1, "a task needs at least one example");
    let mut examples: Vec<Example> = Vec::with_capacity(n_examples);
    let mut failures = 0;
    while examples.len() < n_examples {
        let input = gen_input(prog, config, rng, config.max_len)?;
        let output = prog.eval(&input).expect("gen_input validated the input");
        let fresh = !examples.iter().any(|e| e.input == input);
        if fresh && output.len() <= config.max_len {
            examples.push(Example { input, output });
        } else {
            failures += 1;
            if failures > RETRY_CAP * n_examples {
                return Err(DatagenError::GenerationFailed {
                    program: prog.to_string(),
                });
            }
        }
    }
    Ok(Task {
        program: Some(prog.clone()),
        examples,
    })
}
