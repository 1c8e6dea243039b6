//! Program syntax trees and their interpreter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::token::{match_token, RegexToken};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dir {
    Start,
    End,
}

impl Dir {
    pub fn name(self) -> &'static str {
        match self {
            Dir::Start => "Start",
            Dir::End => "End",
        }
    }
}

/// Position logic: evaluates to an index into the input string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Position {
    /// `k` from the start when `k >= 0`, otherwise `len + k + 1`, so that
    /// `ConstPos(-1)` is the end of the string.
    ConstPos(i32),
    /// Start or end of the `k`-th match of `token` (1-indexed; negative
    /// counts from the last match).
    Match { token: RegexToken, k: i32, dir: Dir },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Substring {
    ConstStr(String),
    SubStr(Position, Position),
}

/// `Concat(f_1, ..., f_n)` with `n >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Program {
    parts: Vec<Substring>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("position {index} outside [0, {len}]")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("requested match {k} but only {found} found")]
    MatchNotFound { k: i32, found: usize },
    #[error("empty substring range: start {start} > end {end}")]
    EmptyRange { start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("Concat needs at least one part")]
pub struct EmptyProgram;

impl Program {
    pub fn new(parts: Vec<Substring>) -> Result<Self, EmptyProgram> {
        if parts.is_empty() {
            return Err(EmptyProgram);
        }
        Ok(Program { parts })
    }

    pub fn parts(&self) -> &[Substring] {
        &self.parts
    }

    pub fn eval(&self, v: &str) -> Result<String, EvalError> {
        let mut out = String::new();
        for part in &self.parts {
            out.push_str(&part.eval(v)?);
        }
        Ok(out)
    }

    /// Number of production-rule applications in the canonical derivation:
    /// one list rule per part plus the size of each part.
    pub fn size(&self) -> usize {
        self.parts.len() + self.parts.iter().map(Substring::size).sum::<usize>()
    }
}

impl Substring {
    pub fn eval(&self, v: &str) -> Result<String, EvalError> {
        match self {
            Substring::ConstStr(s) => Ok(s.clone()),
            Substring::SubStr(pl, pr) => {
                let start = pl.eval(v)?;
                let end = pr.eval(v)?;
                if start > end {
                    return Err(EvalError::EmptyRange { start, end });
                }
                Ok(v[start..end].to_string())
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Substring::ConstStr(_) => 2,
            Substring::SubStr(pl, pr) => 1 + pl.size() + pr.size(),
        }
    }
}

impl Position {
    pub fn eval(&self, v: &str) -> Result<usize, EvalError> {
        let len = v.len();
        match self {
            Position::ConstPos(k) => {
                let index = if *k >= 0 {
                    *k as i64
                } else {
                    len as i64 + *k as i64 + 1
                };
                if index < 0 || index > len as i64 {
                    return Err(EvalError::IndexOutOfRange { index, len });
                }
                Ok(index as usize)
            }
            Position::Match { token, k, dir } => {
                let spans = match_token(token, v);
                let m = spans.len();
                let want = k.unsigned_abs() as usize;
                if *k == 0 || want > m {
                    return Err(EvalError::MatchNotFound { k: *k, found: m });
                }
                let idx = if *k > 0 { want - 1 } else { m - want };
                let (s, e) = spans[idx];
                Ok(match dir {
                    Dir::Start => s,
                    Dir::End => e,
                })
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Position::ConstPos(_) => 2,
            Position::Match { .. } => 4,
        }
    }
}

/// Convenience evaluation of a single position.
pub fn eval_position(p: &Position, v: &str) -> Result<usize, EvalError> {
    p.eval(v)
}

pub fn eval_program(prog: &Program, v: &str) -> Result<String, EvalError> {
    prog.eval(v)
}

pub fn program_size(prog: &Program) -> usize {
    prog.size()
}
