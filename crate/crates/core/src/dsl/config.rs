use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Position, Program, Substring};
use super::token::RegexToken;

/// Bounds and constant universe that finitize the DSL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DslConfig {
    /// Characters allowed in input and output strings.
    pub charset: String,
    /// Constant strings usable by `ConstStr` and `Tok`.
    pub constants: Vec<String>,
    /// Maximum number of `Concat` arguments.
    pub max_parts: usize,
    /// Bound on `|k|` for `ConstPos(k)`.
    pub max_const_pos: i32,
    /// Bound on `|k|` for `Match(_, k, _)`.
    pub max_occurrence: i32,
    /// Maximum string length (encoder padding length `T`).
    pub max_len: usize,
}

pub fn printable_ascii() -> String {
    (0x20u8..0x7f).map(char::from).collect()
}

/// Every printable ASCII character plus a few multi-character constants.
pub fn default_constants() -> Vec<String> {
    let mut out: Vec<String> = printable_ascii().chars().map(String::from).collect();
    for extra in [", ", ". ", "0x", "]", "@", "-", "("] {
        if !out.iter().any(|c| c == extra) {
            out.push(extra.to_string());
        }
    }
    out
}

impl Default for DslConfig {
    fn default() -> Self {
        DslConfig {
            charset: printable_ascii(),
            constants: default_constants(),
            max_parts: 6,
            max_const_pos: 5,
            max_occurrence: 3,
            max_len: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("constant {0:?} is not in the constant universe")]
    UnknownConstant(String),
    #[error("ConstPos({0}) exceeds the configured bound")]
    ConstPosOutOfBounds(i32),
    #[error("match index {0} outside the configured bound")]
    OccurrenceOutOfBounds(i32),
    #[error("{0} Concat parts exceed the configured maximum")]
    TooManyParts(usize),
    #[error("string {0:?} has characters outside the charset")]
    BadChar(String),
    #[error("string of length {len} exceeds the maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl DslConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.max_parts == 0 || self.max_occurrence <= 0 || self.max_const_pos < 0 {
            return Err(ConfigError::Invalid("bounds must be positive".into()));
        }
        if self.constants.is_empty() || self.constants.iter().any(String::is_empty) {
            return Err(ConfigError::Invalid("constants must be non-empty strings".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.constants {
            if !seen.insert(c) {
                return Err(ConfigError::Invalid(format!("duplicate constant {c:?}")));
            }
        }
        if self.charset.is_empty() || !self.charset.is_ascii() {
            return Err(ConfigError::Invalid("charset must be non-empty ASCII".into()));
        }
        Ok(())
    }

    /// Checks that a string is usable as a task input or output.
    pub fn check_string(&self, s: &str) -> Result<(), ConfigError> {
        if !s.chars().all(|c| self.charset.contains(c)) {
            return Err(ConfigError::BadChar(s.to_string()));
        }
        if s.len() > self.max_len {
            return Err(ConfigError::TooLong {
                len: s.len(),
                max: self.max_len,
            });
        }
        Ok(())
    }

    /// Checks that every constant and integer in `prog` is inside the
    /// configured finite inventory.
    pub fn check_program(&self, prog: &Program) -> Result<(), ConfigError> {
        if prog.parts().len() > self.max_parts {
            return Err(ConfigError::TooManyParts(prog.parts().len()));
        }
        for part in prog.parts() {
            match part {
                Substring::ConstStr(s) => self.check_constant(s)?,
                Substring::SubStr(l, r) => {
                    self.check_position(l)?;
                    self.check_position(r)?;
                }
            }
        }
        Ok(())
    }

    fn check_constant(&self, s: &str) -> Result<(), ConfigError> {
        if self.constants.iter().any(|c| c == s) {
            Ok(())
        } else {
            Err(ConfigError::UnknownConstant(s.to_string()))
        }
    }

    fn check_position(&self, p: &Position) -> Result<(), ConfigError> {
        match p {
            Position::ConstPos(k) => {
                if k.abs() > self.max_const_pos {
                    return Err(ConfigError::ConstPosOutOfBounds(*k));
                }
            }
            Position::Match { token, k, .. } => {
                if *k == 0 || k.abs() > self.max_occurrence {
                    return Err(ConfigError::OccurrenceOutOfBounds(*k));
                }
                if let RegexToken::Const(s) = token {
                    self.check_constant(s)?;
                }
            }
        }
        Ok(())
    }
}
