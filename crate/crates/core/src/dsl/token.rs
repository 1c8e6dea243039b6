//! Regular-expression tokens and their match semantics.

use std::fmt;

use serde::{Deserialize, Serialize};

/// The eight fixed token classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    /// One uppercase letter followed by one or more lowercase letters.
    ProperCase,
    /// Maximal run of uppercase letters.
    Caps,
    /// Maximal run of lowercase letters.
    Lowercase,
    /// Maximal run of decimal digits.
    Digits,
    /// Maximal run of ASCII letters.
    Alphabets,
    /// Maximal run of ASCII letters or digits.
    Alphanumeric,
    StartOfString,
    EndOfString,
}

impl TokenKind {
    pub const ALL: [TokenKind; 8] = [
        TokenKind::ProperCase,
        TokenKind::Caps,
        TokenKind::Lowercase,
        TokenKind::Digits,
        TokenKind::Alphabets,
        TokenKind::Alphanumeric,
        TokenKind::StartOfString,
        TokenKind::EndOfString,
    ];

    /// Surface-syntax name.
    pub fn name(self) -> &'static str {
        match self {
            TokenKind::ProperCase => "ProperCase",
            TokenKind::Caps => "CAPS",
            TokenKind::Lowercase => "Lowercase",
            TokenKind::Digits => "Digits",
            TokenKind::Alphabets => "Alphabets",
            TokenKind::Alphanumeric => "Alphanumeric",
            TokenKind::StartOfString => "StartOfString",
            TokenKind::EndOfString => "EndOfString",
        }
    }

    pub fn from_name(name: &str) -> Option<TokenKind> {
        TokenKind::ALL.iter().copied().find(|k| k.name() == name)
    }

    /// Character predicate for the run-based classes. `None` for anchors
    /// and `ProperCase`, which are not simple runs.
    pub(crate) fn run_class(self) -> Option<fn(u8) -> bool> {
        match self {
            TokenKind::Caps => Some(|c| c.is_ascii_uppercase()),
            TokenKind::Lowercase => Some(|c| c.is_ascii_lowercase()),
            TokenKind::Digits => Some(|c| c.is_ascii_digit()),
            TokenKind::Alphabets => Some(|c| c.is_ascii_alphabetic()),
            TokenKind::Alphanumeric => Some(|c| c.is_ascii_alphanumeric()),
            _ => None,
        }
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A token used by position logic: either a fixed class or a constant string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegexToken {
    Class(TokenKind),
    Const(String),
}

/// A half-open match span `[start, end)` in byte offsets.
pub type Span = (usize, usize);

/// All maximal, non-overlapping matches of `token` in `v`, left to right.
pub fn match_token(token: &RegexToken, v: &str) -> Vec<Span> {
    let bytes = v.as_bytes();
    match token {
        RegexToken::Const(lit) => {
            let lit = lit.as_bytes();
            let mut spans = Vec::new();
            if lit.is_empty() {
                return spans;
            }
            let mut i = 0;
            while i + lit.len() <= bytes.len() {
                if &bytes[i..i + lit.len()] == lit {
                    spans.push((i, i + lit.len()));
                    i += lit.len();
                } else {
                    i += 1;
                }
            }
            spans
        }
        RegexToken::Class(TokenKind::StartOfString) => vec![(0, 0)],
        RegexToken::Class(TokenKind::EndOfString) => vec![(bytes.len(), bytes.len())],
        RegexToken::Class(TokenKind::ProperCase) => {
            let mut spans = Vec::new();
            let mut i = 0;
            while i < bytes.len() {
                if bytes[i].is_ascii_uppercase()
                    && i + 1 < bytes.len()
                    && bytes[i + 1].is_ascii_lowercase()
                {
                    let mut j = i + 2;
                    while j < bytes.len() && bytes[j].is_ascii_lowercase() {
                        j += 1;
                    }
                    spans.push((i, j));
                    i = j;
                } else {
                    i += 1;
                }
            }
            spans
        }
        RegexToken::Class(kind) => {
            let pred = kind.run_class().expect("run-based token class");
            let mut spans = Vec::new();
            let mut i = 0;
            while i < bytes.len() {
                if pred(bytes[i]) {
                    let mut j = i + 1;
                    while j < bytes.len() && pred(bytes[j]) {
                        j += 1;
                    }
                    spans.push((i, j));
                    i = j;
                } else {
                    i += 1;
                }
            }
            spans
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_in_medical_code() {
        assert_eq!(
            match_token(&RegexToken::Class(TokenKind::Digits), "[CPT-00350"),
            vec![(5, 10)]
        );
    }

    #[test]
    fn anchors() {
        assert_eq!(
            match_token(&RegexToken::Class(TokenKind::StartOfString), "abc"),
            vec![(0, 0)]
        );
        assert_eq!(
            match_token(&RegexToken::Class(TokenKind::EndOfString), "abc"),
            vec![(3, 3)]
        );
        assert_eq!(
            match_token(&RegexToken::Class(TokenKind::EndOfString), ""),
            vec![(0, 0)]
        );
    }

    #[test]
    fn caps_runs() {
        assert_eq!(
            match_token(&RegexToken::Class(TokenKind::Caps), "aBCdEF"),
            vec![(1, 3), (4, 6)]
        );
    }

    #[test]
    fn proper_case_needs_a_lowercase_tail() {
        let t = RegexToken::Class(TokenKind::ProperCase);
        assert_eq!(match_token(&t, "ABc De F"), vec![(1, 3), (4, 6)]);
        assert!(match_token(&t, "A").is_empty());
    }

    #[test]
    fn constant_occurrences_do_not_overlap() {
        let t = RegexToken::Const("aa".into());
        assert_eq!(match_token(&t, "aaaaa"), vec![(0, 2), (2, 4)]);
        let t = RegexToken::Const(" ".into());
        assert_eq!(
            match_token(&t, "William Henry Charles"),
            vec![(7, 8), (13, 14)]
        );
    }

    #[test]
    fn no_match_is_empty() {
        assert!(match_token(&RegexToken::Class(TokenKind::Digits), "abc").is_empty());
    }
}
