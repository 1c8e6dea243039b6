//! Canonical surface syntax: `Concat(ConstStr("a"), SubStr(ConstPos(0), Match(Digits, -1, End)))`.

use std::fmt::{self, Write};

use thiserror::Error;

use super::ast::{Dir, Position, Program, Substring};
use super::token::{RegexToken, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: expected {expected}")]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: String,
}

pub fn serialize_program(prog: &Program) -> String {
    prog.to_string()
}

pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let prog = p.program()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("end of input"));
    }
    Ok(prog)
}

pub(crate) fn write_quoted(out: &mut impl Write, s: &str) -> fmt::Result {
    out.write_char('"')?;
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.write_char('\\')?;
        }
        out.write_char(c)?;
    }
    out.write_char('"')
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Concat(")?;
        for (i, part) in self.parts().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{part}")?;
        }
        f.write_char(')')
    }
}

impl fmt::Display for Substring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Substring::ConstStr(s) => {
                f.write_str("ConstStr(")?;
                write_quoted(f, s)?;
                f.write_char(')')
            }
            Substring::SubStr(l, r) => write!(f, "SubStr({l}, {r})"),
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::ConstPos(k) => write!(f, "ConstPos({k})"),
            Position::Match { token, k, dir } => {
                f.write_str("Match(")?;
                write!(f, "{token}")?;
                write!(f, ", {k}, {})", dir.name())
            }
        }
    }
}

impl fmt::Display for RegexToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegexToken::Class(kind) => f.write_str(kind.name()),
            RegexToken::Const(s) => {
                f.write_str("Tok(")?;
                write_quoted(f, s)?;
                f.write_char(')')
            }
        }
    }
}

impl serde::Serialize for Program {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for Program {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_program(&text).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, expected: &str) -> SyntaxError {
        SyntaxError {
            offset: self.pos,
            expected: expected.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), SyntaxError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("'{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        let start = self.pos;
        match self.ident() {
            Ok(id) if id == kw => Ok(()),
            _ => {
                self.pos = start;
                self.skip_ws();
                Err(self.error(kw))
            }
        }
    }

    fn string(&mut self) -> Result<String, SyntaxError> {
        self.expect(b'"')?;
        let mut out = Vec::new();
        loop {
            match self.src.get(self.pos) {
                None => return Err(self.error("closing '\"'")),
                Some(b'"') => {
                    self.pos += 1;
                    break;
                }
                Some(b'\\') => {
                    match self.src.get(self.pos + 1) {
                        Some(&c @ (b'"' | b'\\')) => out.push(c),
                        _ => {
                            self.pos += 1;
                            return Err(self.error("escaped '\"' or '\\'"));
                        }
                    }
                    self.pos += 2;
                }
                Some(&c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
        String::from_utf8(out).map_err(|_| self.error("UTF-8 string"))
    }

    fn int(&mut self) -> Result<i32, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if digits == self.pos {
            self.pos = start;
            return Err(self.error("integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| {
                self.pos = start;
                self.error("integer in range")
            })
    }

    fn program(&mut self) -> Result<Program, SyntaxError> {
        self.keyword("Concat")?;
        self.expect(b'(')?;
        let mut parts = vec![self.substring()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            parts.push(self.substring()?);
        }
        self.expect(b')')?;
        Ok(Program::new(parts).expect("at least one part parsed"))
    }

    fn substring(&mut self) -> Result<Substring, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let Ok(id) = self.ident() else {
            return Err(self.error("ConstStr or SubStr"));
        };
        match id.as_str() {
            "ConstStr" => {
                self.expect(b'(')?;
                let s = self.string()?;
                if s.is_empty() {
                    return Err(self.error("non-empty constant"));
                }
                self.expect(b')')?;
                Ok(Substring::ConstStr(s))
            }
            "SubStr" => {
                self.expect(b'(')?;
                let l = self.position()?;
                self.expect(b',')?;
                let r = self.position()?;
                self.expect(b')')?;
                Ok(Substring::SubStr(l, r))
            }
            _ => {
                self.pos = start;
                Err(self.error("ConstStr or SubStr"))
            }
        }
    }

    fn position(&mut self) -> Result<Position, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let Ok(id) = self.ident() else {
            return Err(self.error("ConstPos or Match"));
        };
        match id.as_str() {
            "ConstPos" => {
                self.expect(b'(')?;
                let k = self.int()?;
                self.expect(b')')?;
                Ok(Position::ConstPos(k))
            }
            "Match" => {
                self.expect(b'(')?;
                let token = self.token()?;
                self.expect(b',')?;
                self.skip_ws();
                let k_at = self.pos;
                let k = self.int()?;
                if k == 0 {
                    self.pos = k_at;
                    return Err(self.error("nonzero match index"));
                }
                self.expect(b',')?;
                self.skip_ws();
                let dir_at = self.pos;
                let dir = match self.ident().as_deref() {
                    Ok("Start") => Dir::Start,
                    Ok("End") => Dir::End,
                    _ => {
                        self.pos = dir_at;
                        return Err(self.error("Start or End"));
                    }
                };
                self.expect(b')')?;
                Ok(Position::Match { token, k, dir })
            }
            _ => {
                self.pos = start;
                Err(self.error("ConstPos or Match"))
            }
        }
    }

    fn token(&mut self) -> Result<RegexToken, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let Ok(id) = self.ident() else {
            return Err(self.error("token"));
        };
        if id == "Tok" {
            self.expect(b'(')?;
            let s = self.string()?;
            if s.is_empty() {
                return Err(self.error("non-empty token literal"));
            }
            self.expect(b')')?;
            return Ok(RegexToken::Const(s));
        }
        match TokenKind::from_name(&id) {
            Some(kind) => Ok(RegexToken::Class(kind)),
            None => {
                self.pos = start;
                Err(self.error("token class or Tok(\"...\")"))
            }
        }
    }
}
