//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nsps_core::dsl::{Dir, DslConfig, Position, Program, RegexToken, Substring, TokenKind};
use rand::Rng;
use regex::Regex;

/// Regex for a token, written directly from the class descriptions.
fn token_regex(tok: &RegexToken) -> Regex {
    let pat = match tok {
        RegexToken::Const(s) => regex::escape(s),
        RegexToken::Class(k) => match k {
            TokenKind::ProperCase => "[A-Z][a-z]+".to_string(),
            TokenKind::Caps => "[A-Z]+".to_string(),
            TokenKind::Lowercase => "[a-z]+".to_string(),
            TokenKind::Digits => "[0-9]+".to_string(),
            TokenKind::Alphabets => "[A-Za-z]+".to_string(),
            TokenKind::Alphanumeric => "[A-Za-z0-9]+".to_string(),
            TokenKind::StartOfString => "^".to_string(),
            TokenKind::EndOfString => "$".to_string(),
        },
    };
    Regex::new(&pat).unwrap()
}

fn ref_position(p: &Position, v: &str) -> Option<usize> {
    let n = v.len() as i64;
    match p {
        Position::ConstPos(k) => {
            let k = *k as i64;
            let i = if k >= 0 { k } else { n + k + 1 };
            (0..=n).contains(&i).then_some(i as usize)
        }
        Position::Match { token, k, dir } => {
            let ms: Vec<(usize, usize)> = token_regex(token).find_iter(v).map(|m| (m.start(), m.end())).collect();
            let pick = if *k > 0 {
                ms.get(*k as usize - 1)
            } else if *k < 0 && ms.len() >= k.unsigned_abs() as usize {
                ms.get(ms.len() - k.unsigned_abs() as usize)
            } else {
                None
            }?;
            Some(if *dir == Dir::Start { pick.0 } else { pick.1 })
        }
    }
}

/// Naive interpreter; `None` wherever evaluation is undefined.
pub fn ref_eval(prog: &Program, v: &str) -> Option<String> {
    let mut out = String::new();
    for part in prog.parts() {
        match part {
            Substring::ConstStr(s) => out += s,
            Substring::SubStr(l, r) => {
                let (a, b) = (ref_position(l, v)?, ref_position(r, v)?);
                if a > b {
                    return None;
                }
                out += &v[a..b];
            }
        }
    }
    Some(out)
}

fn all_tokens(cfg: &DslConfig) -> Vec<RegexToken> {
    let classes = [
        TokenKind::ProperCase,
        TokenKind::Caps,
        TokenKind::Lowercase,
        TokenKind::Digits,
        TokenKind::Alphabets,
        TokenKind::Alphanumeric,
        TokenKind::StartOfString,
        TokenKind::EndOfString,
    ];
    let mut out: Vec<RegexToken> = classes.into_iter().map(RegexToken::Class).collect();
    out.extend(cfg.constants.iter().cloned().map(RegexToken::Const));
    out
}

/// Every position with its rule-node count: `p -> k -> n` is 2 and
/// `p -> r occ Dir` with three leaf rules is 4.
pub fn all_positions(cfg: &DslConfig) -> Vec<(Position, usize)> {
    let mut out = Vec::new();
    for k in -cfg.max_const_pos..=cfg.max_const_pos {
        out.push((Position::ConstPos(k), 2));
    }
    for token in all_tokens(cfg) {
        for k in -cfg.max_occurrence..=cfg.max_occurrence {
            if k == 0 {
                continue;
            }
            for dir in [Dir::Start, Dir::End] {
                out.push((Position::Match { token: token.clone(), k, dir }, 4));
            }
        }
    }
    out
}

/// Substrings keyed by their size (excluding the enclosing list node).
pub fn substrings_by_size(cfg: &DslConfig, max: usize) -> BTreeMap<usize, Vec<Substring>> {
    let mut out: BTreeMap<usize, Vec<Substring>> = BTreeMap::new();
    if max >= 2 {
        for c in &cfg.constants {
            out.entry(2).or_default().push(Substring::ConstStr(c.clone()));
        }
    }
    let pos = all_positions(cfg);
    for (l, sl) in &pos {
        for (r, sr) in &pos {
            let s = 1 + sl + sr;
            if s <= max {
                out.entry(s).or_default().push(Substring::SubStr(l.clone(), r.clone()));
            }
        }
    }
    out
}

/// All programs with at most `max_size` rule nodes, in non-decreasing size.
pub fn enumerate_programs(cfg: &DslConfig, max_size: usize) -> Vec<(Program, usize)> {
    let subs = substrings_by_size(cfg, max_size);
    let mut out = Vec::new();
    let mut stack = Vec::new();
    fn go(
        subs: &BTreeMap<usize, Vec<Substring>>,
        parts_left: usize,
        budget: usize,
        used: usize,
        stack: &mut Vec<Substring>,
        out: &mut Vec<(Program, usize)>,
    ) {
        if !stack.is_empty() {
            out.push((Program::new(stack.clone()).unwrap(), used));
        }
        if parts_left == 0 {
            return;
        }
        for (size, list) in subs {
            let cost = size + 1;
            if cost > budget {
                break;
            }
            for s in list {
                stack.push(s.clone());
                go(subs, parts_left - 1, budget - cost, used + cost, stack, out);
                stack.pop();
            }
        }
    }
    go(&subs, cfg.max_parts, max_size, 0, &mut stack, &mut out);
    out.sort_by_key(|(_, s)| *s);
    out
}

/// Program counts per exact size.
pub fn counts_by_size(cfg: &DslConfig, max_size: usize) -> BTreeMap<usize, u64> {
    let mut out = BTreeMap::new();
    for (_, s) in enumerate_programs(cfg, max_size) {
        *out.entry(s).or_insert(0) += 1;
    }
    out
}

/// Smallest size of any program consistent with all `(input, output)` pairs.
pub fn brute_force_min_size(cfg: &DslConfig, pairs: &[(String, String)], max_size: usize) -> Option<usize> {
    enumerate_programs(cfg, max_size)
        .into_iter()
        .find(|(p, _)| pairs.iter().all(|(i, o)| ref_eval(p, i).as_deref() == Some(o.as_str())))
        .map(|(_, s)| s)
}

/// Pearson chi-square p-value of `observed` against `expected` counts.
pub fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// A few constants, tight bounds; enumerable to size 9.
pub fn small_dsl() -> DslConfig {
    DslConfig {
        constants: vec!["a".into(), "-".into(), " ".into()],
        max_const_pos: 2,
        max_occurrence: 2,
        max_len: 16,
        ..DslConfig::default()
    }
}

/// Strings mixing letters of both cases, digits, spaces and punctuation.
pub fn random_input(rng: &mut impl Rng, max_len: usize) -> String {
    const POOL: &[&str] = &["Ab", "cd", "XY", "z", "42", "7", " ", "-", ".", ",", "@", "Qrs", "0x", "(", "]"];
    let mut s = String::new();
    let target = rng.gen_range(0..=max_len);
    while s.len() < target {
        s += POOL[rng.gen_range(0..POOL.len())];
    }
    s.truncate(target);
    s
}

/// A random program built directly on the syntax tree, at most `max_size` nodes.
pub fn random_program(cfg: &DslConfig, rng: &mut impl Rng, max_size: usize) -> Program {
    let pos = all_positions(cfg);
    loop {
        let mut parts = Vec::new();
        let mut size = 0;
        let n = rng.gen_range(1..=cfg.max_parts);
        for _ in 0..n {
            let part = if rng.gen_bool(0.3) {
                Substring::ConstStr(cfg.constants[rng.gen_range(0..cfg.constants.len())].clone())
            } else {
                let l = &pos[rng.gen_range(0..pos.len())];
                let r = &pos[rng.gen_range(0..pos.len())];
                Substring::SubStr(l.0.clone(), r.0.clone())
            };
            let cost = 1 + part.size();
            if size + cost <= max_size {
                size += cost;
                parts.push(part);
            }
        }
        if !parts.is_empty() {
            return Program::new(parts).unwrap();
        }
    }
}
