//! The DSL as an explicit context-free grammar with a finite rule inventory.
//!
//! Variadic `Concat` is the pair of list rules `e -> f` and `e -> f e`.
//! Constants and integers are terminal symbols introduced by one rule each,
//! so every program has exactly one derivation tree and every rule has a
//! fixed arity.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ast::Dir;
use super::config::DslConfig;
use super::syntax::write_quoted;
use super::token::TokenKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SymbolId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RuleId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Nonterminal {
    /// `e`: the Concat argument list.
    Expr,
    /// `f`: one substring expression.
    Sub,
    /// Constant string under `ConstStr`.
    ConstStr,
    /// `p`: position logic.
    Pos,
    /// Integer argument of `ConstPos`.
    Offset,
    /// `r`: regex token.
    Regex,
    /// Match index of a token position.
    Occurrence,
    Dir,
}

impl Nonterminal {
    pub const ALL: [Nonterminal; 8] = [
        Nonterminal::Expr,
        Nonterminal::Sub,
        Nonterminal::ConstStr,
        Nonterminal::Pos,
        Nonterminal::Offset,
        Nonterminal::Regex,
        Nonterminal::Occurrence,
        Nonterminal::Dir,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Nonterminal::Expr => "e",
            Nonterminal::Sub => "f",
            Nonterminal::ConstStr => "ConstStr",
            Nonterminal::Pos => "p",
            Nonterminal::Offset => "k",
            Nonterminal::Regex => "r",
            Nonterminal::Occurrence => "occ",
            Nonterminal::Dir => "Dir",
        }
    }

    pub fn from_name(name: &str) -> Option<Nonterminal> {
        Nonterminal::ALL.iter().copied().find(|n| n.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Terminal {
    Str(String),
    Int(i32),
    Token(TokenKind),
    Dir(Dir),
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::Str(s) => write_quoted(f, s),
            Terminal::Int(k) => write!(f, "{k}"),
            Terminal::Token(kind) => f.write_str(kind.name()),
            Terminal::Dir(d) => f.write_str(d.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Symbol {
    Nonterminal(Nonterminal),
    Terminal(Terminal),
}

impl Symbol {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Symbol::Terminal(_))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Nonterminal(n) => f.write_str(n.name()),
            Symbol::Terminal(t) => write!(f, "{t}"),
        }
    }
}

/// What a rule builds, used to convert derivation trees back into programs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Production {
    /// `e -> f`
    ConcatLast,
    /// `e -> f e`
    ConcatCons,
    /// `f -> ConstStr`
    ConstStr,
    /// `f -> p p`
    SubStr,
    /// `ConstStr -> "s"`
    Literal(String),
    /// `p -> k`
    ConstPos,
    /// `p -> r occ Dir`
    Match,
    /// `k -> n`
    Offset(i32),
    /// `r -> T`
    Class(TokenKind),
    /// `r -> "s"`
    TokLiteral(String),
    /// `occ -> n`
    Occurrence(i32),
    /// `Dir -> Start | End`
    Direction(Dir),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rule {
    pub lhs: SymbolId,
    pub rhs: Vec<SymbolId>,
    pub production: Production,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    config: DslConfig,
    symbols: Vec<Symbol>,
    symbol_index: HashMap<Symbol, SymbolId>,
    rules: Vec<Rule>,
    rules_by_lhs: Vec<Vec<RuleId>>,
    min_size: Vec<usize>,
    start: SymbolId,
}

#[derive(Serialize)]
struct RuleDump<'a> {
    id: usize,
    lhs: String,
    rhs: Vec<String>,
    production: &'a Production,
}

#[derive(Serialize)]
struct GrammarDump<'a> {
    start: String,
    nonterminals: Vec<String>,
    terminals: Vec<String>,
    rules: Vec<RuleDump<'a>>,
}

impl Grammar {
    pub fn new(config: &DslConfig) -> Grammar {
        let mut g = Grammar {
            config: config.clone(),
            symbols: Vec::new(),
            symbol_index: HashMap::new(),
            rules: Vec::new(),
            rules_by_lhs: Vec::new(),
            min_size: Vec::new(),
            start: SymbolId(0),
        };
        for nt in Nonterminal::ALL {
            g.intern(Symbol::Nonterminal(nt));
        }
        let nt = |n: Nonterminal| SymbolId(Nonterminal::ALL.iter().position(|x| *x == n).unwrap());
        use Nonterminal as N;
        g.start = nt(N::Expr);

        g.add_rule(N::Expr, vec![nt(N::Sub)], Production::ConcatLast);
        g.add_rule(N::Expr, vec![nt(N::Sub), nt(N::Expr)], Production::ConcatCons);
        g.add_rule(N::Sub, vec![nt(N::ConstStr)], Production::ConstStr);
        g.add_rule(N::Sub, vec![nt(N::Pos), nt(N::Pos)], Production::SubStr);
        for c in &config.constants {
            let t = g.intern(Symbol::Terminal(Terminal::Str(c.clone())));
            g.add_rule(N::ConstStr, vec![t], Production::Literal(c.clone()));
        }
        g.add_rule(N::Pos, vec![nt(N::Offset)], Production::ConstPos);
        g.add_rule(
            N::Pos,
            vec![nt(N::Regex), nt(N::Occurrence), nt(N::Dir)],
            Production::Match,
        );
        for k in -config.max_const_pos..=config.max_const_pos {
            let t = g.intern(Symbol::Terminal(Terminal::Int(k)));
            g.add_rule(N::Offset, vec![t], Production::Offset(k));
        }
        for kind in TokenKind::ALL {
            let t = g.intern(Symbol::Terminal(Terminal::Token(kind)));
            g.add_rule(N::Regex, vec![t], Production::Class(kind));
        }
        for c in &config.constants {
            let t = g.intern(Symbol::Terminal(Terminal::Str(c.clone())));
            g.add_rule(N::Regex, vec![t], Production::TokLiteral(c.clone()));
        }
        for k in (-config.max_occurrence..=config.max_occurrence).filter(|k| *k != 0) {
            let t = g.intern(Symbol::Terminal(Terminal::Int(k)));
            g.add_rule(N::Occurrence, vec![t], Production::Occurrence(k));
        }
        for d in [Dir::Start, Dir::End] {
            let t = g.intern(Symbol::Terminal(Terminal::Dir(d)));
            g.add_rule(N::Dir, vec![t], Production::Direction(d));
        }
        g.compute_min_sizes();
        g
    }

    fn intern(&mut self, s: Symbol) -> SymbolId {
        if let Some(id) = self.symbol_index.get(&s) {
            return *id;
        }
        let id = SymbolId(self.symbols.len());
        self.symbol_index.insert(s.clone(), id);
        self.symbols.push(s);
        self.rules_by_lhs.push(Vec::new());
        id
    }

    fn add_rule(&mut self, lhs: Nonterminal, rhs: Vec<SymbolId>, production: Production) {
        let lhs = self.symbol_index[&Symbol::Nonterminal(lhs)];
        let id = RuleId(self.rules.len());
        self.rules.push(Rule {
            lhs,
            rhs,
            production,
        });
        self.rules_by_lhs[lhs.0].push(id);
    }

    fn compute_min_sizes(&mut self) {
        let mut min = vec![usize::MAX; self.symbols.len()];
        for (i, s) in self.symbols.iter().enumerate() {
            if s.is_terminal() {
                min[i] = 0;
            }
        }
        loop {
            let mut changed = false;
            for rule in &self.rules {
                let mut total = 1usize;
                for c in &rule.rhs {
                    total = total.saturating_add(min[c.0]);
                }
                if total < min[rule.lhs.0] {
                    min[rule.lhs.0] = total;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.min_size = min;
    }

    pub fn config(&self) -> &DslConfig {
        &self.config
    }

    pub fn start(&self) -> SymbolId {
        self.start
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.0]
    }

    pub fn is_terminal(&self, id: SymbolId) -> bool {
        self.symbols[id.0].is_terminal()
    }

    pub fn symbol_id(&self, s: &Symbol) -> Option<SymbolId> {
        self.symbol_index.get(s).copied()
    }

    pub fn nonterminal(&self, n: Nonterminal) -> SymbolId {
        self.symbol_index[&Symbol::Nonterminal(n)]
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &Rule {
        &self.rules[id.0]
    }

    /// Rules with `sym` on the left, in declaration order.
    pub fn rules_for(&self, sym: SymbolId) -> &[RuleId] {
        &self.rules_by_lhs[sym.0]
    }

    /// Smallest number of rule applications that completes `sym`.
    pub fn min_size(&self, sym: SymbolId) -> usize {
        self.min_size[sym.0]
    }

    pub fn rule_min_size(&self, rule: RuleId) -> usize {
        let r = &self.rules[rule.0];
        1 + r.rhs.iter().map(|c| self.min_size[c.0]).sum::<usize>()
    }

    pub fn rule_name(&self, rule: RuleId) -> String {
        let r = &self.rules[rule.0];
        let rhs: Vec<String> = r.rhs.iter().map(|s| self.symbols[s.0].to_string()).collect();
        format!("{} -> {}", self.symbols[r.lhs.0], rhs.join(" "))
    }

    /// Finds the unique rule with the given sides.
    pub fn find_rule(&self, lhs: SymbolId, rhs: &[SymbolId]) -> Option<RuleId> {
        self.rules_for(lhs)
            .iter()
            .copied()
            .find(|r| self.rules[r.0].rhs == rhs)
    }

    pub fn rule_for_production(&self, lhs: Nonterminal, production: &Production) -> Option<RuleId> {
        self.rules_for(self.nonterminal(lhs))
            .iter()
            .copied()
            .find(|r| &self.rules[r.0].production == production)
    }

    pub fn to_json(&self) -> String {
        let dump = GrammarDump {
            start: self.symbols[self.start.0].to_string(),
            nonterminals: self
                .symbols
                .iter()
                .filter(|s| !s.is_terminal())
                .map(ToString::to_string)
                .collect(),
            terminals: self
                .symbols
                .iter()
                .filter(|s| s.is_terminal())
                .map(ToString::to_string)
                .collect(),
            rules: self
                .rules
                .iter()
                .enumerate()
                .map(|(i, r)| RuleDump {
                    id: i,
                    lhs: self.symbols[r.lhs.0].to_string(),
                    rhs: r.rhs.iter().map(|s| self.symbols[s.0].to_string()).collect(),
                    production: &r.production,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("grammar dump serializes")
    }

    /// SHA-256 of the JSON rule dump, used to tie checkpoints to a grammar.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
