//! Derivation trees with possibly unexpanded leaves (partial program trees).

use thiserror::Error;

use super::ast::{Position, Program, Substring};
use super::config::ConfigError;
use super::grammar::{Grammar, Nonterminal, Production, RuleId, SymbolId};
use super::token::RegexToken;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub symbol: SymbolId,
    /// Rule applied at this node; `None` for leaves.
    pub rule: Option<RuleId>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    terminal: bool,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.rule.is_none()
    }

    /// A leaf whose symbol is a nonterminal and can still be expanded.
    pub fn is_open(&self) -> bool {
        self.rule.is_none() && !self.terminal
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("rule {rule} does not apply to node {node}")]
    InvalidExpansion { node: usize, rule: usize },
    #[error("tree still has unexpanded leaves")]
    Incomplete,
    #[error("malformed derivation at node {0}")]
    Malformed(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// A derivation tree over the grammar. Nodes live in an arena; expanding a
/// leaf never moves existing nodes, so `NodeId`s stay valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppt {
    nodes: Vec<Node>,
}

impl Ppt {
    /// A single leaf carrying the start symbol.
    pub fn new(grammar: &Grammar) -> Ppt {
        Ppt::with_root(grammar, grammar.start())
    }

    pub fn with_root(grammar: &Grammar, symbol: SymbolId) -> Ppt {
        Ppt {
            nodes: vec![Node {
                symbol,
                rule: None,
                children: Vec::new(),
                parent: None,
                terminal: grammar.is_terminal(symbol),
            }],
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of rule applications (inner nodes).
    pub fn size(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.nodes.iter().all(|n| !n.is_open())
    }

    /// All leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id.0];
            if n.is_leaf() {
                out.push(id);
            } else {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// Unexpanded nonterminal leaves in left-to-right order.
    pub fn open_leaves(&self) -> Vec<NodeId> {
        self.leaves()
            .into_iter()
            .filter(|id| self.nodes[id.0].is_open())
            .collect()
    }

    /// Inner nodes in post-order (children before parents).
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root(), false)];
        while let Some((id, visited)) = stack.pop() {
            let n = &self.nodes[id.0];
            if visited {
                out.push(id);
            } else {
                stack.push((id, true));
                for c in n.children.iter().rev() {
                    stack.push((*c, false));
                }
            }
        }
        out
    }

    /// Lower bound on the size of any completion of this tree.
    pub fn min_completion_size(&self, grammar: &Grammar) -> usize {
        self.size()
            + self
                .nodes
                .iter()
                .filter(|n| n.is_open())
                .map(|n| grammar.min_size(n.symbol))
                .sum::<usize>()
    }

    /// Replaces the open leaf `leaf` by an inner node applying `rule`.
    pub fn expand(&mut self, grammar: &Grammar, leaf: NodeId, rule: RuleId) -> Result<(), TreeError> {
        let invalid = TreeError::InvalidExpansion {
            node: leaf.0,
            rule: rule.0,
        };
        let Some(node) = self.nodes.get(leaf.0) else {
            return Err(invalid);
        };
        let Some(r) = grammar.rules().get(rule.0) else {
            return Err(invalid);
        };
        if !node.is_open() || r.lhs != node.symbol {
            return Err(invalid);
        }
        let first = self.nodes.len();
        for &sym in &r.rhs {
            self.nodes.push(Node {
                symbol: sym,
                rule: None,
                children: Vec::new(),
                parent: Some(leaf),
                terminal: grammar.is_terminal(sym),
            });
        }
        let n = &mut self.nodes[leaf.0];
        n.rule = Some(rule);
        n.children = (first..first + r.rhs.len()).map(NodeId).collect();
        Ok(())
    }

    /// Checks every inner node against its rule and every leaf's terminal flag.
    pub fn is_well_formed(&self, grammar: &Grammar) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| {
            if n.terminal != grammar.is_terminal(n.symbol) {
                return false;
            }
            if n.children.iter().any(|c| self.nodes[c.0].parent != Some(NodeId(i))) {
                return false;
            }
            match n.rule {
                None => n.children.is_empty(),
                Some(rule) => {
                    let r = grammar.rule(rule);
                    r.lhs == n.symbol
                        && r.rhs.len() == n.children.len()
                        && r.rhs
                            .iter()
                            .zip(&n.children)
                            .all(|(s, c)| self.nodes[c.0].symbol == *s)
                }
            }
        })
    }

    /// Pre-order rule sequence with a marker for open leaves; equal keys
    /// mean identical derivations.
    pub fn canonical_key(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id.0];
            match n.rule {
                Some(r) => {
                    out.push(r.0 as u32);
                    stack.extend(n.children.iter().rev());
                }
                None if n.terminal => {}
                None => out.push(u32::MAX - n.symbol.0 as u32),
            }
        }
        out
    }

    /// Builds the unique derivation tree of a program.
    pub fn from_program(grammar: &Grammar, prog: &Program) -> Result<Ppt, TreeError> {
        grammar.config().check_program(prog)?;
        let mut t = Ppt::new(grammar);
        let mut list = t.root();
        let parts = prog.parts();
        for (i, part) in parts.iter().enumerate() {
            let prod = if i + 1 == parts.len() {
                Production::ConcatLast
            } else {
                Production::ConcatCons
            };
            let rule = rule(grammar, Nonterminal::Expr, &prod)?;
            t.expand(grammar, list, rule)?;
            let children = t.nodes[list.0].children.clone();
            t.build_substring(grammar, children[0], part)?;
            if children.len() == 2 {
                list = children[1];
            }
        }
        Ok(t)
    }

    fn build_substring(&mut self, g: &Grammar, at: NodeId, part: &Substring) -> Result<(), TreeError> {
        match part {
            Substring::ConstStr(s) => {
                self.expand(g, at, rule(g, Nonterminal::Sub, &Production::ConstStr)?)?;
                let c = self.nodes[at.0].children[0];
                self.expand(g, c, rule(g, Nonterminal::ConstStr, &Production::Literal(s.clone()))?)
            }
            Substring::SubStr(l, r) => {
                self.expand(g, at, rule(g, Nonterminal::Sub, &Production::SubStr)?)?;
                let cs = self.nodes[at.0].children.clone();
                self.build_position(g, cs[0], l)?;
                self.build_position(g, cs[1], r)
            }
        }
    }

    fn build_position(&mut self, g: &Grammar, at: NodeId, p: &Position) -> Result<(), TreeError> {
        match p {
            Position::ConstPos(k) => {
                self.expand(g, at, rule(g, Nonterminal::Pos, &Production::ConstPos)?)?;
                let c = self.nodes[at.0].children[0];
                self.expand(g, c, rule(g, Nonterminal::Offset, &Production::Offset(*k))?)
            }
            Position::Match { token, k, dir } => {
                self.expand(g, at, rule(g, Nonterminal::Pos, &Production::Match)?)?;
                let cs = self.nodes[at.0].children.clone();
                let tok = match token {
                    RegexToken::Class(kind) => Production::Class(*kind),
                    RegexToken::Const(s) => Production::TokLiteral(s.clone()),
                };
                self.expand(g, cs[0], rule(g, Nonterminal::Regex, &tok)?)?;
                self.expand(g, cs[1], rule(g, Nonterminal::Occurrence, &Production::Occurrence(*k))?)?;
                self.expand(g, cs[2], rule(g, Nonterminal::Dir, &Production::Direction(*dir))?)
            }
        }
    }

    /// Reads a complete tree back as a program.
    pub fn to_program(&self, grammar: &Grammar) -> Result<Program, TreeError> {
        if !self.is_complete() {
            return Err(TreeError::Incomplete);
        }
        let mut parts = Vec::new();
        let mut list = self.root();
        loop {
            let n = &self.nodes[list.0];
            let rule = n.rule.ok_or(TreeError::Malformed(list.0))?;
            match grammar.rule(rule).production {
                Production::ConcatLast => {
                    parts.push(self.read_substring(grammar, n.children[0])?);
                    break;
                }
                Production::ConcatCons => {
                    parts.push(self.read_substring(grammar, n.children[0])?);
                    list = n.children[1];
                }
                _ => return Err(TreeError::Malformed(list.0)),
            }
        }
        Program::new(parts).map_err(|_| TreeError::Malformed(0))
    }

    fn production<'g>(&self, g: &'g Grammar, id: NodeId) -> Result<&'g Production, TreeError> {
        let rule = self.nodes[id.0].rule.ok_or(TreeError::Malformed(id.0))?;
        Ok(&g.rule(rule).production)
    }

    fn read_substring(&self, g: &Grammar, id: NodeId) -> Result<Substring, TreeError> {
        let cs = &self.nodes[id.0].children;
        match self.production(g, id)? {
            Production::ConstStr => match self.production(g, cs[0])? {
                Production::Literal(s) => Ok(Substring::ConstStr(s.clone())),
                _ => Err(TreeError::Malformed(cs[0].0)),
            },
            Production::SubStr => Ok(Substring::SubStr(
                self.read_position(g, cs[0])?,
                self.read_position(g, cs[1])?,
            )),
            _ => Err(TreeError::Malformed(id.0)),
        }
    }

    fn read_position(&self, g: &Grammar, id: NodeId) -> Result<Position, TreeError> {
        let cs = &self.nodes[id.0].children;
        let bad = |n: NodeId| TreeError::Malformed(n.0);
        match self.production(g, id)? {
            Production::ConstPos => match self.production(g, cs[0])? {
                Production::Offset(k) => Ok(Position::ConstPos(*k)),
                _ => Err(bad(cs[0])),
            },
            Production::Match => {
                let token = match self.production(g, cs[0])? {
                    Production::Class(kind) => RegexToken::Class(*kind),
                    Production::TokLiteral(s) => RegexToken::Const(s.clone()),
                    _ => return Err(bad(cs[0])),
                };
                let k = match self.production(g, cs[1])? {
                    Production::Occurrence(k) => *k,
                    _ => return Err(bad(cs[1])),
                };
                let dir = match self.production(g, cs[2])? {
                    Production::Direction(d) => *d,
                    _ => return Err(bad(cs[2])),
                };
                Ok(Position::Match { token, k, dir })
            }
            _ => Err(bad(id)),
        }
    }
}

fn rule(g: &Grammar, lhs: Nonterminal, prod: &Production) -> Result<RuleId, TreeError> {
    g.rule_for_production(lhs, prod).ok_or_else(|| {
        TreeError::Config(ConfigError::Invalid(format!("no {} rule for {prod:?}", lhs.name())))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::config::DslConfig;
    use crate::dsl::syntax::parse_program;

    #[test]
    fn smallest_program_has_three_rule_nodes() {
        let g = Grammar::new(&DslConfig::default());
        let p = parse_program("Concat(ConstStr(\"@\"))").unwrap();
        let t = Ppt::from_program(&g, &p).unwrap();
        assert_eq!(t.size(), 3);
        assert_eq!(t.size(), p.size());
        assert!(t.is_complete());
        assert!(t.is_well_formed(&g));
        assert_eq!(t.to_program(&g).unwrap(), p);
    }

    #[test]
    fn tree_size_matches_structural_size() {
        let g = Grammar::new(&DslConfig::default());
        for text in [
            "Concat(SubStr(Match(Tok(\" \"), -1, End), ConstPos(-1)), ConstStr(\", \"), SubStr(ConstPos(0), ConstPos(1)), ConstStr(\".\"))",
            "Concat(SubStr(ConstPos(0), Match(Digits, -1, End)), ConstStr(\"]\"))",
            "Concat(ConstStr(\"0x\"), SubStr(ConstPos(0), ConstPos(2)))",
        ] {
            let p = parse_program(text).unwrap();
            let t = Ppt::from_program(&g, &p).unwrap();
            assert_eq!(t.size(), p.size(), "{text}");
            assert_eq!(t.to_program(&g).unwrap(), p);
        }
    }

    #[test]
    fn out_of_universe_constant_is_rejected() {
        let g = Grammar::new(&DslConfig::default());
        let p = parse_program("Concat(ConstStr(\"abc\"))").unwrap();
        assert!(Ppt::from_program(&g, &p).is_err());
    }

    #[test]
    fn expansion_checks_lhs() {
        let g = Grammar::new(&DslConfig::default());
        let mut t = Ppt::new(&g);
        let f_rule = g.rules_for(g.nonterminal(Nonterminal::Sub))[0];
        assert!(t.expand(&g, t.root(), f_rule).is_err());
        let e_rule = g.rules_for(g.start())[1];
        t.expand(&g, t.root(), e_rule).unwrap();
        assert!(t.expand(&g, t.root(), e_rule).is_err());
        assert_eq!(t.open_leaves().len(), 2);
        assert_eq!(t.min_completion_size(&g), 1 + 2 + 3);
    }
}
