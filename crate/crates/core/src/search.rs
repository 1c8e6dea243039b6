//! Top-down enumerative synthesis over partial derivations.
//!
//! The worklist is ordered by `(min_completion_size, insertion order)`, so
//! complete programs are popped in non-decreasing size and the first
//! consistent one is size-minimal.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::datagen::Task;
use crate::dsl::{Grammar, NodeId, Ppt, Production, Program, RuleId, SymbolId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchLimits {
    pub max_size: usize,
    pub max_expansions: usize,
    pub time_budget: Duration,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_size: 13,
            max_expansions: 2_000_000,
            time_budget: Duration::from_secs(30),
        }
    }
}

/// Ordering hooks for the search. Defaults are leftmost-first leaves and
/// rules by minimal completion size.
pub trait Ranker {
    fn rank_nonterminals(&self, partial: &Ppt) -> Vec<NodeId>;
    fn rank_rules(&self, grammar: &Grammar, symbol: SymbolId) -> Vec<RuleId>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultRanker;

impl Ranker for DefaultRanker {
    fn rank_nonterminals(&self, partial: &Ppt) -> Vec<NodeId> {
        rank_nonterminals(partial)
    }

    fn rank_rules(&self, grammar: &Grammar, symbol: SymbolId) -> Vec<RuleId> {
        rank_rules(symbol, grammar)
    }
}

/// Open leaves, leftmost first.
pub fn rank_nonterminals(partial: &Ppt) -> Vec<NodeId> {
    partial.open_leaves()
}

/// Rules for `symbol`, smallest minimal completion first; ties keep
/// declaration order.
pub fn rank_rules(symbol: SymbolId, grammar: &Grammar) -> Vec<RuleId> {
    let mut rules = grammar.rules_for(symbol).to_vec();
    rules.sort_by_key(|r| grammar.rule_min_size(*r));
    rules
}

/// Everything the search has already seen: canonical keys of enqueued
/// derivations and output signatures of popped complete programs.
#[derive(Debug, Default)]
pub struct SeenStore {
    keys: HashSet<Vec<u32>>,
    signatures: HashSet<Vec<Option<String>>>,
}

impl SeenStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, candidate: &Ppt, grammar: &Grammar, task: &Task) {
        self.keys.insert(candidate.canonical_key());
        if let Some(sig) = signature(candidate, grammar, task) {
            self.signatures.insert(sig);
        }
    }
}

fn signature(candidate: &Ppt, grammar: &Grammar, task: &Task) -> Option<Vec<Option<String>>> {
    let prog = candidate.to_program(grammar).ok()?;
    Some(task.inputs().map(|i| prog.eval(i).ok()).collect())
}

/// A derivation is subsumed when the identical derivation was already
/// enqueued or, for complete programs, another program with the same
/// outputs on every task input was seen.
pub fn subsumed(candidate: &Ppt, seen: &SeenStore, task: &Task, grammar: &Grammar) -> bool {
    if seen.keys.contains(&candidate.canonical_key()) {
        return true;
    }
    match signature(candidate, grammar, task) {
        Some(sig) => seen.signatures.contains(&sig),
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NotFoundReason {
    /// No consistent program exists within `max_size`.
    Exhausted,
    MaxExpansions,
    TimeBudget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(Program),
    NotFound(NotFoundReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub outcome: SearchOutcome,
    pub expansions: usize,
    pub millis: u128,
}

#[derive(Serialize)]
struct SearchReport<'a> {
    status: &'a str,
    program: Option<String>,
    reason: Option<NotFoundReason>,
    expansions: usize,
    millis: u128,
}

impl SearchResult {
    pub fn program(&self) -> Option<&Program> {
        match &self.outcome {
            SearchOutcome::Found(p) => Some(p),
            SearchOutcome::NotFound(_) => None,
        }
    }

    pub fn to_json(&self) -> String {
        let report = match &self.outcome {
            SearchOutcome::Found(p) => SearchReport {
                status: "found",
                program: Some(p.to_string()),
                reason: None,
                expansions: self.expansions,
                millis: self.millis,
            },
            SearchOutcome::NotFound(r) => SearchReport {
                status: "not_found",
                program: None,
                reason: Some(*r),
                expansions: self.expansions,
                millis: self.millis,
            },
        };
        serde_json::to_string(&report).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// Drop derivations whose finished leading `Concat` parts do not produce
    /// a prefix of every expected output. Sound for this DSL, so it never
    /// changes which program is returned.
    pub prefix_pruning: bool,
    /// Expand every open leaf of a popped derivation instead of only the
    /// top-ranked one.
    pub expand_all_nonterminals: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            prefix_pruning: true,
            expand_all_nonterminals: false,
        }
    }
}

pub fn enum_search(grammar: &Grammar, task: &Task, limits: SearchLimits) -> SearchResult {
    enum_search_with(grammar, task, limits, &DefaultRanker, SearchOptions::default())
}

pub fn enum_search_with(
    grammar: &Grammar,
    task: &Task,
    limits: SearchLimits,
    ranker: &dyn Ranker,
    options: SearchOptions,
) -> SearchResult {
    let started = Instant::now();
    let mut heap: BinaryHeap<Reverse<(usize, u64)>> = BinaryHeap::new();
    let mut items: std::collections::HashMap<u64, Ppt> = std::collections::HashMap::new();
    let mut seen = SeenStore::new();
    let mut seq = 0u64;
    let mut expansions = 0usize;

    let root = Ppt::new(grammar);
    seen.keys.insert(root.canonical_key());
    heap.push(Reverse((root.min_completion_size(grammar), seq)));
    items.insert(seq, root);
    seq += 1;

    let finish = |outcome, expansions| SearchResult {
        outcome,
        expansions,
        millis: started.elapsed().as_millis(),
    };

    while let Some(Reverse((_, id))) = heap.pop() {
        if started.elapsed() > limits.time_budget {
            return finish(SearchOutcome::NotFound(NotFoundReason::TimeBudget), expansions);
        }
        let partial = items.remove(&id).expect("heap entries have items");
        if partial.is_complete() {
            let prog = partial.to_program(grammar).expect("complete derivation");
            let sig: Vec<Option<String>> = task.inputs().map(|i| prog.eval(i).ok()).collect();
            if !seen.signatures.insert(sig) {
                continue;
            }
            if task.is_satisfied_by(&prog) {
                return finish(SearchOutcome::Found(prog), expansions);
            }
            continue;
        }
        if expansions >= limits.max_expansions {
            return finish(SearchOutcome::NotFound(NotFoundReason::MaxExpansions), expansions);
        }
        expansions += 1;
        let mut leaves = ranker.rank_nonterminals(&partial);
        if !options.expand_all_nonterminals {
            leaves.truncate(1);
        }
        for leaf in leaves {
            let symbol = partial.node(leaf).symbol;
            for rule in ranker.rank_rules(grammar, symbol) {
                let mut child = partial.clone();
                child
                    .expand(grammar, leaf, rule)
                    .expect("ranked rule applies to its symbol");
                let bound = child.min_completion_size(grammar);
                if bound > limits.max_size || too_many_parts(&child, grammar) {
                    continue;
                }
                if options.prefix_pruning && !prefix_feasible(&child, grammar, task) {
                    continue;
                }
                if !seen.keys.insert(child.canonical_key()) {
                    continue;
                }
                heap.push(Reverse((bound, seq)));
                items.insert(seq, child);
                seq += 1;
            }
        }
    }
    finish(SearchOutcome::NotFound(NotFoundReason::Exhausted), expansions)
}

fn too_many_parts(t: &Ppt, grammar: &Grammar) -> bool {
    let mut parts = 0;
    let mut at = t.root();
    loop {
        let n = t.node(at);
        let Some(rule) = n.rule else {
            // An open list leaf still needs at least one more part.
            parts += 1;
            break;
        };
        parts += 1;
        match grammar.rule(rule).production {
            Production::ConcatCons => at = n.children[1],
            _ => break,
        }
    }
    parts > grammar.config().max_parts
}

/// Leading complete `Concat` parts, read off the list spine.
fn complete_prefix(t: &Ppt, grammar: &Grammar) -> Vec<Program> {
    let mut out = Vec::new();
    let mut at = t.root();
    while let Some(rule) = t.node(at).rule {
        let n = t.node(at);
        let f = n.children[0];
        if !subtree_complete(t, f) {
            break;
        }
        let mut sub = Ppt::with_root(grammar, grammar.start());
        let last = grammar
            .rule_for_production(crate::dsl::Nonterminal::Expr, &Production::ConcatLast)
            .expect("grammar has e -> f");
        sub.expand(grammar, sub.root(), last).expect("start symbol is e");
        let slot = sub.node(sub.root()).children[0];
        copy_subtree(t, f, &mut sub, slot, grammar);
        out.push(sub.to_program(grammar).expect("copied subtree is complete"));
        match grammar.rule(rule).production {
            Production::ConcatCons => at = n.children[1],
            _ => break,
        }
    }
    out
}

fn subtree_complete(t: &Ppt, at: NodeId) -> bool {
    let n = t.node(at);
    if n.is_open() {
        return false;
    }
    n.children.iter().all(|c| subtree_complete(t, *c))
}

fn copy_subtree(src: &Ppt, from: NodeId, dst: &mut Ppt, to: NodeId, grammar: &Grammar) {
    if let Some(rule) = src.node(from).rule {
        dst.expand(grammar, to, rule).expect("same grammar");
        let pairs: Vec<(NodeId, NodeId)> = src
            .node(from)
            .children
            .iter()
            .copied()
            .zip(dst.node(to).children.clone())
            .collect();
        for (a, b) in pairs {
            copy_subtree(src, a, dst, b, grammar);
        }
    }
}

fn prefix_feasible(t: &Ppt, grammar: &Grammar, task: &Task) -> bool {
    let parts = complete_prefix(t, grammar);
    if parts.is_empty() {
        return true;
    }
    task.examples.iter().all(|ex| {
        let mut acc = String::new();
        for p in &parts {
            match p.eval(&ex.input) {
                Ok(s) => acc.push_str(&s),
                Err(_) => return false,
            }
        }
        ex.output.starts_with(&acc)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Example;
    use crate::dsl::{parse_program, DslConfig, Nonterminal};

    fn task(pairs: &[(&str, &str)]) -> Task {
        Task {
            program: None,
            examples: pairs
                .iter()
                .map(|(i, o)| Example {
                    input: i.to_string(),
                    output: o.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn identity_extraction() {
        let g = Grammar::new(&DslConfig::default());
        let t = task(&[("a", "a")]);
        let r = enum_search(&g, &t, SearchLimits::default());
        let p = r.program().expect("found");
        assert!(t.is_satisfied_by(p));
        assert_eq!(p.size(), 3);
    }

    #[test]
    fn hex_prefix_task() {
        let g = Grammar::new(&DslConfig::default());
        let t = task(&[("732606129", "0x73"), ("430257526", "0x43")]);
        let r = enum_search(&g, &t, SearchLimits::default());
        let p = r.program().expect("found");
        let reference =
            parse_program("Concat(ConstStr(\"0x\"), SubStr(ConstPos(0), ConstPos(2)))").unwrap();
        assert!(t.is_satisfied_by(p));
        assert_eq!(p.size(), reference.size());
        for ex in &t.examples {
            assert_eq!(p.eval(&ex.input), reference.eval(&ex.input));
        }
    }

    #[test]
    fn rules_ranked_by_minimal_completion() {
        let g = Grammar::new(&DslConfig::default());
        let f = g.nonterminal(Nonterminal::Sub);
        let ranked = rank_rules(f, &g);
        assert_eq!(ranked.len(), g.rules_for(f).len());
        assert_eq!(g.rule(ranked[0]).production, Production::ConstStr);
        assert_eq!(g.rule(ranked[1]).production, Production::SubStr);
        assert_eq!(ranked, rank_rules(f, &g));
    }

    #[test]
    fn leftmost_leaf_first() {
        let g = Grammar::new(&DslConfig::default());
        let mut t = Ppt::new(&g);
        assert_eq!(rank_nonterminals(&t), vec![t.root()]);
        let cons = g.rule_for_production(Nonterminal::Expr, &Production::ConcatCons).unwrap();
        t.expand(&g, t.root(), cons).unwrap();
        let leaves = rank_nonterminals(&t);
        assert_eq!(leaves, t.node(t.root()).children);
        assert_eq!(leaves, rank_nonterminals(&t));
    }

    #[test]
    fn subsumption() {
        let g = Grammar::new(&DslConfig::default());
        let t = task(&[("ab", "a")]);
        let mut seen = SeenStore::new();
        let fresh = Ppt::new(&g);
        assert!(!subsumed(&fresh, &seen, &t, &g));
        seen.record(&fresh, &g, &t);
        assert!(subsumed(&fresh.clone(), &seen, &t, &g));

        let a = parse_program("Concat(ConstStr(\"a\"))").unwrap();
        let b = parse_program("Concat(SubStr(ConstPos(0), ConstPos(1)))").unwrap();
        let ta = Ppt::from_program(&g, &a).unwrap();
        let tb = Ppt::from_program(&g, &b).unwrap();
        seen.record(&ta, &g, &t);
        assert!(subsumed(&tb, &seen, &t, &g));
    }

    #[test]
    fn expansion_limit_is_respected() {
        let g = Grammar::new(&DslConfig::default());
        let t = task(&[("abc", "zzzzzzzz")]);
        let limits = SearchLimits {
            max_size: 20,
            max_expansions: 500,
            time_budget: Duration::from_secs(10),
        };
        let r = enum_search(&g, &t, limits);
        assert!(r.expansions <= 500);
        assert_eq!(r.outcome, SearchOutcome::NotFound(NotFoundReason::MaxExpansions));
    }

    #[test]
    fn exhaustion_when_nothing_fits() {
        let g = Grammar::new(&DslConfig::default());
        let t = task(&[("abc", "qqq")]);
        let limits = SearchLimits {
            max_size: 6,
            ..SearchLimits::default()
        };
        let r = enum_search(&g, &t, limits);
        assert_eq!(r.outcome, SearchOutcome::NotFound(NotFoundReason::Exhausted));
        assert!(r.to_json().contains("\"not_found\""));
    }
}
