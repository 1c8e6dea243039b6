//! Exact derivation counts and uniform sampling over complete programs.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;

use crate::dsl::{Grammar, NodeId, Ppt, Program, RuleId, SymbolId};

use super::DatagenError;

/// `counts[symbol][size]`: number of complete derivations of `symbol` with
/// exactly `size` rule nodes. The list symbol `e` is additionally indexed by
/// how many more `Concat` parts it may produce, which enforces the arity bound.
#[derive(Debug, Clone)]
pub struct DerivationCountTable {
    max_size: usize,
    max_parts: usize,
    list_symbol: SymbolId,
    counts: Vec<Vec<BigUint>>,
    list_counts: Vec<Vec<BigUint>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct State {
    symbol: SymbolId,
    budget: usize,
}

impl DerivationCountTable {
    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Complete derivations of `symbol` with exactly `size` rule nodes.
    pub fn count(&self, symbol: SymbolId, size: usize) -> BigUint {
        if size > self.max_size {
            return BigUint::zero();
        }
        if symbol == self.list_symbol {
            self.list_counts[self.max_parts][size].clone()
        } else {
            self.counts[symbol.0][size].clone()
        }
    }

    /// Programs with size in `1..=max_size`.
    pub fn total_programs(&self, max_size: usize) -> BigUint {
        (0..=max_size.min(self.max_size))
            .map(|s| &self.list_counts[self.max_parts][s])
            .sum()
    }

    fn state_count(&self, st: State, size: usize) -> &BigUint {
        if st.symbol == self.list_symbol {
            &self.list_counts[st.budget][size]
        } else {
            &self.counts[st.symbol.0][size]
        }
    }

    fn child_states(&self, grammar: &Grammar, rule: RuleId, parent: State) -> Vec<State> {
        grammar
            .rule(rule)
            .rhs
            .iter()
            .map(|&symbol| State {
                symbol,
                budget: if symbol == self.list_symbol {
                    parent.budget.saturating_sub(1)
                } else {
                    0
                },
            })
            .collect()
    }

    /// Ways to split `size` rule nodes across `children`.
    fn conv(&self, children: &[State], size: usize) -> BigUint {
        match children {
            [] => {
                if size == 0 {
                    BigUint::one()
                } else {
                    BigUint::zero()
                }
            }
            [only] => self.state_count(*only, size).clone(),
            [first, rest @ ..] => {
                let mut total = BigUint::zero();
                for a in 0..=size {
                    let c = self.state_count(*first, a);
                    if c.is_zero() {
                        continue;
                    }
                    let r = self.conv(rest, size - a);
                    if !r.is_zero() {
                        total += c * r;
                    }
                }
                total
            }
        }
    }
}

/// Dynamic program over rules: a derivation of size `n` is one rule node plus
/// derivations of its right-hand side whose sizes sum to `n - 1`.
pub fn count_programs(grammar: &Grammar, max_size: usize) -> DerivationCountTable {
    let max_parts = grammar.config().max_parts;
    let nsym = grammar.symbols().len();
    let mut table = DerivationCountTable {
        max_size,
        max_parts,
        list_symbol: grammar.start(),
        counts: vec![vec![BigUint::zero(); max_size + 1]; nsym],
        list_counts: vec![vec![BigUint::zero(); max_size + 1]; max_parts + 1],
    };
    for s in 0..nsym {
        if grammar.is_terminal(SymbolId(s)) {
            table.counts[s][0] = BigUint::one();
        }
    }
    for size in 1..=max_size {
        for s in 0..nsym {
            let sym = SymbolId(s);
            if grammar.is_terminal(sym) || sym == table.list_symbol {
                continue;
            }
            let parent = State { symbol: sym, budget: 0 };
            let total: BigUint = grammar
                .rules_for(sym)
                .iter()
                .map(|&r| table.conv(&table.child_states(grammar, r, parent), size - 1))
                .sum();
            table.counts[s][size] = total;
        }
        for budget in 1..=max_parts {
            let parent = State {
                symbol: table.list_symbol,
                budget,
            };
            let total: BigUint = grammar
                .rules_for(table.list_symbol)
                .iter()
                .map(|&r| table.conv(&table.child_states(grammar, r, parent), size - 1))
                .sum();
            table.list_counts[budget][size] = total;
        }
    }
    table
}

/// Draws a program uniformly from all complete programs of size `<= max_size`.
pub fn sample_program_uniform<R: Rng>(
    grammar: &Grammar,
    table: &DerivationCountTable,
    max_size: usize,
    rng: &mut R,
) -> Result<Program, DatagenError> {
    let max_size = max_size.min(table.max_size);
    let total = table.total_programs(max_size);
    if total.is_zero() {
        return Err(DatagenError::NoPrograms { max_size });
    }
    let mut pick = rng.gen_biguint_below(&total);
    let mut size = 0;
    for s in 0..=max_size {
        let c = &table.list_counts[table.max_parts][s];
        if &pick < c {
            size = s;
            break;
        }
        pick -= c;
    }
    let mut tree = Ppt::new(grammar);
    let root = State {
        symbol: table.list_symbol,
        budget: table.max_parts,
    };
    let at = tree.root();
    sample_into(grammar, table, &mut tree, at, root, size, rng);
    Ok(tree
        .to_program(grammar)
        .expect("sampled derivation is complete"))
}

fn sample_into<R: Rng>(
    grammar: &Grammar,
    table: &DerivationCountTable,
    tree: &mut Ppt,
    at: NodeId,
    state: State,
    size: usize,
    rng: &mut R,
) {
    if grammar.is_terminal(state.symbol) {
        return;
    }
    let rules = grammar.rules_for(state.symbol);
    let weights: Vec<(RuleId, Vec<State>, BigUint)> = rules
        .iter()
        .map(|&r| {
            let children = table.child_states(grammar, r, state);
            let w = table.conv(&children, size - 1);
            (r, children, w)
        })
        .collect();
    let total: BigUint = weights.iter().map(|(_, _, w)| w).sum();
    let mut pick = rng.gen_biguint_below(&total);
    let (rule, children) = weights
        .into_iter()
        .find_map(|(r, cs, w)| {
            if pick < w {
                Some((r, cs))
            } else {
                pick -= w;
                None
            }
        })
        .expect("pick below total weight");
    tree.expand(grammar, at, rule).expect("rule matches state symbol");
    let kids = tree.node(at).children.clone();

    // Split the remaining size across children, one child at a time.
    let mut remaining = size - 1;
    for (i, (&kid, &st)) in kids.iter().zip(&children).enumerate() {
        let rest = &children[i + 1..];
        let child_size = if rest.is_empty() {
            remaining
        } else {
            let options: Vec<(usize, BigUint)> = (0..=remaining)
                .map(|a| (a, table.state_count(st, a) * table.conv(rest, remaining - a)))
                .filter(|(_, w)| !w.is_zero())
                .collect();
            let total: BigUint = options.iter().map(|(_, w)| w).sum();
            let mut pick = rng.gen_biguint_below(&total);
            options
                .into_iter()
                .find_map(|(a, w)| {
                    if pick < w {
                        Some(a)
                    } else {
                        pick -= w;
                        None
                    }
                })
                .expect("pick below total weight")
        };
        sample_into(grammar, table, tree, kid, st, child_size, rng);
        remaining -= child_size;
    }
}
