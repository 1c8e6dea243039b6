//! The string-transformation DSL: syntax, semantics and grammar.

pub mod ast;
pub mod config;
pub mod grammar;
pub mod syntax;
pub mod token;
pub mod tree;

pub use ast::{eval_position, eval_program, program_size, Dir, EvalError, Position, Program, Substring};
pub use config::{ConfigError, DslConfig};
pub use grammar::{Grammar, Nonterminal, Production, Rule, RuleId, Symbol, SymbolId, Terminal};
pub use syntax::{parse_program, serialize_program, SyntaxError};
pub use token::{match_token, RegexToken, Span, TokenKind};
pub use tree::{Node, NodeId, Ppt, TreeError};
