mod common;

use nsps_core::datagen::count_programs;
use nsps_core::dsl::{
    match_token, parse_program, Dir, DslConfig, Grammar, Position, Ppt, Program, RegexToken, Substring, TokenKind,
};
use nsps_core::io2seq::{delinearize, linearize};
use proptest::prelude::*;
use proptest::sample::select;

fn token(cfg: &DslConfig) -> impl Strategy<Value = RegexToken> {
    prop_oneof![
        select(TokenKind::ALL.to_vec()).prop_map(RegexToken::Class),
        select(cfg.constants.clone()).prop_map(RegexToken::Const),
    ]
}

fn position(cfg: &DslConfig) -> impl Strategy<Value = Position> {
    let k = cfg.max_const_pos;
    let occ = cfg.max_occurrence;
    prop_oneof![
        (-k..=k).prop_map(Position::ConstPos),
        (token(cfg), 1..=occ, any::<bool>(), any::<bool>()).prop_map(|(token, k, neg, end)| Position::Match {
            token,
            k: if neg { -k } else { k },
            dir: if end { Dir::End } else { Dir::Start },
        }),
    ]
}

fn substring(cfg: &DslConfig) -> impl Strategy<Value = Substring> {
    prop_oneof![
        1 => select(cfg.constants.clone()).prop_map(Substring::ConstStr),
        3 => (position(cfg), position(cfg)).prop_map(|(l, r)| Substring::SubStr(l, r)),
    ]
}

fn program(cfg: &DslConfig) -> impl Strategy<Value = Program> {
    prop::collection::vec(substring(cfg), 1..=cfg.max_parts).prop_map(|p| Program::new(p).unwrap())
}

const INPUT: &str = "[A-Za-z0-9 .,@()\\-]{0,20}";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn interpreter_agrees_with_reference(p in program(&DslConfig::default()), v in INPUT) {
        prop_assert_eq!(p.eval(&v).ok(), common::ref_eval(&p, &v));
    }

    #[test]
    fn text_round_trip(p in program(&DslConfig::default())) {
        prop_assert_eq!(parse_program(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn tree_round_trip_preserves_size(p in program(&DslConfig::default())) {
        let g = Grammar::new(&DslConfig::default());
        let t = Ppt::from_program(&g, &p).unwrap();
        prop_assert!(t.is_complete());
        prop_assert!(t.is_well_formed(&g));
        prop_assert_eq!(t.size(), p.size());
        prop_assert_eq!(t.to_program(&g).unwrap(), p);
    }

    #[test]
    fn linearization_round_trip(p in program(&DslConfig::default())) {
        let g = Grammar::new(&DslConfig::default());
        let toks = linearize(&p, &g).unwrap();
        prop_assert_eq!(delinearize(&toks, &g).unwrap(), p);
    }

    #[test]
    fn match_spans_agree_with_regex(t in token(&DslConfig::default()), v in INPUT) {
        let spans = match_token(&t, &v);
        for w in spans.windows(2) {
            prop_assert!(w[0].1 <= w[1].0);
        }
        let pat = match &t {
            RegexToken::Const(s) => regex::escape(s),
            RegexToken::Class(TokenKind::ProperCase) => "[A-Z][a-z]+".into(),
            RegexToken::Class(TokenKind::Caps) => "[A-Z]+".into(),
            RegexToken::Class(TokenKind::Lowercase) => "[a-z]+".into(),
            RegexToken::Class(TokenKind::Digits) => "[0-9]+".into(),
            RegexToken::Class(TokenKind::Alphabets) => "[A-Za-z]+".into(),
            RegexToken::Class(TokenKind::Alphanumeric) => "[A-Za-z0-9]+".into(),
            RegexToken::Class(TokenKind::StartOfString) => "^".into(),
            RegexToken::Class(TokenKind::EndOfString) => "$".into(),
        };
        let want: Vec<(usize, usize)> = regex::Regex::new(&pat).unwrap().find_iter(&v).map(|m| (m.start(), m.end())).collect();
        prop_assert_eq!(spans, want);
    }

    #[test]
    fn substr_output_is_a_substring(l in position(&DslConfig::default()), r in position(&DslConfig::default()), v in INPUT) {
        let p = Program::new(vec![Substring::SubStr(l, r)]).unwrap();
        if let Ok(out) = p.eval(&v) {
            prop_assert!(v.contains(&out));
        }
    }
}

#[test]
fn grammar_counts_match_independent_enumeration() {
    let cfg = common::small_dsl();
    let g = Grammar::new(&cfg);
    let table = count_programs(&g, 9);
    let counts = common::counts_by_size(&cfg, 9);
    for size in 0..=9 {
        let want = counts.get(&size).copied().unwrap_or(0);
        assert_eq!(table.count(g.start(), size), want.into(), "size {size}");
    }
}

#[test]
fn arity_bound_is_counted() {
    let cfg = DslConfig {
        constants: vec!["x".into()],
        max_parts: 2,
        ..common::small_dsl()
    };
    let g = Grammar::new(&cfg);
    let table = count_programs(&g, 9);
    assert_eq!(table.count(g.start(), 9), common::counts_by_size(&cfg, 9).get(&9).copied().unwrap_or(0).into());
    assert_eq!(table.count(g.start(), 3), 1u32.into());
}

#[test]
fn default_grammar_rule_count() {
    let cfg = DslConfig::default();
    let g = Grammar::new(&cfg);
    let c = cfg.constants.len();
    let k = 2 * cfg.max_const_pos as usize + 1;
    let occ = 2 * cfg.max_occurrence as usize;
    assert_eq!(g.rules().len(), 2 + 2 + c + 2 + k + 8 + c + occ + 2);
}
