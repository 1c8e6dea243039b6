mod common;

use std::time::Duration;

use nsps_core::datagen::{generate_corpus, DataConfig};
use nsps_core::dsl::Grammar;
use nsps_core::encoder::{EncoderConfig, EncoderVariant};
use nsps_core::r3nn::{R3nn, R3nnConfig};
use nsps_core::rng::{purpose, stream};
use nsps_core::search::{enum_search, enum_search_with, DefaultRanker, SearchLimits, SearchOptions};
use nsps_core::synth::evaluate;

fn limits(max_size: usize) -> SearchLimits {
    SearchLimits {
        max_size,
        max_expansions: 5_000_000,
        time_budget: Duration::from_secs(120),
    }
}

#[test]
fn enumeration_finds_minimal_programs() {
    let dsl = common::small_dsl();
    let data = DataConfig {
        dsl: dsl.clone(),
        seed: 11,
        n_tasks: 30,
        max_size: 9,
        n_examples: 3,
        split: [1.0, 0.0, 0.0],
    };
    let g = Grammar::new(&dsl);
    for task in generate_corpus(&data).unwrap().train {
        let witness = task.program.as_ref().unwrap().size();
        let pairs: Vec<(String, String)> = task.examples.iter().map(|e| (e.input.clone(), e.output.clone())).collect();
        let want = common::brute_force_min_size(&dsl, &pairs, witness).unwrap();
        let got = enum_search(&g, &task, limits(witness));
        let prog = got.program().unwrap_or_else(|| panic!("no program for {}", task.program.as_ref().unwrap()));
        assert!(task.is_satisfied_by(prog));
        assert_eq!(prog.size(), want, "{prog}");
    }
}

#[test]
fn pruning_does_not_change_result_size() {
    let dsl = common::small_dsl();
    let data = DataConfig {
        dsl: dsl.clone(),
        seed: 5,
        n_tasks: 10,
        max_size: 8,
        n_examples: 2,
        split: [1.0, 0.0, 0.0],
    };
    let g = Grammar::new(&dsl);
    for task in generate_corpus(&data).unwrap().train {
        let a = enum_search(&g, &task, limits(8));
        let plain = SearchOptions {
            prefix_pruning: false,
            expand_all_nonterminals: false,
        };
        let b = enum_search_with(&g, &task, limits(8), &DefaultRanker, plain);
        assert_eq!(a.program().map(|p| p.size()), b.program().map(|p| p.size()));
        assert!(a.expansions <= b.expansions);
    }
}

#[test]
fn sampling_success_is_monotone_in_k() {
    let dsl = common::small_dsl();
    let data = DataConfig {
        dsl: dsl.clone(),
        seed: 2,
        n_tasks: 12,
        max_size: 7,
        n_examples: 2,
        split: [1.0, 0.0, 0.0],
    };
    let tasks = generate_corpus(&data).unwrap().train;
    let config = R3nnConfig {
        dim: 8,
        encoder: EncoderConfig {
            max_len: dsl.max_len,
            hidden: 4,
            embed: 4,
            variant: EncoderVariant::Cc,
            n_pairs: 2,
            depth: 1,
        },
        ..R3nnConfig::default()
    };
    let m = R3nn::new(config, &dsl, &mut stream(0, purpose::INIT, 0)).unwrap();
    let rows = evaluate(&m, &tasks, &[0, 1, 5, 20], 4, 9).unwrap();
    for w in rows.windows(2) {
        assert!(w[0].solved <= w[1].solved, "{:?}", rows.iter().map(|r| r.solved).collect::<Vec<_>>());
    }
}
