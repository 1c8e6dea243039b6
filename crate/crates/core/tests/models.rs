use nsps_core::datagen::Example;
use nsps_core::dsl::{DslConfig, Ppt};
use nsps_core::encoder::{cc_encode, diffused_cc, EncoderConfig, EncoderVariant, FeatureBlock, IoEncoder};
use nsps_core::r3nn::{apply_expansion, valid_expansions, R3nn, R3nnConfig};
use nsps_core::rng::{purpose, seeded, stream};
use nsps_core::tensor::{ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn block(tape: &mut Tape, rows: &[Vec<f64>]) -> FeatureBlock {
    FeatureBlock {
        rows: rows.iter().map(|r| tape.constant(Tensor::vector(r.clone()))).collect(),
        forward: Vec::new(),
        backward: Vec::new(),
    }
}

/// Direct double loop: entry `(s, j)` is `<I_{j+s}, O_j>` when both rows exist.
fn naive_diffused(i: &[Vec<f64>], o: &[Vec<f64>], t: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for s in -(t as isize - 1)..(t as isize - 1) {
        for j in 0..t {
            let ii = j as isize + s;
            let v = if ii >= 0 && (ii as usize) < i.len() && j < o.len() {
                i[ii as usize].iter().zip(&o[j]).map(|(a, b)| a * b).sum()
            } else {
                0.0
            };
            out.push(v);
        }
    }
    out
}

fn cfg(variant: EncoderVariant, t: usize, h: usize) -> EncoderConfig {
    EncoderConfig {
        max_len: t,
        hidden: h,
        embed: 3,
        variant,
        n_pairs: 1,
        depth: 1,
    }
}

#[test]
fn cross_correlation_by_hand() {
    let c = cfg(EncoderVariant::Cc, 3, 1);
    let input = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
    let output = vec![vec![3.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0]];
    let mut tape = Tape::new();
    let (bi, bo) = (block(&mut tape, &input), block(&mut tape, &output));
    let d = diffused_cc(&mut tape, &c, &bi, &bo).unwrap();
    assert_eq!(
        tape.value(d).data(),
        &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 2.0, 0.0, 2.0, 0.0, 0.0]
    );
    let cc = cc_encode(&mut tape, &c, &bi, &bo).unwrap();
    assert_eq!(tape.value(cc).data(), &[0.0, 3.0, 5.0, 2.0]);
}

#[test]
fn zero_blocks_give_zero_correlation() {
    let c = cfg(EncoderVariant::DiffusedCc, 4, 1);
    let mut tape = Tape::new();
    let bi = block(&mut tape, &vec![vec![0.0; 2]; 3]);
    let bo = block(&mut tape, &vec![vec![0.0; 2]; 2]);
    let d = diffused_cc(&mut tape, &c, &bi, &bo).unwrap();
    assert!(tape.value(d).data().iter().all(|x| *x == 0.0));
    let empty = block(&mut tape, &[]);
    let d = diffused_cc(&mut tape, &c, &empty, &bo).unwrap();
    assert_eq!(tape.value(d).len(), c.alignments() * c.max_len);
    assert!(tape.value(d).data().iter().all(|x| *x == 0.0));
}

fn rows(n: usize, w: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, w), 0..=n)
}

proptest! {
    #[test]
    fn diffused_matches_naive_and_sums_to_cc(i in rows(6, 3), o in rows(6, 3)) {
        let c = cfg(EncoderVariant::DiffusedCc, 6, 1);
        let mut tape = Tape::new();
        let (bi, bo) = (block(&mut tape, &i), block(&mut tape, &o));
        let d = diffused_cc(&mut tape, &c, &bi, &bo).unwrap();
        let want = naive_diffused(&i, &o, 6);
        let got = tape.value(d).data().to_vec();
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
        let cc = cc_encode(&mut tape, &c, &bi, &bo).unwrap();
        for (a, chunk) in got.chunks(6).enumerate() {
            let s: f64 = chunk.iter().sum();
            prop_assert!((tape.value(cc).data()[a] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn padding_never_correlates(input in "[a-z0-9 ]{0,7}", output in "[a-z0-9 ]{0,7}") {
        let c = cfg(EncoderVariant::DiffusedCc, 7, 2);
        let mut store = ParamStore::new();
        let enc = IoEncoder::new(c.clone(), &DslConfig::default().charset, &mut store, &mut seeded(3)).unwrap();
        let mut tape = Tape::new();
        let ex = Example { input: input.clone(), output: output.clone() };
        let y = enc.encode_pair(&mut tape, &store, &ex).unwrap();
        let d = tape.value(y).data();
        let (li, lo) = (input.len() as isize, output.len() as isize);
        for a in 0..c.alignments() {
            let s = c.shift(a);
            for j in 0..c.max_len as isize {
                let i = j + s;
                if i < 0 || i >= li || j >= lo {
                    prop_assert_eq!(d[a * c.max_len + j as usize], 0.0);
                }
            }
        }
    }
}

fn small_model(dim: usize, seed: u64) -> R3nn {
    let dsl = DslConfig {
        constants: vec!["a".into(), "1".into(), " ".into()],
        max_const_pos: 2,
        max_occurrence: 2,
        max_len: 8,
        ..DslConfig::default()
    };
    let config = R3nnConfig {
        dim,
        encoder: EncoderConfig {
            max_len: 8,
            hidden: 4,
            embed: 3,
            variant: EncoderVariant::Cc,
            n_pairs: 2,
            depth: 1,
        },
        ..R3nnConfig::default()
    };
    R3nn::new(config, &dsl, &mut stream(seed, purpose::INIT, 0)).unwrap()
}

fn examples() -> Vec<Example> {
    vec![
        Example { input: "a1 a".into(), output: "1".into() },
        Example { input: "11".into(), output: "1a".into() },
    ]
}

#[test]
fn same_symbol_leaves_get_distinct_vectors() {
    let m = small_model(8, 0);
    let g = m.grammar.clone();
    let mut ppt = Ppt::new(&g);
    // e -> f e, then the second e -> f: two open f leaves
    for pick in [1, 0] {
        let exps = valid_expansions(&ppt, &g);
        let e = exps.iter().filter(|e| e.leaf == *ppt.open_leaves().last().unwrap()).nth(pick).copied().unwrap();
        ppt = apply_expansion(&ppt, &g, e).unwrap();
    }
    let leaves = ppt.open_leaves();
    assert_eq!(leaves.len(), 2);
    assert_eq!(ppt.node(leaves[0]).symbol, ppt.node(leaves[1]).symbol);
    let mut tape = Tape::new();
    let io = m.encode_examples(&mut tape, &examples()).unwrap();
    let cond = m.condition(&mut tape, io).unwrap();
    let tv = m.tree_vectors(&mut tape, &ppt, &cond).unwrap();
    let a = tape.value(tv.phi_prime[leaves[0].0].unwrap()).data().to_vec();
    let b = tape.value(tv.phi_prime[leaves[1].0].unwrap()).data().to_vec();
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    assert!(diff > 1e-6, "leaf vectors coincide: {diff}");
}

#[test]
fn distribution_normalizes_and_generation_stays_valid() {
    let m = small_model(8, 1);
    let g = m.grammar.clone();
    let mut rng = seeded(9);
    let mut tape = Tape::new();
    let io = m.encode_examples(&mut tape, &examples()).unwrap();
    let cond = m.condition(&mut tape, io).unwrap();
    let mut ppt = Ppt::new(&g);
    for _ in 0..500 {
        if ppt.is_complete() || ppt.size() > 20 {
            ppt = Ppt::new(&g);
        }
        let (exps, probs) = m.expansion_distribution(&mut tape, &ppt, &cond).unwrap();
        assert_eq!(exps.len(), probs.len());
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        ppt = apply_expansion(&ppt, &g, exps[rng.gen_range(0..exps.len())]).unwrap();
        assert!(ppt.is_well_formed(&g));
    }
}
