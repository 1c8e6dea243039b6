//! Quick internal consistency checks: interpreter goldens and gradient checks.

use serde::Serialize;

use crate::datagen::Example;
use crate::dsl::{parse_program, DslConfig, Ppt};
use crate::encoder::{EncoderConfig, EncoderVariant, IoEncoder};
use crate::r3nn::{valid_expansions, ModelError, R3nn, R3nnConfig};
use crate::rng::{purpose, stream};
use crate::tensor::{grad_check, grad_check_on, ParamStore, Tape, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// `(program, input, output)` triples the interpreter must reproduce exactly.
pub const GOLDENS: &[(&str, &str, &str)] = &[
    (
        r#"Concat(SubStr(Match(Tok(" "), -1, End), ConstPos(-1)), ConstStr(", "), SubStr(ConstPos(0), ConstPos(1)), ConstStr("."))"#,
        "William Henry Charles",
        "Charles, W.",
    ),
    (
        r#"Concat(SubStr(ConstPos(0), Match(Digits, -1, End)), ConstStr("]"))"#,
        "[CPT-00350",
        "[CPT-00350]",
    ),
    (
        r#"Concat(ConstStr("0x"), SubStr(ConstPos(0), ConstPos(2)))"#,
        "732606129",
        "0x73",
    ),
];

pub fn check_goldens() -> Vec<Check> {
    GOLDENS
        .iter()
        .map(|(prog, input, want)| {
            let got = parse_program(prog).map_err(|e| e.to_string()).and_then(|p| p.eval(input).map_err(|e| e.to_string()));
            Check {
                name: format!("golden {input:?}"),
                passed: got.as_deref() == Ok(*want),
                detail: format!("{got:?}"),
            }
        })
        .collect()
}

fn tiny_examples() -> Vec<Example> {
    vec![
        Example { input: "ab 12".into(), output: "12a".into() },
        Example { input: "Cd 7".into(), output: "7C".into() },
    ]
}

/// Max relative gradient error of the full encoder for `variant`.
pub fn encoder_grad_error(variant: EncoderVariant, t: usize, h: usize, seed: u64) -> Result<f64, ModelError> {
    let config = EncoderConfig {
        max_len: t,
        hidden: h,
        embed: 3,
        variant,
        n_pairs: 2,
        depth: 2,
    };
    let mut store = ParamStore::new();
    let mut rng = stream(seed, purpose::GRADCHECK, 0);
    let enc = IoEncoder::new(config, &DslConfig::default().charset, &mut store, &mut rng)?;
    let examples = tiny_examples();
    let mut weights = None;
    let err = grad_check(
        &mut store,
        |st, tape: &mut Tape| {
            let y = enc.encode_io_set(tape, st, &examples).map_err(|e| match e {
                crate::encoder::EncoderError::Tensor(t) => t,
                other => TensorError::Checkpoint(other.to_string()),
            })?;
            let n = tape.value(y).len();
            let w = weights
                .get_or_insert_with(|| Tensor::vector((0..n).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect()))
                .clone();
            let w = tape.constant(w);
            let p = tape.mul(y, w)?;
            let s = tape.sum(p, None)?;
            Ok(tape.tanh(s))
        },
        1e-5,
        400,
        &mut rng,
    )?;
    Ok(err)
}

/// Max relative gradient error of `-log π(target)` on a small partial tree.
pub fn r3nn_step_grad_error(dim: usize, seed: u64) -> Result<f64, ModelError> {
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
            hidden: 2,
            embed: 3,
            variant: EncoderVariant::Lstm,
            n_pairs: 2,
            depth: 1,
        },
        ..R3nnConfig::default()
    };
    let mut rng = stream(seed, purpose::GRADCHECK, 1);
    let mut model = R3nn::new(config, &dsl, &mut rng)?;
    let g = model.grammar.clone();
    // e -> f e; f -> SubStr(p, p); first p -> ConstPos(k)
    let mut ppt = Ppt::new(&g);
    for _ in 0..3 {
        let e = valid_expansions(&ppt, &g)[1];
        ppt.expand(&g, e.leaf, e.rule)?;
    }
    let target = valid_expansions(&ppt, &g)[0];
    let examples = tiny_examples();
    let err = grad_check_on(
        &mut model,
        |m| &mut m.params,
        |m, tape| {
            let io = m.encode_examples(tape, &examples).map_err(to_tensor)?;
            let cond = m.condition(tape, io).map_err(to_tensor)?;
            m.step_loss(tape, &ppt, target, &cond).map_err(to_tensor)
        },
        1e-5,
        600,
        &mut rng,
    )?;
    Ok(err)
}

fn to_tensor(e: ModelError) -> TensorError {
    match e {
        ModelError::Tensor(t) => t,
        other => TensorError::Checkpoint(other.to_string()),
    }
}

/// Runs goldens and gradient checks with the given thresholds.
pub fn selfcheck() -> Vec<Check> {
    let mut out = check_goldens();
    let mut push = |name: String, r: Result<f64, ModelError>, limit: f64| {
        let (passed, detail) = match r {
            Ok(e) => (e < limit, format!("max relative error {e:.3e} (limit {limit:e})")),
            Err(e) => (false, e.to_string()),
        };
        out.push(Check { name, passed, detail });
    };
    push("r3nn step gradient".into(), r3nn_step_grad_error(8, 0), 1e-4);
    for v in EncoderVariant::ALL {
        push(format!("{v:?} encoder gradient"), encoder_grad_error(v, 8, 4, 0), 1e-4);
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        let failed: Vec<_> = super::selfcheck().into_iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }
}
