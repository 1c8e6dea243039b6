use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nsps_bench::{benchmark_dir, encoder, model, name_examples};
use nsps_core::bench::load_benchmark;
use nsps_core::datagen::{count_programs, sample_program_uniform};
use nsps_core::dsl::{parse_program, Grammar};
use nsps_core::encoder::{EncoderVariant, IoEncoder};
use nsps_core::rng::seeded;
use nsps_core::search::{enum_search, SearchLimits};
use nsps_core::synth::Synthesizer;
use nsps_core::tensor::{ParamStore, Tape};
use nsps_core::DslConfig;

fn interpreter(c: &mut Criterion) {
    let p = parse_program(
        r#"Concat(SubStr(Match(Tok(" "), -1, End), ConstPos(-1)), ConstStr(", "), SubStr(ConstPos(0), ConstPos(1)), ConstStr("."))"#,
    )
    .unwrap();
    c.bench_function("eval names program", |b| b.iter(|| p.eval(black_box("William Henry Charles"))));
}

fn sampling(c: &mut Criterion) {
    let g = Grammar::new(&DslConfig::default());
    c.bench_function("count programs to size 13", |b| b.iter(|| count_programs(&g, black_box(13))));
    let table = count_programs(&g, 13);
    let mut rng = seeded(0);
    c.bench_function("sample uniform program", |b| {
        b.iter(|| sample_program_uniform(&g, &table, 13, &mut rng).unwrap())
    });
}

fn search(c: &mut Criterion) {
    let g = Grammar::new(&DslConfig::default());
    let task = load_benchmark(&benchmark_dir().join("hex_prefix.json")).unwrap().task();
    let mut group = c.benchmark_group("enum search");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    group.bench_function("hex prefix", |b| b.iter(|| enum_search(&g, &task, SearchLimits::default())));
    group.finish();
}

fn encoders(c: &mut Criterion) {
    let charset = DslConfig::default().charset;
    let examples = name_examples();
    let mut group = c.benchmark_group("encode io set");
    group.sample_size(20);
    for v in EncoderVariant::ALL {
        let mut store = ParamStore::new();
        let enc = IoEncoder::new(encoder(v, 24), &charset, &mut store, &mut seeded(0)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{v:?}")), &v, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                enc.encode_io_set(&mut tape, &store, &examples).unwrap()
            })
        });
    }
    group.finish();
}

fn r3nn_step(c: &mut Criterion) {
    let mut m = model(24);
    let examples = name_examples();
    let prog = parse_program(r#"Concat(SubStr(Match(Tok(" "), -1, End), ConstPos(-1)), ConstStr(", "))"#).unwrap();
    let mut group = c.benchmark_group("r3nn");
    group.sample_size(10);
    group.bench_function("program loss and backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let (loss, _) = m.program_loss(&mut tape, &examples, &prog).unwrap();
            tape.backward(loss, m.params_mut()).unwrap();
        })
    });
    let io = m.encode_task(&examples).unwrap();
    let mut rng = seeded(1);
    group.bench_function("sample program", |b| {
        b.iter(|| m.decode(&io, nsps_core::GenMode::Sample, 13, &mut rng).unwrap())
    });
    group.finish();
}

criterion_group!(benches, interpreter, sampling, search, encoders, r3nn_step);
criterion_main!(benches);
