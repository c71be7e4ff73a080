use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use neutrotensor::metrics::{
    convergence_permutation_test, jaccard, tokenize_loss_text, ConvergenceMode, PermutationConfig, ThemeLexicon,
    TokenizerOptions,
};
use neutrotensor::{parse_trial, Strategy};
use neutrotensor_bench::{s4_records, s4_response};

fn parsing(c: &mut Criterion) {
    let text = s4_response(3, 5);
    c.bench_function("parse_trial/s4", |b| b.iter(|| parse_trial(black_box(&text), Strategy::TensorLosses)));
    let noisy = format!("{} trailing {{ junk", "word ".repeat(200));
    c.bench_function("parse_trial/garbled", |b| b.iter(|| parse_trial(black_box(&noisy), Strategy::Neutrosophic)));
}

fn text(c: &mut Criterion) {
    let a = "Self-referential paradox resolution; formal system dependency; contextual grounding of 'this sentence'";
    let b = "Empirical unknowability of the exact number of stars; definition of 'universe' in cosmological context";
    let options = TokenizerOptions::default();
    c.bench_function("tokenize+jaccard", |bench| {
        bench.iter(|| jaccard(&tokenize_loss_text(black_box(a), options), &tokenize_loss_text(black_box(b), options)))
    });
}

fn permutation(c: &mut Criterion) {
    let records = s4_records(5, 5);
    let lexicon = ThemeLexicon::default_lexicon();
    let mut group = c.benchmark_group("convergence_permutation");
    group.sample_size(10);
    group.bench_function("1000 permutations, 125 records", |b| {
        b.iter(|| {
            convergence_permutation_test(
                black_box(&records),
                &lexicon,
                ConvergenceMode::AnyRep,
                PermutationConfig {
                    permutations: 1000,
                    seed: 7,
                },
            )
        })
    });
    group.finish();
}

criterion_group!(benches, parsing, text, permutation);
criterion_main!(benches);
