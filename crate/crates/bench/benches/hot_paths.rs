//! Benchmarks for the paths that dominate training and evaluation time:
//! STFT analysis/synthesis, separator forward, and the three gradient
//! configurations of the loss graph.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use aptsep_bench::bench_stack;
use aptsep_core::dsp::{istft, stft};
use aptsep_core::eval::sdr;
use aptsep_core::grad::Tensor;
use aptsep_core::models::{
    bind_sep, build_sep_graph, prepare_sep_input, separate, SepMode, TrainSet,
};

fn dsp_benches(c: &mut Criterion) {
    let stack = bench_stack();
    let wave = &stack.example.mixture;
    c.bench_function("stft 1s clip", |b| {
        b.iter(|| black_box(stft(wave, stack.dsp.n_fft, stack.dsp.hop).unwrap()))
    });
    let spec = stft(wave, stack.dsp.n_fft, stack.dsp.hop).unwrap();
    c.bench_function("istft 1s clip", |b| {
        b.iter(|| black_box(istft(&spec, wave.len(), wave.sample_rate).unwrap()))
    });
    c.bench_function("sdr 1s clip", |b| {
        b.iter(|| black_box(sdr(&stack.example.target, wave).unwrap()))
    });
}

fn separator_benches(c: &mut Criterion) {
    let stack = bench_stack();
    let prompt = vec![0.1f32; stack.model.dims.embed_dim];
    c.bench_function("separate (stft + forward + istft)", |b| {
        b.iter(|| black_box(separate(&stack.model, &stack.example.mixture, &prompt).unwrap()))
    });

    let input = prepare_sep_input(&stack.example.mixture, &stack.model.dims).unwrap();
    let target = Tensor::from_vec(stack.example.target.samples.clone());
    for (name, train) in [
        ("loss fwd+bwd prompt-only", TrainSet::PROMPT_ONLY),
        ("loss fwd+bwd model-only", TrainSet::MODEL_ONLY),
        ("loss fwd+bwd joint", TrainSet::JOINT),
    ] {
        let mut sep = build_sep_graph(&stack.model.dims, SepMode::Loss, train).unwrap();
        let bindings = bind_sep(&sep, &stack.model, &input, &prompt, Some(&target)).unwrap();
        c.bench_function(name, |b| {
            b.iter(|| {
                let out = sep.graph.evaluate(&bindings).unwrap();
                let grads = sep.graph.backpropagate(&Tensor::scalar(1.0)).unwrap();
                black_box((out, grads))
            })
        });
    }
}

criterion_group!(benches, dsp_benches, separator_benches);
criterion_main!(benches);
