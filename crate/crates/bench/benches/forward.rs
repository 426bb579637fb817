use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cortifield::{build_basis, forward_model, linearize, transfer_spectrum, CmcParams, DomainSpec};

fn freqs() -> Vec<f64> {
    (1..=60).map(f64::from).collect()
}

fn spectra(c: &mut Criterion) {
    let p = CmcParams::default();
    let f = freqs();
    c.bench_function("linearize", |b| b.iter(|| linearize(black_box(&p), black_box(0.1))));
    let sys = linearize(&p, 0.1).unwrap();
    c.bench_function("transfer_spectrum/60", |b| b.iter(|| transfer_spectrum(black_box(&sys), &p, &f)));
    let field: Vec<f64> = (0..20).map(|i| 0.05 * i as f64).collect();
    c.bench_function("forward_model/20ch", |b| b.iter(|| forward_model(&p, black_box(&field), 0.0, &f)));
}

fn basis(c: &mut Criterion) {
    let domain = DomainSpec::rectangle(5.6, 4.2, 0.1);
    c.bench_function("build_basis/4x4", |b| b.iter(|| build_basis(black_box(domain), 4)));
}

criterion_group!(benches, spectra, basis);
criterion_main!(benches);
