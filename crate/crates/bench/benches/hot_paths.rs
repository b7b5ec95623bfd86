use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use damia_core::attack::fit_threshold;
use damia_core::da::mmd2;
use damia_core::numcore::cross_entropy;
use damia_core::{phash, Bandwidth, Kernel, Mat2, MlpModel, Rng, ScoreSet};

fn uniform(rows: usize, cols: usize, rng: &mut Rng) -> Mat2 {
    Mat2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
}

fn forward_backward(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let model = MlpModel::new(&[64, 64, 32, 10], 1, &mut rng).unwrap();
    let x = uniform(32, 64, &mut rng);
    let y: Vec<usize> = (0..32).map(|i| i % 10).collect();
    c.bench_function("mlp forward+backward 64-64-32-10, batch 32", |b| {
        b.iter(|| {
            let pass = model.forward(black_box(&x)).unwrap();
            let loss = cross_entropy(&pass.probs, &y).unwrap();
            (loss, model.backward(&pass, &y, None).unwrap())
        })
    });
}

fn rbf_mmd(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let xs = uniform(128, 32, &mut rng);
    let xt = uniform(128, 32, &mut rng);
    c.bench_function("rbf mmd2 128x128, dim 32, median bandwidth", |b| {
        b.iter(|| mmd2(black_box(&xs), black_box(&xt), Kernel::Rbf, Bandwidth::MedianHeuristic).unwrap())
    });
}

fn threshold(c: &mut Criterion) {
    let mut rng = Rng::new(3);
    let members: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
    let nonmembers: Vec<f64> = (0..1000).map(|_| rng.uniform() * 0.9).collect();
    let scores = ScoreSet::new(members, nonmembers).unwrap();
    c.bench_function("fit_threshold 1000+1000", |b| b.iter(|| fit_threshold(black_box(&scores)).unwrap()));
}

fn perceptual_hash(c: &mut Criterion) {
    let img = uniform(64, 64, &mut Rng::new(4));
    c.bench_function("phash 64x64", |b| b.iter(|| phash(black_box(&img)).unwrap()));
}

criterion_group!(benches, forward_backward, rbf_mmd, threshold, perceptual_hash);
criterion_main!(benches);
