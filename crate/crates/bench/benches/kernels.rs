use criterion::{black_box, criterion_group, criterion_main, Criterion};
use worldcert::nets::{build_mlp, build_seqnet, plant_network};
use worldcert::numcore::{grad, solve_least_squares};
use worldcert::probes::{fit_coordinate_probe_exhaustive, fit_probe, FunctionClass, ProbeTargets, TaskMode};
use worldcert::worlds::{materialize, WorldParams};
use worldcert::{Matrix, RngStream};

fn lstsq(c: &mut Criterion) {
    let mut rng = RngStream::new(0, 0);
    let a = rng.normal_matrix(500, 64, 1.0);
    let b = rng.normal_matrix(500, 8, 1.0);
    c.bench_function("lstsq 500x64", |bench| {
        bench.iter(|| solve_least_squares(black_box(&a), black_box(&b), 1e-8).unwrap())
    });
}

fn tape(c: &mut Criterion) {
    let mut rng = RngStream::new(1, 0);
    let x = rng.normal_matrix(32, 16, 1.0);
    let params = vec![rng.normal_matrix(16, 32, 0.25), rng.normal_matrix(32, 7, 0.25)];
    let labels: Vec<usize> = (0..32).map(|i| i % 7).collect();
    c.bench_function("mlp gradient 32x16", |bench| {
        bench.iter(|| {
            grad(&params, |t, p| {
                let xv = t.constant(x.clone());
                let h = t.affine(xv, p[0], None)?;
                let h = t.tanh(h);
                let o = t.affine(h, p[1], None)?;
                t.cross_entropy(o, &labels)
            })
            .unwrap()
        })
    });
}

fn forward(c: &mut Criterion) {
    let world = WorldParams::Modadd { n: 7 }.build().unwrap();
    let ds = materialize(&world, &mut RngStream::new(2, 1), 1000).unwrap();
    let mlp = build_mlp(&[14, 64, 64, 7], false, 0).unwrap();
    c.bench_function("mlp forward 1000", |bench| bench.iter(|| mlp.forward(black_box(&ds.inputs)).unwrap()));
    let planted = plant_network(&WorldParams::Modadd { n: 7 }, 9, 0).unwrap();
    c.bench_function("planted forward 1000", |bench| {
        bench.iter(|| planted.forward(black_box(&ds.inputs)).unwrap())
    });
    let seq = build_seqnet(4, 16, 2, 6, 5, 0).unwrap();
    let tokens = Matrix::from_fn(256, 6, |r, c| ((r * 7 + c * 3) % 4) as f64);
    c.bench_function("seqnet forward 256", |bench| bench.iter(|| seq.forward(black_box(&tokens)).unwrap()));
}

fn probes(c: &mut Criterion) {
    let mut rng = RngStream::new(3, 0);
    let z = rng.normal_matrix(1000, 32, 1.0);
    let labels: Vec<usize> = (0..1000).map(|r| usize::from(z[(r, 3)] > 0.0) + usize::from(z[(r, 5)] > 0.5)).collect();
    let targets = ProbeTargets::labels(labels, 3);
    c.bench_function("logistic probe 1000x32", |bench| {
        bench.iter(|| fit_probe(FunctionClass::linear(TaskMode::Classification), &z, &targets, 0).unwrap())
    });
    c.bench_function("coordinate exhaustive 1000x32", |bench| {
        bench.iter(|| fit_coordinate_probe_exhaustive(black_box(&z), &targets))
    });
}

criterion_group!(benches, lstsq, tape, forward, probes);
criterion_main!(benches);
