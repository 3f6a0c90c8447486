use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use geosweep::geometry::ImplicitSubmanifold;
use geosweep::Space;

fn backends() -> Vec<(&'static str, Space, Vec<f64>, Vec<f64>)> {
    let circle = ImplicitSubmanifold::new(2, &["x1^2 + x2^2 - 1".to_string()], &BTreeMap::new())
        .unwrap()
        .calibrated(&vec![1.0, 0.0].into(), 3.2);
    vec![
        (
            "euclidean",
            Space::euclidean(3),
            vec![0.0, 0.0, 0.0],
            vec![0.3, -0.2, 0.5],
        ),
        ("sphere", Space::sphere(2), vec![0.0, 0.0, 1.0], vec![0.4, 0.3, 0.0]),
        (
            "hyperbolic",
            Space::hyperbolic(2),
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.6, -0.4],
        ),
        ("implicit_circle", Space::new(circle), vec![1.0, 0.0], vec![0.0, 0.8]),
    ]
}

fn exp_log(c: &mut Criterion) {
    for (name, space, x, v) in backends() {
        let x = space.point(x).unwrap();
        let v = space.tangent(&x, v).unwrap();
        let y = space.exp(&x, &v).unwrap();
        let mut g = c.benchmark_group(name);
        g.bench_function("exp", |b| b.iter(|| space.exp(black_box(&x), black_box(&v)).unwrap()));
        g.bench_function("log", |b| b.iter(|| space.log(black_box(&x), black_box(&y)).unwrap()));
        g.bench_function("transport", |b| {
            b.iter(|| space.transport(black_box(&x), black_box(&y), black_box(&v)).unwrap())
        });
        g.finish();
    }
}

criterion_group!(benches, exp_log);
criterion_main!(benches);
