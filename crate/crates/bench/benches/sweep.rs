use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use geosweep::{catching_up, SetOps, Vector};
use geosweep_bench::scenario;

fn catching_up_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("catching_up");
    g.sample_size(10);
    for name in [
        "halfline",
        "disk_moving_center",
        "sphere_rotating_cap",
        "implicit_ellipse_cap",
    ] {
        let s = scenario(name);
        let h = s.step().unwrap();
        g.bench_function(name, |b| b.iter(|| catching_up(black_box(&s.problem), h).unwrap()));
    }
    g.finish();
}

fn projection(c: &mut Criterion) {
    let mut g = c.benchmark_group("projection");
    for name in ["disk_moving_center", "sphere_rotating_cap", "implicit_ellipse_cap"] {
        let s = scenario(name);
        let x0 = s.x0().clone();
        let space = &s.problem.space;
        let push = space.project_tangent(&x0, &Vector::from_element(space.ambient_dim(), 0.05));
        let y = space.exp(&x0, &push).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| s.problem.set.project(black_box(0.5), black_box(&y)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, catching_up_runs, projection);
criterion_main!(benches);
