use criterion::{criterion_group, criterion_main, Criterion};
use persuade_core::oracle::{solve_grid, GridConfig};
use persuade_core::problem::examples::{example1, example2};
use persuade_core::scalar::rat;
use persuade_core::simulate::{OptimalPolicy, Simulator};
use persuade_core::Solver;
use std::hint::black_box;

fn solve(c: &mut Criterion) {
    let p1 = example1();
    c.bench_function("solve/example1", |b| {
        b.iter(|| {
            let s = Solver::new(black_box(&p1)).unwrap();
            s.optimal_value().unwrap()
        })
    });
    let p2 = example2(rat(3, 5));
    c.bench_function("solve/example2", |b| {
        b.iter(|| {
            let s = Solver::new(black_box(&p2)).unwrap();
            s.optimal_value().unwrap()
        })
    });
}

fn oracle(c: &mut Criterion) {
    let p1 = example1();
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    g.bench_function("example1/60x20", |b| {
        let cfg = GridConfig { n_p: 60, n_w: 20, ..GridConfig::default() };
        b.iter(|| solve_grid(black_box(&p1), &cfg).unwrap().1.iterations)
    });
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let solver = Solver::new(&example1()).unwrap();
    let pol = OptimalPolicy::new(&solver).unwrap();
    let sim = Simulator::new(&pol, 60).unwrap();
    c.bench_function("simulate/example1/10k", |b| b.iter(|| sim.monte_carlo(10_000, black_box(1), 0).unwrap().principal.mean));
}

criterion_group!(benches, solve, oracle, simulate);
criterion_main!(benches);
