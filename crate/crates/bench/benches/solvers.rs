use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dqs_bench::{operators, params, system};
use dqs_core::meanfield::{variational_cost, ClassCouplings, ProductState};
use dqs_core::trajectories::{run_trajectory, TrajectorySystem};
use dqs_core::{LatticeSpec, PureState, TrajectoryConfig};
use num_complex::Complex64;

fn kernel(c: &mut Criterion) {
    let mut g = c.benchmark_group("derivative");
    for (nx, ny) in [(3, 3), (3, 4), (4, 4)] {
        let (_, h, jumps) = operators(nx, ny);
        let dim = h.dim();
        let x: Vec<Complex64> = (0..dim)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64).cos()))
            .collect();
        let mut y = vec![Complex64::default(); dim];
        let structured = system(nx, ny);
        g.bench_function(BenchmarkId::new("xor", format!("{nx}x{ny}")), |b| {
            b.iter(|| structured.derivative(&x, &mut y))
        });
        let csr = TrajectorySystem::new_csr(&h, &jumps).unwrap();
        g.bench_function(BenchmarkId::new("csr", format!("{nx}x{ny}")), |b| {
            b.iter(|| csr.derivative(&x, &mut y))
        });
    }
    g.finish();
}

fn trajectory(c: &mut Criterion) {
    let mut g = c.benchmark_group("trajectory");
    g.sample_size(10);
    for (nx, ny) in [(2, 3), (3, 3)] {
        let (l, _, _) = operators(nx, ny);
        let sys = system(nx, ny);
        let cfg = TrajectoryConfig {
            n_trajectories: 1,
            t_burn_in: 1.0,
            t_average: 4.0,
            dt: TrajectoryConfig::default_dt(params().rate_scale(l.max_coordination())),
            seed: 1,
        };
        let psi0 = PureState::ground(nx * ny);
        g.bench_function(format!("{nx}x{ny}_5us"), |b| {
            b.iter(|| run_trajectory(&sys, &psi0, &cfg, 0).unwrap())
        });
    }
    g.finish();
}

fn cost(c: &mut Criterion) {
    let p = params();
    let planar = ClassCouplings::uniform_2d(p.coupling);
    let slab = ClassCouplings::layered(&LatticeSpec::slab(1, 1, 3), p.coupling).unwrap();
    let s1 = ProductState::uniform(1, [0.3, -0.2, -0.4]);
    let s3 = ProductState::uniform(3, [0.3, -0.2, -0.4]);
    c.bench_function("variational_cost/2d", |b| b.iter(|| variational_cost(&s1, &p, &planar)));
    c.bench_function("variational_cost/slab", |b| b.iter(|| variational_cost(&s3, &p, &slab)));
}

criterion_group!(benches, kernel, trajectory, cost);
criterion_main!(benches);
