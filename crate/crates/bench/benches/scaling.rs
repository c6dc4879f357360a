use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use opscale_core::fnf::{self, BipartiteState};
use opscale_core::matcomb::{self, NonnegPattern};
use opscale_core::numkernel::{ComplexMatrix, Tolerances};
use opscale_core::posmap::ChoiMap;
use opscale_core::{random, scaling, Complex64, ScalingOptions};

fn banded_pattern(k: usize, m: usize) -> NonnegPattern {
    let entries = (0..k * m).map(|x| if (x / m + x % m).is_multiple_of(3) { 0.0 } else { 1.0 }).collect();
    NonnegPattern::new(k, m, entries).unwrap()
}

fn support(c: &mut Criterion) {
    let mut g = c.benchmark_group("total_support");
    for &(k, m) in &[(4, 6), (8, 12), (16, 24)] {
        let a = banded_pattern(k, m);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{k}x{m}")), &a, |b, a| {
            b.iter(|| matcomb::has_total_support(a))
        });
    }
    g.finish();
}

fn random_state(seed: u64, k: usize, m: usize) -> BipartiteState {
    let mut rng = random::seeded(seed);
    let g = random::gaussian(&mut rng, k * m, k * m);
    let rho: ComplexMatrix = &g * g.adjoint() + ComplexMatrix::identity(k * m, k * m) * Complex64::new(0.1, 0.0);
    BipartiteState::new(k, m, rho, &Tolerances::default()).unwrap()
}

fn scaling_run(c: &mut Criterion) {
    let tol = Tolerances::default();
    let opts = ScalingOptions::default();
    let mut g = c.benchmark_group("scaling_run");
    for &(k, m) in &[(2, 2), (2, 3), (3, 4)] {
        let mut rng = random::seeded(7);
        let maps: Vec<ComplexMatrix> = (0..3).map(|_| random::gaussian(&mut rng, m, k)).collect();
        let t = ChoiMap::from_action(k, m, |x| {
            maps.iter().fold(ComplexMatrix::zeros(m, m), |acc, r| acc + r * x * r.adjoint())
        })
        .unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(format!("{k}x{m}")), &t, |b, t| {
            b.iter(|| scaling::run(t, &tol, &opts).unwrap())
        });
    }
    g.finish();
}

fn filter_normal_form(c: &mut Criterion) {
    let tol = Tolerances::default();
    let opts = ScalingOptions::default();
    let mut g = c.benchmark_group("compute_fnf");
    for &(k, m) in &[(2, 2), (2, 3), (3, 3)] {
        let state = random_state(11, k, m);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{k}x{m}")), &state, |b, s| {
            b.iter(|| fnf::compute_fnf(s, &tol, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, support, scaling_run, filter_normal_form);
criterion_main!(benches);
