use apsde_core::averaging::GaussHermite;
use apsde_core::catalog;
use apsde_core::fbm::{CholeskySampler, CirculantSampler, HurstIndex, TimeGrid};
use apsde_core::rng::{role, substream};
use apsde_core::schemes::{run_scheme, SchemeKind, SystemSpec};
use apsde_core::{CoeffExpr, GaussianSeq};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn fbm_sampling(c: &mut Criterion) {
    let h = HurstIndex::new(0.75).unwrap();
    let mut group = c.benchmark_group("fbm");
    for n in [256, 1024, 4096] {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let circ = CirculantSampler::new(grid, h).unwrap();
        let mut rng = substream(0, role::FBM, 0);
        group.bench_with_input(BenchmarkId::new("circulant", n), &n, |b, _| {
            b.iter(|| black_box(circ.sample(&mut rng)))
        });
        group.bench_with_input(BenchmarkId::new("circulant_pair", n), &n, |b, _| {
            b.iter(|| black_box(circ.sample_pair(&mut rng)))
        });
    }
    let grid = TimeGrid::new(1.0, 256).unwrap();
    let chol = CholeskySampler::new(grid, h).unwrap();
    let mut rng = substream(0, role::FBM, 1);
    group.bench_function("cholesky/256", |b| {
        b.iter(|| black_box(chol.sample(&mut rng)))
    });
    group.finish();
}

fn scheme_stepping(c: &mut Criterion) {
    let n = 1024;
    let grid = TimeGrid::new(1.0, n).unwrap();
    let spec = SystemSpec::fractional(catalog::GENERAL.expr(), 0.75, 0.01, 0.5).unwrap();
    let path = CirculantSampler::new(grid, spec.hurst)
        .unwrap()
        .sample(&mut substream(1, role::FBM, 0));
    let gammas = GaussianSeq::sample(n, &mut substream(1, role::GAMMA, 0));
    let mut group = c.benchmark_group("scheme/1024");
    for kind in [
        SchemeKind::Ap,
        SchemeKind::Limiting,
        SchemeKind::Averaged,
        SchemeKind::ImplicitNonAp,
    ] {
        group.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| black_box(run_scheme(&spec, &path, &gammas, kind).unwrap()))
        });
    }
    group.finish();
}

fn quadrature(c: &mut Criterion) {
    let g = catalog::GENERAL.expr();
    let mut group = c.benchmark_group("gauss_hermite");
    for order in [20, 40, 80] {
        let rule = GaussHermite::new(order).unwrap();
        group.bench_with_input(BenchmarkId::new("expect", order), &order, |b, _| {
            b.iter(|| black_box(rule.expect(|z| g.eval(0.3, z)).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("nodes", order), &order, |b, &o| {
            b.iter(|| black_box(GaussHermite::new(o).unwrap()))
        });
    }
    group.finish();
}

fn expression_eval(c: &mut Criterion) {
    let text = "tanh(x)*cos(m)+sin(x)*exp(-m^2/2)+sqrt(abs(x))";
    let expr = CoeffExpr::parse(text).unwrap();
    c.bench_function("expr/parse", |b| {
        b.iter(|| black_box(CoeffExpr::parse(black_box(text)).unwrap()))
    });
    c.bench_function("expr/eval", |b| {
        b.iter(|| black_box(expr.eval(black_box(0.3), black_box(-1.2)).unwrap()))
    });
}

criterion_group!(
    benches,
    fbm_sampling,
    scheme_stepping,
    quadrature,
    expression_eval
);
criterion_main!(benches);
