use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hermann_core::catalog;
use hermann_core::integration::{self, testfns, DensityProfile, PointFn, QuadratureConfig};
use hermann_core::lie::{expm, mat_exp};
use hermann_core::orbit::{self, FdConfig};
use hermann_core::{AnalysisConfig, TriadAnalysis};

fn unitary(p: usize, q: usize) -> TriadAnalysis {
    let spec = catalog::make_unitary_on_grassmannian(p, q).unwrap();
    TriadAnalysis::new(&spec, &AnalysisConfig::default()).unwrap()
}

fn matrix_exponential(c: &mut Criterion) {
    let a = unitary(2, 3);
    let x = a.section_element(&[0.3, -0.7]).unwrap();
    c.bench_function("expm pade 10x10", |b| b.iter(|| expm(black_box(x.mat()))));
    c.bench_function("expm skew 10x10", |b| {
        b.iter(|| mat_exp(black_box(&x), 1.0))
    });
}

fn root_data(c: &mut Criterion) {
    let mut g = c.benchmark_group("root data");
    g.sample_size(20);
    for (p, q) in [(1, 2), (2, 3)] {
        let spec = catalog::make_unitary_on_grassmannian(p, q).unwrap();
        g.bench_function(format!("u-on-grassmannian({p},{q})"), |b| {
            b.iter(|| TriadAnalysis::new(black_box(&spec), &AnalysisConfig::default()).unwrap())
        });
    }
    g.finish();
}

fn shape_operators(c: &mut Criterion) {
    let a = unitary(2, 3);
    let (w, u) = ([0.3, -0.7], [1.0, 0.5]);
    c.bench_function("shape closed form", |b| {
        b.iter(|| orbit::shape_spectrum_closed(&a, black_box(&w), &u).unwrap())
    });
    c.bench_function("shape algebraic", |b| {
        b.iter(|| orbit::shape_operator_algebraic(&a, black_box(&w), &u).unwrap())
    });
    let mut g = c.benchmark_group("shape finite differences");
    g.sample_size(10);
    g.bench_function("u-on-grassmannian(2,3)", |b| {
        b.iter(|| {
            orbit::shape_operator_numeric(&a, black_box(&w), &u, &FdConfig::default()).unwrap()
        })
    });
    g.finish();
}

fn integration_kernels(c: &mut Criterion) {
    let a = unitary(2, 3);
    let prof = DensityProfile::from_analysis(&a).unwrap();
    let lat = integration::section_lattice(&a, &prof).unwrap();
    let f = testfns::by_name(&a, "trace2").unwrap();
    let fs: [&PointFn<'_>; 1] = [f.as_ref()];
    let mut g = c.benchmark_group("integration");
    g.sample_size(10);
    g.bench_function("mc chunk", |b| {
        b.iter(|| {
            integration::haar_mc_integrate_many(
                &a.embedding,
                a.triad.n(),
                &fs,
                integration::MC_CHUNK,
                7,
            )
        })
    });
    let cfg = QuadratureConfig {
        points_per_axis: Some(64),
        invariance_probes: 0,
        ..QuadratureConfig::default()
    };
    g.bench_function("quadrature 64x64", |b| {
        b.iter(|| integration::integrate_invariant_many(&a, &fs, &prof, &lat, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    matrix_exponential,
    root_data,
    shape_operators,
    integration_kernels
);
criterion_main!(benches);
