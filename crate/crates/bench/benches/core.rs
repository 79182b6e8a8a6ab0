use criterion::{black_box, criterion_group, criterion_main, Criterion};

use episird_core::clustering::{ward_cluster, AlignedSeriesMatrix};
use episird_core::estimation::{fit_window, window_rss, FitConfig};
use episird_core::synthetic::{simulate, SyntheticSpec};
use episird_core::{integrate, CompartmentState, SirdParams};

fn params() -> SirdParams {
    SirdParams::new(0.3, 0.08, 0.01).unwrap()
}

fn bench_integrate(c: &mut Criterion) {
    let x0 = CompartmentState::new(999_000.0, 1_000.0, 0.0, 0.0).unwrap();
    c.bench_function("integrate_365_days", |b| {
        b.iter(|| integrate(black_box(&x0), &params(), 1e6, 365, 10).unwrap())
    });
}

fn bench_fit(c: &mut Criterion) {
    let series = simulate(&SyntheticSpec::outbreak(1e6, 500.0), &[params(); 20]).unwrap();
    c.bench_function("window_rss", |b| {
        b.iter(|| window_rss(black_box(&params()), &series, 15, 7, 10).unwrap())
    });
    let config = FitConfig::default();
    let mut group = c.benchmark_group("fit_window");
    group.sample_size(10);
    group.bench_function("default_grid", |b| b.iter(|| fit_window(&series, black_box(15), &config).unwrap()));
    group.finish();
}

fn bench_ward(c: &mut Criterion) {
    // 36 regions, 170 days of deterministic pseudo-random R0 values
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 3.0
    };
    let rows: Vec<Vec<f64>> = (0..36).map(|_| (0..170).map(|_| next()).collect()).collect();
    let matrix = AlignedSeriesMatrix {
        regions: (0..36).map(|i| format!("R{i:02}")).collect(),
        dates: Vec::new(),
        rows,
    };
    c.bench_function("ward_36_regions", |b| b.iter(|| ward_cluster(black_box(&matrix)).unwrap()));
}

criterion_group!(benches, bench_integrate, bench_fit, bench_ward);
criterion_main!(benches);
