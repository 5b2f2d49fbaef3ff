use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gqfi_core::crb::{crb_report, preset_params};
use gqfi_core::qfi::Engine;
use gqfi_core::sensing::{qfi_sweep, Preset, PresetSpec};
use gqfi_core::{Execution, Parameter};

fn sweep(c: &mut Criterion) {
    let PresetSpec::Sweep(base) = Preset::Fig3a.spec() else {
        unreachable!("fig3a is a QFI sweep")
    };
    let mut group = c.benchmark_group("fig3a_sweep");
    group.sample_size(10);
    for engine in [Engine::ClosedForm, Engine::FidelityLimit] {
        let mut spec = base;
        spec.engine = engine;
        for execution in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(
                BenchmarkId::new(engine.name(), format!("{execution:?}")),
                &spec,
                |b, spec| b.iter(|| qfi_sweep(spec, execution).unwrap()),
            );
        }
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("crb_preset");
    group.sample_size(10);
    let params = preset_params(0.7);
    for execution in [Execution::Sequential, Execution::Parallel] {
        group.bench_function(format!("{execution:?}"), |b| {
            b.iter(|| crb_report(&params, Parameter::Phi, 0.7, 200, 500, 1, execution).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, monte_carlo);
criterion_main!(benches);
