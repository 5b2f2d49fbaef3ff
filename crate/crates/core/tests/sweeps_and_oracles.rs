use std::f64::consts::{FRAC_PI_4, PI};

use gqfi_core::fidelity::uhlmann_fidelity;
use gqfi_core::fock::{fock_qfi, FockOracle, DEFAULT_FOCK_STEP};
use gqfi_core::qfi::qfi_fidelity_limit;
use gqfi_core::sensing::{
    qfi_sweep, spectrum_trace, thermometry_qfi, Axis, AxisVariable, CovarianceSource, Preset,
    PresetSpec, SpectrumSpec, SweepSpec, ThermometryVariant,
};
use gqfi_core::{build_probe, Engine, Execution, Parameter, ProbeParams};

fn p(n: f64, m: f64, r: f64, phi: f64) -> ProbeParams {
    ProbeParams::new(n, m, r, phi).unwrap()
}

#[test]
fn crossing_locations_are_stable_under_refinement() {
    for count in [200, 400, 800] {
        let spec = SpectrumSpec {
            fixed: p(1.0, 1.0, 0.5, 0.0),
            x: Axis::new(AxisVariable::Phi, 0.0, PI, count).unwrap(),
            y: None,
            source: CovarianceSource::PrintedClosedForm,
        };
        let pts = spectrum_trace(&spec, Execution::Parallel)
            .unwrap()
            .crossing_points();
        assert_eq!(pts.len(), 2);
        assert!((pts[0] - FRAC_PI_4).abs() < 1e-6, "{count}: {pts:?}");
        assert!((pts[1] - 3.0 * FRAC_PI_4).abs() < 1e-6, "{count}: {pts:?}");
    }
}

#[test]
fn unsqueezed_balanced_phi_sweep_vanishes() {
    let mut spec = SweepSpec::new(
        p(1.0, 1.0, 0.0, 0.0),
        Axis::new(AxisVariable::Phi, 0.0, PI, 31).unwrap(),
        None,
        Parameter::Phi,
    );
    for engine in Engine::ALL {
        spec.engine = engine;
        let t = qfi_sweep(&spec, Execution::Parallel).unwrap();
        for row in &t.rows {
            assert!(row.qfi.unwrap().abs() <= 1e-10, "{engine} {row:?}");
        }
    }
}

#[test]
fn parallel_and_sequential_sweeps_match() {
    let PresetSpec::Sweep(mut spec) = Preset::Fig4b.spec() else {
        panic!("fig4b is a sweep");
    };
    spec.x.count = 21;
    spec.emit_spectrum = true;
    let a = qfi_sweep(&spec, Execution::Parallel).unwrap();
    let b = qfi_sweep(&spec, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.failed_cells(), 0);
    assert!(a
        .rows
        .iter()
        .all(|r| !r.flags.iter().any(|f| f == "not_physical")));
}

#[test]
fn full_thermometry_grid_invariance() {
    for i in 0..10 {
        for j in 0..10 {
            let params = p(1.0, 1.0, 0.05 * i as f64, 0.3 * j as f64);
            let q = thermometry_qfi(&params, ThermometryVariant::Full, Engine::ClosedForm).unwrap();
            assert!((q.value - 0.5).abs() < 1e-8);
        }
    }
}

#[test]
fn fock_oracle_spot_checks() {
    let a = p(0.4, 0.6, 0.2, 0.5);
    let b = p(0.45, 0.55, 0.25, 0.6);
    let oracle = FockOracle::new(25);
    let f_fock = oracle.probe_fidelity(&a, &b).unwrap();
    let f_gauss = uhlmann_fidelity(&build_probe(&a).unwrap(), &build_probe(&b).unwrap())
        .unwrap()
        .value;
    assert!((f_fock - f_gauss).abs() < 1e-6, "{f_fock} {f_gauss}");
    for which in [Parameter::Phi, Parameter::R] {
        let q_fock = fock_qfi(&a, which, DEFAULT_FOCK_STEP, 25).unwrap();
        let q = qfi_fidelity_limit(&a, which, 1e-3).unwrap().value;
        assert!((q_fock - q).abs() < 1e-3 * q, "{which}: {q_fock} {q}");
    }
}
