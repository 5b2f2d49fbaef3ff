//! Property tests over random probe parameters.

use gqfi_core::channels::{
    beam_splitter, d_sigma, probe_covariance, symplectic_defect, two_mode_squeezer,
};
use gqfi_core::crb::classical_fisher;
use gqfi_core::fidelity::{bures_distance, uhlmann_fidelity};
use gqfi_core::phase_space::{
    permute_matrix, symplectic_eigenvalues, validate_covariance, williamson,
};
use gqfi_core::qfi::{engine_agreement, qfi};
use gqfi_core::sensing::{thermometry_qfi, ThermometryVariant};
use gqfi_core::{build_probe, Engine, ModeOrdering, Parameter, ProbeParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ProbeParams> {
    (
        0.05f64..3.0,
        0.05f64..3.0,
        0.0f64..1.0,
        0.0f64..std::f64::consts::PI,
    )
        .prop_map(|(n, m, r, phi)| ProbeParams::new(n, m, r, phi).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probes_are_physical_with_thermal_spectrum(p in params()) {
        let sigma = probe_covariance(&p).unwrap();
        let report = validate_covariance(&sigma, ModeOrdering::Qqpp).unwrap();
        prop_assert!(report.is_physical);
        let ev = symplectic_eigenvalues(&sigma, ModeOrdering::Qqpp).unwrap();
        let hi = 2.0 * p.nbar.max(p.mbar) + 1.0;
        let lo = 2.0 * p.nbar.min(p.mbar) + 1.0;
        prop_assert!((ev.values[0] - hi).abs() < 1e-9 * hi);
        prop_assert!((ev.values[1] - lo).abs() < 1e-9 * hi);
        prop_assert!(ev.relative_agreement < 1e-6);
    }

    #[test]
    fn williamson_reconstructs(p in params()) {
        let sigma = probe_covariance(&p).unwrap();
        let w = williamson(&sigma, ModeOrdering::Qqpp).unwrap();
        let back = w.symplectic * w.diagonal() * w.symplectic.transpose();
        prop_assert!((back - sigma).amax() < 1e-8 * sigma.amax());
        prop_assert!(symplectic_defect(&w.symplectic, ModeOrdering::Qqpp) < 1e-8);
    }

    #[test]
    fn gates_are_symplectic(phi in -10.0f64..10.0, r in 0.0f64..3.0) {
        let b = beam_splitter(phi).unwrap();
        let s = two_mode_squeezer(r).unwrap();
        prop_assert!(symplectic_defect(b.matrix(), ModeOrdering::Qqpp) < 1e-12);
        prop_assert!(symplectic_defect(s.matrix(), ModeOrdering::Qqpp) < 1e-12 * (2.0 * r).cosh().powi(2));
    }

    #[test]
    fn ordering_round_trip(p in params()) {
        let s = build_probe(&p).unwrap();
        let back = s.to_ordering(ModeOrdering::Qpqp).to_ordering(ModeOrdering::Qqpp);
        prop_assert_eq!(back.covariance(), s.covariance());
        let twice = permute_matrix(&permute_matrix(s.covariance()));
        prop_assert_eq!(&twice, s.covariance());
    }

    #[test]
    fn derivative_matches_central_difference(p in params(), k in 0usize..4) {
        let which = Parameter::ALL[k];
        let h = 1e-5;
        let theta = p.get(which);
        let hi = probe_covariance(&p.with(which, theta + h)).unwrap();
        let lo = probe_covariance(&p.with(which, theta - h)).unwrap();
        let fd = (hi - lo) / (2.0 * h);
        let exact = d_sigma(&p, which).unwrap();
        prop_assert!((fd - exact).amax() < 1e-6 * (1.0 + exact.amax()));
    }

    #[test]
    fn fidelity_is_bounded_and_symmetric(a in params(), b in params()) {
        let (sa, sb) = (build_probe(&a).unwrap(), build_probe(&b).unwrap());
        let fab = uhlmann_fidelity(&sa, &sb).unwrap().value;
        let fba = uhlmann_fidelity(&sb, &sa).unwrap().value;
        prop_assert!(fab > 0.0 && fab <= 1.0);
        prop_assert!((fab - fba).abs() < 1e-10);
        prop_assert!((uhlmann_fidelity(&sa, &sa).unwrap().value - 1.0).abs() < 1e-10);
        prop_assert!(bures_distance(&sa, &sa).unwrap() < 1e-5);
    }

    #[test]
    fn engines_agree(p in params(), k in 0usize..3) {
        let which = [Parameter::Phi, Parameter::R, Parameter::Nbar][k];
        let agreement = engine_agreement(&p, which);
        for (engine, r) in &agreement.results {
            prop_assert!(r.is_ok(), "{engine}: {r:?}");
        }
        prop_assert!(agreement.relative_spread < 1e-5, "{agreement:?}");
    }

    #[test]
    fn unitary_qfi_does_not_depend_on_phi(p in params(), phi2 in 0.0f64..3.0) {
        for which in [Parameter::Phi, Parameter::R] {
            let a = qfi(&p, which, Engine::ClosedForm).unwrap().value;
            let b = qfi(&p.with(Parameter::Phi, phi2), which, Engine::ClosedForm).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn full_thermometry_is_unitarily_invariant(p in params()) {
        let q = thermometry_qfi(&p, ThermometryVariant::Full, Engine::ClosedForm).unwrap().value;
        let n = p.nbar;
        prop_assert!((q - 1.0 / (n * (n + 1.0))).abs() < 1e-8 * (1.0 + q));
    }

    #[test]
    fn heterodyne_never_beats_the_qfi(p in params(), k in 0usize..4) {
        let which = Parameter::ALL[k];
        let c = classical_fisher(&p, which).unwrap();
        let q = qfi(&p, which, Engine::ClosedForm).unwrap().value;
        prop_assert!(c >= 0.0);
        prop_assert!(c <= q + 1e-8, "{c} > {q}");
    }
}
