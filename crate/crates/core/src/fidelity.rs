//! Uhlmann fidelity and Bures distance between Gaussian states.
//!
//! For two-mode states with covariances σ₁, σ₂ and mean difference δ,
//!
//! ```text
//! F = 4 exp(−½ δᵀ(σ₁+σ₂)⁻¹δ) / (a − √(a² − Δ)),   a = √Γ + √Λ
//! Γ = |I − Ωσ₁Ωσ₂|,  Λ = |σ₁ + iΩ| |σ₂ + iΩ|,  Δ = |σ₁ + σ₂|
//! ```
//!
//! with |σ + iΩ| = (Λ₁² − 1)(Λ₂² − 1) in terms of the symplectic eigenvalues.
//! The denominator is evaluated as Δ / (a + √(a² − Δ)), which is the same
//! quantity without the cancellation between a and √(a² − Δ).

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{det4, validate_covariance, GaussianState, ModeOrdering, SingleModeState};

/// Allowed excess of F above 1 before it is treated as an error.
pub const OVERSHOOT_TOL: f64 = 1e-12;
/// Smallest admissible denominator a − √(a² − Δ).
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// The three determinant scalars entering the fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetTerms {
    /// |I − Ωσ₁Ωσ₂|
    pub gamma: f64,
    /// |σ₁ + iΩ| |σ₂ + iΩ|
    pub lambda: f64,
    /// |σ₁ + σ₂|
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityBreakdown {
    /// Fidelity in (0, 1].
    pub value: f64,
    /// −½ δᵀ(σ₁+σ₂)⁻¹δ.
    pub gaussian_exponent: f64,
    pub det_terms: DetTerms,
    /// Smallest magnitude among Γ, Δ and the denominator a − √(a² − Δ).
    pub conditioning: f64,
}

/// Symplectic eigenvalues within this of 1 mark a pure state.
const PURE_TOL: f64 = 1e-10;

/// |σ + iΩ| for a physical two-mode covariance, and whether the state is pure.
fn uncertainty_det(sigma: &Matrix4<f64>, ordering: ModeOrdering) -> Result<(f64, bool)> {
    let report = validate_covariance(sigma, ordering)?;
    if !report.is_physical {
        return Err(Error::NotPhysical {
            min_symplectic: report.symplectic_eigenvalues[1],
        });
    }
    let [l1, l2] = report.symplectic_eigenvalues;
    Ok((
        ((l1 * l1 - 1.0) * (l2 * l2 - 1.0)).max(0.0),
        l1 - 1.0 < PURE_TOL,
    ))
}

/// Fidelity from raw covariances and mean difference, both in `ordering`.
pub(crate) fn fidelity_parts(
    sigma1: &Matrix4<f64>,
    sigma2: &Matrix4<f64>,
    mean_difference: &Vector4<f64>,
    ordering: ModeOrdering,
) -> Result<FidelityBreakdown> {
    let omega = ordering.symplectic_form();
    let gamma = det4(&(Matrix4::identity() - omega * sigma1 * omega * sigma2));
    let (u1, pure1) = uncertainty_det(sigma1, ordering)?;
    let (u2, pure2) = uncertainty_det(sigma2, ordering)?;
    let lambda = u1 * u2;
    let sum = sigma1 + sigma2;
    let delta = det4(&sum);
    let chol = sum.cholesky().ok_or(Error::Singular)?;
    let gaussian_exponent = -0.5 * mean_difference.dot(&chol.solve(mean_difference));

    let a = gamma.max(0.0).sqrt() + lambda.sqrt();
    // For two pure states Γ = Δ exactly; the computed difference is rounding
    // noise whose square root would dominate 1 − F.
    let root = if pure1 && pure2 {
        0.0
    } else {
        (a * a - delta).max(0.0).sqrt()
    };
    let upper = a + root;
    let denominator = delta / upper;
    let conditioning = gamma.abs().min(delta.abs()).min(denominator.abs());
    if !(denominator >= DENOMINATOR_FLOOR) {
        return Err(Error::DenominatorDegenerate { value: denominator });
    }
    let value = 4.0 * gaussian_exponent.exp() * upper / delta;
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    if value > 1.0 + OVERSHOOT_TOL {
        return Err(Error::FidelityOvershoot { value });
    }
    Ok(FidelityBreakdown {
        value: value.min(1.0),
        gaussian_exponent,
        det_terms: DetTerms {
            gamma,
            lambda,
            delta,
        },
        conditioning,
    })
}

/// Uhlmann fidelity (tr√(√ρ₁ ρ₂ √ρ₁))² of two two-mode Gaussian states.
pub fn uhlmann_fidelity(s1: &GaussianState, s2: &GaussianState) -> Result<FidelityBreakdown> {
    if s1.ordering() != s2.ordering() {
        return Err(Error::OrderingMismatch);
    }
    fidelity_parts(
        s1.covariance(),
        s2.covariance(),
        &(s1.displacement() - s2.displacement()),
        s1.ordering(),
    )
}

/// Bures distance √(2(1 − √F)).
pub fn bures_distance(s1: &GaussianState, s2: &GaussianState) -> Result<f64> {
    let f = uhlmann_fidelity(s1, s2)?.value;
    Ok(bures_from_fidelity(f))
}

/// √(2(1 − √F)); gaps below rounding level map to exactly 0.
pub fn bures_from_fidelity(f: f64) -> f64 {
    let gap = 1.0 - f.sqrt();
    if gap < 4.0 * f64::EPSILON {
        return 0.0;
    }
    (2.0 * gap).sqrt()
}

pub(crate) fn single_mode_fidelity_parts(
    sigma1: &Matrix2<f64>,
    sigma2: &Matrix2<f64>,
    mean_difference: &Vector2<f64>,
) -> Result<f64> {
    let sum = sigma1 + sigma2;
    let big = sum.determinant();
    let small = ((sigma1.determinant() - 1.0) * (sigma2.determinant() - 1.0)).max(0.0);
    let chol = sum.cholesky().ok_or(Error::Singular)?;
    let exponent = -0.5 * mean_difference.dot(&chol.solve(mean_difference));
    // 2 / (√(Δ+δ) − √δ), rationalised
    let value = 2.0 * ((big + small).sqrt() + small.sqrt()) / big * exponent.exp();
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    if value > 1.0 + OVERSHOOT_TOL {
        return Err(Error::FidelityOvershoot { value });
    }
    Ok(value.min(1.0))
}

/// Fidelity of two single-mode Gaussian states.
pub fn single_mode_fidelity(s1: &SingleModeState, s2: &SingleModeState) -> Result<f64> {
    single_mode_fidelity_parts(
        s1.covariance(),
        s2.covariance(),
        &(s1.displacement() - s2.displacement()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::ProbeParams;
    use crate::channels::{
        apply_symplectic, beam_splitter, build_probe, thermal_state, two_mode_squeezer,
    };

    fn probe(n: f64, m: f64, r: f64, phi: f64) -> GaussianState {
        build_probe(&ProbeParams::new(n, m, r, phi).unwrap()).unwrap()
    }

    #[test]
    fn self_fidelity_is_one() {
        let s = probe(1.0, 1.0, 0.3, 0.4);
        let f = uhlmann_fidelity(&s, &s).unwrap();
        assert!((f.value - 1.0).abs() < 1e-12);
        assert_eq!(bures_distance(&s, &s).unwrap(), 0.0);
    }

    #[test]
    fn vacuum_against_thermal() {
        for nbar in [0.5, 1.0, 3.0] {
            let f = uhlmann_fidelity(
                &thermal_state(0.0, 0.0).unwrap(),
                &thermal_state(nbar, 0.0).unwrap(),
            )
            .unwrap();
            assert!((f.value - 1.0 / (nbar + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn pure_pair_uses_overlap() {
        // two squeezed vacua: |⟨ψ(r1)|ψ(r2)⟩|² = 1 / cosh²(r1 − r2)
        let a = probe(0.0, 0.0, 0.2, 0.0);
        let b = probe(0.0, 0.0, 0.5, 0.0);
        let f = uhlmann_fidelity(&a, &b).unwrap().value;
        assert!((f - 1.0 / 0.3f64.cosh().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn coherent_states() {
        // |⟨α|β⟩|² = exp(−|α−β|²) with d = 2(Re α, Im α) in vacuum-variance-1 units
        let vac = GaussianState::vacuum();
        let shifted = vac
            .with_displacement(Vector4::new(2.0, 0.0, 0.0, 0.0))
            .unwrap();
        let f = uhlmann_fidelity(&vac, &shifted).unwrap();
        assert!((f.value - (-1.0f64).exp()).abs() < 1e-14);
        assert!((f.gaussian_exponent + 1.0).abs() < 1e-14);
    }

    #[test]
    fn bures_of_quarter_fidelity() {
        assert!((bures_from_fidelity(0.25) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symplectic_invariance() {
        let a = probe(1.0, 2.0, 0.2, 0.3);
        let b = probe(1.5, 0.7, 0.35, 1.1);
        let f0 = uhlmann_fidelity(&a, &b).unwrap().value;
        let m = two_mode_squeezer(0.4)
            .unwrap()
            .compose(&beam_splitter(0.9).unwrap())
            .unwrap();
        let f1 = uhlmann_fidelity(
            &apply_symplectic(&a, &m).unwrap(),
            &apply_symplectic(&b, &m).unwrap(),
        )
        .unwrap()
        .value;
        assert!((f0 - f1).abs() < 1e-10);
    }

    #[test]
    fn ordering_mismatch() {
        let a = probe(1.0, 2.0, 0.2, 0.3);
        let b = a.to_ordering(ModeOrdering::Qpqp);
        assert_eq!(uhlmann_fidelity(&a, &b), Err(Error::OrderingMismatch));
        let f = uhlmann_fidelity(
            &b,
            &probe(1.0, 2.0, 0.25, 0.3).to_ordering(ModeOrdering::Qpqp),
        )
        .unwrap()
        .value;
        let g = uhlmann_fidelity(&a, &probe(1.0, 2.0, 0.25, 0.3))
            .unwrap()
            .value;
        assert!((f - g).abs() < 1e-13);
    }

    #[test]
    fn single_mode_values() {
        let f = single_mode_fidelity(
            &SingleModeState::thermal(0.0).unwrap(),
            &SingleModeState::thermal(1.0).unwrap(),
        )
        .unwrap();
        assert!((f - 0.5).abs() < 1e-15);
        // thermal pair: (Σ √(pₙ qₙ))² summed in closed form
        let (a, b) = (0.7f64, 1.9f64);
        let f = single_mode_fidelity(
            &SingleModeState::thermal(a).unwrap(),
            &SingleModeState::thermal(b).unwrap(),
        )
        .unwrap();
        let x = (a * b / ((a + 1.0) * (b + 1.0))).sqrt();
        let expected = (1.0 / ((a + 1.0) * (b + 1.0)).sqrt() / (1.0 - x)).powi(2);
        assert!((f - expected).abs() < 1e-13);
    }
}
