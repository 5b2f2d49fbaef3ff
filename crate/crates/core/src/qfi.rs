//! Quantum Fisher information of the probe family.
//!
//! Three engines evaluate the same quantity by different routes:
//!
//! * **closed form**: the determinant/trace expression in C = iΩσ,
//!
//!   ```text
//!   I = ḋᵀσ⁻¹ḋ + [ |C| tr(C⁻¹Ċ)² + √|I+C²| tr((I+C²)⁻¹Ċ)²
//!                 + 4(Λ₁²−Λ₂²)(−Λ̇₁²/(Λ₁⁴−1) + Λ̇₂²/(Λ₂⁴−1)) ] / (2(|C|−1))
//!   ```
//!
//!   with Λ̇ᵢ obtained analytically from d tr(C²)/dθ and d|C|/dθ;
//! * **eigen form**: the same expression written in the eigenbasis of C,
//!   M = V⁻¹ĊV, where the traces become Σᵢⱼ MᵢⱼMⱼᵢ f(λᵢ, λⱼ) and Λ̇ᵢ = Mᵢᵢ;
//! * **fidelity limit**: 8(1 − √F(θ − s/2, θ + s/2))/s², Richardson
//!   extrapolated over s and s/2.
//!
//! The first two are singular for pure states (|C| = 1); the fidelity limit
//! is not.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::channels::{covariance_unchecked, d_sigma_unchecked, Parameter, ProbeParams};
use crate::error::{Error, Result};
use crate::fidelity::fidelity_parts;
use crate::phase_space::{det4, symmetrize, validate_covariance, ModeOrdering};

/// |C| − 1 below this is treated as a pure state by the analytic engines.
pub const PURE_DET_TOL: f64 = 1e-8;
/// min Λ − 1 below this is treated as a pure mode by the analytic engines.
pub const PURE_LAMBDA_TOL: f64 = 1e-6;
/// Λ₁ − Λ₂ below this drops the symplectic-eigenvalue term.
pub const DEGENERACY_GUARD: f64 = 1e-7;
/// Default fidelity-limit step.
pub const DEFAULT_STEP: f64 = 1e-3;
pub const MIN_STEP: f64 = 1e-6;
pub const MAX_STEP: f64 = 1e-2;
/// Negative QFI values above this are rounding noise and are clipped to 0.
pub const NEGATIVE_FLOOR: f64 = -1e-9;
/// 1 − √F at or below this is indistinguishable from rounding.
const NOISE_GAP: f64 = 4.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    ClosedForm,
    EigenForm,
    FidelityLimit,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::ClosedForm, Engine::EigenForm, Engine::FidelityLimit];

    pub fn name(self) -> &'static str {
        match self {
            Engine::ClosedForm => "closed_form",
            Engine::EigenForm => "eigen_form",
            Engine::FidelityLimit => "fidelity_limit",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "closed_form" | "closed" => Ok(Engine::ClosedForm),
            "eigen_form" | "eigen" => Ok(Engine::EigenForm),
            "fidelity_limit" | "fidelity" => Ok(Engine::FidelityLimit),
            other => Err(format!("unknown engine `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QfiFlags {
    /// min Λ within 1e−3 of 1.
    pub near_pure: bool,
    /// Λ₁ − Λ₂ below [`DEGENERACY_GUARD`]; the Λ-term was set to 0.
    pub near_degenerate: bool,
    /// The fidelity-limit step was enlarged to escape cancellation.
    pub step_limited: bool,
}

impl QfiFlags {
    pub fn is_empty(&self) -> bool {
        !(self.near_pure || self.near_degenerate || self.step_limited)
    }

    /// Names of the raised flags.
    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.near_pure {
            out.push("near_pure");
        }
        if self.near_degenerate {
            out.push("near_degenerate");
        }
        if self.step_limited {
            out.push("step_limited");
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiResult {
    pub value: f64,
    pub engine: Engine,
    /// Symplectic eigenvalues Λ₁ ≥ Λ₂ of the state.
    pub lambda_pair: [f64; 2],
    pub flags: QfiFlags,
}

fn clip(value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    if value < NEGATIVE_FLOOR {
        return Err(Error::NegativeQfi { value });
    }
    Ok(value.max(0.0))
}

struct Checked {
    lambda: [f64; 2],
    det: f64,
    flags: QfiFlags,
}

fn check_mixed(sigma: &Matrix4<f64>, ordering: ModeOrdering) -> Result<Checked> {
    let report = validate_covariance(sigma, ordering)?;
    let lambda = report.symplectic_eigenvalues;
    if !report.is_physical {
        return Err(Error::NotPhysical {
            min_symplectic: lambda[1],
        });
    }
    let det = det4(sigma);
    if det - 1.0 < PURE_DET_TOL || lambda[1] < 1.0 + PURE_LAMBDA_TOL {
        return Err(Error::PureStateSingularity {
            det_minus_one: det - 1.0,
            min_symplectic: lambda[1],
        });
    }
    let flags = QfiFlags {
        near_pure: lambda[1] < 1.0 + 1e-3,
        near_degenerate: lambda[0] - lambda[1] < DEGENERACY_GUARD,
        step_limited: false,
    };
    Ok(Checked { lambda, det, flags })
}

/// 4(Λ₁²−Λ₂²)(−Λ̇₁²/(Λ₁⁴−1) + Λ̇₂²/(Λ₂⁴−1)), or 0 under the degeneracy guard.
fn lambda_term(lambda: [f64; 2], lambda_dot: [f64; 2], degenerate: bool) -> f64 {
    if degenerate {
        return 0.0;
    }
    let [l1, l2] = lambda;
    let [d1, d2] = lambda_dot;
    4.0 * (l1 * l1 - l2 * l2) * (-d1 * d1 / (l1.powi(4) - 1.0) + d2 * d2 / (l2.powi(4) - 1.0))
}

/// Λ̇₁, Λ̇₂ from the derivatives of tr(C²) and |C|.
fn lambda_dot_trace(
    sigma: &Matrix4<f64>,
    sigma_inv: &Matrix4<f64>,
    dsigma: &Matrix4<f64>,
    omega: &Matrix4<f64>,
    lambda: [f64; 2],
    det: f64,
) -> [f64; 2] {
    let os = omega * sigma;
    // tr C² = −tr(ΩσΩσ)
    let t = -(os * os).trace();
    let t_dot = -2.0 * (os * omega * dsigma).trace();
    let det_dot = det * (sigma_inv * dsigma).trace();
    let [l1, l2] = lambda;
    // √((tr C²)² − 16|C|) = 2(Λ₁² − Λ₂²), taken from the spectrum
    let rt = 2.0 * (l1 * l1 - l2 * l2);
    let cross = (t * t_dot - 8.0 * det_dot) / rt;
    let a_dot = 0.25 * (t_dot + cross);
    let b_dot = 0.25 * (t_dot - cross);
    [a_dot / (2.0 * l1), b_dot / (2.0 * l2)]
}

/// Closed-form QFI from the moments and their derivatives.
pub fn closed_form_from_moments(
    sigma: &Matrix4<f64>,
    dsigma: &Matrix4<f64>,
    ddisp: &Vector4<f64>,
    ordering: ModeOrdering,
) -> Result<QfiResult> {
    let sigma = symmetrize(sigma);
    let checked = check_mixed(&sigma, ordering)?;
    let omega = ordering.symplectic_form();
    let sigma_inv = sigma.cholesky().ok_or(Error::Singular)?.inverse();
    let x = sigma_inv * dsigma;
    let t1 = checked.det * (x * x).trace();
    // I + C² = I − ΩσΩσ and ((I + C²)⁻¹Ċ)² = −((I − ΩσΩσ)⁻¹Ωσ̇)²
    let m = Matrix4::identity() - omega * sigma * omega * sigma;
    let y = m.lu().solve(&(omega * dsigma)).ok_or(Error::Singular)?;
    let t2 = -det4(&m).max(0.0).sqrt() * (y * y).trace();
    let lambda_dot = lambda_dot_trace(
        &sigma,
        &sigma_inv,
        dsigma,
        &omega,
        checked.lambda,
        checked.det,
    );
    let t3 = lambda_term(checked.lambda, lambda_dot, checked.flags.near_degenerate);
    let displacement = ddisp.dot(&(sigma_inv * ddisp));
    let value = clip((t1 + t2 + t3) / (2.0 * (checked.det - 1.0)) + displacement)?;
    Ok(QfiResult {
        value,
        engine: Engine::ClosedForm,
        lambda_pair: checked.lambda,
        flags: checked.flags,
    })
}

/// Spectral-form QFI from the moments and their derivatives.
pub fn eigen_form_from_moments(
    sigma: &Matrix4<f64>,
    dsigma: &Matrix4<f64>,
    ddisp: &Vector4<f64>,
    ordering: ModeOrdering,
) -> Result<QfiResult> {
    let sigma = symmetrize(sigma);
    let checked = check_mixed(&sigma, ordering)?;
    let omega = ordering.symplectic_form();
    let chol = sigma.cholesky().ok_or(Error::Singular)?;
    let l = chol.l();
    let l_inv_t = l.try_inverse().ok_or(Error::Singular)?.transpose();
    // C = L⁻ᵀ H Lᵀ with H = i LᵀΩL Hermitian; V = L⁻ᵀU diagonalises C
    let a = l.transpose() * omega * l;
    let i = Complex::new(0.0, 1.0);
    let h = a.map(|x| i * x);
    let eig = SymmetricEigen::new(h);
    let u = eig.eigenvectors;
    let lam = eig.eigenvalues;
    let n = (l.transpose() * omega * dsigma * l_inv_t).map(|x| i * x);
    let m = u.adjoint() * n * u;

    let p = checked.det;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            let mm = (m[(r, c)] * m[(c, r)]).re;
            s1 += mm / (lam[r] * lam[c]);
            s2 += mm / ((1.0 + lam[r] * lam[r]) * (1.0 + lam[c] * lam[c]));
        }
    }
    let root_prod: f64 = lam.iter().map(|x| (1.0 + x * x).sqrt()).product();
    let t1 = p * s1;
    let t2 = root_prod * s2;

    // positive branches, largest first
    let mut idx: Vec<usize> = (0..4).filter(|&k| lam[k] > 0.0).collect();
    idx.sort_by(|&x, &y| lam[y].total_cmp(&lam[x]));
    let t3 = if idx.len() == 2 {
        let lambda = [lam[idx[0]], lam[idx[1]]];
        let lambda_dot = [m[(idx[0], idx[0])].re, m[(idx[1], idx[1])].re];
        lambda_term(lambda, lambda_dot, checked.flags.near_degenerate)
    } else {
        return Err(Error::ComplexSpectrum { residue: f64::NAN });
    };
    let displacement = ddisp.dot(&chol.solve(ddisp));
    let value = clip((t1 + t2 + t3) / (2.0 * (p - 1.0)) + displacement)?;
    Ok(QfiResult {
        value,
        engine: Engine::EigenForm,
        lambda_pair: checked.lambda,
        flags: checked.flags,
    })
}

/// Closed-form QFI of the probe with respect to `which`.
pub fn qfi_closed_form(params: &ProbeParams, which: Parameter) -> Result<QfiResult> {
    params.validate()?;
    closed_form_from_moments(
        &covariance_unchecked(params),
        &d_sigma_unchecked(params, which),
        &Vector4::zeros(),
        ModeOrdering::Qqpp,
    )
}

/// Spectral-form QFI of the probe with respect to `which`.
pub fn qfi_eigen_form(params: &ProbeParams, which: Parameter) -> Result<QfiResult> {
    params.validate()?;
    eigen_form_from_moments(
        &covariance_unchecked(params),
        &d_sigma_unchecked(params, which),
        &Vector4::zeros(),
        ModeOrdering::Qqpp,
    )
}

/// Analytic Λ̇₁, Λ̇₂ for the probe.
pub fn lambda_dot(params: &ProbeParams, which: Parameter) -> Result<[f64; 2]> {
    params.validate()?;
    let sigma = covariance_unchecked(params);
    let report = validate_covariance(&sigma, ModeOrdering::Qqpp)?;
    let lambda = report.symplectic_eigenvalues;
    let sigma_inv = sigma.cholesky().ok_or(Error::Singular)?.inverse();
    Ok(lambda_dot_trace(
        &sigma,
        &sigma_inv,
        &d_sigma_unchecked(params, which),
        &ModeOrdering::Qqpp.symplectic_form(),
        lambda,
        det4(&sigma),
    ))
}

/// Symmetric-stencil estimate from a fidelity function `f(θ₁, θ₂)`.
///
/// Returns the Richardson-extrapolated value and whether the step had to be
/// enlarged.
pub(crate) fn fidelity_limit_core<F>(step: f64, fidelity: F) -> Result<(f64, bool)>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(MIN_STEP..=MAX_STEP).contains(&step) {
        return Err(Error::StepOutOfRange { step });
    }
    let q = |s: f64| -> Result<(f64, f64)> {
        let f = fidelity(s)?;
        let gap = 1.0 - f.sqrt();
        Ok((8.0 * gap / (s * s), gap))
    };
    let mut s = step;
    let mut limited = false;
    loop {
        let (q_half, gap_half) = q(0.5 * s)?;
        let cancelling = gap_half < 1e3 * f64::EPSILON;
        if cancelling && 2.0 * s <= MAX_STEP {
            s *= 2.0;
            limited = true;
            continue;
        }
        let (q_full, gap_full) = q(s)?;
        if gap_half <= NOISE_GAP && gap_full <= 4.0 * NOISE_GAP {
            // F equals 1 to rounding at the largest step: below resolution
            return Ok((0.0, true));
        }
        return Ok(((4.0 * q_half - q_full) / 3.0, limited || cancelling));
    }
}

/// Fidelity-limit QFI with the given outer step.
pub fn qfi_fidelity_limit(params: &ProbeParams, which: Parameter, step: f64) -> Result<QfiResult> {
    params.validate()?;
    let theta = params.get(which);
    let fidelity = |s: f64| -> Result<f64> {
        let lo = params.with(which, theta - 0.5 * s);
        let hi = params.with(which, theta + 0.5 * s);
        if lo.nbar < 0.0 || lo.mbar < 0.0 {
            return Err(Error::StepOutOfDomain);
        }
        Ok(fidelity_parts(
            &covariance_unchecked(&lo),
            &covariance_unchecked(&hi),
            &Vector4::zeros(),
            ModeOrdering::Qqpp,
        )?
        .value)
    };
    let (raw, limited) = fidelity_limit_core(step, fidelity)?;
    let report = validate_covariance(&covariance_unchecked(params), ModeOrdering::Qqpp)?;
    let lambda = report.symplectic_eigenvalues;
    Ok(QfiResult {
        value: clip(raw)?,
        engine: Engine::FidelityLimit,
        lambda_pair: lambda,
        flags: QfiFlags {
            near_pure: lambda[1] < 1.0 + 1e-3,
            near_degenerate: lambda[0] - lambda[1] < DEGENERACY_GUARD,
            step_limited: limited,
        },
    })
}

/// Dispatches to `engine` (fidelity limit with [`DEFAULT_STEP`]).
pub fn qfi(params: &ProbeParams, which: Parameter, engine: Engine) -> Result<QfiResult> {
    match engine {
        Engine::ClosedForm => qfi_closed_form(params, which),
        Engine::EigenForm => qfi_eigen_form(params, which),
        Engine::FidelityLimit => qfi_fidelity_limit(params, which, DEFAULT_STEP),
    }
}

/// All three engines at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineAgreement {
    pub results: Vec<(Engine, Result<QfiResult>)>,
    /// (max − min) / max over the engines that succeeded.
    pub relative_spread: f64,
}

pub fn engine_agreement(params: &ProbeParams, which: Parameter) -> EngineAgreement {
    let results: Vec<(Engine, Result<QfiResult>)> = Engine::ALL
        .iter()
        .map(|&e| (e, qfi(params, which, e)))
        .collect();
    let values: Vec<f64> = results
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().map(|q| q.value))
        .collect();
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let relative_spread = if values.is_empty() {
        f64::NAN
    } else if hi == 0.0 {
        0.0
    } else {
        (hi - lo) / hi.abs()
    };
    EngineAgreement {
        results,
        relative_spread,
    }
}

/// Closed-form QFI of a single-mode Gaussian state with zero-mean
/// derivative: ½tr(σ⁻¹σ̇)²/(1+P²) + 2Ṗ²/(1−P⁴), P = 1/√|σ| the purity.
pub fn single_mode_closed_form(
    sigma: &nalgebra::Matrix2<f64>,
    dsigma: &nalgebra::Matrix2<f64>,
) -> Result<f64> {
    let det = sigma.determinant();
    if det - 1.0 < PURE_DET_TOL {
        return Err(Error::PureStateSingularity {
            det_minus_one: det - 1.0,
            min_symplectic: det.max(0.0).sqrt(),
        });
    }
    let inv = sigma.try_inverse().ok_or(Error::Singular)?;
    let x = inv * dsigma;
    let purity = 1.0 / det.sqrt();
    let det_dot = det * x.trace();
    let purity_dot = -0.5 * det_dot * det.powf(-1.5);
    let value = 0.5 * (x * x).trace() / (1.0 + purity * purity)
        + 2.0 * purity_dot * purity_dot / (1.0 - purity.powi(4));
    clip(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn p(n: f64, m: f64, r: f64, phi: f64) -> ProbeParams {
        ProbeParams::new(n, m, r, phi).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn vanishing_phi_qfi_for_balanced_unsqueezed() {
        for e in Engine::ALL {
            for phi in [0.3, 1.0, 2.5] {
                let q = qfi(&p(1.0, 1.0, 0.0, phi), Parameter::Phi, e).unwrap();
                assert!(q.value <= 1e-10, "{e} {phi} {}", q.value);
            }
        }
    }

    #[test]
    fn thermal_nbar_value() {
        for e in Engine::ALL {
            let q = qfi(&p(1.0, 1.0, 0.0, 0.0), Parameter::Nbar, e).unwrap();
            assert!(rel(q.value, 0.5) < 1e-8, "{e} {}", q.value);
        }
    }

    #[test]
    fn engines_agree_at_sample_points() {
        let points = [
            (p(1.0, 2.0, 0.3, 0.6), Parameter::Phi, 3.821177),
            (p(1.0, 2.0, 0.3, 0.6), Parameter::R, 8.0),
            (p(1.0, 2.0, 0.3, 0.6), Parameter::Nbar, 0.5),
            (p(1.0, 2.0, 0.3, 0.6), Parameter::Mbar, 1.0 / 6.0),
            (p(1.0, 1.0, 0.25, FRAC_PI_4), Parameter::R, 7.2),
        ];
        for (params, which, reference) in points {
            let agreement = engine_agreement(&params, which);
            for (e, r) in &agreement.results {
                let v = r.as_ref().unwrap().value;
                assert!(rel(v, reference) < 1e-6, "{e} {which}: {v} vs {reference}");
            }
            assert!(agreement.relative_spread < 1e-6);
        }
    }

    #[test]
    fn pure_states_refused_by_analytic_engines() {
        let q = p(0.0, 0.0, 0.3, 0.2);
        assert!(matches!(
            qfi_closed_form(&q, Parameter::R),
            Err(Error::PureStateSingularity { .. })
        ));
        assert!(matches!(
            qfi_eigen_form(&q, Parameter::R),
            Err(Error::PureStateSingularity { .. })
        ));
        // pure two-mode squeezed vacuum: QFI_R = 4
        let f = qfi_fidelity_limit(&q, Parameter::R, DEFAULT_STEP).unwrap();
        assert!(rel(f.value, 4.0) < 1e-7, "{}", f.value);
    }

    #[test]
    fn step_range_is_enforced() {
        let q = p(1.0, 1.0, 0.3, 0.2);
        assert!(matches!(
            qfi_fidelity_limit(&q, Parameter::R, 0.5),
            Err(Error::StepOutOfRange { .. })
        ));
        assert!(matches!(
            qfi_fidelity_limit(&p(0.0, 1.0, 0.3, 0.2), Parameter::Nbar, DEFAULT_STEP),
            Err(Error::StepOutOfDomain)
        ));
    }

    #[test]
    fn r_stencil_may_cross_zero() {
        let q = qfi_fidelity_limit(&p(1.0, 1.0, 0.0, 0.4), Parameter::R, DEFAULT_STEP).unwrap();
        let c = qfi_closed_form(&p(1.0, 1.0, 0.0, 0.4), Parameter::R).unwrap();
        assert!(rel(q.value, c.value) < 1e-6);
    }

    #[test]
    fn balanced_state_is_flagged_degenerate() {
        let q = qfi_closed_form(&p(1.0, 1.0, 0.5, 0.3), Parameter::Phi).unwrap();
        assert!(q.flags.near_degenerate);
        assert!((q.lambda_pair[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn lambda_dot_matches_finite_difference() {
        let q = p(0.7, 1.9, 0.35, 1.2);
        for which in Parameter::ALL {
            let analytic = lambda_dot(&q, which).unwrap();
            let h = 1e-5;
            let lam = |v: f64| {
                validate_covariance(&covariance_unchecked(&q.with(which, v)), ModeOrdering::Qqpp)
                    .unwrap()
                    .symplectic_eigenvalues
            };
            let (a, b) = (lam(q.get(which) + h), lam(q.get(which) - h));
            for k in 0..2 {
                let fd = (a[k] - b[k]) / (2.0 * h);
                assert!(
                    (analytic[k] - fd).abs() < 1e-6 * fd.abs().max(1.0),
                    "{which} {k}"
                );
            }
        }
    }

    #[test]
    fn single_mode_thermal() {
        let s = nalgebra::Matrix2::identity() * 3.0;
        let d = nalgebra::Matrix2::identity() * 2.0;
        assert!((single_mode_closed_form(&s, &d).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn phi_qfi_does_not_depend_on_phi() {
        let a = qfi_closed_form(&p(1.0, 20.0, 0.5, 0.2), Parameter::Phi)
            .unwrap()
            .value;
        let b = qfi_closed_form(&p(1.0, 20.0, 0.5, PI / 2.0), Parameter::Phi)
            .unwrap()
            .value;
        assert!(rel(a, b) < 1e-10);
    }
}
