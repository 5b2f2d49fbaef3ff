//! Beam splitter, two-mode squeezer, thermal inputs and probe assembly.
//!
//! The probe is ρ(φ, R) = B(φ) S(R) ρ₀ S(R)† B(φ)† with ρ₀ a product of
//! thermal states. In QQPP ordering
//!
//! ```text
//! B(φ) = diag(Rot, Rot),          Rot = ((cos φ, sin φ), (−sin φ, cos φ))
//! S(R) = diag(Sq, Sq'),           Sq  = ((cosh R, sinh R), (sinh R, cosh R))
//!                                 Sq' = ((cosh R, −sinh R), (−sinh R, cosh R))
//! ```
//!
//! The covariance is built by direct conjugation σ = B S σ₀ Sᵀ Bᵀ. The
//! printed closed form is kept as a checked reference in
//! [`covariance_closed_form`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{permute_matrix, symmetrize, GaussianState, ModeOrdering};

/// Largest squeezing strength accepted; cosh(2R) overflows shortly after.
pub const MAX_SQUEEZING: f64 = 300.0;
/// Entrywise tolerance for MΩMᵀ = Ω, relative to max(1, max|Mᵢⱼ|²).
pub const SYMPLECTIC_TOL: f64 = 1e-12;

/// Parameters of the probe family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub nbar: f64,
    pub mbar: f64,
    pub r: f64,
    pub phi: f64,
}

impl ProbeParams {
    pub fn new(nbar: f64, mbar: f64, r: f64, phi: f64) -> Result<Self> {
        let p = Self { nbar, mbar, r, phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("nbar", self.nbar),
            ("mbar", self.mbar),
            ("r", self.r),
            ("phi", self.phi),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        if self.nbar < 0.0 {
            return Err(Error::NegativeOccupation { value: self.nbar });
        }
        if self.mbar < 0.0 {
            return Err(Error::NegativeOccupation { value: self.mbar });
        }
        if self.r < 0.0 {
            return Err(Error::InvalidParameter {
                name: "r",
                value: self.r,
                reason: "squeezing strength must be non-negative",
            });
        }
        if self.r > MAX_SQUEEZING {
            return Err(Error::ParameterTooLarge { value: self.r });
        }
        Ok(())
    }

    /// Thermal imbalance m̄ − n̄.
    pub fn delta(&self) -> f64 {
        self.mbar - self.nbar
    }

    /// Total thermal occupation n̄ + m̄.
    pub fn total(&self) -> f64 {
        self.nbar + self.mbar
    }

    /// Transmissivity cos²φ.
    pub fn tau(&self) -> f64 {
        self.phi.cos().powi(2)
    }

    pub fn get(&self, which: Parameter) -> f64 {
        match which {
            Parameter::Phi => self.phi,
            Parameter::R => self.r,
            Parameter::Nbar => self.nbar,
            Parameter::Mbar => self.mbar,
        }
    }

    /// Copy with `which` replaced; not validated.
    pub fn with(&self, which: Parameter, value: f64) -> Self {
        let mut p = *self;
        match which {
            Parameter::Phi => p.phi = value,
            Parameter::R => p.r = value,
            Parameter::Nbar => p.nbar = value,
            Parameter::Mbar => p.mbar = value,
        }
        p
    }
}

/// A probe parameter that can be estimated or swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Phi,
    R,
    Nbar,
    Mbar,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [
        Parameter::Phi,
        Parameter::R,
        Parameter::Nbar,
        Parameter::Mbar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Phi => "phi",
            Parameter::R => "r",
            Parameter::Nbar => "nbar",
            Parameter::Mbar => "mbar",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phi" => Ok(Parameter::Phi),
            "r" => Ok(Parameter::R),
            "nbar" => Ok(Parameter::Nbar),
            "mbar" => Ok(Parameter::Mbar),
            _ => Err(Error::UnknownParameter(s.to_string())),
        }
    }
}

/// A 4×4 real matrix preserving Ω in its ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMatrix {
    matrix: Matrix4<f64>,
    ordering: ModeOrdering,
}

/// max|MΩMᵀ − Ω| relative to max(1, max|Mᵢⱼ|²).
pub fn symplectic_defect(m: &Matrix4<f64>, ordering: ModeOrdering) -> f64 {
    let omega = ordering.symplectic_form();
    let scale = m.amax().powi(2).max(1.0);
    (m * omega * m.transpose() - omega).amax() / scale
}

impl SymplecticMatrix {
    pub fn new(matrix: Matrix4<f64>, ordering: ModeOrdering) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let defect = symplectic_defect(&matrix, ordering);
        if defect > SYMPLECTIC_TOL {
            return Err(Error::NotSymplectic { defect });
        }
        Ok(Self { matrix, ordering })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
            ordering: ModeOrdering::Qqpp,
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn ordering(&self) -> ModeOrdering {
        self.ordering
    }

    pub fn to_ordering(&self, ordering: ModeOrdering) -> Self {
        if ordering == self.ordering {
            return self.clone();
        }
        Self {
            matrix: permute_matrix(&self.matrix),
            ordering,
        }
    }

    /// `self · other`, i.e. `other` acts first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.ordering != other.ordering {
            return Err(Error::OrderingMismatch);
        }
        Ok(Self {
            matrix: self.matrix * other.matrix,
            ordering: self.ordering,
        })
    }
}

fn block_diag(a: Matrix2<f64>, b: Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
    m
}

pub(crate) fn beam_splitter_matrix(phi: f64) -> Matrix4<f64> {
    let (s, c) = phi.sin_cos();
    let rot = Matrix2::new(c, s, -s, c);
    block_diag(rot, rot)
}

pub(crate) fn squeezer_matrix(r: f64) -> Matrix4<f64> {
    let (ch, sh) = (r.cosh(), r.sinh());
    block_diag(Matrix2::new(ch, sh, sh, ch), Matrix2::new(ch, -sh, -sh, ch))
}

/// B(φ) in QQPP ordering. Any finite φ is accepted.
pub fn beam_splitter(phi: f64) -> Result<SymplecticMatrix> {
    if !phi.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(SymplecticMatrix {
        matrix: beam_splitter_matrix(phi),
        ordering: ModeOrdering::Qqpp,
    })
}

/// S(R) in QQPP ordering.
pub fn two_mode_squeezer(r: f64) -> Result<SymplecticMatrix> {
    if !r.is_finite() {
        return Err(Error::NonFinite);
    }
    if r < 0.0 {
        return Err(Error::InvalidParameter {
            name: "r",
            value: r,
            reason: "squeezing strength must be non-negative",
        });
    }
    if r > MAX_SQUEEZING {
        return Err(Error::ParameterTooLarge { value: r });
    }
    Ok(SymplecticMatrix {
        matrix: squeezer_matrix(r),
        ordering: ModeOrdering::Qqpp,
    })
}

pub(crate) fn thermal_covariance(nbar: f64, mbar: f64) -> Matrix4<f64> {
    let a = 2.0 * nbar + 1.0;
    let b = 2.0 * mbar + 1.0;
    Matrix4::from_diagonal(&Vector4::new(a, b, a, b))
}

/// Product of thermal states with occupations n̄ (mode 1) and m̄ (mode 2).
pub fn thermal_state(nbar: f64, mbar: f64) -> Result<GaussianState> {
    for v in [nbar, mbar] {
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        if v < 0.0 {
            return Err(Error::NegativeOccupation { value: v });
        }
    }
    GaussianState::new(
        Vector4::zeros(),
        thermal_covariance(nbar, mbar),
        ModeOrdering::Qqpp,
    )
}

/// d' = M d, σ' = M σ Mᵀ.
pub fn apply_symplectic(state: &GaussianState, m: &SymplecticMatrix) -> Result<GaussianState> {
    if state.ordering() != m.ordering() {
        return Err(Error::OrderingMismatch);
    }
    let defect = symplectic_defect(m.matrix(), m.ordering());
    if defect > SYMPLECTIC_TOL {
        return Err(Error::NotSymplectic { defect });
    }
    let mm = m.matrix();
    GaussianState::new(
        mm * state.displacement(),
        mm * state.covariance() * mm.transpose(),
        state.ordering(),
    )
}

/// B S σ₀ Sᵀ Bᵀ without domain checks. Used by finite-difference stencils
/// that may step slightly outside R ≥ 0.
pub(crate) fn covariance_unchecked(p: &ProbeParams) -> Matrix4<f64> {
    let m = beam_splitter_matrix(p.phi) * squeezer_matrix(p.r);
    symmetrize(&(m * thermal_covariance(p.nbar, p.mbar) * m.transpose()))
}

/// Covariance of the probe in QQPP ordering.
pub fn probe_covariance(params: &ProbeParams) -> Result<Matrix4<f64>> {
    params.validate()?;
    Ok(covariance_unchecked(params))
}

/// The probe state B(φ) S(R) ρ₀ S(R)† B(φ)†.
pub fn build_probe(params: &ProbeParams) -> Result<GaussianState> {
    params.validate()?;
    let thermal = thermal_state(params.nbar, params.mbar)?;
    let squeezed = apply_symplectic(&thermal, &two_mode_squeezer(params.r)?)?;
    apply_symplectic(&squeezed, &beam_splitter(params.phi)?)
}

/// The printed closed-form covariance, entry by entry (QQPP, 1-based labels
/// in the comments). Entries printed as 0 are returned as 0.
pub fn printed_covariance(p: &ProbeParams) -> Matrix4<f64> {
    let (s2, c2) = (2.0 * p.phi).sin_cos();
    let (ch, sh) = ((2.0 * p.r).cosh(), (2.0 * p.r).sinh());
    let t = 1.0 + p.total();
    let d = p.delta();
    let s11 = -d * c2 + t * ch + t * s2 * sh;
    let s12 = d * s2 + t * c2 * sh;
    let s22 = d * c2 + t * ch - t * s2 * sh;
    let s33 = -d * c2 + t * ch - t * s2 * sh;
    let s44 = d * c2 + t * ch + t * s2 * sh;
    #[rustfmt::skip]
    let m = Matrix4::new(
        s11, s12, 0.0, 0.0,
        s12, s22, 0.0, 0.0,
        0.0, 0.0, s33, 0.0,
        0.0, 0.0, 0.0, s44,
    );
    m
}

/// An entry where the printed closed form and direct conjugation disagree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedEntry {
    /// 1-based row in QQPP ordering.
    pub row: usize,
    /// 1-based column in QQPP ordering.
    pub col: usize,
    pub printed: f64,
    pub conjugated: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyFlags {
    /// Upper-triangle entries differing by more than [`CLOSED_FORM_TOL`].
    pub entries: Vec<FlaggedEntry>,
}

impl DiscrepancyFlags {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.iter().any(|e| e.row == row && e.col == col)
    }
}

/// Absolute tolerance for printed-vs-conjugated comparisons.
pub const CLOSED_FORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedForm {
    pub matrix: Matrix4<f64>,
    pub flags: DiscrepancyFlags,
}

/// Evaluates the printed covariance and flags entries that disagree with
/// direct conjugation.
pub fn covariance_closed_form(params: &ProbeParams) -> Result<ClosedForm> {
    params.validate()?;
    let printed = printed_covariance(params);
    let exact = covariance_unchecked(params);
    let mut flags = DiscrepancyFlags::default();
    for i in 0..4 {
        for j in i..4 {
            if (printed[(i, j)] - exact[(i, j)]).abs() > CLOSED_FORM_TOL {
                flags.entries.push(FlaggedEntry {
                    row: i + 1,
                    col: j + 1,
                    printed: printed[(i, j)],
                    conjugated: exact[(i, j)],
                });
            }
        }
    }
    Ok(ClosedForm {
        matrix: printed,
        flags,
    })
}

pub(crate) fn d_sigma_unchecked(p: &ProbeParams, which: Parameter) -> Matrix4<f64> {
    let b = beam_splitter_matrix(p.phi);
    let s = squeezer_matrix(p.r);
    match which {
        Parameter::Phi => {
            // Ḃ Bᵀ is the constant generator diag(J, J), J = ((0,1),(−1,0))
            let j = Matrix2::new(0.0, 1.0, -1.0, 0.0);
            let g = block_diag(j, j);
            let sigma = covariance_unchecked(p);
            g * sigma + sigma * g.transpose()
        }
        Parameter::R => {
            // Ṡ = S H with H commuting with S
            let h = block_diag(
                Matrix2::new(0.0, 1.0, 1.0, 0.0),
                Matrix2::new(0.0, -1.0, -1.0, 0.0),
            );
            let sigma_s = s * thermal_covariance(p.nbar, p.mbar) * s.transpose();
            let inner = h * sigma_s + sigma_s * h.transpose();
            symmetrize(&(b * inner * b.transpose()))
        }
        Parameter::Nbar | Parameter::Mbar => {
            let d0 = match which {
                Parameter::Nbar => Vector4::new(2.0, 0.0, 2.0, 0.0),
                _ => Vector4::new(0.0, 2.0, 0.0, 2.0),
            };
            let m = b * s;
            symmetrize(&(m * Matrix4::from_diagonal(&d0) * m.transpose()))
        }
    }
}

/// Analytic ∂σ/∂θ in QQPP ordering.
pub fn d_sigma(params: &ProbeParams, which: Parameter) -> Result<Matrix4<f64>> {
    params.validate()?;
    Ok(d_sigma_unchecked(params, which))
}

/// [`d_sigma`] with the parameter given by name.
pub fn d_sigma_by_name(params: &ProbeParams, which: &str) -> Result<Matrix4<f64>> {
    d_sigma(params, which.parse()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4};

    fn p(n: f64, m: f64, r: f64, phi: f64) -> ProbeParams {
        ProbeParams::new(n, m, r, phi).unwrap()
    }

    #[test]
    fn identities_at_zero() {
        assert_eq!(*beam_splitter(0.0).unwrap().matrix(), Matrix4::identity());
        assert_eq!(
            *two_mode_squeezer(0.0).unwrap().matrix(),
            Matrix4::identity()
        );
    }

    #[test]
    fn half_pi_beam_splitter_swaps_modes() {
        let m = *beam_splitter(FRAC_PI_2).unwrap().matrix();
        let x = Vector4::new(1.0, 2.0, 3.0, 4.0);
        let y = m * x;
        assert!((y - Vector4::new(2.0, -1.0, 4.0, -3.0)).amax() < 1e-15);
    }

    #[test]
    fn group_laws() {
        let a = beam_splitter(0.3)
            .unwrap()
            .compose(&beam_splitter(0.4).unwrap())
            .unwrap();
        assert!((a.matrix() - beam_splitter(0.7).unwrap().matrix()).amax() < 1e-12);
        let s = two_mode_squeezer(0.3)
            .unwrap()
            .compose(&two_mode_squeezer(0.2).unwrap())
            .unwrap();
        assert!((s.matrix() - two_mode_squeezer(0.5).unwrap().matrix()).amax() < 1e-12);
    }

    #[test]
    fn squeezer_guards() {
        assert!(matches!(
            two_mode_squeezer(301.0),
            Err(Error::ParameterTooLarge { .. })
        ));
        assert!(matches!(
            two_mode_squeezer(-0.1),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn printed_matrices_are_qpqp() {
        // QPQP matrices as printed, permuted into QQPP
        let (phi, r) = (0.37_f64, 0.21_f64);
        let (s, c) = phi.sin_cos();
        #[rustfmt::skip]
        let b = Matrix4::new(
            c, 0.0, s, 0.0,
            0.0, c, 0.0, s,
            -s, 0.0, c, 0.0,
            0.0, -s, 0.0, c,
        );
        let (ch, sh) = (r.cosh(), r.sinh());
        #[rustfmt::skip]
        let sq = Matrix4::new(
            ch, 0.0, sh, 0.0,
            0.0, ch, 0.0, -sh,
            sh, 0.0, ch, 0.0,
            0.0, -sh, 0.0, ch,
        );
        assert!((permute_matrix(&b) - beam_splitter_matrix(phi)).amax() < 1e-15);
        assert!((permute_matrix(&sq) - squeezer_matrix(r)).amax() < 1e-15);
    }

    #[test]
    fn thermal_states() {
        assert_eq!(
            *thermal_state(0.0, 0.0).unwrap().covariance(),
            Matrix4::identity()
        );
        assert_eq!(
            *thermal_state(1.0, 20.0).unwrap().covariance(),
            Matrix4::from_diagonal(&Vector4::new(3.0, 41.0, 3.0, 41.0))
        );
        assert!(matches!(
            thermal_state(-1.0, 0.0),
            Err(Error::NegativeOccupation { .. })
        ));
    }

    #[test]
    fn apply_symplectic_cases() {
        let th = thermal_state(1.0, 1.0).unwrap();
        let same = apply_symplectic(&th, &SymplecticMatrix::identity()).unwrap();
        assert_eq!(same, th);
        let vac = thermal_state(0.0, 0.0).unwrap();
        let out = apply_symplectic(&vac, &beam_splitter(0.9).unwrap()).unwrap();
        assert!((out.covariance() - Matrix4::identity()).amax() < 1e-15);
        let sq = apply_symplectic(&th, &two_mode_squeezer(0.5).unwrap()).unwrap();
        assert!((sq.covariance()[(0, 0)] - 3.0 * 1f64.cosh()).abs() < 1e-12);
        let q = th.to_ordering(ModeOrdering::Qpqp);
        assert_eq!(
            apply_symplectic(&q, &beam_splitter(0.1).unwrap()),
            Err(Error::OrderingMismatch)
        );
        let bad = Matrix4::identity() * 2.0;
        assert!(matches!(
            SymplecticMatrix::new(bad, ModeOrdering::Qqpp),
            Err(Error::NotSymplectic { .. })
        ));
    }

    #[test]
    fn probe_examples() {
        let s = build_probe(&p(1.0, 1.0, 0.0, 1.234)).unwrap();
        assert!((s.covariance() - Matrix4::identity() * 3.0).amax() < 1e-14);
        let s = build_probe(&p(1.0, 1.0, 0.5, FRAC_PI_4)).unwrap();
        assert!((s.covariance()[(0, 0)] - 3.0 * E).abs() < 1e-12);
        assert_eq!(*s.displacement(), Vector4::zeros());
    }

    #[test]
    fn closed_form_flags() {
        let cf = covariance_closed_form(&p(1.0, 1.0, 0.0, 0.0)).unwrap();
        assert!(cf.flags.is_empty());
        assert!((cf.matrix - Matrix4::identity() * 3.0).amax() < 1e-14);
        let cf = covariance_closed_form(&p(1.0, 1.0, 0.5, FRAC_PI_4)).unwrap();
        assert!(cf.matrix[(0, 1)].abs() < 1e-15);
        assert!(!cf.flags.contains(1, 2));
        let cf = covariance_closed_form(&p(1.0, 2.0, 0.4, 0.5)).unwrap();
        assert!(cf.flags.contains(3, 4));
        assert_eq!(cf.flags.entries.len(), 1);
    }

    #[test]
    fn sigma34_matches_conjugation_formula() {
        let q = p(1.0, 2.0, 0.4, 0.5);
        let sigma = covariance_unchecked(&q);
        let expected = q.delta() * (2.0 * q.phi).sin()
            - (1.0 + q.total()) * (2.0 * q.phi).cos() * (2.0 * q.r).sinh();
        assert!((sigma[(2, 3)] - expected).abs() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let d = d_sigma(&p(1.0, 2.0, 0.0, 0.0), Parameter::Nbar).unwrap();
        assert!((d - Matrix4::from_diagonal(&Vector4::new(2.0, 0.0, 2.0, 0.0))).amax() < 1e-15);
        let d = d_sigma(&p(1.0, 1.0, 0.0, 0.8), Parameter::Phi).unwrap();
        assert!(d.amax() < 1e-14);
        let d = d_sigma(&p(1.0, 1.0, 0.5, FRAC_PI_4), Parameter::R).unwrap();
        assert!((d[(0, 0)] - 6.0 * E).abs() < 1e-12);
        assert_eq!(
            d_sigma_by_name(&p(1.0, 1.0, 0.5, 0.1), "kappa"),
            Err(Error::UnknownParameter("kappa".into()))
        );
    }

    #[test]
    fn parameter_names_round_trip() {
        for w in Parameter::ALL {
            assert_eq!(w.name().parse::<Parameter>().unwrap(), w);
        }
    }
}
