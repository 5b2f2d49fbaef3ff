//! Quadrature conventions and two-mode Gaussian states.
//!
//! Units are ħ = 2 with vacuum quadrature variance 1, so a thermal mode with
//! mean occupation n̄ has variance 2n̄ + 1. The canonical ordering is
//! (q₁, q₂, p₁, p₂), for which Ω = ((0, I₂), (−I₂, 0)). States can be
//! converted to (q₁, p₁, q₂, p₂) and back; the conversion is an exact
//! permutation of entries.
//!
//! Symplectic eigenvalues are computed through the congruence σ = L Lᵀ:
//! iΩσ is similar to the Hermitian matrix i·LᵀΩL, whose spectrum is obtained
//! from the real symmetric problem (LᵀΩL)ᵀ(LᵀΩL).

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed below 1 for symplectic eigenvalues of a physical state.
pub const PHYSICALITY_TOL: f64 = 1e-12;
/// Tolerance on the ± pairing of the spectrum of iΩσ.
pub const PAIRING_TOL: f64 = 1e-10;

const SWAP: [usize; 4] = [0, 2, 1, 3];

/// Quadrature ordering of phase-space vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModeOrdering {
    /// (q₁, q₂, p₁, p₂)
    Qqpp,
    /// (q₁, p₁, q₂, p₂)
    Qpqp,
}

/// One of the two bosonic modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
}

impl ModeOrdering {
    pub fn other(self) -> Self {
        match self {
            ModeOrdering::Qqpp => ModeOrdering::Qpqp,
            ModeOrdering::Qpqp => ModeOrdering::Qqpp,
        }
    }

    pub fn symplectic_form(self) -> Matrix4<f64> {
        #[rustfmt::skip]
        let qqpp = Matrix4::new(
             0.0,  0.0, 1.0, 0.0,
             0.0,  0.0, 0.0, 1.0,
            -1.0,  0.0, 0.0, 0.0,
             0.0, -1.0, 0.0, 0.0,
        );
        match self {
            ModeOrdering::Qqpp => qqpp,
            ModeOrdering::Qpqp => permute_matrix(&qqpp),
        }
    }

    /// Indices of (q, p) for `mode` in this ordering.
    pub fn quadrature_indices(self, mode: Mode) -> (usize, usize) {
        match (self, mode) {
            (ModeOrdering::Qqpp, Mode::One) => (0, 2),
            (ModeOrdering::Qqpp, Mode::Two) => (1, 3),
            (ModeOrdering::Qpqp, Mode::One) => (0, 1),
            (ModeOrdering::Qpqp, Mode::Two) => (2, 3),
        }
    }
}

/// Swap between QQPP and QPQP index order. Involutive.
pub fn permute_matrix(m: &Matrix4<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[(SWAP[i], SWAP[j])])
}

/// Swap between QQPP and QPQP index order. Involutive.
pub fn permute_vector(v: &Vector4<f64>) -> Vector4<f64> {
    Vector4::from_fn(|i, _| v[SWAP[i]])
}

pub(crate) fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn det4(m: &Matrix4<f64>) -> f64 {
    m.lu().determinant()
}

/// tr[C²] and |C| for C = iΩσ. Since i⁴ = 1 and |Ω| = 1, |C| = |σ|.
pub(crate) fn trace_invariants(sigma: &Matrix4<f64>, omega: &Matrix4<f64>) -> (f64, f64) {
    let os = omega * sigma;
    let tr_c2 = -(os * os).trace();
    (tr_c2, det4(sigma))
}

/// Moduli ν₁ ≥ ν₂ of the spectrum of iΩσ, or `None` if σ is not positive definite.
fn congruence_spectrum(sigma: &Matrix4<f64>, ordering: ModeOrdering) -> Option<[f64; 2]> {
    let l = sigma.cholesky()?.unpack();
    let a = l.transpose() * ordering.symplectic_form() * l;
    let gram = symmetrize(&(a.transpose() * a));
    let mut ev: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    let nu1 = (0.5 * (ev[0] + ev[1])).max(0.0).sqrt();
    let nu2 = (0.5 * (ev[2] + ev[3])).max(0.0).sqrt();
    Some([nu1, nu2])
}

/// General (non-symmetric) route for matrices that are not positive definite.
fn general_spectrum(sigma: &Matrix4<f64>, ordering: ModeOrdering) -> [f64; 2] {
    // eigenvalues of iΩσ are i·μ for μ in spec(Ωσ)
    let mu = (ordering.symplectic_form() * sigma).complex_eigenvalues();
    let mut moduli: Vec<f64> = mu.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|x, y| y.total_cmp(x));
    [0.5 * (moduli[0] + moduli[1]), 0.5 * (moduli[2] + moduli[3])]
}

/// Outcome of [`validate_covariance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    pub is_physical: bool,
    /// Λ₁ ≥ Λ₂.
    pub symplectic_eigenvalues: [f64; 2],
    /// min(Λ₁, Λ₂) − 1.
    pub min_eigen_slack: f64,
    /// Largest |σᵢⱼ − σⱼᵢ| of the input before symmetrisation.
    pub symmetry_defect: f64,
}

/// Checks the uncertainty relation σ + iΩ ≥ 0 through the symplectic spectrum.
pub fn validate_covariance(
    sigma: &Matrix4<f64>,
    ordering: ModeOrdering,
) -> Result<PhysicalityReport> {
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let symmetry_defect = (sigma - sigma.transpose()).amax();
    let sym = symmetrize(sigma);
    let (lambda, positive_definite) = match congruence_spectrum(&sym, ordering) {
        Some(l) => (l, true),
        None => (general_spectrum(&sym, ordering), false),
    };
    let min = lambda[1];
    Ok(PhysicalityReport {
        is_physical: positive_definite && min >= 1.0 - PHYSICALITY_TOL,
        symplectic_eigenvalues: lambda,
        min_eigen_slack: min - 1.0,
        symmetry_defect,
    })
}

/// Symplectic eigenvalues from both routes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymplecticEigenvalues {
    /// Λ₁ ≥ Λ₂ from the congruence (|eig(iΩσ)|) route.
    pub values: [f64; 2],
    /// Λ₁,₂ = ½√(tr[C²] ± √((tr[C²])² − 16|C|)).
    pub trace_formula: [f64; 2],
    /// max relative difference between the two routes.
    pub relative_agreement: f64,
}

/// Discriminant below this multiple of (tr C²)² is rounding noise and is
/// treated as an exact degeneracy.
const DISCRIMINANT_NOISE: f64 = 1e3 * f64::EPSILON;
/// Negative discriminant beyond this multiple of (tr C²)² is an error.
const DISCRIMINANT_BRANCH: f64 = 1e-9;

pub(crate) fn trace_formula_lambdas(tr_c2: f64, det_c: f64) -> Result<[f64; 2]> {
    let scale = tr_c2 * tr_c2;
    let mut disc = scale - 16.0 * det_c;
    if disc < -DISCRIMINANT_BRANCH * scale {
        return Err(Error::TraceFormulaBranch { discriminant: disc });
    }
    if disc < DISCRIMINANT_NOISE * scale {
        disc = 0.0;
    }
    let root = disc.sqrt();
    Ok([
        0.5 * (tr_c2 + root).max(0.0).sqrt(),
        0.5 * (tr_c2 - root).max(0.0).sqrt(),
    ])
}

pub fn symplectic_eigenvalues(
    sigma: &Matrix4<f64>,
    ordering: ModeOrdering,
) -> Result<SymplecticEigenvalues> {
    let report = validate_covariance(sigma, ordering)?;
    if !report.is_physical {
        return Err(Error::NotPhysical {
            min_symplectic: report.symplectic_eigenvalues[1],
        });
    }
    let sym = symmetrize(sigma);
    let values = report.symplectic_eigenvalues;
    let (tr_c2, det_c) = trace_invariants(&sym, &ordering.symplectic_form());
    let trace_formula = trace_formula_lambdas(tr_c2, det_c)?;
    let relative_agreement = values
        .iter()
        .zip(trace_formula.iter())
        .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(SymplecticEigenvalues {
        values,
        trace_formula,
        relative_agreement,
    })
}

/// Spectrum of C = iΩσ sorted ascending: (−Λ₁, −Λ₂, Λ₂, Λ₁).
pub fn c_matrix_eigenvalues(sigma: &Matrix4<f64>, ordering: ModeOrdering) -> Result<[f64; 4]> {
    let report = validate_covariance(sigma, ordering)?;
    if !report.is_physical {
        return Err(Error::NotPhysical {
            min_symplectic: report.symplectic_eigenvalues[1],
        });
    }
    let [l1, l2] = report.symplectic_eigenvalues;
    Ok([-l1, -l2, l2, l1])
}

/// Eigenvalues of iΩσ by the general non-symmetric solver, sorted by real
/// part. Fails if any eigenvalue carries an imaginary part above
/// [`PAIRING_TOL`] (relative to the spectral radius).
pub fn c_matrix_eigenvalues_general(
    sigma: &Matrix4<f64>,
    ordering: ModeOrdering,
) -> Result<[f64; 4]> {
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mu = (ordering.symplectic_form() * symmetrize(sigma)).complex_eigenvalues();
    let radius = mu.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let residue = mu.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if residue > PAIRING_TOL * radius {
        return Err(Error::ComplexSpectrum { residue });
    }
    // iμ with μ = a + ib has real part −b
    let mut out = [0.0; 4];
    for (o, z) in out.iter_mut().zip(mu.iter()) {
        *o = -z.im;
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Williamson normal form σ = S·E·Sᵀ in QQPP ordering, E = diag(ν₁, ν₂, ν₁, ν₂).
#[derive(Clone, Debug, PartialEq)]
pub struct Williamson {
    pub symplectic: Matrix4<f64>,
    /// ν₁ ≥ ν₂.
    pub eigenvalues: [f64; 2],
}

impl Williamson {
    pub fn diagonal(&self) -> Matrix4<f64> {
        let [a, b] = self.eigenvalues;
        Matrix4::from_diagonal(&Vector4::new(a, b, a, b))
    }
}

fn sym_power(m: &Matrix4<f64>, p: f64) -> Matrix4<f64> {
    let eig = SymmetricEigen::new(*m);
    let d = eig.eigenvalues.map(|e| e.powf(p));
    eig.eigenvectors * Matrix4::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Williamson decomposition of a positive-definite covariance given in `ordering`.
/// The returned symplectic matrix acts on QQPP vectors.
pub fn williamson(sigma: &Matrix4<f64>, ordering: ModeOrdering) -> Result<Williamson> {
    let report = validate_covariance(sigma, ordering)?;
    if !report.is_physical {
        return Err(Error::NotPhysical {
            min_symplectic: report.symplectic_eigenvalues[1],
        });
    }
    let sigma = match ordering {
        ModeOrdering::Qqpp => symmetrize(sigma),
        ModeOrdering::Qpqp => permute_matrix(&symmetrize(sigma)),
    };
    let omega = ModeOrdering::Qqpp.symplectic_form();
    let root = sym_power(&sigma, 0.5);
    let inv_root = sym_power(&sigma, -0.5);
    let k = inv_root * omega * inv_root;
    // −K² has eigenvalues 1/ν², each twice; ascending order puts ν₁ first.
    let eig = SymmetricEigen::new(symmetrize(&(-(k * k))));
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let gram = symmetrize(&(-(k * k)));

    let mut basis: Vec<Vector4<f64>> = Vec::with_capacity(4);
    let mut o = Matrix4::zeros();
    let mut nus = [0.0; 2];
    for pair in 0..2 {
        let u = order
            .iter()
            .map(|&idx| {
                let mut v: Vector4<f64> = eig.eigenvectors.column(idx).into();
                for b in &basis {
                    v -= b * b.dot(&v);
                }
                v
            })
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("four candidates");
        let u = u.normalize();
        let nu = 1.0 / (u.dot(&(gram * u))).sqrt();
        let w = (k * u) * nu;
        o.set_column(pair, &u);
        o.set_column(pair + 2, &(-w));
        basis.push(u);
        basis.push(w);
        nus[pair] = nu;
    }
    if nus[1] > nus[0] {
        // keep ν₁ ≥ ν₂ by swapping modes
        o.swap_columns(0, 1);
        o.swap_columns(2, 3);
        nus.swap(0, 1);
    }
    let e_inv_sqrt = Matrix4::from_diagonal(&Vector4::new(
        nus[0].powf(-0.5),
        nus[1].powf(-0.5),
        nus[0].powf(-0.5),
        nus[1].powf(-0.5),
    ));
    Ok(Williamson {
        symplectic: root * o * e_inv_sqrt,
        eigenvalues: nus,
    })
}

/// A single-mode Gaussian state in (q, p) ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleModeState {
    displacement: Vector2<f64>,
    covariance: Matrix2<f64>,
}

impl SingleModeState {
    pub fn new(displacement: Vector2<f64>, covariance: Matrix2<f64>) -> Result<Self> {
        if displacement
            .iter()
            .chain(covariance.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite);
        }
        let covariance = (covariance + covariance.transpose()) * 0.5;
        let state = Self {
            displacement,
            covariance,
        };
        let nu = state.symplectic_eigenvalue();
        if covariance[(0, 0)] <= 0.0 || !(nu >= 1.0 - PHYSICALITY_TOL) {
            return Err(Error::NotPhysical { min_symplectic: nu });
        }
        Ok(state)
    }

    pub fn thermal(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::NegativeOccupation { value: nbar });
        }
        Self::new(Vector2::zeros(), Matrix2::identity() * (2.0 * nbar + 1.0))
    }

    pub fn displacement(&self) -> &Vector2<f64> {
        &self.displacement
    }

    pub fn covariance(&self) -> &Matrix2<f64> {
        &self.covariance
    }

    /// √det σ.
    pub fn symplectic_eigenvalue(&self) -> f64 {
        self.covariance.determinant().max(0.0).sqrt()
    }

    /// Mean occupation of a thermal state with the same purity, (ν − 1)/2.
    pub fn effective_occupation(&self) -> f64 {
        0.5 * (self.symplectic_eigenvalue() - 1.0)
    }
}

/// A two-mode Gaussian state: displacement, covariance and ordering tag.
///
/// Construction symmetrises the covariance and rejects states that violate
/// the uncertainty relation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    displacement: Vector4<f64>,
    covariance: Matrix4<f64>,
    ordering: ModeOrdering,
}

impl GaussianState {
    pub fn new(
        displacement: Vector4<f64>,
        covariance: Matrix4<f64>,
        ordering: ModeOrdering,
    ) -> Result<Self> {
        if displacement.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let report = validate_covariance(&covariance, ordering)?;
        if !report.is_physical {
            return Err(Error::NotPhysical {
                min_symplectic: report.symplectic_eigenvalues[1],
            });
        }
        Ok(Self {
            displacement,
            covariance: symmetrize(&covariance),
            ordering,
        })
    }

    pub fn vacuum() -> Self {
        Self {
            displacement: Vector4::zeros(),
            covariance: Matrix4::identity(),
            ordering: ModeOrdering::Qqpp,
        }
    }

    pub fn displacement(&self) -> &Vector4<f64> {
        &self.displacement
    }

    pub fn covariance(&self) -> &Matrix4<f64> {
        &self.covariance
    }

    pub fn ordering(&self) -> ModeOrdering {
        self.ordering
    }

    pub fn to_ordering(&self, ordering: ModeOrdering) -> Self {
        if ordering == self.ordering {
            return self.clone();
        }
        Self {
            displacement: permute_vector(&self.displacement),
            covariance: permute_matrix(&self.covariance),
            ordering,
        }
    }

    pub fn with_displacement(&self, displacement: Vector4<f64>) -> Result<Self> {
        if displacement.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            displacement,
            ..self.clone()
        })
    }

    pub fn symplectic_eigenvalues(&self) -> Result<SymplecticEigenvalues> {
        symplectic_eigenvalues(&self.covariance, self.ordering)
    }

    pub fn c_matrix_eigenvalues(&self) -> Result<[f64; 4]> {
        c_matrix_eigenvalues(&self.covariance, self.ordering)
    }

    pub fn physicality(&self) -> PhysicalityReport {
        validate_covariance(&self.covariance, self.ordering).expect("finite by construction")
    }

    /// Reduced state of `keep`.
    pub fn partial_trace(&self, keep: Mode) -> SingleModeState {
        let (q, p) = self.ordering.quadrature_indices(keep);
        let idx = [q, p];
        SingleModeState {
            displacement: Vector2::new(self.displacement[q], self.displacement[p]),
            covariance: Matrix2::from_fn(|i, j| self.covariance[(idx[i], idx[j])]),
        }
    }

    /// Gaussian Wigner function at `x` (given in this state's ordering),
    /// normalised with the (2π)² two-mode measure.
    pub fn wigner_at(&self, x: &Vector4<f64>) -> f64 {
        let delta = x - self.displacement;
        let chol = self
            .covariance
            .cholesky()
            .expect("physical covariance is positive definite");
        let quad = delta.dot(&chol.solve(&delta));
        let det = chol.l().diagonal().product().powi(2);
        (-0.5 * quad).exp() / ((2.0 * PI).powi(2) * det.sqrt())
    }
}
