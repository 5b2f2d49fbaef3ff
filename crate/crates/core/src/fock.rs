//! Truncated Fock-space reference engine.
//!
//! Builds the probe in the two-mode number basis |n₁⟩⊗|n₂⟩ (index
//! n₁·d + n₂, d levels per mode) and evaluates fidelities and finite-difference
//! QFI without any phase-space formula. It exists to check the phase-space
//! engines and ships in the library so the CLI can run it.
//!
//! All generators and states in this construction are real in the number
//! basis, so operators are stored as real matrices:
//!
//! * beam splitter: exp[φ(a₁†a₂ − a₁a₂†)], conserving n₁ + n₂;
//! * two-mode squeezer: exp[R(a₁†a₂† − a₁a₂)], conserving n₁ − n₂.
//!
//! The squeezer exponent is normalised so that its induced covariance is the
//! phase-space S(R) (entries cosh 2R, sinh 2R). Written as
//! exp[κR(a₁a₂ − a₁†a₂†)/2], this corresponds to κ = [`SQUEEZER_CALIBRATION`].
//!
//! Both generators are block diagonal under a conserved quantity, so the
//! exponentials are taken block by block (Hermitian eigendecomposition of
//! i·generator), and fidelities of probe pairs reduce to nuclear norms of
//! small or medium blocks.

use nalgebra::{Complex, DMatrix, DVector, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channels::{Parameter, ProbeParams};
use crate::error::{Error, Result};

/// Default number of levels per mode.
pub const DEFAULT_CUTOFF: usize = 30;
/// Largest truncation deficit 1 − tr ρ accepted by default.
pub const TRUNCATION_LIMIT: f64 = 1e-6;
/// Factor κ mapping the exponent R(a₁a₂ − a₁†a₂†)/2 onto the generator
/// used here: R → κR reproduces the phase-space covariance.
pub const SQUEEZER_CALIBRATION: f64 = -2.0;
/// Default outer step of [`fock_qfi`].
pub const DEFAULT_FOCK_STEP: f64 = 5e-3;
/// Cutoff increment of the convergence ladder.
pub const LADDER_INCREMENT: usize = 5;
/// Convergence threshold of the ladder.
pub const LADDER_TOL: f64 = 1e-5;

/// A real operator on the truncated two-mode space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    dim_per_mode: usize,
    matrix: DMatrix<f64>,
}

impl FockOperator {
    pub fn dim_per_mode(&self) -> usize {
        self.dim_per_mode
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn index(&self, n1: usize, n2: usize) -> usize {
        n1 * self.dim_per_mode + n2
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// max|Aᵢⱼ − Aⱼᵢ|.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// max|(UᵀU − I)ᵢⱼ| over basis states with n₁ + n₂ ≤ `max_total`.
    pub fn unitarity_defect(&self, max_total: usize) -> f64 {
        let d = self.dim_per_mode;
        let keep: Vec<usize> = (0..d * d).filter(|&k| k / d + k % d <= max_total).collect();
        let gram = self.matrix.transpose() * &self.matrix;
        let mut worst: f64 = 0.0;
        for &i in &keep {
            for &j in &keep {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Mean of n₁ (`mode_one`) or n₂.
    pub fn mean_photon_number(&self, mode_one: bool) -> f64 {
        let d = self.dim_per_mode;
        (0..d * d)
            .map(|k| {
                let n = if mode_one { k / d } else { k % d };
                n as f64 * self.matrix[(k, k)]
            })
            .sum()
    }
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::InvalidParameter {
            name: "cutoff",
            value: cutoff as f64,
            reason: "at least two levels per mode are required",
        });
    }
    Ok(())
}

/// Truncated thermal populations p(n) = n̄ⁿ/(n̄+1)ⁿ⁺¹, n < d.
fn thermal_weights(nbar: f64, cutoff: usize) -> Vec<f64> {
    let x = nbar / (nbar + 1.0);
    let mut w = Vec::with_capacity(cutoff);
    let mut p = 1.0 / (nbar + 1.0);
    for _ in 0..cutoff {
        w.push(p);
        p *= x;
    }
    w
}

/// Product-state weights (renormalised) and the truncation deficit.
fn product_weights(
    nbar: f64,
    mbar: f64,
    cutoff: usize,
    max_deficit: f64,
) -> Result<(Vec<f64>, f64)> {
    for v in [nbar, mbar] {
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        if v < 0.0 {
            return Err(Error::NegativeOccupation { value: v });
        }
    }
    let w1 = thermal_weights(nbar, cutoff);
    let w2 = thermal_weights(mbar, cutoff);
    let mut w = Vec::with_capacity(cutoff * cutoff);
    for a in &w1 {
        for b in &w2 {
            w.push(a * b);
        }
    }
    let total: f64 = w.iter().sum();
    let deficit = (1.0 - total).max(0.0);
    if deficit > max_deficit {
        return Err(Error::TruncationTooSevere { deficit });
    }
    for x in &mut w {
        *x /= total;
    }
    Ok((w, deficit))
}

/// A truncated thermal product state.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalDensity {
    pub density: FockOperator,
    /// 1 − Σ pₙ₁ qₙ₂ before renormalisation.
    pub deficit: f64,
}

/// Thermal product state with occupations n̄, m̄ truncated at `cutoff` levels.
pub fn fock_thermal(nbar: f64, mbar: f64, cutoff: usize) -> Result<ThermalDensity> {
    check_cutoff(cutoff)?;
    let (w, deficit) = product_weights(nbar, mbar, cutoff, TRUNCATION_LIMIT)?;
    Ok(ThermalDensity {
        density: FockOperator {
            dim_per_mode: cutoff,
            matrix: DMatrix::from_diagonal(&DVector::from_vec(w)),
        },
        deficit,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FockGate {
    BeamSplitter,
    Squeezer,
}

/// Generator K (real antisymmetric) with U = exp(θK).
fn generator(kind: FockGate, cutoff: usize) -> DMatrix<f64> {
    let d = cutoff;
    let mut k = DMatrix::zeros(d * d, d * d);
    let idx = |n1: usize, n2: usize| n1 * d + n2;
    for n1 in 0..d {
        for n2 in 0..d {
            let col = idx(n1, n2);
            match kind {
                FockGate::BeamSplitter => {
                    // a₁†a₂ |n₁,n₂⟩ = √((n₁+1)n₂) |n₁+1,n₂−1⟩
                    if n1 + 1 < d && n2 >= 1 {
                        let v = ((n1 + 1) as f64 * n2 as f64).sqrt();
                        k[(idx(n1 + 1, n2 - 1), col)] += v;
                        k[(col, idx(n1 + 1, n2 - 1))] -= v;
                    }
                }
                FockGate::Squeezer => {
                    // a₁†a₂† |n₁,n₂⟩ = √((n₁+1)(n₂+1)) |n₁+1,n₂+1⟩
                    if n1 + 1 < d && n2 + 1 < d {
                        let v = ((n1 + 1) as f64 * (n2 + 1) as f64).sqrt();
                        k[(idx(n1 + 1, n2 + 1), col)] += v;
                        k[(col, idx(n1 + 1, n2 + 1))] -= v;
                    }
                }
            }
        }
    }
    k
}

/// Connected components of the nonzero pattern of `m` (treated as symmetric).
fn blocks(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for j in 0..m.ncols() {
        for i in 0..n {
            if m[(i, j)] != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// exp(θK) for real antisymmetric K, block by block.
fn expm_antisymmetric(k: &DMatrix<f64>, theta: f64) -> DMatrix<f64> {
    let n = k.nrows();
    let mut out = DMatrix::identity(n, n);
    if theta == 0.0 {
        return out;
    }
    let i = Complex::new(0.0, 1.0);
    for block in blocks(k) {
        if block.len() == 1 {
            continue;
        }
        let m = block.len();
        // iθK is Hermitian: iθK = Q diag(μ) Q† ⇒ exp(θK) = Q diag(e^{−iμ}) Q†
        let h = DMatrix::from_fn(m, m, |r, c| i * (theta * k[(block[r], block[c])]));
        let eig = SymmetricEigen::new(h);
        let phases =
            DMatrix::from_diagonal(&eig.eigenvalues.map(|mu| Complex::new(0.0, -mu).exp()));
        let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        for (r, &gr) in block.iter().enumerate() {
            for (c, &gc) in block.iter().enumerate() {
                out[(gr, gc)] = u[(r, c)].re;
            }
        }
    }
    out
}

/// The truncated beam-splitter or squeezer unitary.
pub fn fock_unitary(kind: FockGate, theta: f64, cutoff: usize) -> Result<FockOperator> {
    check_cutoff(cutoff)?;
    if !theta.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(FockOperator {
        dim_per_mode: cutoff,
        matrix: expm_antisymmetric(&generator(kind, cutoff), theta),
    })
}

/// Uhlmann fidelity of two truncated densities via matrix square roots.
pub fn fock_fidelity(rho1: &FockOperator, rho2: &FockOperator) -> Result<f64> {
    if rho1.dim_per_mode != rho2.dim_per_mode {
        return Err(Error::InvalidParameter {
            name: "cutoff",
            value: rho2.dim_per_mode as f64,
            reason: "densities must share the cutoff",
        });
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym(&rho1.matrix));
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    let sqrt1 = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let inner = sym(&(&sqrt1 * &rho2.matrix * &sqrt1));
    let ev = inner.symmetric_eigenvalues();
    let s: f64 = ev.iter().map(|x| x.max(0.0).sqrt()).sum();
    Ok(s * s)
}

/// The probe ρ = U diag(w) Uᵀ with U = B(φ)S(R) in the truncated space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockProbe {
    pub params: ProbeParams,
    pub unitary: FockOperator,
    /// Renormalised thermal populations in the number basis.
    pub weights: Vec<f64>,
    pub deficit: f64,
}

/// Fock-space oracle with a fixed cutoff and truncation gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockOracle {
    pub cutoff: usize,
    pub max_deficit: f64,
}

impl Default for FockOracle {
    fn default() -> Self {
        Self {
            cutoff: DEFAULT_CUTOFF,
            max_deficit: TRUNCATION_LIMIT,
        }
    }
}

impl FockOracle {
    pub fn new(cutoff: usize) -> Self {
        Self {
            cutoff,
            ..Self::default()
        }
    }

    pub fn with_max_deficit(mut self, max_deficit: f64) -> Self {
        self.max_deficit = max_deficit;
        self
    }

    pub fn probe(&self, params: &ProbeParams) -> Result<FockProbe> {
        check_cutoff(self.cutoff)?;
        params.validate()?;
        let (weights, deficit) =
            product_weights(params.nbar, params.mbar, self.cutoff, self.max_deficit)?;
        let b = expm_antisymmetric(&generator(FockGate::BeamSplitter, self.cutoff), params.phi);
        let s = expm_antisymmetric(&generator(FockGate::Squeezer, self.cutoff), params.r);
        Ok(FockProbe {
            params: *params,
            unitary: FockOperator {
                dim_per_mode: self.cutoff,
                matrix: b * s,
            },
            weights,
            deficit,
        })
    }

    /// Fidelity of two probes. Uses ρₖ = XₖXₖᵀ with Xₖ = Uₖ diag(√wₖ), so
    /// F = ‖X₁ᵀX₂‖²_* with X₁ᵀX₂ = diag(√w₁) S(R₁)ᵀ B(φ₂−φ₁) S(R₂) diag(√w₂).
    pub fn probe_fidelity(&self, p1: &ProbeParams, p2: &ProbeParams) -> Result<f64> {
        check_cutoff(self.cutoff)?;
        p1.validate()?;
        p2.validate()?;
        let (w1, _) = product_weights(p1.nbar, p1.mbar, self.cutoff, self.max_deficit)?;
        let (w2, _) = product_weights(p2.nbar, p2.mbar, self.cutoff, self.max_deficit)?;
        let n = self.cutoff * self.cutoff;
        let overlap = if p1.r == p2.r && p1.phi == p2.phi {
            DMatrix::identity(n, n)
        } else {
            let sq = generator(FockGate::Squeezer, self.cutoff);
            let s1 = expm_antisymmetric(&sq, p1.r);
            let s2 = if p2.r == p1.r {
                s1.clone()
            } else {
                expm_antisymmetric(&sq, p2.r)
            };
            let b = expm_antisymmetric(
                &generator(FockGate::BeamSplitter, self.cutoff),
                p2.phi - p1.phi,
            );
            s1.transpose() * b * s2
        };
        let a = DMatrix::from_fn(n, n, |i, j| w1[i].sqrt() * overlap[(i, j)] * w2[j].sqrt());
        let norm = nuclear_norm(&a);
        Ok(norm * norm)
    }

    /// Finite-difference QFI 8(1 − √F)/s², Richardson-extrapolated over s, s/2.
    pub fn qfi(&self, params: &ProbeParams, which: Parameter, step: f64) -> Result<f64> {
        if !(1e-5..=1e-2).contains(&step) {
            return Err(Error::StepOutOfRange { step });
        }
        params.validate()?;
        let theta = params.get(which);
        let q = |s: f64| -> Result<f64> {
            let lo = params.with(which, theta - 0.5 * s);
            let hi = params.with(which, theta + 0.5 * s);
            if lo.validate().is_err() {
                return Err(Error::StepOutOfDomain);
            }
            let f = self.probe_fidelity(&lo, &hi)?;
            Ok(8.0 * (1.0 - f.sqrt()) / (s * s))
        };
        let coarse = q(step)?;
        let fine = q(0.5 * step)?;
        let value = (4.0 * fine - coarse) / 3.0;
        if (fine - coarse).abs() > 0.1 * value.abs().max(1e-12) && value.abs() > 1e-10 {
            return Err(Error::NotConverged {
                previous: coarse,
                last: fine,
            });
        }
        Ok(value.max(0.0))
    }
}

/// Σ singular values, evaluated block by block over the nonzero pattern.
fn nuclear_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    // rows and columns share the index space; the pattern of A + Aᵀ gives
    // blocks that decouple A
    let mut pattern = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if a[(i, j)] != 0.0 {
                pattern[(i, j)] = 1.0;
                pattern[(j, i)] = 1.0;
            }
        }
    }
    blocks(&pattern)
        .into_iter()
        .map(|b| {
            if b.len() == 1 {
                a[(b[0], b[0])].abs()
            } else {
                let sub = DMatrix::from_fn(b.len(), b.len(), |r, c| a[(b[r], b[c])]);
                sub.singular_values().sum()
            }
        })
        .sum()
}

impl FockProbe {
    pub fn density(&self) -> FockOperator {
        let u = &self.unitary.matrix;
        let w = DMatrix::from_diagonal(&DVector::from_vec(self.weights.clone()));
        FockOperator {
            dim_per_mode: self.unitary.dim_per_mode,
            matrix: u * w * u.transpose(),
        }
    }

    /// ⟨X⟩ = Σₖ wₖ (UᵀXU)ₖₖ.
    fn expect(&self, x: &DMatrix<f64>) -> f64 {
        let u = &self.unitary.matrix;
        let xu = x * u;
        (0..u.ncols())
            .map(|k| self.weights[k] * u.column(k).dot(&xu.column(k)))
            .sum()
    }

    /// Covariance from Fock-space moments, QQPP ordering, vacuum variance 1.
    ///
    /// With q = a + a† and p = i(a† − a), the symmetrised products are
    /// sym(qᵢqⱼ) = aᵢaⱼ + aᵢ†aⱼ† + aᵢ†aⱼ + aⱼ†aᵢ + δᵢⱼ and
    /// sym(pᵢpⱼ) = −aᵢaⱼ − aᵢ†aⱼ† + aᵢ†aⱼ + aⱼ†aᵢ + δᵢⱼ; q–p correlations
    /// vanish for real states.
    pub fn covariance(&self) -> Matrix4<f64> {
        let d = self.unitary.dim_per_mode;
        let ladder = DMatrix::from_fn(
            d,
            d,
            |r, c| if c == r + 1 { (c as f64).sqrt() } else { 0.0 },
        );
        let id = DMatrix::<f64>::identity(d, d);
        let a = [ladder.kronecker(&id), id.kronecker(&ladder)];
        let n = d * d;
        let eye = DMatrix::<f64>::identity(n, n);
        let mut sigma = Matrix4::zeros();
        for i in 0..2 {
            for j in i..2 {
                let aa = &a[i] * &a[j];
                let adag_a = a[i].transpose() * &a[j] + a[j].transpose() * &a[i];
                let delta = if i == j {
                    eye.clone()
                } else {
                    DMatrix::zeros(n, n)
                };
                let qq = &aa + aa.transpose() + &adag_a + &delta;
                let pp = -&aa - aa.transpose() + &adag_a + &delta;
                let vq = self.expect(&qq);
                let vp = self.expect(&pp);
                sigma[(i, j)] = vq;
                sigma[(j, i)] = vq;
                sigma[(i + 2, j + 2)] = vp;
                sigma[(j + 2, i + 2)] = vp;
            }
        }
        sigma
    }
}

/// Probe fidelity with the convergence ladder: the cutoff grows by
/// [`LADDER_INCREMENT`] until two successive values differ by less than
/// [`LADDER_TOL`]. Returns the last value and its cutoff.
pub fn fock_fidelity_converged(
    p1: &ProbeParams,
    p2: &ProbeParams,
    start: usize,
    max_cutoff: usize,
) -> Result<(f64, usize)> {
    let mut cutoff = start;
    let mut previous: Option<f64> = None;
    let mut last = f64::NAN;
    while cutoff <= max_cutoff {
        let oracle = FockOracle::new(cutoff).with_max_deficit(1.0);
        last = oracle.probe_fidelity(p1, p2)?;
        if let Some(prev) = previous {
            if (last - prev).abs() < LADDER_TOL {
                return Ok((last, cutoff));
            }
        }
        previous = Some(last);
        cutoff += LADDER_INCREMENT;
    }
    Err(Error::NotConverged {
        previous: previous.unwrap_or(f64::NAN),
        last,
    })
}

/// Finite-difference QFI at the given cutoff with the default deficit gate.
pub fn fock_qfi(params: &ProbeParams, which: Parameter, step: f64, cutoff: usize) -> Result<f64> {
    FockOracle::new(cutoff).qfi(params, which, step)
}
