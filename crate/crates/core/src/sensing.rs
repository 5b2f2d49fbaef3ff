//! Parameter sweeps, spectrum traces, limiting-case checks, thermometry
//! variants and peak location.
//!
//! Grids are evaluated cell by cell through [`map_indexed`], so the parallel
//! and sequential strategies return identical tables. Rows are row-major
//! over (x, y): the x index is the outer loop.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::channels::{covariance_unchecked, d_sigma, printed_covariance, Parameter, ProbeParams};
use crate::error::{Error, Result};
use crate::fidelity::single_mode_fidelity_parts;
use crate::par::{map_indexed, Execution};
use crate::phase_space::{
    c_matrix_eigenvalues, c_matrix_eigenvalues_general, validate_covariance, Mode, ModeOrdering,
};
use crate::qfi::{
    fidelity_limit_core, qfi, single_mode_closed_form, Engine, QfiFlags, QfiResult, DEFAULT_STEP,
};

/// Two |λ| branches closer than this are treated as meeting.
pub const CROSSING_TOL: f64 = 1e-6;
/// Tolerance for comparing printed limiting-case eigenvalues with numerics.
pub const LIMITING_CASE_TOL: f64 = 1e-8;
/// Absolute spread below which a table counts as flat.
pub const FLAT_ABSOLUTE: f64 = 1e-14;
/// Spread relative to the table maximum below which a table counts as flat.
/// Set above the relative accuracy of the fidelity-limit engine (~1e−8), so
/// that engine noise on a constant function is not mistaken for a peak.
pub const FLAT_RELATIVE: f64 = 1e-6;
/// Smallest R accepted for the large-squeezing asymptote.
pub const LARGE_SQUEEZING_MIN: f64 = 2.0;

/// Quantity varied along a sweep axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisVariable {
    Phi,
    R,
    Nbar,
    Mbar,
    /// Transmissivity τ = cos²φ; sets φ = arccos √τ.
    Tau,
}

impl AxisVariable {
    pub fn name(self) -> &'static str {
        match self {
            AxisVariable::Phi => "phi",
            AxisVariable::R => "r",
            AxisVariable::Nbar => "nbar",
            AxisVariable::Mbar => "mbar",
            AxisVariable::Tau => "tau",
        }
    }

    /// `params` with this variable set to `value` (not validated).
    pub fn apply(self, params: &ProbeParams, value: f64) -> ProbeParams {
        match self {
            AxisVariable::Phi => params.with(Parameter::Phi, value),
            AxisVariable::R => params.with(Parameter::R, value),
            AxisVariable::Nbar => params.with(Parameter::Nbar, value),
            AxisVariable::Mbar => params.with(Parameter::Mbar, value),
            AxisVariable::Tau => params.with(Parameter::Phi, value.clamp(0.0, 1.0).sqrt().acos()),
        }
    }
}

impl From<Parameter> for AxisVariable {
    fn from(p: Parameter) -> Self {
        match p {
            Parameter::Phi => AxisVariable::Phi,
            Parameter::R => AxisVariable::R,
            Parameter::Nbar => AxisVariable::Nbar,
            Parameter::Mbar => AxisVariable::Mbar,
        }
    }
}

impl fmt::Display for AxisVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AxisVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(AxisVariable::Tau),
            other => other.parse::<Parameter>().map(AxisVariable::from),
        }
    }
}

/// Uniform grid `min, …, max` with `count` points, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub variable: AxisVariable,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(variable: AxisVariable, min: f64, max: f64, count: usize) -> Result<Self> {
        let axis = Axis {
            variable,
            min,
            max,
            count,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: self.count,
            });
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::NonFinite);
        }
        if self.min >= self.max {
            return Err(Error::InvalidParameter {
                name: "axis",
                value: self.min,
                reason: "min must be below max",
            });
        }
        if self.variable == AxisVariable::Tau && (self.min < 0.0 || self.max > 1.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                value: if self.min < 0.0 { self.min } else { self.max },
                reason: "transmissivity must lie in [0, 1]",
            });
        }
        Ok(())
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }
}

/// Grid points as (x, y) pairs in row-major order.
fn grid(x: &Axis, y: Option<&Axis>) -> Vec<(f64, Option<f64>)> {
    let ys: Vec<Option<f64>> = match y {
        Some(a) => a.values().into_iter().map(Some).collect(),
        None => vec![None],
    };
    x.values()
        .into_iter()
        .flat_map(|xv| ys.iter().map(move |&yv| (xv, yv)))
        .collect()
}

fn grid_params(
    fixed: &ProbeParams,
    x: &Axis,
    y: Option<&Axis>,
    xv: f64,
    yv: Option<f64>,
) -> ProbeParams {
    let p = x.variable.apply(fixed, xv);
    match (y, yv) {
        (Some(a), Some(v)) => a.variable.apply(&p, v),
        _ => p,
    }
}

// ---------------------------------------------------------------------------
// Spectrum traces

/// Which covariance the spectrum is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// B S σ₀ Sᵀ Bᵀ by direct conjugation.
    #[default]
    Conjugated,
    /// The printed entry-by-entry closed form, including its zero σ₃₄.
    PrintedClosedForm,
}

impl CovarianceSource {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceSource::Conjugated => "conjugated",
            CovarianceSource::PrintedClosedForm => "printed_closed_form",
        }
    }

    /// Sorted spectrum of iΩσ for this source.
    pub fn spectrum(self, params: &ProbeParams) -> Result<[f64; 4]> {
        params.validate()?;
        match self {
            CovarianceSource::Conjugated => {
                c_matrix_eigenvalues(&covariance_unchecked(params), ModeOrdering::Qqpp)
            }
            CovarianceSource::PrintedClosedForm => {
                c_matrix_eigenvalues_general(&printed_covariance(params), ModeOrdering::Qqpp)
            }
        }
    }
}

impl FromStr for CovarianceSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "conjugated" => Ok(CovarianceSource::Conjugated),
            "printed" | "printed_closed_form" => Ok(CovarianceSource::PrintedClosedForm),
            other => Err(format!("unknown covariance source `{other}`")),
        }
    }
}

/// Gap between the two |λ| branches of a sorted spectrum (−Λ₁, −Λ₂, Λ₂, Λ₁).
pub fn branch_gap(eigenvalues: &[f64; 4]) -> f64 {
    eigenvalues[3] - eigenvalues[2]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub fixed: ProbeParams,
    pub x: Axis,
    pub y: Option<Axis>,
    pub source: CovarianceSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub params: ProbeParams,
    pub x: f64,
    pub y: Option<f64>,
    /// Sorted ascending; `None` when the cell failed.
    pub eigenvalues: Option<[f64; 4]>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrossingKind {
    /// Isolated meeting point, refined between grid points.
    Point { location: f64, gap: f64 },
    /// Consecutive grid points all within [`CROSSING_TOL`].
    Segment { start: f64, end: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Second-axis value of the slice the crossing belongs to.
    pub y: Option<f64>,
    pub kind: CrossingKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub spec: SpectrumSpec,
    pub rows: Vec<SpectrumRow>,
    pub crossings: Vec<Crossing>,
}

impl SpectrumTable {
    /// Isolated crossing locations (segments excluded).
    pub fn crossing_points(&self) -> Vec<f64> {
        self.crossings
            .iter()
            .filter_map(|c| match c.kind {
                CrossingKind::Point { location, .. } => Some(location),
                CrossingKind::Segment { .. } => None,
            })
            .collect()
    }
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Golden-section minimum of `f` on [a, b].
fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = a + GOLDEN * (b - a);
    let mut d = b - GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = a + GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = b - GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn detect_crossings(
    spec: &SpectrumSpec,
    y: Option<f64>,
    xs: &[f64],
    gaps: &[f64],
) -> Vec<Crossing> {
    let mut out = Vec::new();
    let n = xs.len();
    let below: Vec<bool> = gaps.iter().map(|&g| g < CROSSING_TOL).collect();
    let mut i = 0;
    while i < n {
        if below[i] {
            let start = i;
            while i + 1 < n && below[i + 1] {
                i += 1;
            }
            if i > start {
                out.push(Crossing {
                    y,
                    kind: CrossingKind::Segment {
                        start: xs[start],
                        end: xs[i],
                    },
                });
            } else {
                out.push(Crossing {
                    y,
                    kind: CrossingKind::Point {
                        location: xs[i],
                        gap: gaps[i],
                    },
                });
            }
            i += 1;
            continue;
        }
        let interior = i > 0 && i + 1 < n;
        if interior
            && gaps[i] < gaps[i - 1]
            && gaps[i] <= gaps[i + 1]
            && !below[i - 1]
            && !below[i + 1]
        {
            let gap_at = |x: f64| -> f64 {
                let p = grid_params(&spec.fixed, &spec.x, spec.y.as_ref(), x, y);
                spec.source
                    .spectrum(&p)
                    .map(|e| branch_gap(&e))
                    .unwrap_or(f64::INFINITY)
            };
            let (location, gap) =
                golden_min(gap_at, xs[i - 1], xs[i + 1], 1e-12 * (1.0 + xs[i].abs()));
            if gap < CROSSING_TOL {
                out.push(Crossing {
                    y,
                    kind: CrossingKind::Point { location, gap },
                });
            }
        }
        i += 1;
    }
    out
}

/// Spectrum of C = iΩσ over a grid, with crossing detection along x for
/// every y slice.
pub fn spectrum_trace(spec: &SpectrumSpec, execution: Execution) -> Result<SpectrumTable> {
    spec.x.validate()?;
    if let Some(y) = &spec.y {
        y.validate()?;
    }
    spec.fixed.validate()?;
    let points = grid(&spec.x, spec.y.as_ref());
    let rows = map_indexed(points.len(), execution, |k| {
        let (x, y) = points[k];
        let params = grid_params(&spec.fixed, &spec.x, spec.y.as_ref(), x, y);
        let (eigenvalues, error) = match spec.source.spectrum(&params) {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e.code().to_string())),
        };
        SpectrumRow {
            params,
            x,
            y,
            eigenvalues,
            error,
        }
    });
    let ny = spec.y.map_or(1, |a| a.count);
    let xs = spec.x.values();
    let mut crossings = Vec::new();
    for j in 0..ny {
        let gaps: Vec<f64> = (0..spec.x.count)
            .map(|i| {
                rows[i * ny + j]
                    .eigenvalues
                    .as_ref()
                    .map_or(f64::INFINITY, branch_gap)
            })
            .collect();
        crossings.extend(detect_crossings(spec, rows[j].y, &xs, &gaps));
    }
    Ok(SpectrumTable {
        spec: *spec,
        rows,
        crossings,
    })
}

// ---------------------------------------------------------------------------
// Limiting cases

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingCaseId {
    /// No squeezing: scalars (A, B).
    R0,
    /// Large squeezing asymptote.
    RLarge,
    /// φ = 0: scalars (F, G).
    Phi0,
    /// φ = π/2: scalars (F, G).
    PhiHalfPi,
    /// n̄ = m̄: scalars (J, K).
    Balanced,
}

impl LimitingCaseId {
    pub const ALL: [LimitingCaseId; 5] = [
        LimitingCaseId::R0,
        LimitingCaseId::RLarge,
        LimitingCaseId::Phi0,
        LimitingCaseId::PhiHalfPi,
        LimitingCaseId::Balanced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LimitingCaseId::R0 => "r0",
            LimitingCaseId::RLarge => "r_large",
            LimitingCaseId::Phi0 => "phi0",
            LimitingCaseId::PhiHalfPi => "phi_half_pi",
            LimitingCaseId::Balanced => "balanced",
        }
    }

    fn check(self, p: &ProbeParams) -> Result<()> {
        let ok = match self {
            LimitingCaseId::R0 => p.r.abs() <= 1e-12,
            LimitingCaseId::RLarge => p.r >= LARGE_SQUEEZING_MIN,
            LimitingCaseId::Phi0 => p.phi.sin().abs() <= 1e-12,
            LimitingCaseId::PhiHalfPi => p.phi.cos().abs() <= 1e-12,
            LimitingCaseId::Balanced => p.delta().abs() <= 1e-9 * (1.0 + p.total()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::CaseMismatch(format!(
                "{} does not apply at nbar={}, mbar={}, r={}, phi={}",
                self.name(),
                p.nbar,
                p.mbar,
                p.r,
                p.phi
            )))
        }
    }
}

impl FromStr for LimitingCaseId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        LimitingCaseId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown limiting case `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitingCaseReport {
    pub case: LimitingCaseId,
    pub params: ProbeParams,
    /// The two printed scalars, e.g. (A, B); `None` for the asymptote.
    /// A scalar that is itself a square root of a negative number is
    /// returned with its imaginary part.
    pub scalars: Option<[(f64, f64); 2]>,
    /// Printed eigenvalues as complex numbers (re, im), sorted by real part.
    pub printed: [(f64, f64); 4],
    /// Spectrum of the conjugated covariance.
    pub numeric: [f64; 4],
    /// Spectrum of the printed closed-form covariance, when real.
    pub numeric_printed_covariance: Option<[f64; 4]>,
    /// Largest |imaginary part| among the printed eigenvalues.
    pub imaginary_residue: f64,
    /// max |Re λ_printed − λ_numeric| / max(1, max|λ_numeric|).
    pub relative_deviation: f64,
    /// Deviation and imaginary residue both within [`LIMITING_CASE_TOL`].
    pub agrees: bool,
}

/// {−i√(X−Y), i√(X−Y), −i√(X+Y), i√(X+Y)} with complex square roots.
fn printed_quartet(x: Complex<f64>, y: Complex<f64>) -> [Complex<f64>; 4] {
    let i = Complex::new(0.0, 1.0);
    let lo = (x - y).sqrt();
    let hi = (x + y).sqrt();
    [-i * lo, i * lo, -i * hi, i * hi]
}

/// Evaluates the printed limiting-case eigenvalue formulas and compares
/// them with the numerically computed spectrum.
pub fn limiting_case_eigenvalues(
    case: LimitingCaseId,
    params: &ProbeParams,
) -> Result<LimitingCaseReport> {
    params.validate()?;
    case.check(params)?;
    let d = params.delta();
    let t = 1.0 + params.total();
    let (s2, c2) = (2.0 * params.phi).sin_cos();
    let (ch, sh) = ((2.0 * params.r).cosh(), (2.0 * params.r).sinh());
    let re = |v: f64| Complex::new(v, 0.0);

    let (scalars, mut printed) = match case {
        LimitingCaseId::R0 => {
            let a = -d * d * c2 * c2 - t * t;
            let b = re(4.0 * d * d * t * t * c2 * c2 - d * d * s2 * s2 * (t * t - d * d * c2 * c2))
                .sqrt();
            (Some((re(a), b)), printed_quartet(re(a), b))
        }
        LimitingCaseId::Phi0 | LimitingCaseId::PhiHalfPi => {
            let f = -d * d - t * t * ch * ch;
            let g = t * re(ch * ch * sh * sh + 4.0 * d * d * ch * ch - d * d * sh * sh).sqrt();
            (Some((re(f), g)), printed_quartet(re(f), g))
        }
        LimitingCaseId::Balanced => {
            let j = sh * sh * s2 * s2 - ch * ch;
            let k = c2 * sh * re(ch * ch - sh * sh * s2 * s2).sqrt();
            (Some((re(j), k)), printed_quartet(re(j), k))
        }
        LimitingCaseId::RLarge => {
            let v = (2.0 * params.r).exp() * t * c2 / 2f64.sqrt();
            (None, [re(0.0), re(0.0), re(-v), re(v)])
        }
    };
    printed.sort_by(|a, b| a.re.total_cmp(&b.re));

    let numeric = c_matrix_eigenvalues(&covariance_unchecked(params), ModeOrdering::Qqpp)?;
    let numeric_printed_covariance =
        c_matrix_eigenvalues_general(&printed_covariance(params), ModeOrdering::Qqpp).ok();
    let scale = numeric.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let imaginary_residue = printed.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
    let relative_deviation = printed
        .iter()
        .zip(numeric.iter())
        .fold(0.0f64, |m, (z, v)| m.max((z.re - v).abs()))
        / scale;
    Ok(LimitingCaseReport {
        case,
        params: *params,
        scalars: scalars.map(|(x, y)| [(x.re, x.im), (y.re, y.im)]),
        printed: printed.map(|z| (z.re, z.im)),
        numeric,
        numeric_printed_covariance,
        imaginary_residue,
        relative_deviation,
        agrees: relative_deviation <= LIMITING_CASE_TOL
            && imaginary_residue <= LIMITING_CASE_TOL * scale,
    })
}

// ---------------------------------------------------------------------------
// Thermometry

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThermometryVariant {
    /// QFI of the two-mode state with respect to n̄.
    Full,
    /// QFI of the mode-1 marginal with respect to n̄.
    Reduced,
}

impl FromStr for ThermometryVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(ThermometryVariant::Full),
            "reduced" => Ok(ThermometryVariant::Reduced),
            other => Err(format!("unknown thermometry variant `{other}`")),
        }
    }
}

fn marginal(params: &ProbeParams) -> Matrix2<f64> {
    let sigma = covariance_unchecked(params);
    let (q, p) = ModeOrdering::Qqpp.quadrature_indices(Mode::One);
    let idx = [q, p];
    Matrix2::from_fn(|i, j| sigma[(idx[i], idx[j])])
}

/// QFI of the mode-1 marginal with respect to n̄.
///
/// `Engine::FidelityLimit` uses the single-mode fidelity stencil; the other
/// engines use the single-mode closed form.
pub fn reduced_thermometry_qfi(params: &ProbeParams, engine: Engine) -> Result<f64> {
    params.validate()?;
    match engine {
        Engine::FidelityLimit => {
            let n = params.nbar;
            let (value, _) = fidelity_limit_core(DEFAULT_STEP, |s| {
                let lo = params.with(Parameter::Nbar, n - 0.5 * s);
                if lo.nbar < 0.0 {
                    return Err(Error::StepOutOfDomain);
                }
                let hi = params.with(Parameter::Nbar, n + 0.5 * s);
                single_mode_fidelity_parts(&marginal(&lo), &marginal(&hi), &Vector2::zeros())
            })?;
            Ok(value.max(0.0))
        }
        Engine::ClosedForm | Engine::EigenForm => {
            let ds = d_sigma(params, Parameter::Nbar)?;
            let (q, p) = ModeOrdering::Qqpp.quadrature_indices(Mode::One);
            let idx = [q, p];
            let dm = Matrix2::from_fn(|i, j| ds[(idx[i], idx[j])]);
            single_mode_closed_form(&marginal(params), &dm)
        }
    }
}

/// Thermometry QFI for either variant. The full variant uses `engine`
/// directly; see [`reduced_thermometry_qfi`] for the reduced one.
pub fn thermometry_qfi(
    params: &ProbeParams,
    variant: ThermometryVariant,
    engine: Engine,
) -> Result<QfiResult> {
    match variant {
        ThermometryVariant::Full => qfi(params, Parameter::Nbar, engine),
        ThermometryVariant::Reduced => {
            let value = reduced_thermometry_qfi(params, engine)?;
            let report = validate_covariance(&covariance_unchecked(params), ModeOrdering::Qqpp)?;
            let reduced_engine = match engine {
                Engine::FidelityLimit => Engine::FidelityLimit,
                _ => Engine::ClosedForm,
            };
            Ok(QfiResult {
                value,
                engine: reduced_engine,
                lambda_pair: report.symplectic_eigenvalues,
                flags: QfiFlags::default(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// QFI sweeps

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub fixed: ProbeParams,
    pub x: Axis,
    pub y: Option<Axis>,
    /// Parameter whose QFI is computed.
    pub which: Parameter,
    pub engine: Engine,
    /// Also compute the reduced-state thermometry QFI per cell.
    pub emit_reduced_thermometry: bool,
    /// Also record the symplectic eigenvalues per cell.
    pub emit_spectrum: bool,
}

impl SweepSpec {
    pub fn new(fixed: ProbeParams, x: Axis, y: Option<Axis>, which: Parameter) -> Self {
        SweepSpec {
            fixed,
            x,
            y,
            which,
            engine: Engine::ClosedForm,
            emit_reduced_thermometry: false,
            emit_spectrum: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fixed.validate()?;
        self.x.validate()?;
        if let Some(y) = &self.y {
            y.validate()?;
            if y.variable == self.x.variable {
                return Err(Error::InvalidParameter {
                    name: "axis",
                    value: y.min,
                    reason: "the two axes must vary different quantities",
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: ProbeParams,
    pub x: f64,
    pub y: Option<f64>,
    pub qfi: Option<f64>,
    /// Engine that produced `qfi` (differs from the requested one after a
    /// fallback).
    pub engine: Option<Engine>,
    pub flags: Vec<String>,
    pub reduced_qfi: Option<f64>,
    /// Λ₁ ≥ Λ₂ when the spectrum was requested.
    pub symplectic: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    /// Free-form notes on how the table was produced.
    pub notes: Vec<String>,
}

impl SweepTable {
    /// (x, qfi) along x at the y grid value nearest to `y`; failed cells are
    /// skipped.
    pub fn slice_at_y(&self, y: f64) -> Vec<(f64, f64)> {
        let Some(axis) = &self.spec.y else {
            return self
                .rows
                .iter()
                .filter_map(|r| r.qfi.map(|q| (r.x, q)))
                .collect();
        };
        let j = (0..axis.count)
            .min_by(|&a, &b| {
                (axis.value(a) - y)
                    .abs()
                    .total_cmp(&(axis.value(b) - y).abs())
            })
            .unwrap_or(0);
        self.rows
            .iter()
            .skip(j)
            .step_by(axis.count)
            .filter_map(|r| r.qfi.map(|q| (r.x, q)))
            .collect()
    }

    /// Rows whose QFI could not be computed by any engine.
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.qfi.is_none()).count()
    }
}

fn evaluate_cell(spec: &SweepSpec, params: ProbeParams, x: f64, y: Option<f64>) -> SweepRow {
    let mut flags = Vec::new();
    let mut symplectic = None;
    match validate_covariance(&covariance_unchecked(&params), ModeOrdering::Qqpp) {
        Ok(report) => {
            if !report.is_physical {
                flags.push("not_physical".to_string());
            }
            if spec.emit_spectrum {
                symplectic = Some(report.symplectic_eigenvalues);
            }
        }
        Err(e) => flags.push(format!("validate:{}", e.code())),
    }
    let (value, engine) = match qfi(&params, spec.which, spec.engine) {
        Ok(r) => {
            flags.extend(r.flags.names().into_iter().map(String::from));
            (Some(r.value), Some(r.engine))
        }
        Err(e) if spec.engine != Engine::FidelityLimit => {
            flags.push(format!("{}:{}", spec.engine.name(), e.code()));
            match qfi(&params, spec.which, Engine::FidelityLimit) {
                Ok(r) => {
                    flags.push("fallback".to_string());
                    flags.extend(r.flags.names().into_iter().map(String::from));
                    (Some(r.value), Some(r.engine))
                }
                Err(e) => {
                    flags.push(format!("fidelity_limit:{}", e.code()));
                    (None, None)
                }
            }
        }
        Err(e) => {
            flags.push(format!("fidelity_limit:{}", e.code()));
            (None, None)
        }
    };
    let reduced_qfi = if spec.emit_reduced_thermometry {
        match reduced_thermometry_qfi(&params, spec.engine) {
            Ok(v) => Some(v),
            Err(e) => {
                flags.push(format!("reduced:{}", e.code()));
                None
            }
        }
    } else {
        None
    };
    SweepRow {
        params,
        x,
        y,
        qfi: value,
        engine,
        flags,
        reduced_qfi,
        symplectic,
    }
}

/// Evaluates the QFI over the sweep grid. Cell failures are recorded in the
/// row flags; the sweep itself only fails on an invalid spec.
pub fn qfi_sweep(spec: &SweepSpec, execution: Execution) -> Result<SweepTable> {
    spec.validate()?;
    let points = grid(&spec.x, spec.y.as_ref());
    let rows = map_indexed(points.len(), execution, |k| {
        let (x, y) = points[k];
        let params = grid_params(&spec.fixed, &spec.x, spec.y.as_ref(), x, y);
        evaluate_cell(spec, params, x, y)
    });
    let mut notes = vec![format!(
        "row-major over ({}, {}); x is the outer index",
        spec.x.variable,
        spec.y.map_or("-", |a| a.variable.name())
    )];
    notes.push("no guard bands: the eigen form is defined on degenerate spectra".to_string());
    if spec.emit_reduced_thermometry {
        notes.push("reduced_qfi: mode-1 marginal QFI with respect to nbar".to_string());
    }
    Ok(SweepTable {
        spec: *spec,
        rows,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Peak location

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArgMax {
    pub grid_location: f64,
    pub grid_value: f64,
    /// Vertex of the parabola through the maximum and its neighbours, or the
    /// grid point when no refinement applies.
    pub location: f64,
    pub value: f64,
    pub refined: bool,
}

/// Grid maximum of `(axis, value)` samples with 3-point parabolic
/// refinement. Ties go to the smaller axis value. Non-finite values are
/// ignored.
pub fn argmax_scan(samples: &[(f64, f64)]) -> Result<ArgMax> {
    let mut pts: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(x, v)| x.is_finite() && v.is_finite())
        .collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: pts.len(),
        });
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = hi - lo;
    if spread < FLAT_ABSOLUTE || spread <= FLAT_RELATIVE * hi.abs() {
        return Err(Error::FlatTable { spread });
    }
    let k = pts.iter().position(|p| p.1 == hi).unwrap_or(0);
    let (x1, f1) = pts[k];
    let mut result = ArgMax {
        grid_location: x1,
        grid_value: f1,
        location: x1,
        value: f1,
        refined: false,
    };
    if k > 0 && k + 1 < pts.len() {
        let (x0, f0) = pts[k - 1];
        let (x2, f2) = pts[k + 1];
        let num = (x1 - x0).powi(2) * (f1 - f2) - (x1 - x2).powi(2) * (f1 - f0);
        let den = (x1 - x0) * (f1 - f2) - (x1 - x2) * (f1 - f0);
        if den != 0.0 {
            let xv = (x1 - 0.5 * num / den).clamp(x0, x2);
            // Lagrange interpolant at the vertex
            let l0 = (xv - x1) * (xv - x2) / ((x0 - x1) * (x0 - x2));
            let l1 = (xv - x0) * (xv - x2) / ((x1 - x0) * (x1 - x2));
            let l2 = (xv - x0) * (xv - x1) / ((x2 - x0) * (x2 - x1));
            result.location = xv;
            result.value = f0 * l0 + f1 * l1 + f2 * l2;
            result.refined = true;
        }
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Presets

/// Named figure regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig4a,
    Fig4b,
    Fig5a,
    Fig5b,
    Fig6a,
    Fig6b,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PresetSpec {
    Spectrum(SpectrumSpec),
    Sweep(SweepSpec),
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Fig2a,
        Preset::Fig2b,
        Preset::Fig3a,
        Preset::Fig3b,
        Preset::Fig4a,
        Preset::Fig4b,
        Preset::Fig5a,
        Preset::Fig5b,
        Preset::Fig6a,
        Preset::Fig6b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
            Preset::Fig3a => "fig3a",
            Preset::Fig3b => "fig3b",
            Preset::Fig4a => "fig4a",
            Preset::Fig4b => "fig4b",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
            Preset::Fig6a => "fig6a",
            Preset::Fig6b => "fig6b",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Fig2a => "C spectrum vs phi in [0, pi], (nbar, mbar, R) = (1, 1, 0.5)",
            Preset::Fig2b => "C spectrum vs R in [0, 1] at phi = pi/4 and pi/2, nbar = mbar = 1",
            Preset::Fig3a => {
                "QFI for phi over phi in [0, pi] x R in [0, 0.5], (nbar, mbar) = (1, 1)"
            }
            Preset::Fig3b => {
                "QFI for phi over phi in [0, pi] x R in [0, 0.5], (nbar, mbar) = (1, 20)"
            }
            Preset::Fig4a => "QFI for R over phi in [0, pi] x R in [0, 0.5], (nbar, mbar) = (1, 1)",
            Preset::Fig4b => {
                "QFI for R over phi in [0, pi] x R in [0, 0.5], (nbar, mbar) = (1, 20)"
            }
            Preset::Fig5a => {
                "QFI for nbar over tau in [0, 1] x nbar, R = 0, mbar = 1 (full and reduced)"
            }
            Preset::Fig5b => {
                "QFI for nbar over R in [0, 1] x nbar, phi = 0, mbar = 1 (full and reduced)"
            }
            Preset::Fig6a => "C spectrum over phi in [0, pi] x R in [0, 1], delta = 0",
            Preset::Fig6b => "C spectrum over phi in [0, pi] x R in [0, 1], delta = 9",
        }
    }

    pub fn spec(self) -> PresetSpec {
        let p = |n: f64, m: f64, r: f64, phi: f64| ProbeParams {
            nbar: n,
            mbar: m,
            r,
            phi,
        };
        let axis = |variable, min, max, count| Axis {
            variable,
            min,
            max,
            count,
        };
        let phi_axis = axis(AxisVariable::Phi, 0.0, PI, 101);
        let r_axis = axis(AxisVariable::R, 0.0, 0.5, 51);
        let nbar_axis = axis(AxisVariable::Nbar, 0.05, 2.0, 40);
        let spectrum = |fixed, x, y| {
            PresetSpec::Spectrum(SpectrumSpec {
                fixed,
                x,
                y,
                source: CovarianceSource::Conjugated,
            })
        };
        let sweep =
            |fixed, x, y, which| PresetSpec::Sweep(SweepSpec::new(fixed, x, Some(y), which));
        let thermometry = |fixed, x| {
            let mut s = SweepSpec::new(fixed, x, Some(nbar_axis), Parameter::Nbar);
            s.emit_reduced_thermometry = true;
            PresetSpec::Sweep(s)
        };
        match self {
            Preset::Fig2a => spectrum(
                p(1.0, 1.0, 0.5, 0.0),
                axis(AxisVariable::Phi, 0.0, PI, 400),
                None,
            ),
            Preset::Fig2b => spectrum(
                p(1.0, 1.0, 0.0, FRAC_PI_4),
                axis(AxisVariable::R, 0.0, 1.0, 201),
                Some(axis(AxisVariable::Phi, FRAC_PI_4, FRAC_PI_2, 2)),
            ),
            Preset::Fig3a => sweep(p(1.0, 1.0, 0.0, 0.0), phi_axis, r_axis, Parameter::Phi),
            Preset::Fig3b => sweep(p(1.0, 20.0, 0.0, 0.0), phi_axis, r_axis, Parameter::Phi),
            Preset::Fig4a => sweep(p(1.0, 1.0, 0.0, 0.0), phi_axis, r_axis, Parameter::R),
            Preset::Fig4b => sweep(p(1.0, 20.0, 0.0, 0.0), phi_axis, r_axis, Parameter::R),
            Preset::Fig5a => thermometry(
                p(1.0, 1.0, 0.0, 0.0),
                axis(AxisVariable::Tau, 0.0, 1.0, 101),
            ),
            Preset::Fig5b => {
                thermometry(p(1.0, 1.0, 0.0, 0.0), axis(AxisVariable::R, 0.0, 1.0, 101))
            }
            Preset::Fig6a => spectrum(
                p(1.0, 1.0, 0.0, 0.0),
                phi_axis,
                Some(axis(AxisVariable::R, 0.0, 1.0, 51)),
            ),
            Preset::Fig6b => spectrum(
                p(1.0, 10.0, 0.0, 0.0),
                phi_axis,
                Some(axis(AxisVariable::R, 0.0, 1.0, 51)),
            ),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: f64, m: f64, r: f64, phi: f64) -> ProbeParams {
        ProbeParams::new(n, m, r, phi).unwrap()
    }

    #[test]
    fn axis_endpoints_exact() {
        let a = Axis::new(AxisVariable::Phi, 0.0, PI, 400).unwrap();
        let v = a.values();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[399], PI);
        assert!(Axis::new(AxisVariable::R, 0.0, 1.0, 1).is_err());
        assert!(Axis::new(AxisVariable::R, 1.0, 1.0, 5).is_err());
        assert!(Axis::new(AxisVariable::Tau, 0.0, 1.5, 5).is_err());
    }

    #[test]
    fn tau_axis_sets_phi() {
        let q = AxisVariable::Tau.apply(&p(1.0, 1.0, 0.0, 0.0), 0.25);
        assert!((q.tau() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn printed_source_crosses_at_quarter_angles() {
        let spec = SpectrumSpec {
            fixed: p(1.0, 1.0, 0.5, 0.0),
            x: Axis::new(AxisVariable::Phi, 0.0, PI, 400).unwrap(),
            y: None,
            source: CovarianceSource::PrintedClosedForm,
        };
        let t = spectrum_trace(&spec, Execution::Sequential).unwrap();
        let pts = t.crossing_points();
        assert_eq!(pts.len(), 2, "{:?}", t.crossings);
        assert!((pts[0] - FRAC_PI_4).abs() < 1e-6);
        assert!((pts[1] - 3.0 * FRAC_PI_4).abs() < 1e-6);
    }

    #[test]
    fn conjugated_source_is_degenerate_everywhere_for_equal_occupations() {
        let spec = SpectrumSpec {
            fixed: p(1.0, 1.0, 0.5, 0.0),
            x: Axis::new(AxisVariable::Phi, 0.0, PI, 50).unwrap(),
            y: None,
            source: CovarianceSource::Conjugated,
        };
        let t = spectrum_trace(&spec, Execution::Parallel).unwrap();
        assert_eq!(t.crossings.len(), 1);
        assert!(matches!(t.crossings[0].kind, CrossingKind::Segment { .. }));
        for row in &t.rows {
            let e = row.eigenvalues.unwrap();
            assert!((e[3] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn limiting_case_r0_balanced_thermal() {
        for phi in [0.0, 0.4, 1.3] {
            let r = limiting_case_eigenvalues(LimitingCaseId::R0, &p(1.0, 1.0, 0.0, phi)).unwrap();
            assert!(r.agrees, "{r:?}");
            assert!((r.printed[3].0 - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn limiting_case_phi0_trivial() {
        let r = limiting_case_eigenvalues(LimitingCaseId::Phi0, &p(1.0, 1.0, 0.0, 0.0)).unwrap();
        assert!(r.agrees);
        for (z, v) in r.printed.iter().zip([-3.0, -3.0, 3.0, 3.0]) {
            assert!((z.0 - v).abs() < 1e-12 && z.1.abs() < 1e-12);
        }
    }

    #[test]
    fn limiting_case_r_large_disagrees() {
        let r = limiting_case_eigenvalues(LimitingCaseId::RLarge, &p(1.0, 1.0, 5.0, 0.3)).unwrap();
        assert!(!r.agrees);
        assert!(r.relative_deviation > 1e-3);
    }

    #[test]
    fn limiting_case_mismatch() {
        assert!(matches!(
            limiting_case_eigenvalues(LimitingCaseId::R0, &p(1.0, 1.0, 0.1, 0.0)),
            Err(Error::CaseMismatch(_))
        ));
        assert!(matches!(
            limiting_case_eigenvalues(LimitingCaseId::Balanced, &p(1.0, 2.0, 0.1, 0.0)),
            Err(Error::CaseMismatch(_))
        ));
    }

    #[test]
    fn thermometry_full_is_invariant() {
        for (r, phi) in [(0.0, 0.0), (0.3, 0.7), (0.5, 2.0)] {
            let q = thermometry_qfi(
                &p(1.0, 1.0, r, phi),
                ThermometryVariant::Full,
                Engine::ClosedForm,
            )
            .unwrap();
            assert!((q.value - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn thermometry_reduced_matches_thermal_marginal() {
        for phi in [0.2, 0.7, 1.2] {
            let params = p(1.0, 2.0, 0.0, phi);
            let tau = params.tau();
            let nt = tau * 1.0 + (1.0 - tau) * 2.0;
            let expected = tau * tau / (nt * (nt + 1.0));
            for engine in [Engine::ClosedForm, Engine::FidelityLimit] {
                let q = thermometry_qfi(&params, ThermometryVariant::Reduced, engine).unwrap();
                assert!(
                    (q.value - expected).abs() < 1e-8,
                    "{engine} {} {expected}",
                    q.value
                );
            }
        }
    }

    #[test]
    fn reduced_at_unit_transmissivity_equals_full() {
        let params = p(0.7, 1.5, 0.0, 0.0);
        let full = thermometry_qfi(&params, ThermometryVariant::Full, Engine::ClosedForm).unwrap();
        let red =
            thermometry_qfi(&params, ThermometryVariant::Reduced, Engine::ClosedForm).unwrap();
        assert!((full.value - red.value).abs() < 1e-10);
    }

    #[test]
    fn argmax_parabola_vertex() {
        let pts: Vec<(f64, f64)> = (0..11)
            .map(|i| {
                let x = i as f64 * 0.1;
                (x, 2.0 - (x - 0.437).powi(2))
            })
            .collect();
        let a = argmax_scan(&pts).unwrap();
        assert!((a.location - 0.437).abs() < 1e-12);
        assert!((a.value - 2.0).abs() < 1e-12);
        assert!(a.refined);
    }

    #[test]
    fn argmax_ties_and_flat() {
        let a = argmax_scan(&[(0.0, 1.0), (1.0, 3.0), (2.0, 3.0), (3.0, 0.0)]).unwrap();
        assert_eq!(a.grid_location, 1.0);
        assert!(matches!(
            argmax_scan(&[(0.0, 2.0), (1.0, 2.0), (2.0, 2.0)]),
            Err(Error::FlatTable { .. })
        ));
        assert!(matches!(
            argmax_scan(&[(0.0, 2.0), (1.0, 2.0)]),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn sweep_falls_back_on_pure_states() {
        // pure TMSV: the closed form is singular, the fidelity limit is not
        let spec = SweepSpec::new(
            p(0.0, 0.0, 0.0, 0.0),
            Axis::new(AxisVariable::R, 0.1, 0.3, 3).unwrap(),
            None,
            Parameter::R,
        );
        let t = qfi_sweep(&spec, Execution::Sequential).unwrap();
        for row in &t.rows {
            assert_eq!(row.engine, Some(Engine::FidelityLimit));
            assert!(row.flags.iter().any(|f| f == "fallback"), "{:?}", row.flags);
            assert!((row.qfi.unwrap() - 4.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sweep_row_order_is_row_major() {
        let spec = SweepSpec::new(
            p(1.0, 2.0, 0.0, 0.0),
            Axis::new(AxisVariable::Phi, 0.0, 1.0, 3).unwrap(),
            Some(Axis::new(AxisVariable::R, 0.0, 0.4, 2).unwrap()),
            Parameter::Phi,
        );
        let t = qfi_sweep(&spec, Execution::Parallel).unwrap();
        let coords: Vec<(f64, f64)> = t.rows.iter().map(|r| (r.x, r.y.unwrap())).collect();
        assert_eq!(
            coords,
            vec![
                (0.0, 0.0),
                (0.0, 0.4),
                (0.5, 0.0),
                (0.5, 0.4),
                (1.0, 0.0),
                (1.0, 0.4)
            ]
        );
        assert_eq!(t.slice_at_y(0.39).len(), 3);
    }

    #[test]
    fn presets_are_valid() {
        for preset in Preset::ALL {
            match preset.spec() {
                PresetSpec::Spectrum(s) => {
                    s.x.validate().unwrap();
                    s.fixed.validate().unwrap();
                }
                PresetSpec::Sweep(s) => s.validate().unwrap(),
            }
            assert_eq!(preset.name().parse::<Preset>().unwrap(), preset);
        }
    }
}
