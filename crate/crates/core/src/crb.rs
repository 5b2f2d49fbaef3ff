//! Monte-Carlo check of the Cramér–Rao bound with heterodyne detection.
//!
//! Both modes are measured by heterodyne detection, so each shot is a draw
//! from N(d, σ + I). Records are generated with ChaCha8 seeded from the user
//! seed, using the trial index as the stream number; a trial's record is
//! therefore independent of how many trials run or in which order.
//!
//! The estimator maximises the Gaussian log-likelihood over one parameter
//! with the others known. The likelihood only depends on the record through
//! its scatter matrix, which keeps every evaluation at 4×4 cost.

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{covariance_unchecked, d_sigma, Parameter, ProbeParams};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::phase_space::{det4, validate_covariance, ModeOrdering};
use crate::qfi::{qfi, Engine};

/// Default number of shots per trial.
pub const DEFAULT_SHOTS: usize = 200;
/// Default number of independent trials.
pub const DEFAULT_TRIALS: usize = 2000;
/// Grid points in the coarse likelihood scan.
pub const SCAN_POINTS: usize = 64;
/// Target tolerance of the estimate in θ.
pub const ESTIMATE_TOL: f64 = 1e-8;
/// θ* values of the shipped preset.
pub const PRESET_THETAS: [f64; 5] = [0.3, 0.5, 0.7, 0.9, 1.1];
/// Half-width of the default search interval in units of the classical
/// standard error 1/√(shots·F_c).
pub const SEARCH_HALF_WIDTH: f64 = 6.0;

/// Preset probe: (n̄, m̄, R) = (1, 2, 0.3), estimating φ.
pub fn preset_params(theta: f64) -> ProbeParams {
    ProbeParams {
        nbar: 1.0,
        mbar: 2.0,
        r: 0.3,
        phi: theta,
    }
}

/// Outcome distribution of a double-heterodyne measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    /// σ + I.
    pub outcome_cov: Matrix4<f64>,
    pub outcome_mean: Vector4<f64>,
}

impl MeasurementModel {
    pub fn new(params: &ProbeParams) -> Result<Self> {
        params.validate()?;
        let sigma = covariance_unchecked(params);
        let report = validate_covariance(&sigma, ModeOrdering::Qqpp)?;
        if !report.is_physical {
            return Err(Error::NotPhysical {
                min_symplectic: report.symplectic_eigenvalues[1],
            });
        }
        Ok(MeasurementModel {
            outcome_cov: sigma + Matrix4::identity(),
            outcome_mean: Vector4::zeros(),
        })
    }
}

fn sample_stream(
    model: &MeasurementModel,
    shots: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<[f64; 4]>> {
    let chol = model.outcome_cov.cholesky().ok_or(Error::Singular)?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok((0..shots)
        .map(|_| {
            let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let x = model.outcome_mean + l * z;
            [x[0], x[1], x[2], x[3]]
        })
        .collect())
}

/// `shots` heterodyne outcomes (q₁, q₂, p₁, p₂) for the probe with
/// `which = theta`, drawn from stream 0 of `seed`.
pub fn sample_outcomes(
    params: &ProbeParams,
    which: Parameter,
    theta: f64,
    shots: usize,
    seed: u64,
) -> Result<Vec<[f64; 4]>> {
    if shots == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let model = MeasurementModel::new(&params.with(which, theta))?;
    sample_stream(&model, shots, seed, 0)
}

/// Per-shot Fisher information ½tr[(Σ⁻¹Σ̇)²] of the heterodyne record.
pub fn classical_fisher(params: &ProbeParams, which: Parameter) -> Result<f64> {
    let model = MeasurementModel::new(params)?;
    let inv = model.outcome_cov.try_inverse().ok_or(Error::Singular)?;
    let x = inv * d_sigma(params, which)?;
    Ok(0.5 * (x * x).trace())
}

/// Sufficient statistic of a zero-mean Gaussian record.
#[derive(Clone, Debug, PartialEq)]
pub struct Scatter {
    /// (1/N) Σ xxᵀ.
    pub matrix: Matrix4<f64>,
    pub shots: usize,
}

impl Scatter {
    pub fn from_record(record: &[[f64; 4]]) -> Result<Self> {
        if record.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        let mut m = Matrix4::zeros();
        for x in record {
            let v = Vector4::from_column_slice(x);
            m += v * v.transpose();
        }
        Ok(Scatter {
            matrix: m / record.len() as f64,
            shots: record.len(),
        })
    }
}

/// Log-likelihood per shot, up to a θ-independent constant:
/// −½(ln|Σ| + tr(Σ⁻¹Ŝ)).
pub fn log_likelihood(scatter: &Scatter, params: &ProbeParams) -> Result<f64> {
    let cov = covariance_unchecked(params) + Matrix4::identity();
    let chol = cov.cholesky().ok_or(Error::Singular)?;
    let det = det4(&cov);
    Ok(-0.5 * (det.ln() + (chol.inverse() * scatter.matrix).trace()))
}

/// Open parameter domain for `which`.
fn in_domain(which: Parameter, v: f64) -> bool {
    match which {
        Parameter::Phi => v.is_finite(),
        _ => v >= 0.0,
    }
}

/// Maximum-likelihood estimate of `which` on `interval`, all other
/// parameters taken from `params`.
///
/// A 64-point scan brackets the maximum, golden-section search narrows it
/// and a parabola through the final bracket polishes it.
pub fn mle_estimate(
    record: &[[f64; 4]],
    params: &ProbeParams,
    which: Parameter,
    interval: (f64, f64),
) -> Result<f64> {
    mle_from_scatter(&Scatter::from_record(record)?, params, which, interval)
}

pub fn mle_from_scatter(
    scatter: &Scatter,
    params: &ProbeParams,
    which: Parameter,
    interval: (f64, f64),
) -> Result<f64> {
    let (a, b) = interval;
    if !(a < b) || !in_domain(which, a) {
        return Err(Error::InvalidParameter {
            name: "interval",
            value: a,
            reason: "must be increasing and inside the parameter domain",
        });
    }
    let ll = |t: f64| -> Result<f64> { log_likelihood(scatter, &params.with(which, t)) };

    let h = (b - a) / (SCAN_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| a + h * i as f64).collect();
    let vals = xs.iter().map(|&t| ll(t)).collect::<Result<Vec<f64>>>()?;
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Err(Error::NoInteriorMaximum);
    }
    let k = vals.iter().position(|&v| v == hi).unwrap_or(0);
    if k == 0 || k + 1 == SCAN_POINTS {
        return Err(Error::NoInteriorMaximum);
    }

    // golden-section on the bracketing cells
    let g = 0.381_966_011_250_105_1;
    let (mut lo_x, mut hi_x) = (xs[k - 1], xs[k + 1]);
    let mut c = lo_x + g * (hi_x - lo_x);
    let mut d = hi_x - g * (hi_x - lo_x);
    let (mut fc, mut fd) = (ll(c)?, ll(d)?);
    while hi_x - lo_x > 0.1 * ESTIMATE_TOL {
        if fc >= fd {
            hi_x = d;
            d = c;
            fd = fc;
            c = lo_x + g * (hi_x - lo_x);
            fc = ll(c)?;
        } else {
            lo_x = c;
            c = d;
            fc = fd;
            d = hi_x - g * (hi_x - lo_x);
            fd = ll(d)?;
        }
    }
    let mut best = 0.5 * (lo_x + hi_x);

    // quadratic polish on a symmetric stencil
    let step = 1e-4 * h.max(1e-6);
    let (f0, f1, f2) = (ll(best - step)?, ll(best)?, ll(best + step)?);
    let curvature = f0 - 2.0 * f1 + f2;
    if curvature < 0.0 {
        let shift = 0.5 * step * (f0 - f2) / curvature;
        if shift.abs() < step {
            best += shift;
        }
    }
    if best - a < ESTIMATE_TOL || b - best < ESTIMATE_TOL {
        return Err(Error::NoInteriorMaximum);
    }
    Ok(best)
}

/// Deterministic pairwise sum.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub parameter: Parameter,
    pub theta_true: f64,
    pub shots: usize,
    pub trials: usize,
    pub seed: u64,
    /// Trials whose estimate could be computed.
    pub successful_trials: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Unbiased sample variance of the estimates.
    pub empirical_variance: f64,
    pub qfi: f64,
    /// 1/(shots·QFI).
    pub crb: f64,
    /// Per-shot classical Fisher information of the heterodyne record.
    pub classical_fi: f64,
    /// 1/(shots·classical_fi).
    pub classical_bound: f64,
    /// (1 − 4/√trials)·crb.
    pub floor: f64,
    pub bound_respected: bool,
    /// variance·shots·classical_fi; 1 for an efficient estimator.
    pub efficiency_ratio: f64,
    pub search_interval: (f64, f64),
}

/// Runs `trials` independent MLE experiments of `shots` shots each.
pub fn crb_report(
    params: &ProbeParams,
    which: Parameter,
    theta: f64,
    shots: usize,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<CrbReport> {
    if shots == 0 || trials < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: trials.min(shots),
        });
    }
    let truth = params.with(which, theta);
    let model = MeasurementModel::new(&truth)?;
    let q = qfi(&truth, which, Engine::ClosedForm)
        .or_else(|_| qfi(&truth, which, Engine::FidelityLimit))?
        .value;
    let cfi = classical_fisher(&truth, which)?;
    if !(cfi > 0.0) {
        return Err(Error::NoInteriorMaximum);
    }
    let half = SEARCH_HALF_WIDTH / (shots as f64 * cfi).sqrt();
    let lower = if which == Parameter::Phi {
        theta - half
    } else {
        (theta - half).max(0.0)
    };
    let interval = (lower, theta + half);

    let estimates: Vec<Result<f64>> = map_indexed(trials, execution, |t| {
        let record = sample_stream(&model, shots, seed, t as u64)?;
        mle_estimate(&record, &truth, which, interval)
    });
    let ok: Vec<f64> = estimates
        .iter()
        .filter_map(|r| r.as_ref().ok().copied())
        .collect();
    if ok.len() < 2 {
        return Err(estimates
            .into_iter()
            .find_map(|r| r.err())
            .unwrap_or(Error::NoInteriorMaximum));
    }
    let n = ok.len() as f64;
    let mean = pairwise_sum(&ok) / n;
    let dev: Vec<f64> = ok.iter().map(|x| (x - mean).powi(2)).collect();
    let variance = pairwise_sum(&dev) / (n - 1.0);
    let crb = 1.0 / (shots as f64 * q);
    let floor = (1.0 - 4.0 / (trials as f64).sqrt()) * crb;
    Ok(CrbReport {
        parameter: which,
        theta_true: theta,
        shots,
        trials,
        seed,
        successful_trials: ok.len(),
        mean_estimate: mean,
        bias: mean - theta,
        empirical_variance: variance,
        qfi: q,
        crb,
        classical_fi: cfi,
        classical_bound: 1.0 / (shots as f64 * cfi),
        floor,
        bound_respected: variance >= floor,
        efficiency_ratio: variance * shots as f64 * cfi,
        search_interval: interval,
    })
}

/// (θ*, classical FI, QFI) at each θ* of `thetas`.
pub fn fisher_comparison(
    params: &ProbeParams,
    which: Parameter,
    thetas: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    thetas
        .iter()
        .map(|&t| {
            let p = params.with(which, t);
            Ok((
                t,
                classical_fisher(&p, which)?,
                qfi(&p, which, Engine::ClosedForm)?.value,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: f64, m: f64, r: f64, phi: f64) -> ProbeParams {
        ProbeParams::new(n, m, r, phi).unwrap()
    }

    #[test]
    fn vacuum_record_has_covariance_two() {
        let shots = 20000;
        let rec = sample_outcomes(&p(0.0, 0.0, 0.0, 0.0), Parameter::Phi, 0.0, shots, 3).unwrap();
        let s = Scatter::from_record(&rec).unwrap();
        let tol = 5.0 / (shots as f64).sqrt();
        // entries relative to the outcome variance 2
        let dev = (s.matrix - Matrix4::<f64>::identity() * 2.0).amax() / 2.0;
        assert!(dev < tol, "{dev}");
        for k in 0..4 {
            let mean: f64 = rec.iter().map(|x| x[k]).sum::<f64>() / shots as f64;
            assert!(mean.abs() / 2f64.sqrt() < tol);
        }
    }

    #[test]
    fn seeded_records_repeat() {
        let q = p(1.0, 2.0, 0.3, 0.7);
        let a = sample_outcomes(&q, Parameter::Phi, 0.7, 50, 11).unwrap();
        let b = sample_outcomes(&q, Parameter::Phi, 0.7, 50, 11).unwrap();
        let c = sample_outcomes(&q, Parameter::Phi, 0.7, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn classical_fisher_examples() {
        assert!(
            classical_fisher(&p(1.0, 1.0, 0.0, 0.4), Parameter::Phi)
                .unwrap()
                .abs()
                < 1e-15
        );
        let f = classical_fisher(&p(1.0, 1.0, 0.0, 0.0), Parameter::Nbar).unwrap();
        // Σ = diag(4, 4, 4, 4), Σ̇ = 2 on the mode-1 block: ½·2·(1/2)² = 1/4
        assert!((f - 0.25).abs() < 1e-14);
        assert!(f <= 0.5);
    }

    #[test]
    fn classical_fisher_matches_likelihood_curvature() {
        // expected log-likelihood curvature at the truth equals the FI
        let q = p(1.0, 2.0, 0.3, 0.7);
        let truth = Scatter {
            matrix: covariance_unchecked(&q) + Matrix4::identity(),
            shots: 1,
        };
        let h = 1e-4;
        let ll = |t: f64| log_likelihood(&truth, &q.with(Parameter::Phi, t)).unwrap();
        let curv = -(ll(0.7 + h) - 2.0 * ll(0.7) + ll(0.7 - h)) / (h * h);
        let f = classical_fisher(&q, Parameter::Phi).unwrap();
        assert!((curv - f).abs() < 1e-6 * f.max(1.0), "{curv} {f}");
    }

    #[test]
    fn mle_recovers_truth() {
        let q = p(1.0, 2.0, 0.3, 0.7);
        let shots = 10_000;
        let rec = sample_outcomes(&q, Parameter::Phi, 0.7, shots, 5).unwrap();
        let est = mle_estimate(&rec, &q, Parameter::Phi, (0.3, 1.1)).unwrap();
        let se = 1.0 / (shots as f64 * classical_fisher(&q, Parameter::Phi).unwrap()).sqrt();
        assert!((est - 0.7).abs() < 5.0 * se, "{est} {se}");
    }

    #[test]
    fn unidentifiable_parameter() {
        let q = p(1.0, 1.0, 0.0, 0.5);
        let rec = sample_outcomes(&q, Parameter::Phi, 0.5, 500, 1).unwrap();
        assert_eq!(
            mle_estimate(&rec, &q, Parameter::Phi, (0.0, 1.0)),
            Err(Error::NoInteriorMaximum)
        );
    }

    #[test]
    fn report_is_deterministic_across_strategies() {
        let q = preset_params(0.7);
        let a = crb_report(&q, Parameter::Phi, 0.7, 100, 64, 9, Execution::Parallel).unwrap();
        let b = crb_report(&q, Parameter::Phi, 0.7, 100, 64, 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.classical_fi <= a.qfi + 1e-8);
    }

    #[test]
    fn pairwise_sum_matches() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
    }
}
