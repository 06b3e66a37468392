//! Predicted-MSE integrals for implicitly defined estimators.
//!
//! Every operation here evaluates some specialization of the pairwise error
//! integral 2 * int |eps| P(objective at theta + 2 eps beats objective at
//! theta) d eps over the finite support of the estimated parameter: the
//! generic form, the ML scalar form, the two nuisance-parameter
//! approximations, the misspecified-ML form, and the per-theta MAP form with
//! its Bayesian average.

use std::cell::Cell;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::beta::beta;

use crate::models::{vec_norm, ManifoldModel, MismatchPair, NoiseKind};
use crate::numeric::{
    adaptive_quad, adaptive_quad_breakpoints, normal_ccdf, OrthantSampler, QuadResult, RngState,
};
use crate::{Error, Result};

/// Quadrature tolerances for the error integral.
#[derive(Debug, Clone, Copy)]
pub struct QuadTols {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadTols {
    fn default() -> Self {
        QuadTols {
            abs_tol: 1e-5,
            rel_tol: 1e-5,
        }
    }
}

impl QuadTols {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadTols { abs_tol, rel_tol }
    }

    /// Tighter settings used for the per-theta MAP integrals feeding the
    /// Bayesian average, where the outer average needs extra headroom.
    pub fn tight() -> Self {
        QuadTols {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
        }
    }
}

/// Predicted MSE with its quadrature diagnostics.
#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub mse: f64,
    pub quad: QuadResult,
    pub method: String,
    /// Conservative standard error when the integrand itself was Monte Carlo
    /// estimated (full multivariate nuisance form only).
    pub mc_stderr: Option<f64>,
}

/// Finite nuisance-parameter grid containing the true nuisance value.
#[derive(Debug, Clone)]
pub struct NuisanceGrid {
    pub points: Vec<Vec<f64>>,
    pub true_index: usize,
}

impl NuisanceGrid {
    pub fn single(true_value: Vec<f64>) -> Self {
        NuisanceGrid {
            points: vec![true_value],
            true_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn true_value(&self) -> &[f64] {
        &self.points[self.true_index]
    }
}

/// Scalar nuisance grid: the true value first, then logarithmically spaced
/// offsets on both sides, clipped to the support when one is given.
pub fn build_nuisance_grid(
    theta_bar_nuis: f64,
    e_max: f64,
    n_log: usize,
    lower_floor: f64,
    support: Option<(f64, f64)>,
) -> NuisanceGrid {
    assert!(e_max > lower_floor && lower_floor > 0.0 && n_log >= 1);
    let ratio = (e_max / lower_floor).powf(1.0 / (n_log as f64 - 1.0));
    let offsets: Vec<f64> = (0..n_log)
        .map(|i| lower_floor * ratio.powi(i as i32))
        .collect();
    let in_support = |v: f64| match support {
        Some((lo, hi)) => v >= lo && v <= hi,
        None => true,
    };
    let mut points = vec![vec![theta_bar_nuis]];
    for &d in &offsets {
        if in_support(theta_bar_nuis - d) {
            points.push(vec![theta_bar_nuis - d]);
        }
    }
    for &d in &offsets {
        if in_support(theta_bar_nuis + d) {
            points.push(vec![theta_bar_nuis + d]);
        }
    }
    NuisanceGrid {
        points,
        true_index: 0,
    }
}

pub const DEFAULT_NUISANCE_N_LOG: usize = 60;
pub const DEFAULT_NUISANCE_FLOOR: f64 = 1e-7;

/// Geometric partition of [0, len] refining toward 0, where the pairwise
/// error probability concentrates at high SNR. Returned ascending, starting
/// at 0 and ending at len.
fn geometric_breakpoints(len: f64) -> Vec<f64> {
    debug_assert!(len > 0.0);
    let mut pts = vec![0.0];
    // 3 points per decade down to a relative scale of 1e-12.
    for k in 0..=36 {
        pts.push(len * 10f64.powf((k - 36) as f64 / 3.0));
    }
    pts.dedup();
    pts
}

/// Integrate 2 * int |eps| p(eps) d eps over [lo, hi], splitting at the kink
/// of |eps| when zero is interior and seeding the quadrature with a
/// geometric partition so narrow high-SNR spikes near eps = 0 are resolved.
pub(crate) fn error_integral(
    p: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tols: QuadTols,
) -> Result<QuadResult> {
    error_integral_budget(p, lo, hi, tols, crate::numeric::DEFAULT_MAX_EVALS)
}

fn error_integral_budget(
    p: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tols: QuadTols,
    max_evals: usize,
) -> Result<QuadResult> {
    let f = |e: f64| e.abs() * p(e);
    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    let mut add = |r: QuadResult| {
        value += r.value;
        err += r.abs_error_estimate;
        evals += r.n_evals;
    };
    let positive_side = |a: f64, b: f64| -> Vec<f64> {
        // Partition of [a, b] with 0 <= a, refined toward a (nearest to zero).
        geometric_breakpoints(b - a).iter().map(|t| a + t).collect()
    };
    if lo < 0.0 && hi > 0.0 {
        let neg: Vec<f64> = positive_side(0.0, -lo).iter().rev().map(|t| -t).collect();
        add(adaptive_quad_breakpoints(
            &f,
            &neg,
            tols.abs_tol / 2.0,
            tols.rel_tol,
            max_evals / 2,
        )?);
        add(adaptive_quad_breakpoints(
            &f,
            &positive_side(0.0, hi),
            tols.abs_tol / 2.0,
            tols.rel_tol,
            max_evals / 2,
        )?);
    } else if lo < hi {
        let pts = if lo >= 0.0 {
            positive_side(lo, hi)
        } else {
            positive_side(-hi, -lo).iter().rev().map(|t| -t).collect()
        };
        add(adaptive_quad_breakpoints(&f, &pts, tols.abs_tol, tols.rel_tol, max_evals)?);
    }
    Ok(QuadResult {
        value: 2.0 * value,
        abs_error_estimate: 2.0 * err,
        n_evals: evals.max(1),
    })
}

fn epsilon_limits(support: (f64, f64), theta_bar: f64) -> Result<(f64, f64)> {
    let (lo, hi) = support;
    if !(theta_bar >= lo && theta_bar <= hi) {
        return Err(Error::Domain(format!(
            "true parameter {theta_bar} outside support [{lo}, {hi}]"
        )));
    }
    Ok(((lo - theta_bar) / 2.0, (hi - theta_bar) / 2.0))
}

/// Error-magnitude limits for parameter `index` of a model: support-derived
/// for an ordinary parameter, +/- quarter-width for a periodic (angular) one
/// where errors are measured modulo the period.
fn model_epsilon_limits(
    model: &ManifoldModel,
    index: usize,
    theta_bar: f64,
) -> Result<(f64, f64)> {
    let (lo, hi) = model.support(index);
    if !(theta_bar >= lo && theta_bar <= hi) {
        return Err(Error::Domain(format!(
            "true parameter {theta_bar} outside support [{lo}, {hi}]"
        )));
    }
    if model.is_periodic(index) {
        let quarter = (hi - lo) / 4.0;
        Ok((-quarter, quarter))
    } else {
        Ok(((lo - theta_bar) / 2.0, (hi - theta_bar) / 2.0))
    }
}

/// Generic predicted MSE for a caller-supplied exceedance probability
/// p(eps) = P(L(x; theta + 2 eps) >= L(x; theta)).
pub fn mse_hat_generic(
    exceed_prob: impl Fn(f64) -> f64,
    theta_bar: f64,
    support: (f64, f64),
    tols: QuadTols,
) -> Result<PredictionResult> {
    let (lo, hi) = epsilon_limits(support, theta_bar)?;
    let violation = Cell::new(None::<f64>);
    let p = |e: f64| {
        let v = exceed_prob(e);
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            violation.set(Some(v));
        }
        v
    };
    let quad = error_integral(p, lo, hi, tols)?;
    if let Some(v) = violation.get() {
        return Err(Error::Contract(format!(
            "exceed_prob returned {v}, outside [0, 1]"
        )));
    }
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "generic".to_string(),
        mc_stderr: None,
    })
}

fn ccdf_variance(noise_kind: NoiseKind, sigma2: f64) -> f64 {
    match noise_kind {
        NoiseKind::ComplexCircular => 2.0 * sigma2,
        NoiseKind::Real => 4.0 * sigma2,
    }
}

/// ML predicted MSE for a scalar-parameter parametric mean model.
pub fn mse_hat_ml_scalar(
    model: &ManifoldModel,
    theta_bar: f64,
    sigma2: f64,
    tols: QuadTols,
) -> Result<PredictionResult> {
    assert_eq!(model.param_dim(), 1, "scalar predictor needs a 1-D model");
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise variance must be positive".to_string()));
    }
    let (lo, hi) = model_epsilon_limits(model, 0, theta_bar)?;
    let var = ccdf_variance(model.noise_kind(), sigma2);
    let m_bar = model.mean(&[theta_bar])?;
    let p = |e: f64| {
        let m = model.mean_unchecked(&[theta_bar + 2.0 * e]);
        let d: f64 = m
            .iter()
            .zip(&m_bar)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        normal_ccdf(d, 0.0, var).expect("variance is positive")
    };
    let quad = error_integral(p, lo, hi, tols)?;
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "ml-scalar".to_string(),
        mc_stderr: None,
    })
}

/// Distance between m(theta1 + 2 eps, nuis) and the true mean
/// m(theta1, nuis_true), for the nuisance forms.
fn nuisance_distance(
    model: &ManifoldModel,
    theta1_bar: f64,
    eps: f64,
    nuis: &[f64],
    m_true: &[Complex64],
) -> f64 {
    let mut full = Vec::with_capacity(1 + nuis.len());
    full.push(theta1_bar + 2.0 * eps);
    full.extend_from_slice(nuis);
    let m = model.mean_unchecked(&full);
    m.iter()
        .zip(m_true)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn true_mean_with_nuisance(
    model: &ManifoldModel,
    theta1_bar: f64,
    grid: &NuisanceGrid,
) -> Result<Vec<Complex64>> {
    if grid.is_empty() {
        return Err(Error::Domain("nuisance grid is empty".to_string()));
    }
    let mut full = vec![theta1_bar];
    full.extend_from_slice(grid.true_value());
    model.mean(&full)
}

/// Minimum-distance approximation to the nuisance-parameter predicted MSE:
/// needs only a univariate ccdf per integrand evaluation.
pub fn mse_hat_ml_nuisance_min(
    model: &ManifoldModel,
    theta1_bar: f64,
    grid: &NuisanceGrid,
    sigma2: f64,
    tols: QuadTols,
) -> Result<PredictionResult> {
    let m_true = true_mean_with_nuisance(model, theta1_bar, grid)?;
    let (lo, hi) = model_epsilon_limits(model, 0, theta1_bar)?;
    let var = ccdf_variance(model.noise_kind(), sigma2);
    let p = |e: f64| {
        let dmin = grid
            .points
            .iter()
            .map(|nuis| nuisance_distance(model, theta1_bar, e, nuis, &m_true))
            .fold(f64::INFINITY, f64::min);
        normal_ccdf(dmin, 0.0, var).expect("variance is positive")
    };
    let quad = error_integral(p, lo, hi, tols)?;
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "ml-nuisance-min".to_string(),
        mc_stderr: None,
    })
}

pub const NUISANCE_FULL_GRID_CAP: usize = 25;

/// Full multivariate nuisance form: per epsilon, one K-variate normal orthant
/// probability estimated by Monte Carlo with common random numbers across
/// epsilon so the quadrature sees a smooth integrand.
pub fn mse_hat_ml_nuisance_full(
    model: &ManifoldModel,
    theta1_bar: f64,
    grid: &NuisanceGrid,
    sigma2: f64,
    mc_samples: usize,
    rng: &RngState,
    tols: QuadTols,
) -> Result<PredictionResult> {
    let k = grid.len();
    if k > NUISANCE_FULL_GRID_CAP {
        return Err(Error::Domain(format!(
            "nuisance grid of size {k} exceeds the cap of {NUISANCE_FULL_GRID_CAP}; \
             use the min-distance form for large grids"
        )));
    }
    let m_true = true_mean_with_nuisance(model, theta1_bar, grid)?;
    let (lo, hi) = model_epsilon_limits(model, 0, theta1_bar)?;
    let sampler = OrthantSampler::new(rng, mc_samples, k);
    let n = model.n_sensors();
    let failure = Cell::new(None::<String>);
    let p = |e: f64| {
        // Columns of M~ are the difference vectors per grid point.
        let cols: Vec<Vec<Complex64>> = grid
            .points
            .iter()
            .map(|nuis| {
                let mut full = vec![theta1_bar + 2.0 * e];
                full.extend_from_slice(nuis);
                let m = model.mean_unchecked(&full);
                m.iter().zip(&m_true).map(|(a, b)| a - b).collect()
            })
            .collect();
        let mu: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let mut cov = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let g: Complex64 = (0..n).map(|s| cols[i][s].conj() * cols[j][s]).sum();
                let v = 2.0 * sigma2 * g.re;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        match sampler.lower_orthant(&mu, &cov) {
            Ok(est) => 1.0 - est.p,
            Err(err) => {
                failure.set(Some(err.to_string()));
                0.0
            }
        }
    };
    // The Monte Carlo noise floor caps attainable quadrature accuracy; run
    // with a bounded budget and accept the best estimate on non-convergence.
    let noise_floor = 1.0 / (mc_samples as f64).sqrt();
    let quad = match error_integral(
        &p,
        lo,
        hi,
        QuadTols::new(tols.abs_tol.max(noise_floor), tols.rel_tol.max(1e-3)),
    ) {
        Ok(q) => q,
        Err(Error::Convergence {
            best_value,
            error_estimate,
            n_evals,
        }) => QuadResult {
            value: best_value,
            abs_error_estimate: error_estimate,
            n_evals,
        },
        Err(e) => return Err(e),
    };
    if let Some(msg) = failure.take() {
        return Err(Error::Domain(format!(
            "orthant probability failed inside the error integral: {msg}"
        )));
    }
    // Conservative: binomial stderr <= 0.5 / sqrt(n) at every epsilon.
    let stderr_bound =
        2.0 * 0.5 / (mc_samples as f64).sqrt() * (lo * lo + hi * hi) / 2.0;
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "ml-nuisance-full".to_string(),
        mc_stderr: Some(stderr_bound),
    })
}

/// Misspecified-ML predicted MSE: the difference vector comes from the
/// assumed model, the probability from the true measurement distribution.
pub fn mse_hat_mml(
    pair: &MismatchPair,
    theta_bar: f64,
    tols: QuadTols,
) -> Result<PredictionResult> {
    assert_eq!(pair.assumed_model.param_dim(), 1);
    let (lo, hi) = model_epsilon_limits(&pair.assumed_model, 0, theta_bar)?;
    let var = ccdf_variance(pair.assumed_model.noise_kind(), pair.true_noise_variance);
    let mu = pair.mean_offset(&[theta_bar])?;
    let m_bar = pair.assumed_model.mean(&[theta_bar])?;
    let p = |e: f64| {
        let m = pair.assumed_model.mean_unchecked(&[theta_bar + 2.0 * e]);
        let mt: Vec<Complex64> = m.iter().zip(&m_bar).map(|(a, b)| a - b).collect();
        let d = vec_norm(&mt);
        if d < 1e-300 {
            return 0.5;
        }
        let cross: Complex64 = mt.iter().zip(&mu).map(|(t, u)| t.conj() * u).sum();
        let arg = d - 2.0 * cross.re / d;
        normal_ccdf(arg, 0.0, var).expect("variance is positive")
    };
    let quad = error_integral(p, lo, hi, tols)?;
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "mml".to_string(),
        mc_stderr: None,
    })
}

/// Symmetric beta prior on [0, pi], with a uniform override for the
/// flat-prior reduction.
#[derive(Debug, Clone, Copy)]
pub struct BetaPrior {
    pub a: f64,
    flat: bool,
    log_norm: f64,
}

impl BetaPrior {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 2.0) {
            return Err(Error::Domain(format!(
                "beta prior shape must exceed 2 (BCRLB prior term), got {a}"
            )));
        }
        let prior = BetaPrior {
            a,
            flat: false,
            log_norm: (PI * beta(a, a)).ln(),
        };
        // Normalization sanity: the density must integrate to 1 over [0, pi].
        let total = adaptive_quad(|x| prior.density(x), 0.0, PI, 1e-9, 1e-9)?;
        if (total.value - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "beta prior normalization off by {:.3e}",
                total.value - 1.0
            )));
        }
        Ok(prior)
    }

    /// Uniform density on [0, pi]; stands in for the a -> 1 flat limit.
    pub fn uniform() -> Self {
        BetaPrior {
            a: 1.0,
            flat: true,
            log_norm: 0.0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn density(&self, phi: f64) -> f64 {
        if !(0.0..=PI).contains(&phi) {
            return 0.0;
        }
        if self.flat {
            return 1.0 / PI;
        }
        if phi == 0.0 || phi == PI {
            return 0.0;
        }
        let t = phi / PI;
        ((self.a - 1.0) * (t.ln() + (1.0 - t).ln()) - self.log_norm).exp()
    }

    pub fn ln_density(&self, phi: f64) -> f64 {
        let d = self.density(phi);
        if d > 0.0 {
            d.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Per-theta MAP predicted MSE on a scalar model over [0, pi].
pub fn mse_hat_map_at(
    model: &ManifoldModel,
    prior: &BetaPrior,
    phi: f64,
    sigma2: f64,
    tols: QuadTols,
) -> Result<PredictionResult> {
    assert_eq!(model.param_dim(), 1);
    let (s_lo, s_hi) = model.support(0);
    if !(phi > s_lo && phi < s_hi) {
        return Err(Error::Domain(format!(
            "MAP prediction requires interior phi, got {phi} in [{s_lo}, {s_hi}]"
        )));
    }
    if prior.density(phi) <= 0.0 {
        return Err(Error::Domain(format!(
            "prior density is zero at phi = {phi}"
        )));
    }
    // Nominal [-pi, pi] error limits intersected with the support-derived ones.
    let (lo, hi) = epsilon_limits((s_lo, s_hi), phi)?;
    let (lo, hi) = (lo.max(-PI), hi.min(PI));
    let var = ccdf_variance(model.noise_kind(), sigma2);
    let ln_f_phi = prior.ln_density(phi);
    let m_bar = model.mean(&[phi])?;
    let p = |e: f64| {
        let shifted = phi + 2.0 * e;
        let m = model.mean_unchecked(&[shifted]);
        let d: f64 = m
            .iter()
            .zip(&m_bar)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let ln_f_shift = prior.ln_density(shifted);
        if d < 1e-300 {
            // Manifold ambiguity: the prior ratio alone decides the winner.
            return if ln_f_shift > ln_f_phi {
                1.0
            } else if ln_f_shift < ln_f_phi {
                0.0
            } else {
                0.5
            };
        }
        if ln_f_shift == f64::NEG_INFINITY {
            // Zero prior density: that hypothesis can never win.
            return 0.0;
        }
        let arg = d + sigma2 / d * (ln_f_phi - ln_f_shift);
        normal_ccdf(arg, 0.0, var).expect("variance is positive")
    };
    let quad = error_integral(p, lo, hi, tols)?;
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "map".to_string(),
        mc_stderr: None,
    })
}

/// Prior-weighted average int f(phi) g(phi) d phi on a uniform trapezoid grid.
pub fn bayes_average(
    prior: &BetaPrior,
    per_theta: impl Fn(f64) -> f64,
    grid_spacing: f64,
) -> f64 {
    assert!(grid_spacing > 0.0);
    let n_steps = (PI / grid_spacing).ceil() as usize;
    let h = PI / n_steps as f64;
    let weighted = |phi: f64| {
        let f = prior.density(phi);
        if f > 0.0 {
            f * per_theta(phi)
        } else {
            0.0
        }
    };
    let mut sum = 0.5 * (weighted(0.0) + weighted(PI));
    for i in 1..n_steps {
        sum += weighted(i as f64 * h);
    }
    sum * h
}

pub const DEFAULT_BAYES_GRID_SPACING: f64 = 0.01;
