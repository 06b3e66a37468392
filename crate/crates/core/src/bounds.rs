//! Reference bounds for the comparison curves: CRLB (scalar and joint),
//! misspecified CRLB, Hammersley-Chapman-Robbins with a grid-optimized test
//! point, the Bayesian Ziv-Zakai bound, the Bayesian CRLB closed form, and
//! the binary minimum error probability they are built from.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::models::{
    manifold_second_derivative, vec_norm, ManifoldModel, MismatchPair, NoiseKind,
};
use crate::numeric::{adaptive_quad, normal_ccdf};
use crate::predictor::{bayes_average, BetaPrior, QuadTols};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Crlb,
    Mcrlb,
    Hcrb,
    Zzb,
    Bcrlb,
}

/// A bound value in squared parameter units, with the maximizing test point
/// recorded for the bounds that optimize over one.
#[derive(Debug, Clone, Copy)]
pub struct BoundValue {
    pub value: f64,
    pub kind: BoundKind,
    pub test_point: Option<f64>,
}

fn fisher_factor(noise_kind: NoiseKind, sigma2: f64) -> f64 {
    match noise_kind {
        NoiseKind::ComplexCircular => 2.0 / sigma2,
        NoiseKind::Real => 1.0 / sigma2,
    }
}

/// Fisher information for a scalar parametric-mean model:
/// I_D = (2 / sigma^2) ||dm/dtheta||^2 (halved for real noise).
pub fn fisher_information_scalar(
    model: &ManifoldModel,
    theta_bar: f64,
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise variance must be positive".to_string()));
    }
    let d = model.derivative(&[theta_bar], 0)?;
    Ok(fisher_factor(model.noise_kind(), sigma2) * d.iter().map(|z| z.norm_sqr()).sum::<f64>())
}

pub fn crlb_scalar(model: &ManifoldModel, theta_bar: f64, sigma2: f64) -> Result<BoundValue> {
    assert_eq!(model.param_dim(), 1);
    let info = fisher_information_scalar(model, theta_bar, sigma2)?;
    if !(info > 0.0) {
        return Err(Error::SingularInformation(format!(
            "Fisher information {info} at theta = {theta_bar}"
        )));
    }
    Ok(BoundValue {
        value: 1.0 / info,
        kind: BoundKind::Crlb,
        test_point: None,
    })
}

/// Diagonal of the inverse Fisher matrix for a multi-parameter model:
/// FIM_ij = (2 / sigma^2) Re{ d_i^H d_j }.
pub fn crlb_joint(model: &ManifoldModel, theta: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let j = model.param_dim();
    assert_eq!(theta.len(), j);
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise variance must be positive".to_string()));
    }
    let derivs: Vec<Vec<Complex64>> = (0..j)
        .map(|i| model.derivative(theta, i))
        .collect::<Result<_>>()?;
    let factor = fisher_factor(model.noise_kind(), sigma2);
    let mut fim = DMatrix::zeros(j, j);
    for a in 0..j {
        for b in a..j {
            let g: Complex64 = derivs[a]
                .iter()
                .zip(&derivs[b])
                .map(|(x, y)| x.conj() * y)
                .sum();
            fim[(a, b)] = factor * g.re;
            fim[(b, a)] = fim[(a, b)];
        }
    }
    let inv = fim.clone().try_inverse().ok_or_else(|| {
        Error::SingularInformation(format!("Fisher matrix not invertible at {theta:?}"))
    })?;
    let diag: Vec<f64> = (0..j).map(|i| inv[(i, i)]).collect();
    if diag.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularInformation(format!(
            "non-positive CRLB diagonal {diag:?} at {theta:?}"
        )));
    }
    Ok(diag)
}

/// Misspecified CRLB for the parametric-mean problem: C_D^{-2} I_D with the
/// curvature C_D = -I_D + (2 / sigma-bar^2) Re{ m''(theta)^H mu(theta) },
/// all derivatives taken on the assumed model.
pub fn mcrlb_parametric_mean(pair: &MismatchPair, theta_bar: f64) -> Result<BoundValue> {
    assert_eq!(pair.assumed_model.param_dim(), 1);
    let sigma2 = pair.assumed_noise_variance;
    let i_d = fisher_information_scalar(&pair.assumed_model, theta_bar, sigma2)?;
    if !(i_d > 0.0) {
        return Err(Error::SingularInformation(format!(
            "assumed-model Fisher information {i_d} at theta = {theta_bar}"
        )));
    }
    let m2 = manifold_second_derivative(&pair.assumed_model, &[theta_bar], 0, None)?;
    let mu = pair.mean_offset(&[theta_bar])?;
    let cross: f64 = m2.iter().zip(&mu).map(|(d, u)| (d.conj() * u).re).sum();
    let c_d = -i_d + fisher_factor(pair.assumed_model.noise_kind(), sigma2) * cross;
    if c_d.abs() < 1e-12 * i_d {
        return Err(Error::DegenerateCurvature { c_d, i_d });
    }
    Ok(BoundValue {
        value: i_d / (c_d * c_d),
        kind: BoundKind::Mcrlb,
        test_point: None,
    })
}

/// Hammersley-Chapman-Robbins bound with a single test point optimized over
/// a caller-supplied grid: max (phi - theta)^2 / (exp(2 ||m~||^2 / sigma^2) - 1).
pub fn hcrb_single_test_point(
    model: &ManifoldModel,
    theta_bar: f64,
    sigma2: f64,
    grid: &[f64],
) -> Result<BoundValue> {
    assert_eq!(model.param_dim(), 1);
    if grid.is_empty() {
        return Err(Error::Domain("HCRB test-point grid is empty".to_string()));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise variance must be positive".to_string()));
    }
    let m_bar = model.mean(&[theta_bar])?;
    let mut best = f64::NEG_INFINITY;
    let mut best_point = grid[0];
    for &phi in grid {
        let gap = phi - theta_bar;
        if gap == 0.0 {
            return Err(Error::Domain(
                "HCRB grid must exclude the true parameter value".to_string(),
            ));
        }
        let m = model.mean(&[phi])?;
        let d2: f64 = m.iter().zip(&m_bar).map(|(a, b)| (a - b).norm_sqr()).sum();
        let expo = 2.0 * d2 / sigma2;
        // Past the overflow point the -1 is negligible; use the limit form.
        let term = if expo > 700.0 {
            gap * gap * (-expo).exp()
        } else {
            gap * gap / (expo.exp_m1())
        };
        if term > best {
            best = term;
            best_point = phi;
        }
    }
    Ok(BoundValue {
        value: best,
        kind: BoundKind::Hcrb,
        test_point: Some(best_point),
    })
}

/// Minimum error probability of the optimal binary test between m(phi1) and
/// m(phi2) under priors (pi1, pi2) and complex circular noise.
pub fn p_min_e(
    model: &ManifoldModel,
    phi1: f64,
    phi2: f64,
    pi1: f64,
    pi2: f64,
    sigma_w2: f64,
) -> Result<f64> {
    if !(pi1 >= 0.0 && pi2 >= 0.0 && (pi1 + pi2 - 1.0).abs() <= 1e-9) {
        return Err(Error::Domain(format!(
            "priors must be nonnegative and sum to 1, got ({pi1}, {pi2})"
        )));
    }
    if pi1 == 0.0 || pi2 == 0.0 {
        // A certain hypothesis is never misclassified by the optimal test.
        return Ok(0.0);
    }
    let m1 = model.mean(&[phi1])?;
    let m2 = model.mean(&[phi2])?;
    let mt: Vec<Complex64> = m2.iter().zip(&m1).map(|(a, b)| a - b).collect();
    let d = vec_norm(&mt);
    p_min_e_from_distance(d, pi1, pi2, sigma_w2)
}

fn p_min_e_from_distance(d: f64, pi1: f64, pi2: f64, sigma_w2: f64) -> Result<f64> {
    if pi1 <= 0.0 || pi2 <= 0.0 {
        return Ok(0.0);
    }
    if d < 1e-300 {
        // Indistinguishable hypotheses: the optimal test errs with the
        // smaller prior.
        return Ok(pi1.min(pi2));
    }
    let var = 2.0 * sigma_w2;
    let log_ratio = (pi1 / pi2).ln();
    let t1 = normal_ccdf(d + sigma_w2 / d * log_ratio, 0.0, var)?;
    let t2 = normal_ccdf(d - sigma_w2 / d * log_ratio, 0.0, var)?;
    Ok(pi1 * t1 + pi2 * t2)
}

/// Ziv-Zakai bound (no valley filling) for a scalar DOA prior on [0, pi]:
/// (1/2) int_0^pi int h (f(phi) + f(phi+h)) P_min^e(phi, phi+h) dphi dh
/// with pi1 = f(phi) / (f(phi) + f(phi+h)).
pub fn zzb(
    model: &ManifoldModel,
    prior: &BetaPrior,
    sigma_w2: f64,
    tols: QuadTols,
) -> Result<BoundValue> {
    assert_eq!(model.param_dim(), 1);
    let (s_lo, s_hi) = model.support(0);
    let width = s_hi - s_lo;
    // First pass at the requested tolerances; when the bound itself is
    // smaller than the absolute tolerance the quadrature would stop too
    // early, so rescale abs_tol to the estimate and run once more.
    let first = zzb_pass(model, prior, sigma_w2, tols, s_lo, s_hi, width)?;
    if first.value > 0.0 && first.value < tols.abs_tol {
        let rescaled = crate::predictor::QuadTols::new(
            (tols.rel_tol * first.value).max(f64::MIN_POSITIVE),
            tols.rel_tol,
        );
        return zzb_pass(model, prior, sigma_w2, rescaled, s_lo, s_hi, width);
    }
    Ok(first)
}

#[allow(clippy::too_many_arguments)]
fn zzb_pass(
    model: &ManifoldModel,
    prior: &BetaPrior,
    sigma_w2: f64,
    tols: QuadTols,
    s_lo: f64,
    s_hi: f64,
    width: f64,
) -> Result<BoundValue> {
    let inner_failure = std::cell::Cell::new(None::<String>);
    let inner = |h: f64| -> f64 {
        if h <= 0.0 || h >= width {
            return 0.0;
        }
        let integrand = |phi: f64| {
            let f1 = prior.density(phi);
            let f2 = prior.density(phi + h);
            if f1 + f2 <= 0.0 {
                return 0.0;
            }
            let pi1 = f1 / (f1 + f2);
            let m1 = model.mean_unchecked(&[phi]);
            let m2 = model.mean_unchecked(&[phi + h]);
            let d = m1
                .iter()
                .zip(&m2)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let pe = p_min_e_from_distance(d, pi1, 1.0 - pi1, sigma_w2)
                .expect("priors are valid by construction");
            (f1 + f2) * pe
        };
        match adaptive_quad(integrand, s_lo, s_hi - h, tols.abs_tol / PI, tols.rel_tol) {
            Ok(r) => r.value,
            Err(e) => {
                inner_failure.set(Some(e.to_string()));
                0.0
            }
        }
    };
    let outer = adaptive_quad(
        |h: f64| h * inner(h),
        0.0,
        width,
        tols.abs_tol,
        tols.rel_tol,
    )?;
    if let Some(msg) = inner_failure.take() {
        return Err(Error::Domain(format!("ZZB inner integral failed: {msg}")));
    }
    Ok(BoundValue {
        value: 0.5 * outer.value,
        kind: BoundKind::Zzb,
        test_point: None,
    })
}

/// Bayesian CRLB closed form for the ULA azimuth problem with a symmetric
/// beta prior: (pi^2 SNR N(N-1)(2N-1)/3 E[sin^2 phi] + 4(a-1)(2a-1) /
/// (pi^2 (a-2)))^{-1}.
pub fn bcrlb(prior: &BetaPrior, snr: f64, n: usize) -> Result<BoundValue> {
    if prior.is_flat() || !(prior.a > 2.0) {
        return Err(Error::Domain(format!(
            "BCRLB prior term requires beta shape a > 2, got a = {}",
            prior.a
        )));
    }
    if !(snr >= 0.0) {
        return Err(Error::Domain(format!("SNR must be nonnegative, got {snr}")));
    }
    let nf = n as f64;
    let sin2 = bayes_average(prior, |phi| phi.sin().powi(2), 0.001);
    let data_term = PI * PI * snr * nf * (nf - 1.0) * (2.0 * nf - 1.0) / 3.0 * sin2;
    let a = prior.a;
    let prior_term = 4.0 * (a - 1.0) * (2.0 * a - 1.0) / (PI * PI * (a - 2.0));
    Ok(BoundValue {
        value: 1.0 / (data_term + prior_term),
        kind: BoundKind::Bcrlb,
        test_point: None,
    })
}
