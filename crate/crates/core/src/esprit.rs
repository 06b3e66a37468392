//! Single-source ESPRIT on a half-wavelength ULA: the closed-form estimator,
//! the quadratic cost difference Delta J with its exact first two moments,
//! and a Gaussian-fit predicted MSE for the azimuth estimate.
//!
//! The cost is J(omega) = sum_{n=1}^{N-1} |x_n - e^{j omega} x_{n-1}|^2,
//! minimized in closed form by omega-hat = arg(sum x*_{n-1} x_n). The cost
//! difference between the hypotheses phi-bar + 2 eps and phi-bar is the
//! Hermitian quadratic form x^H Q x with a tridiagonal, zero-diagonal Q.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::numeric::normal_cdf;
use crate::predictor::{error_integral, PredictionResult, QuadTols};
use crate::{Error, Result};

/// Single complex exponential source on an N-element half-wavelength ULA.
#[derive(Debug, Clone, Copy)]
pub struct EspritScenario {
    pub n: usize,
    pub alpha: Complex64,
    pub phi_bar: f64,
    pub sigma_w2: f64,
}

impl EspritScenario {
    pub fn new(n: usize, alpha: Complex64, phi_bar: f64, sigma_w2: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("ESPRIT needs N >= 3 sensors, got {n}")));
        }
        if !(phi_bar > 0.0 && phi_bar < PI) {
            return Err(Error::Domain(format!(
                "true azimuth must be interior to (0, pi), got {phi_bar}"
            )));
        }
        if !(sigma_w2 > 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be positive, got {sigma_w2}"
            )));
        }
        Ok(EspritScenario {
            n,
            alpha,
            phi_bar,
            sigma_w2,
        })
    }

    pub fn omega_bar(&self) -> f64 {
        PI * self.phi_bar.cos()
    }

    /// Noiseless mean m_n = alpha exp(j pi cos(phi-bar) n), n = 0..N-1.
    pub fn mean(&self) -> Vec<Complex64> {
        let omega = self.omega_bar();
        (0..self.n)
            .map(|k| self.alpha * Complex64::new(0.0, omega * k as f64).exp())
            .collect()
    }
}

/// Closed-form ESPRIT estimate: omega-hat is the argument of the lag-1
/// correlation sum, phi-hat = arccos(omega-hat / pi) with the ratio clamped
/// to [-1, 1] (out-of-range spatial frequencies map to endfire).
pub fn esprit_estimate(x: &[Complex64]) -> Result<(f64, f64)> {
    if x.len() < 2 {
        return Err(Error::Domain(format!(
            "ESPRIT needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let s: Complex64 = x.windows(2).map(|w| w[0].conj() * w[1]).sum();
    if s.norm() == 0.0 {
        return Err(Error::UndefinedEstimate(
            "zero lag-1 correlation sum".to_string(),
        ));
    }
    let omega_hat = s.arg();
    let phi_hat = (omega_hat / PI).clamp(-1.0, 1.0).acos();
    Ok((omega_hat, phi_hat))
}

/// J(omega) evaluated directly from the measurements.
pub fn esprit_cost(x: &[Complex64], omega: f64) -> f64 {
    let rot = Complex64::new(0.0, omega).exp();
    x.windows(2).map(|w| (w[1] - rot * w[0]).norm_sqr()).sum()
}

/// Off-diagonal coefficient c = exp(j pi cos(phi-bar)) - exp(j pi cos(phi-bar + 2 eps)).
pub fn q_coefficient(phi_bar: f64, epsilon: f64) -> Complex64 {
    let w0 = PI * phi_bar.cos();
    let w1 = PI * (phi_bar + 2.0 * epsilon).cos();
    Complex64::new(0.0, w0).exp() - Complex64::new(0.0, w1).exp()
}

/// Dense Q such that Delta J_{2 eps} = x^H Q x: c on the subdiagonal, its
/// conjugate on the superdiagonal, zeros elsewhere.
pub fn build_q_matrix(phi_bar: f64, epsilon: f64, n: usize) -> DMatrix<Complex64> {
    let c = q_coefficient(phi_bar, epsilon);
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        q[(i + 1, i)] = c;
        q[(i, i + 1)] = c.conj();
    }
    q
}

/// Exact first two moments of Delta J_{2 eps} = x^H Q x under
/// x = m(phi-bar) + w, w ~ CN(0, sigma_w^2 I).
#[derive(Debug, Clone, Copy)]
pub struct DeltaJMoments {
    pub mu_delta: f64,
    pub sigma2_delta: f64,
}

/// O(N) evaluation from the tridiagonal structure: tr(Q) = 0 so
/// mu = m^H Q m, tr(Q^2) = 2 (N-1) |c|^2, and m^H Q^2 m = ||Q m||^2.
pub fn delta_j_moments(scenario: &EspritScenario, epsilon: f64) -> DeltaJMoments {
    let c = q_coefficient(scenario.phi_bar, epsilon);
    let m = scenario.mean();
    let n = scenario.n;
    let qm: Vec<Complex64> = (0..n)
        .map(|k| {
            let mut v = Complex64::new(0.0, 0.0);
            if k + 1 < n {
                v += c.conj() * m[k + 1];
            }
            if k > 0 {
                v += c * m[k - 1];
            }
            v
        })
        .collect();
    let mu_delta: f64 = m
        .iter()
        .zip(&qm)
        .map(|(mi, qi)| (mi.conj() * qi).re)
        .sum();
    let s2 = scenario.sigma_w2;
    let tr_q2 = 2.0 * (n as f64 - 1.0) * c.norm_sqr();
    let qm_norm2: f64 = qm.iter().map(|z| z.norm_sqr()).sum();
    DeltaJMoments {
        mu_delta,
        sigma2_delta: s2 * s2 * tr_q2 + 2.0 * s2 * qm_norm2,
    }
}

/// Gaussian-fit predicted MSE of the ESPRIT azimuth estimate:
/// 2 int |eps| P(Delta J <= 0) d eps with P from the normal cdf at 0
/// (minimization flips the inequality of the generic exceedance form).
pub fn mse_hat_esprit(scenario: &EspritScenario, tols: QuadTols) -> Result<PredictionResult> {
    let phi = scenario.phi_bar;
    let (lo, hi) = (-phi / 2.0, (PI - phi) / 2.0);
    let p = |e: f64| {
        let m = delta_j_moments(scenario, e);
        if m.sigma2_delta <= 0.0 {
            // Q vanishes: the two hypotheses have identical cost.
            return 1.0;
        }
        normal_cdf(0.0, m.mu_delta, m.sigma2_delta).expect("variance is positive")
    };
    let quad = error_integral(p, lo, hi, tols)?;
    Ok(PredictionResult {
        mse: quad.value,
        quad,
        method: "esprit".to_string(),
        mc_stderr: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{sample_complex_gaussian_with, RngState};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn noiseless(omega: f64, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::new(0.0, omega * k as f64).exp())
            .collect()
    }

    fn noisy(scenario: &EspritScenario, rng: &mut rand_chacha::ChaCha12Rng) -> Vec<Complex64> {
        let noise = sample_complex_gaussian_with(rng, scenario.n, scenario.sigma_w2).unwrap();
        scenario
            .mean()
            .iter()
            .zip(&noise)
            .map(|(m, w)| m + w)
            .collect()
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        for &omega in &[-2.5, -0.7, 0.0, 1.3, 3.0] {
            let x = noiseless(omega, 12);
            let (omega_hat, _) = esprit_estimate(&x).unwrap();
            assert_abs_diff_eq!(omega_hat, omega, epsilon = 1e-12);
        }
        // Broadside: omega = 0, phi = pi/2.
        let x = noiseless(0.0, 8);
        let (omega_hat, phi_hat) = esprit_estimate(&x).unwrap();
        assert_abs_diff_eq!(omega_hat, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(phi_hat, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_rejects_zero_sum() {
        let x = vec![Complex64::new(0.0, 0.0); 5];
        assert!(matches!(
            esprit_estimate(&x),
            Err(Error::UndefinedEstimate(_))
        ));
    }

    #[test]
    fn arccos_clamps_out_of_range_frequency() {
        // omega close to pi maps to endfire, not NaN.
        let x = noiseless(3.14, 6);
        let (_, phi_hat) = esprit_estimate(&x).unwrap();
        assert!(phi_hat.is_finite() && (0.0..=PI).contains(&phi_hat));
    }

    #[test]
    fn estimate_matches_grid_argmin() {
        let scenario =
            EspritScenario::new(10, Complex64::new(1.0, 0.0), 1.0, 0.5).unwrap();
        let mut rng = RngState::new(21).rng();
        let grid: Vec<f64> = (0..10_000)
            .map(|i| -PI + 2.0 * PI * i as f64 / 10_000.0)
            .collect();
        let cell = 2.0 * PI / 10_000.0;
        for _ in 0..100 {
            let x = noisy(&scenario, &mut rng);
            let (omega_hat, _) = esprit_estimate(&x).unwrap();
            let best = grid
                .iter()
                .copied()
                .min_by(|a, b| esprit_cost(&x, *a).total_cmp(&esprit_cost(&x, *b)))
                .unwrap();
            // Wrapped distance between the closed form and the grid argmin.
            let mut d = (omega_hat - best).abs();
            if d > PI {
                d = 2.0 * PI - d;
            }
            assert!(d <= cell, "closed form {omega_hat} vs grid {best}");
        }
    }

    #[test]
    fn q_matrix_structure() {
        let mut rng = RngState::new(3).rng();
        for _ in 0..20 {
            let phi: f64 = rng.gen_range(0.2..2.9);
            let eps: f64 = rng.gen_range(-0.1..0.1_f64).min((PI - phi) / 2.0).max(-phi / 2.0);
            let n = 7;
            let q = build_q_matrix(phi, eps, n);
            // Hermitian with zero diagonal and bandwidth one.
            for i in 0..n {
                for j in 0..n {
                    assert_abs_diff_eq!(
                        (q[(i, j)] - q[(j, i)].conj()).norm(),
                        0.0,
                        epsilon = 1e-15
                    );
                    if i == j || i.abs_diff(j) > 1 {
                        assert_eq!(q[(i, j)], Complex64::new(0.0, 0.0));
                    }
                }
            }
            // x^H Q x is real for random complex x.
            let x = sample_complex_gaussian_with(&mut rng, n, 1.0).unwrap();
            let qx: Vec<Complex64> = (0..n)
                .map(|i| (0..n).map(|j| q[(i, j)] * x[j]).sum())
                .collect();
            let form: Complex64 = x.iter().zip(&qx).map(|(a, b)| a.conj() * b).sum();
            assert!(form.im.abs() < 1e-12 * (1.0 + form.re.abs()));
        }
        let q0 = build_q_matrix(1.1, 0.0, 5);
        assert!(q0.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn delta_j_two_routes_agree() {
        // J(omega(phi + 2 eps)) - J(omega(phi)) == x^H Q x.
        let mut rng = RngState::new(7).rng();
        let scenario =
            EspritScenario::new(9, Complex64::new(0.8, 0.3), 0.9, 0.7).unwrap();
        for _ in 0..50 {
            let eps: f64 = rng.gen_range(-0.4..0.4);
            let x = noisy(&scenario, &mut rng);
            let w0 = PI * scenario.phi_bar.cos();
            let w1 = PI * (scenario.phi_bar + 2.0 * eps).cos();
            let via_cost = esprit_cost(&x, w1) - esprit_cost(&x, w0);
            let q = build_q_matrix(scenario.phi_bar, eps, scenario.n);
            let qx: Vec<Complex64> = (0..scenario.n)
                .map(|i| (0..scenario.n).map(|j| q[(i, j)] * x[j]).sum())
                .collect();
            let via_q: Complex64 = x.iter().zip(&qx).map(|(a, b)| a.conj() * b).sum();
            let scale = via_cost.abs().max(1.0);
            assert!(
                (via_cost - via_q.re).abs() <= 1e-10 * scale,
                "{via_cost} vs {}",
                via_q.re
            );
        }
    }

    #[test]
    fn moments_match_monte_carlo_oracle() {
        let scenario =
            EspritScenario::new(15, Complex64::new(1.0, 0.0), 35.0 * PI / 180.0, 1.0).unwrap();
        let eps = 0.1;
        let moments = delta_j_moments(&scenario, eps);
        let mut rng = RngState::new(100).rng();
        let runs = 1_000_000usize;
        let w0 = PI * scenario.phi_bar.cos();
        let w1 = PI * (scenario.phi_bar + 2.0 * eps).cos();
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..runs {
            let x = noisy(&scenario, &mut rng);
            let dj = esprit_cost(&x, w1) - esprit_cost(&x, w0);
            sum += dj;
            sum2 += dj * dj;
        }
        let mean = sum / runs as f64;
        let var = sum2 / runs as f64 - mean * mean;
        let mean_stderr = (var / runs as f64).sqrt();
        // Gaussian-approximation stderr of the sample variance.
        let var_stderr = var * (2.0 / (runs as f64 - 1.0)).sqrt();
        assert!(
            (moments.mu_delta - mean).abs() <= 3.0 * mean_stderr,
            "mu {} vs sample {mean} (stderr {mean_stderr})",
            moments.mu_delta
        );
        assert!(
            (moments.sigma2_delta - var).abs() <= 4.0 * var_stderr,
            "sigma2 {} vs sample {var} (stderr {var_stderr})",
            moments.sigma2_delta
        );
    }

    #[test]
    fn moments_across_epsilon_grid() {
        // Smaller-sample oracle across 20 epsilon values.
        let scenario =
            EspritScenario::new(8, Complex64::new(1.0, 0.0), 1.2, 2.0).unwrap();
        let mut rng = RngState::new(42).rng();
        let runs = 20_000usize;
        for i in 0..20 {
            let eps = -0.55 + 0.05 * i as f64 + 0.025;
            let moments = delta_j_moments(&scenario, eps);
            let w0 = PI * scenario.phi_bar.cos();
            let w1 = PI * (scenario.phi_bar + 2.0 * eps).cos();
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..runs {
                let x = noisy(&scenario, &mut rng);
                let dj = esprit_cost(&x, w1) - esprit_cost(&x, w0);
                sum += dj;
                sum2 += dj * dj;
            }
            let mean = sum / runs as f64;
            let var = sum2 / runs as f64 - mean * mean;
            let mean_stderr = (var / runs as f64).sqrt().max(1e-12);
            assert!(
                (moments.mu_delta - mean).abs() <= 4.0 * mean_stderr,
                "eps {eps}: mu {} vs {mean}",
                moments.mu_delta
            );
            let var_stderr = (var * (2.0 / (runs as f64 - 1.0)).sqrt()).max(1e-12);
            assert!(
                (moments.sigma2_delta - var).abs() <= 5.0 * var_stderr,
                "eps {eps}: var {} vs {var}",
                moments.sigma2_delta
            );
        }
    }

    #[test]
    fn mean_cost_rises_near_truth() {
        let scenario =
            EspritScenario::new(15, Complex64::new(1.0, 0.0), 35.0 * PI / 180.0, 1.0).unwrap();
        for &eps in &[-0.05, -0.01, 0.01, 0.05] {
            let m = delta_j_moments(&scenario, eps);
            assert!(m.mu_delta > 0.0, "eps {eps}: mu {}", m.mu_delta);
        }
        let m0 = delta_j_moments(&scenario, 0.0);
        assert_eq!(m0.mu_delta, 0.0);
        assert_eq!(m0.sigma2_delta, 0.0);
    }

    #[test]
    fn prediction_vanishes_with_noise() {
        let mut last = f64::INFINITY;
        for sigma_w2 in [1.0, 0.1, 0.01] {
            let scenario =
                EspritScenario::new(15, Complex64::new(1.0, 0.0), 35.0 * PI / 180.0, sigma_w2)
                    .unwrap();
            let r = mse_hat_esprit(&scenario, QuadTols::default()).unwrap();
            assert!(r.mse < last);
            last = r.mse;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn prediction_tracks_monte_carlo_at_20db() {
        let scenario =
            EspritScenario::new(15, Complex64::new(1.0, 0.0), 35.0 * PI / 180.0, 0.01).unwrap();
        let pred = mse_hat_esprit(&scenario, QuadTols::default()).unwrap();
        let mut rng = RngState::new(77).rng();
        let runs = 10_000usize;
        let mut mse = 0.0;
        for _ in 0..runs {
            let x = noisy(&scenario, &mut rng);
            let (_, phi_hat) = esprit_estimate(&x).unwrap();
            let e = phi_hat - scenario.phi_bar;
            mse += e * e;
        }
        mse /= runs as f64;
        assert!(
            pred.mse <= 2.0 * mse && pred.mse >= mse / 2.0,
            "prediction {} vs Monte Carlo {mse}",
            pred.mse
        );
    }
}
