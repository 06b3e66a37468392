//! Scalar and vector numerical primitives: Gaussian ccdf, adaptive
//! Gauss-Kronrod quadrature, circularly symmetric complex Gaussian sampling,
//! and a Monte Carlo orthant-probability estimator for multivariate normals.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Value of a numerical integral together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub n_evals: usize,
}

/// Seed plus algorithm tag; identical state yields an identical sample stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub algorithm: String,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState {
            seed,
            algorithm: "chacha12".to_string(),
        }
    }

    /// Derive an independent child state for a parallel stream.
    pub fn child(&self, stream_index: u64) -> Self {
        RngState {
            seed: splitmix64(self.seed ^ splitmix64(stream_index.wrapping_add(1))),
            algorithm: self.algorithm.clone(),
        }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// P(Z >= x) for Z ~ Normal(mean, variance).
///
/// Evaluated through erfc so that the far tail does not cancel
/// catastrophically the way `1 - cdf(x)` would.
pub fn normal_ccdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "normal_ccdf requires positive variance, got {variance}"
        )));
    }
    let z = (x - mean) / (2.0 * variance).sqrt();
    Ok(0.5 * erfc(z))
}

/// P(Z <= x) for Z ~ Normal(mean, variance).
pub fn normal_cdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    normal_ccdf(mean - (x - mean), mean, variance)
}

// G7-K15 nodes and weights, positive half (node 0 first).
const GK_NODES: [f64; 8] = [
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
];
// Gauss weights for nodes at even indices (0, 2, 4, 6).
const GK_WEIGHTS_G: [f64; 4] = [
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
];

/// Single G7-K15 application on [a, b]: (kronrod value, error estimate).
///
/// The error estimate follows QUADPACK's qk15: the raw |K - G| difference is
/// rescaled against `resasc`, the integral of |f - mean|, so that
/// discontinuities and unresolved spikes keep a large error estimate instead
/// of accidentally cancelling in K - G.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f0 = f(center);
    let mut lower = [0.0f64; 8];
    let mut upper = [0.0f64; 8];
    lower[0] = f0;
    upper[0] = f0;
    let mut kronrod = GK_WEIGHTS_K[0] * f0;
    let mut gauss = GK_WEIGHTS_G[0] * f0;
    for i in 1..8 {
        let dx = half * GK_NODES[i];
        lower[i] = f(center - dx);
        upper[i] = f(center + dx);
        let fsum = lower[i] + upper[i];
        kronrod += GK_WEIGHTS_K[i] * fsum;
        if i % 2 == 0 {
            gauss += GK_WEIGHTS_G[i / 2] * fsum;
        }
    }
    // Weighted mean of f over the panel (Kronrod weights sum to 2).
    let mean = 0.5 * kronrod;
    let mut resasc = GK_WEIGHTS_K[0] * (f0 - mean).abs();
    for i in 1..8 {
        resasc += GK_WEIGHTS_K[i] * ((lower[i] - mean).abs() + (upper[i] - mean).abs());
    }
    resasc *= half;
    kronrod *= half;
    gauss *= half;
    let mut err = (kronrod - gauss).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    (kronrod, err)
}

pub const DEFAULT_MAX_EVALS: usize = 400_000;

/// Adaptive quadrature of `f` on [a, b] by repeated bisection of the segment
/// with the largest embedded error estimate.
pub fn adaptive_quad<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult> {
    adaptive_quad_budget(f, a, b, abs_tol, rel_tol, DEFAULT_MAX_EVALS)
}

pub fn adaptive_quad_budget<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_evals: usize,
) -> Result<QuadResult> {
    // Start from a modest uniform partition so isolated features narrower
    // than the full interval still register in the initial error estimates.
    let n0 = 8;
    let pts: Vec<f64> = (0..=n0)
        .map(|i| a + (b - a) * i as f64 / n0 as f64)
        .collect();
    adaptive_quad_breakpoints(f, &pts, abs_tol, rel_tol, max_evals)
}

/// Adaptive quadrature with a caller-supplied initial partition, for
/// integrands whose sharp features would otherwise be invisible to the first
/// panel's error estimate. `points` must be strictly increasing.
pub fn adaptive_quad_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_evals: usize,
) -> Result<QuadResult> {
    if points.len() < 2 || points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain(
            "adaptive_quad requires strictly increasing breakpoints".to_string(),
        ));
    }
    if !(abs_tol > 0.0) || !(rel_tol > 0.0) {
        return Err(Error::Domain(
            "adaptive_quad tolerances must be positive".to_string(),
        ));
    }

    struct Segment {
        a: f64,
        b: f64,
        value: f64,
        err: f64,
    }

    let mut segments: Vec<Segment> = points
        .windows(2)
        .map(|w| {
            let (value, err) = gk15(&f, w[0], w[1]);
            Segment {
                a: w[0],
                b: w[1],
                value,
                err,
            }
        })
        .collect();
    let mut n_evals = 15 * segments.len();

    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let total_err: f64 = segments.iter().map(|s| s.err).sum();
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                abs_error_estimate: total_err,
                n_evals,
            });
        }
        if n_evals + 30 > max_evals {
            return Err(Error::Convergence {
                best_value: total,
                error_estimate: total_err,
                n_evals,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .expect("segment list is nonempty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval at floating point resolution; accept its estimate as is.
            segments.push(Segment { err: 0.0, ..seg });
            continue;
        }
        let (vl, el) = gk15(&f, seg.a, mid);
        let (vr, er) = gk15(&f, mid, seg.b);
        n_evals += 30;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: vl,
            err: el,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: vr,
            err: er,
        });
    }
}

/// Draw n i.i.d. circularly symmetric complex Gaussian samples with
/// E[|v_k|^2] = variance.
pub fn sample_complex_gaussian(
    rng_state: &RngState,
    n: usize,
    variance: f64,
) -> Result<Vec<Complex64>> {
    let mut rng = rng_state.rng();
    sample_complex_gaussian_with(&mut rng, n, variance)
}

/// Same as [`sample_complex_gaussian`] but advancing a caller-held generator.
pub fn sample_complex_gaussian_with(
    rng: &mut ChaCha12Rng,
    n: usize,
    variance: f64,
) -> Result<Vec<Complex64>> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "complex Gaussian variance must be positive, got {variance}"
        )));
    }
    let scale = (variance / 2.0).sqrt();
    Ok((0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(scale * re, scale * im)
        })
        .collect())
}

/// Monte Carlo probability estimate with its binomial standard error.
#[derive(Debug, Clone, Copy)]
pub struct OrthantEstimate {
    pub p: f64,
    pub stderr: f64,
}

/// Standard normal draws shared across repeated orthant evaluations, so a
/// family of probabilities (e.g. over an integration variable) is a smooth
/// function of the covariance inputs.
pub struct OrthantSampler {
    normals: Vec<f64>,
    n_samples: usize,
    dim: usize,
}

impl OrthantSampler {
    pub fn new(rng_state: &RngState, n_samples: usize, dim: usize) -> Self {
        let mut rng = rng_state.rng();
        let normals = (0..n_samples * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        OrthantSampler {
            normals,
            n_samples,
            dim,
        }
    }

    /// P(Z <= mu elementwise) for Z ~ Normal(0, cov), estimated over the
    /// stored draws. Eigenvalues of `cov` are clamped at zero; a significantly
    /// negative eigenvalue is rejected as non-PSD.
    pub fn lower_orthant(&self, mu: &[f64], cov: &DMatrix<f64>) -> Result<OrthantEstimate> {
        let k = mu.len();
        assert!(k >= 1 && k <= self.dim, "dimension exceeds sampler size");
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::Domain(format!(
                "covariance must be {k}x{k}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (cov - cov.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(Error::Domain(format!(
                "covariance not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let sym = (cov + cov.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let mut lam = eig.eigenvalues.clone();
        for v in lam.iter_mut() {
            if *v < -1e-8 * max_eig.max(1.0) {
                return Err(Error::NotPsd { min_eig: *v });
            }
            *v = v.max(0.0).sqrt();
        }
        // Factor L = V diag(sqrt(lambda)); Z = L u with u standard normal.
        let mut l = eig.eigenvectors;
        for (j, s) in lam.iter().enumerate() {
            for i in 0..k {
                l[(i, j)] *= s;
            }
        }
        let mut hits = 0usize;
        for s in 0..self.n_samples {
            let u = &self.normals[s * self.dim..s * self.dim + k];
            let mut inside = true;
            for i in 0..k {
                let mut z = 0.0;
                for j in 0..k {
                    z += l[(i, j)] * u[j];
                }
                if z > mu[i] {
                    inside = false;
                    break;
                }
            }
            if inside {
                hits += 1;
            }
        }
        let p = hits as f64 / self.n_samples as f64;
        let stderr = (p * (1.0 - p) / self.n_samples as f64).sqrt();
        Ok(OrthantEstimate { p, stderr })
    }
}

/// One-shot orthant probability P(Z <= mu elementwise), Z ~ Normal(0, cov).
pub fn mvn_lower_orthant_mc(
    mu: &[f64],
    cov: &DMatrix<f64>,
    n_samples: usize,
    rng_state: &RngState,
) -> Result<OrthantEstimate> {
    let sampler = OrthantSampler::new(rng_state, n_samples, mu.len());
    sampler.lower_orthant(mu, cov)
}
