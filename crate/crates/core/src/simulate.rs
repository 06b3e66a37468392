//! Grid-search estimators (ML, MML, MAP), the search grids they run on, and
//! the seeded Monte Carlo harness that produces empirical MSE curves for
//! comparison against the predictions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::models::ManifoldModel;
use crate::numeric::{sample_complex_gaussian_with, RngState};
use crate::predictor::BetaPrior;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridTag {
    Uniform,
    Sphere,
    OmegaMapped,
}

/// Explicit list of candidate parameter vectors for grid-search estimation.
#[derive(Debug, Clone)]
pub struct SearchGrid {
    pub points: Vec<Vec<f64>>,
    pub tag: GridTag,
}

impl SearchGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn param_dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Scalar values of a one-dimensional grid.
    pub fn scalars(&self) -> Vec<f64> {
        assert_eq!(self.param_dim(), 1);
        self.points.iter().map(|p| p[0]).collect()
    }
}

/// `n` equally spaced points on [a, b], endpoints included.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> SearchGrid {
    assert!(a < b);
    assert!(n >= 2);
    let step = (b - a) / (n - 1) as f64;
    let points = (0..n).map(|k| vec![a + step * k as f64]).collect();
    SearchGrid {
        points,
        tag: GridTag::Uniform,
    }
}

/// Approximately uniform (azimuth, elevation) pairs on the unit sphere:
/// elevation rings equally spaced on [0, pi], each carrying
/// ceil(density * sin(theta)) azimuth points uniform on [-pi, pi).
pub fn sphere_grid(n_elevation: usize, density: f64) -> SearchGrid {
    assert!(n_elevation >= 2);
    assert!(density > 0.0);
    let mut points = Vec::new();
    for k in 0..n_elevation {
        let theta = PI * k as f64 / (n_elevation - 1) as f64;
        let count = (density * theta.sin()).ceil() as usize;
        for j in 0..count {
            let phi = -PI + 2.0 * PI * j as f64 / count as f64;
            points.push(vec![phi, theta]);
        }
    }
    SearchGrid {
        points,
        tag: GridTag::Sphere,
    }
}

/// Azimuth grid for the ULA problem: `n` uniform points in omega =
/// pi cos(phi) over [-pi, pi], mapped back through arccos(omega / pi).
pub fn omega_grid(n: usize) -> SearchGrid {
    assert!(n >= 2);
    let step = 2.0 * PI / (n - 1) as f64;
    let points = (0..n)
        .map(|k| {
            let omega = -PI + step * k as f64;
            vec![(omega / PI).clamp(-1.0, 1.0).acos()]
        })
        .collect();
    SearchGrid {
        points,
        tag: GridTag::OmegaMapped,
    }
}

/// Which grid-search objective to maximize; the two are equivalent (up to a
/// constant) whenever ||m(theta)|| is constant over the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlObjective {
    /// Re{ x^H m(theta) }
    InnerProduct,
    /// -||x - m(theta)||^2
    Residual,
}

/// Grid means precomputed once so repeated Monte Carlo draws only pay for
/// the inner products.
pub struct GridSearch {
    grid: SearchGrid,
    means: Vec<Vec<Complex64>>,
    norms2: Vec<f64>,
    constant_norm: bool,
}

impl GridSearch {
    pub fn new(model: &ManifoldModel, grid: SearchGrid) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Domain("search grid is empty".to_string()));
        }
        assert_eq!(grid.param_dim(), model.param_dim());
        let means: Vec<Vec<Complex64>> = grid
            .points
            .iter()
            .map(|p| model.mean(p))
            .collect::<Result<_>>()?;
        let norms2: Vec<f64> = means
            .iter()
            .map(|m| m.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let constant_norm = norms2
            .iter()
            .all(|n| (n - norms2[0]).abs() <= 1e-9 * norms2[0].max(1.0));
        Ok(GridSearch {
            grid,
            means,
            norms2,
            constant_norm,
        })
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    fn argmax(&self, score: impl Fn(usize) -> f64) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.grid.len() {
            let s = score(i);
            // Strict inequality breaks ties toward the lowest grid index.
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        best
    }

    fn inner_re(&self, i: usize, x: &[Complex64]) -> f64 {
        x.iter()
            .zip(&self.means[i])
            .map(|(a, b)| (a.conj() * b).re)
            .sum()
    }

    pub fn ml_estimate_with(&self, x: &[Complex64], objective: MlObjective) -> Vec<f64> {
        let best = match objective {
            MlObjective::InnerProduct => self.argmax(|i| self.inner_re(i, x)),
            MlObjective::Residual => self.argmax(|i| 2.0 * self.inner_re(i, x) - self.norms2[i]),
        };
        self.grid.points[best].clone()
    }

    /// Grid ML estimate; constant-norm manifolds use the inner-product form,
    /// everything else the full residual form.
    pub fn ml_estimate(&self, x: &[Complex64]) -> Vec<f64> {
        let objective = if self.constant_norm {
            MlObjective::InnerProduct
        } else {
            MlObjective::Residual
        };
        self.ml_estimate_with(x, objective)
    }

    /// Grid MAP estimate on a scalar model: argmax of
    /// -||x - m(phi)||^2 / sigma_w^2 + ln f(phi), zero-prior points excluded.
    pub fn map_estimate(&self, prior: &BetaPrior, x: &[Complex64], sigma_w2: f64) -> Result<f64> {
        assert_eq!(self.grid.param_dim(), 1);
        assert!(sigma_w2 > 0.0);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.grid.len() {
            let lf = prior.ln_density(self.grid.points[i][0]);
            if lf == f64::NEG_INFINITY {
                continue;
            }
            let s = (2.0 * self.inner_re(i, x) - self.norms2[i]) / sigma_w2 + lf;
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((i, s));
            }
        }
        match best {
            Some((i, _)) => Ok(self.grid.points[i][0]),
            None => Err(Error::UndefinedEstimate(
                "every grid point has zero prior density".to_string(),
            )),
        }
    }
}

/// One-off grid ML estimate; precompute a [`GridSearch`] instead when the
/// same grid serves many draws.
pub fn ml_grid_estimate(
    model: &ManifoldModel,
    x: &[Complex64],
    grid: &SearchGrid,
) -> Result<Vec<f64>> {
    Ok(GridSearch::new(model, grid.clone())?.ml_estimate(x))
}

/// One-off grid MAP estimate.
pub fn map_grid_estimate(
    model: &ManifoldModel,
    prior: &BetaPrior,
    x: &[Complex64],
    grid: &SearchGrid,
    sigma_w2: f64,
) -> Result<f64> {
    GridSearch::new(model, grid.clone())?.map_estimate(prior, x, sigma_w2)
}

/// Noiseless observation plus the scalar truth an estimator is judged
/// against; decoupled from the model so quadratic-cost estimators such as
/// ESPRIT plug into the same harness.
#[derive(Debug, Clone)]
pub struct McScenario {
    pub mean: Vec<Complex64>,
    pub truth: f64,
    pub sigma_w2: f64,
}

impl McScenario {
    pub fn from_model(
        model: &ManifoldModel,
        theta_true: &[f64],
        component: usize,
        sigma_w2: f64,
    ) -> Result<Self> {
        if !(sigma_w2 > 0.0) {
            return Err(Error::Domain(format!(
                "noise variance must be positive, got {sigma_w2}"
            )));
        }
        Ok(McScenario {
            mean: model.mean(theta_true)?,
            truth: theta_true[component],
            sigma_w2,
        })
    }
}

/// Empirical MSE with its Monte Carlo pedigree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub mse: f64,
    pub stderr: f64,
    pub bias: f64,
    pub n_runs: usize,
    pub n_failed: usize,
    pub seed: u64,
}

fn run_one(
    scenario: &McScenario,
    estimator: &(impl Fn(&[Complex64]) -> Result<f64> + Sync),
    root: &RngState,
    run_index: u64,
) -> Option<f64> {
    let mut rng = root.child(run_index).rng();
    let w = sample_complex_gaussian_with(&mut rng, scenario.mean.len(), scenario.sigma_w2).ok()?;
    let x: Vec<Complex64> = scenario.mean.iter().zip(&w).map(|(m, n)| m + n).collect();
    estimator(&x).ok().map(|est| est - scenario.truth)
}

fn reduce(errors: Vec<Option<f64>>, seed: u64) -> Result<McResult> {
    let total = errors.len();
    let ok: Vec<f64> = errors.iter().filter_map(|e| *e).collect();
    let failed = total - ok.len();
    if failed * 100 > total {
        return Err(Error::TooManyFailures { failed, total });
    }
    let n = ok.len() as f64;
    let sq: Vec<f64> = ok.iter().map(|e| e * e).collect();
    let mse = sq.iter().sum::<f64>() / n;
    let bias = ok.iter().sum::<f64>() / n;
    let var_sq = sq.iter().map(|s| (s - mse) * (s - mse)).sum::<f64>() / (n - 1.0);
    Ok(McResult {
        mse,
        stderr: (var_sq / n).sqrt(),
        bias,
        n_runs: ok.len(),
        n_failed: failed,
        seed,
    })
}

/// Sequential Monte Carlo harness: per-run noise streams derived from the
/// run index, so the result is identical to the parallel version.
pub fn run_monte_carlo_seq(
    scenario: &McScenario,
    estimator: impl Fn(&[Complex64]) -> Result<f64> + Sync,
    n_runs: usize,
    seed: u64,
) -> Result<McResult> {
    assert!(n_runs >= 2);
    let root = RngState::new(seed);
    let errors: Vec<Option<f64>> = (0..n_runs as u64)
        .map(|i| run_one(scenario, &estimator, &root, i))
        .collect();
    reduce(errors, seed)
}

/// Monte Carlo harness; data-parallel over runs when the `parallel` feature
/// is enabled. Results are bit-identical across thread counts because every
/// run seeds its own generator and the reduction walks runs in index order.
#[cfg(feature = "parallel")]
pub fn run_monte_carlo(
    scenario: &McScenario,
    estimator: impl Fn(&[Complex64]) -> Result<f64> + Sync,
    n_runs: usize,
    seed: u64,
) -> Result<McResult> {
    assert!(n_runs >= 2);
    let root = RngState::new(seed);
    let errors: Vec<Option<f64>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| run_one(scenario, &estimator, &root, i))
        .collect();
    reduce(errors, seed)
}

#[cfg(not(feature = "parallel"))]
pub fn run_monte_carlo(
    scenario: &McScenario,
    estimator: impl Fn(&[Complex64]) -> Result<f64> + Sync,
    n_runs: usize,
    seed: u64,
) -> Result<McResult> {
    run_monte_carlo_seq(scenario, estimator, n_runs, seed)
}

fn run_one_bayesian(
    model: &ManifoldModel,
    prior: &BetaPrior,
    sigma_w2: f64,
    estimator: &(impl Fn(&[Complex64]) -> Result<f64> + Sync),
    root: &RngState,
    run_index: u64,
) -> Option<f64> {
    let mut rng = root.child(run_index).rng();
    let phi = if prior.is_flat() {
        rng.gen::<f64>() * PI
    } else {
        let beta = rand_distr::Beta::new(prior.a, prior.a).ok()?;
        rand::Rng::sample(&mut rng, beta) * PI
    };
    let w = sample_complex_gaussian_with(&mut rng, model.n_sensors(), sigma_w2).ok()?;
    let m = model.mean_unchecked(&[phi]);
    let x: Vec<Complex64> = m.iter().zip(&w).map(|(a, b)| a + b).collect();
    estimator(&x).ok().map(|est| est - phi)
}

/// Bayesian Monte Carlo: each run draws the scalar truth from the prior,
/// then the noise; squared error is measured against the per-run truth.
/// Bit-identical across thread counts for the same seed.
pub fn run_monte_carlo_bayesian(
    model: &ManifoldModel,
    prior: &BetaPrior,
    sigma_w2: f64,
    estimator: impl Fn(&[Complex64]) -> Result<f64> + Sync,
    n_runs: usize,
    seed: u64,
) -> Result<McResult> {
    assert!(n_runs >= 2);
    assert_eq!(model.param_dim(), 1);
    let root = RngState::new(seed);
    #[cfg(feature = "parallel")]
    let errors: Vec<Option<f64>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| run_one_bayesian(model, prior, sigma_w2, &estimator, &root, i))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let errors: Vec<Option<f64>> = (0..n_runs as u64)
        .map(|i| run_one_bayesian(model, prior, sigma_w2, &estimator, &root, i))
        .collect();
    reduce(errors, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        far_field_manifold, identity_manifold, near_field_manifold, ula_manifold,
        uniform_circular_array, NoiseKind,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_endpoints_and_spacing() {
        let g = uniform_grid(0.0, 1.0, 2);
        assert_eq!(g.scalars(), vec![0.0, 1.0]);
        let g = uniform_grid(-PI, PI, 3600);
        assert_eq!(g.len(), 3600);
        let s = g.scalars();
        assert_abs_diff_eq!(s[1] - s[0], 2.0 * PI / 3599.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[0], -PI, epsilon = 0.0);
        assert_abs_diff_eq!(s[3599], PI, epsilon = 1e-15);
    }

    #[test]
    fn sphere_grid_ring_counts() {
        // Three rings: theta in {0, pi/2, pi}; only the equator carries
        // points, ceil(100 * 1) = 100 of them.
        // (sin(pi) rounds to 1.2e-16, whose ceiling still yields one point.)
        let g = sphere_grid(3, 100.0);
        let equator: Vec<_> = g.points.iter().filter(|p| p[1] == PI / 2.0).collect();
        assert_eq!(equator.len(), 100);
        assert_eq!(g.len(), 101);
        // Azimuths uniform on [-pi, pi).
        assert_abs_diff_eq!(g.points[0][0], -PI, epsilon = 0.0);
        assert!(g.points.iter().all(|p| p[0] >= -PI && p[0] < PI));
        // Near-degenerate rings still get ceil(small) = 1 point.
        let fine = sphere_grid(2000, 100.0);
        assert!(fine.points.iter().any(|p| p[1] < 0.01));
    }

    #[test]
    fn sphere_grid_default_total() {
        // Frozen count for the ceil(100 sin(theta)) rule over 200 inclusive
        // elevation rings.
        let g = sphere_grid(200, 100.0);
        assert_eq!(g.len(), 12773);
        assert!(g
            .points
            .iter()
            .all(|p| (-PI..PI).contains(&p[0]) && (0.0..=PI).contains(&p[1])));
    }

    #[test]
    fn omega_grid_mapping() {
        let g = omega_grid(3);
        let s = g.scalars();
        assert_abs_diff_eq!(s[0], PI, epsilon = 1e-12); // omega = -pi
        assert_abs_diff_eq!(s[1], PI / 2.0, epsilon = 1e-12); // omega = 0
        assert_abs_diff_eq!(s[2], 0.0, epsilon = 1e-12); // omega = pi
        let g = omega_grid(8192);
        assert_eq!(g.len(), 8192);
        let s = g.scalars();
        assert!(s.iter().all(|p| (0.0..=PI).contains(p)));
        // Uniform omega spacing means phi spacing shrinks monotonically from
        // endfire toward broadside (and back out by symmetry).
        let gaps: Vec<f64> = s.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let mid = gaps.len() / 2;
        for i in 1..=mid {
            assert!(gaps[i] <= gaps[i - 1] + 1e-15, "gap grew at {i}");
        }
        for i in mid + 1..gaps.len() {
            assert!(gaps[i] >= gaps[i - 1] - 1e-15, "gap shrank at {i}");
        }
    }

    #[test]
    fn noiseless_ml_recovers_grid_truth() {
        let model = ula_manifold(15, Complex64::new(1.0, 0.0));
        let grid = uniform_grid(0.01, PI - 0.01, 720);
        let search = GridSearch::new(&model, grid.clone()).unwrap();
        let truth = search.grid().points[300].clone();
        let x = model.mean(&truth).unwrap();
        assert_eq!(search.ml_estimate(&x), truth);
        assert_eq!(ml_grid_estimate(&model, &x, &grid).unwrap(), truth);
    }

    #[test]
    fn objective_forms_agree_on_unit_modulus_manifold() {
        let model = ula_manifold(8, Complex64::new(1.0, 0.0));
        let search = GridSearch::new(&model, uniform_grid(0.01, PI - 0.01, 512)).unwrap();
        assert!(search.constant_norm);
        let mut rng = RngState::new(31).rng();
        for _ in 0..100 {
            let x = sample_complex_gaussian_with(&mut rng, 8, 4.0).unwrap();
            let a = search.ml_estimate_with(&x, MlObjective::InnerProduct);
            let b = search.ml_estimate_with(&x, MlObjective::Residual);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mismatched_estimator_still_returns_a_grid_point() {
        // Assumed far-field model searching data from a near-field source.
        let geometry = uniform_circular_array(8, 1.0);
        let assumed = crate::models::fix_all_but(
            &far_field_manifold(&geometry, 1.0),
            0,
            &[0.0, PI / 2.0],
        );
        let true_model = near_field_manifold(&geometry, 3.0).unwrap();
        let search = GridSearch::new(&assumed, uniform_grid(-PI, PI, 3600)).unwrap();
        let x = true_model.mean(&[0.4]).unwrap();
        let est = search.ml_estimate(&x);
        assert!(search.grid().points.contains(&est));
    }

    #[test]
    fn map_reduces_to_ml_under_flat_prior() {
        let model = ula_manifold(15, Complex64::new(1.0, 0.0));
        let search = GridSearch::new(&model, omega_grid(1024)).unwrap();
        let prior = BetaPrior::uniform();
        let mut rng = RngState::new(77).rng();
        for _ in 0..50 {
            let w = sample_complex_gaussian_with(&mut rng, 15, 1.0).unwrap();
            let m = model.mean(&[1.1]).unwrap();
            let x: Vec<Complex64> = m.iter().zip(&w).map(|(a, b)| a + b).collect();
            let map = search.map_estimate(&prior, &x, 1.0).unwrap();
            let ml = search.ml_estimate(&x)[0];
            assert_eq!(map, ml);
        }
    }

    #[test]
    fn map_falls_back_to_prior_mode_in_heavy_noise() {
        let model = ula_manifold(15, Complex64::new(1.0, 0.0));
        let search = GridSearch::new(&model, uniform_grid(0.0, PI, 999)).unwrap();
        let prior = BetaPrior::new(10.0).unwrap();
        let x = vec![Complex64::new(0.0, 0.0); 15];
        let est = search.map_estimate(&prior, &x, 1e12).unwrap();
        // Grid point maximizing ln f, i.e. the one nearest pi/2.
        let mode = search
            .grid()
            .scalars()
            .into_iter()
            .min_by(|a, b| {
                (a - PI / 2.0)
                    .abs()
                    .partial_cmp(&(b - PI / 2.0).abs())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(est, mode);
    }

    #[test]
    fn map_errors_when_prior_excludes_whole_grid() {
        let model = ula_manifold(4, Complex64::new(1.0, 0.0));
        let search = GridSearch::new(
            &model,
            SearchGrid {
                points: vec![vec![0.0], vec![PI]],
                tag: GridTag::Uniform,
            },
        )
        .unwrap();
        let prior = BetaPrior::new(10.0).unwrap(); // density 0 at both ends
        let x = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            search.map_estimate(&prior, &x, 1.0),
            Err(Error::UndefinedEstimate(_))
        ));
    }

    #[test]
    fn map_beats_ml_with_informative_prior() {
        // Paired draws (same seed, same noise stream): MAP MSE at or below
        // ML MSE with the informative a = 10 prior at 10 dB.
        let model = ula_manifold(15, Complex64::new(1.0, 0.0));
        let search = GridSearch::new(&model, omega_grid(8192)).unwrap();
        let prior = BetaPrior::new(10.0).unwrap();
        let sigma_w2 = 0.1;
        let scenario = McScenario::from_model(&model, &[1.2], 0, sigma_w2).unwrap();
        let map = run_monte_carlo(
            &scenario,
            |x| search.map_estimate(&prior, x, sigma_w2),
            10_000,
            404,
        )
        .unwrap();
        let ml = run_monte_carlo(&scenario, |x| Ok(search.ml_estimate(x)[0]), 10_000, 404).unwrap();
        assert!(
            map.mse <= ml.mse * 1.001,
            "MAP {} above ML {}",
            map.mse,
            ml.mse
        );
    }

    #[test]
    fn harness_oracle_and_constant_estimators() {
        let model = identity_manifold((-10.0, 10.0), NoiseKind::ComplexCircular);
        let scenario = McScenario::from_model(&model, &[1.5], 0, 1.0).unwrap();
        let oracle = run_monte_carlo(&scenario, |_| Ok(1.5), 100, 1).unwrap();
        assert_eq!(oracle.mse, 0.0);
        assert_eq!(oracle.stderr, 0.0);
        assert_eq!(oracle.bias, 0.0);
        let constant = run_monte_carlo(&scenario, |_| Ok(2.5), 100, 1).unwrap();
        assert_eq!(constant.mse, 1.0);
        assert_eq!(constant.stderr, 0.0);
        assert_eq!(constant.bias, 1.0);
    }

    #[test]
    fn harness_matches_analytic_variance() {
        // theta-hat = Re{x}: variance of the real part of complex circular
        // noise is sigma^2 / 2.
        let model = identity_manifold((-10.0, 10.0), NoiseKind::ComplexCircular);
        let scenario = McScenario::from_model(&model, &[0.3], 0, 2.0).unwrap();
        let r = run_monte_carlo(&scenario, |x| Ok(x[0].re), 100_000, 9).unwrap();
        assert!(
            (r.mse - 1.0).abs() <= 3.0 * r.stderr,
            "mse {} stderr {}",
            r.mse,
            r.stderr
        );
        assert!(r.bias.abs() <= 3.0 * (1.0f64 / 100_000.0).sqrt());
    }

    #[test]
    fn harness_is_reproducible_and_thread_independent() {
        let model = ula_manifold(8, Complex64::new(1.0, 0.0));
        let search = GridSearch::new(&model, uniform_grid(0.01, PI - 0.01, 256)).unwrap();
        let scenario = McScenario::from_model(&model, &[1.0], 0, 0.5).unwrap();
        let est = |x: &[Complex64]| Ok(search.ml_estimate(x)[0]);
        let a = run_monte_carlo(&scenario, est, 2000, 1234).unwrap();
        let b = run_monte_carlo(&scenario, est, 2000, 1234).unwrap();
        let c = run_monte_carlo_seq(&scenario, est, 2000, 1234).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let other = run_monte_carlo(&scenario, est, 2000, 1235).unwrap();
        assert_ne!(a.mse, other.mse);
    }

    #[test]
    fn harness_aborts_on_excessive_failures() {
        let model = identity_manifold((-10.0, 10.0), NoiseKind::ComplexCircular);
        let scenario = McScenario::from_model(&model, &[0.0], 0, 1.0).unwrap();
        // Fail whenever the real part is positive: ~50% of draws.
        let flaky = |x: &[Complex64]| {
            if x[0].re > 0.0 {
                Err(Error::UndefinedEstimate("flaky".to_string()))
            } else {
                Ok(x[0].re)
            }
        };
        match run_monte_carlo(&scenario, flaky, 1000, 7) {
            Err(Error::TooManyFailures { failed, total }) => {
                assert_eq!(total, 1000);
                assert!(failed > 400);
            }
            other => panic!("expected TooManyFailures, got {other:?}"),
        }
        // Rare failures are excluded and counted, not fatal.
        let rare = |x: &[Complex64]| {
            if x[0].re > 3.5 {
                Err(Error::UndefinedEstimate("rare".to_string()))
            } else {
                Ok(x[0].re)
            }
        };
        let r = run_monte_carlo(&scenario, rare, 1000, 7).unwrap();
        assert!(r.n_failed <= 10);
        assert_eq!(r.n_runs + r.n_failed, 1000);
    }

    #[test]
    fn grid_refinement_never_hurts_noiseless_error() {
        let model = ula_manifold(15, Complex64::new(1.0, 0.0));
        for &truth in &[0.73, 1.28, 2.51] {
            let x = model.mean(&[truth]).unwrap();
            let mut prev = f64::INFINITY;
            // Endpoint-inclusive n -> 2n - 1 keeps the grids nested, which is
            // what makes the noiseless error monotone under refinement.
            for n in [450, 899, 1797, 3593] {
                let search =
                    GridSearch::new(&model, uniform_grid(0.001, PI - 0.001, n)).unwrap();
                let err = (search.ml_estimate(&x)[0] - truth).abs();
                assert!(err <= prev + 1e-15, "error grew at n = {n}");
                prev = err;
            }
        }
    }

    #[test]
    fn bayesian_harness_matches_prior_moments() {
        // The prior-mean estimator's MSE is the prior variance; with heavy
        // noise the truth draw dominates and the noise is irrelevant.
        let model = ula_manifold(4, Complex64::new(1.0, 0.0));
        let prior = BetaPrior::new(10.0).unwrap();
        let r = run_monte_carlo_bayesian(&model, &prior, 1.0, |_| Ok(PI / 2.0), 50_000, 3)
            .unwrap();
        // Var of pi * Beta(10, 10) = pi^2 * 100 / (400 * 21).
        let var = PI * PI * 100.0 / (400.0 * 21.0);
        assert!(
            (r.mse - var).abs() <= 3.0 * r.stderr,
            "mse {} vs prior variance {var} (stderr {})",
            r.mse,
            r.stderr
        );
        let again = run_monte_carlo_bayesian(&model, &prior, 1.0, |_| Ok(PI / 2.0), 50_000, 3)
            .unwrap();
        assert_eq!(r, again);
        // Flat prior: uniform on [0, pi], variance pi^2 / 12.
        let flat = run_monte_carlo_bayesian(
            &model,
            &BetaPrior::uniform(),
            1.0,
            |_| Ok(PI / 2.0),
            50_000,
            4,
        )
        .unwrap();
        assert!((flat.mse - PI * PI / 12.0).abs() <= 3.0 * flat.stderr);
    }

    proptest! {
        #[test]
        fn uniform_grid_points_stay_in_range(
            a in -3.0f64..0.0, width in 0.1f64..5.0, n in 2usize..200
        ) {
            let b = a + width;
            let g = uniform_grid(a, b, n);
            prop_assert_eq!(g.len(), n);
            for p in g.scalars() {
                prop_assert!(p >= a - 1e-12 && p <= b + 1e-12);
            }
        }

        #[test]
        fn objective_equivalence_property(seed in 0u64..1000, phase in 0.0f64..(2.0 * PI)) {
            // Unit-modulus manifold with an arbitrary global phase on the
            // amplitude: both objectives pick the same grid point.
            let amp = Complex64::new(0.0, phase).exp();
            let model = ula_manifold(6, amp);
            let search = GridSearch::new(&model, uniform_grid(0.05, PI - 0.05, 128)).unwrap();
            let x = sample_complex_gaussian(&RngState::new(seed), 6, 2.0).unwrap();
            let a = search.ml_estimate_with(&x, MlObjective::InnerProduct);
            let b = search.ml_estimate_with(&x, MlObjective::Residual);
            prop_assert_eq!(a, b);
        }
    }

    use crate::numeric::sample_complex_gaussian;
}
