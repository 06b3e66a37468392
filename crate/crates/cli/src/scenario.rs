//! Builds models for each scenario kind and produces the requested result
//! columns, one row per SNR value (ascending).

use std::f64::consts::PI;

use num_complex::Complex64;

use idemse_core::bounds::{
    bcrlb, crlb_joint, crlb_scalar, hcrb_single_test_point, mcrlb_parametric_mean, zzb,
};
use idemse_core::esprit::{esprit_estimate, mse_hat_esprit, EspritScenario};
use idemse_core::models::{
    far_field_manifold, fix_all_but, frequency_manifold, identity_manifold, near_field_manifold,
    table1_array, ula_manifold, uniform_circular_array, ArrayGeometry, ManifoldModel,
    MismatchPair, NoiseKind,
};
use idemse_core::predictor::{
    bayes_average, build_nuisance_grid, mse_hat_map_at, mse_hat_ml_nuisance_min,
    mse_hat_ml_scalar, BetaPrior, QuadTols,
};
use idemse_core::simulate::{
    omega_grid, run_monte_carlo, run_monte_carlo_bayesian, sphere_grid, uniform_grid, GridSearch,
    McResult, McScenario,
};

use crate::config::{Kind, ScenarioConfig};
use crate::table::Table;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Predict,
    Bounds,
    MonteCarlo,
    Sweep,
}

fn rad(deg: f64) -> f64 {
    deg * PI / 180.0
}

fn rmse_deg(mse: f64) -> f64 {
    mse.max(0.0).sqrt() * 180.0 / PI
}

fn sigma2_for(c: &ScenarioConfig, snr_db: f64) -> f64 {
    c.amplitude * c.amplitude * 10f64.powf(-snr_db / 10.0)
}

fn sorted_snrs(c: &ScenarioConfig) -> Vec<f64> {
    let mut s = c.snr_db.clone();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.dedup();
    s
}

/// Grid of HCRB test points: the ML grid with the true value removed.
fn hcrb_grid(ml_grid: &[f64], theta_bar: f64) -> Vec<f64> {
    ml_grid
        .iter()
        .copied()
        .filter(|p| (p - theta_bar).abs() > 1e-12)
        .collect()
}

struct RowBuilder {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    current: Vec<f64>,
    first_row: bool,
}

impl RowBuilder {
    fn new() -> Self {
        RowBuilder {
            columns: Vec::new(),
            rows: Vec::new(),
            current: Vec::new(),
            first_row: true,
        }
    }

    fn cell(&mut self, name: &str, value: f64) {
        if self.first_row {
            self.columns.push(name.to_string());
        }
        self.current.push(value);
    }

    fn end_row(&mut self) {
        assert_eq!(self.current.len(), self.columns.len());
        self.rows.push(std::mem::take(&mut self.current));
        self.first_row = false;
    }

    fn finish(self) -> Table {
        let mut t = Table::new(self.columns);
        for row in self.rows {
            t.push(row);
        }
        t
    }
}

/// What a command asks for, intersected with the configured outputs.
struct Wants {
    prediction: bool,
    bounds: bool,
    montecarlo: bool,
}

fn wants(cmd: Command, c: &ScenarioConfig) -> Wants {
    match cmd {
        Command::Predict => Wants {
            prediction: true,
            bounds: false,
            montecarlo: false,
        },
        Command::Bounds => Wants {
            prediction: false,
            bounds: true,
            montecarlo: false,
        },
        Command::MonteCarlo => Wants {
            prediction: false,
            bounds: false,
            montecarlo: true,
        },
        Command::Sweep => Wants {
            prediction: c.outputs.prediction,
            bounds: true,
            montecarlo: c.outputs.montecarlo,
        },
    }
}

fn required_seed(c: &ScenarioConfig) -> Result<u64, CliError> {
    c.seed.ok_or_else(|| {
        CliError::Config(
            "Monte Carlo requires a seed ([montecarlo] seed or --seed)".to_string(),
        )
    })
}

pub fn run(c: &ScenarioConfig, cmd: Command) -> Result<Table, CliError> {
    let w = wants(cmd, c);
    match c.kind {
        Kind::Frequency => frequency(c, &w),
        Kind::Doa3dAzimuth => doa3d_scalar(c, &w, 0),
        Kind::Doa3dElevation => doa3d_scalar(c, &w, 1),
        Kind::Doa3dJoint => doa3d_joint(c, &w),
        Kind::NearfieldMismatch => nearfield_mismatch(c, &w),
        Kind::EspritUla => esprit_ula(c, &w),
        Kind::BayesianUla => bayesian_ula(c, &w),
        Kind::Custom => custom(c, &w),
    }
}

/// Scalar non-random parameter scaffolding shared by most kinds: prediction,
/// CRLB/HCRB, grid-search (or closed-form) Monte Carlo.
#[allow(clippy::too_many_arguments)]
fn scalar_rows(
    c: &ScenarioConfig,
    w: &Wants,
    b: &mut RowBuilder,
    is_doa: bool,
    predict: impl Fn(f64) -> Result<f64, CliError>,
    extra_predictions: &[(&str, &dyn Fn(f64) -> Result<f64, CliError>)],
    crlb: impl Fn(f64) -> Result<f64, CliError>,
    hcrb: impl Fn(f64) -> Result<f64, CliError>,
    mcrlb: Option<&dyn Fn(f64) -> Result<f64, CliError>>,
    montecarlo: impl Fn(f64, u64) -> Result<McResult, CliError>,
) -> Result<(), CliError> {
    let seed = if w.montecarlo { Some(required_seed(c)?) } else { None };
    for snr in sorted_snrs(c) {
        let sigma2 = sigma2_for(c, snr);
        b.cell("snr_db", snr);
        if w.prediction {
            let mse = predict(sigma2)?;
            b.cell("mse_pred", mse);
            for (name, f) in extra_predictions {
                b.cell(name, f(sigma2)?);
            }
            if is_doa {
                b.cell("rmse_pred_deg", rmse_deg(mse));
            }
        }
        if w.bounds {
            if c.outputs.crlb {
                b.cell("crlb", crlb(sigma2)?);
            }
            if let (true, Some(m)) = (c.outputs.mcrlb, mcrlb) {
                b.cell("mcrlb", m(sigma2)?);
            }
            if c.outputs.hcrb {
                b.cell("hcrb", hcrb(sigma2)?);
            }
        }
        if let Some(seed) = seed {
            let r = montecarlo(sigma2, seed)?;
            b.cell("mc_mse", r.mse);
            b.cell("mc_stderr", r.stderr);
            b.cell("n_runs", r.n_runs as f64);
            if is_doa {
                b.cell("rmse_mc_deg", rmse_deg(r.mse));
            }
        }
        b.end_row();
    }
    Ok(())
}

fn frequency(c: &ScenarioConfig, w: &Wants) -> Result<Table, CliError> {
    let model = frequency_manifold(c.n_sensors, Complex64::new(c.amplitude, 0.0));
    let theta = c.omega_bar;
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let ml = uniform_grid(-PI, PI, c.ml_points);
    let hgrid = hcrb_grid(&ml.scalars(), theta);
    let search = if w.montecarlo {
        Some(GridSearch::new(&model, ml)?)
    } else {
        None
    };
    let mut b = RowBuilder::new();
    scalar_rows(
        c,
        w,
        &mut b,
        false,
        |s2| Ok(mse_hat_ml_scalar(&model, theta, s2, tols)?.mse),
        &[],
        |s2| Ok(crlb_scalar(&model, theta, s2)?.value),
        |s2| Ok(hcrb_single_test_point(&model, theta, s2, &hgrid)?.value),
        None,
        |s2, seed| {
            let search = search.as_ref().expect("search built when MC requested");
            let scen = McScenario::from_model(&model, &[theta], 0, s2)?;
            Ok(run_monte_carlo(
                &scen,
                |x| Ok(search.ml_estimate(x)[0]),
                c.n_runs,
                seed,
            )?)
        },
    )?;
    Ok(b.finish())
}

fn doa_geometry(c: &ScenarioConfig) -> Result<ArrayGeometry, CliError> {
    match &c.geometry_file {
        Some(path) => Ok(ArrayGeometry::load(std::path::Path::new(path))?),
        None => Ok(table1_array()),
    }
}

/// Azimuth (index 0) or elevation (index 1) estimation with the other angle
/// known; also emits the known-vs-nuisance prediction pair.
fn doa3d_scalar(c: &ScenarioConfig, w: &Wants, index: usize) -> Result<Table, CliError> {
    let geometry = doa_geometry(c)?;
    let full = far_field_manifold(&geometry, c.amplitude);
    let psi = [rad(c.true_azimuth_deg), rad(c.true_elevation_deg)];
    let theta = psi[index];
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let scalar_model = fix_all_but(&full, index, &psi);
    let (s_lo, s_hi) = scalar_model.support(0);

    // Model with the estimated angle first and the other one as nuisance.
    let nuis_index = 1 - index;
    let reordered = reorder_two_param(&full, index);
    let nuis_grid = build_nuisance_grid(
        psi[nuis_index],
        c.nuisance_e_max,
        c.nuisance_n_log,
        1e-7,
        Some(full.support(nuis_index)),
    );

    let ml = uniform_grid(s_lo, s_hi, c.ml_points);
    let hgrid = hcrb_grid(&ml.scalars(), theta);
    let search = if w.montecarlo {
        Some(GridSearch::new(&scalar_model, ml)?)
    } else {
        None
    };
    let nuisance_pred = |s2: f64| -> Result<f64, CliError> {
        Ok(mse_hat_ml_nuisance_min(&reordered, theta, &nuis_grid, s2, tols)?.mse)
    };
    let mut b = RowBuilder::new();
    scalar_rows(
        c,
        w,
        &mut b,
        true,
        |s2| Ok(mse_hat_ml_scalar(&scalar_model, theta, s2, tols)?.mse),
        &[("mse_pred_nuisance", &nuisance_pred)],
        |s2| Ok(crlb_scalar(&scalar_model, theta, s2)?.value),
        |s2| Ok(hcrb_single_test_point(&scalar_model, theta, s2, &hgrid)?.value),
        None,
        |s2, seed| {
            let search = search.as_ref().expect("search built when MC requested");
            let scen = McScenario::from_model(&scalar_model, &[theta], 0, s2)?;
            Ok(run_monte_carlo(
                &scen,
                |x| Ok(search.ml_estimate(x)[0]),
                c.n_runs,
                seed,
            )?)
        },
    )?;
    Ok(b.finish())
}

/// Two-parameter model with component `index` moved to the front.
fn reorder_two_param(full: &ManifoldModel, index: usize) -> ManifoldModel {
    assert_eq!(full.param_dim(), 2);
    if index == 0 {
        return full.clone();
    }
    let inner = full.clone();
    let model = ManifoldModel::new(
        full.n_sensors(),
        vec![full.support(1), full.support(0)],
        full.noise_kind(),
        move |t: &[f64]| inner.mean_unchecked(&[t[1], t[0]]),
    );
    if full.is_periodic(1) {
        model.with_periodic_parameter(0)
    } else {
        model
    }
}

fn doa3d_joint(c: &ScenarioConfig, w: &Wants) -> Result<Table, CliError> {
    let geometry = doa_geometry(c)?;
    let full = far_field_manifold(&geometry, c.amplitude);
    let psi = vec![rad(c.true_azimuth_deg), rad(c.true_elevation_deg)];
    let theta = psi[0];
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let nuis_grid = build_nuisance_grid(
        psi[1],
        c.nuisance_e_max,
        c.nuisance_n_log,
        1e-7,
        Some(full.support(1)),
    );
    let search = if w.montecarlo {
        Some(GridSearch::new(
            &full,
            sphere_grid(c.sphere_elevations, c.sphere_density),
        )?)
    } else {
        None
    };
    let seed = if w.montecarlo { Some(required_seed(c)?) } else { None };
    let mut b = RowBuilder::new();
    for snr in sorted_snrs(c) {
        let sigma2 = sigma2_for(c, snr);
        b.cell("snr_db", snr);
        if w.prediction {
            let mse = mse_hat_ml_nuisance_min(&full, theta, &nuis_grid, sigma2, tols)?.mse;
            b.cell("mse_pred", mse);
            b.cell("rmse_pred_deg", rmse_deg(mse));
        }
        if w.bounds && c.outputs.crlb {
            b.cell("crlb", crlb_joint(&full, &psi, sigma2)?[0]);
        }
        if let Some(seed) = seed {
            let search = search.as_ref().expect("search built when MC requested");
            let scen = McScenario::from_model(&full, &psi, 0, sigma2)?;
            let r = run_monte_carlo(
                &scen,
                |x| Ok(search.ml_estimate(x)[0]),
                c.n_runs,
                seed,
            )?;
            b.cell("mc_mse", r.mse);
            b.cell("mc_stderr", r.stderr);
            b.cell("n_runs", r.n_runs as f64);
            b.cell("rmse_mc_deg", rmse_deg(r.mse));
        }
        b.end_row();
    }
    Ok(b.finish())
}

fn nearfield_mismatch(c: &ScenarioConfig, w: &Wants) -> Result<Table, CliError> {
    if (c.amplitude - 1.0).abs() > 1e-12 {
        return Err(CliError::Config(
            "nearfield-mismatch uses unit-amplitude manifolds; amplitude must be 1".to_string(),
        ));
    }
    let geometry = uniform_circular_array(c.n_sensors, c.radius_wavelengths);
    let true_model = near_field_manifold(&geometry, c.range_wavelengths)?;
    let assumed = fix_all_but(
        &far_field_manifold(&geometry, c.amplitude),
        0,
        &[rad(c.true_azimuth_deg), PI / 2.0],
    );
    let theta = rad(c.true_azimuth_deg);
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let ml = uniform_grid(-PI, PI, c.ml_points);
    let hgrid = hcrb_grid(&ml.scalars(), theta);
    let search = if w.montecarlo {
        Some(GridSearch::new(&assumed, ml)?)
    } else {
        None
    };
    let true_mean = true_model.mean(&[theta])?;
    let mcrlb_fn = |s2: f64| -> Result<f64, CliError> {
        let pair = MismatchPair::new(true_model.clone(), assumed.clone(), s2, s2)?;
        Ok(mcrlb_parametric_mean(&pair, theta)?.value)
    };
    let mut b = RowBuilder::new();
    scalar_rows(
        c,
        w,
        &mut b,
        true,
        |s2| {
            let pair = MismatchPair::new(true_model.clone(), assumed.clone(), s2, s2)?;
            Ok(mse_hat_mml_wrapper(&pair, theta, tols)?)
        },
        &[],
        |s2| Ok(crlb_scalar(&assumed, theta, s2)?.value),
        |s2| Ok(hcrb_single_test_point(&assumed, theta, s2, &hgrid)?.value),
        Some(&mcrlb_fn),
        |s2, seed| {
            let search = search.as_ref().expect("search built when MC requested");
            let scen = McScenario {
                mean: true_mean.clone(),
                truth: theta,
                sigma_w2: s2,
            };
            Ok(run_monte_carlo(
                &scen,
                |x| Ok(search.ml_estimate(x)[0]),
                c.n_runs,
                seed,
            )?)
        },
    )?;
    Ok(b.finish())
}

fn mse_hat_mml_wrapper(
    pair: &MismatchPair,
    theta: f64,
    tols: QuadTols,
) -> Result<f64, CliError> {
    Ok(idemse_core::predictor::mse_hat_mml(pair, theta, tols)?.mse)
}

fn esprit_ula(c: &ScenarioConfig, w: &Wants) -> Result<Table, CliError> {
    let phi = rad(c.true_phi_deg);
    let amp = Complex64::new(c.amplitude, 0.0);
    let model = ula_manifold(c.n_sensors, amp);
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let ml = uniform_grid(0.0, PI, c.ml_points);
    let hgrid = hcrb_grid(&ml.scalars(), phi);
    let mut b = RowBuilder::new();
    scalar_rows(
        c,
        w,
        &mut b,
        true,
        |s2| {
            let scen = EspritScenario::new(c.n_sensors, amp, phi, s2)?;
            Ok(mse_hat_esprit(&scen, tols)?.mse)
        },
        &[],
        |s2| Ok(crlb_scalar(&model, phi, s2)?.value),
        |s2| Ok(hcrb_single_test_point(&model, phi, s2, &hgrid)?.value),
        None,
        |s2, seed| {
            let scen = EspritScenario::new(c.n_sensors, amp, phi, s2)?;
            let mc = McScenario {
                mean: scen.mean(),
                truth: phi,
                sigma_w2: s2,
            };
            Ok(run_monte_carlo(
                &mc,
                |x| esprit_estimate(x).map(|(_, phi_hat)| phi_hat),
                c.n_runs,
                seed,
            )?)
        },
    )?;
    Ok(b.finish())
}

fn bayesian_ula(c: &ScenarioConfig, w: &Wants) -> Result<Table, CliError> {
    let model = ula_manifold(c.n_sensors, Complex64::new(c.amplitude, 0.0));
    let prior = BetaPrior::new(c.prior_a)?;
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let search = if w.montecarlo {
        Some(GridSearch::new(&model, omega_grid(c.omega_points))?)
    } else {
        None
    };
    let seed = if w.montecarlo { Some(required_seed(c)?) } else { None };
    let mut b = RowBuilder::new();
    for snr in sorted_snrs(c) {
        let sigma2 = sigma2_for(c, snr);
        b.cell("snr_db", snr);
        if w.prediction {
            let map = bayes_average(
                &prior,
                |phi| {
                    mse_hat_map_at(&model, &prior, phi, sigma2, tols)
                        .map(|r| r.mse)
                        .unwrap_or(0.0)
                },
                0.01,
            );
            let ml = bayes_average(
                &prior,
                |phi| {
                    mse_hat_ml_scalar(&model, phi, sigma2, tols)
                        .map(|r| r.mse)
                        .unwrap_or(0.0)
                },
                0.01,
            );
            b.cell("mse_pred", map);
            b.cell("mse_pred_ml", ml);
            b.cell("rmse_pred_deg", rmse_deg(map));
        }
        if w.bounds {
            if c.outputs.bcrlb {
                let snr_linear = 10f64.powf(snr / 10.0);
                b.cell("bcrlb", bcrlb(&prior, snr_linear, c.n_sensors)?.value);
            }
            if c.outputs.zzb {
                b.cell("zzb", zzb(&model, &prior, sigma2, tols)?.value);
            }
        }
        if let Some(seed) = seed {
            let search = search.as_ref().expect("search built when MC requested");
            let map_mc = run_monte_carlo_bayesian(
                &model,
                &prior,
                sigma2,
                |x| search.map_estimate(&prior, x, sigma2),
                c.n_runs,
                seed,
            )?;
            let ml_mc = run_monte_carlo_bayesian(
                &model,
                &prior,
                sigma2,
                |x| Ok(search.ml_estimate(x)[0]),
                c.n_runs,
                seed,
            )?;
            b.cell("mc_mse", map_mc.mse);
            b.cell("mc_stderr", map_mc.stderr);
            b.cell("mc_mse_ml", ml_mc.mse);
            b.cell("n_runs", map_mc.n_runs as f64);
            b.cell("rmse_mc_deg", rmse_deg(map_mc.mse));
        }
        b.end_row();
    }
    Ok(b.finish())
}

fn custom(c: &ScenarioConfig, w: &Wants) -> Result<Table, CliError> {
    if c.geometry_file.is_some() {
        // Far-field azimuth estimation on a user-supplied array.
        return doa3d_scalar(c, w, 0);
    }
    let model = identity_manifold((c.support_min, c.support_max), NoiseKind::ComplexCircular);
    let theta = c.true_value;
    let tols = QuadTols::new(c.abs_tol, c.rel_tol);
    let mut b = RowBuilder::new();
    scalar_rows(
        c,
        w,
        &mut b,
        false,
        |s2| Ok(mse_hat_ml_scalar(&model, theta, s2, tols)?.mse),
        &[],
        |s2| Ok(crlb_scalar(&model, theta, s2)?.value),
        |_| {
            Err(CliError::Config(
                "hcrb is not available for the identity custom kind".to_string(),
            ))
        },
        None,
        |s2, seed| {
            let scen = McScenario::from_model(&model, &[theta], 0, s2)?;
            let (lo, hi) = (c.support_min, c.support_max);
            // Continuous ML for the identity model: the clamped real part.
            Ok(run_monte_carlo(
                &scen,
                |x| Ok(x[0].re.clamp(lo, hi)),
                c.n_runs,
                seed,
            )?)
        },
    )?;
    Ok(b.finish())
}
