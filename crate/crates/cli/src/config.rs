//! Scenario configuration files: TOML-compatible `key = value` sections,
//! strict schema validation with nearest-key suggestions, and per-kind
//! defaults mirroring the built-in scenarios.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use toml::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Frequency,
    Doa3dAzimuth,
    Doa3dElevation,
    Doa3dJoint,
    NearfieldMismatch,
    EspritUla,
    BayesianUla,
    Custom,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Frequency,
        Kind::Doa3dAzimuth,
        Kind::Doa3dElevation,
        Kind::Doa3dJoint,
        Kind::NearfieldMismatch,
        Kind::EspritUla,
        Kind::BayesianUla,
        Kind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Frequency => "frequency",
            Kind::Doa3dAzimuth => "doa3d-azimuth",
            Kind::Doa3dElevation => "doa3d-elevation",
            Kind::Doa3dJoint => "doa3d-joint",
            Kind::NearfieldMismatch => "nearfield-mismatch",
            Kind::EspritUla => "esprit-ula",
            Kind::BayesianUla => "bayesian-ula",
            Kind::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Kind::Frequency => "single complex exponential, frequency estimation (N = 16)",
            Kind::Doa3dAzimuth => "3-D array azimuth estimation, elevation known (11 sensors)",
            Kind::Doa3dElevation => "3-D array elevation estimation, azimuth known (11 sensors)",
            Kind::Doa3dJoint => "3-D array azimuth estimation with elevation as nuisance",
            Kind::NearfieldMismatch => {
                "near-field source estimated under a far-field assumption (12-element UCA)"
            }
            Kind::EspritUla => "ESPRIT on a 15-element half-wavelength ULA",
            Kind::BayesianUla => "Bayesian ULA azimuth with a symmetric beta prior (a = 10)",
            Kind::Custom => "identity model or a far-field array loaded from a geometry file",
        }
    }

    fn parse(name: &str) -> Option<Kind> {
        Kind::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which result columns a run should produce.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    pub prediction: bool,
    pub crlb: bool,
    pub mcrlb: bool,
    pub hcrb: bool,
    pub zzb: bool,
    pub bcrlb: bool,
    pub montecarlo: bool,
}

/// Fully resolved scenario description; every field has a kind-appropriate
/// default so a minimal config only names the kind and the SNR list.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub kind: Kind,
    pub snr_db: Vec<f64>,
    pub n_sensors: usize,
    pub amplitude: f64,
    pub omega_bar: f64,
    pub true_azimuth_deg: f64,
    pub true_elevation_deg: f64,
    pub true_phi_deg: f64,
    pub radius_wavelengths: f64,
    pub range_wavelengths: f64,
    pub prior_a: f64,
    pub support_min: f64,
    pub support_max: f64,
    pub true_value: f64,
    pub geometry_file: Option<String>,
    pub ml_points: usize,
    pub omega_points: usize,
    pub sphere_elevations: usize,
    pub sphere_density: f64,
    pub nuisance_e_max: f64,
    pub nuisance_n_log: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub n_runs: usize,
    pub seed: Option<u64>,
    pub outputs: Outputs,
}

impl ScenarioConfig {
    /// Desk-scale defaults for a kind; the SNR list still has to be given.
    pub fn default_for(kind: Kind) -> Self {
        let outputs = Outputs {
            prediction: true,
            crlb: !matches!(kind, Kind::BayesianUla),
            mcrlb: matches!(kind, Kind::NearfieldMismatch),
            hcrb: matches!(
                kind,
                Kind::Frequency
                    | Kind::Doa3dAzimuth
                    | Kind::Doa3dElevation
                    | Kind::NearfieldMismatch
                    | Kind::EspritUla
            ),
            zzb: matches!(kind, Kind::BayesianUla),
            bcrlb: matches!(kind, Kind::BayesianUla),
            montecarlo: true,
        };
        ScenarioConfig {
            kind,
            snr_db: Vec::new(),
            n_sensors: match kind {
                Kind::Frequency => 16,
                Kind::NearfieldMismatch => 12,
                _ => 15,
            },
            amplitude: 1.0,
            omega_bar: PI / 2.0,
            true_azimuth_deg: match kind {
                Kind::NearfieldMismatch => 30.0,
                _ => 25.0,
            },
            true_elevation_deg: 60.0,
            true_phi_deg: 35.0,
            radius_wavelengths: 5.0 / 3.0,
            range_wavelengths: 5.0,
            prior_a: 10.0,
            support_min: -10.0,
            support_max: 10.0,
            true_value: 0.0,
            geometry_file: None,
            ml_points: 3600,
            omega_points: 8192,
            sphere_elevations: 200,
            sphere_density: 100.0,
            nuisance_e_max: match kind {
                Kind::Doa3dElevation => PI,
                _ => PI / 2.0,
            },
            nuisance_n_log: 60,
            abs_tol: 1e-5,
            rel_tol: 1e-5,
            n_runs: 10_000,
            seed: None,
            outputs,
        }
    }
}

fn suggest<'a>(key: &str, candidates: impl IntoIterator<Item = &'a str>) -> String {
    let best = candidates
        .into_iter()
        .min_by_key(|c| strsim::levenshtein(key, c));
    match best {
        Some(b) => format!("unknown key `{key}`; nearest valid key is `{b}`"),
        None => format!("unknown key `{key}`"),
    }
}

const SECTIONS: [&str; 5] = ["scenario", "grids", "quadrature", "montecarlo", "outputs"];
const SCENARIO_KEYS: [&str; 15] = [
    "kind",
    "snr_db",
    "n_sensors",
    "amplitude",
    "omega_bar",
    "true_azimuth_deg",
    "true_elevation_deg",
    "true_phi_deg",
    "radius_wavelengths",
    "range_wavelengths",
    "prior_a",
    "support_min",
    "support_max",
    "true_value",
    "geometry_file",
];
const GRID_KEYS: [&str; 6] = [
    "ml_points",
    "omega_points",
    "sphere_elevations",
    "sphere_density",
    "nuisance_e_max",
    "nuisance_n_log",
];
const QUAD_KEYS: [&str; 2] = ["abs_tol", "rel_tol"];
const MC_KEYS: [&str; 2] = ["n_runs", "seed"];
const OUTPUT_KEYS: [&str; 7] = [
    "prediction",
    "crlb",
    "mcrlb",
    "hcrb",
    "zzb",
    "bcrlb",
    "montecarlo",
];

/// Keys in [scenario] that are meaningful for each kind, beyond the common
/// `kind` / `snr_db`.
fn keys_for_kind(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Frequency => &["n_sensors", "amplitude", "omega_bar"],
        Kind::Doa3dAzimuth | Kind::Doa3dElevation | Kind::Doa3dJoint => {
            &["amplitude", "true_azimuth_deg", "true_elevation_deg", "geometry_file"]
        }
        Kind::NearfieldMismatch => &[
            "n_sensors",
            "amplitude",
            "true_azimuth_deg",
            "radius_wavelengths",
            "range_wavelengths",
        ],
        Kind::EspritUla => &["n_sensors", "amplitude", "true_phi_deg"],
        Kind::BayesianUla => &["n_sensors", "amplitude", "prior_a"],
        Kind::Custom => &[
            "support_min",
            "support_max",
            "true_value",
            "amplitude",
            "geometry_file",
            "true_azimuth_deg",
            "true_elevation_deg",
        ],
    }
}

struct Section<'a> {
    name: &'a str,
    table: Option<&'a toml::map::Map<String, Value>>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(*f),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(_) => Err(CliError::Config(format!(
                "[{}] {key} must be a number",
                self.name
            ))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(_) => Err(CliError::Config(format!(
                "[{}] {key} must be a nonnegative integer",
                self.name
            ))),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(CliError::Config(format!(
                "[{}] {key} must be a boolean",
                self.name
            ))),
        }
    }
}

pub fn load(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
    let root: Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("TOML parse error: {e}")))?;
    let root = root
        .as_table()
        .ok_or_else(|| CliError::Config("config root must be a table".to_string()))?;

    for (name, value) in root {
        if !SECTIONS.contains(&name.as_str()) {
            return Err(CliError::Config(suggest(name, SECTIONS)));
        }
        if !value.is_table() {
            return Err(CliError::Config(format!("[{name}] must be a section")));
        }
    }
    let section = |name: &'static str| Section {
        name,
        table: root.get(name).and_then(Value::as_table),
    };
    let checks: [(&str, &[&str]); 5] = [
        ("scenario", &SCENARIO_KEYS),
        ("grids", &GRID_KEYS),
        ("quadrature", &QUAD_KEYS),
        ("montecarlo", &MC_KEYS),
        ("outputs", &OUTPUT_KEYS),
    ];
    for (name, allowed) in checks {
        if let Some(table) = section(name).table {
            for key in table.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(CliError::Config(format!(
                        "in [{name}]: {}",
                        suggest(key, allowed.iter().copied())
                    )));
                }
            }
        }
    }

    let scen = section("scenario");
    let kind_name = match scen.get("kind") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(CliError::Config("[scenario] kind must be a string".to_string())),
        None => return Err(CliError::Config("[scenario] kind is required".to_string())),
    };
    let kind = Kind::parse(&kind_name).ok_or_else(|| {
        let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
        CliError::Config(format!(
            "unknown scenario kind `{kind_name}`; {}",
            suggest(&kind_name, names)
        ))
    })?;

    // Reject scenario keys that do not apply to this kind.
    let applicable: BTreeSet<&str> = ["kind", "snr_db"]
        .into_iter()
        .chain(keys_for_kind(kind).iter().copied())
        .collect();
    if let Some(table) = scen.table {
        for key in table.keys() {
            if !applicable.contains(key.as_str()) {
                return Err(CliError::Config(format!(
                    "[scenario] key `{key}` does not apply to kind `{kind}`"
                )));
            }
        }
    }

    let snr_db: Vec<f64> = match scen.get("snr_db") {
        Some(Value::Array(a)) => a
            .iter()
            .map(|v| match v {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(CliError::Config(
                    "[scenario] snr_db entries must be numbers".to_string(),
                )),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(CliError::Config(
                "[scenario] snr_db must be an array of numbers".to_string(),
            ))
        }
        None => Vec::new(),
    };
    if snr_db.is_empty() {
        return Err(CliError::Config(
            "[scenario] snr_db must be a nonempty list".to_string(),
        ));
    }
    if snr_db.iter().any(|s| !s.is_finite()) {
        return Err(CliError::Config(
            "[scenario] snr_db entries must be finite".to_string(),
        ));
    }

    let d = ScenarioConfig::default_for(kind);
    let grids = section("grids");
    let quad = section("quadrature");
    let mc = section("montecarlo");
    let outs = section("outputs");

    let geometry_file = match scen.get("geometry_file") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            return Err(CliError::Config(
                "[scenario] geometry_file must be a string path".to_string(),
            ))
        }
    };

    let config = ScenarioConfig {
        kind,
        snr_db,
        n_sensors: scen.usize("n_sensors", d.n_sensors)?,
        amplitude: scen.f64("amplitude", d.amplitude)?,
        omega_bar: scen.f64("omega_bar", d.omega_bar)?,
        true_azimuth_deg: scen.f64("true_azimuth_deg", d.true_azimuth_deg)?,
        true_elevation_deg: scen.f64("true_elevation_deg", d.true_elevation_deg)?,
        true_phi_deg: scen.f64("true_phi_deg", d.true_phi_deg)?,
        radius_wavelengths: scen.f64("radius_wavelengths", d.radius_wavelengths)?,
        range_wavelengths: scen.f64("range_wavelengths", d.range_wavelengths)?,
        prior_a: scen.f64("prior_a", d.prior_a)?,
        support_min: scen.f64("support_min", d.support_min)?,
        support_max: scen.f64("support_max", d.support_max)?,
        true_value: scen.f64("true_value", d.true_value)?,
        geometry_file,
        ml_points: grids.usize("ml_points", d.ml_points)?,
        omega_points: grids.usize("omega_points", d.omega_points)?,
        sphere_elevations: grids.usize("sphere_elevations", d.sphere_elevations)?,
        sphere_density: grids.f64("sphere_density", d.sphere_density)?,
        nuisance_e_max: grids.f64("nuisance_e_max", d.nuisance_e_max)?,
        nuisance_n_log: grids.usize("nuisance_n_log", d.nuisance_n_log)?,
        abs_tol: quad.f64("abs_tol", d.abs_tol)?,
        rel_tol: quad.f64("rel_tol", d.rel_tol)?,
        n_runs: mc.usize("n_runs", d.n_runs)?,
        seed: match mc.get("seed") {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(_) => {
                return Err(CliError::Config(
                    "[montecarlo] seed must be a nonnegative integer".to_string(),
                ))
            }
        },
        outputs: Outputs {
            prediction: outs.bool("prediction", d.outputs.prediction)?,
            crlb: outs.bool("crlb", d.outputs.crlb)?,
            mcrlb: outs.bool("mcrlb", d.outputs.mcrlb)?,
            hcrb: outs.bool("hcrb", d.outputs.hcrb)?,
            zzb: outs.bool("zzb", d.outputs.zzb)?,
            bcrlb: outs.bool("bcrlb", d.outputs.bcrlb)?,
            montecarlo: outs.bool("montecarlo", d.outputs.montecarlo)?,
        },
    };
    validate(&config)?;
    Ok(config)
}

fn validate(c: &ScenarioConfig) -> Result<(), CliError> {
    let err = |msg: String| Err(CliError::Config(msg));
    if c.n_sensors < 2 {
        return err("n_sensors must be at least 2".to_string());
    }
    if !(c.amplitude > 0.0) {
        return err("amplitude must be positive".to_string());
    }
    if c.ml_points < 2 || c.omega_points < 2 {
        return err("grid point counts must be at least 2".to_string());
    }
    if !(c.abs_tol > 0.0 && c.rel_tol > 0.0) {
        return err("quadrature tolerances must be positive".to_string());
    }
    if c.n_runs < 2 {
        return err("n_runs must be at least 2".to_string());
    }
    match c.kind {
        Kind::Frequency => {
            if !(c.omega_bar > -PI && c.omega_bar < PI) {
                return err("omega_bar must lie strictly inside (-pi, pi)".to_string());
            }
        }
        Kind::Doa3dAzimuth | Kind::Doa3dElevation | Kind::Doa3dJoint => {
            if !(c.true_azimuth_deg > -180.0 && c.true_azimuth_deg < 180.0) {
                return err("true_azimuth_deg must lie in (-180, 180)".to_string());
            }
            if !(c.true_elevation_deg > 0.0 && c.true_elevation_deg < 180.0) {
                return err("true_elevation_deg must lie in (0, 180)".to_string());
            }
        }
        Kind::NearfieldMismatch => {
            if !(c.radius_wavelengths > 0.0 && c.range_wavelengths > 0.0) {
                return err("radius and range must be positive".to_string());
            }
        }
        Kind::EspritUla => {
            if !(c.true_phi_deg > 0.0 && c.true_phi_deg < 180.0) {
                return err("true_phi_deg must lie in (0, 180)".to_string());
            }
        }
        Kind::BayesianUla => {
            if !(c.prior_a > 2.0) {
                return err("prior_a must exceed 2".to_string());
            }
            if c.outputs.crlb || c.outputs.mcrlb || c.outputs.hcrb {
                return err("bayesian-ula supports only zzb and bcrlb bounds".to_string());
            }
        }
        Kind::Custom => {
            if c.geometry_file.is_none() {
                if !(c.support_min < c.support_max) {
                    return err("support_min must be below support_max".to_string());
                }
                if !(c.true_value > c.support_min && c.true_value < c.support_max) {
                    return err("true_value must lie strictly inside the support".to_string());
                }
            }
        }
    }
    if c.kind != Kind::BayesianUla && (c.outputs.zzb || c.outputs.bcrlb) {
        return err(format!("zzb/bcrlb apply only to bayesian-ula, not `{}`", c.kind));
    }
    if c.kind != Kind::NearfieldMismatch && c.outputs.mcrlb {
        return err(format!("mcrlb applies only to nearfield-mismatch, not `{}`", c.kind));
    }
    Ok(())
}
