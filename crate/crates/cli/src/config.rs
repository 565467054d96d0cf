//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, keys are dot-scoped.
//! Values are integers, decimals (optional exponent), booleans, or strings
//! (bare or double-quoted). Every key has a default; assigning a key twice
//! is an error so that the result never depends on line order.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hibler_core::discretization::Grid;
use hibler_core::dynamics::{Scheme, StepperConfig};
use hibler_core::output::fmt_float;
use hibler_core::rheology::{Regularization, RheologyParams};
use hibler_core::stability::Equilibrium;
use hibler_core::verify::scaled_params;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' already set on line {first}")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: key '{key}' expects {expected}")]
    Type {
        line: usize,
        key: String,
        expected: &'static str,
    },
    #[error("{key}: {msg}")]
    Range { key: String, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

fn is_number_like(s: &str) -> bool {
    !s.is_empty()
        && s.chars().any(|c| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c))
}

fn parse_value(raw: &str, line: usize) -> Result<Value, ConfigError> {
    let err = |msg: String| ConfigError::Parse { line, msg };
    if raw.is_empty() {
        return Err(err("missing value".into()));
    }
    if let Some(rest) = raw.strip_prefix('"') {
        return match rest.strip_suffix('"') {
            Some(s) if !s.contains('"') => Ok(Value::Str(s.to_string())),
            _ => Err(err(format!("unterminated string {raw}"))),
        };
    }
    match raw {
        "true" => return Ok(Value::Bool(true)),
        "false" => return Ok(Value::Bool(false)),
        _ => {}
    }
    if is_number_like(raw) {
        if let Ok(i) = raw.parse::<i64>() {
            return Ok(Value::Int(i));
        }
        return raw
            .parse::<f64>()
            .map(Value::Float)
            .map_err(|_| err(format!("malformed number '{raw}'")));
    }
    if raw
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || "_-./".contains(c))
    {
        Ok(Value::Str(raw.to_string()))
    } else {
        Err(err(format!("malformed value '{raw}' (quote strings with spaces)")))
    }
}

/// Removes a trailing comment, ignoring `#` inside double quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (k, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..k],
            _ => {}
        }
    }
    line
}

/// Tokenises `text` into `key → (line, value)`.
pub fn parse_assignments(text: &str) -> Result<BTreeMap<String, (usize, Value)>, ConfigError> {
    let mut out: BTreeMap<String, (usize, Value)> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            msg: format!("expected 'key = value', got '{body}'"),
        })?;
        let key = key.trim();
        let valid_key = !key.is_empty()
            && key
                .split('.')
                .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        if !valid_key {
            return Err(ConfigError::Parse {
                line,
                msg: format!("malformed key '{key}'"),
            });
        }
        let value = parse_value(value.trim(), line)?;
        if let Some((first, _)) = out.get(key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first: *first,
            });
        }
        out.insert(key.to_string(), (line, value));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

/// Uniform prescribed forcing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForcingConfig {
    pub wind: [f64; 2],
    pub current: [f64; 2],
    pub tilt: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub perturbation_scale: f64,
    pub output_dir: PathBuf,
    /// Snapshot every this many steps; `0` writes only the final state.
    pub snapshot_every: usize,
    pub heatmaps: bool,
    /// Decay runs until the slowest mode has dropped by `10^decades`.
    pub decades: f64,
    /// Sampling range of `Re λ / scale` for boundary probes.
    pub lambda_re_min: f64,
    pub lambda_re_max: f64,
    /// Sampling range `[-m, m]` of `Im λ / scale`.
    pub lambda_im_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rheology: RheologyParams<f64>,
    pub grid: GridConfig,
    pub stepper: StepperConfig<f64>,
    pub h_star: f64,
    pub a_star: f64,
    pub forcing: ForcingConfig,
    pub experiment: ExperimentConfig,
}

const ZETA_MAX_PER_STRENGTH: f64 = 2.5e8;

impl Default for RunConfig {
    fn default() -> Self {
        let mut rheology = scaled_params();
        rheology.zeta_max = ZETA_MAX_PER_STRENGTH * rheology.p_star;
        rheology.eta_max = rheology.zeta_max / (rheology.e * rheology.e);
        Self {
            rheology,
            grid: GridConfig {
                nx: 17,
                ny: 17,
                lx: 1.0,
                ly: 1.0,
            },
            stepper: StepperConfig::default(),
            h_star: 1.0,
            a_star: 0.9,
            forcing: ForcingConfig::default(),
            experiment: ExperimentConfig {
                seed: 0,
                n_samples: 1000,
                perturbation_scale: 1e-3,
                output_dir: PathBuf::from("out"),
                snapshot_every: 0,
                heatmaps: false,
                decades: 1.0,
                lambda_re_min: 0.0,
                lambda_re_max: 5.0,
                lambda_im_max: 5.0,
            },
        }
    }
}

struct Slot<'a> {
    key: &'a str,
    line: usize,
    value: &'a Value,
}

impl Slot<'_> {
    fn type_err(&self, expected: &'static str) -> ConfigError {
        ConfigError::Type {
            line: self.line,
            key: self.key.to_string(),
            expected,
        }
    }

    fn float(&self) -> Result<f64, ConfigError> {
        match self.value {
            Value::Int(i) => Ok(*i as f64),
            Value::Float(x) => Ok(*x),
            _ => Err(self.type_err("a number")),
        }
    }

    fn uint(&self) -> Result<usize, ConfigError> {
        match self.value {
            Value::Int(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(self.type_err("a non-negative integer")),
        }
    }

    fn boolean(&self) -> Result<bool, ConfigError> {
        match self.value {
            Value::Bool(b) => Ok(*b),
            _ => Err(self.type_err("true or false")),
        }
    }

    fn string(&self) -> Result<&str, ConfigError> {
        match self.value {
            Value::Str(s) => Ok(s),
            _ => Err(self.type_err("a string")),
        }
    }
}

fn range(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let entries = parse_assignments(text)?;
    let mut cfg = RunConfig::default();
    let mut zeta_set = false;
    let mut eta_set = false;
    for (key, (line, value)) in &entries {
        let s = Slot {
            key,
            line: *line,
            value,
        };
        let r = &mut cfg.rheology;
        let x = &mut cfg.experiment;
        match key.as_str() {
            "rheology.e" => r.e = s.float()?,
            "rheology.delta" => r.delta = s.float()?,
            "rheology.p_star" => r.p_star = s.float()?,
            "rheology.c" => r.c = s.float()?,
            "rheology.kappa" => r.kappa = s.float()?,
            "rheology.rho_ice" => r.rho_ice = s.float()?,
            "rheology.rho_atm" => r.rho_atm = s.float()?,
            "rheology.rho_ocean" => r.rho_ocean = s.float()?,
            "rheology.c_atm" => r.c_atm = s.float()?,
            "rheology.c_ocean" => r.c_ocean = s.float()?,
            "rheology.theta_atm" => r.theta_atm = s.float()?,
            "rheology.theta_ocean" => r.theta_ocean = s.float()?,
            "rheology.c_cor" => r.c_cor = s.float()?,
            "rheology.g" => r.g = s.float()?,
            "rheology.d_h" => r.d_h = s.float()?,
            "rheology.d_a" => r.d_a = s.float()?,
            "rheology.variant" => {
                r.variant = s
                    .string()?
                    .parse::<Regularization>()
                    .map_err(|msg| ConfigError::Parse { line: *line, msg })?
            }
            "rheology.zeta_max" => {
                r.zeta_max = s.float()?;
                zeta_set = true;
            }
            "rheology.eta_max" => {
                r.eta_max = s.float()?;
                eta_set = true;
            }
            "grid.nx" => cfg.grid.nx = s.uint()?,
            "grid.ny" => cfg.grid.ny = s.uint()?,
            "grid.lx" => cfg.grid.lx = s.float()?,
            "grid.ly" => cfg.grid.ly = s.float()?,
            "stepper.dt" => cfg.stepper.dt = s.float()?,
            "stepper.t_end" => cfg.stepper.t_end = s.float()?,
            "stepper.scheme" => {
                cfg.stepper.scheme = s
                    .string()?
                    .parse::<Scheme>()
                    .map_err(|msg| ConfigError::Parse { line: *line, msg })?
            }
            "stepper.picard_max" => cfg.stepper.picard_max = s.uint()?,
            "stepper.picard_tol" => cfg.stepper.picard_tol = s.float()?,
            "stepper.omega" => cfg.stepper.omega = s.float()?,
            "equilibrium.h_star" => cfg.h_star = s.float()?,
            "equilibrium.a_star" => cfg.a_star = s.float()?,
            "forcing.wind_x" => cfg.forcing.wind[0] = s.float()?,
            "forcing.wind_y" => cfg.forcing.wind[1] = s.float()?,
            "forcing.current_x" => cfg.forcing.current[0] = s.float()?,
            "forcing.current_y" => cfg.forcing.current[1] = s.float()?,
            "forcing.tilt_x" => cfg.forcing.tilt[0] = s.float()?,
            "forcing.tilt_y" => cfg.forcing.tilt[1] = s.float()?,
            "experiment.seed" => x.seed = s.uint()? as u64,
            "experiment.n_samples" => x.n_samples = s.uint()?,
            "experiment.perturbation_scale" => x.perturbation_scale = s.float()?,
            "experiment.output_dir" => x.output_dir = PathBuf::from(s.string()?),
            "experiment.snapshot_every" => x.snapshot_every = s.uint()?,
            "experiment.heatmaps" => x.heatmaps = s.boolean()?,
            "experiment.decades" => x.decades = s.float()?,
            "experiment.lambda_re_min" => x.lambda_re_min = s.float()?,
            "experiment.lambda_re_max" => x.lambda_re_max = s.float()?,
            "experiment.lambda_im_max" => x.lambda_im_max = s.float()?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: *line,
                    key: key.clone(),
                })
            }
        }
    }
    if !zeta_set {
        cfg.rheology.zeta_max = ZETA_MAX_PER_STRENGTH * cfg.rheology.p_star;
    }
    if !eta_set {
        cfg.rheology.eta_max = cfg.rheology.zeta_max / (cfg.rheology.e * cfg.rheology.e);
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.rheology
            .validate()
            .map_err(|e| range("rheology", e.to_string()))?;
        for (key, n) in [("grid.nx", self.grid.nx), ("grid.ny", self.grid.ny)] {
            if n < 3 {
                return Err(range(key, format!("{n} must be >= 3")));
            }
        }
        for (key, l) in [("grid.lx", self.grid.lx), ("grid.ly", self.grid.ly)] {
            if !(l > 0.0) || !l.is_finite() {
                return Err(range(key, format!("{l} must be finite and > 0")));
            }
        }
        self.stepper
            .validate()
            .map_err(|e| range("stepper", e.to_string()))?;
        Equilibrium::new(self.h_star, self.a_star, &self.rheology)
            .map_err(|e| range("equilibrium", e.to_string()))?;
        for (key, v) in [
            ("forcing.wind_x", self.forcing.wind[0]),
            ("forcing.wind_y", self.forcing.wind[1]),
            ("forcing.current_x", self.forcing.current[0]),
            ("forcing.current_y", self.forcing.current[1]),
            ("forcing.tilt_x", self.forcing.tilt[0]),
            ("forcing.tilt_y", self.forcing.tilt[1]),
        ] {
            if !v.is_finite() {
                return Err(range(key, "must be finite"));
            }
        }
        let x = &self.experiment;
        if x.n_samples == 0 {
            return Err(range("experiment.n_samples", "must be >= 1"));
        }
        if !(x.perturbation_scale >= 0.0) || !x.perturbation_scale.is_finite() {
            return Err(range(
                "experiment.perturbation_scale",
                format!("{} must be finite and >= 0", x.perturbation_scale),
            ));
        }
        if !(x.decades > 0.0) || !x.decades.is_finite() {
            return Err(range("experiment.decades", format!("{} must be > 0", x.decades)));
        }
        if !(x.lambda_re_min <= x.lambda_re_max) || !x.lambda_re_max.is_finite() {
            return Err(range(
                "experiment.lambda_re_min",
                format!(
                    "[{}, {}] is not a finite interval",
                    x.lambda_re_min, x.lambda_re_max
                ),
            ));
        }
        if !(x.lambda_im_max >= 0.0) || !x.lambda_im_max.is_finite() {
            return Err(range("experiment.lambda_im_max", "must be finite and >= 0"));
        }
        if x.output_dir.as_os_str().is_empty() {
            return Err(range("experiment.output_dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid<f64> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
            .expect("validated grid")
    }

    pub fn equilibrium(&self) -> Equilibrium<f64> {
        Equilibrium::new(self.h_star, self.a_star, &self.rheology).expect("validated equilibrium")
    }

    /// Every key with its resolved value, sorted by key. Feeding the
    /// result back through [`parse_config`] reproduces `self`.
    pub fn entries(&self) -> Vec<(String, String)> {
        let f = |x: f64| fmt_float(x);
        let r = &self.rheology;
        let x = &self.experiment;
        let s = &self.stepper;
        let mut out: Vec<(&str, String)> = vec![
            ("rheology.e", f(r.e)),
            ("rheology.delta", f(r.delta)),
            ("rheology.p_star", f(r.p_star)),
            ("rheology.c", f(r.c)),
            ("rheology.kappa", f(r.kappa)),
            ("rheology.rho_ice", f(r.rho_ice)),
            ("rheology.rho_atm", f(r.rho_atm)),
            ("rheology.rho_ocean", f(r.rho_ocean)),
            ("rheology.c_atm", f(r.c_atm)),
            ("rheology.c_ocean", f(r.c_ocean)),
            ("rheology.theta_atm", f(r.theta_atm)),
            ("rheology.theta_ocean", f(r.theta_ocean)),
            ("rheology.c_cor", f(r.c_cor)),
            ("rheology.g", f(r.g)),
            ("rheology.d_h", f(r.d_h)),
            ("rheology.d_a", f(r.d_a)),
            ("rheology.variant", r.variant.to_string()),
            ("rheology.zeta_max", f(r.zeta_max)),
            ("rheology.eta_max", f(r.eta_max)),
            ("grid.nx", self.grid.nx.to_string()),
            ("grid.ny", self.grid.ny.to_string()),
            ("grid.lx", f(self.grid.lx)),
            ("grid.ly", f(self.grid.ly)),
            ("stepper.dt", f(s.dt)),
            ("stepper.t_end", f(s.t_end)),
            ("stepper.scheme", s.scheme.to_string()),
            ("stepper.picard_max", s.picard_max.to_string()),
            ("stepper.picard_tol", f(s.picard_tol)),
            ("stepper.omega", f(s.omega)),
            ("equilibrium.h_star", f(self.h_star)),
            ("equilibrium.a_star", f(self.a_star)),
            ("forcing.wind_x", f(self.forcing.wind[0])),
            ("forcing.wind_y", f(self.forcing.wind[1])),
            ("forcing.current_x", f(self.forcing.current[0])),
            ("forcing.current_y", f(self.forcing.current[1])),
            ("forcing.tilt_x", f(self.forcing.tilt[0])),
            ("forcing.tilt_y", f(self.forcing.tilt[1])),
            ("experiment.seed", x.seed.to_string()),
            ("experiment.n_samples", x.n_samples.to_string()),
            ("experiment.perturbation_scale", f(x.perturbation_scale)),
            (
                "experiment.output_dir",
                format!("\"{}\"", x.output_dir.display()),
            ),
            ("experiment.snapshot_every", x.snapshot_every.to_string()),
            ("experiment.heatmaps", x.heatmaps.to_string()),
            ("experiment.decades", f(x.decades)),
            ("experiment.lambda_re_min", f(x.lambda_re_min)),
            ("experiment.lambda_re_max", f(x.lambda_re_max)),
            ("experiment.lambda_im_max", f(x.lambda_im_max)),
        ];
        out.sort_by(|a, b| a.0.cmp(b.0));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The resolved configuration as parseable text.
    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn delta_assignment() {
        let c = parse_config("rheology.delta = 1e-9").unwrap();
        assert_eq!(c.rheology.delta, 1e-9);
    }

    #[test]
    fn small_grid_is_a_range_error() {
        match parse_config("grid.nx = 2") {
            Err(ConfigError::Range { key, .. }) => assert_eq!(key, "grid.nx"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "grid.nx = 9\n\nno equals sign\n";
        assert_eq!(
            parse_config(text),
            Err(ConfigError::Parse {
                line: 3,
                msg: "expected 'key = value', got 'no equals sign'".into()
            })
        );
        assert!(matches!(
            parse_config("grid.nx = 9\ngrid.nz = 4"),
            Err(ConfigError::UnknownKey { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("grid.nx = 9\ngrid.nx = 11"),
            Err(ConfigError::Duplicate { line: 2, first: 1, .. })
        ));
        assert!(matches!(
            parse_config("grid.nx = 9.5"),
            Err(ConfigError::Type { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("experiment.heatmaps = 1"),
            Err(ConfigError::Type { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("rheology.e = 1e"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("rheology.variant = cubic"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn value_kinds() {
        let c = parse_config(
            "experiment.output_dir = \"runs/a b\" # trailing\n\
             experiment.heatmaps = true\n\
             stepper.scheme = picard\n\
             rheology.variant = min-cap\n\
             rheology.c_cor = -0.5\n\
             grid.lx = 2\n",
        )
        .unwrap();
        assert_eq!(c.experiment.output_dir, PathBuf::from("runs/a b"));
        assert!(c.experiment.heatmaps);
        assert_eq!(c.stepper.scheme, Scheme::Picard);
        assert_eq!(c.rheology.variant, Regularization::MinCap);
        assert_eq!(c.rheology.c_cor, -0.5);
        assert_eq!(c.grid.lx, 2.0);
        assert!(parse_config("experiment.output_dir = a b").is_err());
    }

    #[test]
    fn caps_follow_strength_and_axis_ratio_unless_set() {
        let c = parse_config("rheology.p_star = 2\nrheology.e = 1.5").unwrap();
        assert_eq!(c.rheology.zeta_max, 5e8);
        assert_eq!(c.rheology.eta_max, 5e8 / 2.25);
        let c = parse_config("rheology.eta_max = 3\nrheology.zeta_max = 7").unwrap();
        assert_eq!((c.rheology.zeta_max, c.rheology.eta_max), (7.0, 3.0));
    }

    #[test]
    fn physical_range_violations() {
        for text in [
            "rheology.delta = 0",
            "rheology.e = -2",
            "stepper.dt = 0",
            "equilibrium.a_star = 1.5",
            "equilibrium.h_star = 0.01",
            "experiment.n_samples = 0",
            "experiment.lambda_re_min = 3\nexperiment.lambda_re_max = 1",
        ] {
            assert!(
                matches!(parse_config(text), Err(ConfigError::Range { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn order_independent() {
        let a = parse_config("grid.nx = 9\nrheology.delta = 1e-8\nexperiment.seed = 4").unwrap();
        let b = parse_config("experiment.seed = 4\ngrid.nx = 9\nrheology.delta = 1e-8").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn render_round_trips() {
        let c = parse_config(
            "rheology.delta = 3.3e-7\ngrid.ny = 5\nstepper.scheme = picard\nexperiment.seed = 11",
        )
        .unwrap();
        assert_eq!(parse_config(&c.render()).unwrap(), c);
    }
}
