//! Scenario files: flat `key = value` sections `[plant]`, `[gains]`,
//! `[dither]` and `[sim]`. `#` starts a comment. Vectors are comma-separated,
//! the Hessian is given by repeated `hessian_row` keys, and repeated
//! `initial_theta` keys add starting points.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use thiserror::Error;

use crate::dynamics::{AlgorithmConfig, DynamicsError, Variant};
use crate::integrate::{default_dt, IntegrateError, IntegrationSettings, DEFAULT_GAMMA_GUARD};
use crate::problem::{validate_plant, LinearBarrier, PlantModel, ProblemError, QuadraticObjective};
use crate::signals::{DitherConfig, SignalError};

pub const DEFAULT_WARMUP_REL_TOL: f64 = 1e-4;
pub const DEFAULT_WARMUP_HORIZON: f64 = 200.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid plant: {0}")]
    Plant(#[from] ProblemError),
    #[error("invalid dither: {0}")]
    Signal(#[from] SignalError),
    #[error("invalid gains: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("invalid simulation settings: {0}")]
    Settings(#[from] IntegrateError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    /// Configuration for the first entry of `c_values`.
    pub config: AlgorithmConfig,
    /// Barrier rates to sweep; each produces its own set of runs.
    pub c_values: Vec<f64>,
    pub initial_thetas: Vec<DVector<f64>>,
    pub settings: IntegrationSettings,
    pub warmup: bool,
    pub warmup_rel_tol: f64,
    pub warmup_horizon: f64,
    /// End runs on a whole number of common dither periods.
    pub snap_to_period: bool,
    pub variants_to_run: Vec<Variant>,
    pub include_reduced: bool,
    pub include_average: bool,
}

impl Scenario {
    pub fn configs(&self) -> Vec<AlgorithmConfig> {
        self.c_values
            .iter()
            .map(|&c| self.config.with_c(c).expect("c validated at parse time"))
            .collect()
    }

    /// Settings for one run at `cfg`, snapped if requested.
    pub fn run_settings(&self, cfg: &AlgorithmConfig) -> IntegrationSettings {
        if self.snap_to_period {
            self.settings.snapped(cfg)
        } else {
            self.settings
        }
    }

    pub fn warmup_settings(&self) -> IntegrationSettings {
        IntegrationSettings {
            t_end: self.warmup_horizon,
            ..self.settings
        }
    }
}

const SECTIONS: [(&str, &[&str]); 4] = [
    ("plant", &["j_star", "theta_star", "hessian_row", "h0", "h1"]),
    ("gains", &["k", "c", "delta", "omega_f"]),
    ("dither", &["amplitude", "omega", "frequencies"]),
    (
        "sim",
        &[
            "initial_theta",
            "t_end",
            "dt",
            "record_stride",
            "gamma_guard",
            "warmup",
            "warmup_rel_tol",
            "warmup_horizon",
            "snap_to_period",
            "variants",
            "include_reduced",
            "include_average",
        ],
    ),
];
const REPEATABLE: [&str; 2] = ["hessian_row", "initial_theta"];

struct Entry {
    line: usize,
    value: String,
}

struct Raw {
    entries: BTreeMap<(String, String), Vec<Entry>>,
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

impl Raw {
    fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries: BTreeMap<(String, String), Vec<Entry>> = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line, "unterminated section header"))?
                    .trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|(s, _)| *s == name)
                        .map(|(s, _)| *s)
                        .ok_or_else(|| parse_err(line, format!("unknown section [{name}]")))?,
                );
                continue;
            }
            let sec = section.ok_or_else(|| parse_err(line, "key outside of a section"))?;
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(parse_err(line, format!("unknown key `{key}` in [{sec}]")));
            }
            if value.is_empty() {
                return Err(parse_err(line, format!("empty value for `{key}`")));
            }
            let slot = entries.entry((sec.to_string(), key.to_string())).or_default();
            if !slot.is_empty() && !REPEATABLE.contains(&key) {
                return Err(parse_err(line, format!("duplicate key `{key}`")));
            }
            slot.push(Entry {
                line,
                value: value.to_string(),
            });
        }
        Ok(Self { entries })
    }

    fn all(&self, sec: &str, key: &str) -> &[Entry] {
        self.entries
            .get(&(sec.to_string(), key.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn get(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.all(sec, key).first()
    }

    fn require(&self, sec: &str, key: &str) -> Result<&Entry, ScenarioError> {
        self.get(sec, key)
            .ok_or_else(|| ScenarioError::Invalid(format!("missing `{key}` in [{sec}]")))
    }

    fn scalar(&self, sec: &str, key: &str) -> Result<f64, ScenarioError> {
        let e = self.require(sec, key)?;
        parse_scalar(e.line, &e.value)
    }

    fn scalar_or(&self, sec: &str, key: &str, default: f64) -> Result<f64, ScenarioError> {
        match self.get(sec, key) {
            Some(e) => parse_scalar(e.line, &e.value),
            None => Ok(default),
        }
    }

    fn flag_or(&self, sec: &str, key: &str, default: bool) -> Result<bool, ScenarioError> {
        match self.get(sec, key) {
            Some(e) => match e.value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(parse_err(e.line, format!("expected true or false, got `{other}`"))),
            },
            None => Ok(default),
        }
    }
}

fn parse_scalar(line: usize, s: &str) -> Result<f64, ScenarioError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn parse_list(line: usize, s: &str) -> Result<Vec<f64>, ScenarioError> {
    s.split(',').map(|p| parse_scalar(line, p)).collect()
}

/// Exact rational from `p`, `p/q`, or a plain decimal such as `0.75`.
pub fn parse_ratio(s: &str) -> Option<Rational64> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().ok()?;
        let q: i64 = q.trim().parse().ok()?;
        return (q != 0).then(|| Rational64::new(p, q));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 15 {
        return None;
    }
    let negative = int.starts_with('-');
    let int_val: i64 = if int.is_empty() || int == "-" {
        0
    } else {
        int.parse().ok()?
    };
    let scale = 10i64.checked_pow(frac.len() as u32)?;
    let frac_val: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let mag = int_val.abs().checked_mul(scale)?.checked_add(frac_val)?;
    Some(Rational64::new(if negative { -mag } else { mag }, scale))
}

fn parse_variants(line: usize, s: &str) -> Result<Vec<Variant>, ScenarioError> {
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim) {
        let v = Variant::parse(name)
            .ok_or_else(|| parse_err(line, format!("unknown variant `{name}`")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    parse_scenario_str(&name, &text)
}

pub fn parse_scenario_str(name: &str, text: &str) -> Result<Scenario, ScenarioError> {
    let raw = Raw::parse(text)?;

    let theta_e = raw.require("plant", "theta_star")?;
    let theta_star = DVector::from_vec(parse_list(theta_e.line, &theta_e.value)?);
    let n = theta_star.len();
    let rows = raw.all("plant", "hessian_row");
    if rows.len() != n {
        return Err(ScenarioError::Invalid(format!(
            "expected {n} hessian_row entries, found {}",
            rows.len()
        )));
    }
    let mut hessian = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let vals = parse_list(row.line, &row.value)?;
        if vals.len() != n {
            return Err(parse_err(row.line, format!("hessian_row needs {n} entries")));
        }
        for (j, v) in vals.into_iter().enumerate() {
            hessian[(i, j)] = v;
        }
    }
    let h1_e = raw.require("plant", "h1")?;
    let plant = validate_plant(
        QuadraticObjective {
            j_star: raw.scalar_or("plant", "j_star", 0.0)?,
            hessian,
            theta_star,
        },
        LinearBarrier {
            h0: raw.scalar("plant", "h0")?,
            h1: DVector::from_vec(parse_list(h1_e.line, &h1_e.value)?),
        },
    )?;

    let freq_e = raw.require("dither", "frequencies")?;
    let ratios = freq_e
        .value
        .split(',')
        .map(|p| {
            parse_ratio(p).ok_or_else(|| parse_err(freq_e.line, format!("`{}` is not a ratio", p.trim())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ratios.len() != n {
        return Err(parse_err(
            freq_e.line,
            format!("need one frequency per parameter ({n}), found {}", ratios.len()),
        ));
    }
    let dither = DitherConfig::new(
        raw.scalar("dither", "amplitude")?,
        raw.scalar("dither", "omega")?,
        ratios,
    )?;

    let c_e = raw.require("gains", "c")?;
    let c_values = parse_list(c_e.line, &c_e.value)?;
    let variants = match raw.get("sim", "variants") {
        Some(e) => parse_variants(e.line, &e.value)?,
        None => vec![Variant::Asfes],
    };
    let config = AlgorithmConfig::new(
        raw.scalar("gains", "k")?,
        c_values[0],
        raw.scalar("gains", "delta")?,
        raw.scalar("gains", "omega_f")?,
        dither,
        Variant::Asfes,
    )?;
    for &c in &c_values[1..] {
        config.with_c(c)?;
    }
    for &v in &variants {
        config.with_variant(v)?;
    }
    config.check_plant(&plant)?;

    let mut initial_thetas = Vec::new();
    for e in raw.all("sim", "initial_theta") {
        let th = DVector::from_vec(parse_list(e.line, &e.value)?);
        if th.len() != n {
            return Err(parse_err(e.line, format!("initial_theta needs {n} entries")));
        }
        initial_thetas.push(th);
    }
    if initial_thetas.is_empty() {
        return Err(ScenarioError::Invalid("missing `initial_theta` in [sim]".into()));
    }

    let stride = raw.scalar_or("sim", "record_stride", 1.0)?;
    if !(stride >= 1.0 && stride.fract() == 0.0) {
        let line = raw.get("sim", "record_stride").map_or(0, |e| e.line);
        return Err(parse_err(line, "record_stride must be a positive integer"));
    }
    let settings = IntegrationSettings {
        dt: raw.scalar_or("sim", "dt", default_dt(&config))?,
        t_end: raw.scalar("sim", "t_end")?,
        record_stride: stride as usize,
        gamma_guard: raw.scalar_or("sim", "gamma_guard", DEFAULT_GAMMA_GUARD)?,
    };
    if !(settings.gamma_guard > 0.0) {
        return Err(ScenarioError::Invalid("gamma_guard must be positive".into()));
    }
    let warmup_rel_tol = raw.scalar_or("sim", "warmup_rel_tol", DEFAULT_WARMUP_REL_TOL)?;
    let warmup_horizon = raw.scalar_or("sim", "warmup_horizon", DEFAULT_WARMUP_HORIZON)?;
    if !(warmup_rel_tol > 0.0) || !(warmup_horizon > 0.0) {
        return Err(ScenarioError::Invalid(
            "warmup_rel_tol and warmup_horizon must be positive".into(),
        ));
    }

    Ok(Scenario {
        name: name.to_string(),
        plant,
        config,
        c_values,
        initial_thetas,
        settings,
        warmup: raw.flag_or("sim", "warmup", true)?,
        warmup_rel_tol,
        warmup_horizon,
        snap_to_period: raw.flag_or("sim", "snap_to_period", false)?,
        variants_to_run: variants,
        include_reduced: raw.flag_or("sim", "include_reduced", false)?,
        include_average: raw.flag_or("sim", "include_average", false)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = "
[plant]
j_star = 0
theta_star = 0
hessian_row = 0.1
h0 = -1
h1 = -1   # gradient of the barrier

[gains]
k = 0.3
c = 0.1
delta = 1e-3
omega_f = 3

[dither]
amplitude = 0.25
omega = 200
frequencies = 1

[sim]
initial_theta = -3
t_end = 150
variants = asfes, nb_asfes, classical_es
include_reduced = true
";

    #[test]
    fn parses_scalar_example() {
        let s = parse_scenario_str("ex1", EX1).unwrap();
        assert_eq!(s.plant.dimension(), 1);
        assert_eq!(s.plant.hessian()[(0, 0)], 0.1);
        assert_eq!(s.config.k, 0.3);
        assert_eq!(s.config.delta, 1e-3);
        assert_eq!(s.config.dither.omegas(), &[200.0]);
        assert_eq!(s.c_values, vec![0.1]);
        assert_eq!(s.variants_to_run.len(), 3);
        assert!(s.warmup && s.include_reduced && !s.include_average);
        assert_eq!(s.warmup_rel_tol, 1e-4);
        assert_eq!(s.settings.t_end, 150.0);
    }

    fn replace(from: &str, to: &str) -> String {
        assert!(EX1.contains(from));
        EX1.replace(from, to)
    }

    #[test]
    fn rejects_unknown_key_with_line() {
        let err = parse_scenario_str("x", &replace("h0 = -1", "h0 = -1\nbogus = 2")).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 7, .. }), "{err}");
        let err = parse_scenario_str("x", &replace("[sim]", "[simulation]")).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { .. }));
    }

    #[test]
    fn rejects_bad_numbers_and_duplicates() {
        assert!(matches!(
            parse_scenario_str("x", &replace("k = 0.3", "k = fast")),
            Err(ScenarioError::Parse { line: 10, .. })
        ));
        assert!(matches!(
            parse_scenario_str("x", &replace("k = 0.3", "k = 0.3\nk = 0.4")),
            Err(ScenarioError::Parse { line: 11, .. })
        ));
        assert!(matches!(
            parse_scenario_str("x", &replace("k = 0.3", "k = -0.3")),
            Err(ScenarioError::Dynamics(_))
        ));
    }

    #[test]
    fn resonant_frequencies_rejected() {
        let text = "
[plant]
theta_star = 0, 0, 0
hessian_row = 1, 0, 0
hessian_row = 0, 1, 0
hessian_row = 0, 0, 1
h0 = 1
h1 = 1, 0, 0
[gains]
k = 1
c = 1
delta = 1e-3
omega_f = 1
[dither]
amplitude = 0.1
omega = 10
frequencies = 1, 2, 3
[sim]
initial_theta = 0, 0, 0
t_end = 1
";
        let err = parse_scenario_str("x", text).unwrap_err();
        assert!(matches!(err, ScenarioError::Signal(SignalError::ResonantTriple(..))), "{err}");
        let ok = parse_scenario_str("x", &text.replace("1, 2, 3", "1, 2.5, 9/2")).unwrap();
        assert_eq!(ok.config.dither.omegas(), &[10.0, 25.0, 45.0]);
    }

    #[test]
    fn rejects_invalid_plant() {
        assert!(matches!(
            parse_scenario_str("x", &replace("hessian_row = 0.1", "hessian_row = -0.1")),
            Err(ScenarioError::Plant(ProblemError::NonPositiveDefiniteHessian { .. }))
        ));
        assert!(matches!(
            parse_scenario_str("x", &replace("h1 = -1", "h1 = 0")),
            Err(ScenarioError::Plant(ProblemError::ZeroBarrierGradient))
        ));
    }

    #[test]
    fn newton_needs_scalar_plant() {
        let text = "
[plant]
theta_star = 0, 0
hessian_row = 2, 0
hessian_row = 0, 2
h0 = -1
h1 = 1, 1
[gains]
k = 0.1
c = 1, 0.1
delta = 1e-3
omega_f = 3
[dither]
amplitude = 0.25
omega = 1
frequencies = 75, 100
[sim]
initial_theta = 2, 2
initial_theta = -1, -1
t_end = 60
";
        let s = parse_scenario_str("x", text).unwrap();
        assert_eq!(s.c_values, vec![1.0, 0.1]);
        assert_eq!(s.initial_thetas.len(), 2);
        assert_eq!(s.configs()[1].c, 0.1);
        let bad = text.replace("t_end = 60", "t_end = 60\nvariants = nb_asfes");
        assert!(matches!(
            parse_scenario_str("x", &bad),
            Err(ScenarioError::Dynamics(DynamicsError::NotScalar(2)))
        ));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("3"), Some(Rational64::from_integer(3)));
        assert_eq!(parse_ratio("3/4"), Some(Rational64::new(3, 4)));
        assert_eq!(parse_ratio("0.75"), Some(Rational64::new(3, 4)));
        assert_eq!(parse_ratio("1/0"), None);
        assert_eq!(parse_ratio("x"), None);
        assert_eq!(parse_ratio("1e3"), None);
    }
}
