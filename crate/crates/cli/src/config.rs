//! Flat `key=value` run configuration with flag overrides.
//!
//! The format is a plain list of `key=value` lines with `#` comments;
//! command-line flags override file entries. Every numeric field is
//! validated before any computation starts, and unknown keys are rejected
//! with the offending key named.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("bad config line `{0}` (expected key=value)")]
    BadLine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Drift,
    DefectOrder,
    SymplecticCheck,
    Stability,
    Cfl,
    SpectrumCheck,
    Convergence,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "drift" => Command::Drift,
            "defect-order" => Command::DefectOrder,
            "symplectic-check" => Command::SymplecticCheck,
            "stability" => Command::Stability,
            "cfl" => Command::Cfl,
            "spectrum-check" => Command::SpectrumCheck,
            "convergence" => Command::Convergence,
            other => return Err(ConfigError::UnknownCommand(other.into())),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Drift => "drift",
            Command::DefectOrder => "defect-order",
            Command::SymplecticCheck => "symplectic-check",
            Command::Stability => "stability",
            Command::Cfl => "cfl",
            Command::SpectrumCheck => "spectrum-check",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitChoice {
    Bump,
    Mode,
    Noise,
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub k: Option<usize>,
    pub delta_x: f64,
    pub lambda: i8,
    pub r: u32,
    pub h: Option<f64>,
    pub h_values: Option<Vec<f64>>,
    pub t_final: Option<f64>,
    pub epsilon: Option<f64>,
    pub kappa: Option<f64>,
    pub n_order: u32,
    pub eps_tilde: f64,
    pub fp_tol: f64,
    pub max_iters: usize,
    pub ref_tol: f64,
    pub seed: u64,
    pub init: InitChoice,
    pub init_scale: f64,
    pub mode_j: Option<usize>,
    pub stride: u64,
    pub fd_step: f64,
    pub step_cap: u64,
    /// Canonical key=value view of everything above, defaults included;
    /// re-running from this map reproduces the study bit for bit.
    pub resolved: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "K",
    "delta_x",
    "lambda",
    "r",
    "h",
    "h_values",
    "T",
    "epsilon",
    "kappa",
    "N",
    "eps_tilde",
    "fp_tol",
    "max_iters",
    "ref_tol",
    "seed",
    "init",
    "init_scale",
    "mode_j",
    "stride",
    "fd_step",
    "step_cap",
];

fn invalid(key: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

struct Raw(BTreeMap<String, String>);

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| invalid(key, "not a number")))
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.f64(key)? {
            Some(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
            Some(_) => Err(invalid(key, "must be a positive finite real")),
            None => Ok(None),
        }
    }

    fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| invalid(key, "not a valid integer")))
            .transpose()
    }
}

/// Parses an optional `key=value` file body plus override pairs into a
/// validated [`RunConfig`]. Overrides win over file entries.
pub fn parse_config(
    file_text: Option<&str>,
    overrides: &[(String, String)],
) -> Result<RunConfig, ConfigError> {
    let mut raw = BTreeMap::new();
    if let Some(text) = file_text {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::BadLine(line.into()))?;
            raw.insert(key.trim().to_string(), value.trim().to_string());
        }
    }
    for (key, value) in overrides {
        raw.insert(key.clone(), value.clone());
    }
    for key in raw.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
    }
    let raw = Raw(raw);

    let command = Command::parse(
        raw.get("command")
            .ok_or(ConfigError::MissingKey("command".into()))?,
    )?;

    use Command::*;
    let needs_grid = !matches!(command, Cfl);
    let needs_model = !matches!(command, Cfl | SpectrumCheck);
    let needs_h = matches!(command, Simulate | Drift | SymplecticCheck | Stability);
    let needs_sweep = matches!(command, DefectOrder | Convergence);
    let needs_t = matches!(command, Simulate | Drift | Convergence);

    let k = raw.integer::<usize>("K")?;
    if needs_grid && k.is_none() {
        return Err(ConfigError::MissingKey("K".into()));
    }
    if let Some(k) = k {
        if k < 1 {
            return Err(invalid("K", "must be >= 1"));
        }
    }
    let delta_x = raw
        .positive("delta_x")?
        .ok_or(ConfigError::MissingKey("delta_x".into()))?;

    let lambda = match raw.integer::<i8>("lambda")? {
        Some(v) if matches!(v, -1 | 0 | 1) => v,
        Some(_) => return Err(invalid("lambda", "must be -1, 0 or +1")),
        None if needs_model => return Err(ConfigError::MissingKey("lambda".into())),
        None => 1,
    };
    let r = match raw.integer::<u32>("r")? {
        Some(v) if v >= 1 => v,
        Some(_) => return Err(invalid("r", "must be >= 1")),
        None if needs_model || matches!(command, Cfl) => {
            return Err(ConfigError::MissingKey("r".into()))
        }
        None => 1,
    };

    let h = raw.positive("h")?;
    if needs_h && h.is_none() {
        return Err(ConfigError::MissingKey("h".into()));
    }

    let h_values = raw
        .get("h_values")
        .map(|v| -> Result<Vec<f64>, ConfigError> {
            let parsed: Result<Vec<f64>, _> =
                v.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let list = parsed.map_err(|_| invalid("h_values", "not a comma-separated list"))?;
            if list.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(invalid("h_values", "entries must be positive"));
            }
            Ok(list)
        })
        .transpose()?;
    if needs_sweep && h_values.is_none() {
        return Err(ConfigError::MissingKey("h_values".into()));
    }

    let t_final = raw.positive("T")?;
    if needs_t && t_final.is_none() {
        return Err(ConfigError::MissingKey("T".into()));
    }

    let epsilon = raw.positive("epsilon")?;
    let kappa = match raw.f64("kappa")? {
        Some(v) if v > 0.0 && v < 0.5 => Some(v),
        Some(_) => return Err(invalid("kappa", "must lie in (0, 1/2)")),
        None => None,
    };
    if matches!(command, Stability) {
        if epsilon.is_none() {
            return Err(ConfigError::MissingKey("epsilon".into()));
        }
        if kappa.is_none() {
            return Err(ConfigError::MissingKey("kappa".into()));
        }
    }

    let n_order = match raw.integer::<u32>("N")? {
        Some(v) if v <= 1 => v,
        Some(_) => return Err(invalid("N", "must be 0 or 1")),
        None if matches!(command, Cfl) => return Err(ConfigError::MissingKey("N".into())),
        None => 0,
    };

    let eps_tilde = match raw.f64("eps_tilde")? {
        Some(v) if v > 0.0 && v < std::f64::consts::PI => v,
        Some(_) => return Err(invalid("eps_tilde", "must lie in (0, pi)")),
        None => std::f64::consts::FRAC_PI_2,
    };
    let fp_tol = raw.positive("fp_tol")?.unwrap_or(1e-13);
    let max_iters = match raw.integer::<usize>("max_iters")? {
        Some(v) if v >= 1 => v,
        Some(_) => return Err(invalid("max_iters", "must be >= 1")),
        None => 200,
    };
    let ref_tol = raw.positive("ref_tol")?.unwrap_or(1e-12);
    let seed = raw.integer::<u64>("seed")?.unwrap_or(0);
    let init = match raw.get("init") {
        Some("bump") | None => InitChoice::Bump,
        Some("mode") => InitChoice::Mode,
        Some("noise") => InitChoice::Noise,
        Some(_) => return Err(invalid("init", "must be bump, mode or noise")),
    };
    let init_scale = raw.positive("init_scale")?.unwrap_or(0.5);
    let mode_j = raw.integer::<usize>("mode_j")?;
    if let (Some(j), Some(k)) = (mode_j, k) {
        if j < 1 || j > 2 * k + 1 {
            return Err(invalid("mode_j", "must lie in 1..=2K+1"));
        }
    }
    let stride = raw.integer::<u64>("stride")?.unwrap_or(0);
    let fd_step = raw.positive("fd_step")?.unwrap_or(1e-5);
    let step_cap = raw.integer::<u64>("step_cap")?.unwrap_or(10_000_000);

    // Canonical resolved view for the manifest.
    let mut resolved = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        resolved.insert(k.to_string(), v);
    };
    put("command", command.as_str().into());
    if let Some(k) = k {
        put("K", k.to_string());
    }
    put("delta_x", delta_x.to_string());
    if needs_model {
        put("lambda", lambda.to_string());
        put("r", r.to_string());
        put("init", match init {
            InitChoice::Bump => "bump".into(),
            InitChoice::Mode => "mode".into(),
            InitChoice::Noise => "noise".into(),
        });
        put("init_scale", init_scale.to_string());
        put("seed", seed.to_string());
        if let Some(j) = mode_j {
            put("mode_j", j.to_string());
        }
        put("fp_tol", fp_tol.to_string());
        put("max_iters", max_iters.to_string());
        put("ref_tol", ref_tol.to_string());
    }
    if matches!(command, Cfl) {
        put("r", r.to_string());
    }
    if let Some(h) = h {
        put("h", h.to_string());
    }
    if let Some(hs) = &h_values {
        put(
            "h_values",
            hs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    if let Some(t) = t_final {
        put("T", t.to_string());
    }
    if let Some(e) = epsilon {
        put("epsilon", e.to_string());
    }
    if let Some(kp) = kappa {
        put("kappa", kp.to_string());
    }
    put("N", n_order.to_string());
    put("eps_tilde", eps_tilde.to_string());
    if matches!(command, Simulate | Drift | Stability) {
        put("stride", stride.to_string());
    }
    if matches!(command, SymplecticCheck) {
        put("fd_step", fd_step.to_string());
    }
    if matches!(command, Stability) {
        put("step_cap", step_cap.to_string());
    }

    Ok(RunConfig {
        command,
        k,
        delta_x,
        lambda,
        r,
        h,
        h_values,
        t_final,
        epsilon,
        kappa,
        n_order,
        eps_tilde,
        fp_tol,
        max_iters,
        ref_tol,
        seed,
        init,
        init_scale,
        mode_j,
        stride,
        fd_step,
        step_cap,
        resolved,
    })
}
