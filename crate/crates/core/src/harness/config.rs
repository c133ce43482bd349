//! `key = value` configuration files for runs and benches.
//!
//! Keys mirror the command-line flags with `-` written as `_` (both spellings
//! are accepted). Lines starting with `#` and trailing `# ...` are comments.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::ConfigError;
use crate::models::FaultSpec;
use crate::newton::NewtonSettings;
use crate::step_control::Method;
use crate::system::ControllerConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SystemSpec {
    Analytic,
    Linear(f64),
    /// Bundled fixture name or path to a fixture file.
    Swing(String),
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSpec::Analytic => f.write_str("analytic"),
            SystemSpec::Linear(l) => write!(f, "linear:{l}"),
            SystemSpec::Swing(name) => write!(f, "swing:{name}"),
        }
    }
}

impl FromStr for SystemSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "analytic" if arg.is_empty() => Ok(SystemSpec::Analytic),
            "linear" => arg
                .parse()
                .map(SystemSpec::Linear)
                .map_err(|_| ConfigError::Invalid(format!("bad lambda in `{s}`"))),
            "swing" if !arg.is_empty() => Ok(SystemSpec::Swing(arg.to_string())),
            _ => Err(ConfigError::Invalid(format!(
                "unknown system `{s}` (expected analytic, linear:<lambda> or swing:<fixture>)"
            ))),
        }
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub method: Method,
    pub system: SystemSpec,
    pub fault: Option<FaultSpec>,
    pub t_end: f64,
    /// Fixed step, or initial step for the variable-step methods; defaults to
    /// `h_min`.
    pub h0: Option<f64>,
    pub controller: ControllerConfig,
    pub newton: NewtonSettings,
    pub out: Option<PathBuf>,
    /// Accepted for compatibility; every algorithm here is deterministic.
    pub seed: Option<u64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            method: Method::Pcm,
            system: SystemSpec::Analytic,
            fault: None,
            t_end: 10.0,
            h0: None,
            controller: ControllerConfig::default(),
            newton: NewtonSettings::default(),
            out: None,
            seed: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Invalid(format!("bad boolean `{value}` for `{key}`"))),
    }
}

pub(crate) fn normalise_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

/// Splits a config text into `(line, key, value)` triples.
pub(crate) fn key_values(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: n + 1,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        out.push((n + 1, normalise_key(key), value.trim().to_string()));
    }
    Ok(out)
}

impl RunSettings {
    /// Sets one option by its config key. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        let c = &mut self.controller;
        match normalise_key(key).as_str() {
            "method" => self.method = value.parse()?,
            "system" => self.system = value.parse()?,
            "fault" => {
                self.fault = match value {
                    "" | "none" => None,
                    v => Some(v.parse()?),
                }
            }
            "t_end" => self.t_end = parse_num(key, value)?,
            "h0" => self.h0 = Some(parse_num(key, value)?),
            "h_min" => c.h_min = parse_num(key, value)?,
            "h_max" => c.h_max = parse_num(key, value)?,
            "g_low" => c.g_low = parse_num(key, value)?,
            "g_high" => c.g_high = parse_num(key, value)?,
            "iters_low" => c.iters_low = parse_num(key, value)?,
            "iters_high" => c.iters_high = parse_num(key, value)?,
            "grow_factor" => c.grow_factor = parse_num(key, value)?,
            "shrink_factor" => c.shrink_factor = parse_num(key, value)?,
            "reject_on_high_error" => c.reject_on_high_error = parse_bool(key, value)?,
            "corrector_iterations" => c.corrector_iterations = parse_num(key, value)?,
            "newton_tolerance" => self.newton.tolerance = parse_num(key, value)?,
            "newton_max_iterations" => self.newton.max_iterations = parse_num(key, value)?,
            "fd_epsilon" => self.newton.fd_epsilon = parse_num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse_num(key, value)?),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_config_str(text: &str) -> Result<Self, ConfigError> {
        let mut settings = Self::default();
        for (line, key, value) in key_values(text)? {
            let known = settings.set(&key, &value).map_err(|e| ConfigError::Parse {
                line,
                message: e.to_string(),
            })?;
            if !known {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
        }
        Ok(settings)
    }

    /// Serialises every setting; floats use shortest round-trip formatting so
    /// parsing the output reproduces the values bit for bit.
    pub fn to_config_string(&self) -> String {
        let c = &self.controller;
        let n = &self.newton;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("method", self.method.to_string());
        put("system", self.system.to_string());
        if let Some(f) = &self.fault {
            put("fault", format!("{},{},{}", f.bus, f.start, f.duration));
        }
        put("t_end", self.t_end.to_string());
        if let Some(h0) = self.h0 {
            put("h0", h0.to_string());
        }
        put("h_min", c.h_min.to_string());
        put("h_max", c.h_max.to_string());
        put("g_low", c.g_low.to_string());
        put("g_high", c.g_high.to_string());
        put("iters_low", c.iters_low.to_string());
        put("iters_high", c.iters_high.to_string());
        put("grow_factor", c.grow_factor.to_string());
        put("shrink_factor", c.shrink_factor.to_string());
        put("reject_on_high_error", c.reject_on_high_error.to_string());
        put("corrector_iterations", c.corrector_iterations.to_string());
        put("newton_tolerance", n.tolerance.to_string());
        put("newton_max_iterations", n.max_iterations.to_string());
        put("fd_epsilon", n.fd_epsilon.to_string());
        if let Some(out) = &self.out {
            put("out", out.display().to_string());
        }
        if let Some(seed) = self.seed {
            put("seed", seed.to_string());
        }
        s
    }

    /// Step handed to the driver: the fixed step or the initial step.
    pub fn initial_step(&self) -> f64 {
        self.h0.unwrap_or(self.controller.h_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip_bit_exactly() {
        let settings = RunSettings::default();
        let text = settings.to_config_string();
        let back = RunSettings::from_config_str(&text).unwrap();
        assert_eq!(back, settings);
        assert_eq!(back.controller.g_low.to_bits(), 5e-5f64.to_bits());
    }

    #[test]
    fn parses_comments_and_dashes() {
        let text = "# run\nmethod = vitm  # baseline\nh-max = 0.08\nsystem = swing:wscc9\nfault = 7,1.0,0.1\n";
        let s = RunSettings::from_config_str(text).unwrap();
        assert_eq!(s.method, Method::Vitm);
        assert_eq!(s.controller.h_max, 0.08);
        assert_eq!(s.system, SystemSpec::Swing("wscc9".into()));
        assert_eq!(s.fault.unwrap().bus, 7);
    }

    #[test]
    fn reports_line_of_bad_entries() {
        let err = RunSettings::from_config_str("method = pcm\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
        let err = RunSettings::from_config_str("t_end = soon\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
        let err = RunSettings::from_config_str("no equals sign\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
    }

    #[test]
    fn system_specs() {
        assert_eq!("analytic".parse::<SystemSpec>().unwrap(), SystemSpec::Analytic);
        assert_eq!("linear:-600".parse::<SystemSpec>().unwrap(), SystemSpec::Linear(-600.0));
        assert!("linear:abc".parse::<SystemSpec>().is_err());
        assert!("swing".parse::<SystemSpec>().is_err());
        assert!("lorenz".parse::<SystemSpec>().is_err());
    }

    proptest! {
        #[test]
        fn controller_values_round_trip(
            h_min in 1e-6f64..1.0, span in 0.0f64..10.0, g_low in 1e-12f64..1e-3,
            grow in 1.0001f64..4.0, shrink in 0.01f64..0.9999, tol in 1e-14f64..1e-3,
        ) {
            let mut s = RunSettings::default();
            s.controller.h_min = h_min;
            s.controller.h_max = h_min + span;
            s.controller.g_low = g_low;
            s.controller.g_high = g_low * 10.0;
            s.controller.grow_factor = grow;
            s.controller.shrink_factor = shrink;
            s.newton.tolerance = tol;
            s.h0 = Some(h_min);
            let back = RunSettings::from_config_str(&s.to_config_string()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
