//! Line-oriented scenario configuration.
//!
//! ```text
//! # comment
//! plant.E = 150
//! pwm.f_chop = 5000
//! sosml.preset = certified
//! noise.kind = uniform
//! ```
//!
//! Keys are dotted, one `key = value` per line, `#` starts a comment. Unknown
//! and repeated keys are errors. Missing keys take the values of
//! [`ScenarioConfig::nominal`].

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::converter::{ConverterParams, PlantState};
use crate::error::FlycapError;
use crate::luenberger::LuenbergerGains;
use crate::sim::{NoiseKind, ScenarioConfig};
use crate::sosml::SosmlParams;
use crate::switching::PwmConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line of the offending entry, when there is one.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

const FIXED_KEYS: &[&str] = &[
    "plant.p",
    "plant.E",
    "plant.R",
    "plant.L",
    "pwm.f_chop",
    "pwm.duty",
    "pwm.phase_shift",
    "pwm.update_period",
    "sosml.enabled",
    "sosml.preset",
    "sosml.lambda0",
    "sosml.alpha0",
    "sosml.k_lambda0",
    "sosml.k_alpha0",
    "sosml.k",
    "sosml.kappa",
    "sosml.l_init",
    "sosml.eps_dz",
    "luenberger.enabled",
    "luenberger.preset",
    "luenberger.g",
    "sim.t_end",
    "sim.dt",
    "init.I",
    "observer.I",
    "noise.kind",
    "noise.amplitude",
    "noise.seed",
    "load.t_switch",
    "load.R_factor",
    "metrics.settle_threshold",
    "metrics.steady_from",
];

/// Keys with a numeric suffix and the smallest allowed index.
const INDEXED_KEYS: &[(&str, usize)] = &[
    ("plant.c", 1),
    ("pwm.duty", 1),
    ("luenberger.kappa", 0),
    ("init.Vc", 1),
    ("observer.Vc", 1),
];

fn is_known(key: &str) -> bool {
    if FIXED_KEYS.contains(&key) {
        return true;
    }
    INDEXED_KEYS.iter().any(|(prefix, min)| {
        key.strip_prefix(prefix)
            .filter(|rest| rest.len() <= 3 && rest.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|rest| rest.parse::<usize>().ok().filter(|n| n.to_string() == rest))
            .is_some_and(|n| n >= *min)
    })
}

struct Entries<'a> {
    map: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|&(l, _)| l)
    }

    fn raw(&self, key: &str) -> Option<(usize, &'a str)> {
        self.map.get(key).copied()
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(ConfigError {
                line: Some(line),
                message: format!("`{key}` expects a finite number, got `{v}`"),
            }),
        }
    }

    fn float_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.float(key)?.unwrap_or(default))
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.parse::<u64>().map(Some).map_err(|_| ConfigError {
            line: Some(line),
            message: format!("`{key}` expects a non-negative integer, got `{v}`"),
        })
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(default);
        };
        match v {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(ConfigError {
                line: Some(line),
                message: format!("`{key}` expects true or false, got `{v}`"),
            }),
        }
    }

    fn choice(&self, key: &str, options: &[&str]) -> Result<Option<&'a str>, ConfigError> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        if options.contains(&v) {
            Ok(Some(v))
        } else {
            Err(ConfigError {
                line: Some(line),
                message: format!("`{key}` must be one of {}, got `{v}`", options.join(", ")),
            })
        }
    }

    /// Rejects indexed keys beyond the configured dimension.
    fn check_index_range(&self, prefix: &str, max: usize) -> Result<(), ConfigError> {
        let worst = self
            .map
            .iter()
            .filter(|(key, _)| {
                key.strip_prefix(prefix)
                    .and_then(|r| r.parse::<usize>().ok())
                    .is_some_and(|n| n > max)
            })
            .min_by_key(|(_, &(line, _))| line);
        match worst {
            Some((key, &(line, _))) => Err(ConfigError {
                line: Some(line),
                message: format!("`{key}` is out of range: at most {prefix}{max} for this converter"),
            }),
            None => Ok(()),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries<'_>, ConfigError> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line: Some(line),
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError {
                line: Some(line),
                message: "missing key before `=`".into(),
            });
        }
        if value.is_empty() {
            return Err(ConfigError {
                line: Some(line),
                message: format!("missing value for `{key}`"),
            });
        }
        if !is_known(key) {
            return Err(ConfigError {
                line: Some(line),
                message: format!("unknown key `{key}`"),
            });
        }
        if let Some((first, _)) = map.insert(key, (line, value)) {
            return Err(ConfigError {
                line: Some(line),
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
        }
    }
    Ok(Entries { map })
}

/// Parses a scenario configuration and validates it.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let e = tokenize(text)?;
    let base = ScenarioConfig::nominal();

    let p = match e.uint("plant.p")? {
        None => 3,
        Some(p) if (2..=16).contains(&p) => p as usize,
        Some(p) => {
            return Err(ConfigError {
                line: e.line("plant.p"),
                message: format!("`plant.p` must be between 2 and 16, got {p}"),
            })
        }
    };
    for prefix in ["plant.c", "init.Vc", "observer.Vc"] {
        e.check_index_range(prefix, p - 1)?;
    }
    e.check_index_range("pwm.duty", p)?;
    e.check_index_range("luenberger.kappa", 6)?;

    let ref_c = base.params.capacitances[0];
    let capacitances = (1..p)
        .map(|j| e.float_or(&format!("plant.c{j}"), ref_c))
        .collect::<Result<Vec<_>, _>>()?;
    let params = ConverterParams {
        source_voltage: e.float_or("plant.E", base.params.source_voltage)?,
        resistance: e.float_or("plant.R", base.params.resistance)?,
        inductance: e.float_or("plant.L", base.params.inductance)?,
        capacitances,
    };

    let pwm_default = PwmConfig::default_for(p);
    let duty_all = e.float_or("pwm.duty", pwm_default.duty()[0])?;
    let duty = (1..=p)
        .map(|j| e.float_or(&format!("pwm.duty{j}"), duty_all))
        .collect::<Result<Vec<_>, _>>()?;
    let update_period = match e.raw("pwm.update_period") {
        Some((_, "none")) => None,
        Some(_) => e.float("pwm.update_period")?,
        None => pwm_default.update_period(),
    };
    let pwm_line = ["pwm.f_chop", "pwm.phase_shift", "pwm.update_period", "pwm.duty"]
        .iter()
        .find_map(|k| e.line(k));
    let pwm = PwmConfig::new(
        e.float_or("pwm.f_chop", pwm_default.carrier_frequency())?,
        duty,
        e.float_or("pwm.phase_shift", pwm_default.phase_shift())?,
        update_period,
    )
    .map_err(|err| ConfigError {
        line: match &err {
            FlycapError::InvalidParameter { name, .. } => e.line(name).or(pwm_line),
            _ => pwm_line,
        },
        message: err.to_string(),
    })?;

    let sosml = if e.boolean("sosml.enabled", true)? {
        let preset = match e.choice("sosml.preset", &["published", "certified"])? {
            Some("certified") => SosmlParams::certified(),
            _ => SosmlParams::published(),
        };
        Some(SosmlParams {
            lambda0: e.float_or("sosml.lambda0", preset.lambda0)?,
            alpha0: e.float_or("sosml.alpha0", preset.alpha0)?,
            k_lambda0: e.float_or("sosml.k_lambda0", preset.k_lambda0)?,
            k_alpha0: e.float_or("sosml.k_alpha0", preset.k_alpha0)?,
            adaptation_rate: e.float_or("sosml.k", preset.adaptation_rate)?,
            kappa: e.float_or("sosml.kappa", preset.kappa)?,
            l_init: e.float_or("sosml.l_init", preset.l_init)?,
            eps_dz: e.float_or("sosml.eps_dz", preset.eps_dz)?,
        })
    } else {
        None
    };

    let luenberger = if e.boolean("luenberger.enabled", true)? {
        e.choice("luenberger.preset", &["reference"])?;
        let mut kappa = LuenbergerGains::reference().kappa;
        if let Some(g) = e.float("luenberger.g")? {
            kappa = LuenbergerGains::diagonal_family(kappa[0], g)
                .map_err(|err| ConfigError {
                    line: e.line("luenberger.g"),
                    message: err.to_string(),
                })?
                .kappa;
        }
        for (i, k) in kappa.iter_mut().enumerate() {
            if let Some(v) = e.float(&format!("luenberger.kappa{i}"))? {
                *k = v;
            }
        }
        Some(LuenbergerGains { kappa })
    } else {
        None
    };

    let x0 = PlantState::new(
        e.float_or("init.I", base.x0.current)?,
        (1..p)
            .map(|j| {
                e.float_or(
                    &format!("init.Vc{j}"),
                    base.x0.voltages.get(j - 1).copied().unwrap_or(0.0),
                )
            })
            .collect::<Result<Vec<_>, _>>()?,
        0.0,
    );
    let observer_x0 = PlantState::new(
        e.float_or("observer.I", base.observer_x0.current)?,
        (1..p)
            .map(|j| e.float_or(&format!("observer.Vc{j}"), 0.0))
            .collect::<Result<Vec<_>, _>>()?,
        0.0,
    );

    let mut noise = base.noise;
    noise.kind = match e.choice("noise.kind", &["none", "uniform", "gaussian"])? {
        Some("uniform") => NoiseKind::Uniform,
        Some("gaussian") => NoiseKind::Gaussian,
        _ => NoiseKind::None,
    };
    noise.amplitude = e.float_or("noise.amplitude", noise.amplitude)?;
    noise.seed = e.uint("noise.seed")?.unwrap_or(noise.seed);

    let mut load = base.load;
    load.t_switch = e.float_or("load.t_switch", load.t_switch)?;
    load.r_factor = e.float_or("load.R_factor", load.r_factor)?;

    let cfg = ScenarioConfig {
        params,
        pwm,
        sosml,
        luenberger,
        t_end: e.float_or("sim.t_end", base.t_end)?,
        dt: e.float_or("sim.dt", base.dt)?,
        x0,
        observer_x0,
        noise,
        load,
        settle_threshold: e.float_or("metrics.settle_threshold", base.settle_threshold)?,
        steady_from: e.float("metrics.steady_from")?,
    };
    cfg.validate().map_err(|err| {
        let line = match &err {
            FlycapError::InvalidParameter { name, .. } => e
                .line(name)
                .or_else(|| e.line(name.trim_end_matches(|c: char| c.is_ascii_digit()))),
            FlycapError::UnsupportedCellCount { .. } => e.line("plant.p"),
            _ => None,
        };
        ConfigError {
            line,
            message: err.to_string(),
        }
    })?;
    Ok(cfg)
}

/// Renders a configuration that [`parse_config`] reads back to an equal value.
pub fn render_config(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    // 17 significant digits round-trip every f64
    let f = |x: f64| crate::format::sig(x, 17);
    kv("plant.p", cfg.params.cells().to_string());
    kv("plant.E", f(cfg.params.source_voltage));
    kv("plant.R", f(cfg.params.resistance));
    kv("plant.L", f(cfg.params.inductance));
    for (j, c) in cfg.params.capacitances.iter().enumerate() {
        kv(&format!("plant.c{}", j + 1), f(*c));
    }
    kv("pwm.f_chop", f(cfg.pwm.carrier_frequency()));
    for (j, d) in cfg.pwm.duty().iter().enumerate() {
        kv(&format!("pwm.duty{}", j + 1), f(*d));
    }
    kv("pwm.phase_shift", f(cfg.pwm.phase_shift()));
    kv("pwm.update_period", cfg.pwm.update_period().map_or("none".into(), f));
    match &cfg.sosml {
        None => kv("sosml.enabled", "false".into()),
        Some(s) => {
            kv("sosml.lambda0", f(s.lambda0));
            kv("sosml.alpha0", f(s.alpha0));
            kv("sosml.k_lambda0", f(s.k_lambda0));
            kv("sosml.k_alpha0", f(s.k_alpha0));
            kv("sosml.k", f(s.adaptation_rate));
            kv("sosml.kappa", f(s.kappa));
            kv("sosml.l_init", f(s.l_init));
            kv("sosml.eps_dz", f(s.eps_dz));
        }
    }
    match &cfg.luenberger {
        None => kv("luenberger.enabled", "false".into()),
        Some(g) => {
            for (i, k) in g.kappa.iter().enumerate() {
                kv(&format!("luenberger.kappa{i}"), f(*k));
            }
        }
    }
    kv("sim.t_end", f(cfg.t_end));
    kv("sim.dt", f(cfg.dt));
    kv("init.I", f(cfg.x0.current));
    for (j, v) in cfg.x0.voltages.iter().enumerate() {
        kv(&format!("init.Vc{}", j + 1), f(*v));
    }
    kv("observer.I", f(cfg.observer_x0.current));
    for (j, v) in cfg.observer_x0.voltages.iter().enumerate() {
        kv(&format!("observer.Vc{}", j + 1), f(*v));
    }
    let kind = match cfg.noise.kind {
        NoiseKind::None => "none",
        NoiseKind::Uniform => "uniform",
        NoiseKind::Gaussian => "gaussian",
    };
    kv("noise.kind", kind.into());
    kv("noise.amplitude", f(cfg.noise.amplitude));
    kv("noise.seed", cfg.noise.seed.to_string());
    kv("load.t_switch", f(cfg.load.t_switch));
    kv("load.R_factor", f(cfg.load.r_factor));
    kv("metrics.settle_threshold", f(cfg.settle_threshold));
    if let Some(s) = cfg.steady_from {
        kv("metrics.steady_from", f(s));
    }
    out
}
