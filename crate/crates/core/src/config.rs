//! Market configuration files.
//!
//! Two spellings of the same tree are accepted. A file whose first
//! non-blank character is `{` is read as JSON:
//!
//! ```json
//! { "providers": [ { "sensors": { "count": 50 }, "quality_factor": 0.7 } ],
//!   "users": { "count": 200 } }
//! ```
//!
//! Anything else is read as `key = value` lines with dotted, indexed keys,
//! where each value is a JSON literal or a bare word:
//!
//! ```text
//! # provider 2 has noisier sensors
//! providers[1].quality_factor = 0.7
//! users.reservation_dist[0] = {"kind": "uniform", "lower": 0, "upper": 1}
//! coalition = [0, 1]
//! ```
//!
//! Omitted fields take the default market's values; an empty file is the
//! default market.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::error::{ValidationError, Violation};
use crate::market::{
    MarketConfig, ReservationDistribution, SensorPopulation, UserPopulation, DEFAULT_LOG_BASE,
    DEFAULT_REPLICATIONS, DEFAULT_SEED, DEFAULT_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
    Parse {
        line: usize,
        field: Option<String>,
        message: String,
    },

    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    providers: Option<Vec<Option<RawProvider>>>,
    users: Option<RawUsers>,
    log_base: Option<f64>,
    optimizer_tolerance: Option<f64>,
    mc_replications: Option<i64>,
    mc_seed: Option<u64>,
    coalition: Option<Vec<i64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvider {
    sensors: Option<RawSensors>,
    quality_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensors {
    count: Option<i64>,
    wage_dist: Option<ReservationDistribution>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUsers {
    count: Option<i64>,
    reservation_dist: Option<Vec<Option<ReservationDistribution>>>,
}

/// Reads, defaults and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<MarketConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<MarketConfig, ConfigError> {
    let raw = if text.trim().is_empty() {
        RawConfig::default()
    } else if text.trim_start().starts_with('{') {
        parse_json(text)?
    } else {
        let (tree, keys) = parse_lines(text)?;
        from_tree(tree, &keys)?
    };
    build(raw)
}

fn parse_json(text: &str) -> Result<RawConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    match serde_path_to_error::deserialize::<_, RawConfig>(&mut de) {
        Ok(raw) => {
            de.end().map_err(|e| ConfigError::Parse {
                line: e.line(),
                field: None,
                message: e.to_string(),
            })?;
            Ok(raw)
        }
        Err(e) => {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Err(ConfigError::Parse {
                line: inner.line(),
                field: (field != ".").then_some(field),
                message: inner.to_string(),
            })
        }
    }
}

/// `keys` maps each assigned key to its line, so errors can point at the
/// line that set the offending field.
fn from_tree(tree: Value, keys: &[(String, usize)]) -> Result<RawConfig, ConfigError> {
    serde_path_to_error::deserialize(tree).map_err(|e| {
        let field = e.path().to_string();
        let line = keys
            .iter()
            .find(|(k, _)| {
                k == &field || k.starts_with(&format!("{field}.")) || k.starts_with(&format!("{field}["))
            })
            .or_else(|| keys.iter().find(|(k, _)| field.starts_with(k.as_str())))
            .map_or(0, |(_, l)| *l);
        ConfigError::Parse {
            line,
            field: Some(field),
            message: e.into_inner().to_string(),
        }
    })
}

#[derive(Debug)]
enum Segment {
    Key(String),
    Index(usize),
}

fn parse_key(key: &str) -> Option<Vec<Segment>> {
    let mut out = Vec::new();
    for part in key.split('.') {
        let (name, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return None;
        }
        out.push(Segment::Key(name.to_string()));
        while !rest.is_empty() {
            let close = rest.find(']')?;
            if !rest.starts_with('[') {
                return None;
            }
            out.push(Segment::Index(rest[1..close].trim().parse().ok()?));
            rest = &rest[close + 1..];
        }
    }
    Some(out)
}

fn set_path(root: &mut Value, path: &[Segment], value: Value) -> Result<(), String> {
    let Some((head, tail)) = path.split_first() else {
        *root = value;
        return Ok(());
    };
    let slot = match head {
        Segment::Key(k) => {
            if root.is_null() {
                *root = Value::Object(Map::new());
            }
            let Value::Object(map) = root else {
                return Err(format!("`{k}` is nested under a non-object value"));
            };
            map.entry(k.clone()).or_insert(Value::Null)
        }
        Segment::Index(i) => {
            if root.is_null() {
                *root = Value::Array(Vec::new());
            }
            let Value::Array(items) = root else {
                return Err(format!("index [{i}] applied to a non-list value"));
            };
            if items.len() <= *i {
                items.resize(i + 1, Value::Null);
            }
            &mut items[*i]
        }
    };
    if tail.is_empty() && !slot.is_null() {
        return Err("key assigned more than once".into());
    }
    set_path(slot, tail, value)
}

fn parse_lines(text: &str) -> Result<(Value, Vec<(String, usize)>), ConfigError> {
    let mut root = Value::Object(Map::new());
    let mut keys = Vec::new();
    for (n, raw_line) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw_line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let parse_err = |field: Option<&str>, message: String| ConfigError::Parse {
            line,
            field: field.map(str::to_string),
            message,
        };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(None, "expected `key = value`".into()))?;
        let key = key.trim();
        let value = value.trim();
        let path = parse_key(key).ok_or_else(|| parse_err(Some(key), "malformed key".into()))?;
        let value = match serde_json::from_str::<Value>(value) {
            Ok(v) => v,
            Err(_) if !value.is_empty() && value.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
                Value::String(value.to_string())
            }
            Err(e) => return Err(parse_err(Some(key), format!("invalid value: {e}"))),
        };
        set_path(&mut root, &path, value).map_err(|m| parse_err(Some(key), m))?;
        keys.push((key.replace(' ', ""), line));
    }
    Ok((root, keys))
}

fn count(raw: Option<i64>, default: usize) -> usize {
    match raw {
        Some(n) if n < 0 => 0,
        Some(n) => n as usize,
        None => default,
    }
}

fn build(raw: RawConfig) -> Result<MarketConfig, ConfigError> {
    let mut violations = Vec::new();
    let default_provider = SensorPopulation::default();
    let providers: Vec<SensorPopulation> = match raw.providers {
        None => vec![default_provider.clone(); 2],
        Some(list) => list
            .into_iter()
            .map(|p| {
                let p = p.unwrap_or_default();
                let sensors = p.sensors.unwrap_or_default();
                SensorPopulation {
                    count: count(sensors.count, default_provider.count),
                    wage_dist: sensors.wage_dist.unwrap_or_default(),
                    quality_factor: p.quality_factor.unwrap_or(default_provider.quality_factor),
                }
            })
            .collect(),
    };
    let users = raw.users.unwrap_or_default();
    let reservation_dist = match users.reservation_dist {
        None => vec![ReservationDistribution::standard(); providers.len()],
        Some(list) => list.into_iter().map(Option::unwrap_or_default).collect(),
    };
    let coalition = raw.coalition.map(|c| {
        c.into_iter()
            .enumerate()
            .filter_map(|(i, k)| {
                if k < 0 {
                    violations.push(Violation::new(format!("coalition[{i}]"), "must be non-negative"));
                    None
                } else {
                    Some(k as usize)
                }
            })
            .collect()
    });
    let cfg = MarketConfig {
        providers,
        users: UserPopulation {
            count: count(users.count, 200),
            reservation_dist,
        },
        log_base: raw.log_base.unwrap_or(DEFAULT_LOG_BASE),
        optimizer_tolerance: raw.optimizer_tolerance.unwrap_or(DEFAULT_TOLERANCE),
        mc_replications: count(raw.mc_replications, DEFAULT_REPLICATIONS),
        mc_seed: raw.mc_seed.unwrap_or(DEFAULT_SEED),
        coalition,
    };
    violations.extend(cfg.violations());
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ValidationError(violations).into())
    }
}
