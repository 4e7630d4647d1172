//! Flat `key = value` experiment specs, assembled from an optional config
//! file plus command-line flags. Flags override file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use aoi_gossip::model::{theta, Theta};

pub const COMMANDS: &[&str] = &[
    "simulate",
    "exact-star",
    "exact-ring4",
    "approx-ring",
    "optimal-beta",
    "validate",
];

/// Every key any command understands. Keys are validated here once;
/// per-command requirements are checked at dispatch.
pub const KNOWN_KEYS: &[&str] = &[
    "command",
    "out",
    "seed",
    "topology",
    "nodes",
    "alpha",
    "beta",
    "relay",
    "transmit",
    "loss",
    "slots",
    "burn_in",
    "replications",
    "pmf_node",
    "links",
    "joint",
    "marginal",
    "k",
    "m_list",
    "theta_list",
];

/// A fully merged experiment spec: resolved key-value parameters.
#[derive(Debug, Clone, Default)]
pub struct Spec {
    map: BTreeMap<String, String>,
}

impl Spec {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key)
            .ok_or_else(|| format!("missing required key '{key}'"))
    }

    pub fn command(&self) -> Result<&str, String> {
        let cmd = self.require("command")?;
        if !COMMANDS.contains(&cmd) {
            return Err(format!(
                "invalid value for 'command': '{cmd}' is not one of {}",
                COMMANDS.join(", ")
            ));
        }
        Ok(cmd)
    }

    pub fn out_dir(&self) -> Result<PathBuf, String> {
        Ok(PathBuf::from(self.require("out")?))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Parses a config file into key-value pairs. `#` starts a comment,
/// blank lines are skipped, keys must be known and unique.
pub fn parse_config(path: &str) -> Result<BTreeMap<String, String>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read config '{path}': {e}"))?;
    let mut map = BTreeMap::new();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(format!("config line {line}: expected key = value"));
        };
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(format!("config line {line}: unknown key '{key}'"));
        }
        if value.is_empty() {
            return Err(format!("config line {line}: empty value for '{key}'"));
        }
        if let Some(first) = first_line.get(key) {
            return Err(format!(
                "config: duplicate key '{key}' (lines {first} and {line})"
            ));
        }
        first_line.insert(key.to_string(), line);
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

/// Parses command-line arguments into a merged spec. Grammar:
/// `[<command>] [--config <path>] [--<key> <value>]...` where each
/// `--<key>` mirrors a config key.
pub fn parse_args(args: &[String]) -> Result<Spec, String> {
    let mut config_path: Option<String> = None;
    let mut overrides: BTreeMap<String, String> = BTreeMap::new();
    let mut positional: Option<String> = None;
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if let Some(name) = arg.strip_prefix("--") {
            let value = it
                .next()
                .ok_or_else(|| format!("flag '--{name}' needs a value"))?;
            if name == "config" {
                if config_path.is_some() {
                    return Err("duplicate flag '--config'".into());
                }
                config_path = Some(value.clone());
                continue;
            }
            if !KNOWN_KEYS.contains(&name) {
                return Err(format!("unknown flag '--{name}'"));
            }
            if overrides.insert(name.to_string(), value.clone()).is_some() {
                return Err(format!("duplicate flag '--{name}'"));
            }
        } else if positional.is_none() {
            positional = Some(arg.clone());
        } else {
            return Err(format!("unexpected argument '{arg}'"));
        }
    }
    let mut map = match config_path {
        Some(path) => parse_config(&path)?,
        None => BTreeMap::new(),
    };
    map.extend(overrides);
    if let Some(cmd) = positional {
        map.insert("command".into(), cmd);
    }
    Ok(Spec { map })
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("invalid value for '{key}': '{value}' is not a number"))
}

pub fn parse_u64(key: &str, value: &str) -> Result<u64, String> {
    value
        .parse::<u64>()
        .map_err(|_| format!("invalid value for '{key}': '{value}' is not a non-negative integer"))
}

pub fn parse_usize(key: &str, value: &str) -> Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("invalid value for '{key}': '{value}' is not a non-negative integer"))
}

pub fn parse_prob(key: &str, value: &str, range: &str) -> Result<f64, String> {
    let p = parse_f64(key, value)?;
    let ok = match range {
        "(0, 1)" => p > 0.0 && p < 1.0,
        "(0, 1]" => p > 0.0 && p <= 1.0,
        "[0, 1)" => (0.0..1.0).contains(&p),
        _ => unreachable!("unknown range spec"),
    };
    if !ok {
        return Err(format!("invalid value for '{key}': {p} is outside {range}"));
    }
    Ok(p)
}

pub fn parse_list_f64(key: &str, value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

pub fn parse_list_usize(key: &str, value: &str) -> Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|s| parse_usize(key, s.trim()))
        .collect()
}

/// Parses a rational coordinate such as `0`, `1/4` or `-1/2`.
pub fn parse_theta(key: &str, value: &str) -> Result<Theta, String> {
    let bad = || format!("invalid value for '{key}': '{value}' is not a rational like 1/4");
    let (num, den) = match value.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (value.trim(), "1"),
    };
    let num: i64 = num.parse().map_err(|_| bad())?;
    let den: i64 = den.parse().map_err(|_| bad())?;
    if den == 0 {
        return Err(bad());
    }
    Ok(theta(num, den))
}

pub fn parse_list_theta(key: &str, value: &str) -> Result<Vec<Theta>, String> {
    value
        .split(',')
        .map(|s| parse_theta(key, s.trim()))
        .collect()
}
