//! Experiment config files.
//!
//! Line-oriented `key = value` pairs under `[section]` headers; `#` starts a
//! comment. Gaps and penetrations are written in percent. Every key is
//! listed in [`KEYS`]; anything else is rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::engine::SimConfig;
use crate::error::{Error, Result};
use crate::home::UtilityParams;
use crate::policy::{DistributedParams, DistributionProfile, PolicyKind};
use crate::protocol::{ControlChannel, EmulationMode, LinkModel};
use crate::sweep::{CorpusSource, ExperimentSpec};
use crate::topology::TopologyConfig;

/// Default seed of the built-in corpus generator.
pub const DEFAULT_CORPUS_SEED: u64 = 7;

/// Every accepted key with its default; `None` marks required keys.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("experiment.policies", None),
    ("experiment.gaps", None),
    ("experiment.aps", None),
    ("experiment.runs", Some("10")),
    ("experiment.seed", Some("0")),
    ("experiment.out", Some("results")),
    ("simulation.hours", Some("24")),
    ("topology.homes", None),
    ("topology.feeders", None),
    ("topology.group_size", Some("10")),
    ("topology.transformers_per_feeder", Some("4")),
    ("topology.grid_stations", Some("1")),
    ("topology.class_mix", Some("equal")),
    ("policy.dp", Some("0.5, 0.4, 0.1")),
    ("policy.reduction_factor", Some("0.5")),
    ("policy.followup_rounds", Some("5")),
    ("utility.u_max", Some("1")),
    ("utility.th_u", Some("0.6")),
    ("utility.th_l", Some("0.4")),
    ("consumption.corpus", Some("synthetic")),
    ("consumption.corpus_seed", Some("7")),
    ("consumption.bandwidth", Some("auto")),
    ("protocol.distance_m", Some("10")),
    ("protocol.rooms", Some("4")),
    ("protocol.mode", Some("summary")),
    ("protocol.retries", Some("3")),
    ("protocol.prr_table", Some("10:1.0, 25:0.98, 50:0.5")),
    ("protocol.ack_slot_ms", Some("5")),
    ("protocol.base_timeout_ms", Some("21")),
    ("protocol.sw_latency_ms", Some("2")),
    ("protocol.sw_latency_worst_ms", Some("8")),
    ("protocol.hw_latency_ms", Some("28")),
];

/// Reads and validates an experiment config. A missing or unreadable file
/// is an I/O error; everything else is a config error.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config_str(&text, base)
}

/// Parses config text; relative corpus paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentSpec> {
    let values = read_pairs(text)?;
    let v = Values { values };

    let policies = v
        .list("experiment.policies")?
        .iter()
        .map(|s| s.parse::<PolicyKind>().map_err(|e| key_error("experiment.policies", &e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let gaps = v.percents("experiment.gaps")?;
    let aps = v.percents("experiment.aps")?;

    let class_mix = match v.get("topology.class_mix") {
        "equal" => TopologyConfig::default().class_mix,
        _ => v.floats::<3>("topology.class_mix")?,
    };
    if class_mix.iter().any(|&w| w < 0.0) || (class_mix.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(key_error("topology.class_mix", "weights must be nonnegative and sum to 1"));
    }
    let topology = TopologyConfig {
        homes: v.positive("topology.homes")?,
        feeders: v.positive("topology.feeders")?,
        group_size: v.positive("topology.group_size")?,
        transformers_per_feeder: v.positive("topology.transformers_per_feeder")?,
        grid_stations: v.positive("topology.grid_stations")?,
        class_mix,
        ap: 0.0,
    };

    let [a4, a3, a2] = v.floats::<3>("policy.dp")?;
    let distributed = DistributedParams {
        dp: DistributionProfile::new(a4, a3, a2).map_err(under("policy.dp"))?,
        reduction_factor: v.float("policy.reduction_factor")?,
        followup_rounds: v.parse("policy.followup_rounds", "a nonnegative integer")?,
    };
    let utility = UtilityParams::new(v.float("utility.u_max")?, v.float("utility.th_u")?, v.float("utility.th_l")?)
        .map_err(under("utility"))?;

    let mode = match v.get("protocol.mode").to_ascii_lowercase().as_str() {
        "summary" => EmulationMode::Summary,
        "full" => EmulationMode::Full,
        other => return Err(key_error("protocol.mode", &format!("expected summary or full, got {other:?}"))),
    };
    let channel = ControlChannel {
        link: LinkModel {
            prr_by_distance: v.prr_table("protocol.prr_table")?,
            retries: v.parse("protocol.retries", "a nonnegative integer")?,
            ack_slot_ms: v.float("protocol.ack_slot_ms")?,
            base_timeout_ms: v.float("protocol.base_timeout_ms")?,
            sw_latency_ms: v.float("protocol.sw_latency_ms")?,
            sw_latency_worst_ms: v.float("protocol.sw_latency_worst_ms")?,
            hw_latency_ms: v.float("protocol.hw_latency_ms")?,
        },
        distance_m: v.float("protocol.distance_m")?,
        rooms: v.positive("protocol.rooms")?,
        mode,
    };
    channel.link.validate().map_err(under("protocol"))?;

    let corpus = match v.get("consumption.corpus") {
        "synthetic" => CorpusSource::Synthetic(v.parse("consumption.corpus_seed", "an unsigned integer")?),
        path => CorpusSource::Manifest(base_dir.join(path)),
    };
    let bandwidth = match v.get("consumption.bandwidth") {
        "auto" => None,
        _ => {
            let h = v.float("consumption.bandwidth")?;
            if !(h > 0.0) {
                return Err(key_error("consumption.bandwidth", "must be positive or auto"));
            }
            Some(h)
        }
    };

    let spec = ExperimentSpec {
        base: SimConfig {
            horizon_hours: v.positive("simulation.hours")?,
            topology,
            distributed,
            utility,
            channel,
            seed: v.parse("experiment.seed", "an unsigned integer")?,
            ..SimConfig::default()
        },
        policies,
        gaps,
        aps,
        runs: v.positive("experiment.runs")?,
        out_dir: PathBuf::from(v.get("experiment.out")),
        corpus,
        bandwidth,
    };
    spec.validate()?;
    Ok(spec)
}

fn key_error(key: &str, msg: &str) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

/// Prefixes a validation error from a constructor with the config key.
fn under(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(msg) => key_error(key, &msg),
        other => key_error(key, &other.to_string()),
    }
}

fn read_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !KEYS.iter().any(|(k, _)| k.split('.').next() == Some(name)) {
                return Err(Error::Config(format!("line {lineno}: unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`, got {line:?}")))?;
        let section = section
            .as_deref()
            .ok_or_else(|| Error::Config(format!("line {lineno}: key {:?} outside any section", key.trim())))?;
        let full = format!("{section}.{}", key.trim());
        if !KEYS.iter().any(|(k, _)| *k == full) {
            return Err(Error::Config(format!("line {lineno}: unknown key {full}")));
        }
        let value = value.trim().trim_matches('"').to_string();
        if values.insert(full.clone(), value).is_some() {
            return Err(Error::Config(format!("line {lineno}: {full} given twice")));
        }
    }
    for (key, default) in KEYS {
        if default.is_none() && !values.contains_key(*key) {
            return Err(Error::Config(format!("missing required key {key}")));
        }
    }
    Ok(values)
}

struct Values {
    values: BTreeMap<String, String>,
}

impl Values {
    fn get(&self, key: &str) -> &str {
        match self.values.get(key) {
            Some(v) => v,
            None => KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .and_then(|(_, d)| *d)
                .expect("required keys checked while reading"),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        let raw = self.get(key);
        raw.parse()
            .map_err(|_| key_error(key, &format!("expected {what}, got {raw:?}")))
    }

    fn positive(&self, key: &str) -> Result<usize> {
        let n: usize = self.parse(key, "a positive integer")?;
        if n == 0 {
            return Err(key_error(key, "expected a positive integer, got 0"));
        }
        Ok(n)
    }

    fn float(&self, key: &str) -> Result<f64> {
        let x: f64 = self.parse(key, "a number")?;
        if !x.is_finite() {
            return Err(key_error(key, "expected a finite number"));
        }
        Ok(x)
    }

    fn list(&self, key: &str) -> Result<Vec<String>> {
        let items: Vec<String> = self
            .get(key)
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(key_error(key, "must list at least one value"));
        }
        Ok(items)
    }

    fn numbers(&self, key: &str) -> Result<Vec<f64>> {
        self.list(key)?
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| key_error(key, &format!("expected a number, got {s:?}")))
            })
            .collect()
    }

    fn floats<const N: usize>(&self, key: &str) -> Result<[f64; N]> {
        let xs = self.numbers(key)?;
        xs.try_into()
            .map_err(|xs: Vec<f64>| key_error(key, &format!("expected {N} numbers, got {}", xs.len())))
    }

    /// Percent list in [0, 100] as fractions.
    fn percents(&self, key: &str) -> Result<Vec<f64>> {
        self.numbers(key)?
            .into_iter()
            .map(|p| {
                if (0.0..=100.0).contains(&p) {
                    Ok(p / 100.0)
                } else {
                    Err(key_error(key, &format!("{p} is not a percentage in [0, 100]")))
                }
            })
            .collect()
    }

    fn prr_table(&self, key: &str) -> Result<Vec<(f64, f64)>> {
        self.list(key)?
            .iter()
            .map(|entry| {
                let parsed = entry
                    .split_once(':')
                    .and_then(|(d, p)| Some((d.trim().parse().ok()?, p.trim().parse().ok()?)));
                parsed.ok_or_else(|| key_error(key, &format!("expected `distance:prr`, got {entry:?}")))
            })
            .collect()
    }
}
