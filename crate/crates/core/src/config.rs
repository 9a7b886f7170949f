//! Flat `key = value` configuration text with dotted sections
//! (`separator.*`, `train.*`, `data.*`). Overrides are plain key/value
//! pairs applied after file values; rendering is sorted and stable so
//! resolved configs can be echoed and replayed.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::segment::SegConfig;
use crate::separator::{Framework, Mode, ModelConfig};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FlatConfig { entries })
    }

    /// Stable sorted rendering.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    /// Applies a `key=value` override token.
    pub fn apply_override(&mut self, token: &str) -> Result<()> {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{token}' is not key=value")))?;
        self.set(key.trim(), value.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}'"))),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("key '{key}': bad list entry '{tok}'")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

/// Builds a [`ModelConfig`] from `separator.*` keys. `separator.kind`
/// selects the baseline defaults (dprnn: K=100/P=50, 5 blocks; mprnn:
/// K=[100,60]/P=[50,30], 3 blocks); explicit keys override them.
pub fn model_config_from_flat(flat: &FlatConfig) -> Result<ModelConfig> {
    let kind = flat.get("separator.kind").unwrap_or("mprnn");
    let mut config = match kind {
        "dprnn" => ModelConfig::dprnn_defaults(),
        "mprnn" => ModelConfig::mprnn_defaults(),
        other => return Err(Error::Config(format!("unknown separator.kind '{other}'"))),
    };
    if let Some(mode) = flat.get("separator.mode") {
        config.mode = Mode::parse(mode)?;
    }
    if let Some(fw) = flat.get("separator.framework") {
        config.framework = Framework::parse(fw)?;
    }
    config.feature_dim = flat.get_usize("separator.feature_dim", config.feature_dim)?;
    config.hidden = flat.get_usize("separator.hidden", config.hidden)?;
    config.blocks = flat.get_usize("separator.blocks", config.blocks)?;
    config.window = flat.get_usize("separator.window", config.window)?;
    config.stride = flat.get_usize("separator.stride", config.stride)?;
    config.speakers = flat.get_usize("separator.speakers", config.speakers)?;
    config.sample_rate = flat.get_u64("separator.sample_rate", config.sample_rate as u64)? as u32;
    let chunk_lengths = flat.get_usize_list("separator.chunk_lengths")?;
    let hops = flat.get_usize_list("separator.hops")?;
    match (chunk_lengths, hops) {
        (None, None) => {}
        (Some(k), Some(p)) => config.seg = SegConfig::new(k, p)?,
        _ => {
            return Err(Error::Config(
                "separator.chunk_lengths and separator.hops must be set together".into(),
            ))
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn model_config_to_flat(config: &ModelConfig) -> FlatConfig {
    let mut flat = FlatConfig::new();
    flat.set("separator.kind", config.kind_name());
    flat.set("separator.mode", config.mode.as_str());
    flat.set("separator.framework", config.framework.as_str());
    flat.set("separator.feature_dim", config.feature_dim);
    flat.set("separator.hidden", config.hidden);
    flat.set("separator.blocks", config.blocks);
    flat.set("separator.window", config.window);
    flat.set("separator.stride", config.stride);
    flat.set("separator.speakers", config.speakers);
    flat.set("separator.sample_rate", config.sample_rate);
    let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    flat.set("separator.chunk_lengths", join(&config.seg.chunk_lengths));
    flat.set("separator.hops", join(&config.seg.hops));
    flat
}

/// Builds a [`TrainConfig`] from `train.*` keys.
pub fn train_config_from_flat(flat: &FlatConfig) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    let select_metric = match flat.get("train.select_metric") {
        None => defaults.select_metric,
        Some(tok) => Metric::parse(tok)?,
    };
    let config = TrainConfig {
        epochs: flat.get_usize("train.epochs", defaults.epochs)?,
        lr: flat.get_f64("train.lr", defaults.lr)?,
        batch_size: flat.get_usize("train.batch_size", defaults.batch_size)?,
        clip_norm: flat.get_f64("train.clip_norm", defaults.clip_norm)?,
        seed: flat.get_u64("train.seed", defaults.seed)?,
        select_metric,
        lr_halve_patience: flat.get_usize("train.lr_halve_patience", 0)?,
        stop_at_val_db: None,
    };
    config.validate()?;
    Ok(config)
}

pub fn train_config_to_flat(config: &TrainConfig) -> FlatConfig {
    let mut flat = FlatConfig::new();
    flat.set("train.epochs", config.epochs);
    flat.set("train.lr", config.lr);
    flat.set("train.batch_size", config.batch_size);
    flat.set("train.clip_norm", config.clip_norm);
    flat.set("train.seed", config.seed);
    flat.set("train.select_metric", config.select_metric.name());
    flat.set("train.lr_halve_patience", config.lr_halve_patience);
    flat
}

/// Merges `b` into `a` (entries in `b` win).
pub fn merge(a: &FlatConfig, b: &FlatConfig) -> FlatConfig {
    let mut out = a.clone();
    for k in b.keys() {
        out.set(k, b.get(k).unwrap());
    }
    out
}
