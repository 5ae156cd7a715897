//! TOML run configuration.
//!
//! ```toml
//! preset = "probe-10x"
//!
//! [channel]
//! ground = "capacitive-return"
//! excitation = "single-ended"
//! termination = "single-ended"
//!
//! [load]
//! r_load = "10Mohm"
//! c_load = "13pF"          # or "none"
//! receiver_return = "1nF"  # or "model"
//!
//! [params]
//! c_ret_rx = "1.5pF"
//!
//! [sweep]
//! start = "10kHz"
//! stop = "1MHz"
//! points_per_decade = 50
//!
//! [[chain]]
//! kind = "flat-gain"
//! gain = 12
//!
//! [[chain]]
//! kind = "high-pass"
//! corner = "5kHz"
//!
//! [compare]
//! tol_db = 0.01
//! ```
//!
//! Every error names the offending line and key.

use crate::circuit::log_frequencies;
use crate::deembed::{ChainStage, ReceiveChain, DEFAULT_MIN_CHAIN_MAGNITUDE};
use crate::model::{default_frequencies, ChannelConfig, LoadKind, LoadPreset, ModelParameters, ReceiverReturn};
use crate::units::{parse_quantity, Unit};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Spanned<String>>,
    channel: Option<RawChannel>,
    load: Option<RawLoad>,
    params: Option<BTreeMap<String, Spanned<String>>>,
    sweep: Option<RawSweep>,
    chain: Option<Vec<RawStage>>,
    compare: Option<RawCompare>,
    deembed: Option<RawDeembed>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    ground: Option<Spanned<String>>,
    excitation: Option<Spanned<String>>,
    termination: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    preset: Option<Spanned<String>>,
    r_load: Option<Spanned<String>>,
    c_load: Option<Spanned<String>>,
    receiver_return: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    start: Option<Spanned<String>>,
    stop: Option<Spanned<String>>,
    points_per_decade: Option<Spanned<i64>>,
    frequencies: Option<Vec<Spanned<String>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    kind: Spanned<String>,
    gain: Option<Spanned<f64>>,
    corner: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompare {
    tol_db: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDeembed {
    min_chain_magnitude: Option<Spanned<f64>>,
}

/// Resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channel: ChannelConfig,
    pub frequencies: Vec<f64>,
    pub chain: Option<ReceiveChain>,
    pub tol_db: Option<f64>,
    pub min_chain_magnitude: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::preset("probe-10x").expect("built-in preset"),
            frequencies: default_frequencies(),
            chain: None,
            tol_db: None,
            min_chain_magnitude: DEFAULT_MIN_CHAIN_MAGNITUDE,
        }
    }
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, offset: usize) -> usize {
        let end = offset.min(self.text.len());
        self.text.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, key: &str, span: std::ops::Range<usize>, message: impl ToString) -> Result<T, ConfigError> {
        Err(ConfigError::Value {
            line: self.line(span.start),
            key: key.to_string(),
            message: message.to_string(),
        })
    }

    fn quantity(&self, key: &str, value: &Spanned<String>, unit: Unit) -> Result<f64, ConfigError> {
        match parse_quantity(value.get_ref(), unit) {
            Ok(v) => Ok(v),
            Err(e) => self.err(key, value.span(), e),
        }
    }

    fn positive_quantity(&self, key: &str, value: &Spanned<String>, unit: Unit) -> Result<f64, ConfigError> {
        let v = self.quantity(key, value, unit)?;
        if v > 0.0 {
            Ok(v)
        } else {
            self.err(key, value.span(), format!("must be > 0, got {v}"))
        }
    }
}

fn param_unit(name: &str) -> Unit {
    if name.starts_with("r_") {
        Unit::Ohm
    } else {
        Unit::Farad
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let src = Source { text };
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.span().map_or(1, |s| src.line(s.start)),
            message: e.message().trim().to_string(),
        })?;

        let mut cfg = RunConfig::default();
        if let Some(p) = &raw.preset {
            cfg.channel = match ChannelConfig::preset(p.get_ref()) {
                Ok(c) => c,
                Err(e) => return src.err("preset", p.span(), e),
            };
        }

        if let Some(ch) = &raw.channel {
            if let Some(g) = &ch.ground {
                cfg.channel.ground = g.get_ref().parse().or_else(|e| src.err("channel.ground", g.span(), e))?;
            }
            if let Some(x) = &ch.excitation {
                cfg.channel.excitation = x.get_ref().parse().or_else(|e| src.err("channel.excitation", x.span(), e))?;
            }
            if let Some(t) = &ch.termination {
                cfg.channel.termination =
                    t.get_ref().parse().or_else(|e| src.err("channel.termination", t.span(), e))?;
            }
        }

        if let Some(load) = &raw.load {
            if let Some(p) = &load.preset {
                cfg.channel.load = LoadPreset::from_name(p.get_ref()).or_else(|e| src.err("load.preset", p.span(), e))?;
            }
            let mut custom = false;
            if let Some(r) = &load.r_load {
                cfg.channel.load.r_load = src.positive_quantity("load.r_load", r, Unit::Ohm)?;
                custom = true;
            }
            if let Some(c) = &load.c_load {
                cfg.channel.load.c_load = if c.get_ref().trim() == "none" {
                    None
                } else {
                    Some(src.positive_quantity("load.c_load", c, Unit::Farad)?)
                };
                custom = true;
            }
            if let Some(rr) = &load.receiver_return {
                cfg.channel.load.receiver_return = if rr.get_ref().trim() == "model" {
                    ReceiverReturn::Model
                } else {
                    ReceiverReturn::Capacitance(src.positive_quantity("load.receiver_return", rr, Unit::Farad)?)
                };
                custom = true;
            }
            if custom {
                cfg.channel.load.kind = LoadKind::Custom;
            }
        }

        if let Some(params) = &raw.params {
            let mut p: ModelParameters = cfg.channel.params;
            for (name, value) in params {
                let key = format!("params.{name}");
                let Some(slot) = p.field_mut(name) else {
                    return src.err(
                        &key,
                        value.span(),
                        format!("unknown parameter; expected one of {}", ModelParameters::FIELDS.join(", ")),
                    );
                };
                *slot = src.positive_quantity(&key, value, param_unit(name))?;
            }
            cfg.channel.params = p;
        }

        if let Err(e) = cfg.channel.validate() {
            return Err(ConfigError::Value {
                line: raw.channel.as_ref().and_then(|c| c.ground.as_ref()).map_or(1, |g| src.line(g.span().start)),
                key: "channel".into(),
                message: e.to_string(),
            });
        }

        if let Some(sweep) = &raw.sweep {
            cfg.frequencies = Self::sweep(&src, sweep)?;
        }

        if let Some(stages) = &raw.chain {
            let mut out = Vec::with_capacity(stages.len());
            for (i, s) in stages.iter().enumerate() {
                let key = format!("chain[{i}]");
                let stage = match s.kind.get_ref().as_str() {
                    "flat-gain" => {
                        let Some(g) = &s.gain else {
                            return src.err(&key, s.kind.span(), "flat-gain needs `gain`");
                        };
                        if !(g.get_ref().is_finite() && *g.get_ref() > 0.0) {
                            return src.err(&format!("{key}.gain"), g.span(), "gain must be > 0");
                        }
                        ChainStage::FlatGain { gain: *g.get_ref() }
                    }
                    "high-pass" => {
                        let Some(c) = &s.corner else {
                            return src.err(&key, s.kind.span(), "high-pass needs `corner`");
                        };
                        ChainStage::HighPass {
                            corner: src.positive_quantity(&format!("{key}.corner"), c, Unit::Hertz)?,
                        }
                    }
                    other => {
                        return src.err(
                            &format!("{key}.kind"),
                            s.kind.span(),
                            format!("unknown stage `{other}`; expected flat-gain or high-pass"),
                        )
                    }
                };
                out.push(stage);
            }
            cfg.chain = Some(ReceiveChain::new(out).map_err(|e| ConfigError::Value {
                line: 1,
                key: "chain".into(),
                message: e.to_string(),
            })?);
        }

        if let Some(t) = raw.compare.as_ref().and_then(|c| c.tol_db.as_ref()) {
            if !(*t.get_ref() >= 0.0) {
                return src.err("compare.tol_db", t.span(), "must be >= 0");
            }
            cfg.tol_db = Some(*t.get_ref());
        }
        if let Some(m) = raw.deembed.as_ref().and_then(|d| d.min_chain_magnitude.as_ref()) {
            if !(*m.get_ref() > 0.0) {
                return src.err("deembed.min_chain_magnitude", m.span(), "must be > 0");
            }
            cfg.min_chain_magnitude = *m.get_ref();
        }
        Ok(cfg)
    }

    fn sweep(src: &Source, sweep: &RawSweep) -> Result<Vec<f64>, ConfigError> {
        if let Some(list) = &sweep.frequencies {
            if sweep.start.is_some() || sweep.stop.is_some() || sweep.points_per_decade.is_some() {
                return src.err(
                    "sweep.frequencies",
                    list.first().map_or(0..0, |f| f.span()),
                    "give either a frequency list or start/stop/points_per_decade",
                );
            }
            let mut out = Vec::with_capacity(list.len());
            for (i, f) in list.iter().enumerate() {
                let v = src.positive_quantity(&format!("sweep.frequencies[{i}]"), f, Unit::Hertz)?;
                if out.last().is_some_and(|&prev| v <= prev) {
                    return src.err(&format!("sweep.frequencies[{i}]"), f.span(), "frequencies must ascend");
                }
                out.push(v);
            }
            if out.is_empty() {
                return src.err("sweep.frequencies", 0..0, "list is empty");
            }
            return Ok(out);
        }
        let defaults = default_frequencies();
        let start = match &sweep.start {
            Some(s) => src.positive_quantity("sweep.start", s, Unit::Hertz)?,
            None => defaults[0],
        };
        let stop = match &sweep.stop {
            Some(s) => src.positive_quantity("sweep.stop", s, Unit::Hertz)?,
            None => *defaults.last().expect("non-empty"),
        };
        let ppd = match &sweep.points_per_decade {
            Some(p) if *p.get_ref() >= 1 => *p.get_ref() as usize,
            Some(p) => return src.err("sweep.points_per_decade", p.span(), "must be >= 1"),
            None => 50,
        };
        if !(stop > start) {
            let span = sweep.stop.as_ref().or(sweep.start.as_ref()).map_or(0..0, |s| s.span());
            return src.err("sweep.stop", span, format!("stop {stop} Hz must exceed start {start} Hz"));
        }
        Ok(log_frequencies(start, stop, ppd))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }
}
