//! Engineering-notation quantities such as `13pF`, `10Mohm`, `100kHz`.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Ohm,
    Farad,
    Hertz,
    Second,
    Volt,
}

impl Unit {
    fn symbols(self) -> &'static [&'static str] {
        match self {
            Unit::Ohm => &["ohm", "Ohm", "ohms", "\u{3a9}", "\u{2126}"],
            Unit::Farad => &["F"],
            Unit::Hertz => &["Hz"],
            Unit::Second => &["s"],
            Unit::Volt => &["V"],
        }
    }

    fn canonical(self) -> &'static str {
        match self {
            Unit::Ohm => "ohm",
            Unit::Farad => "F",
            Unit::Hertz => "Hz",
            Unit::Second => "s",
            Unit::Volt => "V",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("`{text}` is not a quantity in {unit} (expected e.g. `13p{unit}`)")]
    Malformed { text: String, unit: Unit },
    #[error("`{text}` must be finite")]
    NotFinite { text: String },
}

const PREFIXES: &[(&str, f64)] = &[
    ("f", 1e-15),
    ("p", 1e-12),
    ("n", 1e-9),
    ("u", 1e-6),
    ("µ", 1e-6),
    ("μ", 1e-6),
    ("m", 1e-3),
    ("", 1.0),
    ("k", 1e3),
    ("K", 1e3),
    ("M", 1e6),
    ("G", 1e9),
];

fn suffix_multiplier(suffix: &str, unit: Unit) -> Option<f64> {
    for symbol in unit.symbols() {
        if let Some(prefix) = suffix.strip_suffix(symbol) {
            if let Some(&(_, mult)) = PREFIXES.iter().find(|(p, _)| *p == prefix) {
                return Some(mult);
            }
        }
    }
    None
}

/// Parses `<number><prefix><unit>`, e.g. `1.5pF`, `10 Mohm`, `300fF`.
/// The unit symbol is mandatory.
pub fn parse_quantity(text: &str, unit: Unit) -> Result<f64, UnitError> {
    let trimmed = text.trim();
    let malformed = || UnitError::Malformed {
        text: text.to_string(),
        unit,
    };
    for split in (1..=trimmed.len()).rev() {
        if !trimmed.is_char_boundary(split) {
            continue;
        }
        let (number, suffix) = trimmed.split_at(split);
        let Ok(value) = number.trim().parse::<f64>() else {
            continue;
        };
        let Some(mult) = suffix_multiplier(suffix.trim(), unit) else {
            continue;
        };
        let v = value * mult;
        if !v.is_finite() {
            return Err(UnitError::NotFinite {
                text: text.to_string(),
            });
        }
        return Ok(v);
    }
    Err(malformed())
}

/// Formats with an SI prefix, e.g. `1.3e-11` farads becomes `13pF`.
pub fn format_quantity(value: f64, unit: Unit) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}{}", unit.canonical());
    }
    let scaled = [
        ("f", 1e-15),
        ("p", 1e-12),
        ("n", 1e-9),
        ("u", 1e-6),
        ("m", 1e-3),
        ("", 1.0),
        ("k", 1e3),
        ("M", 1e6),
        ("G", 1e9),
    ];
    let mag = value.abs();
    let (prefix, mult) = scaled
        .iter()
        .rev()
        .find(|(_, m)| mag >= *m * (1.0 - 1e-12))
        .copied()
        .unwrap_or(scaled[0]);
    let mantissa = value / mult;
    let mut s = format!("{mantissa:.6}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    format!("{s}{prefix}{}", unit.canonical())
}
