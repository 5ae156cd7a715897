//! CSV formats for curves, fit measurements and sample traces.
//!
//! Numbers are written in shortest round-trip form, so a curve written and
//! read back is bit-identical. A zero-magnitude response is written as
//! `-inf` dB.

use crate::circuit::{loss_db, FrequencyResponse};
use crate::deembed::{checked_chain_response, DeembedError, ReceiveChain};
use crate::estimation::{ReturnCapMeasurement, TimeConstantMeasurement};
use crate::sampling::{SampleTrace, SamplingError};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CURVE_HEADER: [&str; 3] = ["frequency_hz", "loss_db", "phase_deg"];
pub const RETURN_CAP_HEADER: [&str; 2] = ["c_expt_farads", "loss_ratio"];
pub const TIME_CONSTANT_HEADER: [&str; 2] = ["r_ext_ohms", "tau_seconds"];
pub const TRACE_HEADER: [&str; 2] = ["t_seconds", "v_volts"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("file has no data rows")]
    Empty,
    #[error("curves differ in frequency grid at row {row}: {a} Hz vs {b} Hz")]
    GridMismatch { row: usize, a: f64, b: f64 },
    #[error(transparent)]
    Deembed(#[from] DeembedError),
    #[error(transparent)]
    Trace(#[from] SamplingError),
}

fn open(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Reads rows of `N` floats under an exact header. Returns `(line, values)`.
fn read_rows<const N: usize>(reader: impl Read, header: [&str; N]) -> Result<Vec<(u64, [f64; N])>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(IoError::Header {
            expected: header.join(","),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != N {
            return Err(IoError::Parse {
                line,
                message: format!("expected {N} fields, found {}", record.len()),
            });
        }
        let mut values = [0.0; N];
        for (i, field) in record.iter().enumerate() {
            values[i] = field.parse().map_err(|_| IoError::Parse {
                line,
                message: format!("`{field}` in column `{}` is not a number", header[i]),
            })?;
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(rows)
}

fn write_rows<const N: usize>(
    writer: impl Write,
    header: [&str; N],
    rows: impl Iterator<Item = [f64; N]>,
) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|source| IoError::File {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

fn parse_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub frequency: f64,
    pub loss_db: f64,
    pub phase_deg: f64,
}

/// Magnitude/phase curve on an ascending frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    rows: Vec<CurveRow>,
}

impl Curve {
    pub fn new(rows: Vec<CurveRow>) -> Result<Self, IoError> {
        if rows.is_empty() {
            return Err(IoError::Empty);
        }
        for (i, r) in rows.iter().enumerate() {
            let line = i as u64 + 2;
            if !(r.frequency.is_finite() && r.frequency > 0.0) {
                return Err(parse_err(line, format!("frequency {} must be finite and > 0", r.frequency)));
            }
            if r.loss_db.is_nan() || r.loss_db == f64::INFINITY {
                return Err(parse_err(line, format!("loss {} dB is not allowed", r.loss_db)));
            }
            if !r.phase_deg.is_finite() {
                return Err(parse_err(line, format!("phase {} must be finite", r.phase_deg)));
            }
            if i > 0 && !(r.frequency > rows[i - 1].frequency) {
                return Err(parse_err(line, "frequencies must be strictly ascending"));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_response(response: &FrequencyResponse) -> Self {
        Self {
            rows: response
                .points()
                .iter()
                .map(|p| CurveRow {
                    frequency: p.frequency,
                    loss_db: loss_db(p.h),
                    phase_deg: p.h.arg().to_degrees(),
                })
                .collect(),
        }
    }

    pub fn rows(&self) -> &[CurveRow] {
        &self.rows
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.frequency).collect()
    }

    pub fn from_reader(reader: impl Read) -> Result<Self, IoError> {
        let rows = read_rows(reader, CURVE_HEADER)?;
        Self::new(
            rows.into_iter()
                .map(|(_, [frequency, loss_db, phase_deg])| CurveRow {
                    frequency,
                    loss_db,
                    phase_deg,
                })
                .collect(),
        )
    }

    pub fn read_csv(path: &Path) -> Result<Self, IoError> {
        Self::from_reader(open(path)?)
    }

    pub fn to_writer(&self, writer: impl Write) -> Result<(), IoError> {
        write_rows(
            writer,
            CURVE_HEADER,
            self.rows.iter().map(|r| [r.frequency, r.loss_db, r.phase_deg]),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IoError> {
        self.to_writer(create(path)?)
    }

    /// Removes `chain` by subtracting its gain in dB and its phase in degrees.
    /// An identity chain leaves every loss value unchanged.
    pub fn deembed(&self, chain: &ReceiveChain, threshold: f64) -> Result<Self, IoError> {
        let mut rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let hc = checked_chain_response(chain, r.frequency, threshold)?;
            rows.push(CurveRow {
                frequency: r.frequency,
                loss_db: r.loss_db - loss_db(hc),
                phase_deg: r.phase_deg - hc.arg().to_degrees(),
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareReport {
    pub max_abs_diff_db: f64,
    pub worst_frequency: f64,
    pub tol_db: f64,
    pub passed: bool,
}

/// Pointwise loss difference on a shared grid. Frequencies must agree to a
/// relative `1e-9`; two `-inf` values count as equal.
pub fn compare(a: &Curve, b: &Curve, tol_db: f64) -> Result<CompareReport, IoError> {
    if a.rows.len() != b.rows.len() {
        let row = a.rows.len().min(b.rows.len());
        let fa = a.rows.get(row).map_or(f64::NAN, |r| r.frequency);
        let fb = b.rows.get(row).map_or(f64::NAN, |r| r.frequency);
        return Err(IoError::GridMismatch { row, a: fa, b: fb });
    }
    let mut worst = (0.0f64, a.rows[0].frequency);
    for (row, (ra, rb)) in a.rows.iter().zip(&b.rows).enumerate() {
        if (ra.frequency - rb.frequency).abs() > 1e-9 * ra.frequency.abs().max(rb.frequency.abs()) {
            return Err(IoError::GridMismatch {
                row,
                a: ra.frequency,
                b: rb.frequency,
            });
        }
        let diff = if ra.loss_db == rb.loss_db {
            0.0
        } else {
            (ra.loss_db - rb.loss_db).abs()
        };
        if diff > worst.0 || diff.is_nan() {
            worst = (diff, ra.frequency);
        }
    }
    Ok(CompareReport {
        max_abs_diff_db: worst.0,
        worst_frequency: worst.1,
        tol_db,
        passed: worst.0 <= tol_db,
    })
}

pub fn read_return_cap_csv(reader: impl Read) -> Result<Vec<ReturnCapMeasurement>, IoError> {
    Ok(read_rows(reader, RETURN_CAP_HEADER)?
        .into_iter()
        .map(|(_, [c_expt, ratio])| ReturnCapMeasurement { c_expt, ratio })
        .collect())
}

pub fn read_time_constant_csv(reader: impl Read) -> Result<Vec<TimeConstantMeasurement>, IoError> {
    Ok(read_rows(reader, TIME_CONSTANT_HEADER)?
        .into_iter()
        .map(|(_, [r_ext, tau])| TimeConstantMeasurement { r_ext, tau })
        .collect())
}

pub fn read_return_cap_file(path: &Path) -> Result<Vec<ReturnCapMeasurement>, IoError> {
    read_return_cap_csv(open(path)?)
}

pub fn read_time_constant_file(path: &Path) -> Result<Vec<TimeConstantMeasurement>, IoError> {
    read_time_constant_csv(open(path)?)
}

pub fn read_trace_csv(reader: impl Read) -> Result<SampleTrace, IoError> {
    let rows = read_rows(reader, TRACE_HEADER)?;
    Ok(SampleTrace::from_pairs(rows.into_iter().map(|(_, [t, v])| (t, v)))?)
}

pub fn read_trace_file(path: &Path) -> Result<SampleTrace, IoError> {
    read_trace_csv(open(path)?)
}

pub fn write_trace_csv(trace: &SampleTrace, writer: impl Write) -> Result<(), IoError> {
    write_rows(writer, TRACE_HEADER, trace.iter().map(|(t, v)| [t, v]))
}

pub fn write_trace_file(trace: &SampleTrace, path: &Path) -> Result<(), IoError> {
    write_trace_csv(trace, create(path)?)
}
