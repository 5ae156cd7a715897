//! Inverse problems: return-path capacitance from loss ratios, body-to-ground
//! capacitance from RC time constants, and time-constant extraction from a
//! step-response trace.

use crate::sampling::SampleTrace;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("measurement {index}: {reason}")]
    InvalidMeasurement { index: usize, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} distinct measurements, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no positive return capacitance fits the data")]
    NoPositiveSolution,
    #[error("fitted body capacitance {estimate:e} F is not positive")]
    NegativeEstimate { estimate: f64 },
    #[error("no settling step found: {0}")]
    NoSettling(String),
}

/// Measured loss ratio (linear, `0 < ratio < 1`) with `c_expt` farads of
/// added return capacitance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnCapMeasurement {
    pub c_expt: f64,
    pub ratio: f64,
}

/// Measured RC time constant with external resistor `r_ext`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConstantMeasurement {
    pub r_ext: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Farads.
    pub estimate: f64,
    /// One residual per input measurement, in input order.
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
    pub iterations: usize,
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt()
}

fn check_capacitance(name: &str, c: f64, allow_zero: bool) -> Result<(), EstimationError> {
    let ok = c.is_finite() && (c > 0.0 || (allow_zero && c == 0.0));
    if ok {
        Ok(())
    } else {
        Err(EstimationError::InvalidInput(format!("{name} = {c} is out of range")))
    }
}

/// Experimental capacitances used for synthetic return-capacitance campaigns.
pub const SYNTHETIC_C_EXPT: [f64; 5] = [0.0, 1e-12, 2.2e-12, 4.7e-12, 10e-12];

/// Ratio predicted for half-return `h`: two equal return capacitors in series
/// in parallel with `c_expt`, against the load `c_load`.
fn predicted_ratio(c_load: f64, c_expt: f64, h: f64) -> f64 {
    let cg = c_expt + h;
    cg / (c_load + cg)
}

/// Loss ratio the return-path divider gives for total return capacitance
/// `c_ret` (split equally between transmitter and receiver).
pub fn forward_loss_ratio(c_ret: f64, c_load: f64, c_expt: f64) -> f64 {
    predicted_ratio(c_load, c_expt, 0.5 * c_ret)
}

/// Fits `ratio = (C_expt + C_ret/2) / (C_L + C_expt + C_ret/2)` for `C_ret`.
///
/// Starts from the mean of the per-point closed form and refines by
/// Gauss-Newton on the ratio residuals. Repeated `c_expt` values are averaged
/// first.
pub fn fit_return_capacitance(
    measurements: &[ReturnCapMeasurement],
    c_load: f64,
) -> Result<FitResult, EstimationError> {
    check_capacitance("C_L", c_load, false)?;
    for (index, m) in measurements.iter().enumerate() {
        if !(m.c_expt.is_finite() && m.c_expt >= 0.0) {
            return Err(EstimationError::InvalidMeasurement {
                index,
                reason: format!("C_expt = {} must be >= 0", m.c_expt),
            });
        }
        if !(m.ratio > 0.0 && m.ratio < 1.0) {
            return Err(EstimationError::InvalidMeasurement {
                index,
                reason: format!("loss ratio {} must lie in (0, 1)", m.ratio),
            });
        }
    }

    let mut sorted = measurements.to_vec();
    sorted.sort_by(|a, b| a.c_expt.total_cmp(&b.c_expt));
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].c_expt == sorted[i].c_expt {
            j += 1;
        }
        let mean = sorted[i..j].iter().map(|m| m.ratio).sum::<f64>() / (j - i) as f64;
        points.push((sorted[i].c_expt, mean));
        i = j;
    }
    if points.len() < 2 {
        return Err(EstimationError::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }

    let objective = |h: f64| -> f64 {
        points
            .iter()
            .map(|&(c, r)| (r - predicted_ratio(c_load, c, h)).powi(2))
            .sum()
    };
    // dm/dh = C_L / (C_L + c + h)^2 > 0.
    let slope_at_zero: f64 = points
        .iter()
        .map(|&(c, r)| (r - predicted_ratio(c_load, c, 0.0)) * c_load / (c_load + c).powi(2))
        .sum();
    if slope_at_zero <= 0.0 {
        return Err(EstimationError::NoPositiveSolution);
    }

    let h0 = points
        .iter()
        .map(|&(c, r)| c_load * r / (1.0 - r) - c)
        .sum::<f64>()
        / points.len() as f64;
    let mut h = if h0 > 0.0 { h0 } else { 1e-3 * c_load };
    let mut cost = objective(h);
    let mut iterations = 0;
    for _ in 0..200 {
        iterations += 1;
        let (mut num, mut den) = (0.0, 0.0);
        for &(c, r) in &points {
            let jac = c_load / (c_load + c + h).powi(2);
            num += jac * (r - predicted_ratio(c_load, c, h));
            den += jac * jac;
        }
        let mut step = num / den;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = h + step;
            if trial > 0.0 {
                let trial_cost = objective(trial);
                if trial_cost <= cost {
                    h = trial;
                    cost = trial_cost;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || step.abs() <= 1e-13 * h {
            break;
        }
    }
    if !(h > 0.0) {
        return Err(EstimationError::NoPositiveSolution);
    }

    let residuals: Vec<f64> = measurements
        .iter()
        .map(|m| m.ratio - predicted_ratio(c_load, m.c_expt, h))
        .collect();
    Ok(FitResult {
        estimate: 2.0 * h,
        rms_residual: rms(&residuals),
        residuals,
        iterations,
    })
}

/// Fits `tau = R_ext (C_body + C_L)` by least squares through the origin.
/// Residuals are relative: `(tau - tau_fit) / tau`.
pub fn fit_body_ground_capacitance(
    measurements: &[TimeConstantMeasurement],
    c_load: f64,
) -> Result<FitResult, EstimationError> {
    check_capacitance("C_L", c_load, true)?;
    if measurements.is_empty() {
        return Err(EstimationError::InsufficientData { needed: 1, got: 0 });
    }
    for (index, m) in measurements.iter().enumerate() {
        if !(m.r_ext.is_finite() && m.r_ext > 0.0) {
            return Err(EstimationError::InvalidMeasurement {
                index,
                reason: format!("R_ext = {} must be > 0", m.r_ext),
            });
        }
        if !(m.tau.is_finite() && m.tau > 0.0) {
            return Err(EstimationError::InvalidMeasurement {
                index,
                reason: format!("tau = {} must be > 0", m.tau),
            });
        }
    }
    let total = if let [m] = measurements {
        m.tau / m.r_ext
    } else {
        let rt: f64 = measurements.iter().map(|m| m.r_ext * m.tau).sum();
        let rr: f64 = measurements.iter().map(|m| m.r_ext * m.r_ext).sum();
        rt / rr
    };
    let estimate = total - c_load;
    if !(estimate > 0.0) {
        return Err(EstimationError::NegativeEstimate { estimate });
    }
    let residuals: Vec<f64> = measurements
        .iter()
        .map(|m| (m.tau - m.r_ext * total) / m.tau)
        .collect();
    Ok(FitResult {
        estimate,
        rms_residual: rms(&residuals),
        residuals,
        iterations: 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConstantOptions {
    /// Trailing fraction of the trace averaged for the plateau.
    pub plateau_fraction: f64,
    /// Fit window on normalized progress `(v - v0) / (plateau - v0)`.
    pub window: (f64, f64),
}

impl Default for TimeConstantOptions {
    fn default() -> Self {
        Self {
            plateau_fraction: 0.1,
            window: (0.1, 0.9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConstantFit {
    pub tau: f64,
    pub plateau: f64,
    pub initial: f64,
    pub points_used: usize,
}

/// Extracts the time constant of a single-pole step response.
///
/// The plateau is the mean of the trailing samples and the start level is the
/// first sample. `ln(plateau - v)` is fitted linearly over the first passage
/// through the progress window, weighted by `(plateau - v)^2` so that
/// near-plateau samples, where noise dominates the logarithm, count less.
pub fn extract_time_constant(
    trace: &SampleTrace,
    opts: &TimeConstantOptions,
) -> Result<TimeConstantFit, EstimationError> {
    let (lo, hi) = opts.window;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(EstimationError::InvalidInput(format!("window ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
    }
    if !(opts.plateau_fraction > 0.0 && opts.plateau_fraction < 0.5) {
        return Err(EstimationError::InvalidInput(format!(
            "plateau fraction {} must be in (0, 0.5)",
            opts.plateau_fraction
        )));
    }
    let n = trace.len();
    if n < 10 {
        return Err(EstimationError::NoSettling(format!("only {n} samples")));
    }
    let (t, v) = (trace.times(), trace.values());
    let tail_len = ((n as f64 * opts.plateau_fraction).ceil() as usize).max(2);
    let tail = &v[n - tail_len..];
    let plateau = tail.iter().sum::<f64>() / tail_len as f64;
    let tail_sd = (tail.iter().map(|x| (x - plateau).powi(2)).sum::<f64>() / (tail_len - 1) as f64).sqrt();
    let initial = v[0];
    let step = plateau - initial;
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if step.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) || step.abs() <= 3.0 * tail_sd {
        return Err(EstimationError::NoSettling("no step above the plateau noise".into()));
    }

    let progress = |x: f64| (x - initial) / step;
    let Some(start) = v.iter().position(|&x| progress(x) >= lo) else {
        return Err(EstimationError::NoSettling("trace never leaves the start level".into()));
    };
    let end = v[start..]
        .iter()
        .position(|&x| progress(x) >= hi)
        .map_or(n, |k| start + k);

    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for k in start..end {
        let gap = (plateau - v[k]) / step;
        if gap <= 0.0 {
            continue;
        }
        let w = gap * gap;
        let y = gap.ln();
        let tk = t[k] - t[start];
        sw += w;
        st += w * tk;
        sy += w * y;
        stt += w * tk * tk;
        sty += w * tk * y;
        used += 1;
    }
    if used < 3 {
        return Err(EstimationError::NoSettling(format!("only {used} samples inside the fit window")));
    }
    let denom = sw * stt - st * st;
    let slope = (sw * sty - st * sy) / denom;
    if !(slope < 0.0) || !slope.is_finite() {
        return Err(EstimationError::NoSettling("response does not decay toward the plateau".into()));
    }
    Ok(TimeConstantFit {
        tau: -1.0 / slope,
        plateau,
        initial,
        points_used: used,
    })
}
