//! Sample traces and the histogram-of-differences amplitude estimator used
//! by the wearable receiver.
//!
//! A square wave sampled at random instants only ever lands on one of two
//! levels, so the absolute difference of consecutive samples is either about
//! zero or about the peak-to-peak amplitude, whatever the sampling rate. The
//! estimator drops the near-zero differences, histograms the rest, and
//! reports the middle of the dominant peak.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Shortest segment a repetition may be built from.
pub const MIN_SEGMENT_SAMPLES: usize = 8;
pub const MIN_BINS: usize = 8;
pub const DEFAULT_BINS: usize = 64;
pub const DEFAULT_REPETITIONS: usize = 10;
/// Default zero-exclusion threshold as a fraction of the largest difference.
pub const DEFAULT_EXCLUSION_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("trace has {got} samples, need at least {needed}")]
    TraceTooShort { needed: usize, got: usize },
    #[error("no transitions captured: every consecutive difference is below the zero-exclusion threshold")]
    NoTransitions,
    #[error("no amplitude peak separates from the zero cluster")]
    AllNoise,
}

fn invalid(msg: impl Into<String>) -> SamplingError {
    SamplingError::InvalidInput(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JitterModel {
    None,
    /// Uniform offset in `±fraction / rate`.
    Uniform { fraction: f64 },
    /// Loaded from a file; timing unknown.
    Unknown,
}

/// Time-stamped voltage samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    times: Vec<f64>,
    values: Vec<f64>,
    pub nominal_rate: Option<f64>,
    pub jitter: JitterModel,
}

impl SampleTrace {
    /// Timestamps must be finite and strictly increasing.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, SamplingError> {
        if times.len() != values.len() {
            return Err(invalid(format!(
                "{} timestamps but {} values",
                times.len(),
                values.len()
            )));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(invalid(format!("timestamps not strictly increasing at sample {}", i + 1)));
            }
        }
        if let Some(bad) = times.iter().chain(&values).find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite sample {bad}")));
        }
        Ok(Self {
            times,
            values,
            nominal_rate: None,
            jitter: JitterModel::Unknown,
        })
    }

    /// Builds from `(t, v)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, SamplingError> {
        let (times, values) = pairs.into_iter().unzip();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Uniform ADC quantization of `[0, full_scale]` to `bits` bits, clamping
    /// out-of-range samples.
    pub fn quantized(&self, bits: u32, full_scale: f64) -> Result<Self, SamplingError> {
        if !(1..=24).contains(&bits) || !(full_scale.is_finite() && full_scale > 0.0) {
            return Err(invalid("quantizer needs 1..=24 bits and a positive full scale"));
        }
        let top = ((1u64 << bits) - 1) as f64;
        let lsb = full_scale / top;
        let mut out = self.clone();
        for v in &mut out.values {
            *v = (*v / lsb).round().clamp(0.0, top) * lsb;
        }
        Ok(out)
    }
}

/// Square wave between `0` and `amplitude`, high for the first `duty`
/// fraction of each period, plus optional white gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareWave {
    pub amplitude: f64,
    pub frequency: f64,
    pub duty: f64,
    pub noise_sigma: f64,
    pub duration: f64,
}

pub fn synthesize_square(
    amplitude: f64,
    frequency: f64,
    duty: f64,
    noise_sigma: f64,
    duration: f64,
) -> Result<SquareWave, SamplingError> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(invalid(format!("amplitude must be > 0, got {amplitude}")));
    }
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(invalid(format!("frequency must be > 0, got {frequency}")));
    }
    if !(duty > 0.0 && duty < 1.0) {
        return Err(invalid(format!("duty must be in (0, 1), got {duty}")));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid(format!("duration must be > 0, got {duration}")));
    }
    Ok(SquareWave {
        amplitude,
        frequency,
        duty,
        noise_sigma,
        duration,
    })
}

impl SquareWave {
    /// Noiseless level at time `t` (any real `t`; the wave is periodic).
    pub fn level(&self, t: f64) -> f64 {
        let phase = (t * self.frequency).rem_euclid(1.0);
        if phase < self.duty {
            self.amplitude
        } else {
            0.0
        }
    }

    /// Level plus one noise draw.
    pub fn eval<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        let level = self.level(t);
        if self.noise_sigma == 0.0 {
            return level;
        }
        let noise = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
        level + noise.sample(rng)
    }
}

/// Samples `signal` at `t_k = k / rate + U(±jitter_fraction / rate)`.
/// The same seed always gives the same trace.
pub fn sample_signal(
    signal: &SquareWave,
    rate: f64,
    jitter_fraction: f64,
    n: usize,
    seed: u64,
) -> Result<SampleTrace, SamplingError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(invalid(format!("rate must be > 0, got {rate}")));
    }
    if !(0.0..0.5).contains(&jitter_fraction) {
        return Err(invalid(format!("jitter fraction must be in [0, 0.5), got {jitter_fraction}")));
    }
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    let last = (n - 1) as f64 / rate;
    if last > signal.duration {
        return Err(invalid(format!(
            "{n} samples at {rate} Hz span {last} s, beyond the signal duration {} s",
            signal.duration
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let period = 1.0 / rate;
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let offset = if jitter_fraction > 0.0 {
            rng.random_range(-jitter_fraction..=jitter_fraction) * period
        } else {
            0.0
        };
        let t = k as f64 * period + offset;
        times.push(t);
        values.push(signal.eval(t, &mut rng));
    }
    let mut trace = SampleTrace::new(times, values)?;
    trace.nominal_rate = Some(rate);
    trace.jitter = if jitter_fraction > 0.0 {
        JitterModel::Uniform {
            fraction: jitter_fraction,
        }
    } else {
        JitterModel::None
    };
    Ok(trace)
}

/// Histogram of consecutive-sample differences on uniform bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub source_count: u64,
}

impl DifferenceHistogram {
    /// Bins `differences` that are `>= exclusion` over `[0, range_max]`; the
    /// top edge is inclusive.
    pub fn build(differences: &[f64], bins: usize, range_max: f64, exclusion: f64) -> Result<Self, SamplingError> {
        if bins < MIN_BINS {
            return Err(invalid(format!("need at least {MIN_BINS} bins, got {bins}")));
        }
        if !(range_max.is_finite() && range_max > 0.0) {
            return Err(invalid(format!("histogram range must be > 0, got {range_max}")));
        }
        let width = range_max / bins as f64;
        let bin_edges = (0..=bins).map(|i| i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        let mut source_count = 0;
        for &d in differences {
            if d < exclusion || d > range_max {
                continue;
            }
            let idx = ((d / width) as usize).min(bins - 1);
            counts[idx] += 1;
            source_count += 1;
        }
        Ok(Self {
            bin_edges,
            counts,
            source_count,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    /// Contiguous run of bins above half the peak count, as `(first, last)`.
    pub fn half_max_run(&self) -> Option<(usize, usize)> {
        let (peak_idx, &peak) = self
            .counts
            .iter()
            .enumerate()
            .fold((0, &0u64), |best, cur| if cur.1 > best.1 { cur } else { best });
        if peak == 0 {
            return None;
        }
        let above = |i: usize| 2 * self.counts[i] > peak;
        let mut lo = peak_idx;
        while lo > 0 && above(lo - 1) {
            lo -= 1;
        }
        let mut hi = peak_idx;
        while hi + 1 < self.counts.len() && above(hi + 1) {
            hi += 1;
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub bins: usize,
    /// Differences below this are discarded; `None` means
    /// [`DEFAULT_EXCLUSION_FRACTION`] of the largest difference.
    pub zero_exclusion: Option<f64>,
    pub repetitions: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            zero_exclusion: None,
            repetitions: DEFAULT_REPETITIONS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeEstimate {
    pub amplitude: f64,
    /// Mean width of the half-maximum peak run.
    pub spread: f64,
    pub histograms_averaged: usize,
    pub bin_width: f64,
}

/// Splits the trace into `repetitions` segments, histograms each segment's
/// consecutive differences, takes the midpoint of the dominant peak's
/// half-maximum run, and averages the midpoints.
///
/// A segment's peak is rejected as noise when its run reaches down to the
/// exclusion threshold or sits closer to it than its own width. The trace is
/// `AllNoise` when more segments are rejected than accepted.
pub fn estimate_amplitude(trace: &SampleTrace, opts: &EstimatorOptions) -> Result<AmplitudeEstimate, SamplingError> {
    if opts.repetitions == 0 {
        return Err(invalid("repetitions must be >= 1"));
    }
    if opts.bins < MIN_BINS {
        return Err(invalid(format!("need at least {MIN_BINS} bins, got {}", opts.bins)));
    }
    let needed = 2 * opts.repetitions * MIN_SEGMENT_SAMPLES;
    if trace.len() < needed {
        return Err(SamplingError::TraceTooShort {
            needed,
            got: trace.len(),
        });
    }
    if let Some(x) = opts.zero_exclusion {
        if !(x.is_finite() && x >= 0.0) {
            return Err(invalid(format!("zero exclusion must be >= 0, got {x}")));
        }
    }

    let values = trace.values();
    let max_d = values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    if max_d == 0.0 {
        return Err(SamplingError::NoTransitions);
    }
    let exclusion = opts.zero_exclusion.unwrap_or(DEFAULT_EXCLUSION_FRACTION * max_d);
    if max_d < exclusion {
        return Err(SamplingError::NoTransitions);
    }

    let seg_len = values.len() / opts.repetitions;
    let width = max_d / opts.bins as f64;
    let exclusion_bin = ((exclusion / width) as usize).min(opts.bins - 1);

    let mut midpoints = Vec::with_capacity(opts.repetitions);
    let mut spreads = Vec::with_capacity(opts.repetitions);
    let mut saw_transitions = false;
    let mut rejected = 0;
    for r in 0..opts.repetitions {
        let segment = &values[r * seg_len..(r + 1) * seg_len];
        let diffs: Vec<f64> = segment.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let hist = DifferenceHistogram::build(&diffs, opts.bins, max_d, exclusion)?;
        if hist.source_count == 0 {
            continue;
        }
        saw_transitions = true;
        let Some((lo, hi)) = hist.half_max_run() else {
            continue;
        };
        let run_width = hist.bin_edges[hi + 1] - hist.bin_edges[lo];
        if lo <= exclusion_bin + 1 || hist.bin_edges[lo] - exclusion < run_width {
            rejected += 1;
            continue;
        }
        midpoints.push(0.5 * (hist.bin_edges[lo] + hist.bin_edges[hi + 1]));
        spreads.push(hist.bin_edges[hi + 1] - hist.bin_edges[lo]);
    }

    if midpoints.is_empty() || rejected > midpoints.len() {
        return Err(if saw_transitions {
            SamplingError::AllNoise
        } else {
            SamplingError::NoTransitions
        });
    }
    let k = midpoints.len() as f64;
    Ok(AmplitudeEstimate {
        amplitude: midpoints.iter().sum::<f64>() / k,
        spread: spreads.iter().sum::<f64>() / k,
        histograms_averaged: midpoints.len(),
        bin_width: width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(amplitude: f64, f: f64, sigma: f64) -> SquareWave {
        synthesize_square(amplitude, f, 0.5, sigma, 1.0).unwrap()
    }

    #[test]
    fn half_period_apart_levels_are_opposite() {
        let s = square(1.0, 100e3, 0.0);
        assert_eq!(s.level(1e-6), 1.0);
        assert_eq!(s.level(6e-6), 0.0);
    }

    #[test]
    fn noiseless_wave_has_two_levels() {
        let s = square(0.3, 1e6, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut levels: Vec<f64> = (0..10_000).map(|k| s.eval(k as f64 * 1.3e-8, &mut rng)).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert_eq!(levels, vec![0.0, 0.3]);
    }

    #[test]
    fn time_average_is_midlevel() {
        // Midpoint-rule integration over 1000 periods.
        let s = square(2.0, 1e3, 0.0);
        let n = 1_000_000;
        let dt = 1.0 / n as f64;
        let avg: f64 = (0..n).map(|k| s.level((k as f64 + 0.5) * dt)).sum::<f64>() / n as f64;
        assert!((avg - 1.0).abs() < 1e-3, "{avg}");
    }

    #[test]
    fn synthesis_rejects_bad_ranges() {
        assert!(synthesize_square(0.0, 1.0, 0.5, 0.0, 1.0).is_err());
        assert!(synthesize_square(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(synthesize_square(1.0, 1.0, 0.5, -1.0, 1.0).is_err());
        assert!(synthesize_square(1.0, -1.0, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn synchronous_sampling_hits_at_most_two_phases() {
        // 100 kHz square sampled at 50 kHz: one sample every two periods.
        let s = square(1.0, 100e3, 0.0);
        let t = sample_signal(&s, 50e3, 0.0, 1000, 1).unwrap();
        let mut phases: Vec<i64> = t.times().iter().map(|t| ((t * 100e3).rem_euclid(1.0) * 1e6).round() as i64).collect();
        phases.sort();
        phases.dedup();
        assert!(phases.len() <= 2, "{phases:?}");
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let s = square(1.0, 1e6, 0.02);
        let a = sample_signal(&s, 800e3, 0.3, 500, 42).unwrap();
        let b = sample_signal(&s, 800e3, 0.3, 500, 42).unwrap();
        let c = sample_signal(&s, 800e3, 0.3, 500, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.jitter, JitterModel::Uniform { fraction: 0.3 });
    }

    #[test]
    fn oversampling_sees_both_levels() {
        let s = square(1.0, 100e3, 0.0);
        let t = sample_signal(&s, 1e6, 0.0, 100, 0).unwrap();
        assert!(t.values().contains(&0.0) && t.values().contains(&1.0));
    }

    #[test]
    fn sampling_preconditions() {
        let s = square(1.0, 1e3, 0.0);
        assert!(sample_signal(&s, 0.0, 0.0, 10, 0).is_err());
        assert!(sample_signal(&s, 1e3, 0.5, 10, 0).is_err());
        assert!(sample_signal(&s, 1e3, 0.0, 0, 0).is_err());
        assert!(sample_signal(&s, 1e3, 0.0, 5000, 0).is_err());
    }

    #[test]
    fn trace_requires_increasing_time() {
        assert!(SampleTrace::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SampleTrace::new(vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(SampleTrace::from_pairs([(0.0, 1.0), (1.0, 2.0)]).is_ok());
    }

    #[test]
    fn histogram_counts_match_source() {
        let d = [0.0, 0.05, 0.5, 0.99, 1.0, 1.0];
        let h = DifferenceHistogram::build(&d, 10, 1.0, 0.1).unwrap();
        assert_eq!(h.source_count, 4);
        assert_eq!(h.counts.iter().sum::<u64>(), h.source_count);
        assert_eq!(h.counts[9], 3);
        assert!(DifferenceHistogram::build(&d, 4, 1.0, 0.0).is_err());
    }

    #[test]
    fn noiseless_sub_nyquist_estimate_within_one_bin() {
        let s = square(0.3, 1e6, 0.0);
        let t = sample_signal(&s, 800e3, 0.45, 20_000, 7).unwrap();
        let est = estimate_amplitude(&t, &EstimatorOptions::default()).unwrap();
        assert!((est.amplitude - 0.3).abs() <= est.bin_width, "{est:?}");
        assert_eq!(est.histograms_averaged, DEFAULT_REPETITIONS);
    }

    #[test]
    fn constant_trace_has_no_transitions() {
        let t = SampleTrace::new((0..1000).map(|k| k as f64).collect(), vec![1.0; 1000]).unwrap();
        assert_eq!(estimate_amplitude(&t, &EstimatorOptions::default()), Err(SamplingError::NoTransitions));
    }

    #[test]
    fn pure_noise_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let v: Vec<f64> = (0..5000).map(|_| normal.sample(&mut rng)).collect();
        let t = SampleTrace::new((0..5000).map(|k| k as f64).collect(), v).unwrap();
        assert_eq!(estimate_amplitude(&t, &EstimatorOptions::default()), Err(SamplingError::AllNoise));
    }

    #[test]
    fn short_trace_and_bad_options() {
        let s = square(1.0, 1e6, 0.0);
        let t = sample_signal(&s, 800e3, 0.4, 100, 1).unwrap();
        assert!(matches!(
            estimate_amplitude(&t, &EstimatorOptions::default()),
            Err(SamplingError::TraceTooShort { needed: 160, got: 100 })
        ));
        let opts = EstimatorOptions { bins: 4, ..Default::default() };
        assert!(estimate_amplitude(&t, &opts).is_err());
    }

    #[test]
    fn estimate_is_deterministic() {
        let s = square(1.0, 1e6, 0.02);
        let t = sample_signal(&s, 1e6, 0.45, 10_000, 5).unwrap();
        let opts = EstimatorOptions::default();
        assert_eq!(estimate_amplitude(&t, &opts), estimate_amplitude(&t, &opts));
    }

    #[test]
    fn quantization_snaps_to_lsb_grid() {
        let t = SampleTrace::new(vec![0.0, 1.0, 2.0], vec![0.1234, 5.0, -1.0]).unwrap();
        let q = t.quantized(12, 3.3).unwrap();
        let lsb = 3.3 / 4095.0;
        assert!((q.values()[0] - 0.1234).abs() <= lsb / 2.0);
        assert_eq!(q.values()[1], 3.3);
        assert_eq!(q.values()[2], 0.0);
    }
}
