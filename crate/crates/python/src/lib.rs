//! Python bindings: channel presets and sweeps, netlists, parameter fits,
//! the amplitude estimator and receive-chain de-embedding.

use hbc_core::circuit::{self, CircuitError};
use hbc_core::config::{ConfigError, RunConfig};
use hbc_core::deembed::{self, ChainStage, DeembedError};
use hbc_core::estimation::{self, EstimationError, ReturnCapMeasurement, TimeConstantMeasurement};
use hbc_core::io::{Curve, IoError};
use hbc_core::model::{self, ModelError};
use hbc_core::sampling::{self, SamplingError};
use hbc_core::units::{self, Unit};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyAttributeError, PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

create_exception!(hbc_channel, HbcError, PyException);
create_exception!(hbc_channel, CircuitFailure, HbcError);
create_exception!(hbc_channel, ModelFailure, HbcError);
create_exception!(hbc_channel, FitFailure, HbcError);
create_exception!(hbc_channel, EstimationFailure, HbcError);
create_exception!(hbc_channel, DeembedFailure, HbcError);
create_exception!(hbc_channel, InputFailure, HbcError);

fn circuit_err(e: CircuitError) -> PyErr {
    CircuitFailure::new_err(e.to_string())
}

fn model_err(e: ModelError) -> PyErr {
    ModelFailure::new_err(e.to_string())
}

fn fit_err(e: EstimationError) -> PyErr {
    FitFailure::new_err(e.to_string())
}

fn sampling_err(e: SamplingError) -> PyErr {
    EstimationFailure::new_err(e.to_string())
}

fn deembed_err(e: DeembedError) -> PyErr {
    DeembedFailure::new_err(e.to_string())
}

fn io_err(e: IoError) -> PyErr {
    match e {
        IoError::Deembed(d) => deembed_err(d),
        other => InputFailure::new_err(other.to_string()),
    }
}

fn config_err(e: ConfigError) -> PyErr {
    InputFailure::new_err(e.to_string())
}

fn unit_from_name(name: &str) -> PyResult<Unit> {
    Ok(match name {
        "ohm" | "Ω" => Unit::Ohm,
        "F" | "farad" => Unit::Farad,
        "Hz" | "hertz" => Unit::Hertz,
        "s" | "second" => Unit::Second,
        "V" | "volt" => Unit::Volt,
        other => return Err(PyValueError::new_err(format!("unknown unit `{other}`"))),
    })
}

/// Parses a suffixed quantity such as `"13pF"` into SI base units.
#[pyfunction]
fn parse_quantity(text: &str, unit: &str) -> PyResult<f64> {
    units::parse_quantity(text, unit_from_name(unit)?).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn format_quantity(value: f64, unit: &str) -> PyResult<String> {
    Ok(units::format_quantity(value, unit_from_name(unit)?))
}

#[pyfunction]
fn log_frequencies(start: f64, stop: f64, points_per_decade: usize) -> Vec<f64> {
    circuit::log_frequencies(start, stop, points_per_decade)
}

#[pyfunction]
fn default_frequencies() -> Vec<f64> {
    model::default_frequencies()
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    model::CHANNEL_PRESETS.to_vec()
}

#[pyfunction]
fn highpass_cutoff(r_load: f64, c_return_effective: f64) -> PyResult<f64> {
    model::highpass_cutoff(r_load, c_return_effective).map_err(model_err)
}

/// Body-model component values in SI units. Fields are attributes.
#[pyclass(name = "ModelParameters", from_py_object)]
#[derive(Clone)]
struct PyModelParameters {
    inner: model::ModelParameters,
}

#[pymethods]
impl PyModelParameters {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = model::ModelParameters::default();
        if let Some(d) = overrides {
            for (k, v) in d.iter() {
                let key: String = k.extract()?;
                let slot = inner
                    .field_mut(&key)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown parameter `{key}`")))?;
                *slot = v.extract()?;
            }
        }
        inner.validate().map_err(model_err)?;
        Ok(Self { inner })
    }

    fn __getattr__(&self, name: &str) -> PyResult<f64> {
        self.inner
            .entries()
            .iter()
            .find(|(k, _)| *k == name)
            .map(|&(_, v)| v)
            .ok_or_else(|| PyAttributeError::new_err(name.to_string()))
    }

    fn __setattr__(&mut self, name: &str, value: f64) -> PyResult<()> {
        let slot = self
            .inner
            .field_mut(name)
            .ok_or_else(|| PyAttributeError::new_err(name.to_string()))?;
        *slot = value;
        Ok(())
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, v) in self.inner.entries() {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let fields: Vec<String> = self.inner.entries().iter().map(|(k, v)| format!("{k}={v:e}")).collect();
        format!("ModelParameters({})", fields.join(", "))
    }
}

/// Grounding regime, modalities, load and parameters of one channel.
#[pyclass(name = "ChannelConfig", from_py_object)]
#[derive(Clone)]
struct PyChannelConfig {
    inner: model::ChannelConfig,
}

#[pymethods]
impl PyChannelConfig {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: model::ChannelConfig::preset(name).map_err(model_err)?,
        })
    }

    /// Channel section of a TOML run configuration file.
    #[staticmethod]
    fn from_toml(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).map_err(config_err)?.channel,
        })
    }

    fn with_params(&self, params: &PyModelParameters) -> Self {
        Self {
            inner: self.inner.with_params(params.inner),
        }
    }

    #[getter]
    fn params(&self) -> PyModelParameters {
        PyModelParameters { inner: self.inner.params }
    }

    #[getter]
    fn ground(&self) -> String {
        self.inner.ground.to_string()
    }

    #[getter]
    fn r_load(&self) -> f64 {
        self.inner.load.r_load
    }

    #[getter]
    fn c_load(&self) -> Option<f64> {
        self.inner.load.c_load
    }

    /// Sweeps the channel; `frequencies` defaults to 10 kHz–1 MHz.
    #[pyo3(signature = (frequencies = None))]
    fn sweep(&self, frequencies: Option<Vec<f64>>) -> PyResult<PySweep> {
        let freqs = frequencies.unwrap_or_else(model::default_frequencies);
        let r = model::channel_loss(&self.inner, &freqs).map_err(model_err)?;
        Ok(PySweep {
            frequencies: r.frequencies(),
            loss_db: r.loss_db(),
            phase_deg: r.phase_deg(),
            h: r.points().iter().map(|p| p.h).collect(),
        })
    }

    fn netlist(&self) -> PyResult<PyNetlist> {
        Ok(PyNetlist {
            inner: model::build_channel(&self.inner).map_err(model_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ChannelConfig(ground={}, excitation={:?}, termination={:?}, r_load={:e}, c_load={:?})",
            self.inner.ground, self.inner.excitation, self.inner.termination, self.inner.load.r_load, self.inner.load.c_load
        )
    }
}

/// Frequency sweep result.
#[pyclass(name = "Sweep", get_all)]
struct PySweep {
    frequencies: Vec<f64>,
    loss_db: Vec<f64>,
    phase_deg: Vec<f64>,
    h: Vec<Complex64>,
}

#[pymethods]
impl PySweep {
    fn mean_loss_db(&self) -> f64 {
        self.loss_db.iter().sum::<f64>() / self.loss_db.len() as f64
    }

    fn spread_db(&self) -> f64 {
        let hi = self.loss_db.iter().cloned().fold(f64::MIN, f64::max);
        let lo = self.loss_db.iter().cloned().fold(f64::MAX, f64::min);
        hi - lo
    }

    /// Writes a `frequency_hz,loss_db,phase_deg` CSV.
    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let rows = self
            .frequencies
            .iter()
            .zip(&self.loss_db)
            .zip(&self.phase_deg)
            .map(|((&frequency, &loss_db), &phase_deg)| hbc_core::io::CurveRow {
                frequency,
                loss_db,
                phase_deg,
            })
            .collect();
        Curve::new(rows).and_then(|c| c.write_csv(&path)).map_err(io_err)
    }

    fn __len__(&self) -> usize {
        self.frequencies.len()
    }
}

/// Incremental netlist construction with nodes named by string; `"gnd"` is
/// ground.
#[pyclass(name = "NetlistBuilder")]
struct PyNetlistBuilder {
    inner: circuit::NetlistBuilder,
}

#[pymethods]
impl PyNetlistBuilder {
    #[new]
    fn new() -> Self {
        Self {
            inner: circuit::NetlistBuilder::new(),
        }
    }

    fn resistor(&mut self, a: &str, b: &str, ohms: f64) {
        let (a, b) = (self.inner.node(a), self.inner.node(b));
        self.inner.resistor(a, b, ohms);
    }

    fn capacitor(&mut self, a: &str, b: &str, farads: f64) {
        let (a, b) = (self.inner.node(a), self.inner.node(b));
        self.inner.capacitor(a, b, farads);
    }

    fn voltage_source(&mut self, plus: &str, minus: &str, volts: f64) {
        let (a, b) = (self.inner.node(plus), self.inner.node(minus));
        self.inner.voltage_source(a, b, volts);
    }

    /// Single-ended output at `pos`, or differential `pos - neg`.
    #[pyo3(signature = (pos, neg = None))]
    fn output(&mut self, pos: &str, neg: Option<&str>) {
        let p = self.inner.node(pos);
        match neg {
            Some(n) => {
                let n = self.inner.node(n);
                self.inner.output_pair(p, n);
            }
            None => {
                self.inner.output_node(p);
            }
        }
    }

    fn build(&self) -> PyResult<PyNetlist> {
        Ok(PyNetlist {
            inner: self.inner.build().map_err(circuit_err)?,
        })
    }
}

#[pyclass(name = "Netlist")]
struct PyNetlist {
    inner: circuit::Netlist,
}

#[pymethods]
impl PyNetlist {
    /// Complex output voltage over source voltage at `frequency`.
    fn transfer(&self, frequency: f64) -> PyResult<Complex64> {
        self.inner.transfer(frequency).map_err(circuit_err)
    }

    /// Node voltages by label, plus the KCL residual.
    fn solve<'py>(&self, py: Python<'py>, frequency: f64) -> PyResult<(Bound<'py, PyDict>, f64)> {
        let s = self.inner.solve_ac(frequency).map_err(circuit_err)?;
        let d = PyDict::new(py);
        for (k, v) in s.to_map(&self.inner) {
            d.set_item(k, v)?;
        }
        Ok((d, s.kcl_residual))
    }

    fn node_labels(&self) -> Vec<String> {
        self.inner.nodes().map(|(_, l)| l.to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.elements().len()
    }
}

#[pyfunction]
fn loss_db(h: Complex64) -> f64 {
    circuit::loss_db(h)
}

#[pyclass(name = "FitResult", get_all)]
struct PyFitResult {
    estimate: f64,
    residuals: Vec<f64>,
    rms_residual: f64,
    iterations: usize,
}

impl From<estimation::FitResult> for PyFitResult {
    fn from(f: estimation::FitResult) -> Self {
        Self {
            estimate: f.estimate,
            residuals: f.residuals,
            rms_residual: f.rms_residual,
            iterations: f.iterations,
        }
    }
}

#[pymethods]
impl PyFitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(estimate={:e}, rms_residual={:e}, iterations={})",
            self.estimate, self.rms_residual, self.iterations
        )
    }
}

#[pyfunction]
fn forward_loss_ratio(c_ret: f64, c_load: f64, c_expt: f64) -> f64 {
    estimation::forward_loss_ratio(c_ret, c_load, c_expt)
}

/// Fits the total return capacitance from `(c_expt, loss_ratio)` pairs.
#[pyfunction]
fn fit_return_capacitance(measurements: Vec<(f64, f64)>, c_load: f64) -> PyResult<PyFitResult> {
    let data: Vec<ReturnCapMeasurement> = measurements
        .into_iter()
        .map(|(c_expt, ratio)| ReturnCapMeasurement { c_expt, ratio })
        .collect();
    Ok(estimation::fit_return_capacitance(&data, c_load).map_err(fit_err)?.into())
}

/// Fits the body-to-ground capacitance from `(r_ext, tau)` pairs.
#[pyfunction]
fn fit_body_ground_capacitance(measurements: Vec<(f64, f64)>, c_load: f64) -> PyResult<PyFitResult> {
    let data: Vec<TimeConstantMeasurement> = measurements
        .into_iter()
        .map(|(r_ext, tau)| TimeConstantMeasurement { r_ext, tau })
        .collect();
    Ok(estimation::fit_body_ground_capacitance(&data, c_load).map_err(fit_err)?.into())
}

#[pyclass(name = "SampleTrace")]
struct PySampleTrace {
    inner: sampling::SampleTrace,
}

#[pymethods]
impl PySampleTrace {
    #[new]
    fn new(times: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: sampling::SampleTrace::new(times, values).map_err(|e| InputFailure::new_err(e.to_string()))?,
        })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Samples a square wave at `rate` with uniform timing jitter and Gaussian
/// noise. Deterministic for a given seed.
#[pyfunction]
#[pyo3(signature = (amplitude, frequency, rate, samples, seed, jitter = 0.45, noise_sigma = 0.0, duty = 0.5))]
#[allow(clippy::too_many_arguments)]
fn sample_square(
    amplitude: f64,
    frequency: f64,
    rate: f64,
    samples: usize,
    seed: u64,
    jitter: f64,
    noise_sigma: f64,
    duty: f64,
) -> PyResult<PySampleTrace> {
    let wave = sampling::synthesize_square(amplitude, frequency, duty, noise_sigma, samples as f64 / rate)
        .map_err(|e| InputFailure::new_err(e.to_string()))?;
    let inner = sampling::sample_signal(&wave, rate, jitter, samples, seed).map_err(|e| InputFailure::new_err(e.to_string()))?;
    Ok(PySampleTrace { inner })
}

#[pyclass(name = "AmplitudeEstimate", get_all)]
struct PyAmplitudeEstimate {
    amplitude: f64,
    spread: f64,
    histograms_averaged: usize,
    bin_width: f64,
}

#[pymethods]
impl PyAmplitudeEstimate {
    fn __repr__(&self) -> String {
        format!(
            "AmplitudeEstimate(amplitude={}, bin_width={}, histograms_averaged={})",
            self.amplitude, self.bin_width, self.histograms_averaged
        )
    }
}

#[pyfunction]
#[pyo3(signature = (trace, bins = sampling::DEFAULT_BINS, repetitions = sampling::DEFAULT_REPETITIONS, zero_exclusion = None))]
fn estimate_amplitude(
    trace: &PySampleTrace,
    bins: usize,
    repetitions: usize,
    zero_exclusion: Option<f64>,
) -> PyResult<PyAmplitudeEstimate> {
    let opts = sampling::EstimatorOptions {
        bins,
        zero_exclusion,
        repetitions,
    };
    let e = sampling::estimate_amplitude(&trace.inner, &opts).map_err(sampling_err)?;
    Ok(PyAmplitudeEstimate {
        amplitude: e.amplitude,
        spread: e.spread,
        histograms_averaged: e.histograms_averaged,
        bin_width: e.bin_width,
    })
}

/// Receive chain as a cascade of `("flat-gain", gain)` and
/// `("high-pass", corner_hz)` stages.
#[pyclass(name = "ReceiveChain", from_py_object)]
#[derive(Clone)]
struct PyReceiveChain {
    inner: deembed::ReceiveChain,
}

#[pymethods]
impl PyReceiveChain {
    #[new]
    fn new(stages: Vec<(String, f64)>) -> PyResult<Self> {
        let stages = stages
            .into_iter()
            .map(|(kind, v)| match kind.as_str() {
                "flat-gain" => Ok(ChainStage::FlatGain { gain: v }),
                "high-pass" => Ok(ChainStage::HighPass { corner: v }),
                other => Err(PyValueError::new_err(format!("unknown stage kind `{other}`"))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: deembed::ReceiveChain::new(stages).map_err(deembed_err)?,
        })
    }

    #[staticmethod]
    fn wearable_default() -> Self {
        Self {
            inner: deembed::ReceiveChain::wearable_default(),
        }
    }

    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: deembed::ReceiveChain::identity(),
        }
    }

    fn response(&self, frequency: f64) -> PyResult<Complex64> {
        self.inner.response(frequency).map_err(deembed_err)
    }
}

#[pyfunction]
fn embed(channel: Complex64, frequency: f64, chain: &PyReceiveChain) -> PyResult<Complex64> {
    deembed::embed(channel, frequency, &chain.inner).map_err(deembed_err)
}

#[pyfunction(name = "deembed")]
#[pyo3(signature = (measured, frequency, chain, threshold = deembed::DEFAULT_MIN_CHAIN_MAGNITUDE))]
fn deembed_response(measured: Complex64, frequency: f64, chain: &PyReceiveChain, threshold: f64) -> PyResult<Complex64> {
    deembed::deembed_with_threshold(measured, frequency, &chain.inner, threshold).map_err(deembed_err)
}

#[pymodule]
fn hbc_channel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("HbcError", py.get_type::<HbcError>())?;
    m.add("CircuitFailure", py.get_type::<CircuitFailure>())?;
    m.add("ModelFailure", py.get_type::<ModelFailure>())?;
    m.add("FitFailure", py.get_type::<FitFailure>())?;
    m.add("EstimationFailure", py.get_type::<EstimationFailure>())?;
    m.add("DeembedFailure", py.get_type::<DeembedFailure>())?;
    m.add("InputFailure", py.get_type::<InputFailure>())?;

    m.add_class::<PyModelParameters>()?;
    m.add_class::<PyChannelConfig>()?;
    m.add_class::<PySweep>()?;
    m.add_class::<PyNetlistBuilder>()?;
    m.add_class::<PyNetlist>()?;
    m.add_class::<PyFitResult>()?;
    m.add_class::<PySampleTrace>()?;
    m.add_class::<PyAmplitudeEstimate>()?;
    m.add_class::<PyReceiveChain>()?;

    m.add_function(wrap_pyfunction!(parse_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(format_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(log_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(default_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(highpass_cutoff, m)?)?;
    m.add_function(wrap_pyfunction!(loss_db, m)?)?;
    m.add_function(wrap_pyfunction!(forward_loss_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(fit_return_capacitance, m)?)?;
    m.add_function(wrap_pyfunction!(fit_body_ground_capacitance, m)?)?;
    m.add_function(wrap_pyfunction!(sample_square, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(deembed_response, m)?)?;
    Ok(())
}
