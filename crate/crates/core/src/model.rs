//! Lumped bio-physical channel model of capacitive human body communication.
//!
//! # Topology
//!
//! Every netlist is assembled from the same pieces:
//!
//! * source: `V_src` in series with `R_s`, referenced to the transmitter ground;
//! * electrode branch: `R_band ∥ C_band` (electrode-to-skin contact) followed
//!   by `R_skin ∥ C_skin` (skin layer);
//! * body core: `R_body` split into two halves around a "feet" node, giving
//!   the transmitter-side body node and the receiver-side body node;
//! * load: `R_L ∥ (C_L + C_Rx)` between the receiver pad and the receiver
//!   ground. `C_Rx` is folded into the load capacitance; presets without a
//!   load capacitor get no capacitor element at all.
//!
//! Capacitive-return netlists add the earth-coupling parasitics: `C_Tx_gnd`
//! from the Tx body node, `C_body` from the feet node, `C_Rx_gnd` from the Rx
//! body node, `C_Tx` from the transmitter ground to the Tx body node, and the
//! return capacitors from each device ground to earth (`gnd`). The output is
//! the receiver pad measured against the receiver's own ground.
//!
//! Common-ground netlists model the forward path only: transmitter and
//! receiver grounds are the same node (`gnd`) and the earth-coupling
//! parasitics are left out. Differential excitation adds a second Tx
//! electrode branch from the Tx body node back to the source return;
//! differential termination adds a second Rx electrode branch from the Rx
//! body node to the receiver reference.
//!
//! # Calibration
//!
//! The receiver-side return capacitance depends on what the receiver is.
//! Oscilloscopes and bench instruments sit on a mains-grounded chassis, so
//! their ground couples to earth through [`INSTRUMENT_GROUND_RETURN`]. The
//! battery-powered wearable receiver has a small ground plane and uses
//! [`WEARABLE_RECEIVER_RETURN`]. Custom loads default to the `C_ret_Rx` in
//! [`ModelParameters`].

use crate::circuit::{CircuitError, FrequencyResponse, Netlist, NetlistBuilder, NodeId};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Vacuum permittivity used for electrode estimates, F/m.
pub const EPSILON_0: f64 = 8.854e-12;

/// Earth coupling of a mains-grounded instrument chassis.
pub const INSTRUMENT_GROUND_RETURN: f64 = 1e-9;

/// Receiver ground-to-earth capacitance of the wearable receiver.
pub const WEARABLE_RECEIVER_RETURN: f64 = 0.75e-12;

/// Upper edge of the band the lumped model is meant for.
pub const MODEL_VALID_UP_TO_HZ: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be finite and > 0, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("unsupported channel configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Component values of the body model. `Default` gives the reference set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParameters {
    pub r_s: f64,
    pub c_band: f64,
    pub r_band: f64,
    pub r_skin: f64,
    pub c_skin: f64,
    pub r_body: f64,
    pub c_body: f64,
    pub c_tx_gnd: f64,
    pub c_rx_gnd: f64,
    pub c_tx: f64,
    pub c_rx: f64,
    pub c_ret_tx: f64,
    pub c_ret_rx: f64,
}

impl Default for ModelParameters {
    fn default() -> Self {
        Self {
            r_s: 50.0,
            c_band: 200e-12,
            r_band: 100.0,
            r_skin: 10e3,
            c_skin: 90e-12,
            r_body: 200.0,
            c_body: 9e-12,
            c_tx_gnd: 75e-12,
            c_rx_gnd: 75e-12,
            c_tx: 300e-15,
            c_rx: 300e-15,
            c_ret_tx: 1.5e-12,
            c_ret_rx: 1.5e-12,
        }
    }
}

impl ModelParameters {
    /// Field names in declaration order, as used in configuration files.
    pub const FIELDS: [&'static str; 13] = [
        "r_s", "c_band", "r_band", "r_skin", "c_skin", "r_body", "c_body", "c_tx_gnd", "c_rx_gnd",
        "c_tx", "c_rx", "c_ret_tx", "c_ret_rx",
    ];

    pub fn entries(&self) -> [(&'static str, f64); 13] {
        [
            ("r_s", self.r_s),
            ("c_band", self.c_band),
            ("r_band", self.r_band),
            ("r_skin", self.r_skin),
            ("c_skin", self.c_skin),
            ("r_body", self.r_body),
            ("c_body", self.c_body),
            ("c_tx_gnd", self.c_tx_gnd),
            ("c_rx_gnd", self.c_rx_gnd),
            ("c_tx", self.c_tx),
            ("c_rx", self.c_rx),
            ("c_ret_tx", self.c_ret_tx),
            ("c_ret_rx", self.c_ret_rx),
        ]
    }

    /// Mutable access by configuration name.
    pub fn field_mut(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "r_s" => &mut self.r_s,
            "c_band" => &mut self.c_band,
            "r_band" => &mut self.r_band,
            "r_skin" => &mut self.r_skin,
            "c_skin" => &mut self.c_skin,
            "r_body" => &mut self.r_body,
            "c_body" => &mut self.c_body,
            "c_tx_gnd" => &mut self.c_tx_gnd,
            "c_rx_gnd" => &mut self.c_rx_gnd,
            "c_tx" => &mut self.c_tx,
            "c_rx" => &mut self.c_rx,
            "c_ret_tx" => &mut self.c_ret_tx,
            "c_ret_rx" => &mut self.c_ret_rx,
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in self.entries() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadKind {
    Probe10x,
    Probe1x,
    Wearable,
    Instrument50Ohm,
    Custom,
}

impl LoadKind {
    pub fn name(self) -> &'static str {
        match self {
            LoadKind::Probe10x => "probe-10x",
            LoadKind::Probe1x => "probe-1x",
            LoadKind::Wearable => "wearable",
            LoadKind::Instrument50Ohm => "instrument-50ohm",
            LoadKind::Custom => "custom",
        }
    }
}

/// Which capacitance closes the receiver ground to earth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiverReturn {
    /// Use `ModelParameters::c_ret_rx`.
    Model,
    Capacitance(f64),
}

/// Receiver input impedance `R_L ∥ C_L` plus its ground coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPreset {
    pub kind: LoadKind,
    pub r_load: f64,
    /// `None` means no shunt capacitor element (pure resistive input).
    pub c_load: Option<f64>,
    pub receiver_return: ReceiverReturn,
}

impl LoadPreset {
    pub fn probe_10x() -> Self {
        Self {
            kind: LoadKind::Probe10x,
            r_load: 10e6,
            c_load: Some(13e-12),
            receiver_return: ReceiverReturn::Capacitance(INSTRUMENT_GROUND_RETURN),
        }
    }

    pub fn probe_1x() -> Self {
        Self {
            kind: LoadKind::Probe1x,
            r_load: 1e6,
            c_load: Some(79e-12),
            receiver_return: ReceiverReturn::Capacitance(INSTRUMENT_GROUND_RETURN),
        }
    }

    pub fn wearable() -> Self {
        Self {
            kind: LoadKind::Wearable,
            r_load: 10e6,
            c_load: Some(1e-12),
            receiver_return: ReceiverReturn::Capacitance(WEARABLE_RECEIVER_RETURN),
        }
    }

    pub fn instrument_50ohm() -> Self {
        Self {
            kind: LoadKind::Instrument50Ohm,
            r_load: 50.0,
            c_load: None,
            receiver_return: ReceiverReturn::Capacitance(INSTRUMENT_GROUND_RETURN),
        }
    }

    pub fn custom(r_load: f64, c_load: Option<f64>, receiver_return: ReceiverReturn) -> Self {
        Self {
            kind: LoadKind::Custom,
            r_load,
            c_load,
            receiver_return,
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "probe-10x" => Ok(Self::probe_10x()),
            "probe-1x" => Ok(Self::probe_1x()),
            "wearable" => Ok(Self::wearable()),
            "instrument-50ohm" => Ok(Self::instrument_50ohm()),
            other => Err(ModelError::UnknownPreset(other.to_string())),
        }
    }

    pub fn receiver_return_capacitance(&self, params: &ModelParameters) -> f64 {
        match self.receiver_return {
            ReceiverReturn::Model => params.c_ret_rx,
            ReceiverReturn::Capacitance(c) => c,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let positive = |name, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter { name, value })
            }
        };
        positive("r_load", self.r_load)?;
        if let Some(c) = self.c_load {
            positive("c_load", c)?;
        }
        if let ReceiverReturn::Capacitance(c) = self.receiver_return {
            positive("receiver_return", c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundRegime {
    CommonGround,
    CapacitiveReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    SingleEnded,
    Differential,
}

impl FromStr for GroundRegime {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "common-ground" => Ok(Self::CommonGround),
            "capacitive-return" => Ok(Self::CapacitiveReturn),
            other => Err(ModelError::InvalidConfig(format!("unknown ground regime `{other}`"))),
        }
    }
}

impl FromStr for Modality {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single-ended" | "se" => Ok(Self::SingleEnded),
            "differential" | "de" => Ok(Self::Differential),
            other => Err(ModelError::InvalidConfig(format!("unknown modality `{other}`"))),
        }
    }
}

impl fmt::Display for GroundRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CommonGround => "common-ground",
            Self::CapacitiveReturn => "capacitive-return",
        })
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SingleEnded => "single-ended",
            Self::Differential => "differential",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub ground: GroundRegime,
    pub excitation: Modality,
    pub termination: Modality,
    pub load: LoadPreset,
    pub params: ModelParameters,
}

/// Names accepted by [`ChannelConfig::preset`].
pub const CHANNEL_PRESETS: [&str; 8] = [
    "probe-10x",
    "probe-1x",
    "wearable",
    "instrument-50ohm",
    "common-ground-sese",
    "common-ground-dese",
    "common-ground-dede",
    "common-ground-50ohm",
];

impl ChannelConfig {
    pub fn capacitive_return(load: LoadPreset) -> Self {
        Self {
            ground: GroundRegime::CapacitiveReturn,
            excitation: Modality::SingleEnded,
            termination: Modality::SingleEnded,
            load,
            params: ModelParameters::default(),
        }
    }

    pub fn common_ground(excitation: Modality, termination: Modality, load: LoadPreset) -> Self {
        Self {
            ground: GroundRegime::CommonGround,
            excitation,
            termination,
            load,
            params: ModelParameters::default(),
        }
    }

    /// Named setups: the four receiver loads on the capacitive-return model,
    /// plus the common-ground forward-path variants.
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        use Modality::*;
        Ok(match name {
            "common-ground-sese" => Self::common_ground(SingleEnded, SingleEnded, LoadPreset::probe_10x()),
            "common-ground-dese" => Self::common_ground(Differential, SingleEnded, LoadPreset::probe_10x()),
            "common-ground-dede" => Self::common_ground(Differential, Differential, LoadPreset::probe_10x()),
            "common-ground-50ohm" => {
                Self::common_ground(SingleEnded, SingleEnded, LoadPreset::instrument_50ohm())
            }
            other => Self::capacitive_return(
                LoadPreset::from_name(other).map_err(|_| ModelError::UnknownPreset(other.to_string()))?,
            ),
        })
    }

    pub fn with_params(mut self, params: ModelParameters) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.params.validate()?;
        self.load.validate()?;
        match (self.ground, self.excitation, self.termination) {
            (GroundRegime::CapacitiveReturn, Modality::SingleEnded, Modality::SingleEnded) => Ok(()),
            (GroundRegime::CapacitiveReturn, ex, te) => Err(ModelError::InvalidConfig(format!(
                "capacitive-return supports single-ended excitation and termination only, got {ex}/{te}"
            ))),
            (GroundRegime::CommonGround, Modality::SingleEnded, Modality::Differential) => Err(
                ModelError::InvalidConfig("common-ground single-ended/differential is not modeled".into()),
            ),
            (GroundRegime::CommonGround, _, _) => Ok(()),
        }
    }
}

/// `eps_r * EPSILON_0 * area / gap`.
pub fn parallel_plate_capacitance(area_m2: f64, gap_m: f64, rel_permittivity: f64) -> Result<f64, ModelError> {
    if !(area_m2.is_finite() && area_m2 > 0.0) || !(gap_m.is_finite() && gap_m > 0.0) {
        return Err(ModelError::Domain(format!(
            "area and gap must be > 0 (area {area_m2}, gap {gap_m})"
        )));
    }
    if !(rel_permittivity.is_finite() && rel_permittivity >= 1.0) {
        return Err(ModelError::Domain(format!(
            "relative permittivity must be >= 1, got {rel_permittivity}"
        )));
    }
    Ok(rel_permittivity * EPSILON_0 * area_m2 / gap_m)
}

/// First-order corner `1 / (2π R C)` of a resistive termination working
/// against the return capacitance. Body-to-earth shunts are ignored.
pub fn highpass_cutoff(r_load: f64, c_return_effective: f64) -> Result<f64, ModelError> {
    if !(r_load.is_finite() && r_load > 0.0) || !(c_return_effective.is_finite() && c_return_effective > 0.0) {
        return Err(ModelError::Domain(format!(
            "load resistance and return capacitance must be > 0 (got {r_load}, {c_return_effective})"
        )));
    }
    Ok(1.0 / (2.0 * PI * r_load * c_return_effective))
}

/// Node and element labels used by [`build_channel`].
pub mod labels {
    pub const TX_GROUND: &str = "tx_gnd";
    pub const SOURCE: &str = "src";
    pub const TX_PAD: &str = "tx_pad";
    pub const TX_BODY: &str = "body_tx";
    pub const FEET: &str = "feet";
    pub const RX_BODY: &str = "body_rx";
    pub const RX_PAD: &str = "rx_pad";
    pub const RX_GROUND: &str = "rx_gnd";

    pub const C_RET_TX: &str = "C_ret_Tx";
    pub const C_RET_RX: &str = "C_ret_Rx";
    pub const C_LOAD: &str = "C_L";
    pub const R_LOAD: &str = "R_L";
}

struct Branch<'a> {
    b: &'a mut NetlistBuilder,
    p: &'a ModelParameters,
}

impl Branch<'_> {
    /// Electrode contact then skin layer, from `outer` (device side) to
    /// `inner` (body side).
    fn electrode(&mut self, tag: &str, outer: NodeId, inner: NodeId) {
        let mid = self.b.node(&format!("{tag}_skin"));
        let p = self.p;
        self.b
            .labeled_resistor(&format!("R_band_{tag}"), outer, mid, p.r_band)
            .labeled_capacitor(&format!("C_band_{tag}"), outer, mid, p.c_band)
            .labeled_resistor(&format!("R_skin_{tag}"), mid, inner, p.r_skin)
            .labeled_capacitor(&format!("C_skin_{tag}"), mid, inner, p.c_skin);
    }
}

/// Assembles the netlist for `config`; see the module docs for the wiring.
pub fn build_channel(config: &ChannelConfig) -> Result<Netlist, ModelError> {
    use labels::*;
    config.validate()?;
    let p = &config.params;
    let load = &config.load;
    let mut b = NetlistBuilder::new();
    let earth = b.ground();

    let capacitive = config.ground == GroundRegime::CapacitiveReturn;
    let (tx_gnd, rx_gnd) = if capacitive {
        (b.node(TX_GROUND), b.node(RX_GROUND))
    } else {
        (earth, earth)
    };

    let src = b.node(SOURCE);
    let tx_pad = b.node(TX_PAD);
    let body_tx = b.node(TX_BODY);
    let feet = b.node(FEET);
    let body_rx = b.node(RX_BODY);
    let rx_pad = b.node(RX_PAD);

    b.voltage_source(src, tx_gnd, 1.0);
    b.labeled_resistor("R_s", src, tx_pad, p.r_s);
    Branch { b: &mut b, p }.electrode("tx", tx_pad, body_tx);
    if config.excitation == Modality::Differential {
        Branch { b: &mut b, p }.electrode("tx2", tx_gnd, body_tx);
    }

    b.labeled_resistor("R_body_tx", body_tx, feet, p.r_body / 2.0)
        .labeled_resistor("R_body_rx", feet, body_rx, p.r_body / 2.0);

    Branch { b: &mut b, p }.electrode("rx", rx_pad, body_rx);
    if config.termination == Modality::Differential {
        Branch { b: &mut b, p }.electrode("rx2", rx_gnd, body_rx);
    }

    b.labeled_resistor(R_LOAD, rx_pad, rx_gnd, load.r_load);
    if let Some(c_load) = load.c_load {
        b.labeled_capacitor(C_LOAD, rx_pad, rx_gnd, c_load + p.c_rx);
    }

    if capacitive {
        b.labeled_capacitor("C_Tx", tx_gnd, body_tx, p.c_tx)
            .labeled_capacitor("C_Tx_gnd", body_tx, earth, p.c_tx_gnd)
            .labeled_capacitor("C_body", feet, earth, p.c_body)
            .labeled_capacitor("C_Rx_gnd", body_rx, earth, p.c_rx_gnd)
            .labeled_capacitor(C_RET_TX, tx_gnd, earth, p.c_ret_tx)
            .labeled_capacitor(C_RET_RX, rx_gnd, earth, load.receiver_return_capacitance(p));
        b.output_pair(rx_pad, rx_gnd);
    } else {
        b.output_node(rx_pad);
    }

    Ok(b.build()?)
}

/// Transfer from source to receiver across `frequencies`.
pub fn channel_loss(config: &ChannelConfig, frequencies: &[f64]) -> Result<FrequencyResponse, ModelError> {
    if let Some(f) = frequencies.iter().find(|&&f| f > MODEL_VALID_UP_TO_HZ) {
        log::warn!(
            "sweep reaches {f} Hz; the lumped model is characterized up to {MODEL_VALID_UP_TO_HZ} Hz"
        );
    }
    let netlist = build_channel(config)?;
    Ok(netlist.sweep(frequencies)?)
}

/// Default sweep: 10 kHz to 1 MHz, 50 points per decade.
pub fn default_frequencies() -> Vec<f64> {
    crate::circuit::log_frequencies(10e3, 1e6, 50)
}
