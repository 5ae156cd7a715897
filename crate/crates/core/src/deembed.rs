//! Receive-chain models and their removal from measured transfer functions.

use num_complex::Complex64;
use thiserror::Error;

/// Chain magnitudes at or below this are refused by [`deembed`].
pub const DEFAULT_MIN_CHAIN_MAGNITUDE: f64 = 1e-12;
/// Default DC-bias high-pass corner.
pub const DEFAULT_BIAS_CORNER_HZ: f64 = 5e3;
pub const DEFAULT_AMPLIFIER_GAIN: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeembedError {
    #[error("receive chain is empty")]
    EmptyChain,
    #[error("invalid chain stage {index}: {reason}")]
    InvalidStage { index: usize, reason: String },
    #[error("frequency {0} Hz must be finite and > 0")]
    InvalidFrequency(f64),
    #[error("chain magnitude {magnitude:e} at {frequency} Hz is not above {threshold:e}")]
    Blowup {
        frequency: f64,
        magnitude: f64,
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainStage {
    /// Frequency-independent linear voltage gain.
    FlatGain { gain: f64 },
    /// First-order high-pass `(jf/fc) / (1 + jf/fc)`.
    HighPass { corner: f64 },
}

impl ChainStage {
    pub fn response(&self, frequency: f64) -> Complex64 {
        match *self {
            ChainStage::FlatGain { gain } => Complex64::new(gain, 0.0),
            ChainStage::HighPass { corner } => {
                let x = Complex64::new(0.0, frequency / corner);
                x / (1.0 + x)
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        match *self {
            ChainStage::FlatGain { gain } if !(gain.is_finite() && gain > 0.0) => {
                Err(format!("gain {gain} must be finite and > 0"))
            }
            ChainStage::HighPass { corner } if !(corner.is_finite() && corner > 0.0) => {
                Err(format!("corner {corner} Hz must be finite and > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Cascade of stages, applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveChain {
    stages: Vec<ChainStage>,
}

impl ReceiveChain {
    pub fn new(stages: Vec<ChainStage>) -> Result<Self, DeembedError> {
        if stages.is_empty() {
            return Err(DeembedError::EmptyChain);
        }
        for (index, s) in stages.iter().enumerate() {
            s.validate().map_err(|reason| DeembedError::InvalidStage { index, reason })?;
        }
        Ok(Self { stages })
    }

    /// Amplifier gain of 12 followed by the 5 kHz bias high-pass.
    pub fn wearable_default() -> Self {
        Self {
            stages: vec![
                ChainStage::FlatGain {
                    gain: DEFAULT_AMPLIFIER_GAIN,
                },
                ChainStage::HighPass {
                    corner: DEFAULT_BIAS_CORNER_HZ,
                },
            ],
        }
    }

    /// Unity flat gain.
    pub fn identity() -> Self {
        Self {
            stages: vec![ChainStage::FlatGain { gain: 1.0 }],
        }
    }

    pub fn stages(&self) -> &[ChainStage] {
        &self.stages
    }

    pub fn response(&self, frequency: f64) -> Result<Complex64, DeembedError> {
        chain_response(self, frequency)
    }
}

/// Product of the stage responses.
pub fn chain_response(chain: &ReceiveChain, frequency: f64) -> Result<Complex64, DeembedError> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(DeembedError::InvalidFrequency(frequency));
    }
    Ok(chain
        .stages
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(frequency)))
}

/// Checks the chain magnitude against `threshold` and returns the response.
pub fn checked_chain_response(
    chain: &ReceiveChain,
    frequency: f64,
    threshold: f64,
) -> Result<Complex64, DeembedError> {
    let hc = chain_response(chain, frequency)?;
    let magnitude = hc.norm();
    if !(magnitude > threshold) {
        return Err(DeembedError::Blowup {
            frequency,
            magnitude,
            threshold,
        });
    }
    Ok(hc)
}

/// `H_measured / H_chain` with the default magnitude threshold.
pub fn deembed(measured: Complex64, frequency: f64, chain: &ReceiveChain) -> Result<Complex64, DeembedError> {
    deembed_with_threshold(measured, frequency, chain, DEFAULT_MIN_CHAIN_MAGNITUDE)
}

pub fn deembed_with_threshold(
    measured: Complex64,
    frequency: f64,
    chain: &ReceiveChain,
    threshold: f64,
) -> Result<Complex64, DeembedError> {
    Ok(measured / checked_chain_response(chain, frequency, threshold)?)
}

/// `H_channel * H_chain`.
pub fn embed(channel: Complex64, frequency: f64, chain: &ReceiveChain) -> Result<Complex64, DeembedError> {
    Ok(channel * chain_response(chain, frequency)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn db(h: Complex64) -> f64 {
        20.0 * h.norm().log10()
    }

    #[test]
    fn gain_of_twelve_is_21_58_db() {
        let c = ReceiveChain::new(vec![ChainStage::FlatGain { gain: 12.0 }]).unwrap();
        assert_relative_eq!(db(c.response(1e5).unwrap()), 21.58, epsilon = 0.005);
    }

    #[test]
    fn highpass_at_corner() {
        let c = ReceiveChain::new(vec![ChainStage::HighPass { corner: 5e3 }]).unwrap();
        let h = c.response(5e3).unwrap();
        assert_relative_eq!(h.norm(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-4);
        assert_relative_eq!(h.arg().to_degrees(), 45.0, epsilon = 1e-9);
    }

    #[test]
    fn highpass_far_above_corner() {
        let c = ReceiveChain::new(vec![ChainStage::HighPass { corner: 5e3 }]).unwrap();
        assert_relative_eq!(c.response(5e5).unwrap().norm(), 0.99995, epsilon = 1e-5);
    }

    #[test]
    fn embed_then_deembed_recovers_channel() {
        let chain = ReceiveChain::wearable_default();
        for f in [1e3, 5e3, 1e5, 1e6] {
            let h = Complex64::from_polar(10f64.powf(-50.0 / 20.0), 0.3);
            let back = deembed(embed(h, f, &chain).unwrap(), f, &chain).unwrap();
            assert_relative_eq!(db(back), -50.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn tiny_chain_is_refused() {
        let chain = ReceiveChain::new(vec![ChainStage::FlatGain { gain: 1e-13 }]).unwrap();
        assert!(matches!(
            deembed(Complex64::new(1.0, 0.0), 1e3, &chain),
            Err(DeembedError::Blowup { .. })
        ));
        assert!(deembed_with_threshold(Complex64::new(1.0, 0.0), 1e3, &chain, 1e-14).is_ok());
    }

    #[test]
    fn invalid_chains() {
        assert_eq!(ReceiveChain::new(vec![]), Err(DeembedError::EmptyChain));
        assert!(ReceiveChain::new(vec![ChainStage::HighPass { corner: 0.0 }]).is_err());
        assert!(ReceiveChain::new(vec![ChainStage::FlatGain { gain: f64::NAN }]).is_err());
        assert!(ReceiveChain::identity().response(0.0).is_err());
    }
}
