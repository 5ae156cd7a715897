use hbc_core::circuit::{loss_db, log_frequencies};
use hbc_core::deembed::{deembed, embed, ChainStage, DeembedError, ReceiveChain, DEFAULT_BIAS_CORNER_HZ};
use hbc_core::io::{Curve, CurveRow};
use num_complex::Complex64;
use proptest::prelude::*;

fn stage() -> impl Strategy<Value = ChainStage> {
    prop_oneof![
        (0.01f64..1e3).prop_map(|gain| ChainStage::FlatGain { gain }),
        (10.0f64..1e6).prop_map(|corner| ChainStage::HighPass { corner }),
    ]
}

fn chain() -> impl Strategy<Value = ReceiveChain> {
    prop::collection::vec(stage(), 1..5).prop_map(|s| ReceiveChain::new(s).unwrap())
}

proptest! {
    #[test]
    fn embed_then_deembed_is_identity(
        chain in chain(),
        re in -1.0f64..1.0,
        im in -1.0f64..1.0,
        f in 1e3f64..1e8,
    ) {
        let h = Complex64::new(re, im);
        let back = deembed(embed(h, f, &chain).unwrap(), f, &chain).unwrap();
        prop_assert!((back - h).norm() <= 1e-12 * h.norm().max(1e-300));
    }

    #[test]
    fn curve_grid_is_preserved(chain in chain(), loss in -120.0f64..0.0) {
        let rows: Vec<CurveRow> = log_frequencies(1e4, 1e6, 10)
            .into_iter()
            .map(|frequency| CurveRow { frequency, loss_db: loss, phase_deg: 0.0 })
            .collect();
        let curve = Curve::new(rows).unwrap();
        let out = curve.deembed(&chain, 1e-12).unwrap();
        prop_assert_eq!(out.frequencies(), curve.frequencies());
    }
}

/// Curve whose shape is the chain itself on top of a flat channel.
fn measured(channel_db: f64, chain: &ReceiveChain, freqs: &[f64]) -> Curve {
    let channel = Complex64::from_polar(10f64.powf(channel_db / 20.0), 0.0);
    let rows = freqs
        .iter()
        .map(|&f| {
            let h = embed(channel, f, chain).unwrap();
            CurveRow {
                frequency: f,
                loss_db: loss_db(h),
                phase_deg: h.arg().to_degrees(),
            }
        })
        .collect();
    Curve::new(rows).unwrap()
}

#[test]
fn highpass_shaped_curve_deembeds_flat() {
    let chain = ReceiveChain::new(vec![ChainStage::HighPass {
        corner: DEFAULT_BIAS_CORNER_HZ,
    }])
    .unwrap();
    let freqs = log_frequencies(100.0, 1e6, 20);
    let out = measured(-42.0, &chain, &freqs).deembed(&chain, 1e-12).unwrap();
    for r in out.rows() {
        assert!((r.loss_db + 42.0).abs() < 0.1, "{} Hz: {}", r.frequency, r.loss_db);
    }
}

#[test]
fn flat_minus_50_recovered_through_gain_and_highpass() {
    let chain = ReceiveChain::new(vec![
        ChainStage::FlatGain { gain: 12.0 },
        ChainStage::HighPass { corner: 1e3 },
    ])
    .unwrap();
    let freqs = log_frequencies(1e4, 1e6, 50);
    let out = measured(-50.0, &chain, &freqs).deembed(&chain, 1e-12).unwrap();
    for r in out.rows() {
        assert!((r.loss_db + 50.0).abs() <= 0.05, "{} Hz: {}", r.frequency, r.loss_db);
    }
}

#[test]
fn identity_chain_is_bit_exact() {
    let freqs = log_frequencies(1e4, 1e6, 10);
    let curve = measured(-37.3, &ReceiveChain::identity(), &freqs);
    assert_eq!(curve.deembed(&ReceiveChain::identity(), 1e-12).unwrap(), curve);
}

#[test]
fn vanishing_chain_is_refused() {
    let chain = ReceiveChain::new(vec![ChainStage::HighPass { corner: 1e9 }]).unwrap();
    assert!(matches!(
        hbc_core::deembed::deembed_with_threshold(Complex64::new(0.1, 0.0), 1.0, &chain, 1e-6),
        Err(DeembedError::Blowup { .. })
    ));
}
