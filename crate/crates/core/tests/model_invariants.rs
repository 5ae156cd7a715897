use hbc_core::circuit::{log_frequencies, KCL_TOLERANCE};
use hbc_core::model::{
    build_channel, channel_loss, default_frequencies, highpass_cutoff, ChannelConfig, LoadPreset, Modality,
    ModelParameters, ReceiverReturn, CHANNEL_PRESETS,
};
use proptest::prelude::*;

fn custom(r_load: f64, c_load: Option<f64>) -> ChannelConfig {
    ChannelConfig::capacitive_return(LoadPreset::custom(r_load, c_load, ReceiverReturn::Model))
}

fn losses(config: &ChannelConfig, freqs: &[f64]) -> Vec<f64> {
    channel_loss(config, freqs).unwrap().loss_db()
}

#[test]
fn termination_resistance_ordering() {
    let freqs = log_frequencies(1e3, 1e6, 20);
    let l50 = losses(&custom(50.0, Some(13e-12)), &freqs);
    let l1m = losses(&custom(1e6, Some(13e-12)), &freqs);
    let l10m = losses(&custom(10e6, Some(13e-12)), &freqs);
    for i in 0..freqs.len() {
        assert!(l50[i] <= l1m[i] && l1m[i] <= l10m[i], "{} Hz: {} {} {}", freqs[i], l50[i], l1m[i], l10m[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn more_load_capacitance_means_more_loss(c1 in 0.5e-12f64..200e-12, factor in 1.01f64..10.0) {
        let freqs = log_frequencies(1e4, 1e6, 10);
        let lo = losses(&custom(10e6, Some(c1)), &freqs);
        let hi = losses(&custom(10e6, Some(c1 * factor)), &freqs);
        for i in 0..freqs.len() {
            prop_assert!(hi[i] < lo[i], "{} Hz: {} vs {}", freqs[i], hi[i], lo[i]);
        }
    }

    #[test]
    fn high_impedance_capacitive_loads_are_flat(r in 10e6f64..1e9, c in 5e-12f64..100e-12) {
        let r = losses(&custom(r, Some(c)), &default_frequencies());
        let spread = r.iter().cloned().fold(f64::MIN, f64::max) - r.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(spread < 3.0, "spread {spread}");
    }
}

#[test]
fn presets_with_10m_load_are_flat() {
    for name in ["probe-10x", "wearable"] {
        let r = channel_loss(&ChannelConfig::preset(name).unwrap(), &default_frequencies()).unwrap();
        assert!(r.spread_db() < 3.0, "{name}: {}", r.spread_db());
    }
}

#[test]
fn resistive_load_rises_20_db_per_decade() {
    // Asymptotic slope, measured in the lowest decade of the extended grid.
    let cfg = ChannelConfig::preset("instrument-50ohm").unwrap();
    let r = channel_loss(&cfg, &[1e3, 1e4]).unwrap().loss_db();
    let slope = r[1] - r[0];
    assert!((slope - 20.0).abs() <= 2.0, "slope {slope} dB/decade");
}

#[test]
fn resistive_corner_within_factor_two() {
    let cfg = ChannelConfig::preset("instrument-50ohm").unwrap();
    // With an earth-grounded instrument the load current returns through the
    // body-to-earth shunts.
    let p = cfg.params;
    let c_eff = p.c_tx_gnd + p.c_body + p.c_rx_gnd;
    let predicted = highpass_cutoff(cfg.load.r_load, c_eff).unwrap();

    // The full model's high-frequency plateau and its -3 dB point, found on a
    // dense grid well past the validated band.
    let freqs = log_frequencies(1e4, 1e13, 200);
    let h: Vec<f64> = channel_loss(&cfg, &freqs).unwrap().loss_db();
    let plateau = h.iter().cloned().fold(f64::MIN, f64::max);
    let idx = h.iter().position(|&db| db >= plateau - 3.0).unwrap();
    let corner = freqs[idx];
    let ratio = corner / predicted;
    assert!((0.5..=2.0).contains(&ratio), "model corner {corner:e} Hz vs predicted {predicted:e} Hz");
}

#[test]
fn source_impedance_ordering_at_1mhz() {
    let mut prev = f64::INFINITY;
    for r_s in [50.0, 10e3, 1e6] {
        let params = ModelParameters {
            r_s,
            ..ModelParameters::default()
        };
        let cfg = ChannelConfig::preset("probe-10x").unwrap().with_params(params);
        let db = losses(&cfg, &[1e6])[0];
        assert!(db < prev, "R_s = {r_s}: {db} dB not below {prev} dB");
        prev = db;
    }
}

#[test]
fn capacitive_beats_resistive_by_40_db_at_10khz() {
    let cap = losses(&ChannelConfig::preset("probe-10x").unwrap(), &[1e4])[0];
    let res = losses(&ChannelConfig::preset("instrument-50ohm").unwrap(), &[1e4])[0];
    assert!(cap - res >= 40.0, "gap {} dB", cap - res);
}

#[test]
fn common_ground_50_ohm_flat_region_near_20_db() {
    let cfg = ChannelConfig::preset("common-ground-50ohm").unwrap();
    let r = channel_loss(&cfg, &log_frequencies(1e7, 1e8, 20)).unwrap();
    let mean = r.mean_loss_db();
    assert!((-25.0..=-15.0).contains(&mean), "mean {mean} dB");
}

#[test]
fn common_ground_modality_ladder() {
    use Modality::*;
    let at = |ex, te| {
        losses(
            &ChannelConfig::common_ground(ex, te, LoadPreset::probe_10x()),
            &[1e5],
        )[0]
    };
    let (sese, dese, dede) = (at(SingleEnded, SingleEnded), at(Differential, SingleEnded), at(Differential, Differential));
    assert!(sese > dese && dese > dede);
    assert!((-1.5..=0.0).contains(&sese));
}

#[test]
fn every_preset_satisfies_kcl_across_extended_grid() {
    let freqs = log_frequencies(1e3, 1e8, 20);
    for name in CHANNEL_PRESETS {
        let net = build_channel(&ChannelConfig::preset(name).unwrap()).unwrap();
        for &f in &freqs {
            let s = net.solve_ac(f).unwrap();
            assert!(s.kcl_residual <= KCL_TOLERANCE, "{name} at {f} Hz: {}", s.kcl_residual);
        }
    }
}
