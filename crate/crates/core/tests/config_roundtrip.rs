//! `render` is a faithful inverse of `load_config` for every protocol.

use odmr_lab::config::{load_config, render};
use proptest::prelude::*;

fn protocol_block() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.5f64..140.0, 0.01f64..2.0, 1.0f64..10.0, 100usize..10_000).prop_map(|(lo, step, dur, steps)| format!(
            "[drive]\nomega_grid_mhz = {lo}:{}:{step}\n[protocol]\nname = cw\nduration_us = {dur}\nsteps = {steps}\n",
            lo + 20.0 * step
        )),
        (1.0f64..60.0, 0.001f64..0.01).prop_map(|(w, step)| format!(
            "[drive]\nomega_mhz = {w}\n[protocol]\nname = rabi\ntau_grid_us = 0:{}:{step}\n",
            50.0 * step
        )),
        (1.0f64..60.0, -60.0f64..60.0, 0.005f64..0.05).prop_map(|(w, det, pulse)| format!(
            "[drive]\nomega_mhz = {w}\n[protocol]\nname = fid\ntau_grid_us = 0.001, 0.002, 0.004\nf_det_mhz = {det}\npulse_us = {pulse}\n"
        )),
        (1u8..=3).prop_map(|n| format!(
            "[field]\nmode = parallel\nsweep_mt = 0:2:0.25\n[protocol]\nname = transitions\nmax_photons = {n}\n"
        )),
        prop_oneof![Just("free".to_string()), (0.5f64..5.0).prop_map(|c| c.to_string())].prop_map(|e| format!(
            "[protocol]\nname = fit-power\n[fit]\ninput = data.csv\nexponent = {e}\n"
        )),
    ]
}

fn shared_block() -> impl Strategy<Value = String> {
    (
        prop_oneof![Just("V2"), Just("V3")],
        0.0f64..10.0,
        0.0f64..1.0,
        0.0f64..0.5,
        (0.0f64..1.0, 0.0f64..20.0, 0.0f64..1.0),
        prop_oneof![Just("none"), Just("rabi"), Just("z-drive")],
        prop_oneof![Just("scaled-sx"), Just("rate-matrix")],
    )
        .prop_map(|(kind, omega1, p_z, phi, (a, b, d), preset, form)| {
            format!(
                "[vacancy]\nkind = {kind}\n[drive]\nomega1_mhz = {omega1}\np_z = {p_z}\nphi_rad = {phi}\n\
                 [relaxation]\nalpha = {a}\nbeta = {b}\ndelta = {d}\nspin_lattice = {form}\n\
                 [inhomogeneity]\npreset = {preset}\n"
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn render_then_load_is_identity(shared in shared_block(), protocol in protocol_block()) {
        // a section may appear twice; later keys add to earlier ones
        let text = format!("format = 1\n{shared}{protocol}");
        let cfg = load_config(&text).unwrap();
        let rendered = render(&cfg);
        prop_assert_eq!(load_config(&rendered).unwrap(), cfg.clone());
        prop_assert_eq!(render(&load_config(&rendered).unwrap()), rendered);
    }
}

#[test]
fn shipped_configs_round_trip() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = load_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(load_config(&render(&cfg)).unwrap(), cfg, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 8);
}
