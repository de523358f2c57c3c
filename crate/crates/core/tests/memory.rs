use std::sync::OnceLock;

use eit_memory::eit_medium::{coupling_for_group_delay, propagation_kernel, EitParams};
use eit_memory::memory_sim::*;
use eit_memory::presets::{self, GAMMA};
use eit_memory::spdc_source::{biphoton_field, biphoton_spectrum};
use eit_memory::spectrum::{ComplexSpectrum, FieldWaveform};
use eit_memory::{Error, UniformGrid};
use proptest::prelude::*;

fn input() -> &'static FieldWaveform {
    static F: OnceLock<FieldWaveform> = OnceLock::new();
    F.get_or_init(|| biphoton_field(&presets::source(), &presets::time_grid(), true).unwrap())
}

fn source_spectrum() -> ComplexSpectrum {
    biphoton_spectrum(&presets::source(), &presets::spectrum_grid(), true).unwrap()
}

fn operating_sweep() -> &'static SweepTable {
    static T: OnceLock<SweepTable> = OnceLock::new();
    T.get_or_init(|| {
        bandwidth_vs_xi(
            input(),
            &presets::medium().unwrap(),
            &presets::schedule(1.0).unwrap(),
            &presets::decoherence(),
            &presets::XI_SWEEP,
            &SolverSettings::default(),
        )
        .unwrap()
    })
}

fn operating_storage() -> &'static StorageResult {
    static R: OnceLock<StorageResult> = OnceLock::new();
    R.get_or_init(|| {
        simulate_storage(
            input(),
            &presets::medium().unwrap(),
            &presets::schedule(1.0).unwrap(),
            &presets::decoherence(),
            &SolverSettings::default(),
        )
        .unwrap()
    })
}

#[test]
fn read_rabi_scales_with_root_xi() {
    let s = presets::schedule(4.0).unwrap();
    assert!((s.read_rabi() - 2.0 * s.write_rabi).abs() < 1e-9 * s.write_rabi);
    let late = s.t_on + 2.0 * s.ramp_length();
    assert!((s.rabi_at(late) - s.read_rabi()).abs() < 1e-9 * s.write_rabi);
    assert_eq!(s.rabi_at(s.t_off - 1e-9), s.write_rabi);
    assert_eq!(s.rabi_at(0.5 * (s.t_off + s.t_on) + s.ramp_length() / 2.0), 0.0);
}

#[test]
fn switch_edge_has_configured_rise_time() {
    let s = presets::schedule(1.0).unwrap();
    let crossing = |level: f64| {
        let (mut lo, mut hi) = (s.t_on, s.t_on + s.ramp_length());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if s.power_envelope(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let rise = crossing(0.9) - crossing(0.1);
    assert!((rise - presets::SWITCH_DURATION).abs() < 1e-15, "{rise:e}");
}

#[test]
fn decoherence_equals_static_rate_while_writing() {
    let d = presets::decoherence();
    assert!((d.rate(1.0) - d.gamma_0).abs() < 1e-9 * d.gamma_0);
    assert!(d.rate(0.0) < d.gamma_0 && d.rate(0.0) >= 0.0);
    assert!(d.rate(4.0) > d.gamma_0);
    let bad = DecoherenceModel {
        coupling_share: 2.0 * d.gamma_0,
        ..d
    };
    assert!(bad.validate().is_err());
}

#[test]
fn storage_shorter_than_switch_is_rejected() {
    let mut s = presets::schedule(1.0).unwrap();
    s.t_on = s.t_off + 0.5 * s.switch_duration;
    let r = simulate_storage(input(), &presets::medium().unwrap(), &s, &presets::decoherence(), &SolverSettings::default());
    assert!(matches!(r, Err(Error::InvalidParameter { .. })));
}

#[test]
fn operating_point_slow_light() {
    let sl = slow_light(&source_spectrum(), &presets::medium().unwrap()).unwrap();
    assert!((sl.efficiency - 0.52).abs() <= 0.06, "{}", sl.efficiency);
    assert!((sl.bandwidth_hz - 1.8e6).abs() <= 0.4e6, "{}", sl.bandwidth_hz);
    assert!(sl.delay > 50e-9);
}

#[test]
fn empty_medium_is_identity() {
    let spectrum = source_spectrum();
    let sl = slow_light(&spectrum, &EitParams::resonant(0.0, GAMMA, GAMMA, 0.0)).unwrap();
    assert!((sl.efficiency - 1.0).abs() < 1e-12);
    assert_eq!(sl.delay, 0.0);
    let input_bw = bandwidth_from_fwhm(eit_memory::spectrum::g2_waveform_from_spectrum(&spectrum).unwrap().fwhm().unwrap());
    assert!((sl.bandwidth_hz / input_bw - 1.0).abs() < 1e-12);
}

#[test]
fn wide_window_is_transparent() {
    let sl = slow_light(&source_spectrum(), &EitParams::resonant(55.0, GAMMA, 200.0 * GAMMA, 0.0)).unwrap();
    assert!(sl.efficiency > 0.999, "{}", sl.efficiency);
}

#[test]
fn constant_coupling_matches_frequency_domain() {
    let p = EitParams::resonant(55.0, GAMMA, presets::write_rabi().unwrap(), presets::gamma_gs());
    let out = propagate_constant(input(), &p, &SolverSettings::default()).unwrap();
    assert!(out.energy.closure_error() < 5e-3);

    let spectrum = input().to_spectrum();
    let resp = propagation_kernel(&p, &spectrum.grid).unwrap();
    let oracle = spectrum.filtered(&resp.grid, &resp.kernel).unwrap().to_field_from(input().grid.start);
    let (mut err, mut norm) = (0.0, 0.0);
    for (a, b) in out.field.value.iter().zip(&oracle.value) {
        err += (a - b).norm_sqr();
        norm += b.norm_sqr();
    }
    let rel = (err / norm).sqrt();
    assert!(rel < 1e-3, "relative L2 {rel:e}");
}

#[test]
fn operating_point_storage() {
    let r = operating_storage();
    assert!((r.efficiency - 0.36).abs() <= 0.06, "{}", r.efficiency);
    assert!((r.retrieved_bandwidth_hz - 2.3e6).abs() <= 0.5e6, "{}", r.retrieved_bandwidth_hz);
    assert!(r.efficiency_excluding_switch <= r.efficiency);
    assert!(r.energy.closure_error() < 5e-3, "{:?}", r.energy);
    assert!(r.energy.dissipated >= 0.0);
}

#[test]
fn storage_never_beats_slow_light() {
    let sl = slow_light(&source_spectrum(), &presets::medium().unwrap()).unwrap();
    let r = operating_storage();
    assert!(r.efficiency <= 1.0);
    assert!(r.efficiency <= sl.efficiency);
}

#[test]
fn ideal_memory_ignores_read_power() {
    let p = EitParams::resonant(55.0, GAMMA, presets::write_rabi().unwrap(), 0.0);
    let effs: Vec<f64> = [1.0, 3.0, 9.0]
        .iter()
        .map(|&xi| {
            simulate_storage(input(), &p, &presets::schedule(xi).unwrap(), &DecoherenceModel::none(), &SolverSettings::default())
                .unwrap()
                .efficiency
        })
        .collect();
    let spread = effs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - effs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.01, "{effs:?}");
}

#[test]
fn dense_ideal_memory_approaches_slow_light() {
    let alpha = 400.0;
    let w = coupling_for_group_delay(&EitParams::resonant(alpha, GAMMA, 0.0, 0.0), 300e-9).unwrap();
    let p = EitParams::resonant(alpha, GAMMA, w, 0.0);
    let sl = slow_light(&source_spectrum(), &p).unwrap();
    let s = CouplingSchedule {
        write_rabi: w,
        t_off: 180e-9,
        t_on: 280e-9,
        xi: 1.0,
        switch_duration: 20e-9,
    };
    let settings = SolverSettings {
        slices: 1600,
        ..SolverSettings::default()
    };
    let r = simulate_storage(input(), &p, &s, &DecoherenceModel::none(), &settings).unwrap();
    assert!((r.efficiency - sl.efficiency).abs() < 0.02, "{} vs {}", r.efficiency, sl.efficiency);
}

#[test]
fn retrieval_is_delayed_by_storage() {
    let g_in = input().intensity();
    let g_out = operating_storage().out_field.window(presets::T_OFF, f64::INFINITY).unwrap().intensity();
    assert!(g_out.peak_time() - g_in.peak_time() >= presets::STORAGE_TIME);
}

#[test]
fn read_power_reshapes_retrieved_waveform() {
    let rows = &operating_sweep().rows;
    assert_eq!(rows.len(), presets::XI_SWEEP.len());
    // bandwidth is the reciprocal FWHM: rising bandwidth means compression
    for pair in rows.windows(2) {
        assert!(pair[1].bandwidth_hz > pair[0].bandwidth_hz, "{rows:?}");
    }
    assert_eq!(rows[0].xi, 0.72);
    assert_eq!(rows[1].xi, 1.0);
}

#[test]
fn sweep_row_matches_direct_run() {
    let row = operating_sweep().rows[1];
    let r = operating_storage();
    assert_eq!(row.efficiency.to_bits(), r.efficiency.to_bits());
    assert_eq!(row.bandwidth_hz.to_bits(), r.retrieved_bandwidth_hz.to_bits());
}

#[test]
fn sweep_fit_is_reported() {
    let fit = operating_sweep().fit.expect("six positive rows always fit");
    assert!(fit.gamma_s > 0.0 && fit.exponent > 0.0);
}

#[test]
fn sweep_rejects_out_of_range_ratios() {
    let r = bandwidth_vs_xi(
        input(),
        &presets::medium().unwrap(),
        &presets::schedule(1.0).unwrap(),
        &presets::decoherence(),
        &[1.0, 20.0],
        &SolverSettings::default(),
    );
    assert!(matches!(r, Err(Error::InvalidParameter { .. })));
}

#[test]
fn failing_point_keeps_earlier_rows() {
    // on a record ending at 500 ns a weak read is still emitting at the end
    let grid = UniformGrid::new(-300e-9, 20e-12, 40_000).unwrap();
    let field = biphoton_field(&presets::source(), &grid, true).unwrap();
    let err = bandwidth_vs_xi(
        &field,
        &presets::medium().unwrap(),
        &presets::schedule(1.0).unwrap(),
        &presets::decoherence(),
        &[1.0, 0.1],
        &SolverSettings::default(),
    )
    .unwrap_err();
    match err {
        Error::SweepAborted { xi, partial, source } => {
            assert_eq!(xi, 0.1);
            assert!(matches!(*source, Error::NoFwhm(_)));
            assert_eq!(partial.rows.len(), 1);
            assert_eq!(partial.rows[0].xi, 1.0);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn coarse_time_step_is_flagged_unstable() {
    // 10 ns samples put the field feedback rate far outside the RK4 region
    let fine = input();
    let keep: Vec<_> = fine.value.iter().step_by(500).copied().collect();
    let grid = UniformGrid::new(fine.grid.start, 500.0 * fine.grid.step, keep.len()).unwrap();
    let field = FieldWaveform::new(grid, keep).unwrap();
    let settings = SolverSettings {
        slices: 50,
        step_factor: 1e-3,
    };
    let r = propagate_constant(&field, &presets::medium().unwrap(), &settings);
    assert!(matches!(r, Err(Error::Unstable { .. })), "{:?}", r.map(|o| o.energy));
}

fn short_input() -> &'static FieldWaveform {
    static F: OnceLock<FieldWaveform> = OnceLock::new();
    F.get_or_init(|| {
        let grid = UniformGrid::new(-150e-9, 0.1e-9, 6000).unwrap();
        biphoton_field(&presets::source(), &grid, true).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn storage_is_passive_and_conserves_energy(
        alpha in 5.0f64..60.0,
        td_ns in 40.0f64..120.0,
        gs in 0.0f64..0.2,
        xi in 0.5f64..9.0,
        share in 0.0f64..1.0,
    ) {
        let w = coupling_for_group_delay(&EitParams::resonant(alpha, GAMMA, 0.0, 0.0), td_ns * 1e-9).unwrap();
        let p = EitParams::resonant(alpha, GAMMA, w, gs * GAMMA);
        let s = CouplingSchedule { write_rabi: w, t_off: 20e-9, t_on: 120e-9, xi, switch_duration: 20e-9 };
        let dec = DecoherenceModel {
            gamma_0: gs * GAMMA,
            gamma_s_coeff: 0.0,
            coupling_share: share * gs * GAMMA,
            intensity_exponent: 2.0,
        };
        let settings = SolverSettings { slices: 100, ..SolverSettings::default() };
        let out = integrate(short_input(), &p, |t| s.rabi_at(t), |t| dec.rate(s.power_envelope(t)), w * xi.max(1.0).sqrt(), &settings).unwrap();
        prop_assert!(out.energy.output <= out.energy.input);
        prop_assert!(out.energy.dissipated >= -1e-9 * out.energy.input);
        prop_assert!(out.energy.closure_error() < 5e-3, "{:?}", out.energy);
    }
}

#[test]
fn operating_point_bandwidth_scale() {
    // sanity on units: retrieved bandwidths stay in the few-MHz range
    for r in &operating_sweep().rows {
        assert!(r.bandwidth_hz > 0.5e6 && r.bandwidth_hz < 20e6, "{r:?}");
        assert!(r.efficiency > 0.0 && r.efficiency < 1.0);
    }
}
