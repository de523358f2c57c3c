//! Operating point of the reference experiment: cold-atom EIT memory at
//! optical depth 55 fed by a 6.2 MHz cavity SPDC source.

use std::f64::consts::PI;

use crate::coincidence::{DetectionParams, G2Model, HistogramGeometry};
use crate::eit_medium::{coupling_for_group_delay, EitParams};
use crate::error::Result;
use crate::grid::UniformGrid;
use crate::memory_sim::{CouplingSchedule, DecoherenceModel, TimeWindow};
use crate::spdc_source::CavitySpdcParams;

pub const MHZ: f64 = 2.0 * PI * 1e6;

/// Excited-state decay rate of the probe transition.
pub const GAMMA: f64 = 5.23 * MHZ;
pub const OPTICAL_DEPTH: f64 = 55.0;
/// FWHM of the source power spectrum.
pub const SOURCE_FWHM: f64 = 6.2 * MHZ;
/// Parametric coupling relative to the cavity decay rate; far below threshold.
pub const KAPPA_OVER_GAMMA: f64 = 0.01;
/// Nominal biphoton coherence time.
pub const COHERENCE_TIME: f64 = 25e-9;
pub const DELAY_OVER_COHERENCE: f64 = 3.0;

/// Ground-state coherence amplitude decay, in units of `GAMMA`.
pub const COHERENCE_DECAY: f64 = 0.065;
/// Converts an amplitude decay rate to the `gamma_gs` used here, which enters
/// the spin coherence equation as `gamma_gs / 2`.
pub const DECAY_TO_GAMMA_GS: f64 = 2.0;

pub const STORAGE_TIME: f64 = 100e-9;
pub const SWITCH_DURATION: f64 = 20e-9;
/// Start of the switch-off edge, relative to the G2 peak of the source.
pub const T_OFF: f64 = 30e-9;

/// Efficiency decay constant per unit read/write power ratio.
pub const GAMMA_S: f64 = 0.055;
pub const INTENSITY_EXPONENT: f64 = 2.0;
/// Coupling share `k / GAMMA` calibrated against `XI_SWEEP` for `GAMMA_S`.
pub const COUPLING_SHARE: f64 = 0.0992;

pub const XI_SWEEP: [f64; 6] = [0.72, 1.0, 2.0, 3.5, 5.0, 8.7];

/// Peak-g2 model parameters and the anchor value at `xi = 1`.
pub const G2_GAMMA_S: f64 = 0.055;
pub const G2_LEAK_COEFF: f64 = 0.43;
pub const G2_N_B: f64 = 2.8;
pub const G2_AT_XI_1: f64 = 5.8;

/// Normalized cross-correlation of the bare source.
pub const SOURCE_G2: f64 = 47.0;

pub fn source() -> CavitySpdcParams {
    CavitySpdcParams::lossless_symmetric(SOURCE_FWHM, KAPPA_OVER_GAMMA).expect("preset source is valid")
}

/// 2^14 points over +-200 MHz.
pub fn spectrum_grid() -> UniformGrid {
    UniformGrid::centered(1 << 14, 200.0 * MHZ).expect("preset grid is valid")
}

/// -300 ns to 1200 ns in 20 ps steps.
pub fn time_window() -> TimeWindow {
    TimeWindow {
        start: -300e-9,
        end: 1200e-9,
        step: 20e-12,
    }
}

pub fn time_grid() -> UniformGrid {
    let w = time_window();
    let len = ((w.end - w.start) / w.step).round() as usize;
    UniformGrid::new(w.start, w.step, len).expect("preset grid is valid")
}

pub fn gamma_gs() -> f64 {
    DECAY_TO_GAMMA_GS * COHERENCE_DECAY * GAMMA
}

/// Write coupling that gives the target group delay of an ideal
/// (`gamma_gs = 0`) medium.
pub fn write_rabi() -> Result<f64> {
    coupling_for_group_delay(
        &EitParams::resonant(OPTICAL_DEPTH, GAMMA, 0.0, 0.0),
        DELAY_OVER_COHERENCE * COHERENCE_TIME,
    )
}

pub fn medium() -> Result<EitParams> {
    Ok(EitParams::resonant(OPTICAL_DEPTH, GAMMA, write_rabi()?, gamma_gs()))
}

pub fn schedule(xi: f64) -> Result<CouplingSchedule> {
    Ok(CouplingSchedule {
        write_rabi: write_rabi()?,
        t_off: T_OFF,
        t_on: T_OFF + STORAGE_TIME,
        xi,
        switch_duration: SWITCH_DURATION,
    })
}

pub fn decoherence() -> DecoherenceModel {
    DecoherenceModel {
        gamma_0: gamma_gs(),
        gamma_s_coeff: GAMMA_S,
        coupling_share: COUPLING_SHARE * GAMMA,
        intensity_exponent: INTENSITY_EXPONENT,
    }
}

pub fn g2_model() -> G2Model {
    G2Model {
        n_si: 1.0,
        gamma_s: G2_GAMMA_S,
        leak_coeff: G2_LEAK_COEFF,
        n_b: G2_N_B,
    }
    .scaled_to(1.0, G2_AT_XI_1)
}

pub fn histogram_geometry() -> HistogramGeometry {
    HistogramGeometry::default()
}

/// Detection chain with backgrounds set so that the bare source shows
/// `SOURCE_G2` and the `xi = 1` retrieval shows `G2_AT_XI_1`.
pub fn detection() -> DetectionParams {
    DetectionParams {
        collection_eff: 0.25,
        dark_rate: 0.0,
        accidental_rate: ACCIDENTAL_RATE,
        leak_coeff: LEAK_COEFF,
        n_triggers: 30_000,
        signal_delay: 800e-9,
    }
}

/// Uncorrelated background rate [1/s] matching `SOURCE_G2`.
pub const ACCIDENTAL_RATE: f64 = 1.419e5;
/// Coupling leakage per window per unit `xi` matching `G2_AT_XI_1`.
pub const LEAK_COEFF: f64 = 0.0896;
