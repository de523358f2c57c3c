//! Experiment configuration. Frequencies are in MHz (cycles per microsecond,
//! multiplied by 2 pi on the way in), times in ns, powers as ratios. Every
//! default is the reference operating point from `eit_memory::presets`.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use eit_memory::coincidence::{DetectionParams, FitGauge, G2Model, HistogramGeometry};
use eit_memory::eit_medium::{coupling_for_group_delay, EitParams};
use eit_memory::memory_sim::{CouplingSchedule, DecoherenceModel, SolverSettings};
use eit_memory::presets::{self, MHZ};
use eit_memory::spdc_source::CavitySpdcParams;
use eit_memory::UniformGrid;
use serde::{Deserialize, Serialize};

const NS: f64 = 1e-9;

/// Rounds to 12 significant digits so unit conversions of the defaults read
/// as the round numbers they are.
fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Spectrum,
    Slowlight,
    Store,
    SweepXi,
    Coincidence,
    FitG2,
    FitOd,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Spectrum,
        Scenario::Slowlight,
        Scenario::Store,
        Scenario::SweepXi,
        Scenario::Coincidence,
        Scenario::FitG2,
        Scenario::FitOd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Spectrum => "spectrum",
            Scenario::Slowlight => "slowlight",
            Scenario::Store => "store",
            Scenario::SweepXi => "sweep-xi",
            Scenario::Coincidence => "coincidence",
            Scenario::FitG2 => "fit-g2",
            Scenario::FitOd => "fit-od",
        }
    }
}

impl FromStr for Scenario {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| anyhow!("unknown scenario `{s}`; expected one of spectrum, slowlight, store, sweep-xi, coincidence, fit-g2, fit-od"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub source: SourceConfig,
    pub medium: MediumConfig,
    pub schedule: ScheduleConfig,
    pub decoherence: DecoherenceConfig,
    pub sweep: SweepConfig,
    pub detection: DetectionConfig,
    pub histogram: HistogramConfig,
    pub coincidence: CoincidenceConfig,
    pub model: ModelConfig,
    pub fit_g2: FitG2Config,
    pub fit_od: FitOdConfig,
    pub grid: GridConfig,
}

/// Explicit cavity rates; replaces the symmetric lossless default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub out_coupling_s_mhz: f64,
    pub out_coupling_i_mhz: f64,
    pub total_decay_s_mhz: f64,
    pub total_decay_i_mhz: f64,
    pub kappa_mhz: f64,
    #[serde(default)]
    pub signal_mode_mhz: f64,
    #[serde(default)]
    pub pump_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// FWHM of the biphoton power spectrum.
    pub fwhm_mhz: f64,
    pub kappa_over_gamma: f64,
    pub cavity: Option<CavityConfig>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            fwhm_mhz: tidy(presets::SOURCE_FWHM / MHZ),
            kappa_over_gamma: presets::KAPPA_OVER_GAMMA,
            cavity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediumConfig {
    pub optical_depth: f64,
    pub gamma_mhz: f64,
    /// Write coupling; when absent it is set from `group_delay_ns` for a
    /// medium without ground-state decoherence.
    pub coupling_rabi_mhz: Option<f64>,
    pub group_delay_ns: f64,
    /// Ground-state amplitude decay in units of gamma; `gamma_gs` is twice it.
    pub decay_over_gamma: f64,
    /// Overrides `decay_over_gamma`.
    pub gamma_gs_mhz: Option<f64>,
    pub delta_ge_mhz: f64,
    pub delta_gs_mhz: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            optical_depth: presets::OPTICAL_DEPTH,
            gamma_mhz: tidy(presets::GAMMA / MHZ),
            coupling_rabi_mhz: None,
            group_delay_ns: tidy(presets::DELAY_OVER_COHERENCE * presets::COHERENCE_TIME / NS),
            decay_over_gamma: presets::COHERENCE_DECAY,
            gamma_gs_mhz: None,
            delta_ge_mhz: 0.0,
            delta_gs_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Start of the switch-off edge.
    pub t_off_ns: f64,
    pub storage_ns: f64,
    pub xi: f64,
    /// 10-90% switching time.
    pub switch_ns: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            t_off_ns: tidy(presets::T_OFF / NS),
            storage_ns: tidy(presets::STORAGE_TIME / NS),
            xi: 1.0,
            switch_ns: tidy(presets::SWITCH_DURATION / NS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoherenceConfig {
    pub gamma_s: f64,
    /// Coupling share `k` in units of gamma. The default belongs to the
    /// default operating point; set `calibrate` after changing the medium.
    pub coupling_share_over_gamma: f64,
    pub intensity_exponent: f64,
    /// Re-fit `k` against `sweep.xi` before running (slow: tens of sweeps).
    pub calibrate: bool,
    pub calibration_tolerance: f64,
}

impl Default for DecoherenceConfig {
    fn default() -> Self {
        DecoherenceConfig {
            gamma_s: presets::GAMMA_S,
            coupling_share_over_gamma: presets::COUPLING_SHARE,
            intensity_exponent: presets::INTENSITY_EXPONENT,
            calibrate: false,
            calibration_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub xi: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            xi: presets::XI_SWEEP.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub collection_eff: f64,
    pub dark_rate_hz: f64,
    pub accidental_rate_hz: f64,
    pub leak_coeff: f64,
    pub n_triggers: u64,
    pub signal_delay_ns: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        let d = presets::detection();
        DetectionConfig {
            collection_eff: d.collection_eff,
            dark_rate_hz: d.dark_rate,
            accidental_rate_hz: d.accidental_rate,
            leak_coeff: d.leak_coeff,
            n_triggers: d.n_triggers,
            signal_delay_ns: tidy(d.signal_delay / NS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    pub start_ns: f64,
    pub bin_ns: f64,
    pub bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        let g = presets::histogram_geometry();
        HistogramConfig {
            start_ns: tidy(g.start / NS),
            bin_ns: tidy(g.bin_width / NS),
            bins: g.bins,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    Source,
    Slowlight,
    Store,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoincidenceConfig {
    /// Which correlation waveform the detectors see.
    pub waveform: Waveform,
    /// Leakage multiplier; defaults to 0 for the bare source, 1 for slow
    /// light and `schedule.xi` for storage.
    pub xi: Option<f64>,
    /// Time-tag file `(trigger_id, detection_time_ns)`; replaces the Monte
    /// Carlo histogram. Relative paths resolve against the config file.
    pub events: Option<PathBuf>,
}

impl Default for CoincidenceConfig {
    fn default() -> Self {
        CoincidenceConfig {
            waveform: Waveform::Store,
            xi: None,
            events: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub gamma_s: f64,
    pub leak_coeff: f64,
    pub n_b: f64,
    /// `n_si` is chosen so that the model equals this at `xi = 1`.
    pub g2_at_xi_1: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gamma_s: presets::G2_GAMMA_S,
            leak_coeff: presets::G2_LEAK_COEFF,
            n_b: presets::G2_N_B,
            g2_at_xi_1: presets::G2_AT_XI_1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeParam {
    NSi,
    LeakCoeff,
    NB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitG2Config {
    /// `(xi, g2, sigma)` CSV; without it, noisy points are drawn from `model`.
    pub data: Option<PathBuf>,
    pub xi: Vec<f64>,
    pub noise: f64,
    pub fix: GaugeParam,
    pub fix_value: f64,
}

impl Default for FitG2Config {
    fn default() -> Self {
        FitG2Config {
            data: None,
            xi: vec![0.72, 1.0, 2.0, 3.5, 5.0, 8.7, 12.0],
            noise: 0.05,
            fix: GaugeParam::NB,
            fix_value: presets::G2_N_B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOdConfig {
    /// `(detuning_Hz, T)` CSV; without it, a noisy spectrum of `medium`.
    pub data: Option<PathBuf>,
    pub points: usize,
    pub span_over_gamma: f64,
    pub noise: f64,
}

impl Default for FitOdConfig {
    fn default() -> Self {
        FitOdConfig {
            data: None,
            points: 401,
            span_over_gamma: 10.0,
            noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub spectrum_points: usize,
    pub spectrum_half_span_mhz: f64,
    pub time_start_ns: f64,
    pub time_end_ns: f64,
    pub time_step_ns: f64,
    pub slices: usize,
    pub step_factor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = presets::spectrum_grid();
        let w = presets::time_window();
        let set = SolverSettings::default();
        GridConfig {
            spectrum_points: s.len,
            spectrum_half_span_mhz: tidy(-s.start / MHZ),
            time_start_ns: tidy(w.start / NS),
            time_end_ns: tidy(w.end / NS),
            time_step_ns: tidy(w.step / NS),
            slices: set.slices,
            step_factor: set.step_factor,
        }
    }
}

/// Parses TOML text. An empty document is rejected: every run must say what
/// it is for.
pub fn parse(text: &str) -> Result<Config> {
    let table: toml::Table = text.parse().context("config is not valid TOML")?;
    if table.is_empty() {
        bail!("config is empty; set at least `scenario`");
    }
    Config::deserialize(toml::Value::Table(table)).map_err(|e| anyhow!("invalid config: {e}"))
}

/// Physical parameters in SI units, validated.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub source: CavitySpdcParams,
    pub medium: EitParams,
    pub schedule: CouplingSchedule,
    pub decoherence: DecoherenceModel,
    pub detection: DetectionParams,
    pub histogram: HistogramGeometry,
    pub model: G2Model,
    pub gauge: FitGauge,
    #[serde(skip)]
    pub spectrum_grid: UniformGrid,
    #[serde(skip)]
    pub time_grid: UniformGrid,
    #[serde(skip)]
    pub settings: SolverSettings,
}

fn section<T>(name: &str, r: eit_memory::Result<T>) -> Result<T> {
    r.with_context(|| format!("in [{name}]"))
}

impl Config {
    pub fn resolve(&self) -> Result<Resolved> {
        let s = &self.source;
        let source = section(
            "source",
            match &s.cavity {
                None => CavitySpdcParams::lossless_symmetric(s.fwhm_mhz * MHZ, s.kappa_over_gamma),
                Some(c) => CavitySpdcParams::new(
                    (c.out_coupling_s_mhz * MHZ, c.out_coupling_i_mhz * MHZ),
                    (c.total_decay_s_mhz * MHZ, c.total_decay_i_mhz * MHZ),
                    c.kappa_mhz * MHZ,
                    c.signal_mode_mhz * MHZ,
                    c.pump_mhz * MHZ,
                ),
            },
        )?;

        let m = &self.medium;
        let gamma = m.gamma_mhz * MHZ;
        let gamma_gs = match m.gamma_gs_mhz {
            Some(g) => g * MHZ,
            None => presets::DECAY_TO_GAMMA_GS * m.decay_over_gamma * gamma,
        };
        let bare = EitParams {
            delta_ge: m.delta_ge_mhz * MHZ,
            delta_gs: m.delta_gs_mhz * MHZ,
            ..EitParams::resonant(m.optical_depth, gamma, 0.0, gamma_gs)
        };
        section("medium", bare.validate())?;
        let rabi = match m.coupling_rabi_mhz {
            Some(o) => o * MHZ,
            None => section(
                "medium",
                coupling_for_group_delay(&EitParams { gamma_gs: 0.0, ..bare }, m.group_delay_ns * NS),
            )?,
        };
        let medium = bare.with_coupling(rabi);
        section("medium", medium.validate())?;

        let sc = &self.schedule;
        let schedule = CouplingSchedule {
            write_rabi: rabi,
            t_off: sc.t_off_ns * NS,
            t_on: (sc.t_off_ns + sc.storage_ns) * NS,
            xi: sc.xi,
            switch_duration: sc.switch_ns * NS,
        };
        section("schedule", schedule.validate())?;

        let dc = &self.decoherence;
        let decoherence = DecoherenceModel {
            gamma_0: gamma_gs,
            gamma_s_coeff: dc.gamma_s,
            coupling_share: dc.coupling_share_over_gamma * gamma,
            intensity_exponent: dc.intensity_exponent,
        };
        section("decoherence", decoherence.validate())?;
        if !(dc.calibration_tolerance > 0.0) {
            bail!("in [decoherence]: calibration_tolerance must be > 0");
        }

        if self.sweep.xi.is_empty() {
            bail!("in [sweep]: xi must list at least one value");
        }

        let d = &self.detection;
        let detection = DetectionParams {
            collection_eff: d.collection_eff,
            dark_rate: d.dark_rate_hz,
            accidental_rate: d.accidental_rate_hz,
            leak_coeff: d.leak_coeff,
            n_triggers: d.n_triggers,
            signal_delay: d.signal_delay_ns * NS,
        };
        section("detection", detection.validate())?;

        let h = &self.histogram;
        let histogram = HistogramGeometry {
            start: h.start_ns * NS,
            bin_width: h.bin_ns * NS,
            bins: h.bins,
        };
        section("histogram", histogram.validate())?;
        if let Some(x) = self.coincidence.xi {
            if !(x >= 0.0 && x.is_finite()) {
                bail!("in [coincidence]: xi must be finite and >= 0");
            }
        }

        let mc = &self.model;
        let raw = G2Model {
            n_si: 1.0,
            gamma_s: mc.gamma_s,
            leak_coeff: mc.leak_coeff,
            n_b: mc.n_b,
        };
        section("model", raw.validate())?;
        if !(mc.g2_at_xi_1 > 0.0) {
            bail!("in [model]: g2_at_xi_1 must be > 0");
        }
        let model = raw.scaled_to(1.0, mc.g2_at_xi_1);
        let gauge = match self.fit_g2.fix {
            GaugeParam::NSi => FitGauge::NSi(self.fit_g2.fix_value),
            GaugeParam::LeakCoeff => FitGauge::LeakCoeff(self.fit_g2.fix_value),
            GaugeParam::NB => FitGauge::NB(self.fit_g2.fix_value),
        };
        if !(self.fit_g2.noise >= 0.0) {
            bail!("in [fit_g2]: noise must be >= 0");
        }
        let fo = &self.fit_od;
        if !(fo.noise >= 0.0) || !(fo.span_over_gamma > 0.0) || fo.points < 2 {
            bail!("in [fit_od]: need noise >= 0, span_over_gamma > 0 and points >= 2");
        }

        let g = &self.grid;
        let spectrum_grid = section(
            "grid",
            UniformGrid::centered(g.spectrum_points, g.spectrum_half_span_mhz * MHZ),
        )?;
        if !(g.time_step_ns > 0.0 && g.time_end_ns > g.time_start_ns) {
            bail!("in [grid]: need time_step_ns > 0 and time_end_ns > time_start_ns");
        }
        let len = ((g.time_end_ns - g.time_start_ns) / g.time_step_ns).round() as usize;
        let time_grid = section("grid", UniformGrid::new(g.time_start_ns * NS, g.time_step_ns * NS, len))?;
        let settings = SolverSettings {
            slices: g.slices,
            step_factor: g.step_factor,
        };

        Ok(Resolved {
            source,
            medium,
            schedule,
            decoherence,
            detection,
            histogram,
            model,
            gauge,
            spectrum_grid,
            time_grid,
            settings,
        })
    }
}
