//! Slow light and write/store/read cycles of a single-photon waveform.

mod solver;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eit_medium::{propagation_kernel, EitParams};
use crate::error::{ensure_nonneg, ensure_positive, Error, Result};
use crate::fit::linear_fit;
use crate::grid::{fwhm, UniformGrid};
use crate::spectrum::{g2_waveform_from_spectrum, ComplexSpectrum, FieldWaveform, G2Waveform};

pub use solver::{integrate, EnergyLedger, SolverOutput, SolverSettings};

/// Fraction of a raised-cosine edge spent between its 10% and 90% points.
pub fn ramp_10_90_fraction() -> f64 {
    1.0 - 2.0 * 0.8f64.acos() / PI
}

/// Coupling power timeline: on at write power, raised-cosine switch-off at
/// `t_off`, dark storage, raised-cosine switch-on at `t_on` to `xi` times the
/// write power. Each edge starts at its switch time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSchedule {
    /// Coupling Rabi frequency during writing [rad/s].
    pub write_rabi: f64,
    pub t_off: f64,
    pub t_on: f64,
    /// Read-to-write power ratio.
    pub xi: f64,
    /// 10-90% switching time [s].
    pub switch_duration: f64,
}

impl CouplingSchedule {
    /// Coupling held at `rabi` for all times.
    pub fn constant(rabi: f64) -> Self {
        CouplingSchedule {
            write_rabi: rabi,
            t_off: f64::INFINITY,
            t_on: f64::INFINITY,
            xi: 1.0,
            switch_duration: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonneg("write_rabi", self.write_rabi)?;
        ensure_positive("xi", self.xi)?;
        ensure_nonneg("switch_duration", self.switch_duration)?;
        if self.is_constant() {
            return Ok(());
        }
        if !self.t_off.is_finite() || !self.t_on.is_finite() {
            return Err(Error::param("t_off", "switch times must both be finite or both infinite"));
        }
        if self.t_on < self.t_off {
            return Err(Error::param("t_on", "must not precede t_off"));
        }
        if self.storage_time() < self.ramp_length() {
            return Err(Error::param(
                "t_on",
                format!(
                    "storage time {:e} s is shorter than the switching edge {:e} s",
                    self.storage_time(),
                    self.ramp_length()
                ),
            ));
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.t_off == f64::INFINITY && self.t_on == f64::INFINITY
    }

    pub fn storage_time(&self) -> f64 {
        self.t_on - self.t_off
    }

    /// Full length of one switching edge.
    pub fn ramp_length(&self) -> f64 {
        self.switch_duration / ramp_10_90_fraction()
    }

    /// Coupling power relative to the write power.
    pub fn power_envelope(&self, t: f64) -> f64 {
        let r = self.ramp_length();
        if t < self.t_off {
            1.0
        } else if t < self.t_off + r {
            0.5 * (1.0 + (PI * (t - self.t_off) / r).cos())
        } else if t < self.t_on {
            0.0
        } else if t < self.t_on + r {
            self.xi * 0.5 * (1.0 - (PI * (t - self.t_on) / r).cos())
        } else {
            self.xi
        }
    }

    pub fn rabi_at(&self, t: f64) -> f64 {
        self.write_rabi * self.power_envelope(t).sqrt()
    }

    pub fn read_rabi(&self) -> f64 {
        self.write_rabi * self.xi.sqrt()
    }
}

/// Ground-state decoherence tied to the coupling power.
///
/// The instantaneous rate is `gamma_0 - k + k * P^n`, with `P` the coupling
/// power relative to the write power, so it equals `gamma_0` while writing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceModel {
    /// Rate at write power [rad/s].
    pub gamma_0: f64,
    /// Target decay constant of retrieval efficiency per unit `xi`.
    pub gamma_s_coeff: f64,
    /// Coupling-driven share `k` [rad/s], `0 <= k <= gamma_0`.
    pub coupling_share: f64,
    /// Power exponent `n` of the coupling-driven share.
    pub intensity_exponent: f64,
}

impl DecoherenceModel {
    pub fn none() -> Self {
        DecoherenceModel {
            gamma_0: 0.0,
            gamma_s_coeff: 0.0,
            coupling_share: 0.0,
            intensity_exponent: 1.0,
        }
    }

    pub fn static_rate(gamma_0: f64) -> Self {
        DecoherenceModel {
            gamma_0,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonneg("gamma_0", self.gamma_0)?;
        ensure_nonneg("gamma_s_coeff", self.gamma_s_coeff)?;
        ensure_nonneg("coupling_share", self.coupling_share)?;
        ensure_positive("intensity_exponent", self.intensity_exponent)?;
        if self.coupling_share > self.gamma_0 {
            return Err(Error::param("coupling_share", "must not exceed gamma_0"));
        }
        Ok(())
    }

    pub fn rate(&self, power_envelope: f64) -> f64 {
        let k = self.coupling_share;
        (self.gamma_0 - k + k * power_envelope.powf(self.intensity_exponent)).max(0.0)
    }
}

/// `1 / (2 pi FWHM)` of a correlation waveform [Hz].
pub fn bandwidth_from_fwhm(fwhm_s: f64) -> f64 {
    1.0 / (2.0 * PI * fwhm_s)
}

#[derive(Debug, Clone)]
pub struct SlowLight {
    pub out_spec: ComplexSpectrum,
    pub g2: G2Waveform,
    pub efficiency: f64,
    pub bandwidth_hz: f64,
    /// Shift of the G2 peak relative to the input [s].
    pub delay: f64,
}

/// Static-coupling transmission of a biphoton spectrum.
pub fn slow_light(spectrum: &ComplexSpectrum, p: &EitParams) -> Result<SlowLight> {
    let resp = propagation_kernel(p, &spectrum.grid)?;
    let out_spec = spectrum.filtered(&resp.grid, &resp.kernel)?;
    let e_in = spectrum.energy();
    if !(e_in > 0.0) {
        return Err(Error::Domain("input spectrum carries no energy".into()));
    }
    let g_in = g2_waveform_from_spectrum(spectrum)?;
    let g2 = g2_waveform_from_spectrum(&out_spec)?;
    let width = g2
        .fwhm()
        .ok_or_else(|| Error::NoFwhm("transmitted G2 has no half-maximum width".into()))?;
    Ok(SlowLight {
        efficiency: out_spec.energy() / e_in,
        bandwidth_hz: bandwidth_from_fwhm(width),
        delay: g2.peak_time() - g_in.peak_time(),
        out_spec,
        g2,
    })
}

#[derive(Debug, Clone)]
pub struct StorageResult {
    pub out_field: FieldWaveform,
    /// Output energy at `t >= t_on` over input energy.
    pub efficiency: f64,
    /// Output energy after the switch-on edge has finished, over input energy.
    pub efficiency_excluding_switch: f64,
    /// Output energy before `t_off` over input energy.
    pub leakage: f64,
    pub retrieved_bandwidth_hz: f64,
    pub energy: EnergyLedger,
}

fn window_energy(f: &FieldWaveform, t0: f64, t1: f64) -> f64 {
    f.grid
        .points()
        .zip(&f.value)
        .filter(|(t, _)| *t >= t0 && *t < t1)
        .map(|(_, v)| v.norm_sqr())
        .sum::<f64>()
        * f.grid.step
}

/// Write, store and read `in_field` with a switched coupling.
pub fn simulate_storage(
    in_field: &FieldWaveform,
    p: &EitParams,
    sched: &CouplingSchedule,
    dec: &DecoherenceModel,
    settings: &SolverSettings,
) -> Result<StorageResult> {
    sched.validate()?;
    dec.validate()?;
    if sched.is_constant() {
        return Err(Error::param("t_off", "storage needs finite switch times"));
    }
    let peak = sched.write_rabi * sched.xi.max(1.0).sqrt();
    let run = integrate(
        in_field,
        p,
        |t| sched.rabi_at(t),
        |t| dec.rate(sched.power_envelope(t)),
        peak,
        settings,
    )?;
    let e_in = run.energy.input;
    if !(e_in > 0.0) {
        return Err(Error::Domain("input field carries no energy".into()));
    }
    let out = run.field;
    let end = f64::INFINITY;
    let efficiency = window_energy(&out, sched.t_on, end) / e_in;
    let efficiency_excluding_switch = window_energy(&out, sched.t_on + sched.ramp_length(), end) / e_in;
    let leakage = window_energy(&out, f64::NEG_INFINITY, sched.t_off) / e_in;

    let first = out.grid.points().position(|t| t >= sched.t_on).unwrap_or(out.grid.len);
    if out.grid.len - first < 3 {
        return Err(Error::NoFwhm("retrieval window holds no samples".into()));
    }
    let rgrid = UniformGrid {
        start: out.grid.at(first),
        step: out.grid.step,
        len: out.grid.len - first,
    };
    let intensity: Vec<f64> = out.value[first..].iter().map(|v| v.norm_sqr()).collect();
    let width = fwhm(&rgrid, &intensity)
        .ok_or_else(|| Error::NoFwhm("retrieved pulse has no half-maximum width".into()))?;
    Ok(StorageResult {
        out_field: out,
        efficiency,
        efficiency_excluding_switch,
        leakage,
        retrieved_bandwidth_hz: bandwidth_from_fwhm(width),
        energy: run.energy,
    })
}

/// Constant-coupling propagation through the time-domain solver.
pub fn propagate_constant(
    in_field: &FieldWaveform,
    p: &EitParams,
    settings: &SolverSettings,
) -> Result<SolverOutput> {
    integrate(
        in_field,
        p,
        |_| p.coupling_rabi,
        |_| p.gamma_gs,
        p.coupling_rabi,
        settings,
    )
}

/// Time span simulated for spectrum-driven runs, and the output sample step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl TimeWindow {
    /// Samples `spectrum` on the window. The spectrum's own time grid is cut to
    /// the window and interpolated down to `step`.
    pub fn field_from_spectrum(&self, spectrum: &ComplexSpectrum) -> Result<FieldWaveform> {
        ensure_positive("window.step", self.step)?;
        if !(self.end > self.start) {
            return Err(Error::param("window.end", "must exceed window.start"));
        }
        let coarse = spectrum.to_field();
        let cut = coarse.window(self.start, self.end)?;
        let factor = (cut.grid.step / self.step).ceil().max(1.0) as usize;
        Ok(cut.upsampled(factor))
    }
}

/// G2 of the stored-and-retrieved biphoton (no background).
pub fn retrieved_g2(
    spectrum: &ComplexSpectrum,
    window: &TimeWindow,
    p: &EitParams,
    sched: &CouplingSchedule,
    dec: &DecoherenceModel,
    settings: &SolverSettings,
) -> Result<G2Waveform> {
    let input = window.field_from_spectrum(spectrum)?;
    let res = simulate_storage(&input, p, sched, dec, settings)?;
    Ok(res.out_field.intensity())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub xi: f64,
    pub efficiency: f64,
    pub efficiency_excluding_switch: f64,
    pub leakage: f64,
    pub bandwidth_hz: f64,
}

/// `efficiency ~ A exp(-gamma_s xi)` and `bandwidth ~ c xi^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub gamma_s: f64,
    pub amplitude: f64,
    pub log_r_squared: f64,
    pub prefactor_hz: f64,
    pub exponent: f64,
    pub power_r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub fit: Option<SweepFit>,
}

impl SweepTable {
    pub fn from_rows(rows: Vec<SweepRow>) -> Self {
        let fit = fit_sweep(&rows).ok();
        SweepTable { rows, fit }
    }
}

pub fn fit_sweep(rows: &[SweepRow]) -> Result<SweepFit> {
    let xi: Vec<f64> = rows.iter().map(|r| r.xi).collect();
    if rows.iter().any(|r| !(r.efficiency > 0.0 && r.bandwidth_hz > 0.0)) {
        return Err(Error::Domain("efficiencies and bandwidths must be positive to fit".into()));
    }
    let ln_eff: Vec<f64> = rows.iter().map(|r| r.efficiency.ln()).collect();
    let (a, b, r2) = linear_fit(&xi, &ln_eff)?;
    let ln_xi: Vec<f64> = xi.iter().map(|x| x.ln()).collect();
    let ln_bw: Vec<f64> = rows.iter().map(|r| r.bandwidth_hz.ln()).collect();
    let (c, pw, r2p) = linear_fit(&ln_xi, &ln_bw)?;
    Ok(SweepFit {
        gamma_s: -b,
        amplitude: a.exp(),
        log_r_squared: r2,
        prefactor_hz: c.exp(),
        exponent: pw,
        power_r_squared: r2p,
    })
}

/// Storage runs over read/write ratios `xis`, all else fixed.
///
/// Points run in parallel. If any point fails, the error carries the rows
/// that precede it.
pub fn bandwidth_vs_xi(
    in_field: &FieldWaveform,
    p: &EitParams,
    sched: &CouplingSchedule,
    dec: &DecoherenceModel,
    xis: &[f64],
    settings: &SolverSettings,
) -> Result<SweepTable> {
    if let Some(x) = xis.iter().find(|x| !(**x > 0.0 && **x <= 16.0)) {
        return Err(Error::param("xi", format!("sweep values must lie in (0, 16], got {x}")));
    }
    let results: Vec<Result<SweepRow>> = xis
        .par_iter()
        .map(|&xi| {
            let s = CouplingSchedule { xi, ..*sched };
            simulate_storage(in_field, p, &s, dec, settings).map(|r| SweepRow {
                xi,
                efficiency: r.efficiency,
                efficiency_excluding_switch: r.efficiency_excluding_switch,
                leakage: r.leakage,
                bandwidth_hz: r.retrieved_bandwidth_hz,
            })
        })
        .collect();
    let mut rows = Vec::with_capacity(xis.len());
    for (xi, r) in xis.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Err(Error::SweepAborted {
                    xi: *xi,
                    partial: Box::new(SweepTable::from_rows(rows)),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(SweepTable::from_rows(rows))
}

/// Chooses the coupling share `k` so that the fitted efficiency decay over
/// `xis` equals `dec.gamma_s_coeff`. A zero target returns `k = 0`.
///
/// The fitted decay grows with `k`; the root is bracketed on `[0, gamma_0]`
/// and found by bisection to `tol` (absolute, in units of `gamma_s`).
pub fn calibrate_decoherence(
    in_field: &FieldWaveform,
    p: &EitParams,
    sched: &CouplingSchedule,
    dec: &DecoherenceModel,
    xis: &[f64],
    tol: f64,
    settings: &SolverSettings,
) -> Result<DecoherenceModel> {
    dec.validate()?;
    if dec.gamma_s_coeff == 0.0 {
        return Ok(DecoherenceModel {
            coupling_share: 0.0,
            ..*dec
        });
    }
    let target = dec.gamma_s_coeff;
    let fitted = |k: f64| -> Result<f64> {
        let d = DecoherenceModel {
            coupling_share: k,
            ..*dec
        };
        let table = bandwidth_vs_xi(in_field, p, sched, &d, xis, settings)?;
        Ok(fit_sweep(&table.rows)?.gamma_s)
    };
    let (mut lo, mut hi) = (0.0, dec.gamma_0);
    let (f_lo, f_hi) = (fitted(lo)?, fitted(hi)?);
    if f_lo > target || f_hi < target {
        return Err(Error::Domain(format!(
            "target decay {target} lies outside the reachable range [{f_lo:.4}, {f_hi:.4}]"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = fitted(mid)?;
        if (f - target).abs() <= tol {
            lo = mid;
            hi = mid;
            break;
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DecoherenceModel {
        coupling_share: 0.5 * (lo + hi),
        ..*dec
    })
}
