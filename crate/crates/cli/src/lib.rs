//! Runs one configured scenario and writes its CSV tables plus a JSON
//! manifest. Output names carry a hash of the resolved configuration, so equal
//! inputs always land in (and overwrite with identical bytes) the same files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use eit_memory::coincidence::{
    analytic_g2, estimate_g2, fit_g2_model, g2_model_argmax, g2_peak_model, histogram_from_events,
    monte_carlo_histogram, synthetic_g2_points,
};
use eit_memory::eit_medium::{
    eit_bandwidth, fit_optical_depth, group_delay, synthetic_transmission, transmission_closed_form,
    transmission_spectrum,
};
use eit_memory::memory_sim::{
    bandwidth_vs_xi, calibrate_decoherence, simulate_storage, slow_light, DecoherenceModel, SweepTable,
};
use eit_memory::spdc_source::{biphoton_field, biphoton_spectrum};
use eit_memory::{io, Error, FieldWaveform, G2Waveform};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::{parse, Config, Resolved, Scenario, Waveform};

const HZ: f64 = 1.0 / (2.0 * PI);

/// Everything a scenario produced, held in memory until written.
struct Artifacts {
    /// `(suffix, csv bytes)`; the first table gets no suffix.
    tables: Vec<(&'static str, Vec<u8>)>,
    results: Value,
    k: f64,
    failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub results: Value,
    /// Set when the scenario stopped early and only partial results exist.
    pub failure: Option<String>,
}

/// Reads and parses a config file.
pub fn load(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse(&text).with_context(|| format!("in {}", path.display()))
}

/// Hex SHA-256 of the configuration with the output directory removed.
pub fn config_hash(cfg: &Config) -> Result<String> {
    let mut c = cfg.clone();
    c.out = None;
    let bytes = serde_json::to_vec(&c)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn csv<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> eit_memory::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs the configured scenario. `base` resolves relative data paths; outputs
/// go to `out`, which is created if missing. Nothing is written when the
/// scenario fails outright.
pub fn run(cfg: &Config, base: &Path, out: &Path) -> Result<Outcome> {
    let scenario = cfg
        .scenario
        .ok_or_else(|| anyhow!("no scenario given; set `scenario` or pass --scenario"))?;
    let r = cfg.resolve()?;
    let art = match scenario {
        Scenario::Spectrum => spectrum(&r)?,
        Scenario::Slowlight => slowlight(&r)?,
        Scenario::Store => store(cfg, &r)?,
        Scenario::SweepXi => sweep(cfg, &r)?,
        Scenario::Coincidence => coincidence(cfg, &r, base)?,
        Scenario::FitG2 => fit_g2(cfg, &r, base)?,
        Scenario::FitOd => fit_od(cfg, &r, base)?,
    };

    let hash = config_hash(cfg)?;
    let stem = format!("{}-{}", scenario.name(), &hash[..12]);
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut files = Vec::new();
    for (suffix, bytes) in &art.tables {
        let name = if suffix.is_empty() {
            format!("{stem}.csv")
        } else {
            format!("{stem}-{suffix}.csv")
        };
        let path = out.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        files.push(path);
    }
    let manifest = json!({
        "scenario": scenario.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": hash,
        "seed": cfg.seed,
        "config": cfg,
        "si": r,
        "coupling_share": art.k,
        "coupling_share_over_gamma": art.k / r.medium.gamma,
        "outputs": files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "complete": art.failure.is_none(),
        "error": art.failure,
        "results": art.results,
    });
    let mpath = out.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&mpath, text).with_context(|| format!("cannot write {}", mpath.display()))?;
    Ok(Outcome {
        files,
        manifest: mpath,
        results: art.results,
        failure: art.failure,
    })
}

fn spectrum(r: &Resolved) -> Result<Artifacts> {
    let spectrum = biphoton_spectrum(&r.source, &r.spectrum_grid, true)?;
    let g2 = eit_memory::spectrum::g2_waveform_from_spectrum(&spectrum)?;
    let det: Vec<f64> = spectrum.grid.points().collect();
    let t = transmission_spectrum(&r.medium, &det)?;
    let fwhm = spectrum.power_fwhm().ok_or_else(|| anyhow!("source spectrum has no half-maximum width"))?;
    let results = json!({
        "source_fwhm_hz": fwhm * HZ,
        "coherence_time_s": g2.fwhm(),
        "eit_bandwidth_hz": eit_bandwidth(&r.medium).ok().map(|b| b * HZ),
        "group_delay_s": group_delay(&r.medium).ok(),
        "resonant_transmission": transmission_closed_form(&r.medium, 0.0),
    });
    Ok(Artifacts {
        tables: vec![
            ("", csv(|w| io::write_spectrum(w, &spectrum))?),
            ("g2", csv(|w| io::write_g2(w, &g2))?),
            ("transmission", csv(|w| io::write_transmission(w, &det, &t))?),
        ],
        results,
        k: r.decoherence.coupling_share,
        failure: None,
    })
}

fn slowlight(r: &Resolved) -> Result<Artifacts> {
    let spectrum = biphoton_spectrum(&r.source, &r.spectrum_grid, true)?;
    let s = slow_light(&spectrum, &r.medium)?;
    Ok(Artifacts {
        results: json!({
            "efficiency": s.efficiency,
            "bandwidth_hz": s.bandwidth_hz,
            "delay_s": s.delay,
        }),
        tables: vec![
            ("", csv(|w| io::write_g2(w, &s.g2))?),
            ("spectrum", csv(|w| io::write_spectrum(w, &s.out_spec))?),
        ],
        k: r.decoherence.coupling_share,
        failure: None,
    })
}

fn input_field(r: &Resolved) -> Result<FieldWaveform> {
    Ok(biphoton_field(&r.source, &r.time_grid, true)?)
}

/// The configured decoherence, re-fitted first when `calibrate` is set.
fn decoherence(cfg: &Config, r: &Resolved, input: &FieldWaveform) -> Result<DecoherenceModel> {
    if !cfg.decoherence.calibrate {
        return Ok(r.decoherence);
    }
    calibrate_decoherence(
        input,
        &r.medium,
        &r.schedule,
        &r.decoherence,
        &cfg.sweep.xi,
        cfg.decoherence.calibration_tolerance,
        &r.settings,
    )
    .context("calibrating [decoherence]")
}

fn store(cfg: &Config, r: &Resolved) -> Result<Artifacts> {
    let input = input_field(r)?;
    let dec = decoherence(cfg, r, &input)?;
    let s = simulate_storage(&input, &r.medium, &r.schedule, &dec, &r.settings)?;
    Ok(Artifacts {
        results: json!({
            "efficiency": s.efficiency,
            "efficiency_excluding_switch": s.efficiency_excluding_switch,
            "leakage": s.leakage,
            "bandwidth_hz": s.retrieved_bandwidth_hz,
            "energy": {
                "input": s.energy.input,
                "output": s.energy.output,
                "stored": s.energy.stored,
                "dissipated": s.energy.dissipated,
                "closure_error": s.energy.closure_error(),
            },
        }),
        tables: vec![("", csv(|w| io::write_field(w, &s.out_field))?)],
        k: dec.coupling_share,
        failure: None,
    })
}

fn sweep_table(t: &SweepTable) -> Result<Vec<u8>> {
    let rows: Vec<Vec<f64>> = t
        .rows
        .iter()
        .map(|r| vec![r.xi, r.efficiency, r.efficiency_excluding_switch, r.leakage, r.bandwidth_hz])
        .collect();
    csv(|w| {
        io::write_table(
            w,
            &["xi", "efficiency", "efficiency_excluding_switch", "leakage", "bandwidth_Hz"],
            &rows,
        )
    })
}

fn sweep(cfg: &Config, r: &Resolved) -> Result<Artifacts> {
    let input = input_field(r)?;
    let dec = decoherence(cfg, r, &input)?;
    let (table, failure) = match bandwidth_vs_xi(&input, &r.medium, &r.schedule, &dec, &cfg.sweep.xi, &r.settings) {
        Ok(t) => (t, None),
        Err(Error::SweepAborted { xi, partial, source }) => (*partial, Some(format!("sweep stopped at xi = {xi}: {source}"))),
        Err(e) => return Err(e.into()),
    };
    Ok(Artifacts {
        results: json!({ "rows": table.rows, "fit": table.fit }),
        tables: vec![("", sweep_table(&table)?)],
        k: dec.coupling_share,
        failure,
    })
}

fn coincidence(cfg: &Config, r: &Resolved, base: &Path) -> Result<Artifacts> {
    let c = &cfg.coincidence;
    let mut k = r.decoherence.coupling_share;
    let (g2, default_xi): (G2Waveform, f64) = match c.waveform {
        Waveform::Source => (input_field(r)?.intensity(), 0.0),
        Waveform::Slowlight => {
            let spectrum = biphoton_spectrum(&r.source, &r.spectrum_grid, true)?;
            (slow_light(&spectrum, &r.medium)?.g2, 1.0)
        }
        Waveform::Store => {
            let input = input_field(r)?;
            let dec = decoherence(cfg, r, &input)?;
            k = dec.coupling_share;
            let s = simulate_storage(&input, &r.medium, &r.schedule, &dec, &r.settings)?;
            (s.out_field.intensity(), r.schedule.xi)
        }
    };
    let xi = c.xi.unwrap_or(default_xi);
    let hist = match &c.events {
        Some(p) => {
            let path = resolve_path(base, p);
            let f = fs::File::open(&path).with_context(|| format!("[coincidence] events: cannot open {}", path.display()))?;
            let ev = io::read_events(f).with_context(|| format!("[coincidence] events: {}", path.display()))?;
            histogram_from_events(&ev, &r.histogram, r.detection.n_triggers)?
        }
        None => monte_carlo_histogram(&g2, &r.detection, &r.histogram, xi, cfg.seed)?,
    };
    let est = estimate_g2(&hist)?;
    Ok(Artifacts {
        results: json!({
            "g2": est.g2,
            "uncertainty": est.uncertainty,
            "tau_d_s": est.tau_d,
            "peak_count": est.peak_count,
            "floor_mean": est.floor_mean,
            "above_classical_limit": est.above_classical_limit(),
            "analytic_g2": analytic_g2(&g2, &r.detection, &r.histogram, xi).ok(),
            "dense_warning": hist.dense_warning,
            "xi": xi,
            "counts_total": hist.total(),
        }),
        tables: vec![("", csv(|w| io::write_histogram(w, &hist))?)],
        k,
        failure: None,
    })
}

fn fit_g2(cfg: &Config, r: &Resolved, base: &Path) -> Result<Artifacts> {
    let f = &cfg.fit_g2;
    let points = match &f.data {
        Some(p) => {
            let path = resolve_path(base, p);
            let file = fs::File::open(&path).with_context(|| format!("[fit_g2] data: cannot open {}", path.display()))?;
            io::read_g2_points(file).with_context(|| format!("[fit_g2] data: {}", path.display()))?
        }
        None => synthetic_g2_points(&r.model, &f.xi, f.noise, cfg.seed).context("in [fit_g2]")?,
    };
    let fit = fit_g2_model(&points, r.gauge).context("fitting [fit_g2]")?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|&(x, g, s)| vec![x, g, s, g2_peak_model(&fit.model, x)])
        .collect();
    let sd: Vec<f64> = (0..4).map(|i| fit.covariance[(i, i)].max(0.0).sqrt()).collect();
    Ok(Artifacts {
        results: json!({
            "model": fit.model,
            "std_error": { "n_si": sd[0], "gamma_s": sd[1], "leak_coeff": sd[2], "n_b": sd[3] },
            "chi_squared": fit.chi_squared,
            "iterations": fit.iterations,
            "argmax_xi": g2_model_argmax(&fit.model).ok(),
            "reference_argmax_xi": g2_model_argmax(&r.model).ok(),
        }),
        tables: vec![("", csv(|w| io::write_table(w, &["xi", "g2", "sigma", "g2_fit"], &rows))?)],
        k: r.decoherence.coupling_share,
        failure: None,
    })
}

fn fit_od(cfg: &Config, r: &Resolved, base: &Path) -> Result<Artifacts> {
    let f = &cfg.fit_od;
    let samples = match &f.data {
        Some(p) => {
            let path = resolve_path(base, p);
            let file = fs::File::open(&path).with_context(|| format!("[fit_od] data: cannot open {}", path.display()))?;
            io::read_transmission(file).with_context(|| format!("[fit_od] data: {}", path.display()))?
        }
        None => {
            let half = f.span_over_gamma * r.medium.gamma;
            let n = f.points;
            let det: Vec<f64> = (0..n).map(|j| -half + 2.0 * half * j as f64 / (n - 1) as f64).collect();
            synthetic_transmission(&r.medium, &det, f.noise, cfg.seed).context("in [fit_od]")?
        }
    };
    if samples.is_empty() {
        bail!("[fit_od] no transmission samples");
    }
    let fit = fit_optical_depth(&samples, r.medium.gamma).context("fitting [fit_od]")?;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|&(d, t)| vec![d * HZ, t, transmission_closed_form(&fit.params, d)])
        .collect();
    Ok(Artifacts {
        results: json!({
            "optical_depth": fit.params.optical_depth,
            "coupling_rabi_hz": fit.params.coupling_rabi * HZ,
            "gamma_gs_hz": fit.params.gamma_gs * HZ,
            "rms_residual": fit.rms_residual,
            "iterations": fit.iterations,
        }),
        tables: vec![("", csv(|w| io::write_table(w, &["detuning_Hz", "T", "T_fit"], &rows))?)],
        k: r.decoherence.coupling_share,
        failure: None,
    })
}
