//! CSV import and export. Frequencies are written in Hz (not rad/s), times in
//! seconds except for histogram and event files, which use nanoseconds.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::Deserialize;

use crate::coincidence::{CorrelationHistogram, HistogramGeometry};
use crate::eit_medium::MediumResponse;
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::memory_sim::SweepTable;
use crate::spectrum::{ComplexSpectrum, FieldWaveform, G2Waveform};

#[derive(Deserialize)]
struct EventRow {
    trigger_id: u64,
    detection_time_ns: f64,
}

fn write_complex<W: Write>(w: W, grid: &UniformGrid, values: &[Complex64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["freq_Hz", "re", "im"])?;
    for (f, v) in grid.points().zip(values) {
        wr.serialize((f / (2.0 * PI), v.re, v.im))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_spectrum<W: Write>(w: W, spectrum: &ComplexSpectrum) -> Result<()> {
    write_complex(w, &spectrum.grid, &spectrum.amplitude)
}

pub fn write_kernel<W: Write>(w: W, resp: &MediumResponse) -> Result<()> {
    write_complex(w, &resp.grid, &resp.kernel)
}

/// Reads `(freq_Hz, re, im)` rows; the frequencies must be uniformly spaced.
pub fn read_spectrum<R: Read>(r: R) -> Result<ComplexSpectrum> {
    let mut rd = csv::Reader::from_reader(r);
    let mut freqs = Vec::new();
    let mut amps = Vec::new();
    for row in rd.deserialize::<(f64, f64, f64)>() {
        let (f, re, im) = row?;
        freqs.push(2.0 * PI * f);
        amps.push(Complex64::new(re, im));
    }
    let grid = uniform_from(&freqs)?;
    ComplexSpectrum::new(grid, amps)
}

fn uniform_from(x: &[f64]) -> Result<UniformGrid> {
    if x.len() < 2 {
        return Err(Error::InvalidGrid("need at least two rows".into()));
    }
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let grid = UniformGrid::new(x[0], step, x.len())?;
    for (j, v) in x.iter().enumerate() {
        if (v - grid.at(j)).abs() > 1e-6 * step {
            return Err(Error::InvalidGrid(format!("sample {j} breaks uniform spacing")));
        }
    }
    Ok(grid)
}

/// Writes `(detuning_Hz, T)` with detunings given in rad/s.
pub fn write_transmission<W: Write>(w: W, detunings: &[f64], t: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["detuning_Hz", "T"])?;
    for (d, v) in detunings.iter().zip(t) {
        wr.serialize((d / (2.0 * PI), v))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `(detuning_Hz, T)` rows as `(detuning [rad/s], T)`.
pub fn read_transmission<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<(f64, f64)>()
        .map(|row| row.map(|(d, t)| (2.0 * PI * d, t)).map_err(Error::from))
        .collect()
}

pub fn write_sweep<W: Write>(w: W, table: &SweepTable) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["xi", "efficiency", "bandwidth_Hz"])?;
    for r in &table.rows {
        wr.serialize((r.xi, r.efficiency, r.bandwidth_hz))?;
    }
    wr.flush()?;
    Ok(())
}

fn write_real_waveform<W: Write>(w: W, grid: &UniformGrid, v: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_s", "value"])?;
    for (t, x) in grid.points().zip(v) {
        wr.serialize((t, x))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_g2<W: Write>(w: W, g2: &G2Waveform) -> Result<()> {
    write_real_waveform(w, &g2.grid, &g2.value)
}

/// Writes `(t_s, re, im)`.
pub fn write_field<W: Write>(w: W, f: &FieldWaveform) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_s", "re", "im"])?;
    for (t, v) in f.grid.points().zip(&f.value) {
        wr.serialize((t, v.re, v.im))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_g2<R: Read>(r: R) -> Result<G2Waveform> {
    let mut rd = csv::Reader::from_reader(r);
    let mut t = Vec::new();
    let mut v = Vec::new();
    for row in rd.deserialize::<(f64, f64)>() {
        let (a, b) = row?;
        t.push(a);
        v.push(b);
    }
    G2Waveform::new(uniform_from(&t)?, v)
}

pub fn write_histogram<W: Write>(w: W, h: &CorrelationHistogram) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["bin_start_ns", "count"])?;
    for (k, c) in h.counts.iter().enumerate() {
        wr.serialize((h.geometry.edge(k) * 1e9, c))?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `(bin_start_ns, count)` rows; bins must be contiguous and uniform.
pub fn read_histogram<R: Read>(r: R, n_triggers: u64) -> Result<CorrelationHistogram> {
    let mut rd = csv::Reader::from_reader(r);
    let mut starts = Vec::new();
    let mut counts = Vec::new();
    for row in rd.deserialize::<(f64, u64)>() {
        let (s, c) = row?;
        starts.push(s * 1e-9);
        counts.push(c);
    }
    let grid = uniform_from(&starts)?;
    let geometry = HistogramGeometry {
        start: grid.start,
        bin_width: grid.step,
        bins: grid.len,
    };
    CorrelationHistogram::new(geometry, counts, n_triggers)
}

/// Reads `(trigger_id, detection_time_ns)` rows as `(id, seconds)`.
pub fn read_events<R: Read>(r: R) -> Result<Vec<(u64, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<EventRow>()
        .map(|row| {
            row.map(|e| (e.trigger_id, e.detection_time_ns * 1e-9))
                .map_err(Error::from)
        })
        .collect()
}

/// Reads `(xi, g2, sigma)` rows.
pub fn read_g2_points<R: Read>(r: R) -> Result<Vec<(f64, f64, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<(f64, f64, f64)>().map(|row| row.map_err(Error::from)).collect()
}

/// Writes a header and rows of numbers; every row must match the header width.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Precondition(format!("row has {} columns, header {}", r.len(), header.len())));
        }
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}
