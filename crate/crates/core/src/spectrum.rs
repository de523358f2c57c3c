//! Sampled spectra and waveforms and the Fourier pair that links them.
//!
//! Field convention: `a(t) = (1/2pi) Int a(w) exp(-i w t) dw` and
//! `a(w) = Int a(t) exp(i w t) dt`. With this pairing a passive medium response
//! is analytic in the upper half of the complex frequency plane, and Parseval
//! reads `Int |a(t)|^2 dt = (1/2pi) Int |a(w)|^2 dw`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{fwhm, UniformGrid};

/// Complex amplitude on a uniform angular-frequency grid [rad/s].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub grid: UniformGrid,
    pub amplitude: Vec<Complex64>,
}

/// Complex field samples on a uniform time grid [s].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldWaveform {
    pub grid: UniformGrid,
    pub value: Vec<Complex64>,
}

/// Non-negative two-photon correlation samples on a uniform time grid [s].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Waveform {
    pub grid: UniformGrid,
    pub value: Vec<f64>,
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if forward {
        planner.plan_fft_forward(len)
    } else {
        planner.plan_fft_inverse(len)
    }
}

/// Evaluates `a(t_k) = (dw/2pi) sum_j a_j exp(-i w_j t_k)` on the given time grid.
///
/// `times.step * freqs.step * len` must equal `2 pi`.
fn synthesize(freqs: &UniformGrid, amp: &[Complex64], times: &UniformGrid) -> Vec<Complex64> {
    let n = freqs.len;
    let (w0, dw, t0, dt) = (freqs.start, freqs.step, times.start, times.step);
    let mut buf: Vec<Complex64> = amp
        .iter()
        .enumerate()
        .map(|(j, a)| a * Complex64::from_polar(1.0, -(j as f64) * dw * t0))
        .collect();
    plan(n, true).process(&mut buf);
    let scale = dw / (2.0 * PI);
    let phase0 = Complex64::from_polar(1.0, -w0 * t0);
    buf.iter()
        .enumerate()
        .map(|(k, b)| b * phase0 * Complex64::from_polar(scale, -w0 * k as f64 * dt))
        .collect()
}

/// Evaluates `a(w_j) = dt sum_k a_k exp(i w_j t_k)`; inverse of [`synthesize`].
fn analyze(times: &UniformGrid, val: &[Complex64], freqs: &UniformGrid) -> Vec<Complex64> {
    let n = times.len;
    let (w0, dw, t0, dt) = (freqs.start, freqs.step, times.start, times.step);
    let mut buf: Vec<Complex64> = val
        .iter()
        .enumerate()
        .map(|(k, a)| a * Complex64::from_polar(1.0, w0 * k as f64 * dt))
        .collect();
    plan(n, false).process(&mut buf);
    let phase0 = Complex64::from_polar(1.0, w0 * t0);
    buf.iter()
        .enumerate()
        .map(|(j, b)| b * phase0 * Complex64::from_polar(dt, j as f64 * dw * t0))
        .collect()
}

impl ComplexSpectrum {
    pub fn new(grid: UniformGrid, amplitude: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if amplitude.len() != grid.len {
            return Err(Error::InvalidGrid(format!(
                "{} amplitudes for {} grid points",
                amplitude.len(),
                grid.len
            )));
        }
        Ok(ComplexSpectrum { grid, amplitude })
    }

    pub fn power(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `(1/2pi) Int |a(w)|^2 dw`, which equals the time-domain energy.
    pub fn energy(&self) -> f64 {
        self.amplitude.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.step / (2.0 * PI)
    }

    /// FWHM of `|a(w)|^2` [rad/s]; `None` for an all-zero spectrum.
    pub fn power_fwhm(&self) -> Option<f64> {
        fwhm(&self.grid, &self.power())
    }

    /// Fails when the grid span is under `min_ratio` times the power FWHM.
    pub fn check_truncation(&self, min_ratio: f64) -> Result<()> {
        let Some(width) = self.power_fwhm() else {
            return Ok(());
        };
        let span = self.grid.span();
        if span < min_ratio * width {
            return Err(Error::Truncation {
                span,
                fwhm: width,
                min_ratio,
            });
        }
        Ok(())
    }

    pub fn scaled(&self, c: Complex64) -> ComplexSpectrum {
        ComplexSpectrum {
            grid: self.grid,
            amplitude: self.amplitude.iter().map(|a| a * c).collect(),
        }
    }

    /// Rescaled so that the time-domain `|a(t)|^2` integrates to one.
    pub fn normalized(&self) -> Result<ComplexSpectrum> {
        let e = self.energy();
        if !(e > 0.0) {
            return Err(Error::Domain("cannot normalize a spectrum with zero energy".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / e.sqrt(), 0.0)))
    }

    /// Pointwise product with a response sampled on the same grid.
    pub fn filtered(&self, grid: &UniformGrid, response: &[Complex64]) -> Result<ComplexSpectrum> {
        if !self.grid.same_as(grid) || response.len() != self.amplitude.len() {
            return Err(Error::GridMismatch(format!(
                "spectrum grid {:?} vs response grid {:?}",
                self.grid, grid
            )));
        }
        Ok(ComplexSpectrum {
            grid: self.grid,
            amplitude: self.amplitude.iter().zip(response).map(|(a, h)| a * h).collect(),
        })
    }

    /// Time-domain field on the conjugate grid (centred on t = 0).
    pub fn to_field(&self) -> FieldWaveform {
        self.to_field_on(self.grid.conjugate())
    }

    /// Time-domain field on `len` samples starting at `t0`, spacing fixed by the
    /// conjugate grid.
    pub fn to_field_from(&self, t0: f64) -> FieldWaveform {
        let mut g = self.grid.conjugate();
        g.start = t0;
        self.to_field_on(g)
    }

    fn to_field_on(&self, times: UniformGrid) -> FieldWaveform {
        FieldWaveform {
            grid: times,
            value: synthesize(&self.grid, &self.amplitude, &times),
        }
    }

    /// Band-limited extension: the same spectrum embedded in a grid `factor`
    /// times wider, zero outside the original band. The conjugate time grid is
    /// `factor` times finer.
    pub fn zero_padded(&self, factor: usize) -> ComplexSpectrum {
        let factor = factor.max(1);
        let n = self.grid.len;
        let big = n * factor;
        let offset = (big - n) / 2;
        let mut amplitude = vec![Complex64::new(0.0, 0.0); big];
        amplitude[offset..offset + n].copy_from_slice(&self.amplitude);
        ComplexSpectrum {
            grid: UniformGrid {
                start: self.grid.start - offset as f64 * self.grid.step,
                step: self.grid.step,
                len: big,
            },
            amplitude,
        }
    }
}

impl FieldWaveform {
    pub fn new(grid: UniformGrid, value: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if value.len() != grid.len {
            return Err(Error::InvalidGrid(format!("{} samples for {} grid points", value.len(), grid.len)));
        }
        Ok(FieldWaveform { grid, value })
    }

    /// `Int |a(t)|^2 dt` by the rectangle rule.
    pub fn energy(&self) -> f64 {
        self.value.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.step
    }

    pub fn intensity(&self) -> G2Waveform {
        G2Waveform {
            grid: self.grid,
            value: self.value.iter().map(|a| a.norm_sqr()).collect(),
        }
    }

    /// Spectrum on the conjugate frequency grid (centred on w = 0).
    pub fn to_spectrum(&self) -> ComplexSpectrum {
        let freqs = self.grid.conjugate();
        ComplexSpectrum {
            grid: freqs,
            amplitude: analyze(&self.grid, &self.value, &freqs),
        }
    }

    /// Samples with `grid.start <= t < t1`, keeping at least two.
    pub fn window(&self, t0: f64, t1: f64) -> Result<FieldWaveform> {
        let first = ((t0 - self.grid.start) / self.grid.step).ceil().max(0.0) as usize;
        let last = (((t1 - self.grid.start) / self.grid.step).ceil().max(0.0) as usize).min(self.grid.len);
        if last < first + 2 {
            return Err(Error::InvalidGrid(format!("window [{t0:e}, {t1:e}) holds fewer than two samples")));
        }
        Ok(FieldWaveform {
            grid: UniformGrid {
                start: self.grid.at(first),
                step: self.grid.step,
                len: last - first,
            },
            value: self.value[first..last].to_vec(),
        })
    }

    /// Band-limited interpolation onto a grid `factor` times finer, treating the
    /// record as one period.
    pub fn upsampled(&self, factor: usize) -> FieldWaveform {
        if factor <= 1 {
            return self.clone();
        }
        let spectrum = self.to_spectrum().zero_padded(factor);
        spectrum.to_field_from(self.grid.start)
    }
}

impl G2Waveform {
    pub fn new(grid: UniformGrid, value: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if value.len() != grid.len {
            return Err(Error::InvalidGrid(format!("{} samples for {} grid points", value.len(), grid.len)));
        }
        if let Some(v) = value.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param("g2", format!("samples must be finite and >= 0, found {v}")));
        }
        Ok(G2Waveform { grid, value })
    }

    pub fn integral(&self) -> f64 {
        self.value.iter().sum::<f64>() * self.grid.step
    }

    pub fn fwhm(&self) -> Option<f64> {
        fwhm(&self.grid, &self.value)
    }

    /// Time of the largest sample (earliest on ties).
    pub fn peak_time(&self) -> f64 {
        let (i, _) = self
            .value
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.grid.at(i)
    }

    pub fn max(&self) -> f64 {
        self.value.iter().copied().fold(0.0, f64::max)
    }

    /// Linear interpolation, zero outside the grid.
    pub fn sample(&self, t: f64) -> f64 {
        let x = (t - self.grid.start) / self.grid.step;
        if x < 0.0 || x > (self.grid.len - 1) as f64 {
            return 0.0;
        }
        let j = x.floor() as usize;
        if j + 1 >= self.grid.len {
            return self.value[self.grid.len - 1];
        }
        let f = x - j as f64;
        self.value[j] * (1.0 - f) + self.value[j + 1] * f
    }

    /// Integral over `[a, b]` of the linear interpolant.
    pub fn integrate_between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let g = &self.grid;
        let lo = a.max(g.start);
        let hi = b.min(g.end());
        if hi <= lo {
            return 0.0;
        }
        // breakpoints: lo, interior nodes, hi
        let first = ((lo - g.start) / g.step).floor() as usize + 1;
        let last = ((hi - g.start) / g.step).ceil() as usize;
        let mut prev_t = lo;
        let mut prev_v = self.sample(lo);
        let mut acc = 0.0;
        for j in first..last.min(g.len) {
            let t = g.at(j);
            if t <= lo || t >= hi {
                continue;
            }
            let v = self.value[j];
            acc += 0.5 * (prev_v + v) * (t - prev_t);
            prev_t = t;
            prev_v = v;
        }
        let v = self.sample(hi);
        acc + 0.5 * (prev_v + v) * (hi - prev_t)
    }

    pub fn shifted(&self, dt: f64) -> G2Waveform {
        let mut g = self.clone();
        g.grid.start += dt;
        g
    }
}

/// Two-photon correlation `G2(tau) = |(1/2pi) Int psi(w) exp(-i w tau) dw|^2`.
pub fn g2_waveform_from_spectrum(spectrum: &ComplexSpectrum) -> Result<G2Waveform> {
    spectrum.grid.validate()?;
    Ok(spectrum.to_field().intensity())
}
