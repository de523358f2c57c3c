//! Frequency-domain response of a three-level lambda medium under EIT.
//!
//! With `d_ge = Gamma/2 - i(w + delta_ge)`, `d_gs = gamma_gs/2 - i(w + delta_gs)`
//! and `D = d_ge d_gs + Omega_c^2/4`, the medium multiplies the probe spectrum by
//! `exp(-(alpha Gamma / 4) d_gs / D)`. The vacuum propagation phase is left out.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonneg, ensure_positive, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::grid::UniformGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EitParams {
    /// Resonant optical depth alpha (dimensionless).
    pub optical_depth: f64,
    /// Excited-state decay rate [rad/s].
    pub gamma: f64,
    /// Coupling Rabi frequency [rad/s].
    pub coupling_rabi: f64,
    /// Ground-state decoherence rate [rad/s].
    pub gamma_gs: f64,
    pub delta_ge: f64,
    pub delta_gs: f64,
}

impl EitParams {
    /// Resonant medium with zero detunings.
    pub fn resonant(optical_depth: f64, gamma: f64, coupling_rabi: f64, gamma_gs: f64) -> Self {
        EitParams {
            optical_depth,
            gamma,
            coupling_rabi,
            gamma_gs,
            delta_ge: 0.0,
            delta_gs: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonneg("optical_depth", self.optical_depth)?;
        ensure_positive("gamma", self.gamma)?;
        ensure_nonneg("coupling_rabi", self.coupling_rabi)?;
        ensure_nonneg("gamma_gs", self.gamma_gs)?;
        ensure_finite("delta_ge", self.delta_ge)?;
        ensure_finite("delta_gs", self.delta_gs)?;
        Ok(())
    }

    pub fn with_coupling(&self, coupling_rabi: f64) -> Self {
        EitParams { coupling_rabi, ..*self }
    }

    /// Complex exponent `Lambda(w) L` without the vacuum phase.
    pub fn exponent(&self, omega: f64) -> Complex64 {
        let d_ge = Complex64::new(self.gamma / 2.0, -(omega + self.delta_ge));
        let d_gs = Complex64::new(self.gamma_gs / 2.0, -(omega + self.delta_gs));
        let c = self.optical_depth * self.gamma / 4.0;
        if self.coupling_rabi == 0.0 {
            // two-level line; d_gs cancels
            return c / d_ge;
        }
        let d = d_ge * d_gs + self.coupling_rabi * self.coupling_rabi / 4.0;
        d_gs / d * c
    }

    pub fn kernel_at(&self, omega: f64) -> Complex64 {
        (-self.exponent(omega)).exp()
    }
}

/// Medium transfer function sampled on a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumResponse {
    pub grid: UniformGrid,
    pub kernel: Vec<Complex64>,
}

pub fn propagation_kernel(p: &EitParams, grid: &UniformGrid) -> Result<MediumResponse> {
    p.validate()?;
    grid.validate()?;
    Ok(MediumResponse {
        grid: *grid,
        kernel: grid.points().map(|w| p.kernel_at(w)).collect(),
    })
}

/// Closed-form intensity transmission for a probe detuned by `detuning` from
/// the excited state, with the two-photon detuning moving along with it.
pub fn transmission_closed_form(p: &EitParams, detuning: f64) -> f64 {
    let a = p.optical_depth;
    let g = p.gamma;
    let gs = p.gamma_gs;
    let o2 = p.coupling_rabi * p.coupling_rabi;
    let d1 = p.delta_ge + detuning;
    let d2 = p.delta_gs + detuning;
    if o2 == 0.0 {
        return (-a * g * g / (g * g + 4.0 * d1 * d1)).exp();
    }
    let num = gs * o2 + (4.0 * d2 * d2 + gs * gs) * g;
    let den = (o2 + g * gs - 4.0 * d1 * d2).powi(2) + (2.0 * d1 * gs + 2.0 * d2 * g).powi(2);
    (-a * g * num / den).exp()
}

/// Transmission at each probe detuning [rad/s] from the closed form.
pub fn transmission_spectrum(p: &EitParams, detunings: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    Ok(detunings.iter().map(|&d| transmission_closed_form(p, d)).collect())
}

/// Same quantity as [`transmission_spectrum`], taken as `|kernel|^2`.
pub fn transmission_from_kernel(p: &EitParams, detunings: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    let tied = EitParams {
        delta_ge: 0.0,
        delta_gs: 0.0,
        ..*p
    };
    Ok(detunings
        .iter()
        .map(|&d| {
            let q = EitParams {
                delta_ge: p.delta_ge + d,
                delta_gs: p.delta_gs + d,
                ..tied
            };
            q.kernel_at(0.0).norm_sqr()
        })
        .collect())
}

/// Transparency-window FWHM [rad/s] from the closed-form expression in
/// `x = alpha/(2 ln 2) - 1/2`, `y = Omega_c^2/Gamma^2`. Exact for a resonant
/// coupling and `gamma_gs = 0`.
pub fn eit_bandwidth(p: &EitParams) -> Result<f64> {
    p.validate()?;
    if p.optical_depth <= LN_2 {
        return Err(Error::Domain(format!(
            "optical depth {} must exceed ln 2 for a half-transmission window",
            p.optical_depth
        )));
    }
    let x = p.optical_depth / (2.0 * LN_2) - 0.5;
    let y = (p.coupling_rabi / p.gamma).powi(2);
    if y == 0.0 {
        return Ok(0.0);
    }
    let s = x + y;
    let r = y / s;
    // 1 - sqrt(1 - r^2) without cancellation
    let one_minus = r * r / (1.0 + (1.0 - r * r).sqrt());
    Ok(p.gamma * (s * one_minus).sqrt())
}

/// Transparency-window FWHM [rad/s] measured on the transmission spectrum.
///
/// The half level is half the transmission at two-photon resonance. Each edge
/// is bracketed on a dense scan and refined by bisection.
pub fn eit_bandwidth_numeric(p: &EitParams) -> Result<f64> {
    p.validate()?;
    if p.coupling_rabi == 0.0 {
        return Err(Error::NoFwhm("no transparency window without coupling".into()));
    }
    let center = -p.delta_gs;
    let t0 = transmission_closed_form(p, center);
    let level = 0.5 * t0;
    let reach = 2.0 * p.coupling_rabi.max(p.gamma * p.optical_depth.sqrt());
    let mut edges = [0.0; 2];
    for (k, sign) in [-1.0f64, 1.0].into_iter().enumerate() {
        let f = |d: f64| transmission_closed_form(p, center + sign * d) - level;
        let n = 20_000;
        let mut prev = 0.0;
        let mut found = None;
        for j in 1..=n {
            let d = reach * j as f64 / n as f64;
            if f(d) < 0.0 {
                found = Some((prev, d));
                break;
            }
            prev = d;
        }
        let Some((mut lo, mut hi)) = found else {
            return Err(Error::NoFwhm("transmission never falls to half its peak".into()));
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        edges[k] = 0.5 * (lo + hi);
    }
    Ok(edges[0] + edges[1])
}

/// Group delay `d arg(kernel)/dw` at `w = 0` [s], by a centred difference.
pub fn group_delay(p: &EitParams) -> Result<f64> {
    p.validate()?;
    if p.coupling_rabi == 0.0 {
        return Err(Error::Domain("group delay is undefined without coupling".into()));
    }
    let scale = (p.coupling_rabi * p.coupling_rabi / p.gamma).min(p.gamma).min(p.coupling_rabi);
    let h = 1e-5 * scale;
    let phase = |w: f64| -p.exponent(w).im;
    Ok((phase(h) - phase(-h)) / (2.0 * h))
}

/// Coupling Rabi frequency giving the requested group delay, other
/// parameters held fixed.
pub fn coupling_for_group_delay(p: &EitParams, delay: f64) -> Result<f64> {
    p.validate()?;
    ensure_positive("delay", delay)?;
    if p.optical_depth == 0.0 {
        return Err(Error::Domain("a transparent medium has no group delay".into()));
    }
    let guess = (p.optical_depth * p.gamma / delay).sqrt();
    let f = |o: f64| group_delay(&p.with_coupling(o)).map(|t| t - delay);
    let (mut lo, mut hi) = (guess / 4.0, guess * 4.0);
    while f(lo)? < 0.0 {
        lo /= 2.0;
        if lo < 1e-9 * guess {
            return Err(Error::Domain("requested delay is not reachable".into()));
        }
    }
    while f(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e9 * guess {
            return Err(Error::Domain("requested delay is not reachable".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Closed-form transmission at `detunings` plus Gaussian noise of standard
/// deviation `noise`, as `(detuning, T)` samples.
pub fn synthetic_transmission(p: &EitParams, detunings: &[f64], noise: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    p.validate()?;
    ensure_nonneg("noise", noise)?;
    let dist = Normal::new(0.0, noise).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(detunings
        .iter()
        .map(|&d| (d, transmission_closed_form(p, d) + dist.sample(&mut rng)))
        .collect())
}

#[derive(Debug, Clone)]
pub struct OdFit {
    pub params: EitParams,
    pub rms_residual: f64,
    pub iterations: usize,
}

/// Least-squares fit of `(alpha, Omega_c, gamma_gs)` to transmission samples
/// `(detuning [rad/s], T)`, with `Gamma` known and resonant coupling.
pub fn fit_optical_depth(samples: &[(f64, f64)], gamma: f64) -> Result<OdFit> {
    fit_optical_depth_with(samples, gamma, &LmOptions::default())
}

pub fn fit_optical_depth_with(samples: &[(f64, f64)], gamma: f64, opts: &LmOptions) -> Result<OdFit> {
    ensure_positive("gamma", gamma)?;
    if samples.len() < 20 {
        return Err(Error::Precondition(format!(
            "need at least 20 transmission samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(d, t)| !d.is_finite() || !t.is_finite()) {
        return Err(Error::Precondition("transmission samples must be finite".into()));
    }
    let (dmin, dmax) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (d, _)| (a.min(*d), b.max(*d)));
    if dmax - dmin < gamma {
        return Err(Error::Precondition("samples must span at least one absorption linewidth".into()));
    }
    let tmin = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let tmax = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if tmax - tmin < 1e-3 {
        return Err(Error::Degenerate("flat transmission: optical depth is not identifiable".into()));
    }

    let x0 = initial_guess(samples, gamma);
    let model = |x: &[f64], d: f64| {
        let p = EitParams::resonant(x[0], gamma, x[1] * gamma, x[2] * gamma);
        transmission_closed_form(&p, d)
    };
    let resid = |x: &[f64]| samples.iter().map(|(d, t)| model(x, *d) - t).collect::<Vec<_>>();
    let rep = levenberg_marquardt(
        resid,
        &x0,
        &[1e-9, 1e-9, 0.0],
        &[f64::INFINITY, f64::INFINITY, f64::INFINITY],
        opts,
    )
    .map_err(|e| match e {
        Error::NotConverged { iterations, cost, best } => Error::NotConverged {
            iterations,
            cost,
            best: vec![best[0], best[1] * gamma, best[2] * gamma],
        },
        other => other,
    })?;
    let x = &rep.params;
    Ok(OdFit {
        params: EitParams::resonant(x[0], gamma, x[1] * gamma, x[2] * gamma),
        rms_residual: rep.rms(),
        iterations: rep.iterations,
    })
}

/// Starting point in units of `Gamma`: raw absorption depth, window width and
/// centre transmission.
fn initial_guess(samples: &[(f64, f64)], gamma: f64) -> [f64; 3] {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tmin = sorted.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let ic = sorted
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.abs().total_cmp(&b.1 .0.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let tc = sorted[ic].1;

    // window half-width: first sample on each side of centre below half of T(0)
    let level = 0.5 * tc;
    let right = sorted[ic..].iter().find(|s| s.1 < level).map(|s| s.0.abs());
    let left = sorted[..=ic].iter().rev().find(|s| s.1 < level).map(|s| s.0.abs());
    let width = match (left, right) {
        (Some(l), Some(r)) => l + r,
        (Some(w), None) | (None, Some(w)) => 2.0 * w,
        (None, None) => 0.0,
    };

    let mut alpha = -(tmin.max(1e-3)).ln();
    let mut omega = 0.1;
    for _ in 0..3 {
        if width > 0.0 && alpha > LN_2 {
            omega = invert_bandwidth(alpha, width / gamma);
        }
        // far-wing estimate of alpha using the gamma_gs = 0 line shape
        let mut est: Vec<f64> = sorted
            .iter()
            .filter(|(d, t)| *t > 0.05 && *t < 0.95 && d.abs() > 0.5 * omega * gamma)
            .map(|(d, t)| {
                let u = d / gamma;
                let q = omega * omega - 4.0 * u * u;
                -t.ln() * (q * q + 4.0 * u * u) / (4.0 * u * u)
            })
            .collect();
        if !est.is_empty() {
            est.sort_by(f64::total_cmp);
            alpha = est[est.len() / 2];
        }
    }
    let l = -(tc.max(1e-12)).ln();
    let gs = if alpha > l { l * omega * omega / (alpha - l) } else { 0.01 };
    [alpha.max(1e-3), omega.max(1e-3), gs.clamp(0.0, 1.0)]
}

/// Rabi frequency (units of Gamma) whose closed-form bandwidth equals `width`.
fn invert_bandwidth(alpha: f64, width: f64) -> f64 {
    let bw = |o: f64| eit_bandwidth(&EitParams::resonant(alpha, 1.0, o, 0.0)).unwrap_or(0.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    while bw(hi) < width && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bw(mid) < width {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
