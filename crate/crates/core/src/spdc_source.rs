//! Single-mode cavity-enhanced SPDC: output-field coefficients and the
//! heralded biphoton spectrum that feeds the memory.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_nonneg, ensure_positive, Error, Result};
use crate::grid::UniformGrid;
use crate::spectrum::{ComplexSpectrum, FieldWaveform};

/// Minimum grid span, in units of the biphoton power FWHM.
pub const MIN_SPAN_OVER_FWHM: f64 = 20.0;

/// Cavity and coupling rates of the doubly resonant SPDC cavity. All rates and
/// frequencies in rad/s; mode and pump frequencies are relative to the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpdcParams {
    /// Out-coupling rate of the signal mode (gamma_s).
    pub out_coupling_s: f64,
    /// Out-coupling rate of the idler mode (gamma_i).
    pub out_coupling_i: f64,
    /// Total decay rate of the signal mode (Gamma_s).
    pub total_decay_s: f64,
    /// Total decay rate of the idler mode (Gamma_i).
    pub total_decay_i: f64,
    /// Parametric coupling strength.
    pub kappa: f64,
    pub signal_mode: f64,
    pub idler_mode: f64,
    pub pump: f64,
}

/// Input-output coefficients at one signal frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldCoefficients {
    pub a_s: Complex64,
    pub b_s: Complex64,
    pub a_i: Complex64,
    pub b_i: Complex64,
}

impl CavitySpdcParams {
    /// Builds a parameter set with the idler mode fixed by double resonance,
    /// `idler_mode = pump - signal_mode`.
    pub fn new(
        out_coupling: (f64, f64),
        total_decay: (f64, f64),
        kappa: f64,
        signal_mode: f64,
        pump: f64,
    ) -> Result<Self> {
        let p = CavitySpdcParams {
            out_coupling_s: out_coupling.0,
            out_coupling_i: out_coupling.1,
            total_decay_s: total_decay.0,
            total_decay_i: total_decay.1,
            kappa,
            signal_mode,
            idler_mode: pump - signal_mode,
            pump,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric cavity with no intracavity loss (`gamma = Gamma`), with the
    /// decay rate chosen so that `|psi(w)|^2` has the requested FWHM [rad/s].
    ///
    /// In this case `|psi(w)|^2` is a squared Lorentzian whose FWHM is
    /// `Gamma * sqrt(sqrt(2) - 1)`.
    pub fn lossless_symmetric(power_fwhm: f64, kappa_over_gamma: f64) -> Result<Self> {
        ensure_positive("power_fwhm", power_fwhm)?;
        let gamma = power_fwhm / (2f64.sqrt() - 1.0).sqrt();
        Self::new((gamma, gamma), (gamma, gamma), kappa_over_gamma * gamma, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("out_coupling_s", self.out_coupling_s)?;
        ensure_positive("out_coupling_i", self.out_coupling_i)?;
        ensure_positive("total_decay_s", self.total_decay_s)?;
        ensure_positive("total_decay_i", self.total_decay_i)?;
        if self.total_decay_s < self.out_coupling_s {
            return Err(Error::param("total_decay_s", "must be >= out_coupling_s"));
        }
        if self.total_decay_i < self.out_coupling_i {
            return Err(Error::param("total_decay_i", "must be >= out_coupling_i"));
        }
        ensure_nonneg("kappa", self.kappa)?;
        ensure_finite("signal_mode", self.signal_mode)?;
        ensure_finite("idler_mode", self.idler_mode)?;
        ensure_finite("pump", self.pump)?;
        let scale = self.total_decay_s.max(self.total_decay_i).max(self.pump.abs());
        if (self.signal_mode + self.idler_mode - self.pump).abs() > 1e-9 * scale {
            return Err(Error::param(
                "idler_mode",
                "double resonance requires signal_mode + idler_mode = pump",
            ));
        }
        Ok(())
    }
}

/// Coefficients `A_s, B_s, A_i, B_i` at signal frequency `omega`.
///
/// The idler frequency is `omega_i = pump - omega`; under double resonance
/// `omega_i - idler_mode = signal_mode - omega`.
pub fn field_coefficients(p: &CavitySpdcParams, omega: f64) -> Result<FieldCoefficients> {
    ensure_finite("omega", omega)?;
    p.validate()?;
    Ok(coefficients_unchecked(p, omega))
}

fn coefficients_unchecked(p: &CavitySpdcParams, omega: f64) -> FieldCoefficients {
    let i = Complex64::i();
    let ds = omega - p.signal_mode;
    let di = (p.pump - omega) - p.idler_mode;
    let den_s = Complex64::new(p.total_decay_s / 2.0, -ds);
    let den_i = Complex64::new(p.total_decay_i / 2.0, -di);
    let a_s = Complex64::new(p.out_coupling_s - p.total_decay_s / 2.0, ds) / den_s;
    let a_i = Complex64::new(p.out_coupling_i - p.total_decay_i / 2.0, di) / den_i;
    let pair = den_s * Complex64::new(p.total_decay_i / 2.0, di);
    let coupling = p.kappa * (p.out_coupling_s * p.out_coupling_i).sqrt();
    FieldCoefficients {
        a_s,
        b_s: -i * coupling / pair,
        a_i,
        b_i: i * coupling / pair,
    }
}

/// Heralded biphoton amplitude on `grid`.
///
/// The returned amplitude is `A_s(w) * conj(B_i(w))`, the complex conjugate of
/// `A_s^dagger(w) B_i(w)`. It is the form that pairs with `exp(-i w tau)` and
/// with causal medium responses, and it leaves `|psi|` and `G2(tau)` unchanged.
/// With `normalize` the amplitude is scaled so that `Int G2(tau) dtau = 1`.
pub fn biphoton_spectrum(p: &CavitySpdcParams, grid: &UniformGrid, normalize: bool) -> Result<ComplexSpectrum> {
    p.validate()?;
    grid.validate()?;
    let amplitude = grid
        .points()
        .map(|w| {
            let c = coefficients_unchecked(p, w);
            c.a_s * c.b_i.conj()
        })
        .collect();
    let spectrum = ComplexSpectrum::new(*grid, amplitude)?;
    spectrum.check_truncation(MIN_SPAN_OVER_FWHM)?;
    if normalize && p.kappa > 0.0 {
        spectrum.normalized()
    } else {
        Ok(spectrum)
    }
}

/// Heralded signal amplitude sampled directly on a time grid.
///
/// The spectrum is evaluated on the conjugate of a grid at least twice as long
/// as the record, so the periodic images of the waveform sit outside it.
pub fn biphoton_field(p: &CavitySpdcParams, times: &UniformGrid, normalize: bool) -> Result<FieldWaveform> {
    times.validate()?;
    let period = (2 * times.len).next_power_of_two();
    let long = UniformGrid {
        len: period,
        ..*times
    };
    let spectrum = biphoton_spectrum(p, &long.conjugate(), normalize)?;
    let full = spectrum.to_field_from(times.start);
    FieldWaveform::new(*times, full.value[..times.len].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const MHZ: f64 = 2.0 * PI * 1e6;

    fn lossless() -> CavitySpdcParams {
        CavitySpdcParams::lossless_symmetric(6.2 * MHZ, 0.01).unwrap()
    }

    #[test]
    fn impedance_matched_cancellation() {
        let g = 10.0 * MHZ;
        let p = CavitySpdcParams::new((g / 2.0, g / 2.0), (g, g), 0.1 * g, 0.0, 0.0).unwrap();
        let c = field_coefficients(&p, 0.0).unwrap();
        assert!(c.a_s.norm() < 1e-15);
        assert!(c.a_i.norm() < 1e-15);
    }

    #[test]
    fn asymptotic_limits() {
        let p = lossless();
        let c = field_coefficients(&p, 1e6 * p.total_decay_s).unwrap();
        assert!((c.a_s + 1.0).norm() < 1e-5);
        assert!(c.b_s.norm() < 1e-12);
        let c = field_coefficients(&p, -1e6 * p.total_decay_s).unwrap();
        assert!((c.a_s + 1.0).norm() < 1e-5);
    }

    #[test]
    fn on_resonance_pair_coefficient() {
        // independent evaluation of the closed form at w = signal_mode
        let p = CavitySpdcParams::new((3.0, 5.0), (4.0, 7.0), 0.7, 1.5, 2.5).unwrap();
        let c = field_coefficients(&p, 1.5).unwrap();
        let expect = 4.0 * 0.7 * (3.0f64 * 5.0).sqrt() / (4.0 * 7.0);
        assert!((c.b_s.norm() - expect).abs() < 1e-14);
        assert!((c.b_i.norm() - expect).abs() < 1e-14);
        assert!((c.b_s + c.b_i).norm() < 1e-14);
    }

    #[test]
    fn unit_reflection_without_internal_loss() {
        let p = lossless();
        let grid = UniformGrid::centered(4096, 200.0 * MHZ).unwrap();
        let worst = grid
            .points()
            .map(|w| (field_coefficients(&p, w).unwrap().a_s.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn rejects_broken_double_resonance() {
        let mut p = lossless();
        p.idler_mode += 1.0 * MHZ;
        assert!(p.validate().is_err());
        assert!(field_coefficients(&p, 0.0).is_err());
        assert!(field_coefficients(&lossless(), f64::NAN).is_err());
    }

    #[test]
    fn rejects_out_coupling_above_total() {
        assert!(CavitySpdcParams::new((2.0, 1.0), (1.0, 1.0), 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn power_fwhm_matches_configuration() {
        let p = lossless();
        let grid = UniformGrid::centered(1 << 14, 200.0 * MHZ).unwrap();
        let s = biphoton_spectrum(&p, &grid, false).unwrap();
        let w = s.power_fwhm().unwrap();
        assert!((w / (6.2 * MHZ) - 1.0).abs() < 1e-3, "{}", w / MHZ);
    }

    #[test]
    fn zero_coupling_gives_zero_spectrum() {
        let mut p = lossless();
        p.kappa = 0.0;
        let grid = UniformGrid::centered(1024, 200.0 * MHZ).unwrap();
        let s = biphoton_spectrum(&p, &grid, true).unwrap();
        assert!(s.amplitude.iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn narrow_grid_is_truncation_error() {
        let grid = UniformGrid::centered(1024, 20.0 * MHZ).unwrap();
        assert!(matches!(
            biphoton_spectrum(&lossless(), &grid, false),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn normalized_spectrum_has_unit_g2_area() {
        let grid = UniformGrid::centered(1 << 14, 200.0 * MHZ).unwrap();
        let s = biphoton_spectrum(&lossless(), &grid, true).unwrap();
        let g2 = crate::spectrum::g2_waveform_from_spectrum(&s).unwrap();
        assert!((g2.integral() - 1.0).abs() < 1e-10);
    }
}
