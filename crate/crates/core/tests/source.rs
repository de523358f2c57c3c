use std::f64::consts::PI;

use eit_memory::grid::UniformGrid;
use eit_memory::presets::{self, MHZ};
use eit_memory::spdc_source::{biphoton_spectrum, field_coefficients, CavitySpdcParams};
use eit_memory::spectrum::{g2_waveform_from_spectrum, ComplexSpectrum};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn impedance_matched_line_center_cancels() {
    let g = 8.0 * MHZ;
    let p = CavitySpdcParams::new((g / 2.0, 0.4 * g), (g, 0.8 * g), 0.05 * g, 0.0, 0.0).unwrap();
    let c = field_coefficients(&p, 0.0).unwrap();
    assert!(c.a_s.norm() < 1e-15);
}

#[test]
fn far_detuned_limits() {
    let p = presets::source();
    for w in [1e9, -1e9].map(|s| s * p.total_decay_s) {
        let c = field_coefficients(&p, w).unwrap();
        assert!((c.a_s + 1.0).norm() < 1e-6);
        assert!(c.b_s.norm() < 1e-15);
        assert!(c.b_i.norm() < 1e-15);
    }
}

#[test]
fn pair_coefficient_at_line_center() {
    // direct complex arithmetic on the rational form, asymmetric cavity
    let (gs, gi, ts, ti, k) = (1.1e7, 0.7e7, 1.6e7, 0.9e7, 2.0e5);
    let p = CavitySpdcParams::new((gs, gi), (ts, ti), k, 3.0e6, 5.0e6).unwrap();
    let c = field_coefficients(&p, 3.0e6).unwrap();
    let i = Complex64::i();
    let den = Complex64::new(ts / 2.0, 0.0) * Complex64::new(ti / 2.0, 0.0);
    let expect_s = -i * k * (gs * gi).sqrt() / den;
    assert!((c.b_s - expect_s).norm() < 1e-14 * expect_s.norm());
    let symmetric = 4.0 * k * (gs * gi).sqrt() / (ts * ti);
    assert!((c.b_s.norm() - symmetric).abs() < 1e-14 * symmetric);
}

#[test]
fn non_finite_frequency_rejected() {
    let p = presets::source();
    assert!(field_coefficients(&p, f64::INFINITY).is_err());
    assert!(field_coefficients(&p, f64::NAN).is_err());
}

#[test]
fn source_bandwidth_and_coherence_time() {
    let s = biphoton_spectrum(&presets::source(), &presets::spectrum_grid(), false).unwrap();
    let w = s.power_fwhm().unwrap();
    assert!((w / (6.2 * MHZ) - 1.0).abs() < 2e-3, "{} MHz", w / MHZ);
    let tc = g2_waveform_from_spectrum(&s).unwrap().fwhm().unwrap();
    assert!((tc - 25e-9).abs() < 2.5e-9, "{tc:e}");
}

#[test]
fn zero_coupling_gives_no_pairs() {
    let mut p = presets::source();
    p.kappa = 0.0;
    let s = biphoton_spectrum(&p, &presets::spectrum_grid(), false).unwrap();
    assert!(s.amplitude.iter().all(|a| *a == Complex64::new(0.0, 0.0)));
}

#[test]
fn truncated_grid_rejected() {
    let grid = UniformGrid::centered(1 << 10, 30.0 * MHZ).unwrap();
    assert!(biphoton_spectrum(&presets::source(), &grid, false).is_err());
}

#[test]
fn lorentzian_amplitude_gives_exponential_g2() {
    // psi(w) = g / (g^2 + w^2)  <->  a(t) = exp(-g |t|) / 2
    let g = 1.0;
    let grid = UniformGrid::centered(1 << 22, 7.0e5).unwrap();
    let amp = grid.points().map(|w| Complex64::new(g / (g * g + w * w), 0.0)).collect();
    let s = ComplexSpectrum::new(grid, amp).unwrap();
    let g2 = g2_waveform_from_spectrum(&s).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for (t, v) in g2.grid.points().zip(&g2.value) {
        if t.abs() <= 3.0 / g {
            let exact = 0.25 * (-2.0 * g * t.abs()).exp();
            err += (v - exact).powi(2);
            norm += exact * exact;
        }
    }
    let rel = (err / norm).sqrt();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn complex_scale_scales_g2_by_modulus_squared() {
    let s = biphoton_spectrum(&presets::source(), &presets::spectrum_grid(), true).unwrap();
    let c = Complex64::new(0.3, -1.7);
    let a = g2_waveform_from_spectrum(&s).unwrap();
    let b = g2_waveform_from_spectrum(&s.scaled(c)).unwrap();
    let m = a.max();
    for (x, y) in a.value.iter().zip(&b.value) {
        assert!((y - c.norm_sqr() * x).abs() < 1e-12 * m);
    }
}

#[test]
fn parseval_closure() {
    let s = biphoton_spectrum(&presets::source(), &presets::spectrum_grid(), false).unwrap();
    let g2 = g2_waveform_from_spectrum(&s).unwrap();
    assert!((g2.integral() / s.energy() - 1.0).abs() < 1e-10);
}

#[test]
fn bandwidth_coherence_product_is_grid_independent() {
    let p = presets::source();
    let product = |n: usize| {
        let s = biphoton_spectrum(&p, &UniformGrid::centered(n, 200.0 * MHZ).unwrap(), false).unwrap();
        let spectral_hz = s.power_fwhm().unwrap() / (2.0 * PI);
        spectral_hz * g2_waveform_from_spectrum(&s).unwrap().fwhm().unwrap()
    };
    let coarse = product(1 << 14);
    let fine = product(1 << 16);
    assert!((coarse / fine - 1.0).abs() < 0.01, "{coarse} {fine}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lossless_reflection_is_unitary(gamma_mhz in 0.5f64..50.0, kappa in 0.0f64..0.2, w in -500.0f64..500.0) {
        let g = gamma_mhz * MHZ;
        let p = CavitySpdcParams::new((g, g), (g, g), kappa * g, 0.0, 0.0).unwrap();
        let c = field_coefficients(&p, w * MHZ).unwrap();
        prop_assert!((c.a_s.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!((c.a_i.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_spectrum_has_real_transform(values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 63), dc in -1.0f64..1.0, nyq in -1.0f64..1.0) {
        let n = 128;
        let grid = UniformGrid::centered(n, 64.0).unwrap();
        let mut amp = vec![Complex64::new(0.0, 0.0); n];
        amp[n / 2] = Complex64::new(dc, 0.0);
        amp[0] = Complex64::new(nyq, 0.0);
        for (j, (re, im)) in values.iter().enumerate() {
            let k = j + 1;
            amp[n / 2 + k] = Complex64::new(*re, *im);
            amp[n / 2 - k] = Complex64::new(*re, -*im);
        }
        let f = ComplexSpectrum::new(grid, amp).unwrap().to_field();
        let re = f.value.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let im = f.value.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        prop_assert!(im <= 1e-10 * re.max(1e-300));
    }
}
