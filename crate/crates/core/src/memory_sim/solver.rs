//! Maxwell-Bloch integration in the retarded frame.
//!
//! Normalized length `z in [0, 1]`, probe field `E`, optical coherence `p`,
//! spin coherence `s`:
//!
//! ```text
//! dE/dz = i c p,                   c = alpha Gamma / 4
//! dp/dt = i E + (i/2) Omega s + (i delta_ge - Gamma/2) p
//! ds/dt = (i/2) Omega p + (i delta_gs - gamma_gs/2) s
//! ```
//!
//! `E(z)` is rebuilt at every stage by trapezoidal quadrature of `p` along `z`
//! and the atomic variables advance with classical RK4.

use num_complex::Complex64;

use crate::eit_medium::EitParams;
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::spectrum::FieldWaveform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Number of slices along the medium.
    pub slices: usize,
    /// The time step is at most `1 / (step_factor * max(Omega_c, Gamma))`.
    pub step_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            slices: 200,
            step_factor: 40.0,
        }
    }
}

/// Energy bookkeeping of one run, all as `Int |E|^2 dt`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    pub input: f64,
    pub output: f64,
    /// Left in the medium at the last time step.
    pub stored: f64,
    /// Lost to spontaneous emission and ground-state dephasing.
    pub dissipated: f64,
}

impl EnergyLedger {
    /// `|input - output - stored - dissipated| / input`.
    pub fn closure_error(&self) -> f64 {
        (self.input - self.output - self.stored - self.dissipated).abs() / self.input
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub field: FieldWaveform,
    pub energy: EnergyLedger,
}

struct Workspace {
    n: usize,
    h: f64,
    c: f64,
    e: Vec<Complex64>,
}

impl Workspace {
    fn fill_field(&mut self, e_in: Complex64, p: &[Complex64]) {
        let i = Complex64::i();
        self.e[0] = e_in;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 1..self.n {
            acc += (p[j] + p[j - 1]) * (0.5 * self.h);
            self.e[j] = e_in + i * self.c * acc;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn rhs(
        &mut self,
        e_in: Complex64,
        p: &[Complex64],
        s: &[Complex64],
        omega: f64,
        a_p: Complex64,
        a_s: Complex64,
        dp: &mut [Complex64],
        ds: &mut [Complex64],
    ) {
        self.fill_field(e_in, p);
        let i = Complex64::i();
        let half_omega = 0.5 * omega;
        for j in 0..self.n {
            dp[j] = i * (self.e[j] + half_omega * s[j]) + a_p * p[j];
            ds[j] = i * half_omega * p[j] + a_s * s[j];
        }
    }
}

fn trapz_norm(v: &[Complex64], h: f64) -> f64 {
    let n = v.len();
    let inner: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    h * (inner - 0.5 * (v[0].norm_sqr() + v[n - 1].norm_sqr()))
}

/// Propagates `input` through the medium with time-dependent coupling Rabi
/// frequency `rabi(t)` and ground-state decoherence `gamma_gs(t)`.
///
/// `p.coupling_rabi` and `p.gamma_gs` are ignored in favour of the two
/// callbacks. `peak_rabi` bounds `rabi(t)` and sets the step size. The input
/// must vanish at both ends of its record: it is resampled with band-limited
/// interpolation for the RK4 midpoints. The output lives on the input grid.
pub fn integrate<R, D>(
    input: &FieldWaveform,
    p: &EitParams,
    rabi: R,
    gamma_gs: D,
    peak_rabi: f64,
    settings: &SolverSettings,
) -> Result<SolverOutput>
where
    R: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    p.validate()?;
    input.grid.validate()?;
    if settings.slices < 2 {
        return Err(Error::param("slices", "need at least 2 slices"));
    }
    if !(settings.step_factor > 0.0) {
        return Err(Error::param("step_factor", "must be > 0"));
    }
    let h_in = input.grid.step;
    let dt_max = 1.0 / (settings.step_factor * peak_rabi.max(p.gamma));
    let sub = (h_in / dt_max).ceil().max(1.0) as usize;
    let dt = h_in / sub as f64;
    let fine = input.upsampled(2 * sub);

    let n = settings.slices + 1;
    let hz = 1.0 / settings.slices as f64;
    let c = p.optical_depth * p.gamma / 4.0;
    let mut ws = Workspace {
        n,
        h: hz,
        c,
        e: vec![Complex64::new(0.0, 0.0); n],
    };
    let zero = Complex64::new(0.0, 0.0);
    let mut ps = vec![zero; n];
    let mut ss = vec![zero; n];
    let mut k = [(); 4].map(|_| (vec![zero; n], vec![zero; n]));
    let mut tp = vec![zero; n];
    let mut ts = vec![zero; n];

    let len = input.grid.len;
    let mut out = vec![zero; len];
    out[0] = input.value[0];
    let t0 = input.grid.start;
    let a_p = |_: f64| Complex64::new(-p.gamma / 2.0, p.delta_ge);
    let a_s = |t: f64| Complex64::new(-gamma_gs(t) / 2.0, p.delta_gs);
    let loss_rate = |ps: &[Complex64], ss: &[Complex64], g: f64| {
        c * (p.gamma * trapz_norm(ps, hz) + g * trapz_norm(ss, hz))
    };

    let mut dissipated = 0.0;
    let mut w_prev = 0.0;
    let e_total = input.energy();
    let mut exit_prev = input.value[0];
    let mut in_so_far = 0.0;
    let mut out_so_far = 0.0;
    let mut loss_prev = 0.0;
    let steps = (len - 1) * sub;
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let e0 = fine.value[2 * step];
        let e1 = fine.value[2 * step + 1];
        let e2 = fine.value[2 * step + 2];
        let (o0, o1, o2) = (rabi(t), rabi(t + 0.5 * dt), rabi(t + dt));
        let (s0, s1, s2) = (a_s(t), a_s(t + 0.5 * dt), a_s(t + dt));
        let ap = a_p(t);

        let [k1, k2, k3, k4] = &mut k;
        ws.rhs(e0, &ps, &ss, o0, ap, s0, &mut k1.0, &mut k1.1);
        for j in 0..n {
            tp[j] = ps[j] + 0.5 * dt * k1.0[j];
            ts[j] = ss[j] + 0.5 * dt * k1.1[j];
        }
        ws.rhs(e1, &tp, &ts, o1, ap, s1, &mut k2.0, &mut k2.1);
        for j in 0..n {
            tp[j] = ps[j] + 0.5 * dt * k2.0[j];
            ts[j] = ss[j] + 0.5 * dt * k2.1[j];
        }
        ws.rhs(e1, &tp, &ts, o1, ap, s1, &mut k3.0, &mut k3.1);
        for j in 0..n {
            tp[j] = ps[j] + dt * k3.0[j];
            ts[j] = ss[j] + dt * k3.1[j];
        }
        ws.rhs(e2, &tp, &ts, o2, ap, s2, &mut k4.0, &mut k4.1);
        for j in 0..n {
            ps[j] += dt / 6.0 * (k1.0[j] + 2.0 * k2.0[j] + 2.0 * k3.0[j] + k4.0[j]);
            ss[j] += dt / 6.0 * (k1.1[j] + 2.0 * k2.1[j] + 2.0 * k3.1[j] + k4.1[j]);
        }

        ws.fill_field(e2, &ps);
        let exit = ws.e[n - 1];
        in_so_far += 0.5 * (e0.norm_sqr() + e2.norm_sqr()) * dt;
        out_so_far += 0.5 * (exit_prev.norm_sqr() + exit.norm_sqr()) * dt;
        exit_prev = exit;

        let w = trapz_norm(&ps, hz) + trapz_norm(&ss, hz);
        if !w.is_finite() {
            return Err(Error::Unstable { step, growth: f64::INFINITY });
        }
        let loss = loss_rate(&ps, &ss, gamma_gs(t + dt));
        dissipated += 0.5 * (loss_prev + loss) * dt;
        loss_prev = loss;
        // fast norm growth alone is legitimate while the input drives a nearly
        // empty medium; it is flagged only when the energy books stop closing
        let excess = c * w + out_so_far + dissipated - in_so_far;
        if w > 1.01 * w_prev && excess > 0.01 * in_so_far + 1e-6 * e_total {
            return Err(Error::Unstable {
                step,
                growth: if w_prev > 0.0 { w / w_prev } else { f64::INFINITY },
            });
        }
        w_prev = w;

        if (step + 1) % sub == 0 {
            out[(step + 1) / sub] = exit;
        }
    }

    let field = FieldWaveform {
        grid: UniformGrid { ..input.grid },
        value: out,
    };
    let energy = EnergyLedger {
        input: e_total,
        output: field.energy(),
        stored: c * w_prev,
        dissipated,
    };
    Ok(SolverOutput { field, energy })
}
