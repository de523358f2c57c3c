//! Heralded coincidence counting: Monte Carlo detection against a G2 waveform,
//! the peak-over-floor g2 estimator, and the peak-g2 model versus read power.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonneg, ensure_positive, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::spectrum::G2Waveform;

/// Classical bound on the normalized cross-correlation for this source class.
pub const CLASSICAL_LIMIT: f64 = 2.0;

/// Number of bins averaged for the uncorrelated floor.
pub const FLOOR_BINS: usize = 20;

/// Triggers simulated per independent random stream.
const TRIGGERS_PER_STREAM: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Overall signal-path transmission including detector efficiency.
    pub collection_eff: f64,
    /// Detector dark-count rate [1/s].
    pub dark_rate: f64,
    /// Uncorrelated photon background rate [1/s].
    pub accidental_rate: f64,
    /// Coupling leakage, in counts per trigger window per unit `xi`.
    pub leak_coeff: f64,
    pub n_triggers: u64,
    /// Fixed delay between the herald and the signal detector [s].
    pub signal_delay: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            collection_eff: 0.25,
            dark_rate: 0.0,
            accidental_rate: 0.0,
            leak_coeff: 0.0,
            n_triggers: 30_000,
            signal_delay: 800e-9,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        ensure_nonneg("collection_eff", self.collection_eff)?;
        if self.collection_eff > 1.0 {
            return Err(Error::param("collection_eff", "must lie in [0, 1]"));
        }
        ensure_nonneg("dark_rate", self.dark_rate)?;
        ensure_nonneg("accidental_rate", self.accidental_rate)?;
        ensure_nonneg("leak_coeff", self.leak_coeff)?;
        if !self.signal_delay.is_finite() {
            return Err(Error::param("signal_delay", "must be finite"));
        }
        Ok(())
    }
}

/// Uniform binning of detection times after the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramGeometry {
    pub start: f64,
    pub bin_width: f64,
    pub bins: usize,
}

impl Default for HistogramGeometry {
    /// 100 bins of 5 ns starting 700 ns after the trigger.
    fn default() -> Self {
        HistogramGeometry {
            start: 700e-9,
            bin_width: 5e-9,
            bins: 100,
        }
    }
}

impl HistogramGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("bin_width", self.bin_width)?;
        if self.bins == 0 {
            return Err(Error::param("bins", "must be >= 1"));
        }
        if !self.start.is_finite() {
            return Err(Error::param("start", "must be finite"));
        }
        Ok(())
    }

    pub fn window(&self) -> f64 {
        self.bin_width * self.bins as f64
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.start + k as f64 * self.bin_width
    }

    pub fn center(&self, k: usize) -> f64 {
        self.start + (k as f64 + 0.5) * self.bin_width
    }

    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.start) / self.bin_width;
        if x >= 0.0 && x < self.bins as f64 {
            Some((x.floor() as usize).min(self.bins - 1))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub geometry: HistogramGeometry,
    pub counts: Vec<u64>,
    pub n_triggers: u64,
    /// Set when more than one detection per trigger is expected in the window,
    /// where the peak-over-floor estimator stops being a good approximation.
    pub dense_warning: bool,
}

impl CorrelationHistogram {
    pub fn new(geometry: HistogramGeometry, counts: Vec<u64>, n_triggers: u64) -> Result<Self> {
        geometry.validate()?;
        if counts.len() != geometry.bins {
            return Err(Error::InvalidGrid(format!(
                "{} counts for {} bins",
                counts.len(),
                geometry.bins
            )));
        }
        Ok(CorrelationHistogram {
            geometry,
            counts,
            n_triggers,
            dense_warning: false,
        })
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        (0..=self.geometry.bins).map(|k| self.geometry.edge(k)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Expected detections per trigger in each bin: correlated signal and flat
/// background.
pub fn expected_per_trigger(
    g2: &G2Waveform,
    d: &DetectionParams,
    geometry: &HistogramGeometry,
    xi: f64,
) -> Result<(Vec<f64>, f64)> {
    d.validate()?;
    geometry.validate()?;
    ensure_nonneg("xi", xi)?;
    let signal: Vec<f64> = (0..geometry.bins)
        .map(|k| {
            let a = geometry.edge(k) - d.signal_delay;
            d.collection_eff * g2.integrate_between(a, a + geometry.bin_width)
        })
        .collect();
    let background = (d.dark_rate + d.accidental_rate) * geometry.window() + d.leak_coeff * xi;
    Ok((signal, background))
}

/// Simulated histogram for `d.n_triggers` heralds.
///
/// `g2` is the heralded detection density per trigger before collection
/// losses; the signal photon is detected at most once per trigger. Background
/// counts are Poisson with uniform arrival times. Triggers are split into
/// fixed-size streams with their own generator, so the result depends only on
/// the inputs and `seed`.
pub fn monte_carlo_histogram(
    g2: &G2Waveform,
    d: &DetectionParams,
    geometry: &HistogramGeometry,
    xi: f64,
    seed: u64,
) -> Result<CorrelationHistogram> {
    let (signal, background) = expected_per_trigger(g2, d, geometry, xi)?;
    let p_signal: f64 = signal.iter().sum();
    if p_signal > 1.0 {
        return Err(Error::Precondition(format!(
            "signal detection probability per trigger is {p_signal}, above one"
        )));
    }
    let mut cdf = Vec::with_capacity(signal.len());
    let mut acc = 0.0;
    for s in &signal {
        acc += s;
        cdf.push(acc);
    }
    let poisson = if background > 0.0 {
        Some(Poisson::new(background).map_err(|e| Error::Domain(e.to_string()))?)
    } else {
        None
    };
    let bins = geometry.bins;
    let n = d.n_triggers;
    let streams = n.div_ceil(TRIGGERS_PER_STREAM);
    let partial: Vec<Vec<u64>> = (0..streams)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            let count = TRIGGERS_PER_STREAM.min(n - stream * TRIGGERS_PER_STREAM);
            let mut h = vec![0u64; bins];
            for _ in 0..count {
                let u: f64 = rng.random();
                if u < p_signal {
                    let k = cdf.partition_point(|c| *c <= u).min(bins - 1);
                    h[k] += 1;
                }
                if let Some(pois) = &poisson {
                    let m = pois.sample(&mut rng) as u64;
                    for _ in 0..m {
                        h[rng.random_range(0..bins)] += 1;
                    }
                }
            }
            h
        })
        .collect();
    let mut counts = vec![0u64; bins];
    for h in partial {
        for (c, v) in counts.iter_mut().zip(h) {
            *c += v;
        }
    }
    Ok(CorrelationHistogram {
        geometry: *geometry,
        counts,
        n_triggers: n,
        dense_warning: p_signal + background > 1.0,
    })
}

/// Builds a histogram from `(trigger_id, detection time after trigger [s])`
/// events. Detections outside the window are dropped.
pub fn histogram_from_events(
    events: &[(u64, f64)],
    geometry: &HistogramGeometry,
    n_triggers: u64,
) -> Result<CorrelationHistogram> {
    geometry.validate()?;
    let mut counts = vec![0u64; geometry.bins];
    for (_, t) in events {
        if let Some(k) = geometry.bin_of(*t) {
            counts[k] += 1;
        }
    }
    CorrelationHistogram::new(*geometry, counts, n_triggers)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub g2: f64,
    /// Centre of the peak bin [s].
    pub tau_d: f64,
    /// One standard error from Poisson statistics.
    pub uncertainty: f64,
    pub peak_count: f64,
    pub floor_mean: f64,
}

impl G2Estimate {
    pub fn above_classical_limit(&self) -> bool {
        self.g2 > CLASSICAL_LIMIT
    }
}

fn peak_index(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

/// Indices of the `FLOOR_BINS` bins farthest in time from `peak`; on equal
/// distance the earlier bin wins.
pub fn floor_bins(bins: usize, peak: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bins).filter(|&k| k != peak).collect();
    idx.sort_by_key(|&k| (std::cmp::Reverse(k.abs_diff(peak)), k));
    idx.truncate(FLOOR_BINS);
    idx
}

fn ratio_from_values(values: &[f64]) -> Result<(usize, f64, f64)> {
    if values.len() < 11 {
        return Err(Error::Precondition(format!(
            "need at least 10 floor bins besides the peak, histogram has {} bins",
            values.len()
        )));
    }
    let peak = peak_index(values);
    let floor = floor_bins(values.len(), peak);
    let floor_mean = floor.iter().map(|&k| values[k]).sum::<f64>() / floor.len() as f64;
    if floor_mean == 0.0 {
        return Err(Error::Domain("floor count is zero; g2 is undefined".into()));
    }
    Ok((peak, values[peak], floor_mean))
}

/// Peak bin over mean floor: `g2(tau_d) = N_si(tau_d) / <N_s>`.
pub fn estimate_g2(h: &CorrelationHistogram) -> Result<G2Estimate> {
    let values: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let (peak, n_peak, floor_mean) = ratio_from_values(&values)?;
    let g2 = n_peak / floor_mean;
    let floor_total = floor_mean * floor_bins(values.len(), peak).len() as f64;
    let rel = (1.0 / n_peak.max(1.0) + 1.0 / floor_total).sqrt();
    Ok(G2Estimate {
        g2,
        tau_d: h.geometry.center(peak),
        uncertainty: g2 * rel,
        peak_count: n_peak,
        floor_mean,
    })
}

/// The ratio [`estimate_g2`] converges to for many triggers.
pub fn analytic_g2(g2: &G2Waveform, d: &DetectionParams, geometry: &HistogramGeometry, xi: f64) -> Result<f64> {
    let (signal, background) = expected_per_trigger(g2, d, geometry, xi)?;
    let per_bin = background / geometry.bins as f64;
    let values: Vec<f64> = signal.iter().map(|s| s + per_bin).collect();
    let (_, peak, floor) = ratio_from_values(&values)?;
    Ok(peak / floor)
}

/// Accidental rate [1/s] for which the analytic g2 equals `target`, other
/// detection parameters held fixed.
pub fn accidental_rate_for_g2(
    g2: &G2Waveform,
    d: &DetectionParams,
    geometry: &HistogramGeometry,
    xi: f64,
    target: f64,
) -> Result<f64> {
    let (signal, _) = expected_per_trigger(g2, d, geometry, xi)?;
    let b = background_for_g2(&signal, target)?;
    let rate = (b - d.leak_coeff * xi / geometry.bins as f64) / geometry.bin_width - d.dark_rate;
    if !(rate >= 0.0) {
        return Err(Error::Domain(format!("g2 = {target} is not reachable with a non-negative rate")));
    }
    Ok(rate)
}

/// Per-bin background (counts per trigger) for which the analytic g2 equals
/// `target`, given the signal expected in each bin.
fn background_for_g2(signal: &[f64], target: f64) -> Result<f64> {
    if !(target > 1.0) {
        return Err(Error::param("target", "must exceed 1"));
    }
    if signal.len() < 11 {
        return Err(Error::Precondition("need at least 10 floor bins besides the peak".into()));
    }
    let peak = peak_index(signal);
    let floor = floor_bins(signal.len(), peak);
    let s_floor = floor.iter().map(|&k| signal[k]).sum::<f64>() / floor.len() as f64;
    Ok((signal[peak] - target * s_floor) / (target - 1.0))
}

/// Coupling leakage coefficient for which the analytic g2 at `xi` equals
/// `target`, other detection parameters held fixed.
pub fn leak_coeff_for_g2(
    g2: &G2Waveform,
    d: &DetectionParams,
    geometry: &HistogramGeometry,
    xi: f64,
    target: f64,
) -> Result<f64> {
    ensure_positive("xi", xi)?;
    let (signal, _) = expected_per_trigger(g2, d, geometry, xi)?;
    let b = background_for_g2(&signal, target)?;
    let rest = (d.dark_rate + d.accidental_rate) * geometry.bin_width;
    let leak = (b - rest) * geometry.bins as f64 / xi;
    if !(leak >= 0.0) {
        return Err(Error::Domain(format!("g2 = {target} is not reachable with non-negative leakage")));
    }
    Ok(leak)
}

/// Peak cross-correlation versus read/write power ratio,
/// `g2 = N_si sqrt(xi) exp(-gamma_s xi) / (leak_coeff xi + N_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Model {
    pub n_si: f64,
    pub gamma_s: f64,
    pub leak_coeff: f64,
    pub n_b: f64,
}

impl G2Model {
    pub fn validate(&self) -> Result<()> {
        ensure_nonneg("n_si", self.n_si)?;
        ensure_nonneg("gamma_s", self.gamma_s)?;
        ensure_nonneg("leak_coeff", self.leak_coeff)?;
        ensure_nonneg("n_b", self.n_b)?;
        Ok(())
    }

    fn from_array(x: &[f64]) -> Self {
        G2Model {
            n_si: x[0],
            gamma_s: x[1],
            leak_coeff: x[2],
            n_b: x[3],
        }
    }

    /// Same model rescaled in `n_si` so that `g2(xi) = value`.
    pub fn scaled_to(&self, xi: f64, value: f64) -> Self {
        let cur = g2_peak_model(self, xi);
        G2Model {
            n_si: self.n_si * value / cur,
            ..*self
        }
    }
}

pub fn g2_peak_model(m: &G2Model, xi: f64) -> f64 {
    m.n_si * xi.sqrt() * (-m.gamma_s * xi).exp() / (m.leak_coeff * xi + m.n_b)
}

/// Location of the maximum of [`g2_peak_model`].
///
/// Setting the log-derivative to zero gives
/// `2 gamma_s L xi^2 + (L + 2 gamma_s N_b) xi - N_b = 0`, whose positive root is
/// the only stationary point.
pub fn g2_model_argmax(m: &G2Model) -> Result<f64> {
    m.validate()?;
    let (g, l, n) = (m.gamma_s, m.leak_coeff, m.n_b);
    if n == 0.0 {
        return Err(Error::Domain("with N_b = 0 the model peaks at xi -> 0".into()));
    }
    if g == 0.0 && l == 0.0 {
        return Err(Error::Domain("model grows without bound".into()));
    }
    let b = l + 2.0 * g * n;
    Ok(2.0 * n / (b + (b * b + 8.0 * g * l * n).sqrt()))
}

/// Model values at `xis` with multiplicative Gaussian noise of relative size
/// `rel_noise`, as `(xi, g2, sigma)` with `sigma = rel_noise * g2` (or 1 when
/// noiseless).
pub fn synthetic_g2_points(m: &G2Model, xis: &[f64], rel_noise: f64, seed: u64) -> Result<Vec<(f64, f64, f64)>> {
    m.validate()?;
    ensure_nonneg("rel_noise", rel_noise)?;
    let noise = Normal::new(0.0, rel_noise).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(xis
        .iter()
        .map(|&x| {
            let g = g2_peak_model(m, x) * (1.0 + noise.sample(&mut rng));
            let s = if rel_noise > 0.0 { rel_noise * g.abs() } else { 1.0 };
            (x, g, s)
        })
        .collect())
}

/// Which model parameter is held fixed. The model is invariant under a common
/// rescaling of `(N_si, leak_coeff, N_b)`, so one of them must be pinned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fix", content = "value", rename_all = "snake_case")]
pub enum FitGauge {
    NSi(f64),
    LeakCoeff(f64),
    NB(f64),
}

impl FitGauge {
    fn index(&self) -> usize {
        match self {
            FitGauge::NSi(_) => 0,
            FitGauge::LeakCoeff(_) => 2,
            FitGauge::NB(_) => 3,
        }
    }

    fn value(&self) -> f64 {
        match self {
            FitGauge::NSi(v) | FitGauge::LeakCoeff(v) | FitGauge::NB(v) => *v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Fit {
    pub model: G2Model,
    /// 4x4 covariance in the order `(n_si, gamma_s, leak_coeff, n_b)`; the
    /// pinned parameter has zero row and column.
    pub covariance: DMatrix<f64>,
    pub chi_squared: f64,
    pub iterations: usize,
}

/// Weighted least-squares fit to `(xi, g2, sigma)` points.
pub fn fit_g2_model(points: &[(f64, f64, f64)], gauge: FitGauge) -> Result<G2Fit> {
    fit_g2_model_with(points, gauge, &LmOptions::default())
}

pub fn fit_g2_model_with(points: &[(f64, f64, f64)], gauge: FitGauge, opts: &LmOptions) -> Result<G2Fit> {
    if points.len() < 4 {
        return Err(Error::Precondition(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|(x, g, s)| !(x.is_finite() && *x > 0.0 && g.is_finite() && *s > 0.0)) {
        return Err(Error::Precondition("points need xi > 0, finite g2 and sigma > 0".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi / lo < 4.0 {
        return Err(Error::Precondition(format!("xi must span a ratio of at least 4, got {}", hi / lo)));
    }
    if !(gauge.value() > 0.0 && gauge.value().is_finite()) {
        return Err(Error::param("gauge", "pinned value must be finite and > 0"));
    }
    let fixed = gauge.index();
    let free: Vec<usize> = (0..4).filter(|&i| i != fixed).collect();
    let full = |x: &[f64]| {
        let mut a = [0.0; 4];
        a[fixed] = gauge.value();
        for (k, &i) in free.iter().enumerate() {
            a[i] = x[k];
        }
        a
    };
    let start = initial_model(points, gauge);
    let x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    let resid = |x: &[f64]| {
        let m = G2Model::from_array(&full(x));
        points
            .iter()
            .map(|(xi, g, s)| (g2_peak_model(&m, *xi) - g) / s)
            .collect::<Vec<_>>()
    };
    let rep = levenberg_marquardt(resid, &x0, &[0.0; 3], &[f64::INFINITY; 3], opts).map_err(|e| match e {
        Error::NotConverged { iterations, cost, best } => Error::NotConverged {
            iterations,
            cost,
            best: full(&best).to_vec(),
        },
        other => other,
    })?;
    let mut covariance = DMatrix::zeros(4, 4);
    if let Some(inv) = &rep.jtj_inverse {
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                covariance[(i, j)] = inv[(a, b)];
            }
        }
    }
    Ok(G2Fit {
        model: G2Model::from_array(&full(&rep.params)),
        covariance,
        chi_squared: 2.0 * rep.cost,
        iterations: rep.iterations,
    })
}

/// For fixed `gamma_s` the model is linear in the two free amplitudes:
/// `N_si sqrt(xi) e^{-gamma xi} - L xi g - N_b g = 0`. Scan `gamma_s` and keep
/// the best weighted linear solution.
fn initial_model(points: &[(f64, f64, f64)], gauge: FitGauge) -> [f64; 4] {
    let fixed = gauge.index();
    let mut best = ([1.0, 0.05, 0.1, 1.0], f64::INFINITY);
    for step in 0..=200 {
        let gamma = step as f64 * 0.0025;
        // columns for (n_si, leak, n_b), moved to the right-hand side if fixed
        let mut rows = Vec::with_capacity(points.len());
        for (xi, g, s) in points {
            let cols = [xi.sqrt() * (-gamma * xi).exp(), -xi * g, -g];
            rows.push((cols, *s));
        }
        let slot = |i: usize| match i {
            0 => 0,
            2 => 1,
            _ => 2,
        };
        let free: Vec<usize> = [0usize, 2, 3].into_iter().filter(|&i| i != fixed).collect();
        let a = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r].0[slot(free[c])] / rows[r].1);
        let b = nalgebra::DVector::from_fn(rows.len(), |r, _| -rows[r].0[slot(fixed)] * gauge.value() / rows[r].1);
        let Ok(sol) = a.clone().svd(true, true).solve(&b, 1e-12) else {
            continue;
        };
        let mut m = [0.0, gamma, 0.0, 0.0];
        m[fixed] = gauge.value();
        m[free[0]] = sol[0].max(1e-6);
        m[free[1]] = sol[1].max(1e-6);
        let model = G2Model::from_array(&m);
        let cost: f64 = points
            .iter()
            .map(|(xi, g, s)| ((g2_peak_model(&model, *xi) - g) / s).powi(2))
            .sum();
        if cost < best.1 {
            best = (m, cost);
        }
    }
    best.0
}
