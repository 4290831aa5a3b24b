//! Trajectory analysis: envelope decay, decay-rate scans, oscillation onset
//! and basins of attraction.

use rayon::prelude::*;
use serde::Serialize;

use crate::fixedpoints::{fixed_points, Branch, FixedPoint, Stability};
use crate::meanfield::{integrate_mf_at, MagState, Trajectory};
use crate::model::ModelParams;
use crate::ode::{linspace, SolverOptions};
use crate::{Error, Result};

/// Fewest peaks accepted by an envelope fit.
pub const MIN_PEAKS: usize = 4;

/// Distance in `m` space below which a trajectory counts as having reached
/// a fixed point.
pub const ATTRACTOR_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub t: f64,
    pub value: f64,
}

/// Local maxima of `values`, refined by a parabola through the three
/// samples around each. Maxima closer than a quarter of the median spacing
/// are merged, keeping the larger.
pub fn find_peaks(times: &[f64], values: &[f64]) -> Vec<Peak> {
    assert_eq!(times.len(), values.len());
    let mut raw = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        if b > a && b >= c {
            let denom = a - 2.0 * b + c;
            let h = times[i + 1] - times[i];
            let (dt, v) = if denom < 0.0 {
                let off = 0.5 * (a - c) / denom;
                (off * h, b - 0.25 * (a - c) * off)
            } else {
                (0.0, b)
            };
            raw.push(Peak {
                t: times[i] + dt,
                value: v,
            });
        }
    }
    if raw.len() < 3 {
        return raw;
    }
    let mut gaps: Vec<f64> = raw.windows(2).map(|w| w[1].t - w[0].t).collect();
    gaps.sort_by(f64::total_cmp);
    let min_sep = 0.25 * gaps[gaps.len() / 2];
    let mut out: Vec<Peak> = Vec::with_capacity(raw.len());
    for p in raw {
        match out.last_mut() {
            Some(last) if p.t - last.t < min_sep => {
                if p.value > last.value {
                    *last = p;
                }
            }
            _ => out.push(p),
        }
    }
    out
}

/// Which peaks enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PeakWindow {
    /// Every detected peak.
    All,
    /// Peaks up to the first one below half the first peak; at least
    /// [`MIN_PEAKS`].
    #[default]
    HalfAmplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub a0: f64,
    /// Decay rate per unit `J t`.
    pub b: f64,
    pub b_stderr: f64,
    /// RMS residual of `ln A`.
    pub residual: f64,
    pub peaks: Vec<Peak>,
}

/// Least squares `y = c0 + c1 x`; returns `(c0, c1, stderr(c1), rms)`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    let se = (ss / dof / sxx).sqrt();
    (c0, c1, se, (ss / n).sqrt())
}

/// Fit `A(t) = A0 exp(-B t)` to the peaks of `|signal - asymptote|`.
pub fn fit_envelope_series(times: &[f64], signal: &[f64], asymptote: f64, window: PeakWindow) -> Result<EnvelopeFit> {
    if times.len() != signal.len() {
        return Err(Error::invalid("signal", "times and values differ in length"));
    }
    let dev: Vec<f64> = signal.iter().map(|v| (v - asymptote).abs()).collect();
    let mut peaks = find_peaks(times, &dev);
    if peaks.len() < MIN_PEAKS {
        return Err(Error::InsufficientData(format!(
            "{} peaks found, at least {MIN_PEAKS} needed",
            peaks.len()
        )));
    }
    if window == PeakWindow::HalfAmplitude {
        let half = 0.5 * peaks[0].value;
        let end = peaks.iter().position(|p| p.value < half).map_or(peaks.len(), |k| k + 1);
        peaks.truncate(end.max(MIN_PEAKS));
    }
    if peaks.iter().any(|p| p.value <= 0.0) {
        return Err(Error::InsufficientData("a peak sits on the asymptote".into()));
    }
    let x: Vec<f64> = peaks.iter().map(|p| p.t).collect();
    let y: Vec<f64> = peaks.iter().map(|p| p.value.ln()).collect();
    let (c0, c1, se, rms) = linear_fit(&x, &y);
    Ok(EnvelopeFit {
        a0: c0.exp(),
        b: -c1,
        b_stderr: se,
        residual: rms,
        peaks,
    })
}

/// Envelope fit on `m_z`, all peaks.
pub fn fit_envelope_decay(traj: &Trajectory, asymptote: f64) -> Result<EnvelopeFit> {
    fit_envelope_series(&traj.times, &traj.mz(), asymptote, PeakWindow::All)
}

/// The single attractive fixed point of `params`, if there is exactly one.
fn unique_attractor(params: &ModelParams) -> Result<FixedPoint> {
    let att: Vec<FixedPoint> = fixed_points(params)?
        .into_iter()
        .filter(|fp| fp.stability == Stability::Attractive)
        .collect();
    match att.as_slice() {
        [fp] => Ok(*fp),
        _ => Err(Error::Precondition(format!(
            "expected one attractive fixed point at chi = {}, eta = {}, found {}",
            params.chi,
            params.eta,
            att.len()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayScanOptions {
    pub init: MagState,
    pub dt: f64,
    /// First horizon tried; doubled until the half-amplitude window closes.
    pub t_start: f64,
    pub t_cap: f64,
    pub window: PeakWindow,
}

impl Default for DecayScanOptions {
    fn default() -> Self {
        Self {
            init: MagState::diagonal(),
            dt: 0.05,
            t_start: 100.0,
            t_cap: 6400.0,
            window: PeakWindow::HalfAmplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub eta: f64,
    pub asymptote: f64,
    pub t_max: f64,
    pub fit: EnvelopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayScan {
    pub chi: f64,
    pub rows: Vec<DecayRow>,
    /// `B = beta (eta - 1)^2` through the origin.
    pub beta: f64,
    pub beta_stderr: f64,
    /// Intercept of the free fit `B = c + beta' (eta - 1)^2`.
    pub intercept: f64,
}

/// Decay fit for one `eta`, extending the horizon until the half-amplitude
/// window closes.
pub fn decay_rate(params: &ModelParams, opts: &DecayScanOptions, solver: &SolverOptions) -> Result<DecayRow> {
    let fp = unique_attractor(params)?;
    let mut t_max = opts.t_start;
    loop {
        let n = (t_max / opts.dt).round() as usize + 1;
        let traj = integrate_mf_at(params, opts.init, &linspace(0.0, t_max, n), solver)?;
        let fit = fit_envelope_series(&traj.times, &traj.mz(), fp.m.mz, opts.window);
        let closed = match (&fit, opts.window) {
            (Ok(f), PeakWindow::HalfAmplitude) => f.peaks.last().is_some_and(|p| p.value < 0.5 * f.peaks[0].value),
            (Ok(_), PeakWindow::All) => true,
            (Err(_), _) => false,
        };
        if closed || t_max >= opts.t_cap {
            return Ok(DecayRow {
                eta: params.eta,
                asymptote: fp.m.mz,
                t_max,
                fit: fit?,
            });
        }
        t_max = (2.0 * t_max).min(opts.t_cap);
    }
}

/// Per-`eta` envelope fits at fixed `chi < 1` and the quadratic law
/// `B(eta) = beta (eta - 1)^2`.
pub fn scan_decay_rate(eta_samples: &[f64], chi: f64, opts: &DecayScanOptions, solver: &SolverOptions) -> Result<DecayScan> {
    if !(chi > 0.0 && chi < 1.0) {
        return Err(Error::invalid("chi", format!("decay scans need 0 < chi < 1, got {chi}")));
    }
    if eta_samples.len() < 2 {
        return Err(Error::InsufficientData("need at least two eta values".into()));
    }
    if let Some(bad) = eta_samples.iter().find(|&&e| !(e > 1.0 && e.is_finite())) {
        return Err(Error::invalid("eta", format!("decay scans need eta > 1, got {bad}")));
    }
    let rows = eta_samples
        .par_iter()
        .map(|&eta| decay_rate(&ModelParams::new(chi, eta)?, opts, solver))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = rows.iter().map(|r| (r.eta - 1.0).powi(2)).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.fit.b).collect();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let beta = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - beta * a).powi(2)).sum();
    let beta_stderr = (ss / (x.len() as f64 - 1.0) / sxx).sqrt();
    let (intercept, _, _, _) = linear_fit(&x, &y);
    Ok(DecayScan {
        chi,
        rows,
        beta,
        beta_stderr,
        intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnsetOptions {
    /// Length of the trailing window of the running mean.
    pub mean_window: f64,
    /// Window in which the crossings must fall.
    pub count_window: f64,
    pub min_crossings: usize,
    /// Dead band around the running mean; a crossing needs the signal to
    /// leave it on the other side.
    pub hysteresis: f64,
}

impl Default for OnsetOptions {
    fn default() -> Self {
        Self {
            mean_window: 10.0,
            count_window: 10.0,
            min_crossings: 3,
            hysteresis: 1e-3,
        }
    }
}

/// Onset with default options.
pub fn detect_oscillation_onset(traj: &Trajectory) -> Option<f64> {
    detect_onset_series(&traj.times, &traj.mz(), &OnsetOptions::default())
}

/// Earliest time starting a run of `min_crossings` crossings of the trailing
/// running mean within `count_window`.
pub fn detect_onset_series(times: &[f64], values: &[f64], opts: &OnsetOptions) -> Option<f64> {
    if times.len() < 3 {
        return None;
    }
    let mut crossings = Vec::new();
    let mut start = 0;
    let mut sum = 0.0;
    let mut side = 0i8;
    for (k, (&t, &v)) in times.iter().zip(values).enumerate() {
        sum += v;
        while times[start] < t - opts.mean_window {
            sum -= values[start];
            start += 1;
        }
        let mean = sum / (k + 1 - start) as f64;
        let d = v - mean;
        let now = if d > opts.hysteresis {
            1
        } else if d < -opts.hysteresis {
            -1
        } else {
            0
        };
        if now != 0 {
            if side != 0 && now != side {
                crossings.push(t);
            }
            side = now;
        }
    }
    let need = opts.min_crossings.max(1);
    crossings
        .windows(need)
        .find(|w| w[need - 1] - w[0] <= opts.count_window)
        .map(|w| w[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinProbe {
    pub init: MagState,
    /// Index into [`BasinReport::attractors`]; `None` if unresolved.
    pub attractor: Option<usize>,
    /// First time within [`ATTRACTOR_RADIUS`] of the attractor.
    pub transit_time: Option<f64>,
    pub onset: Option<f64>,
    pub final_state: MagState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinReport {
    pub params: ModelParams,
    pub attractors: Vec<FixedPoint>,
    pub probes: Vec<BasinProbe>,
}

impl BasinReport {
    pub fn attractor_branch(&self, probe: &BasinProbe) -> Option<Branch> {
        probe.attractor.map(|k| self.attractors[k].branch)
    }
}

/// `count` initial states with `|m| = radius` evenly spread on the circle in
/// the `m_x = 0` plane.
pub fn plane_ring(radius: f64, count: usize) -> Vec<MagState> {
    (0..count)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
            MagState::new(0.0, radius * th.sin(), radius * th.cos())
        })
        .collect()
}

/// Integrate every initial state and assign it to the attractive fixed point
/// it ends within [`ATTRACTOR_RADIUS`] of.
pub fn probe_basin(params: &ModelParams, inits: &[MagState], t_max: f64, dt: f64, solver: &SolverOptions) -> Result<BasinReport> {
    if !(t_max > 0.0 && dt > 0.0 && dt < t_max) {
        return Err(Error::invalid("t_max", "need 0 < dt < t_max"));
    }
    let attractors: Vec<FixedPoint> = fixed_points(params)?
        .into_iter()
        .filter(|fp| fp.stability == Stability::Attractive)
        .collect();
    if attractors.is_empty() {
        return Err(Error::Precondition(format!(
            "no attractive fixed point at chi = {}, eta = {}",
            params.chi, params.eta
        )));
    }
    let times = linspace(0.0, t_max, (t_max / dt).round() as usize + 1);
    let probes = inits
        .par_iter()
        .map(|&init| {
            let traj = integrate_mf_at(params, init, &times, solver)?;
            let last = traj.last().unwrap_or(init);
            let attractor = attractors.iter().position(|fp| fp.m.dist(last) < ATTRACTOR_RADIUS);
            let transit_time = attractor.and_then(|k| {
                let target = attractors[k].m;
                traj.states
                    .iter()
                    .zip(&traj.times)
                    .find(|(s, _)| s.dist(target) < ATTRACTOR_RADIUS)
                    .map(|(_, &t)| t)
            });
            Ok(BasinProbe {
                init,
                attractor,
                transit_time,
                onset: detect_oscillation_onset(&traj),
                final_state: last,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BasinReport {
        params: *params,
        attractors,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(b: f64, t_max: f64) -> (Vec<f64>, Vec<f64>) {
        let t = linspace(0.0, t_max, (t_max / 0.01) as usize + 1);
        let v = t.iter().map(|&s| 0.3 + 0.8 * (-b * s).exp() * (2.0 * s).cos()).collect();
        (t, v)
    }

    #[test]
    fn synthetic_decay_is_recovered() {
        let (t, v) = synthetic(0.05, 60.0);
        let fit = fit_envelope_series(&t, &v, 0.3, PeakWindow::All).unwrap();
        assert!((fit.b - 0.05).abs() < 1e-3, "{}", fit.b);
        assert!((fit.a0 - 0.8).abs() < 1e-2);
        assert!(fit.peaks.len() > 30);
    }

    #[test]
    fn too_few_peaks() {
        let (t, v) = synthetic(0.05, 3.0);
        assert!(matches!(
            fit_envelope_series(&t, &v, 0.3, PeakWindow::All),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn half_amplitude_window_stops_early() {
        let (t, v) = synthetic(0.05, 60.0);
        let fit = fit_envelope_series(&t, &v, 0.3, PeakWindow::HalfAmplitude).unwrap();
        assert!(fit.peaks.last().unwrap().t < 16.0);
        assert!((fit.b - 0.05).abs() < 2e-3);
    }

    #[test]
    fn onset_of_synthetic_signals() {
        let t = linspace(0.0, 100.0, 2001);
        let flat: Vec<f64> = t.iter().map(|&s| 0.5 + 0.3 * (-s).exp()).collect();
        assert_eq!(detect_onset_series(&t, &flat, &OnsetOptions::default()), None);
        let late: Vec<f64> = t
            .iter()
            .map(|&s| if s < 40.0 { 0.2 } else { 0.2 + 0.1 * (2.0 * (s - 40.0)).sin() })
            .collect();
        let on = detect_onset_series(&t, &late, &OnsetOptions::default()).unwrap();
        assert!((40.0..43.0).contains(&on), "{on}");
    }

    #[test]
    fn ring_lies_in_plane() {
        for s in plane_ring(0.3, 8) {
            assert_eq!(s.mx, 0.0);
            assert!((s.norm_sq() - 0.09).abs() < 1e-15);
        }
    }
}
