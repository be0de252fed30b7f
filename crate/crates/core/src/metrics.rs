//! Observables derived from trajectories.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Phases relative to the slowest ("lagger") oscillator.
pub fn normalize_phases(phases: &[f64]) -> Vec<f64> {
    let min = phases.iter().copied().fold(f64::INFINITY, f64::min);
    phases.iter().map(|p| p - min).collect()
}

/// Lagger-normalized phases of `trajectory` at time `t` (linearly
/// interpolated between samples).
pub fn normalize_to_lagger(trajectory: &Trajectory, t: f64) -> Result<Vec<f64>> {
    Ok(normalize_phases(&trajectory.phases_at(t)?))
}

/// Kuramoto order parameter `r = |mean(exp(iθ))|`.
pub fn order_parameter(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    let (re, im) = phases.iter().fold((0.0, 0.0), |(re, im), th| (re + th.cos(), im + th.sin()));
    let n = phases.len() as f64;
    ((re / n).powi(2) + (im / n).powi(2)).sqrt().min(1.0)
}

pub fn order_parameter_series(trajectory: &Trajectory) -> Vec<f64> {
    trajectory.phases.iter().map(|p| order_parameter(p)).collect()
}

/// Largest pairwise phase difference, `max θ − min θ`.
pub fn phase_spread(phases: &[f64]) -> f64 {
    let (lo, hi) = phases.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    if phases.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Earliest sample time from which the phase spread stays below `eps` for
/// at least `window` seconds. Samples before the last applied event are
/// ignored, so a run that is synchronized only before its kick does not count.
pub fn detect_sync(trajectory: &Trajectory, eps: f64, window: f64) -> Option<f64> {
    let after = trajectory.events_applied.iter().map(|e| e.t_applied).fold(f64::NEG_INFINITY, f64::max);
    let mut run_start: Option<f64> = None;
    for (t, phases) in trajectory.times.iter().zip(&trajectory.phases) {
        if *t < after {
            continue;
        }
        if phase_spread(phases) < eps {
            let start = *run_start.get_or_insert(*t);
            if t - start >= window * (1.0 - 1e-12) {
                return Some(start);
            }
        } else {
            run_start = None;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Statistics of `|θ_{i+1} − θ_i|` over index-adjacent connected pairs,
/// taken over the final `tail_fraction` of samples.
pub fn detect_desync_spread(trajectory: &Trajectory, tail_fraction: f64) -> Result<SpreadStats> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("tail_fraction must be in (0, 1], got {tail_fraction}")));
    }
    let pairs = trajectory.spec.topology.adjacent_pairs();
    if pairs.is_empty() {
        return Err(Error::UnsupportedMetric("topology has no |d| = 1 connections".into()));
    }
    let len = trajectory.len();
    let tail = ((len as f64 * tail_fraction).ceil() as usize).clamp(1, len);
    let values: Vec<f64> = trajectory.phases[len - tail..]
        .iter()
        .flat_map(|p| pairs.iter().map(move |&(i, j)| (p[j] - p[i]).abs()))
        .collect();
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    Ok(SpreadStats { mean, std: var.sqrt(), count })
}

/// Idle-wave front measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveFit {
    /// Per-process arrival time of the front, relative to the disturbance.
    pub front_arrival: Vec<Option<f64>>,
    /// Processes per second.
    pub speed: f64,
    pub r_squared: f64,
}

impl WaveFit {
    pub fn reached(&self) -> usize {
        self.front_arrival.iter().flatten().count()
    }
}

/// Measures how fast the deviation caused by the disturbance at `source`
/// spreads.
///
/// A process's deviation is its departure from the free continuation of
/// its pre-disturbance motion, so spread already present before the event
/// does not count. Arrival is the first (interpolated) time the deviation
/// reaches `threshold`; the speed is the least-squares slope of index
/// distance from the source against arrival time.
pub fn measure_wave_speed(trajectory: &Trajectory, source: usize, threshold: f64) -> Result<WaveFit> {
    measure_wave_speed_within(trajectory, source, threshold, usize::MAX)
}

/// Like [`measure_wave_speed`] but only processes at most `max_distance`
/// away from the source enter the fit. Comparing runs over the same
/// stretch of processes matters when the front is not perfectly linear.
pub fn measure_wave_speed_within(
    trajectory: &Trajectory,
    source: usize,
    threshold: f64,
    max_distance: usize,
) -> Result<WaveFit> {
    let n = trajectory.n();
    if source >= n {
        return Err(Error::InvalidInput(format!("source {source} out of range for n = {n}")));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be positive, got {threshold}")));
    }
    let t_event = trajectory
        .events_applied
        .iter()
        .find(|e| e.event.process == source)
        .map(|e| e.t_applied)
        .ok_or_else(|| Error::InvalidInput(format!("no disturbance was applied to process {source}")))?;

    let times = &trajectory.times;
    // Last sample taken before the disturbance acted.
    let k0 = times.partition_point(|&t| t <= t_event).saturating_sub(1);
    let velocity: Vec<f64> = if k0 >= 1 {
        let dt = times[k0] - times[k0 - 1];
        (0..n).map(|i| (trajectory.phases[k0][i] - trajectory.phases[k0 - 1][i]) / dt).collect()
    } else {
        (0..n).map(|i| trajectory.spec.intrinsic_frequency(i)).collect()
    };
    let deviation = |k: usize, i: usize| {
        (trajectory.phases[k][i] - trajectory.phases[k0][i] - velocity[i] * (times[k] - times[k0])).abs()
    };

    let mut arrival = vec![None; n];
    arrival[source] = Some(0.0);
    for (i, slot) in arrival.iter_mut().enumerate() {
        if i == source || trajectory.spec.topology.index_distance(source, i) > max_distance {
            continue;
        }
        let mut prev = (times[k0].max(t_event), 0.0);
        for (k, &t) in times.iter().enumerate().skip(k0 + 1) {
            let d = deviation(k, i);
            if d >= threshold {
                let (tp, dp) = prev;
                let w = if d > dp { (threshold - dp) / (d - dp) } else { 1.0 };
                *slot = Some(tp + w * (t - tp) - t_event);
                break;
            }
            prev = (t, d);
        }
    }

    let points: Vec<(f64, f64)> = arrival
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|t| (t, trajectory.spec.topology.index_distance(source, i) as f64)))
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientSignal { reached: points.len() });
    }
    let (speed, r_squared) = linear_fit(&points);
    Ok(WaveFit { front_arrival: arrival, speed, r_squared })
}

/// Least-squares slope of y on x and the coefficient of determination.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    (slope, r2)
}
