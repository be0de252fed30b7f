//! Stochastic terms and one-off disturbances.
//!
//! Local noise ζ_i(t) and the interaction lag τ(t) are piecewise constant
//! over segments, resampled at every segment boundary. Disturbances only
//! ever set a process back: a kick removes phase, a slowdown removes
//! frequency for a while.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActiveSlowdown, PhaseState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseDistribution {
    #[default]
    None,
    Gaussian {
        std: f64,
    },
    Uniform {
        halfwidth: f64,
    },
}

/// Process-local frequency jitter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub distribution: NoiseDistribution,
    /// Resample interval in seconds; one iteration when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_len: Option<f64>,
    /// Restricts the noise to these processes; all when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processes: Option<Vec<usize>>,
}

impl NoiseSpec {
    pub fn gaussian(std: f64) -> Self {
        Self { distribution: NoiseDistribution::Gaussian { std }, ..Self::default() }
    }

    pub fn uniform(halfwidth: f64) -> Self {
        Self { distribution: NoiseDistribution::Uniform { halfwidth }, ..Self::default() }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.distribution, NoiseDistribution::None)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self.distribution {
            NoiseDistribution::Gaussian { std } if !(std >= 0.0 && std.is_finite()) => {
                return Err(Error::Config(format!("noise.std must be non-negative, got {std}")))
            }
            NoiseDistribution::Uniform { halfwidth } if !(halfwidth >= 0.0 && halfwidth.is_finite()) => {
                return Err(Error::Config(format!("noise.halfwidth must be non-negative, got {halfwidth}")))
            }
            _ => {}
        }
        if let Some(len) = self.segment_len {
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::Config(format!("noise.segment_len must be positive, got {len}")));
            }
        }
        if let Some(p) = &self.processes {
            if let Some(&bad) = p.iter().find(|&&i| i >= n) {
                return Err(Error::Config(format!("noise.processes index {bad} out of range for n = {n}")));
            }
        }
        Ok(())
    }
}

/// Draws one segment of local noise: independent values per oscillator,
/// zero for disabled processes and for `NoiseDistribution::None`.
pub fn sample_local_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let enabled = |i: usize| spec.processes.as_ref().is_none_or(|p| p.contains(&i));
    match spec.distribution {
        NoiseDistribution::None => {}
        NoiseDistribution::Gaussian { std } => {
            if std > 0.0 {
                let d = Normal::new(0.0, std).expect("validated std");
                for (i, o) in out.iter_mut().enumerate() {
                    let v = d.sample(rng);
                    if enabled(i) {
                        *o = v;
                    }
                }
            }
        }
        NoiseDistribution::Uniform { halfwidth } => {
            if halfwidth > 0.0 {
                let d = Uniform::new_inclusive(-halfwidth, halfwidth).expect("validated halfwidth");
                for (i, o) in out.iter_mut().enumerate() {
                    let v = d.sample(rng);
                    if enabled(i) {
                        *o = v;
                    }
                }
            }
        }
    }
    out
}

/// Interaction lag τ(t), uniform across edges.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelaySpec {
    #[default]
    None,
    Fixed {
        tau: f64,
    },
    RandomUniform {
        max_tau: f64,
        segment_len: f64,
    },
}

impl DelaySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DelaySpec::None => Ok(()),
            DelaySpec::Fixed { tau } if tau >= 0.0 && tau.is_finite() => Ok(()),
            DelaySpec::Fixed { tau } => Err(Error::Config(format!("delay.tau must be non-negative, got {tau}"))),
            DelaySpec::RandomUniform { max_tau, segment_len } => {
                if !(max_tau >= 0.0 && max_tau.is_finite()) {
                    return Err(Error::Config(format!("delay.max_tau must be non-negative, got {max_tau}")));
                }
                if !(segment_len > 0.0 && segment_len.is_finite()) {
                    return Err(Error::Config(format!("delay.segment_len must be positive, got {segment_len}")));
                }
                Ok(())
            }
        }
    }

    /// Largest lag the history must cover.
    pub fn max_lag(&self) -> f64 {
        match *self {
            DelaySpec::None => 0.0,
            DelaySpec::Fixed { tau } => tau,
            DelaySpec::RandomUniform { max_tau, .. } => max_tau,
        }
    }

    /// The lag when it is deterministic.
    pub fn fixed_lag(&self) -> Option<f64> {
        match *self {
            DelaySpec::None => Some(0.0),
            DelaySpec::Fixed { tau } => Some(tau),
            DelaySpec::RandomUniform { .. } => None,
        }
    }

    pub fn segment_len(&self) -> Option<f64> {
        match *self {
            DelaySpec::RandomUniform { segment_len, .. } => Some(segment_len),
            _ => None,
        }
    }

    /// Draws the lag for one segment.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DelaySpec::RandomUniform { max_tau, .. } if max_tau > 0.0 => rng.random_range(0.0..=max_tau),
            other => other.fixed_lag().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    /// Instantaneous phase setback by `|dtheta|`; `dtheta <= 0`.
    PhaseKick { dtheta: f64 },
    /// Intrinsic frequency reduced by `dfreq` rad/s for `duration` seconds.
    SlowDown { dfreq: f64, duration: f64 },
}

impl Disturbance {
    /// Total phase deficit the disturbance eventually causes on a free
    /// oscillator.
    pub fn phase_deficit(&self) -> f64 {
        match *self {
            Disturbance::PhaseKick { dtheta } => dtheta.abs(),
            Disturbance::SlowDown { dfreq, duration } => dfreq * duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayEvent {
    pub process: usize,
    pub t_start: f64,
    pub disturbance: Disturbance,
}

impl DelayEvent {
    pub fn kick(process: usize, t_start: f64, dtheta: f64) -> Self {
        Self { process, t_start, disturbance: Disturbance::PhaseKick { dtheta } }
    }

    pub fn slowdown(process: usize, t_start: f64, dfreq: f64, duration: f64) -> Self {
        Self { process, t_start, disturbance: Disturbance::SlowDown { dfreq, duration } }
    }
}

/// Disturbances ordered by start time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventList(Vec<DelayEvent>);

impl EventList {
    pub fn new(events: Vec<DelayEvent>) -> Self {
        Self(events)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[DelayEvent] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, n: usize, t_end: f64) -> Result<()> {
        for (k, ev) in self.0.iter().enumerate() {
            if ev.process >= n {
                return Err(Error::Config(format!("events[{k}].process {} out of range for n = {n}", ev.process)));
            }
            if !(ev.t_start >= 0.0 && ev.t_start <= t_end) {
                return Err(Error::Config(format!(
                    "events[{k}].t_start {} outside [0, {t_end}]",
                    ev.t_start
                )));
            }
            if k > 0 && ev.t_start < self.0[k - 1].t_start {
                return Err(Error::Config(format!("events[{k}] is not sorted by t_start")));
            }
            match ev.disturbance {
                Disturbance::PhaseKick { dtheta } if !(dtheta <= 0.0 && dtheta.is_finite()) => {
                    return Err(Error::Config(format!(
                        "events[{k}].dtheta must be <= 0 (a process can only fall behind), got {dtheta}"
                    )))
                }
                Disturbance::SlowDown { dfreq, duration }
                    if !(dfreq >= 0.0 && dfreq.is_finite() && duration >= 0.0 && duration.is_finite()) =>
                {
                    return Err(Error::Config(format!(
                        "events[{k}] slowdown needs dfreq >= 0 and duration >= 0, got {dfreq}, {duration}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Applies a disturbance at the current state time.
pub fn apply_event(state: &PhaseState, ev: &DelayEvent) -> Result<PhaseState> {
    if ev.process >= state.n() {
        return Err(Error::InvalidInput(format!("event process {} out of range for n = {}", ev.process, state.n())));
    }
    if (ev.t_start - state.t).abs() > 1e-9 * state.t.abs().max(1.0) {
        return Err(Error::InvalidInput(format!("event at t={} applied to state at t={}", ev.t_start, state.t)));
    }
    let mut next = state.clone();
    match ev.disturbance {
        Disturbance::PhaseKick { dtheta } => next.theta[ev.process] -= dtheta.abs(),
        Disturbance::SlowDown { dfreq, duration } => {
            if dfreq > 0.0 && duration > 0.0 {
                next.slowdowns.push(ActiveSlowdown { process: ev.process, dfreq, until: state.t + duration });
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn none_and_zero_std_are_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_local_noise(&NoiseSpec::default(), &mut rng, 4), vec![0.0; 4]);
        assert_eq!(sample_local_noise(&NoiseSpec::gaussian(0.0), &mut rng, 4), vec![0.0; 4]);
        assert_eq!(sample_local_noise(&NoiseSpec::uniform(0.0), &mut rng, 4), vec![0.0; 4]);
    }

    #[test]
    fn gaussian_sample_std() {
        let s = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = NoiseSpec::gaussian(s);
        let xs: Vec<f64> = (0..10_000).flat_map(|_| sample_local_noise(&spec, &mut rng, 10)).collect();
        assert_eq!(xs.len(), 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var.sqrt() - s).abs() < 0.02 * s, "sample std {}", var.sqrt());
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn uniform_within_halfwidth_and_process_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = NoiseSpec { processes: Some(vec![1, 3]), ..NoiseSpec::uniform(0.5) };
        for _ in 0..100 {
            let v = sample_local_noise(&spec, &mut rng, 4);
            assert_eq!((v[0], v[2]), (0.0, 0.0));
            assert!(v.iter().all(|x| x.abs() <= 0.5));
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let spec = NoiseSpec::gaussian(1.0);
        let a = sample_local_noise(&spec, &mut ChaCha8Rng::seed_from_u64(42), 8);
        let b = sample_local_noise(&spec, &mut ChaCha8Rng::seed_from_u64(42), 8);
        assert_eq!(a, b);
    }

    #[test]
    fn kick_is_local() {
        let st = PhaseState::new(2.0, (0..40).map(|i| i as f64 * 0.1).collect());
        let next = apply_event(&st, &DelayEvent::kick(5, 2.0, -1.0)).unwrap();
        for i in 0..40 {
            let expect = if i == 5 { st.theta[i] - 1.0 } else { st.theta[i] };
            assert_eq!(next.theta[i], expect);
        }
    }

    #[test]
    fn slowdown_registers() {
        let st = PhaseState::new(1.0, vec![0.0; 3]);
        let next = apply_event(&st, &DelayEvent::slowdown(2, 1.0, 3.0, 0.5)).unwrap();
        assert_eq!(next.theta, st.theta);
        assert_eq!(next.slowdowns, vec![ActiveSlowdown { process: 2, dfreq: 3.0, until: 1.5 }]);
        assert_eq!(next.slowdown_vector(), vec![0.0, 0.0, 3.0]);
    }

    #[test]
    fn event_errors() {
        let st = PhaseState::new(1.0, vec![0.0; 3]);
        assert!(apply_event(&st, &DelayEvent::kick(3, 1.0, -1.0)).is_err());
        assert!(apply_event(&st, &DelayEvent::kick(0, 2.0, -1.0)).is_err());
        let bad = EventList::new(vec![DelayEvent::kick(0, 1.0, 0.5)]);
        assert!(bad.validate(3, 10.0).is_err());
        let unsorted = EventList::new(vec![DelayEvent::kick(0, 2.0, -0.5), DelayEvent::kick(1, 1.0, -0.5)]);
        assert!(unsorted.validate(3, 10.0).is_err());
        let late = EventList::new(vec![DelayEvent::kick(0, 11.0, -0.5)]);
        assert!(late.validate(3, 10.0).is_err());
    }
}
