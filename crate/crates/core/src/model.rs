//! Domain types of the oscillator model and the right-hand side of
//!
//! ```text
//! dθ_i/dt = 2π/(t_comp + t_comm) + δω_i + ζ_i(t)
//!           + (v_p / N) · Σ_j T_ij · V(θ_j(t − τ) − θ_i(t))
//! ```
//!
//! Phases are never wrapped: the potentials other than `Kuramoto` are not
//! periodic, and a 2π slip between two processes is meaningful.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{DelaySpec, NoiseSpec};
use crate::potential::PotentialKind;
use crate::topology::Topology;

/// How the distance factor κ of the coupling strength is derived from the
/// communication distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    /// κ = Σ|d|: requests completed one by one.
    SumOfDistances,
    /// κ = max|d|: all requests grouped in a single wait-all.
    #[default]
    LongestDistance,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub n: usize,
    pub t_comp: f64,
    pub t_comm: f64,
    /// 1 for eager, 2 for rendezvous messaging.
    pub protocol_beta: u8,
    pub kappa_mode: KappaMode,
    pub potential: PotentialKind,
    pub topology: Topology,
    pub local_noise: NoiseSpec,
    pub interaction_delay: DelaySpec,
    /// Static per-process frequency deviations (rad/s); models load imbalance.
    pub freq_offsets: Option<Vec<f64>>,
    /// Explicit κ, required when the topology has no distance metadata.
    pub kappa: Option<f64>,
    /// Replaces β·κ/(t_comp + t_comm) outright, e.g. the global `K` of the
    /// classic Kuramoto model.
    pub coupling: Option<f64>,
}

impl ModelSpec {
    pub fn new(topology: Topology, t_comp: f64, t_comm: f64, potential: PotentialKind) -> Self {
        Self {
            n: topology.n(),
            t_comp,
            t_comm,
            protocol_beta: 1,
            kappa_mode: KappaMode::default(),
            potential,
            topology,
            local_noise: NoiseSpec::default(),
            interaction_delay: DelaySpec::default(),
            freq_offsets: None,
            kappa: None,
            coupling: None,
        }
    }

    pub fn with_beta(mut self, beta: u8) -> Self {
        self.protocol_beta = beta;
        self
    }

    pub fn with_kappa_mode(mut self, mode: KappaMode) -> Self {
        self.kappa_mode = mode;
        self
    }

    pub fn with_coupling(mut self, k: f64) -> Self {
        self.coupling = Some(k);
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn with_freq_offsets(mut self, offsets: Vec<f64>) -> Self {
        self.freq_offsets = Some(offsets);
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.local_noise = noise;
        self
    }

    pub fn with_delay(mut self, delay: DelaySpec) -> Self {
        self.interaction_delay = delay;
        self
    }

    /// Iteration time `t_comp + t_comm`.
    pub fn period(&self) -> f64 {
        self.t_comp + self.t_comm
    }

    /// Common intrinsic angular frequency 2π/(t_comp + t_comm).
    pub fn omega(&self) -> f64 {
        TAU / self.period()
    }

    /// Intrinsic frequency of process `i` including its static offset.
    pub fn intrinsic_frequency(&self, i: usize) -> f64 {
        self.omega() + self.freq_offsets.as_ref().map_or(0.0, |o| o[i])
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n < 1 {
            return cfg("model.n must be at least 1".into());
        }
        if !(self.t_comp >= 0.0 && self.t_comp.is_finite()) {
            return cfg(format!("model.t_comp must be non-negative, got {}", self.t_comp));
        }
        if !(self.t_comm >= 0.0 && self.t_comm.is_finite()) {
            return cfg(format!("model.t_comm must be non-negative, got {}", self.t_comm));
        }
        if !(self.period() > 0.0) {
            return cfg("model.t_comp + model.t_comm must be positive".into());
        }
        if !matches!(self.protocol_beta, 1 | 2) {
            return cfg(format!("model.protocol_beta must be 1 or 2, got {}", self.protocol_beta));
        }
        if self.topology.n() != self.n {
            return cfg(format!("topology dimension {} does not match model.n = {}", self.topology.n(), self.n));
        }
        self.potential.validate()?;
        if let Some(o) = &self.freq_offsets {
            if o.len() != self.n {
                return cfg(format!("model.freq_offsets has {} entries, expected {}", o.len(), self.n));
            }
            if o.iter().any(|x| !x.is_finite()) {
                return cfg("model.freq_offsets must be finite".into());
            }
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return cfg(format!("model.kappa must be non-negative, got {k}"));
            }
        }
        if let Some(k) = self.coupling {
            if !k.is_finite() {
                return cfg(format!("model.coupling must be finite, got {k}"));
            }
        }
        self.local_noise.validate(self.n)?;
        self.interaction_delay.validate()?;
        Ok(())
    }
}

/// Coupling strength `v_p = β·κ / (t_comp + t_comm)` in rad/s.
pub fn coupling_strength(spec: &ModelSpec) -> Result<f64> {
    if let Some(k) = spec.coupling {
        return Ok(k);
    }
    let kappa = match (spec.kappa, spec.topology.distances()) {
        (Some(k), _) => k,
        (None, Some(d)) => match spec.kappa_mode {
            KappaMode::SumOfDistances => d.kappa_sum(),
            KappaMode::LongestDistance => d.kappa_max(),
        },
        (None, None) => {
            return Err(Error::Config(
                "topology carries no communication distances; set model.kappa or model.coupling".into(),
            ))
        }
    };
    Ok(f64::from(spec.protocol_beta) * kappa / spec.period())
}

/// Bounded record of past `(t, θ)` samples for evaluating lagged phases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    samples: VecDeque<(f64, Vec<f64>)>,
}

impl History {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn earliest(&self) -> Option<f64> {
        self.samples.front().map(|s| s.0)
    }

    pub fn latest(&self) -> Option<f64> {
        self.samples.back().map(|s| s.0)
    }

    /// Appends a sample; earlier times are rejected. A second sample at the
    /// latest time records a jump: lookups before that instant see the old
    /// value as the left limit, lookups at or after it see the new one.
    pub fn push(&mut self, t: f64, theta: &[f64]) -> Result<()> {
        if let Some((last, prev)) = self.samples.back() {
            if t < *last {
                return Err(Error::InvalidInput(format!("history time {t} precedes latest {last}")));
            }
            if t == *last && prev.as_slice() == theta {
                return Ok(());
            }
        }
        self.samples.push_back((t, theta.to_vec()));
        Ok(())
    }

    /// Drops samples no longer needed to cover `span` seconds behind `now`.
    pub fn prune(&mut self, now: f64, span: f64) {
        let horizon = now - span;
        while self.samples.len() > 1 && self.samples[1].0 <= horizon {
            self.samples.pop_front();
        }
    }

    /// Linearly interpolated phases at time `t`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (first, last) = match (self.samples.front(), self.samples.back()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => return Err(Error::HistoryUnderrun { requested: t, available: f64::NAN }),
        };
        // Stage times computed as (t + h) - lag may overshoot by an ulp.
        let slack = 1e-12 * first.abs().max(last.abs()).max(1.0);
        if t < first - slack || t > last + slack {
            return Err(Error::HistoryUnderrun { requested: t, available: first });
        }
        let t = t.clamp(first, last);
        let idx = self.samples.partition_point(|s| s.0 <= t);
        if idx == self.samples.len() {
            out.copy_from_slice(&self.samples[idx - 1].1);
            return Ok(());
        }
        let (t0, a) = &self.samples[idx - 1];
        let (t1, b) = &self.samples[idx];
        let w = (t - t0) / (t1 - t0);
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = x + w * (y - x);
        }
        Ok(())
    }
}

/// A temporary intrinsic-frequency reduction of one process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSlowdown {
    pub process: usize,
    pub dfreq: f64,
    pub until: f64,
}

/// Integrated unknown: unwrapped phases at time `t`, plus what is needed to
/// evaluate lagged phases and in-flight slowdowns.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub t: f64,
    pub theta: Vec<f64>,
    pub history: History,
    pub slowdowns: Vec<ActiveSlowdown>,
}

impl PhaseState {
    pub fn new(t: f64, theta: Vec<f64>) -> Self {
        Self { t, theta, history: History::default(), slowdowns: Vec::new() }
    }

    pub fn synchronized(n: usize) -> Self {
        Self::new(0.0, vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    /// Seeds the lag history with the free-running past
    /// `θ_i(s) = θ_i(t) − ω_i·(t − s)` back to `t − span`.
    pub fn seed_free_running_history(&mut self, spec: &ModelSpec, span: f64) {
        self.history = History::default();
        if span > 0.0 {
            let past: Vec<f64> =
                self.theta.iter().enumerate().map(|(i, th)| th - spec.intrinsic_frequency(i) * span).collect();
            self.history.push(self.t - span, &past).expect("empty history accepts any time");
        }
        self.history.push(self.t, &self.theta).expect("monotone");
    }

    /// Total frequency reduction currently applied to each process.
    pub fn slowdown_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        for s in &self.slowdowns {
            v[s.process] += s.dfreq;
        }
        v
    }
}

/// The model-specific part of the right-hand side, with the coupling
/// strength resolved once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CouplingKernel<'a> {
    pub potential: PotentialKind,
    pub topology: &'a Topology,
    pub strength_per_n: f64,
}

impl<'a> CouplingKernel<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        let vp = coupling_strength(spec)?;
        Ok(Self { potential: spec.potential, topology: &spec.topology, strength_per_n: vp / spec.n as f64 })
    }

    pub fn is_active(&self) -> bool {
        self.strength_per_n != 0.0 && !self.topology.edges().is_empty()
    }

    /// `out[i] = base[i] + (v_p/N)·Σ_j T_ij·V(partner[j] − θ[i])`.
    #[inline]
    pub fn eval(&self, theta: &[f64], partner: &[f64], base: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let th = theta[i];
            let s: f64 = self.topology.neighbors(i).iter().map(|&j| self.potential.eval_unchecked(partner[j] - th)).sum();
            *o = base[i] + self.strength_per_n * s;
        }
    }
}

/// Evaluates dθ/dt for `state` with a given local-noise sample (rad/s per
/// oscillator). Active slowdowns in `state` are subtracted from the
/// intrinsic frequencies; lagged partner phases are read from the history.
pub fn rhs(state: &PhaseState, spec: &ModelSpec, noise_sample: &[f64]) -> Result<Vec<f64>> {
    let lag = spec.interaction_delay.fixed_lag().ok_or_else(|| {
        Error::InvalidInput("random interaction delay has no fixed lag; use rhs_with_lag".into())
    })?;
    rhs_with_lag(state, spec, noise_sample, lag)
}

/// As [`rhs`], with the interaction lag given explicitly.
pub fn rhs_with_lag(state: &PhaseState, spec: &ModelSpec, noise_sample: &[f64], lag: f64) -> Result<Vec<f64>> {
    let n = spec.n;
    if state.n() != n || noise_sample.len() != n {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: state {}, noise {}, model {n}",
            state.n(),
            noise_sample.len()
        )));
    }
    let kernel = CouplingKernel::new(spec)?;
    let slow = state.slowdown_vector();
    let base: Vec<f64> = (0..n).map(|i| spec.intrinsic_frequency(i) + noise_sample[i] - slow[i]).collect();
    let mut out = vec![0.0; n];
    if lag > 0.0 && kernel.is_active() {
        let mut partner = vec![0.0; n];
        state.history.interpolate(state.t - lag, &mut partner)?;
        kernel.eval(&state.theta, &partner, &base, &mut out);
    } else {
        kernel.eval(&state.theta, &state.theta, &base, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Boundary, DistanceSet};
    use approx::assert_relative_eq;

    fn ring(n: usize) -> Topology {
        Topology::build_from_distances(n, &DistanceSet::periodic([1, -1])).unwrap()
    }

    #[test]
    fn coupling_strength_cases() {
        let base = ModelSpec::new(ring(4), 0.7, 0.3, PotentialKind::Scalable);
        assert_relative_eq!(coupling_strength(&base).unwrap(), 1.0);
        assert_relative_eq!(coupling_strength(&base.clone().with_beta(2)).unwrap(), 2.0);

        let t = Topology::build_from_distances(6, &DistanceSet::periodic([1, -1, -2])).unwrap();
        let s = ModelSpec::new(t, 1.0, 0.0, PotentialKind::Scalable);
        assert_relative_eq!(coupling_strength(&s.clone().with_kappa_mode(KappaMode::SumOfDistances)).unwrap(), 4.0);
        assert_relative_eq!(coupling_strength(&s).unwrap(), 2.0);
    }

    #[test]
    fn coupling_needs_distances_or_kappa() {
        let t = Topology::build_all_to_all(3).unwrap();
        let s = ModelSpec::new(t, 1.0, 0.0, PotentialKind::Scalable);
        assert!(matches!(coupling_strength(&s), Err(Error::Config(_))));
        assert_relative_eq!(coupling_strength(&s.clone().with_kappa(3.0)).unwrap(), 3.0);
        assert_relative_eq!(coupling_strength(&s.with_coupling(0.25)).unwrap(), 0.25);
    }

    #[test]
    fn single_free_oscillator() {
        let s = ModelSpec::new(Topology::empty(1), 0.5, 0.5, PotentialKind::Scalable).with_kappa(0.0);
        let out = rhs(&PhaseState::new(0.0, vec![0.3]), &s, &[0.0]).unwrap();
        assert_relative_eq!(out[0], TAU);
    }

    #[test]
    fn equal_phases_give_intrinsic_frequency() {
        for topo in [ring(5), Topology::build_all_to_all(5).unwrap()] {
            let s = ModelSpec::new(topo, 0.8, 0.2, PotentialKind::Scalable).with_kappa(2.0);
            let out = rhs(&PhaseState::new(0.0, vec![1.25; 5]), &s, &[0.0; 5]).unwrap();
            for v in out {
                assert_relative_eq!(v, TAU);
            }
        }
    }

    #[test]
    fn three_ring_hand_evaluated() {
        let s = ModelSpec::new(ring(3), 1.0, 0.0, PotentialKind::Scalable);
        let out = rhs(&PhaseState::new(0.0, vec![0.0, 0.5, 1.0]), &s, &[0.0; 3]).unwrap();
        let expected = TAU + (0.5f64.tanh() + 1.0f64.tanh()) / 3.0;
        assert_relative_eq!(out[0], expected, max_relative = 1e-15);
    }

    #[test]
    fn validation_names_fields() {
        let s = ModelSpec::new(ring(3), -1.0, 0.5, PotentialKind::Scalable);
        assert!(s.validate().unwrap_err().to_string().contains("t_comp"));
        let s = ModelSpec::new(ring(3), 1.0, 0.0, PotentialKind::Scalable).with_beta(3);
        assert!(s.validate().unwrap_err().to_string().contains("protocol_beta"));
        let mut s = ModelSpec::new(ring(3), 1.0, 0.0, PotentialKind::Scalable);
        s.n = 4;
        assert!(s.validate().is_err());
        let s = ModelSpec::new(ring(3), 0.0, 0.0, PotentialKind::Scalable);
        assert!(s.validate().is_err());
    }

    #[test]
    fn history_interpolates_and_reports_underrun() {
        let mut h = History::default();
        h.push(0.0, &[0.0, 1.0]).unwrap();
        h.push(2.0, &[2.0, 5.0]).unwrap();
        let mut out = [0.0; 2];
        h.interpolate(0.5, &mut out).unwrap();
        assert_eq!(out, [0.5, 2.0]);
        h.interpolate(2.0, &mut out).unwrap();
        assert_eq!(out, [2.0, 5.0]);
        assert!(matches!(h.interpolate(-0.1, &mut out), Err(Error::HistoryUnderrun { .. })));
        assert!(h.push(1.0, &[0.0, 0.0]).is_err());
        h.push(3.0, &[3.0, 6.0]).unwrap();
        h.prune(3.0, 1.0);
        assert_eq!(h.earliest(), Some(2.0));

        // A jump at t = 3 keeps both one-sided values.
        h.push(3.0, &[1.0, 6.0]).unwrap();
        h.push(4.0, &[2.0, 7.0]).unwrap();
        h.interpolate(2.5, &mut out).unwrap();
        assert_eq!(out, [2.5, 5.5]);
        h.interpolate(3.0, &mut out).unwrap();
        assert_eq!(out, [1.0, 6.0]);
        h.interpolate(3.5, &mut out).unwrap();
        assert_eq!(out, [1.5, 6.5]);
    }

    #[test]
    fn lagged_rhs_reads_history() {
        let t = Topology::build_from_distances(2, &DistanceSet::new([1], Boundary::Open)).unwrap();
        let s = ModelSpec::new(t, 1.0, 0.0, PotentialKind::Scalable)
            .with_coupling(2.0)
            .with_delay(DelaySpec::Fixed { tau: 0.5 });
        let mut st = PhaseState::new(1.0, vec![0.0, 0.0]);
        assert!(matches!(rhs(&st, &s, &[0.0; 2]), Err(Error::HistoryUnderrun { .. })));
        st.history.push(0.0, &[0.0, 0.0]).unwrap();
        st.history.push(1.0, &[0.0, 2.0]).unwrap();
        let out = rhs(&st, &s, &[0.0; 2]).unwrap();
        // Partner phase at t - 0.5 is 1.0.
        assert_relative_eq!(out[0], TAU + 1.0f64.tanh());
        assert_relative_eq!(out[1], TAU);
    }
}
