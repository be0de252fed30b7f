//! Time integration of the oscillator system.
//!
//! The production path is an adaptive Dormand-Prince 5(4) pair with FSAL
//! and a weighted RMS error norm. A classical fixed-step RK4 shares the same
//! driver and serves as a verification reference.
//!
//! The driver splits the horizon at every point where the right-hand side
//! changes discontinuously (events, noise and lag segment boundaries,
//! slowdown expiries) and at output sample times, so no step ever crosses
//! one of them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CouplingKernel, History, ModelSpec, PhaseState};
use crate::noise::{apply_event, sample_local_noise, DelayEvent, EventList, NoiseSpec};

const NOISE_STREAM: u64 = 1;
const DELAY_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "IntegratorConfig::default_rtol")]
    pub rtol: f64,
    #[serde(default = "IntegratorConfig::default_atol")]
    pub atol: f64,
    #[serde(default = "IntegratorConfig::default_h_init")]
    pub h_init: f64,
    #[serde(default = "IntegratorConfig::default_h_max")]
    pub h_max: f64,
    pub sample_dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
}

impl IntegratorConfig {
    fn default_rtol() -> f64 {
        1e-6
    }
    fn default_atol() -> f64 {
        1e-9
    }
    fn default_h_init() -> f64 {
        1e-3
    }
    fn default_h_max() -> f64 {
        1.0
    }

    pub fn new(t_end: f64, sample_dt: f64) -> Self {
        Self {
            rtol: Self::default_rtol(),
            atol: Self::default_atol(),
            h_init: Self::default_h_init(),
            h_max: Self::default_h_max(),
            sample_dt,
            t_end,
            seed: 0,
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self.h_init = self.h_init.min(h_max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("integrator.{name} must be positive, got {v}")))
            }
        };
        pos("rtol", self.rtol)?;
        pos("atol", self.atol)?;
        pos("h_init", self.h_init)?;
        pos("h_max", self.h_max)?;
        pos("sample_dt", self.sample_dt)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("integrator.t_end must be non-negative, got {}", self.t_end)));
        }
        if self.h_init > self.h_max {
            return Err(Error::Config(format!(
                "integrator.h_init ({}) exceeds integrator.h_max ({})",
                self.h_init, self.h_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedEvent {
    pub event: DelayEvent,
    pub t_applied: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evals: u64,
    /// Lagged-phase lookups in the history buffer.
    pub history_lookups: u64,
}

/// Phases sampled every `sample_dt` from the initial time to `t_end`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub phases: Vec<Vec<f64>>,
    pub events_applied: Vec<AppliedEvent>,
    pub spec: ModelSpec,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn final_phases(&self) -> &[f64] {
        self.phases.last().expect("trajectory has at least one sample")
    }

    /// Phases at `t`, linearly interpolated between samples.
    pub fn phases_at(&self, t: f64) -> Result<Vec<f64>> {
        if self.is_empty() || t < self.t_start() || t > self.t_end() {
            return Err(Error::InvalidInput(format!("time {t} outside trajectory range")));
        }
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == self.len() {
            return Ok(self.phases[idx - 1].clone());
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        Ok(self.phases[idx - 1].iter().zip(&self.phases[idx]).map(|(a, b)| a + w * (b - a)).collect())
    }
}

/// Evaluation context shared by the stepping schemes.
struct Ctx<'a> {
    kernel: CouplingKernel<'a>,
    /// Intrinsic frequency plus noise minus slowdowns, per process.
    base: Vec<f64>,
    lag: f64,
    partner: Vec<f64>,
    /// Bumped whenever `base` or `lag` changes; invalidates FSAL reuse.
    version: u64,
    stats: IntegrationStats,
}

impl Ctx<'_> {
    fn eval(&mut self, history: &History, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.stats.rhs_evals += 1;
        if self.lag > 0.0 && self.kernel.is_active() {
            self.stats.history_lookups += 1;
            history.interpolate(t - self.lag, &mut self.partner)?;
            self.kernel.eval(y, &self.partner, &self.base, out);
        } else {
            self.kernel.eval(y, y, &self.base, out);
        }
        Ok(())
    }

    /// Largest step that keeps every lagged lookup inside recorded history.
    fn lag_cap(&self) -> f64 {
        if self.lag > 0.0 && self.kernel.is_active() {
            self.lag
        } else {
            f64::INFINITY
        }
    }
}

trait Scheme {
    /// Advances `state` from `state.t` to exactly `t1`.
    fn advance(&mut self, ctx: &mut Ctx, state: &mut PhaseState, t1: f64, max_lag: f64) -> Result<()>;
    /// Called after a disturbance has been applied.
    fn restart(&mut self);
}

fn commit_step(state: &mut PhaseState, t: f64, y: &[f64], max_lag: f64) -> Result<()> {
    state.t = t;
    state.theta.copy_from_slice(y);
    if max_lag > 0.0 {
        state.history.push(t, y)?;
        state.history.prune(t, max_lag);
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

struct DormandPrince {
    rtol: f64,
    atol: f64,
    h_init: f64,
    h_max: f64,
    h_min: f64,
    h: f64,
    k: [Vec<f64>; 7],
    fsal: Option<u64>,
    tmp: Vec<f64>,
    y5: Vec<f64>,
}

impl DormandPrince {
    fn new(cfg: &IntegratorConfig, n: usize) -> Self {
        Self {
            rtol: cfg.rtol,
            atol: cfg.atol,
            h_init: cfg.h_init,
            h_max: cfg.h_max,
            h_min: 1e-14 * cfg.t_end,
            h: cfg.h_init,
            k: std::array::from_fn(|_| vec![0.0; n]),
            fsal: None,
            tmp: vec![0.0; n],
            y5: vec![0.0; n],
        }
    }

    /// One trial step of size `h`; returns the error norm, leaving the
    /// 5th-order solution in `y5` and its derivative in `k[6]`.
    fn trial(&mut self, ctx: &mut Ctx, state: &PhaseState, h: f64) -> Result<f64> {
        let t = state.t;
        let y = &state.theta;
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        ctx.eval(&state.history, t + C2 * h, tmp, k2)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        ctx.eval(&state.history, t + C3 * h, tmp, k3)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        ctx.eval(&state.history, t + C4 * h, tmp, k4)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        ctx.eval(&state.history, t + C5 * h, tmp, k5)?;
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        ctx.eval(&state.history, t + h, tmp, k6)?;
        let y5 = &mut self.y5;
        for i in 0..n {
            y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        ctx.eval(&state.history, t + h, y5, k7)?;

        // Relative error is measured against each phase's offset from the
        // ensemble mean: unwrapped phases grow without bound, and only their
        // differences enter the dynamics.
        let mean0 = y.iter().sum::<f64>() / n as f64;
        let mean1 = y5.iter().sum::<f64>() / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let err = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = self.atol + self.rtol * (y[i] - mean0).abs().max((y5[i] - mean1).abs());
            acc += (err / scale).powi(2);
        }
        Ok((acc / n.max(1) as f64).sqrt())
    }
}

impl Scheme for DormandPrince {
    fn advance(&mut self, ctx: &mut Ctx, state: &mut PhaseState, t1: f64, max_lag: f64) -> Result<()> {
        while state.t < t1 {
            if self.fsal != Some(ctx.version) {
                let (head, _) = self.k.split_at_mut(1);
                ctx.eval(&state.history, state.t, &state.theta, &mut head[0])?;
                self.fsal = Some(ctx.version);
            }
            let remaining = t1 - state.t;
            let mut h = self.h.min(self.h_max).min(ctx.lag_cap());
            let mut last = false;
            // Take the remainder in one step when it is within reach, to
            // avoid leaving a sliver before the boundary.
            if h >= remaining || remaining - h < 1e-3 * h {
                if remaining <= self.h_max.min(ctx.lag_cap()) {
                    h = remaining;
                    last = true;
                } else {
                    h = 0.5 * remaining;
                }
            }
            if h < self.h_min {
                return Err(Error::Stiffness { t: state.t, h });
            }
            let err = self.trial(ctx, state, h)?;
            if err <= 1.0 {
                let factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
                let suggested = h * factor;
                self.h = if last { self.h.max(suggested) } else { suggested };
                let t_new = if last { t1 } else { state.t + h };
                let y5 = std::mem::take(&mut self.y5);
                commit_step(state, t_new, &y5, max_lag)?;
                self.y5 = y5;
                self.k.swap(0, 6);
                ctx.stats.accepted_steps += 1;
            } else {
                ctx.stats.rejected_steps += 1;
                self.h = h * (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                if self.h < self.h_min {
                    return Err(Error::Stiffness { t: state.t, h: self.h });
                }
            }
        }
        Ok(())
    }

    fn restart(&mut self) {
        self.h = self.h_init;
        self.fsal = None;
    }
}

struct ClassicRk4 {
    h: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Scheme for ClassicRk4 {
    fn advance(&mut self, ctx: &mut Ctx, state: &mut PhaseState, t1: f64, max_lag: f64) -> Result<()> {
        let n = state.n();
        while state.t < t1 {
            let remaining = t1 - state.t;
            let h_step = self.h.min(ctx.lag_cap());
            let (h, last) = if remaining <= h_step {
                (remaining, true)
            } else if remaining <= h_step * (1.0 + 1e-9) {
                (0.5 * remaining, false)
            } else {
                (h_step, false)
            };
            let t = state.t;
            let [k1, k2, k3, k4] = &mut self.k;
            let tmp = &mut self.tmp;
            let y = &state.theta;
            ctx.eval(&state.history, t, y, k1)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            ctx.eval(&state.history, t + 0.5 * h, tmp, k2)?;
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            ctx.eval(&state.history, t + 0.5 * h, tmp, k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            ctx.eval(&state.history, t + h, tmp, k4)?;
            for i in 0..n {
                tmp[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let t_new = if last { t1 } else { t + h };
            let y_new = std::mem::take(&mut self.tmp);
            commit_step(state, t_new, &y_new, max_lag)?;
            self.tmp = y_new;
            ctx.stats.accepted_steps += 1;
        }
        Ok(())
    }

    fn restart(&mut self) {}
}

/// Piecewise-constant local noise.
struct NoiseProcess<'a> {
    spec: &'a NoiseSpec,
    rng: ChaCha8Rng,
    segment_len: f64,
    values: Vec<f64>,
}

/// Runs the adaptive Dormand-Prince integration.
pub fn integrate(spec: &ModelSpec, init: &PhaseState, events: &EventList, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let scheme = DormandPrince::new(cfg, spec.n);
    drive(spec, init, events, cfg, scheme)
}

/// Classical fixed-step RK4 through the same driver; a verification
/// reference for [`integrate`]. Tolerances in `cfg` are ignored.
pub fn reference_integrate(
    spec: &ModelSpec,
    init: &PhaseState,
    events: &EventList,
    cfg: &IntegratorConfig,
    h: f64,
) -> Result<Trajectory> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("reference step must be positive, got {h}")));
    }
    cfg.validate()?;
    let n = spec.n;
    let scheme = ClassicRk4 { h, k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n] };
    drive(spec, init, events, cfg, scheme)
}

fn drive<S: Scheme>(
    spec: &ModelSpec,
    init: &PhaseState,
    events: &EventList,
    cfg: &IntegratorConfig,
    mut scheme: S,
) -> Result<Trajectory> {
    spec.validate()?;
    let n = spec.n;
    if init.n() != n {
        return Err(Error::InvalidInput(format!("initial state has {} phases, model has {n}", init.n())));
    }
    let t0 = init.t;
    let t_end = cfg.t_end;
    if t_end < t0 {
        return Err(Error::Config(format!("integrator.t_end {t_end} precedes initial time {t0}")));
    }
    events.validate(n, t_end)?;
    if let Some(ev) = events.events().iter().find(|e| e.t_start < t0) {
        return Err(Error::Config(format!("event at t={} precedes initial time {t0}", ev.t_start)));
    }

    let kernel = CouplingKernel::new(spec)?;
    let max_lag = spec.interaction_delay.max_lag();
    let mut state = init.clone();
    if max_lag > 0.0 {
        if state.history.is_empty() {
            state.seed_free_running_history(spec, max_lag);
        } else if state.history.earliest().is_none_or(|e| e > t0 - max_lag) || state.history.latest() != Some(t0) {
            return Err(Error::Config(format!(
                "initial history does not cover the maximum lag {max_lag} behind t={t0}"
            )));
        }
    }

    let mut noise = NoiseProcess {
        spec: &spec.local_noise,
        rng: stream_rng(cfg.seed, NOISE_STREAM),
        segment_len: spec.local_noise.segment_len.unwrap_or(spec.period()),
        values: vec![0.0; n],
    };
    let mut delay_rng = stream_rng(cfg.seed, DELAY_STREAM);
    let delay_segment = spec.interaction_delay.segment_len();

    let fixed_lag = spec.interaction_delay.fixed_lag().unwrap_or(0.0);
    let mut ctx = Ctx { kernel, base: vec![0.0; n], lag: fixed_lag, partner: vec![0.0; n], version: 0, stats: Default::default() };

    let eps = 1e-12 * t_end.abs().max(1.0);
    let mut times = Vec::new();
    let mut phases = Vec::new();
    let mut applied = Vec::new();
    let mut next_event = 0usize;
    let mut sample_k: u64 = 0;
    let mut noise_k: u64 = 0;
    let mut delay_k: u64 = 0;
    let noise_active = !noise.spec.is_none();

    let refresh_base = |ctx: &mut Ctx, state: &PhaseState, noise: &[f64]| {
        let slow = state.slowdown_vector();
        for i in 0..n {
            ctx.base[i] = spec.intrinsic_frequency(i) + noise[i] - slow[i];
        }
        ctx.version += 1;
    };

    loop {
        let t = state.t;
        let mut base_dirty = times.is_empty();

        // Output sample (before any disturbance at the same instant).
        let sample_t = t0 + sample_k as f64 * cfg.sample_dt;
        if sample_t <= t + eps {
            times.push(if (sample_t - t).abs() <= eps { sample_t } else { t });
            phases.push(state.theta.clone());
            sample_k += 1;
        } else if t >= t_end - eps {
            // Final sample when t_end is not a multiple of sample_dt.
            times.push(t_end);
            phases.push(state.theta.clone());
        }

        // Segment boundaries.
        if noise_active && t0 + noise_k as f64 * noise.segment_len <= t + eps {
            noise.values = sample_local_noise(noise.spec, &mut noise.rng, n);
            noise_k += 1;
            base_dirty = true;
        }
        if let Some(seg) = delay_segment {
            if t0 + delay_k as f64 * seg <= t + eps {
                ctx.lag = spec.interaction_delay.sample(&mut delay_rng);
                delay_k += 1;
                ctx.version += 1;
            }
        }

        // Expired slowdowns.
        let before = state.slowdowns.len();
        state.slowdowns.retain(|s| s.until > t + eps);
        base_dirty |= state.slowdowns.len() != before;

        // Disturbances.
        let mut disturbed = false;
        while let Some(ev) = events.events().get(next_event) {
            if ev.t_start > t + eps {
                break;
            }
            let at_event = DelayEvent { t_start: state.t, ..*ev };
            state = apply_event(&state, &at_event)?;
            if max_lag > 0.0 {
                state.history.push(state.t, &state.theta)?;
            }
            applied.push(AppliedEvent { event: *ev, t_applied: state.t });
            next_event += 1;
            disturbed = true;
        }
        if disturbed {
            base_dirty = true;
            scheme.restart();
        }
        if base_dirty {
            refresh_base(&mut ctx, &state, &noise.values);
        }

        if t >= t_end - eps {
            break;
        }

        let mut target = t_end;
        target = target.min(t0 + sample_k as f64 * cfg.sample_dt);
        if let Some(ev) = events.events().get(next_event) {
            target = target.min(ev.t_start);
        }
        if noise_active {
            target = target.min(t0 + noise_k as f64 * noise.segment_len);
        }
        if let Some(seg) = delay_segment {
            target = target.min(t0 + delay_k as f64 * seg);
        }
        for s in &state.slowdowns {
            target = target.min(s.until);
        }
        // Snap onto t_end when it is numerically indistinguishable.
        if t_end - target <= eps {
            target = t_end;
        }
        scheme.advance(&mut ctx, &mut state, target, max_lag)?;
    }

    Ok(Trajectory { times, phases, events_applied: applied, spec: spec.clone(), stats: ctx.stats })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
