//! Discrete-event oracle of bulk-synchronous compute-communicate processes.
//!
//! Each process repeats: compute for `t_comp` (stretched by contention),
//! then communicate. Process `i` completes iteration `k` once its own
//! compute phase and those of all partners `j` with `T_ij = 1` have ended
//! and the messages have travelled for `t_comm`:
//!
//! ```text
//! complete_i(k) = max_{j ∈ {i} ∪ N(i)} compute_end_j(k) + t_comm
//! ```
//!
//! and starts computing iteration `k + 1` at that instant. With a
//! saturating shared resource, a compute phase that starts while `c`
//! processes compute (itself included) lasts `t_comp · max(1, c / n_sat)`.
//! The duration is fixed when the phase starts, so a process that gets
//! ahead of its neighbours keeps the bandwidth advantage it found. Phases
//! starting at the same instant are admitted first come, first served in
//! process order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::metrics::{detect_sync, phase_spread};
use crate::noise::EventList;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Contention {
    #[default]
    None,
    /// Shared resource saturated by `n_sat` concurrently computing processes.
    Saturating { n_sat: usize },
}

impl Contention {
    fn stretch(&self, concurrent: usize) -> f64 {
        match *self {
            Contention::None => 1.0,
            Contention::Saturating { n_sat } => (concurrent as f64 / n_sat as f64).max(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BspSpec {
    pub n: usize,
    pub t_comp: f64,
    pub t_comm: f64,
    pub topology: Topology,
    pub contention: Contention,
    /// Disturbances, converted to extra compute work equal to their phase
    /// deficit: `deficit / 2π · (t_comp + t_comm)` seconds.
    pub events: EventList,
}

impl BspSpec {
    pub fn new(topology: Topology, t_comp: f64, t_comm: f64) -> Self {
        Self { n: topology.n(), t_comp, t_comm, topology, contention: Contention::None, events: EventList::empty() }
    }

    pub fn with_contention(mut self, contention: Contention) -> Self {
        self.contention = contention;
        self
    }

    pub fn with_events(mut self, events: EventList) -> Self {
        self.events = events;
        self
    }

    pub fn period(&self) -> f64 {
        self.t_comp + self.t_comm
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("bsp.n must be at least 2, got {}", self.n)));
        }
        if self.topology.n() != self.n {
            return Err(Error::Config("bsp topology dimension does not match n".into()));
        }
        if !(self.t_comp >= 0.0 && self.t_comm >= 0.0 && self.period() > 0.0 && self.period().is_finite()) {
            return Err(Error::Config("bsp.t_comp and bsp.t_comm must be non-negative with a positive sum".into()));
        }
        if let Contention::Saturating { n_sat } = self.contention {
            if n_sat < 1 {
                return Err(Error::Config("contention.n_sat must be at least 1".into()));
            }
        }
        self.events.validate(self.n, f64::INFINITY)
    }
}

/// Per-process timestamps; index `[process][k]` refers to iteration `k + 1`.
#[derive(Debug, Clone)]
pub struct BspTimeline {
    pub compute_start: Vec<Vec<f64>>,
    pub compute_end: Vec<Vec<f64>>,
    pub completion: Vec<Vec<f64>>,
    pub period: f64,
    pub topology: Topology,
}

impl BspTimeline {
    pub fn n(&self) -> usize {
        self.completion.len()
    }

    pub fn iterations(&self) -> usize {
        self.completion.first().map_or(0, Vec::len)
    }

    /// `max_i − min_i` of the completion times of iteration index `k`.
    pub fn stagger(&self, k: usize) -> f64 {
        let col: Vec<f64> = self.completion.iter().map(|c| c[k]).collect();
        phase_spread(&col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    ComputeEnd,
    Complete,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    kind: Kind,
    process: usize,
    iter: usize,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Min-heap on (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, time: f64, kind: Kind, process: usize, iter: usize) {
        self.seq += 1;
        self.heap.push(Scheduled { time, seq: self.seq, kind, process, iter });
    }

    fn pop_until(&mut self, t: f64, out: &mut Vec<Scheduled>) {
        while self.heap.peek().is_some_and(|e| e.time <= t) {
            out.push(self.heap.pop().unwrap());
        }
    }
}

/// Runs `iterations` compute-communicate cycles of every process.
pub fn simulate_bsp(spec: &BspSpec, iterations: usize) -> Result<BspTimeline> {
    spec.validate()?;
    if iterations < 1 {
        return Err(Error::InvalidInput("iterations must be at least 1".into()));
    }
    let n = spec.n;
    let period = spec.period();
    let topo = &spec.topology;
    // dependents[j] = processes whose completion waits on j.
    let mut dependents = vec![Vec::new(); n];
    for i in 0..n {
        dependents[i].push(i);
        for &j in topo.neighbors(i) {
            dependents[j].push(i);
        }
    }
    let mut pending: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut pending_at: Vec<Vec<f64>> = vec![Vec::new(); n];
    for ev in spec.events.events() {
        pending[ev.process].push(ev.disturbance.phase_deficit() / TAU * period);
        pending_at[ev.process].push(ev.t_start);
    }
    let mut next_pending = vec![0usize; n];

    let mut start = vec![vec![f64::NAN; iterations]; n];
    let mut end = vec![vec![f64::NAN; iterations]; n];
    let mut done = vec![vec![f64::NAN; iterations]; n];
    let mut computing = 0usize;
    let mut queue = Queue { heap: BinaryHeap::new(), seq: 0 };

    let tol = 1e-12 * period;
    let mut starters: Vec<(usize, usize)> = (0..n).map(|i| (i, 0)).collect();
    let mut t = 0.0;
    let mut batch = Vec::new();

    loop {
        // Phases starting at the same instant are admitted in index order,
        // each seeing the ones admitted before it.
        if !starters.is_empty() {
            starters.sort_unstable();
            for &(i, k) in &starters {
                computing += 1;
                let stretch = spec.contention.stretch(computing);
                let mut work = spec.t_comp;
                while next_pending[i] < pending[i].len() && pending_at[i][next_pending[i]] <= t + tol {
                    work += pending[i][next_pending[i]];
                    next_pending[i] += 1;
                }
                start[i][k] = t;
                queue.push(t + work * stretch, Kind::ComputeEnd, i, k);
            }
            starters.clear();
        }

        let Some(next) = queue.heap.peek().map(|e| e.time) else { break };
        t = next;
        batch.clear();
        queue.pop_until(t + tol, &mut batch);

        for ev in batch.iter().filter(|e| e.kind == Kind::ComputeEnd) {
            computing -= 1;
            end[ev.process][ev.iter] = ev.time;
        }
        for ev in batch.iter().filter(|e| e.kind == Kind::ComputeEnd) {
            let k = ev.iter;
            for &p in &dependents[ev.process] {
                if !done[p][k].is_nan() {
                    continue;
                }
                let deps = std::iter::once(p).chain(topo.neighbors(p).iter().copied());
                let latest = deps
                    .map(|j| end[j][k])
                    .try_fold(f64::NEG_INFINITY, |acc, e| (!e.is_nan()).then_some(acc.max(e)))
                    .unwrap_or(f64::NAN);
                if !latest.is_nan() {
                    // Mark as scheduled; overwritten with the real time below.
                    done[p][k] = f64::INFINITY;
                    queue.push(latest + spec.t_comm, Kind::Complete, p, k);
                }
            }
        }
        // Completions falling on this instant (zero message latency).
        queue.pop_until(t + tol, &mut batch);
        for ev in batch.iter().filter(|e| e.kind == Kind::Complete) {
            done[ev.process][ev.iter] = ev.time;
            if ev.iter + 1 < iterations {
                starters.push((ev.process, ev.iter + 1));
            }
        }
    }

    Ok(BspTimeline { compute_start: start, compute_end: end, completion: done, period, topology: topo.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Behaviour {
    Resync,
    Desync,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BothResync,
    BothDesync,
    Mismatch,
    Inconclusive,
}

/// Fraction of the run treated as steady state.
const TAIL: f64 = 0.1;

/// Lockstep restored (stagger below 1e-6 of a period over the tail) or a
/// persistent stagger above 1e-3 of a period.
pub fn classify_bsp(timeline: &BspTimeline) -> Behaviour {
    let iters = timeline.iterations();
    let tail = ((iters as f64 * TAIL).ceil() as usize).clamp(1, iters);
    let staggers: Vec<f64> = (iters - tail..iters).map(|k| timeline.stagger(k) / timeline.period).collect();
    if staggers.iter().all(|&s| s < 1e-6) {
        Behaviour::Resync
    } else if staggers.iter().all(|&s| s > 1e-3) {
        Behaviour::Desync
    } else {
        Behaviour::Inconclusive
    }
}

/// Resync when the spread falls below 1e-3 rad for ten periods; desync when
/// it never does and the tail spread is large and steady.
pub fn classify_model(trajectory: &Trajectory) -> Behaviour {
    let eps = 1e-3;
    let period = trajectory.spec.period();
    if detect_sync(trajectory, eps, 10.0 * period).is_some() {
        return Behaviour::Resync;
    }
    let len = trajectory.len();
    let tail = ((len as f64 * TAIL).ceil() as usize).clamp(1, len);
    let first = phase_spread(&trajectory.phases[len - tail]);
    let last = phase_spread(&trajectory.phases[len - 1]);
    if last > 10.0 * eps && (last - first).abs() <= 0.05 * last {
        Behaviour::Desync
    } else {
        Behaviour::Inconclusive
    }
}

/// Classifies both runs independently and reports whether they agree.
pub fn compare_with_model(timeline: &BspTimeline, trajectory: &Trajectory) -> Result<Verdict> {
    if timeline.n() != trajectory.n() {
        return Err(Error::InvalidInput(format!(
            "DES has {} processes, model has {}",
            timeline.n(),
            trajectory.n()
        )));
    }
    if !timeline.topology.same_structure(&trajectory.spec.topology) {
        return Err(Error::InvalidInput("DES and model topologies differ".into()));
    }
    Ok(match (classify_bsp(timeline), classify_model(trajectory)) {
        (Behaviour::Inconclusive, _) | (_, Behaviour::Inconclusive) => Verdict::Inconclusive,
        (Behaviour::Resync, Behaviour::Resync) => Verdict::BothResync,
        (Behaviour::Desync, Behaviour::Desync) => Verdict::BothDesync,
        _ => Verdict::Mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::DelayEvent;
    use crate::topology::DistanceSet;

    fn ring(n: usize) -> Topology {
        Topology::build_from_distances(n, &DistanceSet::periodic([1, -1])).unwrap()
    }

    #[test]
    fn lockstep_lattice() {
        let spec = BspSpec::new(ring(8), 0.8, 0.2);
        let tl = simulate_bsp(&spec, 50).unwrap();
        for i in 0..8 {
            for k in 0..50 {
                assert!((tl.completion[i][k] - (k + 1) as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn slowdown_triggers_idle_wave_that_dies_out() {
        let ev = EventList::new(vec![DelayEvent::slowdown(5, 0.0, TAU, 0.5)]);
        let spec = BspSpec::new(ring(18), 0.8, 0.2).with_events(ev);
        let tl = simulate_bsp(&spec, 40).unwrap();
        // Half a period of extra work on process 5.
        assert!((tl.completion[5][0] - 1.5).abs() < 1e-12);
        // Neighbours wait one hop later.
        assert!((tl.completion[7][0] - 1.0).abs() < 1e-12);
        assert!((tl.completion[7][1] - 2.5).abs() < 1e-12);
        assert!((tl.completion[8][2] - 3.5).abs() < 1e-12);
        assert!(tl.stagger(0) > 0.4);
        assert!(tl.stagger(39) < 1e-9);
        assert_eq!(classify_bsp(&tl), Behaviour::Resync);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = BspSpec::new(ring(4), 0.8, 0.2);
        assert!(simulate_bsp(&spec, 0).is_err());
        spec.contention = Contention::Saturating { n_sat: 0 };
        assert!(simulate_bsp(&spec, 5).is_err());
        let spec = BspSpec::new(ring(4), -1.0, 0.2);
        assert!(simulate_bsp(&spec, 5).is_err());
    }
}
