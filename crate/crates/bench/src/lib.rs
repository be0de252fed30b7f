//! Fixtures shared by the benchmarks.

use idlewave::{
    DelayEvent, DistanceSet, EventList, IntegratorConfig, ModelSpec, PhaseState, PotentialKind, Topology,
};

/// A kicked ring of `n` processes with next-neighbour coupling.
pub fn kicked_ring(n: usize, potential: PotentialKind) -> (ModelSpec, PhaseState, EventList) {
    let topo = Topology::build_from_distances(n, &DistanceSet::periodic([1, -1])).expect("valid ring");
    let spec = ModelSpec::new(topo, 0.8, 0.2, potential);
    let events = EventList::new(vec![DelayEvent::kick(5.min(n - 1), 0.0, -1.0)]);
    (spec, PhaseState::synchronized(n), events)
}

pub fn short_run(t_end: f64) -> IntegratorConfig {
    IntegratorConfig::new(t_end, 1.0)
}
