use idlewave::des::{classify_bsp, compare_with_model, simulate_bsp, Behaviour, BspSpec, Contention, Verdict};
use idlewave::*;

fn ring(n: usize) -> Topology {
    Topology::build_from_distances(n, &DistanceSet::periodic(vec![1, -1])).unwrap()
}

#[test]
fn idle_wave_travels_one_hop_per_iteration_and_dies_out() {
    let n = 16;
    let events = EventList::new(vec![DelayEvent::slowdown(5, 0.0, 0.5, 2.0)]);
    let spec = BspSpec::new(ring(n), 0.8, 0.2).with_events(events);
    let tl = simulate_bsp(&spec, 60).unwrap();
    // A deficit of 1 rad is 1/(2 pi) of a period of extra work. Neighbours
    // wait on the same iteration, so hop h is late from iteration h - 1.
    let extra = 1.0 / std::f64::consts::TAU;
    let delayed = |i: usize, k: usize| tl.completion[i][k] - (k + 1) as f64 * spec.period();
    for hop in 0..6usize {
        for i in [5 + hop, 5 - hop.min(5)] {
            for k in 0..60 {
                let want = if k + 1 >= hop { extra } else { 0.0 };
                assert!((delayed(i, k) - want).abs() < 1e-12, "process {i}, iteration {k}");
            }
        }
    }
    // The wave has swept the ring: everyone runs the same shifted lattice.
    let last = 59;
    let shift = delayed(0, last);
    assert!((shift - extra).abs() < 1e-12);
    assert!(tl.stagger(last) < 1e-12);
    assert_eq!(classify_bsp(&tl), Behaviour::Resync);
}

#[test]
fn contention_keeps_a_stable_stagger() {
    let events = EventList::new(vec![DelayEvent::kick(5, 5.0, -1.0)]);
    let spec = BspSpec::new(ring(18), 0.8, 0.2).with_contention(Contention::Saturating { n_sat: 6 }).with_events(events);
    let tl = simulate_bsp(&spec, 1000).unwrap();
    let tail: Vec<f64> = (900..1000).map(|k| tl.stagger(k)).collect();
    assert!(tail.iter().all(|&s| s > 0.5));
    // Staggered execution beats the fully contended lockstep period.
    let lockstep = 0.8 * 18.0 / 6.0 + 0.2;
    let period = (tl.completion[0][999] - tl.completion[0][899]) / 100.0;
    assert!(period < lockstep, "{period} vs {lockstep}");
    assert_eq!(classify_bsp(&tl), Behaviour::Desync);
}

#[test]
fn unsaturated_contention_behaves_like_none() {
    let events = EventList::new(vec![DelayEvent::kick(2, 1.0, -1.0)]);
    let base = BspSpec::new(ring(8), 0.8, 0.2).with_events(events);
    let plain = simulate_bsp(&base, 30).unwrap();
    let roomy = simulate_bsp(&base.clone().with_contention(Contention::Saturating { n_sat: 8 }), 30).unwrap();
    assert_eq!(plain.completion, roomy.completion);
}

#[test]
fn verdict_requires_matching_inputs() {
    let tl = simulate_bsp(&BspSpec::new(ring(6), 0.8, 0.2), 10).unwrap();
    let spec = ModelSpec::new(ring(8), 0.8, 0.2, PotentialKind::Scalable);
    let traj = integrate(&spec, &PhaseState::synchronized(8), &EventList::empty(), &IntegratorConfig::new(20.0, 1.0)).unwrap();
    assert!(compare_with_model(&tl, &traj).is_err());

    let chain = Topology::build_from_distances(6, &DistanceSet::new(vec![1, -1], Boundary::Open)).unwrap();
    let spec = ModelSpec::new(chain, 0.8, 0.2, PotentialKind::Scalable);
    let traj = integrate(&spec, &PhaseState::synchronized(6), &EventList::empty(), &IntegratorConfig::new(20.0, 1.0)).unwrap();
    assert!(compare_with_model(&tl, &traj).is_err());
}

#[test]
fn unsettled_model_is_inconclusive() {
    let topo = ring(18);
    let tl = simulate_bsp(&BspSpec::new(topo.clone(), 0.8, 0.2), 100).unwrap();
    let spec = ModelSpec::new(topo, 0.8, 0.2, PotentialKind::Scalable);
    let events = EventList::new(vec![DelayEvent::kick(5, 5.0, -1.0)]);
    // Far too short to resynchronize, and still relaxing.
    let traj = integrate(&spec, &PhaseState::synchronized(18), &events, &IntegratorConfig::new(100.0, 1.0)).unwrap();
    assert_eq!(compare_with_model(&tl, &traj).unwrap(), Verdict::Inconclusive);
}
