use std::f64::consts::{PI, TAU};

use approx::assert_abs_diff_eq;
use idlewave::metrics::{order_parameter, phase_spread};
use idlewave::*;

fn ring(n: usize, d: &[i64]) -> Topology {
    Topology::build_from_distances(n, &DistanceSet::periodic(d.to_vec())).unwrap()
}

fn max_abs_diff(a: &Trajectory, b: &Trajectory) -> f64 {
    assert_eq!(a.times, b.times);
    a.phases
        .iter()
        .zip(&b.phases)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn free_oscillators_follow_the_linear_solution() {
    let spec = ModelSpec::new(ring(4, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable).with_kappa(0.0);
    let init = vec![0.1, -0.4, 2.0, 3.3];
    let traj = integrate(&spec, &PhaseState::new(0.0, init.clone()), &EventList::empty(), &IntegratorConfig::new(3.0, 0.5))
        .unwrap();
    for (x, x0) in traj.final_phases().iter().zip(&init) {
        assert_abs_diff_eq!(*x, x0 + 6.0 * PI, epsilon = 1e-8);
    }
}

#[test]
fn two_oscillators_converge_like_the_reference() {
    let spec = ModelSpec::new(ring(2, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable);
    let init = PhaseState::new(0.0, vec![0.0, 1.0]);
    let cfg = IntegratorConfig::new(20.0, 0.25);
    let adaptive = integrate(&spec, &init, &EventList::empty(), &cfg).unwrap();
    let reference = reference_integrate(&spec, &init, &EventList::empty(), &cfg, 1e-5).unwrap();
    assert!(max_abs_diff(&adaptive, &reference) < 1e-6);

    let gaps: Vec<f64> = adaptive.phases.iter().map(|p| (p[1] - p[0]).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    // The gap obeys g' = -2 (v_p / 2) tanh(g), so it decays no slower than
    // exp(-(tanh(1)/1) t) once below 1; by t = 20 it is far below 1e-3.
    assert!(*gaps.last().unwrap() < 1e-3);
}

#[test]
fn kuramoto_lock_agrees_with_reference() {
    let n = 10;
    let offsets = (0..n).map(|i| 0.05 * (i as f64 - 4.5)).collect();
    let spec = ModelSpec::new(Topology::build_all_to_all(n).unwrap(), 1.0, 0.0, PotentialKind::Kuramoto)
        .with_coupling(3.0)
        .with_freq_offsets(offsets);
    let init = PhaseState::new(0.0, (0..n).map(|i| 0.6 * i as f64).collect());
    let cfg = IntegratorConfig::new(30.0, 0.5).with_tolerances(1e-9, 1e-11);
    let adaptive = integrate(&spec, &init, &EventList::empty(), &cfg).unwrap();
    let reference = reference_integrate(&spec, &init, &EventList::empty(), &cfg, 1e-3).unwrap();
    assert!(max_abs_diff(&adaptive, &reference) < 1e-6);
    assert!(order_parameter(adaptive.final_phases()) > 0.99);
}

#[test]
fn events_are_applied_at_their_times_with_large_steps() {
    let spec = ModelSpec::new(ring(3, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable).with_kappa(0.0);
    let events = EventList::new(vec![DelayEvent::kick(0, 0.31, -0.5), DelayEvent::kick(1, 0.37, -0.25)]);
    let cfg = IntegratorConfig::new(2.0, 1.0).with_h_max(1.0);
    for traj in [
        integrate(&spec, &PhaseState::synchronized(3), &events, &cfg).unwrap(),
        reference_integrate(&spec, &PhaseState::synchronized(3), &events, &cfg, 0.9).unwrap(),
    ] {
        let applied: Vec<f64> = traj.events_applied.iter().map(|e| e.t_applied).collect();
        assert_eq!(applied, vec![0.31, 0.37]);
        let end = traj.final_phases();
        assert_abs_diff_eq!(end[0], TAU * 2.0 - 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(end[1], TAU * 2.0 - 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(end[2], TAU * 2.0, epsilon = 1e-9);
    }
}

#[test]
fn slowdown_on_free_oscillator_costs_its_integral() {
    let spec = ModelSpec::new(ring(2, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable).with_kappa(0.0);
    let events = EventList::new(vec![DelayEvent::slowdown(1, 1.0, TAU * 0.5, 1.0)]);
    let cfg = IntegratorConfig::new(5.0, 0.5);
    let traj = integrate(&spec, &PhaseState::synchronized(2), &events, &cfg).unwrap();
    let end = traj.final_phases();
    assert_abs_diff_eq!(end[0] - end[1], PI, epsilon = 1e-9);
    assert_abs_diff_eq!(end[0], 5.0 * TAU, epsilon = 1e-9);
}

#[test]
fn kick_and_equivalent_slowdown_reach_the_same_state() {
    let spec = ModelSpec::new(ring(10, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable);
    let cfg = IntegratorConfig::new(1500.0, 1.0);
    let kick = EventList::new(vec![DelayEvent::kick(3, 5.0, -1.0)]);
    let slow = EventList::new(vec![DelayEvent::slowdown(3, 5.0, 0.5, 2.0)]);
    let a = integrate(&spec, &PhaseState::synchronized(10), &kick, &cfg).unwrap();
    let b = integrate(&spec, &PhaseState::synchronized(10), &slow, &cfg).unwrap();

    // Transients differ while the slowdown is still acting.
    let mid_a = a.phases_at(6.0).unwrap();
    let mid_b = b.phases_at(6.0).unwrap();
    assert!((mid_a[3] - mid_b[3]).abs() > 0.1);

    assert!(phase_spread(a.final_phases()) < 1e-6);
    assert!(phase_spread(b.final_phases()) < 1e-6);
    // The total deficit is shared by the ring in both cases.
    for (x, y) in a.final_phases().iter().zip(b.final_phases()) {
        assert_abs_diff_eq!(*x, *y, epsilon = 1e-6);
    }
}

#[test]
fn zero_coupled_event_touches_one_component() {
    let spec = ModelSpec::new(ring(6, &[1, -1]), 0.8, 0.2, PotentialKind::Bottlenecked { sigma: 1.0 }).with_kappa(0.0);
    let events = EventList::new(vec![DelayEvent::kick(2, 1.0, -0.8), DelayEvent::slowdown(2, 3.0, 0.3, 1.0)]);
    let traj = integrate(&spec, &PhaseState::synchronized(6), &events, &IntegratorConfig::new(10.0, 0.5)).unwrap();
    let omega = spec.omega();
    for (t, p) in traj.times.iter().zip(&traj.phases) {
        for (i, x) in p.iter().enumerate() {
            if i != 2 {
                assert_abs_diff_eq!(*x, omega * t, epsilon = 1e-12 * (1.0 + omega * t));
            }
        }
    }
    assert_abs_diff_eq!(traj.final_phases()[2], omega * 10.0 - 0.8 - 0.3, epsilon = 1e-9);
}

#[test]
fn history_untouched_without_delay() {
    let spec = ModelSpec::new(ring(8, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable)
        .with_noise(NoiseSpec::gaussian(0.05));
    let events = EventList::new(vec![DelayEvent::kick(1, 1.0, -0.5)]);
    let traj = integrate(&spec, &PhaseState::synchronized(8), &events, &IntegratorConfig::new(20.0, 1.0)).unwrap();
    assert_eq!(traj.stats.history_lookups, 0);

    let lagged = spec.with_delay(DelaySpec::Fixed { tau: 0.2 });
    let traj = integrate(&lagged, &PhaseState::synchronized(8), &events, &IntegratorConfig::new(20.0, 1.0)).unwrap();
    assert!(traj.stats.history_lookups > 0);
}

#[test]
fn fixed_delay_matches_reference() {
    let spec = ModelSpec::new(ring(6, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable).with_delay(DelaySpec::Fixed { tau: 0.25 });
    let events = EventList::new(vec![DelayEvent::kick(0, 1.0, -1.0)]);
    let cfg = IntegratorConfig::new(15.0, 0.25);
    let init = PhaseState::synchronized(6);
    let adaptive = integrate(&spec, &init, &events, &cfg).unwrap();
    let reference = reference_integrate(&spec, &init, &events, &cfg, 1e-3).unwrap();
    // Linear history interpolation limits both schemes to second order in
    // the lag lookups, so agreement is looser than for undelayed runs.
    let dev = max_abs_diff(&adaptive, &reference);
    assert!(dev < 1e-4, "{dev:e}");
}

#[test]
fn seeded_noise_is_reproducible() {
    let spec = ModelSpec::new(ring(8, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable)
        .with_noise(NoiseSpec::uniform(0.2))
        .with_delay(DelaySpec::RandomUniform { max_tau: 0.1, segment_len: 0.5 });
    let cfg = IntegratorConfig::new(10.0, 0.1).with_seed(42);
    let run = |cfg: &IntegratorConfig| integrate(&spec, &PhaseState::synchronized(8), &EventList::empty(), cfg).unwrap();
    let a = run(&cfg);
    let b = run(&cfg);
    assert_eq!(a.phases, b.phases);
    assert_eq!(a.times, b.times);
    let c = run(&cfg.with_seed(43));
    assert_ne!(a.phases, c.phases);
}

#[test]
fn halving_tolerance_converges() {
    let kinds = [
        PotentialKind::Kuramoto,
        PotentialKind::Scalable,
        PotentialKind::Bottlenecked { sigma: 0.8 },
        PotentialKind::Bottlenecked { sigma: 2.0 },
        PotentialKind::Scalable,
    ];
    for (seed, kind) in kinds.into_iter().enumerate() {
        let n = 6 + seed;
        let spec = ModelSpec::new(ring(n, &[1, -1, -2]), 0.7, 0.3, kind);
        let init = PhaseState::new(0.0, (0..n).map(|i| ((i * 7 + seed) as f64 * 0.61).sin()).collect());
        let run = |tol: f64| {
            let cfg = IntegratorConfig::new(30.0, 1.0).with_tolerances(tol, tol * 1e-3);
            integrate(&spec, &init, &EventList::empty(), &cfg).unwrap()
        };
        let coarse = run(1e-4);
        let mid = run(5e-5);
        let fine = run(2.5e-5);
        let first = max_abs_diff(&coarse, &mid);
        let second = max_abs_diff(&mid, &fine);
        assert!(second < first, "{kind:?}: {second:e} >= {first:e}");
    }
}

#[test]
fn stiffness_and_config_errors_are_classified() {
    let spec = ModelSpec::new(ring(4, &[1, -1]), 0.8, 0.2, PotentialKind::Scalable).with_coupling(1e18);
    let init = PhaseState::new(0.0, vec![0.0, 0.5, 1.0, 1.5]);
    let cfg = IntegratorConfig::new(1.0, 0.5).with_tolerances(1e-12, 1e-14);
    let err = integrate(&spec, &init, &EventList::empty(), &cfg).unwrap_err();
    assert!(matches!(err, Error::Stiffness { .. }), "{err}");
    assert!(err.is_numerical());

    let bad = IntegratorConfig::new(-1.0, 0.5);
    let err = integrate(&spec, &init, &EventList::empty(), &bad).unwrap_err();
    assert!(!err.is_numerical());
}
