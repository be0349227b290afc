mod common;

use lcsc::cycle::{
    check_topology, cycle_from_anchor, find_limit_cycle, perturbed_cycle, rescale_time, CycleOptions, LimitCycle,
    RescalingKind,
};
use lcsc::experiments::{event_index, planar_timing_regions};
use lcsc::hybrid::{integrate, Control, EventKind, Flow, HybridOptions};
use lcsc::models::planar::{PlanarModel, EAST, NORTH};
use lcsc::models::stick_slip::StickSlipModel;
use lcsc::system::FilippovSystem;
use lcsc::Error;
use proptest::prelude::*;

fn first_event(sys: &FilippovSystem, x0: &[f64]) -> (EventKind, f64, Vec<f64>) {
    let mut flow = Flow::new(sys, x0, 0.0, HybridOptions::default()).unwrap();
    let e = flow.advance(100.0, |_, _| Control::Stop).unwrap().expect("an event");
    (e.kind, e.time, e.state)
}

fn sliding_drift(lc: &LimitCycle) -> f64 {
    let mut worst: f64 = 0.0;
    for seg in &lc.segments {
        for b in seg.mode.sliding_boundaries() {
            let wall = lc.system.check_boundary(b).unwrap();
            for k in 0..=50 {
                let t = seg.t0 + seg.duration() * k as f64 / 50.0;
                worst = worst.max(wall.level(seg.eval(t).as_slice()).abs());
            }
        }
    }
    worst
}

#[test]
fn interior_start_lands_within_bound() {
    let model = PlanarModel::default();
    let sys = model.system().unwrap();
    let (kind, t, x) = first_event(&sys, &[0.5, 0.0]);
    assert!(matches!(kind, EventKind::Landing(_)));
    assert!(t <= model.landing_time_bound(0.5, 0.0), "landing at {t}");
    assert!(x.iter().any(|v| (v.abs() - 1.0).abs() < 1e-9));
}

#[test]
fn liftoff_point_next_lands_on_north_wall() {
    let sys = PlanarModel::default().system().unwrap();
    let (kind, _, x) = first_event(&sys, &[1.0, 0.2]);
    assert_eq!(kind, EventKind::Landing(NORTH));
    assert!((x[1] - 1.0).abs() < 1e-12);
}

#[test]
fn stick_slip_events_alternate() {
    let sys = StickSlipModel::default().system().unwrap();
    let (_, events) = integrate(&sys, &[1.4127, 0.0829], 200.0, HybridOptions::default()).unwrap();
    assert!(events.len() > 10);
    for w in events.windows(2) {
        let pair = (w[0].kind, w[1].kind);
        assert!(
            matches!(pair, (EventKind::Landing(0), EventKind::Liftoff(0)) | (EventKind::Liftoff(0), EventKind::Landing(0))),
            "{pair:?}"
        );
    }
    let lifts: Vec<f64> = events.iter().filter(|e| e.kind == EventKind::Liftoff(0)).map(|e| e.time).collect();
    let n = lifts.len();
    let (p1, p2) = (lifts[n - 1] - lifts[n - 2], lifts[n - 2] - lifts[n - 3]);
    assert!((p1 - p2).abs() < 1e-6 * p1);
    assert!((p1 - common::stick_slip().period).abs() < 1e-6 * p1);
}

#[test]
fn planar_cycle_anchor_and_restart() {
    let lc = common::planar();
    assert_eq!(lc.anchor.0, EventKind::Liftoff(EAST));
    assert!(common::max_abs_diff(&lc.x0, &[1.0, 0.2]) < 1e-9);
    assert!(lc.closure_error < 1e-9);
    let again = cycle_from_anchor(&lc.system, &lc.x0, lc.mode0, lc.anchor, CycleOptions::default()).unwrap();
    assert!((again.period - lc.period).abs() < 1e-10);
    let restart = find_limit_cycle(&lc.system, &lc.x0, lc.anchor, CycleOptions::default()).unwrap();
    assert!((restart.period - lc.period).abs() < 1e-10);
}

#[test]
fn halved_tolerances_keep_the_period() {
    let lc = common::planar();
    let opts = CycleOptions { tol: CycleOptions::default().tol.halved(), ..CycleOptions::default() };
    let fine = PlanarModel::default().limit_cycle(&lc.system, opts).unwrap();
    assert!((fine.period - lc.period).abs() < 1e-8, "{} vs {}", fine.period, lc.period);
    let ss = common::stick_slip();
    let fine = find_limit_cycle(&ss.system, &ss.x0, ss.anchor, opts).unwrap();
    assert!((fine.period - ss.period).abs() < 1e-8);
}

#[test]
fn coupled_unit_period() {
    let lc = common::coupled_unit();
    assert!((lc.period - 10.02).abs() < 0.05, "T0 = {}", lc.period);
}

#[test]
fn planar_mode_sequence() {
    let lc = common::planar();
    let kinds = lc.event_signature();
    assert_eq!(kinds.len(), 8);
    for (k, kind) in kinds.iter().enumerate() {
        let wall = (k + 1) / 2 % 4;
        let expected = if k % 2 == 0 { EventKind::Landing((k / 2 + 1) % 4) } else { EventKind::Liftoff(wall) };
        assert_eq!(*kind, expected, "event {k}");
    }
    assert_eq!(lc.segments.len(), 8);
    for (k, seg) in lc.segments.iter().enumerate() {
        assert_eq!(seg.mode.is_interior(), k % 2 == 0, "segment {k}");
    }
    let lifts = PlanarModel::default().liftoff_points();
    for e in lc.events.iter().filter(|e| matches!(e.kind, EventKind::Liftoff(_))) {
        let EventKind::Liftoff(b) = e.kind else { unreachable!() };
        assert!(common::max_abs_diff(&e.state, &lifts[b]) < 1e-8);
    }
}

#[test]
fn sliding_segments_stay_on_walls() {
    for lc in [common::planar(), common::stick_slip(), common::coupled_unit()] {
        assert!(sliding_drift(lc) <= 1e-9);
    }
}

#[test]
fn event_transversality() {
    for lc in [common::planar(), common::stick_slip(), common::coupled_unit()] {
        for e in &lc.events {
            match e.kind {
                EventKind::Landing(_) => {
                    let nf: f64 = e.normal.iter().zip(&e.f_minus).map(|(a, b)| a * b).sum();
                    assert!(nf > 0.0);
                }
                EventKind::Liftoff(b) => {
                    assert!(lc.system.nondegeneracy_at_liftoff(&e.state, b).unwrap() < 0.0);
                }
                _ => {}
            }
        }
    }
}

#[test]
fn planar_cycle_has_rotational_symmetry() {
    let lc = common::planar();
    let q = lc.period / 4.0;
    for k in 0..200 {
        let t = lc.period * k as f64 / 200.0;
        let x = lc.state_at(t);
        let y = lc.state_at(t + q);
        assert!(common::max_abs_diff(y.as_slice(), &[-x[1], x[0]]) < 1e-7, "t = {t}");
    }
}

#[test]
fn zero_perturbation_reproduces_the_cycle() {
    let lc = common::planar();
    let same = perturbed_cycle(lc, 0.0, CycleOptions::default()).unwrap();
    assert!((same.period - lc.period).abs() < 1e-10);
    assert!(common::max_abs_diff(&same.x0, &lc.x0) < 1e-9);
    let map = rescale_time(lc, &same, RescalingKind::Uniform, &[lc.events.len() - 1]).unwrap();
    for k in 0..20 {
        let t = lc.period * k as f64 / 20.0;
        assert!((map.map(t) - t).abs() < 1e-9);
    }
}

#[test]
fn rescaling_endpoints_and_region_exits() {
    let lc = common::planar_regional();
    let lc_eps = perturbed_cycle(lc, 0.05, CycleOptions::default()).unwrap();
    let [r1, r2] = planar_timing_regions(lc).unwrap();
    let anchor = lc.events.len() - 1;
    let uniform = rescale_time(lc, &lc_eps, RescalingKind::Uniform, &[anchor]).unwrap();
    let piecewise = rescale_time(lc, &lc_eps, RescalingKind::Piecewise, &[r1.entry, r1.exit, r2.exit]).unwrap();
    for map in [&uniform, &piecewise] {
        let t0 = map.t_knots[0];
        assert!((map.map(t0 + lc.period) - map.map(t0) - lc_eps.period).abs() < 1e-12);
        assert!(map.slopes().iter().all(|s| *s > 0.0));
    }
    assert!((uniform.map(lc.period) - lc_eps.period).abs() < 1e-9);
    assert!((uniform.map(0.0)).abs() < 1e-12);
    let exit = lc.event_phase(r1.exit);
    assert!((piecewise.map(exit) - lc_eps.event_phase(r1.exit)).abs() < 1e-12);
    for k in 0..50 {
        let tau = -3.0 + 0.37 * k as f64;
        for map in [&uniform, &piecewise] {
            assert!((map.map(map.inverse(tau)) - tau).abs() < 1e-9);
        }
    }
    let entry = lc.event_phase(r1.entry);
    assert!((piecewise.map(entry) - lc_eps.event_phase(r1.entry)).abs() < 1e-12);
}

#[test]
fn mismatched_event_sequences_are_rejected() {
    let a = common::planar();
    let b = common::stick_slip();
    assert!(matches!(check_topology(a, b), Err(Error::TopologyChangeError(_))));
    assert!(matches!(rescale_time(a, b, RescalingKind::Uniform, &[0]), Err(Error::TopologyChangeError(_))));
}

#[test]
fn missing_anchor_is_reported() {
    let sys = PlanarModel::default().system().unwrap();
    let opts = CycleOptions { max_time: 1.0, ..CycleOptions::default() };
    let r = find_limit_cycle(&sys, &[0.5, 0.0], lcsc::cycle::Anchor::liftoff(EAST), opts);
    assert!(matches!(r, Err(Error::AnchorError(_))));
    let opts = CycleOptions { max_cycles: 1, conv_tol: 0.0, ..CycleOptions::default() };
    let r = find_limit_cycle(&sys, &[0.5, 0.0], lcsc::cycle::Anchor::liftoff(EAST), opts);
    assert!(matches!(r, Err(Error::NoCycleError(_))));
}

#[test]
fn start_outside_domain_is_rejected() {
    let sys = PlanarModel::default().system().unwrap();
    assert!(matches!(integrate(&sys, &[1.5, 0.0], 1.0, HybridOptions::default()), Err(Error::DriftError { .. })));
}

#[test]
fn event_index_lookup() {
    let lc = common::planar();
    assert_eq!(event_index(lc, EventKind::Landing(NORTH)).unwrap(), 0);
    assert_eq!(event_index(lc, EventKind::Liftoff(EAST)).unwrap(), 7);
    assert!(event_index(lc, EventKind::TimingCrossing(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interior_starts_reach_the_cycle(r in 0.1f64..0.9, theta in 0.0f64..std::f64::consts::TAU) {
        let model = PlanarModel::default();
        let sys = model.system().unwrap();
        let x0 = [r * theta.cos(), r * theta.sin()];
        let (kind, t, _) = first_event(&sys, &x0);
        prop_assert!(matches!(kind, EventKind::Landing(_)));
        prop_assert!(t <= model.landing_time_bound(x0[0], x0[1]) + 1e-9);
        let (_, events) = integrate(&sys, &x0, t + 3.0 * common::planar().period, HybridOptions::default()).unwrap();
        for e in events.iter().skip(2).filter(|e| matches!(e.kind, EventKind::Liftoff(_))) {
            let EventKind::Liftoff(b) = e.kind else { unreachable!() };
            prop_assert!(common::max_abs_diff(&e.state, &model.liftoff_points()[b]) < 1e-8);
        }
    }
}
