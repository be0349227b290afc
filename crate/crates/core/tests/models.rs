mod common;

use approx::assert_abs_diff_eq;
use lcsc::models::coupled::CoupledModel;
use lcsc::models::planar::{wall_field, PlanarModel, PlanarRegions, NORTH, REGION_INSIDE, REGION_OUTSIDE};
use lcsc::models::stick_slip::{friction_force, Friction, StickSlipModel};
use lcsc::Error;
use proptest::prelude::*;

/// Friction written out branch by branch.
fn friction_by_hand(v: f64, delta: f64, gamma: f64, eta: f64) -> f64 {
    if v <= 0.0 {
        (1.0 - delta) / (1.0 - gamma * v) + delta + eta * v * v
    } else {
        -(1.0 - delta) / (1.0 + gamma * v) - delta - eta * v * v
    }
}

#[test]
fn friction_examples() {
    assert_eq!(friction_force(0.0, 0.5, 1.0, 0.001).unwrap(), 1.0);
    assert_abs_diff_eq!(friction_force(-0.5, 0.5, 1.0, 0.001).unwrap(), 0.5 / 1.5 + 0.5 + 0.001 * 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(friction_force(-0.5, 0.5, 1.0, 0.001).unwrap(), 0.83358333, epsilon = 1e-8);
    assert_abs_diff_eq!(friction_force(-0.295, 0.0, 3.0, 0.0).unwrap(), 1.0 / 1.885, epsilon = 1e-15);
    assert_abs_diff_eq!(friction_force(-0.295, 0.0, 3.0, 0.0).unwrap(), 0.53050398, epsilon = 1e-8);
    assert!(friction_force(0.3, 0.5, 1.0, 0.0).unwrap() < 0.0);
    assert!(matches!(friction_force(1.0, 0.5, -1.0, 0.0), Err(Error::DomainError(_))));
    assert!(matches!(friction_force(f64::NAN, 0.5, 1.0, 0.0), Err(Error::DomainError(_))));
}

#[test]
fn planar_field_examples() {
    let sys = PlanarModel::default().system().unwrap();
    let v = sys.interior_field(0, &[0.5, 0.5]);
    assert_abs_diff_eq!(v[0], -0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(v[1], 0.6, epsilon = 1e-15);
    assert_eq!(sys.interior_field(0, &[0.0, 0.0]).norm(), 0.0);
    let p = [-0.5, 1.0];
    assert!(!sys.in_sliding_region(&p, NORTH).unwrap());
    let v = sys.interior_field(0, &p);
    assert_abs_diff_eq!(v[0], -1.1, epsilon = 1e-15);
    assert_abs_diff_eq!(v[1], -0.3, epsilon = 1e-15);
    assert_eq!(wall_field(0.2, NORTH, -0.5), [0.2 * -0.5 - 1.0, -0.5 + 0.2]);
}

#[test]
fn planar_parameters_are_validated() {
    for (a, w) in [(0.0, 1.0), (1.0, 1.0), (-0.1, 1.0), (0.2, 0.0), (f64::NAN, 1.0)] {
        assert!(matches!(PlanarModel::new(a, w), Err(Error::DomainError(_))), "{a} {w}");
    }
    let m = PlanarModel::new(0.3, 2.0).unwrap();
    assert_eq!(m.liftoff_points(), [[1.0, 0.15], [-0.15, 1.0], [-1.0, -0.15], [0.15, -1.0]]);
    assert!((m.landing_time_bound(0.5, 0.0) - (8.0f64).ln() / 0.6).abs() < 1e-15);
}

#[test]
fn planar_regions_split_the_square() {
    let sys = PlanarModel::default().system_with_regions(PlanarRegions::default()).unwrap();
    let r = PlanarRegions::default();
    let mid = 0.5 * (r.entry_angle + r.exit_angle);
    assert_eq!(sys.region_of(&[0.8 * mid.cos(), 0.8 * mid.sin()]), REGION_INSIDE);
    let out = mid + std::f64::consts::PI;
    assert_eq!(sys.region_of(&[0.8 * out.cos(), 0.8 * out.sin()]), REGION_OUTSIDE);
    assert_eq!(sys.n_regions(), 2);
}

#[test]
fn stick_slip_liftoff_position() {
    let m = StickSlipModel::default();
    assert_eq!(m.liftoff_position(), 0.95);
    let lc = common::stick_slip();
    let lift = lc.events.iter().find(|e| e.kind == lcsc::hybrid::EventKind::Liftoff(0)).unwrap();
    assert!((lift.state[0] - 0.95).abs() < 1e-9);
    assert!((lift.state[1] - 0.5).abs() < 1e-12);
    let c = StickSlipModel { c: 0.2, k: 2.0, u: 0.4, ..m };
    assert!((c.liftoff_position() - (1.0 - 0.08) / 2.0).abs() < 1e-15);
}

#[test]
fn stick_slip_parameters_are_validated() {
    let d = StickSlipModel::default();
    for bad in [
        StickSlipModel { m: 0.0, ..d },
        StickSlipModel { k: -1.0, ..d },
        StickSlipModel { c: -0.1, ..d },
        StickSlipModel { u: 0.0, ..d },
        StickSlipModel { delta: 1.5, ..d },
        StickSlipModel { eta_f: -1.0, ..d },
        StickSlipModel { gamma_f: 0.0, ..d },
    ] {
        assert!(matches!(bad.system(), Err(Error::DomainError(_))));
    }
    assert!(CoupledModel::new(StickSlipModel { m: -1.0, ..d }, 0.001).system().is_err());
}

#[test]
fn coupled_unit_parameters() {
    let u = StickSlipModel::coupled_unit();
    assert_eq!((u.m, u.k, u.c, u.delta, u.gamma_f, u.eta_f, u.u), (1.0, 1.0, 0.0, 0.0, 3.0, 0.0, 0.295));
    let sys = CoupledModel::new(u, 0.001).system().unwrap();
    assert_eq!(sys.param_names().last().unwrap(), "k3");
    assert_eq!(sys.dim(), 4);
}

proptest! {
    #[test]
    fn friction_matches_both_branches(v in -0.9f64..3.0, delta in 0.0f64..1.0, gamma in 0.1f64..1.0, eta in 0.0f64..0.1) {
        let f = friction_force(v, delta, gamma, eta).unwrap();
        prop_assert!((f - friction_by_hand(v, delta, gamma, eta)).abs() < 1e-14);
        let fr = Friction { delta, gamma, eta };
        prop_assert!((fr.value(v) - f).abs() < 1e-14);
        let h = 1e-6;
        if v.abs() > 2.0 * h {
            let fd = (fr.value(v + h) - fr.value(v - h)) / (2.0 * h);
            prop_assert!((fr.derivative(v) - fd).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn planar_wall_rows_match_the_system(wall in 0usize..4, s in -0.999f64..0.999, alpha in 0.05f64..0.95) {
        let sys = PlanarModel::new(alpha, 1.0).unwrap().system().unwrap();
        let p = match wall {
            0 => [1.0, s],
            1 => [s, 1.0],
            2 => [-1.0, s],
            _ => [s, -1.0],
        };
        let v = if sys.in_sliding_region(&p, wall).unwrap() {
            sys.sliding_field(&p, wall).unwrap()
        } else {
            sys.interior_field(0, &p)
        };
        let w = wall_field(alpha, wall, s);
        prop_assert!((v[0] - w[0]).abs() < 1e-12 && (v[1] - w[1]).abs() < 1e-12);
    }
}
