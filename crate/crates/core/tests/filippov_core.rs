mod common;

use approx::assert_abs_diff_eq;
use lcsc::config::SystemSpec;
use lcsc::models::coupled::CoupledModel;
use lcsc::models::planar::PlanarModel;
use lcsc::models::stick_slip::StickSlipModel;
use lcsc::system::{periodic_difference, wrap_phase, FilippovSystem, HardBoundary, Mode};
use lcsc::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EAST: usize = 0;
const NORTH: usize = 1;
const WEST: usize = 2;
const SOUTH: usize = 3;

fn planar() -> FilippovSystem {
    PlanarModel::default().system().unwrap()
}

fn stick_slip() -> FilippovSystem {
    StickSlipModel::default().system().unwrap()
}

/// Planar wall field written out by hand for `omega = 1`: `(wall, s) -> (dx/dt, dy/dt)`.
fn table_row(a: f64, wall: usize, s: f64) -> (f64, f64) {
    match wall {
        EAST if s < a => (0.0, 1.0 + a * s),
        EAST => (a - s, 1.0 + a * s),
        NORTH if s > -a => (a * s - 1.0, 0.0),
        NORTH => (a * s - 1.0, s + a),
        WEST if s > -a => (0.0, -1.0 + a * s),
        WEST => (-a - s, -1.0 + a * s),
        SOUTH if s < a => (a * s + 1.0, 0.0),
        _ => (a * s + 1.0, s - a),
    }
}

fn wall_point(wall: usize, s: f64) -> [f64; 2] {
    match wall {
        EAST => [1.0, s],
        NORTH => [s, 1.0],
        WEST => [-1.0, s],
        _ => [s, -1.0],
    }
}

/// Field on a wall point: sliding where the interior field points outward, interior otherwise.
fn wall_velocity(sys: &FilippovSystem, wall: usize, p: &[f64]) -> Vec<f64> {
    if sys.in_sliding_region(p, wall).unwrap() {
        sys.sliding_field(p, wall).unwrap().as_slice().to_vec()
    } else {
        sys.interior_field(0, p).as_slice().to_vec()
    }
}

#[test]
fn sliding_field_examples() {
    let sys = planar();
    let f = sys.interior_field(0, &[1.0, -0.5]);
    assert_abs_diff_eq!(f[0], 0.7, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], 0.9, epsilon = 1e-15);
    let s = sys.sliding_field(&[1.0, -0.5], EAST).unwrap();
    assert_eq!(s[0], 0.0);
    assert_abs_diff_eq!(s[1], 0.9, epsilon = 1e-15);
    let s = sys.sliding_field(&[1.0, 0.2], EAST).unwrap();
    let f = sys.interior_field(0, &[1.0, 0.2]);
    assert_abs_diff_eq!(s[0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(s[1], 1.04, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], 1.04, epsilon = 1e-15);

    let ss = stick_slip();
    for x in [-0.3, 0.2, 0.9, 0.94] {
        let v = ss.sliding_field(&[x, 0.5], 0).unwrap();
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-15);
        assert_eq!(v[1], 0.0);
    }
}

#[test]
fn sliding_field_rejects_bad_input() {
    let sys = planar();
    assert!(matches!(sys.sliding_field(&[1.0, 0.0, 0.0], EAST), Err(Error::ContractViolation(_))));
    assert!(matches!(sys.sliding_field(&[0.5, 0.0], EAST), Err(Error::ContractViolation(_))));
    assert!(matches!(sys.sliding_field(&[1.0, 0.0], 9), Err(Error::ContractViolation(_))));
}

#[test]
fn sliding_region_examples() {
    let sys = planar();
    assert!(sys.in_sliding_region(&[1.0, -0.5], EAST).unwrap());
    assert!(!sys.in_sliding_region(&[1.0, 0.2], EAST).unwrap());
    assert!(stick_slip().in_sliding_region(&[0.94, 0.5], 0).unwrap());
    assert!(!stick_slip().in_sliding_region(&[0.96, 0.5], 0).unwrap());
}

#[test]
fn liftoff_indicator_examples() {
    let sys = planar();
    for y in [-0.9, -0.3, 0.0, 0.2, 0.7] {
        assert_abs_diff_eq!(sys.liftoff_indicator(&[1.0, y], EAST).unwrap(), 0.2 - y, epsilon = 1e-15);
    }
    let a = 0.2;
    for (wall, p) in [(EAST, [1.0, a]), (NORTH, [-a, 1.0]), (WEST, [-1.0, -a]), (SOUTH, [a, -1.0])] {
        assert_abs_diff_eq!(sys.liftoff_indicator(&p, wall).unwrap(), 0.0, epsilon = 1e-15);
    }
    let ss = stick_slip();
    for x in [0.0, 0.5, 0.95, 1.2] {
        assert_abs_diff_eq!(ss.liftoff_indicator(&[x, 0.5], 0).unwrap(), 1.0 - x - 0.1 * 0.5, epsilon = 1e-14);
    }
    assert_abs_diff_eq!(ss.liftoff_indicator(&[0.95, 0.5], 0).unwrap(), 0.0, epsilon = 1e-14);
}

#[test]
fn nondegeneracy_examples() {
    let sys = planar();
    assert_abs_diff_eq!(sys.nondegeneracy_at_liftoff(&[1.0, 0.2], EAST).unwrap(), -1.04, epsilon = 1e-14);
    assert!(stick_slip().nondegeneracy_at_liftoff(&[0.95, 0.5], 0).unwrap() < 0.0);
    // Reversed rotation: liftoff moves to y = -alpha, still transversal.
    let rev = PlanarModel { alpha: 0.2, omega: 1.0 };
    let mirrored = FilippovSystem::new(std::sync::Arc::new(lcsc::models::planar::PlanarField), vec![rev.alpha, -1.0])
        .unwrap()
        .with_boundary(HardBoundary::new("east", &[1.0, 0.0], 1.0).unwrap())
        .unwrap();
    let p = [1.0, -0.2];
    assert_abs_diff_eq!(mirrored.liftoff_indicator(&p, 0).unwrap(), 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(mirrored.nondegeneracy_at_liftoff(&p, 0).unwrap(), -1.04, epsilon = 1e-14);
}

#[test]
fn periodic_difference_examples() {
    assert_abs_diff_eq!(periodic_difference(0.1, 0.9, 1.0).unwrap(), 0.2, epsilon = 1e-15);
    assert_abs_diff_eq!(periodic_difference(0.6, 0.1, 1.0).unwrap(), 0.5, epsilon = 1e-15);
    assert_eq!(periodic_difference(0.3, 0.3, 2.5).unwrap(), 0.0);
    assert!(matches!(periodic_difference(0.1, 0.2, 0.0), Err(Error::DomainError(_))));
    assert!(matches!(periodic_difference(0.1, 0.2, -1.0), Err(Error::DomainError(_))));
}

#[test]
fn table_rows_match_on_a_grid() {
    let sys = planar();
    let a = 0.2;
    let rows: [(usize, f64, f64); 8] = [
        (EAST, -1.0, a),
        (EAST, a, 1.0),
        (NORTH, -a, 1.0),
        (NORTH, -1.0, -a),
        (WEST, -a, 1.0),
        (WEST, -1.0, -a),
        (SOUTH, -1.0, a),
        (SOUTH, a, 1.0),
    ];
    for (wall, lo, hi) in rows {
        for k in 0..20 {
            let s = lo + (hi - lo) * (k as f64 + 0.5) / 20.0;
            let p = wall_point(wall, s);
            let got = wall_velocity(&sys, wall, &p);
            let (ex, ey) = table_row(a, wall, s);
            assert!(common::max_abs_diff(&got, &[ex, ey]) < 1e-12, "wall {wall} s {s}: {got:?} vs ({ex}, {ey})");
        }
    }
    for k in 0..20 {
        let p = [-0.95 + 0.1 * k as f64, 0.9 - 0.09 * k as f64];
        let got = sys.interior_field(0, &p);
        assert!(common::max_abs_diff(got.as_slice(), &[a * p[0] - p[1], p[0] + a * p[1]]) < 1e-12);
    }
}

#[test]
fn table_rows_match_at_random_wall_points() {
    let sys = planar();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let wall = rng.gen_range(0..4);
        let s: f64 = rng.gen_range(-0.999..0.999);
        let p = wall_point(wall, s);
        let got = wall_velocity(&sys, wall, &p);
        let (ex, ey) = table_row(0.2, wall, s);
        assert!(common::max_abs_diff(&got, &[ex, ey]) < 1e-12);
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// Analytic Jacobian and parameter derivative against central differences.
fn check_derivatives(sys: &FilippovSystem, sample: impl Fn(&mut ChaCha8Rng) -> Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    let sys = sys.clone();
    for _ in 0..100 {
        let x = sample(&mut rng);
        let n = x.len();
        let j = sys.interior_jacobian(0, &x);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let fd = (sys.interior_field(0, &xp) - sys.interior_field(0, &xm)) / (2.0 * h);
            for r in 0..n {
                assert!(rel_err(j[(r, c)], fd[r]) < 1e-4, "jacobian ({r},{c}) at {x:?}: {} vs {}", j[(r, c)], fd[r]);
            }
        }
        let d = sys.param_derivative(0, &x);
        let fd = (sys.perturbed(h).unwrap().interior_field(0, &x) - sys.interior_field(0, &x)) / h;
        for r in 0..n {
            assert!(rel_err(d[r], fd[r]) < 1e-4, "param derivative {r} at {x:?}: {} vs {}", d[r], fd[r]);
        }
    }
}

#[test]
fn planar_derivatives_match_differences() {
    let sys = planar().with_perturbation(lcsc::models::planar::alpha_perturbation()).unwrap();
    check_derivatives(&sys, |r| vec![r.gen_range(-0.99..0.99), r.gen_range(-0.99..0.99)]);
    let sys = planar().with_perturbation(lcsc::models::planar::regional_perturbation()).unwrap();
    check_derivatives(&sys, |r| vec![r.gen_range(-0.99..0.99), r.gen_range(-0.99..0.99)]);
}

#[test]
fn stick_slip_derivatives_match_differences() {
    let base = stick_slip();
    for name in ["c", "k", "u", "delta", "gamma_f"] {
        let p = lcsc::models::stick_slip::param_perturbation(&base, name).unwrap();
        let sys = base.clone().with_perturbation(p).unwrap();
        check_derivatives(&sys, |r| vec![r.gen_range(-2.0..2.0), r.gen_range(-1.5..0.49)]);
    }
}

#[test]
fn coupled_derivatives_match_differences() {
    let base = CoupledModel::new(StickSlipModel::coupled_unit(), 0.001).system().unwrap();
    let p = lcsc::models::stick_slip::param_perturbation(&base, "k3").unwrap();
    let sys = base.with_perturbation(p).unwrap();
    check_derivatives(&sys, |r| {
        vec![r.gen_range(-2.0..2.0), r.gen_range(-1.5..0.29), r.gen_range(-2.0..2.0), r.gen_range(-1.5..0.29)]
    });
}

#[test]
fn states_beyond_walls_are_rejected() {
    let sys = planar();
    assert!(matches!(sys.infer_mode(&[1.01, 0.0]), Err(Error::DriftError { .. })));
    assert!(matches!(sys.infer_mode(&[0.0]), Err(Error::ContractViolation(_))));
    let m = sys.infer_mode(&[1.0, -0.5]).unwrap();
    assert!(m.is_sliding_on(EAST));
    let m = sys.infer_mode(&[1.0, 0.5]).unwrap();
    assert_eq!(m, Mode::interior(0));
}

#[test]
fn user_system_from_json() {
    let text = r#"{
        "name": "stuart-landau",
        "parameters": {"mu": 1.0, "w": 2.0},
        "field": [
            {"num": [{"coef": 1.0, "param": "mu", "powers": [1, 0]}, {"coef": -1.0, "param": "w", "powers": [0, 1]},
                     {"coef": -1.0, "powers": [3, 0]}, {"coef": -1.0, "powers": [1, 2]}]},
            {"num": [{"coef": 1.0, "param": "w", "powers": [1, 0]}, {"coef": 1.0, "param": "mu", "powers": [0, 1]},
                     {"coef": -1.0, "powers": [2, 1]}, {"coef": -1.0, "powers": [0, 3]}]}
        ],
        "surfaces": [{"label": "half-axis", "normal": [0.0, 1.0], "offset": 0.0, "guard": {"normal": [1.0, 0.0], "offset": 0.0}}],
        "anchor": {"kind": "timing", "index": 0},
        "initial_guess": [0.5, 0.1],
        "perturb": "w"
    }"#;
    let spec = SystemSpec::from_json(text).unwrap();
    let again = SystemSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&spec).unwrap(), serde_json::to_value(&again).unwrap());
    let sys = spec.build().unwrap();
    let f = sys.interior_field(0, &[0.5, 0.1]);
    assert_abs_diff_eq!(f[0], 0.5 - 0.2 - 0.125 - 0.005, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], 1.0 + 0.1 - 0.025 - 0.001, epsilon = 1e-15);
    check_derivatives(&sys, |r| vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);

    let bad = text.replace("\"mu\", \"powers\": [1, 0]", "\"nu\", \"powers\": [1, 0]");
    assert!(matches!(SystemSpec::from_json(&bad).unwrap().build(), Err(Error::ContractViolation(_))));
    assert!(matches!(SystemSpec::from_json("{"), Err(Error::ContractViolation(_))));
}

#[test]
fn rational_components() {
    let text = r#"{
        "name": "rational",
        "parameters": {"a": 2.0},
        "field": [
            {"num": [{"coef": 1.0, "powers": [0, 1]}], "den": [{"coef": 1.0, "powers": [0, 0]}, {"coef": 1.0, "param": "a", "powers": [2, 0]}]},
            {"num": [{"coef": -1.0, "powers": [1, 0]}]}
        ],
        "anchor": {"kind": "timing", "index": 0},
        "initial_guess": [0.3, 0.0],
        "perturb": "a"
    }"#;
    let sys = SystemSpec::from_json(text).unwrap().build().unwrap();
    let f = sys.interior_field(0, &[0.5, 3.0]);
    assert_abs_diff_eq!(f[0], 3.0 / 1.5, epsilon = 1e-15);
    check_derivatives(&sys, |r| vec![r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
}

proptest! {
    #[test]
    fn periodic_difference_is_antisymmetric(t in 0.0f64..1.0, p in 0.0f64..1.0, period in 0.1f64..20.0) {
        let (a, b) = (t * period, p * period);
        let d = periodic_difference(a, b, period).unwrap();
        let e = periodic_difference(b, a, period).unwrap();
        prop_assert!(d >= -period / 2.0 && d <= period / 2.0);
        if (d.abs() - period / 2.0).abs() > 1e-12 * period {
            prop_assert!((d + e).abs() <= 1e-12 * period);
        }
        let shifted = wrap_phase(b + d, period);
        prop_assert!(periodic_difference(shifted, a, period).unwrap().abs() <= 1e-9 * period);
    }

    #[test]
    fn wrap_phase_lands_in_range(t in -1e4f64..1e4, period in 0.1f64..20.0) {
        let w = wrap_phase(t, period);
        prop_assert!((0.0..period).contains(&w));
        let k = ((t - w) / period).round();
        prop_assert!((t - w - k * period).abs() <= 1e-9 * (1.0 + t.abs()));
    }

    #[test]
    fn planar_sliding_field_is_tangent(wall in 0usize..4, s in -0.999f64..0.999, alpha in 0.05f64..0.95) {
        let sys = PlanarModel::new(alpha, 1.0).unwrap().system().unwrap();
        let p = wall_point(wall, s);
        let v = sys.sliding_field(&p, wall).unwrap();
        let n = sys.check_boundary(wall).unwrap().normal_vec();
        prop_assert_eq!(n.dot(&v), 0.0);
        let inside = sys.in_sliding_region(&p, wall).unwrap();
        let lift = sys.liftoff_indicator(&p, wall).unwrap();
        prop_assert_eq!(inside, lift > 0.0);
    }

    #[test]
    fn stick_slip_sliding_region_is_below_liftoff(x in -3.0f64..3.0, c in 0.0f64..0.5, u in 0.1f64..1.0) {
        let model = StickSlipModel { c, u, ..StickSlipModel::default() };
        let sys = model.system().unwrap();
        let p = [x, u];
        let v = sys.sliding_field(&p, 0).unwrap();
        prop_assert_eq!(v[1], 0.0);
        let x_lift = model.liftoff_position();
        if (x - x_lift).abs() > 1e-12 {
            prop_assert_eq!(sys.in_sliding_region(&p, 0).unwrap(), x < x_lift);
        }
    }
}
