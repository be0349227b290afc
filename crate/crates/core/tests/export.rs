mod common;

use lcsc::export::{format_number, write_json, Plot, Series, Table};
use lcsc::figures::{cycle_table, h_table, iprc_table, ltrc_table, plot_columns, psi_table, variational_table};
use lcsc::experiments::{stick_slip_phases, FdCycles, FD_STEP};
use lcsc::cycle::CycleOptions;
use lcsc::phase::HFunction;
use lcsc::sensitivity::{iprc, ltrc};
use proptest::prelude::*;

#[test]
fn csv_layout() {
    let mut t = Table::new(["t", "x"]).comment("first line\nsecond line");
    t.push(vec![0.0, 1.5]).unwrap();
    t.push(vec![0.1, f64::NAN]).unwrap();
    assert!(t.push(vec![1.0]).is_err());
    let s = t.to_csv_string();
    assert_eq!(s, "# first line\n# second line\nt,x\n0.0,1.5\n0.1,nan\n");
    let back = Table::parse_csv(&s).unwrap();
    assert_eq!(back.columns, t.columns);
    assert_eq!(back.comments, vec!["first line", "second line"]);
    assert!(back.rows[1][1].is_nan());
    assert_eq!(format_number(f64::INFINITY), "inf");
    assert_eq!(format_number(-f64::INFINITY), "-inf");
    assert!(Table::parse_csv("a,b\n1,x\n").is_err());
}

#[test]
fn files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Table::new(["a", "b"]);
    t.push(vec![1.0, 2.0]).unwrap();
    let path = dir.path().join("t.csv");
    t.save(&path).unwrap();
    assert_eq!(Table::parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap(), t);
    let json = dir.path().join("v.json");
    write_json(&json, &serde_json::json!({"period": 6.5})).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["period"], 6.5);
    assert!(t.save(&dir.path().join("missing").join("t.csv")).is_err());
}

#[test]
fn svg_plot() {
    let p = Plot::new("a < b & c", "t", "x")
        .with(Series::new("one", vec![(0.0, 0.0), (1.0, 1.0), (2.0, f64::NAN)]))
        .with(Series::new("two", vec![(0.0, 1.0), (1.0, 0.0)]).dashed())
        .band(0.2, 0.4);
    let s = p.to_svg();
    assert!(s.starts_with("<svg"));
    assert!(s.trim_end().ends_with("</svg>"));
    assert_eq!(s.matches("<polyline").count(), 2);
    assert_eq!(s.matches("stroke-dasharray").count(), 2);
    assert!(s.contains("a &lt; b &amp; c"));
    assert!(!s.contains("NaN"));
    let empty = Plot::new("", "", "").to_svg();
    assert!(empty.contains("</svg>"));
}

#[test]
fn figure_tables() {
    let lc = common::planar();
    let c = cycle_table(lc, &["x", "y"], 100).unwrap();
    assert_eq!(c.columns, ["t", "x", "y", "region", "sliding"]);
    assert_eq!(c.rows.len(), 101);
    assert!(c.comments.iter().filter(|l| l.contains("liftoff")).count() == 4);
    let x = c.column("x").unwrap();
    let y = c.column("y").unwrap();
    assert!(x.iter().chain(&y).all(|v| v.abs() <= 1.0 + 1e-9));
    assert!((x[0] - 1.0).abs() < 1e-9 && (y[0] - 0.2).abs() < 1e-9);

    let z = iprc(lc).unwrap();
    let t = iprc_table(lc, &z, &["x", "y"], 200).unwrap();
    assert!(t.column("f_dot_z").unwrap().iter().all(|v| (v - 1.0).abs() < 1e-6));

    let v = variational_table(lc, &[-1e-3, 5e-4], &["x", "y"], 50).unwrap();
    assert_eq!(v.columns.len(), 5);
    let ux = v.column("u_x").unwrap();
    let dx = v.column("direct_x").unwrap();
    assert!(ux.iter().zip(&dx).filter(|(a, b)| (*a - *b).abs() > 1e-4).count() < 5);

    let ss = common::stick_slip();
    let fd = FdCycles::new(ss, FD_STEP, CycleOptions::default()).unwrap();
    let [slip, _] = stick_slip_phases(ss).unwrap();
    let l = ltrc(ss, slip, &fd.event_shift(slip.entry)).unwrap();
    let lt = ltrc_table(&l, &["x", "v"], 40).unwrap();
    assert_eq!(lt.rows.len(), 40);
    assert!(lt.rows.iter().all(|r| r[0] >= l.t_in && r[0] <= l.t_out));

    let p = plot_columns(&c, "cycle", "state", &["x", "y", "absent"], &["y"]);
    assert_eq!(p.series.len(), 2);
    assert!(p.series[1].dashed);
}

#[test]
fn phase_tables() {
    let spline = lcsc::phase::PeriodicSpline::new(vec![0.0, 1.0, 0.0, -1.0], 4.0).unwrap();
    let h = HFunction {
        period: 4.0,
        psi: vec![0.0, 1.0, 2.0, 3.0],
        h: vec![0.5, 0.0, 0.5, 1.0],
        h_odd: vec![0.0, 1.0, 0.0, -1.0],
        spline,
    };
    let t = h_table(&h).unwrap();
    assert_eq!(t.columns, ["psi", "H", "H_odd"]);
    assert!(t.comments.iter().any(|c| c.contains("unstable")));
    assert!(t.comments.iter().any(|c| c.contains(" stable")));
    let p = psi_table(&[(0.0, 0.1), (10.0, 0.2)], "phase model").unwrap();
    assert_eq!(p.rows, vec![vec![0.0, 0.1], vec![10.0, 0.2]]);
}

proptest! {
    #[test]
    fn csv_round_trip(rows in proptest::collection::vec(proptest::collection::vec(proptest::num::f64::ANY, 3), 0..20)) {
        let mut t = Table::new(["a", "b", "c"]).comment("round trip");
        for r in &rows {
            t.push(r.clone()).unwrap();
        }
        let back = Table::parse_csv(&t.to_csv_string()).unwrap();
        prop_assert_eq!(back.rows.len(), rows.len());
        for (x, y) in back.rows.iter().flatten().zip(rows.iter().flatten()) {
            prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
        }
    }
}
