#![allow(dead_code)]

use std::sync::OnceLock;

use lcsc::cycle::{CycleOptions, LimitCycle};
use lcsc::experiments::{planar_cycle, planar_regional_cycle, stick_slip_cycle};
use lcsc::models::planar::{PlanarModel, PlanarRegions};
use lcsc::models::stick_slip::StickSlipModel;

pub fn planar() -> &'static LimitCycle {
    static LC: OnceLock<LimitCycle> = OnceLock::new();
    LC.get_or_init(|| planar_cycle(&PlanarModel::default(), CycleOptions::default()).unwrap())
}

pub fn planar_regional() -> &'static LimitCycle {
    static LC: OnceLock<LimitCycle> = OnceLock::new();
    LC.get_or_init(|| {
        planar_regional_cycle(&PlanarModel::default(), PlanarRegions::default(), CycleOptions::default()).unwrap()
    })
}

pub fn stick_slip() -> &'static LimitCycle {
    static LC: OnceLock<LimitCycle> = OnceLock::new();
    LC.get_or_init(|| stick_slip_cycle(&StickSlipModel::default(), "c", &[1.0, 0.0], CycleOptions::default()).unwrap())
}

pub fn coupled_unit() -> &'static LimitCycle {
    static LC: OnceLock<LimitCycle> = OnceLock::new();
    LC.get_or_init(|| {
        let m = StickSlipModel::coupled_unit();
        m.limit_cycle(&m.system().unwrap(), &[1.0, 0.0], CycleOptions::default()).unwrap()
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
