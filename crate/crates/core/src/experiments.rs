//! Ready-made pipelines on the built-in models, shared by the command-line tool and the tests.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cycle::{perturbed_cycle, rescale_time, shape_displacement, CycleOptions, LimitCycle, RescalingKind, TimeRescaling};
use crate::error::{Error, Result};
use crate::hybrid::EventKind;
use crate::models::coupled::{spring_coupling, CoupledModel};
use crate::models::planar::{alpha_perturbation, regional_perturbation, PlanarModel, PlanarRegions};
use crate::models::stick_slip::{param_perturbation, StickSlipModel};
use crate::phase::{backward_trajectory, h_function, kink_scan, HFunction, KinkSample, PhaseField};
use crate::sensitivity::{iprc, isrc, ltrc, period_shift, relative_shape_error, Iprc, Isrc, Ltrc, RateSchedule, TimingRegion};
use crate::system::{wrap_phase, StateVector};

/// Default step of the central differences that supply initial and entry shifts.
pub const FD_STEP: f64 = 1e-4;
/// Default number of quadrature nodes for shape comparisons.
pub const SHAPE_GRID: usize = 4000;

/// Index of the first event of the given kind on the cycle.
pub fn event_index(lc: &LimitCycle, kind: EventKind) -> Result<usize> {
    lc.events
        .iter()
        .position(|e| e.kind == kind)
        .ok_or_else(|| Error::ContractViolation(format!("the cycle has no {kind} event")))
}

/// Cycles at `+h` and `-h` along the attached perturbation.
#[derive(Debug, Clone)]
pub struct FdCycles {
    pub plus: LimitCycle,
    pub minus: LimitCycle,
    pub h: f64,
}

impl FdCycles {
    pub fn new(lc: &LimitCycle, h: f64, opts: CycleOptions) -> Result<Self> {
        Ok(Self { plus: perturbed_cycle(lc, h, opts)?, minus: perturbed_cycle(lc, -h, opts)?, h })
    }

    /// Central-difference derivative of the state at event `j`.
    pub fn event_shift(&self, j: usize) -> DVector<f64> {
        (self.plus.events[j].state_vec() - self.minus.events[j].state_vec()) / (2.0 * self.h)
    }

    pub fn period_slope(&self) -> f64 {
        (self.plus.period - self.minus.period) / (2.0 * self.h)
    }
}

/// Time rescaling used to compare a perturbed cycle with the shape response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rescale {
    Uniform,
    /// One rate per region; the regions must tile the cycle.
    Piecewise(Vec<TimingRegion>),
}

/// Unperturbed cycle with its iPRC, period sensitivity and finite-difference neighbours.
pub struct SrcContext {
    pub lc: LimitCycle,
    pub z: Iprc,
    pub t1: f64,
    pub fd: FdCycles,
    pub opts: CycleOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeComparison {
    pub eps: f64,
    pub section: usize,
    pub t1: f64,
    pub period_eps: f64,
    pub ltrcs: Vec<Ltrc>,
    pub isrc: Isrc,
    pub rescaling: TimeRescaling,
    pub times: Vec<f64>,
    /// Quadrature weights of `times`.
    pub weights: Vec<f64>,
    /// `gamma_eps(tau(t)) - gamma(t)`.
    pub displacement: Vec<StateVector>,
    /// `eps gamma1(t)`.
    pub predicted: Vec<StateVector>,
    pub rel_error: f64,
}

impl SrcContext {
    pub fn new(lc: LimitCycle, fd_step: f64, opts: CycleOptions) -> Result<Self> {
        let z = iprc(&lc)?;
        let t1 = period_shift(&lc, &z);
        let fd = FdCycles::new(&lc, fd_step, opts)?;
        Ok(Self { lc, z, t1, fd, opts })
    }

    /// lTRC of each region, with entry shifts from the finite-difference cycles.
    pub fn region_ltrcs(&self, regions: &[TimingRegion]) -> Result<Vec<Ltrc>> {
        regions.iter().map(|r| ltrc(&self.lc, *r, &self.fd.event_shift(r.entry))).collect()
    }

    /// Shape response from event `section` compared with the cycle perturbed by `eps`.
    pub fn compare(&self, eps: f64, section: usize, rescale: &Rescale, n_grid: usize) -> Result<ShapeComparison> {
        let lc = &self.lc;
        let lc_eps = perturbed_cycle(lc, eps, self.opts)?;
        let (ltrcs, schedule, rescaling) = match rescale {
            Rescale::Uniform => (
                Vec::new(),
                RateSchedule::uniform(self.t1 / lc.period, lc.period),
                rescale_time(lc, &lc_eps, RescalingKind::Uniform, &[section])?,
            ),
            Rescale::Piecewise(regions) => {
                let ltrcs = self.region_ltrcs(regions)?;
                let pairs: Vec<(TimingRegion, f64)> = ltrcs.iter().map(|l| (l.region, l.nu1)).collect();
                let schedule = RateSchedule::from_regions(lc, &pairs)?;
                let entries: Vec<usize> = regions.iter().map(|r| r.entry).collect();
                let rescaling = rescale_time(lc, &lc_eps, RescalingKind::Piecewise, &entries)?;
                (ltrcs, schedule, rescaling)
            }
        };
        let gamma1 = isrc(lc, section, &self.fd.event_shift(section), &schedule)?;
        let (times, weights) = shape_grid(lc, &lc_eps, &rescaling, n_grid);
        let displacement = shape_displacement(lc, &lc_eps, &rescaling, &times);
        let predicted = times.iter().map(|&t| gamma1.curve.eval(t) * eps).collect();
        let rel_error = relative_shape_error(&gamma1.curve, eps, &displacement, &times, &weights);
        Ok(ShapeComparison {
            eps,
            section,
            t1: self.t1,
            period_eps: lc_eps.period,
            ltrcs,
            isrc: gamma1,
            rescaling,
            times,
            weights,
            displacement,
            predicted,
            rel_error,
        })
    }
}

/// Midpoint nodes and weights over `[0, period)`, split wherever either cycle has an event so
/// that no panel straddles a kink or jump of the displacement.
pub fn shape_grid(lc: &LimitCycle, lc_eps: &LimitCycle, map: &TimeRescaling, n: usize) -> (Vec<f64>, Vec<f64>) {
    let tp = lc.period;
    let mut cuts = vec![0.0, tp];
    for j in 0..lc.events.len() {
        cuts.push(lc.event_phase(j));
        cuts.push(wrap_phase(map.inverse(lc_eps.event_phase(j)), tp));
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut times = Vec::with_capacity(n + cuts.len());
    let mut weights = Vec::with_capacity(n + cuts.len());
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        let m = ((len / tp * n as f64).ceil() as usize).max(1);
        let h = len / m as f64;
        for i in 0..m {
            times.push(w[0] + h * (i as f64 + 0.5));
            weights.push(h);
        }
    }
    (times, weights)
}

/// Planar cycle with the global `alpha` perturbation attached.
pub fn planar_cycle(model: &PlanarModel, opts: CycleOptions) -> Result<LimitCycle> {
    let sys = model.system()?.with_perturbation(alpha_perturbation())?;
    model.limit_cycle(&sys, opts)
}

/// Planar cycle split into two timing regions, with the region-I perturbation attached.
pub fn planar_regional_cycle(model: &PlanarModel, regions: PlanarRegions, opts: CycleOptions) -> Result<LimitCycle> {
    let sys = model.system_with_regions(regions)?.with_perturbation(regional_perturbation())?;
    model.limit_cycle(&sys, opts)
}

/// Region I (entry to exit section) and region II (the rest of the cycle).
pub fn planar_timing_regions(lc: &LimitCycle) -> Result<[TimingRegion; 2]> {
    let a = event_index(lc, EventKind::TimingCrossing(0))?;
    let b = event_index(lc, EventKind::TimingCrossing(1))?;
    Ok([TimingRegion { entry: a, exit: b }, TimingRegion { entry: b, exit: a }])
}

/// Stick-slip cycle through the reference point with one parameter perturbed.
pub fn stick_slip_cycle(model: &StickSlipModel, perturb: &str, guess: &[f64], opts: CycleOptions) -> Result<LimitCycle> {
    let sys = model.system()?;
    let p = param_perturbation(&sys, perturb)?;
    model.limit_cycle(&sys.with_perturbation(p)?, guess, opts)
}

/// Slip phase (liftoff to landing) and stick phase (landing to liftoff).
pub fn stick_slip_phases(lc: &LimitCycle) -> Result<[TimingRegion; 2]> {
    let lift = event_index(lc, EventKind::Liftoff(0))?;
    let land = event_index(lc, EventKind::Landing(0))?;
    Ok([TimingRegion { entry: lift, exit: land }, TimingRegion { entry: land, exit: lift }])
}

/// Uncoupled oscillator, its iPRC and the interaction function of the spring coupling.
pub struct CouplingAnalysis {
    pub model: CoupledModel,
    pub lc: LimitCycle,
    pub z: Iprc,
    pub h: HFunction,
}

pub fn coupling_analysis(model: CoupledModel, n_psi: usize, opts: CycleOptions) -> Result<CouplingAnalysis> {
    let sys = model.unit.system()?;
    let lc = model.unit.limit_cycle(&sys, &[1.0, 0.0], opts)?;
    let z = iprc(&lc)?;
    let g = spring_coupling(model.unit.m);
    let h = h_function(&lc, &z, &g, n_psi)?;
    Ok(CouplingAnalysis { model, lc, z, h })
}

impl CouplingAnalysis {
    /// Joint state with oscillator 1 just after liftoff and oscillator 2 lagging by `lag`.
    pub fn lagged_start(&self, lag: f64) -> [f64; 4] {
        let a = self.lc.state_at(0.0);
        let b = self.lc.state_at(self.lc.period - lag);
        [a[0], a[1], b[0], b[1]]
    }
}

/// Distance of the kink-scan evaluation points from each polyline.
pub const KINK_OFFSET: f64 = 0.01;
/// Wall nodes closer than this below a liftoff point are left out of the perpendicularity check.
pub const WALL_LIFTOFF_MARGIN: f64 = 0.2;
/// Backward integration time and resolution of the scanned trajectories.
const KINK_DURATION: f64 = 3.0;
const KINK_POINTS: usize = 300;
/// Vertices dropped near the starting wall, where grid gradients are one-sided.
const KINK_SKIP: usize = 30;

#[derive(Debug, Clone, Serialize)]
pub struct KinkReport {
    pub osculating: Vec<KinkSample>,
    pub control_starts: Vec<[f64; 2]>,
    pub controls: Vec<KinkSample>,
    pub osculating_median: f64,
    pub control_median: f64,
    /// Largest `|dphi/dn| / |grad phi|` over grid nodes on the sliding walls.
    pub wall_normal_defect: f64,
}

impl KinkReport {
    pub fn ratio(&self) -> f64 {
        self.osculating_median / self.control_median
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn rotate(k: usize, p: [f64; 2]) -> [f64; 2] {
    let (c, s) = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][k % 4];
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Sliding-wall points spread over the four walls, at least `2 margin` from corners and
/// `4 margin` from liftoff points.
pub fn kink_control_starts(model: &PlanarModel, count: usize, seed: u64, margin: f64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = model.alpha / model.omega - 4.0 * margin;
    (0..count).map(|k| rotate(k, [1.0, rng.gen_range(-1.0 + 2.0 * margin..top)])).collect()
}

fn scan_from(field: &PhaseField, sys: &crate::system::FilippovSystem, start: [f64; 2]) -> Result<Vec<KinkSample>> {
    let tr = backward_trajectory(sys, &start, KINK_DURATION, KINK_POINTS)?;
    Ok(kink_scan(field, &tr[KINK_SKIP..], KINK_OFFSET))
}

/// Largest normal share of the phase gradient at grid nodes on the sliding part of the walls,
/// staying `corner_margin` away from corners and `liftoff_margin` below liftoff points. The
/// osculating trajectory is tangent to the wall at liftoff, so the one-sided stencils of nodes
/// just below it straddle the kink.
pub fn wall_normal_defect(field: &PhaseField, model: &PlanarModel, corner_margin: f64, liftoff_margin: f64) -> f64 {
    let (nx, ny) = (field.xs.len(), field.ys.len());
    let lift = model.alpha / model.omega;
    let mut worst: f64 = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            if !(i == 0 || j == 0 || i == nx - 1 || j == ny - 1) {
                continue;
            }
            let p = [field.xs[i], field.ys[j]];
            for k in 0..4 {
                let q = rotate(4 - k, p);
                if (q[0] - 1.0).abs() > 1e-12 || q[1] < -1.0 + corner_margin + 1e-9 || q[1] > lift - liftoff_margin - 1e-9 {
                    continue;
                }
                if let Some(g) = field.gradient_at_node(i, j) {
                    let n = rotate(k, [1.0, 0.0]);
                    let gn = g[0] * n[0] + g[1] * n[1];
                    let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
                    if norm > 0.0 {
                        worst = worst.max(gn.abs() / norm);
                    }
                }
            }
        }
    }
    worst
}

/// Normal-gradient jumps of the phase across the osculating trajectory through the east liftoff
/// point and across `n_controls` trajectories ending on sliding walls.
pub fn kink_experiment(lc: &LimitCycle, field: &PhaseField, model: &PlanarModel, n_controls: usize, seed: u64) -> Result<KinkReport> {
    let lift = model.liftoff_points()[0];
    let osculating = scan_from(field, &lc.system, lift)?;
    let control_starts = kink_control_starts(model, n_controls, seed, 0.1);
    let mut controls = Vec::new();
    for s in &control_starts {
        controls.extend(scan_from(field, &lc.system, *s)?);
    }
    Ok(KinkReport {
        osculating_median: median(osculating.iter().map(|k| k.jump).collect()),
        control_median: median(controls.iter().map(|k| k.jump).collect()),
        wall_normal_defect: wall_normal_defect(field, model, 0.1, WALL_LIFTOFF_MARGIN),
        osculating,
        control_starts,
        controls,
    })
}
