//! Event-driven integration of a Filippov system: interior flow, landings, sliding, liftoffs
//! and crossings of transversal surfaces.

use nalgebra::DVector;
use roots::{find_root_brent, Convergency};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{DenseStep, Stepper, Tolerances};
use crate::system::{dot, BoundaryId, FilippovSystem, Mode, SurfaceId, SurfaceRole, GRAZING_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Landing(BoundaryId),
    Liftoff(BoundaryId),
    /// Crossing of a surface across which the field may switch.
    TransversalCrossing(SurfaceId),
    /// Crossing of a surface that only delimits timing regions.
    TimingCrossing(SurfaceId),
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EventKind::Landing(b) => write!(f, "landing:{b}"),
            EventKind::Liftoff(b) => write!(f, "liftoff:{b}"),
            EventKind::TransversalCrossing(s) => write!(f, "crossing:{s}"),
            EventKind::TimingCrossing(s) => write!(f, "timing:{s}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub time: f64,
    pub state: Vec<f64>,
    pub mode_before: Mode,
    pub mode_after: Mode,
    /// Unit normal of the wall or surface involved.
    pub normal: Vec<f64>,
    /// Effective field just before the event.
    pub f_minus: Vec<f64>,
    /// Effective field just after the event.
    pub f_plus: Vec<f64>,
}

impl EventRecord {
    pub fn state_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.state)
    }

    pub fn normal_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.normal)
    }

    pub fn f_minus_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.f_minus)
    }

    pub fn f_plus_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.f_plus)
    }
}

/// Piece of trajectory in a single mode with its continuous extension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub mode: Mode,
    pub t0: f64,
    pub t1: f64,
    pub steps: Vec<DenseStep>,
}

impl Segment {
    fn locate(&self, t: f64) -> &DenseStep {
        let idx = self.steps.partition_point(|s| s.t1() < t);
        &self.steps[idx.min(self.steps.len() - 1)]
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.locate(t).eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.locate(t).eval(t)
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HybridOptions {
    pub tol: Tolerances,
    /// Event times are located to this absolute accuracy.
    pub time_tol: f64,
    /// Keep the continuous extension of every step.
    pub keep_dense: bool,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self { tol: Tolerances::default(), time_tol: 1e-12, keep_dense: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
enum Indicator {
    Land(BoundaryId),
    Lift(BoundaryId),
    Cross(SurfaceId),
}

struct TimeConvergency {
    tol: f64,
}

impl Convergency<f64> for TimeConvergency {
    fn is_root_found(&mut self, y: f64) -> bool {
        y == 0.0
    }
    fn is_converged(&mut self, a: f64, b: f64) -> bool {
        (a - b).abs() < self.tol
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter > 200
    }
}

fn bisect(g: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, ga: f64, tol: f64) -> f64 {
    let sa = ga.signum();
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if g(m).signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

/// Trajectory of a Filippov system advanced step by step.
pub struct Flow<'a> {
    sys: &'a FilippovSystem,
    opts: HybridOptions,
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: Mode,
    stepper: Stepper,
    segments: Vec<Segment>,
    current: Option<Segment>,
    buf: Vec<f64>,
}

impl<'a> Flow<'a> {
    /// Starts at `x0`, inferring the mode from wall contact.
    pub fn new(sys: &'a FilippovSystem, x0: &[f64], t0: f64, opts: HybridOptions) -> Result<Self> {
        let mode = sys.infer_mode(x0)?;
        Self::with_mode(sys, x0, mode, t0, opts)
    }

    pub fn with_mode(sys: &'a FilippovSystem, x0: &[f64], mode: Mode, t0: f64, opts: HybridOptions) -> Result<Self> {
        sys.check_dim(x0)?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::ContractViolation("initial state is not finite".into()));
        }
        let viol = sys.domain_violation(x0);
        if viol > 1e3 * sys.event_tol {
            return Err(Error::DriftError { time: t0, violation: viol });
        }
        let mut x = x0.to_vec();
        for b in mode.sliding_boundaries() {
            sys.boundaries[b].project(&mut x);
        }
        let n = sys.dim();
        Ok(Self {
            sys,
            opts,
            t: t0,
            x,
            mode,
            stepper: Stepper::new(n, opts.tol),
            segments: Vec::new(),
            current: None,
            buf: vec![0.0; n],
        })
    }

    pub fn n_steps(&self) -> usize {
        self.stepper.n_steps
    }

    fn indicators(&self) -> Vec<Indicator> {
        let mut v = Vec::new();
        for b in 0..self.sys.boundaries.len() {
            if self.mode.is_sliding_on(b) {
                v.push(Indicator::Lift(b));
            } else {
                v.push(Indicator::Land(b));
            }
        }
        for s in 0..self.sys.surfaces.len() {
            v.push(Indicator::Cross(s));
        }
        v
    }

    fn value(&self, ind: Indicator, x: &[f64], scratch: &mut [f64]) -> f64 {
        match ind {
            Indicator::Land(b) => self.sys.boundaries[b].level(x),
            Indicator::Lift(b) => {
                self.sys.interior_into(self.mode.region, x, scratch);
                dot(&self.sys.boundaries[b].normal, scratch)
            }
            Indicator::Cross(s) => self.sys.surfaces[s].level(x),
        }
    }

    fn crossed(ind: Indicator, g0: f64, g1: f64) -> bool {
        match ind {
            Indicator::Land(_) => g0 < 0.0 && g1 >= 0.0,
            Indicator::Lift(_) => g0 > 0.0 && g1 <= 0.0,
            Indicator::Cross(_) => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
        }
    }

    fn open_segment(&mut self) {
        if self.opts.keep_dense && self.current.is_none() {
            self.current = Some(Segment { mode: self.mode, t0: self.t, t1: self.t, steps: Vec::new() });
        }
    }

    fn close_segment(&mut self) {
        if let Some(mut seg) = self.current.take() {
            seg.t1 = self.t;
            if !seg.steps.is_empty() {
                self.segments.push(seg);
            }
        }
    }

    /// Segments completed so far, including the open one.
    pub fn take_segments(&mut self) -> Vec<Segment> {
        self.close_segment();
        std::mem::take(&mut self.segments)
    }

    /// Advances to `t_end`, reporting events to `on_event`; returns the event that stopped the run.
    pub fn advance(
        &mut self,
        t_end: f64,
        mut on_event: impl FnMut(&EventRecord, &Flow) -> Control,
    ) -> Result<Option<EventRecord>> {
        let sys = self.sys;
        let mut x_end = vec![0.0; sys.dim()];
        while self.t < t_end {
            self.open_segment();
            let mode = self.mode;
            let mut rhs = |_t: f64, x: &[f64], out: &mut [f64]| sys.mode_into(mode, x, out);
            let x_start = self.x.clone();
            let t_start = self.t;
            let mut t_new = self.t;
            x_end.copy_from_slice(&self.x);
            let mut step = self.stepper.step(&mut rhs, &mut t_new, &mut x_end, t_end)?;
            let mut hits = self.detect(&step, &x_start, &x_end, t_start, t_new)?;
            for _ in 0..8 {
                let Some(t_ev) = hits.iter().map(|h| h.0).reduce(f64::min) else { break };
                if t_new - t_ev <= self.time_tol_at(t_new) + 1e-9 * (t_new - t_start) {
                    break;
                }
                // Repeat the step so that it ends at the event and all stages stay on the near side.
                self.stepper.reset();
                t_new = t_start;
                x_end.copy_from_slice(&x_start);
                step = self.stepper.step(&mut rhs, &mut t_new, &mut x_end, t_ev)?;
                hits = self.detect(&step, &x_start, &x_end, t_start, t_new)?;
            }

            if hits.is_empty() {
                self.t = t_new;
                self.x.copy_from_slice(&x_end);
                if !self.mode.is_interior() {
                    for b in self.mode.sliding_boundaries() {
                        sys.boundaries[b].project(&mut self.x);
                    }
                    self.stepper.reset();
                } else {
                    let viol = sys.domain_violation(&self.x);
                    if viol > 1e-6 {
                        return Err(Error::DriftError { time: self.t, violation: viol });
                    }
                }
                if let Some(seg) = self.current.as_mut() {
                    seg.steps.push(step);
                }
                continue;
            }

            hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let t_ev = hits[0].0;
            let mut x_ev = vec![0.0; sys.dim()];
            step.eval_into(t_ev, &mut x_ev);
            for b in self.mode.sliding_boundaries() {
                sys.boundaries[b].project(&mut x_ev);
            }
            if let Some(seg) = self.current.as_mut() {
                seg.steps.push(step);
            }
            self.t = t_ev;
            self.x = x_ev;
            self.close_segment();
            self.stepper.reset();

            let simultaneous: Vec<Indicator> = hits
                .iter()
                .filter(|(tr, _)| *tr - t_ev <= self.time_tol_at(t_ev))
                .map(|(_, ind)| *ind)
                .collect();
            let mut stop = None;
            for ind in simultaneous {
                let rec = self.apply_event(ind)?;
                if on_event(&rec, self) == Control::Stop && stop.is_none() {
                    stop = Some(rec);
                }
            }
            if stop.is_some() {
                return Ok(stop);
            }
        }
        self.close_segment();
        Ok(None)
    }

    fn detect(
        &mut self,
        step: &DenseStep,
        x_start: &[f64],
        x_end: &[f64],
        t_start: f64,
        t_new: f64,
    ) -> Result<Vec<(f64, Indicator)>> {
        let sys = self.sys;
        let mut scratch = vec![0.0; sys.dim()];
        let mut hits = Vec::new();
        for ind in self.indicators() {
            let g0 = self.value(ind, x_start, &mut scratch);
            let g1 = self.value(ind, x_end, &mut scratch);
            if !Self::crossed(ind, g0, g1) {
                continue;
            }
            let tr = self.locate_root(step, ind, t_start, t_new, g0)?;
            if let Indicator::Cross(s) = ind {
                step.eval_into(tr, &mut self.buf);
                if !sys.surfaces[s].active_at(&self.buf) {
                    continue;
                }
            }
            hits.push((tr, ind));
        }
        Ok(hits)
    }

    /// Event time accuracy at time `t`, never finer than the float spacing there.
    fn time_tol_at(&self, t: f64) -> f64 {
        self.opts.time_tol.max(8.0 * f64::EPSILON * t.abs())
    }

    fn locate_root(&mut self, step: &DenseStep, ind: Indicator, ta: f64, tb: f64, g0: f64) -> Result<f64> {
        let sys = self.sys;
        let mode = self.mode;
        let mut x = vec![0.0; sys.dim()];
        let mut scratch = vec![0.0; sys.dim()];
        let mut g = |t: f64| -> f64 {
            step.eval_into(t, &mut x);
            match ind {
                Indicator::Land(b) => sys.boundaries[b].level(&x),
                Indicator::Lift(b) => {
                    sys.interior_into(mode.region, &x, &mut scratch);
                    dot(&sys.boundaries[b].normal, &scratch)
                }
                Indicator::Cross(s) => sys.surfaces[s].level(&x),
            }
        };
        let ttol = self.time_tol_at(tb);
        let mut conv = TimeConvergency { tol: ttol };
        let mut tr = match find_root_brent(ta, tb, &mut g, &mut conv) {
            Ok(t) => t,
            Err(_) => bisect(&mut g, ta, tb, g0, ttol),
        };
        let pre_sign = g0.signum();
        let post = |v: f64| if pre_sign < 0.0 { v >= 0.0 } else { v <= 0.0 };
        let mut nudge = ttol;
        let mut guard = 0;
        while !post(g(tr)) && tr < tb {
            tr = (tr + nudge).min(tb);
            nudge *= 2.0;
            guard += 1;
            if guard > 60 {
                tr = tb;
                break;
            }
        }
        Ok(tr)
    }

    fn apply_event(&mut self, ind: Indicator) -> Result<EventRecord> {
        let sys = self.sys;
        let before = self.mode;
        let f_minus = sys.mode_field(before, &self.x);
        let (kind, normal, after) = match ind {
            Indicator::Land(b) => {
                let wall = &sys.boundaries[b];
                wall.project(&mut self.x);
                let fi = sys.interior_field(before.region, &self.x);
                let nf = dot(&wall.normal, fi.as_slice());
                if nf < GRAZING_TOL {
                    return Err(Error::GrazingError { boundary: b, time: self.t, normal_velocity: nf });
                }
                (EventKind::Landing(b), wall.normal.clone(), before.with_sliding(b))
            }
            Indicator::Lift(b) => {
                (EventKind::Liftoff(b), sys.boundaries[b].normal.clone(), before.without_sliding(b))
            }
            Indicator::Cross(s) => {
                let surf = &sys.surfaces[s];
                let mut probe = self.x.clone();
                for (p, fm) in probe.iter_mut().zip(f_minus.iter()) {
                    *p += 1e-9 * fm;
                }
                let region = sys.region_of(&probe);
                let kind = match surf.role {
                    SurfaceRole::Switching => EventKind::TransversalCrossing(s),
                    SurfaceRole::Timing => EventKind::TimingCrossing(s),
                };
                (kind, surf.normal.clone(), Mode { region, ..before })
            }
        };
        self.mode = after;
        for b in after.sliding_boundaries() {
            sys.boundaries[b].project(&mut self.x);
        }
        let f_plus = sys.mode_field(after, &self.x);
        Ok(EventRecord {
            kind,
            time: self.t,
            state: self.x.clone(),
            mode_before: before,
            mode_after: after,
            normal,
            f_minus: f_minus.as_slice().to_vec(),
            f_plus: f_plus.as_slice().to_vec(),
        })
    }
}

/// Integrates from `x0` over `[0, t_end]`, returning segments and all events.
pub fn integrate(
    sys: &FilippovSystem,
    x0: &[f64],
    t_end: f64,
    opts: HybridOptions,
) -> Result<(Vec<Segment>, Vec<EventRecord>)> {
    let mut flow = Flow::new(sys, x0, 0.0, HybridOptions { keep_dense: true, ..opts })?;
    let mut events = Vec::new();
    flow.advance(t_end, |e, _| {
        events.push(e.clone());
        Control::Continue
    })?;
    Ok((flow.take_segments(), events))
}
