//! Periodic orbits anchored at a recurring event, their perturbations and time rescalings.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::hybrid::{Control, EventKind, EventRecord, Flow, HybridOptions, Segment};
use crate::ode::Tolerances;
use crate::system::{wrap_phase, FilippovSystem, Mode, StateVector};

/// Event that marks phase zero of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor(pub EventKind);

impl Anchor {
    pub fn liftoff(b: usize) -> Self {
        Anchor(EventKind::Liftoff(b))
    }

    pub fn landing(b: usize) -> Self {
        Anchor(EventKind::Landing(b))
    }

    pub fn matches(&self, e: &EventKind) -> bool {
        self.0 == *e
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CycleOptions {
    pub tol: Tolerances,
    /// Successive anchor states closer than this count as converged.
    pub conv_tol: f64,
    pub max_cycles: usize,
    /// Time budget for the search.
    pub max_time: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self { tol: Tolerances::default(), conv_tol: 1e-9, max_cycles: 500, max_time: 1e5 }
    }
}

impl CycleOptions {
    fn hybrid(&self, keep_dense: bool) -> HybridOptions {
        HybridOptions { tol: self.tol, keep_dense, ..HybridOptions::default() }
    }
}

/// Periodic orbit from one anchor event to the next. Time zero is just after the anchor event;
/// the last recorded event is its recurrence at `t = period`.
#[derive(Debug, Clone)]
pub struct LimitCycle {
    pub system: FilippovSystem,
    pub anchor: Anchor,
    pub period: f64,
    pub x0: Vec<f64>,
    pub mode0: Mode,
    pub segments: Vec<Segment>,
    pub events: Vec<EventRecord>,
    pub tol: Tolerances,
    /// Distance between the anchor state and the state one period later.
    pub closure_error: f64,
}

impl LimitCycle {
    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Index of the segment containing `t` in `[0, period]`.
    pub fn segment_index(&self, t: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.t1 < t);
        idx.min(self.segments.len() - 1)
    }

    /// State at time `t`, periodically extended.
    pub fn state_at(&self, t: f64) -> StateVector {
        let tt = wrap_phase(t, self.period);
        self.segments[self.segment_index(tt)].eval(tt)
    }

    pub fn state_into(&self, t: f64, out: &mut [f64]) {
        let tt = wrap_phase(t, self.period);
        self.segments[self.segment_index(tt)].eval_into(tt, out);
    }

    pub fn mode_at(&self, t: f64) -> Mode {
        let tt = wrap_phase(t, self.period);
        self.segments[self.segment_index(tt)].mode
    }

    /// Effective field along the orbit.
    pub fn velocity_at(&self, t: f64) -> StateVector {
        let x = self.state_at(t);
        self.system.mode_field(self.mode_at(t), x.as_slice())
    }

    pub fn event_signature(&self) -> Vec<EventKind> {
        self.events.iter().map(|e| e.kind).collect()
    }

    /// Event time reduced to `[0, period)`, so the anchor sits at zero.
    pub fn event_phase(&self, j: usize) -> f64 {
        let t = self.events[j].time;
        if j + 1 == self.events.len() {
            0.0
        } else {
            t
        }
    }

    /// Samples `(t, x)` on a uniform grid of `n` points over one period.
    pub fn sample(&self, n: usize) -> Vec<(f64, StateVector)> {
        (0..n)
            .map(|i| {
                let t = self.period * i as f64 / n as f64;
                (t, self.state_at(t))
            })
            .collect()
    }

    /// Distance from `p` to the orbit, measured on a fine sample.
    pub fn distance_to(&self, p: &[f64], n: usize) -> f64 {
        let pv = DVector::from_column_slice(p);
        self.sample(n).iter().map(|(_, x)| (x - &pv).norm()).fold(f64::INFINITY, f64::min)
    }
}

/// Locates the periodic orbit reached from `x_guess` by iterating the anchor return map.
pub fn find_limit_cycle(
    sys: &FilippovSystem,
    x_guess: &[f64],
    anchor: Anchor,
    opts: CycleOptions,
) -> Result<LimitCycle> {
    contract(x_guess.iter().all(|v| v.is_finite()), || "initial guess is not finite".into())?;
    let mut flow = Flow::new(sys, x_guess, 0.0, opts.hybrid(false))?;
    let mut last: Option<Vec<f64>> = None;
    let mut count = 0usize;
    let mut found: Option<EventRecord> = None;
    let mut last_dist = f64::INFINITY;
    flow.advance(opts.max_time, |e, _| {
        if !anchor.matches(&e.kind) {
            return Control::Continue;
        }
        count += 1;
        if let Some(prev) = &last {
            last_dist = dist(prev, &e.state);
            if last_dist < opts.conv_tol {
                found = Some(e.clone());
                return Control::Stop;
            }
        }
        last = Some(e.state.clone());
        if count > opts.max_cycles {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    let ev = match found {
        Some(ev) => ev,
        None if count == 0 => {
            return Err(Error::AnchorError(format!("no {} event within t = {}", anchor.0, opts.max_time)))
        }
        None => {
            return Err(Error::NoCycleError(format!(
                "anchor states still differ by {last_dist:e} after {count} returns"
            )))
        }
    };
    cycle_from_anchor(sys, &ev.state, ev.mode_after, anchor, opts)
}

/// Integrates one period starting just after an anchor event.
pub fn cycle_from_anchor(
    sys: &FilippovSystem,
    x0: &[f64],
    mode0: Mode,
    anchor: Anchor,
    opts: CycleOptions,
) -> Result<LimitCycle> {
    let mut flow = Flow::with_mode(sys, x0, mode0, 0.0, opts.hybrid(true))?;
    let mut events = Vec::new();
    let stop = flow.advance(opts.max_time, |e, _| {
        events.push(e.clone());
        if anchor.matches(&e.kind) {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    let end = stop.ok_or_else(|| Error::AnchorError("anchor did not recur".into()))?;
    let segments = flow.take_segments();
    let closure_error = dist(&end.state, x0);
    Ok(LimitCycle {
        system: sys.clone(),
        anchor,
        period: end.time,
        x0: x0.to_vec(),
        mode0,
        segments,
        events,
        tol: opts.tol,
        closure_error,
    })
}

/// Cycle of the system perturbed by `eps`, seeded from the unperturbed anchor state.
pub fn perturbed_cycle(lc: &LimitCycle, eps: f64, opts: CycleOptions) -> Result<LimitCycle> {
    let sys = lc.system.perturbed(eps)?;
    let out = find_limit_cycle(&sys, &lc.x0, lc.anchor, opts)?;
    check_topology(lc, &out)?;
    Ok(out)
}

pub fn check_topology(a: &LimitCycle, b: &LimitCycle) -> Result<()> {
    let sa = a.event_signature();
    let sb = b.event_signature();
    if sa != sb {
        let fmt = |s: &[EventKind]| s.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        return Err(Error::TopologyChangeError(format!("[{}] vs [{}]", fmt(&sa), fmt(&sb))));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RescalingKind {
    Uniform,
    Piecewise,
}

/// Piecewise-linear, increasing map from unperturbed time to perturbed time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeRescaling {
    pub kind: RescalingKind,
    pub period0: f64,
    pub period_eps: f64,
    /// Knot times on the unperturbed cycle, increasing over one period.
    pub t_knots: Vec<f64>,
    /// Matching times on the perturbed cycle.
    pub tau_knots: Vec<f64>,
}

impl TimeRescaling {
    pub fn map(&self, t: f64) -> f64 {
        let t0 = self.t_knots[0];
        let s = t0 + wrap_phase(t - t0, self.period0);
        let k = self.t_knots.partition_point(|v| *v <= s).clamp(1, self.t_knots.len() - 1);
        let (ta, tb) = (self.t_knots[k - 1], self.t_knots[k]);
        let (ua, ub) = (self.tau_knots[k - 1], self.tau_knots[k]);
        let tau = if tb > ta { ua + (ub - ua) * (s - ta) / (tb - ta) } else { ua };
        let turns = ((t - s) / self.period0).round();
        tau + turns * self.period_eps
    }

    /// Inverse of [`TimeRescaling::map`].
    pub fn inverse(&self, tau: f64) -> f64 {
        let u0 = self.tau_knots[0];
        let s = u0 + wrap_phase(tau - u0, self.period_eps);
        let k = self.tau_knots.partition_point(|v| *v <= s).clamp(1, self.tau_knots.len() - 1);
        let (ta, tb) = (self.t_knots[k - 1], self.t_knots[k]);
        let (ua, ub) = (self.tau_knots[k - 1], self.tau_knots[k]);
        let t = if ub > ua { ta + (tb - ta) * (s - ua) / (ub - ua) } else { ta };
        let turns = ((tau - s) / self.period_eps).round();
        t + turns * self.period0
    }

    /// Ratio `dtau/dt` on each piece.
    pub fn slopes(&self) -> Vec<f64> {
        self.t_knots
            .windows(2)
            .zip(self.tau_knots.windows(2))
            .map(|(t, u)| (u[1] - u[0]) / (t[1] - t[0]))
            .collect()
    }
}

/// Time map between two cycles with identical event sequences.
///
/// `breakpoints` are event indices. A uniform map uses the first one as its alignment point.
pub fn rescale_time(
    lc0: &LimitCycle,
    lc_eps: &LimitCycle,
    kind: RescalingKind,
    breakpoints: &[usize],
) -> Result<TimeRescaling> {
    check_topology(lc0, lc_eps)?;
    contract(!breakpoints.is_empty(), || "at least one breakpoint is required".into())?;
    for &j in breakpoints {
        contract(j < lc0.events.len(), || format!("event index {j} out of range"))?;
    }
    let used: Vec<usize> = match kind {
        RescalingKind::Uniform => vec![breakpoints[0]],
        RescalingKind::Piecewise => {
            let mut v = breakpoints.to_vec();
            v.sort_by(|a, b| lc0.event_phase(*a).partial_cmp(&lc0.event_phase(*b)).unwrap());
            v.dedup();
            v
        }
    };
    let (tp, tq) = (lc0.period, lc_eps.period);
    let mut t_knots: Vec<f64> = used.iter().map(|&j| lc0.event_phase(j)).collect();
    let mut tau_knots: Vec<f64> = used.iter().map(|&j| lc_eps.event_phase(j)).collect();
    for k in 1..tau_knots.len() {
        while tau_knots[k] < tau_knots[k - 1] {
            tau_knots[k] += tq;
        }
    }
    t_knots.push(t_knots[0] + tp);
    tau_knots.push(tau_knots[0] + tq);
    Ok(TimeRescaling { kind, period0: tp, period_eps: tq, t_knots, tau_knots })
}

/// `gamma_eps(tau(t)) - gamma_0(t)` at the given times.
pub fn shape_displacement(lc0: &LimitCycle, lc_eps: &LimitCycle, map: &TimeRescaling, times: &[f64]) -> Vec<StateVector> {
    times.iter().map(|&t| lc_eps.state_at(map.map(t)) - lc0.state_at(t)).collect()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
