//! Linearized dynamics along a cycle with sliding: saltation and time-reversed jump matrices,
//! variational and adjoint solutions, phase and local timing response curves, and shape
//! response curves under sustained perturbations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::error::{contract, Error, Result};
use crate::hybrid::{EventKind, EventRecord, Segment};
use crate::ode::{solve_dense, DenseSolution, Tolerances};
use crate::system::{wrap_phase, Mode, StateVector};

/// Denominators `n.F` below this make a crossing non-transversal.
pub const TRANSVERSAL_TOL: f64 = 1e-10;
/// Default panel width of the composite trapezoid rule along the cycle.
pub const QUAD_DT: f64 = 1e-3;

/// Saltation matrix mapping perturbations across an event in forward time.
pub fn saltation(e: &EventRecord) -> Result<DMatrix<f64>> {
    let n = e.normal.len();
    let nv = e.normal_vec();
    match e.kind {
        EventKind::Landing(_) => Ok(DMatrix::identity(n, n) - &nv * nv.transpose()),
        EventKind::Liftoff(_) => Ok(DMatrix::identity(n, n)),
        EventKind::TransversalCrossing(_) | EventKind::TimingCrossing(_) => {
            let fm = e.f_minus_vec();
            let fp = e.f_plus_vec();
            let den = nv.dot(&fm);
            if den.abs() < TRANSVERSAL_TOL {
                return Err(Error::NonTransversalError { normal_velocity: den });
            }
            Ok(DMatrix::identity(n, n) + (fp - fm) * nv.transpose() / den)
        }
    }
}

/// Jump matrix applied to adjoint solutions when an event is crossed in reversed time.
pub fn reversed_jump(e: &EventRecord) -> Result<DMatrix<f64>> {
    let n = e.normal.len();
    let nv = e.normal_vec();
    match e.kind {
        EventKind::Liftoff(_) => Ok(DMatrix::identity(n, n) - &nv * nv.transpose()),
        EventKind::Landing(_) => Ok(DMatrix::identity(n, n)),
        EventKind::TransversalCrossing(_) | EventKind::TimingCrossing(_) => Ok(saltation(e)?.transpose()),
    }
}

/// Piece of a linearized solution between two events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSegment {
    pub mode: Mode,
    /// Index of the cycle segment this piece follows.
    pub cycle_segment: usize,
    /// Offset between curve time and cycle time (`t_curve = t_cycle + shift`).
    pub shift: f64,
    pub t0: f64,
    pub t1: f64,
    pub sol: DenseSolution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub kind: EventKind,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Variational,
    Iprc,
    Ltrc,
    Isrc,
}

/// Piecewise-continuous vector function over a time window, with its jumps at events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub kind: CurveKind,
    pub period: f64,
    pub segments: Vec<CurveSegment>,
    pub jumps: Vec<Jump>,
}

impl SensitivityCurve {
    pub fn t_start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t1)
    }

    fn locate(&self, t: f64) -> &CurveSegment {
        let idx = self.segments.partition_point(|s| s.t1 < t);
        &self.segments[idx.min(self.segments.len() - 1)]
    }

    /// Value at `t`, first wrapped into the window when the window spans a full period.
    pub fn eval(&self, t: f64) -> StateVector {
        let lo = self.t_start();
        let full = (self.t_end() - lo - self.period).abs() < 1e-9;
        let tt = if full { lo + wrap_phase(t - lo, self.period) } else { t };
        self.locate(tt).sol.eval(tt)
    }

    /// Value at the start of the window (after any initial event).
    pub fn initial(&self) -> StateVector {
        let s = &self.segments[0];
        s.sol.eval(s.t0)
    }

    pub fn final_value(&self) -> StateVector {
        let s = self.segments.last().unwrap();
        s.sol.eval(s.t1)
    }

    /// Composite trapezoid nodes `(t, weight, curve segment)`, split at events.
    pub fn quadrature_nodes(&self, dt: f64) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for (k, s) in self.segments.iter().enumerate() {
            let len = s.t1 - s.t0;
            if len <= 0.0 {
                continue;
            }
            let m = (len / dt).ceil().max(1.0) as usize;
            let h = len / m as f64;
            for i in 0..=m {
                let w = if i == 0 || i == m { h / 2.0 } else { h };
                out.push((s.t0 + h * i as f64, w, k));
            }
        }
        out
    }

    /// Uniform samples over the window, excluding the end point.
    pub fn sample(&self, n: usize) -> Vec<(f64, StateVector)> {
        let (a, b) = (self.t_start(), self.t_end());
        (0..n)
            .map(|i| {
                let t = a + (b - a) * (i as f64 + 0.5) / n as f64;
                (t, self.eval(t))
            })
            .collect()
    }
}

/// Ordered list of `(segment index, shift)` covering the cycle window `[t_a, t_b]`.
pub(crate) fn plan(lc: &LimitCycle, t_a: f64, t_b: f64) -> Result<Vec<(usize, f64)>> {
    let tp = lc.period;
    let start = wrap_phase(t_a, tp);
    let mut k = lc
        .segments
        .iter()
        .position(|s| (s.t0 - start).abs() < 1e-9 || (s.t0 - start + tp).abs() < 1e-9 || (s.t0 - start - tp).abs() < 1e-9)
        .ok_or_else(|| Error::ContractViolation(format!("no event boundary at t = {t_a}")))?;
    let mut shift = t_a - lc.segments[k].t0;
    let mut out = Vec::new();
    loop {
        out.push((k, shift));
        let t_end = lc.segments[k].t1 + shift;
        if t_end >= t_b - 1e-9 || out.len() > 4 * lc.segments.len() {
            break;
        }
        k += 1;
        if k == lc.segments.len() {
            k = 0;
            shift += tp;
        }
    }
    Ok(out)
}

fn events_at(lc: &LimitCycle, t: f64) -> Vec<&EventRecord> {
    lc.events.iter().filter(|e| e.time == t).collect()
}

/// Right-hand side of a linear equation along the cycle: `(segment, cycle time, x, y, dy)`.
pub(crate) type LinearRhs<'a> = dyn Fn(&Segment, f64, &[f64], &[f64], &mut [f64]) + 'a;

fn integrate_piece(
    lc: &LimitCycle,
    k: usize,
    shift: f64,
    y0: &DVector<f64>,
    forward: bool,
    rhs: &LinearRhs,
    tol: Tolerances,
) -> Result<(DenseSolution, DVector<f64>)> {
    let seg = &lc.segments[k];
    let mut x = vec![0.0; lc.dim()];
    let f = |t: f64, y: &[f64], dy: &mut [f64]| {
        let tc = t - shift;
        seg.eval_into(tc, &mut x);
        rhs(seg, tc, &x, y, dy);
    };
    let (ta, tb) = if forward { (seg.t0 + shift, seg.t1 + shift) } else { (seg.t1 + shift, seg.t0 + shift) };
    let sol = solve_dense(f, ta, y0.as_slice(), tb, tol)?;
    let end = sol.eval(tb);
    Ok((sol, end))
}

/// Forward solution over `[t_a, t_b]` applying `jump` at every event reached, including one at `t_b`.
pub(crate) fn sweep_forward(
    lc: &LimitCycle,
    kind: CurveKind,
    t_a: f64,
    t_b: f64,
    y0: DVector<f64>,
    rhs: &LinearRhs,
    jump: &dyn Fn(&EventRecord) -> Result<DMatrix<f64>>,
) -> Result<SensitivityCurve> {
    let tol = lc.tol;
    let mut y = y0;
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    for (k, shift) in plan(lc, t_a, t_b)? {
        let (sol, end) = integrate_piece(lc, k, shift, &y, true, rhs, tol)?;
        let seg = &lc.segments[k];
        segments.push(CurveSegment { mode: seg.mode, cycle_segment: k, shift, t0: seg.t0 + shift, t1: seg.t1 + shift, sol });
        y = end;
        for e in events_at(lc, seg.t1) {
            let after = jump(e)? * &y;
            jumps.push(Jump { time: seg.t1 + shift, kind: e.kind, before: y.as_slice().to_vec(), after: after.as_slice().to_vec() });
            y = after;
        }
    }
    Ok(SensitivityCurve { kind, period: lc.period, segments, jumps })
}

/// Reversed-time solution from `t_b` down to `t_a`. Events at `t_b` are applied first only when
/// `jump_at_start` is set; events at `t_a` are never applied.
pub(crate) fn sweep_backward(
    lc: &LimitCycle,
    kind: CurveKind,
    t_a: f64,
    t_b: f64,
    y0: DVector<f64>,
    jump_at_start: bool,
    rhs: &LinearRhs,
) -> Result<SensitivityCurve> {
    let tol = lc.tol;
    let pieces = plan(lc, t_a, t_b)?;
    let mut y = y0;
    let mut segments = Vec::new();
    let mut jumps = Vec::new();
    let apply = |y: DVector<f64>, t_cycle: f64, shift: f64, jumps: &mut Vec<Jump>| -> Result<DVector<f64>> {
        let mut y = y;
        for e in events_at(lc, t_cycle).into_iter().rev() {
            let after = reversed_jump(e)? * &y;
            jumps.push(Jump { time: t_cycle + shift, kind: e.kind, before: after.as_slice().to_vec(), after: y.as_slice().to_vec() });
            y = after;
        }
        Ok(y)
    };
    for (i, &(k, shift)) in pieces.iter().enumerate().rev() {
        let seg = &lc.segments[k];
        if i + 1 == pieces.len() {
            if jump_at_start {
                y = apply(y, seg.t1, shift, &mut jumps)?;
            }
        } else {
            y = apply(y, seg.t1, shift, &mut jumps)?;
        }
        let (sol, end) = integrate_piece(lc, k, shift, &y, false, rhs, tol)?;
        segments.push(CurveSegment { mode: seg.mode, cycle_segment: k, shift, t0: seg.t0 + shift, t1: seg.t1 + shift, sol });
        y = end;
    }
    segments.reverse();
    jumps.reverse();
    Ok(SensitivityCurve { kind, period: lc.period, segments, jumps })
}

fn variational_rhs(lc: &LimitCycle) -> impl Fn(&Segment, f64, &[f64], &[f64], &mut [f64]) + '_ {
    move |seg: &Segment, _t: f64, x: &[f64], y: &[f64], dy: &mut [f64]| {
        let j = lc.system.mode_jacobian(seg.mode, x);
        mat_vec(&j, y, dy);
    }
}

fn adjoint_rhs(lc: &LimitCycle) -> impl Fn(&Segment, f64, &[f64], &[f64], &mut [f64]) + '_ {
    move |seg: &Segment, _t: f64, x: &[f64], y: &[f64], dy: &mut [f64]| {
        let j = lc.system.mode_jacobian(seg.mode, x);
        let n = y.len();
        for i in 0..n {
            dy[i] = -(0..n).map(|r| j[(r, i)] * y[r]).sum::<f64>();
        }
    }
}

fn mat_vec(m: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    for i in 0..out.len() {
        out[i] = (0..y.len()).map(|j| m[(i, j)] * y[j]).sum();
    }
}

/// Solution of the variational equation from `u0` just after the anchor, over one period.
pub fn variational_forward(lc: &LimitCycle, u0: &[f64]) -> Result<SensitivityCurve> {
    contract(u0.len() == lc.dim(), || "u0 has the wrong dimension".into())?;
    let rhs = variational_rhs(lc);
    sweep_forward(lc, CurveKind::Variational, 0.0, lc.period, DVector::from_column_slice(u0), &rhs, &saltation)
}

/// Monodromy matrix: fundamental solution over one period, including the anchor event.
pub fn fundamental_matrix(lc: &LimitCycle) -> Result<DMatrix<f64>> {
    let n = lc.dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let c = variational_forward(lc, &e)?;
        m.set_column(i, &c.final_value());
    }
    Ok(m)
}

/// Real eigenvalue nearest one and a unit eigenvector for it.
pub fn eigen_near_one(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    let eig = m.complex_eigenvalues();
    let (idx, best) = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().partial_cmp(&(b.1 - 1.0).norm()).unwrap())
        .ok_or_else(|| Error::MonodromyError("empty matrix".into()))?;
    let _ = idx;
    if best.im.abs() > 1e-9 {
        return Err(Error::MonodromyError(format!("eigenvalue nearest one is complex: {best}")));
    }
    if (best.re - 1.0).abs() > 1e-6 {
        return Err(Error::MonodromyError(format!("no eigenvalue within 1e-6 of one (nearest {})", best.re)));
    }
    let a = m - DMatrix::identity(n, n) * best.re;
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::MonodromyError("SVD failed".into()))?;
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    let v = v_t.row(k).transpose();
    Ok((best.re, v.normalize()))
}

/// Infinitesimal phase response curve with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Iprc {
    pub curve: SensitivityCurve,
    /// Reversed-time fundamental matrix over one period.
    pub backward_monodromy: DMatrix<f64>,
    pub eigenvalue: f64,
    /// `max |F.z - 1|` on the quadrature grid.
    pub normalization_defect: f64,
    /// Largest normal component of `z` on sliding pieces.
    pub sliding_normal: f64,
}

/// Phase response curve by the backward method: reversed-time fundamental matrix, its
/// eigenvector for eigenvalue one, normalization against the field at the anchor.
pub fn iprc(lc: &LimitCycle) -> Result<Iprc> {
    let n = lc.dim();
    let tp = lc.period;
    let rhs = adjoint_rhs(lc);
    let mut psi = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let c = sweep_backward(lc, CurveKind::Iprc, 0.0, tp, e, true, &rhs)?;
        psi.set_column(i, &c.initial());
    }
    let (lambda, v) = eigen_near_one(&psi)?;
    let f0 = lc.system.mode_field(lc.mode0, &lc.x0);
    let den = f0.dot(&v);
    if den.abs() < 1e-12 {
        return Err(Error::MonodromyError("eigenvector is orthogonal to the field at the anchor".into()));
    }
    let z0 = v / den;
    let curve = sweep_backward(lc, CurveKind::Iprc, 0.0, tp, z0, true, &rhs)?;
    let mut defect: f64 = 0.0;
    let mut sliding_normal: f64 = 0.0;
    for (t, _, k) in curve.quadrature_nodes(10.0 * QUAD_DT) {
        let seg = &curve.segments[k];
        let z = seg.sol.eval(t);
        let x = lc.segments[seg.cycle_segment].eval(t - seg.shift);
        let f = lc.system.mode_field(seg.mode, x.as_slice());
        defect = defect.max((f.dot(&z) - 1.0).abs());
        for b in seg.mode.sliding_boundaries() {
            sliding_normal = sliding_normal.max(lc.system.boundaries[b].normal_vec().dot(&z).abs());
        }
    }
    Ok(Iprc { curve, backward_monodromy: psi, eigenvalue: lambda, normalization_defect: defect, sliding_normal })
}

/// `int c(t) . dF/deps dt` over the curve window, split at events.
fn forcing_integral(lc: &LimitCycle, c: &SensitivityCurve, dt: f64) -> f64 {
    let mut acc = 0.0;
    for (t, w, k) in c.quadrature_nodes(dt) {
        let seg = &c.segments[k];
        let y = seg.sol.eval(t);
        let x = lc.segments[seg.cycle_segment].eval(t - seg.shift);
        let d = lc.system.mode_param_derivative(seg.mode, x.as_slice());
        acc += w * y.dot(&d);
    }
    acc
}

/// First-order period change `T1 = -int z . dF/deps dt`.
pub fn period_shift(lc: &LimitCycle, z: &Iprc) -> f64 {
    -forcing_integral(lc, &z.curve, QUAD_DT)
}

/// Part of the cycle between an entry event and an exit event (indices into `events`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingRegion {
    pub entry: usize,
    pub exit: usize,
}

impl TimingRegion {
    /// Entry and exit times, with the exit unwrapped past the entry.
    pub fn window(&self, lc: &LimitCycle) -> (f64, f64) {
        let t_in = lc.event_phase(self.entry);
        let mut t_out = lc.event_phase(self.exit);
        while t_out <= t_in {
            t_out += lc.period;
        }
        (t_in, t_out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ltrc {
    pub region: TimingRegion,
    pub t_in: f64,
    pub t_out: f64,
    pub curve: SensitivityCurve,
    /// Unperturbed time spent in the region.
    pub duration: f64,
    pub entry_shift: Vec<f64>,
    pub entry_term: f64,
    pub integral_term: f64,
    /// Contribution of an exit boundary that moves with the parameter (liftoff exits).
    pub exit_term: f64,
    /// First-order change of the time spent in the region.
    pub t1: f64,
    /// Relative rate `t1 / duration`.
    pub nu1: f64,
}

/// Local timing response curve of a region and its first-order timing change.
///
/// `entry_shift` is the derivative of the entry point with respect to the perturbation.
pub fn ltrc(lc: &LimitCycle, region: TimingRegion, entry_shift: &DVector<f64>) -> Result<Ltrc> {
    let n = lc.dim();
    contract(region.entry < lc.events.len() && region.exit < lc.events.len(), || "event index out of range".into())?;
    contract(entry_shift.len() == n, || "entry shift has the wrong dimension".into())?;
    let (t_in, t_out) = region.window(lc);
    let exit = &lc.events[region.exit];
    let f_out = exit.f_minus_vec();
    let (normal, level_shift) = match exit.kind {
        EventKind::Liftoff(b) => {
            let x = exit.state_vec();
            let region = exit.mode_before.region;
            let wall = lc.system.boundaries[b].normal_vec();
            let j = lc.system.interior_jacobian(region, x.as_slice());
            let grad = lc.system.projector(exit.mode_before) * (j.transpose() * &wall);
            (grad, wall.dot(&lc.system.param_derivative(region, x.as_slice())))
        }
        _ => (exit.normal_vec(), 0.0),
    };
    let den = normal.dot(&f_out);
    if den.abs() < TRANSVERSAL_TOL {
        return Err(Error::NonTransversalError { normal_velocity: den });
    }
    let exit_term = -level_shift / den;
    let eta_out = -normal / den;
    let rhs = adjoint_rhs(lc);
    let curve = sweep_backward(lc, CurveKind::Ltrc, t_in, t_out, eta_out, false, &rhs)?;
    let entry_term = curve.initial().dot(entry_shift);
    let integral_term = forcing_integral(lc, &curve, QUAD_DT);
    let t1 = entry_term + integral_term + exit_term;
    let duration = t_out - t_in;
    Ok(Ltrc {
        region,
        t_in,
        t_out,
        curve,
        duration,
        entry_shift: entry_shift.as_slice().to_vec(),
        entry_term,
        integral_term,
        exit_term,
        t1,
        nu1: t1 / duration,
    })
}

/// Finite-difference derivative of an event state between cycles with matching event sequences.
pub fn event_shift(lc: &LimitCycle, lc_eps: &LimitCycle, event: usize, eps: f64) -> Result<DVector<f64>> {
    crate::cycle::check_topology(lc, lc_eps)?;
    Ok((lc_eps.events[event].state_vec() - lc.events[event].state_vec()) / eps)
}

/// Piecewise-constant relative timing rate along the cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSchedule {
    /// Start times of the pieces in `[0, period)`, increasing.
    pub starts: Vec<f64>,
    pub rates: Vec<f64>,
    pub period: f64,
}

impl RateSchedule {
    pub fn uniform(nu1: f64, period: f64) -> Self {
        Self { starts: vec![0.0], rates: vec![nu1], period }
    }

    /// Rates attached to regions that tile the cycle.
    pub fn from_regions(lc: &LimitCycle, regions: &[(TimingRegion, f64)]) -> Result<Self> {
        contract(!regions.is_empty(), || "no regions".into())?;
        let mut pieces: Vec<(f64, f64, f64)> = regions
            .iter()
            .map(|(r, nu)| {
                let (a, b) = r.window(lc);
                (a, b, *nu)
            })
            .collect();
        pieces.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = pieces.iter().map(|p| p.1 - p.0).sum();
        if (total - lc.period).abs() > 1e-9 {
            return Err(Error::RegionTopologyError(format!(
                "regions cover {total} of a period {}",
                lc.period
            )));
        }
        for w in pieces.windows(2) {
            if (w[0].1 - w[1].0).abs() > 1e-9 {
                return Err(Error::RegionTopologyError("regions overlap or leave gaps".into()));
            }
        }
        Ok(Self { starts: pieces.iter().map(|p| p.0).collect(), rates: pieces.iter().map(|p| p.2).collect(), period: lc.period })
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let s0 = self.starts[0];
        let s = s0 + wrap_phase(t - s0, self.period);
        let k = self.starts.partition_point(|v| *v <= s).max(1) - 1;
        self.rates[k]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Isrc {
    pub curve: SensitivityCurve,
    pub section: usize,
    pub schedule: RateSchedule,
    /// `|gamma1(start + T) - gamma1(start)|`.
    pub closure_defect: f64,
}

/// Infinitesimal shape response curve starting at event `section` with initial value `gamma1_0`.
pub fn isrc(lc: &LimitCycle, section: usize, gamma1_0: &DVector<f64>, schedule: &RateSchedule) -> Result<Isrc> {
    contract(section < lc.events.len(), || "section index out of range".into())?;
    contract(gamma1_0.len() == lc.dim(), || "initial value has the wrong dimension".into())?;
    let sys = &lc.system;
    let n = lc.dim();
    let rhs = move |seg: &Segment, t: f64, x: &[f64], y: &[f64], dy: &mut [f64]| {
        let j = sys.mode_jacobian(seg.mode, x);
        let f = sys.mode_field(seg.mode, x);
        let d = sys.mode_param_derivative(seg.mode, x);
        let nu = schedule.rate_at(t);
        for i in 0..n {
            dy[i] = (0..n).map(|k| j[(i, k)] * y[k]).sum::<f64>() + nu * f[i] + d[i];
        }
    };
    let t_a = lc.event_phase(section);
    let curve = sweep_forward(lc, CurveKind::Isrc, t_a, t_a + lc.period, gamma1_0.clone(), &rhs, &saltation)?;
    let closure_defect = (curve.final_value() - curve.initial()).norm();
    Ok(Isrc { curve, section, schedule: schedule.clone(), closure_defect })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OffsetFit {
    /// Least-squares coefficient of `F` in `b - a`.
    pub phi: f64,
    pub max_residual: f64,
    pub max_norm: f64,
}

/// Fits `b(t) - a(t) = phi F(gamma(t))` for two shape response curves.
pub fn isrc_offset_fit(lc: &LimitCycle, a: &Isrc, b: &Isrc, n_samples: usize) -> OffsetFit {
    let tp = lc.period;
    let mut rows = Vec::with_capacity(n_samples);
    let mut max_norm: f64 = 0.0;
    for i in 0..n_samples {
        let t = tp * (i as f64 + 0.5) / n_samples as f64;
        let ya = a.curve.eval(t);
        let yb = b.curve.eval(t);
        max_norm = max_norm.max(ya.norm()).max(yb.norm());
        rows.push((yb - ya, lc.velocity_at(t)));
    }
    let num: f64 = rows.iter().map(|(d, f)| d.dot(f)).sum();
    let den: f64 = rows.iter().map(|(_, f)| f.dot(f)).sum();
    let phi = num / den;
    let max_residual = rows.iter().map(|(d, f)| (d - f * phi).norm()).fold(0.0, f64::max);
    OffsetFit { phi, max_residual, max_norm }
}

/// Relative L2 distance `|eps gamma1 - delta| / |delta|` from quadrature nodes and weights.
pub fn relative_shape_error(
    gamma1: &SensitivityCurve,
    eps: f64,
    displacement: &[StateVector],
    times: &[f64],
    weights: &[f64],
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((t, d), w) in times.iter().zip(displacement).zip(weights) {
        let g = gamma1.eval(*t) * eps;
        num += w * (g - d).norm_squared();
        den += w * d.norm_squared();
    }
    (num / den).sqrt()
}
