//! Asymptotic phase, isochrons and their kinks, and weak-coupling phase reduction.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::{dist, LimitCycle};
use crate::error::{contract, Error, Result};
use crate::hybrid::{Control, EventKind, Flow, HybridOptions};
use crate::ode::{Stepper, Tolerances};
use crate::sensitivity::{Iprc, QUAD_DT};
use crate::system::{periodic_difference, wrap_phase, FilippovSystem, Mode};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseOptions {
    /// Event states closer than this to the matching cycle event count as synchronized.
    pub sync_tol: f64,
    /// Integration budget in periods.
    pub max_periods: f64,
    pub tol: Tolerances,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self { sync_tol: 1e-6, max_periods: 50.0, tol: Tolerances { rtol: 1e-9, atol: 1e-11, h_max: 0.05 } }
    }
}

/// Asymptotic phase of `x0` in `[0, period)`: the flow is run until one of its events lands
/// within `sync_tol` of the matching event on the cycle.
pub fn asymptotic_phase(lc: &LimitCycle, x0: &[f64], opts: PhaseOptions) -> Result<f64> {
    let sys = &lc.system;
    let mut flow = Flow::new(sys, x0, 0.0, HybridOptions { tol: opts.tol, ..HybridOptions::default() })?;
    let mut phase = None;
    let budget = opts.max_periods * lc.period;
    flow.advance(budget, |e, _| {
        for (j, c) in lc.events.iter().enumerate() {
            if c.kind == e.kind && dist(&c.state, &e.state) < opts.sync_tol {
                phase = Some(wrap_phase(lc.event_phase(j) - e.time, lc.period));
                return Control::Stop;
            }
        }
        Control::Continue
    })?;
    phase.ok_or_else(|| Error::NonConverged(format!("no synchronization with the cycle within {budget}")))
}

/// Asymptotic phase sampled on a rectangular grid of a planar system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major over `ys`, then `xs`; `None` where the phase did not converge.
    pub phase: Vec<Option<f64>>,
    pub period: f64,
}

impl PhaseField {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.phase[j * self.xs.len() + i]
    }

    fn dx(&self) -> f64 {
        self.xs[1] - self.xs[0]
    }

    fn dy(&self) -> f64 {
        self.ys[1] - self.ys[0]
    }

    /// Finite-difference gradient at node `(i, j)`: central inside, one-sided on the border.
    pub fn gradient_at_node(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let diff = |a: f64, b: f64| periodic_difference(a, b, self.period).ok();
        let gx = {
            let (il, ir) = (i.saturating_sub(1), (i + 1).min(nx - 1));
            diff(self.get(ir, j)?, self.get(il, j)?)? / (self.dx() * (ir - il) as f64)
        };
        let gy = {
            let (jl, jr) = (j.saturating_sub(1), (j + 1).min(ny - 1));
            diff(self.get(i, jr)?, self.get(i, jl)?)? / (self.dy() * (jr - jl) as f64)
        };
        Some([gx, gy])
    }

    /// Bilinear interpolation of the node gradients.
    pub fn gradient(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let fx = (p[0] - self.xs[0]) / self.dx();
        let fy = (p[1] - self.ys[0]) / self.dy();
        if fx < 0.0 || fy < 0.0 || fx > (nx - 1) as f64 || fy > (ny - 1) as f64 {
            return None;
        }
        let i = (fx.floor() as usize).min(nx - 2);
        let j = (fy.floor() as usize).min(ny - 2);
        let (ax, ay) = (fx - i as f64, fy - j as f64);
        let g00 = self.gradient_at_node(i, j)?;
        let g10 = self.gradient_at_node(i + 1, j)?;
        let g01 = self.gradient_at_node(i, j + 1)?;
        let g11 = self.gradient_at_node(i + 1, j + 1)?;
        let mut out = [0.0; 2];
        for c in 0..2 {
            out[c] = (1.0 - ax) * (1.0 - ay) * g00[c] + ax * (1.0 - ay) * g10[c] + (1.0 - ax) * ay * g01[c] + ax * ay * g11[c];
        }
        Some(out)
    }
}

/// Grid of asymptotic phases over `[x_min, x_max] x [y_min, y_max]` with `nx x ny` nodes.
pub fn isochron_grid(lc: &LimitCycle, bounds: [f64; 4], nx: usize, ny: usize, opts: PhaseOptions) -> Result<PhaseField> {
    contract(lc.dim() == 2, || "isochron grids need a planar system".into())?;
    contract(nx >= 2 && ny >= 2, || "grid needs at least two nodes per axis".into())?;
    let [x0, x1, y0, y1] = bounds;
    contract(x1 > x0 && y1 > y0, || "empty grid bounds".into())?;
    let xs: Vec<f64> = (0..nx).map(|i| x0 + (x1 - x0) * i as f64 / (nx - 1) as f64).collect();
    let ys: Vec<f64> = (0..ny).map(|j| y0 + (y1 - y0) * j as f64 / (ny - 1) as f64).collect();
    let phase: Vec<Option<f64>> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let p = [xs[k % nx], ys[k / nx]];
            if lc.system.domain_violation(&p) > 0.0 {
                return None;
            }
            asymptotic_phase(lc, &p, opts).ok()
        })
        .collect();
    Ok(PhaseField { xs, ys, phase, period: lc.period })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KinkSample {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    /// Normal derivative of the phase on the side the normal points to.
    pub plus: f64,
    pub minus: f64,
    pub jump: f64,
}

/// Normal-derivative jump of the phase across a polyline, evaluated at distance `offset`
/// on either side of each interior vertex.
pub fn kink_scan(field: &PhaseField, curve: &[[f64; 2]], offset: f64) -> Vec<KinkSample> {
    let mut out = Vec::new();
    for w in curve.windows(3) {
        let (a, p, b) = (w[0], w[1], w[2]);
        let tx = b[0] - a[0];
        let ty = b[1] - a[1];
        let tn = (tx * tx + ty * ty).sqrt();
        if tn == 0.0 {
            continue;
        }
        let nrm = [-ty / tn, tx / tn];
        let side = |s: f64| [p[0] + s * offset * nrm[0], p[1] + s * offset * nrm[1]];
        let (Some(gp), Some(gm)) = (field.gradient(side(1.0)), field.gradient(side(-1.0))) else {
            continue;
        };
        let plus = gp[0] * nrm[0] + gp[1] * nrm[1];
        let minus = gm[0] * nrm[0] + gm[1] * nrm[1];
        out.push(KinkSample { point: p, normal: nrm, plus, minus, jump: (plus - minus).abs() });
    }
    out
}

/// Interior-field trajectory through `x0` in reversed time, as a polyline of `n + 1` points.
pub fn backward_trajectory(sys: &FilippovSystem, x0: &[f64], duration: f64, n: usize) -> Result<Vec<[f64; 2]>> {
    contract(sys.dim() == 2, || "planar systems only".into())?;
    let region = sys.region_of(x0);
    let sol = crate::ode::solve_dense(
        |_t, x, out| sys.interior_into(region, x, out),
        0.0,
        x0,
        -duration,
        Tolerances::default(),
    )?;
    Ok((0..=n)
        .map(|i| {
            let v = sol.eval(-duration * i as f64 / n as f64);
            [v[0], v[1]]
        })
        .collect())
}

/// Periodic cubic spline through uniformly spaced samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicSpline {
    pub period: f64,
    pub y: Vec<f64>,
    m: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(y: Vec<f64>, period: f64) -> Result<Self> {
        let n = y.len();
        contract(n >= 3, || "spline needs at least three samples".into())?;
        let h = period / n as f64;
        let rhs: Vec<f64> = (0..n).map(|i| 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]) / (h * h)).collect();
        let m = solve_cyclic(1.0, 4.0, 1.0, &rhs);
        Ok(Self { period, y, m })
    }

    fn piece(&self, x: f64) -> (usize, f64, f64) {
        let n = self.y.len();
        let h = self.period / n as f64;
        let s = wrap_phase(x, self.period) / h;
        let i = (s.floor() as usize).min(n - 1);
        (i, s - i as f64, h)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let (i, t, h) = self.piece(x);
        let j = (i + 1) % n;
        let a = 1.0 - t;
        a * self.y[i] + t * self.y[j] + h * h / 6.0 * ((a * a * a - a) * self.m[i] + (t * t * t - t) * self.m[j])
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.y.len();
        let (i, t, h) = self.piece(x);
        let j = (i + 1) % n;
        let a = 1.0 - t;
        (self.y[j] - self.y[i]) / h + h / 6.0 * (-(3.0 * a * a - 1.0) * self.m[i] + (3.0 * t * t - 1.0) * self.m[j])
    }
}

/// Solves the cyclic tridiagonal system with constant bands `(a, b, c)`.
fn solve_cyclic(a: f64, b: f64, c: f64, r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let gamma = -b;
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * c / gamma;
    let x = solve_tridiagonal(a, &diag, c, r);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    let zv = solve_tridiagonal(a, &diag, c, &u);
    let fact = (x[0] + a * x[n - 1] / gamma) / (1.0 + zv[0] + a * zv[n - 1] / gamma);
    x.iter().zip(&zv).map(|(xi, zi)| xi - fact * zi).collect()
}

fn solve_tridiagonal(a: f64, diag: &[f64], c: f64, r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c / diag[0];
    dp[0] = r[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - a * cp[i - 1];
        cp[i] = c / den;
        dp[i] = (r[i] - a * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Coupling `G(x_j, x_i, i_sticking)` acting on oscillator `i`.
pub type Coupling<'a> = dyn Fn(&[f64], &[f64], bool) -> DVector<f64> + Sync + 'a;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPoint {
    pub psi: f64,
    pub slope: f64,
    pub stable: bool,
}

/// Interaction function `H` and its odd part `Hodd(psi) = H(-psi) - H(psi)` on a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HFunction {
    pub period: f64,
    pub psi: Vec<f64>,
    pub h: Vec<f64>,
    pub h_odd: Vec<f64>,
    pub spline: PeriodicSpline,
}

impl HFunction {
    /// Zeros of `Hodd` with stability for positive coupling strength.
    pub fn fixed_points(&self) -> Vec<FixedPoint> {
        let n = self.psi.len();
        let mut out = Vec::new();
        let sp = &self.spline;
        for i in 0..n {
            let (a, b) = (self.psi[i], self.psi[i] + self.period / n as f64);
            let (fa, fb) = (sp.eval(a), sp.eval(b));
            let root = if fa == 0.0 {
                Some(a)
            } else if fa * fb < 0.0 {
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    let fm = sp.eval(mid);
                    if fm * flo <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                Some(0.5 * (lo + hi))
            } else {
                None
            };
            if let Some(r) = root {
                let slope = sp.derivative(r);
                out.push(FixedPoint { psi: wrap_phase(r, self.period), slope, stable: slope < 0.0 });
            }
        }
        out
    }

    pub fn eval_odd(&self, psi: f64) -> f64 {
        self.spline.eval(psi)
    }
}

/// `H(psi) = (1/T) int z(t) . G(gamma(t + psi), gamma(t)) dt`, sampled at `n` phases.
pub fn h_function(lc: &LimitCycle, z: &Iprc, coupling: &Coupling, n: usize) -> Result<HFunction> {
    contract(n >= 8 && n % 2 == 0, || "use an even number of at least 8 samples".into())?;
    let tp = lc.period;
    let nodes: Vec<(f64, f64, DVector<f64>, DVector<f64>, bool)> = z
        .curve
        .quadrature_nodes(QUAD_DT)
        .into_iter()
        .map(|(t, w, k)| {
            let seg = &z.curve.segments[k];
            let zt = seg.sol.eval(t);
            let x = lc.segments[seg.cycle_segment].eval(t - seg.shift);
            (t, w, zt, x, !seg.mode.is_interior())
        })
        .collect();
    let psi: Vec<f64> = (0..n).map(|j| tp * j as f64 / n as f64).collect();
    let h: Vec<f64> = psi
        .par_iter()
        .map(|&p| {
            let mut xs = vec![0.0; lc.dim()];
            nodes
                .iter()
                .map(|(t, w, zt, x, sticking)| {
                    lc.state_into(t + p, &mut xs);
                    w * zt.dot(&coupling(&xs, x.as_slice(), *sticking))
                })
                .sum::<f64>()
                / tp
        })
        .collect();
    let h_odd: Vec<f64> = (0..n).map(|j| h[(n - j) % n] - h[j]).collect();
    let spline = PeriodicSpline::new(h_odd.clone(), tp)?;
    Ok(HFunction { period: tp, psi, h, h_odd, spline })
}

/// Integrates `psi' = k3 Hodd(psi)`; returns samples every `dt_out`, wrapped into `[0, T)`.
pub fn phase_model_simulate(hf: &HFunction, k3: f64, psi0: f64, t_end: f64, dt_out: f64) -> Result<Vec<(f64, f64)>> {
    contract(t_end >= 0.0 && dt_out > 0.0, || "invalid time span".into())?;
    let tol = Tolerances { rtol: 1e-10, atol: 1e-12, h_max: 10.0 };
    let mut stepper = Stepper::new(1, tol);
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = k3 * hf.eval_odd(y[0]);
    let mut out = vec![(0.0, wrap_phase(psi0, hf.period))];
    let mut t = 0.0;
    let mut y = [psi0];
    let mut next = dt_out;
    while next <= t_end + 1e-9 {
        stepper.step(&mut f, &mut t, &mut y, next)?;
        if t >= next {
            out.push((t, wrap_phase(y[0], hf.period)));
            next += dt_out;
        }
    }
    Ok(out)
}

/// Phase difference `(t2 - t1) mod T` between two oscillators of a coupled system, sampled at each
/// phase-zero event of oscillator 1. `events` names the phase-zero event of each oscillator.
pub fn full_model_phase_difference(
    sys: &FilippovSystem,
    x0: &[f64],
    mode0: Option<Mode>,
    events: [EventKind; 2],
    period: f64,
    t_end: f64,
    checkpoint_every: f64,
    mut checkpoint: impl FnMut(f64, &[(f64, f64)]),
) -> Result<Vec<(f64, f64)>> {
    let opts = HybridOptions { tol: Tolerances { h_max: 0.1, ..Tolerances::default() }, ..HybridOptions::default() };
    let mut flow = match mode0 {
        Some(m) => Flow::with_mode(sys, x0, m, 0.0, opts)?,
        None => Flow::new(sys, x0, 0.0, opts)?,
    };
    let mut times: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut t_chunk = 0.0;
    while t_chunk < t_end {
        let t_next = (t_chunk + checkpoint_every).min(t_end);
        flow.advance(t_next, |e, _| {
            for (i, k) in events.iter().enumerate() {
                if e.kind == *k {
                    times[i].push(e.time);
                }
            }
            Control::Continue
        })?;
        t_chunk = t_next;
        for (i, ts) in times.iter().enumerate() {
            let last = ts.last().copied().unwrap_or(0.0);
            if t_chunk - last > 3.0 * period {
                return Err(Error::DesynchronizationError(format!(
                    "oscillator {} has no phase-zero event since t = {last}",
                    i + 1
                )));
            }
        }
        checkpoint(t_chunk, &pair_phases(&times, period));
    }
    Ok(pair_phases(&times, period))
}

fn pair_phases(times: &[Vec<f64>; 2], period: f64) -> Vec<(f64, f64)> {
    let (a, b) = (&times[0], &times[1]);
    if b.is_empty() {
        return Vec::new();
    }
    a.iter()
        .map(|&t1| {
            let k = b.partition_point(|v| *v < t1);
            let mut best = f64::INFINITY;
            for idx in [k.saturating_sub(1), k.min(b.len() - 1)] {
                if (b[idx] - t1).abs() < best.abs() {
                    best = b[idx] - t1;
                }
            }
            (t1, wrap_phase(best, period))
        })
        .collect()
}
