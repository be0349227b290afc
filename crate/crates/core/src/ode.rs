//! Dormand-Prince 5(4) with continuous extension.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude.
    pub h_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: 0.05 }
    }
}

impl Tolerances {
    pub fn halved(self) -> Self {
        Self { rtol: self.rtol / 2.0, atol: self.atol / 2.0, ..self }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    coef: Vec<f64>,
}

impl DenseStep {
    pub fn dim(&self) -> usize {
        self.coef.len() / 5
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.dim();
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let c = &self.coef;
        for i in 0..n {
            out[i] = c[i]
                + th * (c[n + i] + th1 * (c[2 * n + i] + th * (c[3 * n + i] + th1 * c[4 * n + i])));
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(t, out.as_mut_slice());
        out
    }

    pub fn start(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coef[..self.dim()])
    }

    pub fn end(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_iterator(n, (0..n).map(|i| self.coef[i] + self.coef[n + i]))
    }
}

/// Adaptive stepper holding the stage buffers.
pub struct Stepper {
    n: usize,
    tol: Tolerances,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    h: f64,
    fresh: bool,
    pub n_steps: usize,
}

impl Stepper {
    pub fn new(n: usize, tol: Tolerances) -> Self {
        Self {
            n,
            tol,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            h: 0.0,
            fresh: true,
            n_steps: 0,
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    /// Forgets the cached derivative; required after the state is changed externally.
    pub fn reset(&mut self) {
        self.fresh = true;
    }

    fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(&mut self, f: &mut F, t: f64, y: &[f64], dir: f64) -> f64 {
        let sc = |i: usize| self.tol.atol + self.tol.rtol * y[i].abs();
        let n = self.n as f64;
        let d0 = (0..self.n).map(|i| (y[i] / sc(i)).powi(2)).sum::<f64>() / n;
        let d1 = (0..self.n).map(|i| (self.k[0][i] / sc(i)).powi(2)).sum::<f64>() / n;
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
        h0 = h0.min(self.tol.h_max);
        for i in 0..self.n {
            self.ytmp[i] = y[i] + dir * h0 * self.k[0][i];
        }
        let mut f1 = vec![0.0; self.n];
        f(t + dir * h0, &self.ytmp, &mut f1);
        let d2 = ((0..self.n).map(|i| ((f1[i] - self.k[0][i]) / sc(i)).powi(2)).sum::<f64>() / n).sqrt() / h0;
        let dm = d1.sqrt().max(d2);
        let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
        (100.0 * h0).min(h1).min(self.tol.h_max)
    }

    fn attempt<F: FnMut(f64, &[f64], &mut [f64])>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64) -> f64 {
        let n = self.n;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let yt = &mut self.ytmp;
        for i in 0..n {
            yt[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, yt, k2);
        for i in 0..n {
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, yt, k3);
        for i in 0..n {
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, yt, k4);
        for i in 0..n {
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, yt, k5);
        for i in 0..n {
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, yt, k6);
        let yn = &mut self.ynew;
        for i in 0..n {
            yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, yn, k7);
        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(yn[i].abs());
            err += (e / sc).powi(2);
        }
        (err / n as f64).sqrt()
    }

    fn dense(&self, t: f64, y: &[f64], h: f64) -> DenseStep {
        let n = self.n;
        let k = &self.k;
        let mut coef = vec![0.0; 5 * n];
        for i in 0..n {
            let dy = self.ynew[i] - y[i];
            let bspl = h * k[0][i] - dy;
            coef[i] = y[i];
            coef[n + i] = dy;
            coef[2 * n + i] = bspl;
            coef[3 * n + i] = dy - h * k[6][i] - bspl;
            coef[4 * n + i] =
                h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        DenseStep { t0: t, h, coef }
    }

    /// Takes one accepted step from `(t, y)` towards `t_end`, updating both in place.
    pub fn step<F: FnMut(f64, &[f64], &mut [f64])>(
        &mut self,
        f: &mut F,
        t: &mut f64,
        y: &mut [f64],
        t_end: f64,
    ) -> Result<DenseStep> {
        let dir = if t_end >= *t { 1.0 } else { -1.0 };
        if self.fresh {
            f(*t, y, &mut self.k[0]);
            if self.h == 0.0 {
                self.h = self.initial_step(f, *t, y, dir);
            }
            self.fresh = false;
        }
        let remaining = (t_end - *t).abs();
        let mut h = self.h.min(self.tol.h_max).min(remaining);
        let h_min = 1e-15 * t.abs().max(1.0);
        loop {
            if !(h > h_min) && h < remaining {
                return Err(Error::NonConverged(format!("step size underflow at t = {}", *t)));
            }
            let err = self.attempt(f, *t, y, dir * h);
            if !err.is_finite() {
                h *= 0.1;
                continue;
            }
            if err <= 1.0 {
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                let step = self.dense(*t, y, dir * h);
                let last = h >= remaining;
                *t = if last { t_end } else { *t + dir * h };
                y.copy_from_slice(&self.ynew);
                let (k0, rest) = self.k.split_at_mut(1);
                k0[0].copy_from_slice(&rest[5]);
                self.h = if last && h < self.h { self.h } else { (h * fac).min(self.tol.h_max) };
                self.n_steps += 1;
                return Ok(step);
            }
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}

/// Sequence of dense steps covering an interval in either time direction.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DenseSolution {
    pub steps: Vec<DenseStep>,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.steps.first().map_or(0.0, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t1())
    }

    fn locate(&self, t: f64) -> usize {
        let forward = self.t_end() >= self.t_start();
        let idx = self.steps.partition_point(|s| if forward { s.t1() < t } else { s.t1() > t });
        idx.min(self.steps.len().saturating_sub(1))
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = &self.steps[self.locate(t)];
        s.eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.steps[self.locate(t)].eval(t)
    }

    /// Step boundaries in integration order.
    pub fn nodes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|s| s.t0).collect();
        if let Some(s) = self.steps.last() {
            v.push(s.t1());
        }
        v
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction) keeping the dense output.
pub fn solve_dense<F: FnMut(f64, &[f64], &mut [f64])>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    tol: Tolerances,
) -> Result<DenseSolution> {
    let mut stepper = Stepper::new(y0.len(), tol);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut sol = DenseSolution::default();
    if t0 == t1 {
        let mut fy = vec![0.0; y0.len()];
        f(t0, &y, &mut fy);
        sol.steps.push(DenseStep { t0, h: 0.0, coef: [y.clone(), vec![0.0; 4 * y.len()]].concat() });
        return Ok(sol);
    }
    while t != t1 {
        let s = stepper.step(&mut f, &mut t, &mut y, t1)?;
        sol.steps.push(s);
    }
    Ok(sol)
}
