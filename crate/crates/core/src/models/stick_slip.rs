//! Mass on a moving belt with velocity-weakening friction.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::cycle::{find_limit_cycle, Anchor, CycleOptions, LimitCycle};
use crate::error::{Error, Result};
use crate::system::{FilippovSystem, HardBoundary, Perturbation, VectorField};

/// Friction law parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Friction {
    pub delta: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl Friction {
    /// Friction at relative velocity `w`, without the pole check.
    pub fn value(&self, w: f64) -> f64 {
        let Friction { delta, gamma, eta } = *self;
        if w <= 0.0 {
            (1.0 - delta) / (1.0 - gamma * w) + delta + eta * w * w
        } else {
            -(1.0 - delta) / (1.0 + gamma * w) - delta - eta * w * w
        }
    }

    pub fn derivative(&self, w: f64) -> f64 {
        let Friction { delta, gamma, eta } = *self;
        if w <= 0.0 {
            (1.0 - delta) * gamma / (1.0 - gamma * w).powi(2) + 2.0 * eta * w
        } else {
            (1.0 - delta) * gamma / (1.0 + gamma * w).powi(2) - 2.0 * eta * w
        }
    }

    fn denominator(&self, w: f64) -> f64 {
        if w <= 0.0 {
            1.0 - self.gamma * w
        } else {
            1.0 + self.gamma * w
        }
    }
}

/// Friction force at relative velocity `v_rel = v - u`; fails at the pole of the law.
pub fn friction_force(v_rel: f64, delta: f64, gamma: f64, eta: f64) -> Result<f64> {
    let fr = Friction { delta, gamma, eta };
    let den = fr.denominator(v_rel);
    if !v_rel.is_finite() || den.abs() < 1e-14 {
        return Err(Error::DomainError(format!("friction law is singular at v_rel = {v_rel}")));
    }
    Ok(fr.value(v_rel))
}

pub const STICK_SLIP_PARAMS: [&str; 7] = ["m", "k", "c", "delta", "gamma_f", "eta_f", "u"];

/// `(x, v)` with `m v' = -k x - c v + f(v - u)`.
#[derive(Debug, Clone, Copy)]
pub struct StickSlipField;

fn unpack(p: &[f64]) -> (f64, f64, f64, Friction, f64) {
    (p[0], p[1], p[2], Friction { delta: p[3], gamma: p[4], eta: p[5] }, p[6])
}

impl VectorField for StickSlipField {
    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        STICK_SLIP_PARAMS.iter().map(|s| s.to_string()).collect()
    }

    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let (m, k, c, fr, u) = unpack(p);
        out[0] = x[1];
        out[1] = (-k * x[0] - c * x[1] + fr.value(x[1] - u)) / m;
    }

    fn jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        let (m, k, c, fr, u) = unpack(p);
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -k / m, (-c + fr.derivative(x[1] - u)) / m])
    }

    fn param_jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        let (m, k, c, fr, u) = unpack(p);
        let w = x[1] - u;
        let force = -k * x[0] - c * x[1] + fr.value(w);
        let s = if w <= 0.0 { 1.0 } else { -1.0 };
        let den = fr.denominator(w);
        let d_delta = s * (1.0 - 1.0 / den);
        let d_gamma = (1.0 - fr.delta) * w / (den * den);
        let d_eta = s * w * w;
        let d_u = -fr.derivative(w);
        let mut j = DMatrix::zeros(2, 7);
        j[(1, 0)] = -force / (m * m);
        j[(1, 1)] = -x[0] / m;
        j[(1, 2)] = -x[1] / m;
        j[(1, 3)] = d_delta / m;
        j[(1, 4)] = d_gamma / m;
        j[(1, 5)] = d_eta / m;
        j[(1, 6)] = d_u / m;
        j
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StickSlipModel {
    pub m: f64,
    pub k: f64,
    pub c: f64,
    pub delta: f64,
    pub gamma_f: f64,
    pub eta_f: f64,
    pub u: f64,
}

impl Default for StickSlipModel {
    fn default() -> Self {
        Self { m: 1.0, k: 1.0, c: 0.1, delta: 0.5, gamma_f: 1.0, eta_f: 0.001, u: 0.5 }
    }
}

impl StickSlipModel {
    /// Parameter set of the coupled experiment's single oscillator.
    pub fn coupled_unit() -> Self {
        Self { m: 1.0, k: 1.0, c: 0.0, delta: 0.0, gamma_f: 3.0, eta_f: 0.0, u: 0.295 }
    }

    pub fn params(&self) -> Vec<f64> {
        vec![self.m, self.k, self.c, self.delta, self.gamma_f, self.eta_f, self.u]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.k > 0.0 && self.c >= 0.0 && self.u > 0.0 && self.gamma_f > 0.0) {
            return Err(Error::DomainError(format!("invalid stick-slip parameters {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.delta) || self.eta_f < 0.0 {
            return Err(Error::DomainError(format!("invalid friction parameters {self:?}")));
        }
        Ok(())
    }

    /// Walls: `v = u` with outward normal `+v`.
    pub fn system(&self) -> Result<FilippovSystem> {
        self.validate()?;
        FilippovSystem::new(Arc::new(StickSlipField), self.params())?
            .with_boundary(HardBoundary::new("belt", &[0.0, 1.0], self.u)?)
    }

    /// Position where sticking ends.
    pub fn liftoff_position(&self) -> f64 {
        (1.0 - self.c * self.u) / self.k
    }

    pub fn limit_cycle(&self, sys: &FilippovSystem, guess: &[f64], opts: CycleOptions) -> Result<LimitCycle> {
        find_limit_cycle(sys, guess, Anchor::liftoff(0), opts)
    }
}

/// Perturbation of a single named parameter.
pub fn param_perturbation(sys: &FilippovSystem, name: &str) -> Result<Perturbation> {
    let idx = sys.param_index(name)?;
    let mut direction = vec![0.0; sys.param_names().len()];
    direction[idx] = 1.0;
    Ok(Perturbation { label: name.into(), direction, regions: None })
}
