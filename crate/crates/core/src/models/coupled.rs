//! Two identical stick-slip oscillators joined by a weak spring.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::models::stick_slip::{Friction, StickSlipModel};
use crate::system::{FilippovSystem, HardBoundary, VectorField};

pub const COUPLED_PARAMS: [&str; 8] = ["m", "k", "c", "delta", "gamma_f", "eta_f", "u", "k3"];

/// State `(x1, v1, x2, v2)`; each slipping oscillator feels `k3 (x_j - x_i)`.
#[derive(Debug, Clone, Copy)]
pub struct CoupledField;

impl VectorField for CoupledField {
    fn dim(&self) -> usize {
        4
    }

    fn param_names(&self) -> Vec<String> {
        COUPLED_PARAMS.iter().map(|s| s.to_string()).collect()
    }

    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let (m, k, c, u, k3) = (p[0], p[1], p[2], p[6], p[7]);
        let fr = Friction { delta: p[3], gamma: p[4], eta: p[5] };
        for (i, j) in [(0usize, 2usize), (2, 0)] {
            out[i] = x[i + 1];
            out[i + 1] = (-k * x[i] - c * x[i + 1] + fr.value(x[i + 1] - u) - k3 * (x[i] - x[j])) / m;
        }
    }

    fn jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        let (m, k, c, u, k3) = (p[0], p[1], p[2], p[6], p[7]);
        let fr = Friction { delta: p[3], gamma: p[4], eta: p[5] };
        let mut jm = DMatrix::zeros(4, 4);
        for (i, j) in [(0usize, 2usize), (2, 0)] {
            jm[(i, i + 1)] = 1.0;
            jm[(i + 1, i)] = (-k - k3) / m;
            jm[(i + 1, i + 1)] = (-c + fr.derivative(x[i + 1] - u)) / m;
            jm[(i + 1, j)] = k3 / m;
        }
        jm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledModel {
    pub unit: StickSlipModel,
    pub k3: f64,
}

impl CoupledModel {
    pub fn new(unit: StickSlipModel, k3: f64) -> Self {
        Self { unit, k3 }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.unit.params();
        p.push(self.k3);
        p
    }

    /// Walls `v1 = u` (boundary 0) and `v2 = u` (boundary 1).
    pub fn system(&self) -> Result<FilippovSystem> {
        self.unit.validate()?;
        let u = self.unit.u;
        FilippovSystem::new(Arc::new(CoupledField), self.params())?
            .with_boundary(HardBoundary::new("belt-1", &[0.0, 1.0, 0.0, 0.0], u)?)?
            .with_boundary(HardBoundary::new("belt-2", &[0.0, 0.0, 0.0, 1.0], u)?)
    }
}

/// Coupling term `G(x_j, x_i)` acting on oscillator `i`; zero while `i` sticks.
pub fn spring_coupling(m: f64) -> impl Fn(&[f64], &[f64], bool) -> DVector<f64> + Send + Sync + Copy {
    move |xj: &[f64], xi: &[f64], i_sticking: bool| {
        if i_sticking {
            DVector::zeros(2)
        } else {
            DVector::from_vec(vec![0.0, -(xi[0] - xj[0]) / m])
        }
    }
}
