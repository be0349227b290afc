//! Linear spiral source confined to the square `[-1, 1]^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::cycle::{find_limit_cycle, Anchor, CycleOptions, LimitCycle};
use crate::error::{Error, Result};
use crate::system::{FilippovSystem, HardBoundary, Perturbation, SurfaceRole, TransversalSurface, VectorField};

pub const EAST: usize = 0;
pub const NORTH: usize = 1;
pub const WEST: usize = 2;
pub const SOUTH: usize = 3;

/// Region indices used when timing surfaces are installed.
pub const REGION_OUTSIDE: usize = 0;
pub const REGION_INSIDE: usize = 1;

/// `(alpha x - omega y, omega x + alpha y)` with parameters `[alpha, omega]`.
#[derive(Debug, Clone, Copy)]
pub struct PlanarField;

impl VectorField for PlanarField {
    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["alpha".into(), "omega".into()]
    }

    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        let (a, w) = (p[0], p[1]);
        out[0] = a * x[0] - w * x[1];
        out[1] = w * x[0] + a * x[1];
    }

    fn jacobian(&self, p: &[f64], _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[p[0], -p[1], p[1], p[0]])
    }

    fn param_jacobian(&self, _p: &[f64], x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[x[0], -x[1], x[1], x[0]])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlanarModel {
    pub alpha: f64,
    pub omega: f64,
}

impl Default for PlanarModel {
    fn default() -> Self {
        Self { alpha: 0.2, omega: 1.0 }
    }
}

/// Two rays from the origin bounding the timing region swept counterclockwise from `entry` to `exit`.
#[derive(Debug, Clone, Copy)]
pub struct PlanarRegions {
    pub entry_angle: f64,
    pub exit_angle: f64,
}

impl Default for PlanarRegions {
    fn default() -> Self {
        Self { entry_angle: PI / 4.0, exit_angle: 3.0 * PI / 4.0 }
    }
}

impl PlanarModel {
    pub fn new(alpha: f64, omega: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::DomainError(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::DomainError(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { alpha, omega })
    }

    pub fn system(&self) -> Result<FilippovSystem> {
        Self::new(self.alpha, self.omega)?;
        FilippovSystem::new(Arc::new(PlanarField), vec![self.alpha, self.omega])?
            .with_boundary(HardBoundary::new("east", &[1.0, 0.0], 1.0)?)?
            .with_boundary(HardBoundary::new("north", &[0.0, 1.0], 1.0)?)?
            .with_boundary(HardBoundary::new("west", &[-1.0, 0.0], 1.0)?)?
            .with_boundary(HardBoundary::new("south", &[0.0, -1.0], 1.0)?)
    }

    /// System with timing rays installed: region 1 lies between the rays.
    pub fn system_with_regions(&self, r: PlanarRegions) -> Result<FilippovSystem> {
        let (a, b) = (r.entry_angle, r.exit_angle);
        if !(b > a && b - a < 2.0 * PI) {
            return Err(Error::ContractViolation("exit ray must follow the entry ray".into()));
        }
        let ray = |label: &str, th: f64| {
            TransversalSurface::new(label, &[-th.sin(), th.cos()], 0.0, SurfaceRole::Timing)
                .map(|s| s.with_guard(&[th.cos(), th.sin()], 0.0))
        };
        let map = Arc::new(move |x: &[f64]| {
            let th = x[1].atan2(x[0]);
            let rel = (th - a).rem_euclid(2.0 * PI);
            if rel > 0.0 && rel < b - a {
                REGION_INSIDE
            } else {
                REGION_OUTSIDE
            }
        });
        Ok(self
            .system()?
            .with_surface(ray("entry", a)?)?
            .with_surface(ray("exit", b)?)?
            .with_regions(2, map))
    }

    /// Liftoff points on the east, north, west and south walls.
    pub fn liftoff_points(&self) -> [[f64; 2]; 4] {
        let r = self.alpha / self.omega;
        [[1.0, r], [-r, 1.0], [-1.0, -r], [r, -1.0]]
    }

    /// Upper bound on the time for an interior trajectory from `(x, y)` to reach a wall.
    pub fn landing_time_bound(&self, x: f64, y: f64) -> f64 {
        (2.0 / (x * x + y * y)).ln() / (2.0 * self.alpha)
    }

    /// Cycle anchored at the east-wall liftoff.
    pub fn limit_cycle(&self, sys: &FilippovSystem, opts: CycleOptions) -> Result<LimitCycle> {
        find_limit_cycle(sys, &[0.5, 0.0], Anchor::liftoff(EAST), opts)
    }
}

/// `alpha -> alpha + eps` everywhere.
pub fn alpha_perturbation() -> Perturbation {
    Perturbation { label: "alpha".into(), direction: vec![1.0, 0.0], regions: None }
}

/// `(alpha, omega) -> (alpha + eps, omega - eps)` inside the timing region only.
pub fn regional_perturbation() -> Perturbation {
    Perturbation { label: "alpha+,omega- (region 1)".into(), direction: vec![1.0, -1.0], regions: Some(vec![REGION_INSIDE]) }
}

/// Closed-form field on the walls for `omega = 1`, as `(dx/dt, dy/dt)`.
pub fn wall_field(alpha: f64, wall: usize, s: f64) -> [f64; 2] {
    let a = alpha;
    match wall {
        EAST => {
            if s < a {
                [0.0, 1.0 + a * s]
            } else {
                [a - s, 1.0 + a * s]
            }
        }
        NORTH => {
            if s > -a {
                [a * s - 1.0, 0.0]
            } else {
                [a * s - 1.0, s + a]
            }
        }
        WEST => {
            if s > -a {
                [0.0, -1.0 + a * s]
            } else {
                [-a - s, -1.0 + a * s]
            }
        }
        _ => {
            if s < a {
                [a * s + 1.0, 0.0]
            } else {
                [a * s + 1.0, s - a]
            }
        }
    }
}
