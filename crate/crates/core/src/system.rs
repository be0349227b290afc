//! Piecewise-smooth (Filippov) systems with flat hard boundaries.
//!
//! The admissible domain is the intersection of half-spaces `H_b(x) = n_b.x - c_b <= 0`.
//! Where the interior field pushes outward through a wall the flow slides along it with
//! the normal component removed.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub type StateVector = DVector<f64>;
pub type RegionId = usize;
pub type BoundaryId = usize;
pub type SurfaceId = usize;

/// Default absolute tolerance for boundary membership and event location.
pub const EVENT_TOL: f64 = 1e-10;
/// Normal velocities below this at a landing are treated as grazing.
pub const GRAZING_TOL: f64 = 1e-8;

/// Smooth interior vector field with a parameter vector.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]);

    /// Jacobian with respect to the state. Defaults to central differences.
    fn jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        fd_jacobian(|x, out| self.eval(p, x, out), x, self.dim())
    }

    /// Jacobian with respect to the parameters (`dim x n_params`). Defaults to central differences.
    fn param_jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, p.len());
        let mut pp = p.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for k in 0..p.len() {
            let h = 1e-6 * (1.0 + p[k].abs());
            pp[k] = p[k] + h;
            self.eval(&pp, x, &mut fp);
            pp[k] = p[k] - h;
            self.eval(&pp, x, &mut fm);
            pp[k] = p[k];
            for i in 0..n {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }
}

/// Central-difference Jacobian with step `1e-6 (1 + |x|)`.
pub fn fd_jacobian(mut f: impl FnMut(&[f64], &mut [f64]), x: &[f64], n_out: usize) -> DMatrix<f64> {
    let n = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = 1e-6 * (1.0 + norm);
    let mut jac = DMatrix::zeros(n_out, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n_out];
    let mut fm = vec![0.0; n_out];
    for j in 0..n {
        xp[j] = x[j] + h;
        f(&xp, &mut fp);
        xp[j] = x[j] - h;
        f(&xp, &mut fm);
        xp[j] = x[j];
        for i in 0..n_out {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Flat wall `n.x = c` with outward unit normal `n`; admissible side `n.x <= c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardBoundary {
    pub label: String,
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HardBoundary {
    pub fn new(label: impl Into<String>, normal: &[f64], offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        contract(norm > 0.0 && norm.is_finite(), || "boundary normal must be nonzero".into())?;
        Ok(Self {
            label: label.into(),
            normal: normal.iter().map(|v| v / norm).collect(),
            offset: offset / norm,
        })
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    pub fn normal_vec(&self) -> StateVector {
        DVector::from_column_slice(&self.normal)
    }

    /// Projects `x` onto the wall when it lies outside.
    pub fn clamp(&self, x: &mut [f64]) {
        if self.level(x) > 0.0 {
            self.project(x);
        }
    }

    /// Orthogonal projection of `x` onto the wall.
    pub fn project(&self, x: &mut [f64]) {
        let h = self.level(x);
        for (xi, ni) in x.iter_mut().zip(&self.normal) {
            *xi -= h * ni;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceRole {
    /// The interior field may change across the surface.
    Switching,
    /// Marks the boundary of a timing region only.
    Timing,
}

/// Flat crossing surface `n.x = c`, optionally restricted to the half-space `g.x > d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransversalSurface {
    pub label: String,
    pub normal: Vec<f64>,
    pub offset: f64,
    pub guard: Option<(Vec<f64>, f64)>,
    pub role: SurfaceRole,
}

impl TransversalSurface {
    pub fn new(label: impl Into<String>, normal: &[f64], offset: f64, role: SurfaceRole) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        contract(norm > 0.0 && norm.is_finite(), || "surface normal must be nonzero".into())?;
        Ok(Self {
            label: label.into(),
            normal: normal.iter().map(|v| v / norm).collect(),
            offset: offset / norm,
            guard: None,
            role,
        })
    }

    pub fn with_guard(mut self, g: &[f64], d: f64) -> Self {
        self.guard = Some((g.to_vec(), d));
        self
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    pub fn active_at(&self, x: &[f64]) -> bool {
        match &self.guard {
            Some((g, d)) => dot(g, x) > *d,
            None => true,
        }
    }

    pub fn normal_vec(&self) -> StateVector {
        DVector::from_column_slice(&self.normal)
    }
}

/// Integration mode: the region whose parameters apply, plus the set of walls being slid along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub region: RegionId,
    pub sliding: u32,
}

impl Mode {
    pub fn interior(region: RegionId) -> Self {
        Self { region, sliding: 0 }
    }

    pub fn is_interior(&self) -> bool {
        self.sliding == 0
    }

    pub fn is_sliding_on(&self, b: BoundaryId) -> bool {
        self.sliding & (1 << b) != 0
    }

    pub fn with_sliding(self, b: BoundaryId) -> Self {
        Self { sliding: self.sliding | (1 << b), ..self }
    }

    pub fn without_sliding(self, b: BoundaryId) -> Self {
        Self { sliding: self.sliding & !(1 << b), ..self }
    }

    pub fn sliding_boundaries(&self) -> impl Iterator<Item = BoundaryId> + '_ {
        (0..32).filter(move |b| self.is_sliding_on(*b))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_interior() {
            write!(f, "interior:{}", self.region)
        } else {
            let ids: Vec<String> = self.sliding_boundaries().map(|b| b.to_string()).collect();
            write!(f, "sliding:{}:{}", self.region, ids.join("+"))
        }
    }
}

/// Direction in parameter space, optionally confined to a set of regions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Perturbation {
    pub label: String,
    pub direction: Vec<f64>,
    pub regions: Option<Vec<RegionId>>,
}

impl Perturbation {
    pub fn applies_in(&self, region: RegionId) -> bool {
        self.regions.as_ref().map_or(true, |r| r.contains(&region))
    }
}

pub type RegionMap = Arc<dyn Fn(&[f64]) -> RegionId + Send + Sync>;

/// A Filippov system: interior field, per-region parameters, walls, crossing surfaces.
#[derive(Clone)]
pub struct FilippovSystem {
    pub field: Arc<dyn VectorField>,
    pub params: Vec<Vec<f64>>,
    pub region_map: Option<RegionMap>,
    pub boundaries: Vec<HardBoundary>,
    pub surfaces: Vec<TransversalSurface>,
    pub perturbation: Option<Perturbation>,
    pub event_tol: f64,
}

impl fmt::Debug for FilippovSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilippovSystem")
            .field("field", &self.field)
            .field("params", &self.params)
            .field("boundaries", &self.boundaries)
            .field("surfaces", &self.surfaces)
            .field("perturbation", &self.perturbation)
            .finish()
    }
}

impl FilippovSystem {
    pub fn new(field: Arc<dyn VectorField>, params: Vec<f64>) -> Result<Self> {
        let names = field.param_names();
        contract(names.len() == params.len(), || {
            format!("expected {} parameters, got {}", names.len(), params.len())
        })?;
        Ok(Self {
            field,
            params: vec![params],
            region_map: None,
            boundaries: Vec::new(),
            surfaces: Vec::new(),
            perturbation: None,
            event_tol: EVENT_TOL,
        })
    }

    pub fn with_boundary(mut self, b: HardBoundary) -> Result<Self> {
        contract(b.normal.len() == self.dim(), || "boundary dimension mismatch".into())?;
        contract(self.boundaries.len() < 32, || "at most 32 boundaries are supported".into())?;
        self.boundaries.push(b);
        Ok(self)
    }

    pub fn with_surface(mut self, s: TransversalSurface) -> Result<Self> {
        contract(s.normal.len() == self.dim(), || "surface dimension mismatch".into())?;
        self.surfaces.push(s);
        Ok(self)
    }

    /// Splits the state space into regions sharing the base parameters until perturbed.
    pub fn with_regions(mut self, n_regions: usize, map: RegionMap) -> Self {
        let base = self.params[0].clone();
        self.params = vec![base; n_regions.max(1)];
        self.region_map = Some(map);
        self
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Result<Self> {
        contract(p.direction.len() == self.params[0].len(), || {
            "perturbation direction must match the parameter count".into()
        })?;
        self.perturbation = Some(p);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn n_regions(&self) -> usize {
        self.params.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.field.param_names()
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.param_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::ContractViolation(format!("unknown parameter `{name}`")))
    }

    pub fn region_of(&self, x: &[f64]) -> RegionId {
        match &self.region_map {
            Some(m) => m(x).min(self.params.len() - 1),
            None => 0,
        }
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        contract(x.len() == self.dim(), || {
            format!("state has dimension {}, system has {}", x.len(), self.dim())
        })
    }

    pub fn check_boundary(&self, b: BoundaryId) -> Result<&HardBoundary> {
        self.boundaries
            .get(b)
            .ok_or_else(|| Error::ContractViolation(format!("unknown boundary {b}")))
    }

    /// `x` itself inside the closed domain, otherwise its clamp onto the violated walls.
    fn clamped<'x>(&self, x: &'x [f64]) -> std::borrow::Cow<'x, [f64]> {
        if self.boundaries.iter().all(|b| b.level(x) <= 0.0) {
            return std::borrow::Cow::Borrowed(x);
        }
        let mut y = x.to_vec();
        self.clamp_to_domain(&mut y);
        std::borrow::Cow::Owned(y)
    }

    /// Interior field; states beyond a wall see the field at the wall.
    pub fn interior_into(&self, region: RegionId, x: &[f64], out: &mut [f64]) {
        self.field.eval(&self.params[region], &self.clamped(x), out);
    }

    pub fn interior_field(&self, region: RegionId, x: &[f64]) -> StateVector {
        let mut out = DVector::zeros(self.dim());
        self.interior_into(region, x, out.as_mut_slice());
        out
    }

    pub fn interior_jacobian(&self, region: RegionId, x: &[f64]) -> DMatrix<f64> {
        self.field.jacobian(&self.params[region], &self.clamped(x))
    }

    /// Orthogonal projector onto the tangent space of the walls active in `mode`.
    pub fn projector(&self, mode: Mode) -> DMatrix<f64> {
        let n = self.dim();
        let mut p = DMatrix::identity(n, n);
        for q in self.orthonormal_normals(mode) {
            p -= &q * q.transpose();
        }
        p
    }

    fn orthonormal_normals(&self, mode: Mode) -> Vec<StateVector> {
        let mut basis: Vec<StateVector> = Vec::new();
        for b in mode.sliding_boundaries() {
            let mut v = self.boundaries[b].normal_vec();
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
            let nv = v.norm();
            if nv > 1e-12 {
                basis.push(v / nv);
            }
        }
        basis
    }

    /// Effective field in `mode`: the interior field with the active normal components removed.
    pub fn mode_into(&self, mode: Mode, x: &[f64], out: &mut [f64]) {
        self.interior_into(mode.region, x, out);
        if mode.is_interior() {
            return;
        }
        for q in self.orthonormal_normals(mode) {
            let c: f64 = q.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
            for (o, qi) in out.iter_mut().zip(q.iter()) {
                *o -= c * qi;
            }
        }
    }

    pub fn mode_field(&self, mode: Mode, x: &[f64]) -> StateVector {
        let mut out = DVector::zeros(self.dim());
        self.mode_into(mode, x, out.as_mut_slice());
        out
    }

    /// Jacobian of the effective field restricted to the tangent space: `P DF P` while sliding.
    pub fn mode_jacobian(&self, mode: Mode, x: &[f64]) -> DMatrix<f64> {
        let j = self.interior_jacobian(mode.region, x);
        if mode.is_interior() {
            return j;
        }
        let p = self.projector(mode);
        &p * j * &p
    }

    /// `dF_eps/d eps` at eps = 0 of the interior field in `region`.
    pub fn param_derivative(&self, region: RegionId, x: &[f64]) -> StateVector {
        let n = self.dim();
        match &self.perturbation {
            Some(pert) if pert.applies_in(region) => {
                let pj = self.field.param_jacobian(&self.params[region], &self.clamped(x));
                pj * DVector::from_column_slice(&pert.direction)
            }
            _ => DVector::zeros(n),
        }
    }

    pub fn mode_param_derivative(&self, mode: Mode, x: &[f64]) -> StateVector {
        let d = self.param_derivative(mode.region, x);
        if mode.is_interior() {
            d
        } else {
            self.projector(mode) * d
        }
    }

    /// The system with parameters moved by `eps` along the perturbation direction.
    pub fn perturbed(&self, eps: f64) -> Result<Self> {
        let pert = self
            .perturbation
            .as_ref()
            .ok_or_else(|| Error::ContractViolation("system has no perturbation".into()))?;
        let mut out = self.clone();
        for (r, p) in out.params.iter_mut().enumerate() {
            if pert.applies_in(r) {
                for (pk, dk) in p.iter_mut().zip(&pert.direction) {
                    *pk += eps * dk;
                }
            }
        }
        Ok(out)
    }

    /// Sliding vector field on wall `b`: `F - (n.F) n`.
    pub fn sliding_field(&self, x: &[f64], b: BoundaryId) -> Result<StateVector> {
        self.check_dim(x)?;
        self.on_boundary(x, b)?;
        let region = self.region_of(x);
        Ok(self.mode_field(Mode::interior(region).with_sliding(b), x))
    }

    /// Whether the interior field at `x` points out through wall `b`.
    pub fn in_sliding_region(&self, x: &[f64], b: BoundaryId) -> Result<bool> {
        Ok(self.liftoff_indicator(x, b)? > 0.0)
    }

    /// `n.F_int(x)`: positive while sliding, zero on the liftoff set.
    pub fn liftoff_indicator(&self, x: &[f64], b: BoundaryId) -> Result<f64> {
        self.check_dim(x)?;
        let wall = self.on_boundary(x, b)?;
        let f = self.interior_field(self.region_of(x), x);
        Ok(dot(&wall.normal, f.as_slice()))
    }

    /// `grad(n.F_int) . F_slide`; negative for a regular liftoff.
    pub fn nondegeneracy_at_liftoff(&self, x: &[f64], b: BoundaryId) -> Result<f64> {
        self.check_dim(x)?;
        let wall = self.on_boundary(x, b)?;
        let region = self.region_of(x);
        let j = self.interior_jacobian(region, x);
        let grad = j.transpose() * wall.normal_vec();
        let fs = self.mode_field(Mode::interior(region).with_sliding(b), x);
        Ok(grad.dot(&fs))
    }

    fn on_boundary(&self, x: &[f64], b: BoundaryId) -> Result<&HardBoundary> {
        let wall = self.check_boundary(b)?;
        let h = wall.level(x);
        contract(h.abs() <= 1e3 * self.event_tol.max(1e-12), || {
            format!("state is not on boundary {b} (level {h:e})")
        })?;
        Ok(wall)
    }

    /// Largest wall violation `max_b H_b(x)`, or negative infinity without walls.
    /// Clamps `x` onto every wall it lies beyond.
    pub fn clamp_to_domain(&self, x: &mut [f64]) {
        for b in &self.boundaries {
            b.clamp(x);
        }
    }

    pub fn domain_violation(&self, x: &[f64]) -> f64 {
        self.boundaries.iter().map(|b| b.level(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mode of a state: its region, sliding on every wall it touches with outward interior field.
    pub fn infer_mode(&self, x: &[f64]) -> Result<Mode> {
        self.check_dim(x)?;
        let viol = self.domain_violation(x);
        if viol > 1e3 * self.event_tol {
            return Err(Error::DriftError { time: 0.0, violation: viol });
        }
        let region = self.region_of(x);
        let f = self.interior_field(region, x);
        let mut mode = Mode::interior(region);
        for (b, wall) in self.boundaries.iter().enumerate() {
            if wall.level(x).abs() <= 1e3 * self.event_tol && dot(&wall.normal, f.as_slice()) > 0.0 {
                mode = mode.with_sliding(b);
            }
        }
        Ok(mode)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signed periodic difference of two phases, in `[-T/2, T/2]`.
pub fn periodic_difference(theta: f64, psi: f64, period: f64) -> Result<f64> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::DomainError(format!("period must be positive, got {period}")));
    }
    let d = theta - psi;
    let half = period / 2.0;
    Ok(if d < -half {
        d + period
    } else if d > half {
        d - period
    } else {
        d
    })
}

/// Reduces `t` into `[0, period)`.
pub fn wrap_phase(t: f64, period: f64) -> f64 {
    let r = t.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}
