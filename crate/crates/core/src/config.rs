//! User-defined systems from JSON: rational vector fields built from monomial terms, flat walls,
//! crossing surfaces and an anchor event.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cycle::Anchor;
use crate::error::{contract, Error, Result};
use crate::hybrid::EventKind;
use crate::system::{FilippovSystem, HardBoundary, Perturbation, SurfaceRole, TransversalSurface, VectorField};

/// `coef * param * prod x_i^powers[i]`; `param` is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    #[serde(default)]
    pub param: Option<String>,
    pub powers: Vec<u32>,
}

/// Component `num / den`; a missing denominator is one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Component {
    pub num: Vec<Term>,
    #[serde(default)]
    pub den: Option<Vec<Term>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallSpec {
    pub label: String,
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuardSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub label: String,
    pub normal: Vec<f64>,
    pub offset: f64,
    #[serde(default)]
    pub guard: Option<GuardSpec>,
    #[serde(default = "default_role")]
    pub role: SurfaceRole,
}

fn default_role() -> SurfaceRole {
    SurfaceRole::Timing
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKindSpec {
    Landing,
    Liftoff,
    Crossing,
    Timing,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub kind: AnchorKindSpec,
    pub index: usize,
}

impl AnchorSpec {
    pub fn anchor(&self) -> Anchor {
        Anchor(match self.kind {
            AnchorKindSpec::Landing => EventKind::Landing(self.index),
            AnchorKindSpec::Liftoff => EventKind::Liftoff(self.index),
            AnchorKindSpec::Crossing => EventKind::TransversalCrossing(self.index),
            AnchorKindSpec::Timing => EventKind::TimingCrossing(self.index),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
    pub field: Vec<Component>,
    #[serde(default)]
    pub boundaries: Vec<WallSpec>,
    #[serde(default)]
    pub surfaces: Vec<SurfaceSpec>,
    pub anchor: AnchorSpec,
    pub initial_guess: Vec<f64>,
    /// Parameter moved by a sustained perturbation.
    #[serde(default)]
    pub perturb: Option<String>,
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ContractViolation(format!("invalid system file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<FilippovSystem> {
        let names: Vec<String> = self.parameters.keys().cloned().collect();
        let params: Vec<f64> = self.parameters.values().copied().collect();
        let field = RationalField::new(self.field.clone(), names)?;
        let dim = field.dim();
        contract(self.initial_guess.len() == dim, || "initial guess has the wrong dimension".into())?;
        let mut sys = FilippovSystem::new(Arc::new(field), params)?;
        for w in &self.boundaries {
            sys = sys.with_boundary(HardBoundary::new(w.label.clone(), &w.normal, w.offset)?)?;
        }
        for s in &self.surfaces {
            let mut surf = TransversalSurface::new(s.label.clone(), &s.normal, s.offset, s.role)?;
            if let Some(g) = &s.guard {
                contract(g.normal.len() == dim, || "guard dimension mismatch".into())?;
                surf = surf.with_guard(&g.normal, g.offset);
            }
            sys = sys.with_surface(surf)?;
        }
        if let Some(p) = &self.perturb {
            let idx = sys.param_index(p)?;
            let mut direction = vec![0.0; sys.param_names().len()];
            direction[idx] = 1.0;
            sys = sys.with_perturbation(Perturbation { label: p.clone(), direction, regions: None })?;
        }
        Ok(sys)
    }
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    coef: f64,
    param: Option<usize>,
    powers: Vec<u32>,
}

impl CompiledTerm {
    fn monomial(&self, x: &[f64]) -> f64 {
        self.powers.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product()
    }

    fn scale(&self, p: &[f64]) -> f64 {
        self.coef * self.param.map_or(1.0, |i| p[i])
    }

    fn d_monomial(&self, x: &[f64], j: usize) -> f64 {
        let k = self.powers[j];
        if k == 0 {
            return 0.0;
        }
        self.powers
            .iter()
            .zip(x)
            .enumerate()
            .map(|(i, (&e, &v))| if i == j { k as f64 * v.powi(e as i32 - 1) } else { v.powi(e as i32) })
            .product()
    }
}

#[derive(Debug, Clone)]
struct CompiledComponent {
    num: Vec<CompiledTerm>,
    den: Option<Vec<CompiledTerm>>,
}

fn poly(terms: &[CompiledTerm], p: &[f64], x: &[f64]) -> f64 {
    terms.iter().map(|t| t.scale(p) * t.monomial(x)).sum()
}

fn poly_dx(terms: &[CompiledTerm], p: &[f64], x: &[f64], j: usize) -> f64 {
    terms.iter().map(|t| t.scale(p) * t.d_monomial(x, j)).sum()
}

fn poly_dp(terms: &[CompiledTerm], x: &[f64], k: usize) -> f64 {
    terms.iter().filter(|t| t.param == Some(k)).map(|t| t.coef * t.monomial(x)).sum()
}

/// Vector field whose components are ratios of parameterized polynomials.
#[derive(Debug, Clone)]
pub struct RationalField {
    names: Vec<String>,
    comps: Vec<CompiledComponent>,
}

impl RationalField {
    pub fn new(components: Vec<Component>, names: Vec<String>) -> Result<Self> {
        let dim = components.len();
        contract(dim > 0, || "field has no components".into())?;
        let compile = |terms: &[Term]| -> Result<Vec<CompiledTerm>> {
            terms
                .iter()
                .map(|t| {
                    contract(t.powers.len() == dim, || format!("term powers must have length {dim}"))?;
                    let param = match &t.param {
                        Some(n) => Some(
                            names
                                .iter()
                                .position(|m| m == n)
                                .ok_or_else(|| Error::ContractViolation(format!("unknown parameter `{n}`")))?,
                        ),
                        None => None,
                    };
                    Ok(CompiledTerm { coef: t.coef, param, powers: t.powers.clone() })
                })
                .collect()
        };
        let comps = components
            .iter()
            .map(|c| {
                Ok(CompiledComponent { num: compile(&c.num)?, den: c.den.as_deref().map(compile).transpose()? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { names, comps })
    }
}

impl VectorField for RationalField {
    fn dim(&self) -> usize {
        self.comps.len()
    }

    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn eval(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            let n = poly(&c.num, p, x);
            *o = match &c.den {
                Some(d) => n / poly(d, p, x),
                None => n,
            };
        }
    }

    fn jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        let dim = self.dim();
        DMatrix::from_fn(dim, dim, |i, j| {
            let c = &self.comps[i];
            let n = poly(&c.num, p, x);
            let dn = poly_dx(&c.num, p, x, j);
            match &c.den {
                Some(d) => {
                    let dv = poly(d, p, x);
                    (dn * dv - n * poly_dx(d, p, x, j)) / (dv * dv)
                }
                None => dn,
            }
        })
    }

    fn param_jacobian(&self, p: &[f64], x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), p.len(), |i, k| {
            let c = &self.comps[i];
            let n = poly(&c.num, p, x);
            let dn = poly_dp(&c.num, x, k);
            match &c.den {
                Some(d) => {
                    let dv = poly(d, p, x);
                    (dn * dv - n * poly_dp(d, x, k)) / (dv * dv)
                }
                None => dn,
            }
        })
    }
}
