//! Experiment runner: finds cycles, computes response curves and writes CSV tables, SVG plots and
//! a JSON summary per subcommand.

pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use lcsc::config::SystemSpec;
use lcsc::cycle::{find_limit_cycle, CycleOptions, LimitCycle};
use lcsc::experiments::{self, coupling_analysis, event_index, kink_experiment, Rescale, SrcContext, FD_STEP, SHAPE_GRID};
use lcsc::export::{write_json, Table};
use lcsc::figures;
use lcsc::hybrid::EventKind;
use lcsc::models::coupled::CoupledModel;
use lcsc::models::planar::{alpha_perturbation, regional_perturbation, PlanarModel, PlanarRegions};
use lcsc::models::stick_slip::StickSlipModel;
use lcsc::phase::{full_model_phase_difference, isochron_grid, phase_model_simulate, PhaseOptions};
use lcsc::sensitivity::{iprc, period_shift, TimingRegion};
use lcsc::system::{FilippovSystem, Perturbation};

pub use manifest::{ExperimentManifest, Format, ModelName, PerturbationSpec, RescaleName};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "lcsc", version, about = "Timing and shape sensitivity of limit cycles with sliding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Find the limit cycle and dump one period.
    Cycle,
    /// Infinitesimal phase response curve, plus the period sensitivity when a perturbation is given.
    Prc,
    /// Local timing response curves of the timing regions.
    Ltrc,
    /// Linear response to an initial displacement.
    Variational,
    /// Infinitesimal shape response compared with the perturbed cycle.
    Src,
    /// Asymptotic phase on a grid.
    Isochrons,
    /// Phase-gradient jump across the osculating trajectory.
    Kink,
    /// Interaction function, phase model and full coupled model.
    Couple,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cycle => "cycle",
            Command::Prc => "prc",
            Command::Ltrc => "ltrc",
            Command::Variational => "variational",
            Command::Src => "src",
            Command::Isochrons => "isochrons",
            Command::Kink => "kink",
            Command::Couple => "couple",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelName>,
    /// JSON system description for `--model custom`.
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    /// Parameter override `name=value`; repeatable.
    #[arg(long = "param", global = true, value_name = "K=V")]
    pub params: Vec<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub k3: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    /// Perturbed parameter, or `region` for the planar regional perturbation.
    #[arg(long, global = true)]
    pub perturb: Option<String>,
    /// Comma-separated regions in which the perturbation acts.
    #[arg(long, global = true)]
    pub region_mask: Option<String>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
    #[arg(long, global = true)]
    pub tol_abs: Option<f64>,
    /// JSON experiment manifest; flags override its fields.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub t_end: Option<f64>,
    /// Initial lag of oscillator 2 behind oscillator 1 in `couple`.
    #[arg(long, global = true)]
    pub lag: Option<f64>,
    /// Nodes per axis of the phase grid.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub rescale: Option<RescaleName>,
    /// Event index of the shape-response section.
    #[arg(long, global = true)]
    pub section: Option<usize>,
    /// Comma-separated initial displacement for `variational`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub u0: Option<String>,
    /// Rows per output table.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(lcsc::Error),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<lcsc::Error> for CliError {
    fn from(e: lcsc::Error) -> Self {
        match e {
            lcsc::Error::Io(m) => CliError::Io(m),
            e => CliError::Numerical(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }

    pub fn diagnostic(&self, command: &str) -> Value {
        let kind = match self {
            CliError::Usage(_) => "UsageError".to_string(),
            CliError::Io(_) => "Io".to_string(),
            CliError::Numerical(e) => format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or("Error").to_string(),
        };
        json!({ "command": command, "error": kind, "message": self.to_string() })
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| CliError::Usage(format!("bad {what} `{s}`"))))
        .collect()
}

/// Manifest from the configuration file, if any, with the flags applied on top.
pub fn resolve_manifest(flags: &Flags) -> CliResult<ExperimentManifest> {
    let mut m = match &flags.manifest {
        Some(p) => ExperimentManifest::load(p).map_err(CliError::Usage)?,
        None => match flags.model {
            Some(model) => ExperimentManifest::new(model),
            None => return usage("--model or --manifest is required"),
        },
    };
    if let Some(model) = flags.model {
        m.model = model;
    }
    if let Some(p) = &flags.system {
        m.system_file = Some(p.clone());
    }
    for kv in &flags.params {
        let Some((k, v)) = kv.split_once('=') else {
            return usage(format!("--param expects name=value, got `{kv}`"));
        };
        let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("bad value in --param `{kv}`")))?;
        m.params.insert(k.trim().to_string(), v);
    }
    if let Some(a) = flags.alpha {
        m.params.insert("alpha".into(), a);
    }
    if let Some(k) = flags.k3 {
        m.params.insert("k3".into(), k);
    }
    if flags.perturb.is_some() || flags.eps.is_some() || flags.region_mask.is_some() {
        let base = m.perturbation.clone();
        let parameter = match (&flags.perturb, &base) {
            (Some(p), _) => p.clone(),
            (None, Some(b)) => b.parameter.clone(),
            (None, None) => default_perturbation(m.model).to_string(),
        };
        let eps = flags.eps.or(base.as_ref().map(|b| b.eps)).unwrap_or(1e-3);
        let region_mask = match &flags.region_mask {
            Some(s) => Some(parse_list(s, "region mask")?),
            None => base.and_then(|b| b.region_mask),
        };
        m.perturbation = Some(PerturbationSpec { parameter, eps, region_mask });
    }
    if let Some(f) = flags.format {
        m.format = f;
    }
    if let Some(r) = flags.tol_rel {
        m.tolerances.rtol = r;
    }
    if let Some(a) = flags.tol_abs {
        m.tolerances.atol = a;
    }
    if let Some(t) = flags.t_end {
        m.t_end = Some(t);
    }
    if let Some(l) = flags.lag {
        m.lag = Some(l);
    }
    if let Some(g) = flags.grid {
        m.grid = Some(g);
    }
    if let Some(s) = flags.seed {
        m.seed = s;
    }
    if let Some(r) = flags.rescale {
        m.rescale = r;
    }
    if let Some(s) = flags.section {
        m.section_event = Some(s);
    }
    if let Some(u) = &flags.u0 {
        m.u0 = Some(parse_list(u, "--u0")?);
    }
    if let Some(n) = flags.samples {
        m.samples = n;
    }
    if !(m.tolerances.rtol > 0.0 && m.tolerances.atol > 0.0) {
        return usage("tolerances must be positive");
    }
    if m.samples < 2 {
        return usage("--samples must be at least 2");
    }
    Ok(m)
}

fn default_perturbation(model: ModelName) -> &'static str {
    match model {
        ModelName::Planar => "alpha",
        ModelName::StickSlip | ModelName::Coupled => "c",
        ModelName::Custom => "",
    }
}

/// Parameters known to a model, checked against the overrides.
fn apply_params(names: &[&str], values: &mut [f64], m: &ExperimentManifest, skip: &[&str]) -> CliResult<()> {
    for (k, v) in &m.params {
        if skip.contains(&k.as_str()) {
            continue;
        }
        match names.iter().position(|n| n == k) {
            Some(i) => values[i] = *v,
            None => return usage(format!("unknown parameter `{k}` for model {:?}", m.model)),
        }
    }
    Ok(())
}

fn stick_slip_from(base: StickSlipModel, m: &ExperimentManifest, skip: &[&str]) -> CliResult<StickSlipModel> {
    let mut p = base.params();
    apply_params(&lcsc::models::stick_slip::STICK_SLIP_PARAMS, &mut p, m, skip)?;
    let model = StickSlipModel { m: p[0], k: p[1], c: p[2], delta: p[3], gamma_f: p[4], eta_f: p[5], u: p[6] };
    model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(model)
}

fn planar_from(m: &ExperimentManifest) -> CliResult<PlanarModel> {
    let d = PlanarModel::default();
    let mut p = vec![d.alpha, d.omega];
    apply_params(&["alpha", "omega"], &mut p, m, &[])?;
    PlanarModel::new(p[0], p[1]).map_err(|e| CliError::Usage(e.to_string()))
}

fn coupled_from(m: &ExperimentManifest) -> CliResult<CoupledModel> {
    let unit = stick_slip_from(StickSlipModel::coupled_unit(), m, &["k3"])?;
    let k3 = m.params.get("k3").copied().unwrap_or(0.001);
    Ok(CoupledModel::new(unit, k3))
}

/// Cycle of the selected model with the requested perturbation attached.
pub struct Setup {
    pub lc: LimitCycle,
    pub state: Vec<String>,
    pub planar: Option<PlanarModel>,
    pub perturbed: bool,
}

impl Setup {
    pub fn state_names(&self) -> Vec<&str> {
        self.state.iter().map(String::as_str).collect()
    }
}

fn cycle_options(m: &ExperimentManifest) -> CycleOptions {
    let mut o = CycleOptions::default();
    o.tol.rtol = m.tolerances.rtol;
    o.tol.atol = m.tolerances.atol;
    o
}

fn param_perturbation(sys: &FilippovSystem, p: &PerturbationSpec) -> CliResult<Perturbation> {
    let idx = sys.param_index(&p.parameter).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut direction = vec![0.0; sys.param_names().len()];
    direction[idx] = 1.0;
    Ok(Perturbation { label: p.parameter.clone(), direction, regions: p.region_mask.clone() })
}

/// Builds the system, attaches the perturbation and finds the cycle.
pub fn setup(m: &ExperimentManifest, pert: Option<&PerturbationSpec>, with_regions: bool) -> CliResult<Setup> {
    let opts = cycle_options(m);
    let attach = |sys: FilippovSystem| -> CliResult<FilippovSystem> {
        match pert {
            Some(p) if p.parameter == "region" => usage("the `region` perturbation exists for the planar model only"),
            Some(p) => {
                let q = param_perturbation(&sys, p)?;
                Ok(sys.with_perturbation(q)?)
            }
            None => Ok(sys),
        }
    };
    match m.model {
        ModelName::Planar => {
            let model = planar_from(m)?;
            let regional = pert.is_some_and(|p| p.parameter == "region" || p.region_mask.is_some());
            let sys = if with_regions || regional {
                let r = PlanarRegions { entry_angle: m.sections.entry_angle, exit_angle: m.sections.exit_angle };
                model.system_with_regions(r).map_err(|e| CliError::Usage(e.to_string()))?
            } else {
                model.system()?
            };
            let sys = match pert {
                Some(p) if p.parameter == "region" => {
                    let mut r = regional_perturbation();
                    if let Some(mask) = &p.region_mask {
                        r.regions = Some(mask.clone());
                    }
                    sys.with_perturbation(r)?
                }
                Some(p) if p.parameter == "alpha" && p.region_mask.is_none() => sys.with_perturbation(alpha_perturbation())?,
                _ => attach(sys)?,
            };
            let lc = model.limit_cycle(&sys, opts)?;
            Ok(Setup { lc, state: vec!["x".into(), "y".into()], planar: Some(model), perturbed: pert.is_some() })
        }
        ModelName::StickSlip | ModelName::Coupled => {
            let unit = if m.model == ModelName::Coupled {
                coupled_from(m)?.unit
            } else {
                stick_slip_from(StickSlipModel::default(), m, &[])?
            };
            let sys = attach(unit.system()?)?;
            let lc = unit.limit_cycle(&sys, &[1.0, 0.0], opts)?;
            Ok(Setup { lc, state: vec!["x".into(), "v".into()], planar: None, perturbed: pert.is_some() })
        }
        ModelName::Custom => {
            let Some(path) = &m.system_file else {
                return usage("--model custom needs --system <file>");
            };
            let mut spec = SystemSpec::load(path).map_err(|e| CliError::Usage(e.to_string()))?;
            for (k, v) in &m.params {
                match spec.parameters.get_mut(k) {
                    Some(slot) => *slot = *v,
                    None => return usage(format!("unknown parameter `{k}` in {}", path.display())),
                }
            }
            let sys = spec.build().map_err(|e| CliError::Usage(e.to_string()))?;
            let sys = match pert {
                Some(_) => attach(sys)?,
                None => sys,
            };
            let lc = find_limit_cycle(&sys, &spec.initial_guess, spec.anchor.anchor(), opts)?;
            let state = (0..lc.dim()).map(|i| format!("x{i}")).collect();
            Ok(Setup { lc, state, planar: None, perturbed: pert.is_some() || spec.perturb.is_some() })
        }
    }
}

/// Timing regions between consecutive boundary events, or between the timing sections if any.
pub fn timing_regions(lc: &LimitCycle) -> Vec<TimingRegion> {
    let timing: Vec<usize> =
        (0..lc.events.len()).filter(|&j| matches!(lc.events[j].kind, EventKind::TimingCrossing(_))).collect();
    let cuts = if timing.len() >= 2 {
        timing
    } else {
        (0..lc.events.len())
            .filter(|&j| matches!(lc.events[j].kind, EventKind::Landing(_) | EventKind::Liftoff(_)))
            .collect()
    };
    let n = cuts.len();
    (0..n).map(|k| TimingRegion { entry: cuts[k], exit: cuts[(k + 1) % n] }).collect()
}

struct Writer {
    out: PathBuf,
    format: Format,
    files: Vec<String>,
}

impl Writer {
    fn table(&mut self, name: &str, t: &Table) -> CliResult<()> {
        if matches!(self.format, Format::Csv | Format::Both) {
            t.save(&self.out.join(format!("{name}.csv")))?;
            self.files.push(format!("{name}.csv"));
        }
        Ok(())
    }

    fn plot(&mut self, name: &str, t: &Table, title: &str, y_label: &str, cols: &[&str], dashed: &[&str]) -> CliResult<()> {
        if self.format.svg() {
            figures::plot_columns(t, title, y_label, cols, dashed).save(&self.out.join(format!("{name}.svg")))?;
            self.files.push(format!("{name}.svg"));
        }
        Ok(())
    }
}

fn vecs(v: &[f64]) -> Value {
    json!(v)
}

fn events_json(lc: &LimitCycle) -> Value {
    Value::Array(
        lc.events
            .iter()
            .enumerate()
            .map(|(j, e)| json!({ "index": j, "kind": e.kind.to_string(), "time": e.time, "state": vecs(&e.state) }))
            .collect(),
    )
}

fn prefixed<'a>(prefix: &str, names: &[&'a str]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}{n}")).collect()
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Runs one subcommand and returns its JSON summary; output files land in `out`.
pub fn run(command: Command, m: &ExperimentManifest, out: &Path) -> CliResult<Value> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(e.to_string()))?;
    let mut w = Writer { out: out.to_path_buf(), format: m.format, files: Vec::new() };
    let n = m.samples;
    let mut summary = match command {
        Command::Cycle => {
            let s = setup(m, None, false)?;
            let names = s.state_names();
            let t = figures::cycle_table(&s.lc, &names, n)?;
            w.table("cycle", &t)?;
            w.plot("cycle", &t, "limit cycle", "state", &names, &[])?;
            let lifts: Vec<Value> = s
                .lc
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::Liftoff(_)))
                .map(|e| vecs(&e.state))
                .collect();
            json!({
                "period": s.lc.period,
                "closure_error": s.lc.closure_error,
                "events": events_json(&s.lc),
                "liftoff_states": lifts,
            })
        }
        Command::Prc => {
            let s = setup(m, m.perturbation.as_ref(), false)?;
            let names = s.state_names();
            let z = iprc(&s.lc)?;
            let mut t = figures::iprc_table(&s.lc, &z, &names, n)?;
            let mut v = json!({
                "period": s.lc.period,
                "floquet_multiplier": z.eigenvalue,
                "normalization_defect": z.normalization_defect,
            });
            if s.perturbed {
                let t1 = period_shift(&s.lc, &z);
                t.comments.push(format!("period sensitivity T1 = {t1}, nu1 = {}", t1 / s.lc.period));
                v["t1"] = json!(t1);
                v["nu1"] = json!(t1 / s.lc.period);
            }
            w.table("iprc", &t)?;
            let zc = prefixed("z_", &names);
            w.plot("iprc", &t, "infinitesimal phase response curve", "z", &as_strs(&zc), &[])?;
            v
        }
        Command::Ltrc => {
            let pert = m.perturbation.clone().unwrap_or_else(|| PerturbationSpec {
                parameter: if m.model == ModelName::Planar { "region".into() } else { default_perturbation(m.model).into() },
                eps: FD_STEP,
                region_mask: None,
            });
            if pert.parameter.is_empty() {
                return usage("--perturb is required for this model");
            }
            let s = setup(m, Some(&pert), true)?;
            let state = s.state.clone();
            let names = as_strs(&state);
            let ctx = SrcContext::new(s.lc, FD_STEP, cycle_options(m))?;
            let regions = timing_regions(&ctx.lc);
            let ltrcs = ctx.region_ltrcs(&regions)?;
            let mut parts = Vec::new();
            for (j, l) in ltrcs.iter().enumerate() {
                let t = figures::ltrc_table(l, &names, n)?;
                w.table(&format!("ltrc_{j}"), &t)?;
                let ec = prefixed("eta_", &names);
                w.plot(&format!("ltrc_{j}"), &t, "local timing response curve", "eta", &as_strs(&ec), &[])?;
                parts.push(json!({
                    "entry_event": l.region.entry,
                    "exit_event": l.region.exit,
                    "t_in": l.t_in,
                    "t_out": l.t_out,
                    "t1": l.t1,
                    "nu1": l.nu1,
                }));
            }
            let sum: f64 = ltrcs.iter().map(|l| l.t1).sum();
            json!({ "period": ctx.lc.period, "t1": ctx.t1, "sum_region_t1": sum, "regions": parts })
        }
        Command::Variational => {
            let s = setup(m, None, false)?;
            let names = s.state_names();
            let u0 = m.u0.clone().unwrap_or_else(|| {
                let mut u = vec![0.0; s.lc.dim()];
                u[s.lc.dim() - 1] = 0.1;
                u
            });
            if u0.len() != s.lc.dim() {
                return usage(format!("--u0 needs {} components", s.lc.dim()));
            }
            let t = figures::variational_table(&s.lc, &u0, &names, n)?;
            let u = lcsc::sensitivity::variational_forward(&s.lc, &u0)?;
            let closure = (u.final_value() - u.initial()).norm();
            w.table("variational", &t)?;
            let uc = prefixed("u_", &names);
            let dc = prefixed("direct_", &names);
            let cols: Vec<&str> = uc.iter().chain(dc.iter()).map(String::as_str).collect();
            w.plot("variational", &t, "linear response to an initial displacement", "u", &cols, &as_strs(&dc))?;
            json!({ "period": s.lc.period, "u0": u0, "closure": closure })
        }
        Command::Src => {
            let pert = m.perturbation.clone().unwrap_or_else(|| PerturbationSpec {
                parameter: default_perturbation(m.model).into(),
                eps: if m.model == ModelName::StickSlip { -0.05 } else { 0.01 },
                region_mask: None,
            });
            if pert.parameter.is_empty() {
                return usage("--perturb is required for this model");
            }
            let piecewise = m.rescale == RescaleName::Piecewise;
            let s = setup(m, Some(&pert), piecewise && m.model == ModelName::Planar)?;
            let state = s.state.clone();
            let names = as_strs(&state);
            let planar_global = s.planar.is_some() && pert.parameter == "alpha" && pert.region_mask.is_none();
            let s_regional = s.planar.is_some() && !planar_global;
            let ctx = SrcContext::new(s.lc, FD_STEP, cycle_options(m))?;
            let section = match m.section_event {
                Some(j) if j < ctx.lc.events.len() => j,
                Some(j) => return usage(format!("the cycle has {} events; section {j} is out of range", ctx.lc.events.len())),
                None if planar_global => event_index(&ctx.lc, EventKind::Landing(0))?,
                None if piecewise || s_regional => timing_regions(&ctx.lc)[0].entry,
                None => ctx.lc.events.len() - 1,
            };
            let rescale = if piecewise { Rescale::Piecewise(timing_regions(&ctx.lc)) } else { Rescale::Uniform };
            let c = ctx.compare(pert.eps, section, &rescale, SHAPE_GRID)?;
            let t = figures::shape_table(&c, &names, (SHAPE_GRID / n).max(1))?;
            w.table("src", &t)?;
            let nc = prefixed("numeric_", &names);
            let ic = prefixed("isrc_", &names);
            let cols: Vec<&str> = nc.iter().chain(ic.iter()).map(String::as_str).collect();
            w.plot("src", &t, "shape response", "displacement", &cols, &as_strs(&ic))?;
            json!({
                "period": ctx.lc.period,
                "eps": c.eps,
                "section_event": section,
                "section_kind": ctx.lc.events[section].kind.to_string(),
                "rescale": format!("{:?}", m.rescale).to_lowercase(),
                "t1": c.t1,
                "period_eps": c.period_eps,
                "region_t1": c.ltrcs.iter().map(|l| l.t1).collect::<Vec<_>>(),
                "relative_l2_error": c.rel_error,
            })
        }
        Command::Isochrons | Command::Kink => {
            let s = setup(m, None, false)?;
            let Some(model) = s.planar else {
                return usage(format!("{} runs on the planar model only", command.name()));
            };
            let g = m.grid.unwrap_or(201);
            if g < 3 {
                return usage("--grid must be at least 3");
            }
            let field = isochron_grid(&s.lc, [-1.0, 1.0, -1.0, 1.0], g, g, PhaseOptions::default())?;
            let missing = field.phase.iter().filter(|p| p.is_none()).count();
            if command == Command::Isochrons {
                let mut t = Table::new(["x", "y", "phase"])
                    .comment(format!("asymptotic phase on a {g} x {g} grid, period {}", s.lc.period))
                    .comment("nan marks nodes that did not converge");
                for (j, y) in field.ys.iter().enumerate() {
                    for (i, x) in field.xs.iter().enumerate() {
                        t.push(vec![*x, *y, field.get(i, j).unwrap_or(f64::NAN)])?;
                    }
                }
                w.table("isochrons", &t)?;
                if m.format.svg() {
                    let mid = g / 2;
                    let mut row = Table::new(["x", "phase"]);
                    for (i, x) in field.xs.iter().enumerate() {
                        row.push(vec![*x, field.get(i, mid).unwrap_or(f64::NAN)])?;
                    }
                    w.plot("isochrons", &row, "asymptotic phase along the middle row", "phase", &["phase"], &[])?;
                }
                json!({ "period": s.lc.period, "grid": g, "non_converged": missing })
            } else {
                let r = kink_experiment(&s.lc, &field, &model, 10, m.seed)?;
                let mut t = Table::new(["curve", "x", "y", "normal_x", "normal_y", "plus", "minus", "jump"])
                    .comment("normal-derivative jump of the phase; curve 0 is the osculating trajectory, 1 the controls")
                    .comment(format!("median jump {} (osculating) vs {} (controls)", r.osculating_median, r.control_median));
                for (c, list) in [(0.0, &r.osculating), (1.0, &r.controls)] {
                    for k in list.iter() {
                        t.push(vec![c, k.point[0], k.point[1], k.normal[0], k.normal[1], k.plus, k.minus, k.jump])?;
                    }
                }
                w.table("kink", &t)?;
                json!({
                    "period": s.lc.period,
                    "grid": g,
                    "non_converged": missing,
                    "seed": m.seed,
                    "control_starts": r.control_starts,
                    "osculating_median_jump": r.osculating_median,
                    "control_median_jump": r.control_median,
                    "ratio": r.ratio(),
                    "wall_normal_defect": r.wall_normal_defect,
                })
            }
        }
        Command::Couple => {
            if m.model != ModelName::Coupled {
                return usage("couple runs on the coupled model only");
            }
            let model = coupled_from(m)?;
            let a = coupling_analysis(model, 512, cycle_options(m))?;
            let t_end = m.t_end.unwrap_or(80000.0);
            let lag = m.lag.unwrap_or(1e-3);
            if !(t_end > 0.0) || !(lag > 0.0 && lag < a.lc.period) {
                return usage("--t-end must be positive and --lag inside (0, period)");
            }
            let ht = figures::h_table(&a.h)?;
            w.table("interaction", &ht)?;
            w.plot("interaction", &ht, "interaction function", "H", &["H", "H_odd"], &["H_odd"])?;
            let pm = phase_model_simulate(&a.h, model.k3, lag, t_end, 10.0)?;
            let pt = figures::psi_table(&pm, &format!("phase model, k3 = {}, psi0 = {lag}", model.k3))?;
            w.table("psi_phase_model", &pt)?;
            let label = format!("full model, k3 = {}, initial lag {lag}", model.k3);
            let path = out.join("psi_full_model.csv");
            let write_csv = m.format != Format::Svg;
            let mut io_err = None;
            let sys = model.system()?;
            let full = full_model_phase_difference(
                &sys,
                &a.lagged_start(lag),
                None,
                [EventKind::Liftoff(0), EventKind::Liftoff(1)],
                a.lc.period,
                t_end,
                1000.0,
                |t, samples| {
                    log::info!("couple: t = {t}, {} phase samples", samples.len());
                    if write_csv {
                        if let Err(e) = figures::psi_table(samples, &label).and_then(|tb| tb.save(&path)) {
                            io_err = Some(e);
                        }
                    }
                },
            )?;
            if let Some(e) = io_err {
                return Err(e.into());
            }
            let ft = figures::psi_table(&full, &label)?;
            w.table("psi_full_model", &ft)?;
            if m.format.svg() {
                let p = lcsc::export::Plot::new("phase difference", "t", "psi")
                    .with(lcsc::export::Series::new("phase model", pm.clone()))
                    .with(lcsc::export::Series::new("full model", full.clone()).dashed());
                p.save(&out.join("psi.svg"))?;
                w.files.push("psi.svg".into());
            }
            let hp = &a.h.spline;
            json!({
                "period": a.lc.period,
                "k3": model.k3,
                "lag": lag,
                "t_end": t_end,
                "h_odd_slope_at_0": hp.derivative(0.0),
                "h_odd_slope_at_half_period": hp.derivative(0.5 * a.lc.period),
                "fixed_points": a.h.fixed_points(),
                "psi_phase_model_final": pm.last().map(|p| p.1),
                "psi_full_model_final": full.last().map(|p| p.1),
            })
        }
    };
    summary["command"] = json!(command.name());
    summary["files"] = json!(w.files);
    write_json(&out.join(format!("{}_summary.json", command.name())), &summary)?;
    std::fs::write(out.join("manifest.json"), m.to_json()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(summary)
}

/// Full command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let name = cli.command.name();
    let result = resolve_manifest(&cli.flags).and_then(|m| run(cli.command, &m, &cli.flags.out));
    match result {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("lcsc {name}: {e}");
            let diag = e.diagnostic(name);
            if e.exit_code() == EXIT_NUMERICAL {
                let _ = std::fs::create_dir_all(&cli.flags.out);
                let _ = write_json(&cli.flags.out.join("diagnostic.json"), &diag);
                eprintln!("{diag}");
            }
            e.exit_code()
        }
    }
}

pub use experiments::KinkReport;
