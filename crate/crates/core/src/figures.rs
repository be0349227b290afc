//! Data tables for the standard plots: cycle time series, response curves, shape comparisons
//! and phase-difference histories.

use crate::cycle::LimitCycle;
use crate::error::Result;
use crate::experiments::{Rescale, ShapeComparison, SrcContext};
use crate::export::{Plot, Series, Table};
use crate::hybrid::{integrate, HybridOptions};
use crate::phase::HFunction;
use crate::sensitivity::{variational_forward, Iprc, Ltrc};

fn names(prefix: &str, state: &[&str]) -> Vec<String> {
    state.iter().map(|s| format!("{prefix}{s}")).collect()
}

fn header(first: &str, groups: &[Vec<String>]) -> Vec<String> {
    let mut v = vec![first.to_string()];
    for g in groups {
        v.extend(g.iter().cloned());
    }
    v
}

/// One period of the cycle: time, state, region and sliding mask.
pub fn cycle_table(lc: &LimitCycle, state: &[&str], n: usize) -> Result<Table> {
    let mut cols = header("t", &[names("", state)]);
    cols.push("region".into());
    cols.push("sliding".into());
    let mut t = Table::new(cols).comment(format!("limit cycle, period {}", lc.period));
    for e in &lc.events {
        t.comments.push(format!("event {} at t = {} state {:?}", e.kind, e.time, e.state));
    }
    for i in 0..=n {
        let s = lc.period * i as f64 / n as f64;
        let x = lc.state_at(s);
        let m = lc.mode_at(s);
        let mut row = vec![s];
        row.extend(x.iter());
        row.push(m.region as f64);
        row.push(m.sliding as f64);
        t.push(row)?;
    }
    Ok(t)
}

/// iPRC over one period with the normalization `F.z`.
pub fn iprc_table(lc: &LimitCycle, z: &Iprc, state: &[&str], n: usize) -> Result<Table> {
    let mut cols = header("t", &[names("z_", state)]);
    cols.push("f_dot_z".into());
    let mut t = Table::new(cols)
        .comment(format!("infinitesimal phase response curve, period {}", lc.period))
        .comment(format!("max |F.z - 1| = {:e}", z.normalization_defect));
    for (s, v) in z.curve.sample(n) {
        let f = lc.velocity_at(s);
        let mut row = vec![s];
        row.extend(v.iter());
        row.push(f.dot(&v));
        t.push(row)?;
    }
    Ok(t)
}

/// Linear response to an initial displacement `u0` next to the direct difference of trajectories.
pub fn variational_table(lc: &LimitCycle, u0: &[f64], state: &[&str], n: usize) -> Result<Table> {
    let u = variational_forward(lc, u0)?;
    let x_pert: Vec<f64> = lc.x0.iter().zip(u0).map(|(a, b)| a + b).collect();
    let opts = HybridOptions { tol: lc.tol, ..HybridOptions::default() };
    let (segs, _) = integrate(&lc.system, &x_pert, lc.period, opts)?;
    let direct = crate::ode::DenseSolution { steps: segs.into_iter().flat_map(|s| s.steps).collect() };
    let cols = header("t", &[names("u_", state), names("direct_", state)]);
    let mut t = Table::new(cols)
        .comment(format!("linear shape response to the initial displacement {u0:?}"))
        .comment("direct_: perturbed minus unperturbed trajectory");
    for (s, v) in u.sample(n) {
        let d = direct.eval(s) - lc.state_at(s);
        let mut row = vec![s];
        row.extend(v.iter());
        row.extend(d.iter());
        t.push(row)?;
    }
    Ok(t)
}

/// Rescaled numerical displacement and first-order prediction on the comparison grid.
pub fn shape_table(c: &ShapeComparison, state: &[&str], stride: usize) -> Result<Table> {
    let cols = header("t", &[names("numeric_", state), names("isrc_", state)]);
    let mut t = Table::new(cols)
        .comment(format!("shape response, eps = {}, rescaling {:?}", c.eps, c.rescaling.kind))
        .comment(format!("relative L2 error = {}", c.rel_error));
    for i in (0..c.times.len()).step_by(stride.max(1)) {
        let mut row = vec![c.times[i]];
        row.extend(c.displacement[i].iter());
        row.extend(c.predicted[i].iter());
        t.push(row)?;
    }
    Ok(t)
}

/// L2 norm over the cycle of a vector function sampled at quadrature nodes.
pub fn cycle_norm(values: &[crate::system::StateVector], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| w * v.norm_squared()).sum::<f64>().sqrt()
}

/// Norms of the numerical displacement and of `eps gamma1` over a range of `eps`.
pub fn shape_norm_table(ctx: &SrcContext, eps: &[f64], section: usize, rescale: &Rescale, n: usize) -> Result<Table> {
    let mut t = Table::new(["eps", "numeric_norm", "isrc_norm", "rel_error"])
        .comment(format!("shape response norms, rescaling {rescale:?}"));
    for &e in eps {
        let c = ctx.compare(e, section, rescale, n)?;
        t.push(vec![e, cycle_norm(&c.displacement, &c.weights), cycle_norm(&c.predicted, &c.weights), c.rel_error])?;
    }
    Ok(t)
}

/// Local timing response curve across its region.
pub fn ltrc_table(l: &Ltrc, state: &[&str], n: usize) -> Result<Table> {
    let mut t = Table::new(header("t", &[names("eta_", state)]))
        .comment(format!("local timing response curve on [{}, {}]", l.t_in, l.t_out))
        .comment(format!("T1 = {} (entry {}, integral {}, exit {}), nu1 = {}", l.t1, l.entry_term, l.integral_term, l.exit_term, l.nu1));
    for (s, v) in l.curve.sample(n) {
        let mut row = vec![s];
        row.extend(v.iter());
        t.push(row)?;
    }
    Ok(t)
}

/// Interaction function and its odd part.
pub fn h_table(h: &HFunction) -> Result<Table> {
    let mut t = Table::new(["psi", "H", "H_odd"]).comment(format!("interaction function, period {}", h.period));
    for fp in h.fixed_points() {
        t.comments.push(format!("fixed point psi = {} slope {} {}", fp.psi, fp.slope, if fp.stable { "stable" } else { "unstable" }));
    }
    for i in 0..h.psi.len() {
        t.push(vec![h.psi[i], h.h[i], h.h_odd[i]])?;
    }
    Ok(t)
}

/// Phase-difference history `(t, psi)`.
pub fn psi_table(samples: &[(f64, f64)], label: &str) -> Result<Table> {
    let mut t = Table::new(["t", "psi"]).comment(label.to_string());
    for &(a, b) in samples {
        t.push(vec![a, b])?;
    }
    Ok(t)
}

/// Plot of selected columns against the first one.
pub fn plot_columns(table: &Table, title: &str, y_label: &str, columns: &[&str], dashed: &[&str]) -> Plot {
    let x = table.rows.iter().map(|r| r[0]).collect::<Vec<_>>();
    let mut p = Plot::new(title, table.columns[0].clone(), y_label);
    for c in columns {
        if let Some(y) = table.column(c) {
            let s = Series::new(*c, x.iter().copied().zip(y).collect());
            p = p.with(if dashed.contains(c) { s.dashed() } else { s });
        }
    }
    p
}
