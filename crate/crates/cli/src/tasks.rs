use rhobar_core::ctools::{c_transform, CostTable, cross_curvature, cross_curvature_fd, convex_stability_check, is_c_concave, StabilityVerdict};
use rhobar_core::equivariant::{
    ar_inverse_coefficients, build_code, coupling_cost_mc, CCodeBuilder, SlidingBlockCode,
};
use rhobar_core::glue::{glue_finite, FiniteJoint2};
use rhobar_core::rhobar::{coupling_sandwich, rho_field_capped, rho_sequence_capped};
use rhobar_core::{Error, FieldSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CodeKind, Expectation, ExperimentConfig, TaskConf, TaskSpec};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
}

impl Check {
    /// `lhs <= rhs + tol`.
    fn at_most(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self { name: name.into(), pass: lhs <= rhs + tol, lhs, rhs, tol }
    }

    /// `|lhs - rhs| <= tol`.
    fn close(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self { name: name.into(), pass: (lhs - rhs).abs() <= tol, lhs, rhs, tol }
    }
}

/// One row of the flat CSV table.
#[derive(Debug, Clone)]
pub struct Row {
    pub series: String,
    pub n: i64,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub results: Value,
    pub checks: Vec<Check>,
    pub rows: Vec<Row>,
}

fn series(name: &str, ns: impl IntoIterator<Item = i64>, values: &[f64]) -> Vec<Row> {
    ns.into_iter()
        .zip(values)
        .map(|(n, v)| Row { series: name.to_string(), n, value: *v })
        .collect()
}

/// Runs one task; `seed` is already specific to the task.
pub fn run_task(cfg: &ExperimentConfig, task: &TaskConf, seed: u64) -> Result<TaskOutput, CliError> {
    let wrap = |e: Error| CliError::from_core(&task.name, e);
    let bad = |msg: String| CliError::validation(format!("task `{}`: {msg}", task.name));
    let cap = cfg.caps.enumeration;
    let tol = cfg.tolerances;
    let source = |name: &str| cfg.sources[name].build().map_err(bad);
    let cost = |name: &str| cfg.costs[name].build().map_err(bad);

    match &task.spec {
        TaskSpec::RhoSequence { left, right, cost: c, n_max } => {
            let rep = rho_sequence_capped(&source(left)?, &source(right)?, &cost(c)?, *n_max, cap).map_err(wrap)?;
            let worst = rep.rho_n.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let checks = vec![
                Check::at_most(
                    "superadditivity_violations",
                    rep.superadditivity_violations.len() as f64,
                    0.0,
                    0.0,
                ),
                Check::at_most("rho_n_below_product_bound", worst, rep.upper, tol.sandwich),
                Check::at_most("rho_1_below_max", rep.lower, rep.rho_bar_lower, tol.sandwich),
            ];
            let rows = series("rho_n", rep.n_values.iter().map(|n| *n as i64), &rep.rho_n);
            Ok(TaskOutput {
                results: json!({
                    "n": rep.n_values,
                    "rho_n": rep.rho_n,
                    "lower": rep.lower,
                    "upper": rep.upper,
                    "rho_bar_lower": rep.rho_bar_lower,
                    "truncated_at": rep.truncated_at,
                    "superadditivity_violations": rep
                        .superadditivity_violations
                        .iter()
                        .map(|v| json!({"m": v.m, "n": v.n, "lhs": v.lhs, "rhs": v.rhs}))
                        .collect::<Vec<_>>(),
                }),
                checks,
                rows,
            })
        }
        TaskSpec::Couple { source: s, potential, cost: c, code, n_max, mc_samples } => {
            let src = source(s)?;
            let cost = cost(c)?;
            let pot = cfg.potentials[potential].build().map_err(bad)?;
            let mut extra = serde_json::Map::new();
            let mut checks = Vec::new();
            let sbc: SlidingBlockCode = match code {
                CodeKind::Convex => build_code(&pot, src.alphabet()).map_err(wrap)?,
                CodeKind::CConcave => {
                    let cc = CCodeBuilder::new(&pot, &cost, src.alphabet())
                        .support(&src)
                        .tolerance(tol.concavity)
                        .cap(cap)
                        .build()
                        .map_err(wrap)?;
                    extra.insert("off_support_windows".into(), json!(cc.off_support));
                    extra.insert(
                        "infimum_warnings".into(),
                        json!(cc.warnings.iter().map(|w| json!({"window": w.window, "gap": w.gap})).collect::<Vec<_>>()),
                    );
                    checks.push(Check::at_most("infimum_warnings", cc.warnings.len() as f64, 0.0, 0.0));
                    cc.code
                }
            };
            let sw = coupling_sandwich(&src, &sbc, &cost, *n_max, cap).map_err(wrap)?;
            for (n, r) in sw.report.n_values.iter().zip(&sw.report.rho_n) {
                checks.push(Check::at_most(format!("sandwich_n{n}"), *r, sw.coupling_cost, tol.sandwich));
            }
            let mut rows = series("rho_n", sw.report.n_values.iter().map(|n| *n as i64), &sw.report.rho_n);
            rows.extend(series("gap", sw.report.n_values.iter().map(|n| *n as i64), &sw.gaps));
            rows.push(Row { series: "coupling_cost".into(), n: 0, value: sw.coupling_cost });
            if let Some(samples) = mc_samples {
                let mc = coupling_cost_mc(&src, &sbc, &cost, *samples, seed).map_err(wrap)?;
                checks.push(Check::close("monte_carlo", mc.estimate, sw.coupling_cost, 3.0 * mc.standard_error));
                extra.insert(
                    "monte_carlo".into(),
                    json!({"estimate": mc.estimate, "standard_error": mc.standard_error, "samples": mc.samples}),
                );
            }
            let mut results = serde_json::Map::new();
            results.insert("code_radius".into(), json!(sbc.radius()));
            results.insert("coupling_cost".into(), json!(sw.coupling_cost));
            results.insert("n".into(), json!(sw.report.n_values));
            results.insert("rho_n".into(), json!(sw.report.rho_n));
            results.insert("gaps".into(), json!(sw.gaps));
            results.extend(extra);
            Ok(TaskOutput { results: Value::Object(results), checks, rows })
        }
        TaskSpec::Ctransform { cost: c, xs, ys, f } => {
            let cost = cost(c)?;
            let xs = xs.build().map_err(wrap)?;
            let ys = ys.build().map_err(wrap)?;
            if f.len() != xs.len() {
                return Err(bad(format!("f has {} values for {} grid points", f.len(), xs.len())));
            }
            let fc = c_transform(f, &cost, &xs, &ys).map_err(wrap)?;
            let fcc = CostTable::scalar(&cost, xs.points(), ys.points())
                .and_then(|t| t.dual_transform(&fc))
                .map_err(wrap)?;
            let conc = is_c_concave(f, &cost, &xs, ys.points(), tol.concavity).map_err(wrap)?;
            let slack = fcc.iter().zip(f).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
            let checks = vec![Check::at_most("double_transform_dominates", slack, 0.0, tol.concavity)];
            let mut rows = series("f_c", 0..fc.len() as i64, &fc);
            rows.extend(series("f_cc", 0..fcc.len() as i64, &fcc));
            Ok(TaskOutput {
                results: json!({
                    "f_c": fc,
                    "f_cc": fcc,
                    "c_concave": conc.concave,
                    "max_gap": conc.max_gap,
                    "witness": conc.witness,
                }),
                checks,
                rows,
            })
        }
        TaskSpec::Curvature { cost: c, x, y } => {
            let cost = cost(c)?;
            if x.len() != y.len() {
                return Err(bad("x and y probe lists differ in length".into()));
            }
            let mut analytic = Vec::with_capacity(x.len());
            let mut fd = Vec::with_capacity(x.len());
            let mut checks = Vec::new();
            for (i, (a, b)) in x.iter().zip(y).enumerate() {
                let s = cross_curvature(&cost, &[*a], &[*b], &[1.0], &[1.0]).map_err(wrap)?;
                let d = cross_curvature_fd(&cost, &[*a], &[*b], &[1.0], &[1.0]).map_err(wrap)?;
                checks.push(Check::close(format!("probe_{i}"), d, s, tol.curvature * s.abs().max(1.0)));
                analytic.push(s);
                fd.push(d);
            }
            let mut rows = series("sigma", 0..analytic.len() as i64, &analytic);
            rows.extend(series("sigma_fd", 0..fd.len() as i64, &fd));
            Ok(TaskOutput { results: json!({"sigma": analytic, "sigma_fd": fd}), checks, rows })
        }
        TaskSpec::Stability { cost: c, xs, ys, n, trials, expect } => {
            let cost = cost(c)?;
            let xs = xs.build().map_err(wrap)?;
            let ys = ys.build().map_err(wrap)?;
            let r = convex_stability_check(&cost, &xs, &ys, *n, *trials, seed).map_err(wrap)?;
            let verdict = match r.verdict {
                StabilityVerdict::Stable => "stable",
                StabilityVerdict::Violated => "violated",
                StabilityVerdict::Inconclusive => "inconclusive",
            };
            let mut checks = Vec::new();
            match expect {
                Some(Expectation::Stable) => {
                    checks.push(Check::at_most("no_violations", r.violations.len() as f64, 0.0, 0.0))
                }
                Some(Expectation::Violated) => {
                    let found = r.violations.len() as f64;
                    checks.push(Check { name: "violation_found".into(), pass: found >= 1.0, lhs: found, rhs: 1.0, tol: 0.0 })
                }
                None => {}
            }
            let first = r.violations.first().map(|v| {
                json!({"trial": v.trial, "ys": v.ys, "x": v.x, "z": v.z, "gap": v.gap, "kind": format!("{:?}", v.kind)})
            });
            Ok(TaskOutput {
                results: json!({
                    "n": r.n,
                    "trials": r.trials,
                    "violations": r.violations.len(),
                    "min_sigma": r.min_sigma,
                    "verdict": verdict,
                    "first_violation": first,
                }),
                checks,
                rows: vec![Row { series: "violations".into(), n: *n as i64, value: r.violations.len() as f64 }],
            })
        }
        TaskSpec::Field { left, right, cost: c, d, sites } => {
            let fa = FieldSpec::new(source(left)?, *d).map_err(wrap)?;
            let fb = FieldSpec::new(source(right)?, *d).map_err(wrap)?;
            let r = rho_field_capped(&fa, &fb, &cost(c)?, sites, cap).map_err(wrap)?;
            Ok(TaskOutput {
                results: json!({"sites": sites.len(), "rho": r.value}),
                checks: Vec::new(),
                rows: vec![Row { series: "rho_field".into(), n: sites.len() as i64, value: r.value }],
            })
        }
        TaskSpec::ArInverse { eps, s_max, t_max } => {
            let ar = ar_inverse_coefficients(*eps, *s_max).map_err(wrap)?;
            let t_max = t_max.unwrap_or(s_max.saturating_sub(2));
            let residual = ar.convolution_residual(t_max);
            let s = *s_max as i64;
            Ok(TaskOutput {
                results: json!({
                    "z_plus": ar.z_plus,
                    "z_minus": if ar.z_minus.is_finite() { json!(ar.z_minus) } else { Value::Null },
                    "coefficients": ar.coefficients(),
                    "residual": residual,
                }),
                checks: vec![Check::at_most("convolution_residual", residual, 0.0, tol.residual)],
                rows: series("b", -s..=s, ar.coefficients()),
            })
        }
        TaskSpec::Glue { p12, p23 } => {
            let a = FiniteJoint2::new(p12.rows, p12.cols, p12.mass.clone()).map_err(wrap)?;
            let b = FiniteJoint2::new(p23.rows, p23.cols, p23.mass.clone()).map_err(wrap)?;
            let g = glue_finite(&a, &b).map_err(wrap)?;
            let err = |x: &FiniteJoint2<f64>, y: &FiniteJoint2<f64>| {
                x.entries().iter().zip(y.entries()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
            };
            let e12 = err(&g.marginal_12(), &a);
            let e23 = err(&g.marginal_23(), &b);
            let [n1, n2, n3] = g.shape();
            let mut mass = Vec::with_capacity(n1 * n2 * n3);
            for i in 0..n1 {
                for j in 0..n2 {
                    for k in 0..n3 {
                        mass.push(*g.get(i, j, k));
                    }
                }
            }
            Ok(TaskOutput {
                results: json!({"shape": [n1, n2, n3], "mass": mass}),
                checks: vec![
                    Check::at_most("marginal_12", e12, 0.0, tol.marginal),
                    Check::at_most("marginal_23", e23, 0.0, tol.marginal),
                ],
                rows: series("p123", 0..mass.len() as i64, &mass),
            })
        }
    }
}
