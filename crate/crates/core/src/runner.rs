//! Batch runs over the catalog and deterministic report rendering.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::angles::angle_data;
use crate::error::{KalError, Result};
use crate::fd::FdSettings;
use crate::flow::{dichotomy_report, DichotomyReport, FlowTrace};
use crate::identities::{registry, run_check, sample_point, select_checks, CheckSpec, Domain, IdentityReport, OracleMeta, Verdict};
use crate::immersion::ImmersionChart;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for Format {
    type Err = KalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            _ => Err(KalError::Config(format!("unknown format '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Glob over check ids.
    pub checks: String,
    pub examples: Vec<String>,
    pub points: usize,
    pub seed: u64,
    /// Overrides every selected check's tolerance.
    pub tolerance: Option<f64>,
    pub fd: FdSettings,
    /// Nodes per axis for domain integrals.
    pub grid: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            checks: "*".into(),
            examples: Vec::new(),
            points: 5,
            seed: 0,
            tolerance: None,
            fd: FdSettings::default(),
            grid: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub seed: u64,
    pub fd: FdSettings,
    pub tolerances: Vec<(String, f64)>,
    pub results: Vec<IdentityReport>,
    pub summary: Summary,
}

impl RunReport {
    /// 0 when nothing failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail > 0 {
            1
        } else {
            0
        }
    }
}

/// Resolves ids and settings; nothing is evaluated.
pub fn validate(config: &RunConfig) -> Result<(Vec<&'static CheckSpec>, Vec<ImmersionChart>)> {
    let checks = select_checks(&config.checks).map_err(|_| KalError::Config(format!("no check matches '{}'", config.checks)))?;
    if config.examples.is_empty() {
        return Err(KalError::Config("no example selected".into()));
    }
    config.fd.validate()?;
    if let Some(t) = config.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(KalError::Config(format!("tolerance must be positive, got {t}")));
        }
    }
    if config.points == 0 {
        return Err(KalError::Config("at least one point is required".into()));
    }
    let charts = config
        .examples
        .iter()
        .map(|id| ImmersionChart::from_id(id).map(|c| c.with_fd(config.fd)))
        .collect::<Result<Vec<_>>>()?;
    Ok((checks, charts))
}

/// Runs every selected check on every example. Pointwise checks use
/// `config.points` seeded samples; domain integrals run once.
pub fn run_catalog(config: &RunConfig) -> Result<RunReport> {
    let (checks, charts) = validate(config)?;
    let mut tasks: Vec<(usize, &'static CheckSpec, Option<u64>)> = Vec::new();
    for (e, _) in charts.iter().enumerate() {
        for &spec in &checks {
            match spec.domain {
                Domain::Torus => tasks.push((e, spec, None)),
                Domain::Pointwise => tasks.extend((0..config.points as u64).map(|k| (e, spec, Some(k)))),
            }
        }
    }
    let results: Vec<IdentityReport> = tasks
        .par_iter()
        .map(|&(e, spec, index)| {
            let chart = &charts[e];
            match index {
                None => run_check(spec, chart, &[], config.grid, config.tolerance),
                Some(k) => match sample_point(chart, spec, config.seed, k) {
                    Ok(p) => run_check(spec, chart, &p, config.grid, config.tolerance),
                    Err(reason) => IdentityReport::skipped(
                        spec.id,
                        Vec::new(),
                        config.tolerance.unwrap_or(spec.tolerance),
                        reason,
                        OracleMeta::fd(&chart.fd, chart.jet_mode.label()),
                    )
                    .with_example(&chart.id),
                },
            }
        })
        .collect();
    let mut summary = Summary::default();
    for r in &results {
        match r.verdict {
            Verdict::Pass => summary.pass += 1,
            Verdict::Fail => summary.fail += 1,
            Verdict::Skipped(_) => summary.skipped += 1,
        }
    }
    let tolerances = checks.iter().map(|c| (c.id.to_string(), config.tolerance.unwrap_or(c.tolerance))).collect();
    Ok(RunReport { seed: config.seed, fd: config.fd, tolerances, results, summary })
}

/// Caps the global rayon pool; a second call is ignored.
pub fn configure_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
}

/// 12 significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        "0.00000000000e0".into()
    } else if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.11e}")
    }
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    } else {
        Value::String(fmt_float(x))
    }
}

fn obj(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

fn report_value(r: &IdentityReport) -> Value {
    let (status, reason) = match &r.verdict {
        Verdict::Skipped(why) => ("skipped", Value::String(why.clone())),
        v => (if v.is_pass() { "pass" } else { "fail" }, Value::Null),
    };
    let details = r.details.iter().map(|(k, v)| (k.clone(), num(*v))).collect::<Map<_, _>>();
    obj(vec![
        ("check_id", Value::String(r.check_id.clone())),
        ("example", Value::String(r.example.clone())),
        ("point", Value::Array(r.point.iter().map(|x| num(*x)).collect())),
        ("lhs", num(r.lhs)),
        ("rhs", num(r.rhs)),
        ("residual_abs", num(r.residual_abs)),
        ("residual_rel", num(r.residual_rel)),
        ("tolerance", num(r.tolerance)),
        ("verdict", Value::String(status.into())),
        ("reason", reason),
        ("note", r.note.clone().map_or(Value::Null, Value::String)),
        ("details", Value::Object(details)),
        (
            "oracle",
            obj(vec![
                ("fd_step", num(r.oracle.fd_step)),
                ("fd_order", Value::from(r.oracle.fd_order)),
                ("jets", Value::String(r.oracle.jets.clone())),
            ]),
        ),
    ])
}

fn fd_value(fd: &FdSettings) -> Value {
    obj(vec![("step", num(fd.step)), ("order", Value::from(fd.order))])
}

pub fn report_json_value(report: &RunReport) -> Value {
    let tolerances = report.tolerances.iter().map(|(k, v)| (k.clone(), num(*v))).collect::<Map<_, _>>();
    obj(vec![
        (
            "meta",
            obj(vec![
                ("seed", Value::from(report.seed)),
                ("fd", fd_value(&report.fd)),
                ("tolerances", Value::Object(tolerances)),
                ("version", Value::String(VERSION.into())),
            ]),
        ),
        ("results", Value::Array(report.results.iter().map(report_value).collect())),
        (
            "summary",
            obj(vec![
                ("pass", Value::from(report.summary.pass)),
                ("fail", Value::from(report.summary.fail)),
                ("skipped", Value::from(report.summary.skipped)),
            ]),
        ),
    ])
}

/// Pretty JSON with sorted keys and fixed float formatting.
pub fn write_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |d: usize| "  ".repeat(d);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&fmt_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            if items.iter().all(|x| matches!(x, Value::Number(_) | Value::String(_))) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, depth);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                write_value(out, x, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(depth + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(depth));
            out.push('}');
        }
    }
}

fn verdict_reason(r: &IdentityReport) -> String {
    match &r.verdict {
        Verdict::Skipped(why) => why.clone(),
        _ => r.note.clone().unwrap_or_default(),
    }
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| KalError::Io(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| KalError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| KalError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| KalError::Io(e.to_string()))
}

fn point_text(p: &[f64]) -> String {
    p.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(" ")
}

pub fn render_report(report: &RunReport, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(write_json(&report_json_value(report))),
        Format::Csv => {
            let rows = report
                .results
                .iter()
                .map(|r| {
                    vec![
                        r.check_id.clone(),
                        r.example.clone(),
                        point_text(&r.point),
                        fmt_float(r.lhs),
                        fmt_float(r.rhs),
                        fmt_float(r.residual_abs),
                        fmt_float(r.residual_rel),
                        fmt_float(r.tolerance),
                        r.verdict.label().to_string(),
                        verdict_reason(r),
                    ]
                })
                .collect();
            csv_text(
                &["check_id", "example", "point", "lhs", "rhs", "residual_abs", "residual_rel", "tolerance", "verdict", "reason"],
                rows,
            )
        }
        Format::Table => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:<28} {:<30} {:<4} {:>19} {:>19} {:>19} {:>9}  note",
                "check", "example", "", "lhs", "rhs", "residual", "tol"
            );
            for r in &report.results {
                let _ = writeln!(
                    out,
                    "{:<28} {:<30} {:<4} {:>19} {:>19} {:>19} {:>9.1e}  {}",
                    r.check_id,
                    r.example,
                    r.verdict.label(),
                    fmt_float(r.lhs),
                    fmt_float(r.rhs),
                    fmt_float(r.residual_abs),
                    r.tolerance,
                    verdict_reason(r)
                );
            }
            let s = report.summary;
            let _ = writeln!(out, "pass {}  fail {}  skipped {}", s.pass, s.fail, s.skipped);
            Ok(out)
        }
    }
}

/// The check registry and example ids, one per line.
pub fn catalog_listing() -> String {
    let mut out = String::from("checks:\n");
    for c in registry() {
        let domain = match c.domain {
            Domain::Pointwise => "point",
            Domain::Torus => "torus",
        };
        let _ = writeln!(out, "  {:<28} {:<6} tol {:.0e}  {}", c.id, domain, c.tolerance, c.statement);
    }
    out.push_str("immersions:\n");
    for id in crate::immersion::IMMERSION_IDS {
        let _ = writeln!(out, "  {id}");
    }
    out.push_str("targets:\n");
    for id in crate::target::TARGET_IDS {
        let _ = writeln!(out, "  {id}");
    }
    out
}

/// Angle data at one point as sorted-key JSON.
pub fn angles_json(chart: &ImmersionChart, p: &[f64]) -> Result<String> {
    let data = angle_data(chart, p)?;
    let class = serde_json::to_value(&data.classification).map_err(|e| KalError::Io(e.to_string()))?;
    let v = obj(vec![
        ("example", Value::String(chart.id.clone())),
        ("point", Value::Array(p.iter().map(|x| num(*x)).collect())),
        ("cos", Value::Array(data.cos_spectrum.iter().map(|x| num(*x)).collect())),
        ("theta", Value::Array(data.cos_spectrum.iter().map(|x| num(x.acos())).collect())),
        ("kappa", num(data.kappa)),
        ("kappa_det", num(data.kappa_det)),
        ("form_norm2", num(data.form_norm2())),
        ("classification", class),
    ]);
    Ok(write_json(&v))
}

pub fn flow_json(example: &str, trace: &FlowTrace) -> String {
    let d: DichotomyReport = dichotomy_report(trace);
    let class = match d.limit_class {
        crate::flow::LimitClass::Lagrangian => obj(vec![("class", Value::String("lagrangian".into()))]),
        crate::flow::LimitClass::Complex => obj(vec![("class", Value::String("complex".into()))]),
        crate::flow::LimitClass::ConstantAngle { theta } => {
            obj(vec![("class", Value::String("constant_angle".into())), ("theta", num(theta))])
        }
        crate::flow::LimitClass::Undetermined => obj(vec![("class", Value::String("undetermined".into()))]),
    };
    let records = trace
        .records
        .iter()
        .map(|r| {
            obj(vec![
                ("step", Value::from(r.step)),
                ("volume", num(r.volume)),
                ("grad_norm", num(r.grad_norm)),
                ("max_mean_curvature", num(r.max_mean_curvature)),
                ("min_cos", num(r.min_cos)),
                ("max_cos", num(r.max_cos)),
                ("mean_cos", num(r.mean_cos)),
                ("kappa_integral", num(r.kappa_integral)),
                ("class_integral", num(r.class_integral)),
                ("step_size", num(r.step_size)),
            ])
        })
        .collect();
    let v = obj(vec![
        (
            "meta",
            obj(vec![
                ("example", Value::String(example.into())),
                ("grid", Value::Array(trace.grid_shape.iter().map(|n| Value::from(*n)).collect())),
                ("max_steps", Value::from(trace.params.max_steps)),
                ("stop_grad_norm", num(trace.params.stop_grad_norm)),
                ("version", Value::String(VERSION.into())),
                ("label", Value::String(d.label.into())),
            ]),
        ),
        (
            "dichotomy",
            obj(vec![
                ("limit", class),
                ("final_min_cos", num(d.final_min_cos)),
                ("final_max_cos", num(d.final_max_cos)),
                ("final_spread", num(d.final_spread)),
                ("final_volume", num(d.final_volume)),
                ("class_integral", num(d.class_integral)),
                ("class_drift", num(d.class_drift)),
                ("wirtinger_gap", num(d.wirtinger_gap)),
                ("steps", Value::from(d.steps)),
                ("backtracks", Value::from(trace.backtracks)),
                ("converged", Value::Bool(trace.converged)),
            ]),
        ),
        ("trace", Value::Array(records)),
    ]);
    write_json(&v)
}

/// Trace rows (step, volume, grad_norm, min_cos, max_cos, class_integral, ...).
pub fn flow_csv(trace: &FlowTrace) -> Result<String> {
    let rows = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend(
                [r.volume, r.grad_norm, r.min_cos, r.max_cos, r.class_integral, r.max_mean_curvature, r.mean_cos, r.kappa_integral]
                    .iter()
                    .map(|x| fmt_float(*x)),
            );
            row
        })
        .collect();
    csv_text(
        &["step", "volume", "grad_norm", "min_cos", "max_cos", "class_integral", "max_mean_curvature", "mean_cos", "kappa_integral"],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_twelve_digits() {
        assert_eq!(fmt_float(1.0), "1.00000000000e0");
        assert_eq!(fmt_float(-2.5e-7), "-2.50000000000e-7");
        assert_eq!(fmt_float(f64::NAN), "NaN");
    }

    #[test]
    fn keys_come_out_sorted() {
        let v = obj(vec![("b", num(1.0)), ("a", Value::from(2u64))]);
        assert_eq!(write_json(&v), "{\n  \"a\": 2,\n  \"b\": 1.00000000000e0\n}\n");
    }
}
