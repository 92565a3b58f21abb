use kahler_core::runner::{fmt_float, render_report, run_catalog, validate, Format, RunConfig};
use kahler_core::{FdSettings, KalError, Verdict};

fn config(checks: &str, examples: &[&str]) -> RunConfig {
    RunConfig { checks: checks.into(), examples: examples.iter().map(|s| s.to_string()).collect(), ..RunConfig::default() }
}

#[test]
fn json_rendering_is_reproducible() {
    let c = config("delta-kappa-*", &["conj-curve", "product-conj"]);
    let a = render_report(&run_catalog(&c).unwrap(), Format::Json).unwrap();
    let b = render_report(&run_catalog(&c).unwrap(), Format::Json).unwrap();
    assert_eq!(a, b);
    let parsed: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(parsed["results"].as_array().unwrap().len() == 40);
}

#[test]
fn wolfson_passes_at_every_sample() {
    let report = run_catalog(&config("delta-kappa-wolfson", &["conj-curve"])).unwrap();
    assert_eq!(report.results.len(), 5);
    assert!(report.results.iter().all(|r| r.verdict.is_pass()));
    assert_eq!(report.exit_code(), 0);
}

#[test]
fn failures_show_up_with_their_residual() {
    let mut c = config("weitzenbock", &["conj-curve"]);
    c.points = 1;
    c.tolerance = Some(1e-300);
    let report = run_catalog(&c).unwrap();
    assert_eq!(report.summary.fail, 1);
    assert_eq!(report.exit_code(), 1);
    let table = render_report(&report, Format::Table).unwrap();
    let row = table.lines().find(|l| l.starts_with("weitzenbock")).unwrap();
    assert!(row.contains("FAIL"));
    assert!(row.contains(&fmt_float(report.results[0].residual_abs)));
    assert!(table.ends_with("pass 0  fail 1  skipped 0\n"));
}

#[test]
fn csv_has_one_row_per_sample() {
    let mut c = config("cos2-chain", &["conj-curve", "hk-graph"]);
    c.points = 3;
    let text = render_report(&run_catalog(&c).unwrap(), Format::Csv).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().len(), 10);
    assert_eq!(reader.records().count(), 6);
}

#[test]
fn complex_line_samples_are_skipped_with_reason() {
    let report = run_catalog(&config("delta-kappa-general", &["complex-line"])).unwrap();
    assert_eq!(report.summary.skipped, 5);
    for r in &report.results {
        assert!(matches!(&r.verdict, Verdict::Skipped(s) if s.contains("complex direction")));
    }
}

#[test]
fn bad_selections_are_configuration_errors() {
    assert!(matches!(validate(&config("no-such-*", &["conj-curve"])), Err(KalError::Config(_))));
    assert!(matches!(validate(&config("weitzenbock", &[])), Err(KalError::Config(_))));
    let mut c = config("weitzenbock", &["conj-curve"]);
    c.tolerance = Some(-1.0);
    assert!(matches!(validate(&c), Err(KalError::Config(_))));
    let mut c = config("weitzenbock", &["conj-curve"]);
    c.points = 0;
    assert!(validate(&c).is_err());
    assert!(validate(&config("weitzenbock", &["not-a-surface"])).is_err());
    assert!(FdSettings::new(1e-3, 3).is_err());
}

#[test]
fn float_format() {
    assert_eq!(fmt_float(0.0), "0.00000000000e0");
    assert_eq!(fmt_float(-0.0), "0.00000000000e0");
    assert_eq!(fmt_float(1.5), "1.50000000000e0");
    assert_eq!(fmt_float(f64::INFINITY), "inf");
    assert_eq!(fmt_float(f64::NAN), "NaN");
}
