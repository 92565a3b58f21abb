use std::f64::consts::PI;

use kahler_core::flow::{dichotomy_report, discretize, run_flow, volume_and_gradient, FlowParams, LimitClass};
use kahler_core::{ImmersionChart, KalError};
use nalgebra::DVector;

const FLAT: f64 = 4.0 * PI * PI;

fn mesh(id: &str, n: usize) -> kahler_core::flow::DiscreteImmersion {
    discretize(&ImmersionChart::from_id(id).unwrap(), [n, n]).unwrap()
}

/// ∫√det g_M over one period by the rectangle rule, which is spectrally
/// accurate for smooth periodic integrands.
fn smooth_area(id: &str, n: usize) -> f64 {
    let c = ImmersionChart::from_id(id).unwrap();
    let h = 2.0 * PI / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            sum += c.induced_metric(&[i as f64 * h, j as f64 * h]).unwrap().matrix().determinant().sqrt();
        }
    }
    sum * h * h
}

fn bump(n: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..n * n)
        .map(|v| {
            let (i, j) = ((v % n) as f64, (v / n) as f64);
            DVector::from_fn(dim, |k, _| ((k + 1) as f64 * 0.7 * i).sin() * (0.3 * j + k as f64).cos())
        })
        .collect()
}

#[test]
fn flat_torus_has_area_four_pi_squared() {
    for w in ["lagrangian", "tilted", "holomorphic"] {
        let d = mesh(&format!("torus-graph?eps=0&winding={w}"), 12);
        let flat = match w {
            "lagrangian" => FLAT,
            "tilted" => FLAT * 2f64.sqrt(),
            _ => 2.0 * FLAT,
        };
        assert!((d.volume() - flat).abs() < 1e-10 * flat, "{w}: {}", d.volume());
    }
}

#[test]
fn bumped_graph_volume_tracks_the_smooth_area() {
    let smooth = smooth_area("torus-graph?eps=0.1", 128);
    assert!(smooth > FLAT);
    let coarse = mesh("torus-graph?eps=0.1", 32).volume();
    let fine = mesh("torus-graph?eps=0.1", 64).volume();
    assert!(coarse > FLAT && fine > FLAT);
    // piecewise-linear area converges at second order
    let (e0, e1) = ((coarse - smooth).abs(), (fine - smooth).abs());
    assert!(e1 < 1e-3 * smooth, "{fine} vs {smooth}");
    assert!(e0 > 3.0 * e1, "{e0:e} → {e1:e}");
}

#[test]
fn holomorphic_plane_is_complex_everywhere() {
    let d = mesh("torus-graph?eps=0&winding=holomorphic", 8);
    for a in d.vertex_angles().unwrap() {
        assert!((a.cos_spectrum[0] - 1.0).abs() < 1e-12);
    }
    // Wirtinger is an equality on a complex surface
    assert!((d.volume() - d.class_integral()).abs() < 1e-10);
}

#[test]
fn flat_surface_is_critical() {
    let d = mesh("torus-graph?eps=0", 16);
    let (_, grad) = volume_and_gradient(&d).unwrap();
    assert!(grad.iter().all(|g| g.amax() < 1e-12));

    let v0 = d.volume();
    let dv = bump(16, 4);
    let change = |delta: f64| {
        let mut e = d.clone();
        for (x, b) in e.positions.iter_mut().zip(&dv) {
            *x += b * delta;
        }
        e.volume() - v0
    };
    let (a, b) = (change(1e-2), change(1e-3));
    assert!(a > 0.0 && b > 0.0);
    // quadratic response: a tenfold smaller push moves the volume 100× less
    assert!((a / b - 100.0).abs() < 2.0, "ratio {}", a / b);
}

#[test]
fn gradient_matches_finite_differences() {
    let d = mesh("torus-graph?eps=0.1&winding=tilted", 10);
    let (_, grad) = volume_and_gradient(&d).unwrap();
    let dv = bump(10, 4);
    let analytic: f64 = grad.iter().zip(&dv).map(|(g, v)| g.dot(v)).sum();
    let h = 1e-5;
    let shifted = |s: f64| {
        let mut e = d.clone();
        for (x, v) in e.positions.iter_mut().zip(&dv) {
            *x += v * s;
        }
        e.volume()
    };
    let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
    assert!((fd - analytic).abs() < 1e-8 * analytic.abs().max(1.0), "{fd} vs {analytic}");
}

#[test]
fn flat_start_stops_immediately() {
    let (trace, _) = run_flow(mesh("torus-graph?eps=0", 8), FlowParams::default()).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert!(trace.converged);
    assert_eq!(dichotomy_report(&trace).limit_class, LimitClass::Lagrangian);
}

#[test]
fn tilted_flow_settles_at_constant_angle() {
    let params = FlowParams { max_steps: 1500, ..FlowParams::default() };
    let (trace, _) = run_flow(mesh("torus-graph?eps=0.1&winding=tilted", 16), params).unwrap();
    assert!(trace.volume_monotone());
    assert!(trace.class_drift() < 1e-10);
    let report = dichotomy_report(&trace);
    match report.limit_class {
        LimitClass::ConstantAngle { theta } => assert!((theta - PI / 4.0).abs() < 1e-6),
        other => panic!("expected constant angle, got {other:?}"),
    }
    assert!((report.final_volume - FLAT * 2f64.sqrt()).abs() < 1e-6 * FLAT);
}

#[test]
fn near_holomorphic_flow_reaches_the_wirtinger_bound() {
    let params = FlowParams { max_steps: 1500, ..FlowParams::default() };
    let (trace, _) = run_flow(mesh("torus-graph?eps=0.1&winding=holomorphic", 16), params).unwrap();
    let report = dichotomy_report(&trace);
    assert_eq!(report.limit_class, LimitClass::Complex);
    assert!(report.wirtinger_gap.abs() < 1e-8, "gap {}", report.wirtinger_gap);
    assert!((report.class_integral - 2.0 * FLAT).abs() < 1e-9);
}

#[test]
fn unsupported_inputs_are_rejected() {
    let c = ImmersionChart::from_id("product-conj").unwrap();
    assert!(matches!(discretize(&c, [8, 8]), Err(KalError::UnsupportedDimension(4))));
    let c = ImmersionChart::from_id("conj-curve").unwrap();
    assert!(matches!(discretize(&c, [8, 8]), Err(KalError::Aperiodic)));
    let c = ImmersionChart::from_id("torus-graph").unwrap();
    assert!(discretize(&c, [2, 8]).is_err());
}
