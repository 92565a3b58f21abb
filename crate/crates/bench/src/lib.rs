//! Shared fixtures for the kernel benchmarks.

use kahler_core::flow::{discretize, DiscreteImmersion};
use kahler_core::ImmersionChart;

/// A catalog chart with a point inside its sampling box.
pub fn chart_at(id: &str, p: &[f64]) -> (ImmersionChart, Vec<f64>) {
    let chart = ImmersionChart::from_id(id).expect("catalog id");
    assert_eq!(chart.domain_dim(), p.len(), "point dimension");
    (chart, p.to_vec())
}

pub fn conj_curve() -> (ImmersionChart, Vec<f64>) {
    chart_at("conj-curve?k=2", &[0.3, -0.2])
}

pub fn product_conj() -> (ImmersionChart, Vec<f64>) {
    chart_at("product-conj", &[0.3, -0.2, 0.15, 0.25])
}

/// The perturbed Lagrangian torus on an n × n grid.
pub fn torus_mesh(n: usize) -> DiscreteImmersion {
    let chart = ImmersionChart::from_id("torus-graph?eps=0.1").expect("catalog id");
    discretize(&chart, [n, n]).expect("periodic chart")
}
