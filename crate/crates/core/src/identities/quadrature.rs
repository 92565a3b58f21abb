//! Integral identities over a flat-torus domain.
//!
//! The integrands are smooth and periodic, so the rectangle rule on a uniform
//! grid over [0, 2π)^d converges faster than any power of the spacing.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::registry::CheckInput;
use super::support::*;
use crate::angles::{angle_data, codifferential, nabla_form_norm2, pullback_covariant, scalar_field, EQUAL_TOL};
use crate::error::{KalError, Result};
use crate::immersion::{domain_curvature_fd, first_fundamental, ImmersionChart};

/// Nodes per axis for a d-dimensional domain.
pub(crate) fn axis_nodes(grid: usize, d: usize) -> usize {
    match d {
        0..=2 => grid,
        3..=4 => grid.min(8),
        _ => grid.min(4),
    }
    .max(2)
}

fn nodes(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let h = 2.0 * PI / per_axis as f64;
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let i = k % per_axis;
                    k /= per_axis;
                    i as f64 * h
                })
                .collect()
        })
        .collect()
}

/// ∫ f Vol_M over one fundamental domain, for each component of f.
fn integrate<F>(chart: &ImmersionChart, per_axis: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let d = chart.domain_dim();
    let cell = (2.0 * PI / per_axis as f64).powi(d as i32);
    let parts: Vec<Vec<f64>> = nodes(d, per_axis)
        .par_iter()
        .map(|q| -> Result<Vec<f64>> {
            let vol = chart.induced_metric(q)?.matrix().determinant().sqrt();
            Ok(f(q)?.into_iter().map(|v| v * vol * cell).collect())
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; parts.first().map_or(0, |v| v.len())];
    for v in parts {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    Ok(sum)
}

fn periodic_gate(chart: &ImmersionChart) -> Option<Outcome> {
    if chart.periodicity().is_none() {
        return Some(Outcome::skip(KalError::Aperiodic.to_string()));
    }
    None
}

/// Local integrand of the integrated Weitzenböck formula: ‖δω‖², ‖∇ω‖², ⟨Sω, ω⟩.
fn weitzenbock_terms(chart: &ImmersionChart, q: &[f64]) -> Result<Vec<f64>> {
    let pg = first_fundamental(chart, q)?;
    let gi = pg.g_m.inverse();
    let nabla = pullback_covariant(chart, q, &pg.domain_christoffel)?;
    let delta = codifferential(&nabla, gi);
    let codiff = (delta.transpose() * gi * &delta)[0];
    let rough = nabla_form_norm2(&nabla, gi);
    let w = angle_data(chart, q)?.pullback_form;
    let s = s_term(&domain_curvature_fd(chart, q)?, &w, &pg.g_m);
    Ok(vec![codiff, rough, s])
}

pub(crate) fn integral_weitzenbock(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = periodic_gate(inp.chart) {
        return Ok(s);
    }
    let d = inp.chart.domain_dim();
    let n_fine = axis_nodes(inp.grid, d);
    let fine = integrate(inp.chart, n_fine, |q| weitzenbock_terms(inp.chart, q))?;
    let coarse = integrate(inp.chart, (n_fine / 2).max(2), |q| weitzenbock_terms(inp.chart, q))?;
    let rhs = fine[1] + fine[2];
    let coarse_gap = (coarse[0] - coarse[1] - coarse[2]).abs();
    Ok(Outcome::judged(fine[0], rhs, 0.0)
        .detail("codifferential_integral", fine[0])
        .detail("rough_integral", fine[1])
        .detail("curvature_integral", fine[2])
        .detail("coarse_residual", coarse_gap))
}

/// Checks minimality and equal angles at every node; `Some(reason)` on failure.
fn equal_minimal_nodes(chart: &ImmersionChart, per_axis: usize, need_regular: bool) -> Result<Option<String>> {
    let d = chart.domain_dim();
    for q in nodes(d, per_axis) {
        if crate::immersion::mean_curvature_norm(chart, &q)? >= MINIMAL_TOL {
            return Ok(Some("requires minimal".into()));
        }
        let data = angle_data(chart, &q)?;
        if data.spread() >= EQUAL_TOL {
            return Ok(Some("Kähler angles are not equal on the grid".into()));
        }
        if need_regular && data.has_complex_direction() {
            return Ok(Some("complex point on the grid".into()));
        }
    }
    Ok(None)
}

pub(crate) fn integral_n2(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = periodic_gate(inp.chart) {
        return Ok(s);
    }
    skip_unless!(inp.chart.n() == 2, "requires n = 2");
    let Some(r) = inp.chart.target().einstein_constant() else {
        return Ok(Outcome::skip("target is not Kähler–Einstein"));
    };
    let per_axis = axis_nodes(inp.grid, inp.chart.domain_dim());
    if let Some(reason) = equal_minimal_nodes(inp.chart, per_axis, false)? {
        return Ok(Outcome::skip(reason));
    }
    let integrand = |q: &[f64]| -> Result<Vec<f64>> {
        let c = angle_data(inp.chart, q)?.mean_cos();
        Ok(vec![2.0 * r * (1.0 - c * c) * c * c])
    };
    let fine = integrate(inp.chart, per_axis, integrand)?;
    let coarse = integrate(inp.chart, (per_axis / 2).max(2), integrand)?;
    Ok(Outcome::judged(fine[0], 0.0, 0.0).detail("coarse_value", coarse[0]))
}

pub(crate) fn integral_n3(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = periodic_gate(inp.chart) {
        return Ok(s);
    }
    skip_unless!(inp.chart.n() >= 3, "requires n ≥ 3");
    let Some(r) = inp.chart.target().einstein_constant() else {
        return Ok(Outcome::skip("target is not Kähler–Einstein"));
    };
    let per_axis = axis_nodes(inp.grid, inp.chart.domain_dim());
    if let Some(reason) = equal_minimal_nodes(inp.chart, per_axis, true)? {
        return Ok(Outcome::skip(reason));
    }
    let nf = inp.chart.n() as f64;
    let integrand = |q: &[f64]| -> Result<Vec<f64>> {
        let data = angle_data(inp.chart, q)?;
        let c = data.mean_cos();
        let s2 = 1.0 - c * c;
        let gamma = inp.chart.domain_christoffel(q)?;
        let grad = scalar_field(inp.chart, q, &gamma, true, |d| d.mean_cos())?.gradient;
        let g2 = (grad.transpose() * data.g_m.inverse() * &grad)[0];
        let cot2 = c * c / s2;
        Ok(vec![nf * r * s2 * c * c, (nf - 2.0) * (nf - 2.0 + 2.0 * cot2) * g2])
    };
    let v = integrate(inp.chart, per_axis, integrand)?;
    Ok(Outcome::judged(v[0], v[1], 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_the_cube() {
        let pts = nodes(2, 4);
        assert_eq!(pts.len(), 16);
        assert!(pts.iter().all(|p| p.iter().all(|&x| (0.0..2.0 * PI).contains(&x))));
    }

    #[test]
    fn rectangle_rule_on_flat_plane_gives_area() {
        let chart = ImmersionChart::from_id("tilted-plane?alpha=0.4&n=1").unwrap();
        let v = integrate(&chart, 8, |_| Ok(vec![1.0])).unwrap();
        assert!((v[0] - 4.0 * PI * PI).abs() < 1e-10);
    }
}
