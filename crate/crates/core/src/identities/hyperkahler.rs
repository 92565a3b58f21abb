//! Relations among the complex structures of a flat hyper-Kähler target, and
//! the Kähler angles of the normal bundle.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::registry::CheckInput;
use super::support::*;
use crate::angles::{angle_data, AngleData};
use crate::error::Result;
use crate::immersion::{first_fundamental, Shape};
use crate::target::{j_from_sphere, HyperKahlerTriple, SpherePoint};
use crate::tensor::{span_from_projector, MetricTensor};

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn structure(triple: &HyperKahlerTriple, v: [f64; 3]) -> DMatrix<f64> {
    &triple.i * v[0] + &triple.j * v[1] + &triple.k * v[2]
}

fn coord(p: &[f64], i: usize) -> f64 {
    p.get(i % p.len()).copied().unwrap_or(0.0)
}

/// A sphere point read off the sample coordinates.
fn generic_direction(p: &[f64]) -> [f64; 3] {
    let nu = 0.5 * PI * (coord(p, 0) + 1.0);
    let phi = PI * coord(p, 1);
    SpherePoint::new(nu, phi).unit_vector()
}

/// A unit vector orthogonal to `s`, rotated by an angle read off the sample.
fn orthogonal_direction(s: [f64; 3], p: &[f64]) -> [f64; 3] {
    let helper = if s[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let a = unit([s[1] * helper[2] - s[2] * helper[1], s[2] * helper[0] - s[0] * helper[2], s[0] * helper[1] - s[1] * helper[0]]);
    let b = [s[1] * a[2] - s[2] * a[1], s[2] * a[0] - s[0] * a[2], s[0] * a[1] - s[1] * a[0]];
    let t = PI * coord(p, 2);
    [a[0] * t.cos() + b[0] * t.sin(), a[1] * t.cos() + b[1] * t.sin(), a[2] * t.cos() + b[2] * t.sin()]
}

fn sphere_setup(inp: &CheckInput) -> Option<(HyperKahlerTriple, [f64; 3])> {
    let Shape::HkComplexPlane { sphere, .. } = &inp.chart.shape else {
        return None;
    };
    let triple = inp.chart.target().hyperkahler.clone()?;
    Some((triple, sphere.unit_vector()))
}

/// J_sJ_t + J_tJ_s = −2⟨s, t⟩ Id, so the pair anticommutes exactly when s ⊥ t.
pub(crate) fn anticommute_criterion(inp: &CheckInput) -> Result<Outcome> {
    let Some((triple, s)) = sphere_setup(inp) else {
        return Ok(Outcome::skip("requires a hyper-Kähler complex plane"));
    };
    let js = structure(&triple, s);
    let dim = triple.dim();
    let anti = |t: [f64; 3]| -> (DMatrix<f64>, f64) {
        let jt = structure(&triple, t);
        (&js * &jt + &jt * &js, dot(s, t))
    };
    let (generic, st) = anti(generic_direction(inp.p));
    let (orth, so) = anti(orthogonal_direction(s, inp.p));
    let id = DMatrix::<f64>::identity(dim, dim);
    let identity_res = (&generic + &id * (2.0 * st)).amax().max((&orth + &id * (2.0 * so)).amax());
    Ok(Outcome::judged(generic.amax(), 2.0 * st.abs(), identity_res.max(orth.amax()))
        .detail("orthogonal_anticommutator", orth.amax())
        .detail("inner_product", st))
}

/// Kähler angles of a J_s-complex plane with respect to J_t all equal |⟨s, t⟩|.
pub(crate) fn angle_between_structures(inp: &CheckInput) -> Result<Outcome> {
    let Some((triple, s)) = sphere_setup(inp) else {
        return Ok(Outcome::skip("requires a hyper-Kähler complex plane"));
    };
    let t = generic_direction(inp.p);
    let target = inp.chart.target().with_complex_structure(structure(&triple, t), "t");
    let chart = inp.chart.clone().with_target(target)?;
    let data = angle_data(&chart, inp.p)?;
    let expected = dot(s, t).abs();
    let worst = data.cos_spectrum.iter().map(|c| (c - expected).abs()).fold(0.0, f64::max);
    let top = data.cos_spectrum.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome::judged(top, expected, worst))
}

/// The restriction of ω_I to a J_{νφ}-complex plane is cos ν · J_{νφ}.
pub(crate) fn complex_plane_angles(inp: &CheckInput) -> Result<Outcome> {
    let Shape::HkComplexPlane { sphere, .. } = &inp.chart.shape else {
        return Ok(Outcome::skip("requires a hyper-Kähler complex plane"));
    };
    let Some(triple) = inp.chart.target().hyperkahler.clone() else {
        return Ok(Outcome::skip("requires a hyper-Kähler target"));
    };
    let pg = first_fundamental(inp.chart, inp.p)?;
    let data = angle_data(inp.chart, inp.p)?;
    let jnp = j_from_sphere(&triple, sphere);
    let left = pg.g_m.inverse() * pg.df.transpose() * &pg.g_n;
    let expected = (&left * &jnp * &pg.df) * sphere.nu.cos();
    let a = &data.operator.components;
    let c = sphere.nu.cos().abs();
    let spectrum = data.cos_spectrum.iter().map(|x| (x - c).abs()).fold(0.0, f64::max);
    Ok(Outcome::judged(a.amax(), expected.amax(), (a - &expected).amax().max(spectrum)).detail("spectrum_residual", spectrum))
}

/// ω restricted to the normal bundle has the same Kähler angles as F, and
/// Φ∘J_ω = −J_NM∘Φ at equal angles.
pub(crate) fn normal_bundle_angles(inp: &CheckInput) -> Result<Outcome> {
    let pg = first_fundamental(inp.chart, inp.p)?;
    let data = angle_data(inp.chart, inp.p)?;
    let d = pg.dim();
    let m = pg.f.len();
    skip_unless!(m == 2 * d, "normal bundle rank differs from the dimension");
    let gn = MetricTensor::new(pg.g_n.clone())?;
    let basis = span_from_projector(&pg.normal_projector, &gn, m - d, &[]);
    skip_unless!(basis.len() == m - d, "could not build a normal frame");
    let u = DMatrix::from_columns(&basis);
    let normal = AngleData::from_first_order(inp.p, pg.f.clone(), u.clone(), pg.g_n.clone(), pg.j_n.clone())?;
    let gap = data
        .cos_spectrum
        .iter()
        .zip(normal.cos_spectrum.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let lhs = data.cos_spectrum.iter().sum::<f64>();
    let rhs = normal.cos_spectrum.iter().sum::<f64>();
    let mut out_sec = gap;
    let mut intertwine = None;
    if !data.has_complex_direction() && !is_lagrangian_somewhere(&data) && data.spread() < crate::angles::EQUAL_TOL {
        let phi = data.phi();
        let jnm = &u * &normal.polar.jomega * u.transpose() * &pg.g_n;
        let r = (&phi * &data.polar.jomega + &jnm * &phi).amax();
        out_sec = out_sec.max(r);
        intertwine = Some(r);
    }
    let out = Outcome::judged(lhs, rhs, out_sec).detail("spectrum_gap", gap);
    Ok(match intertwine {
        Some(r) => out.detail("intertwining_residual", r),
        None => out,
    })
}
