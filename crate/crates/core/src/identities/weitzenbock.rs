//! Curvature term of the Weitzenböck formula and its consequences.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::first_order::equal_angle_gate;
use super::registry::CheckInput;
use super::support::*;
use crate::angles::{
    angle_data, angle_field_derivatives, form_inner, nabla_form_norm2, pullback_covariant, pullback_hodge_laplacian,
    scalar_field, EQUAL_TOL,
};
use crate::error::Result;
use crate::immersion::{domain_curvature_fd, domain_curvature_gauss, first_fundamental, second_fundamental};
use crate::target::Curvature;

fn r4(r: &Curvature, v: &[DVector<Complex64>], a: usize, b: usize, c: usize, d: usize) -> Complex64 {
    r.eval_c(&v[a], &v[b], &v[c], &v[d])
}

/// The two frame expressions of ⟨SF*ω, F*ω⟩.
fn s_expressions(r: &Curvature, g_inv: &DMatrix<f64>, v: &[DVector<Complex64>], cos: &[f64]) -> (Complex64, Complex64) {
    let n = cos.len();
    let ric = complex_mat(&r.ricci(g_inv));
    let mut e1 = ZERO;
    let mut e2 = ZERO;
    for mu in 0..n {
        let cm = cos[mu];
        let ricmu = (v[mu].transpose() * &ric * &v[mu + n])[0];
        e1 += ricmu * (4.0 * cm * cm);
        for rho in 0..n {
            let cr = cos[rho];
            e1 += r4(r, v, rho, rho + n, mu, mu + n) * (8.0 * cm * cr);
            e2 += r4(r, v, rho, mu, rho + n, mu + n) * (4.0 * (cm + cr).powi(2));
            e2 += r4(r, v, rho + n, mu, rho, mu + n) * (4.0 * (cm - cr).powi(2));
        }
    }
    (e1, e2)
}

pub(crate) fn s_term_equality(inp: &CheckInput) -> Result<Outcome> {
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    let pack = frame_pack(inp.chart, inp.p, false)?;
    let rm = domain_curvature_gauss(inp.chart, &pack.pg, &pack.sf);
    let (e1, e2) = s_expressions(&rm, pack.pg.g_m.inverse(), &pack.tables.vectors, &pack.tables.cos);
    let rm_fd = domain_curvature_fd(inp.chart, inp.p)?;
    let direct = s_term(&rm_fd, &pack.data.pullback_form, &pack.pg.g_m);
    let sec = (direct - e1.re).abs().max(e1.im.abs()).max(e2.im.abs());
    Ok(Outcome::judged(e1.re, e2.re, sec).detail("s_direct", direct))
}

pub(crate) fn s_term_equal_angle(inp: &CheckInput) -> Result<Outcome> {
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    skip_unless!(data.spread() < EQUAL_TOL, "Kähler angles are not equal at the point");
    let pack = frame_pack(inp.chart, inp.p, false)?;
    let rm_fd = domain_curvature_fd(inp.chart, inp.p)?;
    let direct = s_term(&rm_fd, &pack.data.pullback_form, &pack.pg.g_m);
    let rm = domain_curvature_gauss(inp.chart, &pack.pg, &pack.sf);
    let n = pack.tables.n;
    let c = data.mean_cos();
    let v = &pack.tables.vectors;
    let mut sum = ZERO;
    for rho in 0..n {
        for mu in 0..n {
            sum += r4(&rm, v, rho, mu, rho + n, mu + n);
        }
    }
    let rhs = sum * (16.0 * c * c);
    Ok(Outcome::judged(direct, rhs.re, rhs.im.abs()))
}

pub(crate) fn weitzenbock(inp: &CheckInput) -> Result<Outcome> {
    let pg = first_fundamental(inp.chart, inp.p)?;
    let gamma = &pg.domain_christoffel;
    let gi = pg.g_m.inverse();
    let lap = scalar_field(inp.chart, inp.p, gamma, false, |d| d.form_norm2())?.laplacian;
    let data = angle_data(inp.chart, inp.p)?;
    let w = &data.pullback_form;
    let hodge = pullback_hodge_laplacian(inp.chart, inp.p)?;
    let hodge_term = -form_inner(&hodge, w, gi);
    let nabla = pullback_covariant(inp.chart, inp.p, gamma)?;
    let rough = nabla_form_norm2(&nabla, gi);
    let rm = domain_curvature_fd(inp.chart, inp.p)?;
    let s = s_term(&rm, w, &pg.g_m);
    Ok(Outcome::judged(0.5 * lap, hodge_term + rough + s, 0.0)
        .detail("hodge_term", hodge_term)
        .detail("rough_term", rough)
        .detail("curvature_term", s))
}

/// Hermitian trace of R^M over an isotropic basis: normalized sectional sum
/// from the intrinsic curvature against the Gauss-equation contraction.
pub(crate) fn isotropic_scalar(inp: &CheckInput) -> Result<Outcome> {
    let pg = first_fundamental(inp.chart, inp.p)?;
    let sf = second_fundamental(inp.chart, &pg)?;
    let n = pg.dim() / 2;
    let e = pg.g_m.orthonormal_basis();
    let half = Complex64::new(0.5, 0.0);
    let z: Vec<DVector<Complex64>> = (0..n)
        .map(|a| (complex(&e.column(2 * a).into_owned()) - complex(&e.column(2 * a + 1).into_owned()) * I) * half)
        .collect();
    let zb: Vec<DVector<Complex64>> = z.iter().map(|v| v.map(|c| c.conj())).collect();
    let gb = |u: &DVector<Complex64>, v: &DVector<Complex64>| pg.g_m.bilinear(u, v);
    let rm_fd = domain_curvature_fd(inp.chart, inp.p)?;
    let rm = domain_curvature_gauss(inp.chart, &pg, &sf);
    let mut lhs = ZERO;
    let mut rhs = ZERO;
    for rho in 0..n {
        for mu in 0..n {
            rhs += rm.eval_c(&z[rho], &z[mu], &zb[rho], &zb[mu]) * 4.0;
            if rho == mu {
                continue;
            }
            let wedge = gb(&z[rho], &zb[rho]) * gb(&z[mu], &zb[mu]) - gb(&z[rho], &zb[mu]).norm_sqr();
            lhs += rm_fd.eval_c(&z[rho], &z[mu], &zb[rho], &zb[mu]) / wedge;
        }
    }
    Ok(Outcome::judged(lhs.re, rhs.re, lhs.im.abs().max(rhs.im.abs())))
}

pub(crate) fn codiff_norm(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let fd = angle_field_derivatives(inp.chart, inp.p)?;
    let g = inp.chart.induced_metric(inp.p)?;
    let n = fd.cos.len() as f64;
    let delta = &fd.codiff_pullback;
    let grad = &fd.grad_cos[0];
    Ok(Outcome::judged(g.inner(delta, delta), (n - 2.0).powi(2) * g.inner(grad, grad), 0.0))
}

pub(crate) fn parallel_consequences(inp: &CheckInput) -> Result<Outcome> {
    let fd = angle_field_derivatives(inp.chart, inp.p)?;
    skip_unless!(fd.nabla_pullback_norm2.sqrt() < PARALLEL_TOL, "F*ω is not parallel at the point");
    let g = inp.chart.induced_metric(inp.p)?;
    let grad = fd.grad_cos.iter().map(|v| gnorm(&g, v)).fold(0.0, f64::max);
    let harmonic = fd.hodge_laplacian.amax().max(fd.closedness);
    Ok(Outcome::judged(grad, 0.0, harmonic).detail("hodge_laplacian", fd.hodge_laplacian.amax()))
}
