//! Laplacian of κ and the equal-angle chain built on it.

use nalgebra::DVector;
use num_complex::Complex64;

use super::first_order::equal_angle_gate;
use super::registry::CheckInput;
use super::support::*;
use crate::angles::{
    angle_data, jomega_covariant, nabla_form_norm2, nabla_operator_norm2, pullback_covariant, scalar_field,
    stencil_points, EQUAL_TOL,
};
use crate::error::Result;
use crate::immersion::{domain_curvature_fd, domain_curvature_gauss, first_fundamental, second_fundamental, ImmersionChart};

fn laplace_kappa(inp: &CheckInput) -> Result<f64> {
    let gamma = inp.chart.domain_christoffel(inp.p)?;
    Ok(scalar_field(inp.chart, inp.p, &gamma, false, |d| d.kappa)?.laplacian)
}

fn minimal_gate(inp: &CheckInput) -> Result<Option<Outcome>> {
    if !is_minimal_near(inp.chart, inp.p)? {
        return Ok(Some(Outcome::skip("requires minimal")));
    }
    Ok(None)
}

/// The five groups of the general Δκ formula, each as a complex number.
fn general_terms(inp: &CheckInput) -> Result<[Complex64; 5]> {
    let pack = frame_pack(inp.chart, inp.p, true)?;
    let t = &pack.tables;
    let n = t.n;
    let pg = &pack.pg;
    let target = inp.chart.target();
    let f = pg.f.as_slice();
    let rn = target.curvature(f);
    let ric = complex_mat(&target.ricci(f));
    let df = complex_mat(&pg.df);
    let jdf = complex_mat(&(&pg.j_n * &pg.df));
    let dfv: Vec<DVector<Complex64>> = t.vectors.iter().map(|v| &df * v).collect();
    let jdfv: Vec<DVector<Complex64>> = t.vectors.iter().map(|v| &jdf * v).collect();
    let mut terms = [ZERO; 5];
    for b in 0..n {
        terms[0] += I * 4.0 * (jdfv[b].transpose() * &ric * &dfv[b + n])[0];
        for mu in 0..n {
            let cm = t.cos_of(mu);
            let sm = t.sin2(mu);
            let last = &jdfv[mu + n] + &dfv[mu + n] * (I * cm);
            let r = rn.eval_c(&dfv[b], &dfv[mu], &dfv[b + n], &last);
            terms[1] += Complex64::new(32.0 / sm * r.im, 0.0);
            for rho in 0..n {
                let cr = t.cos_of(rho);
                let sr = t.sin2(rho);
                let prod = t.g(b, mu, rho + n) * t.g(b + n, rho, mu + n);
                terms[2] -= Complex64::new(64.0 * (cm + cr) / (sm * sr) * prod.re, 0.0);
                let sq = t.g(b, mu, rho).norm_sqr() + t.g(b + n, mu, rho).norm_sqr();
                terms[3] += Complex64::new(32.0 * (cr - cm) / (sm * sr) * sq, 0.0);
                let cq = t.c(b, mu, rho).norm_sqr() + t.c(b + n, mu, rho).norm_sqr();
                terms[4] += Complex64::new(32.0 * (cm + cr) / sm * cq, 0.0);
            }
        }
    }
    Ok(terms)
}

pub(crate) fn delta_kappa_general(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = minimal_gate(inp)? {
        return Ok(s);
    }
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    let terms = general_terms(inp)?;
    let total: Complex64 = terms.iter().sum();
    let lhs = laplace_kappa(inp)?;
    let names = ["ricci_term", "curvature_term", "mixed_term", "gradient_term", "connection_term"];
    let mut out = Outcome::judged(lhs, total.re, total.im.abs());
    for (name, v) in names.iter().zip(terms.iter()) {
        out = out.detail(name, v.re);
    }
    Ok(out)
}

/// Right side of the equal-angle Δκ formula.
fn equal_rhs(chart: &ImmersionChart, p: &[f64], r: f64) -> Result<(f64, f64)> {
    let pack = frame_pack(chart, p, false)?;
    let n = pack.tables.n;
    let c = pack.data.mean_cos();
    let s2 = 1.0 - c * c;
    let rm = domain_curvature_gauss(chart, &pack.pg, &pack.sf);
    let v = &pack.tables.vectors;
    let mut sum = ZERO;
    for b in 0..n {
        for mu in 0..n {
            sum += rm.eval_c(&v[b], &v[mu], &v[b + n], &v[mu + n]);
        }
    }
    let gamma = &pack.pg.domain_christoffel;
    let g = &pack.pg.g_m;
    let nj = if n == 1 { 0.0 } else { nabla_operator_norm2(&jomega_covariant(chart, p, gamma)?, g) };
    let grad = g.inverse() * scalar_field(chart, p, gamma, true, |d| d.mean_cos())?.gradient;
    let nf = n as f64;
    let rhs = c * (-2.0 * nf * r + 32.0 / s2 * sum.re + nj / s2 + 8.0 * (nf - 1.0) / (s2 * s2) * g.inner(&grad, &grad));
    Ok((rhs, sum.im.abs()))
}

pub(crate) fn delta_kappa_equal(inp: &CheckInput) -> Result<Outcome> {
    let Some(r) = inp.chart.target().einstein_constant() else {
        return Ok(Outcome::skip("target is not Kähler–Einstein"));
    };
    if let Some(s) = minimal_gate(inp)? {
        return Ok(s);
    }
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let (rhs, im) = equal_rhs(inp.chart, inp.p, r)?;
    let general: f64 = general_terms(inp)?.iter().map(|z| z.re).sum();
    let cross = (rhs - general).abs();
    Ok(Outcome::judged(laplace_kappa(inp)?, rhs, im.max(cross)).detail("general_formula_gap", cross))
}

pub(crate) fn delta_kappa_wolfson(inp: &CheckInput) -> Result<Outcome> {
    skip_unless!(inp.chart.n() == 1, "requires n = 1");
    let Some(r) = inp.chart.target().einstein_constant() else {
        return Ok(Outcome::skip("target is not Kähler–Einstein"));
    };
    if let Some(s) = minimal_gate(inp)? {
        return Ok(s);
    }
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    Ok(Outcome::judged(laplace_kappa(inp)?, -2.0 * r * data.mean_cos(), 0.0))
}

/// max over p and its stencil of |∇dF(X,Y) + ∇dF(J_ωX, J_ωY)|.
fn mixed_part_near(chart: &ImmersionChart, p: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut pts = vec![p.to_vec()];
    pts.extend(stencil_points(chart, p));
    for q in pts {
        let pg = first_fundamental(chart, &q)?;
        let sf = second_fundamental(chart, &pg)?;
        let j = angle_data(chart, &q)?.polar.jomega;
        let d = pg.dim();
        let b = |u: &DVector<f64>, v: &DVector<f64>| -> DVector<f64> {
            let mut s = DVector::zeros(pg.f.len());
            for i in 0..d {
                for k in 0..d {
                    s += &sf.nabla_df[i][k] * (u[i] * v[k]);
                }
            }
            s
        };
        let e = pg.g_m.orthonormal_basis();
        for a in 0..d {
            for c in 0..d {
                let x = e.column(a).into_owned();
                let y = e.column(c).into_owned();
                let m = b(&x, &y) + b(&(&j * &x), &(&j * &y));
                worst = worst.max(pg.target_inner(&m, &m).sqrt());
            }
        }
    }
    Ok(worst)
}

pub(crate) fn delta_kappa_pluriminimal(inp: &CheckInput) -> Result<Outcome> {
    let Some(r) = inp.chart.target().einstein_constant() else {
        return Ok(Outcome::skip("target is not Kähler–Einstein"));
    };
    if let Some(s) = minimal_gate(inp)? {
        return Ok(s);
    }
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    skip_unless!(!is_lagrangian_somewhere(&data), "Lagrangian direction present");
    skip_unless!(mixed_part_near(inp.chart, inp.p)? < MINIMAL_TOL, "requires pluriminimal");
    let sum: f64 = data.cos_spectrum.iter().sum();
    Ok(Outcome::judged(laplace_kappa(inp)?, -2.0 * r * sum, 0.0))
}

pub(crate) fn cos2_chain(inp: &CheckInput) -> Result<Outcome> {
    let Some(r) = inp.chart.target().einstein_constant() else {
        return Ok(Outcome::skip("target is not Kähler–Einstein"));
    };
    if let Some(s) = minimal_gate(inp)? {
        return Ok(s);
    }
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let pg = first_fundamental(inp.chart, inp.p)?;
    let gamma = &pg.domain_christoffel;
    let g = &pg.g_m;
    let data = angle_data(inp.chart, inp.p)?;
    let n = data.n() as f64;
    let lhs = n * scalar_field(inp.chart, inp.p, gamma, false, |d| d.form_norm2() / d.n() as f64)?.laplacian;
    let c = data.mean_cos();
    let s2 = 1.0 - c * c;
    let rm = domain_curvature_fd(inp.chart, inp.p)?;
    let s = s_term(&rm, &data.pullback_form, g);
    let rough = nabla_form_norm2(&pullback_covariant(inp.chart, inp.p, gamma)?, g.inverse());
    let grad = g.inverse() * scalar_field(inp.chart, inp.p, gamma, true, |d| d.mean_cos())?.gradient;
    let rhs = -2.0 * n * s2 * c * c * r + 2.0 * s + 2.0 * rough + 4.0 * (n - 2.0) * c * c / s2 * g.inner(&grad, &grad);
    Ok(Outcome::judged(lhs, rhs, 0.0).detail("curvature_term", s).detail("rough_term", rough))
}

pub(crate) fn gauss_holsec(inp: &CheckInput) -> Result<Outcome> {
    let Some(k) = inp.chart.target().holomorphic_curvature() else {
        return Ok(Outcome::skip("target has no constant holomorphic curvature"));
    };
    let pg = first_fundamental(inp.chart, inp.p)?;
    let sf = second_fundamental(inp.chart, &pg)?;
    skip_unless!(sf.mean_curvature.amax() < MINIMAL_TOL, "requires minimal");
    let data = angle_data(inp.chart, inp.p)?;
    let n = data.n();
    let vectors: Vec<DVector<Complex64>> = if k == 0.0 {
        let e = pg.g_m.orthonormal_basis();
        let half = Complex64::new(0.5, 0.0);
        let z: Vec<DVector<Complex64>> = (0..n)
            .map(|a| (complex(&e.column(2 * a).into_owned()) - complex(&e.column(2 * a + 1).into_owned()) * I) * half)
            .collect();
        let zb: Vec<DVector<Complex64>> = z.iter().map(|v| v.map(|c| c.conj())).collect();
        z.into_iter().chain(zb).collect()
    } else {
        skip_unless!(!data.has_complex_direction(), "complex direction present");
        skip_unless!(data.spread() < EQUAL_TOL, "Kähler angles are not equal at the point");
        frame_pack(inp.chart, inp.p, false)?.tables.vectors
    };
    let rm = domain_curvature_fd(inp.chart, inp.p)?;
    let d = pg.dim();
    let hess = |u: &DVector<Complex64>, v: &DVector<Complex64>| -> DVector<Complex64> {
        let mut s = DVector::<Complex64>::zeros(pg.f.len());
        for i in 0..d {
            for j in 0..d {
                s += complex(&sf.nabla_df[i][j]) * (u[i] * v[j]);
            }
        }
        s
    };
    let mut lhs = ZERO;
    let mut sq = 0.0;
    for mu in 0..n {
        for rho in 0..n {
            lhs += rm.eval_c(&vectors[mu], &vectors[rho], &vectors[mu + n], &vectors[rho + n]);
            let h = hess(&vectors[mu], &vectors[rho + n]);
            sq += bilinear(&pg.g_n, &h, &h.map(|c| c.conj())).re;
        }
    }
    let c = data.mean_cos();
    let nf = n as f64;
    let rhs = nf * (nf - 1.0) / 16.0 * (1.0 - c * c) * k - sq;
    Ok(Outcome::judged(lhs.re, rhs, lhs.im.abs()))
}
