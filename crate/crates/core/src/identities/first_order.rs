//! Pointwise first-order identities: Ricci reconstruction, derivative of the
//! pull-back form, torsion, gradients of the angle, codifferentials.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::registry::CheckInput;
use super::support::*;
use crate::angles::{
    angle_data, frame_with_recipe, jomega_covariant, pullback_covariant, scalar_field, torsion_and_difference,
    codifferential, nabla_form_norm2, nabla_operator_norm2,
};
use crate::error::Result;
use crate::fd;
use crate::target::christoffel_from;

pub(crate) fn ricci_reconstruction(inp: &CheckInput) -> Result<Outcome> {
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    let pack = frame_pack(inp.chart, inp.p, false)?;
    let pg = &pack.pg;
    let t = inp.chart.target();
    let f = pg.f.as_slice();
    let rn = t.curvature(f);
    let ric = t.ricci(f);
    let m2 = f.len();
    let n = pack.tables.n;
    let df = complex_mat(&pg.df);
    let jdf = complex_mat(&(&pg.j_n * &pg.df));
    let pn = complex_mat(&pg.normal_projector);
    // W = Σ_μ 4/sin²θ_μ dF(μ) ⊗ (J dF(μ̄))^⊥
    let mut w = DMatrix::<Complex64>::zeros(m2, m2);
    for mu in 0..n {
        let a = &df * &pack.tables.vectors[mu];
        let b = &pn * (&jdf * &pack.tables.vectors[mu + n]);
        w += (&a * b.transpose()) * Complex64::new(4.0 / pack.tables.sin2(mu), 0.0);
    }
    let mut rhs = DMatrix::<Complex64>::zeros(m2, m2);
    for u in 0..m2 {
        for v in 0..m2 {
            let mut s = ZERO;
            for e in 0..m2 {
                let jev = pg.j_n[(e, v)];
                if jev == 0.0 {
                    continue;
                }
                for c in 0..m2 {
                    for d in 0..m2 {
                        s += w[(c, d)] * (jev * rn.get(u, e, c, d));
                    }
                }
            }
            rhs[(u, v)] = s;
        }
    }
    let re = rhs.map(|c| c.re);
    let im = rhs.map(|c| c.im.abs()).max();
    let diff = (&ric - &re).amax();
    Ok(Outcome::judged(frob(&ric), frob(&re), diff.max(im)).detail("imaginary_part", im))
}

/// (∇_k F*ω)_ij against −g(∇dF(∂k,∂i), J dF ∂j) + g(∇dF(∂k,∂j), J dF ∂i).
pub(crate) fn nabla_pullback(inp: &CheckInput) -> Result<Outcome> {
    let pg = crate::immersion::first_fundamental(inp.chart, inp.p)?;
    let sf = crate::immersion::second_fundamental(inp.chart, &pg)?;
    let d = pg.dim();
    let lhs = pullback_covariant(inp.chart, inp.p, &pg.domain_christoffel)?;
    let jdf = &pg.j_n * &pg.df;
    let b = |k: usize, i: usize, j: usize| -> f64 { pg.target_inner(&sf.nabla_df[k][i], &jdf.column(j).into_owned()) };
    let mut ln = 0.0;
    let mut rn = 0.0;
    let mut diff = 0.0f64;
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let r = -b(k, i, j) + b(k, j, i);
                let l = lhs[k][(i, j)];
                ln += l * l;
                rn += r * r;
                diff = diff.max((l - r).abs());
            }
        }
    }
    Ok(Outcome::judged(ln.sqrt(), rn.sqrt(), diff))
}

/// Φ(T′(Z_α, Z_β)) = i(c_α − c_β)∇dF(Z_α, Z_β), Φ(T′(Z_α, Z̄_β)) = i(c_α + c_β)∇dF(Z_α, Z̄_β).
pub(crate) fn torsion_lemma(inp: &CheckInput) -> Result<Outcome> {
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    let pack = frame_pack(inp.chart, inp.p, false)?;
    let cc = torsion_and_difference(inp.chart, &pack.pg, &pack.sf)?;
    let parts = cc.torsion.as_ref().expect("torsion is filled off the complex locus");
    let d = pack.pg.dim();
    let n = pack.tables.n;
    let phi = complex_mat(&cc.phi);
    let tconn = |a: &DVector<Complex64>, b: &DVector<Complex64>| -> DVector<Complex64> {
        let mut s = DVector::<Complex64>::zeros(d);
        for i in 0..d {
            for j in 0..d {
                s += complex(&parts.torsion_connection[i][j]) * (a[i] * b[j]);
            }
        }
        s
    };
    let v = &pack.tables.vectors;
    let (mut ln, mut rn, mut diff) = (0.0f64, 0.0f64, 0.0f64);
    for a in 0..n {
        for b in 0..2 * n {
            let lhs = &phi * tconn(&v[a], &v[b]);
            let ca = pack.tables.cos_of(a);
            let cb = pack.tables.cos_of(b);
            let factor = if b < n { ca - cb } else { ca + cb };
            let rhs = pack.tables.ddf(a, b) * (I * factor);
            ln = ln.max(cnorm(&lhs));
            rn = rn.max(cnorm(&rhs));
            diff = diff.max(cnorm(&(lhs - rhs)));
        }
    }
    Ok(Outcome::judged(ln, rn, diff)
        .detail("torsion_route_gap", parts.route_gap())
        .detail("trace_lemma_residual", parts.trace_residual))
}

fn log_sin2_gradient(inp: &CheckInput, gamma: &crate::target::Christoffel) -> Result<DVector<f64>> {
    let jet = scalar_field(inp.chart, inp.p, gamma, true, |d| {
        let c = d.mean_cos();
        (1.0 - c * c).ln()
    })?;
    let g = inp.chart.induced_metric(inp.p)?;
    Ok(g.inverse() * jet.gradient)
}

fn mean_cos_gradient(inp: &CheckInput, gamma: &crate::target::Christoffel) -> Result<DVector<f64>> {
    let jet = scalar_field(inp.chart, inp.p, gamma, true, |d| d.mean_cos())?;
    let g = inp.chart.induced_metric(inp.p)?;
    Ok(g.inverse() * jet.gradient)
}

/// Gate shared by the equal-angle identities: equal angles near p, no complex
/// and no Lagrangian point.
pub(crate) fn equal_angle_gate(inp: &CheckInput) -> Result<Option<Outcome>> {
    let data = angle_data(inp.chart, inp.p)?;
    if data.has_complex_direction() {
        return Ok(Some(Outcome::skip("complex direction present")));
    }
    if is_lagrangian_somewhere(&data) {
        return Ok(Some(Outcome::skip("Lagrangian direction present")));
    }
    if !equal_angles_near(inp.chart, inp.p)? {
        return Ok(Some(Outcome::skip("Kähler angles are not equal near the point")));
    }
    Ok(None)
}

pub(crate) fn grad_logsin(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let pack = frame_pack(inp.chart, inp.p, false)?;
    let n = pack.tables.n;
    let phi = pack.data.phi();
    let grad = log_sin2_gradient(inp, &pack.pg.domain_christoffel)?;
    let lhs = &phi * (grad * ((1.0 - n as f64) / 4.0));
    let c = pack.data.mean_cos();
    let s2 = 1.0 - c * c;
    let phic = complex_mat(&phi);
    let t = &pack.tables;
    let mut acc = DVector::<Complex64>::zeros(phi.nrows());
    for beta in 0..n {
        let mut coef = ZERO;
        for mu in 0..n {
            coef += t.g(mu + n, mu, beta) - t.g(mu + n, beta, mu);
        }
        acc += (&phic * &t.vectors[beta + n]) * (I * coef);
    }
    let rhs = acc.map(|z| z.re) * (4.0 * c / s2);
    Ok(Outcome::judged(lhs.norm(), rhs.norm(), (&lhs - &rhs).amax()))
}

pub(crate) fn codifferential_check(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let pg = crate::immersion::first_fundamental(inp.chart, inp.p)?;
    let gamma = &pg.domain_christoffel;
    let g = &pg.g_m;
    let gi = g.inverse();
    let data = angle_data(inp.chart, inp.p)?;
    let n = data.n() as f64;
    let nabla = pullback_covariant(inp.chart, inp.p, gamma)?;
    let delta_w = gi * codifferential(&nabla, gi);
    let grad_c = mean_cos_gradient(inp, gamma)?;
    let jw = &data.polar.jomega;
    let rhs = (jw * &grad_c) * (n - 2.0);
    let nj = jomega_covariant(inp.chart, inp.p, gamma)?;
    let forms: Vec<DMatrix<f64>> = nj.iter().map(|m| g.lower_op(m)).collect();
    let delta_j = gi * codifferential(&forms, gi);
    let c = data.mean_cos();
    let second = (&delta_j * c - (jw * &grad_c) * (n - 1.0)).amax();
    Ok(Outcome::judged(gnorm(g, &delta_w), gnorm(g, &rhs), (&delta_w - &rhs).amax().max(second))
        .detail("codiff_jomega_norm", gnorm(g, &delta_j))
        .detail("jomega_identity_residual", second))
}

pub(crate) fn norm_split(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let pg = crate::immersion::first_fundamental(inp.chart, inp.p)?;
    let gamma = &pg.domain_christoffel;
    let g = &pg.g_m;
    let data = angle_data(inp.chart, inp.p)?;
    let n = data.n() as f64;
    let nabla = pullback_covariant(inp.chart, inp.p, gamma)?;
    let lhs = 2.0 * nabla_form_norm2(&nabla, g.inverse());
    let grad_c = mean_cos_gradient(inp, gamma)?;
    let nj = jomega_covariant(inp.chart, inp.p, gamma)?;
    let c = data.mean_cos();
    let rhs = 2.0 * n * g.inner(&grad_c, &grad_c) + c * c * nabla_operator_norm2(&nj, g);
    Ok(Outcome::judged(lhs, rhs, 0.0))
}

/// dg̃_{μγ̄}(Z) by differentiating g̃ in the frame field, against the second
/// fundamental form and frame connection coefficients.
pub(crate) fn gtilde_derivative(inp: &CheckInput) -> Result<Outcome> {
    let data = angle_data(inp.chart, inp.p)?;
    skip_unless!(!data.has_complex_direction(), "complex direction present");
    let pack = frame_pack(inp.chart, inp.p, true)?;
    let t = &pack.tables;
    let n = t.n;
    let m = 2 * n;
    let d = pack.pg.dim();
    let recipe = pack.frame.recipe.clone();
    let field = |q: &[f64]| -> Result<Vec<f64>> {
        let fr = frame_with_recipe(inp.chart, q, &recipe)?;
        let dq = angle_data(inp.chart, q)?;
        let gt = complex_mat(&dq.gtilde_form);
        let mut out = Vec::with_capacity(2 * m * m);
        for a in 0..m {
            for b in 0..m {
                let v = fr.z_vectors[a].0.transpose() * &gt * &fr.z_vectors[b].0;
                out.push(v[0].re);
                out.push(v[0].im);
            }
        }
        Ok(out)
    };
    let grad = fd::gradient(&field, inp.p, &inp.chart.fd)?;
    let dg = |z: usize, a: usize, b: usize| -> Complex64 {
        let mut s = ZERO;
        for k in 0..d {
            let idx = 2 * (a * m + b);
            s += t.vectors[z][k] * Complex64::new(grad[k][idx], grad[k][idx + 1]);
        }
        s
    };
    let gt = complex_mat(&pack.data.gtilde_form);
    let gtl = |a: usize, b: usize| -> Complex64 { (t.vectors[a].transpose() * &gt * &t.vectors[b])[0] };
    let (mut ln, mut rn, mut diff, mut zero_line) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for z in 0..m {
        for mu in 0..n {
            for ga in 0..n {
                let gb = ga + n;
                let mut rhs = I * t.g(z, mu, gb) - I * t.g(z, gb, mu);
                for rho in 0..n {
                    rhs += (t.c(z, mu, rho + n) * gtl(rho, gb) + t.c(z, gb, rho) * gtl(mu, rho + n)) * 2.0;
                }
                let lhs = dg(z, mu, gb);
                ln = ln.max(lhs.norm());
                rn = rn.max(rhs.norm());
                diff = diff.max((lhs - rhs).norm());
                let mut zero = -I * t.g(z, mu, ga) + I * t.g(z, ga, mu);
                for rho in 0..n {
                    zero += (t.c(z, mu, rho) * gtl(rho + n, ga) - t.c(z, ga, rho) * gtl(mu, rho + n)) * 2.0;
                }
                let lhs0 = dg(z, mu, ga);
                zero_line = zero_line.max(zero.norm()).max((lhs0 - zero).norm());
            }
        }
    }
    Ok(Outcome::judged(ln, rn, diff.max(zero_line)).detail("type_20_residual", zero_line))
}

/// ¼ g^{ij}(Γ̂ − Γ)^k_ij against (1 − n)/4 ∇log sin²θ.
pub(crate) fn trace_difference(inp: &CheckInput) -> Result<Outcome> {
    if let Some(s) = equal_angle_gate(inp)? {
        return Ok(s);
    }
    let pg = crate::immersion::first_fundamental(inp.chart, inp.p)?;
    let d = pg.dim();
    let hat_field = |q: &[f64]| -> Result<Vec<f64>> { Ok(angle_data(inp.chart, q)?.hat_metric.as_slice().to_vec()) };
    let dhat: Vec<DMatrix<f64>> =
        fd::gradient(&hat_field, inp.p, &inp.chart.fd)?.into_iter().map(|v| DMatrix::from_vec(d, d, v)).collect();
    let data = angle_data(inp.chart, inp.p)?;
    let hinv = data.hat_metric.clone().try_inverse().ok_or(crate::error::KalError::SingularPhi)?;
    let hat = christoffel_from(&hinv, &dhat);
    let gi = pg.g_m.inverse();
    let lhs = DVector::from_fn(d, |k, _| {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += gi[(i, j)] * (hat.get(k, i, j) - pg.domain_christoffel.get(k, i, j));
            }
        }
        0.25 * s
    });
    let n = data.n() as f64;
    let rhs = log_sin2_gradient(inp, &pg.domain_christoffel)? * ((1.0 - n) / 4.0);
    Ok(Outcome::judged(gnorm(&pg.g_m, &lhs), gnorm(&pg.g_m, &rhs), (&lhs - &rhs).amax()))
}
