//! Shared gates and contractions for the identity checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::angles::{
    angle_data, diagonalizing_frame, frame_derivatives, frame_tables, neighborhood_spread, stencil_points, AngleData,
    DiagonalizingFrame, FrameTables, EQUAL_TOL,
};
use crate::error::Result;
use crate::immersion::{first_fundamental, second_fundamental, ImmersionChart, PointGeometry, SecondFundamental};
use crate::target::Curvature;
use crate::tensor::MetricTensor;

pub(crate) const MINIMAL_TOL: f64 = 1e-7;
pub(crate) const PARALLEL_TOL: f64 = 1e-7;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub(crate) const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// What a check produced before it is turned into a report.
pub(crate) enum Outcome {
    Judged { lhs: f64, rhs: f64, secondary: f64, details: Vec<(&'static str, f64)> },
    Skip(String),
}

impl Outcome {
    pub(crate) fn judged(lhs: f64, rhs: f64, secondary: f64) -> Self {
        Outcome::Judged { lhs, rhs, secondary, details: Vec::new() }
    }
    pub(crate) fn skip(reason: impl Into<String>) -> Self {
        Outcome::Skip(reason.into())
    }
    pub(crate) fn detail(mut self, key: &'static str, value: f64) -> Self {
        if let Outcome::Judged { details, .. } = &mut self {
            details.push((key, value));
        }
        self
    }
}

/// Returns early from a check with a skip verdict.
macro_rules! skip_unless {
    ($cond:expr, $reason:expr) => {
        if !$cond {
            return Ok(Outcome::skip($reason));
        }
    };
}
pub(crate) use skip_unless;

pub(crate) fn max_mean_curvature_near(chart: &ImmersionChart, p: &[f64]) -> Result<f64> {
    let mut worst = crate::immersion::mean_curvature_norm(chart, p)?;
    for q in stencil_points(chart, p) {
        worst = worst.max(crate::immersion::mean_curvature_norm(chart, &q)?);
        if worst >= MINIMAL_TOL {
            break;
        }
    }
    Ok(worst)
}

pub(crate) fn is_minimal_near(chart: &ImmersionChart, p: &[f64]) -> Result<bool> {
    Ok(max_mean_curvature_near(chart, p)? < MINIMAL_TOL)
}

pub(crate) fn equal_angles_near(chart: &ImmersionChart, p: &[f64]) -> Result<bool> {
    Ok(neighborhood_spread(chart, p)? < EQUAL_TOL)
}

pub(crate) fn is_lagrangian_somewhere(data: &AngleData) -> bool {
    data.polar.rank < data.dim()
}

/// First- and second-order geometry with an adapted frame and its tables.
pub(crate) struct FramePack {
    pub pg: PointGeometry,
    pub sf: SecondFundamental,
    pub data: AngleData,
    pub frame: DiagonalizingFrame,
    pub tables: FrameTables,
}

pub(crate) fn frame_pack(chart: &ImmersionChart, p: &[f64], with_connection: bool) -> Result<FramePack> {
    let pg = first_fundamental(chart, p)?;
    let sf = second_fundamental(chart, &pg)?;
    let data = angle_data(chart, p)?;
    let frame = diagonalizing_frame(chart, p)?;
    let jets = if with_connection { Some(frame_derivatives(chart, p, &frame.recipe)?) } else { None };
    let tables = frame_tables(&pg, &sf, &frame, jets.as_deref());
    Ok(FramePack { pg, sf, data, frame, tables })
}

pub(crate) fn complex(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

pub(crate) fn complex_mat(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Complex-bilinear g(u, v) for target vectors.
pub(crate) fn bilinear(g: &DMatrix<f64>, u: &DVector<Complex64>, v: &DVector<Complex64>) -> Complex64 {
    let gv = complex_mat(g) * v;
    u.iter().zip(gv.iter()).map(|(a, b)| a * b).sum()
}

/// ⟨Sξ, ξ⟩ for the curvature action on 2-forms, form inner product.
pub(crate) fn s_term(r: &Curvature, xi: &DMatrix<f64>, g: &MetricTensor) -> f64 {
    let d = g.dim();
    let gi = g.inverse();
    // op[a][x] = matrix (w, b) of R(∂a, ∂x)∂b, component w
    let op = |a: usize, x: usize| -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |w, b| {
            let mut s = 0.0;
            for v in 0..d {
                s += gi[(w, v)] * r.get(a, x, b, v);
            }
            s
        })
    };
    // R̄(∂a, ∂x)ξ as a 2-form: −ξ(R u, v) − ξ(u, R v)
    let rbar = |a: usize, x: usize| -> DMatrix<f64> {
        let m = op(a, x);
        -(m.transpose() * xi) - xi * &m
    };
    let rb: Vec<Vec<DMatrix<f64>>> = (0..d).map(|a| (0..d).map(|x| rbar(a, x)).collect()).collect();
    let s_xi = DMatrix::from_fn(d, d, |x, y| {
        let mut s = 0.0;
        for a in 0..d {
            for b in 0..d {
                let w = gi[(a, b)];
                if w == 0.0 {
                    continue;
                }
                s += w * (-rb[a][x][(b, y)] + rb[a][y][(b, x)]);
            }
        }
        s
    });
    crate::angles::form_inner(&s_xi, xi, gi)
}

pub(crate) fn frob(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub(crate) fn cnorm(v: &DVector<Complex64>) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// g-norm of a vector.
pub(crate) fn gnorm(g: &MetricTensor, v: &DVector<f64>) -> f64 {
    g.inner(v, v).max(0.0).sqrt()
}
