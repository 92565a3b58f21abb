//! Discrete volume-gradient descent for doubly periodic surfaces in a flat
//! complex torus.
//!
//! The surface is sampled on a uniform grid over one period and triangulated
//! by splitting every grid cell along its anti-diagonal. Volume, its gradient
//! and the symplectic class are exact functionals of the piecewise-linear
//! surface, so ∫F*ω is conserved up to rounding and Wirtinger's inequality
//! holds triangle by triangle.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::angles::AngleData;
use crate::error::{KalError, Result};
use crate::immersion::ImmersionChart;

/// Angle threshold used by [`dichotomy_report`].
pub const CLASS_TOL: f64 = 1e-4;

/// Relative volume increase tolerated as rounding noise.
pub const VOLUME_SLACK: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct DiscreteImmersion {
    pub grid_shape: [usize; 2],
    /// Domain spacing 2π/N per axis.
    pub spacing: [f64; 2],
    /// Vertex positions in target coordinates; vertex (i, j) sits at `i + N₀ j`.
    pub positions: Vec<DVector<f64>>,
    /// Columns span the target lattice.
    pub lattice: DMatrix<f64>,
    /// Integer windings: translation per domain period = lattice · winding.
    pub winding: DMatrix<i64>,
    /// Translation per domain period, column per domain axis.
    pub translations: DMatrix<f64>,
    pub g_n: DMatrix<f64>,
    pub j_n: DMatrix<f64>,
}

/// One triangle: corner vertices and the offsets applied to each of them.
#[derive(Clone, Copy)]
struct Corner {
    vertex: usize,
    shift: [usize; 2],
}

/// The two triangles of cell (i, j), each listed as (apex, ∂₀-neighbour, ∂₁-neighbour).
fn cell_triangles(d: &DiscreteImmersion, i: usize, j: usize) -> [[Corner; 3]; 2] {
    let [n0, n1] = d.grid_shape;
    let at = |di: usize, dj: usize| {
        let ii = i + di;
        let jj = j + dj;
        Corner { vertex: (ii % n0) + n0 * (jj % n1), shift: [ii / n0, jj / n1] }
    };
    let a = at(0, 0);
    let b = at(1, 0);
    let c = at(0, 1);
    let e = at(1, 1);
    [[a, b, c], [e, c, b]]
}

fn edge_sign(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        -1.0
    }
}

impl DiscreteImmersion {
    pub fn vertex_count(&self) -> usize {
        self.grid_shape[0] * self.grid_shape[1]
    }

    pub fn dim(&self) -> usize {
        self.g_n.nrows()
    }

    fn lifted(&self, c: Corner) -> DVector<f64> {
        let mut x = self.positions[c.vertex].clone();
        for (axis, &s) in c.shift.iter().enumerate() {
            if s > 0 {
                x += self.translations.column(axis) * s as f64;
            }
        }
        x
    }

    /// Oriented edge vectors of triangle `k` of cell (i, j), matching the
    /// domain orientation (∂₀, ∂₁).
    fn triangle_edges(&self, tri: &[Corner; 3], k: usize) -> (DVector<f64>, DVector<f64>) {
        let s = edge_sign(k);
        let apex = self.lifted(tri[0]);
        ((&apex - self.lifted(tri[1])) * -s, (&apex - self.lifted(tri[2])) * -s)
    }

    fn inner(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (u.transpose() * &self.g_n * w)[0]
    }

    fn symplectic(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        ((&self.j_n * u).transpose() * &self.g_n * w)[0]
    }

    fn cells(&self) -> impl IndexedParallelIterator<Item = (usize, usize)> + '_ {
        let n0 = self.grid_shape[0];
        (0..self.vertex_count()).into_par_iter().map(move |v| (v % n0, v / n0))
    }

    pub fn volume(&self) -> f64 {
        let parts: Vec<f64> = self
            .cells()
            .map(|(i, j)| {
                let tris = cell_triangles(self, i, j);
                (0..2)
                    .map(|k| {
                        let (u, w) = self.triangle_edges(&tris[k], k);
                        0.5 * self.gram_det(&u, &w).max(0.0).sqrt()
                    })
                    .sum::<f64>()
            })
            .collect();
        parts.iter().sum()
    }

    fn gram_det(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let uu = self.inner(u, u);
        let ww = self.inner(w, w);
        let uw = self.inner(u, w);
        uu * ww - uw * uw
    }

    /// Discrete ∫F*ω: the symplectic area of the triangulated surface.
    pub fn class_integral(&self) -> f64 {
        let parts: Vec<f64> = self
            .cells()
            .map(|(i, j)| {
                let tris = cell_triangles(self, i, j);
                (0..2)
                    .map(|k| {
                        let (u, w) = self.triangle_edges(&tris[k], k);
                        0.5 * self.symplectic(&u, &w)
                    })
                    .sum::<f64>()
            })
            .collect();
        parts.iter().sum()
    }

    /// Area of the triangles adjacent to each vertex, divided by three.
    fn lumped_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertex_count()];
        let tris: Vec<([[Corner; 3]; 2], [f64; 2])> = self
            .cells()
            .map(|(i, j)| {
                let t = cell_triangles(self, i, j);
                let mut a = [0.0; 2];
                for (k, area) in a.iter_mut().enumerate() {
                    let (u, w) = self.triangle_edges(&t[k], k);
                    *area = 0.5 * self.gram_det(&u, &w).max(0.0).sqrt();
                }
                (t, a)
            })
            .collect();
        for (t, a) in tris {
            for k in 0..2 {
                for c in t[k] {
                    out[c.vertex] += a[k] / 3.0;
                }
            }
        }
        out
    }

    /// First-order jet at a vertex from central differences.
    fn vertex_jet(&self, v: usize) -> DMatrix<f64> {
        let [n0, n1] = self.grid_shape;
        let (i, j) = (v % n0, v / n0);
        let x = |ii: isize, jj: isize| -> DVector<f64> {
            let wi = ii.rem_euclid(n0 as isize) as usize;
            let wj = jj.rem_euclid(n1 as isize) as usize;
            let mut p = self.positions[wi + n0 * wj].clone();
            let si = ii.div_euclid(n0 as isize) as f64;
            let sj = jj.div_euclid(n1 as isize) as f64;
            p += self.translations.column(0) * si + self.translations.column(1) * sj;
            p
        };
        let (ii, jj) = (i as isize, j as isize);
        let d0 = (x(ii + 1, jj) - x(ii - 1, jj)) / (2.0 * self.spacing[0]);
        let d1 = (x(ii, jj + 1) - x(ii, jj - 1)) / (2.0 * self.spacing[1]);
        DMatrix::from_columns(&[d0, d1])
    }

    /// Kähler-angle data at every vertex.
    pub fn vertex_angles(&self) -> Result<Vec<AngleData>> {
        (0..self.vertex_count())
            .into_par_iter()
            .map(|v| {
                let [n0, _] = self.grid_shape;
                let p = [(v % n0) as f64 * self.spacing[0], (v / n0) as f64 * self.spacing[1]];
                AngleData::from_first_order(&p, self.positions[v].clone(), self.vertex_jet(v), self.g_n.clone(), self.j_n.clone())
                    .map_err(|_| KalError::DegenerateCell(v))
            })
            .collect()
    }

    /// Shortest edge of the triangulation in the target metric.
    pub fn min_edge(&self) -> f64 {
        let lens: Vec<f64> = self
            .cells()
            .map(|(i, j)| {
                let t = cell_triangles(self, i, j);
                let (u, w) = self.triangle_edges(&t[0], 0);
                let diag = &u - &w;
                self.inner(&u, &u).min(self.inner(&w, &w)).min(self.inner(&diag, &diag)).sqrt()
            })
            .collect();
        lens.into_iter().fold(f64::INFINITY, f64::min)
    }

    fn check_cells(&self) -> Result<()> {
        let bad = self.cells().find_first(|&(i, j)| {
            let t = cell_triangles(self, i, j);
            (0..2).any(|k| {
                let (u, w) = self.triangle_edges(&t[k], k);
                let scale = self.inner(&u, &u) * self.inner(&w, &w);
                self.gram_det(&u, &w) <= 1e-24 * scale.max(1e-300)
            })
        });
        match bad {
            Some((i, j)) => Err(KalError::DegenerateCell(i + self.grid_shape[0] * j)),
            None => Ok(()),
        }
    }
}

/// Samples a periodic catalog immersion on an N₀ × N₁ grid over one period.
pub fn discretize(chart: &ImmersionChart, grid_shape: [usize; 2]) -> Result<DiscreteImmersion> {
    if chart.domain_dim() != 2 {
        return Err(KalError::UnsupportedDimension(chart.domain_dim()));
    }
    if grid_shape.iter().any(|&n| n < 3) {
        return Err(KalError::InvalidParameter(format!("grid {}x{} is too coarse", grid_shape[0], grid_shape[1])));
    }
    let per = chart.periodicity().ok_or(KalError::Aperiodic)?;
    let target = chart.target();
    if !target.is_flat() {
        return Err(KalError::InvalidParameter("flow needs a flat target".into()));
    }
    let lattice = target.lattice.clone().ok_or(KalError::Aperiodic)?;
    let inv = lattice.clone().try_inverse().ok_or(KalError::DegenerateLattice { rank: 0, expected: lattice.nrows() })?;
    let real = &inv * &per.translations;
    let winding = real.map(|x| x.round() as i64);
    let off = real.iter().zip(winding.iter()).map(|(r, w)| (r - *w as f64).abs()).fold(0.0, f64::max);
    if off > 1e-9 {
        return Err(KalError::Aperiodic);
    }
    let spacing = [per.periods[0] / grid_shape[0] as f64, per.periods[1] / grid_shape[1] as f64];
    let positions = (0..grid_shape[0] * grid_shape[1])
        .map(|v| chart.eval(&[(v % grid_shape[0]) as f64 * spacing[0], (v / grid_shape[0]) as f64 * spacing[1]]))
        .collect();
    let zero = vec![0.0; target.real_dim()];
    let d = DiscreteImmersion {
        grid_shape,
        spacing,
        positions,
        lattice,
        winding,
        translations: per.translations,
        g_n: target.metric(&zero),
        j_n: target.complex_structure(&zero),
    };
    d.check_cells()?;
    Ok(d)
}

/// Volume of the triangulated surface and its exact gradient in the vertex positions.
pub fn volume_and_gradient(d: &DiscreteImmersion) -> Result<(f64, Vec<DVector<f64>>)> {
    type Piece = (f64, [(usize, DVector<f64>); 6]);
    let pieces: Vec<Piece> = d
        .cells()
        .map(|(i, j)| -> Result<Piece> {
            let t = cell_triangles(d, i, j);
            let mut vol = 0.0;
            let mut grads: Vec<(usize, DVector<f64>)> = Vec::with_capacity(6);
            for k in 0..2 {
                let (u, w) = d.triangle_edges(&t[k], k);
                let det = d.gram_det(&u, &w);
                if det <= 0.0 {
                    return Err(KalError::DegenerateCell(i + d.grid_shape[0] * j));
                }
                let root = det.sqrt();
                vol += 0.5 * root;
                let uu = d.inner(&u, &u);
                let ww = d.inner(&w, &w);
                let uw = d.inner(&u, &w);
                let du = &d.g_n * (&u * ww - &w * uw) * (0.5 / root);
                let dw = &d.g_n * (&w * uu - &u * uw) * (0.5 / root);
                // u = s(X_b − X_a), w = s(X_c − X_a) with s = ±1 set by edge_sign.
                let s = edge_sign(k);
                grads.push((t[k][1].vertex, &du * s));
                grads.push((t[k][2].vertex, &dw * s));
                grads.push((t[k][0].vertex, -(du + dw) * s));
            }
            let arr: [(usize, DVector<f64>); 6] = grads.try_into().expect("six corner terms");
            Ok((vol, arr))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![DVector::zeros(d.dim()); d.vertex_count()];
    let mut volume = 0.0;
    for (v, parts) in pieces {
        volume += v;
        for (vertex, g) in parts {
            grad[vertex] += g;
        }
    }
    Ok((volume, grad))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowParams {
    /// Explicit step τ; `None` picks 0.1 · (shortest edge)².
    pub step_size: Option<f64>,
    pub max_steps: usize,
    pub stop_grad_norm: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { step_size: None, max_steps: 2000, stop_grad_norm: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowRecord {
    pub step: usize,
    pub volume: f64,
    /// max over vertices of |∇vol| per unit domain area.
    pub grad_norm: f64,
    pub max_mean_curvature: f64,
    pub min_cos: f64,
    pub max_cos: f64,
    pub mean_cos: f64,
    pub kappa_integral: f64,
    pub class_integral: f64,
    pub step_size: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace {
    pub grid_shape: [usize; 2],
    pub params: FlowParams,
    pub records: Vec<FlowRecord>,
    /// Number of step halvings caused by volume increases.
    pub backtracks: usize,
    pub converged: bool,
}

impl FlowTrace {
    pub fn last(&self) -> &FlowRecord {
        self.records.last().expect("trace has at least the initial record")
    }

    pub fn first(&self) -> &FlowRecord {
        &self.records[0]
    }

    /// Largest |∫F*ω − initial value| along the run.
    pub fn class_drift(&self) -> f64 {
        let c0 = self.first().class_integral;
        self.records.iter().map(|r| (r.class_integral - c0).abs()).fold(0.0, f64::max)
    }

    /// True when the recorded volumes never increase beyond rounding noise.
    pub fn volume_monotone(&self) -> bool {
        self.records.windows(2).all(|w| w[1].volume <= w[0].volume * (1.0 + VOLUME_SLACK))
    }
}

fn record(d: &DiscreteImmersion, step: usize, tau: f64) -> Result<(FlowRecord, Vec<DVector<f64>>)> {
    let (volume, grad) = volume_and_gradient(d)?;
    let cell = d.spacing[0] * d.spacing[1];
    let areas = d.lumped_areas();
    let n = 1.0;
    let grad_norm = grad.iter().map(|g| g.norm()).fold(0.0, f64::max) / cell;
    let max_h = grad.iter().zip(&areas).map(|(g, a)| g.norm() / (2.0 * n * a)).fold(0.0, f64::max);
    let angles = d.vertex_angles()?;
    let cos: Vec<f64> = angles.iter().map(|a| a.mean_cos()).collect();
    let min_cos = cos.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_cos = cos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_cos = cos.iter().sum::<f64>() / cos.len() as f64;
    let kappa_integral = angles.iter().zip(&areas).map(|(a, w)| a.kappa * w).sum();
    let rec = FlowRecord {
        step,
        volume,
        grad_norm,
        max_mean_curvature: max_h,
        min_cos,
        max_cos,
        mean_cos,
        kappa_integral,
        class_integral: d.class_integral(),
        step_size: tau,
    };
    Ok((rec, grad))
}

/// Explicit gradient descent x ← x − τ ∇vol / (domain cell area).
///
/// A step that raises the volume is retried with τ halved; a second
/// consecutive increase aborts the run.
pub fn run_flow(mut d: DiscreteImmersion, params: FlowParams) -> Result<(FlowTrace, DiscreteImmersion)> {
    let mut tau = params.step_size.unwrap_or_else(|| 0.1 * d.min_edge().powi(2));
    if !(tau.is_finite() && tau > 0.0) {
        return Err(KalError::InvalidParameter(format!("step size {tau}")));
    }
    let cell = d.spacing[0] * d.spacing[1];
    let (first, mut grad) = record(&d, 0, tau)?;
    let mut records = vec![first];
    let mut backtracks = 0;
    let mut converged = false;
    for step in 1..=params.max_steps {
        let current = records.last().expect("initial record");
        if current.grad_norm < params.stop_grad_norm {
            converged = true;
            break;
        }
        let mut tries = 0;
        let (next, rec, g) = loop {
            let mut trial = d.clone();
            for (x, g) in trial.positions.iter_mut().zip(&grad) {
                *x -= g * (tau / cell);
            }
            let (rec, g) = record(&trial, step, tau)?;
            if rec.volume <= current.volume * (1.0 + VOLUME_SLACK) {
                break (trial, rec, g);
            }
            tries += 1;
            backtracks += 1;
            if tries >= 2 {
                return Err(KalError::FlowDiverged(step));
            }
            tau *= 0.5;
        };
        d = next;
        grad = g;
        records.push(rec);
    }
    if !converged {
        converged = records.last().map_or(false, |r| r.grad_norm < params.stop_grad_norm);
    }
    Ok((FlowTrace { grid_shape: d.grid_shape, params, records, backtracks, converged }, d))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum LimitClass {
    Lagrangian,
    Complex,
    ConstantAngle { theta: f64 },
    Undetermined,
}

#[derive(Clone, Debug, Serialize)]
pub struct DichotomyReport {
    pub limit_class: LimitClass,
    pub label: &'static str,
    pub final_min_cos: f64,
    pub final_max_cos: f64,
    pub final_spread: f64,
    pub final_volume: f64,
    pub class_integral: f64,
    pub class_drift: f64,
    pub wirtinger_gap: f64,
    pub steps: usize,
}

/// Classifies the end state of a flow run from its angle statistics.
pub fn dichotomy_report(trace: &FlowTrace) -> DichotomyReport {
    let last = trace.last();
    let spread = last.max_cos - last.min_cos;
    let limit_class = if last.max_cos < CLASS_TOL {
        LimitClass::Lagrangian
    } else if last.min_cos > 1.0 - CLASS_TOL {
        LimitClass::Complex
    } else if spread < CLASS_TOL {
        LimitClass::ConstantAngle { theta: last.mean_cos.clamp(-1.0, 1.0).acos() }
    } else {
        LimitClass::Undetermined
    };
    DichotomyReport {
        limit_class,
        label: "empirical probe",
        final_min_cos: last.min_cos,
        final_max_cos: last.max_cos,
        final_spread: spread,
        final_volume: last.volume,
        class_integral: last.class_integral,
        class_drift: trace.class_drift(),
        wirtinger_gap: last.volume - last.class_integral.abs(),
        steps: last.step,
    }
}
