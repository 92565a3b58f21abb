//! Kähler targets with analytic jets: flat ℂ^m and complex tori, Fubini–Study
//! on an affine chart, and flat hyper-Kähler ℝ⁴/ℝ⁸.
//!
//! Curvature follows R(X,Y)Z = −∇_X∇_Y Z + ∇_Y∇_X Z + ∇_{[X,Y]}Z and
//! R(X,Y,Z,W) = g(R(X,Y)Z, W), so R(X,Y,X,Y) is the sectional curvature of
//! span{X, Y} times |X∧Y|². Ricci is Ric(U,V) = Σ_s R(U, e_s, V, e_s).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{KalError, Result};
use crate::fd::{self, FdSettings};
use crate::identities::{IdentityReport, OracleMeta, Verdict};
use crate::scalar::{Dual3, Scalar};

/// Affine-chart guard radius for Fubini–Study.
pub const CHART_GUARD: f64 = 0.9;

/// Christoffel symbols Γ^a_bc stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel { dim, data: vec![0.0; dim * dim * dim] }
    }
    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }
    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.dim + b) * self.dim + c] = v;
    }
    /// Vector Γ(u, v)^a = Γ^a_bc u^b v^c.
    pub fn apply(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |a, _| {
            let mut s = 0.0;
            for b in 0..d {
                if u[b] == 0.0 {
                    continue;
                }
                for c in 0..d {
                    s += self.get(a, b, c) * u[b] * v[c];
                }
            }
            s
        })
    }
    pub fn apply_c(&self, u: &DVector<Complex64>, v: &DVector<Complex64>) -> DVector<Complex64> {
        let d = self.dim;
        DVector::from_fn(d, |a, _| {
            let mut s = Complex64::new(0.0, 0.0);
            for b in 0..d {
                for c in 0..d {
                    s += u[b] * v[c] * self.get(a, b, c);
                }
            }
            s
        })
    }
    /// Matrix (Γ_c)^a_b = Γ^a_cb, the connection form along ∂_c.
    pub fn along(&self, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |a, b| self.get(a, c, b))
    }
    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Fully covariant 4-tensor R(∂a, ∂b, ∂c, ∂d).
#[derive(Clone, Debug, PartialEq)]
pub struct Curvature {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Curvature {
    pub fn zeros(dim: usize) -> Self {
        Curvature { dim, data: vec![0.0; dim.pow(4)] }
    }
    #[inline]
    fn idx(&self, a: usize, b: usize, c: usize, d: usize) -> usize {
        ((a * self.dim + b) * self.dim + c) * self.dim + d
    }
    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.data[self.idx(a, b, c, d)]
    }
    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, d: usize, v: f64) {
        let i = self.idx(a, b, c, d);
        self.data[i] = v;
    }
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for a in 0..n {
            if x[a] == 0.0 {
                continue;
            }
            for b in 0..n {
                if y[b] == 0.0 {
                    continue;
                }
                for c in 0..n {
                    if z[c] == 0.0 {
                        continue;
                    }
                    for d in 0..n {
                        s += self.get(a, b, c, d) * x[a] * y[b] * z[c] * w[d];
                    }
                }
            }
        }
        s
    }
    pub fn eval_c(
        &self,
        x: &DVector<Complex64>,
        y: &DVector<Complex64>,
        z: &DVector<Complex64>,
        w: &DVector<Complex64>,
    ) -> Complex64 {
        let n = self.dim;
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let xy = x[a] * y[b];
                if xy == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    let xyz = xy * z[c];
                    for d in 0..n {
                        s += xyz * w[d] * self.get(a, b, c, d);
                    }
                }
            }
        }
        s
    }
    /// Ric(U,V) = g^{pq} R(U, ∂p, V, ∂q).
    pub fn ricci(&self, g_inv: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |u, v| {
            let mut s = 0.0;
            for p in 0..n {
                for q in 0..n {
                    s += g_inv[(p, q)] * self.get(u, p, v, q);
                }
            }
            s
        })
    }
    /// Pulls back along the columns of `m`: R'(a,b,c,d) = R(m_a, m_b, m_c, m_d).
    pub fn pullback(&self, m: &DMatrix<f64>) -> Curvature {
        let k = m.ncols();
        let n = self.dim;
        // contract one slot at a time
        let mut cur = self.data.clone();
        let mut dims = [n, n, n, n];
        for slot in 0..4 {
            let mut next_dims = dims;
            next_dims[slot] = k;
            let total: usize = next_dims.iter().product();
            let mut next = vec![0.0; total];
            let stride = |ds: &[usize; 4], i: [usize; 4]| ((i[0] * ds[1] + i[1]) * ds[2] + i[2]) * ds[3] + i[3];
            for i0 in 0..next_dims[0] {
                for i1 in 0..next_dims[1] {
                    for i2 in 0..next_dims[2] {
                        for i3 in 0..next_dims[3] {
                            let out_idx = [i0, i1, i2, i3];
                            let mut s = 0.0;
                            for r in 0..n {
                                let coef = m[(r, out_idx[slot])];
                                if coef == 0.0 {
                                    continue;
                                }
                                let mut src = out_idx;
                                src[slot] = r;
                                s += coef * cur[stride(&dims, src)];
                            }
                            next[stride(&next_dims, out_idx)] = s;
                        }
                    }
                }
            }
            cur = next;
            dims = next_dims;
        }
        Curvature { dim: k, data: cur }
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
    pub fn max_abs_diff(&self, other: &Curvature) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
    /// Largest violation of antisymmetry, pair symmetry and first Bianchi.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let r = self.get(a, b, c, d);
                        worst = worst
                            .max((r + self.get(b, a, c, d)).abs())
                            .max((r + self.get(a, b, d, c)).abs())
                            .max((r - self.get(c, d, a, b)).abs())
                            .max((r + self.get(b, c, a, d) + self.get(c, a, b, d)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Metric, first and second derivatives at a point.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[c]` = ∂_c g.
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[c][d]` = ∂_c ∂_d g (empty when order < 2).
    pub ddg: Vec<Vec<DMatrix<f64>>>,
}

/// Christoffel symbols from a metric and its first derivatives.
pub fn christoffel_from(g_inv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let n = g_inv.nrows();
    let mut out = Christoffel::zeros(n);
    for a in 0..n {
        for b in 0..n {
            for c in b..n {
                let mut s = 0.0;
                for e in 0..n {
                    s += g_inv[(a, e)] * (dg[b][(e, c)] + dg[c][(b, e)] - dg[e][(b, c)]);
                }
                out.set(a, b, c, 0.5 * s);
                out.set(a, c, b, 0.5 * s);
            }
        }
    }
    out
}

/// Curvature R(X,Y)Z = −∇_X∇_Y Z + ∇_Y∇_X Z + ∇_{[X,Y]}Z from Γ at the point and its partials `dgamma[f]` = ∂_f Γ.
pub fn curvature_from_christoffel(g: &DMatrix<f64>, gamma: &Christoffel, dgamma: &[Christoffel]) -> Curvature {
    let n = g.nrows();
    // standard R^a_{bcd} = ∂_c Γ^a_db − ∂_d Γ^a_cb + Γ^a_ce Γ^e_db − Γ^a_de Γ^e_cb
    let mut rstd = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut s = dgamma[c].get(a, d, b) - dgamma[d].get(a, c, b);
                    for e in 0..n {
                        s += gamma.get(a, c, e) * gamma.get(e, d, b) - gamma.get(a, d, e) * gamma.get(e, c, b);
                    }
                    rstd[((a * n + b) * n + c) * n + d] = s;
                }
            }
        }
    }
    let mut out = Curvature::zeros(n);
    for c in 0..n {
        for d in 0..n {
            for b in 0..n {
                for w in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        s += g[(w, a)] * rstd[((a * n + b) * n + c) * n + d];
                    }
                    out.set(c, d, b, w, -s);
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Flat,
    FubiniStudy { k: f64 },
}

/// Left multiplication by i, j, k on ℍ^{d/4}, coordinates (1, i, j, k) per slot.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperKahlerTriple {
    pub i: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl HyperKahlerTriple {
    pub fn new(real_dim: usize) -> Result<Self> {
        if real_dim != 4 && real_dim != 8 {
            return Err(KalError::UnsupportedDimension(real_dim));
        }
        // i·(a + b i + c j + d k) = −b + a i − d j + c k, etc.
        let li = [[0., -1., 0., 0.], [1., 0., 0., 0.], [0., 0., 0., -1.], [0., 0., 1., 0.]];
        let lj = [[0., 0., -1., 0.], [0., 0., 0., 1.], [1., 0., 0., 0.], [0., -1., 0., 0.]];
        let lk = [[0., 0., 0., -1.], [0., 0., -1., 0.], [0., 1., 0., 0.], [1., 0., 0., 0.]];
        let build = |blk: &[[f64; 4]; 4]| {
            let mut m = DMatrix::zeros(real_dim, real_dim);
            for s in 0..real_dim / 4 {
                for r in 0..4 {
                    for c in 0..4 {
                        m[(4 * s + r, 4 * s + c)] = blk[r][c];
                    }
                }
            }
            m
        };
        Ok(HyperKahlerTriple { i: build(&li), j: build(&lj), k: build(&lk) })
    }

    pub fn dim(&self) -> usize {
        self.i.nrows()
    }
}

/// Point (cos ν, sin ν cos φ, sin ν sin φ) of S².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint {
    pub nu: f64,
    pub phi: f64,
}

impl SpherePoint {
    pub fn new(nu: f64, phi: f64) -> Self {
        SpherePoint { nu, phi }
    }
    pub fn unit_vector(&self) -> [f64; 3] {
        let (sn, cn) = self.nu.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [cn, sn * cp, sn * sp]
    }
    pub fn dot(&self, other: &SpherePoint) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }
}

/// J_{νφ} = cos ν I + sin ν cos φ J + sin ν sin φ K.
pub fn j_from_sphere(triple: &HyperKahlerTriple, s: &SpherePoint) -> DMatrix<f64> {
    let [a, b, c] = s.unit_vector();
    &triple.i * a + &triple.j * b + &triple.k * c
}

/// A Kähler target manifold in a single real chart of dimension 2m.
#[derive(Clone, Debug)]
pub struct TargetGeometry {
    pub id: String,
    pub complex_dim: usize,
    kind: Kind,
    base_j: DMatrix<f64>,
    /// Columns span the lattice of a torus quotient.
    pub lattice: Option<DMatrix<f64>>,
    pub hyperkahler: Option<HyperKahlerTriple>,
}

fn standard_j(m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * m, 2 * m);
    for a in 0..m {
        j[(2 * a + 1, 2 * a)] = 1.0;
        j[(2 * a, 2 * a + 1)] = -1.0;
    }
    j
}

fn lattice_rank(l: &DMatrix<f64>) -> usize {
    let sv = l.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    sv.iter().filter(|v| **v > 1e-10 * top.max(1.0)).count()
}

pub fn make_flat_kahler(m: usize, lattice: Option<DMatrix<f64>>) -> Result<TargetGeometry> {
    if m == 0 {
        return Err(KalError::UnsupportedDimension(0));
    }
    if let Some(l) = &lattice {
        let r = if l.nrows() == 2 * m { lattice_rank(l) } else { 0 };
        if r < 2 * m || l.ncols() != 2 * m {
            return Err(KalError::DegenerateLattice { rank: r, expected: 2 * m });
        }
    }
    let id = if lattice.is_some() { format!("torus-c{m}") } else { format!("flat-c{m}") };
    Ok(TargetGeometry { id, complex_dim: m, kind: Kind::Flat, base_j: standard_j(m), lattice, hyperkahler: None })
}

pub fn make_fubini_study(m: usize, k: f64) -> Result<TargetGeometry> {
    if m == 0 {
        return Err(KalError::UnsupportedDimension(0));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(KalError::InvalidParameter(format!("holomorphic sectional curvature must be > 0, got {k}")));
    }
    Ok(TargetGeometry {
        id: format!("cp{m}-K{k}"),
        complex_dim: m,
        kind: Kind::FubiniStudy { k },
        base_j: standard_j(m),
        lattice: None,
        hyperkahler: None,
    })
}

pub fn make_hyperkahler_flat(real_dim: usize) -> Result<(TargetGeometry, HyperKahlerTriple)> {
    let triple = HyperKahlerTriple::new(real_dim)?;
    let t = TargetGeometry {
        id: format!("hk-r{real_dim}"),
        complex_dim: real_dim / 2,
        kind: Kind::Flat,
        base_j: triple.i.clone(),
        lattice: None,
        hyperkahler: Some(triple.clone()),
    };
    Ok((t, triple))
}

/// Resolves a catalog id such as `flat-c2`, `torus-c2`, `cp2-K4`, `hk-r8`.
pub fn target_from_id(id: &str) -> Result<TargetGeometry> {
    let bad = || KalError::UnknownId(id.to_string());
    if let Some(rest) = id.strip_prefix("flat-c") {
        return make_flat_kahler(rest.parse().map_err(|_| bad())?, None);
    }
    if let Some(rest) = id.strip_prefix("torus-c") {
        let m: usize = rest.parse().map_err(|_| bad())?;
        let lattice = DMatrix::identity(2 * m, 2 * m) * (2.0 * std::f64::consts::PI);
        return make_flat_kahler(m, Some(lattice));
    }
    if let Some(rest) = id.strip_prefix("hk-r") {
        return Ok(make_hyperkahler_flat(rest.parse().map_err(|_| bad())?)?.0);
    }
    if let Some(rest) = id.strip_prefix("cp") {
        let (m, k) = rest.split_once("-K").ok_or_else(bad)?;
        return make_fubini_study(m.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?);
    }
    Err(bad())
}

pub const TARGET_IDS: &[&str] = &["flat-c{m}", "torus-c{m}", "cp{m}-K{value}", "hk-r4", "hk-r8"];

impl TargetGeometry {
    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, Kind::Flat)
    }

    /// Holomorphic sectional curvature when it is constant.
    pub fn holomorphic_curvature(&self) -> Option<f64> {
        match self.kind {
            Kind::Flat => Some(0.0),
            Kind::FubiniStudy { k } => Some(k),
        }
    }

    pub fn einstein_constant(&self) -> Option<f64> {
        match self.kind {
            Kind::Flat => Some(0.0),
            Kind::FubiniStudy { k } => Some((self.complex_dim as f64 + 1.0) * k / 2.0),
        }
    }

    /// The same manifold viewed with another constant parallel complex structure.
    pub fn with_complex_structure(&self, j: DMatrix<f64>, label: &str) -> Self {
        let mut t = self.clone();
        t.base_j = j;
        t.id = format!("{}[{label}]", self.id);
        t
    }

    /// A copy whose complex structure has one entry shifted by `delta`.
    pub fn with_perturbed_j(&self, row: usize, col: usize, delta: f64) -> Self {
        let mut t = self.clone();
        t.base_j[(row, col)] += delta;
        t.id = format!("{}+perturbed", self.id);
        t
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.real_dim() {
            return Err(KalError::UnsupportedDimension(x.len()));
        }
        if let Kind::FubiniStudy { .. } = self.kind {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r >= CHART_GUARD || !r.is_finite() {
                return Err(KalError::OutsideChart { radius: r, guard: CHART_GUARD });
            }
        }
        Ok(())
    }

    /// Metric components, row-major, generic in the scalar type.
    pub fn metric_generic<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let n = self.real_dim();
        let mut g = vec![T::cst(0.0); n * n];
        match self.kind {
            Kind::Flat => {
                for a in 0..n {
                    g[a * n + a] = T::cst(1.0);
                }
            }
            Kind::FubiniStudy { k } => {
                let c = 4.0 / k;
                let m = self.complex_dim;
                let mut s = T::cst(1.0);
                for v in x {
                    s = s + *v * *v;
                }
                let s2 = s * s;
                for j in 0..m {
                    let (aj, bj) = (x[2 * j], x[2 * j + 1]);
                    for kk in 0..m {
                        let (ak, bk) = (x[2 * kk], x[2 * kk + 1]);
                        let delta = if j == kk { T::cst(1.0) / s } else { T::cst(0.0) };
                        let p = (delta - (aj * ak + bj * bk) / s2).scale(c);
                        let q = ((aj * bk - bj * ak) / s2).scale(-c);
                        g[(2 * j) * n + 2 * kk] = p;
                        g[(2 * j) * n + 2 * kk + 1] = q;
                        g[(2 * j + 1) * n + 2 * kk] = -q;
                        g[(2 * j + 1) * n + 2 * kk + 1] = p;
                    }
                }
            }
        }
        g
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.real_dim();
        DMatrix::from_row_slice(n, n, &self.metric_generic(x))
    }

    /// Metric jets to `order` ≤ 2 from hyper-dual evaluation.
    pub fn metric_jet(&self, x: &[f64], order: usize) -> MetricJet {
        let n = self.real_dim();
        let g = self.metric(x);
        if self.is_flat() {
            return MetricJet {
                g,
                dg: vec![DMatrix::zeros(n, n); n],
                ddg: if order >= 2 { vec![vec![DMatrix::zeros(n, n); n]; n] } else { vec![] },
            };
        }
        let seeded = |units: &[(usize, usize)]| -> Vec<Dual3> {
            x.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let u: Vec<usize> = units.iter().filter(|(c, _)| *c == i).map(|(_, u)| *u).collect();
                    Dual3::variable(v, &u)
                })
                .collect()
        };
        let mut dg = Vec::with_capacity(n);
        for c in 0..n {
            let vals = self.metric_generic(&seeded(&[(c, 1)]));
            dg.push(DMatrix::from_row_iterator(n, n, vals.iter().map(|v| v.e1())));
        }
        let mut ddg = Vec::new();
        if order >= 2 {
            ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
            for c in 0..n {
                for d in c..n {
                    let vals = self.metric_generic(&seeded(&[(c, 1), (d, 2)]));
                    let m = DMatrix::from_row_iterator(n, n, vals.iter().map(|v| v.e12()));
                    ddg[d][c] = m.clone();
                    ddg[c][d] = m;
                }
            }
        }
        MetricJet { g, dg, ddg }
    }

    pub fn complex_structure(&self, _x: &[f64]) -> DMatrix<f64> {
        self.base_j.clone()
    }

    /// J and its coordinate derivatives; J is constant in every catalog chart.
    pub fn complex_structure_jet(&self, x: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = self.real_dim();
        (self.complex_structure(x), vec![DMatrix::zeros(n, n); n])
    }

    /// ω(X, Y) = g(JX, Y) as a matrix: Jᵀg.
    pub fn kahler_form(&self, x: &[f64]) -> DMatrix<f64> {
        self.complex_structure(x).transpose() * self.metric(x)
    }

    pub fn christoffel(&self, x: &[f64]) -> Christoffel {
        let n = self.real_dim();
        if self.is_flat() {
            return Christoffel::zeros(n);
        }
        let jet = self.metric_jet(x, 1);
        let g_inv = jet.g.clone().try_inverse().expect("metric invertible inside the chart");
        christoffel_from(&g_inv, &jet.dg)
    }

    /// Christoffels from central differences of the metric field (audit route).
    pub fn christoffel_fd(&self, x: &[f64], fd: &FdSettings) -> Result<Christoffel> {
        let n = self.real_dim();
        let f = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.metric(y).as_slice().to_vec()) };
        let grad = fd::gradient(&f, x, fd)?;
        let dg: Vec<DMatrix<f64>> = grad.into_iter().map(|v| DMatrix::from_vec(n, n, v)).collect();
        let g_inv = self.metric(x).try_inverse().ok_or(KalError::NotPositiveDefinite)?;
        Ok(christoffel_from(&g_inv, &dg))
    }

    /// Curvature tensor: zero for flat targets, the constant-holomorphic-curvature
    /// closed form for Fubini–Study.
    pub fn curvature(&self, x: &[f64]) -> Curvature {
        let n = self.real_dim();
        match self.kind {
            Kind::Flat => Curvature::zeros(n),
            Kind::FubiniStudy { k } => {
                let g = self.metric(x);
                let gj = &g * self.complex_structure(x);
                let mut r = Curvature::zeros(n);
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            for d in 0..n {
                                let v = g[(a, c)] * g[(b, d)] - g[(a, d)] * g[(b, c)]
                                    + gj[(a, c)] * gj[(b, d)]
                                    - gj[(a, d)] * gj[(b, c)]
                                    + 2.0 * gj[(a, b)] * gj[(c, d)];
                                r.set(a, b, c, d, 0.25 * k * v);
                            }
                        }
                    }
                }
                r
            }
        }
    }

    /// Curvature assembled from exact second metric jets (independent of the closed form).
    pub fn curvature_from_jets(&self, x: &[f64]) -> Curvature {
        let n = self.real_dim();
        let jet = self.metric_jet(x, 2);
        let g_inv = jet.g.clone().try_inverse().expect("metric invertible inside the chart");
        let gamma = christoffel_from(&g_inv, &jet.dg);
        let mut dgamma = Vec::with_capacity(n);
        for f in 0..n {
            // ∂_f Γ^a_bc = ½ ∂_f g^{ae} S_ebc + ½ g^{ae} ∂_f S_ebc
            let dginv = -(&g_inv * &jet.dg[f] * &g_inv);
            let mut dg_f = Christoffel::zeros(n);
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let mut s = 0.0;
                        for e in 0..n {
                            let se = jet.dg[b][(e, c)] + jet.dg[c][(b, e)] - jet.dg[e][(b, c)];
                            let dse = jet.ddg[f][b][(e, c)] + jet.ddg[f][c][(b, e)] - jet.ddg[f][e][(b, c)];
                            s += dginv[(a, e)] * se + g_inv[(a, e)] * dse;
                        }
                        dg_f.set(a, b, c, 0.5 * s);
                    }
                }
            }
            dgamma.push(dg_f);
        }
        curvature_from_christoffel(&jet.g, &gamma, &dgamma)
    }

    pub fn ricci(&self, x: &[f64]) -> DMatrix<f64> {
        let g_inv = self.metric(x).try_inverse().expect("metric invertible inside the chart");
        self.curvature(x).ricci(&g_inv)
    }

    /// (∇_c J)^a_b for all c, from a given set of Christoffels.
    pub fn nabla_j(&self, x: &[f64], gamma: &Christoffel) -> Vec<DMatrix<f64>> {
        let (j, dj) = self.complex_structure_jet(x);
        (0..self.real_dim())
            .map(|c| {
                let gc = gamma.along(c);
                &dj[c] + &gc * &j - &j * &gc
            })
            .collect()
    }
}

/// Numerically asserts the target invariants at the given points.
pub fn target_audit(t: &TargetGeometry, points: &[Vec<f64>], tol: f64) -> Result<IdentityReport> {
    let n = t.real_dim();
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut bump = |k: &str, v: f64| {
        let e = worst.entry(k.to_string()).or_insert(0.0);
        *e = e.max(v);
    };
    let fd = FdSettings::default();
    for x in points {
        t.check_point(x)?;
        let g = t.metric(x);
        let j = t.complex_structure(x);
        bump("j_squared", (&j * &j + DMatrix::identity(n, n)).amax());
        bump("metric_compat", (j.transpose() * &g * &j - &g).amax());
        let omega = t.kahler_form(x);
        bump("omega_antisym", (&omega + omega.transpose()).amax());
        let gamma = t.christoffel(x);
        let nj = t.nabla_j(x, &gamma).iter().fold(0.0f64, |m, v| m.max(v.amax()));
        let gamma_fd = t.christoffel_fd(x, &fd)?;
        let nj_fd = t.nabla_j(x, &gamma_fd).iter().fold(0.0f64, |m, v| m.max(v.amax()));
        bump("nabla_j", nj.max(nj_fd));
        bump("christoffel_fd", gamma.max_abs_diff(&gamma_fd));
        let r = t.curvature(x);
        bump("bianchi", r.symmetry_residual());
        if !t.is_flat() {
            bump("curvature_jets", r.max_abs_diff(&t.curvature_from_jets(x)));
        }
        if let Some(rc) = t.einstein_constant() {
            let g_inv = g.clone().try_inverse().ok_or(KalError::NotPositiveDefinite)?;
            bump("einstein", (r.ricci(&g_inv) - &g * rc).amax());
        }
    }
    let max = worst.values().fold(0.0f64, |m, v| m.max(*v));
    let verdict = if max < tol { Verdict::Pass } else { Verdict::Fail };
    let mut report = IdentityReport::new("target-audit", vec![], max, 0.0, tol, verdict, OracleMeta::fd(&fd, "analytic"));
    report.details = worst;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_relations_are_exact() {
        let h = HyperKahlerTriple::new(8).unwrap();
        let id = DMatrix::<f64>::identity(8, 8);
        assert_eq!(&h.i * &h.i, -&id);
        assert_eq!(&h.j * &h.j, -&id);
        assert_eq!(&h.k * &h.k, -&id);
        assert_eq!(&h.i * &h.j + &h.j * &h.i, DMatrix::zeros(8, 8));
        assert_eq!(&h.i * &h.j, h.k);
    }

    #[test]
    fn sphere_poles_recover_structures() {
        let h = HyperKahlerTriple::new(4).unwrap();
        assert_eq!(j_from_sphere(&h, &SpherePoint::new(0.0, 0.3)), h.i);
        let jp = j_from_sphere(&h, &SpherePoint::new(std::f64::consts::FRAC_PI_2, 0.0));
        assert!((jp - &h.j).amax() < 1e-15);
    }

    #[test]
    fn flat_has_zero_curvature_and_is_einstein() {
        let t = make_flat_kahler(2, None).unwrap();
        assert_eq!(t.curvature(&[0.1, 0.2, 0.3, 0.4]).max_abs(), 0.0);
        assert_eq!(t.einstein_constant(), Some(0.0));
    }

    #[test]
    fn fs_einstein_constant_at_origin() {
        let t = make_fubini_study(2, 4.0).unwrap();
        let ric = t.ricci(&[0.0; 4]);
        assert!((ric - DMatrix::identity(4, 4) * 6.0).amax() < 1e-10);
    }

    #[test]
    fn fs_closed_form_matches_metric_jets() {
        let t = make_fubini_study(2, 3.0).unwrap();
        let x = [0.2, -0.1, 0.15, 0.3];
        let d = t.curvature(&x).max_abs_diff(&t.curvature_from_jets(&x));
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn chart_guard_rejects_far_points() {
        let t = make_fubini_study(2, 4.0).unwrap();
        assert!(matches!(t.check_point(&[0.9, 0.0, 0.1, 0.0]), Err(KalError::OutsideChart { .. })));
    }

    #[test]
    fn ids_parse() {
        assert_eq!(target_from_id("cp2-K4").unwrap().einstein_constant(), Some(6.0));
        assert!(target_from_id("torus-c2").unwrap().lattice.is_some());
        assert_eq!(target_from_id("hk-r8").unwrap().real_dim(), 8);
        assert!(target_from_id("klein-bottle").is_err());
        assert!(make_fubini_study(2, -1.0).is_err());
    }
}
