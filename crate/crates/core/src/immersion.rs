//! Parametrized immersions F: ℝ^{2n} ⊃ U → N, their jets, induced metric,
//! second fundamental form and domain curvature.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{KalError, Result};
use crate::fd::{self, FdSettings};
use crate::scalar::{Cx, Dual3, Scalar};
use crate::target::{
    christoffel_from, curvature_from_christoffel, j_from_sphere, make_flat_kahler, make_fubini_study,
    make_hyperkahler_flat, Christoffel, Curvature, SpherePoint, TargetGeometry,
};
use crate::tensor::MetricTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetMode {
    Analytic,
    FiniteDifference,
}

impl JetMode {
    pub fn label(&self) -> &'static str {
        match self {
            JetMode::Analytic => "analytic",
            JetMode::FiniteDifference => "finite-difference",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential {
    Quad,
    Cubic,
    Sin,
}

/// Homotopy class of a doubly periodic map into the flat ℂ²-torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Winding {
    Lagrangian,
    Tilted,
    Holomorphic,
}

impl Winding {
    /// Columns: images of the unit domain directions (multiplied by 2π per period).
    pub fn matrix(&self) -> DMatrix<f64> {
        let cols: [[f64; 4]; 2] = match self {
            Winding::Lagrangian => [[1., 0., 0., 0.], [0., 0., 1., 0.]],
            Winding::Tilted => [[1., 0., 0., 0.], [0., 1., 1., 0.]],
            Winding::Holomorphic => [[1., 0., 1., 0.], [0., 1., 0., 1.]],
        };
        DMatrix::from_fn(4, 2, |r, c| cols[c][r])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// n orthonormal planes, each at Kähler angle α.
    Tilted { n: usize, cos: f64, sin: f64 },
    /// z ↦ (z, z̄^k).
    ConjCurve { k: u32 },
    /// (z, w) ↦ (z, z̄², w, w̄²).
    ProductConj,
    /// The Clifford torus [e^{iu₀}: e^{iu₁}: e^{iu₂}] in an affine chart centred on it.
    CliffordCp2,
    /// x ↦ x + i∇f(x).
    LagrangianGraph { n: usize, potential: Potential, eps: f64 },
    /// Linear J_{νφ}-complex 4-plane span{X, J_{νφ}X, Y, J_{νφ}Y} in ℍ².
    HkComplexPlane { sphere: SpherePoint, columns: DMatrix<f64> },
    /// J_{νφ}-holomorphic graph (z₁, z₂) ↦ (z₁, z₂, ε z₂², ε z₁²) in a
    /// J_{νφ}-unitary frame of ℍ²; columns hold the frame (e₁, J e₁, ..., e₄, J e₄).
    HkGraph { sphere: SpherePoint, eps: f64, columns: DMatrix<f64> },
    /// (x, y) ↦ W(x, y) + (0, ε sin y, 0, ε sin x).
    TorusGraph { eps: f64, winding: Winding },
}

/// Translation data of a periodic immersion: F(x + P_i e_i) = F(x) + column i.
#[derive(Clone, Debug, PartialEq)]
pub struct Periodicity {
    pub periods: Vec<f64>,
    pub translations: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ImmersionChart {
    pub id: String,
    pub shape: Shape,
    target: TargetGeometry,
    pub jet_mode: JetMode,
    pub fd: FdSettings,
}

/// Raw derivative arrays of F at a point.
#[derive(Clone, Debug)]
pub struct Jets {
    pub value: DVector<f64>,
    /// Column i is ∂_i F.
    pub first: DMatrix<f64>,
    /// `second[i][j]` = ∂_i∂_j F.
    pub second: Vec<Vec<DVector<f64>>>,
    /// `third[i][j][k]` = ∂_i∂_j∂_k F.
    pub third: Vec<Vec<Vec<DVector<f64>>>>,
}

/// First-order data of the immersion at a point.
#[derive(Clone, Debug)]
pub struct PointGeometry {
    pub p: Vec<f64>,
    pub f: DVector<f64>,
    pub df: DMatrix<f64>,
    pub g_n: DMatrix<f64>,
    pub j_n: DMatrix<f64>,
    pub g_m: MetricTensor,
    pub normal_projector: DMatrix<f64>,
    pub domain_christoffel: Christoffel,
}

impl PointGeometry {
    pub fn dim(&self) -> usize {
        self.df.ncols()
    }
    pub fn target_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.g_n * v)[(0, 0)]
    }
    pub fn tangent_projector(&self) -> DMatrix<f64> {
        DMatrix::identity(self.f.len(), self.f.len()) - &self.normal_projector
    }
}

#[derive(Clone, Debug)]
pub struct SecondFundamental {
    /// `nabla_df[i][j]` = ∇dF(∂_i, ∂_j), normal.
    pub nabla_df: Vec<Vec<DVector<f64>>>,
    pub mean_curvature: DVector<f64>,
    /// Largest tangential component found before projecting.
    pub tangential_residual: f64,
}

#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub rm_fd: Curvature,
    pub rm_gauss: Curvature,
    pub rn_pullback: Curvature,
    pub ricci_n: DMatrix<f64>,
}

fn parse_params(s: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for kv in s.split('&').filter(|t| !t.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| KalError::InvalidParameter(format!("expected key=value, got '{kv}'")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

fn take_f64(p: &mut BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match p.remove(key) {
        None => Ok(default),
        Some(v) => parse_angle(&v).ok_or_else(|| KalError::InvalidParameter(format!("{key}={v}"))),
    }
}

/// Parses a real number, also accepting `pi`, `pi/3`, `2pi/5`.
fn parse_angle(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a, b.parse::<f64>().ok()?),
        None => (s, 1.0),
    };
    let coef = num.strip_suffix("pi")?;
    let c = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().ok()? };
    Some(c * PI / den)
}

fn take_usize(p: &mut BTreeMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match p.remove(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| KalError::InvalidParameter(format!("{key}={v}"))),
    }
}

pub const IMMERSION_IDS: &[&str] = &[
    "tilted-plane?alpha=&n=",
    "complex-line",
    "lagrangian-plane",
    "conj-curve?k=",
    "product-conj",
    "clifford-cp2?K=",
    "lagrangian-graph?f=&eps=&n=",
    "hk-complex-plane?nu=&phi=",
    "hk-graph?nu=&phi=&eps=",
    "torus-graph?eps=&winding=",
];

fn hk_columns(s: &SpherePoint) -> DMatrix<f64> {
    let (_, triple) = make_hyperkahler_flat(8).expect("dimension 8 is supported");
    let j = j_from_sphere(&triple, s);
    let x = DVector::from_fn(8, |r, _| if r == 0 { 1.0 } else { 0.0 });
    let y = DVector::from_fn(8, |r, _| if r == 4 { 1.0 } else { 0.0 });
    let jx = &j * &x;
    let jy = &j * &y;
    DMatrix::from_columns(&[x, jx, y, jy])
}

/// A J_{νφ}-unitary frame (e₁, J e₁, e₂, J e₂, e₃, J e₃, e₄, J e₄) of ℝ⁸ whose
/// first two complex directions match [`hk_columns`].
fn hk_unitary_frame(s: &SpherePoint) -> DMatrix<f64> {
    let (_, triple) = make_hyperkahler_flat(8).expect("dimension 8 is supported");
    let j = j_from_sphere(&triple, s);
    let unit = |r: usize| DVector::from_fn(8, |i, _| if i == r { 1.0 } else { 0.0 });
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(8);
    for seed in [0, 4, 1, 2, 3, 5, 6, 7] {
        if cols.len() == 8 {
            break;
        }
        let mut v = unit(seed);
        for c in &cols {
            v -= c * c.dot(&v);
        }
        let n = v.norm();
        if n > 1e-6 {
            let v = v / n;
            let jv = &j * &v;
            cols.push(v);
            cols.push(jv);
        }
    }
    DMatrix::from_columns(&cols)
}

impl ImmersionChart {
    pub fn new(id: String, shape: Shape, target: TargetGeometry) -> Result<Self> {
        let chart = ImmersionChart { id, shape, target, jet_mode: JetMode::Analytic, fd: FdSettings::default() };
        if chart.target_dim() != chart.target.real_dim() {
            return Err(KalError::UnsupportedDimension(chart.target.real_dim()));
        }
        Ok(chart)
    }

    /// Resolves a catalog id such as `conj-curve?k=2` or `tilted-plane?alpha=pi/3&n=1`.
    pub fn from_id(id: &str) -> Result<Self> {
        let (name, query) = id.split_once('?').unwrap_or((id, ""));
        let mut p = parse_params(query)?;
        let chart = match name {
            "tilted-plane" => {
                let alpha = take_f64(&mut p, "alpha", PI / 3.0)?;
                let n = take_usize(&mut p, "n", 1)?;
                if n == 0 {
                    return Err(KalError::InvalidParameter("n must be ≥ 1".into()));
                }
                let shape = Shape::Tilted { n, cos: alpha.cos(), sin: alpha.sin() };
                ImmersionChart::new(id.to_string(), shape, make_flat_kahler(2 * n, None)?)?
            }
            "complex-line" => ImmersionChart::new(
                id.to_string(),
                Shape::Tilted { n: 1, cos: 1.0, sin: 0.0 },
                make_flat_kahler(2, None)?,
            )?,
            "lagrangian-plane" => ImmersionChart::new(
                id.to_string(),
                Shape::Tilted { n: 1, cos: 0.0, sin: 1.0 },
                make_flat_kahler(2, None)?,
            )?,
            "conj-curve" => {
                let k = take_usize(&mut p, "k", 2)?;
                if k == 0 {
                    return Err(KalError::InvalidParameter("k must be ≥ 1".into()));
                }
                ImmersionChart::new(id.to_string(), Shape::ConjCurve { k: k as u32 }, make_flat_kahler(2, None)?)?
            }
            "product-conj" => ImmersionChart::new(id.to_string(), Shape::ProductConj, make_flat_kahler(4, None)?)?,
            "clifford-cp2" => {
                let k = take_f64(&mut p, "K", 4.0)?;
                ImmersionChart::new(id.to_string(), Shape::CliffordCp2, make_fubini_study(2, k)?)?
            }
            "lagrangian-graph" => {
                let potential = match p.remove("f").as_deref() {
                    None | Some("sin") => Potential::Sin,
                    Some("quad") => Potential::Quad,
                    Some("cubic") => Potential::Cubic,
                    Some(other) => return Err(KalError::InvalidParameter(format!("f={other}"))),
                };
                let eps = take_f64(&mut p, "eps", 0.3)?;
                let n = take_usize(&mut p, "n", 1)?;
                if n == 0 {
                    return Err(KalError::InvalidParameter("n must be ≥ 1".into()));
                }
                ImmersionChart::new(
                    id.to_string(),
                    Shape::LagrangianGraph { n, potential, eps },
                    make_flat_kahler(2 * n, None)?,
                )?
            }
            "hk-complex-plane" => {
                let sphere = SpherePoint::new(take_f64(&mut p, "nu", PI / 5.0)?, take_f64(&mut p, "phi", 0.7)?);
                let columns = hk_columns(&sphere);
                ImmersionChart::new(
                    id.to_string(),
                    Shape::HkComplexPlane { sphere, columns },
                    make_hyperkahler_flat(8)?.0,
                )?
            }
            "hk-graph" => {
                let sphere = SpherePoint::new(take_f64(&mut p, "nu", PI / 3.0)?, take_f64(&mut p, "phi", 0.4)?);
                let eps = take_f64(&mut p, "eps", 0.15)?;
                let columns = hk_unitary_frame(&sphere);
                ImmersionChart::new(
                    id.to_string(),
                    Shape::HkGraph { sphere, eps, columns },
                    make_hyperkahler_flat(8)?.0,
                )?
            }
            "torus-graph" => {
                let eps = take_f64(&mut p, "eps", 0.1)?;
                let winding = match p.remove("winding").as_deref() {
                    None | Some("lagrangian") => Winding::Lagrangian,
                    Some("tilted") => Winding::Tilted,
                    Some("holomorphic") => Winding::Holomorphic,
                    Some(other) => return Err(KalError::InvalidParameter(format!("winding={other}"))),
                };
                let lattice = DMatrix::identity(4, 4) * (2.0 * PI);
                ImmersionChart::new(id.to_string(), Shape::TorusGraph { eps, winding }, make_flat_kahler(2, Some(lattice))?)?
            }
            _ => return Err(KalError::UnknownId(id.to_string())),
        };
        if let Some(k) = p.keys().next() {
            return Err(KalError::InvalidParameter(format!("unknown parameter '{k}' for {name}")));
        }
        Ok(chart)
    }

    pub fn with_target(mut self, target: TargetGeometry) -> Result<Self> {
        if target.real_dim() != self.target.real_dim() {
            return Err(KalError::UnsupportedDimension(target.real_dim()));
        }
        self.target = target;
        Ok(self)
    }

    pub fn with_jet_mode(mut self, mode: JetMode) -> Self {
        self.jet_mode = mode;
        self
    }

    pub fn with_fd(mut self, fd: FdSettings) -> Self {
        self.fd = fd;
        self
    }

    pub fn target(&self) -> &TargetGeometry {
        &self.target
    }

    pub fn domain_dim(&self) -> usize {
        match &self.shape {
            Shape::Tilted { n, .. } | Shape::LagrangianGraph { n, .. } => 2 * n,
            Shape::ConjCurve { .. } | Shape::CliffordCp2 | Shape::TorusGraph { .. } => 2,
            Shape::ProductConj | Shape::HkComplexPlane { .. } | Shape::HkGraph { .. } => 4,
        }
    }

    pub fn n(&self) -> usize {
        self.domain_dim() / 2
    }

    fn target_dim(&self) -> usize {
        match &self.shape {
            Shape::Tilted { n, .. } => 4 * n,
            Shape::LagrangianGraph { n, .. } => 4 * n,
            Shape::ConjCurve { .. } | Shape::CliffordCp2 | Shape::TorusGraph { .. } => 4,
            Shape::ProductConj | Shape::HkComplexPlane { .. } | Shape::HkGraph { .. } => 8,
        }
    }

    /// Box from which sample points are drawn, away from complex points and
    /// from the chart boundary.
    pub fn sample_box(&self) -> Vec<(f64, f64)> {
        let d = self.domain_dim();
        match &self.shape {
            Shape::Tilted { .. } | Shape::LagrangianGraph { .. } | Shape::HkComplexPlane { .. } => vec![(-1.0, 1.0); d],
            Shape::ConjCurve { k } => {
                let r = if *k <= 1 { 1.0 } else { (*k as f64).powf(-1.0 / (*k as f64 - 1.0)) };
                vec![(0.2 * r, 0.6 * r); 2]
            }
            Shape::ProductConj => vec![(0.1, 0.3); 4],
            Shape::CliffordCp2 => vec![(-0.4, 0.4); 2],
            Shape::HkGraph { .. } => vec![(-0.8, 0.8); 4],
            Shape::TorusGraph { .. } => vec![(0.0, 2.0 * PI); 2],
        }
    }

    pub fn periodicity(&self) -> Option<Periodicity> {
        let d = self.domain_dim();
        let periods = vec![2.0 * PI; d];
        let translations = match &self.shape {
            Shape::TorusGraph { winding, .. } => winding.matrix() * (2.0 * PI),
            Shape::Tilted { .. } | Shape::HkComplexPlane { .. } => {
                let zero = vec![0.0; d];
                self.evaluate_jets(&zero, 1).ok()?.first * (2.0 * PI)
            }
            Shape::LagrangianGraph { n, potential: Potential::Sin, .. } => {
                DMatrix::from_fn(4 * n, 2 * n, |r, c| if r == 2 * c { 2.0 * PI } else { 0.0 })
            }
            _ => return None,
        };
        Some(Periodicity { periods, translations })
    }

    /// F(x) in target chart coordinates, generic in the scalar type.
    pub fn eval_generic<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let zero = T::cst(0.0);
        match &self.shape {
            Shape::Tilted { n, cos, sin } => {
                let mut out = Vec::with_capacity(4 * n);
                for a in 0..*n {
                    let (u, v) = (x[2 * a], x[2 * a + 1]);
                    out.extend([u, v.scale(*cos), v.scale(*sin), zero]);
                }
                out
            }
            Shape::ConjCurve { k } => {
                let z = Cx::new(x[0], x[1]);
                let w = z.conj().powi(*k);
                vec![z.re, z.im, w.re, w.im]
            }
            Shape::ProductConj => {
                let z = Cx::new(x[0], x[1]);
                let w = Cx::new(x[2], x[3]);
                let z2 = z.conj().powi(2);
                let w2 = w.conj().powi(2);
                vec![z.re, z.im, z2.re, z2.im, w.re, w.im, w2.re, w2.im]
            }
            Shape::CliffordCp2 => {
                let zeta = [Cx::real(T::cst(1.0)), Cx::cis(x[0]), Cx::cis(x[1])];
                let eta = |j: usize| {
                    let mut acc = Cx::real(zero);
                    for (k, zk) in zeta.iter().enumerate() {
                        let ang = 2.0 * PI * ((j * k) % 3) as f64 / 3.0;
                        let w = Cx::new(T::cst(ang.cos()), T::cst(ang.sin()));
                        acc = acc.add(w.mul(*zk));
                    }
                    acc
                };
                let e0 = eta(0);
                let z1 = eta(1).div(e0);
                let z2 = eta(2).div(e0);
                vec![z1.re, z1.im, z2.re, z2.im]
            }
            Shape::LagrangianGraph { n, potential, eps } => {
                let d = 2 * n;
                let grad = |j: usize| -> T {
                    match potential {
                        Potential::Quad => {
                            let mut g = x[j];
                            if j == 0 && d > 1 {
                                g = g + x[1];
                            }
                            if j == 1 {
                                g = g + x[0];
                            }
                            g.scale(*eps)
                        }
                        Potential::Cubic => (x[j] * x[j]).scale(*eps),
                        Potential::Sin => {
                            let next = x[(j + 1) % d];
                            let prev = x[(j + d - 1) % d];
                            (x[j].cos() * next.sin() + prev.sin() * x[j].cos()).scale(*eps)
                        }
                    }
                };
                let mut out = Vec::with_capacity(2 * d);
                for j in 0..d {
                    out.push(x[j]);
                    out.push(grad(j));
                }
                out
            }
            Shape::HkComplexPlane { columns, .. } => (0..8)
                .map(|r| {
                    let mut acc = zero;
                    for c in 0..4 {
                        let coef = columns[(r, c)];
                        if coef != 0.0 {
                            acc = acc + x[c].scale(coef);
                        }
                    }
                    acc
                })
                .collect(),
            Shape::HkGraph { eps, columns, .. } => {
                let z1 = Cx::new(x[0], x[1]);
                let z2 = Cx::new(x[2], x[3]);
                let w1 = z2.mul(z2).scale(*eps);
                let w2 = z1.mul(z1).scale(*eps);
                let coords = [z1.re, z1.im, z2.re, z2.im, w1.re, w1.im, w2.re, w2.im];
                (0..8)
                    .map(|r| {
                        let mut acc = zero;
                        for (c, v) in coords.iter().enumerate() {
                            let coef = columns[(r, c)];
                            if coef != 0.0 {
                                acc = acc + v.scale(coef);
                            }
                        }
                        acc
                    })
                    .collect()
            }
            Shape::TorusGraph { eps, winding } => {
                let w = winding.matrix();
                let mut out: Vec<T> = (0..4)
                    .map(|r| x[0].scale(w[(r, 0)]) + x[1].scale(w[(r, 1)]))
                    .collect();
                out[1] = out[1] + x[1].sin().scale(*eps);
                out[3] = out[3] + x[0].sin().scale(*eps);
                out
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.eval_generic(x))
    }

    fn eval_seeded(&self, x: &[f64], seeds: &[(usize, usize)]) -> Vec<Dual3> {
        let xs: Vec<Dual3> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let units: Vec<usize> = seeds.iter().filter(|(c, _)| *c == i).map(|(_, u)| *u).collect();
                Dual3::variable(v, &units)
            })
            .collect();
        self.eval_generic(&xs)
    }

    fn check_domain(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.domain_dim() {
            return Err(KalError::UnsupportedDimension(p.len()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(KalError::InvalidParameter("non-finite domain point".into()));
        }
        Ok(())
    }

    fn first_derivatives(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.domain_dim();
        let m2 = self.target_dim();
        match self.jet_mode {
            JetMode::Analytic => {
                let mut out = DMatrix::zeros(m2, d);
                for i in 0..d {
                    let v = self.eval_seeded(p, &[(i, 1)]);
                    for r in 0..m2 {
                        out[(r, i)] = v[r].e1();
                    }
                }
                Ok(out)
            }
            JetMode::FiniteDifference => {
                let f = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.eval_generic(y)) };
                let g = fd::gradient(&f, p, &self.fd)?;
                Ok(DMatrix::from_fn(m2, d, |r, i| g[i][r]))
            }
        }
    }

    /// Values and partial derivatives up to `order` ≤ 3.
    pub fn evaluate_jets(&self, p: &[f64], order: usize) -> Result<Jets> {
        self.check_domain(p)?;
        if order > 3 {
            return Err(KalError::InvalidParameter(format!("jet order {order} > 3")));
        }
        let d = self.domain_dim();
        let m2 = self.target_dim();
        let value = self.eval(p);
        self.target.check_point(value.as_slice())?;
        let first = self.first_derivatives(p)?;
        check_rank(&first)?;
        let mut second = Vec::new();
        let mut third = Vec::new();
        if order >= 2 {
            second = vec![vec![DVector::zeros(m2); d]; d];
            match self.jet_mode {
                JetMode::Analytic => {
                    for i in 0..d {
                        for j in i..d {
                            let v = self.eval_seeded(p, &[(i, 1), (j, 2)]);
                            let col = DVector::from_iterator(m2, v.iter().map(|s| s.e12()));
                            second[j][i] = col.clone();
                            second[i][j] = col;
                        }
                    }
                }
                JetMode::FiniteDifference => {
                    let f = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.eval_generic(y)) };
                    let h = fd::hessian(&f, p, &self.fd)?;
                    for i in 0..d {
                        for j in 0..d {
                            second[i][j] = DVector::from_vec(h[i][j].clone());
                        }
                    }
                }
            }
        }
        if order >= 3 {
            third = vec![vec![vec![DVector::zeros(m2); d]; d]; d];
            match self.jet_mode {
                JetMode::Analytic => {
                    for i in 0..d {
                        for j in i..d {
                            for k in j..d {
                                let v = self.eval_seeded(p, &[(i, 1), (j, 2), (k, 3)]);
                                let col = DVector::from_iterator(m2, v.iter().map(|s| s.e123()));
                                for perm in [[i, j, k], [i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]] {
                                    third[perm[0]][perm[1]][perm[2]] = col.clone();
                                }
                            }
                        }
                    }
                }
                JetMode::FiniteDifference => {
                    let f = |y: &[f64]| -> Result<Vec<f64>> {
                        let h = fd::hessian(&|z: &[f64]| Ok(self.eval_generic(z)), y, &self.fd)?;
                        Ok(h.into_iter().flatten().flatten().collect())
                    };
                    let outer = self.fd.scaled(10.0);
                    let g = fd::gradient(&f, p, &outer)?;
                    for k in 0..d {
                        for i in 0..d {
                            for j in 0..d {
                                let base = (i * d + j) * m2;
                                third[i][j][k] = DVector::from_fn(m2, |r, _| g[k][base + r]);
                            }
                        }
                    }
                }
            }
        }
        Ok(Jets { value, first, second, third })
    }

    /// g_M = dFᵀ g dF as a raw matrix (no positivity check).
    pub fn induced_metric_raw(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(p)?;
        let f = self.eval(p);
        self.target.check_point(f.as_slice())?;
        let df = self.first_derivatives(p)?;
        let g = self.target.metric(f.as_slice());
        Ok(df.transpose() * g * df)
    }

    pub fn induced_metric(&self, p: &[f64]) -> Result<MetricTensor> {
        let df = self.first_derivatives(p)?;
        check_rank(&df)?;
        MetricTensor::new(self.induced_metric_raw(p)?)
    }

    /// Christoffels of g_M from central differences of the induced-metric field.
    pub fn domain_christoffel(&self, p: &[f64]) -> Result<Christoffel> {
        let d = self.domain_dim();
        let f = |y: &[f64]| -> Result<Vec<f64>> { Ok(self.induced_metric_raw(y)?.as_slice().to_vec()) };
        let grad = fd::gradient(&f, p, &self.fd)?;
        let dg: Vec<DMatrix<f64>> = grad.into_iter().map(|v| DMatrix::from_vec(d, d, v)).collect();
        let g = self.induced_metric(p)?;
        Ok(christoffel_from(g.inverse(), &dg))
    }
}

fn check_rank(df: &DMatrix<f64>) -> Result<()> {
    let sv = df.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0f64, |m, v| m.max(*v));
    let rank = sv.iter().filter(|v| **v > 1e-8 * top.max(1e-300)).count();
    if rank < df.ncols() || top == 0.0 {
        return Err(KalError::ImmersionViolation { rank, expected: df.ncols() });
    }
    Ok(())
}

pub fn evaluate_jets(chart: &ImmersionChart, p: &[f64], order: usize) -> Result<Jets> {
    chart.evaluate_jets(p, order)
}

pub fn first_fundamental(chart: &ImmersionChart, p: &[f64]) -> Result<PointGeometry> {
    let jets = chart.evaluate_jets(p, 1)?;
    let t = chart.target();
    let g_n = t.metric(jets.value.as_slice());
    let j_n = t.complex_structure(jets.value.as_slice());
    let g_m = MetricTensor::new(jets.first.transpose() * &g_n * &jets.first)?;
    let tangent = &jets.first * g_m.inverse() * jets.first.transpose() * &g_n;
    let normal_projector = DMatrix::identity(g_n.nrows(), g_n.nrows()) - tangent;
    let domain_christoffel = chart.domain_christoffel(p)?;
    Ok(PointGeometry {
        p: p.to_vec(),
        f: jets.value,
        df: jets.first,
        g_n,
        j_n,
        g_m,
        normal_projector,
        domain_christoffel,
    })
}

pub fn second_fundamental(chart: &ImmersionChart, pg: &PointGeometry) -> Result<SecondFundamental> {
    let jets = chart.evaluate_jets(&pg.p, 2)?;
    let d = pg.dim();
    let gamma_n = chart.target().christoffel(pg.f.as_slice());
    let tangent = pg.tangent_projector();
    let mut nabla_df = vec![vec![DVector::zeros(pg.f.len()); d]; d];
    let mut tangential_residual = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let mut v = jets.second[i][j].clone() + gamma_n.apply(&pg.df.column(i).into(), &pg.df.column(j).into());
            for k in 0..d {
                v -= pg.df.column(k) * pg.domain_christoffel.get(k, i, j);
            }
            let tang = &tangent * &v;
            tangential_residual = tangential_residual.max(tang.amax());
            let nv = &pg.normal_projector * v;
            nabla_df[j][i] = nv.clone();
            nabla_df[i][j] = nv;
        }
    }
    let g_inv = pg.g_m.inverse();
    let mut trace = DVector::zeros(pg.f.len());
    for i in 0..d {
        for j in 0..d {
            trace += &nabla_df[i][j] * g_inv[(i, j)];
        }
    }
    Ok(SecondFundamental { nabla_df, mean_curvature: trace / d as f64, tangential_residual })
}

/// |H|_g at a point.
pub fn mean_curvature_norm(chart: &ImmersionChart, p: &[f64]) -> Result<f64> {
    let pg = first_fundamental(chart, p)?;
    let sf = second_fundamental(chart, &pg)?;
    Ok(pg.target_inner(&sf.mean_curvature, &sf.mean_curvature).max(0.0).sqrt())
}

/// A^U with g_M(A^U X, Y) = g(∇dF(X,Y), U).
pub fn shape_operator(sf: &SecondFundamental, pg: &PointGeometry, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    let tang = pg.tangent_projector() * u;
    let res = tang.amax();
    if res > 1e-8 * (1.0 + u.amax()) {
        return Err(KalError::NonNormalVector(res));
    }
    let d = pg.dim();
    let b = DMatrix::from_fn(d, d, |i, j| pg.target_inner(&sf.nabla_df[i][j], u));
    Ok(pg.g_m.inverse() * b)
}

/// R^M from central differences of the Christoffel field of g_M.
pub fn domain_curvature_fd(chart: &ImmersionChart, p: &[f64]) -> Result<Curvature> {
    let d = chart.domain_dim();
    let f = |y: &[f64]| -> Result<Vec<f64>> { Ok(chart.domain_christoffel(y)?.data) };
    let grad = fd::gradient(&f, p, &chart.fd)?;
    let dgamma: Vec<Christoffel> = grad.into_iter().map(|data| Christoffel { dim: d, data }).collect();
    let g = chart.induced_metric(p)?;
    let gamma = chart.domain_christoffel(p)?;
    Ok(curvature_from_christoffel(g.matrix(), &gamma, &dgamma))
}

/// R^M(X,Y,Z,W) = R^N(dFX,dFY,dFZ,dFW) + g(∇dF(X,Z),∇dF(Y,W)) − g(∇dF(X,W),∇dF(Y,Z)).
pub fn domain_curvature_gauss(chart: &ImmersionChart, pg: &PointGeometry, sf: &SecondFundamental) -> Curvature {
    let d = pg.dim();
    let rn = chart.target().curvature(pg.f.as_slice()).pullback(&pg.df);
    let mut out = rn;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let corr = pg.target_inner(&sf.nabla_df[a][c], &sf.nabla_df[b][e])
                        - pg.target_inner(&sf.nabla_df[a][e], &sf.nabla_df[b][c]);
                    let v = out.get(a, b, c, e) + corr;
                    out.set(a, b, c, e, v);
                }
            }
        }
    }
    out
}

pub fn curvature_tolerance(mode: JetMode) -> f64 {
    match mode {
        JetMode::Analytic => 1e-7,
        JetMode::FiniteDifference => 1e-5,
    }
}

/// Both routes to R^M plus target curvature data; errors if the routes disagree.
pub fn domain_curvature(chart: &ImmersionChart, p: &[f64]) -> Result<CurvatureData> {
    let pg = first_fundamental(chart, p)?;
    let sf = second_fundamental(chart, &pg)?;
    let rm_fd = domain_curvature_fd(chart, p)?;
    let rm_gauss = domain_curvature_gauss(chart, &pg, &sf);
    let scale = 1.0 + rm_gauss.max_abs();
    let gap = rm_fd.max_abs_diff(&rm_gauss);
    if gap > curvature_tolerance(chart.jet_mode) * scale {
        return Err(KalError::CurvatureMismatch(gap));
    }
    let fpt = pg.f.as_slice();
    Ok(CurvatureData {
        rm_fd,
        rm_gauss,
        rn_pullback: chart.target().curvature(fpt).pullback(&pg.df),
        ricci_n: chart.target().ricci(fpt),
    })
}
