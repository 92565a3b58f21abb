//! Kähler angles at a point, adapted frames, and derivative fields of angle
//! quantities.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{KalError, Result};
use crate::fd;
use crate::immersion::{ImmersionChart, PointGeometry, SecondFundamental};
use crate::target::{christoffel_from, Christoffel};
use crate::tensor::{
    complexify_frame, polar_decompose_skew, sorted_angle_spectrum, two_form_to_operator, ComplexVector, MetricTensor,
    PolarParts, SkewOperator,
};

/// Angles closer than this are treated as equal.
pub const EQUAL_TOL: f64 = 1e-7;
/// Beyond `1 − COMPLEX_TOL` a direction counts as complex.
pub const COMPLEX_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Complex,
    Lagrangian,
    EqualAngles { theta: f64 },
    Generic { complex_directions: usize, lagrangian_directions: usize },
}

/// Pointwise angle data of an immersion.
#[derive(Clone, Debug)]
pub struct AngleData {
    pub p: Vec<f64>,
    pub f: DVector<f64>,
    pub df: DMatrix<f64>,
    pub g_n: DMatrix<f64>,
    pub j_n: DMatrix<f64>,
    pub g_m: MetricTensor,
    pub pullback_form: DMatrix<f64>,
    pub operator: SkewOperator,
    pub polar: PolarParts,
    /// cosθ_α, descending.
    pub cos_spectrum: Vec<f64>,
    /// Σ log((1+cosθ_α)/(1−cosθ_α)); infinite with a complex direction.
    pub kappa: f64,
    /// ½ log det(g + g̃)/det(g − g̃), computed independently of the spectrum.
    pub kappa_det: f64,
    /// g(g̃X, Y).
    pub gtilde_form: DMatrix<f64>,
    /// ĝ = g − Aᵀ g A.
    pub hat_metric: DMatrix<f64>,
    pub classification: Classification,
}

impl AngleData {
    pub fn from_first_order(
        p: &[f64],
        f: DVector<f64>,
        df: DMatrix<f64>,
        g_n: DMatrix<f64>,
        j_n: DMatrix<f64>,
    ) -> Result<Self> {
        let g_m = MetricTensor::new(df.transpose() * &g_n * &df)?;
        let raw = df.transpose() * j_n.transpose() * &g_n * &df;
        let form = (&raw - raw.transpose()) * 0.5;
        let operator = two_form_to_operator(&form, &g_m)?;
        let polar = polar_decompose_skew(&operator)?;
        let cos_spectrum: Vec<f64> = sorted_angle_spectrum(&polar)?.into_iter().map(|c| c.clamp(0.0, 1.0)).collect();
        let kappa = if cos_spectrum.iter().any(|c| *c >= 1.0 - 1e-12) {
            f64::INFINITY
        } else {
            cos_spectrum.iter().map(|c| ((1.0 + c) / (1.0 - c)).ln()).sum()
        };
        let gtilde_form = g_m.lower_op(&polar.gtilde);
        let gtilde_form = (&gtilde_form + gtilde_form.transpose()) * 0.5;
        let minus = (g_m.matrix() - &gtilde_form).determinant();
        let plus = (g_m.matrix() + &gtilde_form).determinant();
        let kappa_det = if minus <= 0.0 { f64::INFINITY } else { 0.5 * (plus / minus).ln() };
        let a = &operator.components;
        let hat = g_m.matrix() - a.transpose() * g_m.matrix() * a;
        let hat_metric = (&hat + hat.transpose()) * 0.5;
        let mut data = AngleData {
            p: p.to_vec(),
            f,
            df,
            g_n,
            j_n,
            g_m,
            pullback_form: form,
            operator,
            polar,
            cos_spectrum,
            kappa,
            kappa_det,
            gtilde_form,
            hat_metric,
            classification: Classification::Lagrangian,
        };
        data.classification = classify_point(&data, EQUAL_TOL);
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.cos_spectrum.len()
    }

    pub fn dim(&self) -> usize {
        self.df.ncols()
    }

    pub fn has_complex_direction(&self) -> bool {
        self.cos_spectrum.iter().any(|c| *c > 1.0 - COMPLEX_TOL)
    }

    pub fn spread(&self) -> f64 {
        let hi = self.cos_spectrum.iter().fold(f64::MIN, |m, c| m.max(*c));
        let lo = self.cos_spectrum.iter().fold(f64::MAX, |m, c| m.min(*c));
        hi - lo
    }

    /// Σ cos²θ_α, which equals the form norm ‖F*ω‖².
    pub fn cos2_sum(&self) -> f64 {
        self.cos_spectrum.iter().map(|c| c * c).sum()
    }

    /// ‖F*ω‖² as a 2-form, straight from the components.
    pub fn form_norm2(&self) -> f64 {
        form_inner(&self.pullback_form, &self.pullback_form, self.g_m.inverse())
    }

    pub fn mean_cos(&self) -> f64 {
        self.cos_spectrum.iter().sum::<f64>() / self.n() as f64
    }

    /// Φ = J dF − dF A, the normal part of J dF.
    pub fn phi(&self) -> DMatrix<f64> {
        &self.j_n * &self.df - &self.df * &self.operator.components
    }
}

pub fn classify_point(data: &AngleData, tol: f64) -> Classification {
    let cs = &data.cos_spectrum;
    if cs.iter().all(|c| *c > 1.0 - tol) {
        return Classification::Complex;
    }
    if cs.iter().all(|c| *c < tol) {
        return Classification::Lagrangian;
    }
    if data.spread() < tol {
        let mean = cs.iter().sum::<f64>() / cs.len() as f64;
        return Classification::EqualAngles { theta: mean.clamp(-1.0, 1.0).acos() };
    }
    Classification::Generic {
        complex_directions: cs.iter().filter(|c| **c > 1.0 - tol).count(),
        lagrangian_directions: cs.iter().filter(|c| **c < tol).count(),
    }
}

pub fn angle_data(chart: &ImmersionChart, p: &[f64]) -> Result<AngleData> {
    let jets = chart.evaluate_jets(p, 1)?;
    let t = chart.target();
    let g_n = t.metric(jets.value.as_slice());
    let j_n = t.complex_structure(jets.value.as_slice());
    AngleData::from_first_order(p, jets.value, jets.first, g_n, j_n)
}

/// The pull-back Kähler form and its operator A with g(AX, Y) = F*ω(X, Y).
pub fn pullback_form(chart: &ImmersionChart, p: &[f64]) -> Result<(DMatrix<f64>, SkewOperator)> {
    let d = angle_data(chart, p)?;
    Ok((d.pullback_form, d.operator))
}

/// Cluster layout of the angle spectrum, used to detect crossings near a point.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumShape {
    /// Pair indices at which a new cluster of equal angles starts.
    pub boundaries: Vec<usize>,
    pub kernel_pairs: usize,
}

impl SpectrumShape {
    pub fn of(data: &AngleData) -> Self {
        let n = data.n();
        let kernel_pairs = (data.dim() - data.polar.rank) / 2;
        let live = n - kernel_pairs;
        let mut boundaries = Vec::new();
        let mut start = 0;
        for i in 1..live {
            if data.cos_spectrum[start] - data.cos_spectrum[i] >= EQUAL_TOL {
                boundaries.push(i);
                start = i;
            }
        }
        if kernel_pairs > 0 && live > 0 {
            boundaries.push(live);
        }
        SpectrumShape { boundaries, kernel_pairs }
    }

    /// Errors if two clusters that are separate here have merged in `cos`.
    pub fn check(&self, cos: &[f64]) -> Result<()> {
        for &b in &self.boundaries {
            if cos[b - 1] - cos[b] < 0.5 * EQUAL_TOL {
                return Err(KalError::AngleCrossing { first: b - 1, second: b });
            }
        }
        Ok(())
    }

    /// Ranges of pair indices, one per cluster.
    pub fn clusters(&self, n: usize) -> Vec<(usize, usize)> {
        let mut edges = vec![0];
        edges.extend(&self.boundaries);
        edges.push(n);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRecipe {
    pub first_pair: usize,
    pub pairs: usize,
    pub kernel: bool,
    /// Canonical basis indices whose projections seed the cluster.
    pub seeds: Vec<usize>,
}

/// Everything needed to rebuild the same adapted frame at nearby points.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecipe {
    pub shape: SpectrumShape,
    pub clusters: Vec<ClusterRecipe>,
}

/// g-orthonormal frame X₁, Y₁ = J_ω X₁, … diagonalizing the pull-back form.
#[derive(Clone, Debug)]
pub struct DiagonalizingFrame {
    pub x_vectors: Vec<DVector<f64>>,
    pub y_vectors: Vec<DVector<f64>>,
    /// Z₁..Z_n then Z̄₁..Z̄_n.
    pub z_vectors: Vec<ComplexVector>,
    /// J_ω on the span of the non-kernel pairs, J′ on the kernel.
    pub jtilde: DMatrix<f64>,
    pub cos: Vec<f64>,
    pub recipe: FrameRecipe,
}

impl DiagonalizingFrame {
    /// Columns X₁, Y₁, X₂, Y₂, …
    pub fn matrix(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> =
            self.x_vectors.iter().zip(&self.y_vectors).flat_map(|(x, y)| [x.clone(), y.clone()]).collect();
        DMatrix::from_columns(&cols)
    }

    pub fn n(&self) -> usize {
        self.x_vectors.len()
    }
}

/// Eigenvalues of g̃ (descending) and matching g-orthonormal eigenvectors.
fn gtilde_eigen(data: &AngleData) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let g = &data.g_m;
    let e = g.orthonormal_basis();
    let m = g.to_orthonormal() * &data.polar.gtilde * &e;
    let m = (&m + m.transpose()) * 0.5;
    let eig = m
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or_else(|| KalError::EigenFailure("symmetric eigen-solver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..g.dim()).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = idx.iter().map(|&i| &e * eig.eigenvectors.column(i)).collect();
    Ok((values, vectors))
}

fn orthogonalize(v: &mut DVector<f64>, against: &[DVector<f64>], g: &MetricTensor) {
    for _ in 0..2 {
        for u in against {
            let c = g.inner(u, v);
            *v -= u * c;
        }
    }
}

fn build_frame(data: &AngleData, shape: &SpectrumShape, seeds: Option<&[ClusterRecipe]>) -> Result<DiagonalizingFrame> {
    let g = &data.g_m;
    let d = data.dim();
    let n = data.n();
    let (_, eigvecs) = gtilde_eigen(data)?;
    let jw = &data.polar.jomega;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(d);
    let mut recipes = Vec::new();
    let live = n - shape.kernel_pairs;
    for (ci, (a, b)) in shape.clusters(n).into_iter().enumerate() {
        let kernel = a >= live;
        let span = &eigvecs[2 * a..2 * b];
        let basis = DMatrix::from_columns(span);
        let projector = &basis * basis.transpose() * g.matrix();
        let need = if kernel { 2 * (b - a) } else { b - a };
        let mut cluster: Vec<DVector<f64>> = Vec::new();
        let mut used = Vec::new();
        let candidates: Vec<usize> = match seeds {
            Some(r) => r[ci].seeds.clone(),
            None => (0..d).collect(),
        };
        for i in candidates {
            if used.len() == need {
                break;
            }
            let mut v = projector.column(i).into_owned();
            orthogonalize(&mut v, &chosen, g);
            orthogonalize(&mut v, &cluster, g);
            let scale = g.matrix()[(i, i)].sqrt();
            let nrm = g.inner(&v, &v).max(0.0).sqrt();
            let floor = if seeds.is_some() { 1e-8 } else { 1e-3 };
            if nrm <= floor * scale {
                if seeds.is_some() {
                    return Err(KalError::EigenFailure("adapted frame degenerated along its continuation".into()));
                }
                continue;
            }
            let x = v / nrm;
            used.push(i);
            if kernel {
                cluster.push(x);
            } else {
                let y = jw * &x;
                cluster.push(x);
                cluster.push(y);
            }
        }
        if used.len() != need {
            return Err(KalError::EigenFailure("could not seed an adapted frame".into()));
        }
        for pair in cluster.chunks(2) {
            xs.push(pair[0].clone());
            ys.push(pair[1].clone());
        }
        chosen.extend(cluster);
        recipes.push(ClusterRecipe { first_pair: a, pairs: b - a, kernel, seeds: used });
    }
    let cols: Vec<DVector<f64>> = xs.iter().zip(&ys).flat_map(|(x, y)| [x.clone(), y.clone()]).collect();
    let z_vectors = complexify_frame(&cols, g)?;
    let fr = DMatrix::from_columns(&cols);
    let mut jstd = DMatrix::zeros(d, d);
    for a in 0..n {
        jstd[(2 * a + 1, 2 * a)] = 1.0;
        jstd[(2 * a, 2 * a + 1)] = -1.0;
    }
    let fr_inv = fr.clone().try_inverse().ok_or(KalError::NonOrthonormalFrame(f64::INFINITY))?;
    Ok(DiagonalizingFrame {
        x_vectors: xs,
        y_vectors: ys,
        z_vectors,
        jtilde: &fr * jstd * fr_inv,
        cos: data.cos_spectrum.clone(),
        recipe: FrameRecipe { shape: shape.clone(), clusters: recipes },
    })
}

pub fn diagonalizing_frame(chart: &ImmersionChart, p: &[f64]) -> Result<DiagonalizingFrame> {
    let data = angle_data(chart, p)?;
    build_frame(&data, &SpectrumShape::of(&data), None)
}

/// The frame field obtained by continuing `recipe` to a nearby point.
pub fn frame_with_recipe(chart: &ImmersionChart, q: &[f64], recipe: &FrameRecipe) -> Result<DiagonalizingFrame> {
    let data = angle_data(chart, q)?;
    recipe.shape.check(&data.cos_spectrum)?;
    build_frame(&data, &recipe.shape, Some(&recipe.clusters))
}

/// Partial derivatives ∂_k of the frame matrix (columns X₁, Y₁, …).
pub fn frame_derivatives(chart: &ImmersionChart, p: &[f64], recipe: &FrameRecipe) -> Result<Vec<DMatrix<f64>>> {
    let d = chart.domain_dim();
    let f = |q: &[f64]| -> Result<Vec<f64>> { Ok(frame_with_recipe(chart, q, recipe)?.matrix().as_slice().to_vec()) };
    let g = fd::gradient(&f, p, &chart.fd)?;
    Ok(g.into_iter().map(|v| DMatrix::from_vec(d, d, v)).collect())
}

/// Complex contraction tables over V = (Z₁..Z_n, Z̄₁..Z̄_n).
#[derive(Clone, Debug)]
pub struct FrameTables {
    pub n: usize,
    pub cos: Vec<f64>,
    pub vectors: Vec<DVector<Complex64>>,
    /// g(∇dF(V_a, V_b), J dF(V_c)).
    pub gdf: Vec<Complex64>,
    /// ⟨∇_{V_a} V_b, V_c⟩ (complex bilinear); empty unless requested.
    pub conn: Vec<Complex64>,
    /// ∇dF(V_a, V_b) as target vectors.
    pub hessian: Vec<DVector<Complex64>>,
}

impl FrameTables {
    #[inline]
    pub fn bar(&self, a: usize) -> usize {
        if a < self.n {
            a + self.n
        } else {
            a - self.n
        }
    }
    #[inline]
    fn idx(&self, a: usize, b: usize, c: usize) -> usize {
        let m = 2 * self.n;
        (a * m + b) * m + c
    }
    pub fn g(&self, a: usize, b: usize, c: usize) -> Complex64 {
        self.gdf[self.idx(a, b, c)]
    }
    pub fn c(&self, a: usize, b: usize, c: usize) -> Complex64 {
        self.conn[self.idx(a, b, c)]
    }
    pub fn ddf(&self, a: usize, b: usize) -> &DVector<Complex64> {
        &self.hessian[a * 2 * self.n + b]
    }
    pub fn sin2(&self, a: usize) -> f64 {
        let c = self.cos[a % self.n];
        1.0 - c * c
    }
    pub fn cos_of(&self, a: usize) -> f64 {
        self.cos[a % self.n]
    }
}

fn to_complex(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Builds the G table (and the connection table when `frame_jets` is given).
pub fn frame_tables(
    pg: &PointGeometry,
    sf: &SecondFundamental,
    frame: &DiagonalizingFrame,
    frame_jets: Option<&[DMatrix<f64>]>,
) -> FrameTables {
    let d = pg.dim();
    let n = frame.n();
    let m = 2 * n;
    let vectors: Vec<DVector<Complex64>> = frame.z_vectors.iter().map(|z| z.0.clone()).collect();
    let jdf = &pg.j_n * &pg.df;
    let gj = pg.g_n.transpose() * &jdf; // columns: g(·, J dF ∂k)
    // b[i][j][k] = g(∇dF(∂i,∂j), J dF ∂k)
    let mut b = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            let row = sf.nabla_df[i][j].transpose() * &gj;
            for k in 0..d {
                b[(i * d + j) * d + k] = row[k];
            }
        }
    }
    let mut hessian = Vec::with_capacity(m * m);
    for a in 0..m {
        for bb in 0..m {
            let mut h = DVector::<Complex64>::zeros(pg.f.len());
            for i in 0..d {
                for j in 0..d {
                    let w = vectors[a][i] * vectors[bb][j];
                    if w != Complex64::new(0.0, 0.0) {
                        h += to_complex(&sf.nabla_df[i][j]) * w;
                    }
                }
            }
            hessian.push(h);
        }
    }
    let mut gdf = vec![Complex64::new(0.0, 0.0); m * m * m];
    for a in 0..m {
        for bb in 0..m {
            for c in 0..m {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..d {
                    for j in 0..d {
                        let w = vectors[a][i] * vectors[bb][j];
                        for k in 0..d {
                            s += w * vectors[c][k] * b[(i * d + j) * d + k];
                        }
                    }
                }
                gdf[(a * m + bb) * m + c] = s;
            }
        }
    }
    let mut conn = Vec::new();
    if let Some(jets) = frame_jets {
        // ∂_k Z_α = (∂_k X_α − i ∂_k Y_α)/2
        let dv: Vec<Vec<DVector<Complex64>>> = (0..m)
            .map(|a| {
                let alpha = a % n;
                let sign = if a < n { -0.5 } else { 0.5 };
                (0..d)
                    .map(|k| {
                        let x = jets[k].column(2 * alpha).into_owned();
                        let y = jets[k].column(2 * alpha + 1).into_owned();
                        DVector::from_fn(d, |r, _| Complex64::new(0.5 * x[r], sign * y[r]))
                    })
                    .collect()
            })
            .collect();
        conn = vec![Complex64::new(0.0, 0.0); m * m * m];
        for a in 0..m {
            for bb in 0..m {
                let mut cov = pg.domain_christoffel.apply_c(&vectors[a], &vectors[bb]);
                for k in 0..d {
                    cov += &dv[bb][k] * vectors[a][k];
                }
                for c in 0..m {
                    conn[(a * m + bb) * m + c] = pg.g_m.bilinear(&cov, &vectors[c]);
                }
            }
        }
    }
    FrameTables { n, cos: frame.cos.clone(), vectors, gdf, conn, hessian }
}

/// Φ, ĝ, and (off the complex locus) the torsion and difference tensors of the
/// connection induced on TM by the normal connection.
#[derive(Clone, Debug)]
pub struct ConnectionComparison {
    pub phi: DMatrix<f64>,
    pub hat_metric: DMatrix<f64>,
    /// max |Φᵀ g Φ − ĝ|.
    pub isometry_residual: f64,
    pub singular: bool,
    pub torsion: Option<TorsionParts>,
}

#[derive(Clone, Debug)]
pub struct TorsionParts {
    /// T′(∂i, ∂j) from the second fundamental form, indexed `[i][j]`.
    pub torsion: Vec<Vec<DVector<f64>>>,
    /// T′(∂i, ∂j) from the Christoffels of the induced connection.
    pub torsion_connection: Vec<Vec<DVector<f64>>>,
    /// Christoffels Γ′ of the induced connection.
    pub connection: Christoffel,
    /// Levi-Civita Christoffels of ĝ.
    pub hat_christoffel: Christoffel,
    /// S′ = Γ′ − Γ̂.
    pub s_prime: Christoffel,
    /// max_k |Σ ĝ^{ij} (ĝ(S′(∂i,∂j), ∂k) + ĝ(T′(∂i,∂k), ∂j))|.
    pub trace_residual: f64,
}

impl TorsionParts {
    pub fn route_gap(&self) -> f64 {
        let mut m = 0.0f64;
        for (a, b) in self.torsion.iter().flatten().zip(self.torsion_connection.iter().flatten()) {
            m = m.max((a - b).amax());
        }
        m
    }
}

fn hat_singular(hat: &DMatrix<f64>) -> bool {
    let ev = hat.clone().symmetric_eigen().eigenvalues;
    let top = ev.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    ev.iter().any(|v| *v < 1e-9 * top)
}

pub fn phi_and_hat(chart: &ImmersionChart, p: &[f64]) -> Result<ConnectionComparison> {
    let data = angle_data(chart, p)?;
    let phi = data.phi();
    let iso = phi.transpose() * &data.g_n * &phi - &data.hat_metric;
    Ok(ConnectionComparison {
        singular: hat_singular(&data.hat_metric),
        isometry_residual: iso.amax(),
        phi,
        hat_metric: data.hat_metric,
        torsion: None,
    })
}

/// Left inverse ĝ⁻¹ Φᵀ g of Φ.
fn phi_left_inverse(data: &AngleData, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let hinv = data.hat_metric.clone().try_inverse().ok_or(KalError::SingularPhi)?;
    Ok(hinv * phi.transpose() * &data.g_n)
}

pub fn torsion_and_difference(chart: &ImmersionChart, pg: &PointGeometry, sf: &SecondFundamental) -> Result<ConnectionComparison> {
    let mut out = phi_and_hat(chart, &pg.p)?;
    if out.singular {
        return Err(KalError::SingularPhi);
    }
    let data = angle_data(chart, &pg.p)?;
    let d = data.dim();
    let m2 = data.f.len();
    let a = &data.operator.components;
    let pinv = phi_left_inverse(&data, &out.phi)?;
    let ddf = |u: &DVector<f64>, v: &DVector<f64>| -> DVector<f64> {
        let mut s = DVector::zeros(m2);
        for i in 0..d {
            for j in 0..d {
                let w = u[i] * v[j];
                if w != 0.0 {
                    s += &sf.nabla_df[i][j] * w;
                }
            }
        }
        s
    };
    let e = |i: usize| DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 });
    let mut torsion = vec![vec![DVector::zeros(d); d]; d];
    for i in 0..d {
        for j in 0..d {
            let rhs = ddf(&e(j), &(a * e(i))) - ddf(&e(i), &(a * e(j)));
            torsion[i][j] = &pinv * rhs;
        }
    }
    // Γ′(∂i, ∂j) = Φ⁺ P⊥ (∂_i Φ_j + Γ^N(dF_i, Φ_j))
    let phi_field = |q: &[f64]| -> Result<Vec<f64>> { Ok(angle_data(chart, q)?.phi().as_slice().to_vec()) };
    let dphi: Vec<DMatrix<f64>> =
        fd::gradient(&phi_field, &pg.p, &chart.fd)?.into_iter().map(|v| DMatrix::from_vec(m2, d, v)).collect();
    let gamma_n = chart.target().christoffel(data.f.as_slice());
    let mut connection = Christoffel::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let dfi: DVector<f64> = data.df.column(i).into();
            let phij: DVector<f64> = out.phi.column(j).into();
            let v = dphi[i].column(j) + gamma_n.apply(&dfi, &phij);
            let w = &pinv * (&pg.normal_projector * v);
            for k in 0..d {
                connection.set(k, i, j, w[k]);
            }
        }
    }
    let mut torsion_connection = vec![vec![DVector::zeros(d); d]; d];
    for i in 0..d {
        for j in 0..d {
            torsion_connection[i][j] = DVector::from_fn(d, |k, _| connection.get(k, i, j) - connection.get(k, j, i));
        }
    }
    let hat_field = |q: &[f64]| -> Result<Vec<f64>> { Ok(angle_data(chart, q)?.hat_metric.as_slice().to_vec()) };
    let dhat: Vec<DMatrix<f64>> =
        fd::gradient(&hat_field, &pg.p, &chart.fd)?.into_iter().map(|v| DMatrix::from_vec(d, d, v)).collect();
    let hinv = data.hat_metric.clone().try_inverse().ok_or(KalError::SingularPhi)?;
    let hat_christoffel = christoffel_from(&hinv, &dhat);
    let mut s_prime = Christoffel::zeros(d);
    for (s, (c, h)) in s_prime.data.iter_mut().zip(connection.data.iter().zip(&hat_christoffel.data)) {
        *s = c - h;
    }
    let hat = &data.hat_metric;
    let mut trace_residual = 0.0f64;
    for k in 0..d {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                let sv = DVector::from_fn(d, |r, _| s_prime.get(r, i, j));
                s += hinv[(i, j)] * ((sv.transpose() * hat)[k] + (torsion[i][k].transpose() * hat)[j]);
            }
        }
        trace_residual = trace_residual.max(s.abs());
    }
    out.torsion = Some(TorsionParts { torsion, torsion_connection, connection, hat_christoffel, s_prime, trace_residual });
    Ok(out)
}

/// Value, gradient (covector) and Laplacian of a scalar field.
#[derive(Clone, Debug)]
pub struct ScalarJet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub laplacian: f64,
}

/// Differentiates `field` of the angle data. With `tracked`, stencils on which
/// separate angle clusters merge are rejected.
pub fn scalar_field<F>(chart: &ImmersionChart, p: &[f64], gamma: &Christoffel, tracked: bool, field: F) -> Result<ScalarJet>
where
    F: Fn(&AngleData) -> f64,
{
    let base = angle_data(chart, p)?;
    let shape = SpectrumShape::of(&base);
    let f = |q: &[f64]| -> Result<Vec<f64>> {
        let data = angle_data(chart, q)?;
        if tracked {
            shape.check(&data.cos_spectrum)?;
        }
        Ok(vec![field(&data)])
    };
    let d = p.len();
    let grad = fd::gradient(&f, p, &chart.fd)?;
    let hess = fd::hessian(&f, p, &chart.fd)?;
    let gradient = DVector::from_fn(d, |i, _| grad[i][0]);
    let g_inv = base.g_m.inverse();
    let mut lap = 0.0;
    for i in 0..d {
        for j in 0..d {
            let mut h = hess[i][j][0];
            for k in 0..d {
                h -= gamma.get(k, i, j) * gradient[k];
            }
            lap += g_inv[(i, j)] * h;
        }
    }
    Ok(ScalarJet { value: field(&base), gradient, laplacian: lap })
}

/// ∇_k of a 2-form field from its partials.
pub fn covariant_form(form: &DMatrix<f64>, partials: &[DMatrix<f64>], gamma: &Christoffel) -> Vec<DMatrix<f64>> {
    let d = form.nrows();
    (0..d)
        .map(|k| {
            let gk = gamma.along(k); // (Γ_k)^l_i = Γ^l_ki
            &partials[k] - gk.transpose() * form - form * &gk
        })
        .collect()
}

/// ∇_k of an endomorphism field from its partials.
pub fn covariant_operator(op: &DMatrix<f64>, partials: &[DMatrix<f64>], gamma: &Christoffel) -> Vec<DMatrix<f64>> {
    let d = op.nrows();
    (0..d)
        .map(|k| {
            let gk = gamma.along(k);
            &partials[k] + &gk * op - op * &gk
        })
        .collect()
}

/// Form inner product ½ ξ_ij η^ij.
pub fn form_inner(a: &DMatrix<f64>, b: &DMatrix<f64>, g_inv: &DMatrix<f64>) -> f64 {
    0.5 * (g_inv * a * g_inv * b.transpose()).trace()
}

/// Hilbert–Schmidt inner product tr(Aᵀ g B g⁻¹) of endomorphisms.
pub fn operator_inner(a: &DMatrix<f64>, b: &DMatrix<f64>, g: &MetricTensor) -> f64 {
    (a.transpose() * g.matrix() * b * g.inverse()).trace()
}

/// Covector δξ_j = −g^{ik} (∇_i ξ)_kj.
pub fn codifferential(nabla: &[DMatrix<f64>], g_inv: &DMatrix<f64>) -> DVector<f64> {
    let d = g_inv.nrows();
    DVector::from_fn(d, |j, _| {
        let mut s = 0.0;
        for i in 0..d {
            for k in 0..d {
                s -= g_inv[(i, k)] * nabla[i][(k, j)];
            }
        }
        s
    })
}

/// Σ_k ⟨∇_k ξ, ∇_k ξ⟩ with both the form and the index contracted by g⁻¹.
pub fn nabla_form_norm2(nabla: &[DMatrix<f64>], g_inv: &DMatrix<f64>) -> f64 {
    let d = g_inv.nrows();
    let mut s = 0.0;
    for k in 0..d {
        for l in 0..d {
            s += g_inv[(k, l)] * form_inner(&nabla[k], &nabla[l], g_inv);
        }
    }
    s
}

pub fn nabla_operator_norm2(nabla: &[DMatrix<f64>], g: &MetricTensor) -> f64 {
    let d = g.dim();
    let g_inv = g.inverse();
    let mut s = 0.0;
    for k in 0..d {
        for l in 0..d {
            s += g_inv[(k, l)] * operator_inner(&nabla[k], &nabla[l], g);
        }
    }
    s
}

fn matrix_gradient<F>(chart: &ImmersionChart, p: &[f64], rows: usize, cols: usize, f: F) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let g = fd::gradient(&|q: &[f64]| Ok(f(q)?.as_slice().to_vec()), p, &chart.fd)?;
    Ok(g.into_iter().map(|v| DMatrix::from_vec(rows, cols, v)).collect())
}

/// ∇F*ω at p.
pub fn pullback_covariant(chart: &ImmersionChart, p: &[f64], gamma: &Christoffel) -> Result<Vec<DMatrix<f64>>> {
    let d = chart.domain_dim();
    let form = angle_data(chart, p)?.pullback_form;
    let partials = matrix_gradient(chart, p, d, d, |q| Ok(angle_data(chart, q)?.pullback_form))?;
    Ok(covariant_form(&form, &partials, gamma))
}

/// δF*ω at q as a covector.
pub fn pullback_codifferential(chart: &ImmersionChart, q: &[f64]) -> Result<DVector<f64>> {
    let gamma = chart.domain_christoffel(q)?;
    let g = chart.induced_metric(q)?;
    let nabla = pullback_covariant(chart, q, &gamma)?;
    Ok(codifferential(&nabla, g.inverse()))
}

/// Hodge Laplacian of the closed form F*ω, computed as dδ.
pub fn pullback_hodge_laplacian(chart: &ImmersionChart, p: &[f64]) -> Result<DMatrix<f64>> {
    let d = chart.domain_dim();
    let outer = chart.fd.scaled(2.0);
    let g = fd::gradient(&|q: &[f64]| Ok(pullback_codifferential(chart, q)?.as_slice().to_vec()), p, &outer)?;
    Ok(DMatrix::from_fn(d, d, |i, j| g[i][j] - g[j][i]))
}

/// max |dF*ω| over index triples.
pub fn pullback_closedness(chart: &ImmersionChart, p: &[f64]) -> Result<f64> {
    let d = chart.domain_dim();
    let partials = matrix_gradient(chart, p, d, d, |q| Ok(angle_data(chart, q)?.pullback_form))?;
    let mut m = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let v = partials[i][(j, k)] + partials[j][(k, i)] + partials[k][(i, j)];
                m = m.max(v.abs());
            }
        }
    }
    Ok(m)
}

/// ∇J_ω at p; J_ω must be smooth near p (no kernel and no complex direction).
pub fn jomega_covariant(chart: &ImmersionChart, p: &[f64], gamma: &Christoffel) -> Result<Vec<DMatrix<f64>>> {
    let d = chart.domain_dim();
    let base = angle_data(chart, p)?;
    if base.polar.rank < d {
        return Err(KalError::EigenFailure("J_ω is not smooth across a Lagrangian direction".into()));
    }
    let partials = matrix_gradient(chart, p, d, d, |q| {
        let data = angle_data(chart, q)?;
        if data.polar.rank < d {
            return Err(KalError::EigenFailure("J_ω is not smooth across a Lagrangian direction".into()));
        }
        Ok(data.polar.jomega)
    })?;
    Ok(covariant_operator(&base.polar.jomega, &partials, gamma))
}

/// Derivatives of angle quantities at a point.
#[derive(Clone, Debug)]
pub struct AngleFieldDerivatives {
    pub cos: Vec<f64>,
    /// ∇cosθ_α as vectors, one per pair (sorted order).
    pub grad_cos: Vec<DVector<f64>>,
    pub kappa: Option<ScalarJet>,
    /// Δ of Σcos²θ_α / n.
    pub laplace_cos2: f64,
    pub nabla_pullback: Vec<DMatrix<f64>>,
    pub nabla_pullback_norm2: f64,
    /// δF*ω as a vector.
    pub codiff_pullback: DVector<f64>,
    pub nabla_jomega_norm2: Option<f64>,
    /// δJ_ω (J_ω seen as the 2-form g(J_ω·,·)) as a vector.
    pub codiff_jomega: Option<DVector<f64>>,
    pub hodge_laplacian: DMatrix<f64>,
    pub closedness: f64,
}

pub fn angle_field_derivatives(chart: &ImmersionChart, p: &[f64]) -> Result<AngleFieldDerivatives> {
    let base = angle_data(chart, p)?;
    let gamma = chart.domain_christoffel(p)?;
    let g = &base.g_m;
    let g_inv = g.inverse();
    let n = base.n();
    let shape = SpectrumShape::of(&base);
    let cos_field = |q: &[f64]| -> Result<Vec<f64>> {
        let data = angle_data(chart, q)?;
        shape.check(&data.cos_spectrum)?;
        Ok(data.cos_spectrum)
    };
    let gc = fd::gradient(&cos_field, p, &chart.fd)?;
    let grad_cos = (0..n).map(|a| g_inv * DVector::from_fn(p.len(), |i, _| gc[i][a])).collect();
    let kappa = if base.kappa.is_finite() {
        Some(scalar_field(chart, p, &gamma, false, |d| d.kappa)?)
    } else {
        None
    };
    let laplace_cos2 = scalar_field(chart, p, &gamma, false, |d| d.form_norm2() / d.n() as f64)?.laplacian;
    let nabla_pullback = pullback_covariant(chart, p, &gamma)?;
    let nabla_pullback_norm2 = nabla_form_norm2(&nabla_pullback, g_inv);
    let codiff_pullback = g_inv * codifferential(&nabla_pullback, g_inv);
    let (nabla_jomega_norm2, codiff_jomega) = match jomega_covariant(chart, p, &gamma) {
        Ok(nj) => {
            let norm = nabla_operator_norm2(&nj, g);
            let as_forms: Vec<DMatrix<f64>> = nj.iter().map(|m| g.lower_op(m)).collect();
            (Some(norm), Some(g_inv * codifferential(&as_forms, g_inv)))
        }
        Err(KalError::EigenFailure(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(AngleFieldDerivatives {
        cos: base.cos_spectrum.clone(),
        grad_cos,
        kappa,
        laplace_cos2,
        nabla_pullback_norm2,
        nabla_pullback,
        codiff_pullback,
        nabla_jomega_norm2,
        codiff_jomega,
        hodge_laplacian: pullback_hodge_laplacian(chart, p)?,
        closedness: pullback_closedness(chart, p)?,
    })
}

/// max over nearby stencil points of the spread of the angles.
pub fn neighborhood_spread(chart: &ImmersionChart, p: &[f64]) -> Result<f64> {
    let mut worst = angle_data(chart, p)?.spread();
    for q in stencil_points(chart, p) {
        worst = worst.max(angle_data(chart, &q)?.spread());
    }
    Ok(worst)
}

/// Points ±h, ±2h along each coordinate and along each pair of coordinates.
pub fn stencil_points(chart: &ImmersionChart, p: &[f64]) -> Vec<Vec<f64>> {
    let d = p.len();
    let mut out = Vec::new();
    for i in 0..d {
        let h = chart.fd.step_at(p[i]);
        for s in [-2.0, -1.0, 1.0, 2.0] {
            let mut q = p.to_vec();
            q[i] += s * h;
            out.push(q);
        }
        for j in (i + 1)..d {
            let hj = chart.fd.step_at(p[j]);
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut q = p.to_vec();
                q[i] += 2.0 * si * h;
                q[j] += 2.0 * sj * hj;
                out.push(q);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::immersion::{first_fundamental, second_fundamental};

    #[test]
    fn tilted_plane_angle_and_kappa() {
        let chart = ImmersionChart::from_id("tilted-plane?alpha=pi/3&n=2").unwrap();
        let data = angle_data(&chart, &[0.1, 0.2, -0.3, 0.4]).unwrap();
        for c in &data.cos_spectrum {
            assert!((c - 0.5).abs() < 1e-12);
        }
        let k = 2.0 * (1.5f64 / 0.5).ln();
        assert!((data.kappa - k).abs() < 1e-12);
        assert!((data.kappa_det - k).abs() < 1e-10);
        assert!(matches!(data.classification, Classification::EqualAngles { .. }));
    }

    #[test]
    fn frame_is_adapted() {
        let chart = ImmersionChart::from_id("product-conj").unwrap();
        let p = [0.15, 0.2, 0.25, 0.12];
        let frame = diagonalizing_frame(&chart, &p).unwrap();
        let data = angle_data(&chart, &p).unwrap();
        for (a, (x, y)) in frame.x_vectors.iter().zip(&frame.y_vectors).enumerate() {
            // F*ω(X_α, Y_α) = cosθ_α
            let w = (x.transpose() * &data.pullback_form * y)[0];
            assert!((w - frame.cos[a]).abs() < 1e-10, "{w} vs {}", frame.cos[a]);
        }
        let moved = [0.151, 0.2, 0.25, 0.12];
        let f2 = frame_with_recipe(&chart, &moved, &frame.recipe).unwrap();
        assert!((f2.matrix() - frame.matrix()).amax() < 0.05);
    }

    #[test]
    fn complex_frame_pairs_with_jtilde() {
        let chart = ImmersionChart::from_id("conj-curve?k=2").unwrap();
        let p = [0.2, 0.1];
        let frame = diagonalizing_frame(&chart, &p).unwrap();
        let z = &frame.z_vectors[0].0;
        let jz = frame.jtilde.map(|v| Complex64::new(v, 0.0)) * z;
        let diff = jz - z * Complex64::new(0.0, 1.0);
        assert!(diff.iter().all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn phi_is_an_isometry_onto_hat_metric() {
        let chart = ImmersionChart::from_id("conj-curve?k=3").unwrap();
        let cc = phi_and_hat(&chart, &[0.25, 0.1]).unwrap();
        assert!(cc.isometry_residual < 1e-12);
        assert!(!cc.singular);
    }

    #[test]
    fn torsion_routes_agree() {
        let chart = ImmersionChart::from_id("product-conj").unwrap();
        let pg = first_fundamental(&chart, &[0.15, 0.2, 0.25, 0.12]).unwrap();
        let sf = second_fundamental(&chart, &pg).unwrap();
        let cc = torsion_and_difference(&chart, &pg, &sf).unwrap();
        let t = cc.torsion.unwrap();
        assert!(t.route_gap() < 1e-6, "gap {}", t.route_gap());
        assert!(t.trace_residual < 1e-6, "trace {}", t.trace_residual);
    }

    #[test]
    fn crossing_is_detected() {
        let shape = SpectrumShape { boundaries: vec![1], kernel_pairs: 0 };
        assert!(matches!(shape.check(&[0.4, 0.4]), Err(KalError::AngleCrossing { first: 0, second: 1 })));
        assert!(shape.check(&[0.5, 0.4]).is_ok());
    }
}
