//! Dimension-generic real and complexified multilinear algebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{KalError, Result};
use crate::fd::{self, FdSettings};

pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalues of g̃ below `KERNEL_REL·(λmax + 1)` count as exact zeros.
pub const KERNEL_REL: f64 = 1e-9;
/// Two g̃ eigenvalues closer than this form a pair.
pub const PAIR_TOL: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric positive-definite bilinear form with a cached Cholesky factor.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTensor {
    components: DMatrix<f64>,
    lower: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl MetricTensor {
    pub fn new(components: DMatrix<f64>) -> Result<Self> {
        let d = components.nrows();
        if d == 0 || components.ncols() != d {
            return Err(KalError::UnsupportedDimension(d));
        }
        let scale = components.amax().max(1.0);
        let asym = (&components - components.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(KalError::NotSymmetric(asym));
        }
        let sym = (&components + components.transpose()) * 0.5;
        let chol = sym.clone().cholesky().ok_or(KalError::NotPositiveDefinite)?;
        let lower = chol.l();
        let inverse = chol.inverse();
        Ok(MetricTensor { components: sym, lower, inverse })
    }

    pub fn identity(d: usize) -> Self {
        MetricTensor {
            components: DMatrix::identity(d, d),
            lower: DMatrix::identity(d, d),
            inverse: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.components * v)[(0, 0)]
    }

    /// Complex-bilinear (not hermitian) extension.
    pub fn bilinear(&self, u: &DVector<Complex64>, v: &DVector<Complex64>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let d = self.dim();
        for a in 0..d {
            for b in 0..d {
                acc += u[a] * v[b] * self.components[(a, b)];
            }
        }
        acc
    }

    /// Columns form a g-orthonormal basis: E = L⁻ᵀ with g = LLᵀ.
    pub fn orthonormal_basis(&self) -> DMatrix<f64> {
        self.lower
            .transpose()
            .try_inverse()
            .expect("Cholesky factor of a positive-definite metric is invertible")
    }

    /// Eᵀ⁻¹ = Lᵀ, mapping coordinates into the orthonormal basis.
    pub fn to_orthonormal(&self) -> DMatrix<f64> {
        self.lower.transpose()
    }

    /// Raises the second index of a (0,2) tensor: returns A with g(AX, Y) = b(X, Y).
    pub fn raise(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.inverse * b.transpose()
    }

    /// Lowers an operator to the bilinear form (X, Y) ↦ g(AX, Y).
    pub fn lower_op(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a.transpose() * &self.components
    }
}

/// Operator A with g(AX, Y) = −g(X, AY).
#[derive(Clone, Debug)]
pub struct SkewOperator {
    pub components: DMatrix<f64>,
    pub metric: MetricTensor,
}

impl SkewOperator {
    pub fn new(components: DMatrix<f64>, metric: MetricTensor) -> Result<Self> {
        let lowered = metric.lower_op(&components);
        let res = (&lowered + lowered.transpose()).amax();
        if res > 1e-9 * (1.0 + lowered.amax()) {
            return Err(KalError::NotSkewAdjoint(res));
        }
        Ok(SkewOperator { components, metric })
    }

    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    /// The associated 2-form (X, Y) ↦ g(AX, Y).
    pub fn form(&self) -> DMatrix<f64> {
        self.metric.lower_op(&self.components)
    }
}

/// Raises a 2-form to the operator A with g(AX, Y) = form(X, Y).
pub fn two_form_to_operator(form: &DMatrix<f64>, g: &MetricTensor) -> Result<SkewOperator> {
    if form.nrows() != g.dim() || form.ncols() != g.dim() {
        return Err(KalError::UnsupportedDimension(form.nrows()));
    }
    let res = (form + form.transpose()).amax();
    if res > 1e-10 * (1.0 + form.amax()) {
        return Err(KalError::NotAntisymmetric(res));
    }
    let a = g.raise(form);
    Ok(SkewOperator { components: a, metric: g.clone() })
}

/// Polar decomposition A = g̃ ∘ J_ω of a skew-adjoint operator.
#[derive(Clone, Debug)]
pub struct PolarParts {
    pub gtilde: DMatrix<f64>,
    pub jomega: DMatrix<f64>,
    /// g-orthonormal vectors spanning the kernel.
    pub kernel_basis: Vec<DVector<f64>>,
    pub rank: usize,
    /// Eigenvalues of g̃, descending, kernel entries exactly zero.
    pub gtilde_eigenvalues: Vec<f64>,
    pub metric: MetricTensor,
}

/// Gram–Schmidt of projected canonical vectors against g; deterministic.
pub(crate) fn span_from_projector(
    projector: &DMatrix<f64>,
    g: &MetricTensor,
    count: usize,
    avoid: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let d = projector.nrows();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(count);
    for i in 0..d {
        if out.len() == count {
            break;
        }
        let mut v = projector.column(i).into_owned();
        for _ in 0..2 {
            for u in avoid.iter().chain(out.iter()) {
                let c = g.inner(u, &v);
                v -= u * c;
            }
        }
        let nrm = g.inner(&v, &v).max(0.0).sqrt();
        if nrm > 1e-6 {
            out.push(v / nrm);
        }
    }
    out
}

pub fn polar_decompose_skew(a: &SkewOperator) -> Result<PolarParts> {
    let d = a.dim();
    let g = &a.metric;
    let e = g.orthonormal_basis();
    let e_inv = g.to_orthonormal();
    let at = &e_inv * &a.components * &e;
    let at = (&at - at.transpose()) * 0.5;
    let h: CMatrix = at.map(|v| Complex64::new(0.0, v));
    let eig = h
        .try_symmetric_eigen(1e-15, 10_000)
        .ok_or_else(|| KalError::EigenFailure("hermitian eigen-solver did not converge".into()))?;
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let thresh = KERNEL_REL * (lam_max + 1.0);

    let mut gt = CMatrix::zeros(d, d);
    let mut jt = CMatrix::zeros(d, d);
    let mut pk = CMatrix::zeros(d, d);
    let mut magnitudes = Vec::with_capacity(d);
    for k in 0..d {
        let lam = eig.eigenvalues[k];
        let u = eig.eigenvectors.column(k);
        let outer = &u * u.adjoint();
        if lam.abs() <= thresh {
            pk += outer;
            magnitudes.push(0.0);
        } else {
            gt += &outer * Complex64::new(lam.abs(), 0.0);
            jt += &outer * Complex64::new(0.0, -lam.signum());
            magnitudes.push(lam.abs());
        }
    }
    magnitudes.sort_by(|x, y| y.total_cmp(x));
    let kernel_dim = magnitudes.iter().filter(|v| **v == 0.0).count();

    let gtilde = &e * gt.map(|c| c.re) * &e_inv;
    let jomega = &e * jt.map(|c| c.re) * &e_inv;
    let pk_coords = &e * pk.map(|c| c.re) * &e_inv;
    let kernel_basis = span_from_projector(&pk_coords, g, kernel_dim, &[]);
    if kernel_basis.len() != kernel_dim {
        return Err(KalError::EigenFailure("kernel basis extraction failed".into()));
    }
    Ok(PolarParts {
        gtilde,
        jomega,
        kernel_basis,
        rank: d - kernel_dim,
        gtilde_eigenvalues: magnitudes,
        metric: g.clone(),
    })
}

/// cosθ_α, descending, one per eigenvalue pair of g̃.
pub fn sorted_angle_spectrum(parts: &PolarParts) -> Result<Vec<f64>> {
    let ev = &parts.gtilde_eigenvalues;
    if ev.len() % 2 != 0 {
        return Err(KalError::UnpairedEigenvalue { value: ev[ev.len() - 1], gap: f64::INFINITY });
    }
    let mut out = Vec::with_capacity(ev.len() / 2);
    for pair in ev.chunks(2) {
        let gap = (pair[0] - pair[1]).abs();
        if gap > PAIR_TOL {
            return Err(KalError::UnpairedEigenvalue { value: pair[0], gap });
        }
        out.push(0.5 * (pair[0] + pair[1]));
    }
    Ok(out)
}

/// Smooth matrix-valued map on a Euclidean parameter patch, diagonal at its base point.
pub struct MatrixPath {
    pub evaluator: Box<dyn Fn(&[f64]) -> CMatrix + Send + Sync>,
    pub base_point: Vec<f64>,
    pub base_diagonal: Vec<Complex64>,
    pub fd: FdSettings,
}

impl MatrixPath {
    pub fn new<F>(evaluator: F, base_point: Vec<f64>) -> Result<Self>
    where
        F: Fn(&[f64]) -> CMatrix + Send + Sync + 'static,
    {
        let a0 = evaluator(&base_point);
        let m = a0.nrows();
        let scale = 1.0 + a0.iter().fold(0.0f64, |s, c| s.max(c.norm()));
        let mut off = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    off = off.max(a0[(i, j)].norm());
                }
            }
        }
        if off > 1e-10 * scale {
            return Err(KalError::NonDiagonalBase(off));
        }
        let base_diagonal = (0..m).map(|i| a0[(i, i)]).collect();
        Ok(MatrixPath {
            evaluator: Box::new(evaluator),
            base_point,
            base_diagonal,
            fd: FdSettings { step: 2e-3, order: 4 },
        })
    }

    fn flat(&self, x: &[f64]) -> Vec<f64> {
        let a = (self.evaluator)(x);
        let mut v = Vec::with_capacity(2 * a.len());
        for c in a.iter() {
            v.push(c.re);
            v.push(c.im);
        }
        v
    }
}

/// First derivative, Hessian and Laplacian of det along a matrix path.
#[derive(Clone, Copy, Debug)]
pub struct DetDerivatives {
    pub first: Complex64,
    pub second: Complex64,
    pub laplacian: Complex64,
}

fn contract1(grad: &[Vec<Complex64>], z: &[Complex64]) -> Vec<Complex64> {
    let n = grad[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (gi, zi) in grad.iter().zip(z) {
        for (o, v) in out.iter_mut().zip(gi) {
            *o += v * zi;
        }
    }
    out
}

fn prod_except(lam: &[Complex64], skip: &[usize]) -> Complex64 {
    lam.iter()
        .enumerate()
        .filter(|(s, _)| !skip.contains(s))
        .fold(Complex64::new(1.0, 0.0), |acc, (_, v)| acc * v)
}

/// Determinant-path derivatives from the diagonal-base closed forms.
pub fn det_path_derivatives(
    path: &MatrixPath,
    z: &[Complex64],
    w: &[Complex64],
) -> Result<DetDerivatives> {
    let p = path.base_point.len();
    if z.len() != p || w.len() != p {
        return Err(KalError::UnsupportedDimension(z.len()));
    }
    let lam = &path.base_diagonal;
    let m = lam.len();
    let f = |x: &[f64]| -> Result<Vec<f64>> { Ok(path.flat(x)) };
    let raw_grad = fd::gradient(&f, &path.base_point, &path.fd)?;
    let raw_hess = fd::hessian(&f, &path.base_point, &path.fd)?;
    let to_c = |v: &[f64]| -> Vec<Complex64> {
        v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
    };
    let grad: Vec<Vec<Complex64>> = raw_grad.iter().map(|v| to_c(v)).collect();
    let hess: Vec<Vec<Vec<Complex64>>> =
        raw_hess.iter().map(|row| row.iter().map(|v| to_c(v)).collect()).collect();
    // entry (r, c) of the column-major flattening sits at r + c·m
    let entry = |v: &[Complex64], r: usize, c: usize| v[r + c * m];

    let hess_along = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        let n = hess[0][0].len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..p {
            for j in 0..p {
                let c = a[i] * b[j];
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(&hess[i][j]) {
                    *o += v * c;
                }
            }
        }
        out
    };

    let second_form = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
        let da = contract1(&grad, a);
        let db = contract1(&grad, b);
        let ha = hess_along(a, b);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..m {
            for k in 0..m {
                if j == k {
                    continue;
                }
                // columns j, k; A^k_j is row k of column j
                let minor = entry(&da, j, j) * entry(&db, k, k) - entry(&da, k, j) * entry(&db, j, k);
                acc += prod_except(lam, &[j, k]) * minor;
            }
            acc += prod_except(lam, &[j]) * entry(&ha, j, j);
        }
        acc
    };

    let dz = contract1(&grad, z);
    let first = (0..m).map(|j| prod_except(lam, &[j]) * entry(&dz, j, j)).sum();
    let second = second_form(z, w);
    let mut laplacian = Complex64::new(0.0, 0.0);
    for a in 0..p {
        let mut e = vec![Complex64::new(0.0, 0.0); p];
        e[a] = Complex64::new(1.0, 0.0);
        laplacian += second_form(&e, &e);
    }
    Ok(DetDerivatives { first, second, laplacian })
}

/// Complex tangent vector with the bilinear extension of g.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector(pub DVector<Complex64>);

impl ComplexVector {
    pub fn from_parts(re: &DVector<f64>, im: &DVector<f64>) -> Self {
        ComplexVector(re.zip_map(im, Complex64::new))
    }
    pub fn from_real(re: &DVector<f64>) -> Self {
        ComplexVector(re.map(|v| Complex64::new(v, 0.0)))
    }
    pub fn real_part(&self) -> DVector<f64> {
        self.0.map(|c| c.re)
    }
    pub fn imag_part(&self) -> DVector<f64> {
        self.0.map(|c| c.im)
    }
    pub fn conj(&self) -> Self {
        ComplexVector(self.0.map(|c| c.conj()))
    }
}

/// Z_α = (X_α − iY_α)/2 for frame `[X₁, Y₁, X₂, Y₂, …]`; returns Z₁..Z_n then Z̄₁..Z̄_n.
pub fn complexify_frame(frame: &[DVector<f64>], g: &MetricTensor) -> Result<Vec<ComplexVector>> {
    let d = frame.len();
    if d % 2 != 0 || d != g.dim() {
        return Err(KalError::UnsupportedDimension(d));
    }
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g.inner(&frame[a], &frame[b]) - target).abs());
        }
    }
    if worst > 1e-8 {
        return Err(KalError::NonOrthonormalFrame(worst));
    }
    let n = d / 2;
    let mut zs: Vec<ComplexVector> = (0..n)
        .map(|a| ComplexVector::from_parts(&(&frame[2 * a] * 0.5), &(&frame[2 * a + 1] * -0.5)))
        .collect();
    let conj: Vec<ComplexVector> = zs.iter().map(|z| z.conj()).collect();
    zs.extend(conj);
    Ok(zs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_block(c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -c, c, 0.0])
    }

    #[test]
    fn identity_metric_raises_trivially() {
        let form = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let a = two_form_to_operator(&form, &MetricTensor::identity(2)).unwrap();
        // g(Ae₁, e₂) = 1 means A e₁ = e₂
        assert_eq!(a.components, rot_block(1.0));
    }

    #[test]
    fn zero_operator_is_all_kernel() {
        let a = SkewOperator::new(DMatrix::zeros(4, 4), MetricTensor::identity(4)).unwrap();
        let p = polar_decompose_skew(&a).unwrap();
        assert_eq!(p.rank, 0);
        assert_eq!(p.kernel_basis.len(), 4);
        assert_eq!(sorted_angle_spectrum(&p).unwrap(), vec![0.0, 0.0]);
        assert_eq!(p.jomega.amax(), 0.0);
    }

    #[test]
    fn block_example_spectrum() {
        let mut a = DMatrix::zeros(4, 4);
        a.view_mut((0, 0), (2, 2)).copy_from(&rot_block(0.5));
        a.view_mut((2, 2), (2, 2)).copy_from(&rot_block(0.25));
        let op = SkewOperator::new(a.clone(), MetricTensor::identity(4)).unwrap();
        let p = polar_decompose_skew(&op).unwrap();
        let s = sorted_angle_spectrum(&p).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-14 && (s[1] - 0.25).abs() < 1e-14);
        assert!((&p.gtilde * &p.jomega - &a).amax() < 1e-14);
        assert_eq!(p.rank, 4);
    }

    #[test]
    fn unpaired_spectrum_is_an_error() {
        let p = PolarParts {
            gtilde: DMatrix::zeros(2, 2),
            jomega: DMatrix::zeros(2, 2),
            kernel_basis: vec![],
            rank: 2,
            gtilde_eigenvalues: vec![0.5, 0.4],
            metric: MetricTensor::identity(2),
        };
        assert!(matches!(sorted_angle_spectrum(&p), Err(KalError::UnpairedEigenvalue { .. })));
    }

    #[test]
    fn rejects_indefinite_metric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(MetricTensor::new(m), Err(KalError::NotPositiveDefinite));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(MetricTensor::new(m), Err(KalError::NotSymmetric(_))));
    }

    #[test]
    fn constant_path_has_zero_derivatives() {
        let path = MatrixPath::new(|_x: &[f64]| CMatrix::identity(3, 3), vec![0.0, 0.0]).unwrap();
        let z = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let d = det_path_derivatives(&path, &z, &z).unwrap();
        assert!(d.first.norm() < 1e-12 && d.second.norm() < 1e-8);
    }

    #[test]
    fn diagonal_product_path() {
        let path = MatrixPath::new(
            |x: &[f64]| {
                let mut a = CMatrix::zeros(2, 2);
                a[(0, 0)] = Complex64::new(2.0 + x[0], 0.0);
                a[(1, 1)] = Complex64::new(3.0 + x[0], 0.0);
                a
            },
            vec![0.0],
        )
        .unwrap();
        let z = [Complex64::new(1.0, 0.0)];
        let d = det_path_derivatives(&path, &z, &z).unwrap();
        assert!((d.first - Complex64::new(5.0, 0.0)).norm() < 1e-10);
        assert!((d.second - Complex64::new(2.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn non_diagonal_base_rejected() {
        let r = MatrixPath::new(|_x: &[f64]| CMatrix::from_element(2, 2, Complex64::new(1.0, 0.0)), vec![0.0]);
        assert!(matches!(r, Err(KalError::NonDiagonalBase(_))));
    }

    #[test]
    fn complexified_standard_pairs() {
        let frame: Vec<DVector<f64>> = (0..4)
            .map(|i| DVector::from_fn(4, |r, _| if r == i { 1.0 } else { 0.0 }))
            .collect();
        let g = MetricTensor::identity(4);
        let z = complexify_frame(&frame, &g).unwrap();
        assert_eq!(g.bilinear(&z[0].0, &z[2].0), Complex64::new(0.5, 0.0));
        assert_eq!(g.bilinear(&z[0].0, &z[0].0), Complex64::new(0.0, 0.0));
    }
}
