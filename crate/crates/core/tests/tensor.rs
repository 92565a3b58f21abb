use kahler_core::tensor::{
    complexify_frame, det_path_derivatives, polar_decompose_skew, sorted_angle_spectrum, two_form_to_operator, MatrixPath,
};
use kahler_core::MetricTensor;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn spd(d: usize, seed: &[f64]) -> MetricTensor {
    let m = DMatrix::from_fn(d, d, |i, j| seed[(i * d + j) % seed.len()] * 0.4);
    MetricTensor::new(&m * m.transpose() + DMatrix::identity(d, d)).unwrap()
}

fn skew(d: usize, seed: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |i, j| seed[(i * 7 + j * 3) % seed.len()]);
    &m - m.transpose()
}

fn block(c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -c, c, 0.0])
}

#[test]
fn zero_form_gives_zero_operator_and_lagrangian_polar_parts() {
    let g = spd(4, &[0.3, -0.2, 0.5, 0.1]);
    let a = two_form_to_operator(&DMatrix::zeros(4, 4), &g).unwrap();
    assert_eq!(a.components.amax(), 0.0);
    let parts = polar_decompose_skew(&a).unwrap();
    assert_eq!(parts.rank, 0);
    assert_eq!(parts.kernel_basis.len(), 4);
    assert_eq!(sorted_angle_spectrum(&parts).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn standard_symplectic_form_is_already_polar() {
    let mut form = DMatrix::zeros(4, 4);
    form.view_mut((0, 0), (2, 2)).copy_from(&block(-1.0));
    form.view_mut((2, 2), (2, 2)).copy_from(&block(-1.0));
    let a = two_form_to_operator(&form, &MetricTensor::identity(4)).unwrap();
    let parts = polar_decompose_skew(&a).unwrap();
    assert!((&parts.gtilde - DMatrix::identity(4, 4)).amax() < 1e-12);
    assert!((&parts.jomega - &a.components).amax() < 1e-12);
    assert!(parts.kernel_basis.is_empty());
}

#[test]
fn block_operator_has_its_block_cosines() {
    let mut a = DMatrix::zeros(4, 4);
    a.view_mut((0, 0), (2, 2)).copy_from(&block(0.5));
    a.view_mut((2, 2), (2, 2)).copy_from(&block(0.25));
    // −A² = diag(0.25, 0.25, 1/16, 1/16), whose square roots are the cosines
    let sq = -(&a * &a);
    assert!((sq[(0, 0)] - 0.25).abs() < 1e-15 && (sq[(2, 2)] - 0.0625).abs() < 1e-15);
    let op = kahler_core::tensor::SkewOperator::new(a, MetricTensor::identity(4)).unwrap();
    let parts = polar_decompose_skew(&op).unwrap();
    assert_eq!(parts.rank, 4);
    let spec = sorted_angle_spectrum(&parts).unwrap();
    assert!((spec[0] - 0.5).abs() < 1e-12 && (spec[1] - 0.25).abs() < 1e-12);
}

#[test]
fn diagonal_product_path_first_derivative() {
    let path = MatrixPath::new(
        |x: &[f64]| {
            let mut m = DMatrix::zeros(2, 2);
            m[(0, 0)] = Complex64::new(2.0 + x[0], 0.0);
            m[(1, 1)] = Complex64::new(3.0 + x[0], 0.0);
            m
        },
        vec![0.0],
    )
    .unwrap();
    let one = [Complex64::new(1.0, 0.0)];
    let d = det_path_derivatives(&path, &one, &one).unwrap();
    assert!((d.first - Complex64::new(5.0, 0.0)).norm() < 1e-9);
    assert!((d.second - Complex64::new(2.0, 0.0)).norm() < 1e-6);
}

#[test]
fn complexified_standard_pairs() {
    let frame: Vec<DVector<f64>> = (0..4).map(|i| DVector::from_fn(4, |r, _| if r == i { 1.0 } else { 0.0 })).collect();
    let g = MetricTensor::identity(4);
    let z = complexify_frame(&frame, &g).unwrap();
    assert!((g.bilinear(&z[0].0, &z[2].0) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    assert!(g.bilinear(&z[0].0, &z[0].0).norm() < 1e-15);
}

fn random_orthonormal(g: &MetricTensor, seed: &[f64]) -> Vec<DVector<f64>> {
    let d = g.dim();
    let mut out: Vec<DVector<f64>> = Vec::new();
    for k in 0..d {
        let mut v = DVector::from_fn(d, |i, _| seed[(k * d + i) % seed.len()] + if i == k { 2.0 } else { 0.0 });
        for u in &out {
            let c = g.inner(&v, u);
            v -= u * c;
        }
        let n = g.inner(&v, &v).sqrt();
        out.push(v / n);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_reproduces_the_form(seed in prop::collection::vec(-1.0f64..1.0, 16), gs in prop::collection::vec(-1.0f64..1.0, 16)) {
        let g = spd(4, &gs);
        let form = skew(4, &seed);
        let a = two_form_to_operator(&form, &g).unwrap();
        let back = g.matrix() * &a.components;
        // g(AXᵢ, Xⱼ) = form(Xᵢ, Xⱼ)
        prop_assert!((back.transpose() - &form).amax() < 1e-12);
    }

    #[test]
    fn polar_parts_reconstruct_and_square(d in prop::sample::select(vec![2usize, 4, 6, 8]), seed in prop::collection::vec(-1.0f64..1.0, 24), gs in prop::collection::vec(-1.0f64..1.0, 24)) {
        let g = spd(d, &gs);
        let a = two_form_to_operator(&skew(d, &seed), &g).unwrap();
        let parts = polar_decompose_skew(&a).unwrap();
        prop_assert!((&parts.gtilde * &parts.jomega - &a.components).amax() < 1e-10);
        if parts.rank == d {
            let sq = &parts.jomega * &parts.jomega + DMatrix::identity(d, d);
            prop_assert!(sq.amax() < 1e-10);
            let orth = parts.jomega.transpose() * g.matrix() * &parts.jomega - g.matrix();
            prop_assert!(orth.amax() < 1e-10);
        }
    }

    #[test]
    fn spectrum_is_invariant_under_orthogonal_conjugation(seed in prop::collection::vec(-1.0f64..1.0, 24), gs in prop::collection::vec(-1.0f64..1.0, 16), qs in prop::collection::vec(-1.0f64..1.0, 16)) {
        let g = spd(4, &gs);
        let a = two_form_to_operator(&skew(4, &seed), &g).unwrap();
        let q = DMatrix::from_columns(&random_orthonormal(&g, &qs));
        // Q is g-orthonormal as columns, so Q⁻¹ A Q is skew for g' = QᵀgQ = Id.
        let conj = q.clone().try_inverse().unwrap() * &a.components * &q;
        let b = kahler_core::tensor::SkewOperator::new(conj, MetricTensor::identity(4)).unwrap();
        let s1 = sorted_angle_spectrum(&polar_decompose_skew(&a).unwrap()).unwrap();
        let s2 = sorted_angle_spectrum(&polar_decompose_skew(&b).unwrap()).unwrap();
        for (x, y) in s1.iter().zip(&s2) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn complexified_gram_has_block_form(gs in prop::collection::vec(-1.0f64..1.0, 16), qs in prop::collection::vec(-1.0f64..1.0, 16)) {
        let g = spd(4, &gs);
        let frame = random_orthonormal(&g, &qs);
        let z = complexify_frame(&frame, &g).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expected = if (a + 2) % 4 == b { 0.5 } else { 0.0 };
                prop_assert!((g.bilinear(&z[a].0, &z[b].0) - Complex64::new(expected, 0.0)).norm() < 1e-12);
            }
        }
    }
}
