use kahler_core::angles::{angle_data, classify_point, diagonalizing_frame, Classification};
use kahler_core::ImmersionChart;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn chart(id: &str) -> ImmersionChart {
    ImmersionChart::from_id(id).unwrap()
}

#[test]
fn tilted_plane_at_sixty_degrees() {
    let a = angle_data(&chart("tilted-plane?alpha=1.0471975511965976&n=2"), &[0.1, 0.2, 0.3, 0.4]).unwrap();
    for c in &a.cos_spectrum {
        assert!((c - 0.5).abs() < 1e-12);
    }
    // two pairs at cos = ½, each contributing log 3
    assert!((a.kappa - 2.0 * 3f64.ln()).abs() < 1e-12);
    assert!(matches!(a.classification, Classification::EqualAngles { theta } if (theta - std::f64::consts::FRAC_PI_3).abs() < 1e-10));
}

#[test]
fn conj_curve_cosine_and_kappa() {
    let r: f64 = 0.3;
    let a = angle_data(&chart("conj-curve?k=2"), &[r, 0.0]).unwrap();
    assert!((a.cos_spectrum[0] - 8.0 / 17.0).abs() < 1e-12);
    assert!((a.kappa + (4.0 * r * r).ln()).abs() < 1e-12);
    assert!((a.kappa - a.kappa_det).abs() < 1e-10);
}

#[test]
fn complex_and_lagrangian_planes() {
    let c = angle_data(&chart("complex-line"), &[0.5, -0.5]).unwrap();
    assert_eq!(c.classification, Classification::Complex);
    assert!((c.form_norm2() - 1.0).abs() < 1e-12);
    assert!(c.kappa.is_infinite());
    assert!(c.has_complex_direction());

    let l = angle_data(&chart("lagrangian-plane"), &[0.5, -0.5]).unwrap();
    assert_eq!(l.classification, Classification::Lagrangian);
    assert!(l.form_norm2().abs() < 1e-15);
    assert_eq!(l.kappa, 0.0);
}

#[test]
fn hat_metric_is_sin_squared_times_metric_on_equal_angles() {
    let a = angle_data(&chart("tilted-plane?alpha=0.6&n=2"), &[0.0; 4]).unwrap();
    let s2 = 0.6f64.sin().powi(2);
    assert!((&a.hat_metric - a.g_m.matrix() * s2).amax() < 1e-12);

    let a = angle_data(&chart("conj-curve?k=3"), &[0.2, 0.15]).unwrap();
    let c = a.cos_spectrum[0];
    assert!((&a.hat_metric - a.g_m.matrix() * (1.0 - c * c)).amax() < 1e-10);
}

#[test]
fn phi_pulls_back_the_hat_metric() {
    for (id, p) in [
        ("conj-curve?k=2", vec![0.3, -0.1]),
        ("product-conj", vec![0.3, -0.2, 0.15, 0.25]),
        ("clifford-cp2", vec![0.4, 1.1]),
        ("lagrangian-graph?f=cubic&n=2", vec![0.2, -0.4, 0.1, 0.3]),
    ] {
        let a = angle_data(&chart(id), &p).unwrap();
        let phi = a.phi();
        let pulled = phi.transpose() * &a.g_n * &phi;
        assert!((pulled - &a.hat_metric).amax() < 1e-10, "{id}");
        // Φ lands in the normal bundle
        assert!((a.df.transpose() * &a.g_n * &phi).amax() < 1e-10, "{id}");
    }
}

#[test]
fn form_norm_matches_cosine_squares() {
    let a = angle_data(&chart("product-conj"), &[0.3, -0.2, 0.15, 0.25]).unwrap();
    assert!((a.form_norm2() - a.cos2_sum()).abs() < 1e-12);
    assert!(a.spread() > 0.01);
    assert!(matches!(a.classification, Classification::Generic { complex_directions: 0, lagrangian_directions: 0 }));
}

#[test]
fn classification_tolerance_is_honoured() {
    let a = angle_data(&chart("conj-curve?k=2"), &[0.3, 0.0]).unwrap();
    assert!(matches!(classify_point(&a, 0.5), Classification::Lagrangian));
    assert!(matches!(classify_point(&a, 1e-6), Classification::EqualAngles { .. }));
}

#[test]
fn diagonalizing_frame_is_orthonormal_and_rotated() {
    let c = chart("product-conj");
    let p = [0.3, -0.2, 0.15, 0.25];
    let f = diagonalizing_frame(&c, &p).unwrap();
    let e = f.matrix();
    let g = c.induced_metric(&p).unwrap();
    let gram = e.transpose() * g.matrix() * &e;
    assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-10);
    let a = angle_data(&c, &p).unwrap();
    for (k, (x, y)) in f.x_vectors.iter().zip(&f.y_vectors).enumerate() {
        // A X = cosθ Y
        let ax = &a.operator.components * x;
        assert!((ax - y * f.cos[k]).amax() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn spectrum_lies_in_the_unit_interval(x in -0.45f64..0.45, y in -0.45f64..0.45, u in -0.45f64..0.45, v in -0.45f64..0.45) {
        for id in ["product-conj", "lagrangian-graph?f=sin&n=2", "hk-graph"] {
            let a = angle_data(&chart(id), &[x, y, u, v]).unwrap();
            prop_assert!(a.cos_spectrum.iter().all(|c| (0.0..=1.0).contains(c)));
            prop_assert!(a.cos_spectrum.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((a.form_norm2() - a.cos2_sum()).abs() < 1e-10);
            if a.kappa.is_finite() {
                prop_assert!((a.kappa - a.kappa_det).abs() < 1e-8 * (1.0 + a.kappa.abs()));
            }
        }
    }

    #[test]
    fn tilted_plane_cosine_is_cos_alpha(alpha in 0.05f64..1.5) {
        let a = angle_data(&chart(&format!("tilted-plane?alpha={alpha}&n=2")), &[0.0; 4]).unwrap();
        for c in &a.cos_spectrum {
            prop_assert!((c - alpha.cos()).abs() < 1e-12);
        }
    }
}
