use std::f64::consts::PI;

use kahler_core::angles::angle_data;
use kahler_core::immersion::{
    domain_curvature, first_fundamental, mean_curvature_norm, second_fundamental, shape_operator,
};
use kahler_core::{ImmersionChart, JetMode};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CATALOG: &[&str] = &[
    "tilted-plane?alpha=0.7&n=2",
    "complex-line",
    "lagrangian-plane",
    "conj-curve?k=2",
    "conj-curve?k=3",
    "product-conj",
    "clifford-cp2",
    "lagrangian-graph?f=cubic&eps=0.3",
    "lagrangian-graph?f=sin&n=2",
    "hk-complex-plane",
    "hk-graph",
    "torus-graph?eps=0.1",
];

fn sample(chart: &ImmersionChart, rng: &mut ChaCha8Rng) -> Vec<f64> {
    chart.sample_box().iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
}

#[test]
fn linear_example_has_no_second_derivatives() {
    let c = ImmersionChart::from_id("tilted-plane?alpha=1.1&n=2").unwrap();
    let jets = c.evaluate_jets(&[0.2, -0.3, 0.5, 0.1], 3).unwrap();
    assert!(jets.second.iter().flatten().all(|v| v.amax() == 0.0));
    let pg = first_fundamental(&c, &[0.2, -0.3, 0.5, 0.1]).unwrap();
    assert!((pg.g_m.matrix() - DMatrix::identity(4, 4)).amax() < 1e-15);
    let sf = second_fundamental(&c, &pg).unwrap();
    assert!(sf.nabla_df.iter().flatten().all(|v| v.amax() < 1e-12));
    assert!(sf.mean_curvature.amax() < 1e-12);
}

#[test]
fn finite_difference_jets_track_analytic_jets() {
    let analytic = ImmersionChart::from_id("conj-curve?k=2").unwrap();
    let fd = analytic.clone().with_jet_mode(JetMode::FiniteDifference);
    let p = [0.3, -0.1];
    let a = analytic.evaluate_jets(&p, 3).unwrap();
    let b = fd.evaluate_jets(&p, 3).unwrap();
    let mut worst = (&a.first - &b.first).amax();
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((&a.second[i][j] - &b.second[i][j]).amax());
            for k in 0..2 {
                worst = worst.max((&a.third[i][j][k] - &b.third[i][j][k]).amax());
            }
        }
    }
    assert!(worst < 1e-7, "jet discrepancy {worst:e}");
}

#[test]
fn conj_curve_metric_is_conformal() {
    let c = ImmersionChart::from_id("conj-curve?k=2").unwrap();
    for (x, y) in [(0.3, 0.0), (0.1, -0.25), (-0.2, 0.15)] {
        let r2: f64 = x * x + y * y;
        let g = c.induced_metric(&[x, y]).unwrap();
        assert!((g.matrix() - DMatrix::identity(2, 2) * (1.0 + 4.0 * r2)).amax() < 1e-10);
    }
}

#[test]
fn clifford_metric_matches_a_direct_pullback() {
    let c = ImmersionChart::from_id("clifford-cp2").unwrap();
    let p = [0.2, -0.1];
    let h = 1e-5;
    let col = |i: usize| {
        let mut a = p;
        let mut b = p;
        a[i] += h;
        b[i] -= h;
        (c.eval(&a) - c.eval(&b)) / (2.0 * h)
    };
    let df = DMatrix::from_columns(&[col(0), col(1)]);
    let gn = c.target().metric(c.eval(&p).as_slice());
    let direct = df.transpose() * gn * &df;
    let g = c.induced_metric(&p).unwrap();
    assert!((g.matrix() - &direct).amax() < 1e-8);
}

#[test]
fn minimal_examples_have_vanishing_mean_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in ["conj-curve?k=2", "conj-curve?k=3", "product-conj", "clifford-cp2", "hk-graph"] {
        let c = ImmersionChart::from_id(id).unwrap();
        for _ in 0..5 {
            let p = sample(&c, &mut rng);
            let h = mean_curvature_norm(&c, &p).unwrap();
            assert!(h < 1e-8, "{id}: |H| = {h:e}");
        }
    }
    let c = ImmersionChart::from_id("product-conj").unwrap();
    let pg = first_fundamental(&c, &[0.3, 0.0, 0.0, 0.4]).unwrap();
    let sf = second_fundamental(&c, &pg).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((&sf.nabla_df[i][j] - &sf.nabla_df[j][i]).amax() < 1e-10);
        }
    }
}

#[test]
fn normal_projector_is_an_orthogonal_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for id in CATALOG {
        let c = ImmersionChart::from_id(id).unwrap();
        let p = sample(&c, &mut rng);
        let pg = first_fundamental(&c, &p).unwrap();
        let pr = &pg.normal_projector;
        assert!((pr * pr - pr).amax() < 1e-12, "{id}");
        assert!((pr * &pg.df).amax() < 1e-12, "{id}");
        assert!((&pg.g_n * pr - pr.transpose() * &pg.g_n).amax() < 1e-12, "{id}");
    }
}

#[test]
fn shape_operators_are_symmetric() {
    let c = ImmersionChart::from_id("conj-curve?k=2").unwrap();
    let p = [0.3, 0.1];
    let pg = first_fundamental(&c, &p).unwrap();
    let sf = second_fundamental(&c, &pg).unwrap();
    let phi = angle_data(&c, &p).unwrap().phi();
    let u: DVector<f64> = phi.column(0).into_owned();
    let a = shape_operator(&sf, &pg, &u).unwrap();
    let lowered = pg.g_m.matrix() * &a;
    assert!((&lowered - lowered.transpose()).amax() < 1e-10);

    let plane = ImmersionChart::from_id("tilted-plane?alpha=0.4&n=1").unwrap();
    let pg = first_fundamental(&plane, &[0.1, 0.2]).unwrap();
    let sf = second_fundamental(&plane, &pg).unwrap();
    let u: DVector<f64> = (&pg.normal_projector * DVector::from_element(4, 1.0)).into_owned();
    assert!(shape_operator(&sf, &pg, &u).unwrap().amax() < 1e-12);
}

#[test]
fn shape_operators_anticommute_with_the_pullback_form_on_a_complex_plane() {
    let c = ImmersionChart::from_id("hk-complex-plane?nu=0.9&phi=0.3").unwrap();
    let p = [0.1, 0.2, -0.3, 0.4];
    let pg = first_fundamental(&c, &p).unwrap();
    let sf = second_fundamental(&c, &pg).unwrap();
    let w = angle_data(&c, &p).unwrap().operator.components;
    for k in 0..8 {
        let e = DVector::from_fn(8, |r, _| if r == k { 1.0 } else { 0.0 });
        let u = &pg.normal_projector * e;
        let a = shape_operator(&sf, &pg, &u).unwrap();
        assert!((&w * &a + &a * &w).amax() < 1e-8);
    }
}

#[test]
fn conj_curve_gaussian_curvature() {
    let c = ImmersionChart::from_id("conj-curve?k=2").unwrap();
    let p = [0.3, 0.0];
    let data = domain_curvature(&c, &p).unwrap();
    let lambda: f64 = 1.0 + 4.0 * 0.09;
    // K = −Δ log λ / (2λ) with Δ log(1 + 4r²) = 16/(1 + 4r²)²
    let k = -8.0 / lambda.powi(3);
    let sec = data.rm_fd.get(0, 1, 0, 1) / (lambda * lambda);
    assert!((sec - k).abs() < 1e-6, "K = {sec} vs {k}");
}

#[test]
fn product_curvature_splits_across_factors() {
    let c = ImmersionChart::from_id("product-conj").unwrap();
    let data = domain_curvature(&c, &[0.3, 0.1, -0.2, 0.25]).unwrap();
    let side = |i: usize| i / 2;
    let mut worst = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            for e in 0..4 {
                for f in 0..4 {
                    let s = [side(a), side(b), side(e), side(f)];
                    if s.iter().all(|x| *x == s[0]) {
                        continue;
                    }
                    worst = worst.max(data.rm_fd.get(a, b, e, f).abs());
                }
            }
        }
    }
    assert!(worst < 1e-8, "mixed curvature {worst:e}");
}

#[test]
fn intrinsic_and_gauss_curvature_agree_across_the_catalog() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for id in CATALOG {
        let c = ImmersionChart::from_id(id).unwrap();
        for _ in 0..10 {
            let p = sample(&c, &mut rng);
            let data = domain_curvature(&c, &p).unwrap_or_else(|e| panic!("{id} at {p:?}: {e}"));
            let gap = data.rm_fd.max_abs_diff(&data.rm_gauss);
            assert!(gap < 1e-7, "{id}: {gap:e}");
        }
    }
}

#[test]
fn torus_graph_wraps_by_its_winding() {
    for w in ["lagrangian", "tilted", "holomorphic"] {
        let c = ImmersionChart::from_id(&format!("torus-graph?eps=0.1&winding={w}")).unwrap();
        let per = c.periodicity().unwrap();
        let p = [0.4, -1.3];
        let moved = c.eval(&[0.4 + 2.0 * PI, -1.3]);
        assert!((moved - c.eval(&p) - per.translations.column(0)).amax() < 1e-12);
    }
}

#[test]
fn unknown_ids_and_parameters_are_rejected() {
    assert!(ImmersionChart::from_id("no-such-surface").is_err());
    assert!(ImmersionChart::from_id("conj-curve?q=1").is_err());
    assert!(ImmersionChart::from_id("tilted-plane?n=0").is_err());
}
