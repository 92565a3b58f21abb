//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use kahler_core::angles::angle_data;
use kahler_core::flow::{discretize, run_flow, FlowParams};
use kahler_core::identities::{find_check, run_check, sample_point, IdentityReport};
use kahler_core::target::{make_hyperkahler_flat, j_from_sphere, SpherePoint};
use kahler_core::tensor::{det_path_derivatives, MatrixPath};
use kahler_core::{FdSettings, ImmersionChart};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C64 = Complex<f64>;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn chart(id: &str) -> ImmersionChart {
    ImmersionChart::from_id(id).unwrap()
}

/// Seeded check runs at `count` sample points.
fn sampled(check: &str, id: &str, count: u64, fd: FdSettings) -> Vec<IdentityReport> {
    let c = chart(id).with_fd(fd);
    let spec = find_check(check).unwrap();
    (0..count)
        .map(|k| {
            let p = sample_point(&c, spec, 0, k).unwrap();
            run_check(spec, &c, &p, 32, None)
        })
        .collect()
}

fn default_fd() -> FdSettings {
    FdSettings::new(1e-3, 4).unwrap()
}

fn criterion_1() -> Outcome {
    let a = angle_data(&chart(&format!("tilted-plane?alpha={}&n=1", PI / 3.0)), &[0.2, -0.4]).unwrap();
    let e1 = (a.cos_spectrum[0] - 0.5).abs();
    let b = angle_data(&chart("conj-curve?k=2"), &[0.3, 0.0]).unwrap();
    let e2 = (b.cos_spectrum[0] - 8.0 / 17.0).abs();
    outcome(e1 < 1e-12 && e2 < 1e-10, format!("tilted |Δcos| {e1:.1e}, conj-curve |Δcos| {e2:.1e}"))
}

fn criterion_2() -> Outcome {
    let ids = [
        "conj-curve?k=2",
        "conj-curve?k=3",
        "product-conj",
        "tilted-plane?alpha=0.9&n=2",
        "lagrangian-graph?f=cubic&n=2",
        "hk-graph",
        "hk-complex-plane?nu=1.1&phi=0.2",
        "torus-graph?eps=0.1&winding=tilted",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut count = 0;
    while count < 25 {
        let c = chart(ids[rng.gen_range(0..ids.len())]);
        let p: Vec<f64> = c.sample_box().iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        let Ok(a) = angle_data(&c, &p) else { continue };
        if a.cos_spectrum[0] >= 1.0 - 1e-6 {
            continue;
        }
        worst = worst.max((a.kappa - a.kappa_det).abs());
        count += 1;
    }
    outcome(worst < 1e-9, format!("max |κ − ½log det ratio| {worst:.1e} over 25 points"))
}

/// Taylor coefficient of s¹ (or s¹t¹) of a polynomial by a discrete Cauchy
/// integral on a circle of radius `r`.
fn contour_first(f: impl Fn(C64) -> C64, r: f64) -> C64 {
    let n = 32;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..n {
        let e = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
        acc += f(e * r) / e;
    }
    acc / (n as f64 * r)
}

fn contour_mixed(f: impl Fn(C64, C64) -> C64, r: f64) -> C64 {
    let n = 32;
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let a = C64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
        for k in 0..n {
            let b = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
            acc += f(a * r, b * r) / (a * b);
        }
    }
    acc / ((n * n) as f64 * r * r)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rand_c = |s: f64| C64::new(rng.gen_range(-s..s), rng.gen_range(-s..s));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = 4;
        let diag: Vec<C64> = (0..m).map(|_| rand_c(1.0) + C64::new(1.5, 0.0)).collect();
        let lin: Vec<DMatrix<C64>> = (0..2).map(|_| DMatrix::from_fn(m, m, |_, _| rand_c(0.6))).collect();
        let quad: Vec<DMatrix<C64>> = (0..3).map(|_| DMatrix::from_fn(m, m, |_, _| rand_c(0.3))).collect();
        let z = [rand_c(1.0), rand_c(1.0)];
        let w = [rand_c(1.0), rand_c(1.0)];
        let eval = {
            let (diag, lin, quad) = (diag.clone(), lin.clone(), quad.clone());
            move |x: [C64; 2]| -> DMatrix<C64> {
                let mut a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag.clone()));
                a += &lin[0] * x[0] + &lin[1] * x[1];
                a += &quad[0] * (x[0] * x[0]) + &quad[1] * (x[0] * x[1]) + &quad[2] * (x[1] * x[1]);
                a
            }
        };
        let real_eval = {
            let eval = eval.clone();
            move |x: &[f64]| eval([C64::new(x[0], 0.0), C64::new(x[1], 0.0)])
        };
        let path = MatrixPath::new(real_eval, vec![0.0, 0.0]).unwrap();
        let got = det_path_derivatives(&path, &z, &w).unwrap();
        let first = contour_first(|s| eval([z[0] * s, z[1] * s]).determinant(), 0.5);
        let second = contour_mixed(|s, t| eval([z[0] * s + w[0] * t, z[1] * s + w[1] * t]).determinant(), 0.5);
        worst = worst.max((got.first - first).norm() / first.norm());
        worst = worst.max((got.second - second).norm() / second.norm());
    }
    outcome(worst < 1e-7, format!("max relative error {worst:.1e} over 20 paths"))
}

fn criterion_4() -> Outcome {
    let reports = sampled("delta-kappa-wolfson", "conj-curve?k=2", 10, default_fd());
    let worst = reports.iter().map(|r| r.lhs.abs()).fold(0.0, f64::max);
    let all_pass = reports.iter().all(|r| r.verdict.is_pass());
    outcome(all_pass && worst < 1e-5, format!("max |Δκ| {worst:.1e} at 10 points"))
}

fn criterion_5() -> Outcome {
    let reports = sampled("delta-kappa-general", "product-conj", 5, default_fd());
    let c = chart("product-conj");
    let distinct = reports.iter().all(|r| angle_data(&c, &r.point).map_or(false, |a| a.spread() > 1e-3));
    let worst_rhs = reports.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    let worst_lhs = reports.iter().map(|r| r.lhs.abs()).fold(0.0, f64::max);
    let all_pass = reports.iter().all(|r| r.verdict.is_pass());
    outcome(
        distinct && all_pass && worst_rhs < 1e-4,
        format!("max |RHS| {worst_rhs:.1e}, max |Δκ| {worst_lhs:.1e}, distinct angles {distinct}"),
    )
}

fn criterion_6() -> Outcome {
    let w = sampled("weitzenbock", "conj-curve?k=2", 5, default_fd());
    let s = sampled("s-term-equality", "product-conj", 5, default_fd());
    let ww = w.iter().map(|r| r.residual_abs).fold(0.0, f64::max);
    let ss = s.iter().map(|r| r.residual_abs).fold(0.0, f64::max);
    let ok = w.iter().chain(&s).all(|r| r.verdict.is_pass()) && ww < 1e-5 && ss < 1e-6;
    outcome(ok, format!("weitzenbock {ww:.1e}, S-term expressions {ss:.1e}"))
}

fn criterion_7() -> Outcome {
    let reports = sampled("ricci-reconstruction", "clifford-cp2", 5, default_fd());
    let worst = reports.iter().map(|r| r.residual_abs).fold(0.0, f64::max);
    let ok = reports.iter().all(|r| r.verdict.is_pass()) && worst < 1e-6;
    outcome(ok, format!("max residual {worst:.1e} at 5 points"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut angle_err = 0.0f64;
    let spheres: Vec<SpherePoint> = (0..10).map(|_| SpherePoint::new(rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI))).collect();
    for s in &spheres {
        let c = chart(&format!("hk-complex-plane?nu={}&phi={}", s.nu, s.phi));
        let a = angle_data(&c, &[0.1, -0.2, 0.3, 0.05]).unwrap();
        for cos in &a.cos_spectrum {
            angle_err = angle_err.max((cos - s.nu.cos().abs()).abs());
        }
    }
    let (_, triple) = make_hyperkahler_flat(8).unwrap();
    let mut agree = true;
    let mut pairs = 0;
    for s in &spheres {
        let u = s.unit_vector();
        // one orthogonal partner and one generic partner per point
        let perp = SpherePoint::new(s.nu + PI / 2.0, s.phi);
        for t in [perp, spheres[(pairs + 3) % spheres.len()].clone()] {
            let v = t.unit_vector();
            let dot: f64 = (0..3).map(|i| u[i] * v[i]).sum();
            let ja = j_from_sphere(&triple, s);
            let jb = j_from_sphere(&triple, &t);
            let anti = (&ja * &jb + &jb * &ja).amax();
            agree &= (anti < 1e-12) == (dot.abs() < 1e-12);
            pairs += 1;
        }
    }
    outcome(angle_err < 1e-10 && agree, format!("max |cosθ − |cos ν|| {angle_err:.1e}; anticommutation ⇔ orthogonality on {pairs} pairs: {agree}"))
}

fn criterion_9() -> Outcome {
    let n1 = sampled("codifferential", "conj-curve?k=2", 5, default_fd());
    let dj = n1.iter().map(|r| r.details.get("codiff_jomega_norm").copied().unwrap_or(f64::NAN)).fold(0.0, f64::max);
    let n2 = [sampled("codifferential", "hk-graph", 5, default_fd()), sampled("codifferential", "hk-complex-plane", 2, default_fd())].concat();
    let dw = n2.iter().map(|r| r.lhs.abs()).fold(0.0, f64::max);
    let n3 = sampled("codifferential", "tilted-plane?alpha=0.6&n=3", 2, default_fd());
    let zero3 = n3.iter().all(|r| r.lhs.abs() < 1e-7 && r.rhs.abs() < 1e-7);
    let all_pass = n1.iter().chain(&n2).chain(&n3).all(|r| r.verdict.is_pass());
    outcome(
        all_pass && dj < 1e-7 && dw < 1e-7 && zero3,
        format!("n=1 |δJ_ω| {dj:.1e}; n=2 |δF*ω| {dw:.1e}; n=3 constant angle both sides zero: {zero3}"),
    )
}

fn criterion_10() -> Outcome {
    let d = discretize(&chart("torus-graph?eps=0.1&winding=lagrangian"), [32, 32]).unwrap();
    let params = FlowParams { max_steps: 2500, ..FlowParams::default() };
    let (trace, _) = match run_flow(d, params) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("flow error: {e}")),
    };
    let flat = 4.0 * PI * PI;
    let last = trace.last();
    let vol_err = (last.volume - flat).abs() / flat;
    let steps = last.step.max(1) as f64;
    let drift = trace.class_drift() * 1000.0 / steps;
    let ok = trace.volume_monotone() && vol_err < 1e-6 && last.max_cos < 1e-4 && drift < 1e-6;
    outcome(
        ok,
        format!(
            "{} steps, monotone {}, volume rel err {vol_err:.1e}, max cosθ {:.1e}, class drift {drift:.1e}/1000 steps, max|H| {:.1e}",
            last.step,
            trace.volume_monotone(),
            last.max_cos,
            last.max_mean_curvature
        ),
    )
}

fn criterion_11() -> Outcome {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_kal"))
            .args(["verify", "--checks", "delta-kappa-*", "--example", "conj-curve", "--example", "product-conj", "--seed", "7"])
            .env("KAL_THREADS", threads)
            .output()
            .unwrap()
    };
    let a = run("1");
    let b = run("4");
    let same = a.stdout == b.stdout && !a.stdout.is_empty();
    outcome(same && a.status.success(), format!("{} bytes, identical {same}, exit {}", a.stdout.len(), a.status))
}

#[test]
fn acceptance() {
    let criteria: [(u32, Duration, fn() -> Outcome); 11] = [
        (1, Duration::from_secs(1), criterion_1),
        (2, Duration::from_secs(5), criterion_2),
        (3, Duration::from_secs(5), criterion_3),
        (4, Duration::from_secs(10), criterion_4),
        (5, Duration::from_secs(60), criterion_5),
        (6, Duration::from_secs(30), criterion_6),
        (7, Duration::from_secs(10), criterion_7),
        (8, Duration::from_secs(5), criterion_8),
        (9, Duration::from_secs(60), criterion_9),
        (10, Duration::from_secs(120), criterion_10),
        (11, Duration::from_secs(60), criterion_11),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (n, budget, f) in criteria {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let ok = o.ok && took <= budget;
        if !ok {
            failed.push(n);
        }
        let label = if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{label} criterion {n}: {} ({:.2} s, budget {} s)", o.detail, took.as_secs_f64(), budget.as_secs());
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
