//! Named checks, their applicability flags and tolerances.

use glob::Pattern;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::support::Outcome;
use super::{delta_kappa, first_order, hyperkahler, quadrature, weitzenbock};
use super::{IdentityReport, OracleMeta};
use crate::angles::angle_data;
use crate::error::{KalError, Result};
use crate::immersion::ImmersionChart;

/// What a check is evaluated at.
pub struct CheckInput<'a> {
    pub chart: &'a ImmersionChart,
    pub p: &'a [f64],
    /// Nodes per axis for domain integrals.
    pub grid: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    FirstOrder,
    Weitzenbock,
    DeltaKappa,
    HyperKahler,
    Quadrature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// Evaluated at sampled points.
    Pointwise,
    /// Evaluated once over the fundamental domain of a periodic immersion.
    Torus,
}

pub type CheckFn = fn(&CheckInput) -> Result<Outcome>;

#[derive(Clone, Serialize)]
pub struct CheckSpec {
    pub id: &'static str,
    pub family: Family,
    /// The identity in words.
    pub statement: &'static str,
    /// Number of displayed terms on the right-hand side.
    pub term_count: usize,
    pub tolerance: f64,
    pub lhs: &'static str,
    pub rhs: &'static str,
    pub domain: Domain,
    /// Sampling avoids points with a complex direction.
    pub avoid_complex: bool,
    /// Sampling avoids points with a Lagrangian direction.
    pub avoid_lagrangian: bool,
    #[serde(skip)]
    pub(crate) run: CheckFn,
}

impl std::fmt::Debug for CheckSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheckSpec").field("id", &self.id).field("tolerance", &self.tolerance).finish()
    }
}

#[allow(clippy::too_many_arguments)]
const fn spec(
    id: &'static str,
    family: Family,
    statement: &'static str,
    term_count: usize,
    tolerance: f64,
    lhs: &'static str,
    rhs: &'static str,
    avoid: (bool, bool),
    run: CheckFn,
) -> CheckSpec {
    let domain = match family {
        Family::Quadrature => Domain::Torus,
        _ => Domain::Pointwise,
    };
    CheckSpec {
        id,
        family,
        statement,
        term_count,
        tolerance,
        lhs,
        rhs,
        domain,
        avoid_complex: avoid.0,
        avoid_lagrangian: avoid.1,
        run,
    }
}

use Family::*;

static REGISTRY: &[CheckSpec] = &[
    spec(
        "ricci-reconstruction",
        FirstOrder,
        "Ric^N(U,V) = Σ_μ 4/sin²θ_μ R^N(U, JV, dF(Z_μ), (J dF(Z̄_μ))^⊥)",
        1,
        1e-6,
        "Frobenius norm of Ric^N",
        "Frobenius norm of the frame sum",
        (true, false),
        first_order::ricci_reconstruction,
    ),
    spec(
        "nabla-pullback",
        FirstOrder,
        "∇_Z F*ω(X,Y) = −g(∇dF(Z,X), J dF(Y)) + g(∇dF(Z,Y), J dF(X))",
        2,
        1e-7,
        "finite-difference covariant derivative of F*ω",
        "second fundamental form contraction",
        (false, false),
        first_order::nabla_pullback,
    ),
    spec(
        "torsion-lemma",
        FirstOrder,
        "Φ T′(Z_α,Z_β) = i(cosθ_α − cosθ_β)∇dF(Z_α,Z_β), Φ T′(Z_α,Z̄_β) = i(cosθ_α + cosθ_β)∇dF(Z_α,Z̄_β)",
        2,
        1e-7,
        "Φ of the torsion of the pulled-back normal connection",
        "angle-weighted second fundamental form",
        (true, false),
        first_order::torsion_lemma,
    ),
    spec(
        "grad-logsin",
        FirstOrder,
        "Φ((1−n)/4 ∇log sin²θ) = 4cosθ/sin²θ Re(i Σ_{β,μ}(g_{μ̄μβ} − g_{μ̄βμ}) Φ(Z̄_β))",
        1,
        1e-7,
        "Φ of the finite-difference gradient of log sin²θ",
        "frame contraction of ∇dF",
        (true, true),
        first_order::grad_logsin,
    ),
    spec(
        "codifferential",
        FirstOrder,
        "δF*ω = (n−2) J_ω∇cosθ and cosθ δJ_ω = (n−1) J_ω∇cosθ",
        1,
        1e-7,
        "codifferential of F*ω",
        "(n−2) J_ω∇cosθ",
        (true, true),
        first_order::codifferential_check,
    ),
    spec(
        "norm-split",
        FirstOrder,
        "‖∇F*ω‖² = 2n‖∇cosθ‖² + cos²θ‖∇J_ω‖²",
        2,
        1e-6,
        "‖∇F*ω‖² as an endomorphism",
        "2n‖∇cosθ‖² + cos²θ‖∇J_ω‖²",
        (true, true),
        first_order::norm_split,
    ),
    spec(
        "gtilde-derivative",
        FirstOrder,
        "dg̃_{μγ̄}(Z) = i g_{Zμγ̄} − i g_{Zγ̄μ} + 2Σ_ρ(⟨∇_Z μ, ρ̄⟩ g̃_{ργ̄} + ⟨∇_Z γ̄, ρ⟩ g̃_{μρ̄})",
        4,
        1e-7,
        "finite-difference derivative of g̃ in the frame field",
        "second fundamental form and frame connection",
        (true, false),
        first_order::gtilde_derivative,
    ),
    spec(
        "trace-difference",
        FirstOrder,
        "¼ g^{ij}(Γ̂ − Γ)^k_ij = (1−n)/4 ∇log sin²θ",
        1,
        1e-7,
        "trace of the difference of the ĝ and g_M connections",
        "(1−n)/4 ∇log sin²θ",
        (true, true),
        first_order::trace_difference,
    ),
    spec(
        "s-term-equality",
        Weitzenbock,
        "Σ4cos²θ_μ Ric^M(μ,μ̄) + Σ8cosθ_μcosθ_ρ R^M(ρ,ρ̄,μ,μ̄) = Σ4(cosθ_μ+cosθ_ρ)²R^M(ρ,μ,ρ̄,μ̄) + 4(cosθ_μ−cosθ_ρ)²R^M(ρ̄,μ,ρ,μ̄)",
        4,
        1e-6,
        "Ricci form of ⟨SF*ω, F*ω⟩",
        "sectional form of ⟨SF*ω, F*ω⟩",
        (true, false),
        weitzenbock::s_term_equality,
    ),
    spec(
        "s-term-equal-angle",
        Weitzenbock,
        "⟨SF*ω, F*ω⟩ = 16cos²θ Σ R^M(ρ,μ,ρ̄,μ̄)",
        1,
        1e-6,
        "curvature action on F*ω",
        "16cos²θ Σ R^M(ρ,μ,ρ̄,μ̄)",
        (true, false),
        weitzenbock::s_term_equal_angle,
    ),
    spec(
        "weitzenbock",
        Weitzenbock,
        "½Δ‖F*ω‖² = −⟨ΔF*ω, F*ω⟩ + ‖∇F*ω‖² + ⟨SF*ω, F*ω⟩",
        3,
        1e-5,
        "finite-difference Laplacian of ‖F*ω‖²",
        "Hodge, rough and curvature terms",
        (false, false),
        weitzenbock::weitzenbock,
    ),
    spec(
        "isotropic-scalar",
        Weitzenbock,
        "Σ_{ρ≠μ} R(z_ρ,z_μ,z̄_ρ,z̄_μ)/‖z_ρ∧z_μ‖² = 4Σ R(ρ,μ,ρ̄,μ̄)",
        1,
        1e-6,
        "normalized isotropic sectional sum of the intrinsic curvature",
        "hermitian trace from the Gauss equation",
        (false, false),
        weitzenbock::isotropic_scalar,
    ),
    spec(
        "codiff-norm",
        Weitzenbock,
        "‖δF*ω‖² = (n−2)²‖∇cosθ‖²",
        1,
        1e-6,
        "‖δF*ω‖²",
        "(n−2)²‖∇cosθ‖²",
        (true, true),
        weitzenbock::codiff_norm,
    ),
    spec(
        "parallel-consequences",
        Weitzenbock,
        "∇F*ω = 0 implies constant Kähler angles and harmonic F*ω",
        1,
        1e-7,
        "largest ‖∇cosθ_α‖",
        "0",
        (false, false),
        weitzenbock::parallel_consequences,
    ),
    spec(
        "delta-kappa-general",
        DeltaKappa,
        "Δκ = 4iΣRic^N(JdFβ,dFβ̄) + ΣIm R^N-term + Σ g g-term + Σ|g|²-term + Σ|⟨∇μ,ρ⟩|²-term",
        5,
        1e-4,
        "finite-difference Laplacian of κ",
        "five-group frame formula",
        (true, false),
        delta_kappa::delta_kappa_general,
    ),
    spec(
        "delta-kappa-equal",
        DeltaKappa,
        "Δκ = cosθ(−2nR + 32/sin²θ ΣR^M(β,μ,β̄,μ̄) + ‖∇J_ω‖²/sin²θ + 8(n−1)/sin⁴θ ‖∇cosθ‖²)",
        4,
        1e-5,
        "finite-difference Laplacian of κ",
        "equal-angle formula",
        (true, true),
        delta_kappa::delta_kappa_equal,
    ),
    spec(
        "delta-kappa-wolfson",
        DeltaKappa,
        "Δκ = −2R cosθ for minimal surfaces",
        1,
        1e-5,
        "finite-difference Laplacian of κ",
        "−2R cosθ",
        (true, false),
        delta_kappa::delta_kappa_wolfson,
    ),
    spec(
        "delta-kappa-pluriminimal",
        DeltaKappa,
        "Δκ = −2R Σ_β cosθ_β for pluriminimal immersions",
        1,
        1e-5,
        "finite-difference Laplacian of κ",
        "−2R Σ cosθ_β",
        (true, true),
        delta_kappa::delta_kappa_pluriminimal,
    ),
    spec(
        "cos2-chain",
        DeltaKappa,
        "nΔcos²θ = −2n sin²θcos²θ R + 2⟨SF*ω,F*ω⟩ + 2‖∇F*ω‖² + 4(n−2)cos²θ/sin²θ ‖∇cosθ‖²",
        4,
        1e-5,
        "finite-difference Laplacian of n cos²θ",
        "curvature and gradient terms",
        (true, true),
        delta_kappa::cos2_chain,
    ),
    spec(
        "gauss-holsec",
        DeltaKappa,
        "Σ R^M(μ,ρ,μ̄,ρ̄) = n(n−1)/16 sin²θ K − Σ‖∇dF(μ,ρ̄)‖²",
        2,
        1e-6,
        "intrinsic hermitian curvature sum",
        "holomorphic curvature and second fundamental form",
        (false, false),
        delta_kappa::gauss_holsec,
    ),
    spec(
        "anticommute-criterion",
        HyperKahler,
        "J_s J_t + J_t J_s = −2⟨s,t⟩ Id, so J_s and J_t anticommute iff s ⊥ t in ℝ³",
        1,
        1e-12,
        "max |J_sJ_t + J_tJ_s|",
        "2|⟨s,t⟩|",
        (false, false),
        hyperkahler::anticommute_criterion,
    ),
    spec(
        "angle-between-structures",
        HyperKahler,
        "a J_s-complex plane has cosθ = |⟨s,t⟩| with respect to J_t",
        1,
        1e-10,
        "largest cosθ for J_t",
        "|⟨s,t⟩|",
        (false, false),
        hyperkahler::angle_between_structures,
    ),
    spec(
        "complex-plane-angles",
        HyperKahler,
        "F*ω_I = cos ν J_{νφ} on a J_{νφ}-complex plane",
        1,
        1e-10,
        "max |A_I|",
        "max |cos ν · J_{νφ}| restricted",
        (false, false),
        hyperkahler::complex_plane_angles,
    ),
    spec(
        "normal-bundle-angles",
        HyperKahler,
        "ω restricted to NM has the Kähler angles of F, and Φ J_ω = −J_NM Φ",
        1,
        1e-8,
        "Σ cosθ_α of F",
        "Σ cosθ_α of NM",
        (false, false),
        hyperkahler::normal_bundle_angles,
    ),
    spec(
        "integral-weitzenbock",
        Quadrature,
        "∫‖δF*ω‖² = ∫‖∇F*ω‖² + ⟨SF*ω, F*ω⟩ over a closed M",
        3,
        1e-4,
        "∫‖δF*ω‖²",
        "∫‖∇F*ω‖² + ⟨SF*ω, F*ω⟩",
        (false, false),
        quadrature::integral_weitzenbock,
    ),
    spec(
        "integral-n2",
        Quadrature,
        "∫ nR sin²θcos²θ Vol_M = 0 for n = 2",
        1,
        1e-8,
        "∫ nR sin²θcos²θ",
        "0",
        (false, false),
        quadrature::integral_n2,
    ),
    spec(
        "integral-n3",
        Quadrature,
        "∫ nR sin²θcos²θ = ∫ (n−2)(n−2+2cot²θ)‖∇cosθ‖² for n ≥ 3",
        1,
        1e-8,
        "∫ nR sin²θcos²θ",
        "∫ (n−2)(n−2+2cot²θ)‖∇cosθ‖²",
        (false, false),
        quadrature::integral_n3,
    ),
];

pub fn registry() -> &'static [CheckSpec] {
    REGISTRY
}

pub fn find_check(id: &str) -> Result<&'static CheckSpec> {
    REGISTRY.iter().find(|c| c.id == id).ok_or_else(|| KalError::UnknownId(id.to_string()))
}

/// Checks whose id matches the glob, in registry order.
pub fn select_checks(pattern: &str) -> Result<Vec<&'static CheckSpec>> {
    let pat = Pattern::new(pattern).map_err(|e| KalError::Config(format!("bad check glob '{pattern}': {e}")))?;
    let out: Vec<_> = REGISTRY.iter().filter(|c| pat.matches(c.id)).collect();
    if out.is_empty() {
        return Err(KalError::UnknownId(pattern.to_string()));
    }
    Ok(out)
}

fn jets_label(chart: &ImmersionChart) -> &'static str {
    chart.jet_mode.label()
}

/// Evaluates one check; errors that mean "not applicable here" become skips.
pub fn run_check(spec: &CheckSpec, chart: &ImmersionChart, p: &[f64], grid: usize, tolerance: Option<f64>) -> IdentityReport {
    let tol = tolerance.unwrap_or(spec.tolerance);
    let oracle = OracleMeta::fd(&chart.fd, jets_label(chart));
    let point = p.to_vec();
    let input = CheckInput { chart, p, grid };
    let report = match (spec.run)(&input) {
        Ok(Outcome::Judged { lhs, rhs, secondary, details }) => {
            let mut r = IdentityReport::judged(spec.id, point, lhs, rhs, secondary, tol, oracle);
            for (k, v) in details {
                r = r.with_detail(k, v);
            }
            r
        }
        Ok(Outcome::Skip(reason)) => IdentityReport::skipped(spec.id, point, tol, reason, oracle),
        Err(e @ KalError::AngleCrossing { .. }) => {
            IdentityReport::skipped(spec.id, point, tol, format!("angle crossing: {e}"), oracle)
        }
        Err(KalError::SingularPhi) => IdentityReport::skipped(spec.id, point, tol, "complex direction present", oracle),
        Err(KalError::Aperiodic) => IdentityReport::skipped(spec.id, point, tol, KalError::Aperiodic.to_string(), oracle),
        Err(e) => IdentityReport::judged(spec.id, point, f64::NAN, f64::NAN, f64::NAN, tol, oracle).with_note(e.to_string()),
    };
    report.with_example(&chart.id)
}

/// A seeded sample point avoiding the loci the check cannot handle; on
/// failure, the reason the last draw was rejected.
pub fn sample_point(chart: &ImmersionChart, spec: &CheckSpec, seed: u64, index: u64) -> std::result::Result<Vec<f64>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let bounds = chart.sample_box();
    let mut reason = String::from("no valid chart point");
    for _ in 0..100 {
        let p: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect();
        if !spec.avoid_complex && !spec.avoid_lagrangian {
            return Ok(p);
        }
        let data = match angle_data(chart, &p) {
            Ok(d) => d,
            Err(e) => {
                reason = e.to_string();
                continue;
            }
        };
        if spec.avoid_complex && data.has_complex_direction() {
            reason = "complex direction present".into();
            continue;
        }
        if spec.avoid_lagrangian && data.polar.rank < data.dim() {
            reason = "Lagrangian direction present".into();
            continue;
        }
        return Ok(p);
    }
    Err(format!("{reason} at every one of 100 draws"))
}
