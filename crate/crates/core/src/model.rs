//! Model definition: dimensionless parameters, the nonlinear diffusivity and
//! bistable reaction, the cubic potential, and the classification of
//! equilibria, critical-manifold branches and folded singularities that the
//! rest of the crate builds on.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Poly;

/// Absolute tolerance for "equals zero" decisions in classification logic.
pub const CLASSIFY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter invariant violated: {0}")]
    InvalidParams(String),
}

/// Dimensionless parameters of the regularised model in the travelling frame.
///
/// The lumped parameter `delta = a * c` is always recomputed via
/// [`ModelParams::delta`], never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(try_from = "ModelParamsRaw")]
pub struct ModelParams {
    /// Diffusivity amplitude, > 0.
    pub beta: f64,
    /// Smaller diffusivity root, 0 < gamma1 < gamma2.
    pub gamma1: f64,
    /// Larger diffusivity root, gamma2 < 1.
    pub gamma2: f64,
    /// Middle reaction root, 0 < alpha < 1.
    pub alpha: f64,
    /// Reaction rate, > 0.
    pub kappa: f64,
    /// Viscous-relaxation weight, >= 0.
    pub a: f64,
    /// Wavespeed.
    pub c: f64,
    /// Singular perturbation parameter, >= 0.
    pub eps: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParamsRaw {
    beta: f64,
    gamma1: f64,
    gamma2: f64,
    alpha: f64,
    kappa: f64,
    a: f64,
    c: f64,
    eps: f64,
}

impl TryFrom<ModelParamsRaw> for ModelParams {
    type Error = ModelError;
    fn try_from(r: ModelParamsRaw) -> Result<Self, ModelError> {
        ModelParams::new(r.beta, r.gamma1, r.gamma2, r.alpha, r.kappa, r.a, r.c, r.eps)
    }
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta: f64,
        gamma1: f64,
        gamma2: f64,
        alpha: f64,
        kappa: f64,
        a: f64,
        c: f64,
        eps: f64,
    ) -> Result<Self, ModelError> {
        let p = Self { beta, gamma1, gamma2, alpha, kappa, a, c, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: &str| Err(ModelError::InvalidParams(msg.to_string()));
        if !(self.gamma1 > 0.0 && self.gamma1 < self.gamma2 && self.gamma2 < 1.0) {
            return fail("requires 0 < gamma1 < gamma2 < 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("requires 0 < alpha < 1");
        }
        if !(self.kappa > 0.0) {
            return fail("requires kappa > 0");
        }
        if !(self.beta > 0.0) {
            return fail("requires beta > 0");
        }
        if !(self.a >= 0.0) {
            return fail("requires a >= 0");
        }
        if !(self.eps >= 0.0) {
            return fail("requires eps >= 0");
        }
        if !self.c.is_finite() {
            return fail("requires finite c");
        }
        Ok(())
    }

    /// Lumped parameter delta = a * c.
    pub fn delta(&self) -> f64 {
        self.a * self.c
    }

    pub fn with_c(&self, c: f64) -> Self {
        Self { c, ..*self }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..*self }
    }

    pub fn with_a(&self, a: f64) -> Self {
        Self { a, ..*self }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }
}

/// D(u) = beta (u - gamma1)(u - gamma2).
pub fn diffusivity(u: f64, p: &ModelParams) -> f64 {
    p.beta * (u - p.gamma1) * (u - p.gamma2)
}

/// D'(u).
pub fn diffusivity_prime(u: f64, p: &ModelParams) -> f64 {
    p.beta * (2.0 * u - p.gamma1 - p.gamma2)
}

/// Potential Phi(u) = beta u (u^2/3 - (gamma1+gamma2) u / 2 + gamma1 gamma2),
/// the antiderivative of D normalised by Phi(0) = 0.
pub fn potential(u: f64, p: &ModelParams) -> f64 {
    p.beta * u * (u * u / 3.0 - 0.5 * (p.gamma1 + p.gamma2) * u + p.gamma1 * p.gamma2)
}

/// Antiderivative of the potential with Psi(0) = 0 (used by the layer
/// Hamiltonian).
pub fn potential_antiderivative(u: f64, p: &ModelParams) -> f64 {
    p.beta
        * u
        * u
        * (u * u / 12.0 - (p.gamma1 + p.gamma2) * u / 6.0 + 0.5 * p.gamma1 * p.gamma2)
}

/// Bistable reaction f(u) = kappa u (u - alpha)(1 - u).
pub fn reaction(u: f64, p: &ModelParams) -> f64 {
    p.kappa * u * (u - p.alpha) * (1.0 - u)
}

/// f'(u).
pub fn reaction_prime(u: f64, p: &ModelParams) -> f64 {
    p.kappa * (-3.0 * u * u + 2.0 * (1.0 + p.alpha) * u - p.alpha)
}

/// D(u) f(u) as an expanded polynomial (for exact antiderivatives).
pub fn df_poly(p: &ModelParams) -> Poly {
    let d = Poly::from_roots(p.beta, &[p.gamma1, p.gamma2]);
    let f = Poly::from_roots(-p.kappa, &[0.0, p.alpha, 1.0]);
    d.mul(&f)
}

/// Inflection point of the cubic potential.
pub fn inflection(p: &ModelParams) -> f64 {
    0.5 * (p.gamma1 + p.gamma2)
}

/// Critical-manifold branch labels, split at the diffusivity roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchTag {
    SslLeft,
    FoldLeft,
    Middle,
    FoldRight,
    SsrRight,
}

/// Branch membership of a point on the critical manifold together with the
/// two nontrivial layer eigenvalues (roots of mu^2 + delta mu - D(u) = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldBranch {
    pub tag: BranchTag,
    pub layer_eigs: (Complex64, Complex64),
}

/// Classify a density value against the critical-manifold splitting.
pub fn classify_branch(u: f64, p: &ModelParams) -> ManifoldBranch {
    let tag = if (u - p.gamma1).abs() <= CLASSIFY_TOL {
        BranchTag::FoldLeft
    } else if (u - p.gamma2).abs() <= CLASSIFY_TOL {
        BranchTag::FoldRight
    } else if u < p.gamma1 {
        BranchTag::SslLeft
    } else if u < p.gamma2 {
        BranchTag::Middle
    } else {
        BranchTag::SsrRight
    };
    let delta = p.delta();
    let d = diffusivity(u, p);
    let disc = delta * delta + 4.0 * d;
    let layer_eigs = if disc >= 0.0 {
        let s = disc.sqrt();
        (
            Complex64::new(0.5 * (-delta + s), 0.0),
            Complex64::new(0.5 * (-delta - s), 0.0),
        )
    } else {
        let s = (-disc).sqrt();
        (
            Complex64::new(-0.5 * delta, 0.5 * s),
            Complex64::new(-0.5 * delta, -0.5 * s),
        )
    };
    ManifoldBranch { tag, layer_eigs }
}

/// Stability type of a reduced-problem equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Saddle,
    StableNode,
    StableFocus,
    UnstableNode,
    UnstableFocus,
    Centre,
}

/// Which equilibrium of the desingularised problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumId {
    PMinus,
    PPlus,
    PB,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumInfo {
    pub location: (f64, f64),
    pub kind: EquilibriumKind,
    pub which: EquilibriumId,
}

fn classify_planar(c: f64, det: f64) -> EquilibriumKind {
    if det < -CLASSIFY_TOL {
        return EquilibriumKind::Saddle;
    }
    if c.abs() <= CLASSIFY_TOL {
        return EquilibriumKind::Centre;
    }
    let disc = c * c - 4.0 * det;
    match (c > 0.0, disc > 0.0) {
        (true, true) => EquilibriumKind::StableNode,
        (true, false) => EquilibriumKind::StableFocus,
        (false, true) => EquilibriumKind::UnstableNode,
        (false, false) => EquilibriumKind::UnstableFocus,
    }
}

/// The three equilibria of the desingularised problem with their types
/// (trace = -c, det = D(u) f'(u)).
pub fn classify_equilibria(p: &ModelParams) -> Vec<EquilibriumInfo> {
    let entries = [
        (1.0, EquilibriumId::PMinus),
        (0.0, EquilibriumId::PPlus),
        (p.alpha, EquilibriumId::PB),
    ];
    entries
        .iter()
        .map(|&(u, which)| {
            let det = diffusivity(u, p) * reaction_prime(u, p);
            EquilibriumInfo {
                location: (u, -p.c * u),
                kind: classify_planar(p.c, det),
                which,
            }
        })
        .collect()
}

/// Folded-singularity type on a fold line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldedKind {
    FoldedSaddle,
    FoldedNode,
    FoldedFocus,
    FsnII,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedSingularityInfo {
    pub location: (f64, f64),
    pub kind: FoldedKind,
}

/// The two folded singularities at (gamma_i, -c gamma_i), classified by
/// det = D'(u_f) f(u_f).
pub fn classify_folded_singularities(p: &ModelParams) -> Vec<FoldedSingularityInfo> {
    [p.gamma1, p.gamma2]
        .iter()
        .map(|&uf| {
            let det = diffusivity_prime(uf, p) * reaction(uf, p);
            let kind = if det.abs() <= CLASSIFY_TOL {
                FoldedKind::FsnII
            } else if det < 0.0 {
                FoldedKind::FoldedSaddle
            } else if p.c * p.c - 4.0 * det > 0.0 {
                FoldedKind::FoldedNode
            } else {
                FoldedKind::FoldedFocus
            };
            FoldedSingularityInfo { location: (uf, -p.c * uf), kind }
        })
        .collect()
}

/// Set A, the running example of the fast-shock construction
/// (beta = 6, gamma1 = 7/12, gamma2 = 3/4, kappa = 5, alpha = 1/5).
pub fn set_a() -> ModelParams {
    ModelParams::new(6.0, 7.0 / 12.0, 0.75, 0.2, 5.0, 0.0, 0.0, 0.0).unwrap()
}

/// Symmetric standing-wave parameter set
/// (beta = 6, kappa = 5, gamma1 = 1/4, gamma2 = 3/4, alpha = 1/2, c = 0).
pub fn symmetric_set() -> ModelParams {
    ModelParams::new(6.0, 0.25, 0.75, 0.5, 5.0, 0.0, 0.0, 0.0).unwrap()
}

/// Parameter set of the nonmonotone/canard examples
/// (beta = 1, gamma1 = 2/5, gamma2 = 3/4, kappa = 3).
pub fn nonmonotone_set() -> ModelParams {
    ModelParams::new(1.0, 0.4, 0.75, 0.2, 3.0, 0.5, 0.0, 0.0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diffusivity_roots_and_value() {
        let p = set_a();
        assert_eq!(diffusivity(p.gamma1, &p), 0.0);
        assert_eq!(diffusivity(p.gamma2, &p), 0.0);
        // direct closed-form evaluation at u = 0
        assert_relative_eq!(diffusivity(0.0, &p), 2.625, epsilon = 1e-15);
    }

    #[test]
    fn potential_is_antiderivative_of_diffusivity() {
        let p = set_a();
        assert_eq!(potential(0.0, &p), 0.0);
        let h = 1e-6;
        let fd = (potential(0.5 + h, &p) - potential(0.5 - h, &p)) / (2.0 * h);
        assert!((fd - diffusivity(0.5, &p)).abs() < 1e-8);
        // symmetric set closed form at u = 1/2
        let ps = symmetric_set();
        assert_relative_eq!(potential(0.5, &ps), 0.0625, epsilon = 1e-15);
    }

    #[test]
    fn potential_antiderivative_consistent() {
        let p = set_a();
        let h = 1e-6;
        for &u in &[0.1, 0.4, 0.9, 1.3] {
            let fd =
                (potential_antiderivative(u + h, &p) - potential_antiderivative(u - h, &p))
                    / (2.0 * h);
            assert!((fd - potential(u, &p)).abs() < 1e-7);
        }
    }

    #[test]
    fn reaction_roots_and_slopes() {
        let p = ModelParams::new(6.0, 7.0 / 12.0, 0.75, 0.2, 5.0, 0.0, 0.0, 0.0).unwrap();
        for &u in &[0.0, p.alpha, 1.0] {
            assert_relative_eq!(reaction(u, &p), 0.0, epsilon = 1e-15);
        }
        let h = 1e-7;
        let d0 = (reaction(h, &p) - reaction(-h, &p)) / (2.0 * h);
        assert_relative_eq!(d0, -1.0, epsilon = 1e-6); // -kappa alpha
        let d1 = (reaction(1.0 + h, &p) - reaction(1.0 - h, &p)) / (2.0 * h);
        assert_relative_eq!(d1, -4.0, epsilon = 1e-6); // -kappa (1 - alpha)
        assert_relative_eq!(reaction_prime(0.0, &p), -1.0, epsilon = 1e-14);
        assert_relative_eq!(reaction_prime(1.0, &p), -4.0, epsilon = 1e-14);
    }

    #[test]
    fn branch_classification_and_layer_eigs() {
        let p = set_a();
        let fold = classify_branch(p.gamma1, &p);
        assert_eq!(fold.tag, BranchTag::FoldLeft);
        assert!(fold.layer_eigs.0.norm().min(fold.layer_eigs.1.norm()) < 1e-12);

        // delta = 0, middle branch: purely imaginary pair
        let mid = classify_branch(0.5 * (p.gamma1 + p.gamma2), &p);
        assert_eq!(mid.tag, BranchTag::Middle);
        assert!(mid.layer_eigs.0.re.abs() < 1e-14 && mid.layer_eigs.0.im.abs() > 0.0);

        // delta = 0.1 at u = 0: real saddle pair, product = -D(0) = -2.625
        let mut pd = p;
        pd.a = 1.0;
        pd.c = 0.1;
        let b = classify_branch(0.0, &pd);
        assert_eq!(b.tag, BranchTag::SslLeft);
        let prod = b.layer_eigs.0 * b.layer_eigs.1;
        assert_relative_eq!(prod.re, -2.625, epsilon = 1e-12);
        assert!(prod.im.abs() < 1e-14);
        // quadratic-root oracle: both eigenvalues satisfy mu^2 + delta mu - D = 0
        for mu in [b.layer_eigs.0, b.layer_eigs.1] {
            let r = mu * mu + mu * pd.delta() - diffusivity(0.0, &pd);
            assert!(r.norm() < 1e-12);
        }
        // stability of the middle branch: delta > 0 gives negative real parts
        let midd = classify_branch(0.65, &pd);
        assert!(midd.layer_eigs.0.re < 0.0 && midd.layer_eigs.1.re < 0.0);
    }

    #[test]
    fn branch_tag_changes_exactly_at_folds() {
        let p = set_a();
        let probe = |u: f64| classify_branch(u, &p).tag;
        assert_eq!(probe(p.gamma1 - 1e-9), BranchTag::SslLeft);
        assert_eq!(probe(p.gamma1 + 1e-9), BranchTag::Middle);
        assert_eq!(probe(p.gamma2 - 1e-9), BranchTag::Middle);
        assert_eq!(probe(p.gamma2 + 1e-9), BranchTag::SsrRight);
    }

    #[test]
    fn equilibria_types_match_table() {
        // alpha outside (gamma1, gamma2): p_minus, p_plus saddles
        let p = set_a().with_c(0.2);
        let eq = classify_equilibria(&p);
        assert_eq!(eq[0].kind, EquilibriumKind::Saddle);
        assert_eq!(eq[1].kind, EquilibriumKind::Saddle);
        assert_eq!(eq[0].location, (1.0, -0.2));
        assert_eq!(eq[1].location, (0.0, 0.0));
        // alpha < gamma1, c > 0: p_b is a stable node or focus
        assert!(matches!(
            eq[2].kind,
            EquilibriumKind::StableNode | EquilibriumKind::StableFocus
        ));

        // gamma1 < alpha < gamma2: p_b saddle
        let pm = set_a().with_alpha(0.65).with_c(0.3);
        let eqm = classify_equilibria(&pm);
        assert_eq!(eqm[2].kind, EquilibriumKind::Saddle);

        // c = 0, alpha < gamma1: p_b is a centre
        let pc = set_a();
        let eqc = classify_equilibria(&pc);
        assert_eq!(eqc[2].kind, EquilibriumKind::Centre);
    }

    #[test]
    fn folded_singularities_match_table() {
        // alpha < gamma1: left FS, right FN/FF
        let p = set_a().with_c(0.2);
        let fs = classify_folded_singularities(&p);
        assert_eq!(fs[0].kind, FoldedKind::FoldedSaddle);
        assert!(matches!(fs[1].kind, FoldedKind::FoldedNode | FoldedKind::FoldedFocus));
        assert_relative_eq!(fs[0].location.1, -0.2 * p.gamma1, epsilon = 1e-15);

        // gamma1 < alpha < gamma2: both FN/FF
        let pm = set_a().with_alpha(0.65).with_c(0.2);
        for f in classify_folded_singularities(&pm) {
            assert!(matches!(f.kind, FoldedKind::FoldedNode | FoldedKind::FoldedFocus));
        }

        // alpha = gamma1 within tolerance: FSN II
        let pf = set_a().with_alpha(7.0 / 12.0);
        assert_eq!(classify_folded_singularities(&pf)[0].kind, FoldedKind::FsnII);

        // det sign flips exactly as alpha crosses gamma2
        let lo = set_a().with_alpha(0.75 - 1e-6).with_c(0.1);
        let hi = set_a().with_alpha(0.75 + 1e-6).with_c(0.1);
        assert!(matches!(
            classify_folded_singularities(&lo)[1].kind,
            FoldedKind::FoldedNode | FoldedKind::FoldedFocus
        ));
        assert_eq!(
            classify_folded_singularities(&hi)[1].kind,
            FoldedKind::FoldedSaddle
        );
    }

    #[test]
    fn params_serde_rejects_unknown_keys_and_bad_values() {
        let good = r#"{"beta":6.0,"gamma1":0.25,"gamma2":0.75,"alpha":0.5,"kappa":5.0,"a":0.0,"c":0.0,"eps":0.0}"#;
        let p: ModelParams = serde_json::from_str(good).unwrap();
        assert_eq!(p, symmetric_set());

        let unknown = r#"{"beta":6.0,"gamma1":0.25,"gamma2":0.75,"alpha":0.5,"kappa":5.0,"a":0.0,"c":0.0,"eps":0.0,"extra":1.0}"#;
        assert!(serde_json::from_str::<ModelParams>(unknown).is_err());

        let bad = r#"{"beta":6.0,"gamma1":0.8,"gamma2":0.75,"alpha":0.5,"kappa":5.0,"a":0.0,"c":0.0,"eps":0.0}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());

        // round trip
        let s = serde_json::to_string(&p).unwrap();
        let q: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}
