//! Vanishing filter, renormalisation characters and the resulting counterterms.

use super::enumerate::{complete_rule, enumerate_trees, EnumeratedTree, EnumerationOptions};
use super::jet::{zero_filled, JetEnv, Value};
use super::labels::{Degree, EdgeType, LabelId, LabelSet, Rule};
use super::tree::{normalize_form, DecoratedTree};
use super::upsilon::{upsilon_bar, GaugeSystem, Nonlinearity};
use crate::lie::{AlgebraElement, GroupElement, LieAlgebra};
use crate::renorm::RenormConstants;
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VanishingReason {
    OddNoises,
    /// Odd number of derivatives in some direction.
    DerivativeParity,
    /// Odd count in some direction once polynomial decorations are included.
    PolynomialParity,
    /// Two noises with different spatial indices.
    IndexMismatch,
}

impl VanishingReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            VanishingReason::OddNoises => "odd-noises",
            VanishingReason::DerivativeParity => "derivative-parity",
            VanishingReason::PolynomialParity => "polynomial-parity",
            VanishingReason::IndexMismatch => "index-mismatch",
        }
    }
}

/// Reasons for which the renormalisation character of a centred Gaussian noise with reflection
/// symmetric kernels vanishes on `tree`; None if it may be non-zero.
pub fn bphz_vanishing_filter(labels: &LabelSet, tree: &DecoratedTree) -> Option<VanishingReason> {
    let noises = tree.noise_edges(labels);
    if noises.len() % 2 == 1 {
        return Some(VanishingReason::OddNoises);
    }
    let mut derivs = [0u32; 3];
    let mut polys = [0u32; 3];
    tree.visit_edges(&mut |e, _| {
        for d in 0..3 {
            derivs[d] += e.deriv[d] as u32;
        }
    });
    tree.visit_nodes(&mut |n| {
        for d in 0..3 {
            polys[d] += n.poly[d] as u32;
        }
    });
    if (1..3).any(|d| (derivs[d] + polys[d]) % 2 == 1) {
        return Some(if polys.iter().any(|&p| p > 0) {
            VanishingReason::PolynomialParity
        } else {
            VanishingReason::DerivativeParity
        });
    }
    if noises.len() == 2 {
        let (a, b) = (labels.get(noises[0].label), labels.get(noises[1].label));
        if a.index != b.index {
            return Some(VanishingReason::IndexMismatch);
        }
    }
    None
}

/// Renormalisation character: coefficient per tree shape, multiplying the Casimir contraction
/// of the two noises.
#[derive(Clone, Debug, PartialEq)]
pub struct Character {
    pub shapes: BTreeMap<String, f64>,
}

impl Character {
    /// Shapes: cherry → −C̄, I[I'Ξ]I'Ξ → −Ĉ, IΞ I'[I'Ξ] → +Ĉ, and the two polynomial
    /// shapes → −`poly_constant`.
    pub fn sym(c: &RenormConstants, poly_constant: f64) -> Self {
        let l = LabelSet::sym();
        let n = |s: &str| normalize_form(&l, s).expect("builtin form");
        let mut shapes = BTreeMap::new();
        shapes.insert(n("IΞ·IΞ"), -c.cbar_eps);
        shapes.insert(n("I[I'Ξ]·I'Ξ"), -c.chat_eps);
        shapes.insert(n("IΞ·I'[I'Ξ]"), c.chat_eps);
        shapes.insert(n("IΞ·I'[XΞ]"), -poly_constant);
        shapes.insert(n("I[XΞ]·I'Ξ"), -poly_constant);
        Self { shapes }
    }

    /// Adds the shape I[IΞ]Ξ with coefficient −C̃ (system B) or −C̃⁰ (system Ā).
    pub fn gauge(c: &RenormConstants, system: GaugeSystem, poly_constant: f64) -> Self {
        let mut ch = Self::sym(c, poly_constant);
        let l = LabelSet::sym();
        let ct = match system {
            GaugeSystem::B => c.ctilde_eps,
            GaugeSystem::ABar => c.ctilde0_eps,
        };
        ch.shapes.insert(normalize_form(&l, "I[IΞ]Ξ").expect("builtin form"), -ct);
        ch
    }

    pub fn coefficient(&self, labels: &LabelSet, tree: &DecoratedTree) -> Option<f64> {
        self.shapes.get(&tree.shape(labels)).copied()
    }

    /// Coefficients keyed by canonical tree hash.
    pub fn by_hash(&self, labels: &LabelSet, trees: &[EnumeratedTree]) -> BTreeMap<u64, f64> {
        trees
            .iter()
            .filter_map(|t| self.coefficient(labels, &t.tree).map(|c| (t.hash, c)))
            .collect()
    }
}

/// One tree's contribution to a counterterm.
#[derive(Clone, Debug)]
pub struct Contribution {
    pub label: LabelId,
    pub form: String,
    pub canonical: String,
    pub coefficient: f64,
    pub value: Value,
}

/// Counterterm Σ_τ ℓ(τ) Υ_t[τ] for every kernel label t, with its per-tree contributions.
#[derive(Clone, Debug)]
pub struct Counterterm {
    pub per_label: BTreeMap<LabelId, Value>,
    pub contributions: Vec<Contribution>,
}

impl Counterterm {
    /// Sum of contributions grouped by form, for one label.
    pub fn by_form(&self, label: LabelId, dim: usize) -> BTreeMap<String, AlgebraElement> {
        let mut m: BTreeMap<String, AlgebraElement> = BTreeMap::new();
        for c in self.contributions.iter().filter(|c| c.label == label) {
            if let Value::Alg(v) = &c.value {
                *m.entry(c.form.clone()).or_insert_with(|| AlgebraElement::zeros(dim)) += v;
            }
        }
        m
    }
}

/// Evaluates the counterterm of `f` on the jet `env`, summing over `trees`.
pub fn counterterm(
    labels: &LabelSet,
    f: &Nonlinearity,
    trees: &[EnumeratedTree],
    character: &Character,
    alg: &LieAlgebra,
    env: &JetEnv,
) -> Result<Counterterm> {
    let mut per_label = BTreeMap::new();
    let mut contributions = Vec::new();
    for t in labels.kernels() {
        let kind = labels.get(t).target;
        let mut total = Value::zero(kind, alg.dim());
        for e in trees.iter().filter(|e| e.is_unplanted()) {
            if bphz_vanishing_filter(labels, &e.tree).is_some() {
                continue;
            }
            let u = upsilon_bar(labels, f, t, &e.tree)?;
            if u.is_zero() {
                continue;
            }
            let coefficient = character.coefficient(labels, &e.tree).ok_or_else(|| {
                Error::Precondition(format!(
                    "no character value for tree {} of shape {}",
                    e.tree.canonical_string(labels),
                    e.tree.shape(labels)
                ))
            })?;
            if u.noises.len() != 2 {
                return Err(Error::Precondition(format!("tree {} does not carry two noises", e.form)));
            }
            let full = zero_filled(labels, alg, env, &[&u.term]);
            let mut v = Value::zero(kind, alg.dim());
            for a in 0..alg.dim() {
                let b = alg.basis(a);
                v.axpy(1.0, &u.term.evaluate(alg, &full, &[b.clone(), b])?)?;
            }
            let mut scaled = Value::zero(kind, alg.dim());
            scaled.axpy(coefficient / e.symmetry as f64, &v)?;
            total.axpy(1.0, &scaled)?;
            contributions.push(Contribution {
                label: t,
                form: e.form.clone(),
                canonical: e.tree.canonical_string(labels),
                coefficient,
                value: scaled,
            });
        }
        per_label.insert(t, total);
    }
    Ok(Counterterm { per_label, contributions })
}

/// Negative unplanted trees of the completed rule.
pub fn negative_trees(labels: &LabelSet, rule: &Rule, opts: &EnumerationOptions) -> Result<Vec<EnumeratedTree>> {
    let done = complete_rule(labels, rule, opts)?;
    let en = enumerate_trees(labels, &done.rule, Degree::ZERO, opts)?;
    Ok(en.unplanted().cloned().collect())
}

/// Symmetric-system counterterm at the constant field `a` (one element per direction).
#[derive(Clone, Debug)]
pub struct SymCounterterm {
    pub lambda: f64,
    pub computed: Vec<AlgebraElement>,
    /// λ(4Ĉ − C̄) a.
    pub expected: Vec<AlgebraElement>,
    /// Per direction, the summed contribution of each form.
    pub families: Vec<BTreeMap<String, AlgebraElement>>,
    pub max_error: f64,
}

pub fn counterterm_sym(
    trees: &[EnumeratedTree],
    constants: &RenormConstants,
    alg: &LieAlgebra,
    a: &[AlgebraElement],
) -> Result<SymCounterterm> {
    let labels = LabelSet::sym();
    if a.len() != labels.dim {
        return Err(Error::DimensionMismatch { expected: labels.dim, got: a.len() });
    }
    let lambda = alg.casimir_lambda()?.lambda;
    let f = Nonlinearity::sym(&labels);
    let mut env = JetEnv::default();
    for (i, ai) in a.iter().enumerate() {
        env.set(EdgeType::new(labels.member("a", i + 1)), Value::Alg(ai.clone()));
    }
    let ct = counterterm(&labels, &f, trees, &Character::sym(constants, 1.0), alg, &env)?;
    let csym = 4.0 * constants.chat_eps - constants.cbar_eps;
    let mut computed = Vec::new();
    let mut expected = Vec::new();
    let mut families = Vec::new();
    let mut max_error: f64 = 0.0;
    for (i, ai) in a.iter().enumerate() {
        let id = labels.member("a", i + 1);
        let c = ct.per_label[&id].as_alg()?.clone();
        let e = ai.scale(lambda * csym);
        max_error = max_error.max((&c - &e).max_abs());
        computed.push(c);
        expected.push(e);
        families.push(ct.by_form(id, alg.dim()));
    }
    Ok(SymCounterterm {
        lambda,
        computed,
        expected,
        families,
        max_error,
    })
}

/// Jet of the coupled system at a point: constant fields plus first derivatives, U = Ad_g and
/// ∂_i U = ad(h_i)∘U.
pub fn gauge_jet<R: Rng>(labels: &LabelSet, alg: &LieAlgebra, g: &GroupElement, rng: &mut R) -> JetEnv {
    let mut env = JetEnv::default();
    for fam in ["a", "m", "h"] {
        for i in 1..=labels.dim {
            let id = labels.member(fam, i);
            env.set(EdgeType::new(id), Value::Alg(alg.random_element(rng, 1.0)));
            for d in 1..=labels.dim {
                env.set(EdgeType::d(id, d), Value::Alg(alg.random_element(rng, 1.0)));
            }
        }
    }
    let u = alg.ad_group_matrix(g);
    let uid = labels.member("u", 0);
    for i in 1..=labels.dim {
        let h = env.values[&EdgeType::new(labels.member("h", i))].as_alg().unwrap().clone();
        env.set(EdgeType::d(uid, i), Value::Op(alg.ad_matrix(&h) * &u));
    }
    env.set(EdgeType::new(uid), Value::Op(u));
    env
}

/// U must be orthogonal and a Lie algebra automorphism.
pub fn check_operator(alg: &LieAlgebra, u: &DMatrix<f64>, tol: f64) -> Result<()> {
    let n = alg.dim();
    let orth = (u.transpose() * u - DMatrix::<f64>::identity(n, n)).amax();
    if orth > tol {
        return Err(Error::Precondition(format!("U is not orthogonal: |UᵀU − 1| = {orth:e}")));
    }
    let apply = |x: &AlgebraElement| AlgebraElement((u * nalgebra::DVector::from_column_slice(&x.0)).as_slice().to_vec());
    let mut hom: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let (x, y) = (alg.basis(a), alg.basis(b));
            let lhs = apply(&alg.bracket(&x, &y)?);
            let rhs = alg.bracket(&apply(&x), &apply(&y))?;
            hom = hom.max((&lhs - &rhs).max_abs());
        }
    }
    if hom > tol {
        return Err(Error::Precondition(format!("U does not preserve brackets: defect {hom:e}")));
    }
    Ok(())
}

/// Counterterms of one coupled system against their closed forms.
#[derive(Clone, Debug)]
pub struct GaugeCounterterm {
    pub system: GaugeSystem,
    pub lambda: f64,
    pub computed: BTreeMap<String, Value>,
    pub expected: BTreeMap<String, Value>,
    pub max_error: f64,
    pub contributions: Vec<Contribution>,
}

/// Expected values: system B gives a_i ↦ λ(4Ĉ − C̄) a_i + λC̃ h_i; system Ā gives
/// a_i ↦ λ(4Ĉ − C̄)(a_i + m_i) and m_i ↦ λC̃⁰ h_i; all other labels vanish.
pub fn counterterm_gauge_system(
    trees: &[EnumeratedTree],
    constants: &RenormConstants,
    system: GaugeSystem,
    poly_constant: f64,
    alg: &LieAlgebra,
    env: &JetEnv,
) -> Result<GaugeCounterterm> {
    let labels = LabelSet::gauge();
    let uid = labels.member("u", 0);
    let u = env
        .values
        .get(&EdgeType::new(uid))
        .ok_or_else(|| Error::InvalidArgument("jet lacks U".into()))?
        .as_op()?;
    check_operator(alg, u, 1e-10)?;
    let lambda = alg.casimir_lambda()?.lambda;
    let f = Nonlinearity::gauge(&labels, system, [0.0, 0.0]);
    let ch = Character::gauge(constants, system, poly_constant);
    let ct = counterterm(&labels, &f, trees, &ch, alg, env)?;
    let csym = 4.0 * constants.chat_eps - constants.cbar_eps;
    let get = |fam: &str, i: usize| env.values[&EdgeType::new(labels.member(fam, i))].as_alg().cloned();
    let mut computed = BTreeMap::new();
    let mut expected = BTreeMap::new();
    let mut max_error: f64 = 0.0;
    for t in labels.kernels() {
        let l = labels.get(t);
        let i = l.index.unwrap_or(0);
        let e = match (system, l.family.as_str()) {
            (GaugeSystem::B, "a") => Value::Alg(&get("a", i)?.scale(lambda * csym) + &get("h", i)?.scale(lambda * constants.ctilde_eps)),
            (GaugeSystem::ABar, "a") => Value::Alg((&get("a", i)? + &get("m", i)?).scale(lambda * csym)),
            (GaugeSystem::ABar, "m") => Value::Alg(get("h", i)?.scale(lambda * constants.ctilde0_eps)),
            _ => Value::zero(l.target, alg.dim()),
        };
        let c = ct.per_label[&t].clone();
        max_error = max_error.max(c.distance(&e)?);
        computed.insert(l.name.clone(), c);
        expected.insert(l.name.clone(), e);
    }
    Ok(GaugeCounterterm {
        system,
        lambda,
        computed,
        expected,
        max_error,
        contributions: ct.contributions,
    })
}
