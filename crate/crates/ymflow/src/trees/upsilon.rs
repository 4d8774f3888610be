//! Nonlinearities as jet polynomials and the coefficient maps Υ.

use super::jet::{zero_filled, JetEnv, JetTerm, Value};
use super::labels::{EdgeType, LabelId, LabelSet, Target};
use super::tree::DecoratedTree;
use crate::lie::{AlgebraElement, LieAlgebra};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Which of the two coupled systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GaugeSystem {
    /// Noise enters through the `a` equation, mollified noise `lb`.
    B,
    /// Noise enters through the `m` equation, field `a + m`.
    ABar,
}

/// Right-hand side F_t for each kernel label; noise labels act as the identity.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    pub name: String,
    pub f: Vec<Option<JetTerm>>,
}

impl Nonlinearity {
    fn jet(labels: &LabelSet, family: &str, i: usize) -> JetTerm {
        JetTerm::jet(labels, EdgeType::new(labels.member(family, i)))
    }

    fn djet(labels: &LabelSet, family: &str, i: usize, dir: usize) -> JetTerm {
        JetTerm::jet(labels, EdgeType::d(labels.member(family, i), dir))
    }

    /// Σ_j [A_j, 2∂_j A_i − ∂_i A_j + [A_j, A_i]] for a field given componentwise with derivatives.
    fn yang_mills(a: &dyn Fn(usize) -> JetTerm, da: &dyn Fn(usize, usize) -> JetTerm, i: usize, d: usize) -> JetTerm {
        let mut out = JetTerm::zero(Target::Algebra);
        for j in 1..=d {
            let inner = da(i, j).scale(2.0).sub(&da(j, i)).add(&a(j).bracket(&a(i)));
            out = out.add(&a(j).bracket(&inner));
        }
        out
    }

    /// F_{a_i} = ξ_i + Σ_j [A_j, 2∂_j A_i − ∂_i A_j + [A_j, A_i]].
    pub fn sym(labels: &LabelSet) -> Self {
        let d = labels.dim;
        let mut f = vec![None; labels.len()];
        let a = |j| Self::jet(labels, "a", j);
        let da = |i, j| Self::djet(labels, "a", i, j);
        for i in 1..=d {
            let fi = Self::yang_mills(&a, &da, i, d).add(&Self::jet(labels, "l", i));
            f[labels.member("a", i)] = Some(fi);
        }
        Self { name: "sym".into(), f }
    }

    /// Coupled system. `linear` holds the coefficients of the field and of h in the a-equation.
    pub fn gauge(labels: &LabelSet, system: GaugeSystem, linear: [f64; 2]) -> Self {
        let d = labels.dim;
        let mut f = vec![None; labels.len()];
        let field = |j: usize| match system {
            GaugeSystem::B => Self::jet(labels, "a", j),
            GaugeSystem::ABar => Self::jet(labels, "a", j).add(&Self::jet(labels, "m", j)),
        };
        let dfield = |i: usize, j: usize| match system {
            GaugeSystem::B => Self::djet(labels, "a", i, j),
            GaugeSystem::ABar => Self::djet(labels, "a", i, j).add(&Self::djet(labels, "m", i, j)),
        };
        let h = |j| Self::jet(labels, "h", j);
        let dh = |i, j| Self::djet(labels, "h", i, j);
        let u = Self::jet(labels, "u", 0);
        for i in 1..=d {
            let mut fa = Self::yang_mills(&field, &dfield, i, d)
                .add(&field(i).scale(linear[0]))
                .add(&h(i).scale(linear[1]));
            let mut fm = JetTerm::zero(Target::Algebra);
            match system {
                GaugeSystem::B => fa = fa.add(&u.apply(&Self::jet(labels, "lb", i))),
                GaugeSystem::ABar => fm = u.apply(&Self::jet(labels, "l", i)),
            }
            let mut fh = JetTerm::zero(Target::Algebra);
            for j in 1..=d {
                let bh = field(j).bracket(&h(j));
                fh = fh.sub(&h(j).bracket(&dh(i, j))).add(&bh.bracket(&h(i))).add(&bh.shift(i));
            }
            f[labels.member("a", i)] = Some(fa);
            f[labels.member("m", i)] = Some(fm);
            f[labels.member("h", i)] = Some(fh);
        }
        let mut fu = JetTerm::zero(Target::Operator);
        for j in 1..=d {
            let adh = h(j).ad();
            fu = fu.sub(&adh.compose(&adh.compose(&u))).add(&field(j).bracket(&h(j)).ad().compose(&u));
        }
        f[labels.member("u", 0)] = Some(fu);
        let name = match system {
            GaugeSystem::B => "gauge-b",
            GaugeSystem::ABar => "gauge-abar",
        };
        Self { name: name.into(), f }
    }
}

/// Υ value as a jet polynomial in numbered noise slots, with the noise label of each slot.
#[derive(Clone, Debug, PartialEq)]
pub struct UpsilonTerm {
    pub term: JetTerm,
    pub noises: Vec<LabelId>,
}

impl UpsilonTerm {
    pub fn is_zero(&self) -> bool {
        self.term.is_zero()
    }
}

/// Unnormalised Ῡ_t[τ]: ∂^k D_{o_1}⋯D_{o_m} F_t evaluated on Υ_{o_i}[τ_i].
pub fn upsilon_bar(labels: &LabelSet, f: &Nonlinearity, t: LabelId, tree: &DecoratedTree) -> Result<UpsilonTerm> {
    let mut noises = Vec::new();
    let term = ubar(labels, f, t, tree, &mut noises)?;
    Ok(UpsilonTerm { term, noises })
}

/// Υ_t[τ] = Ῡ_t[τ]/S(τ).
pub fn upsilon(labels: &LabelSet, f: &Nonlinearity, t: LabelId, tree: &DecoratedTree) -> Result<UpsilonTerm> {
    let mut u = upsilon_bar(labels, f, t, tree)?;
    u.term = u.term.scale(1.0 / tree.symmetry_factor() as f64);
    Ok(u)
}

fn ubar(labels: &LabelSet, f: &Nonlinearity, t: LabelId, tree: &DecoratedTree, noises: &mut Vec<LabelId>) -> Result<JetTerm> {
    if labels.is_noise(t) {
        if tree.is_one() {
            let n = noises.len();
            noises.push(t);
            return Ok(JetTerm::slot(n));
        }
        return Ok(JetTerm::zero(Target::Algebra));
    }
    let ft = f.f[t]
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("no nonlinearity for label {}", labels.get(t).name)))?;
    let mut g = ft.clone();
    for (n, (o, _)) in tree.children.iter().enumerate() {
        g = g.derivative(*o, n);
        if g.is_zero() {
            return Ok(g);
        }
    }
    for (dir, &k) in tree.poly.iter().enumerate() {
        for _ in 0..k {
            g = g.shift(dir);
        }
    }
    for (n, (o, c)) in tree.children.iter().enumerate() {
        if g.is_zero() {
            break;
        }
        let v = ubar(labels, f, o.label, c, noises)?;
        g = g.substitute_dir(n, &v);
    }
    Ok(g)
}

/// Result of comparing Υ against the coefficients of the fixed-point expansion.
#[derive(Clone, Debug)]
pub struct CoherenceReport {
    pub trees_compared: usize,
    pub nonzero: usize,
    pub max_error: f64,
    pub worst: Option<String>,
}

/// Expansion in trees with numeric coefficients.
type Expansion = BTreeMap<DecoratedTree, Value>;

/// Solves the abstract fixed point A_o = Σ_k A_{o+k} X^k/k! + Σ_τ c_{t,τ} I_o(τ), with
/// c_{t,·} the coefficients of F_t(A), truncated to trees of size ≤ `max_size`, and checks that
/// c_{t,τ} = Υ_t[τ] with the noise slots filled by `noise[label]`.
pub fn coherence_check(
    labels: &LabelSet,
    f: &Nonlinearity,
    alg: &LieAlgebra,
    env: &JetEnv,
    noise: &BTreeMap<LabelId, AlgebraElement>,
    max_size: usize,
) -> Result<CoherenceReport> {
    let edges = jet_edges(f);
    let mut coeff: Vec<Expansion> = vec![Expansion::new(); labels.len()];
    for _ in 0..=max_size + 1 {
        let comps: BTreeMap<EdgeType, Expansion> = edges
            .iter()
            .map(|e| (*e, component(labels, alg, env, noise, &coeff, e, max_size)))
            .collect();
        let mut next = vec![Expansion::new(); labels.len()];
        for t in labels.kernels() {
            if let Some(ft) = &f.f[t] {
                next[t] = eval_expansion(ft, alg, &comps, max_size)?;
            }
        }
        coeff = next;
    }
    let mut report = CoherenceReport {
        trees_compared: 0,
        nonzero: 0,
        max_error: 0.0,
        worst: None,
    };
    for t in labels.kernels() {
        let Some(ft) = &f.f[t] else { continue };
        for (tree, v) in &coeff[t] {
            let u = upsilon(labels, f, t, tree)?;
            let slots: Vec<AlgebraElement> = u.noises.iter().map(|l| noise[l].clone()).collect();
            let full = zero_filled(labels, alg, env, &[&u.term, ft]);
            let w = u.term.evaluate(alg, &full, &slots)?;
            let err = w.distance(v)?;
            report.trees_compared += 1;
            if v.max_abs() > 0.0 {
                report.nonzero += 1;
            }
            if err > report.max_error {
                report.max_error = err;
                report.worst = Some(format!("{} at {}", labels.get(t).name, tree.canonical_string(labels)));
            }
        }
    }
    Ok(report)
}

fn jet_edges(f: &Nonlinearity) -> Vec<EdgeType> {
    use super::jet::Word;
    fn walk(w: &Word, acc: &mut Vec<EdgeType>) {
        match w {
            Word::Jet(e) => {
                if !acc.contains(e) {
                    acc.push(*e)
                }
            }
            Word::Dir(_) | Word::Slot(_) => {}
            Word::Bracket(x, y) | Word::Apply(x, y) | Word::Compose(x, y) => {
                walk(x, acc);
                walk(y, acc);
            }
            Word::Ad(x) => walk(x, acc),
        }
    }
    let mut acc = Vec::new();
    for t in f.f.iter().flatten() {
        for w in t.terms.keys() {
            walk(w, &mut acc);
        }
    }
    acc.sort();
    acc
}

fn component(
    labels: &LabelSet,
    alg: &LieAlgebra,
    env: &JetEnv,
    noise: &BTreeMap<LabelId, AlgebraElement>,
    coeff: &[Expansion],
    e: &EdgeType,
    max_size: usize,
) -> Expansion {
    let mut out = Expansion::new();
    if labels.is_noise(e.label) {
        if e.deriv == [0; 3] {
            out.insert(DecoratedTree::planted(*e, DecoratedTree::one()), Value::Alg(noise[&e.label].clone()));
        }
        return out;
    }
    let kind = labels.get(e.label).target;
    for s in 0..=max_size {
        for k in plain_indices(s) {
            let mut shifted = *e;
            for (d, &n) in k.iter().enumerate() {
                shifted.deriv[d] += n;
            }
            let Some(v) = env.values.get(&shifted) else { continue };
            let fact: f64 = k.iter().map(|&n| (1..=n as u64).product::<u64>() as f64).product();
            let mut v = v.clone();
            let mut scaled = Value::zero(kind, alg.dim());
            scaled.axpy(1.0 / fact, &v).unwrap();
            v = scaled;
            out.insert(DecoratedTree::x(k), v);
        }
    }
    for (tree, v) in &coeff[e.label] {
        let planted = DecoratedTree::planted(*e, tree.clone());
        if planted.size() <= max_size {
            out.insert(planted, v.clone());
        }
    }
    out
}

fn plain_indices(s: usize) -> Vec<[u8; 3]> {
    let mut v = Vec::new();
    for a in 0..=s {
        for b in 0..=(s - a) {
            v.push([a as u8, b as u8, (s - a - b) as u8]);
        }
    }
    v
}

fn eval_expansion(term: &JetTerm, alg: &LieAlgebra, comps: &BTreeMap<EdgeType, Expansion>, max_size: usize) -> Result<Expansion> {
    let mut out = Expansion::new();
    for (w, c) in &term.terms {
        for (tree, v) in eval_word_expansion(w, alg, comps, max_size)? {
            let entry = out.entry(tree).or_insert_with(|| Value::zero(term.kind, alg.dim()));
            entry.axpy(*c, &v)?;
        }
    }
    Ok(out)
}

fn eval_word_expansion(
    w: &super::jet::Word,
    alg: &LieAlgebra,
    comps: &BTreeMap<EdgeType, Expansion>,
    max_size: usize,
) -> Result<Expansion> {
    use super::jet::Word;
    let product = |x: &Word, y: &Word, op: &dyn Fn(&Value, &Value) -> Result<Value>| -> Result<Expansion> {
        let (ex, ey) = (eval_word_expansion(x, alg, comps, max_size)?, eval_word_expansion(y, alg, comps, max_size)?);
        let mut out = Expansion::new();
        for (s, a) in &ex {
            for (r, b) in &ey {
                let t = s.product(r);
                if t.size() > max_size {
                    continue;
                }
                let v = op(a, b)?;
                match out.get_mut(&t) {
                    Some(acc) => acc.axpy(1.0, &v)?,
                    None => {
                        out.insert(t, v);
                    }
                }
            }
        }
        Ok(out)
    };
    match w {
        Word::Jet(e) => Ok(comps.get(e).cloned().unwrap_or_default()),
        Word::Dir(_) | Word::Slot(_) => Err(Error::InvalidArgument("nonlinearity contains placeholders".into())),
        Word::Bracket(x, y) => product(x, y, &|a, b| Ok(Value::Alg(alg.bracket(a.as_alg()?, b.as_alg()?)?))),
        Word::Apply(p, x) => product(p, x, &|m, v| {
            let r = m.as_op()? * nalgebra::DVector::from_column_slice(&v.as_alg()?.0);
            Ok(Value::Alg(AlgebraElement(r.as_slice().to_vec())))
        }),
        Word::Compose(p, q) => product(p, q, &|a, b| Ok(Value::Op(a.as_op()? * b.as_op()?))),
        Word::Ad(x) => {
            let e = eval_word_expansion(x, alg, comps, max_size)?;
            e.into_iter()
                .map(|(t, v)| Ok((t, Value::Op(alg.ad_matrix(v.as_alg()?)))))
                .collect()
        }
    }
}
