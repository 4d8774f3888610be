//! Symbolic polynomials in jet components, with Leibniz derivatives and numeric evaluation.

use super::labels::{EdgeType, LabelSet, Target};
use crate::lie::{AlgebraElement, LieAlgebra};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

/// Multilinear monomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Word {
    /// Jet component of the given edge type.
    Jet(EdgeType),
    /// Placeholder left by a derivative, filled in later.
    Dir(usize),
    /// Numbered noise value.
    Slot(usize),
    Bracket(Box<Word>, Box<Word>),
    /// Operator applied to an algebra element.
    Apply(Box<Word>, Box<Word>),
    /// ad of an algebra element.
    Ad(Box<Word>),
    Compose(Box<Word>, Box<Word>),
}

/// Bracket normalised by antisymmetry; None when it vanishes.
fn bracket_word(x: &Word, y: &Word) -> Option<(f64, Word)> {
    match x.cmp(y) {
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Less => Some((1.0, Word::Bracket(Box::new(x.clone()), Box::new(y.clone())))),
        std::cmp::Ordering::Greater => Some((-1.0, Word::Bracket(Box::new(y.clone()), Box::new(x.clone())))),
    }
}

type Lin = Vec<(f64, Word)>;

/// Applies a derivation that acts on atoms by `atom`.
fn leibniz(w: &Word, atom: &dyn Fn(&Word) -> Lin) -> Lin {
    let mut out = Vec::new();
    match w {
        Word::Jet(_) | Word::Dir(_) | Word::Slot(_) => return atom(w),
        Word::Bracket(x, y) => {
            for (c, dx) in leibniz(x, atom) {
                if let Some((s, b)) = bracket_word(&dx, y) {
                    out.push((c * s, b));
                }
            }
            for (c, dy) in leibniz(y, atom) {
                if let Some((s, b)) = bracket_word(x, &dy) {
                    out.push((c * s, b));
                }
            }
        }
        Word::Apply(p, x) => {
            for (c, dp) in leibniz(p, atom) {
                out.push((c, Word::Apply(Box::new(dp), x.clone())));
            }
            for (c, dx) in leibniz(x, atom) {
                out.push((c, Word::Apply(p.clone(), Box::new(dx))));
            }
        }
        Word::Ad(x) => {
            for (c, dx) in leibniz(x, atom) {
                out.push((c, Word::Ad(Box::new(dx))));
            }
        }
        Word::Compose(p, q) => {
            for (c, dp) in leibniz(p, atom) {
                out.push((c, Word::Compose(Box::new(dp), q.clone())));
            }
            for (c, dq) in leibniz(q, atom) {
                out.push((c, Word::Compose(p.clone(), Box::new(dq))));
            }
        }
    }
    out
}

/// Replaces atoms by linear combinations, expanding multilinearly.
fn substitute(w: &Word, atom: &dyn Fn(&Word) -> Option<Lin>) -> Lin {
    let pair = |x: &Word, y: &Word, f: &dyn Fn(Word, Word) -> Option<(f64, Word)>| -> Lin {
        let (sx, sy) = (substitute(x, atom), substitute(y, atom));
        let mut out = Vec::new();
        for (cx, wx) in &sx {
            for (cy, wy) in &sy {
                if let Some((s, w)) = f(wx.clone(), wy.clone()) {
                    out.push((cx * cy * s, w));
                }
            }
        }
        out
    };
    match w {
        Word::Jet(_) | Word::Dir(_) | Word::Slot(_) => atom(w).unwrap_or_else(|| vec![(1.0, w.clone())]),
        Word::Bracket(x, y) => pair(x, y, &|a, b| bracket_word(&a, &b)),
        Word::Apply(p, x) => pair(p, x, &|a, b| Some((1.0, Word::Apply(Box::new(a), Box::new(b))))),
        Word::Compose(p, q) => pair(p, q, &|a, b| Some((1.0, Word::Compose(Box::new(a), Box::new(b))))),
        Word::Ad(x) => substitute(x, atom).into_iter().map(|(c, a)| (c, Word::Ad(Box::new(a)))).collect(),
    }
}

/// Linear combination of words taking values in the algebra or in its operators.
#[derive(Clone, Debug, PartialEq)]
pub struct JetTerm {
    pub kind: Target,
    pub terms: BTreeMap<Word, f64>,
}

impl JetTerm {
    pub fn zero(kind: Target) -> Self {
        Self { kind, terms: BTreeMap::new() }
    }

    fn from_lin(kind: Target, lin: Lin) -> Self {
        let mut t = Self::zero(kind);
        for (c, w) in lin {
            *t.terms.entry(w).or_insert(0.0) += c;
        }
        t.terms.retain(|_, c| *c != 0.0);
        t
    }

    fn atom(kind: Target, w: Word) -> Self {
        Self::from_lin(kind, vec![(1.0, w)])
    }

    pub fn jet(labels: &LabelSet, e: EdgeType) -> Self {
        Self::atom(labels.get(e.label).target, Word::Jet(e))
    }

    pub fn slot(n: usize) -> Self {
        Self::atom(Target::Algebra, Word::Slot(n))
    }

    pub fn dir(n: usize, kind: Target) -> Self {
        Self::atom(kind, Word::Dir(n))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn lin(&self) -> impl Iterator<Item = (f64, &Word)> {
        self.terms.iter().map(|(w, c)| (*c, w))
    }

    pub fn add(&self, o: &JetTerm) -> JetTerm {
        assert_eq!(self.kind, o.kind, "adding jet terms of different kinds");
        let lin = self.lin().chain(o.lin()).map(|(c, w)| (c, w.clone())).collect();
        Self::from_lin(self.kind, lin)
    }

    pub fn scale(&self, s: f64) -> JetTerm {
        Self::from_lin(self.kind, self.lin().map(|(c, w)| (c * s, w.clone())).collect())
    }

    pub fn sub(&self, o: &JetTerm) -> JetTerm {
        self.add(&o.scale(-1.0))
    }

    pub fn bracket(&self, o: &JetTerm) -> JetTerm {
        assert!(self.kind == Target::Algebra && o.kind == Target::Algebra);
        let mut lin = Vec::new();
        for (a, x) in self.lin() {
            for (b, y) in o.lin() {
                if let Some((s, w)) = bracket_word(x, y) {
                    lin.push((a * b * s, w));
                }
            }
        }
        Self::from_lin(Target::Algebra, lin)
    }

    fn binary(&self, o: &JetTerm, kind: Target, f: fn(Box<Word>, Box<Word>) -> Word) -> JetTerm {
        let mut lin = Vec::new();
        for (a, x) in self.lin() {
            for (b, y) in o.lin() {
                lin.push((a * b, f(Box::new(x.clone()), Box::new(y.clone()))));
            }
        }
        Self::from_lin(kind, lin)
    }

    /// Operator `self` applied to algebra element `x`.
    pub fn apply(&self, x: &JetTerm) -> JetTerm {
        assert!(self.kind == Target::Operator && x.kind == Target::Algebra);
        self.binary(x, Target::Algebra, Word::Apply)
    }

    pub fn compose(&self, o: &JetTerm) -> JetTerm {
        assert!(self.kind == Target::Operator && o.kind == Target::Operator);
        self.binary(o, Target::Operator, Word::Compose)
    }

    pub fn ad(&self) -> JetTerm {
        assert_eq!(self.kind, Target::Algebra);
        Self::from_lin(Target::Operator, self.lin().map(|(c, w)| (c, Word::Ad(Box::new(w.clone())))).collect())
    }

    fn map_leibniz(&self, atom: &dyn Fn(&Word) -> Lin) -> JetTerm {
        let mut lin = Vec::new();
        for (c, w) in self.lin() {
            lin.extend(leibniz(w, atom).into_iter().map(|(d, v)| (c * d, v)));
        }
        Self::from_lin(self.kind, lin)
    }

    /// Directional derivative in the jet component `e`, the direction left as `Dir(slot)`.
    pub fn derivative(&self, e: EdgeType, slot: usize) -> JetTerm {
        self.map_leibniz(&|w| match w {
            Word::Jet(x) if *x == e => vec![(1.0, Word::Dir(slot))],
            _ => Vec::new(),
        })
    }

    /// Total derivative along coordinate `dir` (0 = time): raises every jet component.
    pub fn shift(&self, dir: usize) -> JetTerm {
        self.map_leibniz(&|w| match w {
            Word::Jet(x) => vec![(1.0, Word::Jet(x.shifted(dir)))],
            _ => Vec::new(),
        })
    }

    /// Replaces `Dir(slot)` by `value`.
    pub fn substitute_dir(&self, slot: usize, value: &JetTerm) -> JetTerm {
        let repl: Lin = value.lin().map(|(c, w)| (c, w.clone())).collect();
        let mut lin = Vec::new();
        for (c, w) in self.lin() {
            let s = substitute(w, &|a| match a {
                Word::Dir(n) if *n == slot => Some(repl.clone()),
                _ => None,
            });
            lin.extend(s.into_iter().map(|(d, v)| (c * d, v)));
        }
        Self::from_lin(self.kind, lin)
    }

    /// Renumbers slots by `f`.
    pub fn map_slots(&self, f: &dyn Fn(usize) -> usize) -> JetTerm {
        let mut lin = Vec::new();
        for (c, w) in self.lin() {
            let s = substitute(w, &|a| match a {
                Word::Slot(n) => Some(vec![(1.0, Word::Slot(f(*n)))]),
                _ => None,
            });
            lin.extend(s.into_iter().map(|(d, v)| (c * d, v)));
        }
        Self::from_lin(self.kind, lin)
    }

    pub fn evaluate(&self, alg: &LieAlgebra, env: &JetEnv, slots: &[AlgebraElement]) -> Result<Value> {
        let mut acc = Value::zero(self.kind, alg.dim());
        for (c, w) in self.lin() {
            let v = eval_word(w, alg, env, slots)?;
            acc.axpy(c, &v)?;
        }
        Ok(acc)
    }

    pub fn render(&self, labels: &LabelSet) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (n, (c, w)) in self.lin().enumerate() {
            let sign = if c < 0.0 { "-" } else if n > 0 { "+" } else { "" };
            let mag = c.abs();
            s.push_str(&format!("{}{}{}", if n > 0 { " " } else { "" }, sign, if n > 0 { " " } else { "" }));
            if mag != 1.0 {
                s.push_str(&format!("{mag}·"));
            }
            s.push_str(&render_word(w, labels));
        }
        s
    }
}

fn render_word(w: &Word, labels: &LabelSet) -> String {
    match w {
        Word::Jet(e) => labels.edge_name(e),
        Word::Dir(n) => format!("δ{n}"),
        Word::Slot(n) => format!("ξ#{n}"),
        Word::Bracket(x, y) => format!("[{}, {}]", render_word(x, labels), render_word(y, labels)),
        Word::Apply(p, x) => format!("{}({})", render_word(p, labels), render_word(x, labels)),
        Word::Ad(x) => format!("ad({})", render_word(x, labels)),
        Word::Compose(p, q) => format!("{}∘{}", render_word(p, labels), render_word(q, labels)),
    }
}

/// Algebra element or operator on the algebra.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Alg(AlgebraElement),
    Op(DMatrix<f64>),
}

impl Value {
    pub fn zero(kind: Target, dim: usize) -> Self {
        match kind {
            Target::Algebra => Value::Alg(AlgebraElement::zeros(dim)),
            Target::Operator => Value::Op(DMatrix::zeros(dim, dim)),
        }
    }

    pub fn axpy(&mut self, c: f64, v: &Value) -> Result<()> {
        match (self, v) {
            (Value::Alg(a), Value::Alg(b)) => {
                for (x, y) in a.0.iter_mut().zip(&b.0) {
                    *x += c * y;
                }
            }
            (Value::Op(a), Value::Op(b)) => *a += b * c,
            _ => return Err(Error::InvalidArgument("adding an algebra element to an operator".into())),
        }
        Ok(())
    }

    pub fn as_alg(&self) -> Result<&AlgebraElement> {
        match self {
            Value::Alg(a) => Ok(a),
            Value::Op(_) => Err(Error::InvalidArgument("expected an algebra element, found an operator".into())),
        }
    }

    pub fn as_op(&self) -> Result<&DMatrix<f64>> {
        match self {
            Value::Op(m) => Ok(m),
            Value::Alg(_) => Err(Error::InvalidArgument("expected an operator, found an algebra element".into())),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Value::Alg(a) => a.max_abs(),
            Value::Op(m) => m.amax(),
        }
    }

    pub fn distance(&self, o: &Value) -> Result<f64> {
        let mut d = self.clone();
        d.axpy(-1.0, o)?;
        Ok(d.max_abs())
    }
}

/// Values of jet components; missing entries are zero.
#[derive(Clone, Debug, Default)]
pub struct JetEnv {
    pub values: BTreeMap<EdgeType, Value>,
}

impl JetEnv {
    pub fn set(&mut self, e: EdgeType, v: Value) {
        self.values.insert(e, v);
    }
}

fn eval_word(w: &Word, alg: &LieAlgebra, env: &JetEnv, slots: &[AlgebraElement]) -> Result<Value> {
    Ok(match w {
        Word::Jet(e) => match env.values.get(e) {
            Some(v) => v.clone(),
            None => return Err(Error::InvalidArgument(format!("jet component {e:?} has no value"))),
        },
        Word::Dir(n) => return Err(Error::InvalidArgument(format!("unfilled derivative direction {n}"))),
        Word::Slot(n) => Value::Alg(
            slots
                .get(*n)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("noise slot {n} has no value")))?,
        ),
        Word::Bracket(x, y) => {
            let (a, b) = (eval_word(x, alg, env, slots)?, eval_word(y, alg, env, slots)?);
            Value::Alg(alg.bracket(a.as_alg()?, b.as_alg()?)?)
        }
        Word::Apply(p, x) => {
            let (m, v) = (eval_word(p, alg, env, slots)?, eval_word(x, alg, env, slots)?);
            let r = m.as_op()? * DVector::from_column_slice(&v.as_alg()?.0);
            Value::Alg(AlgebraElement(r.as_slice().to_vec()))
        }
        Word::Ad(x) => Value::Op(alg.ad_matrix(eval_word(x, alg, env, slots)?.as_alg()?)),
        Word::Compose(p, q) => {
            let (a, b) = (eval_word(p, alg, env, slots)?, eval_word(q, alg, env, slots)?);
            Value::Op(a.as_op()? * b.as_op()?)
        }
    })
}

/// Environment with absent components treated as zero, for the labels given.
pub fn zero_filled(labels: &LabelSet, alg: &LieAlgebra, env: &JetEnv, terms: &[&JetTerm]) -> JetEnv {
    let mut out = env.clone();
    fn collect(w: &Word, acc: &mut Vec<EdgeType>) {
        match w {
            Word::Jet(e) => acc.push(*e),
            Word::Dir(_) | Word::Slot(_) => {}
            Word::Bracket(x, y) | Word::Apply(x, y) | Word::Compose(x, y) => {
                collect(x, acc);
                collect(y, acc);
            }
            Word::Ad(x) => collect(x, acc),
        }
    }
    let mut used = Vec::new();
    for t in terms {
        for w in t.terms.keys() {
            collect(w, &mut used);
        }
    }
    for e in used {
        out.values
            .entry(e)
            .or_insert_with(|| Value::zero(labels.get(e.label).target, alg.dim()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::stream_rng;

    fn setup() -> (LabelSet, LieAlgebra, JetEnv) {
        let labels = LabelSet::sym();
        let alg = LieAlgebra::su2();
        let mut rng = stream_rng(3, 0);
        let mut env = JetEnv::default();
        for t in 0..labels.len() {
            for d in [[0, 0, 0], [0, 1, 0], [0, 0, 1], [0, 1, 1], [0, 2, 0], [0, 0, 2]] {
                env.set(EdgeType { label: t, deriv: d }, Value::Alg(alg.random_element(&mut rng, 1.0)));
            }
        }
        (labels, alg, env)
    }

    #[test]
    fn antisymmetry_cancels_like_terms() {
        let (l, _, _) = setup();
        let a = JetTerm::jet(&l, EdgeType::new(0));
        let b = JetTerm::jet(&l, EdgeType::new(1));
        assert!(a.bracket(&b).add(&b.bracket(&a)).is_zero());
        assert!(a.bracket(&a).is_zero());
    }

    #[test]
    fn derivative_of_bilinear_form_matches_finite_difference() {
        let (l, alg, env) = setup();
        let a = JetTerm::jet(&l, EdgeType::new(0));
        let b = JetTerm::jet(&l, EdgeType::new(1));
        // F = [a, [a, b]]
        let f = a.bracket(&a.bracket(&b));
        let df = f.derivative(EdgeType::new(0), 0);
        let dir = JetTerm::jet(&l, EdgeType::d(1, 1));
        let lin = df.substitute_dir(0, &dir).evaluate(&alg, &env, &[]).unwrap();
        let h = 1e-6;
        let mut plus = env.clone();
        let mut minus = env.clone();
        let step = env.values[&EdgeType::d(1, 1)].as_alg().unwrap().clone();
        let base = env.values[&EdgeType::new(0)].as_alg().unwrap().clone();
        plus.set(EdgeType::new(0), Value::Alg(&base + &(&step * h)));
        minus.set(EdgeType::new(0), Value::Alg(&base - &(&step * h)));
        let fd = {
            let mut p = f.evaluate(&alg, &plus, &[]).unwrap();
            p.axpy(-1.0, &f.evaluate(&alg, &minus, &[]).unwrap()).unwrap();
            match p {
                Value::Alg(x) => x.scale(0.5 / h),
                _ => unreachable!(),
            }
        };
        assert!(Value::Alg(fd).distance(&lin).unwrap() < 1e-8);
    }

    #[test]
    fn shift_is_a_derivation() {
        let (l, _, _) = setup();
        let a = JetTerm::jet(&l, EdgeType::new(0));
        let b = JetTerm::jet(&l, EdgeType::new(1));
        let lhs = a.bracket(&b).shift(1);
        let rhs = a.shift(1).bracket(&b).add(&a.bracket(&b.shift(1)));
        assert_eq!(lhs, rhs);
        assert_eq!(a.shift(1), JetTerm::jet(&l, EdgeType::d(0, 1)));
    }

    #[test]
    fn operators_evaluate() {
        let (l, alg, env) = setup();
        let a = JetTerm::jet(&l, EdgeType::new(0));
        let b = JetTerm::jet(&l, EdgeType::new(1));
        let via_ad = a.ad().apply(&b).evaluate(&alg, &env, &[]).unwrap();
        let direct = a.bracket(&b).evaluate(&alg, &env, &[]).unwrap();
        assert!(via_ad.distance(&direct).unwrap() < 1e-14);
        let comp = a.ad().compose(&b.ad()).evaluate(&alg, &env, &[]).unwrap();
        assert_eq!(comp.as_op().unwrap().nrows(), 3);
        assert!(!a.bracket(&b).render(&l).is_empty());
    }
}
