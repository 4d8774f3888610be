//! Labels, degrees and rules.

use crate::{Error, Result};
use num_rational::Rational64;
use std::collections::BTreeSet;
use std::fmt;

pub type Q = Rational64;

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

/// Degree `constant + kappa·κ`, exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Degree {
    pub constant: Q,
    pub kappa: Q,
}

impl Degree {
    pub const ZERO: Degree = Degree {
        constant: Q::new_raw(0, 1),
        kappa: Q::new_raw(0, 1),
    };

    pub fn new(constant: Q, kappa: Q) -> Self {
        Self { constant, kappa }
    }

    pub fn int(n: i64) -> Self {
        Self::new(Q::from_integer(n), Q::from_integer(0))
    }

    pub fn at(&self, kappa: Q) -> Q {
        self.constant + self.kappa * kappa
    }

    pub fn at_f64(&self, kappa: f64) -> f64 {
        to_f64(self.constant) + to_f64(self.kappa) * kappa
    }

    /// Parses strings such as "-2-k", "1/2+3k", "-3k", "0".
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse degree {s:?}"));
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let t = t.replace('κ', "k").replace('*', "");
        if t.is_empty() {
            return Err(bad());
        }
        let mut out = Degree::ZERO;
        let mut start = 0;
        let b = t.as_bytes();
        for i in 1..=b.len() {
            if i == b.len() || ((b[i] == b'+' || b[i] == b'-') && b[i - 1] != b'/') {
                let piece = &t[start..i];
                start = i;
                let (body, is_k) = match piece.strip_suffix('k') {
                    Some(p) => (p, true),
                    None => (piece, false),
                };
                let coeff = match body {
                    "" | "+" => Q::from_integer(1),
                    "-" => Q::from_integer(-1),
                    _ => parse_q(body).ok_or_else(bad)?,
                };
                if is_k {
                    out.kappa += coeff;
                } else {
                    out.constant += coeff;
                }
            }
        }
        Ok(out)
    }
}

fn parse_q(s: &str) -> Option<Q> {
    let s = s.strip_prefix('+').unwrap_or(s);
    match s.split_once('/') {
        Some((n, d)) => {
            let d: i64 = d.parse().ok()?;
            let n: i64 = n.parse().ok()?;
            (d != 0).then(|| q(n, d))
        }
        None => Some(Q::from_integer(s.parse().ok()?)),
    }
}

pub fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

impl std::ops::Add for Degree {
    type Output = Degree;
    fn add(self, o: Degree) -> Degree {
        Degree::new(self.constant + o.constant, self.kappa + o.kappa)
    }
}

impl std::ops::Sub for Degree {
    type Output = Degree;
    fn sub(self, o: Degree) -> Degree {
        Degree::new(self.constant - o.constant, self.kappa - o.kappa)
    }
}

impl std::iter::Sum for Degree {
    fn sum<I: Iterator<Item = Degree>>(iter: I) -> Degree {
        iter.fold(Degree::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let zero = Q::from_integer(0);
        let one = Q::from_integer(1);
        let k = self.kappa;
        if k == zero {
            return write!(f, "{}", self.constant);
        }
        let kpart = if k == one {
            "k".to_string()
        } else if k == -one {
            "-k".to_string()
        } else {
            format!("{k}k")
        };
        if self.constant == zero {
            write!(f, "{kpart}")
        } else if k > zero {
            write!(f, "{}+{kpart}", self.constant)
        } else {
            write!(f, "{}{kpart}", self.constant)
        }
    }
}

/// Open interval of admissible κ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KappaInterval {
    pub lo: Q,
    pub hi: Q,
}

impl KappaInterval {
    pub fn new(lo: Q, hi: Q) -> Result<Self> {
        if !(lo >= Q::from_integer(0) && lo < hi && hi <= q(1, 4)) {
            return Err(Error::InvalidArgument(format!(
                "κ interval ({lo}, {hi}) must be a non-empty subinterval of (0, 1/4)"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn endpoints(&self) -> [Q; 2] {
        [self.lo, self.hi]
    }

    /// `d < 0` for every κ in the interval (closure endpoints may touch zero).
    pub fn certainly_negative(&self, d: &Degree) -> bool {
        let (a, b) = (d.at(self.lo), d.at(self.hi));
        let z = Q::from_integer(0);
        a <= z && b <= z && !(a == z && b == z)
    }

    /// `d < 0` for some κ in the interval.
    pub fn possibly_negative(&self, d: &Degree) -> bool {
        let z = Q::from_integer(0);
        d.at(self.lo) < z || d.at(self.hi) < z
    }

    pub fn midpoint(&self) -> Q {
        (self.lo + self.hi) / Q::from_integer(2)
    }
}

impl Default for KappaInterval {
    fn default() -> Self {
        Self { lo: q(0, 1), hi: q(1, 4) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelKind {
    Kernel,
    Noise,
}

/// What a jet component with this label takes values in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Algebra,
    /// Linear maps of the algebra.
    Operator,
}

pub type LabelId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct Label {
    /// Concrete name, e.g. "a1".
    pub name: String,
    /// Family, e.g. "a".
    pub family: String,
    /// Symbol used in forms, e.g. "I".
    pub symbol: String,
    pub index: Option<usize>,
    pub kind: LabelKind,
    pub target: Target,
    pub degree: Degree,
}

/// Edge type: label plus derivative multi-index (time first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeType {
    pub label: LabelId,
    pub deriv: [u8; 3],
}

impl EdgeType {
    pub fn new(label: LabelId) -> Self {
        Self { label, deriv: [0; 3] }
    }

    pub fn d(label: LabelId, dir: usize) -> Self {
        let mut deriv = [0; 3];
        deriv[dir] = 1;
        Self { label, deriv }
    }

    pub fn shifted(&self, dir: usize) -> Self {
        let mut e = *self;
        e.deriv[dir] += 1;
        e
    }
}

/// Parabolic size of a multi-index.
pub fn scaled(k: &[u8; 3]) -> i64 {
    2 * k[0] as i64 + k[1] as i64 + k[2] as i64
}

/// Node type: sorted multiset of edge types.
pub type NodeType = Vec<EdgeType>;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelSet {
    pub labels: Vec<Label>,
    /// Spatial dimension; only 2 is supported.
    pub dim: usize,
}

impl LabelSet {
    /// Labels a_i (kernel) and l_i (noise).
    pub fn sym() -> Self {
        let mut s = Self { labels: Vec::new(), dim: 2 };
        s.push_family("a", "I", LabelKind::Kernel, Target::Algebra, Degree::int(2), true);
        s.push_family("l", "Ξ", LabelKind::Noise, Target::Algebra, s.noise_degree(), true);
        s
    }

    /// Labels of the coupled gauge system: a_i, m_i, h_i, u (kernels) and l_i, lb_i (noises).
    pub fn gauge() -> Self {
        let mut s = Self { labels: Vec::new(), dim: 2 };
        let two_minus = Degree::new(Q::from_integer(2), Q::from_integer(-1));
        s.push_family("a", "I", LabelKind::Kernel, Target::Algebra, Degree::int(2), true);
        s.push_family("m", "Ī", LabelKind::Kernel, Target::Algebra, two_minus, true);
        s.push_family("h", "Iʰ", LabelKind::Kernel, Target::Algebra, Degree::int(2), true);
        s.push_family("u", "Iᵘ", LabelKind::Kernel, Target::Operator, Degree::int(2), false);
        let nd = s.noise_degree();
        s.push_family("l", "Ξ", LabelKind::Noise, Target::Algebra, nd, true);
        s.push_family("lb", "Ξ̄", LabelKind::Noise, Target::Algebra, nd, true);
        s
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sym" => Ok(Self::sym()),
            "gauge" => Ok(Self::gauge()),
            _ => Err(Error::InvalidArgument(format!("unknown rule {name:?}; expected sym or gauge"))),
        }
    }

    fn noise_degree(&self) -> Degree {
        Degree::new(q(-(self.dim as i64) - 2, 2), Q::from_integer(-1))
    }

    fn push_family(&mut self, family: &str, symbol: &str, kind: LabelKind, target: Target, degree: Degree, indexed: bool) {
        let indices: Vec<Option<usize>> = if indexed { (1..=self.dim).map(Some).collect() } else { vec![None] };
        for index in indices {
            let name = match index {
                Some(i) => format!("{family}{i}"),
                None => family.to_string(),
            };
            self.labels.push(Label {
                name,
                family: family.into(),
                symbol: symbol.into(),
                index,
                kind,
                target,
                degree,
            });
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, id: LabelId) -> &Label {
        &self.labels[id]
    }

    pub fn id(&self, name: &str) -> Result<LabelId> {
        self.labels
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label {name:?}")))
    }

    /// Label of `family` with spatial index `i` (1-based); `i` ignored for unindexed families.
    pub fn member(&self, family: &str, i: usize) -> LabelId {
        self.labels
            .iter()
            .position(|l| l.family == family && (l.index.is_none() || l.index == Some(i)))
            .unwrap_or_else(|| panic!("no label {family}{i}"))
    }

    pub fn is_noise(&self, id: LabelId) -> bool {
        self.labels[id].kind == LabelKind::Noise
    }

    pub fn kernels(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.len()).filter(|&i| !self.is_noise(i))
    }

    pub fn noises(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.len()).filter(|&i| self.is_noise(i))
    }

    pub fn edge_degree(&self, e: &EdgeType) -> Degree {
        self.labels[e.label].degree - Degree::int(scaled(&e.deriv))
    }

    /// Kernel degrees must be 2 or 2−κ, noise degrees −d/2−1−κ.
    pub fn validate(&self) -> Result<()> {
        let two = Degree::int(2);
        let two_minus = Degree::new(Q::from_integer(2), Q::from_integer(-1));
        for l in &self.labels {
            let ok = match l.kind {
                LabelKind::Kernel => l.degree == two || l.degree == two_minus,
                LabelKind::Noise => l.degree == self.noise_degree(),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!("label {} has inadmissible degree {}", l.name, l.degree)));
            }
        }
        Ok(())
    }

    /// Human-readable edge type, e.g. "a1" or "∂2 a1".
    pub fn edge_name(&self, e: &EdgeType) -> String {
        let mut s = String::new();
        for (dir, &n) in e.deriv.iter().enumerate() {
            for _ in 0..n {
                s.push_str(&format!("∂{dir} "));
            }
        }
        s + &self.labels[e.label].name
    }
}

/// Assignment of admissible node types to each label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub types: Vec<BTreeSet<NodeType>>,
}

impl Rule {
    pub fn empty(labels: &LabelSet) -> Self {
        let mut types = vec![BTreeSet::new(); labels.len()];
        for n in labels.noises() {
            types[n].insert(Vec::new());
        }
        Self { types }
    }

    pub fn insert(&mut self, label: LabelId, mut node: NodeType) -> bool {
        node.sort();
        self.types[label].insert(node)
    }

    pub fn allows(&self, label: LabelId, node: &[EdgeType]) -> bool {
        self.types[label].contains(node)
    }

    /// Closes every set of node types under taking sub-multisets.
    pub fn normal_extension(&self) -> Rule {
        let mut out = self.clone();
        for (t, set) in self.types.iter().enumerate() {
            for node in set {
                for sub in sub_multisets(node) {
                    out.types[t].insert(sub);
                }
            }
        }
        out
    }

    pub fn is_normal(&self) -> bool {
        self.normal_extension() == *self
    }

    /// Node types of `label` not strictly contained in another one.
    pub fn maximal(&self, label: LabelId) -> Vec<&NodeType> {
        let set = &self.types[label];
        set.iter()
            .filter(|n| !set.iter().any(|m| m.len() > n.len() && contains_multiset(m, n)))
            .collect()
    }

    /// Rule of the symmetric system: R(a_i) ∋ {l_i}, {a_i a_j a_j}, {a_j ∂_i a_j}, {a_j ∂_j a_i}.
    pub fn sym(labels: &LabelSet) -> Rule {
        let mut r = Rule::empty(labels);
        let d = labels.dim;
        for i in 1..=d {
            let ai = labels.member("a", i);
            r.insert(ai, vec![EdgeType::new(labels.member("l", i))]);
            for j in 1..=d {
                let aj = labels.member("a", j);
                r.insert(ai, vec![EdgeType::new(ai), EdgeType::new(aj), EdgeType::new(aj)]);
                r.insert(ai, vec![EdgeType::new(aj), EdgeType::d(aj, i)]);
                r.insert(ai, vec![EdgeType::new(aj), EdgeType::d(ai, j)]);
            }
        }
        r.normal_extension()
    }

    /// Rule of the coupled gauge system, q ranging over {a, m}.
    pub fn gauge(labels: &LabelSet) -> Rule {
        let mut r = Rule::empty(labels);
        let d = labels.dim;
        let u = EdgeType::new(labels.member("u", 0));
        let e = |f: &str, i: usize| EdgeType::new(labels.member(f, i));
        let de = |f: &str, i: usize, dir: usize| EdgeType::d(labels.member(f, i), dir);
        let qs = ["a", "m"];
        for i in 1..=d {
            r.insert(labels.member("m", i), vec![u, e("l", i)]);
            let hi = labels.member("h", i);
            let ai = labels.member("a", i);
            for j in 1..=d {
                r.insert(labels.member("u", 0), vec![u, e("h", j), e("h", j)]);
                r.insert(hi, vec![e("h", j), de("h", i, j)]);
                for q1 in qs {
                    r.insert(labels.member("u", 0), vec![u, e(q1, j), e("h", j)]);
                    r.insert(hi, vec![e(q1, j), e("h", j), e("h", i)]);
                    r.insert(hi, vec![e("h", j), de(q1, j, i)]);
                    r.insert(hi, vec![e(q1, j), de("h", j, i)]);
                    r.insert(ai, vec![e(q1, i)]);
                    for q2 in qs {
                        for q3 in qs {
                            r.insert(ai, vec![e(q1, i), e(q2, j), e(q3, j)]);
                        }
                        r.insert(ai, vec![e(q1, j), de(q2, j, i)]);
                        r.insert(ai, vec![e(q1, j), de(q2, i, j)]);
                    }
                }
            }
            r.insert(ai, vec![e("h", i)]);
            r.insert(ai, vec![u, e("l", i)]);
            r.insert(ai, vec![u, e("lb", i)]);
        }
        r.normal_extension()
    }

    pub fn by_name(labels: &LabelSet, name: &str) -> Result<Rule> {
        match name {
            "sym" => Ok(Rule::sym(labels)),
            "gauge" => Ok(Rule::gauge(labels)),
            _ => Err(Error::InvalidArgument(format!("unknown rule {name:?}; expected sym or gauge"))),
        }
    }
}

/// All sub-multisets of a sorted multiset, each sorted.
pub fn sub_multisets(node: &[EdgeType]) -> Vec<NodeType> {
    let mut out = vec![Vec::new()];
    let mut i = 0;
    while i < node.len() {
        let mut j = i;
        while j < node.len() && node[j] == node[i] {
            j += 1;
        }
        let mult = j - i;
        let mut next = Vec::with_capacity(out.len() * (mult + 1));
        for base in &out {
            for m in 0..=mult {
                let mut v = base.clone();
                v.extend(std::iter::repeat_n(node[i], m));
                next.push(v);
            }
        }
        out = next;
        i = j;
    }
    out
}

/// `big ⊇ small` as sorted multisets.
pub fn contains_multiset(big: &[EdgeType], small: &[EdgeType]) -> bool {
    let mut i = 0;
    for s in small {
        while i < big.len() && big[i] < *s {
            i += 1;
        }
        if i == big.len() || big[i] != *s {
            return false;
        }
        i += 1;
    }
    true
}

/// `big − small` as sorted multisets; assumes containment.
pub fn multiset_difference(big: &[EdgeType], small: &[EdgeType]) -> NodeType {
    let mut out = Vec::new();
    let mut j = 0;
    for b in big {
        if j < small.len() && small[j] == *b {
            j += 1;
        } else {
            out.push(*b);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_parse_and_display() {
        for s in ["-2-k", "-1-2k", "-3k", "0", "2", "1/2+3/2k", "-k"] {
            let d = Degree::parse(s).unwrap();
            assert_eq!(Degree::parse(&d.to_string()).unwrap(), d, "{s}");
        }
        assert_eq!(Degree::parse("-2-k").unwrap(), Degree::new(q(-2, 1), q(-1, 1)));
        assert_eq!(Degree::parse("-1/2k").unwrap(), Degree::new(q(0, 1), q(-1, 2)));
        assert_eq!(Degree::new(q(-1, 1), q(-2, 1)).to_string(), "-1-2k");
        assert!(Degree::parse("x").is_err());
    }

    #[test]
    fn label_degrees_are_admissible() {
        LabelSet::sym().validate().unwrap();
        LabelSet::gauge().validate().unwrap();
        let l = LabelSet::sym();
        assert_eq!(l.get(l.id("l1").unwrap()).degree.to_string(), "-2-k");
    }

    #[test]
    fn sub_multisets_count() {
        let e = |i| EdgeType::new(i);
        let n = vec![e(0), e(0), e(1)];
        let subs = sub_multisets(&n);
        assert_eq!(subs.len(), 6);
        assert!(subs.iter().all(|s| contains_multiset(&n, s)));
        assert_eq!(multiset_difference(&n, &[e(0)]), vec![e(0), e(1)]);
    }

    #[test]
    fn builtin_rules_are_normal() {
        let l = LabelSet::sym();
        let r = Rule::sym(&l);
        assert!(r.is_normal());
        let a1 = l.id("a1").unwrap();
        assert!(r.allows(a1, &[]));
        assert_eq!(r.maximal(a1).len(), 1 + 2 + 3);
        let g = LabelSet::gauge();
        assert!(Rule::gauge(&g).is_normal());
    }

    #[test]
    fn interval_checks() {
        let iv = KappaInterval::default();
        assert!(iv.certainly_negative(&Degree::parse("-3k").unwrap()));
        assert!(!iv.certainly_negative(&Degree::parse("-1+5k").unwrap()));
        assert!(iv.possibly_negative(&Degree::parse("-1+5k").unwrap()));
        assert!(!iv.possibly_negative(&Degree::parse("1-2k").unwrap()));
        assert!(KappaInterval::new(q(0, 1), q(1, 2)).is_err());
    }
}
