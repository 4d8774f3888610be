//! Decorated trees in canonical form.

use super::labels::{scaled, Degree, EdgeType, LabelSet, NodeType, Rule};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Rooted tree with a polynomial decoration at each node and typed edges.
/// Children are kept sorted, so structural equality is tree isomorphism.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DecoratedTree {
    pub poly: [u8; 3],
    pub children: Vec<(EdgeType, DecoratedTree)>,
}

impl DecoratedTree {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn x(poly: [u8; 3]) -> Self {
        Self { poly, children: Vec::new() }
    }

    pub fn new(poly: [u8; 3], mut children: Vec<(EdgeType, DecoratedTree)>) -> Self {
        children.sort();
        Self { poly, children }
    }

    /// Tree with a single edge of type `e` above `child`.
    pub fn planted(e: EdgeType, child: DecoratedTree) -> Self {
        Self { poly: [0; 3], children: vec![(e, child)] }
    }

    /// Tree product: roots merged, polynomials multiplied.
    pub fn product(&self, other: &DecoratedTree) -> DecoratedTree {
        let mut poly = self.poly;
        for (p, q) in poly.iter_mut().zip(other.poly) {
            *p += q;
        }
        let mut children = self.children.clone();
        children.extend(other.children.iter().cloned());
        Self::new(poly, children)
    }

    pub fn is_one(&self) -> bool {
        self.poly == [0; 3] && self.children.is_empty()
    }

    pub fn is_planted(&self) -> bool {
        self.poly == [0; 3] && self.children.len() == 1
    }

    pub fn node_type(&self) -> NodeType {
        self.children.iter().map(|c| c.0).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(|(_, c)| 1 + c.edge_count()).sum()
    }

    /// Edges plus total polynomial order.
    pub fn size(&self) -> usize {
        self.poly.iter().map(|&p| p as usize).sum::<usize>() + self.children.iter().map(|(_, c)| 1 + c.size()).sum::<usize>()
    }

    pub fn degree(&self, labels: &LabelSet) -> Degree {
        Degree::int(scaled(&self.poly))
            + self
                .children
                .iter()
                .map(|(e, c)| labels.edge_degree(e) + c.degree(labels))
                .sum()
    }

    /// Noise edges, in traversal order.
    pub fn noise_edges(&self, labels: &LabelSet) -> Vec<EdgeType> {
        let mut out = Vec::new();
        self.visit_edges(&mut |e, _| {
            if labels.is_noise(e.label) {
                out.push(*e)
            }
        });
        out
    }

    pub fn visit_edges<F: FnMut(&EdgeType, &DecoratedTree)>(&self, f: &mut F) {
        for (e, c) in &self.children {
            f(e, c);
            c.visit_edges(f);
        }
    }

    pub fn visit_nodes<F: FnMut(&DecoratedTree)>(&self, f: &mut F) {
        f(self);
        for (_, c) in &self.children {
            c.visit_nodes(f);
        }
    }

    /// Strong conformity: every edge's target node has a type allowed by the edge's label,
    /// and the root type is allowed by some label.
    pub fn conforms(&self, labels: &LabelSet, rule: &Rule) -> bool {
        let root_ok = (0..labels.len()).any(|t| rule.allows(t, &self.node_type()));
        root_ok && self.children_conform(rule)
    }

    fn children_conform(&self, rule: &Rule) -> bool {
        self.children
            .iter()
            .all(|(e, c)| rule.allows(e.label, &c.node_type()) && c.children_conform(rule))
    }

    /// Unique string for the isomorphism class.
    pub fn canonical_string(&self, labels: &LabelSet) -> String {
        let mut s = String::new();
        self.write_canonical(labels, &mut s);
        s
    }

    fn write_canonical(&self, labels: &LabelSet, s: &mut String) {
        if self.poly != [0; 3] {
            s.push_str(&format!("X{:?}", self.poly));
        }
        if self.children.is_empty() {
            if self.poly == [0; 3] {
                s.push('1');
            }
            return;
        }
        s.push('{');
        for (n, (e, c)) in self.children.iter().enumerate() {
            if n > 0 {
                s.push(',');
            }
            s.push_str(&labels.edge_name(e).replace(' ', ""));
            s.push('(');
            c.write_canonical(labels, s);
            s.push(')');
        }
        s.push('}');
    }

    pub fn canonical_hash(&self, labels: &LabelSet) -> u64 {
        fnv1a(self.canonical_string(labels).as_bytes())
    }

    /// Index-free form, e.g. "I[Ξ]I'[Ξ]".
    pub fn form(&self, labels: &LabelSet) -> String {
        render(self, &|e| labels.get(e.label).symbol.clone(), labels)
    }

    /// Form with kernel and noise families identified: only "I" and "Ξ" appear.
    pub fn shape(&self, labels: &LabelSet) -> String {
        render(self, &|e| if labels.is_noise(e.label) { "Ξ".into() } else { "I".into() }, labels)
    }

    /// S(τ) = k! Π S(τ_j)^{β_j} β_j! over distinct planted children.
    pub fn symmetry_factor(&self) -> u64 {
        let mut s: u64 = self.poly.iter().map(|&p| factorial(p as u64)).product();
        let mut i = 0;
        while i < self.children.len() {
            let mut j = i;
            while j < self.children.len() && self.children[j] == self.children[i] {
                j += 1;
            }
            let beta = (j - i) as u32;
            s *= self.children[i].1.symmetry_factor().pow(beta) * factorial(beta as u64);
            i = j;
        }
        s
    }

    pub fn flatten(&self) -> FlatTree {
        let mut f = FlatTree {
            parent: vec![None],
            edge: vec![None],
            poly: vec![self.poly],
        };
        fn go(t: &DecoratedTree, me: usize, f: &mut FlatTree) {
            for (e, c) in &t.children {
                let id = f.parent.len();
                f.parent.push(Some(me));
                f.edge.push(Some(*e));
                f.poly.push(c.poly);
                go(c, id, f);
            }
        }
        go(self, 0, &mut f);
        f
    }
}

/// Vertex list with parent pointers; vertex 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatTree {
    pub parent: Vec<Option<usize>>,
    /// Type of the edge to the parent.
    pub edge: Vec<Option<EdgeType>>,
    pub poly: Vec<[u8; 3]>,
}

impl FlatTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn to_tree(&self) -> Result<DecoratedTree> {
        if self.parent.first() != Some(&None) || self.parent.iter().skip(1).any(|p| p.is_none()) {
            return Err(Error::InvalidArgument("flat tree must have exactly one root at vertex 0".into()));
        }
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for (v, p) in self.parent.iter().enumerate().skip(1) {
            let p = p.unwrap();
            if p >= self.len() {
                return Err(Error::InvalidArgument(format!("vertex {v} has invalid parent {p}")));
            }
            kids[p].push(v);
        }
        fn build(v: usize, f: &FlatTree, kids: &[Vec<usize>], depth: usize) -> Result<DecoratedTree> {
            if depth > f.len() {
                return Err(Error::InvalidArgument("flat tree contains a cycle".into()));
            }
            let mut ch = Vec::new();
            for &c in &kids[v] {
                let e = f.edge[c].ok_or_else(|| Error::InvalidArgument(format!("vertex {c} lacks an edge type")))?;
                ch.push((e, build(c, f, kids, depth + 1)?));
            }
            Ok(DecoratedTree::new(f.poly[v], ch))
        }
        build(0, self, &kids, 0)
    }

    /// Number of vertex permutations fixing the root and preserving parents, edge types and
    /// polynomials. Brute force; intended for small trees.
    pub fn automorphism_count(&self) -> u64 {
        let n = self.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut count = 0;
        fn rec(k: usize, perm: &mut Vec<usize>, used: &mut Vec<bool>, f: &FlatTree, count: &mut u64) {
            let n = f.len();
            if k == n {
                *count += 1;
                return;
            }
            for v in 1..n {
                if used[v] || f.poly[v] != f.poly[k] || f.edge[v] != f.edge[k] {
                    continue;
                }
                // Parents are listed before children, so perm[parent[k]] is already fixed.
                let pk = f.parent[k].unwrap();
                if f.parent[v] != Some(perm[pk]) {
                    continue;
                }
                used[v] = true;
                perm[k] = v;
                rec(k + 1, perm, used, f, count);
                used[v] = false;
            }
        }
        let mut used = vec![false; n];
        used[0] = true;
        rec(1, &mut perm, &mut used, self, &mut count);
        count
    }

    /// Brute-force S(τ): automorphisms times the polynomial factorials.
    pub fn symmetry_factor_brute(&self) -> u64 {
        let poly: u64 = self.poly.iter().flat_map(|p| p.iter()).map(|&k| factorial(k as u64)).product();
        self.automorphism_count() * poly
    }
}

fn factorial(n: u64) -> u64 {
    (1..=n).product()
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn poly_str(p: &[u8; 3]) -> String {
    match scaled(p) {
        0 => String::new(),
        1 => "X".into(),
        n => format!("X^{n}"),
    }
}

fn render(t: &DecoratedTree, sym: &dyn Fn(&EdgeType) -> String, labels: &LabelSet) -> String {
    let body = render_node(t, sym, labels);
    if body.is_empty() {
        "1".into()
    } else {
        body
    }
}

fn render_node(t: &DecoratedTree, sym: &dyn Fn(&EdgeType) -> String, labels: &LabelSet) -> String {
    let mut parts: Vec<String> = t
        .children
        .iter()
        .map(|(e, c)| {
            let mut s = sym(e);
            s.push_str(&"'".repeat(scaled(&e.deriv) as usize));
            if !labels.is_noise(e.label) {
                s.push('[');
                s.push_str(&render(c, sym, labels));
                s.push(']');
            }
            s
        })
        .collect();
    parts.sort();
    poly_str(&t.poly) + &parts.concat()
}

/// Symbolic form tree, used to normalise hand-written form strings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct FormNode {
    poly: usize,
    children: Vec<(String, usize, Option<FormNode>)>,
}

impl FormNode {
    fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .children
            .iter()
            .map(|(s, d, c)| {
                let mut out = s.clone() + &"'".repeat(*d);
                if let Some(c) = c {
                    let inner = c.render();
                    out.push('[');
                    out.push_str(if inner.is_empty() { "1" } else { &inner });
                    out.push(']');
                }
                out
            })
            .collect();
        parts.sort();
        let p = match self.poly {
            0 => String::new(),
            1 => "X".into(),
            n => format!("X^{n}"),
        };
        p + &parts.concat()
    }
}

/// Rewrites a form string such as "I'Ξ·I[IΞ]" or "I[XΞ]I'[Ξ]" into the canonical rendering used
/// by [`DecoratedTree::form`]. Kernel symbols may omit brackets around a single noise.
pub fn normalize_form(labels: &LabelSet, s: &str) -> Result<String> {
    let mut symbols: Vec<(String, bool)> = Vec::new();
    for l in &labels.labels {
        if !symbols.iter().any(|(x, _)| *x == l.symbol) {
            symbols.push((l.symbol.clone(), labels.is_noise(labels.id(&l.name)?)));
        }
    }
    // Longest match first, so "Ξ̄" wins over "Ξ".
    symbols.sort_by_key(|(x, _)| std::cmp::Reverse(x.len()));
    let cleaned: String = s.chars().filter(|c| !c.is_whitespace() && *c != '·').collect();
    let mut p = Parser { s: &cleaned, pos: 0, symbols: &symbols };
    let node = p.node()?;
    if p.pos != cleaned.len() {
        return Err(Error::InvalidArgument(format!("trailing input in form {s:?} at byte {}", p.pos)));
    }
    let r = node.render();
    Ok(if r.is_empty() { "1".into() } else { r })
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
    symbols: &'a [(String, bool)],
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.s[self.pos..]
    }

    fn err(&self) -> Error {
        Error::InvalidArgument(format!("cannot parse form {:?} at byte {}", self.s, self.pos))
    }

    fn node(&mut self) -> Result<FormNode> {
        let mut poly = 0;
        if self.rest() == "1" || self.rest().starts_with("1]") {
            self.pos += 1;
            return Ok(FormNode { poly: 0, children: Vec::new() });
        }
        while let Some(r) = self.rest().strip_prefix('X') {
            let digits: String = r.strip_prefix('^').map(|d| d.chars().take_while(|c| c.is_ascii_digit()).collect()).unwrap_or_default();
            if digits.is_empty() {
                self.pos += 1;
                poly += 1;
            } else {
                self.pos += 2 + digits.len();
                poly += digits.parse::<usize>().map_err(|_| self.err())?;
            }
        }
        let mut children = Vec::new();
        loop {
            let Some((sym, noise)) = self.symbols.iter().find(|(x, _)| self.rest().starts_with(x.as_str())).cloned() else {
                break;
            };
            self.pos += sym.len();
            let mut d = 0;
            while self.rest().starts_with('\'') {
                d += 1;
                self.pos += 1;
            }
            if noise {
                children.push((sym, d, None));
                continue;
            }
            let inner = if self.rest().starts_with('[') {
                self.pos += 1;
                let n = self.node()?;
                if !self.rest().starts_with(']') {
                    return Err(self.err());
                }
                self.pos += 1;
                n
            } else {
                // Bare kernel: takes a following (poly)noise atom.
                let mut poly = 0;
                while let Some(r) = self.rest().strip_prefix('X') {
                    let _ = r;
                    self.pos += 1;
                    poly += 1;
                }
                let Some((ns, true)) = self.symbols.iter().find(|(x, _)| self.rest().starts_with(x.as_str())).cloned() else {
                    return Err(self.err());
                };
                self.pos += ns.len();
                FormNode { poly, children: vec![(ns, 0, None)] }
            };
            children.push((sym, d, Some(inner)));
        }
        Ok(FormNode { poly, children })
    }
}

/// Counts trees by their forms.
pub fn form_histogram<'a, I: IntoIterator<Item = &'a DecoratedTree>>(labels: &LabelSet, trees: I) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in trees {
        *m.entry(t.form(labels)).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym_cherry(l: &LabelSet) -> DecoratedTree {
        let xi = |i| DecoratedTree::planted(EdgeType::new(l.member("l", i)), DecoratedTree::one());
        let a = |i| EdgeType::new(l.member("a", i));
        DecoratedTree::new([0; 3], vec![(a(2), xi(2)), (a(2), xi(2))])
    }

    #[test]
    fn canonical_order_ignores_insertion_order() {
        let l = LabelSet::sym();
        let xi = |i| DecoratedTree::planted(EdgeType::new(l.member("l", i)), DecoratedTree::one());
        let a = |i| EdgeType::new(l.member("a", i));
        let s = DecoratedTree::new([0; 3], vec![(a(1), xi(1)), (EdgeType::d(l.member("a", 2), 1), xi(2))]);
        let t = DecoratedTree::new([0; 3], vec![(EdgeType::d(l.member("a", 2), 1), xi(2)), (a(1), xi(1))]);
        assert_eq!(s, t);
        assert_eq!(s.canonical_hash(&l), t.canonical_hash(&l));
        assert_eq!(s.form(&l), "I'[Ξ]I[Ξ]");
        assert_eq!(s.shape(&l), s.form(&l));
        assert_eq!(s.flatten().to_tree().unwrap(), s);
    }

    #[test]
    fn degree_and_symmetry_of_cherry() {
        let l = LabelSet::sym();
        let c = sym_cherry(&l);
        assert_eq!(c.degree(&l).to_string(), "-2k");
        assert_eq!(c.symmetry_factor(), 2);
        assert_eq!(c.flatten().symmetry_factor_brute(), 2);
        assert_eq!(c.noise_edges(&l).len(), 2);
        assert_eq!(c.size(), 4);
    }

    #[test]
    fn polynomial_factorials_enter_symmetry() {
        let l = LabelSet::sym();
        let n = DecoratedTree::planted(EdgeType::new(l.member("l", 1)), DecoratedTree::one());
        let t = DecoratedTree::new([0, 2, 0], n.children.clone());
        assert_eq!(t.symmetry_factor(), 2);
        assert_eq!(t.flatten().symmetry_factor_brute(), 2);
        assert_eq!(t.form(&l), "X^2Ξ");
    }

    #[test]
    fn normalize_form_strings() {
        let l = LabelSet::sym();
        assert_eq!(normalize_form(&l, "IΞ·I'Ξ").unwrap(), "I'[Ξ]I[Ξ]");
        assert_eq!(normalize_form(&l, "I[I'Ξ]·I'Ξ").unwrap(), "I'[Ξ]I[I'[Ξ]]");
        assert_eq!(normalize_form(&l, "I[XΞ]I'Ξ").unwrap(), "I'[Ξ]I[XΞ]");
        assert_eq!(normalize_form(&l, "X^2Ξ").unwrap(), "X^2Ξ");
        assert_eq!(normalize_form(&l, "1").unwrap(), "1");
        let g = LabelSet::gauge();
        assert_eq!(normalize_form(&g, "Iᵘ[IΞ̄]Ξ̄").unwrap(), "Iᵘ[I[Ξ̄]]Ξ̄");
        assert!(normalize_form(&l, "I[Ξ").is_err());
    }

    #[test]
    fn malformed_flat_trees_are_rejected() {
        let l = LabelSet::sym();
        let mut f = sym_cherry(&l).flatten();
        f.parent[1] = Some(9);
        assert!(f.to_tree().is_err());
        let mut f = sym_cherry(&l).flatten();
        f.edge[2] = None;
        assert!(f.to_tree().is_err());
    }
}
