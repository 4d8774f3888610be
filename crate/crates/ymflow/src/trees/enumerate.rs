//! Enumeration of strongly conforming trees below a degree bound, and rule completion.

use super::labels::{contains_multiset, multiset_difference, scaled, Degree, EdgeType, KappaInterval, LabelId, LabelSet, NodeType, Rule, Q};
use super::tree::DecoratedTree;
use crate::{Error, Result};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::rc::Rc;

/// Where polynomial decorations may sit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PolyPlacement {
    /// Only on nodes whose children are all noise edges (including leaves of kernel edges).
    #[default]
    NoiseParents,
    /// On any node other than a noise leaf.
    Anywhere,
}

#[derive(Clone, Copy, Debug)]
pub struct EnumerationOptions {
    pub kappa: KappaInterval,
    pub budget: usize,
    pub placement: PolyPlacement,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            kappa: KappaInterval::default(),
            budget: 200_000,
            placement: PolyPlacement::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedTree {
    pub tree: DecoratedTree,
    pub degree: Degree,
    pub form: String,
    pub hash: u64,
    pub symmetry: u64,
}

impl EnumeratedTree {
    fn new(labels: &LabelSet, tree: DecoratedTree) -> Self {
        Self {
            degree: tree.degree(labels),
            form: tree.form(labels),
            hash: tree.canonical_hash(labels),
            symmetry: tree.symmetry_factor(),
            tree,
        }
    }

    /// Root carries no polynomial and is not a single planted edge.
    pub fn is_unplanted(&self) -> bool {
        self.tree.poly == [0; 3] && self.tree.children.len() >= 2
    }
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    pub bound: Degree,
    pub kappa: KappaInterval,
    /// Trees with degree below the bound for every κ in the interval.
    pub trees: Vec<EnumeratedTree>,
    /// Trees below the bound for part of the interval only.
    pub uncertified: Vec<EnumeratedTree>,
}

impl Enumeration {
    /// Unplanted trees with vanishing root polynomial.
    pub fn unplanted(&self) -> impl Iterator<Item = &EnumeratedTree> {
        self.trees.iter().filter(|t| t.is_unplanted())
    }
}

/// All trees strongly conforming to `rule` with degree below `bound`, in a deterministic order.
pub fn enumerate_trees(labels: &LabelSet, rule: &Rule, bound: Degree, opts: &EnumerationOptions) -> Result<Enumeration> {
    let mut en = Enumerator::new(labels, rule, opts)?;
    let ends = opts.kappa.endpoints();
    let b = [bound.at(ends[0]), bound.at(ends[1])];
    let mut all = BTreeSet::new();
    for t in 0..labels.len() {
        for (tree, _) in en.rooted(t, b, 0)?.iter() {
            all.insert(tree.clone());
        }
    }
    let mut trees = Vec::new();
    let mut uncertified = Vec::new();
    for tree in all {
        let e = EnumeratedTree::new(labels, tree);
        if opts.kappa.certainly_negative(&(e.degree - bound)) {
            trees.push(e);
        } else {
            uncertified.push(e);
        }
    }
    let mid = opts.kappa.midpoint();
    let key = |e: &EnumeratedTree| (e.degree.at(mid), e.tree.canonical_string(labels));
    trees.sort_by_cached_key(key);
    uncertified.sort_by_cached_key(key);
    Ok(Enumeration {
        bound,
        kappa: opts.kappa,
        trees,
        uncertified,
    })
}

type Bound = [Q; 2];
type Bag = Rc<Vec<(DecoratedTree, Degree)>>;

struct Enumerator<'a> {
    labels: &'a LabelSet,
    rule: &'a Rule,
    opts: &'a EnumerationOptions,
    ends: [Q; 2],
    /// Lower bound of rooted-tree degrees per label, at each κ endpoint.
    mu: Vec<Bound>,
    memo: HashMap<(LabelId, Bound), Bag>,
    active: HashSet<(LabelId, Bound)>,
    produced: usize,
}

const MAX_DEPTH: usize = 64;

impl<'a> Enumerator<'a> {
    fn new(labels: &'a LabelSet, rule: &'a Rule, opts: &'a EnumerationOptions) -> Result<Self> {
        let ends = opts.kappa.endpoints();
        let mu = min_degrees(labels, rule, ends)?;
        Ok(Self {
            labels,
            rule,
            opts,
            ends,
            mu,
            memo: HashMap::new(),
            active: HashSet::new(),
            produced: 0,
        })
    }

    fn at(&self, d: &Degree) -> Bound {
        [d.at(self.ends[0]), d.at(self.ends[1])]
    }

    fn below(&self, d: &Degree, b: &Bound) -> bool {
        let v = self.at(d);
        v[0] < b[0] || v[1] < b[1]
    }

    fn planted_min(&self, o: &EdgeType) -> Bound {
        let d = self.at(&self.labels.edge_degree(o));
        let m = self.mu[o.label];
        [d[0] + m[0], d[1] + m[1]]
    }

    fn rooted(&mut self, t: LabelId, b: Bound, depth: usize) -> Result<Bag> {
        let key = (t, b);
        if let Some(bag) = self.memo.get(&key) {
            return Ok(bag.clone());
        }
        if depth > MAX_DEPTH || !self.active.insert(key) {
            return Err(Error::BudgetExceeded { budget: self.opts.budget });
        }
        let mut out = Vec::new();
        if self.mu[t][0] < b[0] || self.mu[t][1] < b[1] {
            let types: Vec<NodeType> = self.rule.types[t].iter().cloned().collect();
            for node in types {
                let mins: Vec<Bound> = node.iter().map(|o| self.planted_min(o)).collect();
                let total = mins.iter().fold([Q::from_integer(0); 2], |a, m| [a[0] + m[0], a[1] + m[1]]);
                if !(total[0] < b[0] || total[1] < b[1]) {
                    continue;
                }
                let mut chosen = Vec::new();
                self.choose(t, &node, &mins, 0, &mut chosen, Degree::ZERO, 0, None, b, depth, &mut out)?;
            }
        }
        self.active.remove(&key);
        let bag = Rc::new(out);
        self.memo.insert(key, bag.clone());
        Ok(bag)
    }

    #[allow(clippy::too_many_arguments)]
    fn choose(
        &mut self,
        t: LabelId,
        node: &[EdgeType],
        mins: &[Bound],
        i: usize,
        chosen: &mut Vec<(EdgeType, DecoratedTree)>,
        partial: Degree,
        prev: usize,
        run: Option<Bag>,
        b: Bound,
        depth: usize,
        out: &mut Vec<(DecoratedTree, Degree)>,
    ) -> Result<()> {
        if i == node.len() {
            return self.finish(t, chosen, partial, b, out);
        }
        let o = node[i];
        let rest: Bound = mins[i + 1..].iter().fold([Q::from_integer(0); 2], |a, m| [a[0] + m[0], a[1] + m[1]]);
        let p = self.at(&partial);
        let od = self.at(&self.labels.edge_degree(&o));
        let cb = [b[0] - p[0] - rest[0] - od[0], b[1] - p[1] - rest[1] - od[1]];
        // Identical edges share the first one's (larger) candidate list, so that choosing
        // non-decreasing positions in it skips permutations.
        let same = i > 0 && node[i - 1] == o;
        let bag = match (&run, same) {
            (Some(bag), true) => bag.clone(),
            _ => self.rooted(o.label, cb, depth + 1)?,
        };
        let start = if same { prev } else { 0 };
        for (idx, (c, cd)) in bag.iter().enumerate().skip(start) {
            let d = partial + self.labels.edge_degree(&o) + *cd;
            let dv = self.at(&d);
            if !(dv[0] + rest[0] < b[0] || dv[1] + rest[1] < b[1]) {
                continue;
            }
            chosen.push((o, c.clone()));
            self.choose(t, node, mins, i + 1, chosen, d, idx, Some(bag.clone()), b, depth, out)?;
            chosen.pop();
        }
        Ok(())
    }

    fn finish(&mut self, t: LabelId, chosen: &[(EdgeType, DecoratedTree)], partial: Degree, b: Bound, out: &mut Vec<(DecoratedTree, Degree)>) -> Result<()> {
        let poly_ok = !self.labels.is_noise(t)
            && match self.opts.placement {
            PolyPlacement::Anywhere => true,
            PolyPlacement::NoiseParents => chosen.iter().all(|(e, _)| self.labels.is_noise(e.label)),
        };
        let mut s = 0i64;
        loop {
            let d = partial + Degree::int(s);
            if !self.below(&d, &b) {
                break;
            }
            for k in multi_indices(s) {
                self.produced += 1;
                if self.produced > self.opts.budget {
                    return Err(Error::BudgetExceeded { budget: self.opts.budget });
                }
                out.push((DecoratedTree::new(k, chosen.to_vec()), d));
            }
            if !poly_ok {
                break;
            }
            s += 1;
        }
        Ok(())
    }
}

/// Multi-indices (time, x1, x2) of parabolic size `s`.
fn multi_indices(s: i64) -> Vec<[u8; 3]> {
    let mut v = Vec::new();
    for k0 in 0..=s / 2 {
        for k1 in 0..=(s - 2 * k0) {
            let k = [k0 as u8, k1 as u8, (s - 2 * k0 - k1) as u8];
            debug_assert_eq!(scaled(&k), s);
            v.push(k);
        }
    }
    v
}

/// Smallest degree of a rooted tree per label, by min-plus fixed-point iteration.
fn min_degrees(labels: &LabelSet, rule: &Rule, ends: [Q; 2]) -> Result<Vec<Bound>> {
    let n = labels.len();
    let mut mu: Vec<Option<Bound>> = vec![None; n];
    let floor = Q::from_integer(-1000);
    for _ in 0..(4 * n + 16) {
        let mut changed = false;
        for t in 0..n {
            let mut best = mu[t];
            for node in &rule.types[t] {
                let mut acc = [Q::from_integer(0); 2];
                let mut ok = true;
                for o in node {
                    match mu[o.label] {
                        Some(m) => {
                            let d = labels.edge_degree(o);
                            acc = [acc[0] + d.at(ends[0]) + m[0], acc[1] + d.at(ends[1]) + m[1]];
                        }
                        None => ok = false,
                    }
                }
                if !ok {
                    continue;
                }
                best = Some(match best {
                    None => acc,
                    Some(b) => [b[0].min(acc[0]), b[1].min(acc[1])],
                });
            }
            if best != mu[t] {
                if let Some(b) = best {
                    if b[0] < floor || b[1] < floor {
                        return Err(Error::InvalidArgument(format!(
                            "rule is not subcritical on the κ interval: degrees below label {} are unbounded",
                            labels.get(t).name
                        )));
                    }
                }
                mu[t] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(mu.into_iter().map(|m| m.unwrap_or([Q::from_integer(0); 2])).collect());
        }
    }
    Err(Error::InvalidArgument("rule is not subcritical on the κ interval: degree bounds do not converge".into()))
}

#[derive(Clone, Debug)]
pub struct Completion {
    pub rule: Rule,
    /// Node types added to the normal extension, in the order found.
    pub added: Vec<(LabelId, NodeType)>,
}

/// Smallest normal rule containing `ring` that is closed under contraction of its negative
/// unplanted trees: when such a tree sits at a node of admissible type N and its other nodes
/// inside admissible types, contracting it leaves a node whose type (the rest of N together with
/// all edges hanging off the contracted nodes) must again be admissible.
pub fn complete_rule(labels: &LabelSet, ring: &Rule, opts: &EnumerationOptions) -> Result<Completion> {
    let mut rule = ring.normal_extension();
    let mut added = Vec::new();
    for _ in 0..16 {
        let en = enumerate_trees(labels, &rule, Degree::ZERO, opts)?;
        let mut fresh: Vec<(LabelId, NodeType)> = Vec::new();
        for e in en.unplanted() {
            let root_type = e.tree.node_type();
            let leftovers = leftover_types(&rule, &e.tree);
            for t in 0..labels.len() {
                for outer in rule.maximal(t) {
                    if !contains_multiset(outer, &root_type) {
                        continue;
                    }
                    let base = multiset_difference(outer, &root_type);
                    for m in &leftovers {
                        let mut merged = base.clone();
                        merged.extend(m.iter().copied());
                        merged.sort();
                        if !rule.allows(t, &merged) && !fresh.contains(&(t, merged.clone())) {
                            fresh.push((t, merged));
                        }
                    }
                }
            }
        }
        if fresh.is_empty() {
            return Ok(Completion { rule, added });
        }
        for (t, m) in fresh {
            rule.insert(t, m.clone());
            added.push((t, m));
        }
        rule = rule.normal_extension();
    }
    Err(Error::InvalidArgument("rule completion did not stabilise".into()))
}

/// Multisets Σ_v (N_v − N(v)) over choices of admissible supersets N_v at each non-root node.
fn leftover_types(rule: &Rule, tree: &DecoratedTree) -> Vec<NodeType> {
    let mut acc: Vec<NodeType> = vec![Vec::new()];
    let mut stack: Vec<(&EdgeType, &DecoratedTree)> = tree.children.iter().map(|(e, c)| (e, c)).collect();
    while let Some((e, node)) = stack.pop() {
        let own = node.node_type();
        let extras: Vec<NodeType> = rule
            .maximal(e.label)
            .into_iter()
            .filter(|n| contains_multiset(n, &own))
            .map(|n| multiset_difference(n, &own))
            .collect();
        let mut next = BTreeSet::new();
        for a in &acc {
            for x in &extras {
                let mut m = a.clone();
                m.extend(x.iter().copied());
                m.sort();
                next.insert(m);
            }
        }
        acc = next.into_iter().collect();
        stack.extend(node.children.iter().map(|(e, c)| (e, c)));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_indices_have_right_size() {
        assert_eq!(multi_indices(0), vec![[0, 0, 0]]);
        assert_eq!(multi_indices(1).len(), 2);
        assert_eq!(multi_indices(2).len(), 4);
    }

    #[test]
    fn sym_minimal_degrees() {
        let l = LabelSet::sym();
        let r = Rule::sym(&l);
        let mu = min_degrees(&l, &r, KappaInterval::default().endpoints()).unwrap();
        let a1 = l.id("a1").unwrap();
        assert_eq!(mu[a1][1], Q::new(-9, 4));
    }

    #[test]
    fn supercritical_rule_is_rejected() {
        let l = LabelSet::sym();
        let mut r = Rule::sym(&l);
        let a1 = l.id("a1").unwrap();
        // Three noises below one node: degree −6−3κ, then I of that is −4−3κ, and so on.
        r.insert(a1, vec![EdgeType::new(a1); 4]);
        r.insert(a1, vec![EdgeType::new(l.id("l1").unwrap()); 3]);
        let r = r.normal_extension();
        let e = enumerate_trees(&l, &r, Degree::ZERO, &EnumerationOptions::default());
        assert!(e.is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let l = LabelSet::sym();
        let r = Rule::sym(&l);
        let opts = EnumerationOptions { budget: 10, ..Default::default() };
        assert!(matches!(
            enumerate_trees(&l, &r, Degree::ZERO, &opts),
            Err(Error::BudgetExceeded { budget: 10 })
        ));
    }
}
