//! Gauge transformations, holonomies, Wilson loops, gauge recovery and orbit-distance bounds.
//!
//! Holonomies solve dy = y dℓ_A, so factors are multiplied left to right along the curve
//! and hol(A^g, γ) = g(γ(0)) hol(A, γ) g(γ(1))⁻¹.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{wrap, LatticeField, LatticeGaugeField, TrigField};
use crate::lie::{AlgebraElement, GroupElement, LieAlgebra};
use crate::oneform::{
    reduce_point, CurveSpec, FamilyValues, LatticeOneForm, NormKind, SampleFamily, SamplerConfig,
    Segment, SegmentFunction,
};

/// How one sub-segment contributes a group factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HolonomyRule {
    /// exp(Σᵢ Aᵢ(x_k) vᵢ): first-order Lie–Euler step.
    #[default]
    LeftPoint,
    /// exp(A(ℓ_k)) with the exact segment value.
    SegmentExact,
}

/// Discrete (∂ᵢg)g⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DerivativeRule {
    /// log(g(x+aeᵢ) g(x−aeᵢ)⁻¹) / 2a
    #[default]
    Centred,
    /// log(g(x+aeᵢ) g(x)⁻¹) / a
    Forward,
}

/// Group-valued lattice field; off-site values use geodesic bilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeTransform {
    pub n: usize,
    pub values: Vec<GroupElement>,
}

impl GaugeTransform {
    pub fn identity(alg: &LieAlgebra, n: usize) -> Self {
        Self::constant(n, alg.identity())
    }

    pub fn constant(n: usize, g: GroupElement) -> Self {
        Self {
            n,
            values: vec![g; n * n],
        }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> GroupElement>(n: usize, f: F) -> Self {
        let a = 1.0 / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f([i as f64 * a, j as f64 * a]));
            }
        }
        Self { n, values }
    }

    /// g = exp(φ) sitewise.
    pub fn from_algebra_field(alg: &LieAlgebra, phi: &LatticeField) -> Self {
        let values = (0..phi.sites())
            .into_par_iter()
            .map(|s| alg.exp(&phi.element(s)))
            .collect();
        Self { n: phi.n, values }
    }

    /// exp of a random trigonometric 𝔤-valued field.
    pub fn smooth_random(alg: &LieAlgebra, n: usize, kmax: i32, amplitude: f64, seed: u64) -> Self {
        let phi = TrigField::random(alg.dim(), kmax, amplitude, seed, 0x9a);
        Self::from_algebra_field(alg, &phi.to_lattice(n))
    }

    pub fn at(&self, i: isize, j: isize) -> &GroupElement {
        &self.values[wrap(i, self.n) * self.n + wrap(j, self.n)]
    }

    /// g at an arbitrary torus point: exp of the bilinear blend of log(g(corner) g₀₀⁻¹), times g₀₀.
    pub fn eval(&self, alg: &LieAlgebra, x: [f64; 2]) -> Result<GroupElement> {
        let n = self.n as f64;
        let u = x[0].rem_euclid(1.0) * n;
        let v = x[1].rem_euclid(1.0) * n;
        let (i0, j0) = (u.floor(), v.floor());
        let (fu, fv) = (u - i0, v - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let g00 = self.at(i0, j0);
        if fu < 1e-12 && fv < 1e-12 {
            return Ok(g00.clone());
        }
        let inv = g00.inverse();
        let mut blend = AlgebraElement::zeros(alg.dim());
        for (di, dj, w) in [
            (1, 0, fu * (1.0 - fv)),
            (0, 1, (1.0 - fu) * fv),
            (1, 1, fu * fv),
        ] {
            if w == 0.0 {
                continue;
            }
            let l = alg.log(&self.at(i0 + di, j0 + dj).mul(&inv))?;
            blend += &l.scale(w);
        }
        Ok(alg.exp(&blend).mul(g00))
    }

    /// Pointwise product (gh)(x) = g(x) h(x).
    pub fn compose(&self, other: &GaugeTransform) -> Result<GaugeTransform> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(Self {
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(g, h)| g.mul(h)).collect(),
        })
    }

    pub fn inverse(&self) -> GaugeTransform {
        Self {
            n: self.n,
            values: self.values.iter().map(|g| g.inverse()).collect(),
        }
    }

    pub fn sup_distance(&self, other: &GaugeTransform) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (g, h)| m.max(g.distance(h)))
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.values.iter().fold(0.0, |m, g| m.max(g.unitarity_defect()))
    }

    /// Nearest-neighbour Hölder quotient max |g(x) − g(y)| / |x − y|^α.
    pub fn holder_seminorm(&self, alpha: f64) -> f64 {
        let a = 1.0 / self.n as f64;
        let mut m: f64 = 0.0;
        for i in 0..self.n as isize {
            for j in 0..self.n as isize {
                let g = self.at(i, j);
                m = m.max(g.distance(self.at(i + 1, j))).max(g.distance(self.at(i, j + 1)));
            }
        }
        m / a.powf(alpha)
    }
}

fn check_grid(a: &LatticeGaugeField, g: &GaugeTransform) -> Result<()> {
    if a.n() != g.n {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            got: g.n,
        });
    }
    Ok(())
}

/// Discrete (∂_dir g) g⁻¹ on the grid.
pub fn log_derivative(
    alg: &LieAlgebra,
    g: &GaugeTransform,
    dir: usize,
    rule: DerivativeRule,
) -> Result<LatticeField> {
    let n = g.n;
    let inv_a = n as f64;
    let rows: Vec<Result<AlgebraElement>> = (0..n * n)
        .into_par_iter()
        .map(|s| {
            let (i, j) = ((s / n) as isize, (s % n) as isize);
            let step = |k: isize| if dir == 0 { g.at(i + k, j) } else { g.at(i, j + k) };
            match rule {
                DerivativeRule::Centred => {
                    let ratio = step(1).mul(&step(-1).inverse());
                    Ok(alg.log(&ratio)?.scale(0.5 * inv_a))
                }
                DerivativeRule::Forward => {
                    let ratio = step(1).mul(&step(0).inverse());
                    Ok(alg.log(&ratio)?.scale(inv_a))
                }
            }
        })
        .collect();
    let mut out = LatticeField::zeros(n, alg.dim());
    for (s, r) in rows.into_iter().enumerate() {
        out.at_mut(s).copy_from_slice(&r?.0);
    }
    Ok(out)
}

/// A^g = Ad_g A − (dg)g⁻¹ with the centred logarithmic derivative.
pub fn apply_gauge(alg: &LieAlgebra, a: &LatticeGaugeField, g: &GaugeTransform) -> Result<LatticeGaugeField> {
    apply_gauge_with(alg, a, g, DerivativeRule::Centred)
}

pub fn apply_gauge_with(
    alg: &LieAlgebra,
    a: &LatticeGaugeField,
    g: &GaugeTransform,
    rule: DerivativeRule,
) -> Result<LatticeGaugeField> {
    check_grid(a, g)?;
    if a.dim() != alg.dim() {
        return Err(Error::DimensionMismatch {
            expected: alg.dim(),
            got: a.dim(),
        });
    }
    let mut out = LatticeGaugeField::zeros(a.n(), a.dim());
    for dir in 0..2 {
        let dg = log_derivative(alg, g, dir, rule)?;
        let comp = &a.comps[dir];
        let vals: Vec<AlgebraElement> = (0..comp.sites())
            .into_par_iter()
            .map(|s| &alg.ad(&g.values[s], &comp.element(s)) - &dg.element(s))
            .collect();
        for (s, v) in vals.into_iter().enumerate() {
            out.comps[dir].at_mut(s).copy_from_slice(&v.0);
        }
    }
    Ok(out)
}

fn factor(alg: &LieAlgebra, a: &dyn SegmentFunction, seg: &Segment, rule: HolonomyRule) -> GroupElement {
    let x = match rule {
        HolonomyRule::SegmentExact => a.eval(seg),
        HolonomyRule::LeftPoint => {
            let (mut a1, mut a2) = (vec![0.0; a.dim()], vec![0.0; a.dim()]);
            a.point_into(seg.x, &mut a1, &mut a2);
            AlgebraElement(a1.iter().zip(&a2).map(|(p, q)| p * seg.v[0] + q * seg.v[1]).collect())
        }
    };
    alg.exp(&x)
}

/// Ordered product of segment factors, left to right.
pub fn holonomy_of_segments(
    alg: &LieAlgebra,
    a: &dyn SegmentFunction,
    segs: &[Segment],
    rule: HolonomyRule,
) -> GroupElement {
    segs.iter()
        .fold(alg.identity(), |acc, s| acc.mul(&factor(alg, a, s, rule)))
}

pub fn holonomy(alg: &LieAlgebra, a: &dyn SegmentFunction, gamma: &CurveSpec, mesh: f64) -> Result<GroupElement> {
    holonomy_with(alg, a, gamma, mesh, HolonomyRule::LeftPoint)
}

pub fn holonomy_with(
    alg: &LieAlgebra,
    a: &dyn SegmentFunction,
    gamma: &CurveSpec,
    mesh: f64,
    rule: HolonomyRule,
) -> Result<GroupElement> {
    if !(mesh > 0.0) {
        return Err(Error::InvalidArgument(format!("mesh must be positive, got {mesh}")));
    }
    if a.dim() != alg.dim() {
        return Err(Error::DimensionMismatch {
            expected: alg.dim(),
            got: a.dim(),
        });
    }
    let segs = gamma.chords(&gamma.mesh_params(mesh));
    Ok(holonomy_of_segments(alg, a, &segs, rule))
}

/// ‖hol(A^g, γ) − g(γ(0)) hol(A, γ) g(γ(1))⁻¹‖ (Frobenius).
pub fn holonomy_covariance_residual(
    alg: &LieAlgebra,
    a: &LatticeGaugeField,
    g: &GaugeTransform,
    gamma: &CurveSpec,
    mesh: f64,
) -> Result<f64> {
    let ag = apply_gauge(alg, a, g)?;
    let lhs = holonomy(alg, &LatticeOneForm::new(ag), gamma, mesh)?;
    let inner = holonomy(alg, &LatticeOneForm::new(a.clone()), gamma, mesh)?;
    let g0 = g.eval(alg, gamma.start())?;
    let g1 = g.eval(alg, gamma.end())?;
    Ok(lhs.distance(&g0.mul(&inner).mul(&g1.inverse())))
}

/// Re tr hol(A, loop) / rep dimension.
pub fn wilson_loop(alg: &LieAlgebra, a: &dyn SegmentFunction, lp: &CurveSpec, mesh: f64) -> Result<f64> {
    if !lp.is_closed() {
        return Err(Error::InvalidArgument("Wilson loop needs a closed curve".into()));
    }
    Ok(holonomy(alg, a, lp, mesh)?.normalized_trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoverOptions {
    /// Sub-segment length along each lattice edge; defaults to an eighth of the lattice spacing.
    pub mesh: Option<f64>,
    /// Largest accepted sup-distance between the two staircase reconstructions.
    pub tolerance: f64,
    pub rule: HolonomyRule,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self {
            mesh: None,
            tolerance: 5e-2,
            rule: HolonomyRule::LeftPoint,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaugeRecovery {
    pub transform: GaugeTransform,
    /// sup over sites of the distance between the x-first and y-first staircase results.
    pub residual: f64,
}

fn edge_holonomies(
    alg: &LieAlgebra,
    a: &dyn SegmentFunction,
    n: usize,
    dir: usize,
    mesh: f64,
    rule: HolonomyRule,
) -> Vec<GroupElement> {
    let h = 1.0 / n as f64;
    let pieces = (h / mesh).ceil().max(1.0) as usize;
    (0..n * n)
        .into_par_iter()
        .map(|s| {
            let p = [(s / n) as f64 * h, (s % n) as f64 * h];
            let segs: Vec<Segment> = (0..pieces)
                .map(|k| {
                    let t = k as f64 / pieces as f64;
                    let mut x = p;
                    x[dir] += t * h;
                    let mut v = [0.0; 2];
                    v[dir] = h / pieces as f64;
                    Segment {
                        x: reduce_point(x),
                        v,
                    }
                })
                .collect();
            holonomy_of_segments(alg, a, &segs, rule)
        })
        .collect()
}

/// Holonomies along a line of sites starting at `start` in direction `dir`, walking the
/// shorter way round: forward for offsets below n/2, backward otherwise.
fn line_holonomies(edges: &[GroupElement], alg: &LieAlgebra, n: usize, start: [usize; 2], dir: usize) -> Vec<([usize; 2], GroupElement)> {
    let idx = |p: [usize; 2]| p[0] * n + p[1];
    let mut out = vec![(start, alg.identity())];
    let mut h = alg.identity();
    let mut p = start;
    for _ in 0..n / 2 {
        h = h.mul(&edges[idx(p)]);
        p[dir] = (p[dir] + 1) % n;
        out.push((p, h.clone()));
    }
    let mut h = alg.identity();
    let mut p = start;
    for _ in 0..(n - 1) / 2 {
        p[dir] = (p[dir] + n - 1) % n;
        h = h.mul(&edges[idx(p)].inverse());
        out.push((p, h.clone()));
    }
    out
}

/// Holonomies from `origin` to every site along staircases that walk `first` then the other axis.
fn staircase(edges: &[Vec<GroupElement>; 2], alg: &LieAlgebra, n: usize, origin: [usize; 2], first: usize) -> Vec<GroupElement> {
    let second = 1 - first;
    let mut out = vec![alg.identity(); n * n];
    for (p, spine) in line_holonomies(&edges[first], alg, n, origin, first) {
        for (q, h) in line_holonomies(&edges[second], alg, n, p, second) {
            out[q[0] * n + q[1]] = spine.mul(&h);
        }
    }
    out
}

/// g(y) = hol(Ā, γ_xy)⁻¹ g₀ hol(A, γ_xy) along axis-parallel staircases from the site `origin`.
pub fn recover_gauge(
    alg: &LieAlgebra,
    a: &dyn SegmentFunction,
    a_bar: &dyn SegmentFunction,
    n: usize,
    origin: [usize; 2],
    g0: &GroupElement,
    opts: &RecoverOptions,
) -> Result<GaugeRecovery> {
    if origin[0] >= n || origin[1] >= n {
        return Err(Error::InvalidArgument(format!("origin {origin:?} outside an {n}×{n} grid")));
    }
    let mesh = opts.mesh.unwrap_or(0.125 / n as f64);
    if !(mesh > 0.0) {
        return Err(Error::InvalidArgument(format!("mesh must be positive, got {mesh}")));
    }
    let ea = [
        edge_holonomies(alg, a, n, 0, mesh, opts.rule),
        edge_holonomies(alg, a, n, 1, mesh, opts.rule),
    ];
    let eb = [
        edge_holonomies(alg, a_bar, n, 0, mesh, opts.rule),
        edge_holonomies(alg, a_bar, n, 1, mesh, opts.rule),
    ];
    let build = |first: usize| {
        let ha = staircase(&ea, alg, n, origin, first);
        let hb = staircase(&eb, alg, n, origin, first);
        GaugeTransform {
            n,
            values: ha
                .iter()
                .zip(&hb)
                .map(|(h, hbar)| hbar.inverse().mul(g0).mul(h))
                .collect(),
        }
    };
    let transform = build(0);
    let residual = transform.sup_distance(&build(1));
    if residual > opts.tolerance {
        return Err(Error::NotGaugeEquivalent {
            residual,
            tolerance: opts.tolerance,
        });
    }
    Ok(GaugeRecovery {
        transform,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitDistanceReport {
    pub upper: f64,
    pub lower: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub norm_diff: f64,
    /// "direct" or "radial-m" for the minimising chain.
    pub chain: String,
    pub witness: String,
}

/// K(A, B) = (|‖A‖−‖B‖| + 1)/(‖A‖∧‖B‖ + 1) · (‖A−B‖ ∧ 1).
pub fn k_step(norm_a: f64, norm_b: f64, norm_diff: f64) -> f64 {
    ((norm_a - norm_b).abs() + 1.0) / (norm_a.min(norm_b) + 1.0) * norm_diff.min(1.0)
}

/// log(1 + h/(r+1)) with r = ‖A‖∧‖B‖ and h = |‖A‖−‖B‖|.
pub fn orbit_lower_bound(norm_a: f64, norm_b: f64) -> f64 {
    let (r, h) = (norm_a.min(norm_b), (norm_a - norm_b).abs());
    (h / (r + 1.0)).ln_1p()
}

/// Chain A → (1−1/m)A → … → 0 → … → B of 2m K-steps.
fn radial_chain(norm_a: f64, norm_b: f64, m: usize) -> f64 {
    let mut total = 0.0;
    for norm in [norm_a, norm_b] {
        for k in 0..m {
            let (s, t) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
            total += k_step(s * norm, t * norm, (t - s) * norm);
        }
    }
    total
}

/// Bounds on k_α(A, B) from values on a shared sample family.
pub fn orbit_distance_from_values(
    fam: &SampleFamily,
    va: &FamilyValues,
    vb: &FamilyValues,
    alpha: f64,
) -> Result<OrbitDistanceReport> {
    let na = fam.norm(NormKind::Alpha, alpha, va)?.value;
    let nb = fam.norm(NormKind::Alpha, alpha, vb)?.value;
    let diff = fam.norm(NormKind::Alpha, alpha, &va.combine(1.0, vb, -1.0))?;
    let mut upper = k_step(na, nb, diff.value);
    let mut chain = "direct".to_string();
    for m in [1, 2, 4, 8, 16] {
        let u = radial_chain(na, nb, m);
        if u < upper {
            upper = u;
            chain = format!("radial-{m}");
        }
    }
    let lower = orbit_lower_bound(na, nb);
    if lower > upper * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::Precondition(format!(
            "orbit lower bound {lower} exceeds chain upper bound {upper}"
        )));
    }
    Ok(OrbitDistanceReport {
        upper,
        lower,
        norm_a: na,
        norm_b: nb,
        norm_diff: diff.value,
        chain,
        witness: diff.witness,
    })
}

pub fn orbit_distance_bounds(
    a: &dyn SegmentFunction,
    b: &dyn SegmentFunction,
    alpha: f64,
    cfg: &SamplerConfig,
) -> Result<OrbitDistanceReport> {
    let fam = SampleFamily::new(cfg);
    orbit_distance_from_values(&fam, &fam.evaluate(a), &fam.evaluate(b), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oneform::{random_trig_form, SmoothOneForm};

    fn trig_lattice(alg: &LieAlgebra, n: usize, amp: f64, seed: u64) -> LatticeGaugeField {
        random_trig_form(alg.dim(), 1, amp, seed).to_lattice(n)
    }

    #[test]
    fn trivial_gauge_actions() {
        let alg = LieAlgebra::su2();
        let a = trig_lattice(&alg, 16, 1.0, 1);
        let id = GaugeTransform::identity(&alg, 16);
        assert!(apply_gauge(&alg, &a, &id).unwrap().sup_distance(&a) < 1e-14);
        let mut rng = crate::lie::stream_rng(3, 0);
        let g = GaugeTransform::constant(16, alg.random_group(&mut rng, 1.0));
        let z = LatticeGaugeField::zeros(16, 3);
        assert!(apply_gauge(&alg, &z, &g).unwrap().max_abs() < 1e-12);
        assert!(apply_gauge(&alg, &LatticeGaugeField::zeros(8, 3), &g).is_err());
    }

    #[test]
    fn abelian_gauge_is_gradient_shift() {
        let alg = LieAlgebra::abelian_test(2);
        let tau = 2.0 * std::f64::consts::PI;
        let err = |n: usize| {
            let phi = LatticeField::from_fn(n, 2, |x| vec![0.3 * (tau * x[0]).sin(), 0.2 * (tau * (x[0] + x[1])).cos()]);
            let g = GaugeTransform::from_algebra_field(&alg, &phi);
            let a = trig_lattice(&alg, n, 1.0, 2);
            let ag = apply_gauge(&alg, &a, &g).unwrap();
            let want = LatticeGaugeField::from_fn(n, 2, |x| {
                let d1 = [0.3 * tau * (tau * x[0]).cos(), -0.2 * tau * (tau * (x[0] + x[1])).sin()];
                let d2 = [0.0, -0.2 * tau * (tau * (x[0] + x[1])).sin()];
                let mut a1 = vec![0.0; 2];
                let mut a2 = vec![0.0; 2];
                random_trig_form(2, 1, 1.0, 2).point_into(x, &mut a1, &mut a2);
                [vec![a1[0] - d1[0], a1[1] - d1[1]], vec![a2[0] - d2[0], a2[1] - d2[1]]]
            });
            ag.sup_distance(&want)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 2e-2 && (e1 / e2 - 4.0).abs() < 0.5, "{e1} {e2}");
    }

    #[test]
    fn left_action_composes() {
        let alg = LieAlgebra::su2();
        let err = |n: usize| {
            let a = trig_lattice(&alg, n, 1.0, 4);
            let g = GaugeTransform::smooth_random(&alg, n, 1, 0.5, 5);
            let h = GaugeTransform::smooth_random(&alg, n, 1, 0.5, 6);
            let ah = apply_gauge(&alg, &a, &h).unwrap();
            let ahg = apply_gauge(&alg, &ah, &g).unwrap();
            let agh = apply_gauge(&alg, &a, &g.compose(&h).unwrap()).unwrap();
            ahg.sup_distance(&agh)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e2 < e1 && e2 < 0.05, "{e1} {e2}");
    }

    #[test]
    fn log_branch_is_reported() {
        let alg = LieAlgebra::su2();
        let near_minus_one = alg.exp(&alg.basis(0).scale(2.0 * std::f64::consts::PI - 1e-9));
        let g = GaugeTransform::from_fn(9, |x| {
            if ((x[0] * 9.0).round() as usize) % 3 == 2 {
                near_minus_one.clone()
            } else {
                alg.identity()
            }
        });
        let a = LatticeGaugeField::zeros(9, 3);
        assert!(matches!(apply_gauge(&alg, &a, &g), Err(Error::LogBranch { .. })));
    }

    #[test]
    fn holonomy_trivial_cases() {
        let alg = LieAlgebra::su2();
        let gamma = CurveSpec::polyline(vec![[0.0, 0.0], [0.2, 0.1]]).unwrap();
        let zero = SmoothOneForm::zero(3);
        assert!(holonomy(&alg, &zero, &gamma, 0.01).unwrap().distance(&alg.identity()) < 1e-15);
        let (c1, c2) = (AlgebraElement(vec![0.3, -0.5, 1.1]), AlgebraElement(vec![0.7, 0.2, -0.4]));
        let a = SmoothOneForm::constant(c1.clone(), c2.clone());
        let want = alg.exp(&(&c1.scale(0.2) + &c2.scale(0.1)));
        for rule in [HolonomyRule::LeftPoint, HolonomyRule::SegmentExact] {
            let h = holonomy_with(&alg, &a, &gamma, 0.013, rule).unwrap();
            assert!(h.distance(&want) < 1e-12);
        }
        assert!(holonomy(&alg, &a, &gamma, 0.0).is_err());
    }

    #[test]
    fn reversal_inverts_holonomy() {
        let alg = LieAlgebra::su2();
        let a = random_trig_form(3, 2, 1.0, 7);
        let gamma = CurveSpec::circle([0.1, 0.0], 0.15).unwrap();
        let fwd = holonomy_with(&alg, &a, &gamma, 1.0 / 128.0, HolonomyRule::SegmentExact).unwrap();
        let back = holonomy_with(&alg, &a, &gamma.reversed(), 1.0 / 128.0, HolonomyRule::SegmentExact).unwrap();
        assert!(fwd.mul(&back).distance(&alg.identity()) < 1e-12);
        let defect = |mesh: f64| {
            let f = holonomy(&alg, &a, &gamma, mesh).unwrap();
            let b = holonomy(&alg, &a, &gamma.reversed(), mesh).unwrap();
            f.mul(&b).distance(&alg.identity())
        };
        let r = defect(1.0 / 64.0) / defect(1.0 / 128.0);
        assert!((r - 2.0).abs() < 0.5, "{r}");
    }

    #[test]
    fn left_point_holonomy_is_first_order() {
        let alg = LieAlgebra::su2();
        let a = random_trig_form(3, 2, 1.0, 11);
        let gamma = CurveSpec::rectangle([-0.1, -0.1], 0.2, 0.25).unwrap();
        let hol = |mesh: f64| holonomy(&alg, &a, &gamma, mesh).unwrap().matrix;
        let h = 1.0 / 64.0;
        let limit = hol(h / 64.0) * num_complex::Complex64::new(2.0, 0.0) - hol(h / 32.0);
        let (d1, d2) = ((hol(h) - &limit).norm(), (hol(h / 2.0) - &limit).norm());
        let r = d1 / d2;
        assert!(r > 2.0 / 1.5 && r < 2.0 * 1.5, "{r}");
    }

    #[test]
    fn covariance_residual_trivial_and_constant_gauges() {
        let alg = LieAlgebra::su2();
        let a = trig_lattice(&alg, 32, 1.0, 3);
        let gamma = CurveSpec::rectangle([0.0, 0.0], 0.25, 0.125).unwrap();
        let id = GaugeTransform::identity(&alg, 32);
        assert!(holonomy_covariance_residual(&alg, &a, &id, &gamma, 1.0 / 64.0).unwrap() < 1e-14);
        let mut rng = crate::lie::stream_rng(8, 0);
        let g = GaugeTransform::constant(32, alg.random_group(&mut rng, 1.0));
        assert!(holonomy_covariance_residual(&alg, &a, &g, &gamma, 1.0 / 64.0).unwrap() < 1e-12);
    }

    #[test]
    fn covariance_residual_is_first_order_in_mesh() {
        let alg = LieAlgebra::su2();
        let n = 64;
        let a = trig_lattice(&alg, n, 0.5, 12);
        let g = GaugeTransform::smooth_random(&alg, n, 1, 0.02, 13);
        let gamma = CurveSpec::rectangle([0.0, 0.0], 0.25, 0.25).unwrap();
        let r1 = holonomy_covariance_residual(&alg, &a, &g, &gamma, 1.0 / 256.0).unwrap();
        let r2 = holonomy_covariance_residual(&alg, &a, &g, &gamma, 1.0 / 512.0).unwrap();
        assert!(r1 < 1e-3 && (1.6..=2.6).contains(&(r1 / r2)), "{r1} {r2}");
    }

    #[test]
    fn wilson_loop_examples() {
        let alg = LieAlgebra::su2();
        let sq = CurveSpec::rectangle([0.0, 0.0], 0.2, 0.1).unwrap();
        assert!((wilson_loop(&alg, &SmoothOneForm::zero(3), &sq, 0.01).unwrap() - 1.0).abs() < 1e-15);
        let open = CurveSpec::polyline(vec![[0.0, 0.0], [0.1, 0.0]]).unwrap();
        assert!(wilson_loop(&alg, &SmoothOneForm::zero(3), &open, 0.01).is_err());

        // One-dimensional abelian algebra: ρ(e) = i/√2, so W = cos(Φ/√2) for ∮A = Φ e.
        let u1 = LieAlgebra::abelian_test(1);
        let b = 3.0;
        let a = SmoothOneForm::new(1, move |x, a1, a2| {
            a1[0] = 0.0;
            a2[0] = b * std::f64::consts::SQRT_2 * x[0];
        });
        let rect = CurveSpec::rectangle([0.05, -0.1], 0.2, 0.15).unwrap();
        let w = wilson_loop(&u1, &a, &rect, 1.0 / 64.0).unwrap();
        assert!((w - (b * 0.2 * 0.15).cos()).abs() < 1e-12, "{w}");
    }

    #[test]
    fn wilson_loop_basepoint_and_conjugation() {
        let alg = LieAlgebra::su2();
        let a = random_trig_form(3, 2, 1.0, 21);
        let (x, y, w, h) = (0.0, 0.0, 0.2, 0.15);
        let r1 = CurveSpec::polyline(vec![[x, y], [x + w, y], [x + w, y + h], [x, y + h], [x, y]]).unwrap();
        let r2 = CurveSpec::polyline(vec![[x + w, y + h], [x, y + h], [x, y], [x + w, y], [x + w, y + h]]).unwrap();
        let (w1, w2) = (wilson_loop(&alg, &a, &r1, 0.01).unwrap(), wilson_loop(&alg, &a, &r2, 0.01).unwrap());
        assert!((w1 - w2).abs() < 1e-13);
        let lat = a.to_lattice(32);
        let mut rng = crate::lie::stream_rng(1, 1);
        let g = GaugeTransform::constant(32, alg.random_group(&mut rng, 2.0));
        let conj = apply_gauge(&alg, &lat, &g).unwrap();
        let wa = wilson_loop(&alg, &LatticeOneForm::new(lat), &r1, 0.01).unwrap();
        let wb = wilson_loop(&alg, &LatticeOneForm::new(conj), &r1, 0.01).unwrap();
        assert!((wa - wb).abs() < 1e-13);
    }

    #[test]
    fn recover_identity_and_round_trip() {
        let alg = LieAlgebra::su2();
        let n = 32;
        let a = LatticeOneForm::new(trig_lattice(&alg, n, 1.0, 30));
        let r = recover_gauge(&alg, &a, &a, n, [0, 0], &alg.identity(), &RecoverOptions::default()).unwrap();
        assert!(r.transform.sup_distance(&GaugeTransform::identity(&alg, n)) < 1e-12);

        let err = |n: usize| {
            let a = trig_lattice(&alg, n, 0.5, 31);
            let g = GaugeTransform::smooth_random(&alg, n, 1, 0.05, 32);
            let ag = apply_gauge(&alg, &a, &g).unwrap();
            let origin = [n / 4, n / 2];
            let g0 = g.at(origin[0] as isize, origin[1] as isize).clone();
            let r = recover_gauge(
                &alg,
                &LatticeOneForm::new(a),
                &LatticeOneForm::new(ag),
                n,
                origin,
                &g0,
                &RecoverOptions::default(),
            )
            .unwrap();
            r.transform.sup_distance(&g)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 1e-3 && (1.0..=3.0).contains(&(e1 / e2)), "{e1} {e2}");
    }

    #[test]
    fn unrelated_fields_are_rejected() {
        let alg = LieAlgebra::su2();
        let n = 32;
        let a = LatticeOneForm::new(trig_lattice(&alg, n, 1.0, 40));
        let b = LatticeOneForm::new(trig_lattice(&alg, n, 1.0, 41));
        let r = recover_gauge(&alg, &a, &b, n, [0, 0], &alg.identity(), &RecoverOptions::default());
        assert!(matches!(r, Err(Error::NotGaugeEquivalent { .. })), "{:?}", r.map(|r| r.residual));
    }

    #[test]
    fn orbit_bounds() {
        let cfg = SamplerConfig { bases_per_level: 6, ..Default::default() };
        let a = random_trig_form(3, 2, 1.0, 50);
        let same = orbit_distance_bounds(&a, &a, 0.75, &cfg).unwrap();
        assert_eq!((same.lower, same.upper), (0.0, 0.0));

        let fam = SampleFamily::new(&cfg);
        let va = fam.evaluate(&a);
        let r = fam.norm(NormKind::Alpha, 0.75, &va).unwrap().value;
        let h = 0.8 * r;
        let vb = va.scaled(1.8);
        let rep = orbit_distance_from_values(&fam, &va, &vb, 0.75).unwrap();
        assert!((rep.lower - (1.0 + h / (r + 1.0)).ln()).abs() < 1e-12);
        assert!(rep.lower <= rep.upper);

        for seed in 0..5 {
            let b = random_trig_form(3, 2, 1.0 + seed as f64, 60 + seed);
            let rep = orbit_distance_from_values(&fam, &va, &fam.evaluate(&b), 0.75).unwrap();
            assert!(rep.lower <= rep.upper, "{rep:?}");
        }
    }

    #[test]
    fn geodesic_interpolation_hits_sites() {
        let alg = LieAlgebra::su2();
        let g = GaugeTransform::smooth_random(&alg, 16, 1, 0.5, 9);
        let v = g.eval(&alg, [3.0 / 16.0, 5.0 / 16.0]).unwrap();
        assert!(v.distance(g.at(3, 5)) < 1e-14);
        let mid = g.eval(&alg, [3.5 / 16.0, 5.0 / 16.0]).unwrap();
        assert!(mid.unitarity_defect() < 1e-12);
        assert!(mid.distance(g.at(3, 5)) < g.at(3, 5).distance(g.at(4, 5)));
    }
}
