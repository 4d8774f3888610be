//! Truncated heat kernel and the renormalisation constants built from it.
//!
//! The kernel is radial in x, so every space integral is done in the mixed (t, ρ)
//! representation: ∫ f g dx = ∫ ρ dρ/2π · f̃(ρ) g̃(ρ) with f̃ = 2π∫ f(r) J₀(ρr) r dr.
//! Below `t_exact` the truncation is invisible and K̃(t, ρ) = e^{−tρ²}; above it, per-ρ
//! tables hold the correction, the transform of Q and the two time convolutions needed.

use crate::error::{Error, Result};
use crate::quadrature::{graded, split, GaussLegendre, PanelTable};
use crate::she::{bump, MollifierKind, MollifierSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::sync::{Arc, Mutex};

/// Radial profile ψ(N) of the truncation: 1 on N ≤ 1/2, 0 on N ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffProfile {
    /// ψ(N) = 1 − S_n(2N − 1), S_n the generalised smoothstep of order n (a C^n function).
    Smoothstep { order: u32 },
}

impl Default for CutoffProfile {
    fn default() -> Self {
        CutoffProfile::Smoothstep { order: 5 }
    }
}

impl CutoffProfile {
    /// Number of continuous derivatives of ψ.
    pub fn smoothness(&self) -> u32 {
        match self {
            CutoffProfile::Smoothstep { order } => *order,
        }
    }
}

#[derive(Debug, Clone)]
struct Cutoff {
    // ascending coefficients of S, S', S''
    s: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &a)| i as f64 * a).collect()
}

impl Cutoff {
    fn new(profile: CutoffProfile) -> Self {
        let CutoffProfile::Smoothstep { order: n } = profile;
        let mut s = vec![0.0; (2 * n + 2) as usize];
        for k in 0..=n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s[(n + 1 + k) as usize] = sign * binom(n + k, k) * binom(2 * n + 1, n - k);
        }
        let s1 = derivative(&s);
        let s2 = derivative(&s1);
        Self { s, s1, s2 }
    }

    /// (ψ, ψ', ψ'') at N.
    fn eval(&self, n: f64) -> (f64, f64, f64) {
        if n <= 0.5 {
            (1.0, 0.0, 0.0)
        } else if n >= 1.0 {
            (0.0, 0.0, 0.0)
        } else {
            let u = 2.0 * n - 1.0;
            (1.0 - horner(&self.s, u), -2.0 * horner(&self.s1, u), -4.0 * horner(&self.s2, u))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub profile: CutoffProfile,
    /// Least number of derivatives the profile must have for Q to be continuous.
    pub min_smoothness: u32,
    /// Below this time K̃ = e^{−tρ²} is used as exact.
    pub t_exact: f64,
    /// Gauss nodes per panel in the tables.
    pub table_nodes: usize,
    /// Width of the outer ρ panels past ρ = 16.
    pub rho_panel_width: f64,
    /// Smallest ε accepted.
    pub eps_min: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            profile: CutoffProfile::default(),
            min_smoothness: 2,
            t_exact: 1e-3,
            table_nodes: 10,
            rho_panel_width: 16.0,
            eps_min: 1.0 / 1024.0,
        }
    }
}

impl KernelSpec {
    pub fn fingerprint(&self) -> String {
        let CutoffProfile::Smoothstep { order } = self.profile;
        format!(
            "smoothstep{order}-texact{:e}-nodes{}-rhow{}",
            self.t_exact, self.table_nodes, self.rho_panel_width
        )
    }
}

/// Parabolic norm (t² + |x|⁴)^{1/4}.
pub fn parabolic_norm(t: f64, x: [f64; 2]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    (t * t + r2 * r2).sqrt().sqrt()
}

/// G(t, x) = (4πt)^{-1} e^{−|x|²/4t} for t > 0, else 0.
pub fn heat(t: f64, x: [f64; 2]) -> f64 {
    heat_r(t, (x[0] * x[0] + x[1] * x[1]).sqrt())
}

fn heat_r(t: f64, r: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-r * r / (4.0 * t)).exp() / (4.0 * PI * t)
    }
}

/// Normalised transform of the spatial mollifier profile (1 − |x/r₀|²)³ at κ = ρ r₀.
pub fn mollifier_transform(kappa: f64) -> f64 {
    let k = kappa.abs();
    if k < 0.01 {
        let y = k * k / 4.0;
        1.0 - y / 5.0 + y * y / 60.0
    } else {
        384.0 * libm::jn(4, k) / k.powi(4)
    }
}

/// Per-ρ tables over t ≥ t_exact.
#[derive(Debug)]
struct RhoTables {
    rho: f64,
    t_exact: f64,
    /// K̃ − e^{−tρ²} on [t_exact, 1].
    d: PanelTable,
    /// Q̃ on [t_exact, 1].
    q: PanelTable,
    /// (K̃ ⋆ K̃) − t e^{−tρ²} on [t_exact, 2].
    kkd: PanelTable,
    /// Q̃ ⋆ K̃ on [t_exact, 2].
    qk: PanelTable,
}

impl RhoTables {
    fn d_ext(&self, rule: &GaussLegendre, u: f64) -> f64 {
        if u < self.t_exact {
            0.0
        } else if u > 1.0 {
            -(-u * self.rho * self.rho).exp()
        } else {
            self.d.eval(rule, u).unwrap_or(0.0)
        }
    }

    fn kkd_ext(&self, rule: &GaussLegendre, u: f64) -> f64 {
        if u < self.t_exact {
            0.0
        } else if u > 2.0 {
            -u * (-u * self.rho * self.rho).exp()
        } else {
            self.kkd.eval(rule, u).unwrap_or(0.0)
        }
    }

    fn q(&self, rule: &GaussLegendre, u: f64) -> f64 {
        self.q.eval(rule, u).unwrap_or(0.0)
    }

    fn qk(&self, rule: &GaussLegendre, u: f64) -> f64 {
        self.qk.eval(rule, u).unwrap_or(0.0)
    }

    fn k(&self, rule: &GaussLegendre, u: f64) -> f64 {
        if u <= 0.0 || u > 1.0 {
            0.0
        } else {
            (-u * self.rho * self.rho).exp() + self.d_ext(rule, u)
        }
    }
}

/// Splits [a, b] at `cuts`, grading toward a and/or b from width h0 and capping widths at
/// `max_w`.
fn mesh(a: f64, b: f64, cuts: &[f64], left: bool, right: bool, h0: f64, max_w: f64) -> Vec<(f64, f64)> {
    let pieces = split(a, b, cuts);
    let last = pieces.len().saturating_sub(1);
    let mut out = Vec::new();
    for (i, &(p, q)) in pieces.iter().enumerate() {
        let gl = left && i == 0;
        let gr = right && i == last;
        match (gl, gr) {
            (true, true) => {
                let m = 0.5 * (p + q);
                out.extend(graded(p, m, h0, max_w, false));
                out.extend(graded(m, q, h0, max_w, true));
            }
            (true, false) => out.extend(graded(p, q, h0, max_w, false)),
            (false, true) => out.extend(graded(p, q, h0, max_w, true)),
            (false, false) => {
                let n = ((q - p) / max_w).ceil().max(1.0) as usize;
                let h = (q - p) / n as f64;
                out.extend((0..n).map(|j| (p + j as f64 * h, if j + 1 == n { q } else { p + (j + 1) as f64 * h })));
            }
        }
    }
    out
}

/// Splits each panel that contains one of the cut points.
fn refine_at(panels: Vec<(f64, f64)>, cuts: &[f64]) -> Vec<(f64, f64)> {
    panels.into_iter().flat_map(|(a, b)| split(a, b, cuts)).collect()
}

/// The truncated heat kernel K = G·ψ(|z|) together with its transform tables.
#[derive(Debug)]
pub struct Kernel {
    spec: KernelSpec,
    cutoff: Cutoff,
    rule: GaussLegendre,
    tables: Mutex<HashMap<u64, Arc<RhoTables>>>,
    memo: Mutex<HashMap<String, RenormConstants>>,
}

/// Validates the spec and prepares the kernel. Tables are filled lazily per ρ.
pub fn build_kernel(spec: KernelSpec) -> Result<Kernel> {
    let smooth = spec.profile.smoothness();
    if smooth < spec.min_smoothness {
        return Err(Error::Precondition(format!(
            "cutoff profile is only C^{smooth}; Q = (∂_t − Δ)K − δ needs at least C^{}",
            spec.min_smoothness
        )));
    }
    if !(spec.t_exact > 0.0 && spec.t_exact < 0.01) {
        return Err(Error::InvalidArgument(format!("t_exact must lie in (0, 0.01), got {}", spec.t_exact)));
    }
    if spec.table_nodes < 4 || !(spec.rho_panel_width > 0.0) || !(spec.eps_min > 0.0) {
        return Err(Error::InvalidArgument("table_nodes ≥ 4, rho_panel_width > 0 and eps_min > 0 required".into()));
    }
    Ok(Kernel {
        cutoff: Cutoff::new(spec.profile),
        rule: GaussLegendre::new(spec.table_nodes),
        spec,
        tables: Mutex::new(HashMap::new()),
        memo: Mutex::new(HashMap::new()),
    })
}

/// Which C̃ constant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CTildeVariant {
    /// ∫ χ^ε (K ∗ K^ε).
    MollMoll,
    /// (K ∗ K^ε)(0).
    LimitDelta0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstantErrors {
    pub cbar: f64,
    pub chat: f64,
    pub csym: f64,
    pub ctilde: f64,
    pub ctilde0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants {
    pub eps: f64,
    pub mollifier: String,
    pub kernel: String,
    pub level: u32,
    pub cbar_eps: f64,
    /// Ĉ with j = 1.
    pub chat_eps: f64,
    /// Ĉ with j = 2.
    pub chat_eps_j2: f64,
    /// 4·chat_eps − cbar_eps.
    pub csym_eps: f64,
    pub ctilde_eps: f64,
    pub ctilde0_eps: f64,
    pub errors: ConstantErrors,
    /// C̃ + ∫(K∗K^ε)(Q∗χ^ε) + ∫(Q∗K^ε)K^ε, which should equal csym_eps.
    pub identity_rhs: f64,
    pub identity_error: f64,
    /// Casimir eigenvalue, when the constants are attached to an algebra.
    pub lambda: Option<f64>,
}

impl RenormConstants {
    pub fn identity_residual(&self) -> f64 {
        (self.csym_eps - self.identity_rhs).abs()
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }
}

pub fn mollifier_fingerprint(m: &MollifierSpec) -> String {
    let kind = match m.kind {
        MollifierKind::Symmetric => "symmetric",
        MollifierKind::NonAnticipative => "nonanticipative",
    };
    format!("{kind}-tau{}-r{}", m.tau0, m.r0)
}

pub fn write_constants(path: &Path, constants: &[RenormConstants]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(constants)?)?;
    Ok(())
}

pub fn read_constants(path: &Path) -> Result<Vec<RenormConstants>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Time profile of χ^ε, normalised to unit mass.
#[derive(Debug, Clone, Copy)]
struct TimeProfile {
    kind: MollifierKind,
    tau: f64,
    lo: f64,
    hi: f64,
}

impl TimeProfile {
    fn new(m: &MollifierSpec, eps: f64) -> Self {
        let tau = m.tau0 * eps * eps;
        let (lo, hi) = m.time_support();
        Self { kind: m.kind, tau, lo: lo * eps * eps, hi: hi * eps * eps }
    }

    fn c(&self, s: f64) -> f64 {
        const MASS: f64 = 32.0 / 35.0;
        match self.kind {
            MollifierKind::Symmetric => bump(s / self.tau) / (self.tau * MASS),
            MollifierKind::NonAnticipative => bump((2.0 * s - self.tau) / self.tau) / (0.5 * self.tau * MASS),
        }
    }
}

/// Time integrals at one ρ, before the ρ measure and mollifier factors.
#[derive(Debug, Clone, Copy, Default)]
struct PerRho {
    a2: f64,
    ab: f64,
    cb: f64,
    c0: f64,
    bq: f64,
    qa: f64,
}

/// Everything that depends on (ε, mollifier, quadrature level).
struct Pass<'a> {
    kernel: &'a Kernel,
    prof: TimeProfile,
    rule: GaussLegendre,
    scale: f64,
}

impl<'a> Pass<'a> {
    fn new(kernel: &'a Kernel, m: &MollifierSpec, eps: f64, level: u32) -> Self {
        Self {
            kernel,
            prof: TimeProfile::new(m, eps),
            rule: GaussLegendre::new(8 + 4 * level as usize),
            scale: 0.5f64.powi(level as i32),
        }
    }

    fn width(&self) -> f64 {
        self.prof.hi - self.prof.lo
    }

    /// ∫ c(s) (t−s)^p e^{−(t−s)ρ²} ds over s < t, with l = (L0, L1) the moments at t = hi.
    fn exact_conv(&self, t: f64, rho: f64, p: i32, l: (f64, f64)) -> f64 {
        let (lo, hi) = (self.prof.lo, self.prof.hi);
        let r2 = rho * rho;
        if t >= hi {
            let e = (-(t - hi) * r2).exp();
            return if p == 0 { e * l.0 } else { e * ((t - hi) * l.0 + l.1) };
        }
        if t <= lo {
            return 0.0;
        }
        let h0 = (0.25 / r2).min(0.25 * self.width()) * self.scale;
        let mut s = 0.0;
        for (a, b) in graded(lo, t, h0, 0.25 * self.width() * self.scale, true) {
            for (x, w) in self.rule.mapped(a, b) {
                let u = t - x;
                s += w * self.prof.c(x) * u.powi(p) * (-u * r2).exp();
            }
        }
        s
    }

    /// ∫ c(s) f(t − s) ds over t − s ≥ t_exact, for f smooth apart from kinks at 1/4, 1, 2.
    fn smooth_conv<F: Fn(f64) -> f64>(&self, t: f64, f: F) -> f64 {
        let lo = self.prof.lo;
        let hi = self.prof.hi.min(t - self.kernel.spec.t_exact);
        if hi <= lo {
            return 0.0;
        }
        let cuts = [t - 2.0, t - 1.0, t - 0.25];
        let mut s = 0.0;
        for (a, b) in mesh(lo, hi, &cuts, false, false, 0.0, self.width() * self.scale) {
            for (x, w) in self.rule.mapped(a, b) {
                s += w * self.prof.c(x) * f(t - x);
            }
        }
        s
    }

    fn moments(&self, rho: f64) -> (f64, f64) {
        let (lo, hi) = (self.prof.lo, self.prof.hi);
        let r2 = rho * rho;
        let h0 = (0.25 / r2).min(0.25 * self.width()) * self.scale;
        let (mut l0, mut l1) = (0.0, 0.0);
        for (a, b) in graded(lo, hi, h0, 0.25 * self.width() * self.scale, true) {
            for (x, w) in self.rule.mapped(a, b) {
                let u = hi - x;
                let v = w * self.prof.c(x) * (-u * r2).exp();
                l0 += v;
                l1 += v * u;
            }
        }
        (l0, l1)
    }

    /// (A, B, c⋆q, c⋆QK) at time t.
    fn fields(&self, t: f64, rho: f64, l: (f64, f64), tab: Option<&RhoTables>) -> [f64; 4] {
        let kr = &self.kernel.rule;
        let mut a = self.exact_conv(t, rho, 0, l);
        let mut b = self.exact_conv(t, rho, 1, l);
        let (mut cq, mut cqk) = (0.0, 0.0);
        if let Some(tb) = tab {
            a += self.smooth_conv(t, |u| tb.d_ext(kr, u));
            b += self.smooth_conv(t, |u| tb.kkd_ext(kr, u));
            cq = self.smooth_conv(t, |u| tb.q(kr, u));
            cqk = self.smooth_conv(t, |u| tb.qk(kr, u));
        }
        [a, b, cq, cqk]
    }

    fn per_rho(&self, rho: f64, tab: Option<&RhoTables>) -> PerRho {
        let (lo, hi) = (self.prof.lo, self.prof.hi);
        let r2 = rho * rho;
        let l = self.moments(rho);
        let mut out = PerRho::default();
        let acc = |t: f64, w: f64, out: &mut PerRho| {
            let [a, b, cq, cqk] = self.fields(t, rho, l, tab);
            out.a2 += w * a * a;
            out.ab += w * a * b;
            out.cb += w * self.prof.c(t) * b;
            out.bq += w * b * cq;
            out.qa += w * cqk * a;
        };
        let n1 = (8.0 / self.scale) as usize;
        let h = self.width() / n1 as f64;
        for i in 0..n1 {
            for (t, w) in self.rule.mapped(lo + i as f64 * h, lo + (i + 1) as f64 * h) {
                acc(t, w, &mut out);
            }
        }
        match tab {
            None => {
                // Pure exponential tail past the support.
                out.a2 += l.0 * l.0 / (2.0 * r2);
                out.ab += l.0 * l.0 / (4.0 * r2 * r2) + l.0 * l.1 / (2.0 * r2);
            }
            Some(_) => {
                let te = self.kernel.spec.t_exact;
                let h0 = (0.25 / r2).min(0.25 * self.width()) * self.scale;
                let panels = graded(hi, 1.0 + hi, h0, self.scale / 32.0, false);
                let mut cuts = Vec::new();
                for base in [te, 0.25, 1.0] {
                    cuts.push(base + lo);
                    cuts.push(base + hi);
                }
                for (a, b) in refine_at(panels, &cuts) {
                    for (t, w) in self.rule.mapped(a, b) {
                        acc(t, w, &mut out);
                    }
                }
            }
        }
        if lo < 0.0 {
            let kr = &self.kernel.rule;
            let h0 = (0.25 / r2).min(-0.25 * lo) * self.scale;
            for (a, b) in graded(lo, 0.0, h0, -0.25 * lo * self.scale, true) {
                for (s, w) in self.rule.mapped(a, b) {
                    let u = -s;
                    let kk = u * (-u * r2).exp() + tab.map_or(0.0, |tb| tb.kkd_ext(kr, u));
                    out.c0 += w * self.prof.c(s) * kk;
                }
            }
        }
        out
    }
}

/// Raw sums of one pass.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    cbar: f64,
    chat: [f64; 2],
    ctilde: f64,
    ctilde0: f64,
    id_bq: f64,
    id_qa: f64,
}

impl Kernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn fingerprint(&self) -> String {
        self.spec.fingerprint()
    }

    /// Frequency past which the truncation corrections are dropped: e^{−t_exact ρ²} < e^{−45}.
    pub fn rho_exact(&self) -> f64 {
        let r = (45.0 / self.spec.t_exact).sqrt();
        (r / self.spec.rho_panel_width).ceil() * self.spec.rho_panel_width
    }

    /// ψ(N).
    pub fn cutoff(&self, n: f64) -> f64 {
        self.cutoff.eval(n).0
    }

    /// K(t, x).
    pub fn value(&self, t: f64, x: [f64; 2]) -> f64 {
        self.value_r(t, (x[0] * x[0] + x[1] * x[1]).sqrt())
    }

    fn value_r(&self, t: f64, r: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let n = (t * t + r.powi(4)).sqrt().sqrt();
        if n >= 1.0 {
            return 0.0;
        }
        heat_r(t, r) * self.cutoff.eval(n).0
    }

    /// ∇ₓK(t, x).
    pub fn gradient(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        if t <= 0.0 {
            return [0.0; 2];
        }
        let r2 = x[0] * x[0] + x[1] * x[1];
        let n = parabolic_norm(t, x);
        if n >= 1.0 {
            return [0.0; 2];
        }
        let g = heat_r(t, r2.sqrt());
        let (p, p1, _) = self.cutoff.eval(n);
        let f = g * (-p / (2.0 * t) + p1 * r2 / n.powi(3));
        [f * x[0], f * x[1]]
    }

    /// Q = (∂_t − Δ)K − δ₀, supported in 1/2 ≤ |z| ≤ 1.
    pub fn q(&self, t: f64, x: [f64; 2]) -> f64 {
        self.q_r(t, (x[0] * x[0] + x[1] * x[1]).sqrt())
    }

    fn q_r(&self, t: f64, r: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let r2 = r * r;
        let n = (t * t + r2 * r2).sqrt().sqrt();
        if n <= 0.5 || n >= 1.0 {
            return 0.0;
        }
        let (_, p1, p2) = self.cutoff.eval(n);
        let (n3, r6) = (n.powi(3), r2 * r2 * r2);
        let g = heat_r(t, r);
        g * (p1 * t / (2.0 * n3) - p2 * r6 / n3.powi(2) - p1 * (4.0 * r2 / n3 - 3.0 * r6 / (n3 * n.powi(4)))
            + p1 * r2 * r2 / (t * n3))
    }

    /// 2π ∫ f(r) J₀(ρr) r dr over the support of K(t, ·).
    fn hankel<F: Fn(f64) -> f64>(&self, t: f64, rho: f64, only_shell: bool, f: F) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let outer = (1.0 - t * t).sqrt().sqrt().min((160.0 * t).sqrt());
        let inner = if t < 0.25 { (1.0 / 16.0 - t * t).sqrt().sqrt() } else { 0.0 };
        let start = if only_shell { inner.min(outer) } else { 0.0 };
        let mut w = (0.5 * t.sqrt()).min(0.125);
        if rho > 0.0 {
            w = w.min(4.0 / rho);
        }
        let mut s = 0.0;
        for (a, b) in mesh(start, outer, &[inner], false, false, 0.0, w) {
            for (r, wt) in self.rule.mapped(a, b) {
                s += wt * f(r) * libm::j0(rho * r) * r;
            }
        }
        TAU * s
    }

    /// K̃(t, ρ) = ∫ K(t, x) e^{−iξ·x} dx with |ξ| = ρ.
    pub fn transform(&self, t: f64, rho: f64) -> f64 {
        self.hankel(t, rho, false, |r| self.value_r(t, r))
    }

    /// Q̃(t, ρ).
    pub fn q_transform(&self, t: f64, rho: f64) -> f64 {
        self.hankel(t, rho, true, |r| self.q_r(t, r))
    }

    /// ∫ K(t, x) dx.
    pub fn mass(&self, t: f64) -> f64 {
        self.transform(t, 0.0)
    }

    fn build_tables(&self, rho: f64) -> RhoTables {
        let te = self.spec.t_exact;
        let rule = &self.rule;
        let r2 = rho * rho;
        // geometric panels (ratio ≈ √2) up to 1/4, then 1/16 wide, graded toward t = 1.
        let m = ((0.25 / te).ln() / 2f64.sqrt().ln()).ceil() as usize;
        let ratio = (0.25 / te).powf(1.0 / m as f64);
        let mut edges: Vec<f64> = (0..=m).map(|i| te * ratio.powi(i as i32)).collect();
        edges[m] = 0.25;
        let mut k_edges = edges.clone();
        k_edges.extend((5..16).map(|i| i as f64 / 16.0));
        k_edges.extend([31.0 / 32.0, 63.0 / 64.0, 1.0]);
        let mut kk_edges = edges;
        kk_edges.extend((5..=32).map(|i| i as f64 / 16.0));
        let pan = |e: &[f64]| e.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>();

        let d = PanelTable::build(rule, pan(&k_edges), |t| self.transform(t, rho) - (-t * r2).exp());
        let q = PanelTable::build(rule, pan(&k_edges), |t| self.q_transform(t, rho));
        let mut tb = RhoTables {
            rho,
            t_exact: te,
            d,
            q,
            kkd: PanelTable { panels: Vec::new(), values: Vec::new() },
            qk: PanelTable { panels: Vec::new(), values: Vec::new() },
        };
        let h0 = (0.25 / r2).min(1.0 / 64.0);
        let kkd = PanelTable::build(rule, pan(&kk_edges), |t| {
            let (a, b) = ((t - 1.0).max(0.0), t.min(1.0));
            let cuts = [te, 0.25, t - te, t - 0.25];
            let mut s = 0.0;
            for (p, qq) in mesh(a, b, &cuts, a == 0.0, b == t, h0, 1.0 / 16.0) {
                for (u, w) in rule.mapped(p, qq) {
                    s += w * tb.k(rule, t - u) * tb.k(rule, u);
                }
            }
            s - t * (-t * r2).exp()
        });
        let qk = PanelTable::build(rule, pan(&kk_edges), |t| {
            let (a, b) = ((t - 1.0).max(te), t.min(1.0));
            if b <= a {
                return 0.0;
            }
            let cuts = [0.25, t - te, t - 0.25];
            let mut s = 0.0;
            for (p, qq) in mesh(a, b, &cuts, false, true, h0, 1.0 / 16.0) {
                for (u, w) in rule.mapped(p, qq) {
                    s += w * tb.q(rule, u) * tb.k(rule, t - u);
                }
            }
            s
        });
        tb.kkd = kkd;
        tb.qk = qk;
        tb
    }

    fn tables(&self, rho: f64) -> Option<Arc<RhoTables>> {
        if rho > self.rho_exact() {
            return None;
        }
        let key = rho.to_bits();
        if let Some(t) = self.tables.lock().unwrap().get(&key) {
            return Some(t.clone());
        }
        let t = Arc::new(self.build_tables(rho));
        self.tables.lock().unwrap().insert(key, t.clone());
        Some(t)
    }

    /// Outer ρ panels for scale ε at the given level.
    fn rho_panels(&self, eps: f64, r0: f64, level: u32) -> Vec<(f64, f64)> {
        let w = self.spec.rho_panel_width;
        let re = self.rho_exact();
        let mut base = vec![(0.0, 0.5), (0.5, 1.0), (1.0, 2.0), (2.0, 4.0), (4.0, 8.0), (8.0, w.max(8.0))];
        let mut x = w.max(8.0);
        while x < re - 1e-9 {
            base.push((x, x + w));
            x += w;
        }
        let oscill = PI / (eps * r0);
        let end = (60.0 / (eps * r0)).max(2.0 * re);
        base.extend(graded(re, end, 2.0 * w, oscill.max(2.0 * w), false));
        let parts = 1usize << level;
        base.into_iter()
            .flat_map(|(a, b)| {
                let h = (b - a) / parts as f64;
                (0..parts).map(move |i| (a + i as f64 * h, a + (i + 1) as f64 * h))
            })
            .collect()
    }

    fn pass(&self, m: &MollifierSpec, eps: f64, level: u32) -> Sums {
        let ps = Pass::new(self, m, eps, level);
        let nodes: Vec<(f64, f64)> = self
            .rho_panels(eps, m.r0, level)
            .into_iter()
            .flat_map(|(a, b)| ps.rule.mapped(a, b).collect::<Vec<_>>())
            .collect();
        let angle: [f64; 2] = {
            let n = 64;
            let (mut c, mut s) = (0.0, 0.0);
            for i in 0..n {
                let th = TAU * i as f64 / n as f64;
                c += th.cos().powi(2);
                s += th.sin().powi(2);
            }
            [c * TAU / n as f64, s * TAU / n as f64]
        };
        let parts: Vec<Sums> = nodes
            .par_iter()
            .map(|&(rho, w)| {
                let tab = self.tables(rho);
                let pr = ps.per_rho(rho, tab.as_deref());
                let phi = mollifier_transform(eps * rho * m.r0);
                let f = w * rho / TAU;
                let f2 = f * phi * phi;
                Sums {
                    cbar: f2 * pr.a2,
                    chat: [
                        f2 * rho * rho * angle[0] / TAU * pr.ab,
                        f2 * rho * rho * angle[1] / TAU * pr.ab,
                    ],
                    ctilde: f2 * pr.cb,
                    ctilde0: f * phi * pr.c0,
                    id_bq: f2 * pr.bq,
                    id_qa: f2 * pr.qa,
                }
            })
            .collect();
        parts.into_iter().fold(Sums::default(), |mut a, b| {
            a.cbar += b.cbar;
            a.chat[0] += b.chat[0];
            a.chat[1] += b.chat[1];
            a.ctilde += b.ctilde;
            a.ctilde0 += b.ctilde0;
            a.id_bq += b.id_bq;
            a.id_qa += b.id_qa;
            a
        })
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
        }
        if eps < self.spec.eps_min {
            return Err(Error::UnderResolved(format!(
                "eps = {eps} is below eps_min = {}; lower KernelSpec::eps_min to at most {eps} \
                 (the outer frequency grid then extends to ρ ≈ 60/(ε r₀))",
                self.spec.eps_min
            )));
        }
        Ok(())
    }

    /// All constants at scale ε, at quadrature `level` ≥ 1; errors are the change from
    /// level − 1. Results are memoised per fingerprint.
    pub fn constants_at(&self, eps: f64, m: &MollifierSpec, level: u32) -> Result<RenormConstants> {
        self.check_eps(eps)?;
        if level == 0 {
            return Err(Error::InvalidArgument("level must be at least 1".into()));
        }
        let key = format!("{}|{}|{eps:e}|{level}", self.fingerprint(), mollifier_fingerprint(m));
        if let Some(c) = self.memo.lock().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let coarse = self.pass(m, eps, level - 1);
        let fine = self.pass(m, eps, level);
        let err = |a: f64, b: f64| (a - b).abs() + 1e-12 * b.abs() + 1e-15;
        let csym = 4.0 * fine.chat[0] - fine.cbar;
        let rhs = fine.ctilde + fine.id_bq + fine.id_qa;
        let rhs_c = coarse.ctilde + coarse.id_bq + coarse.id_qa;
        let errors = ConstantErrors {
            cbar: err(coarse.cbar, fine.cbar),
            chat: err(coarse.chat[0], fine.chat[0]),
            csym: err(4.0 * coarse.chat[0] - coarse.cbar, csym),
            ctilde: err(coarse.ctilde, fine.ctilde),
            ctilde0: err(coarse.ctilde0, fine.ctilde0),
        };
        let c = RenormConstants {
            eps,
            mollifier: mollifier_fingerprint(m),
            kernel: self.fingerprint(),
            level,
            cbar_eps: fine.cbar,
            chat_eps: fine.chat[0],
            chat_eps_j2: fine.chat[1],
            csym_eps: csym,
            ctilde_eps: fine.ctilde,
            ctilde0_eps: fine.ctilde0,
            identity_error: errors.csym + err(rhs_c, rhs),
            identity_rhs: rhs,
            errors,
            lambda: None,
        };
        self.memo.lock().unwrap().insert(key, c.clone());
        Ok(c)
    }

    /// Constants at the default level 1.
    pub fn constants(&self, eps: f64, m: &MollifierSpec) -> Result<RenormConstants> {
        self.constants_at(eps, m, 1)
    }

    /// C̄^ε = ∫ (K^ε)².
    pub fn cbar(&self, eps: f64, m: &MollifierSpec) -> Result<Estimate> {
        let c = self.constants(eps, m)?;
        Ok(Estimate { value: c.cbar_eps, error: c.errors.cbar })
    }

    /// Ĉ^ε = ∫ ∂_jK^ε (∂_jK ∗ K^ε), j ∈ {1, 2}.
    pub fn chat(&self, eps: f64, j: usize, m: &MollifierSpec) -> Result<Estimate> {
        let c = self.constants(eps, m)?;
        let value = match j {
            1 => c.chat_eps,
            2 => c.chat_eps_j2,
            _ => return Err(Error::InvalidArgument(format!("direction j must be 1 or 2, got {j}"))),
        };
        Ok(Estimate { value, error: c.errors.chat })
    }

    /// C_SYM^ε = 4Ĉ^ε − C̄^ε.
    pub fn csym(&self, eps: f64, m: &MollifierSpec) -> Result<Estimate> {
        let c = self.constants(eps, m)?;
        Ok(Estimate { value: c.csym_eps, error: c.errors.csym })
    }

    pub fn ctilde(&self, eps: f64, variant: CTildeVariant, m: &MollifierSpec) -> Result<Estimate> {
        let c = self.constants(eps, m)?;
        Ok(match variant {
            CTildeVariant::MollMoll => Estimate { value: c.ctilde_eps, error: c.errors.ctilde },
            CTildeVariant::LimitDelta0 => Estimate { value: c.ctilde0_eps, error: c.errors.ctilde0 },
        })
    }

    /// Cauchy behaviour of C_SYM^ε along a sequence of ε (each the previous halved).
    pub fn csym_limit(&self, eps_seq: &[f64], m: &MollifierSpec) -> Result<CauchyReport> {
        let est = eps_seq.iter().map(|&e| self.csym(e, m)).collect::<Result<Vec<_>>>()?;
        Ok(CauchyReport::new(eps_seq.to_vec(), &est))
    }

    /// Cauchy behaviour of C̃^ε (moll-moll) along a sequence of ε.
    pub fn ctilde_limit(&self, eps_seq: &[f64], m: &MollifierSpec) -> Result<CauchyReport> {
        let est = eps_seq
            .iter()
            .map(|&e| self.ctilde(e, CTildeVariant::MollMoll, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(CauchyReport::new(eps_seq.to_vec(), &est))
    }

    /// K^ε(t, x) = (K ∗ χ^ε)(t, x).
    pub fn mollified(&self, t: f64, x: [f64; 2], eps: f64, m: &MollifierSpec) -> Result<f64> {
        self.check_eps(eps)?;
        let ps = Pass::new(self, m, eps, 1);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let mut s = 0.0;
        for (a, b) in self.rho_panels(eps, m.r0, 1) {
            for (rho, w) in ps.rule.mapped(a, b) {
                let tab = self.tables(rho);
                let l = ps.moments(rho);
                let [av, ..] = ps.fields(t, rho, l, tab.as_deref());
                s += w * rho / TAU * libm::j0(rho * r) * mollifier_transform(eps * rho * m.r0) * av;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// |v_{i+1} − v_i|.
    pub differences: Vec<f64>,
    /// Each difference is below the previous one, or already below the quadrature error of
    /// the two values it compares.
    pub decreasing: bool,
    /// Last value plus the geometric tail implied by the last two differences.
    pub limit_estimate: f64,
    pub advice: Option<String>,
}

impl CauchyReport {
    pub fn new(eps: Vec<f64>, estimates: &[Estimate]) -> Self {
        let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
        let errors: Vec<f64> = estimates.iter().map(|e| e.error).collect();
        let differences: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let noise: Vec<f64> = errors.windows(2).map(|w| w[0] + w[1]).collect();
        let decreasing = (1..differences.len()).all(|i| differences[i] < differences[i - 1] || differences[i] <= noise[i]);
        let last = values.last().copied().unwrap_or(f64::NAN);
        let limit_estimate = match values.len() {
            n if n >= 3 => {
                let (d1, d2) = (values[n - 2] - values[n - 3], values[n - 1] - values[n - 2]);
                let r = d2 / d1;
                if d1 != 0.0 && r.abs() < 1.0 {
                    last + d2 * r / (1.0 - r)
                } else {
                    last
                }
            }
            _ => last,
        };
        let advice = (!decreasing).then(|| "Cauchy differences are not decreasing; raise the quadrature level".to_string());
        Self { eps, values, errors, differences, decreasing, limit_estimate, advice }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn kernel() -> &'static Kernel {
        static K: OnceLock<Kernel> = OnceLock::new();
        K.get_or_init(|| build_kernel(KernelSpec::default()).unwrap())
    }

    #[test]
    fn smoothstep_matches_low_orders() {
        let c = Cutoff::new(CutoffProfile::Smoothstep { order: 1 });
        assert_eq!(c.s, vec![0.0, 0.0, 3.0, -2.0]);
        let c = Cutoff::new(CutoffProfile::Smoothstep { order: 5 });
        assert!((horner(&c.s, 1.0) - 1.0).abs() < 1e-12);
        assert!((horner(&c.s, 0.5) - 0.5).abs() < 1e-12);
        for u in [0.0, 1.0] {
            assert!(horner(&c.s1, u).abs() < 1e-9 && horner(&c.s2, u).abs() < 1e-9);
        }
    }

    #[test]
    fn rough_profile_is_rejected() {
        let spec = KernelSpec { profile: CutoffProfile::Smoothstep { order: 1 }, ..Default::default() };
        assert!(matches!(build_kernel(spec), Err(Error::Precondition(_))));
    }

    #[test]
    fn kernel_equals_heat_inside_and_vanishes_outside() {
        let k = kernel();
        for (t, r) in [(0.09, 0.0), (0.05, 0.25), (0.0, 0.3)] {
            let x = [r * 0.6, r * 0.8];
            let n = parabolic_norm(t, x);
            assert!(n <= 0.3 + 1e-12);
            assert!((k.value(t, x) - heat(t, x)).abs() <= 1e-12 * heat(t, x).max(1.0));
        }
        for (t, x) in [(0.5, [0.95, 0.5]), (1.1, [0.0, 0.0]), (0.2, [1.05, 0.0])] {
            assert!(parabolic_norm(t, x) > 1.0);
            assert_eq!(k.value(t, x), 0.0);
        }
        assert_eq!(k.value(-0.1, [0.0, 0.0]), 0.0);
        // reflection and swap symmetry
        let (t, x) = (0.3, [0.2, 0.45]);
        let v = k.value(t, x);
        for y in [[-0.2, 0.45], [0.2, -0.45], [0.45, 0.2]] {
            assert_eq!(k.value(t, y), v);
        }
    }

    #[test]
    fn mass_is_squeezed_by_gaussian_tails() {
        let k = kernel();
        for t in [0.002f64, 0.01, 0.05, 0.1] {
            let inner = (1.0 / 16.0 - t * t).sqrt();
            let outer = (1.0 - t * t).sqrt();
            let m = k.mass(t);
            assert!(m >= 1.0 - (-inner / (4.0 * t)).exp() - 1e-12, "t={t}: {m}");
            assert!(m <= 1.0 - (-outer / (4.0 * t)).exp() + 1e-12, "t={t}: {m}");
        }
        assert!((k.mass(0.002) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_matches_finite_differences() {
        let k = kernel();
        let h = 1e-4;
        for (t, x) in [(0.2, [0.4, 0.3]), (0.05, [0.45, 0.1]), (0.6, [0.3, -0.5]), (0.3, [0.0, 0.7])] {
            let ht = 1e-6;
            let dt = (k.value(t + ht, x) - k.value(t - ht, x)) / (2.0 * ht);
            let lap = (k.value(t, [x[0] + h, x[1]]) + k.value(t, [x[0] - h, x[1]]) + k.value(t, [x[0], x[1] + h])
                + k.value(t, [x[0], x[1] - h])
                - 4.0 * k.value(t, x))
                / (h * h);
            let q = k.q(t, x);
            assert!((dt - lap - q).abs() < 1e-5 * (1.0 + q.abs()), "t={t} x={x:?}: {} vs {q}", dt - lap);
            let g = k.gradient(t, x);
            let gx = (k.value(t, [x[0] + h, x[1]]) - k.value(t, [x[0] - h, x[1]])) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-6 * (1.0 + gx.abs()));
        }
        assert_eq!(k.q(0.1, [0.1, 0.1]), 0.0);
    }

    #[test]
    fn transform_obeys_the_heat_equation_with_source() {
        let k = kernel();
        let h = 1e-5;
        for rho in [0.0, 3.0, 17.0] {
            for t in [0.1, 0.3, 0.7] {
                let dt = (k.transform(t + h, rho) - k.transform(t - h, rho)) / (2.0 * h);
                let lhs = dt + rho * rho * k.transform(t, rho);
                let q = k.q_transform(t, rho);
                assert!((lhs - q).abs() < 1e-6 * (1.0 + q.abs()), "ρ={rho} t={t}: {lhs} vs {q}");
            }
            // untouched region: exactly the heat transform
            let t = 8e-4;
            assert!((k.transform(t, rho) - (-t * rho * rho).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn mollifier_transform_is_normalised() {
        assert_eq!(mollifier_transform(0.0), 1.0);
        let a = mollifier_transform(0.0099);
        let b = mollifier_transform(0.0101);
        assert!((a - b).abs() < 1e-6);
        assert!(mollifier_transform(40.0).abs() < 1e-5);
    }

    #[test]
    fn stored_identity_is_exact_and_algebraic_identity_holds() {
        let k = kernel();
        let m = MollifierSpec::non_anticipative();
        let c = k.constants(0.125, &m).unwrap();
        assert_eq!(c.csym_eps, 4.0 * c.chat_eps - c.cbar_eps);
        assert!(c.identity_residual() <= 1e-5, "residual {}", c.identity_residual());
        assert!((c.chat_eps - c.chat_eps_j2).abs() <= 1e-6);
        assert!(c.ctilde0_eps.abs() <= 1e-8);
        assert!(c.cbar_eps > 0.0 && c.chat_eps > 0.0);
    }

    #[test]
    fn symmetric_mollifier_has_positive_ctilde0() {
        let k = kernel();
        let c = k.ctilde(0.25, CTildeVariant::LimitDelta0, &MollifierSpec::default()).unwrap();
        assert!(c.value > 0.0 && c.value > 10.0 * c.error, "{c:?}");
    }

    #[test]
    fn eps_one_is_finite_and_accurate() {
        let k = kernel();
        let c = k.cbar(1.0, &MollifierSpec::non_anticipative()).unwrap();
        assert!(c.value.is_finite() && c.value > 0.0);
        assert!(c.error < 1e-6, "{c:?}");
    }

    #[test]
    fn bad_eps_is_refused() {
        let k = kernel();
        let m = MollifierSpec::default();
        assert!(matches!(k.cbar(1e-4, &m), Err(Error::UnderResolved(_))));
        assert!(matches!(k.cbar(0.0, &m), Err(Error::InvalidArgument(_))));
        assert!(matches!(k.chat(0.5, 3, &m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cauchy_report_flags_growth() {
        let est = |v: &[f64], e: f64| v.iter().map(|&value| Estimate { value, error: e }).collect::<Vec<_>>();
        let r = CauchyReport::new(vec![1.0, 0.5, 0.25, 0.125], &est(&[1.0, 1.5, 1.75, 1.875], 1e-9));
        assert!(r.decreasing && r.advice.is_none());
        assert!((r.limit_estimate - 2.0).abs() < 1e-12);
        let r = CauchyReport::new(vec![1.0, 0.5, 0.25], &est(&[1.0, 1.1, 1.5], 1e-9));
        assert!(!r.decreasing && r.advice.is_some());
        // settled sequences pass once the differences are inside the error bars
        let r = CauchyReport::new(vec![1.0, 0.5, 0.25], &est(&[1.0, 1.0 + 1e-16, 1.0], 1e-14));
        assert!(r.decreasing);
    }
}
