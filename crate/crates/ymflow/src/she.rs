//! The additive stochastic heat equation (∂_t − Δ)Ψ = Σ ξᵢ dxᵢ with Ψ(0) = 0, sampled exactly
//! in Fourier space, with closed-form second moments of its segment and triangle integrals,
//! and space-time mollified lattice noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeField;
use crate::lie::{sample_white_noise, stream_rng, AlgebraElement, LieAlgebra};
use crate::oneform::{Segment, Triangle};
use crate::spectral::Fft2;

const TAU: f64 = 2.0 * PI;

fn cz(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// |2πk|²
pub fn eigenvalue(k: [i64; 2]) -> f64 {
    TAU * TAU * ((k[0] * k[0] + k[1] * k[1]) as f64)
}

/// Variance of one complex Fourier mode at time t: (1 − e^{−2λt})/(2λ), or t for k = 0.
pub fn mode_variance(k: [i64; 2], t: f64) -> f64 {
    let lam = eigenvalue(k);
    if lam == 0.0 {
        t
    } else {
        -(-2.0 * lam * t).exp_m1() / (2.0 * lam)
    }
}

/// Var_k(∞) = 1/(2λ); the zero mode has no stationary limit.
pub fn stationary_mode_variance(k: [i64; 2]) -> f64 {
    let lam = eigenvalue(k);
    if lam == 0.0 {
        f64::INFINITY
    } else {
        0.5 / lam
    }
}

/// (e^{iz} − 1)/(iz), equal to 1 at z = 0.
fn phi(z: f64) -> Complex64 {
    if z.abs() < 1e-4 {
        cz(1.0 - z * z / 6.0, z / 2.0 - z * z * z / 24.0)
    } else {
        (cz(0.0, z).exp() - 1.0) / cz(0.0, z)
    }
}

/// The half-plane of nonzero modes: k₁ > 0, or k₁ = 0 and k₂ > 0.
fn half_plane(k_max: usize) -> Vec<[i64; 2]> {
    let k = k_max as i64;
    let mut out = Vec::with_capacity(((2 * k + 1) * (2 * k + 1) / 2) as usize);
    for k1 in 0..=k {
        for k2 in -k..=k {
            if k1 > 0 || k2 > 0 {
                out.push([k1, k2]);
            }
        }
    }
    out
}

/// Truncated Fourier representation Ψ̂ᵢ(k), |k|_∞ ≤ K, i ∈ {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub k_max: usize,
    pub dim: usize,
    pub t: f64,
    /// Per component, indexed by ((k₁+K)(2K+1) + (k₂+K))·dim + a.
    pub coeffs: [Vec<Complex64>; 2],
}

impl SpectralField {
    fn side(&self) -> usize {
        2 * self.k_max + 1
    }

    fn index(&self, k: [i64; 2]) -> usize {
        let kk = self.k_max as i64;
        ((k[0] + kk) as usize * self.side() + (k[1] + kk) as usize) * self.dim
    }

    pub fn coeff(&self, comp: usize, k: [i64; 2], a: usize) -> Complex64 {
        self.coeffs[comp][self.index(k) + a]
    }

    /// max |Ψ̂(−k) − conj Ψ̂(k)|
    pub fn reality_defect(&self) -> f64 {
        let kk = self.k_max as i64;
        let mut m: f64 = 0.0;
        for comp in 0..2 {
            for k1 in -kk..=kk {
                for k2 in -kk..=kk {
                    for a in 0..self.dim {
                        let d = self.coeff(comp, [-k1, -k2], a) - self.coeff(comp, [k1, k2], a).conj();
                        m = m.max(d.norm());
                    }
                }
            }
        }
        m
    }

    fn functional(&self, weight: impl Fn(usize, [i64; 2]) -> Complex64) -> AlgebraElement {
        let kk = self.k_max as i64;
        let mut out = vec![0.0; self.dim];
        for comp in 0..2 {
            for k1 in -kk..=kk {
                for k2 in -kk..=kk {
                    let w = weight(comp, [k1, k2]);
                    if w == cz(0.0, 0.0) {
                        continue;
                    }
                    let base = self.index([k1, k2]);
                    for (a, o) in out.iter_mut().enumerate() {
                        *o += (self.coeffs[comp][base + a] * w).re;
                    }
                }
            }
        }
        AlgebraElement(out)
    }

    /// (Ψ₁(x), Ψ₂(x))
    pub fn eval_point(&self, x: [f64; 2]) -> [AlgebraElement; 2] {
        let e = |k: [i64; 2]| cz(0.0, TAU * (k[0] as f64 * x[0] + k[1] as f64 * x[1])).exp();
        [
            self.functional(|c, k| if c == 0 { e(k) } else { cz(0.0, 0.0) }),
            self.functional(|c, k| if c == 1 { e(k) } else { cz(0.0, 0.0) }),
        ]
    }

    /// Ψ(ℓ) = Σᵢ ∫₀¹ Ψᵢ(x + sv) vᵢ ds.
    pub fn eval_segment(&self, seg: &Segment) -> AlgebraElement {
        self.functional(|c, k| segment_weight(seg, c, k))
    }

    /// Ψ(∂P) as the sum over the three sides.
    pub fn eval_triangle(&self, tri: &Triangle) -> AlgebraElement {
        let sides = tri.sides();
        self.functional(|c, k| sides.iter().map(|s| segment_weight(s, c, k)).sum())
    }
}

fn segment_weight(seg: &Segment, comp: usize, k: [i64; 2]) -> Complex64 {
    let (k1, k2) = (k[0] as f64, k[1] as f64);
    let phase = cz(0.0, TAU * (k1 * seg.x[0] + k2 * seg.x[1])).exp();
    seg.v[comp] * phase * phi(TAU * (k1 * seg.v[0] + k2 * seg.v[1]))
}

/// Standard complex Gaussians on the half-plane plus a real zero mode, for every (component,
/// basis direction).
fn draw_standard<R: Rng>(n_half: usize, dim: usize, rng: &mut R) -> ([Vec<Complex64>; 2], [Vec<f64>; 2]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut half = [Vec::with_capacity(n_half * dim), Vec::with_capacity(n_half * dim)];
    let mut zero = [vec![0.0; dim], vec![0.0; dim]];
    for comp in 0..2 {
        for z in zero[comp].iter_mut() {
            *z = StandardNormal.sample(rng);
        }
        for _ in 0..n_half * dim {
            let x: f64 = StandardNormal.sample(rng);
            let y: f64 = StandardNormal.sample(rng);
            half[comp].push(cz(s * x, s * y));
        }
    }
    (half, zero)
}

/// Exact sample of Ψ(t) truncated at |k|_∞ ≤ K.
pub fn sample_she(dim: usize, t: f64, k_max: usize, seed: u64, stream: u64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be non-negative, got {t}")));
    }
    let modes = half_plane(k_max);
    let mut rng = stream_rng(seed, stream);
    let (half, zero) = draw_standard(modes.len(), dim, &mut rng);
    let side = 2 * k_max + 1;
    let mut field = SpectralField {
        k_max,
        dim,
        t,
        coeffs: [vec![cz(0.0, 0.0); side * side * dim], vec![cz(0.0, 0.0); side * side * dim]],
    };
    for comp in 0..2 {
        let i0 = field.index([0, 0]);
        for a in 0..dim {
            field.coeffs[comp][i0 + a] = cz(t.sqrt() * zero[comp][a], 0.0);
        }
        for (m, &k) in modes.iter().enumerate() {
            let sd = mode_variance(k, t).sqrt();
            let (ip, im) = (field.index(k), field.index([-k[0], -k[1]]));
            for a in 0..dim {
                let z = half[comp][m * dim + a] * sd;
                field.coeffs[comp][ip + a] = z;
                field.coeffs[comp][im + a] = z.conj();
            }
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    /// E|·|² per basis direction, truncated at |k|_∞ ≤ K.
    pub value: f64,
    /// |S_K − S_{K/2}|, a proxy for the truncation error.
    pub tail_estimate: f64,
}

fn truncated_sum(k_max: usize, term: impl Fn([i64; 2]) -> f64 + Sync) -> (f64, f64) {
    let kk = k_max as i64;
    let half = kk / 2;
    let (full, inner): (f64, f64) = (-kk..=kk)
        .into_par_iter()
        .map(|k1| {
            let (mut f, mut i) = (0.0, 0.0);
            for k2 in -kk..=kk {
                let v = term([k1, k2]);
                f += v;
                if k1.abs() <= half && k2.abs() <= half {
                    i += v;
                }
            }
            (f, i)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (full, (full - inner).abs())
}

/// E|Ψ(t)(ℓ)|² = Σ_k Var_k(t) |v|² |(e^{2πik·v} − 1)/(2πik·v)|².
pub fn segment_second_moment(seg: &Segment, t: f64, k_max: usize) -> MomentReport {
    let len2 = seg.v[0] * seg.v[0] + seg.v[1] * seg.v[1];
    let (value, tail_estimate) = truncated_sum(k_max, |k| {
        let z = TAU * (k[0] as f64 * seg.v[0] + k[1] as f64 * seg.v[1]);
        mode_variance(k, t) * len2 * phi(z).norm_sqr()
    });
    MomentReport {
        value,
        tail_estimate,
    }
}

/// ∫_P e^{−iq·x} dx in closed form.
pub fn triangle_fourier(tri: &Triangle, q: [f64; 2]) -> Complex64 {
    let [p0, p1, p2] = tri.vertices;
    let dot = |p: [f64; 2]| q[0] * p[0] + q[1] * p[1];
    let (z1, z2) = (dot(p1) - dot(p0), dot(p2) - dot(p0));
    2.0 * tri.area() * cz(0.0, -dot(p0)).exp() * simplex_integral(z1, z2)
}

/// ∫_{s,t ≥ 0, s+t ≤ 1} e^{−i(s a + t b)} ds dt = −f[0, a, b] for f(u) = e^{−iu}.
pub fn simplex_integral(a: f64, b: f64) -> Complex64 {
    let mut nodes = [0.0, a, b];
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let span = nodes[2] - nodes[0];
    if span < 1.0 {
        // Σ_m (−i)^m h_m(a, b)/(m+2)!, h_m the complete homogeneous polynomial.
        let mut sum = cz(0.0, 0.0);
        let mut pow_a = vec![1.0];
        let mut pow_b = vec![1.0];
        let mut fact = 2.0;
        let mut unit = cz(1.0, 0.0);
        for m in 0..40usize {
            if m > 0 {
                pow_a.push(pow_a[m - 1] * a);
                pow_b.push(pow_b[m - 1] * b);
                fact *= (m + 2) as f64;
                unit *= cz(0.0, -1.0);
            }
            let h: f64 = (0..=m).map(|p| pow_a[p] * pow_b[m - p]).sum();
            sum += unit * (h / fact);
        }
        return sum;
    }
    // f[x, y] = −i e^{−i(x+y)/2} sinc((y−x)/2) is stable for all x, y.
    let dd = |x: f64, y: f64| {
        let h = 0.5 * (y - x);
        let sinc = if h.abs() < 1e-8 { 1.0 - h * h / 6.0 } else { h.sin() / h };
        cz(0.0, -1.0) * cz(0.0, -0.5 * (x + y)).exp() * sinc
    };
    let f2 = (dd(nodes[1], nodes[2]) - dd(nodes[0], nodes[1])) / span;
    -f2
}

/// E|Ψ(t)(∂P)|² = Σ_k |2πk|² Var_k(t) |1̂_P(k)|².
pub fn triangle_second_moment(tri: &Triangle, t: f64, k_max: usize) -> MomentReport {
    if tri.area() == 0.0 {
        return MomentReport {
            value: 0.0,
            tail_estimate: 0.0,
        };
    }
    let (value, tail_estimate) = truncated_sum(k_max, |k| {
        let lam = eigenvalue(k);
        if lam == 0.0 {
            return 0.0;
        }
        let q = [TAU * k[0] as f64, TAU * k[1] as f64];
        lam * mode_variance(k, t) * triangle_fourier(tri, q).norm_sqr()
    });
    MomentReport {
        value,
        tail_estimate,
    }
}

/// E|Ψ(t)(ℓ) − Ψ(s)(ℓ)|² for s ≤ t.
pub fn segment_increment_moment(seg: &Segment, s: f64, t: f64, k_max: usize) -> f64 {
    let len2 = seg.v[0] * seg.v[0] + seg.v[1] * seg.v[1];
    truncated_sum(k_max, |k| {
        let z = TAU * (k[0] as f64 * seg.v[0] + k[1] as f64 * seg.v[1]);
        let decay = (-eigenvalue(k) * (t - s)).exp_m1();
        len2 * phi(z).norm_sqr() * (decay * decay * mode_variance(k, s) + mode_variance(k, t - s))
    })
    .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Probe {
    Segment(Segment),
    Triangle(Triangle),
}

impl Probe {
    /// |ℓ| or |P|.
    pub fn size(&self) -> f64 {
        match self {
            Probe::Segment(s) => s.len(),
            Probe::Triangle(p) => p.area(),
        }
    }

    pub fn oracle(&self, t: f64, k_max: usize) -> MomentReport {
        match self {
            Probe::Segment(s) => segment_second_moment(s, t, k_max),
            Probe::Triangle(p) => triangle_second_moment(p, t, k_max),
        }
    }

    fn sides(&self) -> Vec<Segment> {
        match self {
            Probe::Segment(s) => vec![*s],
            Probe::Triangle(p) => p.sides().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMoment {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Second moments of probe values over `replicas` exact samples, each basis direction counted
/// as an independent sample. Each replica draws one set of standard modes; probe i uses it
/// scaled to its own time tᵢ.
pub fn monte_carlo_moments(
    dim: usize,
    probes: &[(Probe, f64)],
    k_max: usize,
    replicas: usize,
    seed: u64,
) -> Vec<MonteCarloMoment> {
    let modes = half_plane(k_max);
    // Per probe: weights on the half-plane scaled by √Var_k(t) (real part doubled), and the zero mode.
    let weights: Vec<([Vec<Complex64>; 2], [f64; 2])> = probes
        .iter()
        .map(|(p, t)| {
            let sides = p.sides();
            let mut w = [Vec::with_capacity(modes.len()), Vec::with_capacity(modes.len())];
            let mut w0 = [0.0; 2];
            for comp in 0..2 {
                for &k in &modes {
                    let c: Complex64 = sides.iter().map(|s| segment_weight(s, comp, k)).sum();
                    w[comp].push(2.0 * mode_variance(k, *t).sqrt() * c);
                }
                let c0: Complex64 = sides.iter().map(|s| segment_weight(s, comp, [0, 0])).sum();
                w0[comp] = t.sqrt() * c0.re;
            }
            (w, w0)
        })
        .collect();
    let chunk = 64;
    let n_chunks = replicas.div_ceil(chunk);
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let mut s1 = vec![0.0; probes.len()];
            let mut s2 = vec![0.0; probes.len()];
            let count = chunk.min(replicas - c * chunk);
            for _ in 0..count {
                let (half, zero) = draw_standard(modes.len(), dim, &mut rng);
                for (pi, (w, w0)) in weights.iter().enumerate() {
                    for a in 0..dim {
                        let mut v = 0.0;
                        for comp in 0..2 {
                            v += w0[comp] * zero[comp][a];
                            let h = &half[comp];
                            for (m, wk) in w[comp].iter().enumerate() {
                                let z = h[m * dim + a];
                                v += z.re * wk.re - z.im * wk.im;
                            }
                        }
                        let x2 = v * v;
                        s1[pi] += x2;
                        s2[pi] += x2 * x2;
                    }
                }
            }
            (s1, s2)
        })
        .collect();
    let n = (replicas * dim) as f64;
    (0..probes.len())
        .map(|pi| {
            let s1: f64 = sums.iter().map(|s| s.0[pi]).sum();
            let s2: f64 = sums.iter().map(|s| s.1[pi]).sum();
            let mean = s1 / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            MonteCarloMoment {
                mean,
                std_err: (var / n).sqrt(),
                samples: replicas * dim,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    Segment,
    Triangle,
}

/// Log-log slopes of the exact second moment along three rays and their admissibility for
/// E ≲ t^κ size^γ, with γ = 2 − 2κ for segments (size |ℓ|) and 1 − κ for triangles (size |P|).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub shape: ShapeKind,
    pub kappa: f64,
    /// Slope in size at fixed t.
    pub size_slope: f64,
    /// Slope in t at fixed size.
    pub time_slope: f64,
    /// Slope in size along t ∝ size^{2/d}, d the size dimension.
    pub diagonal_slope: f64,
    /// Lower limits for the three slopes.
    pub required: [f64; 3],
    pub tolerance: f64,
    /// max over the sampled grid of E / (t^κ size^γ).
    pub max_ratio: f64,
    pub admissible: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Segment of length s at a fixed generic angle.
pub fn probe_segment(s: f64) -> Segment {
    let th: f64 = 0.3;
    Segment {
        x: [0.1, -0.2],
        v: [s * th.cos(), s * th.sin()],
    }
}

/// Equilateral triangle with the given inradius.
pub fn probe_triangle(inradius: f64) -> Triangle {
    let circ = 2.0 * inradius;
    let c = [0.05, 0.1];
    let v = |k: f64| {
        let th = 0.2 + k * TAU / 3.0;
        [c[0] + circ * th.cos(), c[1] + circ * th.sin()]
    };
    Triangle {
        vertices: [v(0.0), v(1.0), v(2.0)],
    }
}

pub fn fit_exponents(shape: ShapeKind, kappa: f64, k_max: usize) -> Result<ExponentFit> {
    if !(kappa > 0.0 && kappa < 0.5) {
        return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1/2), got {kappa}")));
    }
    let tol = 0.1;
    // (log size, log E) along each ray; scale parameter r is |ℓ| or the inradius.
    let moment = |r: f64, t: f64| -> (f64, f64) {
        match shape {
            ShapeKind::Segment => (r, segment_second_moment(&probe_segment(r), t, k_max).value),
            ShapeKind::Triangle => {
                let p = probe_triangle(r);
                (p.area(), triangle_second_moment(&p, t, k_max).value)
            }
        }
    };
    let gamma = match shape {
        ShapeKind::Segment => 2.0 - 2.0 * kappa,
        ShapeKind::Triangle => 1.0 - kappa,
    };
    let scales: Vec<f64> = (3..=7).map(|k| 0.5f64.powi(k)).collect();
    let ray = |pts: &[(f64, f64)]| -> f64 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        slope(&xs, &ys)
    };
    let t_fixed = 0.5f64.powi(4);
    let size_pts: Vec<(f64, f64)> = scales.iter().map(|&r| moment(r, t_fixed)).collect();
    let r_fixed = match shape {
        ShapeKind::Segment => 0.125,
        ShapeKind::Triangle => 0.03125,
    };
    let times: Vec<f64> = (12..=16).map(|k| 0.5f64.powi(k)).collect();
    let time_pts: Vec<(f64, f64)> = times.iter().map(|&t| (t, moment(r_fixed, t).1)).collect();
    let diag_pts: Vec<(f64, f64)> = scales[..4].iter().map(|&r| moment(r, 0.25 * r * r)).collect();
    let size_slope = ray(&size_pts);
    let time_slope = ray(&time_pts);
    let diagonal_slope = ray(&diag_pts);
    let size_dim = match shape {
        ShapeKind::Segment => 1.0,
        ShapeKind::Triangle => 2.0,
    };
    let required = [gamma, kappa, 2.0 * kappa / size_dim + gamma];
    let mut max_ratio: f64 = 0.0;
    for &r in &scales {
        for &t in &times {
            let (size, e) = moment(r, t);
            max_ratio = max_ratio.max(e / (t.powf(kappa) * size.powf(gamma)));
        }
    }
    let admissible = size_slope >= required[0] - tol
        && time_slope >= required[1] - tol
        && diagonal_slope >= required[2] - tol;
    Ok(ExponentFit {
        shape,
        kappa,
        size_slope,
        time_slope,
        diagonal_slope,
        required,
        tolerance: tol,
        max_ratio,
        admissible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MollifierKind {
    /// Even in t and in x.
    Symmetric,
    /// Supported in t > 0.
    NonAnticipative,
}

/// χ(t, x) ∝ φ(t-profile) φ(|x|/r₀) with φ(u) = (1 − u²)³ on |u| < 1. The symmetric profile
/// uses |t| < τ₀, the non-anticipative one 0 < t < τ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub kind: MollifierKind,
    pub tau0: f64,
    pub r0: f64,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        Self {
            kind: MollifierKind::Symmetric,
            tau0: 1.0 / 256.0,
            r0: 3.0 / 16.0,
        }
    }
}

pub(crate) fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let w = 1.0 - u * u;
        w * w * w
    }
}

impl MollifierSpec {
    pub fn non_anticipative() -> Self {
        Self {
            kind: MollifierKind::NonAnticipative,
            ..Self::default()
        }
    }

    /// Unnormalised χ.
    pub fn value(&self, t: f64, x: [f64; 2]) -> f64 {
        let time = match self.kind {
            MollifierKind::Symmetric => bump(t / self.tau0),
            MollifierKind::NonAnticipative => bump((2.0 * t - self.tau0) / self.tau0),
        };
        if time == 0.0 {
            return 0.0;
        }
        time * bump((x[0] * x[0] + x[1] * x[1]).sqrt() / self.r0)
    }

    /// Time support (lo, hi).
    pub fn time_support(&self) -> (f64, f64) {
        match self.kind {
            MollifierKind::Symmetric => (-self.tau0, self.tau0),
            MollifierKind::NonAnticipative => (0.0, self.tau0),
        }
    }

    /// ε⁴ ∫ (χ^ε)² / (∫ χ^ε)², i.e. the continuum point variance of ξ^ε times ε⁴.
    pub fn continuum_variance_scale(&self) -> f64 {
        // Separable: time and radial factors integrate independently.
        let m = 4000;
        let (lo, hi) = self.time_support();
        let (mut t1, mut t2) = (0.0, 0.0);
        for i in 0..m {
            let t = lo + (hi - lo) * (i as f64 + 0.5) / m as f64;
            let v = self.value(t, [0.0, 0.0]);
            t1 += v;
            t2 += v * v;
        }
        let dt = (hi - lo) / m as f64;
        let (mut r1, mut r2) = (0.0, 0.0);
        for i in 0..m {
            let r = self.r0 * (i as f64 + 0.5) / m as f64;
            let v = bump(r / self.r0);
            r1 += TAU * r * v;
            r2 += TAU * r * v * v;
        }
        let dr = self.r0 / m as f64;
        (t2 * dt * r2 * dr) / (t1 * dt * r1 * dr).powi(2)
    }
}

/// Discrete χ^ε(t, x) = ε⁻⁴ χ(t/ε², x/ε) on a grid with spacing a and step dt, normalised so
/// that Σ χ·dt·a² = 1.
#[derive(Debug, Clone)]
pub struct MollifierStencil {
    pub n: usize,
    pub dt: f64,
    pub eps: f64,
    /// None for the single-cell stencil.
    pub spec: Option<MollifierSpec>,
    /// (time offset j, spatial weights χ·dt·a² on the N×N grid, their FFT); the output at
    /// step m uses the white-noise slice m − j.
    pub taps: Vec<(i64, Vec<f64>, Vec<Complex64>)>,
    /// Σ of the unnormalised values times dt·a², before rescaling.
    pub raw_integral: f64,
}

impl MollifierStencil {
    pub fn new(spec: MollifierSpec, eps: f64, n: usize, dt: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let a = 1.0 / n as f64;
        if eps * spec.r0 < 2.0 * a {
            return Err(Error::UnderResolved(format!(
                "spatial mollifier radius {} is below two grid cells ({})",
                eps * spec.r0,
                2.0 * a
            )));
        }
        let (lo, hi) = spec.time_support();
        let (jlo, jhi) = ((eps * eps * lo / dt).floor() as i64, (eps * eps * hi / dt).ceil() as i64);
        let rad = (eps * spec.r0 / a).ceil() as isize;
        let cell = dt * a * a;
        let mut taps = Vec::new();
        let mut total = 0.0;
        for j in jlo..=jhi {
            let tt = j as f64 * dt / (eps * eps);
            let mut w = vec![0.0; n * n];
            let mut any = false;
            for p in -rad..=rad {
                for q in -rad..=rad {
                    let v = spec.value(tt, [p as f64 * a / eps, q as f64 * a / eps]);
                    if v > 0.0 {
                        let s = crate::lattice::wrap(p, n) * n + crate::lattice::wrap(q, n);
                        w[s] += v * cell;
                        total += v * cell;
                        any = true;
                    }
                }
            }
            if any {
                taps.push((j, w, Vec::new()));
            }
        }
        if taps.len() < 2 {
            return Err(Error::UnderResolved(format!(
                "temporal mollifier support {} holds fewer than two steps of size {dt}",
                eps * eps * (hi - lo)
            )));
        }
        let fft = Fft2::new(n);
        for (_, w, f) in taps.iter_mut() {
            w.iter_mut().for_each(|v| *v /= total);
            let mut buf: Vec<Complex64> = w.iter().map(|&v| cz(v, 0.0)).collect();
            fft.forward(&mut buf);
            *f = buf;
        }
        Ok(Self {
            n,
            dt,
            eps,
            spec: Some(spec),
            taps,
            raw_integral: total,
        })
    }

    /// The degenerate stencil that passes white noise through unchanged (one tap, j = 0).
    pub fn single_cell(n: usize, dt: f64) -> Self {
        let mut w = vec![0.0; n * n];
        w[0] = 1.0;
        Self {
            n,
            dt,
            eps: 0.0,
            spec: None,
            taps: vec![(0, w, vec![cz(1.0, 0.0); n * n])],
            raw_integral: 1.0,
        }
    }

    /// Σ χ·dt·a² after normalisation.
    pub fn integral(&self) -> f64 {
        self.taps.iter().map(|(_, w, _)| w.iter().sum::<f64>()).sum()
    }

    /// Var ξ^ε(z) per coefficient for white noise of variance 1/(a²dt) per cell.
    pub fn point_variance(&self) -> f64 {
        let cell = self.dt / (self.n * self.n) as f64;
        self.taps
            .iter()
            .map(|(_, w, _)| w.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / cell
    }

    pub fn is_causal(&self) -> bool {
        self.taps.iter().all(|(j, _, _)| *j >= 1)
    }

    /// Time offsets j (output step m reads slice m − j).
    pub fn offsets(&self) -> Vec<i64> {
        self.taps.iter().map(|(j, _, _)| *j).collect()
    }

    /// Σ_j χ_j ⋆ slice(m − j), componentwise for a pair of fields.
    pub fn apply<F>(&self, m: i64, mut slice: F) -> [LatticeField; 2]
    where
        F: FnMut(i64) -> [LatticeField; 2],
    {
        let fft = Fft2::new(self.n);
        let n2 = self.n * self.n;
        let mut acc: Option<[Vec<Vec<Complex64>>; 2]> = None;
        let mut dim = 0;
        for (j, _, kernel) in &self.taps {
            let s = slice(m - j);
            dim = s[0].dim;
            let acc = acc.get_or_insert_with(|| {
                [vec![vec![cz(0.0, 0.0); n2]; dim], vec![vec![cz(0.0, 0.0); n2]; dim]]
            });
            for comp in 0..2 {
                for a in 0..dim {
                    let f = fft.forward_component(&s[comp], a);
                    for ((o, x), k) in acc[comp][a].iter_mut().zip(&f).zip(kernel) {
                        *o += x * k;
                    }
                }
            }
        }
        let acc = acc.expect("stencil has taps");
        let mut out = [LatticeField::zeros(self.n, dim), LatticeField::zeros(self.n, dim)];
        for comp in 0..2 {
            for a in 0..dim {
                let mut buf = acc[comp][a].clone();
                fft.inverse(&mut buf);
                for s in 0..n2 {
                    out[comp].data[s * dim + a] = buf[s].re;
                }
            }
        }
        out
    }
}

/// Seeded white noise with one slice per time index, and its mollification.
#[derive(Debug, Clone)]
pub struct MollifiedNoise {
    pub alg: LieAlgebra,
    pub seed: u64,
    pub stencil: MollifierStencil,
}

/// Stream ids for white-noise slices; offset so that negative time indices are valid.
pub fn slice_stream(m: i64) -> u64 {
    (m as u64).wrapping_add(1 << 40)
}

impl MollifiedNoise {
    pub fn white_slice(&self, m: i64) -> [LatticeField; 2] {
        sample_white_noise(&self.alg, self.stencil.n, self.stencil.dt, self.seed, slice_stream(m))
            .expect("stencil parameters were validated")
    }

    /// ξ^ε at step m.
    pub fn at(&self, m: i64) -> [LatticeField; 2] {
        self.stencil.apply(m, |k| self.white_slice(k))
    }
}

pub fn mollified_noise(
    alg: &LieAlgebra,
    n: usize,
    dt: f64,
    eps: f64,
    spec: MollifierSpec,
    seed: u64,
) -> Result<MollifiedNoise> {
    Ok(MollifiedNoise {
        alg: alg.clone(),
        seed,
        stencil: MollifierStencil::new(spec, eps, n, dt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_gives_zero_field() {
        let f = sample_she(3, 0.0, 4, 1, 0).unwrap();
        assert!(f.coeffs.iter().all(|c| c.iter().all(|z| z.norm() == 0.0)));
        assert!(sample_she(3, -1.0, 4, 1, 0).is_err());
    }

    #[test]
    fn samples_are_real_fields() {
        let f = sample_she(3, 0.1, 5, 2, 0).unwrap();
        assert_eq!(f.reality_defect(), 0.0);
    }

    #[test]
    fn mode_variances_match_formula() {
        let t = 0.01;
        let reps = 10_000;
        let probe = [[0i64, 0i64], [1, 0], [2, -3]];
        let mut s = vec![0.0; probe.len()];
        let mut s2 = vec![0.0; probe.len()];
        for r in 0..reps {
            let f = sample_she(1, t, 3, 7, r as u64).unwrap();
            for (i, &k) in probe.iter().enumerate() {
                let v = f.coeff(0, k, 0).norm_sqr();
                s[i] += v;
                s2[i] += v * v;
            }
        }
        for (i, &k) in probe.iter().enumerate() {
            let mean = s[i] / reps as f64;
            let se = ((s2[i] / reps as f64 - mean * mean) / reps as f64).sqrt();
            let want = mode_variance(k, t);
            assert!((mean - want).abs() < 3.0 * se, "{k:?}: {mean} vs {want} ± {se}");
        }
        assert_eq!(mode_variance([0, 0], 0.37), 0.37);
    }

    #[test]
    fn semigroup_consistency_of_mode_variances() {
        for k in [[1i64, 0], [3, 2], [0, 7]] {
            let lam = eigenvalue(k);
            for (t, s) in [(0.01, 0.02), (0.1, 0.3), (1e-4, 1e-3)] {
                let lhs = mode_variance(k, t + s);
                let rhs = (-2.0 * lam * s).exp() * mode_variance(k, t) + mode_variance(k, s);
                assert!((lhs - rhs).abs() <= 1e-10 * lhs);
            }
        }
    }

    #[test]
    fn segment_moment_cases() {
        let zero = Segment { x: [0.1, 0.1], v: [0.0, 0.0] };
        assert_eq!(segment_second_moment(&zero, 0.1, 16).value, 0.0);
        // Large t approaches the stationary sum plus the zero mode t|v|².
        let seg = probe_segment(0.1);
        let t = 50.0;
        let got = segment_second_moment(&seg, t, 32).value;
        let kk = 32i64;
        let mut want = t * 0.01;
        for k1 in -kk..=kk {
            for k2 in -kk..=kk {
                if (k1, k2) != (0, 0) {
                    let z = TAU * (k1 as f64 * seg.v[0] + k2 as f64 * seg.v[1]);
                    want += stationary_mode_variance([k1, k2]) * 0.01 * phi(z).norm_sqr();
                }
            }
        }
        assert!((got - want).abs() < 1e-12 * want);
    }

    #[test]
    fn simplex_integral_branches_agree() {
        // Brute-force quadrature oracle.
        let brute = |a: f64, b: f64| {
            let m = 400;
            let h = 1.0 / m as f64;
            let mut sum = cz(0.0, 0.0);
            for i in 0..m {
                for j in 0..m - i {
                    let (s, t) = ((i as f64 + 1.0 / 3.0) * h, (j as f64 + 1.0 / 3.0) * h);
                    sum += cz(0.0, -(s * a + t * b)).exp() * 0.5 * h * h;
                    if i + j + 1 < m {
                        let (s, t) = ((i as f64 + 2.0 / 3.0) * h, (j as f64 + 2.0 / 3.0) * h);
                        sum += cz(0.0, -(s * a + t * b)).exp() * 0.5 * h * h;
                    }
                }
            }
            sum
        };
        for (a, b) in [(0.3, -0.2), (0.99, 0.0), (1.01, 1.0), (5.0, -3.0), (7.0, 7.0), (0.0, 12.0), (-4.0, -4.000001)] {
            let d = (simplex_integral(a, b) - brute(a, b)).norm();
            assert!(d < 1e-4, "({a}, {b}): {d}");
        }
        assert!((simplex_integral(0.0, 0.0) - cz(0.5, 0.0)).norm() < 1e-15);
        // Continuity across the series/closed-form switch.
        let (x, y) = (simplex_integral(0.999_999, 0.2), simplex_integral(1.000_001, 0.2));
        assert!((x - y).norm() < 1e-6);
    }

    #[test]
    fn triangle_moment_matches_side_sum_oracle() {
        // Stokes: the area form and the boundary form of the same functional agree.
        let tri = probe_triangle(0.04);
        let t = 0.002;
        let k = 12usize;
        let area_form = triangle_second_moment(&tri, t, k).value;
        let sides = tri.sides();
        let kk = k as i64;
        let mut boundary = 0.0;
        for k1 in -kk..=kk {
            for k2 in -kk..=kk {
                for comp in 0..2 {
                    let w: Complex64 = sides.iter().map(|s| segment_weight(s, comp, [k1, k2])).sum();
                    boundary += mode_variance([k1, k2], t) * w.norm_sqr();
                }
            }
        }
        assert!((area_form - boundary).abs() < 1e-10 * area_form, "{area_form} {boundary}");
        let flat = Triangle { vertices: [[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]] };
        assert_eq!(triangle_second_moment(&flat, t, k).value, 0.0);
    }

    #[test]
    fn monte_carlo_matches_oracles() {
        let probes = vec![
            (Probe::Segment(probe_segment(0.1)), 0.01),
            (Probe::Triangle(probe_triangle(0.03)), 0.003),
        ];
        let k = 8;
        let mc = monte_carlo_moments(3, &probes, k, 4000, 3);
        for ((p, t), m) in probes.iter().zip(&mc) {
            let o = p.oracle(*t, k).value;
            assert!((m.mean - o).abs() < 3.0 * m.std_err, "{} vs {o} ± {}", m.mean, m.std_err);
        }
        // Direct evaluation of sampled fields gives the same functional.
        let f = sample_she(3, 0.01, k, 9, 0).unwrap();
        let seg = probe_segment(0.1);
        let pts = 2000;
        let mut quad = AlgebraElement::zeros(3);
        for i in 0..pts {
            let s = (i as f64 + 0.5) / pts as f64;
            let p = f.eval_point([seg.x[0] + s * seg.v[0], seg.x[1] + s * seg.v[1]]);
            quad += &(&p[0].scale(seg.v[0]) + &p[1].scale(seg.v[1])).scale(1.0 / pts as f64);
        }
        assert!((&quad - &f.eval_segment(&seg)).max_abs() < 1e-4);
    }

    #[test]
    fn exponent_fits_are_admissible() {
        for shape in [ShapeKind::Segment, ShapeKind::Triangle] {
            let fit = fit_exponents(shape, 0.4, 64).unwrap();
            assert!(fit.admissible, "{fit:?}");
            assert!(fit.max_ratio.is_finite());
        }
    }

    #[test]
    fn time_increments_have_positive_holder_exponent() {
        let seg = probe_segment(0.1);
        let hs: Vec<f64> = (8..=12).map(|k| 0.5f64.powi(k)).collect();
        let es: Vec<f64> = hs.iter().map(|&h| segment_increment_moment(&seg, 0.05, 0.05 + h, 64)).collect();
        let p = slope(&hs.iter().map(|h| h.ln()).collect::<Vec<_>>(), &es.iter().map(|e| e.ln()).collect::<Vec<_>>());
        assert!(p > 0.4, "{p}");
    }

    #[test]
    fn stencil_is_normalised_and_symmetric() {
        let st = MollifierStencil::new(MollifierSpec::default(), 0.5, 32, 1e-4).unwrap();
        assert!((st.integral() - 1.0).abs() < 1e-10);
        let n = 32;
        for (_, w, _) in &st.taps {
            for p in 0..n {
                for q in 0..n {
                    assert_eq!(w[p * n + q], w[((n - p) % n) * n + q]);
                    assert_eq!(w[p * n + q], w[p * n + (n - q) % n]);
                }
            }
        }
        let offs = st.offsets();
        assert_eq!(offs.iter().min().map(|m| -m), offs.iter().max().copied());
        let causal = MollifierStencil::new(MollifierSpec::non_anticipative(), 0.5, 32, 1e-4).unwrap();
        assert!(causal.is_causal());
        assert!((causal.integral() - 1.0).abs() < 1e-10);
        assert!(matches!(
            MollifierStencil::new(MollifierSpec::default(), 0.1, 32, 1e-4),
            Err(Error::UnderResolved(_))
        ));
    }

    #[test]
    fn mollified_noise_variance_matches_stencil() {
        let alg = LieAlgebra::su2();
        let (n, dt, eps) = (32, 2e-4, 0.5);
        let reps = 1500;
        let vals: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let noise = mollified_noise(&alg, n, dt, eps, MollifierSpec::default(), r as u64).unwrap();
                noise.at(0)[0].data[0]
            })
            .collect();
        let mean = vals.iter().map(|v| v * v).sum::<f64>() / reps as f64;
        let var4 = vals.iter().map(|v| (v * v - mean).powi(2)).sum::<f64>() / reps as f64;
        let se = (var4 / reps as f64).sqrt();
        let st = MollifierStencil::new(MollifierSpec::default(), eps, n, dt).unwrap();
        let want = st.point_variance();
        assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} ± {se}");
        // Continuum scaling ε⁻⁴ ∫χ²: discrete value within 10% at this resolution.
        let fine = MollifierStencil::new(MollifierSpec::default(), eps, 64, 2.5e-5).unwrap();
        let cont = MollifierSpec::default().continuum_variance_scale() / eps.powi(4);
        assert!((fine.point_variance() / cont - 1.0).abs() < 0.1, "{} {cont}", fine.point_variance());
    }
}
