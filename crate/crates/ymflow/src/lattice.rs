//! Periodic N×N grids of vector-valued data on the unit torus.
//!
//! Site (i, j) sits at the point (i/N, j/N); points are taken mod 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lie::{stream_rng, AlgebraElement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeField {
    pub n: usize,
    /// Values per site.
    pub dim: usize,
    pub data: Vec<f64>,
}

/// Discrete 1-form: a pair of 𝔤-valued fields (A₁, A₂) with spacing 1/N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGaugeField {
    pub comps: [LatticeField; 2],
}

#[inline]
pub fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

impl LatticeField {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            data: vec![0.0; n * n * dim],
        }
    }

    pub fn from_fn<F: Fn([f64; 2]) -> Vec<f64>>(n: usize, dim: usize, f: F) -> Self {
        let mut out = Self::zeros(n, dim);
        let a = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                let v = f([i as f64 * a, j as f64 * a]);
                out.at_mut(i * n + j).copy_from_slice(&v);
            }
        }
        out
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn site(&self, i: isize, j: isize) -> usize {
        wrap(i, self.n) * self.n + wrap(j, self.n)
    }

    #[inline]
    pub fn at(&self, site: usize) -> &[f64] {
        &self.data[site * self.dim..(site + 1) * self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, site: usize) -> &mut [f64] {
        &mut self.data[site * self.dim..(site + 1) * self.dim]
    }

    pub fn element(&self, site: usize) -> AlgebraElement {
        AlgebraElement(self.at(site).to_vec())
    }

    /// Neighbouring site index shifted by `step` along axis `dir` (0 or 1).
    #[inline]
    pub fn neighbour(&self, site: usize, dir: usize, step: isize) -> usize {
        let (i, j) = ((site / self.n) as isize, (site % self.n) as isize);
        if dir == 0 {
            self.site(i + step, j)
        } else {
            self.site(i, j + step)
        }
    }

    /// Central difference along `dir`.
    pub fn central_diff(&self, dir: usize) -> LatticeField {
        let mut out = Self::zeros(self.n, self.dim);
        let h = 0.5 * self.n as f64;
        for s in 0..self.sites() {
            let p = self.neighbour(s, dir, 1);
            let m = self.neighbour(s, dir, -1);
            for k in 0..self.dim {
                out.data[s * self.dim + k] =
                    h * (self.data[p * self.dim + k] - self.data[m * self.dim + k]);
            }
        }
        out
    }

    /// Five-point Laplacian.
    pub fn laplacian(&self) -> LatticeField {
        let mut out = Self::zeros(self.n, self.dim);
        let h2 = (self.n * self.n) as f64;
        for s in 0..self.sites() {
            let nb = [
                self.neighbour(s, 0, 1),
                self.neighbour(s, 0, -1),
                self.neighbour(s, 1, 1),
                self.neighbour(s, 1, -1),
            ];
            for k in 0..self.dim {
                let mut v = -4.0 * self.data[s * self.dim + k];
                for &q in &nb {
                    v += self.data[q * self.dim + k];
                }
                out.data[s * self.dim + k] = h2 * v;
            }
        }
        out
    }

    /// Bilinear interpolation at a point of the torus.
    pub fn interpolate(&self, x: [f64; 2], out: &mut [f64]) {
        let n = self.n as f64;
        let u = x[0].rem_euclid(1.0) * n;
        let v = x[1].rem_euclid(1.0) * n;
        let (i0, j0) = (u.floor(), v.floor());
        let (fu, fv) = (u - i0, v - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let s00 = self.site(i0, j0);
        let s10 = self.site(i0 + 1, j0);
        let s01 = self.site(i0, j0 + 1);
        let s11 = self.site(i0 + 1, j0 + 1);
        let w = [
            (1.0 - fu) * (1.0 - fv),
            fu * (1.0 - fv),
            (1.0 - fu) * fv,
            fu * fv,
        ];
        for k in 0..self.dim {
            out[k] = w[0] * self.data[s00 * self.dim + k]
                + w[1] * self.data[s10 * self.dim + k]
                + w[2] * self.data[s01 * self.dim + k]
                + w[3] * self.data[s11 * self.dim + k];
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn axpy(&mut self, alpha: f64, other: &LatticeField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, s: f64) -> LatticeField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn sub(&self, other: &LatticeField) -> LatticeField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

impl LatticeGaugeField {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            comps: [LatticeField::zeros(n, dim), LatticeField::zeros(n, dim)],
        }
    }

    /// Sample a closed-form 1-form x ↦ (A₁(x), A₂(x)) at the sites.
    pub fn from_fn<F: Fn([f64; 2]) -> [Vec<f64>; 2]>(n: usize, dim: usize, f: F) -> Self {
        let mut out = Self::zeros(n, dim);
        let a = 1.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                let [v1, v2] = f([i as f64 * a, j as f64 * a]);
                let s = i * n + j;
                out.comps[0].at_mut(s).copy_from_slice(&v1);
                out.comps[1].at_mut(s).copy_from_slice(&v2);
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.comps[0].n
    }

    pub fn dim(&self) -> usize {
        self.comps[0].dim
    }

    pub fn spacing(&self) -> f64 {
        self.comps[0].spacing()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps[0].max_abs().max(self.comps[1].max_abs())
    }

    pub fn sup_distance(&self, other: &LatticeGaugeField) -> f64 {
        let mut m: f64 = 0.0;
        for c in 0..2 {
            for (a, b) in self.comps[c].data.iter().zip(&other.comps[c].data) {
                m = m.max((a - b).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.comps[0].is_finite() && self.comps[1].is_finite()
    }
}

/// Smooth periodic field Σ c cos(2π k·x + φ) per component, |k|_∞ ≤ kmax, with coefficients
/// uniform in ±amplitude/(1 + |k|²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    pub dim: usize,
    /// (component, wave vector, coefficient, phase)
    pub modes: Vec<(usize, [f64; 2], f64, f64)>,
}

impl TrigField {
    pub fn random(dim: usize, kmax: i32, amplitude: f64, seed: u64, stream: u64) -> Self {
        let mut rng = stream_rng(seed, stream);
        let mut modes = Vec::new();
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                if (k1, k2) == (0, 0) {
                    continue;
                }
                let decay = amplitude / (1.0 + (k1 * k1 + k2 * k2) as f64);
                for a in 0..dim {
                    let c = decay * (2.0 * rng.random::<f64>() - 1.0);
                    let phase = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                    modes.push((a, [k1 as f64, k2 as f64], c, phase));
                }
            }
        }
        Self { dim, modes }
    }

    pub fn eval_into(&self, x: [f64; 2], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let tau = 2.0 * std::f64::consts::PI;
        for &(a, k, c, phase) in &self.modes {
            out[a] += c * (tau * (k[0] * x[0] + k[1] * x[1]) + phase).cos();
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> AlgebraElement {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        AlgebraElement(out)
    }

    pub fn to_lattice(&self, n: usize) -> LatticeField {
        LatticeField::from_fn(n, self.dim, |x| self.eval(x).0)
    }
}
