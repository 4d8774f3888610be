//! Lie algebra and group core.
//!
//! Elements of 𝔤 are coefficient vectors in a fixed basis that is orthonormal for
//! `<X, Y> = -2 tr(XY)` in the fundamental representation. Group elements are unitary
//! matrices in the same representation.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeField;

pub type CMat = DMatrix<Complex64>;

/// Tolerance used to decide whether ad_Cas is scalar.
pub const SCALAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgebraKind {
    Su2,
    Su3,
    /// Zero-bracket algebra used as a regression baseline.
    AbelianTest,
}

#[derive(Debug, Clone)]
pub struct LieAlgebra {
    kind: AlgebraKind,
    dim: usize,
    rep_dim: usize,
    f: Vec<f64>,
    /// Nonzero structure constants as (a, b, c, f_abc).
    nz: Vec<(usize, usize, usize, f64)>,
    reps: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub matrix: CMat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasimirData {
    pub lambda: f64,
    /// max |ad_Cas - lambda id|
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    /// max over basis h of the Frobenius norm of [ad_h, ad_Cas]
    pub max_commutator: f64,
    pub worst_basis_index: usize,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli() -> [CMat; 3] {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        CMat::from_row_slice(2, 2, &[z, o, o, z]),
        CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        CMat::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

fn gell_mann() -> Vec<CMat> {
    let mut out = Vec::with_capacity(8);
    let set = |entries: &[(usize, usize, Complex64)]| {
        let mut m = CMat::zeros(3, 3);
        for &(r, col, v) in entries {
            m[(r, col)] = v;
        }
        m
    };
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    out.push(set(&[(0, 1, o), (1, 0, o)]));
    out.push(set(&[(0, 1, -i), (1, 0, i)]));
    out.push(set(&[(0, 0, o), (1, 1, -o)]));
    out.push(set(&[(0, 2, o), (2, 0, o)]));
    out.push(set(&[(0, 2, -i), (2, 0, i)]));
    out.push(set(&[(1, 2, o), (2, 1, o)]));
    out.push(set(&[(1, 2, -i), (2, 1, i)]));
    let s = 1.0 / 3f64.sqrt();
    out.push(set(&[(0, 0, c(s, 0.0)), (1, 1, c(s, 0.0)), (2, 2, c(-2.0 * s, 0.0))]));
    out
}

impl LieAlgebra {
    pub fn su2() -> Self {
        let reps = pauli().iter().map(|s| s * c(0.0, -0.5)).collect();
        Self::from_reps(AlgebraKind::Su2, reps)
    }

    pub fn su3() -> Self {
        let reps = gell_mann().iter().map(|s| s * c(0.0, -0.5)).collect();
        Self::from_reps(AlgebraKind::Su3, reps)
    }

    /// Abelian algebra of the given dimension realised by diagonal matrices.
    pub fn abelian_test(dim: usize) -> Self {
        let s = 1.0 / 2f64.sqrt();
        let reps = (0..dim)
            .map(|a| {
                let mut m = CMat::zeros(dim, dim);
                m[(a, a)] = c(0.0, s);
                m
            })
            .collect();
        Self::from_reps(AlgebraKind::AbelianTest, reps)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "su2" => Ok(Self::su2()),
            "su3" => Ok(Self::su3()),
            "abelian-test" => Ok(Self::abelian_test(3)),
            other => Err(Error::InvalidArgument(format!(
                "unknown algebra '{other}' (expected su2 | su3 | abelian-test)"
            ))),
        }
    }

    fn from_reps(kind: AlgebraKind, reps: Vec<CMat>) -> Self {
        let dim = reps.len();
        let rep_dim = reps[0].nrows();
        let mut f = vec![0.0; dim * dim * dim];
        let mut nz = Vec::new();
        for a in 0..dim {
            for b in 0..dim {
                let comm = &reps[a] * &reps[b] - &reps[b] * &reps[a];
                for cc in 0..dim {
                    let v = -2.0 * (&comm * &reps[cc]).trace().re;
                    let v = if v.abs() < 1e-14 { 0.0 } else { v };
                    f[(a * dim + b) * dim + cc] = v;
                    if v != 0.0 {
                        nz.push((a, b, cc, v));
                    }
                }
            }
        }
        Self {
            kind,
            dim,
            rep_dim,
            f,
            nz,
            reps,
        }
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            AlgebraKind::Su2 => "su2",
            AlgebraKind::Su3 => "su3",
            AlgebraKind::AbelianTest => "abelian-test",
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_dim
    }

    pub fn structure_constant(&self, a: usize, b: usize, cc: usize) -> f64 {
        self.f[(a * self.dim + b) * self.dim + cc]
    }

    pub fn rep_matrices(&self) -> &[CMat] {
        &self.reps
    }

    pub fn basis(&self, a: usize) -> AlgebraElement {
        let mut v = vec![0.0; self.dim];
        v[a] = 1.0;
        AlgebraElement(v)
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement(vec![0.0; self.dim])
    }

    fn check(&self, x: &AlgebraElement) -> Result<()> {
        if x.0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.0.len(),
            });
        }
        Ok(())
    }

    pub fn bracket(&self, x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
        self.check(x)?;
        self.check(y)?;
        let mut out = vec![0.0; self.dim];
        self.bracket_acc(&x.0, &y.0, 1.0, &mut out);
        Ok(AlgebraElement(out))
    }

    /// out += scale * [x, y] on raw coefficient slices.
    #[inline]
    pub fn bracket_acc(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        for &(a, b, cc, v) in &self.nz {
            out[cc] += scale * v * x[a] * y[b];
        }
    }

    /// Matrix of ad_x acting on coefficient vectors.
    pub fn ad_matrix(&self, x: &AlgebraElement) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(a, b, cc, v) in &self.nz {
            m[(cc, b)] += v * x.0[a];
        }
        m
    }

    fn ad_cas(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for a in 0..self.dim {
            let m = self.ad_matrix(&self.basis(a));
            s += &m * &m;
        }
        s
    }

    /// The scalar lambda with ad_Cas = lambda id, for simple algebras.
    pub fn casimir_lambda(&self) -> Result<CasimirData> {
        let m = self.ad_cas();
        let lambda = m.trace() / self.dim as f64;
        let residual = (&m - DMatrix::identity(self.dim, self.dim) * lambda).amax();
        if residual > SCALAR_TOL || lambda.abs() <= SCALAR_TOL {
            return Err(Error::NotSimple {
                lambda,
                residual,
                ad_cas: m,
            });
        }
        Ok(CasimirData { lambda, residual })
    }

    pub fn casimir_centrality_check(&self) -> CentralityReport {
        let cas = self.ad_cas();
        let mut worst = CentralityReport {
            max_commutator: 0.0,
            worst_basis_index: 0,
        };
        for a in 0..self.dim {
            let h = self.ad_matrix(&self.basis(a));
            let v = (&h * &cas - &cas * &h).norm();
            if v > worst.max_commutator {
                worst = CentralityReport {
                    max_commutator: v,
                    worst_basis_index: a,
                };
            }
        }
        worst
    }

    pub fn inner(&self, x: &AlgebraElement, y: &AlgebraElement) -> f64 {
        x.dot(y)
    }

    pub fn to_matrix(&self, x: &[f64]) -> CMat {
        let mut m = CMat::zeros(self.rep_dim, self.rep_dim);
        for (a, &v) in x.iter().enumerate() {
            if v != 0.0 {
                m += &self.reps[a] * c(v, 0.0);
            }
        }
        m
    }

    /// Orthogonal projection of a matrix onto 𝔤 (anti-Hermitian part re-expanded in the basis).
    pub fn project(&self, m: &CMat) -> AlgebraElement {
        AlgebraElement(
            self.reps
                .iter()
                .map(|e| -2.0 * (m * e).trace().re)
                .collect(),
        )
    }

    pub fn exp(&self, x: &AlgebraElement) -> GroupElement {
        GroupElement {
            matrix: self.to_matrix(&x.0).exp(),
        }
    }

    /// Principal logarithm; fails near the cut (an eigenvalue close to -1).
    pub fn log(&self, g: &GroupElement) -> Result<AlgebraElement> {
        let m = &g.matrix;
        let n = self.rep_dim;
        let id = CMat::identity(n, n);
        if (m - &id).norm() < 0.25 {
            // log M = 2 artanh Y with Y = (M − I)(M + I)⁻¹, ‖Y‖ < 1/7.
            if let Some(inv) = (m + &id).try_inverse() {
                let y = (m - &id) * inv;
                let y2 = &y * &y;
                let mut term = y.clone();
                let mut sum = y;
                for k in 1..40 {
                    term = &term * &y2;
                    let add = &term * c(1.0 / (2 * k + 1) as f64, 0.0);
                    sum += &add;
                    if add.norm() < 1e-18 {
                        break;
                    }
                }
                return Ok(self.project(&(sum * c(2.0, 0.0))));
            }
        }
        let adj = m.adjoint();
        let herm = (m + &adj) * c(0.5, 0.0);
        let skew = (m - &adj) * c(0.0, -0.5);
        // Generic mixing so that distinct eigen-angles give distinct eigenvalues.
        let mix = &herm + &skew * c(0.754_877_666_246_692_7, 0.0);
        let eig = SymmetricEigen::new(mix);
        let mut diag = CMat::zeros(n, n);
        for k in 0..n {
            let v = eig.eigenvectors.column(k);
            let cr = (v.adjoint() * &herm * v)[(0, 0)].re;
            let si = (v.adjoint() * &skew * v)[(0, 0)].re;
            let angle = si.atan2(cr);
            if angle.abs() > std::f64::consts::PI - 1e-6 {
                return Err(Error::LogBranch { angle });
            }
            diag[(k, k)] = c(0.0, angle);
        }
        let v = &eig.eigenvectors;
        let l = v * diag * v.adjoint();
        let x = self.project(&l);
        let back = self.exp(&x);
        let defect = (&back.matrix - m).norm();
        if defect > 1e-9 {
            return Err(Error::LogBranch { angle: f64::NAN });
        }
        Ok(x)
    }

    pub fn ad(&self, g: &GroupElement, x: &AlgebraElement) -> AlgebraElement {
        let m = &g.matrix * self.to_matrix(&x.0) * g.matrix.adjoint();
        self.project(&m)
    }

    /// Matrix of Ad_g on coefficient vectors (orthogonal).
    pub fn ad_group_matrix(&self, g: &GroupElement) -> DMatrix<f64> {
        let mut u = DMatrix::zeros(self.dim, self.dim);
        for b in 0..self.dim {
            let col = self.ad(g, &self.basis(b));
            for a in 0..self.dim {
                u[(a, b)] = col.0[a];
            }
        }
        u
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            matrix: CMat::identity(self.rep_dim, self.rep_dim),
        }
    }

    /// A group element exp(X) with X having i.i.d. N(0, scale^2) coefficients.
    pub fn random_group<R: rand::Rng>(&self, rng: &mut R, scale: f64) -> GroupElement {
        self.exp(&self.random_element(rng, scale))
    }

    pub fn random_element<R: rand::Rng>(&self, rng: &mut R, scale: f64) -> AlgebraElement {
        AlgebraElement(
            (0..self.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
                .collect(),
        )
    }
}

impl GroupElement {
    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        (self.matrix.adjoint() * &self.matrix - CMat::identity(n, n))
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn det(&self) -> Complex64 {
        self.matrix.determinant()
    }

    pub fn distance(&self, other: &GroupElement) -> f64 {
        (&self.matrix - &other.matrix).norm()
    }

    /// Re tr / rep dimension.
    pub fn normalized_trace(&self) -> f64 {
        self.matrix.trace().re / self.matrix.nrows() as f64
    }
}

impl AlgebraElement {
    pub fn zeros(dim: usize) -> Self {
        AlgebraElement(vec![0.0; dim])
    }

    pub fn dot(&self, other: &AlgebraElement) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> AlgebraElement {
        AlgebraElement(self.0.iter().map(|v| v * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for &AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: &AlgebraElement) -> AlgebraElement {
        AlgebraElement(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> AlgebraElement {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, rhs: f64) -> AlgebraElement {
        self.scale(rhs)
    }
}

impl AddAssign<&AlgebraElement> for AlgebraElement {
    fn add_assign(&mut self, rhs: &AlgebraElement) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl SubAssign<&AlgebraElement> for AlgebraElement {
    fn sub_assign(&mut self, rhs: &AlgebraElement) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a -= b;
        }
    }
}

/// Independent, reproducible RNG stream keyed by (seed, stream id).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Space-time white noise on an N×N grid for one time step: each site, spatial index and
/// basis direction gets an independent N(0, 1/(a² dt)) coefficient, a = 1/N.
pub fn sample_white_noise(
    alg: &LieAlgebra,
    n: usize,
    dt: f64,
    seed: u64,
    stream: u64,
) -> Result<[LatticeField; 2]> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("grid size must be at least 2, got {n}")));
    }
    let a = 1.0 / n as f64;
    let sd = 1.0 / (a * dt.sqrt());
    let mut rng = stream_rng(seed, stream);
    let mut draw = |f: &mut LatticeField| {
        for v in f.data.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = sd * z;
        }
    };
    let mut x1 = LatticeField::zeros(n, alg.dim());
    let mut x2 = LatticeField::zeros(n, alg.dim());
    draw(&mut x1);
    draw(&mut x2);
    Ok([x1, x2])
}
