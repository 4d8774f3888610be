//! FFT-based implicit heat solve on the periodic grid.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::LatticeField;

/// Unnormalised 2D FFT on N×N row-major complex buffers.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in buf.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = buf[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                buf[i * n + j] = col[i];
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.fwd)
    }

    /// Inverse transform including the 1/N² factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.inv);
        let scale = 1.0 / (self.n * self.n) as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    /// Forward transform of component `k` of a lattice field.
    pub fn forward_component(&self, f: &LatticeField, k: usize) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..f.sites()).map(|s| Complex64::new(f.data[s * f.dim + k], 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

pub struct HeatSolver {
    n: usize,
    fft: Fft2,
    /// |2πk|² per mode in FFT order.
    symbol: Vec<f64>,
}

impl std::fmt::Debug for HeatSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeatSolver").field("n", &self.n).finish()
    }
}

pub fn wavenumber(idx: usize, n: usize) -> f64 {
    if idx <= n / 2 {
        idx as f64
    } else {
        idx as f64 - n as f64
    }
}

impl HeatSolver {
    pub fn new(n: usize) -> Self {
        let tau = 2.0 * std::f64::consts::PI;
        let mut symbol = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (k1, k2) = (wavenumber(i, n), wavenumber(j, n));
                symbol[i * n + j] = tau * tau * (k1 * k1 + k2 * k2);
            }
        }
        Self {
            n,
            fft: Fft2::new(n),
            symbol,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// |2πk|² per mode in FFT order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Applies the Fourier multiplier m(|2πk|²) to every component of `f` in place.
    pub fn apply_multiplier<M: Fn(f64) -> f64>(&self, f: &mut LatticeField, m: M) {
        let n = self.n;
        for k in 0..f.dim {
            let mut buf = self.fft.forward_component(f, k);
            for (b, &lam) in buf.iter_mut().zip(&self.symbol) {
                *b *= m(lam);
            }
            self.fft.inverse(&mut buf);
            for s in 0..n * n {
                f.data[s * f.dim + k] = buf[s].re;
            }
        }
    }

    /// Solves (1 - dt Δ) u = rhs in place.
    pub fn implicit_step(&self, f: &mut LatticeField, dt: f64) {
        self.apply_multiplier(f, |lam| 1.0 / (1.0 + dt * lam));
    }

    /// Exact heat semigroup e^{tΔ}.
    pub fn heat_flow(&self, f: &mut LatticeField, t: f64) {
        self.apply_multiplier(f, |lam| (-t * lam).exp());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_step_damps_single_mode() {
        let n = 32;
        let solver = HeatSolver::new(n);
        let tau = 2.0 * std::f64::consts::PI;
        let mut f = LatticeField::from_fn(n, 2, |x| vec![(tau * 3.0 * x[0]).cos(), (tau * (x[0] + 2.0 * x[1])).sin()]);
        let orig = f.clone();
        let dt = 1e-3;
        solver.implicit_step(&mut f, dt);
        let l0 = tau * tau * 9.0;
        let l1 = tau * tau * 5.0;
        for s in 0..n * n {
            assert!((f.data[2 * s] - orig.data[2 * s] / (1.0 + dt * l0)).abs() < 1e-12);
            assert!((f.data[2 * s + 1] - orig.data[2 * s + 1] / (1.0 + dt * l1)).abs() < 1e-12);
        }
    }
}
