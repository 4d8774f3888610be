//! Lattice solvers for the renormalised SYM equation, the gauge-transformed (B, g) and (Ā, ḡ)
//! systems, the (h, U) system, and the pathwise DeTurck consistency check.
//!
//! Stepping is semi-implicit: the Laplacian is solved exactly in Fourier space and everything
//! else is explicit Euler with central differences. Gauge transformations advance by
//! g ← exp(dt·rhs)·g.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{apply_gauge, log_derivative, wilson_loop, DerivativeRule, GaugeTransform};
use crate::lattice::{LatticeField, LatticeGaugeField, TrigField};
use crate::lie::{AlgebraElement, LieAlgebra};
use crate::oneform::{CurveSpec, LatticeOneForm};
use crate::she::MollifiedNoise;
use crate::spectral::HeatSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scheme {
    /// Implicit Laplacian, explicit remainder.
    #[default]
    SemiImplicit,
    /// Fully explicit Euler.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymState {
    pub a: LatticeGaugeField,
    pub t: f64,
    pub eps: f64,
    pub dt: f64,
    /// Mass renormalisation constant C.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    /// B or Ā.
    pub b: LatticeGaugeField,
    pub g: GaugeTransform,
    /// h = (dg)g⁻¹, when evolved directly.
    pub h: Option<LatticeGaugeField>,
    /// U = Ad_g stored row-major as a dim²-valued field, when evolved directly.
    pub u: Option<LatticeField>,
    pub t: f64,
    pub eps: f64,
    pub dt: f64,
    pub c: f64,
}

/// Owns the FFT plans for one grid.
#[derive(Debug)]
pub struct Solver {
    pub alg: LieAlgebra,
    pub scheme: Scheme,
    /// Steps whose sup-norm exceeds this report a blow-up.
    pub blowup_threshold: f64,
    heat: HeatSolver,
}

fn add_scaled(out: &mut LatticeField, s: f64, f: &LatticeField) {
    out.axpy(s, f);
}

/// Ad_g f sitewise; sites where g is exactly the identity are copied unchanged.
pub fn conjugate_field(alg: &LieAlgebra, g: &GaugeTransform, f: &LatticeField) -> LatticeField {
    let id = alg.identity();
    let vals: Vec<Option<AlgebraElement>> = (0..f.sites())
        .into_par_iter()
        .map(|s| {
            if g.values[s] == id {
                None
            } else {
                Some(alg.ad(&g.values[s], &f.element(s)))
            }
        })
        .collect();
    let mut out = f.clone();
    for (s, v) in vals.into_iter().enumerate() {
        if let Some(v) = v {
            out.at_mut(s).copy_from_slice(&v.0);
        }
    }
    out
}

/// (h₁, h₂) = ((∂₁g)g⁻¹, (∂₂g)g⁻¹) with the centred logarithmic derivative.
pub fn log_derivatives(alg: &LieAlgebra, g: &GaugeTransform) -> Result<LatticeGaugeField> {
    Ok(LatticeGaugeField {
        comps: [
            log_derivative(alg, g, 0, DerivativeRule::Centred)?,
            log_derivative(alg, g, 1, DerivativeRule::Centred)?,
        ],
    })
}

/// U = Ad_g as a dim²-valued field.
pub fn adjoint_field(alg: &LieAlgebra, g: &GaugeTransform) -> LatticeField {
    let d = alg.dim();
    let mats: Vec<DMatrix<f64>> = g.values.par_iter().map(|x| alg.ad_group_matrix(x)).collect();
    let mut out = LatticeField::zeros(g.n, d * d);
    for (s, m) in mats.iter().enumerate() {
        let slot = out.at_mut(s);
        for r in 0..d {
            for c in 0..d {
                slot[r * d + c] = m[(r, c)];
            }
        }
    }
    out
}

/// max over sites of ‖UᵀU − I‖_max.
pub fn orthogonality_defect(u: &LatticeField, dim: usize) -> f64 {
    (0..u.sites())
        .map(|s| {
            let m = DMatrix::from_row_slice(dim, dim, u.at(s));
            let e = m.transpose() * &m - DMatrix::identity(dim, dim);
            e.amax()
        })
        .fold(0.0, f64::max)
}

impl Solver {
    pub fn new(alg: &LieAlgebra, n: usize, scheme: Scheme) -> Self {
        Self {
            alg: alg.clone(),
            scheme,
            blowup_threshold: 1e8,
            heat: HeatSolver::new(n),
        }
    }

    pub fn n(&self) -> usize {
        self.heat.n()
    }

    /// Largest admissible step: a² for the semi-implicit scheme, a²/4 for the explicit one.
    pub fn stability_limit(&self) -> f64 {
        let a2 = 1.0 / (self.n() * self.n()) as f64;
        match self.scheme {
            Scheme::SemiImplicit => a2,
            Scheme::Explicit => 0.25 * a2,
        }
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt <= self.stability_limit() * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "dt = {dt} outside (0, {}] for this scheme",
                self.stability_limit()
            )));
        }
        Ok(())
    }

    fn check_field(&self, f: &LatticeGaugeField) -> Result<()> {
        if f.n() != self.n() || f.dim() != self.alg.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: f.n(),
            });
        }
        Ok(())
    }

    fn check_blowup(&self, f: &LatticeGaugeField, t: f64) -> Result<()> {
        let m = f.max_abs();
        if !f.is_finite() || m > self.blowup_threshold {
            return Err(Error::Blowup { t, magnitude: m });
        }
        Ok(())
    }

    /// Σⱼ [Aⱼ, 2∂ⱼAᵢ − ∂ᵢAⱼ + [Aⱼ, Aᵢ]] for i = 1, 2.
    pub fn nonlinearity(&self, a: &LatticeGaugeField) -> LatticeGaugeField {
        let d = a.dim();
        // diff[j][i] = ∂ⱼ Aᵢ
        let diff = [
            [a.comps[0].central_diff(0), a.comps[1].central_diff(0)],
            [a.comps[0].central_diff(1), a.comps[1].central_diff(1)],
        ];
        let mut out = LatticeGaugeField::zeros(a.n(), d);
        let alg = &self.alg;
        for i in 0..2 {
            let rows: Vec<Vec<f64>> = (0..a.comps[0].sites())
                .into_par_iter()
                .map(|s| {
                    let mut acc = vec![0.0; d];
                    let mut tmp = vec![0.0; d];
                    for j in 0..2 {
                        for k in 0..d {
                            tmp[k] = 2.0 * diff[j][i].data[s * d + k] - diff[i][j].data[s * d + k];
                        }
                        alg.bracket_acc(a.comps[j].at(s), a.comps[i].at(s), 1.0, &mut tmp);
                        alg.bracket_acc(a.comps[j].at(s), &tmp, 1.0, &mut acc);
                    }
                    acc
                })
                .collect();
            for (s, r) in rows.into_iter().enumerate() {
                out.comps[i].at_mut(s).copy_from_slice(&r);
            }
        }
        out
    }

    /// One step of ∂ₜAᵢ = ΔAᵢ + N(A)ᵢ + forcingᵢ + C Aᵢ + Σ extrasᵢ.
    fn advance(
        &self,
        a: &LatticeGaugeField,
        dt: f64,
        c: f64,
        forcing: &[LatticeField; 2],
        extras: &[&LatticeGaugeField],
    ) -> LatticeGaugeField {
        let nl = self.nonlinearity(a);
        let mut out = a.clone();
        for i in 0..2 {
            let mut rate = nl.comps[i].clone();
            add_scaled(&mut rate, 1.0, &forcing[i]);
            add_scaled(&mut rate, c, &a.comps[i]);
            for e in extras {
                add_scaled(&mut rate, 1.0, &e.comps[i]);
            }
            if self.scheme == Scheme::Explicit {
                add_scaled(&mut rate, 1.0, &a.comps[i].laplacian());
            }
            add_scaled(&mut out.comps[i], dt, &rate);
            if self.scheme == Scheme::SemiImplicit {
                self.heat.implicit_step(&mut out.comps[i], dt);
            }
        }
        out
    }

    /// Renormalised SYM step with the given (already mollified) noise slice.
    pub fn step_sym(&self, s: &SymState, noise: &[LatticeField; 2]) -> Result<SymState> {
        self.check_dt(s.dt)?;
        self.check_field(&s.a)?;
        let a = self.advance(&s.a, s.dt, s.c, noise, &[]);
        let t = s.t + s.dt;
        self.check_blowup(&a, t)?;
        Ok(SymState { a, t, ..s.clone() })
    }

    /// (∂ₜg)g⁻¹ = ∂ⱼhⱼ + [Bⱼ, hⱼ].
    pub fn gauge_rate(&self, b: &LatticeGaugeField, h: &LatticeGaugeField) -> LatticeField {
        let mut rate = h.comps[0].central_diff(0);
        rate.axpy(1.0, &h.comps[1].central_diff(1));
        let d = b.dim();
        for j in 0..2 {
            for s in 0..rate.sites() {
                let slot = &mut rate.data[s * d..(s + 1) * d];
                self.alg.bracket_acc(b.comps[j].at(s), h.comps[j].at(s), 1.0, slot);
            }
        }
        rate
    }

    /// g ← exp(dt·rate)·g sitewise.
    pub fn advance_gauge(&self, g: &GaugeTransform, rate: &LatticeField, dt: f64) -> GaugeTransform {
        let values = g
            .values
            .par_iter()
            .enumerate()
            .map(|(s, x)| self.alg.exp(&rate.element(s).scale(dt)).mul(x))
            .collect();
        GaugeTransform { n: g.n, values }
    }

    /// One step of the (B, g) system driven by U ξ^ε = g ξ^ε g⁻¹.
    pub fn step_coupled_bg(&self, s: &CoupledState, noise: &[LatticeField; 2]) -> Result<CoupledState> {
        self.check_dt(s.dt)?;
        self.check_field(&s.b)?;
        let h = log_derivatives(&self.alg, &s.g)?;
        let forcing = [
            conjugate_field(&self.alg, &s.g, &noise[0]),
            conjugate_field(&self.alg, &s.g, &noise[1]),
        ];
        let ch = scaled_gauge_field(&h, s.c);
        let b = self.advance(&s.b, s.dt, s.c, &forcing, &[&ch]);
        let g = self.advance_gauge(&s.g, &self.gauge_rate(&s.b, &h), s.dt);
        let t = s.t + s.dt;
        self.check_blowup(&b, t)?;
        Ok(CoupledState {
            b,
            g,
            t,
            ..s.clone()
        })
    }

    /// One step of the (Ā, ḡ) system given χ^ε ∗ (ḡξḡ⁻¹) at this step.
    pub fn step_coupled_bar_a(
        &self,
        s: &CoupledState,
        mollified_conjugated_noise: &[LatticeField; 2],
        cbar: f64,
    ) -> Result<CoupledState> {
        self.check_dt(s.dt)?;
        self.check_field(&s.b)?;
        let h = log_derivatives(&self.alg, &s.g)?;
        let ch = scaled_gauge_field(&h, s.c - cbar);
        let b = self.advance(&s.b, s.dt, s.c, mollified_conjugated_noise, &[&ch]);
        let g = self.advance_gauge(&s.g, &self.gauge_rate(&s.b, &h), s.dt);
        let t = s.t + s.dt;
        self.check_blowup(&b, t)?;
        Ok(CoupledState {
            b,
            g,
            t,
            ..s.clone()
        })
    }

    /// One step of the (h, U) system driven by the current B (held fixed during the step).
    pub fn step_uh(&self, s: &CoupledState) -> Result<CoupledState> {
        self.check_dt(s.dt)?;
        let (h, u) = match (&s.h, &s.u) {
            (Some(h), Some(u)) => (h, u),
            _ => return Err(Error::Precondition("step_uh needs h and U".into())),
        };
        let d = self.alg.dim();
        let n = self.n();
        let sites = n * n;
        let b = &s.b;
        // D = Σⱼ [Bⱼ, hⱼ]
        let mut dfield = LatticeField::zeros(n, d);
        for j in 0..2 {
            for x in 0..sites {
                self.alg.bracket_acc(b.comps[j].at(x), h.comps[j].at(x), 1.0, &mut dfield.data[x * d..(x + 1) * d]);
            }
        }
        let mut new_h = h.clone();
        let diffs = [
            [h.comps[0].central_diff(0), h.comps[1].central_diff(0)],
            [h.comps[0].central_diff(1), h.comps[1].central_diff(1)],
        ];
        for i in 0..2 {
            let mut rate = dfield.central_diff(i);
            for x in 0..sites {
                let slot = &mut rate.data[x * d..(x + 1) * d];
                for j in 0..2 {
                    self.alg.bracket_acc(h.comps[j].at(x), diffs[j][i].at(x), -1.0, slot);
                }
                self.alg.bracket_acc(dfield.at(x), h.comps[i].at(x), 1.0, slot);
            }
            if self.scheme == Scheme::Explicit {
                rate.axpy(1.0, &h.comps[i].laplacian());
            }
            new_h.comps[i].axpy(s.dt, &rate);
            if self.scheme == Scheme::SemiImplicit {
                self.heat.implicit_step(&mut new_h.comps[i], s.dt);
            }
        }
        // ∂ₜU = ΔU − Σⱼ ad_{hⱼ}² U + ad_D U
        let rates: Vec<Vec<f64>> = (0..sites)
            .into_par_iter()
            .map(|x| {
                let um = DMatrix::from_row_slice(d, d, u.at(x));
                let mut gen = self.alg.ad_matrix(&dfield.element(x));
                for j in 0..2 {
                    let adh = self.alg.ad_matrix(&h.comps[j].element(x));
                    gen -= &adh * &adh;
                }
                let r = gen * um;
                let mut out = vec![0.0; d * d];
                for p in 0..d {
                    for q in 0..d {
                        out[p * d + q] = r[(p, q)];
                    }
                }
                out
            })
            .collect();
        let mut new_u = u.clone();
        for (x, r) in rates.iter().enumerate() {
            for (v, dv) in new_u.at_mut(x).iter_mut().zip(r) {
                *v += s.dt * dv;
            }
        }
        match self.scheme {
            Scheme::SemiImplicit => self.heat.implicit_step(&mut new_u, s.dt),
            Scheme::Explicit => new_u.axpy(s.dt, &u.laplacian()),
        }
        let g = self.advance_gauge(&s.g, &self.gauge_rate(b, h), s.dt);
        Ok(CoupledState {
            g,
            h: Some(new_h),
            u: Some(new_u),
            t: s.t + s.dt,
            ..s.clone()
        })
    }
}

fn scaled_gauge_field(f: &LatticeGaugeField, s: f64) -> LatticeGaugeField {
    LatticeGaugeField {
        comps: [f.comps[0].scaled(s), f.comps[1].scaled(s)],
    }
}

/// Builds χ^ε ∗ (ḡξḡ⁻¹) step by step, remembering past ḡ; ḡ ≡ 1 before step 0.
#[derive(Debug)]
pub struct ConjugatedNoise {
    pub noise: MollifiedNoise,
    history: HashMap<i64, GaugeTransform>,
}

impl ConjugatedNoise {
    /// Requires a stencil that only reads present and past slices.
    pub fn new(noise: MollifiedNoise) -> Result<Self> {
        if noise.stencil.offsets().iter().any(|&j| j < 0) {
            return Err(Error::Precondition(
                "the Ā system needs a non-anticipative mollifier (all time offsets ≥ 0)".into(),
            ));
        }
        Ok(Self {
            noise,
            history: HashMap::new(),
        })
    }

    /// Forcing at step m given ḡ at step m; records ḡ_m and drops entries outside the window.
    pub fn forcing(&mut self, m: i64, gbar: &GaugeTransform) -> [LatticeField; 2] {
        self.history.insert(m, gbar.clone());
        let alg = self.noise.alg.clone();
        let out = {
            let hist = &self.history;
            let noise = &self.noise;
            noise.stencil.apply(m, |k| {
                let w = noise.white_slice(k);
                match hist.get(&k) {
                    Some(g) if k >= 0 => [conjugate_field(&alg, g, &w[0]), conjugate_field(&alg, g, &w[1])],
                    _ => w,
                }
            })
        };
        let reach = self.noise.stencil.offsets().into_iter().max().unwrap_or(0);
        self.history.retain(|&k, _| k > m - reach - 1);
        out
    }
}

/// Smooth deterministic forcing f(x)·cos(2π·frequency·t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothForcing {
    pub comps: [TrigField; 2],
    pub frequency: f64,
}

impl SmoothForcing {
    pub fn on_grid(&self, n: usize, t: f64) -> [LatticeField; 2] {
        let s = (2.0 * std::f64::consts::PI * self.frequency * t).cos();
        [self.comps[0].to_lattice(n).scaled(s), self.comps[1].to_lattice(n).scaled(s)]
    }
}

/// Continuum data for the consistency run: A(0), g(0) = exp(φ₀), and the forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothData {
    pub a0: [TrigField; 2],
    pub phi0: TrigField,
    pub forcing: SmoothForcing,
}

impl SmoothData {
    pub fn random(dim: usize, kmax: i32, a_amp: f64, g_amp: f64, f_amp: f64, seed: u64) -> Self {
        Self {
            a0: [
                TrigField::random(dim, kmax, a_amp, seed, 0xd1),
                TrigField::random(dim, kmax, a_amp, seed, 0xd2),
            ],
            phi0: TrigField::random(dim, kmax, g_amp, seed, 0xd3),
            forcing: SmoothForcing {
                comps: [
                    TrigField::random(dim, kmax, f_amp, seed, 0xd4),
                    TrigField::random(dim, kmax, f_amp, seed, 0xd5),
                ],
                frequency: 1.0,
            },
        }
    }

    pub fn a0_on_grid(&self, n: usize) -> LatticeGaugeField {
        LatticeGaugeField {
            comps: [self.a0[0].to_lattice(n), self.a0[1].to_lattice(n)],
        }
    }

    pub fn g0_on_grid(&self, alg: &LieAlgebra, n: usize) -> GaugeTransform {
        GaugeTransform::from_algebra_field(alg, &self.phi0.to_lattice(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeTurckReport {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    /// Final time reached (earlier than requested on blow-up).
    pub t: f64,
    /// sup |A^g − B| at the final time.
    pub discrepancy: f64,
    /// sup distance between the two gauge transformations.
    pub gauge_gap: f64,
    /// |W(A) − W(B)| over the square loop [1/4, 3/4]².
    pub wilson_gap: f64,
    pub blowup: Option<f64>,
}

/// Solves A and g (driven by B := A^g) and, separately, the (B, g) system with the same forcing
/// conjugated, then compares A^g with B.
pub fn deturck_consistency(
    alg: &LieAlgebra,
    data: &SmoothData,
    horizon: f64,
    n: usize,
    dt: f64,
    c: f64,
) -> Result<DeTurckReport> {
    let solver = Solver::new(alg, n, Scheme::SemiImplicit);
    let steps = (horizon / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidArgument(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    let a0 = data.a0_on_grid(n);
    let g0 = data.g0_on_grid(alg, n);
    let mut sym = SymState {
        a: a0.clone(),
        t: 0.0,
        eps: 0.0,
        dt,
        c,
    };
    let mut g1 = g0.clone();
    let mut coupled = CoupledState {
        b: apply_gauge(alg, &a0, &g0)?,
        g: g0,
        h: None,
        u: None,
        t: 0.0,
        eps: 0.0,
        dt,
        c,
    };
    let mut blowup = None;
    let mut done = 0;
    for k in 0..steps {
        let f = data.forcing.on_grid(n, k as f64 * dt);
        let h1 = log_derivatives(alg, &g1)?;
        let b1 = gauge_with_derivatives(alg, &sym.a, &g1, &h1);
        let next_sym = solver.step_sym(&sym, &f);
        let next_coupled = solver.step_coupled_bg(&coupled, &f);
        match (next_sym, next_coupled) {
            (Ok(s), Ok(cst)) => {
                g1 = solver.advance_gauge(&g1, &solver.gauge_rate(&b1, &h1), dt);
                sym = s;
                coupled = cst;
                done = k + 1;
            }
            (Err(Error::Blowup { t, .. }), _) | (_, Err(Error::Blowup { t, .. })) => {
                blowup = Some(t);
                break;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let ag = apply_gauge(alg, &sym.a, &g1)?;
    let lp = CurveSpec::rectangle([0.25, 0.25], 0.5, 0.5)?;
    let mesh = 0.25 / n as f64;
    let wa = wilson_loop(alg, &LatticeOneForm::new(sym.a.clone()), &lp, mesh)?;
    let wb = wilson_loop(alg, &LatticeOneForm::new(coupled.b.clone()), &lp, mesh)?;
    Ok(DeTurckReport {
        n,
        dt,
        steps: done,
        t: done as f64 * dt,
        discrepancy: ag.sup_distance(&coupled.b),
        gauge_gap: g1.sup_distance(&coupled.g),
        wilson_gap: (wa - wb).abs(),
        blowup,
    })
}

/// A^g = Ad_g A − h for precomputed h = (dg)g⁻¹.
fn gauge_with_derivatives(
    alg: &LieAlgebra,
    a: &LatticeGaugeField,
    g: &GaugeTransform,
    h: &LatticeGaugeField,
) -> LatticeGaugeField {
    let mut out = LatticeGaugeField {
        comps: [conjugate_field(alg, g, &a.comps[0]), conjugate_field(alg, g, &a.comps[1])],
    };
    for i in 0..2 {
        out.comps[i].axpy(-1.0, &h.comps[i]);
    }
    out
}

/// Renormalised SYM driven by mollified white noise.
pub fn run_sym<F>(solver: &Solver, init: SymState, noise: &MollifiedNoise, steps: usize, mut observe: F) -> Result<SymState>
where
    F: FnMut(&SymState),
{
    let mut s = init;
    observe(&s);
    for m in 0..steps {
        let xi = noise.at(m as i64);
        s = solver.step_sym(&s, &xi)?;
        observe(&s);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::sample_white_noise;
    use crate::she::{mollified_noise, MollifierSpec, MollifierStencil};

    fn smooth_a(alg: &LieAlgebra, n: usize, amp: f64, seed: u64) -> LatticeGaugeField {
        LatticeGaugeField {
            comps: [
                TrigField::random(alg.dim(), 2, amp, seed, 1).to_lattice(n),
                TrigField::random(alg.dim(), 2, amp, seed, 2).to_lattice(n),
            ],
        }
    }

    fn zero_noise(alg: &LieAlgebra, n: usize) -> [LatticeField; 2] {
        [LatticeField::zeros(n, alg.dim()), LatticeField::zeros(n, alg.dim())]
    }

    #[test]
    fn zero_data_stays_zero() {
        let alg = LieAlgebra::su2();
        let n = 16;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let mut s = SymState {
            a: LatticeGaugeField::zeros(n, 3),
            t: 0.0,
            eps: 0.0,
            dt: 0.25 / (n * n) as f64,
            c: 0.0,
        };
        for _ in 0..10 {
            s = solver.step_sym(&s, &zero_noise(&alg, n)).unwrap();
        }
        assert_eq!(s.a.max_abs(), 0.0);
    }

    #[test]
    fn abelian_modes_decay_like_heat() {
        let alg = LieAlgebra::abelian_test(1);
        let n = 32;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let tau = 2.0 * std::f64::consts::PI;
        for dt in [1e-3 / 4.0, 1e-3 / 8.0] {
            let f = LatticeField::from_fn(n, 1, |x| vec![(tau * (x[0] + 2.0 * x[1])).cos()]);
            let s = SymState {
                a: LatticeGaugeField {
                    comps: [f.clone(), LatticeField::zeros(n, 1)],
                },
                t: 0.0,
                eps: 0.0,
                dt,
                c: 0.0,
            };
            let s1 = solver.step_sym(&s, &zero_noise(&alg, n)).unwrap();
            let lam = tau * tau * 5.0;
            let factor = s1.a.comps[0].data[0] / f.data[0];
            let err = (factor - (-lam * dt).exp()).abs();
            // Implicit Euler: 1/(1+λdt) − e^{−λdt} = (λdt)²/2 + O(dt³).
            assert!(err < 0.6 * (lam * dt).powi(2), "{err}");
        }
    }

    #[test]
    fn smooth_forced_run_is_second_order_in_space() {
        let alg = LieAlgebra::su2();
        let data = SmoothData::random(3, 2, 0.5, 0.0, 1.0, 5);
        let horizon = 1.0 / 256.0;
        let run = |n: usize| {
            let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
            let dt = 0.25 / (n * n) as f64;
            let mut s = SymState {
                a: data.a0_on_grid(n),
                t: 0.0,
                eps: 0.0,
                dt,
                c: 0.0,
            };
            let steps = (horizon / dt).round() as usize;
            for k in 0..steps {
                s = solver.step_sym(&s, &data.forcing.on_grid(n, k as f64 * dt)).unwrap();
            }
            s.a
        };
        let (a16, a32, a64) = (run(16), run(32), run(64));
        let coarse_gap = |fine: &LatticeGaugeField, coarse: &LatticeGaugeField| {
            let (nc, nf) = (coarse.n(), fine.n());
            let r = nf / nc;
            let mut m: f64 = 0.0;
            for c in 0..2 {
                for i in 0..nc {
                    for j in 0..nc {
                        let (p, q) = (coarse.comps[c].at(i * nc + j), fine.comps[c].at(i * r * nf + j * r));
                        for k in 0..p.len() {
                            m = m.max((p[k] - q[k]).abs());
                        }
                    }
                }
            }
            m
        };
        let e1 = coarse_gap(&a32, &a16);
        let e2 = coarse_gap(&a64, &a32);
        let order = (e1 / e2).log2();
        assert!(order >= 1.8, "order {order} ({e1}, {e2})");
    }

    #[test]
    fn coupled_system_with_identity_gauge_reduces_to_sym_bitwise() {
        let alg = LieAlgebra::su3();
        let n = 16;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let a = smooth_a(&alg, n, 0.3, 4);
        let dt = 0.25 / (n * n) as f64;
        let mut sym = SymState {
            a: a.clone(),
            t: 0.0,
            eps: 0.1,
            dt,
            c: 1.7,
        };
        let mut cp = CoupledState {
            b: a,
            g: GaugeTransform::identity(&alg, n),
            h: None,
            u: None,
            t: 0.0,
            eps: 0.1,
            dt,
            c: 1.7,
        };
        for m in 0..3 {
            let xi = sample_white_noise(&alg, n, dt, 11, m).unwrap();
            sym = solver.step_sym(&sym, &xi).unwrap();
            cp = solver.step_coupled_bg(&cp, &xi).unwrap();
            assert!(sym.a == cp.b);
        }
    }

    #[test]
    fn coupled_fixed_points() {
        let alg = LieAlgebra::su2();
        let n = 16;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let dt = 0.25 / (n * n) as f64;
        let mut cp = CoupledState {
            b: LatticeGaugeField::zeros(n, 3),
            g: GaugeTransform::identity(&alg, n),
            h: None,
            u: None,
            t: 0.0,
            eps: 0.0,
            dt,
            c: 0.0,
        };
        cp = solver.step_coupled_bg(&cp, &zero_noise(&alg, n)).unwrap();
        assert_eq!(cp.b.max_abs(), 0.0);
        assert!(cp.g.sup_distance(&GaugeTransform::identity(&alg, n)) == 0.0);
        // A constant g has zero rate.
        let mut rng = crate::lie::stream_rng(3, 0);
        let g0 = GaugeTransform::constant(n, alg.random_group(&mut rng, 1.0));
        let cp2 = CoupledState {
            b: smooth_a(&alg, n, 0.3, 2),
            g: g0.clone(),
            ..cp
        };
        let next = solver.step_coupled_bg(&cp2, &zero_noise(&alg, n)).unwrap();
        assert!(next.g.sup_distance(&g0) < 1e-14);
    }

    #[test]
    fn gauge_stays_unitary_over_many_steps() {
        let alg = LieAlgebra::su2();
        let n = 16;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let dt = 0.25 / (n * n) as f64;
        let mut cp = CoupledState {
            b: smooth_a(&alg, n, 0.5, 8),
            g: GaugeTransform::smooth_random(&alg, n, 2, 0.5, 9),
            h: None,
            u: None,
            t: 0.0,
            eps: 0.0,
            dt,
            c: 0.5,
        };
        for m in 0..1000 {
            let xi = sample_white_noise(&alg, n, dt, 12, m).unwrap();
            let small = [xi[0].scaled(1e-3), xi[1].scaled(1e-3)];
            cp = solver.step_coupled_bg(&cp, &small).unwrap();
        }
        assert!(cp.g.max_unitarity_defect() <= 1e-12, "{}", cp.g.max_unitarity_defect());
    }

    #[test]
    fn bar_a_system_reductions() {
        let alg = LieAlgebra::su2();
        let n = 16;
        let dt = 0.25 / (n * n) as f64;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let a = smooth_a(&alg, n, 0.4, 21);
        let g = GaugeTransform::smooth_random(&alg, n, 2, 0.5, 22);
        let base = CoupledState {
            b: a.clone(),
            g: g.clone(),
            h: None,
            u: None,
            t: 0.0,
            eps: 0.0,
            dt,
            c: 0.8,
        };
        // Single-cell stencil and C̄ = 0 matches the (B, g) step.
        let white = MollifiedNoise {
            alg: alg.clone(),
            seed: 5,
            stencil: MollifierStencil::single_cell(n, dt),
        };
        let xi = white.white_slice(0);
        let mut conj = ConjugatedNoise::new(white).unwrap();
        let f = conj.forcing(0, &g);
        let bar = solver.step_coupled_bar_a(&base, &f, 0.0).unwrap();
        let bg = solver.step_coupled_bg(&base, &xi).unwrap();
        assert!(bar.b.sup_distance(&bg.b) < 1e-12, "{}", bar.b.sup_distance(&bg.b));
        // ḡ ≡ 1 reduces to the SYM step with the mollified noise.
        let noise = mollified_noise(&alg, n, dt, 0.9, MollifierSpec::non_anticipative(), 6).unwrap();
        let mut conj = ConjugatedNoise::new(noise.clone()).unwrap();
        let id = GaugeTransform::identity(&alg, n);
        let f = conj.forcing(0, &id);
        let bar = solver
            .step_coupled_bar_a(&CoupledState { g: id, ..base.clone() }, &f, 0.3)
            .unwrap();
        let sym = solver
            .step_sym(&SymState { a, t: 0.0, eps: 0.9, dt, c: 0.8 }, &noise.at(0))
            .unwrap();
        assert!(bar.b == sym.a);
        // A symmetric mollifier would need future ḡ.
        let sym_noise = mollified_noise(&alg, n, dt, 0.9, MollifierSpec::default(), 6).unwrap();
        assert!(matches!(ConjugatedNoise::new(sym_noise), Err(Error::Precondition(_))));
    }

    #[test]
    fn uh_stationary_for_trivial_gauge() {
        let alg = LieAlgebra::su2();
        let n = 16;
        let solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        let id = GaugeTransform::identity(&alg, n);
        let s = CoupledState {
            b: smooth_a(&alg, n, 0.5, 1),
            g: id.clone(),
            h: Some(LatticeGaugeField::zeros(n, 3)),
            u: Some(adjoint_field(&alg, &id)),
            t: 0.0,
            eps: 0.0,
            dt: 0.25 / (n * n) as f64,
            c: 0.0,
        };
        let next = solver.step_uh(&s).unwrap();
        assert_eq!(next.h.as_ref().unwrap().max_abs(), 0.0);
        assert!(next.u.as_ref().unwrap().sub(s.u.as_ref().unwrap()).max_abs() < 1e-15);
    }

    fn uh_discrepancy(alg: &LieAlgebra, n: usize, dt: f64, horizon: f64) -> (f64, f64) {
        let solver = Solver::new(alg, n, Scheme::SemiImplicit);
        let g0 = GaugeTransform::smooth_random(alg, n, 1, 0.3, 41);
        let mut s = CoupledState {
            b: smooth_a(alg, n, 0.5, 42),
            g: g0.clone(),
            h: Some(log_derivatives(alg, &g0).unwrap()),
            u: Some(adjoint_field(alg, &g0)),
            t: 0.0,
            eps: 0.0,
            dt,
            c: 0.0,
        };
        let steps = (horizon / dt).round() as usize;
        for _ in 0..steps {
            s = solver.step_uh(&s).unwrap();
        }
        let h_derived = log_derivatives(alg, &s.g).unwrap();
        let u_derived = adjoint_field(alg, &s.g);
        let dh = h_derived.sup_distance(s.h.as_ref().unwrap());
        let du = u_derived.sub(s.u.as_ref().unwrap()).max_abs();
        (dh.max(du), orthogonality_defect(&u_derived, alg.dim()))
    }

    #[test]
    fn derived_and_direct_uh_agree_to_first_order_in_time() {
        let alg = LieAlgebra::su2();
        let n = 32;
        let horizon = 1.0 / 128.0;
        let a2 = 1.0 / (n * n) as f64;
        let (e1, o1) = uh_discrepancy(&alg, n, a2, horizon);
        let (e2, _) = uh_discrepancy(&alg, n, a2 / 2.0, horizon);
        let (e3, _) = uh_discrepancy(&alg, n, a2 / 4.0, horizon);
        // The time-step part of the gap halves; the O(a²) spatial part is dt-independent.
        let r = (e1 - e2) / (e2 - e3);
        assert!((1.6..=2.6).contains(&r), "ratio {r} ({e1}, {e2}, {e3})");
        assert!(o1 <= 1e-8);
    }

    #[test]
    fn deturck_identity_gauge_is_exact() {
        let alg = LieAlgebra::su2();
        let data = SmoothData::random(3, 2, 0.5, 0.0, 1.0, 3);
        let n = 16;
        let dt = 0.25 / (n * n) as f64;
        let r = deturck_consistency(&alg, &data, 8.0 * dt, n, dt, 0.7).unwrap();
        assert!(r.discrepancy < 1e-13, "{}", r.discrepancy);
    }

    #[test]
    fn deturck_abelian_gap_is_second_order() {
        let alg = LieAlgebra::abelian_test(2);
        let data = SmoothData::random(2, 2, 0.5, 0.5, 1.0, 4);
        let horizon = 1.0 / 256.0;
        let gap = |n: usize| {
            let dt = 0.25 / (n * n) as f64;
            deturck_consistency(&alg, &data, horizon, n, dt, 0.7).unwrap().discrepancy
        };
        let (e16, e32) = (gap(16), gap(32));
        assert!(e16 / e32 > 3.0, "{e16} {e32}");
    }

    #[test]
    fn blowup_is_detected_with_time_stamp() {
        let alg = LieAlgebra::su2();
        let n = 16;
        let mut solver = Solver::new(&alg, n, Scheme::SemiImplicit);
        solver.blowup_threshold = 1.0;
        let s = SymState {
            a: smooth_a(&alg, n, 0.3, 2),
            t: 0.0,
            eps: 0.0,
            dt: 0.25 / (n * n) as f64,
            c: 0.0,
        };
        let big = [LatticeField::zeros(n, 3).sub(&LatticeField::zeros(n, 3)), LatticeField::zeros(n, 3)];
        let mut forcing = big.clone();
        forcing[0].data.iter_mut().for_each(|v| *v = 1e6);
        match solver.step_sym(&s, &forcing) {
            Err(Error::Blowup { t, magnitude }) => {
                assert_eq!(t, s.dt);
                assert!(magnitude > 1.0);
            }
            other => panic!("{other:?}"),
        }
        // A larger threshold never alters a step that did not blow up.
        solver.blowup_threshold = 1e8;
        let a = solver.step_sym(&s, &big).unwrap();
        solver.blowup_threshold = 1e12;
        assert!(solver.step_sym(&s, &big).unwrap() == a);
    }
}
