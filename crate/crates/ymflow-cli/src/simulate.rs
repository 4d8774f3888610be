//! `simulate`: renormalised SYM run driven by seeded mollified noise.

use crate::config::{norm_kind, CMode, Observable, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{csv_writer, file_fingerprint, fingerprint, sig17, write_json};
use serde::Serialize;
use std::path::{Path, PathBuf};
use ymflow::gauge::wilson_loop;
use ymflow::lattice::{LatticeField, LatticeGaugeField};
use ymflow::oneform::{random_trig_form, CurveSpec, LatticeOneForm, SampleFamily, SamplerConfig};
use ymflow::renorm::{mollifier_fingerprint, read_constants, RenormConstants};
use ymflow::she::mollified_noise;
use ymflow::spde::{Scheme, Solver, SymState};
use ymflow::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub trajectory: PathBuf,
    pub observables: PathBuf,
    pub provenance: PathBuf,
}

impl Outputs {
    /// Explicit `--out` wins over the config; sibling files default to `<stem>.observables.csv`
    /// and `<stem>.provenance.json`.
    pub fn resolve(cfg: &RunConfig, out: Option<&Path>) -> Result<Self> {
        let trajectory = out
            .map(Path::to_path_buf)
            .or_else(|| cfg.outputs.trajectory.clone())
            .ok_or_else(|| CliError::Config("no trajectory path: pass --out or set outputs.trajectory".into()))?;
        let sibling = |suffix: &str| {
            let stem = trajectory.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            trajectory.with_file_name(format!("{stem}.{suffix}"))
        };
        Ok(Self {
            observables: cfg.outputs.observables.clone().unwrap_or_else(|| sibling("observables.csv")),
            provenance: cfg.outputs.provenance.clone().unwrap_or_else(|| sibling("provenance.json")),
            trajectory,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsUsed {
    pub c_mode: String,
    pub c: f64,
    pub lambda: Option<f64>,
    pub entry: Option<RenormConstants>,
    pub file_sha256: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlowupRecord {
    pub t: f64,
    pub magnitude: f64,
    pub step: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub program: String,
    pub version: String,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub constants: ConstantsUsed,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub t_final: f64,
    pub blowup: Option<BlowupRecord>,
    pub trajectory: OutputRecord,
    pub observables: OutputRecord,
}

/// Resolves C from the mode, reading and matching the constants file for csym.
pub fn resolve_constants(cfg: &RunConfig) -> Result<ConstantsUsed> {
    let mode = CMode::parse(&cfg.c_mode)?;
    let (c, lambda, entry, file_sha256) = match mode {
        CMode::Zero => (0.0, None, None, None),
        CMode::Custom(v) => (v, None, None, None),
        CMode::Csym => {
            let path = cfg.constants.clone().expect("validated");
            if !path.exists() {
                return Err(CliError::MissingConstants {
                    path,
                    eps: cfg.eps,
                    mollifier: cfg.mollifier.name().into(),
                    algebra: cfg.algebra.clone(),
                });
            }
            let fp = mollifier_fingerprint(&cfg.mollifier.spec());
            let entry = read_constants(&path)?
                .into_iter()
                .find(|e| e.mollifier == fp && (e.eps - cfg.eps).abs() <= 1e-12 * cfg.eps)
                .ok_or_else(|| CliError::NoMatchingConstants {
                    path: path.clone(),
                    eps: cfg.eps,
                    mollifier: fp,
                })?;
            let lambda = cfg.algebra()?.casimir_lambda()?.lambda;
            (lambda * entry.csym_eps, Some(lambda), Some(entry), Some(file_fingerprint(&path)?))
        }
    };
    Ok(ConstantsUsed {
        c_mode: cfg.c_mode.clone(),
        c,
        lambda,
        entry,
        file_sha256,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sup_and_l2(a: &LatticeGaugeField) -> (f64, f64) {
    let sites = a.comps[0].sites() as f64;
    let ss: f64 = a.comps.iter().flat_map(|c| c.data.iter()).map(|v| v * v).sum();
    (a.max_abs(), (ss / sites).sqrt())
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    traj: csv::Writer<std::fs::File>,
    obs: csv::Writer<std::fs::File>,
    loops: Vec<Option<CurveSpec>>,
    family: Option<SampleFamily>,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &'a RunConfig, out: &Outputs) -> Result<Self> {
        let mut traj = csv_writer(&out.trajectory)?;
        traj.write_record(["step", "t", "i", "j", "direction", "component", "value"])?;
        let mut obs = csv_writer(&out.observables)?;
        let mut header = vec!["step".to_string(), "t".into(), "sup_norm".into(), "l2_norm".into()];
        header.extend(cfg.observables.iter().map(Observable::column));
        obs.write_record(&header)?;
        let loops = cfg
            .observables
            .iter()
            .map(|o| match o {
                Observable::Wilson {
                    corner,
                    width,
                    height,
                } => CurveSpec::rectangle(*corner, *width, *height).map(Some),
                Observable::Norm { .. } => Ok(None),
            })
            .collect::<ymflow::Result<Vec<_>>>()?;
        let needs_family = cfg.observables.iter().any(|o| matches!(o, Observable::Norm { .. }));
        let family = needs_family.then(|| {
            SampleFamily::new(&SamplerConfig {
                seed: cfg.seed,
                ..SamplerConfig::default()
            })
        });
        Ok(Self {
            cfg,
            traj,
            obs,
            loops,
            family,
        })
    }

    fn record(&mut self, step: usize, s: &SymState) -> Result<()> {
        let a = &s.a;
        let n = a.n();
        let (step_s, t_s) = (step.to_string(), sig17(s.t));
        for (dir, comp) in a.comps.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let site = comp.site(i as isize, j as isize);
                    for (k, v) in comp.at(site).iter().enumerate() {
                        self.traj.write_record([
                            step_s.as_str(),
                            t_s.as_str(),
                            &i.to_string(),
                            &j.to_string(),
                            &(dir + 1).to_string(),
                            &k.to_string(),
                            &sig17(*v),
                        ])?;
                    }
                }
            }
        }
        let (sup, l2) = sup_and_l2(a);
        let mut row = vec![step_s, t_s, sig17(sup), sig17(l2)];
        let mesh = 0.25 * a.spacing();
        let form = LatticeOneForm::new(a.clone());
        let alg = self.cfg.algebra()?;
        let vals = self.family.as_ref().map(|f| f.evaluate(&form));
        for (o, lp) in self.cfg.observables.iter().zip(&self.loops) {
            let v = match (o, lp) {
                (Observable::Wilson { .. }, Some(lp)) => wilson_loop(&alg, &form, lp, mesh)?,
                (Observable::Norm { norm, alpha }, _) => {
                    let fam = self.family.as_ref().expect("built when a norm is requested");
                    fam.norm(norm_kind(norm)?, *alpha, vals.as_ref().expect("evaluated with the family"))?.value
                }
                _ => unreachable!("loops are built for every Wilson observable"),
            };
            row.push(sig17(v));
        }
        self.obs.write_record(&row)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.traj.flush().map_err(|e| CliError::io("trajectory", e))?;
        self.obs.flush().map_err(|e| CliError::io("observables", e))?;
        Ok(())
    }
}

/// Runs the configured simulation and writes trajectory, observables and provenance.
/// A blow-up ends the run early and is reported in the provenance, not as an error.
pub fn simulate(cfg: &RunConfig, out: &Outputs) -> Result<Provenance> {
    cfg.validate()?;
    let constants = resolve_constants(cfg)?;
    let alg = cfg.algebra()?;
    let n = cfg.n;
    let mut solver = Solver::new(&alg, n, Scheme::SemiImplicit);
    if let Some(b) = cfg.blowup_threshold {
        solver.blowup_threshold = b;
    }
    let noise = mollified_noise(&alg, n, cfg.dt, cfg.eps, cfg.mollifier.spec(), cfg.seed)?;
    let a0 = if cfg.initial_amplitude > 0.0 {
        random_trig_form(alg.dim(), 2, cfg.initial_amplitude, cfg.seed).to_lattice(n)
    } else {
        LatticeGaugeField::zeros(n, alg.dim())
    };
    let mut state = SymState {
        a: a0,
        t: 0.0,
        eps: cfg.eps,
        dt: cfg.dt,
        c: constants.c,
    };
    let steps = cfg.steps();
    let mut rec = Recorder::new(cfg, out)?;
    rec.record(0, &state)?;
    let zero = [LatticeField::zeros(n, alg.dim()), LatticeField::zeros(n, alg.dim())];
    let mut blowup = None;
    let mut done = 0;
    for m in 0..steps {
        let xi = if cfg.noise_amplitude > 0.0 {
            let xi = noise.at(m as i64);
            [xi[0].scaled(cfg.noise_amplitude), xi[1].scaled(cfg.noise_amplitude)]
        } else {
            zero.clone()
        };
        match solver.step_sym(&state, &xi) {
            Ok(next) => state = next,
            Err(Error::Blowup { t, magnitude }) => {
                blowup = Some(BlowupRecord {
                    t,
                    magnitude,
                    step: m + 1,
                });
                break;
            }
            Err(e) => return Err(e.into()),
        }
        done = m + 1;
        if done % cfg.record_every == 0 || done == steps {
            rec.record(done, &state)?;
        }
    }
    rec.finish()?;
    let prov = Provenance {
        program: "ymflow".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        config_sha256: fingerprint(&serde_json::to_vec(cfg)?),
        seed: cfg.seed,
        constants,
        steps_requested: steps,
        steps_completed: done,
        t_final: state.t,
        blowup,
        trajectory: OutputRecord {
            file: file_name(&out.trajectory),
            sha256: file_fingerprint(&out.trajectory)?,
        },
        observables: OutputRecord {
            file: file_name(&out.observables),
            sha256: file_fingerprint(&out.observables)?,
        },
    };
    write_json(&out.provenance, &prov)?;
    Ok(prov)
}
