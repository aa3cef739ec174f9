//! The full iteration: base triple, calibrated amplitude, `δ_n` recursion,
//! auto-escalation and the artifacts written to the output directory.

use std::fmt::Write as _;
use std::path::PathBuf;

use super::config::{RunConfig, Scenario};
use super::ledger::NormLedger;
use super::plot::{heatmap, loglog};
use super::{
    init_from_target, iterate, perturb, preset_target, step_memory_bytes, wave_target, SolutionTriple, StepOptions,
};
use crate::defect::DefectOptions;
use crate::error::{LabError, Result};
use crate::perturbation::{choose_parameters, Mode, ParameterSchedule};
use crate::torus_field::io::read_cifield;
use crate::torus_field::norms::mixed_norm;
use crate::torus_field::{GridSpec, ScalarField};

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub iterations: usize,
    /// `‖R_n‖_{L¹}` for `n = 1, 2, …`.
    pub defects: Vec<f64>,
    /// `δ` used by step `n` (the target for `‖R_{n+1}‖`).
    pub deltas: Vec<f64>,
    /// `‖θ_n‖_{L¹_t L^p}` per step.
    pub theta_norms: Vec<f64>,
    pub residuals: Vec<f64>,
    pub amplitude_constant: f64,
    pub nu: f64,
    pub epsilon: f64,
    /// `‖ρ_n − ρ̃‖_{L¹_t L^p}` of the final density.
    pub deviation: f64,
    /// Time slices where the final density must equal the target exactly.
    pub endpoint_slices: Vec<usize>,
    pub endpoints_preserved: bool,
    /// `supp_t(ρ_n − ρ̃) ∪ supp_t u_n ⊆ supp_t R₁` by exact zeros.
    pub support_preserved: bool,
    pub schedules: Vec<ParameterSchedule>,
    /// Human-readable notes on escalations and cap hits.
    pub notes: Vec<String>,
    pub cap_hits: usize,
    pub ledger: NormLedger,
    pub final_triple: SolutionTriple,
    pub target: ScalarField,
}

fn schedule_for(cfg: &RunConfig, i: usize, scale: usize) -> Result<ParameterSchedule> {
    match cfg.mode {
        Mode::Validated => choose_parameters(
            cfg.dim,
            cfg.p,
            cfg.q,
            cfg.lambda_at(i) * scale as f64,
            Mode::Validated,
            Default::default(),
        ),
        Mode::Desk => {
            let mut o = cfg.overrides_at(i);
            o.mu = o.mu.map(|m| m * scale);
            o.kappa = o.kappa.map(|k| k * scale);
            choose_parameters(cfg.dim, cfg.p, cfg.q, cfg.lambda_at(i) * scale as f64, Mode::Desk, o)
        }
    }
}

fn memory_ok(cfg: &RunConfig, grid: GridSpec) -> bool {
    (step_memory_bytes(grid) as f64) <= cfg.memory_gb * (1u64 << 30) as f64
}

/// The grid the schedule needs, or `None` beyond the caps or the memory budget.
fn grid_for(cfg: &RunConfig, current: GridSpec, s: &ParameterSchedule) -> Result<Option<GridSpec>> {
    let (ns, nt) = s.required_grid();
    let ns = ns.max(current.n_space());
    let nt = nt.max(current.n_time());
    if ns > cfg.max_n_space || nt > cfg.max_n_time {
        return Ok(None);
    }
    let g = current.with_sizes(ns, nt)?;
    Ok(memory_ok(cfg, g).then_some(g))
}

fn time_support(f: &[&ScalarField]) -> Vec<bool> {
    let g = f[0].grid();
    (0..g.n_time())
        .map(|j| f.iter().any(|c| c.slice(j).iter().any(|v| *v != 0.0)))
        .collect()
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.txt"), cfg.to_text())?;
    let mut target = match &cfg.scenario {
        Scenario::Preset => preset_target(GridSpec::new(cfg.dim, cfg.n_space, cfg.n_time)?, cfg.p)?,
        Scenario::Wave => wave_target(GridSpec::new(cfg.dim, cfg.n_space, cfg.n_time)?, cfg.p)?,
        Scenario::Target(path) => {
            let (_, mut f) = read_cifield(path)?;
            if f.len() != 1 {
                return Err(LabError::Format("a target dump must have exactly one component".into()));
            }
            f.pop().expect("one component")
        }
    };
    if !memory_ok(cfg, target.grid()) {
        return Err(LabError::Memory(format!(
            "a step at {:?} needs about {:.1} GiB, budget is {} GiB",
            target.grid(),
            step_memory_bytes(target.grid()) as f64 / (1u64 << 30) as f64,
            cfg.memory_gb
        )));
    }
    let mut triple = init_from_target(&target)?;
    if triple.residual > cfg.tolerance {
        return Err(LabError::Invariant(format!(
            "base triple residual {:e}",
            triple.residual
        )));
    }
    let mut ledger = NormLedger::new();
    let norm1 = triple.defect_norm();
    ledger.push_plain(
        1,
        cfg.p,
        cfg.q,
        &[("R_total".into(), norm1), ("residual".into(), triple.residual)],
    );
    if cfg.dump_fields {
        triple.write(&cfg.out_dir.join("triple_1.cif"))?;
    }
    let mut initial_support = time_support(&triple.r.components().iter().collect::<Vec<_>>());

    let mut defects = vec![norm1];
    let mut deltas = Vec::new();
    let mut theta_norms = Vec::new();
    let mut residuals = vec![triple.residual];
    let mut schedules = Vec::new();
    let mut notes = Vec::new();
    let mut cap_hits = 0;
    let mut r_min = f64::INFINITY;
    let mut amplitude_constant = cfg.amplitude_constant.unwrap_or(f64::NAN);
    let mut nu = f64::NAN;
    let options = StepOptions {
        defect: DefectOptions {
            keep_pieces: false,
            diagnostics: cfg.diagnostics,
        },
        keep_perturbation: false,
    };

    if cfg.iterations > 0 && norm1 == 0.0 {
        notes.push("the target is stationary; R_1 = 0 and there is nothing to correct".into());
    } else if cfg.iterations > 0 {
        let first = schedule_for(cfg, 0, 1)?;
        let delta1 = 2f64.powf(-cfg.p) * norm1;
        if cfg.amplitude_constant.is_none() {
            if let Some(g) = grid_for(cfg, triple.grid(), &first)? {
                if g != triple.grid() {
                    triple = triple.resample(g)?;
                    target = target.resample(g)?;
                }
            }
            let pilot = perturb(&triple, delta1, 1.0, &first)?;
            let theta = mixed_norm(&pilot.theta()?, 1.0, cfg.p, 0)?;
            let w = mixed_norm(&pilot.w()?, f64::INFINITY, first.p_prime, 0)?;
            amplitude_constant = (theta / norm1.powf(1.0 / cfg.p)).max(w / norm1.powf(1.0 / first.p_prime));
            ledger.push_plain(1, cfg.p, cfg.q, &[("pilot_M".into(), amplitude_constant)]);
        }
        nu = cfg.epsilon / (2.0 * amplitude_constant) * norm1.powf(-1.0 / cfg.p);
        for n in 1..=cfg.iterations {
            let delta = 2f64.powf(-cfg.p * n as f64) * norm1;
            let mut scale = 1;
            let outcome = loop {
                let sched = schedule_for(cfg, n - 1, scale)?;
                let grid = match grid_for(cfg, triple.grid(), &sched)? {
                    Some(g) => g,
                    None => {
                        let (ns, nt) = sched.required_grid();
                        return Err(LabError::Resolution(format!(
                            "iteration {n}: mu = {}, kappa = {}, sigma = {} needs n_space >= {ns}, n_time >= {nt} \
                             within caps {} x {} and {} GiB",
                            sched.mu, sched.kappa, sched.sigma, cfg.max_n_space, cfg.max_n_time, cfg.memory_gb
                        )));
                    }
                };
                if grid != triple.grid() {
                    notes.push(format!(
                        "iteration {n}: refined grid to {} x {}",
                        grid.n_space(),
                        grid.n_time()
                    ));
                    triple = triple.resample(grid)?;
                    target = target.resample(grid)?;
                    initial_support = time_support(&[&target]);
                }
                let out = iterate(&triple, delta, nu, &sched, options)?;
                let reached = out.report.defect.total_norm <= delta;
                if reached || !cfg.auto_escalate {
                    break out;
                }
                let next = schedule_for(cfg, n - 1, scale * 2)?;
                if grid_for(cfg, triple.grid(), &next)?.is_none() {
                    cap_hits += 1;
                    notes.push(format!(
                        "iteration {n}: cap hit at mu = {}, kappa = {}; ||R|| = {:.3e} > delta = {:.3e}",
                        sched.mu, sched.kappa, out.report.defect.total_norm, delta
                    ));
                    break out;
                }
                notes.push(format!(
                    "iteration {n}: ||R|| = {:.3e} > delta = {:.3e} at mu = {}, escalating",
                    out.report.defect.total_norm, delta, sched.mu
                ));
                ledger.push_step(
                    n,
                    &out.report.schedule,
                    &[("escalated_R_total".into(), out.report.defect.total_norm)],
                );
                scale *= 2;
            };
            let rep = &outcome.report;
            if rep.residual > cfg.tolerance {
                return Err(LabError::Invariant(format!(
                    "iteration {n}: residual {:e} exceeds tolerance",
                    rep.residual
                )));
            }
            if !rep.checks.support_violations.is_empty() || !rep.checks.margin_violations.is_empty() {
                return Err(LabError::Invariant(format!(
                    "iteration {n}: perturbation leaves the support of R"
                )));
            }
            ledger.push_step(n + 1, &rep.schedule, &rep.rows());
            r_min = r_min.min(rep.schedule.r_time);
            deltas.push(delta);
            theta_norms.push(rep.theta_norm);
            schedules.push(rep.schedule.clone());
            triple = outcome.triple;
            defects.push(triple.defect_norm());
            residuals.push(triple.residual);
            if cfg.dump_fields {
                triple.write(&cfg.out_dir.join(format!("triple_{}.cif", n + 1)))?;
            }
        }
    }

    let g = triple.grid();
    let diff = triple.rho.sub(&target)?;
    let deviation = mixed_norm(&diff, 1.0, cfg.p, 0)?;
    let endpoint_slices: Vec<usize> = (0..g.n_time())
        .filter(|&j| {
            let t = g.time(j);
            j == 0 || (r_min.is_finite() && (t < 0.5 * r_min || t > 1.0 - 0.5 * r_min))
        })
        .collect();
    let endpoints_preserved = endpoint_slices.iter().all(|&j| triple.rho.slice(j) == target.slice(j));
    let mut moved = vec![&diff];
    moved.extend(triple.u.components());
    let support_preserved = time_support(&moved)
        .iter()
        .zip(&initial_support)
        .all(|(&m, &allowed)| !m || allowed);

    let summary = RunSummary {
        out_dir: cfg.out_dir.clone(),
        iterations: theta_norms.len(),
        defects,
        deltas,
        theta_norms,
        residuals,
        amplitude_constant,
        nu,
        epsilon: cfg.epsilon,
        deviation,
        endpoint_slices,
        endpoints_preserved,
        support_preserved,
        schedules,
        notes,
        cap_hits,
        ledger,
        final_triple: triple,
        target,
    };
    write_artifacts(&summary)?;
    Ok(summary)
}

fn write_artifacts(s: &RunSummary) -> Result<()> {
    let dir = &s.out_dir;
    s.ledger.write_csv(&dir.join("ledger.csv"))?;
    let mut text = String::new();
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ");
    writeln!(text, "iterations: {}", s.iterations).ok();
    writeln!(text, "defect_L1: [{}]", list(&s.defects)).ok();
    writeln!(text, "delta: [{}]", list(&s.deltas)).ok();
    writeln!(text, "theta_L1Lp: [{}]", list(&s.theta_norms)).ok();
    writeln!(text, "residual: [{}]", list(&s.residuals)).ok();
    writeln!(text, "amplitude_constant: {:.6e}", s.amplitude_constant).ok();
    writeln!(text, "nu: {:.6e}", s.nu).ok();
    writeln!(text, "epsilon: {:.6e}", s.epsilon).ok();
    writeln!(text, "deviation_L1Lp: {:.6e}", s.deviation).ok();
    writeln!(text, "sum_theta_L1Lp: {:.6e}", s.theta_norms.iter().sum::<f64>()).ok();
    writeln!(text, "deviation_within_epsilon: {}", s.deviation <= s.epsilon).ok();
    writeln!(text, "endpoint_slices: {:?}", s.endpoint_slices).ok();
    writeln!(text, "endpoints_preserved: {}", s.endpoints_preserved).ok();
    writeln!(text, "support_preserved: {}", s.support_preserved).ok();
    writeln!(text, "cap_hits: {}", s.cap_hits).ok();
    for (i, sch) in s.schedules.iter().enumerate() {
        writeln!(
            text,
            "step_{}: mu={} kappa={} sigma={} lambda={} nu={:.6e} delta={:.6e} r={:.6e} frequency_check={}",
            i + 1,
            sch.mu,
            sch.kappa,
            sch.sigma,
            sch.lambda,
            sch.nu,
            sch.delta,
            sch.r_time,
            sch.is_valid()
        )
        .ok();
    }
    for note in &s.notes {
        writeln!(text, "note: {note}").ok();
    }
    std::fs::write(dir.join("summary.txt"), text)?;

    let pts: Vec<(f64, f64)> = s
        .defects
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64, *v))
        .collect();
    loglog(&[pts], 640, 480).write_both(dir, "defect_norms")?;
    let mid = s.final_triple.grid().n_time() / 2;
    heatmap(&s.final_triple.rho, mid, 4)?.write_both(dir, "density_mid")?;
    Ok(())
}
