//! The iteration: base triple from a target density, single steps, and the
//! full run with parameter recursion, ledger and dumps.

mod config;
mod ledger;
pub mod plot;
mod run;

pub use config::{RunConfig, Scenario};
pub use ledger::{LedgerRow, NormLedger};
pub use run::{run, RunSummary};

use std::path::Path;

use crate::calculus::antidivergence;
use crate::defect::{assemble_defect, DefectBreakdown, DefectOptions, DefectSummary, Piece};
use crate::error::{LabError, Result};
use crate::mikado::build_blocks;
use crate::perturbation::{
    build_coefficients, build_cutoffs, build_perturbations, support_margin_for, test_function_order,
    weak_pairing_ratio, BlockBank, ParameterSchedule, PerturbationChecks, PerturbationSet,
};
use crate::temporal::build_oscillator;
use crate::torus_field::io::{read_cifield, write_cifield};
use crate::torus_field::norms::mixed_norm;
use crate::torus_field::spectral;
use crate::torus_field::{divergence_slice, GridSpec, ScalarField, VectorField};

#[derive(Clone, Debug)]
pub struct SolutionTriple {
    pub rho: ScalarField,
    pub u: VectorField,
    pub r: VectorField,
    /// Relative continuity-defect residual, measured on construction.
    pub residual: f64,
    pub generation: usize,
}

impl SolutionTriple {
    pub fn new(rho: ScalarField, u: VectorField, r: VectorField, generation: usize) -> Result<Self> {
        let residual = crate::defect::residual_check(&rho, &u, &r)?;
        Ok(SolutionTriple {
            rho,
            u,
            r,
            residual,
            generation,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.rho.grid()
    }

    /// `‖div u‖_{L²} / Σ_k ‖∂_k u_k‖_{L²}`, zero for `u ≡ 0`.
    pub fn divergence_defect(&self) -> f64 {
        let g = self.grid();
        let (d, n) = (g.dim(), g.n_space());
        let (mut num, mut den) = (0.0, vec![0.0; d]);
        for j in 0..g.n_time() {
            let parts: Vec<&[f64]> = self.u.components().iter().map(|c| c.slice(j)).collect();
            if parts.iter().all(|p| p.iter().all(|v| *v == 0.0)) {
                continue;
            }
            num += divergence_slice(&parts, d, n).iter().map(|v| v * v).sum::<f64>();
            for (k, p) in parts.iter().enumerate() {
                den[k] += spectral::axis_derivative(p, d, n, k).iter().map(|v| v * v).sum::<f64>();
            }
        }
        let den: f64 = den.iter().map(|v| v.sqrt()).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            num.sqrt() / den
        }
    }

    pub fn defect_norm(&self) -> f64 {
        crate::defect::l1_norm(&self.r)
    }

    /// Spectral refinement of all three fields; the residual is re-measured.
    pub fn resample(&self, target: GridSpec) -> Result<Self> {
        Self::new(
            self.rho.resample(target)?,
            self.u.resample(target)?,
            self.r.resample(target)?,
            self.generation,
        )
    }

    /// One CIFIELD dump with components `ρ, u_1..u_d, R_1..R_d`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut comps = vec![&self.rho];
        comps.extend(self.u.components());
        comps.extend(self.r.components());
        write_cifield(path, &comps)
    }

    pub fn read(path: &Path, generation: usize) -> Result<Self> {
        let (g, mut fields) = read_cifield(path)?;
        let d = g.dim();
        if fields.len() != 2 * d + 1 {
            return Err(LabError::Format(format!(
                "a triple needs {} components, found {}",
                2 * d + 1,
                fields.len()
            )));
        }
        let r = fields.split_off(d + 1);
        let u = fields.split_off(1);
        let rho = fields.pop().expect("one density component");
        Self::new(rho, VectorField::new(u)?, VectorField::new(r)?, generation)
    }
}

/// `(ρ̃, 0, ℛ∂_tρ̃)`; `ρ̃` must have a time-independent spatial mean.
pub fn init_from_target(target: &ScalarField) -> Result<SolutionTriple> {
    let means = target.space_means();
    let drift = means.iter().map(|m| (m - means[0]).abs()).fold(0.0, f64::max);
    if drift > 1e-9 {
        return Err(LabError::MeanDrift(drift));
    }
    let mut rate = target.derivative(0)?;
    // slices where the target is constant in time come back as rounding noise
    let g = target.grid();
    let floor = 16.0 * f64::EPSILON * std::f64::consts::PI * g.n_time() as f64 * target.max_abs();
    for j in 0..g.n_time() {
        let s = rate.slice_mut(j);
        if s.iter().all(|v| v.abs() <= floor) {
            s.fill(0.0);
        }
    }
    let r = antidivergence(&rate)?;
    SolutionTriple::new(target.clone(), VectorField::zeros(target.grid()), r, 1)
}

/// Samples of the time profile `χ` of the preset and of its derivative.
///
/// The derivative is a pair of smooth pulses of opposite sign on
/// `1/8 ≤ |t − 1/2| ≤ 1/4`, and `χ` is its exact lattice antiderivative with
/// `χ(0) = 0`, so `∂_tχ` vanishes identically outside the pulses. `χ ≈ 1` on
/// `|t − 1/2| ≤ 1/4` and `χ ≈ 0` for `|t − 1/2| ≥ 3/8`.
pub fn preset_time_profile(n_time: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let pulse = |t: f64, c: f64| {
        let u = (t - c) / (1.0 / 16.0);
        if u.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp()
        }
    };
    let raw: Vec<f64> = (0..n_time)
        .map(|j| j as f64 / n_time as f64)
        .map(|t| pulse(t, 3.0 / 16.0) - pulse(t, 13.0 / 16.0))
        .collect();
    let half = n_time / 2;
    let mass: f64 = raw[..half].iter().sum::<f64>() / n_time as f64;
    if n_time < 32 || !(mass > 0.0) {
        return Err(LabError::Resolution(format!(
            "the preset needs n_time >= 32, got {n_time}"
        )));
    }
    let rate: Vec<f64> = raw.iter().map(|v| v / mass).collect();
    let mut spec = spectral::to_complex(&rate);
    spectral::forward_nd(&mut spec, 1, n_time);
    for (i, v) in spec.iter_mut().enumerate() {
        let k = spectral::derivative_wavenumber(i, n_time);
        *v = if k == 0.0 {
            Default::default()
        } else {
            *v / rustfft::num_complex::Complex64::new(0.0, 2.0 * std::f64::consts::PI * k)
        };
    }
    spectral::inverse_nd(&mut spec, 1, n_time);
    let c0 = spec[0].re;
    Ok((spec.iter().map(|c| c.re - c0).collect(), rate))
}

/// Zero-mean product of periodic von Mises bumps centred at `1/2`, with the
/// lattice-kernel modes removed and `‖ρ₀‖_p = 1` by lattice quadrature.
pub fn preset_profile(grid: GridSpec, p: f64) -> Result<Vec<f64>> {
    let n = grid.n_space();
    let mut rho = Vec::with_capacity(grid.space_len());
    spectral::for_each_index(grid.dim(), n, |_, idx| {
        let e: f64 = idx
            .iter()
            .map(|&i| (4.0 * (2.0 * std::f64::consts::PI * (i as f64 / n as f64 - 0.5)).cos()).exp())
            .product();
        rho.push(e);
    });
    let kern = spectral::gradient_kernel_part(&rho, grid.dim(), n);
    rho.iter_mut().zip(kern).for_each(|(v, k)| *v -= k);
    let norm = crate::torus_field::norms::lattice_norm(&rho, p);
    if !(norm > 0.0) {
        return Err(LabError::Invariant("preset profile vanished".into()));
    }
    rho.iter_mut().for_each(|v| *v /= norm);
    Ok(rho)
}

/// `ρ̃(t, x) = χ(t) ρ₀(x)`.
pub fn preset_target(grid: GridSpec, p: f64) -> Result<ScalarField> {
    let (chi, _) = preset_time_profile(grid.n_time())?;
    ScalarField::from_product(grid, &chi, &preset_profile(grid, p)?)
}

/// `ρ̃(t, x) = sin(2πt) ρ₀(x)`, a target whose defect is spread over all times.
pub fn wave_target(grid: GridSpec, p: f64) -> Result<ScalarField> {
    let time: Vec<f64> = (0..grid.n_time())
        .map(|j| (2.0 * std::f64::consts::PI * grid.time(j)).sin())
        .collect();
    ScalarField::from_product(grid, &time, &preset_profile(grid, p)?)
}

/// Measured outcome of one step, everything except the fields themselves.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub schedule: ParameterSchedule,
    /// `‖θ‖_{L¹_t L^p}`.
    pub theta_norm: f64,
    /// `‖θ_c‖_{L¹_t L^p}`.
    pub theta_c_norm: f64,
    /// `‖w‖_{L^∞_t L^{p'}}`.
    pub w_norm: f64,
    /// `‖w‖_{L¹_t W^{1,q}}`.
    pub w_sobolev_norm: f64,
    /// `‖w_p‖_{L¹_t W^{1,q}}` and `‖w_p‖_{L^∞_t L^{p'}}`.
    pub principal_norms: (f64, f64),
    pub weak_pairing: f64,
    pub checks: PerturbationChecks,
    pub product_defect: f64,
    pub amplitude_excess: (f64, f64),
    pub input_defect: f64,
    pub defect: DefectSummary,
    pub residual: f64,
    pub divergence: f64,
    pub degenerate: bool,
}

impl StepReport {
    /// `(name, value)` rows for the ledger.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("theta_L1Lp".to_string(), self.theta_norm),
            ("theta_c_L1Lp".to_string(), self.theta_c_norm),
            ("w_LinfLpprime".to_string(), self.w_norm),
            ("w_L1W1q".to_string(), self.w_sobolev_norm),
            ("w_p_L1W1q".to_string(), self.principal_norms.0),
            ("w_p_LinfLpprime".to_string(), self.principal_norms.1),
            ("theta_weak_pairing".to_string(), self.weak_pairing),
            ("theta_mean".to_string(), self.checks.theta_mean),
            ("w_divergence".to_string(), self.checks.velocity_divergence),
            ("R_in_L1".to_string(), self.input_defect),
        ];
        rows.extend(crate::defect::defect_norm_ledger(&self.defect));
        rows.extend([
            ("R_hi_t".to_string(), self.defect.diagnostics.high_frequency_norm),
            (
                "identity_temporal_piece".to_string(),
                self.defect.identities.temporal_piece,
            ),
            (
                "identity_spatial_algebra".to_string(),
                self.defect.identities.spatial_algebra,
            ),
            (
                "identity_temporal_cancellation".to_string(),
                self.defect.identities.temporal_cancellation,
            ),
            ("resolving_ratio".to_string(), self.defect.diagnostics.resolving_ratio),
            ("residual".to_string(), self.residual),
            ("u_divergence".to_string(), self.divergence),
        ]);
        if let Some(v) = self.defect.diagnostics.leibniz_gap {
            rows.push(("R_tem_leibniz_gap".to_string(), v));
        }
        if let Some(v) = self.defect.diagnostics.literal_oscillation_gap {
            rows.push(("R_osc_t_literal_gap".to_string(), v));
        }
        rows
    }
}

/// Result of [`iterate`]: the new triple and its report. `pieces` is filled
/// when [`DefectOptions::keep_pieces`] was set.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub triple: SolutionTriple,
    pub report: StepReport,
    pub perturbation: Option<PerturbationSet>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOptions {
    pub defect: DefectOptions,
    /// Return the perturbation set alongside the triple.
    pub keep_perturbation: bool,
}

/// Checks that the grid resolves the step and reports the sizes it needs.
pub fn check_resolution(grid: GridSpec, schedule: &ParameterSchedule) -> Result<()> {
    let (ns, nt) = schedule.required_grid();
    let sigma = schedule.sigma;
    if grid.n_space() % sigma != 0 || grid.n_space() < ns || grid.n_time() % sigma != 0 || grid.n_time() < nt {
        return Err(LabError::Resolution(format!(
            "mu = {}, kappa = {}, sigma = {} needs n_space >= {ns} and n_time >= {nt}, got {} and {}",
            schedule.mu,
            schedule.kappa,
            schedule.sigma,
            grid.n_space(),
            grid.n_time()
        )));
    }
    Ok(())
}

/// Fields alive during one step at the given grid, for the memory guard.
pub const STEP_FIELD_COUNT: usize = 34;

pub fn step_memory_bytes(grid: GridSpec) -> usize {
    STEP_FIELD_COUNT * grid.len() * 8
}

/// Builds the perturbations for `(ν, δ)` without assembling the defect.
pub fn perturb(triple: &SolutionTriple, delta: f64, nu: f64, schedule: &ParameterSchedule) -> Result<PerturbationSet> {
    let g = triple.grid();
    check_resolution(g, schedule)?;
    let r_time = support_margin_for(&triple.r, delta);
    let schedule = schedule.clone().with_step(nu, delta, r_time)?;
    let cutoffs = build_cutoffs(&triple.r, delta, r_time)?;
    let coeffs = build_coefficients(&triple.r, &cutoffs, schedule.p)?;
    drop(cutoffs);
    let blocks = build_blocks(g.dim(), schedule.mu as f64, schedule.p, g.n_space() / schedule.sigma)?;
    let bank = BlockBank::new(&blocks, g.n_space(), schedule.sigma)?;
    let osc = build_oscillator(schedule.kappa, schedule.sigma, g.n_time())?;
    build_perturbations(coeffs, &schedule, &bank, &osc)
}

/// One convex-integration step with amplitude `ν` and target `δ`.
pub fn iterate(
    triple: &SolutionTriple,
    delta: f64,
    nu: f64,
    schedule: &ParameterSchedule,
    options: StepOptions,
) -> Result<StepOutcome> {
    let g = triple.grid();
    check_resolution(g, schedule)?;
    let r_time = support_margin_for(&triple.r, delta);
    let schedule = schedule.clone().with_step(nu, delta, r_time)?;
    let input_defect = triple.defect_norm();
    let cutoffs = build_cutoffs(&triple.r, delta, r_time)?;
    let coeffs = build_coefficients(&triple.r, &cutoffs, schedule.p)?;
    drop(cutoffs);
    let degenerate = coeffs.is_degenerate();
    let product_defect = coeffs.product_defect;
    let amplitude_excess = coeffs.amplitude_bound_excess(schedule.p);
    let blocks = build_blocks(g.dim(), schedule.mu as f64, schedule.p, g.n_space() / schedule.sigma)?;
    let bank = BlockBank::new(&blocks, g.n_space(), schedule.sigma)?;
    drop(blocks);
    let osc = build_oscillator(schedule.kappa, schedule.sigma, g.n_time())?;
    let pert = build_perturbations(coeffs, &schedule, &bank, &osc)?;
    let checks = pert.checks(&triple.r, r_time)?;
    let theta = pert.theta()?;
    let w = pert.w()?;
    let theta_norm = mixed_norm(&theta, 1.0, schedule.p, 0)?;
    let theta_c_norm = mixed_norm(&pert.theta_c, 1.0, schedule.p, 0)?;
    let w_norm = mixed_norm(&w, f64::INFINITY, schedule.p_prime, 0)?;
    let w_sobolev_norm = mixed_norm(&w, 1.0, schedule.q, 1)?;
    let principal_norms = (
        mixed_norm(&pert.w_p, 1.0, schedule.q, 1)?,
        mixed_norm(&pert.w_p, f64::INFINITY, schedule.p_prime, 0)?,
    );
    let weak_pairing = weak_pairing_ratio(&theta, delta, test_function_order(g.dim(), schedule.gamma));
    let defect = assemble_defect(triple, &pert, &schedule, &bank, &osc, options.defect)?;
    drop(bank);
    let mut rho = theta;
    rho.add_assign(&triple.rho)?;
    let mut u = w;
    u.add_assign(&triple.u)?;
    let DefectBreakdown { total, summary: defect } = defect;
    let next = SolutionTriple::new(rho, u, total, triple.generation + 1)?;
    let report = StepReport {
        schedule,
        theta_norm,
        theta_c_norm,
        w_norm,
        w_sobolev_norm,
        principal_norms,
        weak_pairing,
        checks,
        product_defect,
        amplitude_excess,
        input_defect,
        residual: next.residual,
        divergence: next.divergence_defect(),
        defect,
        degenerate,
    };
    Ok(StepOutcome {
        triple: next,
        report,
        perturbation: options.keep_perturbation.then_some(pert),
    })
}

/// Names of the defect pieces in ledger order.
pub fn piece_names() -> Vec<&'static str> {
    Piece::ALL.iter().map(|p| p.name()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_target_has_no_defect() {
        let g = GridSpec::new(3, 8, 8).unwrap();
        let rho0 = preset_profile(g, 2.0).unwrap();
        let target = ScalarField::from_space_slice(g, &rho0).unwrap();
        let t = init_from_target(&target).unwrap();
        assert_eq!(t.r.max_abs(), 0.0);
        assert_eq!(t.residual, 0.0);
    }

    #[test]
    fn drifting_mean_is_rejected() {
        let g = GridSpec::new(3, 8, 8).unwrap();
        let f = ScalarField::from_fn(g, |t, _| (2.0 * std::f64::consts::PI * t).sin());
        assert!(matches!(init_from_target(&f), Err(LabError::MeanDrift(_))));
    }

    #[test]
    fn preset_profile_and_time_profile() {
        let g = GridSpec::new(3, 16, 64).unwrap();
        let rho0 = preset_profile(g, 2.0).unwrap();
        assert!((crate::torus_field::norms::lattice_norm(&rho0, 2.0) - 1.0).abs() < 1e-12);
        assert!(rho0.iter().sum::<f64>().abs() < 1e-10);
        let (chi, rate) = preset_time_profile(64).unwrap();
        assert_eq!(chi[0], 0.0);
        assert!((chi[32] - 1.0).abs() < 1e-3);
        let d = spectral::axis_derivative(&chi, 1, 64, 0);
        for j in 0..64 {
            assert!((d[j] - rate[j]).abs() < 1e-10);
        }
        assert_eq!(rate[0], 0.0);
        assert_eq!(rate[32], 0.0);
        let t = init_from_target(&preset_target(g, 2.0).unwrap()).unwrap();
        assert!(t.residual < 1e-8);
        for j in 0..64 {
            if rate[j] == 0.0 {
                assert!(t.r.components().iter().all(|c| c.slice(j).iter().all(|v| *v == 0.0)));
            }
        }
    }

    #[test]
    fn triple_dump_roundtrip() {
        let g = GridSpec::new(3, 8, 32).unwrap();
        assert!(preset_target(GridSpec::new(3, 8, 8).unwrap(), 2.0).is_err());
        let t = init_from_target(&preset_target(g, 2.0).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cif");
        t.write(&path).unwrap();
        let back = SolutionTriple::read(&path, 1).unwrap();
        assert_eq!(back.rho, t.rho);
        assert_eq!(back.r, t.r);
    }
}
