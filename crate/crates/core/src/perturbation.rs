//! One convex-integration step: parameter schedule, cutoffs, amplitude
//! coefficients and the perturbations `θ = θ_p + θ_c + θ_o`, `w = w_p + w_c`.
//!
//! The amplitude `ν` multiplies the density perturbation and divides the
//! velocity perturbation, so that `‖θ‖ ≲ νM‖R‖^{1/p}` and
//! `‖w‖ ≲ ν⁻¹M‖R‖^{1/p'}` as the iteration requires.

use crate::calculus::bilinear_slice;
use crate::error::{LabError, Result};
use crate::mikado::{dual_exponent, BlockPart, MikadoBlock};
use crate::temporal::TemporalOscillator;
use crate::torus_field::norms::lattice_norm;
use crate::torus_field::spectral;
use crate::torus_field::{divergence_slice, GridSpec, ScalarField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// `μ = κ = λ`, `σ = ⌊λ^γ⌋`.
    Validated,
    /// `μ, κ, σ` chosen freely; the frequency inequalities are re-checked.
    Desk,
}

impl std::str::FromStr for Mode {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validated" => Ok(Mode::Validated),
            "desk" => Ok(Mode::Desk),
            other => Err(LabError::Parameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeskOverrides {
    pub mu: Option<usize>,
    pub kappa: Option<usize>,
    pub sigma: Option<usize>,
}

/// The two frequency inequalities the estimates rely on, evaluated numerically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyCheck {
    /// `σ μ^{(d−1)/p' − (d−1)/q}` against `λ^{−2γ}`.
    pub sobolev_lhs: f64,
    pub sobolev_rhs: f64,
    /// `μ^{(d−1)/p − (d−1)/r}` against `λ^{−γ}` for the auxiliary `r`.
    pub lebesgue_lhs: f64,
    pub lebesgue_rhs: f64,
    pub aux_r: f64,
}

impl FrequencyCheck {
    pub fn holds(&self) -> bool {
        self.sobolev_lhs <= self.sobolev_rhs && self.lebesgue_lhs <= self.lebesgue_rhs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSchedule {
    pub dim: usize,
    pub p: f64,
    pub q: f64,
    pub p_prime: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub mu: usize,
    pub kappa: usize,
    pub sigma: usize,
    pub nu: f64,
    pub delta: f64,
    pub r_time: f64,
    pub mode: Mode,
    pub check: FrequencyCheck,
}

/// Rejects exponents outside `p > 1`, `q ≥ 1`, `1/p + 1/q > 1`.
pub fn check_regime(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(LabError::Regime(format!("p = {p} must be finite and exceed 1")));
    }
    if !(q >= 1.0) || !q.is_finite() {
        return Err(LabError::Regime(format!("q = {q} must be finite and at least 1")));
    }
    if 1.0 / p + 1.0 / q <= 1.0 {
        return Err(LabError::Regime(format!(
            "1/p + 1/q = {} must exceed 1",
            1.0 / p + 1.0 / q
        )));
    }
    Ok(())
}

/// Half of the admissible slack: `γ = min{1 − 1/p, 1/q − 1/p'} / 8`.
pub fn gamma_for(p: f64, q: f64) -> Result<f64> {
    check_regime(p, q)?;
    let pp = dual_exponent(p);
    Ok(0.5 * (1.0 - 1.0 / p).min(1.0 / q - 1.0 / pp) / 4.0)
}

/// Order `N` of the test-function norm: `⌈(d+1)/γ⌉ + 1`.
pub fn test_function_order(dim: usize, gamma: f64) -> usize {
    // γ is usually a rational with a rounding error; do not let it bump the ceiling
    let x = (dim as f64 + 1.0) / gamma;
    (x * (1.0 - 1e-12)).ceil() as usize + 1
}

pub fn frequency_check(dim: usize, p: f64, q: f64, gamma: f64, lambda: f64, mu: f64, sigma: f64) -> FrequencyCheck {
    let s = (dim - 1) as f64;
    let pp = dual_exponent(p);
    let inv_r = 1.0 / p + 2.0 * gamma / s;
    FrequencyCheck {
        sobolev_lhs: sigma * mu.powf(s / pp - s / q),
        sobolev_rhs: lambda.powf(-2.0 * gamma),
        lebesgue_lhs: mu.powf(s / p - s * inv_r),
        lebesgue_rhs: lambda.powf(-gamma),
        aux_r: 1.0 / inv_r,
    }
}

/// Frequencies of one step. `ν`, `δ` and `r` are left at neutral values and
/// set by the caller with [`ParameterSchedule::with_step`].
pub fn choose_parameters(
    dim: usize,
    p: f64,
    q: f64,
    lambda: f64,
    mode: Mode,
    overrides: DeskOverrides,
) -> Result<ParameterSchedule> {
    let gamma = gamma_for(p, q)?;
    if dim < 3 {
        return Err(LabError::Parameter(format!("dimension {dim} < 3")));
    }
    if !(lambda >= 1.0) {
        return Err(LabError::Parameter(format!("λ = {lambda} must be at least 1")));
    }
    let (mu, kappa, sigma) = match mode {
        Mode::Validated => {
            if lambda.fract() != 0.0 {
                return Err(LabError::Parameter(format!(
                    "validated mode needs an integer λ, got {lambda}"
                )));
            }
            let l = lambda as usize;
            (l, l, lambda.powf(gamma).floor() as usize)
        }
        Mode::Desk => (
            overrides.mu.unwrap_or(lambda as usize),
            overrides.kappa.unwrap_or(lambda as usize),
            overrides.sigma.unwrap_or(lambda.powf(gamma).floor() as usize),
        ),
    };
    if sigma < 1 {
        return Err(LabError::Parameter("σ must be at least 1".into()));
    }
    if mu == 0 || kappa == 0 {
        return Err(LabError::Parameter("μ and κ must be positive".into()));
    }
    Ok(ParameterSchedule {
        dim,
        p,
        q,
        p_prime: dual_exponent(p),
        gamma,
        lambda,
        mu,
        kappa,
        sigma,
        nu: 1.0,
        delta: 1.0,
        r_time: 0.125,
        mode,
        check: frequency_check(dim, p, q, gamma, lambda, mu as f64, sigma as f64),
    })
}

impl ParameterSchedule {
    pub fn with_step(mut self, nu: f64, delta: f64, r_time: f64) -> Result<Self> {
        if !(nu > 0.0) || !(delta > 0.0) || !(r_time > 0.0) {
            return Err(LabError::Parameter(format!(
                "ν = {nu}, δ = {delta}, r = {r_time} must be positive"
            )));
        }
        self.nu = nu;
        self.delta = delta;
        self.r_time = r_time;
        Ok(self)
    }

    /// `true` when the frequency inequalities hold (always checked, decisive in desk mode).
    pub fn is_valid(&self) -> bool {
        self.check.holds()
    }

    /// Smallest grid resolving the step: four points per dilated Mikado cell
    /// and per dilated pulse window.
    pub fn required_grid(&self) -> (usize, usize) {
        (
            (4 * self.mu * self.sigma).next_power_of_two(),
            (4 * self.kappa * self.sigma).next_power_of_two(),
        )
    }
}

/// `min(1/8, 1/(4d(‖R‖_∞ + 1)))`, which satisfies `‖R‖_∞ ≤ 1/(4rd)`.
pub fn support_margin(r_field: &VectorField) -> f64 {
    let d = r_field.grid().dim() as f64;
    (1.0f64 / 8.0).min(1.0 / (4.0 * d * (r_field.max_abs() + 1.0)))
}

/// `L¹_{t,x}` mass of `R` at lattice times outside `I_r = [r, 1 − r]`.
pub fn boundary_mass(r_field: &VectorField, r: f64) -> f64 {
    let g = r_field.grid();
    let mut mass = 0.0;
    for j in 0..g.n_time() {
        let t = g.time(j);
        if t < r || t > 1.0 - r {
            for c in r_field.components() {
                mass += c.slice(j).iter().map(|v| v.abs()).sum::<f64>();
            }
        }
    }
    mass / g.len() as f64
}

/// [`support_margin`] shrunk by halving until the mass of `R` outside `I_r`
/// is at most `δ/4`; this is what makes `‖R_rem‖_{L¹} ≤ δ/2` hold.
pub fn support_margin_for(r_field: &VectorField, delta: f64) -> f64 {
    let floor = 0.25 / r_field.grid().n_time() as f64;
    let mut r = support_margin(r_field);
    while r > floor && boundary_mass(r_field, r) > 0.25 * delta {
        r *= 0.5;
    }
    r
}

/// Quintic smoothstep clamped to `[0, 1]`.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Smooth time ramp: 0 outside `I_{r/2}`, 1 on `I_r`.
pub fn time_ramp(t: f64, r: f64) -> f64 {
    let b = t.min(1.0 - t);
    smoothstep((b - 0.5 * r) / (0.5 * r))
}

#[derive(Clone, Debug)]
pub struct CutoffFamily {
    pub chi: Vec<ScalarField>,
    /// `(δ/(8d), δ/(4d))`.
    pub thresholds: (f64, f64),
    /// `(r/2, r)`.
    pub margins: (f64, f64),
    pub time_ramp: Vec<f64>,
}

pub fn build_cutoffs(r_field: &VectorField, delta: f64, r: f64) -> Result<CutoffFamily> {
    if !(delta > 0.0) {
        return Err(LabError::Parameter(format!("δ = {delta} must be positive")));
    }
    let g = r_field.grid();
    let d = g.dim() as f64;
    let lo = delta / (8.0 * d);
    let hi = delta / (4.0 * d);
    let ramp: Vec<f64> = (0..g.n_time()).map(|j| time_ramp(g.time(j), r)).collect();
    let chi = r_field
        .components()
        .iter()
        .map(|rk| {
            let mut c = rk.map(|v| smoothstep((v.abs() - lo) / (hi - lo)));
            c.scale_in_time(&ramp);
            c
        })
        .collect();
    Ok(CutoffFamily {
        chi,
        thresholds: (lo, hi),
        margins: (0.5 * r, r),
        time_ramp: ramp,
    })
}

#[derive(Clone, Debug)]
pub struct Coefficients {
    pub a: Vec<ScalarField>,
    pub b: Vec<ScalarField>,
    /// `‖R̃_k(t)‖_1` per direction and time.
    pub local_mass: Vec<Vec<f64>>,
    /// `‖R̃_k‖_{L¹_{t,x}}` per direction.
    pub total_mass: Vec<f64>,
    /// `max |A_k B_k + χ_k² R_k| / max(‖R‖_∞, tiny)`.
    pub product_defect: f64,
}

impl Coefficients {
    /// `true` when some `A_k` or `B_k` is nonzero at time index `j`.
    pub fn is_active(&self, j: usize) -> bool {
        self.a.iter().chain(&self.b).any(|f| !is_zero(f.slice(j)))
    }

    /// `true` when every `R̃_k` vanishes and there is nothing to correct.
    pub fn is_degenerate(&self) -> bool {
        self.total_mass.iter().all(|&m| m == 0.0)
    }

    /// Largest excess over the pointwise-in-time amplitude bounds
    /// `‖A_k(t)‖_p ≤ ‖R̃_k‖^{−1+1/p}‖R̃_k(t)‖_1` and `‖B_k(t)‖_{p'} ≤ ‖R̃_k‖^{1/p'}`.
    pub fn amplitude_bound_excess(&self, p: f64) -> (f64, f64) {
        let pp = dual_exponent(p);
        let (mut ea, mut eb) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 0..self.a.len() {
            let m = self.total_mass[k];
            if m == 0.0 {
                continue;
            }
            for j in 0..self.a[k].grid().n_time() {
                let na = lattice_norm(self.a[k].slice(j), p);
                let nb = lattice_norm(self.b[k].slice(j), pp);
                ea = ea.max(na - m.powf(-1.0 + 1.0 / p) * self.local_mass[k][j]);
                eb = eb.max(nb - m.powf(1.0 / pp));
            }
        }
        (ea, eb)
    }
}

/// `A_k`, `B_k` with `A_k B_k = −χ_k² R_k`; `sgn(0) = 0` and both vanish at
/// times where `R̃_k(t) ≡ 0`.
pub fn build_coefficients(r_field: &VectorField, cutoffs: &CutoffFamily, p: f64) -> Result<Coefficients> {
    let g = r_field.grid();
    let pp = dual_exponent(p);
    let s = g.space_len() as f64;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut local_mass = Vec::new();
    let mut total_mass = Vec::new();
    let mut defect: f64 = 0.0;
    let scale = r_field.max_abs().max(f64::MIN_POSITIVE);
    for (rk, chi) in r_field.components().iter().zip(&cutoffs.chi) {
        let local: Vec<f64> = (0..g.n_time())
            .map(|j| {
                rk.slice(j)
                    .iter()
                    .zip(chi.slice(j))
                    .map(|(r, c)| (c * r).abs())
                    .sum::<f64>()
                    / s
            })
            .collect();
        let total = local.iter().sum::<f64>() / g.n_time() as f64;
        let mut ak = ScalarField::zeros(g);
        let mut bk = ScalarField::zeros(g);
        if total > 0.0 {
            for j in 0..g.n_time() {
                if local[j] == 0.0 {
                    continue;
                }
                let fa = (local[j] / total).powf(1.0 - 1.0 / p);
                let fb = (local[j] / total).powf(-1.0 / pp);
                let (rs, cs) = (rk.slice(j), chi.slice(j));
                let av: Vec<f64> = rs
                    .iter()
                    .zip(cs)
                    .map(|(&r, &c)| {
                        if r == 0.0 {
                            0.0
                        } else {
                            -r.signum() * fa * c * r.abs().powf(1.0 / p)
                        }
                    })
                    .collect();
                let bv: Vec<f64> = rs
                    .iter()
                    .zip(cs)
                    .map(|(&r, &c)| fb * c * r.abs().powf(1.0 / pp))
                    .collect();
                for i in 0..av.len() {
                    defect = defect.max((av[i] * bv[i] + cs[i] * cs[i] * rs[i]).abs());
                }
                ak.slice_mut(j).copy_from_slice(&av);
                bk.slice_mut(j).copy_from_slice(&bv);
            }
        }
        a.push(ak);
        b.push(bk);
        local_mass.push(local);
        total_mass.push(total);
    }
    Ok(Coefficients {
        a,
        b,
        local_mass,
        total_mass,
        product_defect: defect / scale,
    })
}

/// Dilated Mikado slices and their antidivergences, shared by every time slice.
#[derive(Clone, Debug)]
pub struct BlockBank {
    pub dim: usize,
    pub n_space: usize,
    pub sigma: usize,
    pub mu: f64,
    pub p: f64,
    /// `Φ_k(σx)`.
    pub density: Vec<Vec<f64>>,
    /// Scalar profile `w_k(σx)` of `W_k(σx) = w_k(σx) e_k`.
    pub field: Vec<Vec<f64>>,
    /// `Φ_k w_k(σx) − mean`.
    pub fluctuation: Vec<Vec<f64>>,
    pub density_potential: Vec<Vec<Vec<f64>>>,
    pub field_potential: Vec<Vec<Vec<f64>>>,
    pub fluctuation_potential: Vec<Vec<Vec<f64>>>,
    /// Lattice mean of `Φ_k w_k`.
    pub pairing_mean: Vec<f64>,
}

impl BlockBank {
    pub fn new(blocks: &[MikadoBlock], n_space: usize, sigma: usize) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| LabError::Parameter("no blocks".into()))?;
        let dim = first.dim();
        if blocks.len() != dim {
            return Err(LabError::Parameter(format!(
                "{} blocks for dimension {dim}",
                blocks.len()
            )));
        }
        let mut bank = BlockBank {
            dim,
            n_space,
            sigma,
            mu: first.mu(),
            p: first.exponents().0,
            density: Vec::new(),
            field: Vec::new(),
            fluctuation: Vec::new(),
            density_potential: Vec::new(),
            field_potential: Vec::new(),
            fluctuation_potential: Vec::new(),
            pairing_mean: Vec::new(),
        };
        for (k, blk) in blocks.iter().enumerate() {
            if blk.direction() != k || blk.mu() != bank.mu || blk.exponents().0 != bank.p {
                return Err(LabError::Parameter(
                    "blocks must share μ, p and be ordered by direction".into(),
                ));
            }
            let phi = blk.dilated_slice(blk.section(BlockPart::Density), n_space, sigma)?;
            let w = blk.dilated_slice(blk.section(BlockPart::Field), n_space, sigma)?;
            let fl = blk.dilated_slice(&blk.pairing_fluctuation(), n_space, sigma)?;
            bank.pairing_mean
                .push(phi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / phi.len() as f64);
            bank.density_potential
                .push(spectral::antidivergence(&phi, dim, n_space));
            bank.field_potential.push(spectral::antidivergence(&w, dim, n_space));
            bank.fluctuation_potential
                .push(spectral::antidivergence(&fl, dim, n_space));
            bank.density.push(phi);
            bank.field.push(w);
            bank.fluctuation.push(fl);
        }
        Ok(bank)
    }
}

#[derive(Clone, Debug)]
pub struct PerturbationSet {
    pub theta_p: ScalarField,
    pub theta_c: ScalarField,
    pub theta_o: ScalarField,
    pub w_p: VectorField,
    pub w_c: VectorField,
    pub coefficients: Coefficients,
}

pub(crate) fn check_compatible(
    grid: GridSpec,
    schedule: &ParameterSchedule,
    bank: &BlockBank,
    osc: &TemporalOscillator,
) -> Result<()> {
    if bank.n_space != grid.n_space() || bank.sigma != schedule.sigma {
        return Err(LabError::Parameter("block bank does not match the grid or σ".into()));
    }
    if bank.mu != schedule.mu as f64 || bank.p != schedule.p {
        return Err(LabError::Parameter("blocks were built for another (μ, p)".into()));
    }
    if osc.n_time() != grid.n_time() || osc.sigma() != schedule.sigma || osc.kappa() != schedule.kappa {
        return Err(LabError::Parameter("oscillator does not match the grid, σ or κ".into()));
    }
    Ok(())
}

fn is_zero(s: &[f64]) -> bool {
    s.iter().all(|&v| v == 0.0)
}

/// `w_p = ν⁻¹ g_κ(σt) Σ_k B_k W_k(σx)`.
pub fn principal_velocity(
    coeffs: &Coefficients,
    schedule: &ParameterSchedule,
    bank: &BlockBank,
    osc: &TemporalOscillator,
) -> Result<VectorField> {
    let g = coeffs.b[0].grid();
    check_compatible(g, schedule, bank, osc)?;
    let comps = (0..g.dim())
        .map(|k| {
            ScalarField::from_slices(g, |j| {
                let c = osc.g()[j] / schedule.nu;
                coeffs.b[k]
                    .slice(j)
                    .iter()
                    .zip(&bank.field[k])
                    .map(|(b, w)| c * b * w)
                    .collect()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

/// Builds all five perturbation pieces.
///
/// `θ_c = −K θ_p` removes the mean and the lattice-kernel modes of `θ_p` at
/// each time, and `w_c` uses the exact lattice form of `ℬ`, so that
/// `∂_t(θ_p + θ_c)` and `div w_p` are exact lattice divergences.
pub fn build_perturbations(
    coeffs: Coefficients,
    schedule: &ParameterSchedule,
    bank: &BlockBank,
    osc: &TemporalOscillator,
) -> Result<PerturbationSet> {
    let g = coeffs.a[0].grid();
    check_compatible(g, schedule, bank, osc)?;
    let (d, n) = (g.dim(), g.n_space());
    let nu = schedule.nu;
    let sigma = schedule.sigma as f64;
    let w_p = principal_velocity(&coeffs, schedule, bank, osc)?;
    let mut theta_p = Vec::with_capacity(g.len());
    let mut theta_c = Vec::with_capacity(g.len());
    let mut theta_o = Vec::with_capacity(g.len());
    let mut w_c: Vec<Vec<f64>> = (0..d).map(|_| Vec::with_capacity(g.len())).collect();
    let zero = vec![0.0; g.space_len()];
    for j in 0..g.n_time() {
        if !coeffs.is_active(j) {
            theta_p.extend_from_slice(&zero);
            theta_c.extend_from_slice(&zero);
            theta_o.extend_from_slice(&zero);
            w_c.iter_mut().for_each(|c| c.extend_from_slice(&zero));
            continue;
        }
        let mut tp = vec![0.0; g.space_len()];
        let mut y = vec![0.0; g.space_len()];
        let mut wc = vec![vec![0.0; g.space_len()]; d];
        for k in 0..d {
            let (a, b) = (coeffs.a[k].slice(j), coeffs.b[k].slice(j));
            for ((t, ai), phi) in tp.iter_mut().zip(a).zip(&bank.density[k]) {
                *t += nu * osc.g_tilde()[j] * ai * phi;
            }
            let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            for (yi, v) in y.iter_mut().zip(spectral::axis_derivative(&ab, d, n, k)) {
                *yi -= v;
            }
            let db = spectral::axis_derivative(b, d, n, k);
            let bil = bilinear_slice(&db, &bank.field[k], &bank.field_potential[k], d, n);
            let c = -osc.g()[j] / nu;
            for (wci, bi) in wc.iter_mut().zip(bil) {
                for (o, v) in wci.iter_mut().zip(bi) {
                    *o += c * v;
                }
            }
        }
        let kern = spectral::gradient_kernel_part(&tp, d, n);
        theta_c.extend(kern.iter().map(|v| -v));
        theta_p.extend(tp);
        let ho = osc.h()[j] / sigma;
        theta_o.extend(y.iter().map(|v| ho * v));
        for (dst, src) in w_c.iter_mut().zip(wc) {
            dst.extend(src);
        }
    }
    Ok(PerturbationSet {
        theta_p: ScalarField::new(g, theta_p)?,
        theta_c: ScalarField::new(g, theta_c)?,
        theta_o: ScalarField::new(g, theta_o)?,
        w_p,
        w_c: VectorField::new(w_c.into_iter().map(|c| ScalarField::new(g, c)).collect::<Result<_>>()?)?,
        coefficients: coeffs,
    })
}

/// Measured structural properties of a perturbation set.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationChecks {
    /// `max_t |mean θ(t)|`.
    pub theta_mean: f64,
    /// `‖div(w_p + w_c)‖_{L²} / ‖div w_p‖_{L²}` (0 when `w_p` is divergence-free).
    pub velocity_divergence: f64,
    /// Time indices where `θ` or `w` is nonzero although `R` vanishes there.
    pub support_violations: Vec<usize>,
    /// Time indices outside `I_{r/2}` where `θ` or `w` is nonzero.
    pub margin_violations: Vec<usize>,
}

impl PerturbationSet {
    pub fn grid(&self) -> GridSpec {
        self.theta_p.grid()
    }

    pub fn theta(&self) -> Result<ScalarField> {
        self.theta_p.add(&self.theta_c)?.add(&self.theta_o)
    }

    pub fn w(&self) -> Result<VectorField> {
        self.w_p.add(&self.w_c)
    }

    pub fn checks(&self, r_field: &VectorField, r_time: f64) -> Result<PerturbationChecks> {
        let g = self.grid();
        let (d, n) = (g.dim(), g.n_space());
        let s = g.space_len() as f64;
        let mut theta_mean: f64 = 0.0;
        let (mut num, mut den) = (0.0, 0.0);
        let mut support_violations = Vec::new();
        let mut margin_violations = Vec::new();
        for j in 0..g.n_time() {
            let th: Vec<f64> = (0..g.space_len())
                .map(|i| self.theta_p.slice(j)[i] + self.theta_c.slice(j)[i] + self.theta_o.slice(j)[i])
                .collect();
            theta_mean = theta_mean.max((th.iter().sum::<f64>() / s).abs());
            let wp: Vec<&[f64]> = self.w_p.components().iter().map(|c| c.slice(j)).collect();
            let w: Vec<Vec<f64>> = (0..d)
                .map(|k| {
                    wp[k]
                        .iter()
                        .zip(self.w_c.component(k).slice(j))
                        .map(|(a, b)| a + b)
                        .collect()
                })
                .collect();
            let wr: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
            let dw = divergence_slice(&wr, d, n);
            let dwp = divergence_slice(&wp, d, n);
            num += dw.iter().map(|v| v * v).sum::<f64>();
            den += dwp.iter().map(|v| v * v).sum::<f64>();
            let nonzero = !is_zero(&th) || w.iter().any(|c| !is_zero(c));
            let r_zero = r_field.components().iter().all(|c| is_zero(c.slice(j)));
            if nonzero && r_zero {
                support_violations.push(j);
            }
            let t = g.time(j);
            if nonzero && (t < 0.5 * r_time || t > 1.0 - 0.5 * r_time) {
                margin_violations.push(j);
            }
        }
        Ok(PerturbationChecks {
            theta_mean,
            velocity_divergence: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
            support_violations,
            margin_violations,
        })
    }
}

/// `cos(2π ξ·x)`, a test function whose `C^N` norm is known in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct TestMode {
    pub frequency: Vec<i64>,
}

impl TestMode {
    /// `max_{j ≤ N} (2π|ξ|)^j`.
    pub fn cn_norm(&self, order: usize) -> f64 {
        let k = 2.0 * std::f64::consts::PI * self.frequency.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if k <= 1.0 {
            1.0
        } else {
            k.powi(order as i32)
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Vec<f64> {
        let n = grid.n_space();
        let mut out = Vec::with_capacity(grid.space_len());
        spectral::for_each_index(grid.dim(), n, |_, idx| {
            let phase: f64 = idx
                .iter()
                .zip(&self.frequency)
                .map(|(&i, &f)| (i as i64 * f) as f64)
                .sum::<f64>();
            out.push((2.0 * std::f64::consts::PI * phase / n as f64).cos());
        });
        out
    }
}

/// The constant mode plus a few low frequencies.
pub fn test_bank(dim: usize) -> Vec<TestMode> {
    let mut bank = vec![TestMode {
        frequency: vec![0; dim],
    }];
    for k in 0..dim {
        let mut f = vec![0; dim];
        f[k] = 1;
        bank.push(TestMode { frequency: f.clone() });
        f[k] = 2;
        bank.push(TestMode { frequency: f });
    }
    bank.push(TestMode {
        frequency: vec![1; dim],
    });
    bank
}

/// `max_{t, φ} |∫θ(t)φ| / (δ ‖φ‖_{C^N})` over the test bank.
pub fn weak_pairing_ratio(theta: &ScalarField, delta: f64, order: usize) -> f64 {
    let g = theta.grid();
    let s = g.space_len() as f64;
    let mut worst: f64 = 0.0;
    for mode in test_bank(g.dim()) {
        let phi = mode.sample(g);
        let norm = delta * mode.cn_norm(order);
        for j in 0..g.n_time() {
            let pairing = theta.slice(j).iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() / s;
            worst = worst.max(pairing.abs() / norm);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_for_reference_exponents() {
        let g = gamma_for(2.0, 1.5).unwrap();
        assert!((g - 1.0 / 48.0).abs() < 1e-15);
        assert!(gamma_for(2.0, 2.0).is_err());
        assert!(gamma_for(1.0, 1.5).is_err());
    }

    #[test]
    fn validated_schedule() {
        let s = choose_parameters(3, 2.0, 1.5, 8.0, Mode::Validated, DeskOverrides::default()).unwrap();
        assert_eq!((s.mu, s.kappa, s.sigma), (8, 8, 1));
        assert!(s.is_valid());
        assert_eq!(test_function_order(3, s.gamma), 193);
    }

    #[test]
    fn desk_schedule_reports_frequency_check() {
        let o = DeskOverrides {
            mu: Some(8),
            kappa: Some(8),
            sigma: Some(2),
        };
        let s = choose_parameters(3, 2.0, 1.5, 8.0, Mode::Desk, o).unwrap();
        // σ μ^{2(1/2 − 2/3)} = 2 · 8^{−1/3} = 1 against 8^{−1/24}
        assert!((s.check.sobolev_lhs - 1.0).abs() < 1e-12);
        assert!((s.check.sobolev_rhs - 8f64.powf(-1.0 / 24.0)).abs() < 1e-12);
        assert!(!s.is_valid());
    }

    #[test]
    fn support_margin_examples() {
        let g = GridSpec::new(3, 4, 4).unwrap();
        let zero = VectorField::zeros(g);
        assert!((support_margin(&zero) - 1.0 / 12.0).abs() < 1e-15);
        let mut one = VectorField::zeros(g);
        *one.component_mut(1) = ScalarField::constant(g, 1.0);
        assert!((support_margin(&one) - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn test_mode_norms() {
        let c = TestMode {
            frequency: vec![0, 0, 0],
        };
        assert_eq!(c.cn_norm(193), 1.0);
        let m = TestMode {
            frequency: vec![1, 0, 0],
        };
        assert!((m.cn_norm(2) - 4.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        let g = GridSpec::new(3, 8, 4).unwrap();
        let theta = ScalarField::constant(g, 0.5);
        assert!((weak_pairing_ratio(&theta, 1.0, 5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn smoothstep_and_ramp() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(time_ramp(0.0, 0.1), 0.0);
        assert_eq!(time_ramp(0.05, 0.1), 0.0);
        assert_eq!(time_ramp(0.5, 0.1), 1.0);
        assert_eq!(time_ramp(0.9, 0.1), 1.0);
    }

    #[test]
    fn zero_defect_gives_zero_cutoffs_and_coefficients() {
        let g = GridSpec::new(3, 8, 8).unwrap();
        let r = VectorField::zeros(g);
        let c = build_cutoffs(&r, 1.0, 0.125).unwrap();
        assert!(c.chi.iter().all(|x| x.max_abs() == 0.0));
        let co = build_coefficients(&r, &c, 2.0).unwrap();
        assert!(co.is_degenerate());
        assert!(build_cutoffs(&r, 0.0, 0.1).is_err());
    }
}
