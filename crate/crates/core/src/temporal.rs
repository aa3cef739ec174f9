//! Temporally intermittent oscillators `g_κ`, `g̃_κ = κ g_κ` and the
//! saw-tooth corrector `h_κ` with `∂_t h_κ = g̃_κ g_κ − 1`, all sampled at `σt`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::torus_field::norms::lattice_norm;
use crate::torus_field::spectral::{self, derivative_wavenumber};

fn bump(u: f64) -> f64 {
    let q = 0.25 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// `g(s) = c·exp(−1/(s'(1−s')))` with `s'` the rescaling of `(1/8, 7/8)` onto
/// `(0, 1)`, and `c` chosen so that `∫₀¹ g² = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeProfile {
    scale: f64,
}

impl TimeProfile {
    pub fn eval(&self, s: f64) -> f64 {
        self.scale * bump((s - 0.5) / 0.75)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

pub fn default_time_profile() -> TimeProfile {
    const M: usize = 200_000;
    let h = 1.0 / M as f64;
    let int: f64 = (0..M).map(|i| bump(-0.5 + (i as f64 + 0.5) * h).powi(2)).sum::<f64>() * h * 0.75;
    TimeProfile {
        scale: 1.0 / int.sqrt(),
    }
}

#[derive(Clone, Debug)]
pub struct TemporalOscillator {
    kappa: usize,
    sigma: usize,
    n_time: usize,
    g: Vec<f64>,
    g_tilde: Vec<f64>,
    h: Vec<f64>,
    renormalization: f64,
    derivative_defect: f64,
}

/// Samples `g_κ(σt)`, `g̃_κ(σt)` and `h_κ(σt)` on `n_time` points.
///
/// The profile is rescaled by one factor so that the lattice mean of
/// `g̃_κ g_κ(σ·)` is exactly one; the factor depends only on the number of
/// lattice points per pulse window `n_time / (σκ)`. `h_κ(σ·)` is the exact
/// antiderivative of the trigonometric interpolant of `σ(g̃_κ g_κ − 1)(σ·)`
/// with `h(0) = 0`.
pub fn build_oscillator(kappa: usize, sigma: usize, n_time: usize) -> Result<TemporalOscillator> {
    if kappa == 0 || sigma == 0 {
        return Err(LabError::Parameter("κ and σ must be positive".into()));
    }
    if n_time % sigma != 0 {
        return Err(LabError::Dilation { sigma, n: n_time });
    }
    if n_time < 4 * sigma * kappa {
        return Err(LabError::Resolution(format!(
            "oscillator with sigma = {sigma}, kappa = {kappa} needs n_time >= {}, got {n_time}",
            4 * sigma * kappa
        )));
    }
    let profile = default_time_profile();
    let mut g: Vec<f64> = (0..n_time)
        .map(|j| {
            let u = kappa as f64 * (((sigma * j) % n_time) as f64 / n_time as f64);
            if u < 1.0 {
                profile.eval(u)
            } else {
                0.0
            }
        })
        .collect();
    let pairing = kappa as f64 * g.iter().map(|v| v * v).sum::<f64>() / n_time as f64;
    if !(pairing > 0.0) {
        return Err(LabError::Resolution("time lattice misses every pulse".into()));
    }
    let c = 1.0 / pairing.sqrt();
    g.iter_mut().for_each(|v| *v *= c);
    let g_tilde: Vec<f64> = g.iter().map(|v| kappa as f64 * v).collect();
    let forcing: Vec<f64> = g.iter().zip(&g_tilde).map(|(a, b)| a * b - 1.0).collect();
    let h = periodic_antiderivative(&forcing, sigma as f64);
    let dh = spectral::axis_derivative(&h, 1, n_time, 0);
    let scale = forcing.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let derivative_defect = dh
        .iter()
        .zip(&forcing)
        .fold(0.0f64, |m, (d, f)| m.max((d / sigma as f64 - f).abs()))
        / scale;
    Ok(TemporalOscillator {
        kappa,
        sigma,
        n_time,
        g,
        g_tilde,
        h,
        renormalization: c,
        derivative_defect,
    })
}

/// `H` with `H' = factor·F` in the trigonometric-interpolant sense and `H(0) = 0`;
/// `F` must have zero mean.
fn periodic_antiderivative(f: &[f64], factor: f64) -> Vec<f64> {
    let n = f.len();
    let mut spec = spectral::to_complex(f);
    spectral::forward_nd(&mut spec, 1, n);
    for (i, v) in spec.iter_mut().enumerate() {
        let k = derivative_wavenumber(i, n);
        *v = if k == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            *v * factor / Complex64::new(0.0, 2.0 * PI * k)
        };
    }
    spectral::inverse_nd(&mut spec, 1, n);
    let h0 = spec[0].re;
    spec.iter().map(|c| c.re - h0).collect()
}

impl TemporalOscillator {
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    /// Samples of `g_κ(σt)`.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Samples of `g̃_κ(σt)`.
    pub fn g_tilde(&self) -> &[f64] {
        &self.g_tilde
    }

    /// Samples of `h_κ(σt)`.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }

    /// Lattice points per pulse window, `n_time / (σκ)`.
    pub fn points_per_window(&self) -> f64 {
        self.n_time as f64 / (self.sigma * self.kappa) as f64
    }

    /// `max |σ⁻¹∂_t h(σt) − (g̃g − 1)| / max |g̃g − 1|`, limited by how well
    /// the time lattice resolves a pulse.
    pub fn derivative_defect(&self) -> f64 {
        self.derivative_defect
    }

    /// Samples of `g̃_κ g_κ(σt)`.
    pub fn pairing(&self) -> Vec<f64> {
        self.g.iter().zip(&self.g_tilde).map(|(a, b)| a * b).collect()
    }

    /// Lattice mean of `g̃_κ g_κ(σt)`.
    pub fn pairing_mean(&self) -> f64 {
        self.pairing().iter().sum::<f64>() / self.n_time as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntermittencyRow {
    pub r: f64,
    pub g_norm: f64,
    pub g_tilde_norm: f64,
}

pub fn intermittency_table(osc: &TemporalOscillator, r_list: &[f64]) -> Vec<IntermittencyRow> {
    r_list
        .iter()
        .map(|&r| IntermittencyRow {
            r,
            g_norm: lattice_norm(&osc.g, r),
            g_tilde_norm: lattice_norm(&osc.g_tilde, r),
        })
        .collect()
}
