//! Antidivergence operators and the oscillation estimates built on them.
//!
//! All operators use the lattice derivative symbols, so their defining
//! identities hold to rounding on any grid:
//! `div ℛf = f − Kf` and `div ℬ(a,f) = af − K(af)`, where `K` keeps the mean
//! and the modes whose frequencies are all `0` or Nyquist (the lattice
//! kernel of the gradient). For band-limited data `K` is just the mean.

use crate::error::{LabError, Result};
use crate::torus_field::norms::{cn_norm_slice, lattice_norm};
use crate::torus_field::spectral;
use crate::torus_field::{divergence_slice, RescaleAxes, ScalarField, VectorField};

/// `ℛ` on one spatial slice.
pub fn antidivergence_slice(f: &[f64], dim: usize, n: usize) -> Vec<Vec<f64>> {
    spectral::antidivergence(f, dim, n)
}

/// `ℬ(a, f)` on one slice given the precomputed potential `rf = ℛf`.
///
/// Evaluated as `aℛf − ℛ(div(aℛf) − af)`, which equals
/// `aℛf − ℛ(∇a·ℛf)` in the continuum and keeps the divergence identity exact
/// on the lattice.
pub fn bilinear_slice(a: &[f64], f: &[f64], rf: &[Vec<f64>], dim: usize, n: usize) -> Vec<Vec<f64>> {
    let prod: Vec<Vec<f64>> = rf
        .iter()
        .map(|c| c.iter().zip(a).map(|(x, y)| x * y).collect())
        .collect();
    let refs: Vec<&[f64]> = prod.iter().map(|p| p.as_slice()).collect();
    let mut q = divergence_slice(&refs, dim, n);
    for ((qi, ai), fi) in q.iter_mut().zip(a).zip(f) {
        *qi -= ai * fi;
    }
    let corr = spectral::antidivergence(&q, dim, n);
    prod.into_iter()
        .zip(corr)
        .map(|(p, c)| p.iter().zip(&c).map(|(x, y)| x - y).collect())
        .collect()
}

/// The textbook form `aℛf − ℛ(∇a·ℛf)` on one slice.
pub fn bilinear_slice_direct(a: &[f64], rf: &[Vec<f64>], dim: usize, n: usize) -> Vec<Vec<f64>> {
    let mut dot = vec![0.0; a.len()];
    for (axis, c) in rf.iter().enumerate() {
        let da = spectral::axis_derivative(a, dim, n, axis);
        for ((o, x), y) in dot.iter_mut().zip(&da).zip(c) {
            *o += x * y;
        }
    }
    let corr = spectral::antidivergence(&dot, dim, n);
    rf.iter()
        .zip(corr)
        .map(|(c, k)| c.iter().zip(a).zip(&k).map(|((x, y), z)| x * y - z).collect())
        .collect()
}

fn from_component_slices(f: &ScalarField, mut op: impl FnMut(usize) -> Vec<Vec<f64>>) -> Result<VectorField> {
    let g = f.grid();
    let mut comps: Vec<Vec<f64>> = (0..g.dim()).map(|_| Vec::with_capacity(g.len())).collect();
    for j in 0..g.n_time() {
        for (c, s) in comps.iter_mut().zip(op(j)) {
            c.extend(s);
        }
    }
    VectorField::new(
        comps
            .into_iter()
            .map(|c| ScalarField::new(g, c))
            .collect::<Result<_>>()?,
    )
}

/// `ℛf` at every time.
pub fn antidivergence(f: &ScalarField) -> Result<VectorField> {
    let g = f.grid();
    from_component_slices(f, |j| spectral::antidivergence(f.slice(j), g.dim(), g.n_space()))
}

fn check_zero_mean(f: &ScalarField) -> Result<()> {
    let scale = f.max_abs().max(1.0);
    for m in f.space_means() {
        if m.abs() > 1e-10 * scale {
            return Err(LabError::NonzeroMean(m));
        }
    }
    Ok(())
}

/// `ℬ(a, f)` at every time; `f` must have zero spatial mean.
pub fn bilinear_antidivergence(a: &ScalarField, f: &ScalarField) -> Result<VectorField> {
    if a.grid() != f.grid() {
        return Err(LabError::GridMismatch("ℬ arguments".into()));
    }
    check_zero_mean(f)?;
    let g = f.grid();
    from_component_slices(f, |j| {
        let rf = spectral::antidivergence(f.slice(j), g.dim(), g.n_space());
        bilinear_slice(a.slice(j), f.slice(j), &rf, g.dim(), g.n_space())
    })
}

/// Improved Hölder comparison at every time; returns the largest gap
/// `|‖a f(σ·)‖_r − ‖a‖_r ‖f‖_r|` and the largest `σ^{−1/r}‖a‖_{C¹}‖f‖_r`.
pub fn improved_holder_gap(a: &ScalarField, f: &ScalarField, sigma: usize, r: f64) -> Result<(f64, f64)> {
    crate::torus_field::norms::check_exponent(r)?;
    let fs = f.rescale(sigma, RescaleAxes::Space)?;
    let g = a.grid();
    let mut gap: f64 = 0.0;
    let mut bound: f64 = 0.0;
    for j in 0..g.n_time() {
        let prod: Vec<f64> = a.slice(j).iter().zip(fs.slice(j)).map(|(x, y)| x * y).collect();
        // the dilated samples only visit the coarse sublattice, so the
        // lattice-consistent ‖f‖_r is taken from them
        let fr = lattice_norm(fs.slice(j), r);
        let lhs = lattice_norm(&prod, r);
        gap = gap.max((lhs - lattice_norm(a.slice(j), r) * fr).abs());
        let c1 = cn_norm_slice(&[a.slice(j)], g.dim(), g.n_space(), 1);
        bound = bound.max((sigma as f64).powf(-1.0 / r) * c1 * fr);
    }
    Ok((gap, bound))
}

/// `∫ a(x) f(σx) dx` (averaged over the time lattice); `f` must be zero-mean.
pub fn oscillatory_mean(a: &ScalarField, f: &ScalarField, sigma: usize) -> Result<f64> {
    check_zero_mean(f)?;
    let fs = f.rescale(sigma, RescaleAxes::Space)?;
    Ok(a.mul(&fs)?.mean())
}

/// The mean-value bound `σ^{−n} ‖a‖_{C^n} ‖f‖_2`, largest over time.
pub fn oscillation_bound(a: &ScalarField, f: &ScalarField, sigma: usize, order: usize) -> f64 {
    let g = a.grid();
    (0..g.n_time())
        .map(|j| {
            (sigma as f64).powi(-(order as i32))
                * cn_norm_slice(&[a.slice(j)], g.dim(), g.n_space(), order)
                * lattice_norm(f.slice(j), 2.0)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_field::GridSpec;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(3, 16, 4).unwrap()
    }

    #[test]
    fn antidivergence_of_sine() {
        let g = grid();
        let f = ScalarField::from_fn(g, |_, x| (2.0 * PI * x[0]).sin());
        let r = antidivergence(&f).unwrap();
        let want = ScalarField::from_fn(g, |_, x| -(2.0 * PI * x[0]).cos() / (2.0 * PI));
        assert!(r.component(0).sub(&want).unwrap().max_abs() < 1e-14);
        assert!(r.component(1).max_abs() < 1e-14);
        assert!(antidivergence(&ScalarField::constant(g, 4.0)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn bilinear_trivial_cases() {
        let g = grid();
        let f = ScalarField::from_fn(g, |_, x| (2.0 * PI * (x[0] + x[2])).cos());
        let one = ScalarField::constant(g, 1.0);
        let b = bilinear_antidivergence(&one, &f).unwrap();
        let r = antidivergence(&f).unwrap();
        assert!(b.sub(&r).unwrap().max_abs() < 1e-14);
        let a = ScalarField::from_fn(g, |_, x| (2.0 * PI * x[1]).sin());
        let zero = ScalarField::zeros(g);
        assert_eq!(bilinear_antidivergence(&a, &zero).unwrap().max_abs(), 0.0);
        let shifted = f.map(|v| v + 0.1);
        assert!(matches!(
            bilinear_antidivergence(&a, &shifted),
            Err(LabError::NonzeroMean(_))
        ));
    }

    #[test]
    fn holder_gap_vanishes_for_constants() {
        let g = grid();
        let f = ScalarField::from_fn(g, |_, x| (2.0 * PI * x[0]).sin() + 0.3);
        let c = ScalarField::constant(g, 2.0);
        let (gap, _) = improved_holder_gap(&c, &f, 2, 3.0).unwrap();
        assert!(gap < 1e-13);
        let (gap, _) = improved_holder_gap(&f, &c, 4, 1.5).unwrap();
        assert!(gap < 1e-13);
    }

    #[test]
    fn oscillatory_mean_orthogonal_modes() {
        let g = grid();
        let s = ScalarField::from_fn(g, |_, x| (2.0 * PI * x[0]).sin());
        assert!(oscillatory_mean(&s, &s, 2).unwrap().abs() < 1e-15);
        let c = ScalarField::constant(g, 3.0);
        assert!(oscillatory_mean(&c, &s, 4).unwrap().abs() < 1e-15);
    }
}
