//! Lattice quadrature for Lebesgue, Sobolev and mixed space-time norms.

use super::spectral::axis_derivative;
use super::{GridSpec, ScalarField, VectorField};
use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Spatial norm of the slice at the given time index.
    Space(usize),
    SpaceTime,
}

/// Anything made of scalar components sharing a grid. Norms use the
/// Euclidean magnitude across components.
pub trait Sampled {
    fn grid(&self) -> GridSpec;
    fn parts(&self) -> Vec<&ScalarField>;
}

impl Sampled for ScalarField {
    fn grid(&self) -> GridSpec {
        ScalarField::grid(self)
    }
    fn parts(&self) -> Vec<&ScalarField> {
        vec![self]
    }
}

impl Sampled for VectorField {
    fn grid(&self) -> GridSpec {
        VectorField::grid(self)
    }
    fn parts(&self) -> Vec<&ScalarField> {
        self.components().iter().collect()
    }
}

pub fn check_exponent(r: f64) -> Result<()> {
    if r.is_nan() || r < 1.0 {
        return Err(LabError::Exponent(r));
    }
    Ok(())
}

/// `(mean |v|^r)^{1/r}`, or the max for `r = ∞`.
pub fn lattice_norm(values: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let n = values.len() as f64;
    if r == 1.0 {
        return values.iter().map(|v| v.abs()).sum::<f64>() / n;
    }
    if r == 2.0 {
        return (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    }
    (values.iter().map(|v| v.abs().powf(r)).sum::<f64>() / n).powf(1.0 / r)
}

/// Pointwise Euclidean magnitude across parts; `weights` multiply the squares.
pub fn magnitude(parts: &[&[f64]], weights: Option<&[f64]>) -> Vec<f64> {
    if parts.len() == 1 && weights.is_none() {
        return parts[0].iter().map(|v| v.abs()).collect();
    }
    let mut out = vec![0.0; parts[0].len()];
    for (i, p) in parts.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += w * v * v;
        }
    }
    out.iter_mut().for_each(|o| *o = o.sqrt());
    out
}

pub fn lebesgue_norm<F: Sampled + ?Sized>(f: &F, r: f64, scope: Scope) -> Result<f64> {
    check_exponent(r)?;
    let parts = f.parts();
    match scope {
        Scope::Space(j) => {
            if j >= f.grid().n_time() {
                return Err(LabError::Parameter(format!("time index {j} out of range")));
            }
            let slices: Vec<&[f64]> = parts.iter().map(|p| p.slice(j)).collect();
            Ok(lattice_norm(&magnitude(&slices, None), r))
        }
        Scope::SpaceTime => {
            let all: Vec<&[f64]> = parts.iter().map(|p| p.samples()).collect();
            Ok(lattice_norm(&magnitude(&all, None), r))
        }
    }
}

/// Spatial `L^r` norm at every time index.
pub fn space_norms<F: Sampled + ?Sized>(f: &F, r: f64) -> Result<Vec<f64>> {
    check_exponent(r)?;
    let parts = f.parts();
    Ok((0..f.grid().n_time())
        .map(|j| {
            let slices: Vec<&[f64]> = parts.iter().map(|p| p.slice(j)).collect();
            lattice_norm(&magnitude(&slices, None), r)
        })
        .collect())
}

/// All distinct partial derivatives of order `order` of a spatial slice, with
/// the multinomial multiplicity of each, so that the Frobenius magnitude of
/// `∇^order f` is `sqrt(Σ weight·(∂^α f)²)`.
pub fn derivative_tensor(slice: &[f64], dim: usize, n: usize, order: usize) -> Vec<(f64, Vec<f64>)> {
    // each entry: (non-decreasing axis tuple, derivative samples)
    let mut level: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), slice.to_vec())];
    for _ in 0..order {
        let mut next = Vec::new();
        for (tuple, data) in &level {
            let start = tuple.last().copied().unwrap_or(0);
            for axis in start..dim {
                let mut t = tuple.clone();
                t.push(axis);
                next.push((t, axis_derivative(data, dim, n, axis)));
            }
        }
        level = next;
    }
    level
        .into_iter()
        .map(|(tuple, data)| {
            let mut counts = vec![0usize; dim];
            tuple.iter().for_each(|&a| counts[a] += 1);
            let denom: f64 = counts.iter().map(|&c| factorial(c)).product();
            (factorial(order) / denom, data)
        })
        .collect()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Pointwise `|∇^order X|` for a multi-component slice.
pub fn derivative_magnitude(parts: &[&[f64]], dim: usize, n: usize, order: usize) -> Vec<f64> {
    if order == 0 {
        return magnitude(parts, None);
    }
    let mut weights = Vec::new();
    let mut data = Vec::new();
    for p in parts {
        for (w, d) in derivative_tensor(p, dim, n, order) {
            weights.push(w);
            data.push(d);
        }
    }
    let refs: Vec<&[f64]> = data.iter().map(|d| d.as_slice()).collect();
    magnitude(&refs, Some(&weights))
}

/// `W^{m,r}` norm of a slice: `Σ_{j≤m} ‖∇^j X‖_r`.
pub fn sobolev_norm_slice(parts: &[&[f64]], dim: usize, n: usize, r: f64, m: usize) -> f64 {
    (0..=m)
        .map(|j| lattice_norm(&derivative_magnitude(parts, dim, n, j), r))
        .sum()
}

/// `C^m` norm of a slice: the largest lattice value of `|∇^j X|` over `j ≤ m`.
pub fn cn_norm_slice(parts: &[&[f64]], dim: usize, n: usize, m: usize) -> f64 {
    (0..=m)
        .map(|j| lattice_norm(&derivative_magnitude(parts, dim, n, j), f64::INFINITY))
        .fold(0.0, f64::max)
}

/// `‖ t ↦ ‖f(t)‖_{W^{m, space_exponent}} ‖_{L^{time_exponent}}`.
pub fn mixed_norm<F: Sampled + ?Sized>(f: &F, time_exponent: f64, space_exponent: f64, m: usize) -> Result<f64> {
    check_exponent(time_exponent)?;
    check_exponent(space_exponent)?;
    let g = f.grid();
    let parts = f.parts();
    let per_time: Vec<f64> = (0..g.n_time())
        .map(|j| {
            let slices: Vec<&[f64]> = parts.iter().map(|p| p.slice(j)).collect();
            if slices.iter().all(|s| s.iter().all(|v| *v == 0.0)) {
                0.0
            } else {
                sobolev_norm_slice(&slices, g.dim(), g.n_space(), space_exponent, m)
            }
        })
        .collect();
    Ok(lattice_norm(&per_time, time_exponent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(3, 16, 8).unwrap()
    }

    #[test]
    fn constant_norms() {
        let f = ScalarField::constant(grid(), 3.0);
        assert!((lebesgue_norm(&f, 5.0, Scope::SpaceTime).unwrap() - 3.0).abs() < 1e-13);
        let two = ScalarField::constant(grid(), 2.0);
        assert!((mixed_norm(&two, 1.0, 3.0, 0).unwrap() - 2.0).abs() < 1e-13);
        assert!(lebesgue_norm(&f, 0.5, Scope::SpaceTime).is_err());
    }

    #[test]
    fn sine_norms() {
        let f = ScalarField::from_fn(grid(), |_, x| (2.0 * PI * x[0]).sin());
        let l2 = lebesgue_norm(&f, 2.0, Scope::Space(3)).unwrap();
        assert!((l2 - 0.5f64.sqrt()).abs() < 1e-13);
        let linf = lebesgue_norm(&f, f64::INFINITY, Scope::SpaceTime).unwrap();
        assert!((linf - 1.0).abs() <= 2.0 * PI / 16.0);
        let w12 = mixed_norm(&f, 1.0, 2.0, 1).unwrap();
        let want = 0.5f64.sqrt() + 2.0 * PI * 0.5f64.sqrt();
        assert!((w12 - want).abs() < 1e-11);
    }

    #[test]
    fn second_order_tensor_counts_mixed_partials_twice() {
        let n = 16;
        let f = ScalarField::from_fn(grid(), |_, x| (2.0 * PI * (x[0] + x[1])).sin());
        let mag = derivative_magnitude(&[f.slice(0)], 3, n, 2);
        // every second partial is −4π² sin, four ordered pairs over axes {0,1}
        let want = ScalarField::from_fn(grid(), |_, x| {
            2.0 * 4.0 * PI * PI * (2.0 * PI * (x[0] + x[1])).sin().abs()
        });
        for (a, b) in mag.iter().zip(want.slice(0)) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
