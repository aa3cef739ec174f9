//! Sampled functions on `[0,1) × 𝕋^d` with spectral calculus and quadrature.
//!
//! Samples are stored time-major; inside a time slice the spatial axes are
//! row-major with the last axis fastest.

pub mod io;
pub mod norms;
pub mod spectral;

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{LabError, Result};
pub use norms::{lebesgue_norm, mixed_norm, Scope};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    dim: usize,
    n_space: usize,
    n_time: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n_space: usize, n_time: usize) -> Result<Self> {
        if dim < 3 {
            return Err(LabError::Grid(format!("dimension {dim} < 3")));
        }
        for (name, n) in [("n_space", n_space), ("n_time", n_time)] {
            if n < 4 || !n.is_power_of_two() {
                return Err(LabError::Grid(format!(
                    "{name} = {n} must be a power of two and at least 4"
                )));
            }
        }
        Ok(Self { dim, n_space, n_time })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    /// Number of spatial lattice points.
    pub fn space_len(&self) -> usize {
        self.n_space.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.n_time * self.space_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.n_time as f64
    }

    pub fn with_sizes(&self, n_space: usize, n_time: usize) -> Result<Self> {
        Self::new(self.dim, n_space, n_time)
    }
}

fn check_finite(samples: &[f64]) -> Result<()> {
    if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
        return Err(LabError::Invariant(format!("non-finite sample at index {pos}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RescaleAxes {
    Space,
    Time,
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    samples: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(LabError::Grid(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        check_finite(&samples)?;
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            samples: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            samples: vec![value; grid.len()],
        }
    }

    /// Samples `f(t, x)` on the lattice.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let n = grid.n_space;
        let mut samples = Vec::with_capacity(grid.len());
        let mut x = vec![0.0; grid.dim];
        for j in 0..grid.n_time {
            let t = grid.time(j);
            spectral::for_each_index(grid.dim, n, |_, idx| {
                for (xa, &ia) in x.iter_mut().zip(idx) {
                    *xa = ia as f64 / n as f64;
                }
                samples.push(f(t, &x));
            });
        }
        Self { grid, samples }
    }

    /// Time-independent field built from one spatial slice.
    pub fn from_space_slice(grid: GridSpec, slice: &[f64]) -> Result<Self> {
        if slice.len() != grid.space_len() {
            return Err(LabError::Grid("slice length mismatch".into()));
        }
        let mut samples = Vec::with_capacity(grid.len());
        for _ in 0..grid.n_time {
            samples.extend_from_slice(slice);
        }
        Self::new(grid, samples)
    }

    /// Separable field `c(t)·s(x)`.
    pub fn from_product(grid: GridSpec, time: &[f64], space: &[f64]) -> Result<Self> {
        if time.len() != grid.n_time || space.len() != grid.space_len() {
            return Err(LabError::Grid("factor length mismatch".into()));
        }
        let mut samples = Vec::with_capacity(grid.len());
        for &c in time {
            samples.extend(space.iter().map(|s| c * s));
        }
        Self::new(grid, samples)
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let s = self.grid.space_len();
        &self.samples[j * s..(j + 1) * s]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut [f64] {
        let s = self.grid.space_len();
        &mut self.samples[j * s..(j + 1) * s]
    }

    /// Builds a field slice by slice from `f(time_index)`.
    pub fn from_slices(grid: GridSpec, mut f: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let mut samples = Vec::with_capacity(grid.len());
        for j in 0..grid.n_time {
            let slice = f(j);
            if slice.len() != grid.space_len() {
                return Err(LabError::Grid("slice length mismatch".into()));
            }
            samples.extend(slice);
        }
        Self::new(grid, samples)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(self.grid, other.grid)?;
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        same_grid(self.grid, other.grid)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += b;
        }
        Ok(())
    }

    /// Multiplies slice `j` by `c[j]`.
    pub fn scale_in_time(&mut self, c: &[f64]) {
        for (j, &cj) in c.iter().enumerate() {
            self.slice_mut(j).iter_mut().for_each(|v| *v *= cj);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Spectral derivative; axis 0 is time, axes `1..=d` are space.
    pub fn derivative(&self, axis: usize) -> Result<Self> {
        let d = self.grid.dim;
        if axis > d {
            return Err(LabError::Axis { axis, dim: d });
        }
        if axis == 0 {
            return Ok(Self {
                grid: self.grid,
                samples: time_derivative(&self.samples, self.grid),
            });
        }
        self.map_slices(|s| spectral::axis_derivative(s, d, self.grid.n_space, axis - 1))
    }

    /// Replaces the field by its spectral time derivative without a second buffer.
    pub fn differentiate_in_time(&mut self) {
        let nt = self.grid.n_time;
        apply_time_symbol_in_place(&mut self.samples, self.grid, |i| {
            Complex64::new(0.0, 2.0 * PI * spectral::derivative_wavenumber(i, nt))
        });
    }

    /// Applies a spatial operator to every time slice.
    pub fn map_slices(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::from_slices(self.grid, |j| f(self.slice(j)))
    }

    /// Space-time lattice average.
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Spatial average at every time.
    pub fn space_means(&self) -> Vec<f64> {
        let s = self.grid.space_len() as f64;
        (0..self.grid.n_time)
            .map(|j| self.slice(j).iter().sum::<f64>() / s)
            .collect()
    }

    /// `x ↦ f(σx)` and/or `t ↦ f(σt)`; σ must divide the relevant grid size.
    pub fn rescale(&self, sigma: usize, axes: RescaleAxes) -> Result<Self> {
        let g = self.grid;
        let (s_space, s_time) = match axes {
            RescaleAxes::Space => (sigma, 1),
            RescaleAxes::Time => (1, sigma),
            RescaleAxes::Both => (sigma, sigma),
        };
        for (s, n) in [(s_space, g.n_space), (s_time, g.n_time)] {
            if s == 0 || n % s != 0 {
                return Err(LabError::Dilation { sigma: s, n });
            }
        }
        let space_map = dilation_map(g.dim, g.n_space, s_space);
        let mut samples = Vec::with_capacity(g.len());
        for j in 0..g.n_time {
            let src = self.slice((j * s_time) % g.n_time);
            samples.extend(space_map.iter().map(|&i| src[i]));
        }
        Ok(Self { grid: g, samples })
    }

    /// Removes the part of every slice that lies in the kernel of the
    /// discrete gradient (mean and all-Nyquist corner modes).
    pub fn gradient_kernel_part(&self) -> Result<Self> {
        let g = self.grid;
        self.map_slices(|s| spectral::gradient_kernel_part(s, g.dim, g.n_space))
    }

    /// Two-thirds-rule filter in space on every slice.
    pub fn dealias(&self) -> Result<Self> {
        let g = self.grid;
        self.map_slices(|s| spectral::dealias(s, g.dim, g.n_space))
    }

    /// Trigonometric interpolation onto a finer grid of the same dimension.
    pub fn resample(&self, target: GridSpec) -> Result<Self> {
        let g = self.grid;
        if target.dim != g.dim || target.n_space < g.n_space || target.n_time < g.n_time {
            return Err(LabError::Grid("resampling only refines grids".into()));
        }
        let mut shape = vec![g.n_time];
        shape.extend(std::iter::repeat(g.n_space).take(g.dim));
        let mut data = self.samples.clone();
        for axis in 0..=g.dim {
            let new_len = if axis == 0 { target.n_time } else { target.n_space };
            if new_len != shape[axis] {
                data = spectral::upsample_axis(&data, &shape, axis, new_len);
                shape[axis] = new_len;
            }
        }
        Self::new(target, data)
    }
}

/// Source index of each lattice point under `x ↦ σx mod 1`.
pub fn dilation_map(dim: usize, n: usize, sigma: usize) -> Vec<usize> {
    let mut map = Vec::with_capacity(n.pow(dim as u32));
    spectral::for_each_index(dim, n, |_, idx| {
        let mut flat = 0;
        for &i in idx {
            flat = flat * n + (i * sigma) % n;
        }
        map.push(flat);
    });
    map
}

fn same_grid(a: GridSpec, b: GridSpec) -> Result<()> {
    if a != b {
        return Err(LabError::GridMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Spectral ∂_t of a time-major space-time array.
pub fn time_derivative(data: &[f64], grid: GridSpec) -> Vec<f64> {
    let nt = grid.n_time;
    apply_time_symbol(data, grid, |i| {
        Complex64::new(0.0, 2.0 * PI * spectral::derivative_wavenumber(i, nt))
    })
}

/// Multiplies every time line by a symbol in temporal Fourier space.
pub fn apply_time_symbol(data: &[f64], grid: GridSpec, symbol: impl Fn(usize) -> Complex64) -> Vec<f64> {
    let mut out = data.to_vec();
    apply_time_symbol_in_place(&mut out, grid, symbol);
    out
}

/// [`apply_time_symbol`] overwriting its input.
pub fn apply_time_symbol_in_place(data: &mut [f64], grid: GridSpec, symbol: impl Fn(usize) -> Complex64) {
    let nt = grid.n_time;
    let s = grid.space_len();
    let (fwd, inv) = spectral::plans(nt);
    let table: Vec<Complex64> = (0..nt).map(|i| symbol(i) / nt as f64).collect();
    const CH: usize = 512;
    let mut buf = vec![Complex64::new(0.0, 0.0); CH.min(s) * nt];
    let mut c0 = 0;
    while c0 < s {
        let width = CH.min(s - c0);
        let buf = &mut buf[..width * nt];
        for j in 0..nt {
            for c in 0..width {
                buf[c * nt + j] = Complex64::new(data[j * s + c0 + c], 0.0);
            }
        }
        fwd.process(buf);
        for line in buf.chunks_mut(nt) {
            for (v, m) in line.iter_mut().zip(&table) {
                *v *= m;
            }
        }
        inv.process(buf);
        for j in 0..nt {
            for c in 0..width {
                data[j * s + c0 + c] = buf[c * nt + j].re;
            }
        }
        c0 += width;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| LabError::Grid("vector field needs components".into()))?
            .grid;
        if components.len() != first.dim {
            return Err(LabError::Grid(format!(
                "{} components for dimension {}",
                components.len(),
                first.dim
            )));
        }
        for c in &components {
            same_grid(first, c.grid)?;
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            components: (0..grid.dim).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.components[0].grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &ScalarField {
        &self.components[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut ScalarField {
        &mut self.components[k]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Self::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect::<Result<_>>()?,
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Self::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.sub(b))
                .collect::<Result<_>>()?,
        )
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            components: self.components.iter().map(|f| f.scale(c)).collect(),
        }
    }

    /// `s·v` with a scalar field `s`.
    pub fn scalar_mul(&self, s: &ScalarField) -> Result<Self> {
        Self::new(self.components.iter().map(|f| f.mul(s)).collect::<Result<_>>()?)
    }

    /// Spatial divergence at every time.
    pub fn divergence(&self) -> Result<ScalarField> {
        let g = self.grid();
        ScalarField::from_slices(g, |j| {
            let slices: Vec<&[f64]> = self.components.iter().map(|c| c.slice(j)).collect();
            divergence_slice(&slices, g.dim, g.n_space)
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn resample(&self, target: GridSpec) -> Result<Self> {
        Self::new(
            self.components
                .iter()
                .map(|c| c.resample(target))
                .collect::<Result<_>>()?,
        )
    }
}

/// Σ_j ∂_j v_j for one spatial slice.
pub fn divergence_slice(components: &[&[f64]], dim: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; components[0].len()];
    for (axis, c) in components.iter().enumerate() {
        for (o, d) in out.iter_mut().zip(spectral::axis_derivative(c, dim, n, axis)) {
            *o += d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(3, 8, 8).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(GridSpec::new(2, 8, 8).is_err());
        assert!(GridSpec::new(3, 6, 8).is_err());
        assert!(GridSpec::new(3, 8, 2).is_err());
    }

    #[test]
    fn derivative_in_time_and_space() {
        let g = grid();
        let f = ScalarField::from_fn(g, |t, x| (4.0 * PI * t).sin() + (2.0 * PI * x[0]).sin());
        let dt = f.derivative(0).unwrap();
        let dx = f.derivative(1).unwrap();
        let want_t = ScalarField::from_fn(g, |t, _| 4.0 * PI * (4.0 * PI * t).cos());
        let want_x = ScalarField::from_fn(g, |_, x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        assert!(dt.sub(&want_t).unwrap().max_abs() < 1e-11);
        assert!(dx.sub(&want_x).unwrap().max_abs() < 1e-11);
        assert!(f.derivative(4).is_err());
    }

    #[test]
    fn constant_has_zero_derivative() {
        let f = ScalarField::constant(grid(), 2.5);
        for axis in 0..=3 {
            assert!(f.derivative(axis).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn rescale_by_two_doubles_frequency() {
        let g = grid();
        let f = ScalarField::from_fn(g, |_, x| (2.0 * PI * x[0]).sin());
        let r = f.rescale(2, RescaleAxes::Space).unwrap();
        let want = ScalarField::from_fn(g, |_, x| (4.0 * PI * x[0]).sin());
        assert!(r.sub(&want).unwrap().max_abs() < 1e-13);
        assert_eq!(f.rescale(1, RescaleAxes::Both).unwrap(), f);
        assert!(f.rescale(3, RescaleAxes::Space).is_err());
    }

    #[test]
    fn resample_is_exact_for_band_limited_data() {
        let g = grid();
        let f = ScalarField::from_fn(g, |t, x| (2.0 * PI * t).cos() * (2.0 * PI * (x[1] + 2.0 * x[2])).sin());
        let fine = GridSpec::new(3, 16, 16).unwrap();
        let r = f.resample(fine).unwrap();
        let want = ScalarField::from_fn(fine, |t, x| {
            (2.0 * PI * t).cos() * (2.0 * PI * (x[1] + 2.0 * x[2])).sin()
        });
        assert!(r.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn mean_of_squared_sine_is_half() {
        let f = ScalarField::from_fn(grid(), |_, x| (2.0 * PI * x[0]).sin().powi(2));
        assert!((f.mean() - 0.5).abs() < 1e-14);
        let s = ScalarField::from_fn(grid(), |_, x| (2.0 * PI * x[0]).sin());
        assert!(s.mean().abs() < 1e-14);
    }
}
