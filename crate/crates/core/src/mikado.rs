//! Stationary Mikado building blocks: densities `Φ_k`, divergence-free
//! fields `W_k = w_k e_k` and potentials `Ω_k` with `div Ω_k = Φ_k`.
//!
//! A block does not depend on `x_k`, so it is stored as a cross-section over
//! the transverse axes (all axes except `k`, in increasing order) and
//! materialized on a full lattice only on request. Norms and transverse
//! derivatives of the section equal those of the full field.

use crate::error::{LabError, Result};
use crate::torus_field::norms::{derivative_magnitude, lattice_norm};
use crate::torus_field::spectral;
use crate::torus_field::{GridSpec, ScalarField, VectorField};

/// Half-width of the profile support in centered coordinates `y − 1/2`.
pub const SUPPORT_HALF_WIDTH: f64 = 0.375;

/// `exp(−1/(1/4 − u²))` on `|u| < 1/2`, the standard bump in a form that is
/// exactly even in `u`.
fn bump(u: f64) -> f64 {
    let q = 0.25 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Derivative of [`bump`], exactly odd in `u`.
fn bump_slope(u: f64) -> f64 {
    let q = 0.25 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp() * (-2.0 * u) / (q * q)
    }
}

/// The compactly supported pair `Ω = (β, 0, …, 0)`, `φ = ∂₁β` on `ℝ^{d−1}`,
/// with `β` a tensor bump supported in `(1/8, 7/8)^{d−1}` and `∫φ² = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfilePair {
    dim: usize,
    scale: f64,
}

impl ProfilePair {
    /// Dimension `d` of the torus the profile serves (the profile lives in `d − 1`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    // y ∈ (1/8, 7/8) maps to u ∈ (−1/2, 1/2): u = (y − 1/2)/(3/4)
    fn u(z: f64) -> f64 {
        z / 0.75
    }

    /// `β` at centered coordinates `z = y − 1/2`.
    pub fn potential_centered(&self, z: &[f64]) -> f64 {
        self.scale * z.iter().map(|&zi| bump(Self::u(zi))).product::<f64>()
    }

    /// `φ = ∂₁β` at centered coordinates.
    pub fn density_centered(&self, z: &[f64]) -> f64 {
        let mut v = self.scale * bump_slope(Self::u(z[0])) / 0.75;
        for &zi in &z[1..] {
            v *= bump(Self::u(zi));
        }
        v
    }

    /// `β(y)` for `y ∈ ℝ^{d−1}`.
    pub fn potential(&self, y: &[f64]) -> f64 {
        let z: Vec<f64> = y.iter().map(|v| v - 0.5).collect();
        self.potential_centered(&z)
    }

    /// `φ(y)` for `y ∈ ℝ^{d−1}`.
    pub fn density(&self, y: &[f64]) -> f64 {
        let z: Vec<f64> = y.iter().map(|v| v - 0.5).collect();
        self.density_centered(&z)
    }
}

/// Midpoint rule over the support; the integrands are C^∞ and vanish to all
/// orders at the ends, so this converges faster than any power.
fn support_integral(f: impl Fn(f64) -> f64) -> f64 {
    const M: usize = 200_000;
    let h = 1.0 / M as f64;
    (0..M).map(|i| f(-0.5 + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

pub fn default_profile(dim: usize) -> Result<ProfilePair> {
    if dim < 3 {
        return Err(LabError::Parameter(format!("Mikado profiles need d ≥ 3, got {dim}")));
    }
    // in y-coordinates dy = 0.75 du and ∂_y = ∂_u / 0.75
    let slope2 = support_integral(|u| bump_slope(u).powi(2)) * 0.75 / (0.75 * 0.75);
    let flat2 = support_integral(|u| bump(u).powi(2)) * 0.75;
    let norm2 = slope2 * flat2.powi(dim as i32 - 2);
    Ok(ProfilePair {
        dim,
        scale: 1.0 / norm2.sqrt(),
    })
}

/// Periodic distance on the unit circle.
fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Distance on `𝕋^d` between the lines `p_a + ℝ e_a` and `p_b + ℝ e_b`.
pub fn line_distance(pa: &[f64], a: usize, pb: &[f64], b: usize) -> f64 {
    (0..pa.len())
        .filter(|&j| j != a && j != b)
        .map(|j| circle_distance(pa[j], pb[j]).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    /// `points[k]` is the point the line in direction `e_k` passes through.
    pub points: Vec<Vec<f64>>,
    pub eps0: f64,
}

impl Placement {
    pub fn min_line_distance(&self) -> f64 {
        let d = self.points.len();
        let mut best = f64::INFINITY;
        for a in 0..d {
            for b in a + 1..d {
                best = best.min(line_distance(&self.points[a], a, &self.points[b], b));
            }
        }
        best
    }
}

pub fn placement(dim: usize) -> Result<Placement> {
    if dim < 3 {
        return Err(LabError::Parameter(format!("placement needs d ≥ 3, got {dim}")));
    }
    let eps0 = 0.25;
    let points = if dim == 3 {
        vec![vec![0.5, 0.25, 0.25], vec![0.5, 0.5, 0.5], vec![0.75, 0.75, 0.5]]
    } else {
        search_placement(dim, eps0)
            .ok_or_else(|| LabError::Invariant(format!("no staggered placement found for d = {dim}")))?
    };
    let out = Placement { points, eps0 };
    if out.min_line_distance() < eps0 - 1e-12 {
        return Err(LabError::Invariant("placement violates the line separation".into()));
    }
    Ok(out)
}

/// Depth-first search over the staggered lattice `{1/4, 1/2, 3/4}^d`.
fn search_placement(dim: usize, eps0: f64) -> Option<Vec<Vec<f64>>> {
    const LEVELS: [f64; 3] = [0.25, 0.5, 0.75];
    let candidates: Vec<Vec<f64>> = (0..3usize.pow(dim as u32))
        .map(|mut c| {
            (0..dim)
                .map(|_| {
                    let v = LEVELS[c % 3];
                    c /= 3;
                    v
                })
                .collect()
        })
        .collect();
    fn extend(chosen: &mut Vec<Vec<f64>>, candidates: &[Vec<f64>], dim: usize, eps0: f64) -> bool {
        let k = chosen.len();
        if k == dim {
            return true;
        }
        for c in candidates {
            let ok = chosen
                .iter()
                .enumerate()
                .all(|(j, p)| p != c && line_distance(p, j, c, k) >= eps0 - 1e-12);
            if ok {
                chosen.push(c.clone());
                if extend(chosen, candidates, dim, eps0) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let mut chosen = Vec::new();
    extend(&mut chosen, &candidates, dim, eps0).then_some(chosen)
}

/// Which of the three block ingredients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockPart {
    Density,
    Field,
    Potential,
}

impl BlockPart {
    pub fn name(&self) -> &'static str {
        match self {
            BlockPart::Density => "density",
            BlockPart::Field => "field",
            BlockPart::Potential => "potential",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MikadoBlock {
    direction: usize,
    mu: f64,
    p: f64,
    p_prime: f64,
    dim: usize,
    n: usize,
    placement: Vec<f64>,
    eps0: f64,
    density: Vec<f64>,
    field: Vec<f64>,
    potential: Vec<f64>,
    renormalization: f64,
}

/// Hölder dual exponent.
pub fn dual_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Builds the block in direction `k` (`0..d`) on an `n`-point section lattice.
///
/// Values are sampled from the compact profile at the lattice offsets from
/// the placement point, which is a lattice point, so the sampled density is
/// exactly odd about it and sums to zero. The three parts are then rescaled
/// by one common factor making the lattice mean of `Φ_k w_k` exactly one.
pub fn build_block(
    k: usize,
    mu: f64,
    p: f64,
    n: usize,
    profile: &ProfilePair,
    placement: &Placement,
) -> Result<MikadoBlock> {
    let dim = profile.dim;
    if k >= dim {
        return Err(LabError::Axis { axis: k, dim });
    }
    if !(p > 1.0) {
        return Err(LabError::Parameter(format!("block exponent p = {p} must exceed 1")));
    }
    let min_mu = 2.0 / placement.eps0;
    if mu < min_mu {
        return Err(LabError::MuTooSmall { mu, min: min_mu });
    }
    if n < 4 || n % 4 != 0 || (n as f64) < 4.0 * mu {
        return Err(LabError::Resolution(format!(
            "block with mu = {mu} needs a section lattice of at least {} points per axis, got {n}",
            (4.0 * mu).ceil()
        )));
    }
    let p_prime = dual_exponent(p);
    let axes: Vec<usize> = (0..dim).filter(|&a| a != k).collect();
    let center: Vec<i64> = axes
        .iter()
        .map(|&a| {
            let c = placement.points[k][a] * n as f64;
            if (c - c.round()).abs() > 1e-9 {
                Err(LabError::Resolution(format!("placement not on the {n}-point lattice")))
            } else {
                Ok(c.round() as i64)
            }
        })
        .collect::<Result<_>>()?;
    let m = dim - 1;
    let len = n.pow(m as u32);
    let amp_density = mu.powf(m as f64 / p);
    let amp_field = if p_prime.is_infinite() {
        1.0
    } else {
        mu.powf(m as f64 / p_prime)
    };
    let amp_potential = mu.powf(-1.0 + m as f64 / p);
    let mut density = vec![0.0; len];
    let mut field = vec![0.0; len];
    let mut potential = vec![0.0; len];
    let mut z = vec![0.0; m];
    spectral::for_each_index(m, n, |flat, idx| {
        let mut inside = true;
        for j in 0..m {
            // signed periodic lattice offset in [−n/2, n/2)
            let off = (idx[j] as i64 - center[j]).rem_euclid(n as i64);
            let off = if off >= (n as i64) / 2 { off - n as i64 } else { off };
            z[j] = mu * off as f64 / n as f64;
            inside &= z[j].abs() < SUPPORT_HALF_WIDTH;
        }
        if inside {
            let phi = profile.density_centered(&z);
            density[flat] = amp_density * phi;
            field[flat] = amp_field * phi;
            potential[flat] = amp_potential * profile.potential_centered(&z);
        }
    });
    let pairing = density.iter().zip(&field).map(|(a, b)| a * b).sum::<f64>() / len as f64;
    if !(pairing > 0.0) {
        return Err(LabError::Resolution(format!(
            "section lattice n = {n} does not resolve the profile at mu = {mu}"
        )));
    }
    let c = 1.0 / pairing.sqrt();
    for v in density.iter_mut().chain(field.iter_mut()).chain(potential.iter_mut()) {
        *v *= c;
    }
    Ok(MikadoBlock {
        direction: k,
        mu,
        p,
        p_prime,
        dim,
        n,
        placement: placement.points[k].clone(),
        eps0: placement.eps0,
        density,
        field,
        potential,
        renormalization: c,
    })
}

impl MikadoBlock {
    pub fn direction(&self) -> usize {
        self.direction
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.p_prime)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis of the section lattice.
    pub fn section_size(&self) -> usize {
        self.n
    }

    pub fn placement(&self) -> &[f64] {
        &self.placement
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Factor applied after sampling to make `mean(Φ_k w_k) = 1` exactly.
    pub fn renormalization(&self) -> f64 {
        self.renormalization
    }

    /// Axes the section runs over.
    pub fn transverse_axes(&self) -> Vec<usize> {
        (0..self.dim).filter(|&a| a != self.direction).collect()
    }

    /// Axis carrying the only nonzero component of `Ω_k`.
    pub fn potential_axis(&self) -> usize {
        self.transverse_axes()[0]
    }

    pub fn section(&self, part: BlockPart) -> &[f64] {
        match part {
            BlockPart::Density => &self.density,
            BlockPart::Field => &self.field,
            BlockPart::Potential => &self.potential,
        }
    }

    /// Section of `Φ_k w_k − mean`, the oscillating part of the pairing.
    pub fn pairing_fluctuation(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.density.iter().zip(&self.field).map(|(a, b)| a * b).collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter_mut().for_each(|v| *v -= mean);
        s
    }

    /// Spatial slice of `X(σx)` on an `n_space`-point lattice, where the
    /// section has `n_space / σ` points.
    pub fn dilated_slice(&self, section: &[f64], n_space: usize, sigma: usize) -> Result<Vec<f64>> {
        if sigma == 0 || n_space != sigma * self.n {
            return Err(LabError::Dilation { sigma, n: n_space });
        }
        let axes = self.transverse_axes();
        let mut out = vec![0.0; n_space.pow(self.dim as u32)];
        spectral::for_each_index(self.dim, n_space, |flat, idx| {
            let mut s = 0;
            for &a in &axes {
                s = s * self.n + idx[a] % self.n;
            }
            out[flat] = section[s];
        });
        Ok(out)
    }

    /// Time-independent full fields `(Φ_k(σ·), W_k(σ·), Ω_k(σ·))` on `grid`.
    pub fn to_fields(&self, grid: GridSpec, sigma: usize) -> Result<(ScalarField, VectorField, VectorField)> {
        let n = grid.n_space();
        let density = ScalarField::from_space_slice(grid, &self.dilated_slice(&self.density, n, sigma)?)?;
        let field_slice = self.dilated_slice(&self.field, n, sigma)?;
        let pot_slice = self.dilated_slice(&self.potential, n, sigma)?;
        let mut field = VectorField::zeros(grid);
        *field.component_mut(self.direction) = ScalarField::from_space_slice(grid, &field_slice)?;
        let mut potential = VectorField::zeros(grid);
        *potential.component_mut(self.potential_axis()) = ScalarField::from_space_slice(grid, &pot_slice)?;
        Ok((density, field, potential))
    }

    /// `‖∇^m X‖_{L^r(𝕋^d)}` of one block ingredient.
    pub fn norm(&self, part: BlockPart, r: f64, m: usize) -> f64 {
        let mag = derivative_magnitude(&[self.section(part)], self.dim - 1, self.n, m);
        lattice_norm(&mag, r)
    }

    /// Measured block identities.
    pub fn identities(&self) -> BlockIdentities {
        let m = self.dim - 1;
        let len = self.density.len() as f64;
        // ∂ along the first transverse axis, which is section axis 0
        let div_potential = spectral::axis_derivative(&self.potential, m, self.n, 0);
        let scale = lattice_norm(&self.density, f64::INFINITY).max(f64::MIN_POSITIVE);
        let potential_defect = div_potential
            .iter()
            .zip(&self.density)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
            / scale;
        BlockIdentities {
            density_mean: self.density.iter().sum::<f64>() / len,
            field_mean: self.field.iter().sum::<f64>() / len,
            pairing: self.density.iter().zip(&self.field).map(|(a, b)| a * b).sum::<f64>() / len,
            potential_defect,
        }
    }
}

/// Lattice measurements of the block identities. The field depends only on
/// the transverse coordinates and points along `e_k`, so `div W_k` and
/// `W_k·∇Φ_k` are identically zero on the lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockIdentities {
    pub density_mean: f64,
    pub field_mean: f64,
    /// Lattice mean of `Φ_k w_k` (the `k`-th entry of `∫Φ_k W_k`).
    pub pairing: f64,
    /// `max |∂Ω_k − Φ_k| / max |Φ_k|`.
    pub potential_defect: f64,
}

/// Builds all `d` blocks with a shared profile and placement.
pub fn build_blocks(dim: usize, mu: f64, p: f64, n: usize) -> Result<Vec<MikadoBlock>> {
    let profile = default_profile(dim)?;
    let place = placement(dim)?;
    (0..dim).map(|k| build_block(k, mu, p, n, &profile, &place)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockNormRow {
    pub part: BlockPart,
    pub r: f64,
    pub m: usize,
    pub value: f64,
}

pub fn block_norm_table(block: &MikadoBlock, r_list: &[f64], m_list: &[usize]) -> Vec<BlockNormRow> {
    let mut rows = Vec::new();
    for part in [BlockPart::Density, BlockPart::Field, BlockPart::Potential] {
        for &m in m_list {
            let mag = derivative_magnitude(&[block.section(part)], block.dim - 1, block.n, m);
            for &r in r_list {
                rows.push(BlockNormRow {
                    part,
                    r,
                    m,
                    value: lattice_norm(&mag, r),
                });
            }
        }
    }
    rows
}

/// Predicted exponent of `μ` in `‖∇^m X‖_{L^r}`.
pub fn predicted_slope(part: BlockPart, dim: usize, p: f64, r: f64, m: usize) -> f64 {
    let s = (dim - 1) as f64;
    let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
    let inv_pp = 1.0 - 1.0 / p;
    m as f64
        + match part {
            BlockPart::Density => s / p - s * inv_r,
            BlockPart::Field => s * inv_pp - s * inv_r,
            BlockPart::Potential => -1.0 + s / p - s * inv_r,
        }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_is_normalized_and_zero_mean() {
        let prof = default_profile(3).unwrap();
        // fine tensor quadrature of φ² and φ on (0,1)²
        let n = 800;
        let h = 1.0 / n as f64;
        let (mut s2, mut s1) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let y = [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h];
                let v = prof.density(&y);
                s2 += v * v * h * h;
                s1 += v * h * h;
            }
        }
        assert!((s2 - 1.0).abs() < 1e-8, "∫φ² = {s2}");
        assert!(s1.abs() < 1e-10);
        assert_eq!(prof.density(&[0.1, 0.5]), 0.0);
        assert_eq!(prof.potential(&[0.5, 0.875]), 0.0);
        assert!(default_profile(2).is_err());
    }

    #[test]
    fn placement_d3_matches_reference() {
        let p = placement(3).unwrap();
        assert_eq!(p.eps0, 0.25);
        assert!((p.min_line_distance() - 0.25).abs() < 1e-15);
        let d12 = line_distance(&p.points[0], 0, &p.points[1], 1);
        let d13 = line_distance(&p.points[0], 0, &p.points[2], 2);
        let d23 = line_distance(&p.points[1], 1, &p.points[2], 2);
        assert_eq!((d12, d13, d23), (0.25, 0.5, 0.25));
    }

    #[test]
    fn placement_higher_dimensions() {
        for d in 4..=6 {
            let p = placement(d).unwrap();
            assert!(p.min_line_distance() >= 0.25 - 1e-12);
            for q in &p.points {
                assert!(q.iter().all(|&c| (0.25..=0.75).contains(&c)));
            }
        }
    }

    #[test]
    fn block_identities_hold() {
        let blocks = build_blocks(3, 8.0, 2.0, 64).unwrap();
        for b in &blocks {
            let id = b.identities();
            assert!(id.density_mean.abs() < 1e-12);
            assert!(id.field_mean.abs() < 1e-12);
            assert!((id.pairing - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_mu_and_coarse_sections() {
        let prof = default_profile(3).unwrap();
        let place = placement(3).unwrap();
        assert!(matches!(
            build_block(0, 4.0, 2.0, 64, &prof, &place),
            Err(LabError::MuTooSmall { .. })
        ));
        assert!(matches!(
            build_block(0, 32.0, 2.0, 64, &prof, &place),
            Err(LabError::Resolution(_))
        ));
    }
}
