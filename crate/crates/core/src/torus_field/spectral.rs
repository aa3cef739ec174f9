//! FFT kernels on flat row-major lattices `[n; dim]` (last axis fastest).
//!
//! Everything here works on raw slices so the same code serves space slices
//! of a space-time field, Mikado cross-sections and time lines.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

type Plan = Arc<dyn Fft<f64>>;

pub(crate) fn plans(n: usize) -> (Plan, Plan) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Plan, Plan)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

/// Signed integer frequency of FFT bin `i` on an `n`-point axis.
/// The Nyquist bin reports `+n/2`.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Frequency used by the derivative symbol: the Nyquist bin is dropped
/// because its derivative has no real representative.
pub fn derivative_wavenumber(i: usize, n: usize) -> f64 {
    if n % 2 == 0 && i == n / 2 {
        0.0
    } else {
        wavenumber(i, n) as f64
    }
}

const CHUNK: usize = 64;

/// Applies `op` to every line along `axis`. `op` receives a buffer holding
/// `lines` consecutive lines of length `n`.
fn for_each_line_batch(
    data: &mut [Complex64],
    dim: usize,
    n: usize,
    axis: usize,
    mut op: impl FnMut(&mut [Complex64]),
) {
    let stride = n.pow((dim - 1 - axis) as u32);
    if stride == 1 {
        op(data);
        return;
    }
    let block = n * stride;
    let mut buf = vec![Complex64::new(0.0, 0.0); CHUNK.min(stride) * n];
    for blk in data.chunks_mut(block) {
        let mut c0 = 0;
        while c0 < stride {
            let width = CHUNK.min(stride - c0);
            let buf = &mut buf[..width * n];
            for r in 0..n {
                let row = &blk[r * stride + c0..r * stride + c0 + width];
                for (c, v) in row.iter().enumerate() {
                    buf[c * n + r] = *v;
                }
            }
            op(buf);
            for r in 0..n {
                let row = &mut blk[r * stride + c0..r * stride + c0 + width];
                for (c, v) in row.iter_mut().enumerate() {
                    *v = buf[c * n + r];
                }
            }
            c0 += width;
        }
    }
}

pub fn to_complex(data: &[f64]) -> Vec<Complex64> {
    data.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Unnormalized forward transform over all axes, in place.
pub fn forward_nd(data: &mut [Complex64], dim: usize, n: usize) {
    let (fwd, _) = plans(n);
    for axis in 0..dim {
        for_each_line_batch(data, dim, n, axis, |buf| fwd.process(buf));
    }
}

/// Inverse transform over all axes including the `1/N` normalization.
pub fn inverse_nd(data: &mut [Complex64], dim: usize, n: usize) {
    let (_, inv) = plans(n);
    for axis in 0..dim {
        for_each_line_batch(data, dim, n, axis, |buf| inv.process(buf));
    }
    let scale = 1.0 / data.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

pub fn real_part(data: &[Complex64]) -> Vec<f64> {
    data.iter().map(|c| c.re).collect()
}

/// Multiplies each line along `axis` by a per-bin symbol in Fourier space.
pub fn apply_axis_symbol(
    data: &[f64],
    dim: usize,
    n: usize,
    axis: usize,
    symbol: impl Fn(usize) -> Complex64,
) -> Vec<f64> {
    let (fwd, inv) = plans(n);
    let table: Vec<Complex64> = (0..n).map(|i| symbol(i) / n as f64).collect();
    let mut work = to_complex(data);
    for_each_line_batch(&mut work, dim, n, axis, |buf| {
        fwd.process(buf);
        for line in buf.chunks_mut(n) {
            for (v, s) in line.iter_mut().zip(&table) {
                *v *= s;
            }
        }
        inv.process(buf);
    });
    real_part(&work)
}

/// Spectral derivative along one axis of a periodic unit-length lattice.
pub fn axis_derivative(data: &[f64], dim: usize, n: usize, axis: usize) -> Vec<f64> {
    apply_axis_symbol(data, dim, n, axis, |i| {
        Complex64::new(0.0, 2.0 * PI * derivative_wavenumber(i, n))
    })
}

/// Iterates over all multi-indices of `[n; dim]` in storage order, handing the
/// flat index and the current multi-index to `f`.
pub fn for_each_index(dim: usize, n: usize, mut f: impl FnMut(usize, &[usize])) {
    let mut idx = vec![0usize; dim];
    let total = n.pow(dim as u32);
    for flat in 0..total {
        f(flat, &idx);
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Antidivergence `Δ⁻¹∇` with the discrete symbols used by [`axis_derivative`]:
/// component `j` gets `D_j / Σ D_l²` on every mode where the denominator is
/// nonzero and zero elsewhere, so `div ℛ f = f − K f` holds exactly.
pub fn antidivergence(data: &[f64], dim: usize, n: usize) -> Vec<Vec<f64>> {
    let mut spec = to_complex(data);
    forward_nd(&mut spec, dim, n);
    let k: Vec<f64> = (0..n).map(|i| derivative_wavenumber(i, n)).collect();
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut comp = vec![Complex64::new(0.0, 0.0); spec.len()];
        for_each_index(dim, n, |flat, idx| {
            let k2: f64 = idx.iter().map(|&i| k[i] * k[i]).sum();
            if k2 > 0.0 {
                // (2πi ξ_j) / (−4π² |ξ|²)
                let factor = -k[idx[j]] / (2.0 * PI * k2);
                comp[flat] = spec[flat] * Complex64::new(0.0, factor);
            }
        });
        inverse_nd(&mut comp, dim, n);
        out.push(real_part(&comp));
    }
    out
}

/// Projection onto the kernel of the discrete gradient: the mean plus the
/// modes whose every frequency is 0 or the Nyquist frequency.
pub fn gradient_kernel_part(data: &[f64], dim: usize, n: usize) -> Vec<f64> {
    let corners = 1usize << dim;
    let mut coeff = vec![0.0; corners];
    let sign = |m: usize, idx: &[usize]| -> f64 {
        let parity: usize = (0..dim).map(|a| ((m >> a) & 1) * (idx[a] & 1)).sum();
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    for_each_index(dim, n, |flat, idx| {
        for (m, c) in coeff.iter_mut().enumerate() {
            *c += sign(m, idx) * data[flat];
        }
    });
    let total = data.len() as f64;
    for c in coeff.iter_mut() {
        *c /= total;
    }
    let mut out = vec![0.0; data.len()];
    for_each_index(dim, n, |flat, idx| {
        out[flat] = coeff.iter().enumerate().map(|(m, c)| sign(m, idx) * c).sum();
    });
    out
}

/// Two-thirds rule: zero every mode with some `|ξ_j| > n/3`.
pub fn dealias(data: &[f64], dim: usize, n: usize) -> Vec<f64> {
    let mut spec = to_complex(data);
    forward_nd(&mut spec, dim, n);
    let cut = (n / 3) as i64;
    for_each_index(dim, n, |flat, idx| {
        if idx.iter().any(|&i| wavenumber(i, n).abs() > cut) {
            spec[flat] = Complex64::new(0.0, 0.0);
        }
    });
    inverse_nd(&mut spec, dim, n);
    real_part(&spec)
}

/// Trigonometric interpolation of lines along one axis of a general
/// row-major array `shape` onto `new_len` points (`new_len ≥ shape[axis]`).
pub fn upsample_axis(data: &[f64], shape: &[usize], axis: usize, new_len: usize) -> Vec<f64> {
    let n = shape[axis];
    assert!(new_len >= n, "upsampling only");
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let (fwd, _) = plans(n);
    let (_, inv) = plans(new_len);
    let mut out = vec![0.0; outer * new_len * inner];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut big = vec![Complex64::new(0.0, 0.0); new_len];
    for o in 0..outer {
        for c in 0..inner {
            for r in 0..n {
                line[r] = Complex64::new(data[(o * n + r) * inner + c], 0.0);
            }
            fwd.process(&mut line);
            big.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for i in 0..n {
                let kf = wavenumber(i, n);
                if n % 2 == 0 && i == n / 2 && new_len > n {
                    // split the Nyquist bin symmetrically
                    big[n / 2] += line[i] * 0.5;
                    big[new_len - n / 2] += line[i] * 0.5;
                } else {
                    let j = if kf >= 0 {
                        kf as usize
                    } else {
                        (new_len as i64 + kf) as usize
                    };
                    big[j] += line[i];
                }
            }
            inv.process(&mut big);
            for r in 0..new_len {
                out[(o * new_len + r) * inner + c] = big[r].re / n as f64;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavenumbers_follow_fft_order() {
        let w: Vec<i64> = (0..8).map(|i| wavenumber(i, 8)).collect();
        assert_eq!(w, vec![0, 1, 2, 3, 4, -3, -2, -1]);
        assert_eq!(derivative_wavenumber(4, 8), 0.0);
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let n = 8;
        let data: Vec<f64> = (0..n * n * n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut spec = to_complex(&data);
        forward_nd(&mut spec, 3, n);
        inverse_nd(&mut spec, 3, n);
        for (a, b) in data.iter().zip(real_part(&spec)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_middle_axis_mode() {
        let n = 16;
        let mut data = vec![0.0; n * n * n];
        for_each_index(3, n, |flat, idx| {
            data[flat] = (2.0 * PI * 3.0 * idx[1] as f64 / n as f64).sin();
        });
        let d = axis_derivative(&data, 3, n, 1);
        for_each_index(3, n, |flat, idx| {
            let x = idx[1] as f64 / n as f64;
            let want = 6.0 * PI * (6.0 * PI * x).cos();
            assert!((d[flat] - want).abs() < 1e-10);
        });
    }

    #[test]
    fn kernel_part_catches_checkerboard() {
        let n = 8;
        let mut data = vec![0.0; n * n];
        for_each_index(2, n, |flat, idx| {
            data[flat] = 2.0 + if (idx[0] + idx[1]) % 2 == 0 { 1.0 } else { -1.0 };
        });
        let k = gradient_kernel_part(&data, 2, n);
        for (a, b) in data.iter().zip(&k) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(axis_derivative(&data, 2, n, 0).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn upsample_reproduces_low_modes() {
        let n = 8;
        let data: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let up = upsample_axis(&data, &[n], 0, 32);
        for (i, v) in up.iter().enumerate() {
            let want = (2.0 * PI * i as f64 / 32.0).cos();
            assert!((v - want).abs() < 1e-12);
        }
    }
}
