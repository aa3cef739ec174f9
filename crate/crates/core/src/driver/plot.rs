//! Raster output: heatmaps of field sections and log-log line plots, written
//! as binary PPM and PNG.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{LabError, Result};
use crate::torus_field::ScalarField;

/// An RGB image, row-major from the top-left corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for s in 0..=steps {
            let x = x0 + (x1 - x0) * s / steps;
            let y = y0 + (y1 - y0) * s / steps;
            self.put(x, y, c);
        }
    }

    fn bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| LabError::Format(e.to_string()))?;
        w.write_image_data(&self.bytes())
            .map_err(|e| LabError::Format(e.to_string()))?;
        Ok(())
    }

    /// Writes `<stem>.ppm` and `<stem>.png`.
    pub fn write_both(&self, dir: &Path, stem: &str) -> Result<()> {
        self.write_ppm(&dir.join(format!("{stem}.ppm")))?;
        self.write_png(&dir.join(format!("{stem}.png")))
    }
}

/// Blue for negative, white for zero, red for positive.
fn diverging(v: f64) -> [u8; 3] {
    let v = v.clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x)).round() as u8;
    if v >= 0.0 {
        [255, fade(v), fade(v)]
    } else {
        [fade(-v), fade(-v), 255]
    }
}

/// Section `x_2 = … = x_{d−1} = 0` of the slice at time index `j`, one
/// pixel block of `scale × scale` per lattice point, symmetric colour range.
pub fn heatmap(field: &ScalarField, j: usize, scale: usize) -> Result<Image> {
    let g = field.grid();
    if j >= g.n_time() {
        return Err(LabError::Parameter(format!("time index {j} out of range")));
    }
    let n = g.n_space();
    let stride = n.pow(g.dim() as u32 - 2);
    let slice = field.slice(j);
    let at = |a: usize, b: usize| slice[(a * n + b) * stride];
    let max = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .fold(0.0f64, |m, (a, b)| m.max(at(a, b).abs()));
    let norm = if max > 0.0 { max } else { 1.0 };
    let scale = scale.max(1);
    let mut img = Image::new(n * scale, n * scale, [255, 255, 255]);
    for a in 0..n {
        for b in 0..n {
            let c = diverging(at(a, b) / norm);
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put((b * scale + dx) as i64, (a * scale + dy) as i64, c);
                }
            }
        }
    }
    Ok(img)
}

const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

/// Log-log plot of positive `(x, y)` series; decades are marked by light
/// grid lines. Non-positive points are skipped.
pub fn loglog(series: &[Vec<(f64, f64)>], width: usize, height: usize) -> Image {
    let mut img = Image::new(width, height, [255, 255, 255]);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flatten()
        .copied()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    let margin = 40i64;
    let (w, h) = (width as i64, height as i64);
    let frame = [40, 40, 40];
    img.line((margin, margin), (margin, h - margin), frame);
    img.line((margin, h - margin), (w - margin, h - margin), frame);
    if pts.is_empty() {
        return img;
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min).floor();
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil();
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let (x0, x1) = range(&lx);
    let (y0, y1) = range(&ly);
    let px = |x: f64| margin + ((x.log10() - x0) / (x1 - x0) * (w - 2 * margin) as f64).round() as i64;
    let py = |y: f64| h - margin - ((y.log10() - y0) / (y1 - y0) * (h - 2 * margin) as f64).round() as i64;
    let light = [225, 225, 225];
    for e in x0 as i64..=x1 as i64 {
        let x = px(10f64.powi(e as i32));
        img.line((x, margin), (x, h - margin - 1), light);
    }
    for e in y0 as i64..=y1 as i64 {
        let y = py(10f64.powi(e as i32));
        img.line((margin + 1, y), (w - margin, y), light);
    }
    for (i, s) in series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let good: Vec<(i64, i64)> = s
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| (px(x), py(y)))
            .collect();
        for win in good.windows(2) {
            img.line(win[0], win[1], c);
        }
        for &(x, y) in &good {
            for d in -2..=2 {
                img.put(x + d, y, c);
                img.put(x, y + d, c);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_field::GridSpec;

    #[test]
    fn writes_ppm_and_png() {
        let g = GridSpec::new(3, 8, 4).unwrap();
        let f = ScalarField::from_fn(g, |_, x| x[0] - 0.5);
        let img = heatmap(&f, 0, 2).unwrap();
        assert_eq!((img.width, img.height), (16, 16));
        let dir = tempfile::tempdir().unwrap();
        img.write_both(dir.path(), "h").unwrap();
        let ppm = std::fs::read(dir.path().join("h.ppm")).unwrap();
        assert!(ppm.starts_with(b"P6\n16 16\n255\n"));
        assert_eq!(ppm.len(), "P6\n16 16\n255\n".len() + 16 * 16 * 3);
        let png = std::fs::read(dir.path().join("h.png")).unwrap();
        assert_eq!(&png[1..4], b"PNG");
        let plot = loglog(&[vec![(1.0, 1.0), (10.0, 0.1)]], 200, 150);
        assert!(plot.pixels.iter().any(|p| *p == PALETTE[0]));
    }
}
