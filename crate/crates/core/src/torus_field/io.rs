//! CIFIELD binary dumps and `(iteration, name, value)` CSV export.
//!
//! A dump is one ASCII header line
//! `CIFIELD v1 dim=<d> n_space=<N> n_time=<T> components=<c>` followed by the
//! samples as little-endian `f64`, component after component, each in
//! storage order (time-major, then spatial axes 0..d−1).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GridSpec, ScalarField};
use crate::error::{LabError, Result};

pub fn write_cifield(path: &Path, components: &[&ScalarField]) -> Result<()> {
    let grid = components
        .first()
        .ok_or_else(|| LabError::Format("nothing to write".into()))?
        .grid();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "CIFIELD v1 dim={} n_space={} n_time={} components={}",
        grid.dim(),
        grid.n_space(),
        grid.n_time(),
        components.len()
    )?;
    for c in components {
        if c.grid() != grid {
            return Err(LabError::GridMismatch(
                "components of one dump must share a grid".into(),
            ));
        }
        for v in c.samples() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn header_value(tokens: &[&str], key: &str) -> Result<usize> {
    tokens
        .iter()
        .find_map(|t| t.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .ok_or_else(|| LabError::Format(format!("header lacks {key}")))?
        .parse()
        .map_err(|_| LabError::Format(format!("bad value for {key}")))
}

pub fn read_cifield(path: &Path) -> Result<(GridSpec, Vec<ScalarField>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 2 || tokens[0] != "CIFIELD" || tokens[1] != "v1" {
        return Err(LabError::Format(format!("not a CIFIELD v1 file: {}", path.display())));
    }
    let grid = GridSpec::new(
        header_value(&tokens, "dim")?,
        header_value(&tokens, "n_space")?,
        header_value(&tokens, "n_time")?,
    )?;
    let count = header_value(&tokens, "components")?;
    let mut fields = Vec::with_capacity(count);
    let mut bytes = vec![0u8; grid.len() * 8];
    for _ in 0..count {
        reader.read_exact(&mut bytes)?;
        let samples = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        fields.push(ScalarField::new(grid, samples)?);
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(LabError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok((grid, fields))
}

/// Writes rows `(iteration, name, value)`.
pub fn write_norm_csv(path: &Path, rows: &[(usize, String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "name", "value"])?;
    for (it, name, value) in rows {
        w.write_record([it.to_string(), name.clone(), format!("{value:e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.cif");
        let g = GridSpec::new(3, 4, 4).unwrap();
        let a = ScalarField::from_fn(g, |t, x| t + 2.0 * x[0] - x[2]);
        let b = a.scale(-0.5);
        write_cifield(&path, &[&a, &b]).unwrap();
        let (g2, back) = read_cifield(&path).unwrap();
        assert_eq!(g2, g);
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, "hello\n").unwrap();
        assert!(read_cifield(&path).is_err());
    }
}
