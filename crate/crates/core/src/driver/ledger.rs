//! Append-only CSV ledger of norms per iteration.

use std::path::Path;

use crate::error::{LabError, Result};
use crate::perturbation::ParameterSchedule;

pub const HEADER: [&str; 12] = [
    "iteration",
    "name",
    "value",
    "p",
    "q",
    "mu",
    "kappa",
    "sigma",
    "lambda",
    "nu",
    "delta",
    "r",
];

#[derive(Clone, Debug, PartialEq)]
pub struct LedgerRow {
    pub iteration: usize,
    pub name: String,
    pub value: f64,
    pub p: f64,
    pub q: f64,
    pub mu: usize,
    pub kappa: usize,
    pub sigma: usize,
    pub lambda: f64,
    pub nu: f64,
    pub delta: f64,
    pub r: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormLedger {
    rows: Vec<LedgerRow>,
}

impl NormLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    /// Rows for an iteration without a step (e.g. the base triple).
    pub fn push_plain(&mut self, iteration: usize, p: f64, q: f64, entries: &[(String, f64)]) {
        for (name, value) in entries {
            self.rows.push(LedgerRow {
                iteration,
                name: name.clone(),
                value: *value,
                p,
                q,
                mu: 0,
                kappa: 0,
                sigma: 0,
                lambda: 0.0,
                nu: 0.0,
                delta: 0.0,
                r: 0.0,
            });
        }
    }

    pub fn push_step(&mut self, iteration: usize, s: &ParameterSchedule, entries: &[(String, f64)]) {
        for (name, value) in entries {
            self.rows.push(LedgerRow {
                iteration,
                name: name.clone(),
                value: *value,
                p: s.p,
                q: s.q,
                mu: s.mu,
                kappa: s.kappa,
                sigma: s.sigma,
                lambda: s.lambda,
                nu: s.nu,
                delta: s.delta,
                r: s.r_time,
            });
        }
    }

    pub fn value(&self, iteration: usize, name: &str) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.iteration == iteration && r.name == name)
            .map(|r| r.value)
    }

    /// `(iteration, value)` for one name, in ledger order.
    pub fn series(&self, name: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.name == name)
            .map(|r| (r.iteration, r.value))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.name.clone(),
                format!("{:e}", r.value),
                r.p.to_string(),
                r.q.to_string(),
                r.mu.to_string(),
                r.kappa.to_string(),
                r.sigma.to_string(),
                r.lambda.to_string(),
                format!("{:e}", r.nu),
                format!("{:e}", r.delta),
                format!("{:e}", r.r),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        if rd.headers()?.iter().collect::<Vec<_>>() != HEADER {
            return Err(LabError::Format(format!("{} is not a norm ledger", path.display())));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| LabError::Format(format!("bad number {:?}", &rec[i])))
            };
            let u = |i: usize| -> Result<usize> {
                rec[i]
                    .parse()
                    .map_err(|_| LabError::Format(format!("bad integer {:?}", &rec[i])))
            };
            rows.push(LedgerRow {
                iteration: u(0)?,
                name: rec[1].to_string(),
                value: f(2)?,
                p: f(3)?,
                q: f(4)?,
                mu: u(5)?,
                kappa: u(6)?,
                sigma: u(7)?,
                lambda: f(8)?,
                nu: f(9)?,
                delta: f(10)?,
                r: f(11)?,
            });
        }
        Ok(NormLedger { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let mut l = NormLedger::new();
        l.push_plain(1, 2.0, 1.5, &[("R_total".into(), 0.25)]);
        l.push_plain(2, 2.0, 1.5, &[("R_total".into(), 0.125), ("residual".into(), 1e-14)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.csv");
        l.write_csv(&path).unwrap();
        let back = NormLedger::read_csv(&path).unwrap();
        assert_eq!(back, l);
        assert_eq!(back.series("R_total"), vec![(1, 0.25), (2, 0.125)]);
        assert_eq!(back.value(2, "residual"), Some(1e-14));
    }
}
