//! Sampled data with column roles, and its CSV form.
//!
//! The on-disk format is a plain CSV whose single header line carries the
//! role of each column as `name:role`, e.g. `X:treatment,Y:outcome,Z1:covariate`.
//! Values round-trip exactly: they are written with Rust's shortest-exact
//! float formatting and parsed back bit-identically.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Treatment,
    Outcome,
    Covariate,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Treatment => "treatment",
            Role::Outcome => "outcome",
            Role::Covariate => "covariate",
        }
    }

    fn parse(s: &str) -> Option<Role> {
        match s {
            "treatment" => Some(Role::Treatment),
            "outcome" => Some(Role::Outcome),
            "covariate" => Some(Role::Covariate),
            _ => None,
        }
    }
}

/// n x m numeric matrix with named, role-tagged columns. Exactly one
/// treatment and one outcome column; no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    roles: Vec<Role>,
    values: DMatrix<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>, roles: Vec<Role>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != roles.len() || names.len() != values.ncols() {
            return Err(Error::ModelInvariant("column names, roles and matrix width must agree".into()));
        }
        if values.nrows() == 0 {
            return Err(Error::ModelInvariant("dataset must have at least one row".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::ModelInvariant(format!("duplicate column `{name}`")));
            }
        }
        let treatments = roles.iter().filter(|r| **r == Role::Treatment).count();
        let outcomes = roles.iter().filter(|r| **r == Role::Outcome).count();
        if treatments != 1 || outcomes != 1 {
            return Err(Error::ModelInvariant(format!(
                "need exactly one treatment and one outcome column, got {treatments} and {outcomes}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset values".into()));
        }
        Ok(Dataset { names, roles, values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.into()))
    }

    /// Column values as a contiguous slice (the matrix is column-major).
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn col_by_name(&self, name: &str) -> Result<&[f64]> {
        Ok(self.col(self.index_of(name)?))
    }

    pub fn treatment_name(&self) -> &str {
        let j = self.roles.iter().position(|r| *r == Role::Treatment).unwrap();
        &self.names[j]
    }

    pub fn outcome_name(&self) -> &str {
        let j = self.roles.iter().position(|r| *r == Role::Outcome).unwrap();
        &self.names[j]
    }

    /// Covariate column names in dataset order.
    pub fn covariate_names(&self) -> Vec<&str> {
        self.names
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == Role::Covariate)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let header: Vec<String> = self
            .names
            .iter()
            .zip(&self.roles)
            .map(|(n, r)| format!("{n}:{}", r.as_str()))
            .collect();
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.n() {
            for j in 0..self.column_count() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.values[(i, j)]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "empty CSV".into() })?;
        let mut names = Vec::new();
        let mut roles = Vec::new();
        for cell in header.split(',') {
            let (name, role) = cell.rsplit_once(':').ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("header cell `{cell}` is missing a `:role` suffix"),
            })?;
            let role = Role::parse(role).ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("unknown role `{role}` in header cell `{cell}`"),
            })?;
            names.push(name.to_string());
            roles.push(role);
        }
        let m = names.len();
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut count = 0usize;
            for cell in line.split(',') {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad number `{cell}`"),
                })?;
                rows.push(v);
                count += 1;
            }
            if count != m {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {m} cells, got {count}"),
                });
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Parse { line: 1, msg: "CSV has no data rows".into() });
        }
        let values = DMatrix::from_row_iterator(n, m, rows);
        Dataset::new(names, roles, values)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }
}
