use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Coordinates, LqProblem, ModelError};

/// On-disk layout of a problem file. Matrices are arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C", default)]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D", default)]
    pub d: Vec<Vec<f64>>,
    #[serde(default)]
    pub e: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<Vec<f64>>>,
    pub x0: Vec<f64>,
    #[serde(rename = "xT")]
    pub xt: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub coordinates: Coordinates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_names: Option<Vec<String>>,
}

fn matrix(field: &str, rows: &[Vec<f64>], empty_cols: usize) -> Result<DMatrix<f64>, ModelError> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, empty_cols));
    }
    let cols = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(ModelError::Field {
                field: field.to_string(),
                message: format!("row {} has {} entries, row 1 has {cols}", i + 1, row.len()),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Field {
                field: field.to_string(),
                message: format!("entry ({}, {}) is not finite", i + 1, j + 1),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<LqProblem, ModelError> {
        let a = matrix("A", &self.a, 0)?;
        let n = a.nrows();
        let b = matrix("B", &self.b, 0)?;
        let m = b.ncols();
        let c = matrix("C", &self.c, n)?;
        let d = if self.d.is_empty() { DMatrix::zeros(c.nrows(), m) } else { matrix("D", &self.d, m)? };
        let nmat = match &self.n {
            Some(rows) => matrix("N", rows, m)?,
            None => DMatrix::zeros(n, m),
        };
        let mut p = LqProblem::new(
            a,
            b,
            c,
            d,
            DVector::from_vec(self.e),
            matrix("Q", &self.q, n)?,
            matrix("R", &self.r, m)?,
            nmat,
            DVector::from_vec(self.x0),
            DVector::from_vec(self.xt),
            self.horizon,
        )
        .map_err(|err| match err {
            ModelError::DimensionMismatch { what, expected, found } => {
                ModelError::Field { field: what, message: format!("expected shape {expected}, found {found}") }
            }
            other => other,
        })?;
        p.coordinates = self.coordinates;
        if let Some(v) = self.state_names {
            p.state_names = v;
        }
        if let Some(v) = self.control_names {
            p.control_names = v;
        }
        if let Some(v) = self.constraint_names {
            p.constraint_names = v;
        }
        p.check_dimensions().map_err(|err| match err {
            ModelError::DimensionMismatch { what, expected, found } => {
                ModelError::Field { field: what, message: format!("expected {expected} names, found {found}") }
            }
            other => other,
        })?;
        Ok(p)
    }

    pub fn from_problem(p: &LqProblem) -> Self {
        Self {
            a: rows_of(&p.a),
            b: rows_of(&p.b),
            c: rows_of(&p.c),
            d: rows_of(&p.d),
            e: p.e.iter().copied().collect(),
            q: rows_of(&p.q),
            r: rows_of(&p.r),
            n: Some(rows_of(&p.n)),
            x0: p.x0.iter().copied().collect(),
            xt: p.xt.iter().copied().collect(),
            horizon: p.horizon,
            coordinates: p.coordinates,
            state_names: Some(p.state_names.clone()),
            control_names: Some(p.control_names.clone()),
            constraint_names: Some(p.constraint_names.clone()),
        }
    }
}

impl LqProblem {
    /// Parse a problem from JSON text.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_problem()
    }

    /// Read a problem file from disk.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ModelError::Io(e.to_string()))?;
        Self::from_json(&text)
    }

    /// Serialize to pretty JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ProblemFile::from_problem(self)).expect("problem serializes")
    }
}
