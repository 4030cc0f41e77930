//! Per-step log-probabilities, attribution matrices and saliency vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LergError, Result};

/// Upper bound on a normalized log-probability (allows rounding noise).
pub const EPS_NORM: f64 = 1e-9;

/// `log P(y_j | context, y_<j)` for `j = 1..N`, natural log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StepLogProbs(pub Vec<f64>);

impl StepLogProbs {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `log P(y | context)`, summed in step order.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Checks length, finiteness and (for normalized models) the `<= 0` bound.
    pub fn validate(&self, expected_len: usize, normalized: bool) -> Result<()> {
        if self.0.len() != expected_len {
            return Err(LergError::ModelProtocolError(format!(
                "expected {expected_len} step scores, got {}",
                self.0.len()
            )));
        }
        for (j, &v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(LergError::ScoreDomainError(format!(
                    "step {j} score is not finite ({v})"
                )));
            }
            if normalized && v > EPS_NORM {
                return Err(LergError::ScoreDomainError(format!(
                    "step {j} log-probability {v} exceeds 0 for a normalized model"
                )));
            }
        }
        Ok(())
    }
}

/// Attribution estimator that produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lime,
    LergL,
    Shapley,
    ShapleyW,
    LergS,
    ExactShapley,
    ExactLergS,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Lime,
        Method::LergL,
        Method::Shapley,
        Method::ShapleyW,
        Method::LergS,
        Method::ExactShapley,
        Method::ExactLergS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lime => "lime",
            Method::LergL => "lerg-l",
            Method::Shapley => "shapley",
            Method::ShapleyW => "shapley-w",
            Method::LergS => "lerg-s",
            Method::ExactShapley => "exact-shapley",
            Method::ExactLergS => "exact-lerg-s",
        }
    }

    /// Whether the estimator enumerates every subset.
    pub fn is_exact(self) -> bool {
        matches!(self, Method::ExactShapley | Method::ExactLergS)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = LergError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| LergError::Validation(format!("unknown method `{s}`")))
    }
}

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LergError::Validation("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sum of all entries in row-major order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference; `INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// An `M x N` attribution matrix: entry `(i, j)` scores context segment `i`
/// for response step `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMatrix {
    pub phi: Matrix,
    pub method: Method,
    pub sample_count: usize,
    pub seed: u64,
    /// Monte Carlo standard error per entry, for sampled mean estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Matrix>,
}

impl ExplanationMatrix {
    pub fn new(phi: Matrix, method: Method, sample_count: usize, seed: u64) -> Result<Self> {
        if let Some(v) = phi.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(LergError::DomainError(format!(
                "{method} produced a non-finite attribution ({v})"
            )));
        }
        Ok(Self {
            phi,
            method,
            sample_count,
            seed,
            std_error: None,
        })
    }

    pub fn context_len(&self) -> usize {
        self.phi.rows()
    }

    pub fn response_len(&self) -> usize {
        self.phi.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.phi.get(i, j)
    }

    /// Reduces each row to one score per context segment.
    pub fn saliency(&self, reduction: Reduction) -> Saliency {
        let scores = (0..self.phi.rows())
            .map(|i| {
                let row = self.phi.row(i);
                match reduction {
                    Reduction::SumOverJ => row.iter().sum(),
                    Reduction::MaxOverJ => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        Saliency { scores, reduction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    SumOverJ,
    MaxOverJ,
}

/// One score per context segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saliency {
    pub scores: Vec<f64>,
    pub reduction: Reduction,
}

impl Saliency {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}
