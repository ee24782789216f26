//! Criteria weights from a reciprocal pairwise-comparison matrix.
//!
//! Weights are the normalised row geometric means. λ_max is estimated as the
//! mean of `(A·w)_i / w_i`, and the consistency ratio is `CI / RCI(m)` with
//! Saaty's random consistency indices.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Saaty's random consistency index for m = 1..=10.
pub const RANDOM_CONSISTENCY_INDEX: [f64; 10] =
    [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];

pub const DEFAULT_CR_THRESHOLD: f64 = 0.08;

const RECIPROCITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    m: usize,
    entries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Diagonal {
        i: usize,
        value: f64,
    },
    Reciprocity {
        i: usize,
        j: usize,
        a_ij: f64,
        a_ji: f64,
    },
    Scale {
        i: usize,
        j: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based indices in messages
        match *self {
            Violation::Diagonal { i, value } => {
                write!(f, "a[{0},{0}] = {value}, expected 1", i + 1)
            }
            Violation::Reciprocity { i, j, a_ij, a_ji } => write!(
                f,
                "a[{},{}] = {a_ij} is not the reciprocal of a[{},{}] = {a_ji}",
                i + 1,
                j + 1,
                j + 1,
                i + 1
            ),
            Violation::Scale { i, j, value } => {
                write!(f, "a[{},{}] = {value} outside [1/9, 9]", i + 1, j + 1)
            }
        }
    }
}

impl ComparisonMatrix {
    /// Builds a matrix from rows. Fails only on shape; judgment problems are
    /// reported by [`ComparisonMatrix::validate`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Matrix("empty matrix".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Matrix(format!(
                "row {} has {} entries, expected {m} (matrix must be square)",
                i + 1,
                r.len()
            )));
        }
        Ok(ComparisonMatrix {
            m,
            entries: rows.concat(),
        })
    }

    /// Reciprocal matrix of a fully consistent judgment `a_ij = w_i / w_j`.
    pub fn consistent(weights: &[f64]) -> Self {
        let m = weights.len();
        let entries = (0..m * m)
            .map(|k| weights[k / m] / weights[k % m])
            .collect();
        ComparisonMatrix { m, entries }
    }

    /// Expert judgments over k/s, L*, a*, b* for the ozonation case.
    pub fn ozonation() -> Self {
        Self::from_rows(&[
            vec![1.0, 3.0, 5.0, 5.0],
            vec![1.0 / 3.0, 1.0, 3.0, 3.0],
            vec![1.0 / 5.0, 1.0 / 3.0, 1.0, 2.0],
            vec![1.0 / 5.0, 1.0 / 3.0, 1.0 / 2.0, 1.0],
        ])
        .expect("square")
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    /// Lists every diagonal, reciprocity, or nine-point-scale breach.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        for i in 0..self.m {
            let d = self.get(i, i);
            if (d - 1.0).abs() > RECIPROCITY_TOL {
                out.push(Violation::Diagonal { i, value: d });
            }
            for j in 0..self.m {
                let a = self.get(i, j);
                if !a.is_finite() || a < 1.0 / 9.0 - RECIPROCITY_TOL || a > 9.0 + RECIPROCITY_TOL {
                    out.push(Violation::Scale { i, j, value: a });
                }
                if j > i {
                    let b = self.get(j, i);
                    if (a * b - 1.0).abs() > RECIPROCITY_TOL {
                        out.push(Violation::Reciprocity {
                            i,
                            j,
                            a_ij: a,
                            a_ji: b,
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Parses `m` lines of `m` comma-separated entries; entries may be
    /// fractions such as `1/3`.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|cell| {
                        parse_judgment(cell.trim()).ok_or_else(|| {
                            Error::Matrix(format!("row {}: cannot parse {:?}", i + 1, cell.trim()))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

fn parse_judgment(cell: &str) -> Option<f64> {
    match cell.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().ok()?;
            let den: f64 = den.trim().parse().ok()?;
            (den != 0.0).then(|| num / den)
        }
        None => cell.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaWeights {
    pub weights: Vec<f64>,
    pub geometric_means: Vec<f64>,
    pub lambda_max: f64,
    pub ci: f64,
    /// Undefined for m < 3, where the random index is zero.
    pub cr: Option<f64>,
}

pub fn derive_weights(matrix: &ComparisonMatrix) -> Result<CriteriaWeights> {
    if let Err(v) = matrix.validate() {
        let msg: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::Matrix(msg.join("; ")));
    }
    let m = matrix.size();
    if m < 2 {
        return Err(Error::Matrix("at least two criteria are required".into()));
    }
    let gm: Vec<f64> = (0..m)
        .map(|i| matrix.row(i).iter().map(|a| a.ln()).sum::<f64>() / m as f64)
        .map(f64::exp)
        .collect();
    let total: f64 = gm.iter().sum();
    let w: Vec<f64> = gm.iter().map(|g| g / total).collect();

    let lambda_max = (0..m)
        .map(|i| {
            matrix
                .row(i)
                .iter()
                .zip(&w)
                .map(|(a, wj)| a * wj)
                .sum::<f64>()
                / w[i]
        })
        .sum::<f64>()
        / m as f64;
    let ci = (lambda_max - m as f64) / (m as f64 - 1.0);
    let rci = random_index(m);
    let cr = (rci > 0.0).then(|| ci / rci);
    Ok(CriteriaWeights {
        weights: w,
        geometric_means: gm,
        lambda_max,
        ci,
        cr,
    })
}

/// Random consistency index for an m×m matrix; `m` beyond the table uses the m = 10 value.
pub fn random_index(m: usize) -> f64 {
    RANDOM_CONSISTENCY_INDEX[m.clamp(1, 10) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// Accepts when CR ≤ threshold. Matrices too small for a CR (m = 2) are
/// always consistent and accepted.
pub fn check_consistency(weights: &CriteriaWeights, threshold: f64) -> Verdict {
    match weights.cr {
        Some(cr) if cr > threshold => Verdict::Reject,
        _ => Verdict::Accept,
    }
}

/// Σ w_i · value_i.
pub fn aggregate_objective(weights: &[f64], values: &[f64]) -> Result<f64> {
    if weights.len() != values.len() {
        return Err(Error::Arity {
            what: "criterion values",
            expected: weights.len(),
            got: values.len(),
        });
    }
    Ok(weights.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// On-disk weights, consumed by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub criteria: Vec<String>,
    #[serde(flatten)]
    pub result: CriteriaWeights,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl WeightsFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("weights serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "weights file",
            message: e.to_string(),
        })
    }
}
