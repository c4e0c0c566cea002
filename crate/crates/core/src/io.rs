//! JSON documents for systems and gains. Matrices are row-major nested
//! arrays.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlqrError};
use crate::linalg::{matrix_serde, SymMatrix};
use crate::model::{CostWeights, FeedbackGain, StochasticLinearSystem};

/// `{"A", "B", "C": [...], "D": [...], "Q", "R"}` with optional `name`.
/// Missing `C` and `D` mean a noise-free plant (one zero channel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A", with = "matrix_serde")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "matrix_serde")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "matrix_serde::list", default)]
    pub c: Vec<DMatrix<f64>>,
    #[serde(rename = "D", with = "matrix_serde::list", default)]
    pub d: Vec<DMatrix<f64>>,
    #[serde(rename = "Q")]
    pub q: SymMatrix,
    #[serde(rename = "R")]
    pub r: SymMatrix,
}

impl SystemDocument {
    pub fn from_model(sys: &StochasticLinearSystem, w: &CostWeights, name: Option<String>) -> Self {
        SystemDocument {
            name,
            a: sys.a.clone(),
            b: sys.b.clone(),
            c: sys.c.clone(),
            d: sys.d.clone(),
            q: w.q.clone(),
            r: w.r.clone(),
        }
    }

    pub fn into_model(mut self) -> Result<(StochasticLinearSystem, CostWeights)> {
        if self.c.is_empty() && self.d.is_empty() {
            self.c.push(DMatrix::zeros(self.a.nrows(), self.a.ncols()));
            self.d.push(DMatrix::zeros(self.b.nrows(), self.b.ncols()));
        }
        let sys = StochasticLinearSystem::new(self.a, self.b, self.c, self.d)?;
        Ok((sys, CostWeights::new(self.q, self.r)))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GainDocument {
    Wrapped {
        #[serde(rename = "F", with = "matrix_serde")]
        f: DMatrix<f64>,
    },
    Bare(#[serde(with = "matrix_serde")] DMatrix<f64>),
}

/// Accepts `{"F": [[...]]}` or a bare `[[...]]`.
pub fn gain_from_json(text: &str) -> Result<FeedbackGain> {
    let doc: GainDocument = serde_json::from_str(text)?;
    let m = match doc {
        GainDocument::Wrapped { f } | GainDocument::Bare(f) => f,
    };
    FeedbackGain::new(m)
}

pub fn load_gain(path: &Path) -> Result<FeedbackGain> {
    gain_from_json(&fs::read_to_string(path)?)
}

#[derive(Serialize)]
struct GainOut<'a> {
    #[serde(rename = "F")]
    f: &'a FeedbackGain,
}

pub fn gain_to_json(gain: &FeedbackGain) -> Result<String> {
    to_json(&GainOut { f: gain })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(SlqrError::from)
}
