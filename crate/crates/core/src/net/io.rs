//! JSON model format.
//!
//! ```json
//! {"dims": [...], "activation": {"kind": "relu"}, "temperature": 0.1,
//!  "normalize_input": true, "weights": [[...], ...], "biases": null,
//!  "projection": null, "prototypes": [[...], ...]}
//! ```
//!
//! Weight arrays are flattened row-major `d_{l-1} × d_l`. Floats are written
//! in shortest round-trip form, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::model::MlpModel;
use crate::error::{invalid, io_err, Result};
use crate::numcore::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub temperature: f64,
    #[serde(default)]
    pub normalize_input: bool,
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub biases: Option<Vec<Vec<f64>>>,
    /// Flattened `d_L × e` projection; absent means identity.
    #[serde(default)]
    pub projection: Option<Vec<f64>>,
    pub prototypes: Vec<Vec<f64>>,
}

impl From<&MlpModel> for ModelFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            dims: m.dims().to_vec(),
            activation: m.activation(),
            temperature: m.temperature(),
            normalize_input: m.normalizes_input(),
            weights: m.weights().iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: m.biases.clone(),
            projection: m.projection().map(|u| u.as_slice().to_vec()),
            prototypes: m.prototypes().row_iter().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl TryFrom<ModelFile> for MlpModel {
    type Error = crate::error::Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.dims.len() != f.weights.len() + 1 {
            return Err(invalid(format!(
                "{} layer widths given for {} weight matrices",
                f.dims.len(),
                f.weights.len()
            )));
        }
        let weights = f
            .weights
            .into_iter()
            .zip(f.dims.windows(2))
            .map(|(w, d)| Matrix::from_vec(d[0], d[1], w))
            .collect::<Result<Vec<_>>>()?;
        let prototypes = Matrix::from_rows(&f.prototypes)?;
        let last = *f.dims.last().unwrap();
        let projection = f
            .projection
            .map(|u| {
                let e = prototypes.cols();
                Matrix::from_vec(last, e, u)
            })
            .transpose()?;
        if let Some(bs) = &f.biases {
            if bs.iter().flatten().any(|b| !b.is_finite()) {
                return Err(invalid("non-finite bias"));
            }
        }
        MlpModel::from_parts(
            weights,
            f.biases,
            projection,
            prototypes,
            f.temperature,
            f.activation,
            f.normalize_input,
        )
    }
}

impl MlpModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}
