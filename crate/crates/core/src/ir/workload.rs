//! Workload description: a JSON document with one record per layer plus
//! separate tensor blobs referenced by relative path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::ir::layer::{validate_layer, LayerDescriptor};
use crate::ir::svm::Norm;
use crate::ir::tensor::QuantTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub desc: LayerDescriptor,
    pub weights: Option<QuantTensor>,
}

/// Host-side OC-SVM decision parameters applied to the norms of an SVM_NORM
/// layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmHost {
    pub alphas: Vec<f64>,
    pub sigma: f64,
    pub bias: f64,
    pub norm: Norm,
    #[serde(default)]
    pub norm_squared: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub input: QuantTensor,
    pub layers: Vec<LayerSpec>,
    pub svm: Option<SvmHost>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    #[serde(flatten)]
    desc: LayerDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct WorkloadDoc {
    name: String,
    input: String,
    layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    svm: Option<SvmHost>,
}

impl Workload {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let doc: WorkloadDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let input = QuantTensor::load(dir.join(&doc.input))?;
        let layers = doc
            .layers
            .into_iter()
            .map(|r| {
                let desc = validate_layer(r.desc)?;
                let weights = match r.weights {
                    Some(p) => Some(QuantTensor::load(dir.join(p))?),
                    None => None,
                };
                Ok(LayerSpec { desc, weights })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: doc.name,
            input,
            layers,
            svm: doc.svm,
        })
    }

    /// Writes `<dir>/<name>.json` plus one `.fxt` blob per tensor.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let input_name = format!("{}_input.fxt", self.name);
        self.input.save(dir.join(&input_name))?;
        let mut layers = Vec::new();
        for (i, spec) in self.layers.iter().enumerate() {
            let weights = match &spec.weights {
                Some(w) => {
                    let name = format!("{}_w{i}.fxt", self.name);
                    w.save(dir.join(&name))?;
                    Some(name)
                }
                None => None,
            };
            layers.push(LayerRecord {
                desc: spec.desc.clone(),
                weights,
            });
        }
        let doc = WorkloadDoc {
            name: self.name.clone(),
            input: input_name,
            layers,
            svm: self.svm.clone(),
        };
        let path = dir.join(format!("{}.json", self.name));
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        Ok(path)
    }

    pub fn check_weights(&self) -> Result<()> {
        for spec in &self.layers {
            match (spec.desc.weight_shape(), &spec.weights) {
                (Some(shape), Some(w)) if w.shape() == shape.as_slice() => {}
                (None, None) => {}
                (want, got) => {
                    return Err(FlexError::ShapeMismatch(format!(
                        "{} weights: expected {:?}, got {:?}",
                        spec.desc.kind,
                        want,
                        got.as_ref().map(|w| w.shape().to_vec())
                    )))
                }
            }
        }
        Ok(())
    }
}
