//! Golden bundles: a layer chain, its operands and the oracle outputs, stored
//! as one JSON manifest with tensors embedded as base64 blobs (`.fxb`).

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FlexError, Result};
use crate::ir::layer::{LayerDescriptor, LayerKind};
use crate::ir::tensor::QuantTensor;
use crate::ir::workload::{LayerSpec, SvmHost, Workload};
use crate::oracle::exec::{run_chain, svm_decision};

mod b64 {
    use super::*;

    pub fn ser<S: Serializer>(t: &QuantTensor, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(t.to_bytes()))
    }

    pub fn de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<QuantTensor, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        QuantTensor::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Blob(#[serde(serialize_with = "b64::ser", deserialize_with = "b64::de")] pub QuantTensor);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenBundle {
    pub name: String,
    pub inputs: Vec<Blob>,
    pub layers: Vec<LayerDescriptor>,
    pub weights: Vec<Option<Blob>>,
    /// One output per layer, in chain order.
    pub expected_outputs: Vec<Blob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm: Option<SvmHost>,
    /// Host decision value per batch row when `svm` is present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<f64>,
}

impl GoldenBundle {
    pub fn from_workload(w: &Workload) -> Result<Self> {
        w.check_weights()?;
        let outs = run_chain(&w.input, w.layers.iter().map(|l| (&l.desc, l.weights.as_ref())))?;
        let decisions = match (&w.svm, w.layers.last(), outs.last()) {
            (Some(host), Some(last), Some(norms)) if last.desc.kind == LayerKind::SvmNorm => {
                host_decisions(host, norms)?
            }
            (Some(_), _, _) => {
                return Err(FlexError::MissingParam(
                    "SVM decision parameters need a trailing SVM_NORM layer".into(),
                ))
            }
            _ => Vec::new(),
        };
        Ok(Self {
            name: w.name.clone(),
            inputs: vec![Blob(w.input.clone())],
            layers: w.layers.iter().map(|l| l.desc.clone()).collect(),
            weights: w.layers.iter().map(|l| l.weights.clone().map(Blob)).collect(),
            expected_outputs: outs.into_iter().map(Blob).collect(),
            svm: w.svm.clone(),
            decisions,
        })
    }

    pub fn to_workload(&self) -> Result<Workload> {
        let input = self
            .inputs
            .first()
            .ok_or_else(|| FlexError::Format("bundle has no input tensor".into()))?;
        if self.weights.len() != self.layers.len() {
            return Err(FlexError::Format("weights list does not match layer list".into()));
        }
        Ok(Workload {
            name: self.name.clone(),
            input: input.0.clone(),
            layers: self
                .layers
                .iter()
                .zip(&self.weights)
                .map(|(d, w)| LayerSpec {
                    desc: d.clone(),
                    weights: w.as_ref().map(|b| b.0.clone()),
                })
                .collect(),
            svm: self.svm.clone(),
        })
    }

    pub fn final_output(&self) -> Option<&QuantTensor> {
        self.expected_outputs.last().map(|b| &b.0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Applies the host decision function to each row of a [batch, N] norm tensor.
pub fn host_decisions(host: &SvmHost, norms: &QuantTensor) -> Result<Vec<f64>> {
    let n = *norms.shape().last().unwrap_or(&0);
    if n != host.alphas.len() {
        return Err(FlexError::ShapeMismatch(format!(
            "{} alphas for {n} norms per row",
            host.alphas.len()
        )));
    }
    Ok(norms
        .data()
        .chunks(n.max(1))
        .map(|row| svm_decision(row, &host.alphas, host.sigma, host.bias, host.norm_squared))
        .collect())
}
