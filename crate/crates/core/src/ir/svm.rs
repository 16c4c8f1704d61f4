use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::ir::tensor::QuantTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Norm {
    /// Laplacian kernel.
    L1,
    /// RBF kernel.
    #[default]
    L2,
}

/// One-class SVM: support vectors (N x D, quantized) and the host-side
/// decision parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: QuantTensor,
    pub alphas: Vec<f64>,
    pub sigma: f64,
    pub bias: f64,
    pub norm: Norm,
    /// Feed the squared L2 norm into the exponent instead of the norm value
    /// as produced by the PE array.
    #[serde(default)]
    pub norm_squared: bool,
}

impl SvmModel {
    pub fn new(
        support_vectors: QuantTensor,
        alphas: Vec<f64>,
        sigma: f64,
        bias: f64,
        norm: Norm,
    ) -> Result<Self> {
        let m = Self {
            support_vectors,
            alphas,
            sigma,
            bias,
            norm,
            norm_squared: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.support_vectors.shape()[0]
    }

    pub fn d(&self) -> usize {
        self.support_vectors.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.support_vectors.shape().len() != 2 {
            return Err(FlexError::ShapeMismatch("support vectors must be N x D".into()));
        }
        if self.alphas.len() != self.n() {
            return Err(FlexError::ShapeMismatch(format!(
                "{} alphas for {} support vectors",
                self.alphas.len(),
                self.n()
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(FlexError::Range(format!("sigma = {} must be positive", self.sigma)));
        }
        Ok(())
    }
}
