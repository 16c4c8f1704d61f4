use serde::{Deserialize, Serialize};

use crate::error::{FlexError, Result};
use crate::ir::sparsity::SparsityIndexMap;
use crate::ir::svm::Norm;
use crate::ir::tensor::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LayerKind {
    Conv2d,
    Conv1dDilated,
    Deconv2d,
    Dense,
    RnnStep,
    SvmNorm,
    Maxpool,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Conv2d,
        LayerKind::Conv1dDilated,
        LayerKind::Deconv2d,
        LayerKind::Dense,
        LayerKind::RnnStep,
        LayerKind::SvmNorm,
        LayerKind::Maxpool,
    ];

    /// Matrix-matrix kinds (convolution family).
    pub fn is_mmm(self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d | LayerKind::Conv1dDilated | LayerKind::Deconv2d
        )
    }

    /// Matrix-vector kinds.
    pub fn is_mvm(self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::RnnStep | LayerKind::SvmNorm)
    }

    pub fn has_weights(self) -> bool {
        self != LayerKind::Maxpool
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok();
        write!(f, "{}", s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::None,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            _ => return None,
        })
    }
}

fn one() -> usize {
    1
}

fn int8() -> Precision {
    Precision::Int8
}

/// Hyperparameters of one mappable kernel.
///
/// For SVM_NORM, `c` is the vector length D and `k` the number of support
/// vectors N. For MAXPOOL, `k` must equal `c`. `ix`/`iy` are the input
/// spatial extents; when omitted they default to the unpadded extent, and any
/// difference is covered by symmetric zero padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub kind: LayerKind,
    pub c: usize,
    pub k: usize,
    #[serde(default = "one")]
    pub ox: usize,
    #[serde(default = "one")]
    pub oy: usize,
    #[serde(default = "one")]
    pub fx: usize,
    #[serde(default = "one")]
    pub fy: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    #[serde(default = "one")]
    pub upsample: usize,
    #[serde(default = "one")]
    pub batch: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub requant_shift: u32,
    #[serde(default = "int8")]
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<SparsityIndexMap>,
    /// Distance computed by SVM_NORM; ignored by other kinds.
    #[serde(default)]
    pub norm: Norm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ix: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iy: Option<usize>,
}

impl LayerDescriptor {
    fn base(kind: LayerKind, c: usize, k: usize) -> Self {
        Self {
            kind,
            c,
            k,
            ox: 1,
            oy: 1,
            fx: 1,
            fy: 1,
            stride: 1,
            dilation: 1,
            upsample: 1,
            batch: 1,
            activation: Activation::None,
            requant_shift: 0,
            precision: Precision::Int8,
            sparsity: None,
            norm: Norm::L2,
            ix: None,
            iy: None,
        }
    }

    /// 2-D convolution with "same"-style padding for odd filters at stride 1.
    pub fn conv2d(c: usize, k: usize, ox: usize, oy: usize, fx: usize, fy: usize) -> Self {
        Self {
            ox,
            oy,
            fx,
            fy,
            ix: Some(ox),
            iy: Some(oy),
            ..Self::base(LayerKind::Conv2d, c, k)
        }
    }

    pub fn conv1d_dilated(c: usize, k: usize, ox: usize, fx: usize, dilation: usize) -> Self {
        Self {
            ox,
            fx,
            dilation,
            ..Self::base(LayerKind::Conv1dDilated, c, k)
        }
    }

    /// Transposed convolution: input `ix`x`iy` upsampled by `upsample`.
    pub fn deconv2d(c: usize, k: usize, ix: usize, iy: usize, f: usize, upsample: usize) -> Self {
        Self {
            ox: ix * upsample,
            oy: iy * upsample,
            fx: f,
            fy: f,
            upsample,
            ix: Some(ix),
            iy: Some(iy),
            ..Self::base(LayerKind::Deconv2d, c, k)
        }
    }

    pub fn dense(c: usize, k: usize, batch: usize) -> Self {
        Self {
            batch,
            ..Self::base(LayerKind::Dense, c, k)
        }
    }

    pub fn rnn_step(c: usize, k: usize, batch: usize) -> Self {
        Self {
            batch,
            activation: Activation::Tanh,
            ..Self::base(LayerKind::RnnStep, c, k)
        }
    }

    pub fn svm_norm(d: usize, n: usize, batch: usize) -> Self {
        Self {
            batch,
            ..Self::base(LayerKind::SvmNorm, d, n)
        }
    }

    pub fn maxpool(c: usize, ox: usize, oy: usize, window: usize) -> Self {
        Self {
            ox,
            oy,
            fx: window,
            fy: window,
            stride: window,
            ..Self::base(LayerKind::Maxpool, c, c)
        }
    }

    pub fn with_precision(mut self, p: Precision) -> Self {
        self.precision = p;
        self
    }

    pub fn with_activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }

    pub fn with_shift(mut self, shift: u32) -> Self {
        self.requant_shift = shift;
        self
    }

    pub fn with_sparsity(mut self, map: SparsityIndexMap) -> Self {
        self.sparsity = Some(map);
        self
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_input_extent(mut self, ix: usize, iy: usize) -> Self {
        self.ix = Some(ix);
        self.iy = Some(iy);
        self
    }

    /// Extent covered by one output row window along x (padded input width).
    pub fn window_x(&self) -> usize {
        (self.ox - 1) * self.stride + (self.fx - 1) * self.dilation + 1
    }

    pub fn window_y(&self) -> usize {
        (self.oy - 1) * self.stride + (self.fy - 1) * self.dilation + 1
    }

    /// Real (un-upsampled) input extent along x.
    pub fn in_x(&self) -> usize {
        self.ix.unwrap_or_else(|| {
            if self.kind.is_mmm() || self.kind == LayerKind::Maxpool {
                self.window_x().div_ceil(self.upsample)
            } else {
                1
            }
        })
    }

    pub fn in_y(&self) -> usize {
        if self.kind == LayerKind::Conv1dDilated {
            return 1;
        }
        self.iy.unwrap_or_else(|| {
            if self.kind.is_mmm() || self.kind == LayerKind::Maxpool {
                self.window_y().div_ceil(self.upsample)
            } else {
                1
            }
        })
    }

    fn pad_for(window: usize, extent: usize) -> Option<usize> {
        let total = window.checked_sub(extent)?;
        (total % 2 == 0).then_some(total / 2)
    }

    /// Zero padding on each side along x, measured on the upsampled grid.
    pub fn pad_x(&self) -> usize {
        Self::pad_for(self.window_x(), self.in_x() * self.upsample).unwrap_or(0)
    }

    pub fn pad_y(&self) -> usize {
        Self::pad_for(self.window_y(), self.in_y() * self.upsample).unwrap_or(0)
    }

    pub fn input_shape(&self) -> Vec<usize> {
        if self.kind.is_mvm() {
            vec![self.batch, self.c]
        } else {
            vec![self.c, self.in_y(), self.in_x()]
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        if self.kind.is_mvm() {
            vec![self.batch, self.k]
        } else {
            vec![self.k, self.oy, self.ox]
        }
    }

    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::Maxpool => None,
            k if k.is_mvm() => Some(vec![self.k, self.c]),
            _ => Some(vec![self.k, self.c, self.fy, self.fx]),
        }
    }

    pub fn output_precision(&self) -> Precision {
        if self.kind == LayerKind::SvmNorm {
            Precision::Int32
        } else {
            self.precision
        }
    }

    /// Logical multiply-accumulates (zero-stuffed count for deconvolution).
    pub fn nominal_macs(&self) -> u64 {
        match self.kind {
            LayerKind::Maxpool => 0,
            k if k.is_mvm() => (self.batch * self.c * self.k) as u64,
            _ => (self.k * self.oy * self.ox * self.c * self.fy * self.fx) as u64,
        }
    }
}

/// Checks every descriptor invariant and returns the descriptor unchanged.
pub fn validate_layer(desc: LayerDescriptor) -> Result<LayerDescriptor> {
    let d = &desc;
    let extents = [
        ("C", d.c),
        ("K", d.k),
        ("OX", d.ox),
        ("OY", d.oy),
        ("FX", d.fx),
        ("FY", d.fy),
        ("stride", d.stride),
        ("dilation", d.dilation),
        ("upsample", d.upsample),
        ("batch", d.batch),
    ];
    if let Some((name, _)) = extents.iter().find(|(_, v)| *v < 1) {
        return Err(FlexError::Dimension(format!("{name} must be >= 1")));
    }
    if let Some((name, v)) = extents.iter().find(|(_, v)| *v > u16::MAX as usize) {
        return Err(FlexError::Dimension(format!("{name} = {v} exceeds 16 bits")));
    }
    if !d.precision.is_operand() {
        return Err(FlexError::Precision(format!("{} is not an operand precision", d.precision)));
    }
    if d.requant_shift > 31 {
        return Err(FlexError::Dimension(format!(
            "requant_shift {} exceeds 31",
            d.requant_shift
        )));
    }
    if d.kind == LayerKind::Conv1dDilated && (d.fy != 1 || d.oy != 1) {
        return Err(FlexError::Dimension("CONV1D_DILATED requires FY = OY = 1".into()));
    }
    if d.kind != LayerKind::Deconv2d && d.upsample != 1 {
        return Err(FlexError::Dimension("upsample is only valid for DECONV2D".into()));
    }
    if d.upsample > 4 {
        return Err(FlexError::Dimension(format!("upsample {} exceeds 4", d.upsample)));
    }
    if d.stride > 255 || d.dilation > 255 {
        return Err(FlexError::Dimension("stride and dilation must fit 8 bits".into()));
    }
    if !d.kind.is_mvm() && d.batch != 1 {
        return Err(FlexError::Dimension(format!("batch is not valid for {}", d.kind)));
    }
    if d.kind.is_mvm() && (d.ox, d.oy, d.fx, d.fy) != (1, 1, 1, 1) {
        return Err(FlexError::Dimension(format!(
            "{} has no spatial extents",
            d.kind
        )));
    }
    if d.kind == LayerKind::Maxpool && d.k != d.c {
        return Err(FlexError::Dimension("MAXPOOL requires K = C".into()));
    }
    if d.kind == LayerKind::SvmNorm && d.activation != Activation::None {
        return Err(FlexError::Dimension("SVM_NORM produces raw norms".into()));
    }
    if matches!(d.activation, Activation::Tanh | Activation::Sigmoid)
        && d.precision != Precision::Int8
    {
        return Err(FlexError::Precision("the NLFG operates on 8-bit codes".into()));
    }
    if d.kind.is_mmm() || d.kind == LayerKind::Maxpool {
        let px = LayerDescriptor::pad_for(d.window_x(), d.in_x() * d.upsample);
        let py = LayerDescriptor::pad_for(d.window_y(), d.in_y() * d.upsample);
        match (px, py) {
            (Some(px), Some(py)) => {
                if d.kind == LayerKind::Maxpool && (px, py) != (0, 0) {
                    return Err(FlexError::Dimension("MAXPOOL windows cannot be padded".into()));
                }
            }
            _ => {
                return Err(FlexError::Dimension(format!(
                    "input {}x{} cannot be padded symmetrically to window {}x{}",
                    d.in_x() * d.upsample,
                    d.in_y() * d.upsample,
                    d.window_x(),
                    d.window_y()
                )))
            }
        }
    }
    if let Some(map) = &d.sparsity {
        if !matches!(
            d.kind,
            LayerKind::Conv2d | LayerKind::Conv1dDilated | LayerKind::Dense
        ) {
            return Err(FlexError::SparsityShape(format!(
                "{} does not support block sparsity",
                d.kind
            )));
        }
        map.check_shape(d.k, d.c)?;
        if d.precision != Precision::Int8 {
            return Err(FlexError::Precision("block sparsity is supported at INT8 only".into()));
        }
    }
    Ok(desc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_layer_is_valid() {
        let d = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3);
        let v = validate_layer(d.clone()).unwrap();
        assert_eq!(v, d);
        assert_eq!((d.pad_x(), d.pad_y()), (1, 1));
        assert_eq!(d.input_shape(), vec![32, 16, 16]);
    }

    #[test]
    fn minimal_dense_is_valid() {
        validate_layer(LayerDescriptor::dense(1, 1, 1)).unwrap();
    }

    #[test]
    fn error_paths() {
        let mut d = LayerDescriptor::conv2d(32, 32, 16, 16, 3, 3);
        d.sparsity = Some(SparsityIndexMap::dense(32, 31));
        assert!(matches!(validate_layer(d), Err(FlexError::SparsityShape(_))));

        let mut d = LayerDescriptor::dense(4, 4, 1);
        d.k = 0;
        assert!(matches!(validate_layer(d), Err(FlexError::Dimension(_))));

        let d = LayerDescriptor::conv2d(2, 2, 4, 4, 3, 3).with_precision(Precision::Int32);
        assert!(matches!(validate_layer(d), Err(FlexError::Precision(_))));

        // asymmetric padding
        let d = LayerDescriptor::conv2d(2, 2, 4, 4, 2, 2);
        assert!(matches!(validate_layer(d), Err(FlexError::Dimension(_))));

        let mut d = LayerDescriptor::conv1d_dilated(2, 2, 8, 3, 2);
        d.fy = 3;
        assert!(matches!(validate_layer(d), Err(FlexError::Dimension(_))));
    }

    #[test]
    fn json_defaults() {
        let d: LayerDescriptor =
            serde_json::from_str(r#"{"kind":"DENSE","c":16,"k":8,"batch":4}"#).unwrap();
        assert_eq!(d, LayerDescriptor::dense(16, 8, 4));
    }
}
