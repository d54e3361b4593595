use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Convolutions, then a dense layer over the flattened feature map.
    /// The parameter count depends on the input length.
    CnnFixed,
    /// Convolutions, global average pooling, then a dense layer. The
    /// parameter count does not depend on the input length.
    CnnGap,
    /// Multinomial logistic regression: a single dense layer on the raw
    /// input. Convex in the parameters.
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Softplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Convolution stack, each followed by the nonlinearity. Must be empty
    /// for `Logistic`.
    #[serde(default)]
    pub conv: Vec<ConvSpec>,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub input_length: usize,
    pub classes: usize,
    /// Multiply inputs by `sqrt(len)` before the first layer, which brings
    /// a unit-norm amplitude vector to unit RMS whatever its length.
    #[serde(default)]
    pub scale_inputs: bool,
}

/// One step of the network as the forward pass sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerOp {
    Conv { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, offset: usize },
    Softplus,
    GlobalAvgPool,
    Dense { inputs: usize, outputs: usize, offset: usize },
}

impl ModelConfig {
    /// Reference fixed-size CNN: conv(kernel 8, 2 channels, stride 4),
    /// softplus, dense to `classes`.
    pub fn cnn_fixed(input_length: usize, classes: usize) -> Self {
        Self {
            architecture: Architecture::CnnFixed,
            conv: vec![ConvSpec { kernel: 8, channels: 2, stride: 4 }],
            nonlinearity: Nonlinearity::Softplus,
            input_length,
            classes,
            scale_inputs: true,
        }
    }

    /// Reference size-invariant CNN: conv(8, 5 ch, stride 2), softplus,
    /// conv(8, 10 ch, stride 2), softplus, global average pooling,
    /// dense(10 -> classes).
    pub fn cnn_gap(input_length: usize, classes: usize) -> Self {
        Self {
            architecture: Architecture::CnnGap,
            conv: vec![
                ConvSpec { kernel: 8, channels: 5, stride: 2 },
                ConvSpec { kernel: 8, channels: 10, stride: 2 },
            ],
            nonlinearity: Nonlinearity::Softplus,
            input_length,
            classes,
            scale_inputs: true,
        }
    }

    pub fn logistic(features: usize, classes: usize) -> Self {
        Self {
            architecture: Architecture::Logistic,
            conv: Vec::new(),
            nonlinearity: Nonlinearity::Softplus,
            input_length: features,
            classes,
            scale_inputs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.input_length == 0 {
            return Err(Error::InvalidConfig("input_length must be positive".into()));
        }
        if self.architecture == Architecture::Logistic && !self.conv.is_empty() {
            return Err(Error::InvalidConfig("logistic model takes no convolutions".into()));
        }
        if self.architecture != Architecture::Logistic && self.conv.is_empty() {
            return Err(Error::InvalidConfig("CNN needs at least one convolution".into()));
        }
        if self.conv.iter().any(|c| c.kernel == 0 || c.channels == 0 || c.stride == 0) {
            return Err(Error::InvalidConfig("kernel, channels and stride must be positive".into()));
        }
        self.layers(self.input_length).map(|_| ())
    }

    /// Shortest input the convolution stack accepts.
    pub fn min_input_length(&self) -> usize {
        self.conv.iter().rev().fold(1, |len, c| (len - 1) * c.stride + c.kernel)
    }

    /// Layer program for an input of length `len`. `CnnFixed` and `Logistic`
    /// only accept `input_length`.
    pub(crate) fn layers(&self, len: usize) -> Result<Vec<LayerOp>> {
        if self.architecture != Architecture::CnnGap && len != self.input_length {
            return Err(Error::ShapeMismatch { expected: self.input_length, actual: len });
        }
        if len < self.min_input_length() {
            return Err(Error::ShapeMismatch { expected: self.min_input_length(), actual: len });
        }
        let mut ops = Vec::new();
        let mut offset = 0;
        let (mut ch, mut width) = (1usize, len);
        for c in &self.conv {
            ops.push(LayerOp::Conv { in_ch: ch, out_ch: c.channels, kernel: c.kernel, stride: c.stride, offset });
            offset += c.channels * ch * c.kernel + c.channels;
            width = (width - c.kernel) / c.stride + 1;
            ch = c.channels;
            ops.push(LayerOp::Softplus);
        }
        if self.architecture == Architecture::CnnGap {
            ops.push(LayerOp::GlobalAvgPool);
            width = 1;
        }
        let inputs = ch * width;
        ops.push(LayerOp::Dense { inputs, outputs: self.classes, offset });
        Ok(ops)
    }

    /// Parameter count `M` for an input of length `len`.
    pub fn param_count_for(&self, len: usize) -> Result<usize> {
        let ops = self.layers(len)?;
        Ok(ops
            .iter()
            .map(|op| match *op {
                LayerOp::Conv { in_ch, out_ch, kernel, .. } => out_ch * in_ch * kernel + out_ch,
                LayerOp::Dense { inputs, outputs, .. } => inputs * outputs + outputs,
                _ => 0,
            })
            .sum())
    }

    pub fn param_count(&self) -> usize {
        self.param_count_for(self.input_length)
            .expect("validated config has a consistent layer program")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parameter_counts() {
        let fixed = ModelConfig::cnn_fixed(924, 2);
        // conv 2*8 + 2, dense 230*2*2 + 2
        assert_eq!(fixed.param_count(), 18 + 922);
        let gap = ModelConfig::cnn_gap(924, 2);
        assert_eq!(gap.param_count(), 45 + 410 + 22);
        assert_eq!(gap.param_count_for(3432).unwrap(), gap.param_count());
        assert!(fixed.param_count_for(3432).is_err());
        assert_eq!(ModelConfig::logistic(9, 2).param_count(), 20);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::cnn_gap(924, 1).validate().is_err());
        assert!(ModelConfig::cnn_gap(10, 2).validate().is_err());
        assert_eq!(ModelConfig::cnn_gap(924, 2).min_input_length(), 22);
        assert!(ModelConfig::cnn_gap(22, 2).validate().is_ok());
    }
}
