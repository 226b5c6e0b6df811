//! Minimal deterministic neural-network kernel: the exact layer set the
//! steering models need, MSE loss, and Adam.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod init;
pub mod loss;
pub mod ops;

pub use adam::{adam_step, AdamState};
pub use conv::{conv2d_backward, conv2d_forward, conv_extent};
pub use dense::{dense_backward, dense_forward};
pub use loss::mse_loss;
pub use ops::{
    apply_channel_gates, channel_gates_backward, concat, concat_backward, flatten, relu,
    relu_backward, sigmoid, sigmoid_backward,
};

use crate::error::{Error, Result};

/// Layer description; only conv2d and dense carry parameters.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Sigmoid,
    Flatten,
    Concat,
    ChannelGate,
}

impl LayerSpec {
    /// Output shape of this layer for the given input shape, or an error for
    /// impossible geometry.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                let [c, h, w] = *input else {
                    return Err(Error::BadGeometry {
                        layer: format!("{self:?}"),
                        reason: format!("expected 3-d input, got {input:?}"),
                    });
                };
                if c != *in_channels {
                    return Err(Error::BadGeometry {
                        layer: format!("{self:?}"),
                        reason: format!("input has {c} channels, expected {in_channels}"),
                    });
                }
                let oh = conv_extent(h, kernel.0, stride.0);
                let ow = conv_extent(w, kernel.1, stride.1);
                match (oh, ow) {
                    (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => {
                        Ok(vec![*out_channels, oh, ow])
                    }
                    _ => Err(Error::BadGeometry {
                        layer: format!("{self:?}"),
                        reason: format!("input {h}x{w} leaves no valid output positions"),
                    }),
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if input != [*in_features] {
                    return Err(Error::BadGeometry {
                        layer: format!("{self:?}"),
                        reason: format!("expected [{in_features}], got {input:?}"),
                    });
                }
                Ok(vec![*out_features])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::ChannelGate => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Concat => Ok(input.to_vec()),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel.0 * kernel.1 + out_channels,
            LayerSpec::Dense {
                in_features,
                out_features,
            } => out_features * in_features + out_features,
            _ => 0,
        }
    }
}
