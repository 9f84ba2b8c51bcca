use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation shape of a single sample: `[features]` or `[channels, height, width]`.
pub type Shape = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Dense,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    Residual,
    Relu,
    Softmax,
    Flatten,
    DropoutPoint,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Dense => "dense",
            LayerKind::MaxPool => "max_pool",
            LayerKind::AvgPool => "avg_pool",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Residual => "residual",
            LayerKind::Relu => "relu",
            LayerKind::Softmax => "softmax",
            LayerKind::Flatten => "flatten",
            LayerKind::DropoutPoint => "dropout_point",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conv2dParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseParams {
    pub in_features: usize,
    pub out_features: usize,
}

/// Square pooling window. On a flat `[features]` activation the window slides
/// along the feature axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolParams {
    pub window: usize,
    pub stride: usize,
}

/// Fused basic residual block: `relu(conv(relu(conv(x))) + x)` with two
/// `kernel × kernel` convolutions, stride 1 and "same" padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualParams {
    pub channels: usize,
    pub kernel: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOp {
    Conv2d(Conv2dParams),
    Dense(DenseParams),
    MaxPool(PoolParams),
    AvgPool(PoolParams),
    GlobalAvgPool,
    Residual(ResidualParams),
    Relu,
    Softmax,
    Flatten,
    DropoutPoint,
}

impl LayerOp {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerOp::Conv2d(_) => LayerKind::Conv2d,
            LayerOp::Dense(_) => LayerKind::Dense,
            LayerOp::MaxPool(_) => LayerKind::MaxPool,
            LayerOp::AvgPool(_) => LayerKind::AvgPool,
            LayerOp::GlobalAvgPool => LayerKind::GlobalAvgPool,
            LayerOp::Residual(_) => LayerKind::Residual,
            LayerOp::Relu => LayerKind::Relu,
            LayerOp::Softmax => LayerKind::Softmax,
            LayerOp::Flatten => LayerKind::Flatten,
            LayerOp::DropoutPoint => LayerKind::DropoutPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLayer", into = "RawLayer")]
pub struct LayerSpec {
    pub id: String,
    pub op: LayerOp,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, op: LayerOp) -> Self {
        LayerSpec { id: id.into(), op }
    }

    pub fn dense(id: impl Into<String>, in_features: usize, out_features: usize) -> Self {
        Self::new(
            id,
            LayerOp::Dense(DenseParams {
                in_features,
                out_features,
            }),
        )
    }

    pub fn conv2d(
        id: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self::new(
            id,
            LayerOp::Conv2d(Conv2dParams {
                in_channels,
                out_channels,
                kernel_h: kernel,
                kernel_w: kernel,
                stride,
                padding,
            }),
        )
    }

    pub fn max_pool(id: impl Into<String>, window: usize, stride: usize) -> Self {
        Self::new(id, LayerOp::MaxPool(PoolParams { window, stride }))
    }

    pub fn avg_pool(id: impl Into<String>, window: usize, stride: usize) -> Self {
        Self::new(id, LayerOp::AvgPool(PoolParams { window, stride }))
    }

    pub fn relu(id: impl Into<String>) -> Self {
        Self::new(id, LayerOp::Relu)
    }

    pub fn softmax(id: impl Into<String>) -> Self {
        Self::new(id, LayerOp::Softmax)
    }

    pub fn flatten(id: impl Into<String>) -> Self {
        Self::new(id, LayerOp::Flatten)
    }

    pub fn global_avg_pool(id: impl Into<String>) -> Self {
        Self::new(id, LayerOp::GlobalAvgPool)
    }

    pub fn dropout_point(id: impl Into<String>) -> Self {
        Self::new(id, LayerOp::DropoutPoint)
    }

    pub fn kind(&self) -> LayerKind {
        self.op.kind()
    }

    /// Layers that own weights.
    pub fn is_learnable(&self) -> bool {
        matches!(
            self.op,
            LayerOp::Conv2d(_) | LayerOp::Dense(_) | LayerOp::Residual(_)
        )
    }

    /// Block boundaries for exit placement.
    pub fn is_pool(&self) -> bool {
        matches!(
            self.op,
            LayerOp::MaxPool(_) | LayerOp::AvgPool(_) | LayerOp::GlobalAvgPool
        )
    }

    /// Checks that kernel, stride and window sizes are strictly positive.
    pub fn check_params(&self) -> Result<()> {
        let bad = |detail: &str| {
            Err(Error::InvalidLayer {
                layer: self.id.clone(),
                detail: detail.to_string(),
            })
        };
        match self.op {
            LayerOp::Conv2d(p) => {
                if p.kernel_h == 0 || p.kernel_w == 0 || p.stride == 0 {
                    return bad("kernel and stride must be positive");
                }
                if p.in_channels == 0 || p.out_channels == 0 {
                    return bad("channel counts must be positive");
                }
            }
            LayerOp::Dense(p) => {
                if p.in_features == 0 || p.out_features == 0 {
                    return bad("feature counts must be positive");
                }
            }
            LayerOp::MaxPool(p) | LayerOp::AvgPool(p) => {
                if p.window == 0 || p.stride == 0 {
                    return bad("window and stride must be positive");
                }
            }
            LayerOp::Residual(p) => {
                if p.channels == 0 || p.kernel == 0 {
                    return bad("channels and kernel must be positive");
                }
                if p.kernel % 2 == 0 {
                    return bad("residual kernel must be odd");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape; the error string describes the mismatch.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Shape, String> {
        match self.op {
            LayerOp::Conv2d(p) => {
                let [c, h, w] = chw(input)?;
                if c != p.in_channels {
                    return Err(format!(
                        "expects {} input channels, got {}",
                        p.in_channels, c
                    ));
                }
                let ph = h + 2 * p.padding;
                let pw = w + 2 * p.padding;
                if ph < p.kernel_h || pw < p.kernel_w {
                    return Err(format!(
                        "kernel {}x{} larger than padded input {}x{}",
                        p.kernel_h, p.kernel_w, ph, pw
                    ));
                }
                Ok(vec![
                    p.out_channels,
                    (ph - p.kernel_h) / p.stride + 1,
                    (pw - p.kernel_w) / p.stride + 1,
                ])
            }
            LayerOp::Dense(p) => match input {
                [f] if *f == p.in_features => Ok(vec![p.out_features]),
                [f] => Err(format!(
                    "expects {} input features, got {}",
                    p.in_features, f
                )),
                other => Err(format!("dense layer needs a flat input, got {:?}", other)),
            },
            LayerOp::MaxPool(p) | LayerOp::AvgPool(p) => match input {
                [f] => {
                    if *f < p.window {
                        return Err(format!("window {} larger than {} features", p.window, f));
                    }
                    Ok(vec![(f - p.window) / p.stride + 1])
                }
                [c, h, w] => {
                    if *h < p.window || *w < p.window {
                        return Err(format!(
                            "window {} larger than input {}x{}",
                            p.window, h, w
                        ));
                    }
                    Ok(vec![
                        *c,
                        (h - p.window) / p.stride + 1,
                        (w - p.window) / p.stride + 1,
                    ])
                }
                other => Err(format!("unsupported pooling input {:?}", other)),
            },
            LayerOp::GlobalAvgPool => {
                let [c, _, _] = chw(input)?;
                Ok(vec![c])
            }
            LayerOp::Residual(p) => {
                let [c, _, _] = chw(input)?;
                if c != p.channels {
                    return Err(format!("expects {} channels, got {}", p.channels, c));
                }
                Ok(input.to_vec())
            }
            LayerOp::Flatten => Ok(vec![input.iter().product()]),
            LayerOp::Relu | LayerOp::Softmax | LayerOp::DropoutPoint => Ok(input.to_vec()),
        }
    }

    /// Floating-point operations for one sample, one multiply-accumulate = 2 FLOPs.
    /// Element-wise, pooling and softmax layers count as zero.
    pub fn flops(&self, input: &[usize]) -> u64 {
        match self.op {
            LayerOp::Conv2d(p) => match self.output_shape(input) {
                Ok(out) => {
                    2 * (p.kernel_h * p.kernel_w * p.in_channels * p.out_channels * out[1] * out[2])
                        as u64
                }
                Err(_) => 0,
            },
            LayerOp::Dense(p) => 2 * (p.in_features * p.out_features) as u64,
            LayerOp::Residual(p) => match input {
                [_, h, w] => 2 * 2 * (p.kernel * p.kernel * p.channels * p.channels * h * w) as u64,
                _ => 0,
            },
            _ => 0,
        }
    }

    /// Names and shapes of the tensors this layer reads from a weight store.
    pub fn weight_shapes(&self) -> Vec<(&'static str, Shape)> {
        match self.op {
            LayerOp::Conv2d(p) => vec![
                (
                    "weight",
                    vec![p.out_channels, p.in_channels, p.kernel_h, p.kernel_w],
                ),
                ("bias", vec![p.out_channels]),
            ],
            LayerOp::Dense(p) => vec![
                ("weight", vec![p.out_features, p.in_features]),
                ("bias", vec![p.out_features]),
            ],
            LayerOp::Residual(p) => {
                let w = vec![p.channels, p.channels, p.kernel, p.kernel];
                vec![
                    ("weight1", w.clone()),
                    ("bias1", vec![p.channels]),
                    ("weight2", w),
                    ("bias2", vec![p.channels]),
                ]
            }
            _ => Vec::new(),
        }
    }

    /// (fan_in, fan_out) used by the weight initializer.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match self.op {
            LayerOp::Conv2d(p) => Some((
                p.in_channels * p.kernel_h * p.kernel_w,
                p.out_channels * p.kernel_h * p.kernel_w,
            )),
            LayerOp::Dense(p) => Some((p.in_features, p.out_features)),
            LayerOp::Residual(p) => {
                let f = p.channels * p.kernel * p.kernel;
                Some((f, f))
            }
            _ => None,
        }
    }
}

fn chw(input: &[usize]) -> std::result::Result<[usize; 3], String> {
    match input {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(format!("expects a [channels, height, width] input, got {:?}", other)),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    id: String,
    kind: LayerKind,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    params: serde_json::Value,
}

impl TryFrom<RawLayer> for LayerSpec {
    type Error = String;

    fn try_from(raw: RawLayer) -> std::result::Result<Self, Self::Error> {
        fn typed<T: serde::de::DeserializeOwned>(
            id: &str,
            params: serde_json::Value,
        ) -> std::result::Result<T, String> {
            serde_json::from_value(params).map_err(|e| format!("layer `{}` params: {}", id, e))
        }
        let no_params = |params: &serde_json::Value| match params {
            serde_json::Value::Null => Ok(()),
            serde_json::Value::Object(m) if m.is_empty() => Ok(()),
            _ => Err(format!("layer `{}` of kind {} takes no params", raw.id, raw.kind)),
        };
        let op = match raw.kind {
            LayerKind::Conv2d => LayerOp::Conv2d(typed(&raw.id, raw.params)?),
            LayerKind::Dense => LayerOp::Dense(typed(&raw.id, raw.params)?),
            LayerKind::MaxPool => LayerOp::MaxPool(typed(&raw.id, raw.params)?),
            LayerKind::AvgPool => LayerOp::AvgPool(typed(&raw.id, raw.params)?),
            LayerKind::Residual => LayerOp::Residual(typed(&raw.id, raw.params)?),
            LayerKind::GlobalAvgPool => {
                no_params(&raw.params)?;
                LayerOp::GlobalAvgPool
            }
            LayerKind::Relu => {
                no_params(&raw.params)?;
                LayerOp::Relu
            }
            LayerKind::Softmax => {
                no_params(&raw.params)?;
                LayerOp::Softmax
            }
            LayerKind::Flatten => {
                no_params(&raw.params)?;
                LayerOp::Flatten
            }
            LayerKind::DropoutPoint => {
                no_params(&raw.params)?;
                LayerOp::DropoutPoint
            }
        };
        Ok(LayerSpec { id: raw.id, op })
    }
}

impl From<LayerSpec> for RawLayer {
    fn from(layer: LayerSpec) -> Self {
        let params = match layer.op {
            LayerOp::Conv2d(p) => serde_json::to_value(p),
            LayerOp::Dense(p) => serde_json::to_value(p),
            LayerOp::MaxPool(p) | LayerOp::AvgPool(p) => serde_json::to_value(p),
            LayerOp::Residual(p) => serde_json::to_value(p),
            _ => Ok(serde_json::Value::Null),
        }
        .unwrap_or(serde_json::Value::Null);
        RawLayer {
            id: layer.id,
            kind: layer.op.kind(),
            params,
        }
    }
}
