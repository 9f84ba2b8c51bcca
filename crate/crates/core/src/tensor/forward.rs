use super::kernels;
use super::{quantize, QFormat, Tensor, WeightStore};
use crate::error::{Error, Result};
use crate::netspec::{Conv2dParams, LayerOp, LayerSpec};

fn chw(shape: &[usize]) -> [usize; 3] {
    [shape[0], shape[1], shape[2]]
}

/// Runs one layer and reports the FLOPs it executed (2 per MAC). Weights are
/// used as stored; `act_q` quantizes the output activation. Softmax output is
/// left in floating point so probability vectors stay normalized.
pub(crate) fn apply_layer(
    layer: &LayerSpec,
    input: &Tensor,
    weights: &WeightStore,
    act_q: Option<&QFormat>,
) -> Result<(Tensor, u64)> {
    let out_shape = layer
        .output_shape(input.shape())
        .map_err(|detail| Error::ShapeMismatch {
            from: "input".into(),
            to: layer.id.clone(),
            detail,
        })?;
    let x = input.data();
    let mut out = Vec::new();
    let mut macs = 0u64;
    match layer.op {
        LayerOp::Dense(_) => {
            let w = weights.get(&layer.id, "weight")?.data();
            let b = weights.get(&layer.id, "bias")?.data();
            macs = kernels::dense(w, b, x, &mut out);
        }
        LayerOp::Conv2d(p) => {
            let w = weights.get(&layer.id, "weight")?.data();
            let b = weights.get(&layer.id, "bias")?.data();
            macs = kernels::conv2d(w, b, x, chw(input.shape()), &p, &mut out).0;
        }
        LayerOp::Residual(p) => {
            let conv = Conv2dParams {
                in_channels: p.channels,
                out_channels: p.channels,
                kernel_h: p.kernel,
                kernel_w: p.kernel,
                stride: 1,
                padding: p.kernel / 2,
            };
            let dims = chw(input.shape());
            let mut h = Vec::new();
            macs += kernels::conv2d(
                weights.get(&layer.id, "weight1")?.data(),
                weights.get(&layer.id, "bias1")?.data(),
                x,
                dims,
                &conv,
                &mut h,
            )
            .0;
            let mut a = Vec::new();
            kernels::relu(&h, &mut a);
            macs += kernels::conv2d(
                weights.get(&layer.id, "weight2")?.data(),
                weights.get(&layer.id, "bias2")?.data(),
                &a,
                dims,
                &conv,
                &mut h,
            )
            .0;
            for (v, &skip) in h.iter_mut().zip(x) {
                *v += skip;
            }
            kernels::relu(&h, &mut out);
        }
        LayerOp::MaxPool(p) | LayerOp::AvgPool(p) => {
            let (dims, window, stride) = kernels::pool_geometry(input.shape(), &p);
            let max = matches!(layer.op, LayerOp::MaxPool(_));
            kernels::pool(x, dims, window, stride, max, &mut out, None);
        }
        LayerOp::GlobalAvgPool => kernels::global_avg_pool(x, input.shape()[0], &mut out),
        LayerOp::Relu => kernels::relu(x, &mut out),
        LayerOp::Softmax => {
            kernels::softmax(x, &mut out);
            return Ok((Tensor::from_parts(out_shape, out), 0));
        }
        LayerOp::Flatten | LayerOp::DropoutPoint => out.extend_from_slice(x),
    }
    let t = Tensor::from_parts(out_shape, out);
    let t = match act_q {
        Some(q) => quantize(&t, q),
        None => t,
    };
    Ok((t, 2 * macs))
}

/// Standard single-layer semantics. With a format, the layer's weights and
/// its output activation are fake-quantized. `dropout_point` is the identity
/// here; Monte-Carlo execution resolves it.
pub fn forward(
    layer: &LayerSpec,
    input: &Tensor,
    weights: &WeightStore,
    qformat: Option<&QFormat>,
) -> Result<Tensor> {
    match qformat {
        None => Ok(apply_layer(layer, input, weights, None)?.0),
        Some(q) => {
            let mut local = WeightStore::new();
            for (name, _) in layer.weight_shapes() {
                local.insert(&layer.id, name, quantize(weights.get(&layer.id, name)?, q));
            }
            Ok(apply_layer(layer, input, &local, Some(q))?.0)
        }
    }
}

/// Runs `layers` in order; returns the output and the executed FLOPs.
/// `weights` are assumed already quantized when `act_q` is set.
pub fn forward_chain(
    layers: &[LayerSpec],
    input: &Tensor,
    weights: &WeightStore,
    act_q: Option<&QFormat>,
) -> Result<(Tensor, u64)> {
    let mut cur = input.clone();
    let mut flops = 0;
    for layer in layers {
        let (next, f) = apply_layer(layer, &cur, weights, act_q)?;
        flops += f;
        cur = next;
    }
    Ok((cur, flops))
}
