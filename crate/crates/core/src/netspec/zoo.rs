//! Ready-made network descriptions used by tests, examples and the CLI.

use super::layer::LayerSpec;
use super::network::NetworkSpec;

/// Plain MLP: `dense → relu` per hidden width, then `dense → softmax`.
pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut width = input;
    for (i, &h) in hidden.iter().enumerate() {
        layers.push(LayerSpec::dense(format!("fc{}", i + 1), width, h));
        layers.push(LayerSpec::relu(format!("relu{}", i + 1)));
        width = h;
    }
    layers.push(LayerSpec::dense("classifier", width, classes));
    layers.push(LayerSpec::softmax("softmax"));
    NetworkSpec::new(vec![input], layers)
}

/// MLP split into `blocks` blocks of `dense → relu`, separated by identity
/// max-pool layers (window 1, stride 1) acting as block boundaries, so exit
/// placement yields `blocks` exits.
pub fn block_mlp(input: usize, width: usize, blocks: usize, classes: usize) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut w = input;
    for b in 1..=blocks {
        layers.push(LayerSpec::dense(format!("fc{}", b), w, width));
        layers.push(LayerSpec::relu(format!("relu{}", b)));
        if b < blocks {
            layers.push(LayerSpec::max_pool(format!("pool{}", b), 1, 1));
        }
        w = width;
    }
    layers.push(LayerSpec::dense("classifier", w, classes));
    layers.push(LayerSpec::softmax("softmax"));
    NetworkSpec::new(vec![input], layers)
}

/// LeNet-5 on a `1 × 28 × 28` input with explicit activations and flatten.
pub fn lenet5(classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![1, 28, 28],
        vec![
            LayerSpec::conv2d("conv1", 1, 6, 5, 1, 2),
            LayerSpec::relu("relu1"),
            LayerSpec::max_pool("pool1", 2, 2),
            LayerSpec::conv2d("conv2", 6, 16, 5, 1, 0),
            LayerSpec::relu("relu2"),
            LayerSpec::max_pool("pool2", 2, 2),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("fc1", 16 * 5 * 5, 120),
            LayerSpec::relu("relu3"),
            LayerSpec::dense("fc2", 120, 84),
            LayerSpec::relu("relu4"),
            LayerSpec::dense("fc3", 84, classes),
            LayerSpec::softmax("softmax"),
        ],
    )
}

/// VGG-11 ("A" configuration) on a `3 × hw × hw` input, with channel widths
/// divided by `width_divisor` and a single dense classifier.
pub fn vgg11(hw: usize, width_divisor: usize, classes: usize) -> NetworkSpec {
    let cfg: [&[usize]; 5] = [&[64], &[128], &[256, 256], &[512, 512], &[512, 512]];
    let mut layers = Vec::new();
    let mut c = 3;
    let mut side = hw;
    let mut n = 0;
    for (stage, convs) in cfg.iter().enumerate() {
        for &width in convs.iter() {
            n += 1;
            let out = (width / width_divisor).max(1);
            layers.push(LayerSpec::conv2d(format!("conv{}", n), c, out, 3, 1, 1));
            layers.push(LayerSpec::relu(format!("relu{}", n)));
            c = out;
        }
        layers.push(LayerSpec::max_pool(format!("pool{}", stage + 1), 2, 2));
        side /= 2;
    }
    layers.push(LayerSpec::flatten("flatten"));
    layers.push(LayerSpec::dense("classifier", c * side * side, classes));
    layers.push(LayerSpec::softmax("softmax"));
    NetworkSpec::new(vec![3, hw, hw], layers)
}

/// Small convolutional net with a residual block, for runtime tests.
pub fn tiny_resnet(classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![2, 8, 8],
        vec![
            LayerSpec::conv2d("stem", 2, 4, 3, 1, 1),
            LayerSpec::relu("stem_relu"),
            LayerSpec::new(
                "res1",
                super::layer::LayerOp::Residual(super::layer::ResidualParams {
                    channels: 4,
                    kernel: 3,
                }),
            ),
            LayerSpec::max_pool("pool1", 2, 2),
            LayerSpec::conv2d("conv2", 4, 6, 3, 1, 1),
            LayerSpec::relu("relu2"),
            LayerSpec::avg_pool("pool2", 2, 2),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("fc", 6 * 2 * 2, 8),
            LayerSpec::relu("fc_relu"),
            LayerSpec::dense("classifier", 8, classes),
            LayerSpec::softmax("softmax"),
        ],
    )
}
