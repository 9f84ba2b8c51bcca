//! Shared fixtures and independent oracles for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mcme::dropout::{masksembles_forward, mcd_forward, DropoutConfig, MaskSet, RngStream};
use mcme::netspec::{
    default_head_template, insert_dropout, place_exits, select_exits, zoo, LayerOp, LayerSpec, MultiExitSpec,
    NetworkSpec,
};
use mcme::tensor::{forward, QFormat, Tensor, WeightStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small conv net with two pooling stages on `c × 8 × 8` inputs.
pub fn small_convnet(c: usize, width: usize, classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![c, 8, 8],
        vec![
            LayerSpec::conv2d("conv1", c, width, 3, 1, 1),
            LayerSpec::relu("relu1"),
            LayerSpec::max_pool("pool1", 2, 2),
            LayerSpec::conv2d("conv2", width, width, 3, 1, 1),
            LayerSpec::relu("relu2"),
            LayerSpec::avg_pool("pool2", 2, 2),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("fc", width * 4, 6),
            LayerSpec::relu("fc_relu"),
            LayerSpec::dense("classifier", 6, classes),
            LayerSpec::softmax("softmax"),
        ],
    )
}

/// Random plain network: a block MLP, a small conv net or the residual net.
pub fn random_net(r: &mut ChaCha8Rng) -> NetworkSpec {
    let classes = r.random_range(2..=4);
    match r.random_range(0..4) {
        0 | 1 => zoo::block_mlp(
            r.random_range(2..=5),
            r.random_range(4..=10),
            r.random_range(1..=4),
            classes,
        ),
        2 => small_convnet(r.random_range(1..=2), r.random_range(3..=5), classes),
        _ => zoo::tiny_resnet(classes),
    }
}

/// Fewest learnable layers on any exit's path.
fn min_path_learnables(me: &MultiExitSpec) -> usize {
    me.exits
        .iter()
        .map(|e| {
            let d = me.attach_depth(e).unwrap();
            me.trunk.layers[..d].iter().filter(|l| l.is_learnable()).count()
                + e.head_layers.iter().filter(|l| l.is_learnable()).count()
        })
        .min()
        .unwrap()
}

/// Random multi-exit Bayesian spec of the requested dropout family, with a
/// random exit count and a random dropout depth (possibly spilling into the
/// trunk).
pub fn random_spec(r: &mut ChaCha8Rng, masksembles: bool) -> MultiExitSpec {
    let net = random_net(r);
    let all = place_exits(&net, &default_head_template()).unwrap();
    let me = select_exits(&all, r.random_range(1..=all.n_exit())).unwrap();
    let depth = r.random_range(1..=min_path_learnables(&me).min(3));
    let cfg = if masksembles {
        // every site must host the masks: probe with a single mask first
        let probe = insert_dropout(&me, DropoutConfig::masksembles(1, 1.0), depth).unwrap();
        let min_f = probe
            .dropout_sites()
            .unwrap()
            .iter()
            .map(|s| s.shape[0])
            .min()
            .unwrap();
        let n = r.random_range(1..=min_f.min(4));
        DropoutConfig::masksembles(n, r.random_range(1.0..=(n as f64).max(1.0)))
    } else {
        DropoutConfig::mcd(*[0.5, 0.625, 0.75, 0.875].get(r.random_range(0..4)).unwrap())
    };
    insert_dropout(&me, cfg, depth).unwrap()
}

pub fn random_input(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Uncached reference: every sample runs its exit's whole path from the
/// input, applying each dropout site where it sits.
pub fn oracle_predict(
    me: &MultiExitSpec,
    weights: &WeightStore,
    masks: &BTreeMap<String, MaskSet>,
    input: &Tensor,
    n_pass: usize,
    seed: u64,
    q: Option<&QFormat>,
) -> Vec<Vec<Vec<f32>>> {
    let drop = |site: &str, x: &Tensor, pass: usize| -> Tensor {
        let y = match me.dropout.unwrap() {
            DropoutConfig::Mcd {
                keep_rate,
                granularity,
                inverted,
            } => mcd_forward(x, keep_rate, granularity, &mut RngStream::new(seed, pass as u64, site), inverted).unwrap(),
            DropoutConfig::Masksembles { .. } => masksembles_forward(x, pass, &masks[site]).unwrap(),
        };
        match q {
            Some(q) => mcme::tensor::quantize(&y, q),
            None => y,
        }
    };
    let mut out = Vec::new();
    for exit in &me.exits {
        let depth = me.attach_depth(exit).unwrap();
        let mut per_exit = Vec::new();
        for pass in 0..n_pass {
            let mut x = input.clone();
            for (d, layer) in me.trunk.layers[..depth].iter().enumerate() {
                for t in exit.trunk_dropout.iter().filter(|t| me.trunk_index(&t.before) == Some(d)) {
                    x = drop(&t.id, &x, pass);
                }
                x = forward(layer, &x, weights, q).unwrap();
            }
            for layer in &exit.head_layers {
                x = match layer.op {
                    LayerOp::DropoutPoint => drop(&layer.id, &x, pass),
                    _ => forward(layer, &x, weights, q).unwrap(),
                };
            }
            per_exit.push(x.into_data());
        }
        out.push(per_exit);
    }
    out
}

/// ECE by scanning every bin over every sample.
pub fn ece_brute(probs: &[Vec<f64>], labels: &[usize], n_bins: usize) -> f64 {
    let n = probs.len() as f64;
    let mut total = 0.0;
    for b in 0..n_bins {
        let (mut m, mut hits, mut conf) = (0.0, 0.0, 0.0);
        for (p, &y) in probs.iter().zip(labels) {
            let mut k = 0;
            for i in 1..p.len() {
                if p[i] > p[k] {
                    k = i;
                }
            }
            let c = p[k];
            let bin = if c >= 1.0 { n_bins - 1 } else { ((c * n_bins as f64) as usize).min(n_bins - 1) };
            if bin == b {
                m += 1.0;
                conf += c;
                if k == y {
                    hits += 1.0;
                }
            }
        }
        if m > 0.0 {
            total += m / n * (hits / m - conf / m).abs();
        }
    }
    total
}

pub fn random_simplex(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0f64).powi(3) + 1e-9).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}
