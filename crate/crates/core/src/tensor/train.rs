//! Mini-batch SGD for the dense subset (dense, relu, pools, flatten, dropout,
//! softmax). Computation is carried out in `f64` so analytic gradients can be
//! checked against finite differences; the resulting weights are `f32`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::{learnable_layers, Tensor, WeightStore};
use crate::data::Dataset;
use std::collections::BTreeMap;

use crate::dropout::{generate_masks, mcd_keep_mask, mcd_scale, DropoutConfig, MaskSet, RngStream};
use crate::error::{Error, Result};
use crate::netspec::{LayerOp, LayerSpec, MultiExitSpec, PoolParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 0.1,
            epochs: 100,
            batch: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum Step {
    Dense { w: usize, b: usize, n_in: usize, n_out: usize },
    Relu,
    Pool { p: PoolParams, max: bool },
    Flatten,
    Drop { site: String },
    /// Terminal softmax, fused with the cross-entropy loss.
    Softmax,
}

#[derive(Debug, Clone)]
struct Tape {
    shapes: Vec<Vec<usize>>,
    acts: Vec<Vec<f64>>,
    aux: Vec<Vec<usize>>,
    mult: Vec<Vec<f64>>,
}

/// Loss `mean over batch of Σ_exits cross-entropy` as a function of a flat
/// parameter vector, with dropout realizations fixed by `dropout_seed`.
#[derive(Debug, Clone)]
pub struct Objective {
    input_shape: Vec<usize>,
    paths: Vec<Vec<Step>>,
    /// `(layer id, tensor name, offset, shape)` in store order.
    layout: Vec<(String, String, usize, Vec<usize>)>,
    n_params: usize,
    dropout: Option<DropoutConfig>,
    masks: BTreeMap<String, MaskSet>,
}

fn unsupported(l: &LayerSpec) -> Error {
    Error::UnsupportedForTraining {
        layer: l.id.clone(),
        kind: l.kind().to_string(),
    }
}

impl Objective {
    pub fn new(me: &MultiExitSpec) -> Result<Self> {
        me.ensure_valid()?;
        let mut layout = Vec::new();
        let mut offsets = BTreeMap::new();
        let mut n = 0;
        let mut learn: Vec<&LayerSpec> = learnable_layers(me);
        learn.sort_by(|a, b| a.id.cmp(&b.id));
        for l in learn {
            if !matches!(l.op, LayerOp::Dense(_)) {
                return Err(unsupported(l));
            }
            for (name, shape) in l.weight_shapes() {
                offsets.insert((l.id.clone(), name), n);
                layout.push((l.id.clone(), name.to_string(), n, shape.clone()));
                n += shape.iter().product::<usize>();
            }
        }
        let step = |l: &LayerSpec, terminal: bool| -> Result<Step> {
            Ok(match l.op {
                LayerOp::Dense(p) => Step::Dense {
                    w: offsets[&(l.id.clone(), "weight")],
                    b: offsets[&(l.id.clone(), "bias")],
                    n_in: p.in_features,
                    n_out: p.out_features,
                },
                LayerOp::Relu => Step::Relu,
                LayerOp::MaxPool(p) => Step::Pool { p, max: true },
                LayerOp::AvgPool(p) => Step::Pool { p, max: false },
                LayerOp::Flatten => Step::Flatten,
                LayerOp::DropoutPoint => Step::Drop { site: l.id.clone() },
                LayerOp::Softmax if terminal => Step::Softmax,
                _ => return Err(unsupported(l)),
            })
        };
        let mut paths = Vec::new();
        for exit in &me.exits {
            let r = me.resolve_exit(exit)?;
            let mut path = Vec::new();
            for (d, l) in me.trunk.layers[..r.attach_depth].iter().enumerate() {
                for &(_, site) in r.trunk_sites.iter().filter(|(sd, _)| *sd == d) {
                    path.push(Step::Drop { site: site.to_string() });
                }
                path.push(step(l, false)?);
            }
            let last = exit.head_layers.len() - 1;
            for (i, l) in exit.head_layers.iter().enumerate() {
                path.push(step(l, i == last)?);
            }
            paths.push(path);
        }
        let mut masks = BTreeMap::new();
        if let Some(DropoutConfig::Masksembles { num_masks, scale }) = me.dropout {
            for site in me.dropout_sites()? {
                masks.insert(site.id, generate_masks(site.shape[0], num_masks, scale)?);
            }
        }
        Ok(Objective {
            input_shape: me.trunk.input_shape.clone(),
            paths,
            layout,
            n_params: n,
            dropout: me.dropout,
            masks,
        })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn params_from(&self, store: &WeightStore) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.n_params];
        for (layer, name, off, _) in &self.layout {
            let t = store.get(layer, name)?;
            for (dst, &v) in p[*off..].iter_mut().zip(t.data()) {
                *dst = v as f64;
            }
        }
        Ok(p)
    }

    pub fn store_from(&self, params: &[f64]) -> WeightStore {
        let mut store = WeightStore::new();
        for (layer, name, off, shape) in &self.layout {
            let n: usize = shape.iter().product();
            let data = params[*off..off + n].iter().map(|&v| v as f32).collect();
            store.insert(layer, name, Tensor::from_parts(shape.clone(), data));
        }
        store
    }

    /// Per-unit multipliers of one dropout realization at `site`.
    fn dropout_mult(&self, shape: &[usize], site: &str, sample_key: u64, seed: u64) -> Vec<f64> {
        let len: usize = shape.iter().product();
        match self.dropout {
            None => vec![1.0; len],
            Some(DropoutConfig::Mcd {
                keep_rate,
                granularity,
                inverted,
            }) => {
                let (units, per) = crate::dropout::mcd_units(shape, granularity);
                let mut rng = RngStream::new(seed, sample_key, site);
                let keep = mcd_keep_mask(units, keep_rate, &mut rng);
                let s = mcd_scale(keep_rate, inverted);
                keep.iter()
                    .flat_map(|&k| std::iter::repeat_n(if k { s } else { 0.0 }, per))
                    .collect()
            }
            Some(DropoutConfig::Masksembles { num_masks, .. }) => {
                let row = &self.masks[site].masks[(sample_key % num_masks as u64) as usize];
                let per = len / shape[0];
                row.iter()
                    .flat_map(|&m| std::iter::repeat_n(m as f64, per))
                    .collect()
            }
        }
    }

    fn run_path(&self, path: &[Step], x: &[f64], params: &[f64], key: u64, seed: u64) -> Tape {
        let mut tape = Tape {
            shapes: vec![self.input_shape.clone()],
            acts: vec![x.to_vec()],
            aux: Vec::new(),
            mult: Vec::new(),
        };
        for step in path {
            let cur = tape.acts.last().expect("non-empty");
            let shape = tape.shapes.last().expect("non-empty").clone();
            let mut out = Vec::new();
            let mut aux = Vec::new();
            let mut mult = Vec::new();
            let out_shape = match step {
                Step::Dense { w, b, n_in, n_out } => {
                    kernels::dense(
                        &params[*w..w + n_in * n_out],
                        &params[*b..b + n_out],
                        cur,
                        &mut out,
                    );
                    vec![*n_out]
                }
                Step::Relu => {
                    kernels::relu(cur, &mut out);
                    shape
                }
                Step::Pool { p, max } => {
                    let (dims, win, st) = kernels::pool_geometry(&shape, p);
                    kernels::pool(cur, dims, win, st, *max, &mut out, max.then_some(&mut aux));
                    LayerSpec::new("", if *max { LayerOp::MaxPool(*p) } else { LayerOp::AvgPool(*p) })
                        .output_shape(&shape)
                        .expect("validated")
                }
                Step::Flatten => {
                    out.extend_from_slice(cur);
                    vec![cur.len()]
                }
                Step::Drop { site } => {
                    mult = self.dropout_mult(&shape, site, key, seed);
                    out.extend(cur.iter().zip(&mult).map(|(a, m)| a * m));
                    shape
                }
                Step::Softmax => {
                    kernels::softmax(cur, &mut out);
                    shape
                }
            };
            tape.acts.push(out);
            tape.shapes.push(out_shape);
            tape.aux.push(aux);
            tape.mult.push(mult);
        }
        tape
    }

    fn backward(&self, path: &[Step], tape: &Tape, label: usize, params: &[f64], grad: &mut [f64], weight: f64) {
        let probs = tape.acts.last().expect("non-empty");
        let mut dy: Vec<f64> = probs.clone();
        dy[label] -= 1.0;
        for v in &mut dy {
            *v *= weight;
        }
        // skip the fused softmax
        for (i, step) in path.iter().enumerate().rev().skip(1) {
            let x = &tape.acts[i];
            let mut dx = vec![0.0; x.len()];
            match step {
                Step::Dense { w, b, n_in, n_out } => {
                    for o in 0..*n_out {
                        let g = dy[o];
                        grad[b + o] += g;
                        let row = w + o * n_in;
                        for j in 0..*n_in {
                            grad[row + j] += g * x[j];
                            dx[j] += g * params[row + j];
                        }
                    }
                }
                Step::Relu => {
                    for j in 0..x.len() {
                        dx[j] = if x[j] > 0.0 { dy[j] } else { 0.0 };
                    }
                }
                Step::Pool { p, max } => {
                    if *max {
                        for (&src, &g) in tape.aux[i].iter().zip(&dy) {
                            dx[src] += g;
                        }
                    } else {
                        let (dims, win, st) = kernels::pool_geometry(&tape.shapes[i], p);
                        let [c, h, w] = dims;
                        let oh = (h - win.0) / st.0 + 1;
                        let ow = (w - win.1) / st.1 + 1;
                        let inv = 1.0 / (win.0 * win.1) as f64;
                        for ch in 0..c {
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let g = dy[(ch * oh + oy) * ow + ox] * inv;
                                    for ky in 0..win.0 {
                                        for kx in 0..win.1 {
                                            dx[(ch * h + oy * st.0 + ky) * w + ox * st.1 + kx] += g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Step::Flatten => dx.copy_from_slice(&dy),
                Step::Drop { .. } => {
                    for ((d, g), m) in dx.iter_mut().zip(&dy).zip(&tape.mult[i]) {
                        *d = g * m;
                    }
                }
                Step::Softmax => unreachable!("softmax is terminal"),
            }
            dy = dx;
        }
    }

    /// Mean loss over `batch`, where each entry is `(input, label, sample key)`.
    /// The sample key selects the dropout realization.
    pub fn loss(&self, params: &[f64], batch: &[(&[f32], usize, u64)], seed: u64) -> f64 {
        self.eval(params, batch, seed, None)
    }

    pub fn loss_and_grad(
        &self,
        params: &[f64],
        batch: &[(&[f32], usize, u64)],
        seed: u64,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params];
        let l = self.eval(params, batch, seed, Some(&mut grad));
        (l, grad)
    }

    fn eval(
        &self,
        params: &[f64],
        batch: &[(&[f32], usize, u64)],
        seed: u64,
        mut grad: Option<&mut Vec<f64>>,
    ) -> f64 {
        let inv = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for &(x, label, key) in batch {
            let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            for path in &self.paths {
                let tape = self.run_path(path, &x, params, key, seed);
                let p = tape.acts.last().expect("non-empty")[label];
                total -= p.max(f64::MIN_POSITIVE).ln() * inv;
                if let Some(g) = grad.as_deref_mut() {
                    self.backward(path, &tape, label, params, g, inv);
                }
            }
        }
        total
    }
}

fn mix(seed: u64, a: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ a.wrapping_mul(0xD605_BBB5_8C8A_BBB7)
}

/// Trains every exit jointly on the sum of per-exit cross-entropy losses,
/// with dropout active. Fully determined by `hp.seed`.
pub fn train_toy(me: &MultiExitSpec, data: &Dataset, hp: &TrainParams) -> Result<WeightStore> {
    if data.is_empty() {
        return Err(Error::precondition("training set is empty"));
    }
    if hp.batch == 0 {
        return Err(Error::precondition("batch size must be at least 1"));
    }
    if data.input_shape != me.trunk.input_shape {
        return Err(Error::precondition(format!(
            "dataset inputs {:?} do not match network input {:?}",
            data.input_shape, me.trunk.input_shape
        )));
    }
    let obj = Objective::new(me)?;
    let init = WeightStore::init_for(me, hp.seed);
    let mut params = obj.params_from(&init)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let dropout_seed = mix(hp.seed, 0x74_7261_696e);
    let mut step = 0u64;
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch) {
            let batch: Vec<(&[f32], usize, u64)> = chunk
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    (
                        data.inputs[i].as_slice(),
                        data.labels[i],
                        step * hp.batch as u64 + j as u64,
                    )
                })
                .collect();
            let (_, g) = obj.loss_and_grad(&params, &batch, dropout_seed);
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= hp.lr * gi;
            }
            step += 1;
        }
    }
    Ok(obj.store_from(&params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_blobs;
    use crate::netspec::{default_head_template, insert_dropout, place_exits, zoo};

    fn single_exit_mlp() -> MultiExitSpec {
        place_exits(&zoo::mlp(2, &[8], 2), &default_head_template()).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let me = single_exit_mlp();
        let data = gaussian_blobs(&[vec![-1.0, 0.0], vec![1.0, 0.0]], 10, 0.3, 1);
        let hp = TrainParams { lr: 0.0, epochs: 3, batch: 4, seed: 8 };
        let w = train_toy(&me, &data, &hp).unwrap();
        assert_eq!(w.to_blob(), WeightStore::init_for(&me, 8).to_blob());
    }

    #[test]
    fn separable_blobs_are_fit() {
        let me = single_exit_mlp();
        let data = gaussian_blobs(&[vec![-2.0, -2.0], vec![2.0, 2.0]], 50, 0.5, 4);
        let hp = TrainParams { lr: 0.1, epochs: 200, batch: 10, seed: 2 };
        let w = train_toy(&me, &data, &hp).unwrap();
        let obj = Objective::new(&me).unwrap();
        let p = obj.params_from(&w).unwrap();
        let correct = data
            .inputs
            .iter()
            .zip(&data.labels)
            .filter(|(x, &l)| {
                let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
                let probs = obj.run_path(&obj.paths[0], &x, &p, 0, 0).acts.pop().unwrap();
                probs[l] > 0.5
            })
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.95);
        assert_eq!(train_toy(&me, &data, &hp).unwrap(), w);
    }

    #[test]
    fn conv_layers_are_rejected() {
        let me = place_exits(&zoo::lenet5(10), &default_head_template()).unwrap();
        assert!(matches!(
            Objective::new(&me),
            Err(Error::UnsupportedForTraining { .. })
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let base = place_exits(&zoo::block_mlp(3, 5, 2, 3), &default_head_template()).unwrap();
        for cfg in [DropoutConfig::mcd(0.75), DropoutConfig::masksembles(2, 1.5)] {
            let me = insert_dropout(&base, cfg, 2).unwrap();
            let obj = Objective::new(&me).unwrap();
            let params = obj.params_from(&WeightStore::init_for(&me, 3)).unwrap();
            let xs = [vec![0.3f32, -0.7, 1.1], vec![-0.4, 0.9, 0.2]];
            let batch: Vec<(&[f32], usize, u64)> =
                vec![(xs[0].as_slice(), 0, 0), (xs[1].as_slice(), 2, 1)];
            let (_, g) = obj.loss_and_grad(&params, &batch, 5);
            let h = 1e-6;
            let mut num = vec![0.0; params.len()];
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += h;
                let up = obj.loss(&p, &batch, 5);
                p[i] -= 2.0 * h;
                let down = obj.loss(&p, &batch, 5);
                num[i] = (up - down) / (2.0 * h);
            }
            let diff: f64 = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt()
                + num.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / scale < 1e-6, "{:?}: relative error {}", cfg, diff / scale);
        }
    }
}
