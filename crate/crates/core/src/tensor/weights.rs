use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{quantize, QFormat, Tensor};
use crate::error::{Error, Result};
use crate::netspec::{LayerSpec, MultiExitSpec};

/// Learnable tensors keyed by layer id, then tensor name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    layers: BTreeMap<String, BTreeMap<String, Tensor>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    layer_id: String,
    tensor_name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    blob: String,
    tensors: Vec<ManifestEntry>,
}

fn layer_seed(seed: u64, layer_id: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(layer_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Layers of a multi-exit spec that own weights.
pub(crate) fn learnable_layers(me: &MultiExitSpec) -> Vec<&LayerSpec> {
    me.trunk
        .layers
        .iter()
        .chain(me.exits.iter().flat_map(|e| e.head_layers.iter()))
        .filter(|l| l.is_learnable())
        .collect()
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights and zero biases. Each
    /// layer draws from its own seeded stream, so adding a layer elsewhere does
    /// not perturb existing ones.
    pub fn init<'a>(layers: impl IntoIterator<Item = &'a LayerSpec>, seed: u64) -> Self {
        let mut store = WeightStore::new();
        for layer in layers {
            let Some((fan_in, fan_out)) = layer.fans() else {
                continue;
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(seed, &layer.id));
            for (name, shape) in layer.weight_shapes() {
                let n: usize = shape.iter().product();
                let data = if name.starts_with("bias") {
                    vec![0.0; n]
                } else {
                    (0..n)
                        .map(|_| rng.random_range(-bound..bound) as f32)
                        .collect()
                };
                store.insert(&layer.id, name, Tensor::from_parts(shape, data));
            }
        }
        store
    }

    pub fn init_for(me: &MultiExitSpec, seed: u64) -> Self {
        Self::init(learnable_layers(me), seed)
    }

    pub fn insert(&mut self, layer: &str, name: &str, t: Tensor) {
        self.layers
            .entry(layer.to_string())
            .or_default()
            .insert(name.to_string(), t);
    }

    pub fn get(&self, layer: &str, name: &str) -> Result<&Tensor> {
        self.layers
            .get(layer)
            .and_then(|m| m.get(name))
            .ok_or_else(|| Error::MissingWeights {
                layer: layer.to_string(),
                tensor: name.to_string(),
            })
    }

    pub fn get_mut(&mut self, layer: &str, name: &str) -> Option<&mut Tensor> {
        self.layers.get_mut(layer).and_then(|m| m.get_mut(name))
    }

    pub fn contains_layer(&self, layer: &str) -> bool {
        self.layers.contains_key(layer)
    }

    /// `(layer id, tensor name, tensor)` in manifest order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &Tensor)> {
        self.layers.iter().flat_map(|(l, m)| {
            m.iter()
                .map(move |(n, t)| (l.as_str(), n.as_str(), t))
        })
    }

    pub fn tensor_count(&self) -> usize {
        self.layers.values().map(BTreeMap::len).sum()
    }

    /// Every learnable layer has each tensor it needs, with the right shape.
    pub fn check_layers<'a>(&self, layers: impl IntoIterator<Item = &'a LayerSpec>) -> Result<()> {
        for layer in layers {
            for (name, shape) in layer.weight_shapes() {
                let t = self.get(&layer.id, name)?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::WeightsFormat(format!(
                        "`{}`.{} has shape {:?}, layer expects {:?}",
                        layer.id,
                        name,
                        t.shape(),
                        shape
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn check_for(&self, me: &MultiExitSpec) -> Result<()> {
        self.check_layers(learnable_layers(me))
    }

    pub fn quantized(&self, q: &QFormat) -> WeightStore {
        WeightStore {
            layers: self
                .layers
                .iter()
                .map(|(l, m)| {
                    (
                        l.clone(),
                        m.iter().map(|(n, t)| (n.clone(), quantize(t, q))).collect(),
                    )
                })
                .collect(),
        }
    }

    /// Weights for a channel-scaled copy of a network, taken as the leading
    /// sub-block of each original tensor (no retraining).
    pub fn slice_for<'a>(&self, scaled: impl IntoIterator<Item = &'a LayerSpec>) -> Result<WeightStore> {
        let mut out = WeightStore::new();
        for layer in scaled {
            for (name, shape) in layer.weight_shapes() {
                let src = self.get(&layer.id, name)?;
                out.insert(&layer.id, name, slice_leading(src, &shape, &layer.id)?);
            }
        }
        Ok(out)
    }

    /// Raw little-endian `f32` blob in manifest order.
    pub fn to_blob(&self) -> Vec<u8> {
        self.iter()
            .flat_map(|(_, _, t)| t.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    fn manifest(&self, blob: &str) -> Manifest {
        let mut offset = 0;
        let tensors = self
            .iter()
            .map(|(l, n, t)| {
                let length = t.len() * 4;
                let e = ManifestEntry {
                    layer_id: l.to_string(),
                    tensor_name: n.to_string(),
                    shape: t.shape().to_vec(),
                    dtype: "f32le".into(),
                    offset,
                    length,
                };
                offset += length;
                e
            })
            .collect();
        Manifest {
            blob: blob.to_string(),
            tensors,
        }
    }

    /// Writes `<stem>.json` (manifest) and `<stem>.bin` (blob) into `dir`;
    /// returns the manifest path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let blob_name = format!("{}.bin", stem);
        let manifest_path = dir.join(format!("{}.json", stem));
        let blob_path = dir.join(&blob_name);
        std::fs::write(&blob_path, self.to_blob()).map_err(|e| Error::io(&blob_path, e))?;
        let text = serde_json::to_string_pretty(&self.manifest(&blob_name))? + "\n";
        std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
        Ok(manifest_path)
    }

    pub fn load(manifest_path: &Path) -> Result<WeightStore> {
        let text =
            std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::WeightsFormat(format!("manifest: {}", e)))?;
        let blob_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.blob);
        let blob = std::fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        Self::from_parts(&manifest, &blob)
    }

    fn from_parts(manifest: &Manifest, blob: &[u8]) -> Result<WeightStore> {
        let mut store = WeightStore::new();
        let mut expected_offset = 0;
        for e in &manifest.tensors {
            if e.dtype != "f32le" {
                return Err(Error::WeightsFormat(format!(
                    "`{}`.{}: unsupported dtype {}",
                    e.layer_id, e.tensor_name, e.dtype
                )));
            }
            let n: usize = e.shape.iter().product();
            if e.length != n * 4 || e.offset != expected_offset {
                return Err(Error::WeightsFormat(format!(
                    "`{}`.{}: offset/length {}/{} inconsistent with shape {:?}",
                    e.layer_id, e.tensor_name, e.offset, e.length, e.shape
                )));
            }
            let bytes = blob.get(e.offset..e.offset + e.length).ok_or_else(|| {
                Error::WeightsFormat(format!(
                    "`{}`.{} extends past the {}-byte blob",
                    e.layer_id,
                    e.tensor_name,
                    blob.len()
                ))
            })?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect();
            let t = Tensor::new(e.shape.clone(), data)
                .map_err(|err| Error::WeightsFormat(format!("`{}`: {}", e.layer_id, err)))?;
            store.insert(&e.layer_id, &e.tensor_name, t);
            expected_offset += e.length;
        }
        if expected_offset != blob.len() {
            return Err(Error::WeightsFormat(format!(
                "manifest covers {} bytes, blob has {}",
                expected_offset,
                blob.len()
            )));
        }
        Ok(store)
    }
}

fn slice_leading(src: &Tensor, shape: &[usize], layer: &str) -> Result<Tensor> {
    let from = src.shape();
    if from.len() != shape.len() || from.iter().zip(shape).any(|(a, b)| b > a) {
        return Err(Error::WeightsFormat(format!(
            "`{}`: cannot slice {:?} down to {:?}",
            layer, from, shape
        )));
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        let flat = idx.iter().zip(from).fold(0, |acc, (&i, &d)| acc * d + i);
        data.push(src.data()[flat]);
        for d in (0..shape.len()).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), data))
}
