use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pre-defined binary masks, one row per ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSet {
    pub feature_count: usize,
    pub num_masks: usize,
    pub scale: f64,
    pub masks: Vec<Vec<u8>>,
}

/// Ones per mask `k = min(F, round(s·F/N))`; mask `i` is the cyclic window of
/// length `k` starting at `round(i·F/N)`.
pub fn generate_masks(feature_count: usize, num_masks: usize, scale: f64) -> Result<MaskSet> {
    if num_masks == 0 || feature_count < num_masks {
        return Err(Error::precondition(format!(
            "need feature_count ({}) >= num_masks ({}) >= 1",
            feature_count, num_masks
        )));
    }
    if !(scale >= 1.0 && scale.is_finite()) {
        return Err(Error::precondition(format!("mask scale {} below 1", scale)));
    }
    let f = feature_count;
    let k = ((scale * f as f64 / num_masks as f64).round() as usize).min(f);
    let masks = (0..num_masks)
        .map(|i| {
            // round(i·F/N), halves rounded up
            let offset = (2 * i * f + num_masks) / (2 * num_masks);
            let mut row = vec![0u8; f];
            for j in 0..k {
                row[(offset + j) % f] = 1;
            }
            row
        })
        .collect();
    Ok(MaskSet {
        feature_count,
        num_masks,
        scale,
        masks,
    })
}

impl MaskSet {
    pub fn mask(&self, index: usize) -> Option<&[u8]> {
        self.masks.get(index).map(Vec::as_slice)
    }

    pub fn popcount(&self, index: usize) -> usize {
        self.masks[index].iter().filter(|&&b| b == 1).count()
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parse(format!("mask set: {}", m)));
        if self.num_masks == 0 || self.masks.len() != self.num_masks {
            return bad(format!(
                "num_masks {} but {} rows",
                self.num_masks,
                self.masks.len()
            ));
        }
        for (i, row) in self.masks.iter().enumerate() {
            if row.len() != self.feature_count {
                return bad(format!("row {} has {} entries", i, row.len()));
            }
            if row.iter().any(|&b| b > 1) {
                return bad(format!("row {} is not binary", i));
            }
        }
        let k = self.popcount(0);
        if k == 0 || (1..self.num_masks).any(|i| self.popcount(i) != k) {
            return bad("masks must share a nonzero popcount".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MaskSet = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    /// Compact form: one mask row per line.
    pub fn to_json(&self) -> String {
        let rows: Vec<String> = self
            .masks
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes"))
            .collect();
        format!(
            "{{\n  \"feature_count\": {},\n  \"num_masks\": {},\n  \"scale\": {},\n  \"masks\": [\n    {}\n  ]\n}}\n",
            self.feature_count,
            self.num_masks,
            serde_json::to_string(&self.scale).expect("scale serializes"),
            rows.join(",\n    ")
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Serializes site-keyed mask tables (the file a Masksembles spec points to).
pub fn mask_tables_to_json(tables: &BTreeMap<String, MaskSet>) -> String {
    let entries: Vec<String> = tables
        .iter()
        .map(|(site, m)| {
            let body = m.to_json();
            let body = body.trim_end().replace('\n', "\n  ");
            format!("  {}: {}", serde_json::to_string(site).expect("id serializes"), body)
        })
        .collect();
    format!("{{\n{}\n}}\n", entries.join(",\n"))
}

pub fn parse_mask_tables(text: &str) -> Result<BTreeMap<String, MaskSet>> {
    let tables: BTreeMap<String, MaskSet> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for (site, m) in &tables {
        m.check().map_err(|e| Error::Parse(format!("mask table `{}`: {}", site, e)))?;
    }
    Ok(tables)
}

pub fn load_mask_tables(path: &Path) -> Result<BTreeMap<String, MaskSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mask_tables(&text).map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))
}

/// Applies mask `mask_index`: kept features pass unchanged, the rest become
/// zero. On a `[C, H, W]` activation each channel shares its mask bit.
pub fn masksembles_forward(input: &Tensor, mask_index: usize, masks: &MaskSet) -> Result<Tensor> {
    let mask = masks.mask(mask_index).ok_or_else(|| {
        Error::precondition(format!(
            "mask index {} out of range for {} masks",
            mask_index, masks.num_masks
        ))
    })?;
    let features = input.shape()[0];
    if features != masks.feature_count || !matches!(input.shape().len(), 1 | 3) {
        return Err(Error::precondition(format!(
            "mask set covers {} features, activation has shape {:?}",
            masks.feature_count,
            input.shape()
        )));
    }
    let per = input.len() / features;
    let mut out = input.clone();
    for (chunk, &m) in out.data_mut().chunks_exact_mut(per).zip(mask) {
        if m == 0 {
            chunk.fill(0.0);
        }
    }
    Ok(out)
}
